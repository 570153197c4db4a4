import sys
from pathlib import Path

import numpy as np
import pytest

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from app.utils.logging import get_logger  # noqa: E402
from ml.core.denoiser import DenoiserArchitecture, DenoiserModel  # noqa: E402
from ml.core.diffusion import make_linear_schedule  # noqa: E402
from ml.training.pretrain import BackboneConfig, build_backbone_fixture  # noqa: E402
from ml.utils.synthetic import HARD_SPEC, REFERENCE_SPEC, SyntheticSpec  # noqa: E402

SMALL_ARCH = DenoiserArchitecture(
    latent_dim=4, time_embed_dim=8, cond_dim=3, hidden_dim=16, num_timesteps=1000, n_classes=3
)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: end-to-end targets on the full synthetic fixtures")


@pytest.fixture(scope="session")
def schedule():
    return make_linear_schedule()


@pytest.fixture
def small_backbone():
    """Randomly initialised, frozen, unit-test sized backbone."""
    rng = np.random.default_rng(7)
    anchors = rng.standard_normal((SMALL_ARCH.n_classes, SMALL_ARCH.cond_dim))
    return DenoiserModel.initialize(SMALL_ARCH, rng, anchors=anchors).freeze()


@pytest.fixture
def unfrozen_backbone():
    rng = np.random.default_rng(11)
    return DenoiserModel.initialize(SMALL_ARCH, rng)


@pytest.fixture(scope="session")
def tiny_fixture(schedule):
    """Quickly pretrained 3-class fixture for integration tests."""
    spec = SyntheticSpec(n_classes=3, latent_dim=4, train_per_class=16, test_per_class=8, seed=3)
    cfg = BackboneConfig(time_embed_dim=8, cond_dim=4, hidden_dim=32, steps=2000, batch_size=32)
    return build_backbone_fixture(spec, schedule, cfg, seed=3)


@pytest.fixture(scope="session")
def reference_fixture(schedule):
    return build_backbone_fixture(REFERENCE_SPEC, schedule, BackboneConfig(), seed=0)


@pytest.fixture(scope="session")
def hard_fixture(schedule):
    return build_backbone_fixture(HARD_SPEC, schedule, BackboneConfig(), seed=0)


@pytest.fixture(scope="session", autouse=True)
def project_logger():
    """Create the project handler once, bound to the session's stderr rather than a CliRunner stream."""
    return get_logger()
