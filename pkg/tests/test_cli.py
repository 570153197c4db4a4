"""End-to-end tests of the click command line on a tiny config."""

import json
import logging
import shutil
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner
from lxml import etree

from app.cli import cli
from app.config import load_config
from app.utils.file_formats import load_embeddings, load_model, save_embeddings, save_latent
from ml.training.prompt_learning import train_gcpl_all
from ml.utils.episodes import build_episode
from ml.utils.synthetic import generate_synthetic
from ml.utils.templates import resolve_template

TINY_CONFIG = """
seed = 0

[backbone]
steps = 40
batch_size = 8
hidden_dim = 16
time_embed_dim = 8
cond_dim = 4
log_every = 10

[gcpl]
epochs = 5

[comple]
epochs = 6
batch_size = 2
lambda = 0.0

[classifier]
n_mc = 4

[harness]
spec_name = "cli"
n_classes = 2
latent_dim = 3
train_per_class = 6
test_per_class = 3
shots = [1, 2]
seeds = [0, 1]
k_shot = 2
methods = ["gcpl", "random"]
workers = 1

[paths]
backbone = "{root}/backbone.gcpl"
embeddings = "{root}/prompts.gcplemb"
output_dir = "{root}/out"
"""


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    monkeypatch.delenv("GCPL_SEED", raising=False)


@pytest.fixture
def runner():
    return CliRunner()


def _write_config(tmp_path, text: str = TINY_CONFIG, name: str = "tiny.toml"):
    path = tmp_path / name
    path.write_text(text.format(root=tmp_path.as_posix()), encoding="utf-8")
    return path


def _run(runner, *args):
    return runner.invoke(cli, [str(a) for a in args], catch_exceptions=False)


@pytest.fixture
def pretrained(runner, tmp_path):
    config = _write_config(tmp_path)
    result = _run(runner, "--config", config, "pretrain")
    assert result.exit_code == 0, result.output
    return config


def test_pretrain_writes_backbone_history_and_config(pretrained, tmp_path):
    model = load_model(tmp_path / "backbone.gcpl")
    assert model.frozen and model.arch.n_classes == 2
    history = pd.read_csv(tmp_path / "out" / "pretrain_history.csv")
    assert history["step"].tolist() == [10, 20, 30, 40]
    resolved = json.loads((tmp_path / "out" / "resolved_config.json").read_text())
    assert resolved["backbone"]["seed"] == 0
    assert resolved["comple"]["lambda"] == 0.0


def test_pretrain_is_reproducible(runner, pretrained, tmp_path):
    first = (tmp_path / "backbone.gcpl").read_bytes()
    assert _run(runner, "--config", pretrained, "pretrain").exit_code == 0
    assert (tmp_path / "backbone.gcpl").read_bytes() == first


def test_echoed_config_reproduces_the_run(runner, pretrained, tmp_path):
    first = (tmp_path / "backbone.gcpl").read_bytes()
    echoed = tmp_path / "echoed.json"
    shutil.copy(tmp_path / "out" / "resolved_config.json", echoed)
    (tmp_path / "backbone.gcpl").unlink()
    assert _run(runner, "--config", echoed, "pretrain").exit_code == 0
    assert (tmp_path / "backbone.gcpl").read_bytes() == first


def test_train_gcpl_matches_in_memory_run(runner, pretrained, tmp_path):
    assert _run(runner, "--config", pretrained, "train", "--method", "gcpl").exit_code == 0
    names, vectors = load_embeddings(tmp_path / "prompts.gcplemb")
    assert names == ["class_0", "class_1"]

    cfg = load_config(pretrained)
    dataset = generate_synthetic(cfg.harness.synthetic_spec())
    episode = build_episode(dataset, None, cfg.harness.k_shot, cfg.seed)
    prompts = train_gcpl_all(
        episode.support, cfg.gcpl, load_model(cfg.paths.backbone), cfg.schedule.build(),
        class_names=episode.class_names, template=resolve_template(cfg.harness.template_dataset),
    )
    np.testing.assert_array_equal(vectors, np.stack([p.vector for p in prompts]))


def test_seed_aligned_comple_store_equals_gcpl_store(runner, pretrained, tmp_path):
    assert _run(runner, "--config", pretrained, "train", "--method", "comple").exit_code == 0
    comple_store = (tmp_path / "prompts.gcplemb").read_bytes()
    result = _run(runner, "--config", pretrained, "train", "--method", "gcpl", "--aligned-with-comple")
    assert result.exit_code == 0
    assert (tmp_path / "prompts.gcplemb").read_bytes() == comple_store


def test_aligned_flag_is_gcpl_only(runner, pretrained):
    result = runner.invoke(cli, ["--config", str(pretrained), "train", "--method", "comple", "--aligned-with-comple"])
    assert result.exit_code == 2


def test_classify_default_queries(runner, pretrained, tmp_path):
    assert _run(runner, "--config", pretrained, "train", "--method", "gcpl").exit_code == 0
    assert _run(runner, "--config", pretrained, "classify").exit_code == 0
    path = tmp_path / "out" / "predictions.jsonl"
    first = path.read_bytes()
    rows = [json.loads(line) for line in first.decode().splitlines()]
    assert len(rows) == 6
    for row in rows:
        assert sum(row["posterior"].values()) == pytest.approx(1.0, abs=1e-6)
        assert row["true_label"] in {"class_0", "class_1"}

    assert _run(runner, "--config", pretrained, "classify").exit_code == 0
    assert path.read_bytes() == first


def test_classify_single_query_single_class(runner, pretrained, tmp_path):
    save_embeddings(["only"], np.zeros((1, 4), dtype=np.float32), tmp_path / "prompts.gcplemb")
    query = save_latent(np.array([0.1, 0.2, 0.3], dtype=np.float32), tmp_path / "q.lat")
    assert _run(runner, "--config", pretrained, "classify", "--queries", query).exit_code == 0
    (row,) = [json.loads(line) for line in (tmp_path / "out" / "predictions.jsonl").read_text().splitlines()]
    assert row["posterior"] == {"only": 1.0}
    assert row["predicted_label"] == "only" and row["true_label"] is None


def test_benchmark_outputs(runner, pretrained, tmp_path):
    assert _run(runner, "--config", pretrained, "benchmark").exit_code == 0
    out = tmp_path / "out"
    frame = pd.read_csv(out / "benchmark.csv")
    assert len(frame) == 2 * 2 * 2
    assert set(frame["method"]) == {"gcpl", "random"}
    payload = json.loads((out / "benchmark.json").read_text())
    assert [r["method"] for r in payload["reports"]] == ["gcpl", "random"]

    svg = etree.parse(str(out / "accuracy_vs_shots.svg"))
    polylines = svg.findall(".//{http://www.w3.org/2000/svg}polyline")
    assert sorted(p.get("data-method") for p in polylines) == ["gcpl", "random"]

    first = (out / "benchmark.csv").read_bytes()
    assert _run(runner, "--config", pretrained, "benchmark").exit_code == 0
    assert (out / "benchmark.csv").read_bytes() == first


def test_one_cell_sweep(runner, tmp_path):
    text = TINY_CONFIG.replace("shots = [1, 2]", "shots = [1]").replace("seeds = [0, 1]", "seeds = [0]")
    text = text.replace('methods = ["gcpl", "random"]', 'methods = ["gcpl"]')
    config = _write_config(tmp_path, text)
    assert _run(runner, "--config", config, "pretrain").exit_code == 0
    assert _run(runner, "--config", config, "benchmark").exit_code == 0
    assert len(pd.read_csv(tmp_path / "out" / "benchmark.csv")) == 1


def test_missing_backbone_exits_with_io_code(runner, tmp_path):
    config = _write_config(tmp_path)
    result = runner.invoke(cli, ["--config", str(config), "train", "--method", "gcpl"])
    assert result.exit_code == 4


def test_unknown_config_key_exits_with_config_code(runner, tmp_path):
    config = _write_config(tmp_path, TINY_CONFIG.replace("[gcpl]\n", "[gcpl]\nlearning_rate = 0.1\n"))
    result = runner.invoke(cli, ["--config", str(config), "pretrain"])
    assert result.exit_code == 2


def test_divergence_exits_with_numeric_code(runner, tmp_path):
    config = _write_config(tmp_path, TINY_CONFIG.replace("steps = 40", "steps = 40\nlr = 1e30"))
    result = runner.invoke(cli, ["--config", str(config), "pretrain"])
    assert result.exit_code == 3


def test_seed_precedence(runner, pretrained, tmp_path, monkeypatch):
    resolved = tmp_path / "out" / "resolved_config.json"
    monkeypatch.setenv("GCPL_SEED", "5")
    assert _run(runner, "--config", pretrained, "pretrain").exit_code == 0
    assert json.loads(resolved.read_text())["seed"] == 5
    assert _run(runner, "--config", pretrained, "--seed", "7", "pretrain").exit_code == 0
    data = json.loads(resolved.read_text())
    assert data["seed"] == 7 and data["gcpl"]["seed"] == 7


def test_inspect(runner, pretrained, tmp_path):
    result = _run(runner, "inspect", tmp_path / "backbone.gcpl")
    assert result.exit_code == 0
    assert "backbone" in result.output

    corrupt = tmp_path / "corrupt.gcpl"
    corrupt.write_bytes(b"XXXXXXX" + (tmp_path / "backbone.gcpl").read_bytes()[7:])
    assert runner.invoke(cli, ["inspect", str(corrupt)]).exit_code == 4


@pytest.mark.parametrize("name", ["reference.toml", "hard.toml"])
def test_shipped_configs_give_reproducible_benchmark_files(name):
    cfg = load_config(Path(__file__).resolve().parent.parent / "configs" / name)
    assert cfg.harness.record_wall_clock is False
    assert cfg.comple.negative_pairing == "cross_prompt"


def test_pipeline_log_messages(runner, tmp_path, caplog):
    config = _write_config(tmp_path)
    package_logger = logging.getLogger("app")
    package_logger.addHandler(caplog.handler)
    try:
        assert _run(runner, "--config", config, "pretrain").exit_code == 0
    finally:
        package_logger.removeHandler(caplog.handler)
    messages = [r.getMessage() for r in caplog.records]
    assert any(m.startswith("✅ Saved backbone →") and m.endswith("backbone.gcpl") for m in messages)
    assert any(m.startswith("🧠 Pretraining backbone on 12 latents (2 classes)") for m in messages)
