"""Named, seed-derived random streams.

Every consumer of randomness asks for its own stream so that results never
depend on call order, thread scheduling or how many other streams exist.
"""

from enum import IntEnum

import numpy as np

__all__ = ["Stream", "derive_rng"]


class Stream(IntEnum):
    DATA = 1
    ANCHORS = 2
    BACKBONE_INIT = 3
    BACKBONE_STEPS = 4
    EPISODE = 5
    PROMPT = 6
    COMPOSE = 7
    QUERY = 8
    NULL_PROMPTS = 9


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """Generator for SeedSequence([seed, *keys])."""
    if seed < 0:
        raise ValueError(f"Seeds must be non-negative, got {seed}")
    return np.random.default_rng(np.random.SeedSequence([int(seed), *(int(k) for k in keys)]))
