"""Per-run random streams split from one master seed."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_STREAMS = ("env", "init", "action", "replay", "active", "eval")


@dataclass
class Streams:
    env: np.random.Generator
    init: np.random.Generator
    action: np.random.Generator
    replay: np.random.Generator
    active: np.random.Generator
    eval: np.random.Generator


def split(seed: int) -> Streams:
    """Independent generators, so disabling one consumer leaves the rest intact."""
    children = np.random.SeedSequence(seed).spawn(len(_STREAMS))
    return Streams(**{name: np.random.default_rng(ss) for name, ss in zip(_STREAMS, children)})


def child_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**31 - 1))
