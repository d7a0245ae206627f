"""Random network distillation with an optional constant downward shift.

The bonus is ``min(|target(x) - predictor(x)|^2, 1) - I``. With ``I = 0``
it is the usual positive curiosity bonus; with ``I >= 1`` it is never
positive, so unvisited inputs look better than visited ones only because
visited ones have been pushed further down.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from shiftlab import mlp


@dataclass(frozen=True)
class RndConfig:
    hidden: tuple[int, ...] = (512, 512, 512)
    out_dim: int = 32
    lr: float = 1e-4
    bonus_shift: float = 0.0
    input_mode: str = "state"  # state | state-action
    # large enough that a fresh pair disagrees by more than the cap
    init_scale: float = 2.0
    cap: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden", tuple(self.hidden))
        if self.bonus_shift < 0:
            raise ValueError("bonus_shift (I) must be >= 0")
        if self.input_mode not in ("state", "state-action"):
            raise ValueError(f"unknown input mode {self.input_mode!r}")


class RndPair:
    """Frozen random target network plus a trainable predictor."""

    def __init__(self, cfg: RndConfig, obs_dim: int, n_actions: int = 0, seed=None) -> None:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        self.cfg = cfg
        self.n_actions = n_actions
        n_in = obs_dim + (n_actions if cfg.input_mode == "state-action" else 0)
        spec = mlp.MlpSpec(
            (n_in, *cfg.hidden, cfg.out_dim),
            output="sigmoid",
            init_scale=cfg.init_scale,
            output_gain=1.0,
        )
        self.target = mlp.init(spec, rng)
        self.predictor = mlp.init(spec, rng)
        self.target.flat.setflags(write=False)
        self.opt = mlp.adam(cfg.lr)

    @property
    def bonus_shift(self) -> float:
        return self.cfg.bonus_shift

    def inputs(self, states, actions=None) -> np.ndarray:
        x = np.atleast_2d(np.asarray(states, dtype=float))
        if self.cfg.input_mode == "state":
            return x
        if actions is None:
            raise ValueError("state-action mode needs actions")
        onehot = np.eye(self.n_actions)[np.atleast_1d(np.asarray(actions, dtype=int))]
        return np.concatenate([x, onehot], axis=1)

    def error(self, x: np.ndarray) -> np.ndarray:
        d = mlp.forward(self.target, x) - mlp.forward(self.predictor, x)
        return np.sum(d * d, axis=1)

    def intrinsic(self, states, actions=None) -> np.ndarray:
        """Training-time bonus ``raw - I`` for a batch."""
        raw = np.minimum(self.error(self.inputs(states, actions)), self.cfg.cap)
        return raw - self.cfg.bonus_shift


def _maybe_scalar(values: np.ndarray, states):
    return float(values[0]) if np.asarray(states).ndim == 1 else values


def intrinsic_raw(pair: RndPair, s, a=None):
    """Capped squared prediction error in ``[0, cap]``."""
    raw = np.minimum(pair.error(pair.inputs(s, a)), pair.cfg.cap)
    return _maybe_scalar(raw, s)


def intrinsic_shifted(pair: RndPair, s, a=None):
    if pair.bonus_shift < 1.0:
        warnings.warn(
            f"I={pair.bonus_shift} < 1: the shifted bonus is not guaranteed to be <= 0",
            stacklevel=2,
        )
    raw = np.minimum(pair.error(pair.inputs(s, a)), pair.cfg.cap)
    return _maybe_scalar(raw - pair.bonus_shift, s)


def rnd_update(pair: RndPair, states, actions=None) -> float:
    """One Adam step pulling the predictor onto the frozen target."""
    x = pair.inputs(states, actions)
    if x.shape[0] == 0:
        raise ValueError("empty batch")
    target = mlp.forward(pair.target, x)
    out, cache = mlp.forward_cache(pair.predictor, x)
    diff = out - target
    # mean over the batch of the squared norm
    loss = float(np.sum(diff * diff) / x.shape[0])
    grad, _ = mlp.vjp(pair.predictor, cache, 2.0 * diff / x.shape[0])
    mlp.apply_update(pair.predictor, grad, pair.opt)
    return loss
