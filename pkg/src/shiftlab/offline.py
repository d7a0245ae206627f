"""Offline discrete Q-learning with reward shifting and a behaviour constraint.

A dataset is a fixed list of raw-reward transitions logged by some policy.
Training relabels rewards with ``r + b`` and fits Q by TD on that list only.
Bootstrap and greedy actions are restricted to actions the behaviour model
considers likely (``p(a|s) >= tau_bcq * max p(.|s)``). Conservatism is
measured as the gap between the debiased Q estimate at dataset states and
the real discounted return the greedy policy earns from those states.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

import numpy as np

from shiftlab import mlp, shift as shift_ops
from shiftlab.dqn import DqnConfig, run_dqn
from shiftlab.envs import Termination, Transition
from shiftlab.explore import epsilon_greedy
from shiftlab.rng import child_seed, split
from shiftlab.shift import ShiftSpec
from shiftlab.tabular import QTable, td_update

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
TERMINAL_MODES = ("cut", "absorbing")


# ---------------------------------------------------------------- datasets


@dataclass
class OfflineDataset:
    header: dict
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terms: np.ndarray  # "C" | "T" | "U" per row

    def __post_init__(self) -> None:
        n = len(self.rewards)
        if self.header.get("count") != n:
            raise ValueError(f"header count {self.header.get('count')} != {n} transitions")
        if not (len(self.states) == len(self.actions) == len(self.next_states) == len(self.terms) == n):
            raise ValueError("dataset columns differ in length")

    def __len__(self) -> int:
        return len(self.rewards)

    @property
    def terminal(self) -> np.ndarray:
        return self.terms == Termination.TERMINAL.value

    @classmethod
    def from_transitions(cls, transitions: list[Transition], header: dict) -> "OfflineDataset":
        header = {**header, "count": len(transitions)}
        return cls(
            header,
            np.array([np.atleast_1d(np.asarray(t.state, dtype=float)) for t in transitions]),
            np.array([int(t.action) for t in transitions], dtype=np.int64),
            np.array([t.reward for t in transitions], dtype=float),
            np.array([np.atleast_1d(np.asarray(t.next_state, dtype=float)) for t in transitions]),
            np.array([Termination(t.termination).value for t in transitions]),
        )

    def to_lines(self) -> list[str]:
        def num(x: float) -> str:
            return format(float(x), ".17g")

        def vec(v) -> str:
            return "[" + ",".join(num(x) for x in np.ravel(v)) + "]"

        lines = [json.dumps(self.header, sort_keys=True)]
        for s, a, r, s2, term in zip(self.states, self.actions, self.rewards, self.next_states, self.terms):
            lines.append(f'{{"s":{vec(s)},"a":{int(a)},"r":{num(r)},"s2":{vec(s2)},"term":"{term}"}}')
        return lines

    def save(self, path) -> None:
        """Atomic write of the JSON-lines file."""
        path = Path(path)
        text = "\n".join(self.to_lines()) + "\n"
        fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name, suffix=".tmp")
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)

    @classmethod
    def load(cls, path) -> "OfflineDataset":
        with open(path) as f:
            header = json.loads(f.readline())
            if header.get("version") != FORMAT_VERSION:
                raise ValueError(f"unsupported dataset version {header.get('version')!r}")
            rows = [json.loads(line) for line in f if line.strip()]
        return cls(
            header,
            np.array([r["s"] for r in rows], dtype=float),
            np.array([r["a"] for r in rows], dtype=np.int64),
            np.array([r["r"] for r in rows], dtype=float),
            np.array([r["s2"] for r in rows], dtype=float),
            np.array([r["term"] for r in rows]),
        )


class LoggingPolicy(Protocol):
    tag: str

    def __call__(self, obs, rng: np.random.Generator) -> int: ...


@dataclass
class RandomPolicy:
    n_actions: int
    tag: str = "random"

    def __call__(self, obs, rng: np.random.Generator) -> int:
        return int(rng.integers(self.n_actions))


@dataclass
class SnapshotPolicy:
    """ε-greedy over a frozen Q-network."""

    qnet: mlp.MlpParams
    epsilon: float = 0.3
    tag: str = "dqn-snapshot"

    def __call__(self, obs, rng: np.random.Generator) -> int:
        return epsilon_greedy(mlp.forward(self.qnet, obs), self.epsilon, rng)


def _header(env, behavior: str, gamma: float) -> dict:
    header = {
        "version": FORMAT_VERSION,
        "env": env.spec_dict(),
        "env_hash": env.spec_hash(),
        "behavior": behavior,
        "count": 0,
        "gamma": gamma,
    }
    # JSON-normalised so a saved and reloaded header compares equal
    return json.loads(json.dumps(header))


def _rollout_transitions(env, policy: Callable, n: int, rng: np.random.Generator) -> list[Transition]:
    out: list[Transition] = []
    env.reset(seed=child_seed(rng))
    while len(out) < n:
        obs = env.reset()
        while len(out) < n:
            t = env.step(policy(obs, rng))
            out.append(t)
            obs = t.next_state
            if t.termination.done:
                break
    return out


def generate_dataset(env, policy: LoggingPolicy, n: int, seed: int, gamma: float = 0.99) -> OfflineDataset:
    """Roll episodes under ``policy`` until exactly ``n`` raw transitions are logged."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    transitions = _rollout_transitions(env, policy, n, rng)
    return OfflineDataset.from_transitions(transitions, _header(env, policy.tag, gamma))


def partially_trained_snapshot(env, seed: int, episodes: int = 30, epsilon: float = 0.3) -> SnapshotPolicy:
    """ε-greedy logging policy from a briefly trained unshifted DQN."""
    curve = run_dqn(env, DqnConfig(), seed, episodes)
    return SnapshotPolicy(curve.artifacts["agent"].qnet.copy(), epsilon)


def mixed_dataset(env, n: int, seed: int, gamma: float = 0.99, dqn_episodes: int = 30, epsilon: float = 0.3) -> OfflineDataset:
    """Half uniform-random, half ε-greedy DQN-snapshot transitions."""
    rng = np.random.default_rng(seed)
    snapshot = partially_trained_snapshot(env, child_seed(rng), dqn_episodes, epsilon)
    half = n // 2
    rand = _rollout_transitions(env, RandomPolicy(env.n_actions), half, rng)
    snap = _rollout_transitions(env, snapshot, n - half, rng)
    return OfflineDataset.from_transitions(rand + snap, _header(env, "mixed", gamma))


# ---------------------------------------------------------------- behaviour model


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class BehaviorModel:
    net: mlp.MlpParams
    tau_bcq: float = 0.3

    def __post_init__(self) -> None:
        if not 0 <= self.tau_bcq <= 1:
            raise ValueError("tau_bcq must lie in [0, 1]")

    def probs(self, states) -> np.ndarray:
        return softmax(np.atleast_2d(mlp.forward(self.net, np.atleast_2d(states))))

    def allowed(self, states) -> np.ndarray:
        """Boolean (N, A) mask of actions passing the likelihood-ratio threshold."""
        p = self.probs(states)
        return p >= self.tau_bcq * p.max(axis=1, keepdims=True)


def fit_behavior(
    dataset: OfflineDataset,
    n_actions: int,
    seed: int,
    tau_bcq: float = 0.3,
    hidden: tuple[int, ...] = (64, 64),
    epochs: int = 10,
    batch_size: int = 128,
    lr: float = 1e-3,
) -> BehaviorModel:
    """Cross-entropy fit of logged actions."""
    rng = np.random.default_rng(seed)
    spec = mlp.MlpSpec((dataset.states.shape[1], *hidden, n_actions), output_gain=1.0)
    net = mlp.init(spec, rng)
    opt = mlp.adam(lr)
    onehot = np.eye(n_actions)[dataset.actions]
    for _ in range(epochs):
        order = rng.permutation(len(dataset))
        for start in range(0, len(order), batch_size):
            idx = order[start : start + batch_size]
            logits, cache = mlp.forward_cache(net, dataset.states[idx])
            grad, _ = mlp.vjp(net, cache, (softmax(logits) - onehot[idx]) / len(idx))
            mlp.apply_update(net, grad, opt)
    return BehaviorModel(net, tau_bcq)


def cross_entropy(model: BehaviorModel, dataset: OfflineDataset) -> float:
    p = model.probs(dataset.states)[np.arange(len(dataset)), dataset.actions]
    return float(-np.mean(np.log(np.maximum(p, 1e-300))))


# ---------------------------------------------------------------- training


@dataclass(frozen=True)
class OfflineConfig:
    gamma: float = 0.99
    hidden: tuple[int, ...] = (64, 64)
    lr: float = 1e-3
    batch_size: int = 128
    epochs: int = 50
    tau: float = 0.005
    # "soft": Polyak-average the target after every update with ``tau``;
    # "epoch": copy the target once per pass over the data (fitted Q iteration)
    target_sync: str = "soft"
    # pick the bootstrap action with the online net, value it with the target net
    double_q: bool = True
    # "absorbing": a terminal state keeps paying the shift forever, so the
    # shift stays a pure value offset; "cut": bootstrap stops at terminals.
    terminal_mode: str = "absorbing"

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden", tuple(self.hidden))
        if self.terminal_mode not in TERMINAL_MODES:
            raise ValueError(f"unknown terminal mode {self.terminal_mode!r}")
        if self.target_sync not in ("soft", "epoch"):
            raise ValueError(f"unknown target sync {self.target_sync!r}")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")


def _masked_max(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return np.where(mask, values, -np.inf).max(axis=1)


def _checked_mask(mask: np.ndarray) -> np.ndarray:
    empty = ~mask.any(axis=1)
    if empty.any():
        log.warning("%d states have no action passing the behaviour threshold; using all actions", empty.sum())
        mask = mask.copy()
        mask[empty] = True
    return mask


def terminal_value(b: float, gamma: float, mode: str) -> float:
    """Bootstrap value assigned after a Terminal transition."""
    return b / (1.0 - gamma) if mode == "absorbing" else 0.0


@dataclass
class OfflinePolicy:
    """Greedy over Q restricted to behaviour-supported actions."""

    qnet: mlp.MlpParams
    behavior: BehaviorModel | None

    def mask(self, states) -> np.ndarray:
        states = np.atleast_2d(states)
        if self.behavior is None:
            return np.ones((len(states), self.qnet.spec.n_out), dtype=bool)
        return _checked_mask(self.behavior.allowed(states))

    def actions(self, states) -> np.ndarray:
        q = np.atleast_2d(mlp.forward(self.qnet, np.atleast_2d(states)))
        return np.where(self.mask(states), q, -np.inf).argmax(axis=1)

    def __call__(self, obs) -> int:
        return int(self.actions(obs)[0])


@dataclass
class OfflineResult:
    qnet: mlp.MlpParams
    policy: OfflinePolicy
    shift: ShiftSpec
    gamma: float
    losses: list[float] = field(default_factory=list)


def train_offline(
    dataset: OfflineDataset,
    shift: ShiftSpec,
    behavior: BehaviorModel | None,
    epochs: int | None = None,
    cfg: OfflineConfig = OfflineConfig(),
    seed: int = 0,
) -> OfflineResult:
    """Fitted TD on relabelled rewards; no environment is touched."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    epochs = cfg.epochs if epochs is None else epochs
    streams = split(seed)
    n_actions = int(dataset.header.get("n_actions") or dataset.actions.max() + 1)
    if behavior is not None:
        n_actions = behavior.net.spec.n_out
    spec = mlp.MlpSpec((dataset.states.shape[1], *cfg.hidden, n_actions))
    qnet = mlp.init(spec, streams.init)
    target = qnet.copy()
    opt = mlp.adam(cfg.lr)
    policy = OfflinePolicy(qnet, behavior)
    # the behaviour mask depends only on the data, so compute it once
    next_mask = policy.mask(dataset.next_states)
    r_eff = dataset.rewards + shift.b
    after_terminal = terminal_value(shift.b, cfg.gamma, cfg.terminal_mode)
    terminal = dataset.terminal
    onehot = np.eye(n_actions)[dataset.actions]
    losses = []
    for _ in range(epochs):
        order = streams.replay.permutation(len(dataset))
        total, batches = 0.0, 0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            next_target = mlp.forward(target, dataset.next_states[idx])
            if cfg.double_q:
                online = np.where(next_mask[idx], mlp.forward(qnet, dataset.next_states[idx]), -np.inf)
                next_q = next_target[np.arange(len(idx)), online.argmax(axis=1)]
            else:
                next_q = _masked_max(next_target, next_mask[idx])
            y = r_eff[idx] + cfg.gamma * np.where(terminal[idx], after_terminal, next_q)
            grad, loss = mlp.backward(qnet, dataset.states[idx], np.repeat(y[:, None], n_actions, 1), onehot[idx])
            mlp.apply_update(qnet, grad, opt)
            if cfg.target_sync == "soft":
                mlp.soft_update(target, qnet, cfg.tau)
            total += loss
            batches += 1
        if cfg.target_sync == "epoch":
            target.flat[:] = qnet.flat
        losses.append(total / batches)
    return OfflineResult(qnet, policy, shift, cfg.gamma, losses)


def train_offline_tabular(
    dataset: OfflineDataset,
    shift: ShiftSpec,
    n_states: int,
    n_actions: int,
    epochs: int,
    alpha: float = 0.5,
    gamma: float = 0.99,
    q0: float = 0.0,
    continuing: bool = True,
) -> QTable:
    """Sweep the dataset in stored order applying tabular TD updates.

    Needs integer cell observations (GridMaze ``obs="index"``).
    """
    table = QTable.filled(n_states, n_actions, q0)
    cells = _cells(dataset.states)
    next_cells = _cells(dataset.next_states)
    rows = [
        Transition(int(s), int(a), float(r), int(s2), Termination(t))
        for s, a, r, s2, t in zip(cells, dataset.actions, dataset.rewards, next_cells, dataset.terms)
    ]
    for _ in range(epochs):
        for t in rows:
            td_update(table, t, shift, alpha, gamma, continuing)
    return table


def _cells(states: np.ndarray) -> np.ndarray:
    return states.reshape(len(states), -1)[:, 0].astype(int)


# ---------------------------------------------------------------- evaluation


@dataclass(frozen=True)
class GapReport:
    estimate: float  # mean debiased Q(s, pi(s)) over sampled dataset states
    mc_return: float  # mean discounted raw return of pi from the same states
    gap: float  # estimate - mc_return
    success_rate: float
    n_states: int


def discounted_rollout(env, policy: Callable, start_obs, gamma: float) -> tuple[float, bool]:
    obs = env.reset_to(start_obs)
    total, discount = 0.0, 1.0
    while True:
        t = env.step(policy(obs))
        total += discount * t.reward
        discount *= gamma
        obs = t.next_state
        if t.termination.done:
            return total, t.termination is Termination.TERMINAL


def evaluate_gap(
    env,
    qnet: mlp.MlpParams,
    policy: Callable,
    dataset: OfflineDataset,
    shift: ShiftSpec,
    gamma: float,
    n_rollouts: int = 200,
    seed: int = 0,
) -> GapReport:
    """Overestimation gap of ``qnet`` at ``n_rollouts`` uniformly drawn dataset states."""
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(dataset), size=n_rollouts)
    starts = dataset.states[idx]
    q = np.atleast_2d(mlp.forward(qnet, starts))
    actions = np.array([policy(s) for s in starts])
    estimate = shift_ops.debias_lower(q[np.arange(len(idx)), actions], shift, gamma)
    results = [discounted_rollout(env, policy, s, gamma) for s in starts]
    mc = np.array([r for r, _ in results])
    succ = np.array([ok for _, ok in results], dtype=float)
    est = float(np.mean(estimate))
    return GapReport(est, float(mc.mean()), est - float(mc.mean()), float(succ.mean()), n_rollouts)


def evaluate_table_gap(env, table: QTable, dataset: OfflineDataset, shift: ShiftSpec, gamma: float, n_rollouts: int = 200, seed: int = 0) -> GapReport:
    """Tabular counterpart of :func:`evaluate_gap` (index observations)."""
    rng = np.random.default_rng(seed)

    def policy(obs) -> int:
        return int(np.argmax(table.values[int(np.ravel(obs)[0])]))

    idx = rng.integers(0, len(dataset), size=n_rollouts)
    starts = dataset.states[idx]
    cells = _cells(starts)
    estimate = shift_ops.debias_lower(table.values[cells].max(axis=1), shift, gamma)
    results = [discounted_rollout(env, policy, s, gamma) for s in starts]
    mc = np.array([r for r, _ in results])
    succ = np.array([ok for _, ok in results], dtype=float)
    est = float(np.mean(estimate))
    return GapReport(est, float(mc.mean()), est - float(mc.mean()), float(succ.mean()), n_rollouts)


__all__ = [
    "BehaviorModel",
    "GapReport",
    "OfflineConfig",
    "OfflineDataset",
    "OfflinePolicy",
    "OfflineResult",
    "RandomPolicy",
    "SnapshotPolicy",
    "evaluate_gap",
    "evaluate_table_gap",
    "fit_behavior",
    "generate_dataset",
    "mixed_dataset",
    "train_offline",
    "train_offline_tabular",
]
