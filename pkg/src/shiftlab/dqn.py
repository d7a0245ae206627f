"""Desk-scale DQN with training-time reward relabelling.

The buffer stores raw rewards. The shift (and the RND bonus, if one is
attached) is added only when targets are computed, so the same stored
experience can be replayed under any shift.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from shiftlab import mlp
from shiftlab.curves import LearningCurve
from shiftlab.envs import GridMaze, Termination, Transition
from shiftlab.explore import EpsilonSchedule, epsilon_at, epsilon_greedy
from shiftlab.replay import Batch, ReplayBuffer
from shiftlab.rnd import RndConfig, RndPair, rnd_update
from shiftlab.rng import split
from shiftlab.shift import ShiftSpec

__all__ = [
    "DqnAgent",
    "DqnConfig",
    "EpsilonSchedule",
    "dqn_targets",
    "dqn_train_step",
    "epsilon_at",
    "run_dqn",
]


@dataclass(frozen=True)
class DqnConfig:
    hidden: tuple[int, ...] = (64, 64)
    gamma: float = 0.99
    shift: ShiftSpec = ShiftSpec()
    epsilon: EpsilonSchedule = EpsilonSchedule()
    batch_size: int = 128
    lr: float = 1e-3
    tau: float | None = 0.005
    target_period: int | None = None
    warmup: int = 500
    buffer_size: int = 100_000
    rnd: RndConfig | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden", tuple(self.hidden))
        if self.tau is None and self.target_period is None:
            raise ValueError("set either tau (soft sync) or target_period (hard sync)")
        if self.tau is not None and not 0 < self.tau <= 1:
            raise ValueError("tau must lie in (0, 1]")
        if self.target_period is not None and self.target_period < 1:
            raise ValueError("target_period must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")


def dqn_targets(
    target_net: mlp.MlpParams,
    batch: Batch,
    gamma: float,
    shift: ShiftSpec,
    intrinsic: np.ndarray | None = None,
) -> np.ndarray:
    """``r + b (+ bonus)``, plus ``gamma * max_a Q_target(s', a)`` unless terminal."""
    r_eff = batch.rewards + shift.b
    if intrinsic is not None:
        r_eff = r_eff + intrinsic
    next_q = mlp.forward(target_net, batch.next_states).max(axis=1)
    return r_eff + gamma * np.where(batch.terminal, 0.0, next_q)


def dqn_train_step(
    qnet: mlp.MlpParams,
    target_net: mlp.MlpParams,
    buffer: ReplayBuffer,
    cfg: DqnConfig,
    opt: mlp.OptimizerState,
    rng: np.random.Generator,
    rnd: RndPair | None = None,
    batch: Batch | None = None,
) -> float | None:
    """One MSE step of Q(s, a) toward the relabelled TD target.

    Returns ``None`` (and does nothing) while the buffer holds fewer than
    ``batch_size`` transitions.
    """
    if batch is None:
        if len(buffer) < cfg.batch_size:
            return None
        batch = buffer.sample(cfg.batch_size, rng)
    bonus = None
    if rnd is not None:
        bonus = rnd.intrinsic(batch.states, batch.actions)
        rnd_update(rnd, batch.states, batch.actions)
    y = dqn_targets(target_net, batch, cfg.gamma, cfg.shift, bonus)
    n_actions = qnet.spec.n_out
    mask = np.zeros((len(batch), n_actions))
    mask[np.arange(len(batch)), batch.actions] = 1.0
    targets = np.repeat(y[:, None], n_actions, axis=1)
    grad, loss = mlp.backward(qnet, batch.states, targets, mask)
    mlp.apply_update(qnet, grad, opt)
    return loss


class DqnAgent:
    def __init__(self, env, cfg: DqnConfig, seed: int) -> None:
        if not hasattr(env, "n_actions"):
            raise TypeError("DQN needs a discrete-action environment")
        if isinstance(env, GridMaze) and env.spec.obs == "index":
            raise ValueError("DQN needs vector observations; use obs='onehot' or 'coords'")
        self.env, self.cfg, self.seed = env, cfg, seed
        self.streams = split(seed)
        obs_dim = int(np.prod(env.observation_shape))
        spec = mlp.MlpSpec((obs_dim, *cfg.hidden, env.n_actions))
        self.qnet = mlp.init(spec, self.streams.init)
        self.target = self.qnet.copy()
        self.opt = mlp.adam(cfg.lr)
        self.buffer = ReplayBuffer(cfg.buffer_size, (obs_dim,))
        self.rnd = RndPair(cfg.rnd, obs_dim, env.n_actions, self.streams.init) if cfg.rnd else None
        self.steps = 0
        self.updates = 0
        n_cells = env.n_states if isinstance(env, GridMaze) else 0
        self.cell_visits = np.zeros(n_cells, dtype=np.int64)

    def act(self, obs, epsilon: float) -> int:
        return epsilon_greedy(mlp.forward(self.qnet, obs), epsilon, self.streams.action)

    def observe(self, t: Transition) -> float | None:
        self.buffer.add(t)
        self.steps += 1
        if self.steps < self.cfg.warmup:
            return None
        loss = dqn_train_step(
            self.qnet, self.target, self.buffer, self.cfg, self.opt, self.streams.replay, self.rnd
        )
        if loss is not None:
            self.updates += 1
            if self.cfg.tau is not None:
                mlp.soft_update(self.target, self.qnet, self.cfg.tau)
            elif self.updates % self.cfg.target_period == 0:
                self.target.flat[:] = self.qnet.flat
        return loss

    def run(self, episodes: int, curve: LearningCurve | None = None) -> LearningCurve:
        curve = curve or LearningCurve(seed=self.seed)
        env = self.env
        env.reset(seed=int(self.streams.env.integers(2**31 - 1)))
        for ep in range(episodes):
            obs = env.reset()
            eps = epsilon_at(self.cfg.epsilon, ep / episodes)
            ret, success = 0.0, 0.0
            while True:
                if self.cell_visits.size:
                    self.cell_visits[env.cell_of(obs)] += 1
                a = self.act(obs, eps)
                t = env.step(a)
                self.observe(t)
                ret += t.reward
                obs = t.next_state
                if t.termination is Termination.TERMINAL:
                    success = 1.0
                if t.termination.done:
                    break
            curve.add(self.steps, ep + 1, "success", success)
            curve.add(self.steps, ep + 1, "return", ret)
        curve.artifacts.update(agent=self, cell_visits=self.cell_visits)
        return curve


def run_dqn(env, cfg: DqnConfig, seed: int, episodes: int) -> LearningCurve:
    return DqnAgent(env, cfg, seed).run(episodes)
