"""Random Reward Shift: K shifted critics sharing one buffer, one deterministic actor.

Every critic sees the same batch but relabels it with its own constant
``b_k``. At each episode boundary one critic is drawn uniformly and the
actor follows only that critic's action gradient until the next draw, so a
negatively shifted critic steers some episodes optimistically and a
positively shifted one steers others conservatively.

The backbone is a plain DDPG-style actor-critic (no twin critics, no target
policy smoothing).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from shiftlab import mlp
from shiftlab.curves import LearningCurve
from shiftlab.envs import PointMass, Termination
from shiftlab.replay import Batch, ReplayBuffer
from shiftlab.rng import child_seed, split

ACTOR_MODES = ("sample", "mean")


@dataclass(frozen=True)
class RrsConfig:
    shifts: tuple[float, ...] = (-0.5, 0.0, 0.5)
    gamma: float = 0.99
    tau: float = 0.005
    batch_size: int = 128
    warmup: int = 1000
    noise: float = 0.1  # Gaussian sigma as a fraction of the action range
    critic_lr: float = 1e-3
    actor_lr: float = 1e-3
    optimizer: str = "adam"
    hidden: tuple[int, ...] = (64, 64)
    # "sample": actor follows one uniformly drawn critic per episode.
    # "mean": actor follows the mean of all critics (a plain ensemble).
    actor_mode: str = "sample"
    shared_init: bool = False
    eval_every: int = 10
    eval_episodes: int = 3
    buffer_size: int = 100_000

    def __post_init__(self) -> None:
        object.__setattr__(self, "shifts", tuple(float(b) for b in self.shifts))
        object.__setattr__(self, "hidden", tuple(self.hidden))
        if not self.shifts:
            raise ValueError("need at least one shift (K >= 1)")
        if not 0 < self.tau <= 1:
            raise ValueError("tau must lie in (0, 1]")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        if self.actor_mode not in ACTOR_MODES:
            raise ValueError(f"unknown actor mode {self.actor_mode!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimiser {self.optimizer!r}")
        if self.batch_size < 1 or self.eval_every < 1 or self.eval_episodes < 1:
            raise ValueError("batch_size, eval_every and eval_episodes must be >= 1")

    @property
    def k(self) -> int:
        return len(self.shifts)


def _optimizer(kind: str, lr: float) -> mlp.OptimizerState:
    return mlp.adam(lr) if kind == "adam" else mlp.sgd(lr)


class RrsEnsemble:
    """K critics with targets, one actor with target, and the active index."""

    def __init__(self, cfg: RrsConfig, obs_dim: int, action_dim: int, action_bound: float, rng) -> None:
        self.cfg = cfg
        self.shifts = np.array(cfg.shifts)
        critic_spec = mlp.MlpSpec((obs_dim + action_dim, *cfg.hidden, 1))
        actor_spec = mlp.MlpSpec(
            (obs_dim, *cfg.hidden, action_dim), output="scaled-tanh", output_scale=action_bound
        )
        if cfg.shared_init:
            first = mlp.init(critic_spec, rng)
            self.critics = [first.copy() for _ in cfg.shifts]
        else:
            self.critics = [mlp.init(critic_spec, rng) for _ in cfg.shifts]
        self.critic_targets = [c.copy() for c in self.critics]
        self.critic_opts = [_optimizer(cfg.optimizer, cfg.critic_lr) for _ in cfg.shifts]
        self.actor = mlp.init(actor_spec, rng)
        self.actor_target = self.actor.copy()
        self.actor_opt = _optimizer(cfg.optimizer, cfg.actor_lr)
        self.action_dim = action_dim
        self.action_bound = action_bound
        self.active = 0

    @property
    def k(self) -> int:
        return len(self.critics)

    def act(self, obs) -> np.ndarray:
        return mlp.forward(self.actor, obs)

    def q_values(self, states, actions) -> np.ndarray:
        """(K, N) critic outputs."""
        x = np.concatenate([np.atleast_2d(states), np.atleast_2d(actions)], axis=1)
        return np.stack([mlp.forward(c, x)[:, 0] for c in self.critics])


def sample_active_q(ensemble: RrsEnsemble, rng: np.random.Generator) -> int:
    """Draw the 0-based index of the critic the actor follows this episode."""
    ensemble.active = int(rng.integers(ensemble.k))
    return ensemble.active


def critic_targets(ensemble: RrsEnsemble, batch: Batch, gamma: float) -> np.ndarray:
    """(K, N) targets ``r + b_k + gamma * Q'_k(s', mu'(s'))``, cut at Terminal."""
    next_a = mlp.forward(ensemble.actor_target, batch.next_states)
    x_next = np.concatenate([batch.next_states, next_a], axis=1)
    keep = np.where(batch.terminal, 0.0, gamma)
    out = np.empty((ensemble.k, len(batch)))
    for k, (target, b) in enumerate(zip(ensemble.critic_targets, ensemble.shifts)):
        out[k] = batch.rewards + b + keep * mlp.forward(target, x_next)[:, 0]
    return out


def rrs_critic_step(ensemble: RrsEnsemble, batch: Batch, gamma: float | None = None) -> np.ndarray:
    """One MSE step for every critic on the same batch; returns the K losses."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    gamma = ensemble.cfg.gamma if gamma is None else gamma
    y = critic_targets(ensemble, batch, gamma)
    x = np.concatenate([batch.states, np.asarray(batch.actions, dtype=float)], axis=1)
    losses = np.empty(ensemble.k)
    for k, (critic, opt) in enumerate(zip(ensemble.critics, ensemble.critic_opts)):
        grad, losses[k] = mlp.backward(critic, x, y[k][:, None])
        mlp.apply_update(critic, grad, opt)
    return losses


def actor_gradient(actor: mlp.MlpParams, critics: list[mlp.MlpParams], states) -> np.ndarray:
    """Gradient of ``-mean_s mean_k Q_k(s, mu(s))`` w.r.t. the actor parameters."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    n, obs_dim = states.shape
    actions, actor_cache = mlp.forward_cache(actor, states)
    x = np.concatenate([states, actions], axis=1)
    d_action = np.zeros_like(actions)
    for critic in critics:
        _, cache = mlp.forward_cache(critic, x)
        _, d_x = mlp.vjp(critic, cache, np.full((n, 1), -1.0 / (n * len(critics))))
        d_action += d_x[:, obs_dim:]
    grad, _ = mlp.vjp(actor, actor_cache, d_action)
    return grad


def rrs_actor_step(ensemble: RrsEnsemble, states) -> np.ndarray:
    """One ascent step on Q_active(s, mu(s)) (or the critic mean in "mean" mode)."""
    if ensemble.cfg.actor_mode == "mean":
        followed = ensemble.critics
    else:
        followed = [ensemble.critics[ensemble.active]]
    grad = actor_gradient(ensemble.actor, followed, states)
    mlp.apply_update(ensemble.actor, grad, ensemble.actor_opt)
    return grad


def soft_update_all(ensemble: RrsEnsemble, tau: float) -> None:
    for target, main in zip(ensemble.critic_targets, ensemble.critics):
        mlp.soft_update(target, main, tau)
    mlp.soft_update(ensemble.actor_target, ensemble.actor, tau)


def evaluate_policy(ensemble: RrsEnsemble, env, episodes: int, rng: np.random.Generator) -> tuple[float, float]:
    """Mean raw return and success rate of the noiseless policy."""
    returns, successes = [], []
    for _ in range(episodes):
        obs = env.reset(seed=child_seed(rng))
        total, success = 0.0, 0.0
        while True:
            t = env.step(ensemble.act(obs))
            total += t.reward
            obs = t.next_state
            if t.termination is Termination.TERMINAL:
                success = 1.0
            if t.termination.done:
                break
        returns.append(total)
        successes.append(success)
    return float(np.mean(returns)), float(np.mean(successes))


def run_rrs(env: PointMass, cfg: RrsConfig, seed: int, episodes: int) -> LearningCurve:
    """Train for ``episodes`` episodes; evaluate the noiseless actor every ``eval_every``.

    Metrics per episode: ``return``, ``success``, ``active`` (0-based critic
    index) and ``critic_loss_<k>`` (mean over the episode's updates). At each
    evaluation: ``eval_return`` and ``eval_success``. A final evaluation is
    always recorded after the last episode.
    """
    if not hasattr(env, "action_dim"):
        raise TypeError("RRS needs a continuous-action environment")
    streams = split(seed)
    obs_dim = int(np.prod(env.observation_shape))
    ens = RrsEnsemble(cfg, obs_dim, env.action_dim, env.action_bound, streams.init)
    buffer = ReplayBuffer(cfg.buffer_size, (obs_dim,), (env.action_dim,), np.float64)
    eval_env = type(env)(env.spec)
    sigma = cfg.noise * 2.0 * env.action_bound
    curve = LearningCurve(seed=seed)
    env.reset(seed=child_seed(streams.env))
    steps = 0
    for ep in range(1, episodes + 1):
        sample_active_q(ens, streams.active)
        obs = env.reset()
        ret, success = 0.0, 0.0
        loss_sum, n_updates = np.zeros(ens.k), 0
        while True:
            a = ens.act(obs) + sigma * streams.action.standard_normal(env.action_dim)
            a = np.clip(a, -env.action_bound, env.action_bound)
            t = env.step(a)
            buffer.add(t)
            steps += 1
            ret += t.reward
            obs = t.next_state
            if steps >= cfg.warmup and len(buffer) >= cfg.batch_size:
                batch = buffer.sample(cfg.batch_size, streams.replay)
                loss_sum += rrs_critic_step(ens, batch)
                rrs_actor_step(ens, batch.states)
                soft_update_all(ens, cfg.tau)
                n_updates += 1
            if t.termination is Termination.TERMINAL:
                success = 1.0
            if t.termination.done:
                break
        curve.add(steps, ep, "return", ret)
        curve.add(steps, ep, "success", success)
        curve.add(steps, ep, "active", ens.active)
        for k in range(ens.k):
            curve.add(steps, ep, f"critic_loss_{k}", loss_sum[k] / n_updates if n_updates else np.nan)
        if ep % cfg.eval_every == 0 or ep == episodes:
            ev_ret, ev_succ = evaluate_policy(ens, eval_env, cfg.eval_episodes, streams.eval)
            curve.add(steps, ep, "eval_return", ev_ret)
            curve.add(steps, ep, "eval_success", ev_succ)
    curve.artifacts["ensemble"] = ens
    return curve
