"""Tabular Q-learning with reward shifting and the exact offset-equivalence check.

In a table, learning with reward ``r + b`` from ``q0`` and learning with
``r`` from ``q0 - b/(1-gamma)`` produce tables that differ by exactly
``b/(1-gamma)`` after every update, as long as the bootstrap is never cut.
A positive shift therefore acts as a pessimistic start and a negative one
as an optimistic start.
:func:`offset_equivalence_check` runs the two learners side by side and
measures how far floating point lets them drift apart.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from shiftlab.curves import LearningCurve
from shiftlab.envs import GridMaze, Termination, Transition, enumerate_states
from shiftlab.explore import EpsilonSchedule, argmax_random, epsilon_at, greedy_set
from shiftlab.shift import ShiftSpec, offset_of


@dataclass
class QTable:
    values: np.ndarray
    q0: float = 0.0

    @classmethod
    def filled(cls, n_states: int, n_actions: int, q0: float = 0.0) -> "QTable":
        return cls(np.full((n_states, n_actions), float(q0)), float(q0))

    def copy(self) -> "QTable":
        return QTable(self.values.copy(), self.q0)


@dataclass(frozen=True)
class EpsilonGreedy:
    schedule: EpsilonSchedule = EpsilonSchedule()


@dataclass(frozen=True)
class CountBonus:
    kappa: float = 1.0


@dataclass(frozen=True)
class Greedy:
    pass


Exploration = EpsilonGreedy | CountBonus | Greedy


@dataclass(frozen=True)
class TabularConfig:
    alpha: float = 0.5
    gamma: float = 0.99
    shift: ShiftSpec = ShiftSpec()
    exploration: Exploration = field(default_factory=EpsilonGreedy)
    episodes: int = 100
    q0: float = 0.0
    # bootstrap through terminal transitions as well
    continuing: bool = False

    def __post_init__(self) -> None:
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not 0 <= self.gamma < 1:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")


def td_update(
    table: QTable,
    t: Transition,
    shift: ShiftSpec,
    alpha: float,
    gamma: float,
    continuing: bool = False,
) -> QTable:
    """One Q-learning step on the shifted reward ``r + b``, in place."""
    q = table.values
    target = t.reward + shift.b
    if continuing or t.termination is not Termination.TERMINAL:
        target += gamma * q[t.next_state].max()
    q[t.state, t.action] += alpha * (target - q[t.state, t.action])
    return table


def select_action(
    table: QTable,
    state: int,
    exploration: Exploration,
    counts: np.ndarray | None,
    rng: np.random.Generator,
    progress: float = 0.0,
) -> int:
    values = table.values[state]
    if isinstance(exploration, EpsilonGreedy):
        if rng.random() < epsilon_at(exploration.schedule, progress):
            return int(rng.integers(values.size))
        return argmax_random(values, rng)
    if isinstance(exploration, CountBonus):
        bonus = exploration.kappa / np.sqrt(counts[state] + 1.0)
        return argmax_random(values + bonus, rng)
    return argmax_random(values, rng)


def run_tabular(env: GridMaze, cfg: TabularConfig, seed: int) -> LearningCurve:
    """Q-learning for ``cfg.episodes`` episodes; metrics use the raw reward."""
    n_states, n_actions = len(enumerate_states(env)), env.n_actions
    rng = np.random.default_rng(seed)
    table = QTable.filled(n_states, n_actions, cfg.q0)
    counts = np.zeros((n_states, n_actions), dtype=np.int64)
    offset = offset_of(cfg.shift, cfg.gamma)
    curve = LearningCurve(seed=seed)
    step = 0
    for ep in range(cfg.episodes):
        s = env.cell_of(env.reset())
        ret, success = 0.0, 0.0
        progress = ep / cfg.episodes
        while True:
            a = select_action(table, s, cfg.exploration, counts, rng, progress)
            tr = env.step(a)
            tr = Transition(s, a, tr.reward, env.cell_of(tr.next_state), tr.termination)
            counts[s, a] += 1
            td_update(table, tr, cfg.shift, cfg.alpha, cfg.gamma, cfg.continuing)
            step += 1
            ret += tr.reward
            s = tr.next_state
            if tr.termination is Termination.TERMINAL:
                success = 1.0
            if tr.termination.done:
                break
        curve.add(step, ep + 1, "success", success)
        curve.add(step, ep + 1, "return", ret)
        curve.add(step, ep + 1, "mean_q", float(table.values.mean() - offset))
    curve.artifacts["visit_counts"] = counts
    curve.artifacts["table"] = table
    return curve


@dataclass
class EquivalenceReport:
    max_discrepancy: float
    steps: int
    # first step at which the discrepancy or the greedy sets disagreed
    first_violation: int | None = None
    policy_mismatch: bool = False

    @property
    def ok(self) -> bool:
        return self.first_violation is None


def offset_equivalence_check(
    env: GridMaze,
    cfg: TabularConfig,
    seed: int,
    probe_b: float,
    tol: float = 1e-9,
) -> EquivalenceReport:
    """Run shifted learner L1 and re-initialised learner L2 in lockstep.

    L1 learns from ``r + probe_b`` starting at ``cfg.q0``; L2 learns from
    ``r`` starting at ``cfg.q0 - probe_b/(1-gamma)``. Both draw from their
    own generator seeded identically. Reports the largest
    ``|Q1 - Q2 - probe_b/(1-gamma)|`` seen over the whole run.
    """
    c = offset_of(ShiftSpec(probe_b), cfg.gamma)
    n_states, n_actions = len(enumerate_states(env)), env.n_actions
    envs = (GridMaze(env.spec), GridMaze(env.spec))
    rngs = (np.random.default_rng(seed), np.random.default_rng(seed))
    tables = (
        QTable.filled(n_states, n_actions, cfg.q0),
        QTable.filled(n_states, n_actions, cfg.q0 - c),
    )
    shifts = (ShiftSpec(probe_b), ShiftSpec(0.0))
    counts = [np.zeros((n_states, n_actions), dtype=np.int64) for _ in range(2)]
    worst, step, first_bad, mismatch = 0.0, 0, None, False

    for ep in range(cfg.episodes):
        states = [e.cell_of(e.reset()) for e in envs]
        progress = ep / cfg.episodes
        done = False
        while not done:
            step += 1
            if not np.array_equal(greedy_set(tables[0].values[states[0]]), greedy_set(tables[1].values[states[1]])):
                mismatch = True
            acts = [
                select_action(tables[i], states[i], cfg.exploration, counts[i], rngs[i], progress)
                for i in range(2)
            ]
            if acts[0] != acts[1]:
                mismatch = True
            if mismatch:
                first_bad = first_bad or step
                return EquivalenceReport(float("inf"), step, first_bad, True)
            for i in range(2):
                tr = envs[i].step(acts[i])
                tr = Transition(states[i], acts[i], tr.reward, envs[i].cell_of(tr.next_state), tr.termination)
                counts[i][states[i], acts[i]] += 1
                td_update(tables[i], tr, shifts[i], cfg.alpha, cfg.gamma, continuing=True)
                states[i] = tr.next_state
                done = tr.termination.done
            gap = float(np.max(np.abs(tables[0].values - tables[1].values - c)))
            worst = max(worst, gap)
            if gap >= tol and first_bad is None:
                first_bad = step
    return EquivalenceReport(worst, step, first_bad, False)


def value_iteration(
    env: GridMaze,
    gamma: float,
    shift: ShiftSpec = ShiftSpec(),
    tol: float = 1e-12,
    max_iter: int = 100_000,
) -> np.ndarray:
    """Optimal action values of a grid maze with terminal-cut bootstrapping."""
    n, n_actions = env.n_states, env.n_actions
    nxt = np.array([[env.next_cell(s, a) for a in range(n_actions)] for s in range(n)])
    reward = (nxt == env.goal).astype(float)
    cont = (nxt != env.goal).astype(float)
    q = np.zeros((n, n_actions))
    for _ in range(max_iter):
        v = q.max(axis=1)
        new = reward + shift.b + gamma * cont * v[nxt]
        new[env.goal] = 0.0
        if np.max(np.abs(new - q)) < tol:
            return new
        q = new
    return q
