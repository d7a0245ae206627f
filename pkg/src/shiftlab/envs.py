"""Deterministic desk-scale environments.

Three tasks share one interface: ``reset(seed=None)`` returns an
observation, ``reset_to(obs)`` places the agent in an arbitrary state (used
by Monte-Carlo evaluation), and ``step(action)`` returns a
:class:`Transition`. Time limits are reported as ``TRUNCATED`` and never as
``TERMINAL``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any

import numpy as np


class Termination(str, Enum):
    CONTINUING = "C"
    TERMINAL = "T"
    TRUNCATED = "U"

    @property
    def done(self) -> bool:
        return self is not Termination.CONTINUING


@dataclass(frozen=True)
class Transition:
    state: Any
    action: Any
    reward: float
    next_state: Any
    termination: Termination = Termination.CONTINUING


class EnvUsageError(RuntimeError):
    """Raised when stepping an environment whose episode has ended."""


class UnsupportedEnvError(TypeError):
    pass


class _Env:
    name = "env"
    spec: Any

    def __init__(self) -> None:
        self.t = 0
        self.done = True
        # counts every step() call over the lifetime of the instance
        self.total_steps = 0

    def spec_dict(self) -> dict:
        return {"name": self.name, **dataclasses.asdict(self.spec)}

    def spec_hash(self) -> str:
        blob = json.dumps(self.spec_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def _begin_step(self) -> None:
        if self.done:
            raise EnvUsageError(f"{self.name}: episode has ended, call reset() first")
        self.t += 1
        self.total_steps += 1

    def _finish(self, terminal: bool) -> Termination:
        if terminal:
            term = Termination.TERMINAL
        elif self.t >= self.spec.max_steps:
            term = Termination.TRUNCATED
        else:
            term = Termination.CONTINUING
        self.done = term.done
        return term


# ---------------------------------------------------------------- grid maze

UP, RIGHT, DOWN, LEFT = range(4)
_MOVES = {UP: (-1, 0), RIGHT: (0, 1), DOWN: (1, 0), LEFT: (0, -1)}


@dataclass(frozen=True)
class GridMazeSpec:
    size: int = 5
    max_steps: int = 0  # 0 selects 4 * size**2
    obs: str = "index"  # index | onehot | coords
    walls: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if not 2 <= self.size <= 64:
            raise ValueError(f"maze size must lie in [2, 64], got {self.size}")
        if self.max_steps == 0:
            object.__setattr__(self, "max_steps", 4 * self.size * self.size)
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.obs not in ("index", "onehot", "coords"):
            raise ValueError(f"unknown observation mode {self.obs!r}")
        object.__setattr__(self, "walls", tuple(sorted(int(w) for w in self.walls)))
        n = self.size * self.size
        if 0 in self.walls or n - 1 in self.walls:
            raise ValueError("start and goal cells cannot be walls")


class GridMaze(_Env):
    """Open S x S grid: start upper-left, goal lower-right, 4-connected moves.

    Entering the goal yields reward 1 and ends the episode; every other step
    yields 0. Moves into the border or a wall leave the agent in place.
    """

    name = "gridmaze"
    n_actions = 4

    def __init__(self, spec: GridMazeSpec | None = None, seed: int | None = None) -> None:
        super().__init__()
        self.spec = spec or GridMazeSpec()
        self.n_states = self.spec.size**2
        self.start = 0
        self.goal = self.n_states - 1
        self._walls = frozenset(self.spec.walls)
        self.cell = self.start

    @property
    def observation_shape(self) -> tuple[int, ...]:
        if self.spec.obs == "onehot":
            return (self.n_states,)
        if self.spec.obs == "coords":
            return (2,)
        return ()

    def observe(self, cell: int):
        if self.spec.obs == "index":
            return int(cell)
        if self.spec.obs == "onehot":
            x = np.zeros(self.n_states)
            x[cell] = 1.0
            return x
        r, c = divmod(cell, self.spec.size)
        return np.array([r, c], dtype=float) / (self.spec.size - 1)

    def cell_of(self, obs) -> int:
        if self.spec.obs == "index":
            return int(np.ravel(obs)[0])
        obs = np.asarray(obs, dtype=float)
        if self.spec.obs == "onehot":
            return int(np.argmax(obs))
        r, c = np.rint(obs * (self.spec.size - 1)).astype(int)
        return int(r * self.spec.size + c)

    def reset(self, seed: int | None = None):
        # the start cell is fixed; the seed is accepted for interface parity
        return self.reset_to(self.observe(self.start))

    def reset_to(self, obs):
        cell = self.cell_of(obs)
        if cell in self._walls or not 0 <= cell < self.n_states:
            raise ValueError(f"cannot place agent on cell {cell}")
        self.cell = cell
        self.t = 0
        self.done = cell == self.goal
        return self.observe(cell)

    def next_cell(self, cell: int, action: int) -> int:
        r, c = divmod(cell, self.spec.size)
        dr, dc = _MOVES[int(action)]
        nr, nc = r + dr, c + dc
        if not (0 <= nr < self.spec.size and 0 <= nc < self.spec.size):
            return cell
        nxt = nr * self.spec.size + nc
        return cell if nxt in self._walls else nxt

    def step(self, action) -> Transition:
        if int(action) not in _MOVES:
            raise ValueError(f"invalid action {action!r}")
        self._begin_step()
        prev = self.cell
        self.cell = self.next_cell(prev, action)
        reached = self.cell == self.goal
        term = self._finish(reached)
        return Transition(
            self.observe(prev), int(action), 1.0 if reached else 0.0, self.observe(self.cell), term
        )


# ------------------------------------------------------------- mountain car


@dataclass(frozen=True)
class MountainCarSpec:
    max_steps: int = 200
    start_low: float = -0.6
    start_high: float = -0.4


class MountainCar(_Env):
    """Classic discrete mountain car with a sparse success reward.

    Reward is 1 on reaching the flag (terminal) and 0 otherwise. The
    classical -1 per step task is the same environment under a shift of -1.
    Observations are rescaled to roughly [-1, 1].
    """

    name = "mountaincar"
    n_actions = 3
    observation_shape = (2,)
    min_pos, max_pos, goal_pos, max_speed = -1.2, 0.6, 0.5, 0.07

    def __init__(self, spec: MountainCarSpec | None = None, seed: int | None = None) -> None:
        super().__init__()
        self.spec = spec or MountainCarSpec()
        self._rng = np.random.default_rng(seed)
        self.pos, self.vel = -0.5, 0.0

    def observe(self) -> np.ndarray:
        return np.array([(self.pos + 0.3) / 0.9, self.vel / self.max_speed])

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        self.pos = float(self._rng.uniform(self.spec.start_low, self.spec.start_high))
        self.vel = 0.0
        self.t, self.done = 0, False
        return self.observe()

    def reset_to(self, obs) -> np.ndarray:
        obs = np.asarray(obs, dtype=float)
        self.pos = float(obs[0] * 0.9 - 0.3)
        self.vel = float(obs[1] * self.max_speed)
        self.t, self.done = 0, self.pos >= self.goal_pos
        return self.observe()

    def step(self, action) -> Transition:
        if int(action) not in (0, 1, 2):
            raise ValueError(f"invalid action {action!r}")
        self._begin_step()
        before = self.observe()
        vel = self.vel + (int(action) - 1) * 0.001 - 0.0025 * math.cos(3 * self.pos)
        vel = min(max(vel, -self.max_speed), self.max_speed)
        pos = min(max(self.pos + vel, self.min_pos), self.max_pos)
        if pos == self.min_pos and vel < 0:
            vel = 0.0
        self.pos, self.vel = pos, vel
        reached = pos >= self.goal_pos
        term = self._finish(reached)
        return Transition(before, int(action), 1.0 if reached else 0.0, self.observe(), term)


# --------------------------------------------------------------- point mass


@dataclass(frozen=True)
class PointMassSpec:
    half_width: float = 1.0
    goal: tuple[float, float] = (0.6, 0.6)
    goal_radius: float = 0.1
    dt: float = 0.05
    damping: float = 0.95
    force: float = 1.0
    max_steps: int = 100
    reward: str = "dense"  # dense | sparse
    start_center: tuple[float, float] = (-0.6, -0.6)
    start_spread: float = 0.2

    def __post_init__(self) -> None:
        if self.dt <= 0 or self.goal_radius <= 0 or self.half_width <= 0:
            raise ValueError("dt, goal_radius and half_width must be positive")
        if self.reward not in ("dense", "sparse"):
            raise ValueError(f"unknown reward mode {self.reward!r}")
        object.__setattr__(self, "goal", tuple(float(g) for g in self.goal))
        object.__setattr__(self, "start_center", tuple(float(g) for g in self.start_center))


class PointMass(_Env):
    """Damped 2-D double integrator in a walled square arena.

    Observation is ``(x, y, vx, vy)``; actions are forces in ``[-1, 1]**2``.
    Dense mode pays minus the distance to the goal centre every step and only
    ends by time limit; sparse mode pays 1 on entering the goal disc, which
    terminates the episode.
    """

    name = "pointmass"
    action_dim = 2
    action_bound = 1.0
    observation_shape = (4,)

    def __init__(self, spec: PointMassSpec | None = None, seed: int | None = None) -> None:
        super().__init__()
        self.spec = spec or PointMassSpec()
        self._rng = np.random.default_rng(seed)
        self._goal = np.array(self.spec.goal)
        self.pos = np.zeros(2)
        self.vel = np.zeros(2)

    def observe(self) -> np.ndarray:
        return np.concatenate([self.pos, self.vel])

    def distance(self) -> float:
        return float(np.linalg.norm(self.pos - self._goal))

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        s = self.spec
        self.pos = np.array(s.start_center) + self._rng.uniform(-s.start_spread, s.start_spread, 2)
        self.pos = np.clip(self.pos, -s.half_width, s.half_width)
        self.vel = np.zeros(2)
        self.t, self.done = 0, False
        return self.observe()

    def reset_to(self, obs) -> np.ndarray:
        obs = np.asarray(obs, dtype=float)
        hw = self.spec.half_width
        self.pos = np.clip(obs[:2], -hw, hw)
        self.vel = obs[2:4].copy()
        self.t, self.done = 0, False
        return self.observe()

    def step(self, action) -> Transition:
        a = np.clip(np.asarray(action, dtype=float).reshape(2), -1.0, 1.0)
        self._begin_step()
        s = self.spec
        before = self.observe()
        vel = s.damping * self.vel + s.force * s.dt * a
        pos = self.pos + s.dt * vel
        hit = np.abs(pos) > s.half_width
        pos = np.clip(pos, -s.half_width, s.half_width)
        vel[hit] = 0.0
        self.pos, self.vel = pos, vel
        dist = self.distance()
        if s.reward == "dense":
            reward, reached = -dist, False
        else:
            reached = dist <= s.goal_radius
            reward = 1.0 if reached else 0.0
        term = self._finish(reached)
        return Transition(before, a, float(reward), self.observe(), term)


# ------------------------------------------------------------------ helpers


def enumerate_states(env) -> list[int]:
    """All cell ids of a grid maze in row-major order."""
    if not isinstance(env, GridMaze):
        raise UnsupportedEnvError(f"{type(env).__name__} has no finite state enumeration")
    return list(range(env.n_states))


_SPECS = {
    "gridmaze": (GridMaze, GridMazeSpec),
    "mountaincar": (MountainCar, MountainCarSpec),
    "pointmass": (PointMass, PointMassSpec),
}


def make_env(cfg: dict, seed: int | None = None, **overrides):
    """Build an environment from a config table such as ``{"name": "gridmaze", "size": 7}``."""
    cfg = {**cfg, **overrides}
    name = cfg.pop("name", None)
    if name not in _SPECS:
        raise ValueError(f"env.name: unknown environment {name!r}")
    cls, spec_cls = _SPECS[name]
    known = {f.name for f in dataclasses.fields(spec_cls)}
    unknown = set(cfg) - known
    if unknown:
        raise ValueError(f"env: unknown field(s) {sorted(unknown)} for {name}")
    for key in ("goal", "start_center", "walls"):
        if key in cfg:
            cfg[key] = tuple(cfg[key])
    return cls(spec_cls(**cfg), seed=seed)


def is_discrete(env) -> bool:
    return hasattr(env, "n_actions")

