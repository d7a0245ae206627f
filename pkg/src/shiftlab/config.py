"""TOML experiment configs.

A config names one experiment: an environment table, an agent kind with its
typed settings, a list of shifts and a list of seeds. Every run of the
experiment is one (seed, shift) pair.

    id = "dqn-maze7"
    kind = "dqn"            # tabular | dqn | dqn+rnd | rrs | offline
    episodes = 150
    seeds = [0, 1, 2]
    shifts = [0.0, -0.5]
    out_dir = "runs/dqn-maze7"

    [env]
    name = "gridmaze"
    size = 7
    obs = "onehot"

    [agent]                 # fields of the kind's config dataclass
    lr = 0.001

    [agent.rnd]             # dqn+rnd only
    bonus_shift = 1.0

    [dataset]               # offline only
    n = 10000
    behavior = "mixed"      # mixed | random

    [sweep]                 # `sweep` only: cross product over dotted keys
    "agent.lr" = [0.001, 0.0005]
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import itertools
import json
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from shiftlab.dqn import DqnConfig
from shiftlab.explore import EpsilonSchedule
from shiftlab.offline import OfflineConfig
from shiftlab.rnd import RndConfig
from shiftlab.rrs import RrsConfig
from shiftlab.shift import ShiftSpec
from shiftlab.tabular import CountBonus, EpsilonGreedy, Greedy, TabularConfig

KINDS = ("tabular", "dqn", "dqn+rnd", "rrs", "offline")
_ID = re.compile(r"[a-z0-9_-]+")
_TOP = {"id", "kind", "env", "agent", "shifts", "seeds", "episodes", "out_dir", "dataset", "sweep"}
_DATASET_FIELDS = {"n", "behavior", "gamma", "dqn_episodes", "epsilon", "path", "n_rollouts"}


class ConfigError(ValueError):
    """Invalid experiment config; the message names the offending field."""


@dataclass(frozen=True)
class ExperimentConfig:
    id: str
    kind: str
    env: dict
    episodes: int
    seeds: tuple[int, ...]
    shifts: tuple[float, ...] = (0.0,)
    agent: dict = field(default_factory=dict)
    dataset: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    out_dir: str = "runs"

    def __post_init__(self) -> None:
        if not isinstance(self.id, str) or not _ID.fullmatch(self.id):
            raise ConfigError(f"id: {self.id!r} must match [a-z0-9_-]+")
        if self.kind not in KINDS:
            raise ConfigError(f"kind: unknown agent kind {self.kind!r} (expected one of {', '.join(KINDS)})")
        if not isinstance(self.episodes, int) or self.episodes < 1:
            raise ConfigError("episodes: budget must be an integer >= 1")
        if not self.seeds:
            raise ConfigError("seeds: need at least one seed")
        if not self.shifts:
            raise ConfigError("shifts: need at least one shift")
        if "name" not in self.env:
            raise ConfigError("env.name: missing")
        unknown = set(self.dataset) - _DATASET_FIELDS
        if unknown:
            raise ConfigError(f"dataset: unknown field(s) {sorted(unknown)}")
        # build once so typing errors surface at load time
        agent_config(self, self.shifts[0])

    def semantic_dict(self) -> dict:
        """Everything that affects results (the output directory does not)."""
        d = dataclasses.asdict(self)
        d.pop("out_dir")
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.semantic_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _typed(cls, table: dict, where: str, **fixed):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(table) - names
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {sorted(unknown)}")
    try:
        return cls(**{**table, **fixed})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _schedule(table: dict) -> EpsilonSchedule:
    return _typed(EpsilonSchedule, table, "agent.epsilon")


def _tabular(agent: dict, b: float) -> TabularConfig:
    agent = dict(agent)
    explore = agent.pop("exploration", {"kind": "epsilon_greedy"})
    explore = dict(explore)
    kind = explore.pop("kind", "epsilon_greedy")
    if kind == "epsilon_greedy":
        exploration = EpsilonGreedy(_schedule(explore))
    elif kind == "count_bonus":
        exploration = _typed(CountBonus, explore, "agent.exploration")
    elif kind == "none":
        exploration = Greedy()
    else:
        raise ConfigError(f"agent.exploration.kind: unknown exploration {kind!r}")
    return _typed(TabularConfig, agent, "agent", shift=ShiftSpec(b), exploration=exploration)


def _dqn(agent: dict, b: float, with_rnd: bool) -> DqnConfig:
    agent = dict(agent)
    fixed = {"shift": ShiftSpec(b)}
    if "epsilon" in agent:
        fixed["epsilon"] = _schedule(agent.pop("epsilon"))
    rnd = agent.pop("rnd", None)
    if with_rnd:
        fixed["rnd"] = _typed(RndConfig, rnd or {}, "agent.rnd")
    elif rnd is not None:
        raise ConfigError("agent.rnd: only valid for kind 'dqn+rnd'")
    return _typed(DqnConfig, agent, "agent", **fixed)


def _rrs(agent: dict, b: float) -> RrsConfig:
    """The swept shift moves the whole shift list: shifts_k + b."""
    agent = dict(agent)
    base = tuple(agent.pop("shifts", RrsConfig().shifts))
    return _typed(RrsConfig, agent, "agent", shifts=tuple(s + b for s in base))


OFFLINE_EXTRA = ("tau_bcq", "behavior_epochs")


def _offline(agent: dict) -> OfflineConfig:
    return _typed(OfflineConfig, {k: v for k, v in agent.items() if k not in OFFLINE_EXTRA}, "agent")


def agent_config(cfg: ExperimentConfig, b: float):
    """Typed agent config for one shift."""
    if cfg.kind == "tabular":
        return _tabular(cfg.agent, b)
    if cfg.kind in ("dqn", "dqn+rnd"):
        return _dqn(cfg.agent, b, cfg.kind == "dqn+rnd")
    if cfg.kind == "rrs":
        return _rrs(cfg.agent, b)
    return _offline(cfg.agent)


def from_dict(raw: dict) -> ExperimentConfig:
    unknown = set(raw) - _TOP
    if unknown:
        raise ConfigError(f"unknown top-level field(s) {sorted(unknown)}")
    for key in ("id", "kind", "env", "episodes", "seeds"):
        if key not in raw:
            raise ConfigError(f"{key}: missing")
    if not isinstance(raw["env"], dict):
        raise ConfigError("env: must be a table")
    return ExperimentConfig(
        id=raw["id"],
        kind=raw["kind"],
        env=dict(raw["env"]),
        episodes=raw["episodes"],
        seeds=tuple(int(s) for s in raw["seeds"]),
        shifts=tuple(float(b) for b in raw.get("shifts", [0.0])),
        agent=copy.deepcopy(raw.get("agent", {})),
        dataset=dict(raw.get("dataset", {})),
        sweep=dict(raw.get("sweep", {})),
        out_dir=str(raw.get("out_dir", "runs")),
    )


def load(path) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return from_dict(raw)


def _set_dotted(d: dict, key: str, value) -> None:
    parts = key.split(".")
    for p in parts[:-1]:
        d = d.setdefault(p, {})
    d[parts[-1]] = value


def expand_sweep(cfg: ExperimentConfig) -> list[ExperimentConfig]:
    """Cross product over the ``[sweep]`` table; each variant gets a suffixed id."""
    if not cfg.sweep:
        return [cfg]
    keys = sorted(cfg.sweep)
    out = []
    for i, values in enumerate(itertools.product(*(cfg.sweep[k] for k in keys))):
        raw = dataclasses.asdict(cfg)
        raw["sweep"] = {}
        for k, v in zip(keys, values):
            if k.split(".")[0] not in ("agent", "env", "dataset") and k not in ("episodes", "shifts"):
                raise ConfigError(f"sweep.{k}: only agent.*, env.*, dataset.*, episodes or shifts can be swept")
            _set_dotted(raw, k, v)
        raw["id"] = f"{cfg.id}-{i}"
        raw["out_dir"] = str(Path(cfg.out_dir) / raw["id"])
        out.append(from_dict(raw))
    return out
