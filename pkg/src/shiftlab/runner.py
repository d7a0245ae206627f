"""Execute experiment configs: one CSV per (seed, shift) run plus a manifest."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from shiftlab import config as config_mod
from shiftlab.config import ExperimentConfig, agent_config
from shiftlab.curves import LearningCurve
from shiftlab.dqn import run_dqn
from shiftlab.envs import make_env
from shiftlab.offline import (
    OfflineDataset,
    RandomPolicy,
    evaluate_gap,
    fit_behavior,
    generate_dataset,
    mixed_dataset,
    train_offline,
)
from shiftlab.rrs import run_rrs
from shiftlab.shift import ShiftSpec
from shiftlab.tabular import run_tabular

CSV_HEADER = ("run_id", "seed", "env", "algo", "shift_b", "step", "episode", "metric", "value")


def run_id(cfg: ExperimentConfig, seed: int, b: float) -> str:
    return f"{cfg.id}/s{seed}/b{b:g}"


def series_of(rid: str) -> str:
    """Experiment id part of a run id."""
    return rid.rsplit("/", 2)[0]


def csv_name(cfg: ExperimentConfig, seed: int, b: float) -> str:
    return f"{cfg.id}_s{seed}_b{b:g}.csv"


def fmt(x: float) -> str:
    """Shortest round-trip float text, so equal runs give equal bytes."""
    return repr(float(x))


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w", newline="") as f:
        f.write(text)
    os.replace(tmp, path)


def curve_csv(curve: LearningCurve, cfg: ExperimentConfig, seed: int, b: float) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    rid = run_id(cfg, seed, b)
    for p in curve.points:
        w.writerow((rid, seed, cfg.env["name"], cfg.kind, fmt(b), p.step, p.episode, p.metric, fmt(p.value)))
    return buf.getvalue()


# ---------------------------------------------------------------- offline data


def _dataset_settings(cfg: ExperimentConfig) -> dict:
    d = {"n": 10000, "behavior": "mixed", "gamma": 0.99, "dqn_episodes": 30, "epsilon": 0.3, "n_rollouts": 200}
    d.update(cfg.dataset)
    return d


def build_dataset(cfg: ExperimentConfig, seed: int) -> OfflineDataset:
    ds = _dataset_settings(cfg)
    if "path" in ds:
        return OfflineDataset.load(str(ds["path"]).format(seed=seed))
    env = make_env(cfg.env)
    if ds["behavior"] == "mixed":
        return mixed_dataset(env, ds["n"], seed, ds["gamma"], ds["dqn_episodes"], ds["epsilon"])
    if ds["behavior"] == "random":
        return generate_dataset(env, RandomPolicy(env.n_actions), ds["n"], seed, ds["gamma"])
    raise config_mod.ConfigError(f"dataset.behavior: unknown logging policy {ds['behavior']!r}")


_DATA_CACHE: dict[tuple[str, int], tuple] = {}


def _cached_dataset(cfg: ExperimentConfig, seed: int):
    """Dataset and behaviour model shared by all shifts of one seed."""
    key = (cfg.config_hash(), seed)
    if key in _DATA_CACHE:
        return _DATA_CACHE[key]
    if len(_DATA_CACHE) >= 4:
        _DATA_CACHE.pop(next(iter(_DATA_CACHE)))
    data = build_dataset(cfg, seed)
    extra = cfg.agent
    n_actions = make_env(cfg.env).n_actions
    behavior = fit_behavior(
        data,
        n_actions,
        seed,
        tau_bcq=extra.get("tau_bcq", 0.3),
        epochs=extra.get("behavior_epochs", 10),
    )
    _DATA_CACHE[key] = (data, behavior)
    return data, behavior


def dataset_path(cfg: ExperimentConfig, seed: int) -> Path:
    return Path(cfg.out_dir) / f"{cfg.id}_dataset_s{seed}.jsonl"


def _run_offline(cfg: ExperimentConfig, seed: int, b: float) -> LearningCurve:
    data, behavior = _cached_dataset(cfg, seed)
    ocfg = agent_config(cfg, b)
    shift = ShiftSpec(b)
    result = train_offline(data, shift, behavior, cfg.episodes, ocfg, seed)
    curve = LearningCurve(seed=seed)
    for epoch, loss in enumerate(result.losses, start=1):
        curve.add(epoch, epoch, "loss", loss)
    env = make_env(cfg.env)
    n_rollouts = _dataset_settings(cfg)["n_rollouts"]
    report = evaluate_gap(env, result.qnet, result.policy, data, shift, ocfg.gamma, n_rollouts, seed)
    for name in ("estimate", "mc_return", "gap", "success_rate"):
        curve.add(cfg.episodes, cfg.episodes, name, getattr(report, name))
    curve.artifacts.update(result=result, report=report)
    return curve


# ---------------------------------------------------------------- runs


def run_one(cfg: ExperimentConfig, seed: int, b: float) -> LearningCurve:
    """One (seed, shift) run of the experiment."""
    if cfg.kind == "offline":
        curve = _run_offline(cfg, seed, b)
    else:
        env = make_env(cfg.env)
        agent = agent_config(cfg, b)
        if cfg.kind == "tabular":
            curve = run_tabular(env, replace(agent, episodes=cfg.episodes), seed)
        elif cfg.kind in ("dqn", "dqn+rnd"):
            curve = run_dqn(env, agent, seed, cfg.episodes)
        else:
            curve = run_rrs(env, agent, seed, cfg.episodes)
    curve.run_id = run_id(cfg, seed, b)
    return curve


@dataclass
class RunRecord:
    run_id: str
    seed: int
    shift_b: float
    path: str
    status: str
    seconds: float
    error: str = ""


def _job(cfg: ExperimentConfig, seed: int, b: float) -> RunRecord:
    path = Path(cfg.out_dir) / csv_name(cfg, seed, b)
    start = time.perf_counter()
    try:
        curve = run_one(cfg, seed, b)
        write_atomic(path, curve_csv(curve, cfg, seed, b))
        status, err = "ok", ""
    except Exception as exc:  # a failed run is recorded, the rest continue
        status, err = "failed", "".join(traceback.format_exception_only(type(exc), exc)).strip()
    return RunRecord(run_id(cfg, seed, b), seed, b, str(path), status, time.perf_counter() - start, err)


def threads() -> int:
    try:
        return max(1, int(os.environ.get("SHIFTLAB_THREADS", "1")))
    except ValueError:
        return 1


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> dict:
    """Run every (seed, shift) pair; write the CSVs and ``<id>_manifest.json``."""
    workers = threads() if workers is None else workers
    jobs = [(cfg, seed, b) for seed in cfg.seeds for b in cfg.shifts]
    start = time.perf_counter()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_job, *zip(*jobs)))
    else:
        records = [_job(*j) for j in jobs]
    manifest = {
        "id": cfg.id,
        "kind": cfg.kind,
        "config_hash": cfg.config_hash(),
        "wall_clock_seconds": time.perf_counter() - start,
        "failed": sum(r.status != "ok" for r in records),
        "runs": [r.__dict__ for r in records],
    }
    write_atomic(Path(cfg.out_dir) / f"{cfg.id}_manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def write_datasets(cfg: ExperimentConfig) -> list[Path]:
    """Generate and save one dataset per seed (``gen-dataset``)."""
    paths = []
    for seed in cfg.seeds:
        path = dataset_path(cfg, seed)
        path.parent.mkdir(parents=True, exist_ok=True)
        build_dataset(cfg, seed).save(path)
        paths.append(path)
    return paths
