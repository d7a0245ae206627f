"""Median and 25/75% quantile bands across seeds."""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from shiftlab.runner import CSV_HEADER, fmt, series_of, write_atomic

BAND_HEADER = ("series", "env", "algo", "shift_b", "metric", "x", "n", "median", "q25", "q75")


class AlignmentError(ValueError):
    """Runs of one series report a metric at different x values."""


@dataclass(frozen=True)
class BandPoint:
    x: int
    n: int
    median: float
    q25: float
    q75: float


def quantile_band(values) -> tuple[float, float, float]:
    """(median, q25, q75) with linear interpolation between order statistics."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("no values")
    q25, med, q75 = np.quantile(v, [0.25, 0.5, 0.75], method="linear")
    return float(med), float(q25), float(q75)


SeriesKey = tuple[str, str, str, str, str]  # series, env, algo, shift_b, metric


def read_runs(paths) -> dict[SeriesKey, dict[str, list[tuple[int, float]]]]:
    """{series key: {file: [(episode, value), ...]}} from run CSVs."""
    grouped: dict[SeriesKey, dict[str, list[tuple[int, float]]]] = defaultdict(dict)
    for path in sorted(str(p) for p in paths):
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            if tuple(reader.fieldnames or ()) != CSV_HEADER:
                raise ValueError(f"{path}: not a run CSV (header {reader.fieldnames})")
            for row in reader:
                key = (series_of(row["run_id"]), row["env"], row["algo"], row["shift_b"], row["metric"])
                grouped[key].setdefault(path, []).append((int(row["episode"]), float(row["value"])))
    return grouped


def aggregate_runs(paths) -> dict[SeriesKey, list[BandPoint]]:
    paths = list(paths)
    if not paths:
        raise ValueError("need at least one run CSV")
    out = {}
    for key, per_file in sorted(read_runs(paths).items()):
        grids = {f: tuple(x for x, _ in pts) for f, pts in per_file.items()}
        first = next(iter(grids))
        reference = grids[first]
        bad = [f for f, g in grids.items() if g != reference]
        if bad:
            raise AlignmentError(
                f"metric {key[4]!r} of series {key[0]!r}: x grid of {', '.join(bad)} differs from {first}"
            )
        stacked = np.array([[v for _, v in pts] for pts in per_file.values()])
        band = []
        for j, x in enumerate(reference):
            med, q25, q75 = quantile_band(stacked[:, j])
            band.append(BandPoint(x, stacked.shape[0], med, q25, q75))
        out[key] = band
    return out


def band_csv(bands: dict[SeriesKey, list[BandPoint]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BAND_HEADER)
    for key in sorted(bands):
        for p in bands[key]:
            w.writerow((*key, p.x, p.n, fmt(p.median), fmt(p.q25), fmt(p.q75)))
    return buf.getvalue()


def read_bands(paths) -> dict[SeriesKey, list[BandPoint]]:
    bands: dict[SeriesKey, list[BandPoint]] = defaultdict(list)
    for path in paths:
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            if tuple(reader.fieldnames or ()) != BAND_HEADER:
                raise ValueError(f"{path}: not an aggregate CSV")
            for r in reader:
                key = (r["series"], r["env"], r["algo"], r["shift_b"], r["metric"])
                bands[key].append(BandPoint(int(r["x"]), int(r["n"]), float(r["median"]), float(r["q25"]), float(r["q75"])))
    return dict(bands)


def aggregate_files(paths, out: Path) -> dict[SeriesKey, list[BandPoint]]:
    bands = aggregate_runs(paths)
    write_atomic(Path(out), band_csv(bands))
    return bands
