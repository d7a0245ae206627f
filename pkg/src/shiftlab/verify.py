"""Property suite behind ``shiftlab verify``.

Each check returns the largest discrepancy it saw and the tolerance it
allows. Shift helpers are looked up through the ``shift`` module at call
time, so a patched helper is what gets checked.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from shiftlab import mlp, shift
from shiftlab.envs import GridMaze, GridMazeSpec
from shiftlab.explore import EpsilonSchedule
from shiftlab.shift import OfuWeights, ShiftSpec
from shiftlab.tabular import EpsilonGreedy, TabularConfig, offset_equivalence_check


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    discrepancy: float
    tolerance: float
    seconds: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: max discrepancy {self.discrepancy:.3e} (tol {self.tolerance:.0e}, {self.seconds:.2f}s)"


def check_shifted_regression_mixture(draws: int = 1000, seed: int = 0) -> float:
    """Mixture of shifted regression errors equals the error under the mixed shift."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(draws):
        w = OfuWeights(rng.uniform(0, 1), rng.uniform(0, 2), rng.uniform(-2, 0))
        gap = shift.verify_proposition1(
            rng.normal(0, 5), rng.normal(0, 5), rng.uniform(1e-3, 0.49), int(rng.integers(1, 200)), w
        )
        worst = max(worst, gap)
    return worst


def check_offset_roundtrip(draws: int = 2000, seed: int = 1) -> float:
    """debias_lower undoes the discounted offset a shifted optimum carries."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(draws):
        spec = ShiftSpec(rng.uniform(-10, 10))
        gamma = rng.uniform(0, 0.999)
        q = rng.normal(0, 10, size=4)
        shifted = q + spec.b / (1.0 - gamma)
        back = shift.debias_lower(shifted, spec, gamma)
        worst = max(worst, float(np.max(np.abs(back - q)) / max(1.0, abs(spec.b) / (1.0 - gamma))))
    return worst


def check_ofu_constant(draws: int = 2000, seed: int = 2) -> float:
    """Debiasing the OFU mixture by c_r leaves the same-weight mixture of the raw values."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(draws):
        w = OfuWeights(rng.uniform(0, 1), rng.uniform(0, 2), rng.uniform(-2, 0))
        gamma = rng.uniform(0, 0.99)
        q_plus, q_minus = rng.normal(0, 3, size=(2, 5))
        raw = (1 - w.beta) * q_plus + w.beta * q_minus
        combined = shift.ofu_combine(
            q_plus + w.b_plus / (1 - gamma), q_minus + w.b_minus / (1 - gamma), w, gamma
        )
        worst = max(worst, float(np.max(np.abs(combined - raw))))
    return worst


def check_tabular_equivalence(episodes: int = 100) -> float:
    """Shifted learner from q0 tracks an unshifted learner from q0 - b/(1-gamma)."""
    worst = 0.0
    for gamma in (0.9, 0.99):
        for b in (-1.0, -0.5, 0.5, 1.0, 8.0):
            cfg = TabularConfig(
                alpha=0.5,
                gamma=gamma,
                exploration=EpsilonGreedy(EpsilonSchedule()),
                episodes=episodes,
                continuing=True,
            )
            report = offset_equivalence_check(GridMaze(GridMazeSpec(5)), cfg, seed=0, probe_b=b)
            worst = max(worst, report.max_discrepancy)
    return worst


def check_argmax(draws: int = 10_000, seed: int = 3) -> float:
    """Fraction of random q-vectors whose maximiser set moves under a shift (must be 0)."""
    rng = np.random.default_rng(seed)
    moved = 0
    for _ in range(draws):
        q = rng.normal(0, 1, size=int(rng.integers(2, 10)))
        spec = ShiftSpec(rng.uniform(-5, 5), rng.uniform(0.1, 10))
        moved += not shift.argmax_invariance_check(q, spec, rng.uniform(0, 0.99))
    return moved / draws


def check_dpg_scaling(draws: int = 100, seed: int = 4) -> float:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(draws):
        gap = shift.verify_dpg_scaling(
            rng.normal(),
            rng.normal(size=16),
            rng.uniform(0.1, 3),
            rng.normal(),
            ShiftSpec(rng.uniform(-2, 2), rng.uniform(0.25, 4)),
            rng.uniform(0, 0.99),
            rng.uniform(1e-3, 0.1),
        )
        worst = max(worst, gap)
    return worst


def gradient_relative_error(spec: mlp.MlpSpec, batch: int, rng: np.random.Generator) -> float:
    params = mlp.init(spec, rng)
    x = rng.normal(size=(batch, spec.n_in))
    y = rng.normal(size=(batch, spec.n_out))
    analytic, _ = mlp.backward(params, x, y)
    numeric = mlp.numerical_gradient(params, x, y)
    return float(np.linalg.norm(analytic - numeric) / max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-12))


def random_mlp_spec(rng: np.random.Generator) -> mlp.MlpSpec:
    depth = int(rng.integers(1, 4))
    widths = (int(rng.integers(1, 6)), *(int(rng.integers(2, 9)) for _ in range(depth)), int(rng.integers(1, 4)))
    output = ("linear", "sigmoid", "scaled-tanh")[int(rng.integers(3))]
    # a full-size output layer keeps the gradient well above finite-difference noise
    return mlp.MlpSpec(
        widths,
        hidden=("relu", "tanh")[int(rng.integers(2))],
        output=output,
        output_gain=1.0,
        output_scale=float(rng.uniform(0.5, 2.0)),
    )


def check_gradients(configs: int = 20, seed: int = 5) -> float:
    rng = np.random.default_rng(seed)
    return max(gradient_relative_error(random_mlp_spec(rng), int(rng.integers(1, 6)), rng) for _ in range(configs))


def check_soft_update(steps: int = 200, seed: int = 6) -> float:
    """With the source frozen, target - source contracts by exactly (1 - tau) per step."""
    rng = np.random.default_rng(seed)
    spec = mlp.MlpSpec((3, 5, 2))
    source, target = mlp.init(spec, rng), mlp.init(spec, rng)
    tau = 0.005
    start = target.flat - source.flat
    worst = 0.0
    for t in range(1, steps + 1):
        mlp.soft_update(target, source, tau)
        worst = max(worst, float(np.max(np.abs(target.flat - source.flat - (1 - tau) ** t * start))))
    return worst


CHECKS: tuple[tuple[str, Callable[[], float], float], ...] = (
    ("mixture-of-shifted-regressions", check_shifted_regression_mixture, 1e-10),
    ("offset-round-trip", check_offset_roundtrip, 1e-12),
    ("ofu-constant", check_ofu_constant, 1e-10),
    ("tabular-offset-equivalence", check_tabular_equivalence, 1e-9),
    ("argmax-invariance", check_argmax, 0.0),
    ("dpg-scaling", check_dpg_scaling, 1e-10),
    ("mlp-gradient", check_gradients, 1e-4),
    ("soft-update-contraction", check_soft_update, 1e-10),
)


def run_checks(names=None) -> list[CheckResult]:
    results = []
    for name, fn, tol in CHECKS:
        if names is not None and name not in names:
            continue
        start = time.perf_counter()
        try:
            value = float(fn())
        except Exception:  # a crashing check is a failing check
            value = float("inf")
        passed = bool(np.isfinite(value) and value <= tol)
        results.append(CheckResult(name, passed, value, tol, time.perf_counter() - start))
    return results
