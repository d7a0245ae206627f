"""Affine reward shifts and the value offsets they induce.

A per-step shift ``r' = k*r + b`` moves every optimal action value to
``k*Q + b/(1-gamma)``. Everything here is a pure function of floats or
numpy arrays so agents, tests and the ``verify`` command can share it.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ShiftSpec:
    """Reward transform ``r -> k*r + b``. Agents always use ``k == 1``."""

    b: float = 0.0
    k: float = 1.0

    def __post_init__(self) -> None:
        if not (self.k > 0 and math.isfinite(self.k)):
            raise ValueError(f"scale k must be positive and finite, got {self.k!r}")
        if not math.isfinite(self.b):
            raise ValueError(f"bias b must be finite, got {self.b!r}")

    def apply(self, reward):
        return self.k * reward + self.b


@dataclass(frozen=True)
class DiscountedOffset:
    gamma: float
    offset: float

    @classmethod
    def of(cls, shift: ShiftSpec, gamma: float) -> "DiscountedOffset":
        return cls(gamma=gamma, offset=offset_of(shift, gamma))


@dataclass(frozen=True)
class OfuWeights:
    """Mixing weight between a conservative (b_plus) and optimistic (b_minus) critic."""

    beta: float
    b_plus: float
    b_minus: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta!r}")
        if not self.b_plus > 0:
            raise ValueError(f"b_plus must be > 0, got {self.b_plus!r}")
        if not self.b_minus < 0:
            raise ValueError(f"b_minus must be < 0, got {self.b_minus!r}")


def _check_gamma(gamma: float) -> None:
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"discount must lie in [0, 1), got {gamma!r}")


def offset_of(shift: ShiftSpec, gamma: float) -> float:
    """Uniform change ``b/(1-gamma)`` of optimal action values under ``shift``."""
    _check_gamma(gamma)
    return shift.b / (1.0 - gamma)


def debias(q_shifted, shift: ShiftSpec, gamma: float):
    """Map a value learned under ``shift`` back to the raw reward scale."""
    return q_shifted - offset_of(shift, gamma)


def debias_lower(q_shifted, shift: ShiftSpec, gamma: float):
    """Lower-bound estimate from a critic trained with a positive shift.

    The formula does not depend on the sign of ``b``; offline evaluation also
    uses it for the unshifted and negatively shifted ablations.
    """
    return q_shifted - offset_of(shift, gamma)


def debias_upper(q_shifted, shift: ShiftSpec, gamma: float):
    """Upper-bound estimate from a critic trained with a negative shift."""
    return q_shifted - offset_of(shift, gamma)


def combine_constants(w: OfuWeights) -> float:
    """The single shift ``(1-beta)*b_plus + beta*b_minus`` equivalent to mixing."""
    return (1.0 - w.beta) * w.b_plus + w.beta * w.b_minus


def ofu_combine(q_plus, q_minus, w: OfuWeights, gamma: float):
    _check_gamma(gamma)
    return (
        (1.0 - w.beta) * q_plus
        + w.beta * q_minus
        - combine_constants(w) / (1.0 - gamma)
    )


def gradient_descent_sequence(q0: float, target: float, eta: float, steps: int) -> np.ndarray:
    """Scalar MSE regression ``q <- q - 2*eta*(q - target)``; returns q_0..q_steps."""
    out = np.empty(steps + 1)
    q = float(q0)
    out[0] = q
    for t in range(1, steps + 1):
        q = q - 2.0 * eta * (q - target)
        out[t] = q
    return out


def verify_proposition1(
    q0: float,
    q_star: float,
    eta: float,
    steps: int,
    w: OfuWeights,
    gamma: float = 0.0,
) -> float:
    """Max over time of ``|(1-beta)*err_plus + beta*err_minus - err_combined|``.

    Three scalar estimators start from the same ``q0`` and regress onto the
    optimal value shifted by ``b_plus``, ``b_minus`` and the combined constant.
    Each error is measured against its own shifted target. The mixture of
    the first two errors equals the third exactly in real arithmetic.
    """
    if eta >= 0.5:
        warnings.warn(f"eta={eta} >= 0.5: the regression is not a contraction", stacklevel=2)
    _check_gamma(gamma)
    c_r = combine_constants(w)
    errs = []
    for b in (w.b_plus, w.b_minus, c_r):
        target = q_star + b / (1.0 - gamma)
        errs.append(gradient_descent_sequence(q0, target, eta, steps) - target)
    mixed = (1.0 - w.beta) * errs[0] + w.beta * errs[1]
    return float(np.max(np.abs(mixed - errs[2])))


def argmax_set(q_values) -> frozenset[int]:
    q = np.asarray(q_values, dtype=float)
    if q.ndim != 1 or q.size == 0:
        raise ValueError("expected a non-empty 1-d vector of action values")
    return frozenset(np.flatnonzero(q == q.max()).tolist())


def argmax_invariance_check(q_values, shift: ShiftSpec, gamma: float) -> bool:
    """True iff the maximiser set survives ``q -> k*q + b/(1-gamma)``.

    Exact comparison: in floating point a large offset can merge two values
    that differ only in their last few bits, which this check will report.
    """
    q = np.asarray(q_values, dtype=float)
    return argmax_set(q) == argmax_set(shift.k * q + offset_of(shift, gamma))


def dpg_linear_update(theta: float, states, action_grad, eta: float) -> float:
    """One deterministic-policy-gradient ascent step for ``mu(s) = theta*s``.

    ``action_grad(s, a)`` returns dQ/da; dmu/dtheta is ``s``.
    """
    s = np.asarray(states, dtype=float)
    a = theta * s
    return theta + eta * float(np.mean(action_grad(s, a) * s))


def verify_dpg_scaling(
    theta: float,
    states,
    curvature: float,
    slope: float,
    shift: ShiftSpec,
    gamma: float,
    eta: float,
) -> float:
    """Gap between the unscaled update and the k-scaled update at rate eta/k.

    The critic is the quadratic ``Q(s, a) = -curvature*(a - slope*s)**2``;
    its shifted counterpart is ``k*Q + b/(1-gamma)``, whose additive part
    has no action gradient.
    """
    _check_gamma(gamma)

    def grad(s, a):
        return -2.0 * curvature * (a - slope * s)

    def grad_scaled(s, a):
        return shift.k * grad(s, a)

    plain = dpg_linear_update(theta, states, grad, eta)
    scaled = dpg_linear_update(theta, states, grad_scaled, eta / shift.k)
    return abs(plain - scaled)
