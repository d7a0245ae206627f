"""Reward-shifting laboratory for value-based reinforcement learning."""

from shiftlab.shift import (
    DiscountedOffset,
    OfuWeights,
    ShiftSpec,
    combine_constants,
    debias_lower,
    debias_upper,
    offset_of,
    ofu_combine,
)

__version__ = "0.1.0"

__all__ = [
    "DiscountedOffset",
    "OfuWeights",
    "ShiftSpec",
    "combine_constants",
    "debias_lower",
    "debias_upper",
    "offset_of",
    "ofu_combine",
]
