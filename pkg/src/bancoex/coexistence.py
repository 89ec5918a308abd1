"""Unsynchronised inter-BAN TDMA: how many BANs overlap in a stage.

Each BAN starts its superframe uniformly at random over ``N_c`` slots, so any
BAN overlaps a given one with probability ``2/N_c``.  The number ``m`` of
concurrently transmitting BANs out of ``M`` is then binomial; ``m = 0`` is
excluded and the distribution renormalised over ``m >= 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import comb

from .core import ConfigurationError, RngStream

MODES = ("stochastic", "fixed_m")


@dataclass(frozen=True)
class CoexistenceParams:
    total_bans: int = 8
    channels: int = 4
    mode: str = "stochastic"
    fixed_m: int | None = None

    def __post_init__(self):
        if self.total_bans < 1:
            raise ConfigurationError("total number of BANs M must be >= 1")
        if self.channels < 2:
            raise ConfigurationError(
                f"number of orthogonal channels N_c={self.channels} violates N_c >= 2"
            )
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "fixed_m" and not (
            self.fixed_m is not None and 1 <= self.fixed_m <= self.total_bans
        ):
            raise ConfigurationError(
                f"fixed_m must lie in [1, {self.total_bans}], got {self.fixed_m}"
            )


def overlap_probability(channels: int) -> float:
    if channels < 2:
        raise ConfigurationError(f"N_c={channels} violates N_c >= 2")
    return 2.0 / channels


def active_count_pmf_unconditioned(total_bans: int, channels: int) -> np.ndarray:
    """Binomial ``Pr(m)`` for ``m = 0..M`` (index = m)."""
    q = overlap_probability(channels)
    m = np.arange(total_bans + 1)
    return comb(total_bans, m, exact=False) * q ** m * (1.0 - q) ** (total_bans - m)


def active_count_distribution(total_bans: int, channels: int) -> np.ndarray:
    """``Pr(m | m >= 1)`` for ``m = 1..M``; entry ``k`` is ``Pr(m = k + 1)``."""
    if total_bans < 1:
        raise ConfigurationError("M must be >= 1")
    pmf = active_count_pmf_unconditioned(total_bans, channels)[1:]
    return pmf / pmf.sum()


def sample_active_set(params: CoexistenceParams, rng: RngStream) -> np.ndarray:
    """Sorted indices of the BANs transmitting concurrently (never empty)."""
    M = params.total_bans
    if params.mode == "fixed_m":
        m = params.fixed_m
    else:
        probs = active_count_distribution(M, params.channels)
        m = int(rng.choice(np.arange(1, M + 1), p=probs))
    return np.sort(rng.choice(M, size=m, replace=False))
