"""Per-BAN transmit power decision rules.

All rules see the same :class:`LinkObservation` of the last packet: the own
channel gain, the aggregate interference-plus-noise inferred from the
received power and SINR, and the last power/SINR.  None of them knows what
the other BANs will transmit next.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ConfigurationError, DomainError, PowerGrid, linear_to_db, mw_to_dbm
from .pdr_model import PdrModelParams, pdr_from_sinr

CONTROLLER_KINDS = ("game", "sah", "sinr_balance", "constant")


class CalibrationError(RuntimeError):
    """No utility weight in the search range meets the requested target."""


@dataclass(frozen=True)
class UtilityWeights:
    w: float = 1.0
    v: float = 4.0
    d: float = 1e-3

    def __post_init__(self):
        if not self.w >= 1.0:
            raise ConfigurationError(f"power exponent w={self.w} must be >= 1 for concavity")
        if not self.v > 0:
            raise ConfigurationError(f"pdr exponent v={self.v} must be positive")
        if not self.d > 0:
            raise ConfigurationError(f"weight d={self.d} must be positive")


@dataclass(frozen=True)
class LinkObservation:
    own_gain: float
    interference_plus_noise: float  # mW
    last_power: float  # mW
    last_sinr: float  # linear

    def __post_init__(self):
        if not (self.own_gain > 0 and self.interference_plus_noise > 0
                and self.last_power > 0 and self.last_sinr > 0):
            raise DomainError("link observation fields must be positive")

    @classmethod
    def from_packet(cls, own_gain: float, power_mw: float, sinr: float) -> "LinkObservation":
        """Infer interference-plus-noise as received power over SINR."""
        return cls(own_gain, power_mw * own_gain / sinr, power_mw, sinr)


@dataclass(frozen=True)
class Controller:
    """Which rule a BAN runs, plus its parameters."""

    kind: str = "game"
    constant_dbm: float | None = None
    relax: float = 0.2

    def __post_init__(self):
        if self.kind not in CONTROLLER_KINDS:
            raise ConfigurationError(f"controller must be one of {CONTROLLER_KINDS}, got {self.kind!r}")
        if self.kind == "constant" and self.constant_dbm is None:
            raise ConfigurationError("constant controller needs constant_dbm")
        if not 0.0 < self.relax <= 1.0:
            raise ConfigurationError(f"relax={self.relax} must lie in (0, 1]")

    @property
    def label(self) -> str:
        if self.kind == "constant":
            return f"constant({self.constant_dbm:g} dBm)"
        if self.kind == "sinr_balance":
            return f"sinr_balance(relax={self.relax:g})"
        return self.kind


def utility(p_mw, pdr, weights: UtilityWeights):
    """``-p**w - d / pdr**v`` with ``p`` in milliwatts."""
    pdr = np.asarray(pdr, dtype=float)
    if np.any(~(pdr > 0)):
        raise DomainError("pdr must be positive")
    out = -np.asarray(p_mw, dtype=float) ** weights.w - weights.d / pdr ** weights.v
    return float(out) if np.ndim(out) == 0 else out


def best_response_index(own_gain, interference_plus_noise, grid: PowerGrid,
                        weights: UtilityWeights, pdr_params: PdrModelParams):
    """Vectorised best response: grid index maximising predicted utility.

    Interference is assumed to stay at its last observed level.  Ties go to
    the lowest power (``argmax`` returns the first maximiser).
    """
    g = np.asarray(own_gain, dtype=float)
    ipn = np.asarray(interference_plus_noise, dtype=float)
    p = grid.levels_mw
    gamma = p * (g / ipn)[..., None]
    u = -p ** weights.w - weights.d / pdr_from_sinr(gamma, pdr_params) ** weights.v
    return np.argmax(u, axis=-1)


def game_best_response(obs: LinkObservation, grid: PowerGrid, weights: UtilityWeights,
                       pdr_params: PdrModelParams) -> float:
    idx = best_response_index(obs.own_gain, obs.interference_plus_noise, grid, weights, pdr_params)
    return float(grid.levels_dbm[idx])


def calibrate_weight(grid: PowerGrid, pdr_params: PdrModelParams, nominal_gain: float,
                     noise_mw: float, target: float, w: float = 1.0, v: float = 4.0,
                     lo: float = 1e-8, hi: float = 1e2, rel_resolution: float = 1e-3) -> float:
    """Smallest ``d`` whose interference-free best response reaches ``target``.

    Bisection in ``log d``; larger ``d`` never lowers the chosen power, so the
    predicate is monotone.
    """
    if not 0.0 < target < 1.0:
        raise DomainError("target PDR must lie in (0, 1)")

    def meets(d):
        idx = best_response_index(nominal_gain, noise_mw, grid, UtilityWeights(w, v, d), pdr_params)
        gamma = grid.levels_mw[idx] * nominal_gain / noise_mw
        return pdr_from_sinr(gamma, pdr_params) >= target

    if not meets(hi):
        best = pdr_from_sinr(grid.levels_mw[-1] * nominal_gain / noise_mw, pdr_params)
        raise CalibrationError(
            f"target pdr {target} unreachable: even d={hi:g} fails "
            f"(pdr at max power {grid.max_dbm:g} dBm is {best:.6g})"
        )
    if meets(lo):
        return lo
    a, b = math.log(lo), math.log(hi)
    while b - a > math.log1p(rel_resolution):
        mid = 0.5 * (a + b)
        if meets(math.exp(mid)):
            b = mid
        else:
            a = mid
    return math.exp(b)


def sinr_correction(last_power_dbm, last_sinr_db, target_sinr_db, relax, grid: PowerGrid):
    """Next power ``snap(p + relax * (target - sinr))`` in dBm (vectorised)."""
    return grid.snap(np.asarray(last_power_dbm) + relax * (target_sinr_db - np.asarray(last_sinr_db)))


def sample_and_hold_update(obs: LinkObservation, target_sinr: float, grid: PowerGrid) -> float:
    """Correct the last power by the full SINR deficit, in dB."""
    return sinr_balancing_update(obs, target_sinr, 1.0, grid)


def sinr_balancing_update(obs: LinkObservation, target_sinr: float, relax: float,
                          grid: PowerGrid) -> float:
    """Correct the last power by ``relax`` times the SINR deficit, in dB."""
    if not 0.0 < relax <= 1.0:
        raise DomainError(f"relax={relax} must lie in (0, 1]")
    return float(sinr_correction(mw_to_dbm(obs.last_power), linear_to_db(obs.last_sinr),
                                 linear_to_db(target_sinr), relax, grid))


def constant_power(controller: Controller, grid: PowerGrid) -> float:
    if controller.kind != "constant":
        raise ConfigurationError(f"{controller.label} is not a constant-power controller")
    level = controller.constant_dbm
    if not grid.min_dbm - 1e-9 <= level <= grid.max_dbm + 1e-9:
        raise ConfigurationError(
            f"constant power {level} dBm outside grid [{grid.min_dbm}, {grid.max_dbm}]"
        )
    return float(grid.levels_dbm[grid.index_of(level)])
