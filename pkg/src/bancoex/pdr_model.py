"""Packet delivery ratio as a compressed exponential of inverse SINR.

Two equivalent-looking parameterisations are carried:

* the compressed form ``exp(-(1/(gamma*a_c))**b_c)`` with ``a_c, b_c > 0``;
* the simplified form ``exp(a * gamma**b)`` with ``a, b < 0``.

Both are algebraically identical when ``a = -(1/a_c)**b_c`` and ``b = -b_c``.
The published constants for DPSK/BPSK were fitted separately for each form,
so :data:`BPSK` and :data:`DPSK` keep all four numbers and the simulator
evaluates the simplified form.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares

from .core import DomainError, db_to_linear

PDR_FLOOR = 1e-12
TARGET_PDR = 0.9


class FitError(RuntimeError):
    """Curve fit failed (degenerate input or no convergence)."""


@dataclass(frozen=True)
class PdrModelParams:
    a_c: float
    b_c: float
    a: float
    b: float
    modulation: str = "custom"

    def __post_init__(self):
        if not (self.a_c > 0 and self.b_c > 0):
            raise DomainError("a_c and b_c must be positive")
        if not (self.a < 0 and self.b < 0):
            raise DomainError("a and b must be negative")

    @classmethod
    def from_compressed(cls, a_c: float, b_c: float, modulation: str = "custom"):
        """Build params whose simplified constants are derived exactly."""
        return cls(a_c, b_c, -((1.0 / a_c) ** b_c), -b_c, modulation)

    @property
    def is_self_consistent(self) -> bool:
        derived = -((1.0 / self.a_c) ** self.b_c)
        return abs(derived - self.a) <= 1e-6 * abs(derived) and self.b == -self.b_c


# fitted constants for BCH(31,19) coded 256-byte packets
DPSK = PdrModelParams(0.230, 7.409, -337.2164, -7.4540, "DPSK")
BPSK = PdrModelParams(0.293, 6.358, -30.0512, -6.3470, "BPSK")
MODULATIONS = {"BPSK": BPSK, "DPSK": DPSK}


def params_for(modulation: str) -> PdrModelParams:
    try:
        return MODULATIONS[modulation.upper()]
    except KeyError:
        raise DomainError(f"unknown modulation {modulation!r}; use BPSK or DPSK") from None


def _positive_sinr(gamma):
    g = np.asarray(gamma, dtype=float)
    if np.any(~(g > 0)):
        raise DomainError("SINR must be positive (linear units)")
    return g


def pdr_from_sinr(gamma, params: PdrModelParams, clamp: bool = True):
    """``exp(a * gamma**b)`` for linear SINR ``gamma``.

    With ``clamp`` the result is limited to ``[PDR_FLOOR, 1]`` so the
    ``1/pdr**v`` utility term stays finite.
    """
    g = _positive_sinr(gamma)
    with np.errstate(over="ignore"):
        out = np.exp(params.a * g ** params.b)
    if clamp:
        out = np.clip(out, PDR_FLOOR, 1.0)
    return float(out) if out.ndim == 0 else out


def pdr_compressed(gamma, params: PdrModelParams):
    """Compressed-exponential form ``exp(-(1/(gamma*a_c))**b_c)`` (unclamped)."""
    g = _positive_sinr(gamma)
    with np.errstate(over="ignore"):
        out = np.exp(-((1.0 / (g * params.a_c)) ** params.b_c))
    return float(out) if out.ndim == 0 else out


def sinr_for_target_pdr(target: float, params: PdrModelParams) -> float:
    """Linear SINR at which :func:`pdr_from_sinr` equals ``target``."""
    if not 0.0 < target < 1.0:
        raise DomainError(f"target PDR must lie strictly inside (0, 1), got {target}")
    return (math.log(target) / params.a) ** (1.0 / params.b)


def fit_compressed_exponential(samples, max_iter: int = 500, xtol: float = 1e-10):
    """Least-squares fit of ``(a_c, b_c)`` to ``(sinr_db, pdr)`` samples.

    The fit runs on ``(log a_c, log b_c)`` so both stay positive; the start
    point comes from the linearisation ``log(-log pdr) = -b_c*log(gamma*a_c)``.

    Returns ``(params, rmse)`` where ``params`` has derived ``(a, b)``.
    """
    data = np.asarray(samples, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2 or len(data) < 4:
        raise FitError(f"need at least 4 (sinr_db, pdr) samples, got {len(data)}")
    sinr_db, pdr = data[:, 0], data[:, 1]
    if not np.all(np.isfinite(data)):
        raise FitError("samples contain non-finite values")
    if np.any((pdr < 0) | (pdr > 1)):
        raise FitError("pdr samples must lie in [0, 1]")
    if np.unique(sinr_db).size < 2:
        raise FitError("need at least two distinct SINR values")
    gamma = db_to_linear(sinr_db)

    # saturated samples (exactly 0 or 1) carry no slope information
    inner = (pdr > 0) & (pdr < 1)
    if np.unique(sinr_db[inner]).size < 2:
        raise FitError("need at least two distinct SINR values with 0 < pdr < 1")
    slope, intercept = np.polyfit(np.log(gamma[inner]), np.log(-np.log(pdr[inner])), 1)
    b_c0 = max(-slope, 1e-3)
    a_c0 = math.exp(-intercept / b_c0)

    def residuals(theta):
        a_c, b_c = np.exp(theta)
        with np.errstate(over="ignore"):
            return np.exp(-((1.0 / (gamma * a_c)) ** b_c)) - pdr

    res = least_squares(
        residuals,
        x0=np.log([a_c0, b_c0]),
        method="lm",
        xtol=xtol,
        ftol=1e-15,
        gtol=1e-15,
        max_nfev=max_iter * 3,
    )
    if res.status <= 0 or not np.all(np.isfinite(res.x)):
        raise FitError(
            f"fit did not converge after {res.nfev} evaluations: {res.message} "
            f"(last a_c={math.exp(res.x[0]):.4g}, b_c={math.exp(res.x[1]):.4g})"
        )
    a_c, b_c = np.exp(res.x)
    rmse = float(np.sqrt(np.mean(res.fun ** 2)))
    return PdrModelParams.from_compressed(float(a_c), float(b_c)), rmse


def read_pdr_samples(path) -> np.ndarray:
    """Read a ``sinr_db,pdr`` CSV table; errors name the offending line."""
    rows = []
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["sinr_db", "pdr"]:
            raise FitError(f"{path}:1: expected header 'sinr_db,pdr', got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise FitError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
            try:
                rows.append((float(row[0]), float(row[1])))
            except ValueError:
                raise FitError(f"{path}:{lineno}: malformed row {row!r}") from None
    return np.array(rows, dtype=float).reshape(-1, 2)
