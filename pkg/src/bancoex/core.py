"""Unit conversions, the discrete power grid and seeded random streams."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

# sanity bounds for powers read from configuration
DBM_SANITY_RANGE = (-80.0, 20.0)


class ConfigurationError(ValueError):
    """Invalid configuration value or combination of values."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


def dbm_to_mw(p_dbm):
    """Convert decibel-milliwatts to milliwatts (scalar or array)."""
    p = np.asarray(p_dbm, dtype=float)
    if not np.all(np.isfinite(p)):
        raise DomainError("power in dBm must be finite")
    out = 10.0 ** (p / 10.0)
    return float(out) if out.ndim == 0 else out


def mw_to_dbm(p_mw):
    """Convert milliwatts to decibel-milliwatts (scalar or array)."""
    p = np.asarray(p_mw, dtype=float)
    if np.any(~(p > 0)):
        raise DomainError("power in mW must be positive")
    out = 10.0 * np.log10(p)
    return float(out) if out.ndim == 0 else out


def db_to_linear(x_db):
    x = np.asarray(x_db, dtype=float)
    out = 10.0 ** (x / 10.0)
    return float(out) if out.ndim == 0 else out


def linear_to_db(x):
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError("linear ratio must be positive")
    out = 10.0 * np.log10(x)
    return float(out) if out.ndim == 0 else out


def check_dbm(value: float, name: str = "power") -> float:
    """Validate a configured dBm value against the sanity bounds."""
    value = float(value)
    lo, hi = DBM_SANITY_RANGE
    if not np.isfinite(value) or not lo <= value <= hi:
        raise ConfigurationError(f"{name}={value} dBm outside [{lo}, {hi}]")
    return value


@dataclass(frozen=True)
class PowerGrid:
    """Uniformly spaced set of transmit powers, ascending, in dBm."""

    min_dbm: float
    max_dbm: float
    step_db: float
    levels_dbm: np.ndarray = field(repr=False, compare=False)

    @property
    def levels_mw(self) -> np.ndarray:
        return dbm_to_mw(self.levels_dbm)

    def __len__(self) -> int:
        return len(self.levels_dbm)

    def nearest_index(self, p_dbm):
        """Index of the grid level nearest to ``p_dbm``, saturating at the ends.

        Exact half-way points round toward the lower level.
        """
        x = (np.asarray(p_dbm, dtype=float) - self.min_dbm) / self.step_db
        idx = np.ceil(x - 0.5 - 1e-9).astype(int)
        idx = np.clip(idx, 0, len(self.levels_dbm) - 1)
        return int(idx) if idx.ndim == 0 else idx

    def snap(self, p_dbm):
        """Clamp ``p_dbm`` to the nearest grid level."""
        idx = self.nearest_index(p_dbm)
        out = self.levels_dbm[idx]
        return float(out) if np.ndim(out) == 0 else out

    def index_of(self, p_dbm: float) -> int:
        """Index of an on-grid level; raises if ``p_dbm`` is off the grid."""
        idx = self.nearest_index(p_dbm)
        if abs(self.levels_dbm[idx] - p_dbm) > 1e-9:
            raise ConfigurationError(f"{p_dbm} dBm is not a level of {self}")
        return idx

    def coarsen(self, factor: int) -> "PowerGrid":
        """Keep every ``factor``-th level (endpoints kept when divisible)."""
        return make_power_grid(self.min_dbm, self.max_dbm, self.step_db * factor)


def make_power_grid(min_dbm: float, max_dbm: float, step_db: float) -> PowerGrid:
    if not (np.isfinite(min_dbm) and np.isfinite(max_dbm)) or min_dbm >= max_dbm:
        raise ConfigurationError(f"grid needs min < max, got [{min_dbm}, {max_dbm}]")
    if not step_db > 0:
        raise ConfigurationError(f"grid step must be positive, got {step_db}")
    n_steps = (max_dbm - min_dbm) / step_db
    if abs(n_steps - round(n_steps)) > 1e-9:
        raise ConfigurationError(
            f"range [{min_dbm}, {max_dbm}] is not divisible by step {step_db} dB"
        )
    n = int(round(n_steps)) + 1
    levels = min_dbm + step_db * np.arange(n)
    levels[-1] = max_dbm
    levels.setflags(write=False)
    return PowerGrid(float(min_dbm), float(max_dbm), float(step_db), levels)


DEFAULT_GRID = make_power_grid(-30.0, 0.0, 1.0)


def _label_words(stream_id: tuple) -> list[int]:
    digest = hashlib.sha256(repr(stream_id).encode()).digest()
    return [int.from_bytes(digest[k:k + 4], "little") for k in range(0, 16, 4)]


class RngStream:
    """A reproducible random stream keyed by ``(seed, stream_id)``.

    ``stream_id`` is a tuple of labels (strings/ints).  Substreams are derived
    with :meth:`child`, so any entity's draws depend only on its own label and
    never on the order in which other entities were simulated.

    >>> a = RngStream(7, ("game", 1)).normal(size=3)
    >>> b = RngStream(7, ("game", 1)).normal(size=3)
    >>> bool((a == b).all())
    True
    """

    def __init__(self, seed: int, stream_id: tuple = ()):
        if not 0 <= int(seed) < 2**64:
            raise ConfigurationError("seed must be an unsigned 64-bit integer")
        self.seed = int(seed)
        self.stream_id = tuple(stream_id)
        ss = np.random.SeedSequence(self.seed, spawn_key=_label_words(self.stream_id))
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def child(self, *labels) -> "RngStream":
        return RngStream(self.seed, self.stream_id + tuple(labels))

    def __getattr__(self, name):
        # delegate draws (normal, gamma, choice, ...) to the numpy generator
        if name == "generator" or name.startswith("__"):
            raise AttributeError(name)
        return getattr(self.generator, name)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id!r})"
