"""Numerical checks of the stage game: derivatives, Nash equilibria, welfare.

A :class:`Scenario` freezes one stage: ``m`` active BANs, their channel
gains, the noise floor and the common utility.  Action profiles are arrays
of grid indices (``profile_dbm`` helpers convert).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelModel, interbody_gain, sample_onbody_gain
from .controllers import UtilityWeights
from .core import ConfigurationError, PowerGrid, RngStream, dbm_to_mw
from .pdr_model import PdrModelParams, pdr_from_sinr

WORK_BOUND = 10 ** 8
_CHUNK = 1 << 18


class SizeError(ConfigurationError):
    """Exhaustive enumeration would exceed the work bound."""


@dataclass(frozen=True)
class Scenario:
    own_gain: np.ndarray  # (m,)
    cross_gain: np.ndarray  # (m, m); [j, i] is sensor j -> hub i, zero diagonal
    noise_mw: float
    weights: UtilityWeights
    pdr_params: PdrModelParams
    grid: PowerGrid

    def __post_init__(self):
        g = np.asarray(self.own_gain, dtype=float)
        c = np.array(self.cross_gain, dtype=float)
        if g.ndim != 1 or g.size < 1:
            raise ConfigurationError("scenario needs at least one BAN")
        if c.shape != (g.size, g.size):
            raise ConfigurationError("cross_gain must be m x m")
        off = ~np.eye(g.size, dtype=bool)
        if np.any(g <= 0) or np.any(c[off] <= 0) or not self.noise_mw > 0:
            raise ConfigurationError("gains and noise must be positive")
        np.fill_diagonal(c, 0.0)
        object.__setattr__(self, "own_gain", g)
        object.__setattr__(self, "cross_gain", c)

    @property
    def m(self) -> int:
        return self.own_gain.size


def profile_mw(scenario: Scenario, profile) -> np.ndarray:
    return scenario.grid.levels_mw[np.asarray(profile, dtype=int)]


def profile_dbm(scenario: Scenario, profile) -> np.ndarray:
    return scenario.grid.levels_dbm[np.asarray(profile, dtype=int)]


def interference_plus_noise(scenario: Scenario, p_mw) -> np.ndarray:
    """``I_{-i} + sigma^2`` for every player (last axis indexes players)."""
    return np.asarray(p_mw) @ scenario.cross_gain + scenario.noise_mw


def _k(scenario: Scenario, i: int, profile) -> float:
    """SINR per milliwatt of own power for player ``i``."""
    ipn = interference_plus_noise(scenario, profile_mw(scenario, profile))
    return scenario.own_gain[i] / ipn[i]


def player_utility(p_i_mw, scenario: Scenario, i: int, profile) -> np.ndarray:
    """Player ``i``'s utility when it sends ``p_i_mw`` against ``profile``."""
    w = scenario.weights
    gamma = np.asarray(p_i_mw, dtype=float) * _k(scenario, i, profile)
    pdr = pdr_from_sinr(gamma, scenario.pdr_params)
    return -np.asarray(p_i_mw) ** w.w - w.d / pdr ** w.v


def utility_gradient(p_i_mw, scenario: Scenario, i: int, profile):
    """Closed-form ``dU_i/dp_i``.

    ``-w p^(w-1) + a b gamma^(b-1) (d v / pdr^v) (gamma / p)`` with
    ``gamma/p = |h_ii|^2 / I_{-i}``.
    """
    wt, prm = scenario.weights, scenario.pdr_params
    p = np.asarray(p_i_mw, dtype=float)
    k = _k(scenario, i, profile)
    gamma = k * p
    pdr = np.exp(prm.a * gamma ** prm.b)
    return -wt.w * p ** (wt.w - 1) + prm.a * prm.b * gamma ** (prm.b - 1) * wt.d * wt.v / pdr ** wt.v * k


def utility_second_derivative(p_i_mw, scenario: Scenario, i: int, profile):
    """Closed-form ``d2U_i/dp_i^2``.

    ``-w(w-1) p^(w-2) + c gamma^(b-2)/pdr^v ((b-1) - a b v gamma^b)`` with
    ``c = a b d v |h_ii|^4 / I_{-i}^2``.  Both terms are non-positive when
    ``w >= 1`` since ``a, b < 0``.
    """
    wt, prm = scenario.weights, scenario.pdr_params
    p = np.asarray(p_i_mw, dtype=float)
    k = _k(scenario, i, profile)
    gamma = k * p
    pdr = np.exp(prm.a * gamma ** prm.b)
    c = prm.a * prm.b * wt.d * wt.v * k * k
    return (-wt.w * (wt.w - 1) * p ** (wt.w - 2)
            + c * gamma ** (prm.b - 2) / pdr ** wt.v * ((prm.b - 1) - prm.a * prm.b * wt.v * gamma ** prm.b))


def utility_table(scenario: Scenario, profile) -> np.ndarray:
    """``(m, |grid|)`` utility of each player for each own action, others fixed."""
    wt = scenario.weights
    p = scenario.grid.levels_mw
    k = scenario.own_gain / interference_plus_noise(scenario, profile_mw(scenario, profile))
    pdr = pdr_from_sinr(k[:, None] * p[None, :], scenario.pdr_params)
    return -p[None, :] ** wt.w - wt.d / pdr ** wt.v


def best_responses(scenario: Scenario, profile) -> np.ndarray:
    """Every player's best response (lowest index on ties) to ``profile``."""
    return np.argmax(utility_table(scenario, profile), axis=1)


def improving_deviations(scenario: Scenario, profile, rtol: float = 1e-12) -> int:
    """Count unilateral grid deviations that strictly raise the deviator's utility."""
    profile = np.asarray(profile, dtype=int)
    table = utility_table(scenario, profile)
    current = table[np.arange(scenario.m), profile]
    return int(np.sum(table > current[:, None] + rtol * np.abs(current[:, None])))


@dataclass(frozen=True)
class NEResult:
    profile: np.ndarray
    iterations: int
    converged: bool
    cycle_length: int
    method: str


def simultaneous_ne(scenario: Scenario, start=None, max_iter: int = 10_000,
                    fallback: bool = True) -> NEResult:
    """Synchronous best-response iteration to a pure Nash equilibrium.

    Starts from ``start`` (default: everyone at the lowest power).  A repeated
    profile ends the run: a repeat of the immediately preceding profile is a
    fixed point, any other repeat is a cycle.  With ``fallback`` a cycle is
    followed by round-robin (one player at a time) best responses from the
    last profile and, should those cycle too, by an exhaustive search for the
    lowest-power pure equilibrium.  ``method`` records which stage finished.

    Cycles do happen: when a close encounter floors the PDR at every power
    level the player's utility is flat and it drops to the lowest power,
    which in turn frees the other player.
    """
    if scenario.m * len(scenario.grid) > WORK_BOUND:
        raise SizeError("scenario too large for best-response verification")
    prof = np.zeros(scenario.m, dtype=int) if start is None else np.asarray(start, dtype=int).copy()
    seen = {prof.tobytes(): 0}
    for it in range(1, max_iter + 1):
        nxt = best_responses(scenario, prof)
        if np.array_equal(nxt, prof):
            return NEResult(prof, it - 1, True, 0, "synchronous")
        key = nxt.tobytes()
        if key in seen:
            cycle = it - seen[key]
            if not fallback:
                return NEResult(nxt, it, False, cycle, "synchronous")
            res = _round_robin(scenario, nxt, max_iter)
            if not res.converged and len(scenario.grid) ** scenario.m <= WORK_BOUND:
                found = pure_equilibria(scenario, first_only=True)
                if found.size:
                    res = NEResult(found[0], res.iterations, True, 0, "exhaustive")
            return NEResult(res.profile, it + res.iterations, res.converged, cycle, res.method)
        seen[key] = it
        prof = nxt
    return NEResult(prof, max_iter, False, 0, "synchronous")


def pure_equilibria(scenario: Scenario, first_only: bool = False, rtol: float = 1e-12) -> np.ndarray:
    """All pure Nash equilibria on the grid, in lexicographic order, as ``(k, m)``."""
    n, m = len(scenario.grid), scenario.m
    total = n ** m
    if total > WORK_BOUND:
        raise SizeError(f"{n}^{m} profiles exceed the bound {WORK_BOUND:.0e}")
    wt = scenario.weights
    p = scenario.grid.levels_mw
    own_cost = -p ** wt.w
    chunk = max(1, _CHUNK // (8 * n))
    found = []
    for start in range(0, total, chunk):
        flat = np.arange(start, min(start + chunk, total))
        idx = np.stack(np.unravel_index(flat, (n,) * m), axis=-1)
        k = scenario.own_gain / interference_plus_noise(scenario, p[idx])
        table = own_cost - wt.d / pdr_from_sinr(k[..., None] * p, scenario.pdr_params) ** wt.v
        cur = np.take_along_axis(table, idx[..., None], axis=-1)[..., 0]
        ok = np.all(table.max(axis=-1) <= cur + rtol * np.abs(cur), axis=-1)
        if np.any(ok):
            found.append(idx[ok])
            if first_only:
                return found[0][:1]
    return np.concatenate(found) if found else np.empty((0, m), dtype=int)


def _round_robin(scenario: Scenario, prof, max_iter: int) -> NEResult:
    prof = np.asarray(prof, dtype=int).copy()
    seen = set()
    for sweep in range(1, max_iter + 1):
        if prof.tobytes() in seen:
            return NEResult(prof, sweep, False, 0, "round_robin")
        seen.add(prof.tobytes())
        changed = False
        for i in range(scenario.m):
            br = int(np.argmax(utility_table(scenario, prof)[i]))
            if br != prof[i]:
                prof[i] = br
                changed = True
        if not changed:
            return NEResult(prof, sweep, True, 0, "round_robin")
    return NEResult(prof, max_iter, False, 0, "round_robin")


def social_welfare(profile, scenario: Scenario) -> float:
    """Sum of all players' utilities at ``profile`` (grid indices)."""
    return float(np.sum(_welfare_rows(scenario, np.asarray(profile, dtype=int)[None, :])))


def _welfare_rows(scenario: Scenario, idx: np.ndarray) -> np.ndarray:
    wt = scenario.weights
    p = scenario.grid.levels_mw[idx]
    gamma = p * scenario.own_gain / interference_plus_noise(scenario, p)
    pdr = pdr_from_sinr(gamma, scenario.pdr_params)
    return np.sum(-p ** wt.w - wt.d / pdr ** wt.v, axis=-1)


def exhaustive_social_optimum(scenario: Scenario, work_bound: int = WORK_BOUND):
    """Enumerate every joint profile and return ``(best_profile, welfare)``.

    Profiles are visited in lexicographic index order and only a strictly
    larger welfare replaces the incumbent, so ties resolve to the
    lexicographically lowest powers.
    """
    n, m = len(scenario.grid), scenario.m
    total = n ** m
    if total > work_bound:
        raise SizeError(
            f"{n}^{m} = {total:.3g} profiles exceed the bound {work_bound:.0e}; "
            "use a coarser power grid"
        )
    best_val, best_flat = -np.inf, 0
    for start in range(0, total, _CHUNK):
        flat = np.arange(start, min(start + _CHUNK, total))
        idx = np.stack(np.unravel_index(flat, (n,) * m), axis=-1)
        vals = _welfare_rows(scenario, idx)
        k = int(np.argmax(vals))
        if vals[k] > best_val:
            best_val, best_flat = float(vals[k]), int(flat[k])
    best = np.array(np.unravel_index(best_flat, (n,) * m), dtype=int)
    return best, best_val


@dataclass(frozen=True)
class OptimalityReport:
    ne_profile: np.ndarray
    opt_profile: np.ndarray
    ne_welfare: float
    optimal_welfare: float
    gap: float
    profiles_equal: bool
    ne_converged: bool
    ne_iterations: int

    @property
    def relative_gap(self) -> float:
        return self.gap / abs(self.optimal_welfare)


def verify_social_optimality(scenario: Scenario, start=None) -> OptimalityReport:
    ne = simultaneous_ne(scenario, start)
    opt, opt_val = exhaustive_social_optimum(scenario)
    ne_val = social_welfare(ne.profile, scenario)
    return OptimalityReport(ne.profile, opt, ne_val, opt_val, opt_val - ne_val,
                            bool(np.array_equal(ne.profile, opt)), ne.converged, ne.iterations)


def random_profile_welfare(scenario: Scenario, n: int, rng: RngStream) -> np.ndarray:
    """Welfare of ``n`` uniformly random joint profiles."""
    idx = rng.integers(0, len(scenario.grid), size=(n, scenario.m))
    return _welfare_rows(scenario, idx)


def sample_scenario(m: int, rng: RngStream, weights: UtilityWeights, pdr_params: PdrModelParams,
                    grid: PowerGrid, noise_dbm: float, model: ChannelModel = ChannelModel()) -> Scenario:
    """Freeze one stage drawn from the channel model.

    Players stand uniformly in the room; on-body gains are gamma faded and
    inter-body gains carry path loss, shadowing and a Rayleigh draw.
    """
    side = model.walk.area_side_m
    pos = rng.uniform(0.0, side, size=(m, 2))
    dist = np.sqrt(np.sum((pos[:, None, :] - pos[None, :, :]) ** 2, axis=-1))
    own = sample_onbody_gain(model.onbody, rng, size=m)
    ray = np.sqrt(rng.exponential(1.0, size=(m, m)))
    cross = np.zeros((m, m))
    off = ~np.eye(m, dtype=bool)
    if m > 1:
        cross[off] = interbody_gain(np.maximum(dist[off], 1e-9), model.interbody.shadowing_db,
                                    ray[off], model.interbody)
    return Scenario(own, cross, dbm_to_mw(noise_dbm), weights, pdr_params, grid)
