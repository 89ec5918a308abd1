"""Repeated power-control games over channel traces, and campaign metrics.

A campaign walks ``n_channel_sets`` groups of people; each set's mobility is
shared by ``games_per_set`` games that cut consecutive segments out of the
walk and redraw all fading.  Every random quantity comes from a labelled
:class:`~bancoex.core.RngStream` substream, so a game depends only on
``(seed, set, game)`` and never on which other games ran.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from concurrent.futures import ProcessPoolExecutor
from functools import lru_cache
from itertools import repeat

import numpy as np

from .channel import (ChannelModel, ChannelTrace, fading_trace, pairwise_distances,
                      stage_midpoints, walk_positions)
from .coexistence import CoexistenceParams, sample_active_set
from .controllers import (Controller, UtilityWeights, best_response_index,
                          calibrate_weight, constant_power, sinr_correction)
from .core import (ConfigurationError, PowerGrid, RngStream, check_dbm, dbm_to_mw,
                   linear_to_db, make_power_grid, mw_to_dbm)
from .pdr_model import PDR_FLOOR, pdr_from_sinr, params_for, sinr_for_target_pdr

CONVERGENCE_BAND_DB = 0.5
CONVERGENCE_REFERENCE_STAGES = 10


@dataclass(frozen=True)
class CampaignConfig:
    n_channel_sets: int = 20
    games_per_set: int = 50
    stages_per_game: int = 100
    total_bans: int = 8
    channels: int = 4
    coexistence_mode: str = "stochastic"
    fixed_m: int | None = None
    activity_resample: str = "game"  # or "stage"
    modulation: str = "BPSK"
    controller: Controller = field(default_factory=Controller)
    grid_min_dbm: float = -30.0
    grid_max_dbm: float = 0.0
    grid_step_db: float = 1.0
    w: float = 1.0
    v: float = 4.0
    d: float | None = 3e-3  # None: calibrate at the nominal gain
    nominal_gain_db: float = -60.0
    noise_dbm: float = -100.0
    target_pdr: float = 0.9
    stage_duration_s: float = 0.05
    steady_window: int = 20
    channel: ChannelModel = field(default_factory=ChannelModel)
    seed: int = 1

    def __post_init__(self):
        for name in ("n_channel_sets", "games_per_set", "stages_per_game", "steady_window"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        if self.activity_resample not in ("game", "stage"):
            raise ConfigurationError("activity_resample must be 'game' or 'stage'")
        if not 0.0 < self.target_pdr < 1.0:
            raise ConfigurationError("target_pdr must lie in (0, 1)")
        if not self.stage_duration_s > 0:
            raise ConfigurationError("stage_duration_s must be positive")
        check_dbm(self.grid_min_dbm, "grid_min_dbm")
        check_dbm(self.grid_max_dbm, "grid_max_dbm")
        if not -200.0 <= self.noise_dbm <= 0.0:
            raise ConfigurationError(f"noise_dbm={self.noise_dbm} outside [-200, 0]")
        self.coexistence  # validates M, N_c, fixed_m
        if self.controller.kind == "constant":
            constant_power(self.controller, self.grid)

    @property
    def grid(self) -> PowerGrid:
        return make_power_grid(self.grid_min_dbm, self.grid_max_dbm, self.grid_step_db)

    @property
    def coexistence(self) -> CoexistenceParams:
        return CoexistenceParams(self.total_bans, self.channels, self.coexistence_mode, self.fixed_m)

    @property
    def n_games(self) -> int:
        return self.n_channel_sets * self.games_per_set

    def replace(self, **changes) -> "CampaignConfig":
        return dataclasses.replace(self, **changes)

    def resolved_weights(self) -> UtilityWeights:
        if self.d is not None:
            return UtilityWeights(self.w, self.v, self.d)
        d = calibrate_weight(self.grid, params_for(self.modulation),
                             10.0 ** (self.nominal_gain_db / 10.0), dbm_to_mw(self.noise_dbm),
                             self.target_pdr, w=self.w, v=self.v)
        return UtilityWeights(self.w, self.v, d)


@dataclass(frozen=True)
class GameContext:
    """Everything a stage update needs, resolved once per campaign."""

    grid: PowerGrid
    grid_mw: np.ndarray
    controller: Controller
    weights: UtilityWeights
    pdr_params: object
    noise_mw: float
    target_pdr: float
    target_sinr_db: float

    @classmethod
    def from_config(cls, config: CampaignConfig, weights: UtilityWeights | None = None):
        grid = config.grid
        params = params_for(config.modulation)
        return cls(grid, grid.levels_mw, config.controller,
                   weights if weights is not None else config.resolved_weights(),
                   params, dbm_to_mw(config.noise_dbm), config.target_pdr,
                   linear_to_db(sinr_for_target_pdr(config.target_pdr, params)))


@dataclass(frozen=True)
class GameState:
    """Powers in effect at ``stage`` and what the hubs measured with them.

    ``sinr`` and ``pdr`` are NaN for idle BANs.
    """

    stage: int
    power_idx: np.ndarray
    power_dbm: np.ndarray
    active: np.ndarray
    sinr: np.ndarray
    pdr: np.ndarray


def compute_sinr(i: int, power_mw: np.ndarray, active: np.ndarray, trace: ChannelTrace,
                 stage: int, noise_mw: float) -> float:
    """SINR at BAN ``i``'s hub with only active BANs interfering."""
    interferers = active.copy()
    interferers[i] = False
    interference = np.sum(power_mw[interferers] * trace.interbody[interferers, i, stage])
    return power_mw[i] * trace.onbody[i, stage] / (interference + noise_mw)


def _sinr_all(power_mw, active, trace: ChannelTrace, stage: int, noise_mw: float):
    tx = np.where(active, power_mw, 0.0)
    interference = tx @ trace.interbody[:, :, stage]  # diagonal is zero
    signal = power_mw * trace.onbody[:, stage]
    return signal / (interference + noise_mw)


def run_stage(power_idx: np.ndarray, active: np.ndarray, trace: ChannelTrace, stage: int,
              ctx: GameContext) -> tuple[GameState, np.ndarray]:
    """Transmit with ``power_idx`` at ``stage`` and decide the next powers.

    Returns the measured state and the power indices for the next stage;
    idle BANs keep their power.
    """
    p_mw = ctx.grid_mw[power_idx]
    sinr = _sinr_all(p_mw, active, trace, stage, ctx.noise_mw)
    pdr = pdr_from_sinr(sinr, ctx.pdr_params)
    nxt = power_idx.copy()
    a = active
    kind = ctx.controller.kind
    if kind == "game":
        g = trace.onbody[a, stage]
        ipn = p_mw[a] * g / sinr[a]
        nxt[a] = best_response_index(g, ipn, ctx.grid, ctx.weights, ctx.pdr_params)
    elif kind in ("sah", "sinr_balance"):
        relax = 1.0 if kind == "sah" else ctx.controller.relax
        p_dbm = ctx.grid.levels_dbm[power_idx[a]]
        new = sinr_correction(p_dbm, 10.0 * np.log10(sinr[a]), ctx.target_sinr_db, relax, ctx.grid)
        nxt[a] = ctx.grid.nearest_index(new)
    else:
        nxt[a] = ctx.grid.index_of(ctx.controller.constant_dbm)
    nan = np.full(len(power_idx), np.nan)
    state = GameState(stage, power_idx, ctx.grid.levels_dbm[power_idx], active.copy(),
                      np.where(a, sinr, nan), np.where(a, pdr, nan))
    return state, nxt


@dataclass(frozen=True)
class GameRecord:
    """Per-stage arrays of shape ``(stages, n_bans)``."""

    power_dbm: np.ndarray
    sinr: np.ndarray
    pdr: np.ndarray
    active: np.ndarray


def initial_powers(config: CampaignConfig, rng: RngStream) -> np.ndarray:
    """Uniform random on-grid starting powers (indices)."""
    return rng.integers(0, len(config.grid), size=config.total_bans)


def run_game(trace: ChannelTrace, config: CampaignConfig, rng: RngStream,
             ctx: GameContext | None = None) -> GameRecord:
    """Play ``stages_per_game`` stages of one game on ``trace``.

    ``rng`` supplies the starting powers (substream ``init_power``) and the
    active sets (substream ``activity``).
    """
    S = config.stages_per_game
    if trace.n_stages < S:
        raise ConfigurationError(f"trace has {trace.n_stages} stages, game needs {S}")
    if trace.n_bans != config.total_bans:
        raise ConfigurationError(f"trace has {trace.n_bans} BANs, config has {config.total_bans}")
    ctx = ctx or GameContext.from_config(config)
    M = config.total_bans
    idx = initial_powers(config, rng.child("init_power"))
    act_rng = rng.child("activity")
    coex = config.coexistence
    active = np.zeros(M, dtype=bool)
    power = np.empty((S, M))
    sinr = np.empty((S, M))
    pdr = np.empty((S, M))
    act = np.empty((S, M), dtype=bool)
    for t in range(S):
        if t == 0 or config.activity_resample == "stage":
            active[:] = False
            active[sample_active_set(coex, act_rng)] = True
        state, idx = run_stage(idx, active, trace, t, ctx)
        power[t] = state.power_dbm
        sinr[t] = state.sinr
        pdr[t] = state.pdr
        act[t] = state.active
    return GameRecord(power, sinr, pdr, act)


@lru_cache(maxsize=24)
def set_distances(seed: int, set_index: int, n_bans: int, n_stages: int,
                  stage_duration_s: float, walk) -> np.ndarray:
    """Pairwise distances for one channel set's whole walk (cached, read-only)."""
    rng = RngStream(seed, ("set", set_index, "mobility"))
    pos = walk_positions(n_bans, stage_midpoints(n_stages, stage_duration_s), rng, walk)
    d = pairwise_distances(pos)
    d.setflags(write=False)
    return d


def game_trace(config: CampaignConfig, set_index: int, game_index: int) -> ChannelTrace:
    """Channel trace for one game: its segment of the set walk plus fresh fading."""
    S = config.stages_per_game
    dist = set_distances(config.seed, set_index, config.total_bans,
                         S * config.games_per_set, config.stage_duration_s, config.channel.walk)
    seg = dist[:, :, game_index * S:(game_index + 1) * S]
    rng = RngStream(config.seed, ("set", set_index, "game", game_index, "fading"))
    return fading_trace(seg, config.stage_duration_s, rng, config.channel,
                        time_offset_s=game_index * S * config.stage_duration_s)


def game_rng(config: CampaignConfig, set_index: int, game_index: int) -> RngStream:
    return RngStream(config.seed, ("set", set_index, "game", game_index))


def play(config: CampaignConfig, set_index: int, game_index: int,
         ctx: GameContext | None = None) -> GameRecord:
    """Run one campaign game by its coordinates."""
    return run_game(game_trace(config, set_index, game_index), config,
                    game_rng(config, set_index, game_index), ctx)


def convergence_stage(mean_power_dbm, band_db: float = CONVERGENCE_BAND_DB,
                      reference: int = CONVERGENCE_REFERENCE_STAGES) -> tuple[int, bool]:
    """First stage after which the series stays within ``band_db`` of its tail mean.

    The tail mean is over the final ``reference`` stages.  Returns
    ``(stage, converged)``; a series that never settles yields
    ``(len(series), False)``.
    """
    x = np.asarray(mean_power_dbm, dtype=float)
    if x.size < 20:
        raise ConfigurationError("convergence needs a series of at least 20 stages")
    ref = x[-reference:].mean()
    outside = np.nonzero(np.abs(x - ref) > band_db)[0]
    if outside.size == 0:
        return 0, True
    t = int(outside[-1]) + 1
    if t >= x.size:
        return x.size, False
    return t, True


@dataclass
class MetricsReport:
    """Per-stage campaign metrics over active BANs.

    ``mean_power_dbm`` is the mean of linear milliwatts converted to dBm;
    ``mean_log_power_dbm`` averages the dBm values themselves.  Convergence
    is judged on the latter: the linear mean is dominated by the occasional
    BAN pushed to full power by a close encounter and keeps swinging by a
    few dB however many games are averaged.  ``linear_convergence_stage``
    applies the same rule to the linear series for reference.
    """

    pct_at_target: np.ndarray
    mean_power_dbm: np.ndarray
    mean_log_power_dbm: np.ndarray
    convergence_stage: int
    converged: bool
    linear_convergence_stage: int
    linear_converged: bool
    steady_pct: float
    steady_power_dbm: float
    n_active_samples: int
    n_pdr_clamped: int
    weights: UtilityWeights
    config: CampaignConfig
    games: list | None = None

    def to_rows(self):
        yield from zip(range(len(self.pct_at_target)), self.pct_at_target, self.mean_power_dbm)


@dataclass
class _SetTotals:
    at_target: np.ndarray
    n_active: np.ndarray
    power_mw: np.ndarray
    power_dbm: np.ndarray
    clamped: int
    games: list | None


def _play_set(config: CampaignConfig, set_index: int, weights: UtilityWeights,
              keep_games: bool) -> _SetTotals:
    ctx = GameContext.from_config(config, weights)
    S = config.stages_per_game
    tot = _SetTotals(np.zeros(S), np.zeros(S), np.zeros(S), np.zeros(S), 0,
                     [] if keep_games else None)
    for g in range(config.games_per_set):
        rec = play(config, set_index, g, ctx)
        a = rec.active
        tot.at_target += np.sum(a & (rec.pdr >= config.target_pdr), axis=1)
        tot.n_active += a.sum(axis=1)
        tot.power_mw += np.sum(np.where(a, dbm_to_mw(rec.power_dbm), 0.0), axis=1)
        tot.power_dbm += np.sum(np.where(a, rec.power_dbm, 0.0), axis=1)
        tot.clamped += int(np.sum(a & (rec.pdr <= PDR_FLOOR)))
        if keep_games:
            tot.games.append(rec)
    return tot


def run_campaign(config: CampaignConfig, keep_games: bool = False, jobs: int = 1) -> MetricsReport:
    """Play every game of the campaign and aggregate per-stage metrics.

    Each channel set is reduced on its own (games in order), then the set
    totals are added in set order, so the report does not depend on
    ``jobs``.  Mean power is converted to dBm only after the linear sums.
    """
    weights = config.resolved_weights()
    S = config.stages_per_game
    sets = range(config.n_channel_sets)
    if jobs > 1 and config.n_channel_sets > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_play_set, repeat(config), sets, repeat(weights),
                                  repeat(keep_games)))
    else:
        parts = [_play_set(config, s, weights, keep_games) for s in sets]
    at_target, n_active, power_sum, dbm_sum = (np.zeros(S) for _ in range(4))
    clamped = 0
    games = [] if keep_games else None
    for part in parts:
        at_target += part.at_target
        n_active += part.n_active
        power_sum += part.power_mw
        dbm_sum += part.power_dbm
        clamped += part.clamped
        if keep_games:
            games.extend(part.games)
    pct = 100.0 * at_target / n_active
    mean_power = np.atleast_1d(mw_to_dbm(power_sum / n_active))
    mean_log = dbm_sum / n_active
    stage, ok = convergence_stage(mean_log) if S >= 20 else (S, False)
    lin_stage, lin_ok = convergence_stage(mean_power) if S >= 20 else (S, False)
    w = min(config.steady_window, S)
    return MetricsReport(pct, mean_power, mean_log, stage, ok, lin_stage, lin_ok,
                         float(pct[-w:].mean()),
                         float(mw_to_dbm(np.mean(dbm_to_mw(mean_power[-w:])))),
                         int(n_active.sum()), clamped, weights, config, games)
