"""On-body and inter-body channel gains driven by a 2-D walking model.

Every BAN is one walker in a square room.  The on-body link (sensor to own
hub) is gamma faded around a fixed mean attenuation; the inter-body link from
BAN ``j``'s sensor to BAN ``i``'s hub combines distance path loss, a fixed
body-shadowing loss and Jakes (Rayleigh) small-scale fading.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special, stats

from .core import ConfigurationError, DomainError, RngStream, db_to_linear

AREA_SIDE_M = 6.0
GAIN_FLOOR = 1e-30


@dataclass(frozen=True)
class WalkParams:
    area_side_m: float = AREA_SIDE_M
    speed_mean: float = 3.0
    speed_std: float = 0.2
    speed_min: float = 0.5
    turn_std_deg: float = 1.0  # per turn interval
    turn_interval_s: float = 0.01


@dataclass(frozen=True)
class OnBodyFadingParams:
    mean_attenuation_db: float = 60.0
    shape: float = 1.31
    scale: float = 0.562
    # Stage-to-stage correlation of the underlying Gaussian copula.  0 gives
    # i.i.d. draws, under which the last packet says nothing about the next.
    ar_coefficient: float = 0.95

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise ConfigurationError("gamma shape and scale must be positive")
        if not 0.0 <= self.ar_coefficient < 1.0:
            raise ConfigurationError("ar_coefficient must lie in [0, 1)")


@dataclass(frozen=True)
class InterBodyParams:
    pathloss_exponent: float = 2.7
    ref_distance_m: float = 5.0
    ref_attenuation_db: float = 54.0
    shadowing_db: float = 45.0
    doppler_hz: float = 1.1
    min_distance_m: float = 0.1
    n_oscillators: int = 16

    def __post_init__(self):
        for name in ("pathloss_exponent", "ref_distance_m", "ref_attenuation_db",
                     "shadowing_db", "doppler_hz", "min_distance_m"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")


@dataclass(frozen=True)
class ChannelModel:
    walk: WalkParams = field(default_factory=WalkParams)
    onbody: OnBodyFadingParams = field(default_factory=OnBodyFadingParams)
    interbody: InterBodyParams = field(default_factory=InterBodyParams)


# ---------------------------------------------------------------------------
# mobility


@dataclass(frozen=True)
class WalkerState:
    """Position (m), heading (rad) and speed (m/s); fields may be arrays."""

    x: np.ndarray
    y: np.ndarray
    heading: np.ndarray
    speed: np.ndarray


def _fold(u, side):
    """Map unfolded coordinate(s) into ``[0, side]`` by specular reflection.

    Returns the folded coordinate and whether an odd number of reflections
    happened (which mirrors the matching heading component).
    """
    k = np.floor(u / side)
    r = u - k * side
    odd = (k % 2) != 0
    return np.where(odd, side - r, r), odd


def step_walk(state: WalkerState, dt: float, rng: RngStream | None,
              params: WalkParams = WalkParams()) -> WalkerState:
    """Advance walker(s) by ``dt`` seconds.

    The heading first receives a zero-mean Gaussian turn whose standard
    deviation is ``turn_std_deg`` per ``turn_interval_s`` (scaled by
    ``sqrt(dt/turn_interval_s)``); ``rng=None`` walks straight.  Positions
    leaving the room are reflected at the wall and the heading is mirrored.
    """
    if not dt > 0:
        raise DomainError("dt must be positive")
    heading = np.asarray(state.heading, dtype=float)
    if rng is not None and params.turn_std_deg > 0:
        std = np.deg2rad(params.turn_std_deg) * np.sqrt(dt / params.turn_interval_s)
        heading = heading + rng.normal(0.0, std, size=np.shape(heading))
    cos_h, sin_h = np.cos(heading), np.sin(heading)
    side = params.area_side_m
    x, flip_x = _fold(state.x + state.speed * dt * cos_h, side)
    y, flip_y = _fold(state.y + state.speed * dt * sin_h, side)
    if np.any(flip_x) or np.any(flip_y):
        heading = np.arctan2(np.where(flip_y, -sin_h, sin_h), np.where(flip_x, -cos_h, cos_h))
    return WalkerState(x, y, heading, state.speed)


def draw_speeds(n: int, rng: RngStream, params: WalkParams = WalkParams()) -> np.ndarray:
    """Per-walker speeds from Normal(mean, std), redrawn until above ``speed_min``."""
    speeds = rng.normal(params.speed_mean, params.speed_std, size=n)
    bad = speeds <= params.speed_min
    while np.any(bad):
        speeds[bad] = rng.normal(params.speed_mean, params.speed_std, size=int(bad.sum()))
        bad = speeds <= params.speed_min
    return speeds


def initial_walkers(n: int, rng: RngStream, params: WalkParams = WalkParams()) -> WalkerState:
    side = params.area_side_m
    x = rng.uniform(0.0, side, size=n)
    y = rng.uniform(0.0, side, size=n)
    heading = rng.uniform(-np.pi, np.pi, size=n)
    return WalkerState(x, y, heading, draw_speeds(n, rng, params))


def walk_positions(n_bans: int, sample_times_s, rng: RngStream,
                   params: WalkParams = WalkParams()) -> np.ndarray:
    """Positions of ``n_bans`` walkers at the given (ascending) times.

    Turns are applied every ``turn_interval_s``; between turns the motion is
    straight, so sampling inside an interval is an exact partial advance.
    Returns an array of shape ``(len(times), n_bans, 2)``.
    """
    times = np.asarray(sample_times_s, dtype=float)
    if times.size and (np.any(np.diff(times) < 0) or times[0] < 0):
        raise DomainError("sample times must be non-negative and ascending")
    state = initial_walkers(n_bans, rng.child("init"), params)
    turns = rng.child("turns")
    dt = params.turn_interval_s
    out = np.empty((times.size, n_bans, 2))
    t_now = 0.0
    block = 0
    for k, t in enumerate(times):
        n_blocks = int(np.floor(t / dt + 1e-9))
        while block < n_blocks:
            state = step_walk(state, dt, turns, params)
            block += 1
            t_now = block * dt
        rest = t - t_now
        snap = step_walk(state, rest, None, params) if rest > 1e-12 else state
        out[k, :, 0] = snap.x
        out[k, :, 1] = snap.y
    return out


def pairwise_distances(positions: np.ndarray) -> np.ndarray:
    """``(T, n, 2)`` positions -> ``(n, n, T)`` distances."""
    diff = positions[:, :, None, :] - positions[:, None, :, :]
    return np.moveaxis(np.sqrt(np.sum(diff ** 2, axis=-1)), 0, -1)


# ---------------------------------------------------------------------------
# fading


def sample_onbody_gain(params: OnBodyFadingParams, rng: RngStream, size=None):
    """Linear on-body power gain(s), gamma faded, mean ``10**(-dB/10)``.

    The gamma draw is divided by its mean ``shape*scale`` so the configured
    mean attenuation holds exactly.
    """
    g = rng.gamma(params.shape, params.scale, size=size)
    out = db_to_linear(-params.mean_attenuation_db) * g / (params.shape * params.scale)
    return np.maximum(out, GAIN_FLOOR)


def onbody_gain_series(params: OnBodyFadingParams, n_bans: int, n_stages: int,
                       rng: RngStream) -> np.ndarray:
    """``(n_bans, n_stages)`` on-body gains.

    With ``ar_coefficient == 0`` draws are i.i.d.; otherwise an AR(1)
    Gaussian process is mapped through the gamma quantile function, which
    keeps the marginal distribution exact.
    """
    if params.ar_coefficient == 0.0:
        return sample_onbody_gain(params, rng, size=(n_bans, n_stages))
    rho = params.ar_coefficient
    z = rng.standard_normal((n_bans, n_stages))
    for t in range(1, n_stages):
        z[:, t] = rho * z[:, t - 1] + np.sqrt(1.0 - rho * rho) * z[:, t]
    u = special.ndtr(z)
    g = stats.gamma.ppf(u, params.shape, scale=params.scale)
    out = db_to_linear(-params.mean_attenuation_db) * g / (params.shape * params.scale)
    return np.maximum(out, GAIN_FLOOR)


@dataclass(frozen=True)
class JakesOscillators:
    """Sum-of-sinusoids Rayleigh process with maximum Doppler ``doppler_hz``.

    Oscillator ``n`` arrives at angle ``2*pi*(n + u_n)/N`` (``u_n`` uniform)
    and carries a complex Gaussian gain of variance ``1/N``, so at every
    instant the process is exactly circular complex Gaussian with unit mean
    power, and its autocorrelation is ``J0(2*pi*doppler*tau)``.  The leading
    axes of ``freqs``/``coefs`` index independent streams.
    """

    freqs: np.ndarray  # (..., N) Hz
    coefs: np.ndarray  # (..., N) complex

    @classmethod
    def draw(cls, rng: RngStream, doppler_hz: float, n_oscillators: int = 16,
             shape: tuple = ()) -> "JakesOscillators":
        n = n_oscillators
        u = rng.uniform(size=shape + (n,))
        angles = 2.0 * np.pi * (np.arange(n) + u) / n
        coefs = (rng.standard_normal(shape + (n,)) + 1j * rng.standard_normal(shape + (n,)))
        coefs /= np.sqrt(2.0 * n)
        return cls(doppler_hz * np.cos(angles), coefs)

    def complex_gain(self, t) -> np.ndarray:
        """Complex amplitude at time(s) ``t``; output shape ``stream_shape + t.shape``."""
        t = np.asarray(t, dtype=float)
        phase = 2.0 * np.pi * self.freqs[..., None, :] * t.reshape(-1, 1)
        h = np.sum(self.coefs[..., None, :] * np.exp(1j * phase), axis=-1)
        return h.reshape(self.freqs.shape[:-1] + t.shape)


def jakes_amplitude(oscillators: JakesOscillators, t):
    """Rayleigh envelope ``|h(t)|`` of a Jakes process."""
    if np.any(np.asarray(t) < 0):
        raise DomainError("time must be non-negative")
    return np.abs(oscillators.complex_gain(t))


def interbody_gain(dist_m, shadowing_db, smallscale_amp, params: InterBodyParams = InterBodyParams()):
    """Linear power gain ``|A_t (d0/d)^(n/2) A_BS A_SC|^2``.

    Mean attenuation in dB is ``ref + shadowing + 10*n*log10(d/d0)``.
    Distances below ``min_distance_m`` are clamped; the result is floored at
    ``GAIN_FLOOR`` so deep fades stay strictly positive.
    """
    d = np.asarray(dist_m, dtype=float)
    if np.any(~(d > 0)):
        raise DomainError("distance must be positive")
    d = np.maximum(d, params.min_distance_m)
    loss_db = (params.ref_attenuation_db + shadowing_db
               + 10.0 * params.pathloss_exponent * np.log10(d / params.ref_distance_m))
    g = 10.0 ** (-loss_db / 10.0) * np.abs(smallscale_amp) ** 2
    g = np.maximum(g, GAIN_FLOOR)
    return float(g) if g.ndim == 0 else g


# ---------------------------------------------------------------------------
# traces


@dataclass(frozen=True)
class ChannelTrace:
    """Per-stage channel power gains for one game.

    ``onbody[i, t]`` is BAN ``i``'s own link; ``interbody[j, i, t]`` is the
    link from BAN ``j``'s sensor to BAN ``i``'s hub.  The diagonal of
    ``interbody`` is unused and held at zero.
    """

    onbody: np.ndarray
    interbody: np.ndarray
    stage_duration_s: float

    @property
    def n_bans(self) -> int:
        return self.onbody.shape[0]

    @property
    def n_stages(self) -> int:
        return self.onbody.shape[1]

    @property
    def n_pairs(self) -> int:
        return self.n_bans * (self.n_bans - 1)

    def pair_gains(self) -> np.ndarray:
        """Off-diagonal inter-body gains, shape ``(n_pairs, n_stages)``."""
        mask = ~np.eye(self.n_bans, dtype=bool)
        return self.interbody[mask]

    def segment(self, start: int, stop: int) -> "ChannelTrace":
        return ChannelTrace(self.onbody[:, start:stop], self.interbody[:, :, start:stop],
                            self.stage_duration_s)


def stage_midpoints(n_stages: int, stage_duration_s: float, offset: int = 0) -> np.ndarray:
    return (offset + np.arange(n_stages) + 0.5) * stage_duration_s


def fading_trace(distances: np.ndarray, stage_duration_s: float, rng: RngStream,
                 model: ChannelModel = ChannelModel(), time_offset_s: float = 0.0) -> ChannelTrace:
    """Compose a :class:`ChannelTrace` from ``(n, n, T)`` distances.

    On-body gains and per-ordered-pair Jakes streams are drawn from
    substreams of ``rng``.
    """
    n, _, n_stages = distances.shape
    onbody = onbody_gain_series(model.onbody, n, n_stages, rng.child("onbody"))
    ib = model.interbody
    interbody = np.zeros((n, n, n_stages))
    if n > 1:
        jakes = JakesOscillators.draw(rng.child("smallscale"), ib.doppler_hz,
                                      ib.n_oscillators, shape=(n, n))
        t = time_offset_s + stage_midpoints(n_stages, stage_duration_s)
        amp = np.abs(jakes.complex_gain(t))
        off = ~np.eye(n, dtype=bool)
        interbody[off] = interbody_gain(distances[off], ib.shadowing_db, amp[off], ib)
    return ChannelTrace(onbody, interbody, stage_duration_s)


def generate_channel_set(n_bans: int, n_stages: int, stage_duration_s: float,
                         rng: RngStream, model: ChannelModel = ChannelModel()) -> ChannelTrace:
    """Walk ``n_bans`` people for ``n_stages`` stages and build their channels.

    Distances are sampled at each stage midpoint.
    """
    if n_bans < 1 or n_stages < 1:
        raise ConfigurationError("need n_bans >= 1 and n_stages >= 1")
    if not stage_duration_s > 0:
        raise ConfigurationError("stage duration must be positive")
    pos = walk_positions(n_bans, stage_midpoints(n_stages, stage_duration_s),
                         rng.child("mobility"), model.walk)
    return fading_trace(pairwise_distances(pos), stage_duration_s, rng.child("fading"), model)


# ---------------------------------------------------------------------------
# text export


def write_trace(trace: ChannelTrace, path) -> None:
    """Write ``ban_i,ban_j,stage,gain_db`` rows; ``ban_j == ban_i`` is on-body.

    Off-diagonal rows carry the gain from BAN ``ban_j``'s sensor to BAN
    ``ban_i``'s hub.
    """
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ban_i", "ban_j", "stage", "gain_db"])
        for i in range(trace.n_bans):
            for j in range(trace.n_bans):
                series = trace.onbody[i] if i == j else trace.interbody[j, i]
                for t, g in enumerate(series):
                    w.writerow([i, j, t, repr(float(10.0 * np.log10(g)))])


def read_trace(path, stage_duration_s: float = 0.05) -> ChannelTrace:
    rows = []
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["ban_i", "ban_j", "stage", "gain_db"]:
            raise ConfigurationError(f"{path}:1: unexpected header {header}")
        for lineno, row in enumerate(reader, start=2):
            try:
                rows.append((int(row[0]), int(row[1]), int(row[2]), float(row[3])))
            except (ValueError, IndexError):
                raise ConfigurationError(f"{path}:{lineno}: malformed row {row!r}") from None
    if not rows:
        raise ConfigurationError(f"{path}: no data rows")
    arr = np.array(rows, dtype=float)
    n = int(arr[:, :2].max()) + 1
    n_stages = int(arr[:, 2].max()) + 1
    onbody = np.zeros((n, n_stages))
    interbody = np.zeros((n, n, n_stages))
    for i, j, t, g_db in rows:
        if i == j:
            onbody[i, t] = 10.0 ** (g_db / 10.0)
        else:
            interbody[j, i, t] = 10.0 ** (g_db / 10.0)
    return ChannelTrace(onbody, interbody, stage_duration_s)
