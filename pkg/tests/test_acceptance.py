"""Acceptance criteria 1-13.

Every test prints a single PASS/FAIL line (see ``conftest.criterion``) and
then asserts the same condition, so an unmet criterion is a real failure.
The campaign-level criteria share one cache of full-size campaigns; the
whole module takes several minutes on one core.
"""

import time
from functools import lru_cache

import mpmath as mp
import numpy as np
import pytest
from scipy import special, stats

from bancoex.channel import (JakesOscillators, OnBodyFadingParams, interbody_gain,
                             jakes_amplitude, sample_onbody_gain)
from bancoex.cli import main, template_text
from bancoex.coexistence import CoexistenceParams, active_count_distribution, sample_active_set
from bancoex.controllers import Controller, UtilityWeights
from bancoex.core import DEFAULT_GRID, RngStream, dbm_to_mw
from bancoex.equilibrium import (exhaustive_social_optimum, improving_deviations,
                                 random_profile_welfare, sample_scenario, simultaneous_ne,
                                 social_welfare, utility_gradient, utility_second_derivative)
from bancoex.pdr_model import (BPSK, DPSK, pdr_compressed, pdr_from_sinr,
                               sinr_for_target_pdr)
from bancoex.sim import CampaignConfig, run_campaign

pytestmark = pytest.mark.slow

CONSTANTS = (0.0, -5.0, -10.0)
BASELINE_KINDS = ("sah", "sinr_balance")


def _controller(kind):
    if isinstance(kind, float):
        return Controller("constant", constant_dbm=kind)
    return Controller(kind)


_timings: dict = {}


@lru_cache(maxsize=None)
def campaign(kind, modulation="BPSK", fixed_m=None):
    cfg = CampaignConfig(modulation=modulation, controller=_controller(kind))
    if fixed_m is not None:
        cfg = cfg.replace(coexistence_mode="fixed_m", fixed_m=fixed_m)
    t0 = time.perf_counter()
    rep = run_campaign(cfg)
    _timings[(kind, modulation, fixed_m)] = time.perf_counter() - t0
    return rep


def _band(value, centre, tol):
    return abs(value - centre) <= tol


def _comparison(number, modulation, centres, criterion):
    game = campaign("game", modulation)
    pct = {"game": game.steady_pct}
    for kind in BASELINE_KINDS:
        pct[kind] = campaign(kind, modulation).steady_pct
    for level in CONSTANTS:
        pct[level] = campaign(level, modulation).steady_pct
    bands = {k: _band(pct[k], centres[k if not isinstance(k, float) else "constant"], 7.0)
             for k in pct if k != "game" or "game" in centres}
    order = (all(pct["game"] > pct[c] for c in CONSTANTS)
             and all(pct[c] > pct["sah"] for c in CONSTANTS)
             and pct["sah"] >= pct["sinr_balance"])
    ok = all(bands.values()) and order
    text = ", ".join(f"{k if not isinstance(k, float) else f'const {k:g}'}={v:.1f}%"
                     + ("" if bands.get(k, True) else "(out of band)") for k, v in pct.items())
    return criterion(number, ok, f"{modulation}: {text}; ordering {'holds' if order else 'violated'}")


def test_criterion_01_bpsk_game_campaign(criterion):
    rep = campaign("game")
    runtime = _timings[("game", "BPSK", None)]
    ok = _band(rep.steady_pct, 93.0, 7.0) and _band(rep.steady_power_dbm, -25.0, 3.0) and runtime <= 300
    assert criterion(1, ok, f"pct={rep.steady_pct:.1f}% (93 +/- 7), power={rep.steady_power_dbm:.1f} dBm "
                            f"(-25 +/- 3), runtime={runtime:.0f} s (<= 300)")


def test_criterion_02_bpsk_baselines(criterion):
    assert _comparison(2, "BPSK", {"sah": 80.0, "sinr_balance": 77.0, "constant": 87.0}, criterion)


def test_criterion_03_dpsk_campaigns(criterion):
    assert _comparison(3, "DPSK", {"game": 92.0, "sah": 76.0, "sinr_balance": 74.0,
                                   "constant": 85.0}, criterion)


def test_criterion_04_convergence_lead(criterion):
    st = {k: campaign(k) for k in ("game", "sah", "sinr_balance")}
    converged = all(r.converged for r in st.values())
    lead = st["sinr_balance"].convergence_stage - max(st["game"].convergence_stage,
                                                       st["sah"].convergence_stage)
    ok = converged and lead >= 10
    stages = ", ".join(f"{k}={r.convergence_stage}" for k, r in st.items())
    assert criterion(4, ok, f"convergence stages {stages}; lead {lead} (>= 10)")


def test_criterion_05_fixed_m_sweep(criterion):
    ms = range(2, 9)
    reps = [campaign("game", "BPSK", m) for m in ms]
    pct = np.array([r.steady_pct for r in reps])
    power = np.array([r.steady_power_dbm for r in reps])
    mono_pct = bool(np.all(np.diff(pct) <= 0))
    mono_power = bool(np.all(np.diff(power) >= 0)) and power[-1] > power[0]
    ends = (_band(pct[0], 97.0, 7.0) and _band(pct[-1], 83.0, 7.0)
            and _band(power[0], -27.0, 3.0) and _band(power[-1], -21.0, 3.0))
    ok = mono_pct and mono_power and ends
    assert criterion(5, ok, "pct " + " ".join(f"{p:.1f}" for p in pct)
                     + f" (non-increasing: {mono_pct}); power " + " ".join(f"{p:.1f}" for p in power)
                     + f" dBm (increasing: {mono_power}); endpoints in band: {ends}")


def test_criterion_06_power_advantage(criterion):
    game = campaign("game").steady_power_dbm
    best = max(CONSTANTS, key=lambda c: campaign(c).steady_pct)
    margin = campaign(best).steady_power_dbm - game
    assert criterion(6, margin >= 10.0,
                     f"game {game:.1f} dBm vs best constant ({best:g} dBm) "
                     f"{campaign(best).steady_power_dbm:.1f} dBm: {margin:.1f} dB below (>= 10)")


def test_criterion_07_coexistence_distribution(criterion):
    rng = RngStream(7, ("acceptance", "coexistence"))
    params = CoexistenceParams(8, 4)
    counts = np.bincount([len(sample_active_set(params, rng)) for _ in range(100_000)], minlength=9)
    tv = 0.5 * np.abs(counts[1:] / counts.sum() - active_count_distribution(8, 4)).sum()
    assert criterion(7, tv < 0.01, f"total variation {tv:.4f} at 1e5 draws (< 0.01)")


def test_criterion_08_pdr_model_consistency(criterion):
    gamma = np.logspace(0.0, 1.5, 400)  # 0..15 dB
    worst = {}
    for prm in (BPSK, DPSK):
        ref = pdr_compressed(gamma, prm)
        keep = ref > 1e-12  # the compressed form underflows at low SINR
        rel = np.abs(pdr_from_sinr(gamma[keep], prm, clamp=False) - ref[keep]) / ref[keep]
        worst[prm.modulation] = float(rel.max())
    equivalent = all(v <= 1e-6 for v in worst.values())

    trip = max(abs(pdr_from_sinr(sinr_for_target_pdr(t, prm), prm) - t) / t
               for prm in (BPSK, DPSK) for t in np.linspace(0.05, 0.999, 60))
    fine = np.logspace(-0.5, 2.0, 20001)
    shape_ok = True
    for prm in (BPSK, DPSK):
        y = pdr_from_sinr(fine, prm, clamp=False)
        shape_ok &= bool(np.all(np.diff(y) >= 0))
        curv = np.diff(y, 2)
        sig = curv[np.abs(curv) > 1e-14 * y.max()]
        shape_ok &= int(np.count_nonzero(np.diff(np.sign(sig)))) == 1
    ok = equivalent and trip <= 1e-9 and shape_ok
    assert criterion(8, ok, "two-form max relative mismatch "
                     + ", ".join(f"{k} {v:.3g}" for k, v in worst.items())
                     + f" (<= 1e-6); inverse round trip {trip:.2g} (<= 1e-9); "
                     f"monotone with one inflection: {shape_ok}")


def _derivative_points(n, seed):
    """(scenario, player, profile, k, p) with SINR in 1..30 dB and pdr off its floor."""
    rng = RngStream(seed, ("acceptance", "derivatives"))
    out = []
    while len(out) < n:
        m = int(rng.integers(1, 4))
        w = UtilityWeights(1.0 + 2.0 * rng.random(), 0.5 + 6.0 * rng.random(), 10 ** rng.uniform(-5, -1))
        sc = sample_scenario(m, rng, w, BPSK if rng.random() < 0.5 else DPSK, DEFAULT_GRID, -100.0)
        prof = rng.integers(0, len(DEFAULT_GRID), size=m)
        i = int(rng.integers(0, m))
        k = sc.own_gain[i] / ((dbm_to_mw(DEFAULT_GRID.levels_dbm[prof]) @ sc.cross_gain)[i] + sc.noise_mw)
        p = dbm_to_mw(rng.uniform(-30.0, 0.0))
        if 1.0 <= 10 * np.log10(k * p) <= 30.0 and pdr_from_sinr(k * p, sc.pdr_params) > 1e-10:
            out.append((sc, i, prof, k, p))
    return out


def test_criterion_09_derivatives(criterion):
    # finite differences in 50-digit arithmetic, on a utility written out
    # independently of the package
    worst_g = worst_h = 0.0
    with mp.workdps(50):
        for sc, i, prof, k, p in _derivative_points(300, 9):
            wt, prm, kk = sc.weights, sc.pdr_params, mp.mpf(float(k))

            def u(x):
                return -x ** wt.w - wt.d / mp.exp(prm.a * (kk * x) ** prm.b) ** wt.v

            g = utility_gradient(p, sc, i, prof)
            h = utility_second_derivative(p, sc, i, prof)
            fd_g = float(mp.diff(u, mp.mpf(p)))
            fd_h = float(mp.diff(u, mp.mpf(p), 2))
            # the gradient crosses zero at the best response, so it is
            # compared relative to the larger of its two terms
            worst_g = max(worst_g, abs(fd_g - g) / max(abs(g), wt.w * p ** (wt.w - 1)))
            worst_h = max(worst_h, abs(fd_h - h) / abs(fd_h))
    rng = RngStream(10, ("acceptance", "concavity"))
    all_negative = True
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        for _ in range(500):
            w = UtilityWeights(1.0 + 3.0 * rng.random(), 0.1 + 8.0 * rng.random(), 10 ** rng.uniform(-8, 1))
            sc = sample_scenario(2, rng, w, BPSK if rng.random() < 0.5 else DPSK, DEFAULT_GRID, -100.0)
            prof = rng.integers(0, 31, size=2)
            k = sc.own_gain[0] / ((dbm_to_mw(DEFAULT_GRID.levels_dbm[prof]) @ sc.cross_gain)[0] + sc.noise_mw)
            gamma = 10 ** (rng.uniform(-10.0, 30.0, size=200) / 10)
            all_negative &= bool(np.all(utility_second_derivative(gamma / k, sc, 0, prof) < 0))
    ok = worst_g <= 1e-5 and worst_h <= 1e-5 and all_negative
    assert criterion(9, ok, f"gradient max rel err {worst_g:.2g}, second derivative {worst_h:.2g} "
                            f"(<= 1e-5); second derivative negative on 1e5 points: {all_negative}")


def _scenarios(m, n, tag):
    w = CampaignConfig().resolved_weights()
    return [sample_scenario(m, RngStream(1, ("acceptance", tag, m, k)), w, BPSK, DEFAULT_GRID, -100.0)
            for k in range(n)]


def test_criterion_10_nash_equilibria(criterion):
    total = proof = fast = 0
    for m, n in ((2, 100), (3, 20)):
        for sc in _scenarios(m, n, "ne"):
            res = simultaneous_ne(sc)
            total += 1
            proof += res.converged and improving_deviations(sc, res.profile) == 0
            fast += res.method == "synchronous" and res.converged and res.iterations <= 50
    ok = proof == total and fast >= 0.95 * total
    assert criterion(10, ok, f"deviation-proof {proof}/{total}; synchronous fixed point within 50 "
                             f"iterations {fast}/{total} ({100 * fast / total:.0f}%, >= 95%)")


def test_criterion_11_social_optimality(criterion):
    rel, cloud_ok = [], True
    for k, sc in enumerate(_scenarios(2, 100, "welfare")):
        ne = simultaneous_ne(sc).profile
        _, opt = exhaustive_social_optimum(sc)
        rel.append((opt - social_welfare(ne, sc)) / abs(opt))
        cloud = random_profile_welfare(sc, 1000, RngStream(1, ("acceptance", "cloud", k)))
        cloud_ok &= bool(np.all(cloud <= opt))
    rel = np.asarray(rel)
    q = np.quantile(rel, [0.0, 0.25, 0.5, 0.75, 0.9, 1.0])
    ok = np.median(rel) <= 0.01 and cloud_ok
    assert criterion(11, ok, f"median relative gap {np.median(rel):.3g} (<= 0.01); cloud below optimum: "
                             f"{cloud_ok}; gap quantiles 0/25/50/75/90/100% "
                             + " ".join(f"{x:.3g}" for x in q))


def test_criterion_12_channel(criterion):
    iid = OnBodyFadingParams(ar_coefficient=0.0)
    g = sample_onbody_gain(iid, RngStream(12, ("acceptance", "onbody")), size=10 ** 6)
    onbody_db = 10 * np.log10(g.mean())

    pl_err = 0.0
    for dist in (1.0, 2.5, 5.0, 8.0):
        osc = JakesOscillators.draw(RngStream(12, ("acceptance", "pl", dist)), 1.1, 16, shape=(100_000,))
        mean_loss = -10 * np.log10(interbody_gain(dist, 45.0, jakes_amplitude(osc, 0.3)).mean())
        pl_err = max(pl_err, abs(mean_loss - (54.0 + 45.0 + 27.0 * np.log10(dist / 5.0))))

    osc = JakesOscillators.draw(RngStream(12, ("acceptance", "acf")), 1.1, 16, shape=(20_000,))
    taus = np.linspace(0.0, 0.3, 31)
    h = osc.complex_gain(np.concatenate([[0.0], taus]) + 0.2)
    acf = np.mean(h[:, :1].conj() * h[:, 1:], axis=0).real
    acf_err = float(np.abs(acf - special.j0(2 * np.pi * 1.1 * taus)).max())

    osc = JakesOscillators.draw(RngStream(12, ("acceptance", "rayleigh")), 1.1, 16, shape=(100_000,))
    ks = stats.kstest(jakes_amplitude(osc, 1.234), "rayleigh", args=(0, np.sqrt(0.5))).statistic

    ok = abs(onbody_db + 60.0) <= 0.1 and pl_err <= 0.2 and acf_err <= 0.05 and ks < 0.01
    assert criterion(12, ok, f"on-body mean {onbody_db:.3f} dB (-60 +/- 0.1); path-loss max error "
                             f"{pl_err:.3f} dB (<= 0.2); autocorrelation max error {acf_err:.3f} "
                             f"(<= 0.05); Rayleigh KS {ks:.4f} (< 0.01)")


def test_criterion_13_determinism(criterion, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(template_text())
    small = ["--seed", "13"]
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["run", str(cfg), "--out", str(out), *small]) == 0
        outs.append((out / "metrics.csv").read_bytes())
    ok = outs[0] == outs[1]
    assert criterion(13, ok, f"two full runs with seed 13: metrics.csv byte-identical: {ok}")
