from math import comb

import numpy as np
import pytest

from bancoex.coexistence import (CoexistenceParams, active_count_distribution,
                                 active_count_pmf_unconditioned, overlap_probability,
                                 sample_active_set)
from bancoex.core import ConfigurationError, RngStream


def test_four_of_eight_on_four_channels():
    assert active_count_pmf_unconditioned(8, 4)[4] == pytest.approx(70 / 256, rel=1e-12)
    assert active_count_distribution(8, 4)[3] == pytest.approx(70 / 255, rel=1e-12)


@pytest.mark.parametrize("nc", [2, 3, 4, 10])
def test_single_ban(nc):
    np.testing.assert_allclose(active_count_distribution(1, nc), [1.0])


def test_sums_to_one():
    assert active_count_distribution(8, 4).sum() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("M", range(1, 13))
@pytest.mark.parametrize("nc", [2, 3, 4, 7])
def test_binomial_against_exact_arithmetic(M, nc):
    q = 2 / nc
    exact = [comb(M, m) * q ** m * (1 - q) ** (M - m) for m in range(M + 1)]
    np.testing.assert_allclose(active_count_pmf_unconditioned(M, nc), exact, rtol=1e-12, atol=1e-300)


def test_conditioning_keeps_ratios():
    raw = active_count_pmf_unconditioned(8, 4)[1:]
    cond = active_count_distribution(8, 4)
    np.testing.assert_allclose(cond[1:] / cond[:-1], raw[1:] / raw[:-1], rtol=1e-12)


def test_two_channels_always_all_active():
    # overlap probability 1: every BAN collides with every other
    assert overlap_probability(2) == 1.0
    np.testing.assert_allclose(active_count_distribution(5, 2), [0, 0, 0, 0, 1.0])


@pytest.mark.parametrize("nc", [0, 1])
def test_rejects_fewer_than_two_channels(nc):
    with pytest.raises(ConfigurationError, match="N_c >= 2"):
        CoexistenceParams(8, nc)
    with pytest.raises(ConfigurationError):
        active_count_distribution(8, nc)


def test_fixed_m_validation():
    with pytest.raises(ConfigurationError):
        CoexistenceParams(8, 4, "fixed_m", 9)
    with pytest.raises(ConfigurationError):
        CoexistenceParams(8, 4, "fixed_m", None)
    with pytest.raises(ConfigurationError):
        CoexistenceParams(8, 4, "bogus")


def test_fixed_m_equal_to_total_is_everyone():
    s = sample_active_set(CoexistenceParams(8, 4, "fixed_m", 8), RngStream(1, ("a",)))
    np.testing.assert_array_equal(s, np.arange(8))


def test_fixed_m_size_and_uniqueness():
    rng = RngStream(2, ("a",))
    for _ in range(200):
        s = sample_active_set(CoexistenceParams(8, 4, "fixed_m", 3), rng)
        assert len(s) == 3 == len(np.unique(s))


def _draw_counts(n):
    rng = RngStream(3, ("coex",))
    params = CoexistenceParams(8, 4)
    sizes = np.zeros(9, dtype=int)
    members = np.zeros(8, dtype=int)
    for _ in range(n):
        s = sample_active_set(params, rng)
        assert 1 <= len(s) <= 8 and len(np.unique(s)) == len(s)
        sizes[len(s)] += 1
        members[s] += 1
    return sizes, members


def test_empirical_distribution_and_symmetry():
    n = 100_000
    sizes, members = _draw_counts(n)
    assert sizes[0] == 0
    tv = 0.5 * np.abs(sizes[1:] / n - active_count_distribution(8, 4)).sum()
    assert tv < 0.01
    freq = members / members.sum()
    np.testing.assert_allclose(freq, 1 / 8, rtol=0.01)
