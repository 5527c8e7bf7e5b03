import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fraglab import urn


def law(*p):
    return urn.ExplicitLaw(np.array(p, dtype=float))


def test_two_urn_exact_counts():
    ex = urn.expected_counts(law(0.5, 0.5), 2)
    assert ex.N == 1.5
    assert ex.Nr[1] == pytest.approx(1.0, abs=1e-15)
    assert ex.Nr[2] == pytest.approx(0.5, abs=1e-15)


def test_two_urn_monte_carlo():
    rng = np.random.default_rng(0)
    reps = 20000
    draws = [urn.simulate_occupancy(law(0.5, 0.5), 2, rng) for _ in range(reps)]
    N = np.array([d.N for d in draws])
    N1 = np.array([d.N_r(1) for d in draws])
    N2 = np.array([d.N_r(2) for d in draws])
    for sample, target in ((N, 1.5), (N1, 1.0), (N2, 0.5)):
        assert abs(sample.mean() - target) < 3 * sample.std() / math.sqrt(reps)


def test_single_urn():
    s = urn.simulate_occupancy(law(1.0), 17, np.random.default_rng(1))
    assert s.N == 1 and s.histogram == {17: 1}


@pytest.mark.parametrize("L", [law(0.7, 0.2, 0.1), urn.ZipfLaw(1.5), urn.GeometricLaw(0.3)])
def test_one_draw_fills_one_urn(L):
    assert urn.expected_counts(L, 1).N == pytest.approx(1.0, abs=1e-3)
    assert urn.simulate_occupancy(L, 1, np.random.default_rng(2)).N == 1


def test_zipf_expected_vs_monte_carlo():
    rng = np.random.default_rng(3)
    L = urn.ZipfLaw(2.0)
    reps = 10**4
    N = np.array([urn.simulate_occupancy(L, 1000, rng).N for _ in range(reps)])
    ex = urn.expected_counts(L, 1000)
    assert abs(N.mean() - ex.N) < 3 * N.std() / math.sqrt(reps)


def test_random_finite_laws_match_exact_means():
    rng = np.random.default_rng(4)
    for _ in range(20):
        L = urn.ExplicitLaw.from_weights(rng.pareto(1.5, int(rng.integers(2, 200))) + 1e-3)
        n = int(rng.integers(1, 1001))
        ex = urn.expected_counts(L, n, r_max=3)
        reps = 2000
        draws = [urn.simulate_occupancy(L, n, rng) for _ in range(reps)]
        N = np.array([d.N for d in draws], dtype=float)
        # a sample with no spread still resolves the mean only to about 1/reps
        se = lambda x: max(x.std() / math.sqrt(reps), 1.0 / reps)  # noqa: E731
        assert abs(N.mean() - ex.N) <= 4 * se(N)
        for r in ex.Nr:
            x = np.array([d.N_r(r) for d in draws], dtype=float)
            assert abs(x.mean() - ex.Nr[r]) <= 4 * se(x)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.01, 10), min_size=1, max_size=30), st.integers(1, 500), st.integers(0, 2**32 - 1))
def test_occupancy_invariants(weights, n, seed):
    s = urn.simulate_occupancy(urn.ExplicitLaw.from_weights(weights), n, np.random.default_rng(seed))
    assert sum(s.histogram.values()) == s.N
    assert sum(r * c for r, c in s.histogram.items()) == n
    assert 1 <= s.N <= min(n, len(weights))


def test_zipf_tail_draws_are_singletons():
    # tiny truncation: almost every draw lands in the tail
    L = urn.ZipfLaw(1.1)
    s = urn.simulate_occupancy(L, 50, np.random.default_rng(5), J=1, tol=math.inf)
    assert sum(r * c for r, c in s.histogram.items()) == 50


def test_truncation_error_when_too_coarse():
    with pytest.raises(urn.TruncationError):
        urn.simulate_occupancy(urn.ZipfLaw(2.0), 10**6, np.random.default_rng(0), J=100)


def test_tail_mass_bounds():
    z = urn.ZipfLaw(2.0)
    for J in (1, 10, 1000):
        exact = 1 - z.head(J).sum()
        assert z.tail_mass(J) == pytest.approx(exact, rel=1e-9, abs=1e-15)
        assert z.tail_mass(J) <= z.tail_mass_bound(J)
    g = urn.GeometricLaw(0.4)
    assert g.tail_mass(5) == pytest.approx(1 - g.head(5).sum(), abs=1e-15)
    assert g.tail_square(3) == pytest.approx((g.head(4000)[3:] ** 2).sum(), rel=1e-12)


def test_law_validation():
    with pytest.raises(ValueError):
        law(0.2, 0.8)
    with pytest.raises(ValueError):
        law(0.5, 0.4)
    with pytest.raises(ValueError):
        urn.ZipfLaw(1.0)
    with pytest.raises(ValueError):
        urn.GeometricLaw(1.0)


def test_distribution_function_examples():
    L = law(1 / 2, 1 / 3, 1 / 6)
    assert urn.urn_distribution_function(L, 0.3) == 2
    assert urn.urn_distribution_function(L, 1 / 3) == 2  # ties count
    assert urn.urn_distribution_function(L, 1.5) == 0
    z = urn.ZipfLaw(2.0)
    for x in (1e-2, 1e-5, 3e-9):
        assert urn.urn_distribution_function(z, x) == math.floor((x * math.pi**2 / 6) ** -0.5)
    assert urn.urn_distribution_function(z, 2.0) == 0


@settings(max_examples=100, deadline=None)
@given(st.sampled_from([urn.ZipfLaw(1.5), urn.ZipfLaw(3.0), urn.GeometricLaw(0.7),
                        urn.ExplicitLaw.from_weights([5, 4, 4, 2, 1, 1, 0.5])]),
       st.floats(1e-9, 0.99), st.floats(1e-9, 0.99))
def test_distribution_function_monotone_and_exact(L, x, y):
    lo, hi = sorted((x, y))
    s_lo, s_hi = urn.urn_distribution_function(L, lo), urn.urn_distribution_function(L, hi)
    assert s_lo >= s_hi
    # definition: p_j >= x for j <= S_x and p_{S_x + 1} < x
    if s_lo:
        assert L.p(s_lo) >= lo
    if not isinstance(L, urn.ExplicitLaw) or s_lo < L.size:
        assert L.p(s_lo + 1) < lo


def test_distribution_function_at_atoms():
    z = urn.ZipfLaw(2.0)
    for j in (1, 2, 7, 1000):
        assert urn.urn_distribution_function(z, float(z.p(j))) >= j


@pytest.mark.parametrize("s", [1.5, 2.0, 3.0])
def test_zipf_regular_variation(s):
    z = urn.ZipfLaw(s)
    vals = [2 ** (-m / s) * urn.urn_distribution_function(z, 2.0**-m) for m in range(20, 61, 10)]
    errs = [abs(v / z.zeta ** (-1 / s) - 1) for v in vals]
    assert errs[-1] < 1e-4
    assert errs == sorted(errs, reverse=True)


def test_karlin_prediction_examples():
    total, one = urn.karlin_prediction(0.5, 1.0, 1)
    assert total == pytest.approx(math.sqrt(math.pi), rel=1e-15)
    assert one == pytest.approx(math.sqrt(math.pi) / 2, rel=1e-15)
    assert one / total == pytest.approx(0.5)
    assert urn.karlin_prediction(0.3, 0.0, 2) == (0.0, 0.0)
    assert urn.karlin_prediction(0.5, math.sqrt(6 / math.pi**2)) == pytest.approx(math.sqrt(6 / math.pi), rel=1e-14)
    with pytest.raises(ValueError):
        urn.karlin_prediction(1.0, 1.0)


def test_karlin_consistency_zipf2():
    rng = np.random.default_rng(6)
    target = math.sqrt(6 / math.pi)
    means = []
    for n in (10**4, 10**5, 10**6):
        vals = [urn.simulate_occupancy(urn.ZipfLaw(2.0), n, rng).N / math.sqrt(n) for _ in range(40)]
        means.append(np.mean(vals))
    devs = [abs(m / target - 1) for m in means]
    assert devs[-1] < 0.03
    assert means == sorted(means)  # approach from below
