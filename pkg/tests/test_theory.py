import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fraglab import specfun, theory
from fraglab.models import BetaType, DirichletBinary, FordAlpha, Stable, make_model, parse_params

mpmath.mp.dps = 30

MODELS = [
    DirichletBinary(1, 1), DirichletBinary(2.5, 0.4), BetaType(3, 0.2), BetaType(-0.6, -0.6),
    BetaType(1.5, -0.3), BetaType(-0.2, -0.9), FordAlpha(0.5), FordAlpha(0.8), FordAlpha(0.15),
    Stable(2.0), Stable(1.5), Stable(1.1),
]
INFINITE = [m for m in MODELS if not m.finite]


# -- special functions ------------------------------------------------------------

@settings(max_examples=200, deadline=None)
@given(st.floats(1e-8, 1e4))
def test_log_gamma_and_digamma_vs_mpmath(x):
    assert float(specfun.log_gamma(x)) == pytest.approx(float(mpmath.loggamma(x)), rel=1e-13, abs=1e-14)
    assert float(specfun.digamma(x)) == pytest.approx(float(mpmath.digamma(x)), rel=1e-12, abs=1e-13)


def test_special_function_domains():
    with pytest.raises(ValueError):
        specfun.log_gamma(0.0)
    with pytest.raises(ValueError):
        specfun.digamma(-1.5)
    assert specfun.beta_fn(-0.5, -0.5) == pytest.approx(float(mpmath.beta(-0.5, -0.5)), rel=1e-14)
    assert theory.log_gamma is specfun.log_gamma


# -- models ---------------------------------------------------------------------------

def test_model_scalars():
    assert DirichletBinary(1, 1).gamma == 0 and DirichletBinary(1, 1).finite
    assert BetaType(-0.6, -0.6).gamma == pytest.approx(0.6)
    assert BetaType(0.5, -0.3).c_nu == pytest.approx(1 / 0.3)
    assert BetaType(-0.3, -0.3).c_nu == pytest.approx(2 / 0.3)
    assert BetaType(-0.3, 2.0).b == -0.3  # stored with a >= b
    assert FordAlpha(0.3).c_nu == pytest.approx(1 / math.gamma(0.7))
    assert Stable(2.0).c_nu == pytest.approx(2 / math.sqrt(math.pi))
    assert Stable(1.5).gamma == pytest.approx(1 / 3)
    with pytest.raises(ValueError):
        BetaType(1.0, 0.0).gamma


@pytest.mark.parametrize("model", [m for m in MODELS if m.binary and not m.finite])
def test_c_nu_is_the_tail_constant(model):
    # nu(s1 <= 1 - x) = c_nu x^-gamma + O(1); differencing two cutoffs removes the constant
    def tail(x):
        return theory._quad(lambda s: float(model.s1_density(1 - math.exp(s), math.exp(s))) * math.exp(s),
                            math.log(x), math.log(0.5))
    x1, x2 = 1e-6, 1e-9
    g = model.gamma
    assert (tail(x2) - tail(x1)) / (x2**-g - x1**-g) == pytest.approx(model.c_nu, rel=5e-3)


def test_ford_half_is_half_brownian():
    x = np.linspace(0.5, 0.999, 50)
    np.testing.assert_allclose(FordAlpha(0.5).s1_density(x), Stable(2.0).s1_density(x) / 2, rtol=1e-13)


def test_stable_tagged_density_matches_binary_formula_at_two():
    u = np.linspace(0.01, 0.99, 50)
    generic = u * Stable(2.0)._pair_density(u, 1 - u)
    np.testing.assert_allclose(Stable(2.0).xi_density(u), generic, rtol=1e-13)


def test_model_factory_and_params():
    m = make_model("betatype", "a=0.5;b=-0.2")
    assert isinstance(m, BetaType) and m.label() == "betatype(a=0.5;b=-0.2)"
    assert parse_params("a=1, b=2") == {"a": 1.0, "b": 2.0}
    with pytest.raises(ValueError):
        make_model("nope")
    with pytest.raises(ValueError):
        parse_params("a1")
    with pytest.raises(ValueError):
        FordAlpha(1.0)
    with pytest.raises(ValueError):
        Stable(2.5)


# -- Laplace exponent ------------------------------------------------------------------------

@pytest.mark.parametrize("model", MODELS, ids=lambda m: m.label())
@pytest.mark.parametrize("q", [0.05, 0.6, 1.0, 3.7, 25.0])
def test_phi_closed_form_vs_quadrature(model, q):
    assert theory.phi(model, q) == pytest.approx(theory.phi_quad(model, q), rel=1e-8)


@pytest.mark.parametrize("model", MODELS, ids=lambda m: m.label())
def test_phi_prime0_closed_form_vs_quadrature(model):
    assert theory.phi_prime0(model) == pytest.approx(theory.phi_prime0_quad(model), rel=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.floats(-0.95, 3.0), st.floats(-0.95, 3.0), st.floats(0.01, 10.0))
def test_phi_betatype_property(a, b, q):
    if min(abs(a), abs(b)) < 1e-3:
        return
    m = BetaType(a, b)
    assert theory.phi(m, q) == pytest.approx(theory.phi_quad(m, q), rel=1e-8)


def test_phi_near_zero_parameter_uses_quadrature():
    close = theory.phi(BetaType(1e-6, -0.5), 1.0)
    assert close == pytest.approx(theory.phi(BetaType(1e-3, -0.5), 1.0), rel=5e-3)


def test_phi_dirichlet_closed_values():
    m = DirichletBinary(1, 1)
    # phi(q) = q / (q + 2) for the uniform split
    for q in (0.5, 1.0, 2.0):
        assert theory.phi(m, q) == pytest.approx(q / (q + 2), rel=1e-14)
    assert theory.phi_prime0(m) == pytest.approx(0.5, rel=1e-14)


@pytest.mark.parametrize("model", [FordAlpha(0.5), FordAlpha(0.8), FordAlpha(0.15), Stable(2.0), Stable(1.5),
                                   Stable(1.1), BetaType(-0.6, -0.6), BetaType(-0.9, 1.0)], ids=lambda m: m.label())
def test_phi_regular_variation(model):
    q = 2.0**20
    g = model.gamma
    assert theory.phi(model, q) / q**g == pytest.approx(math.gamma(1 - g) * model.c_nu, rel=1e-2)


@pytest.mark.parametrize("model", INFINITE, ids=lambda m: m.label())
def test_phi_regular_variation_increments(model):
    # phi(q) = Gamma(1-g) c q^g + O(1): the O(1) term is slow for small g, increments remove it
    q = 2.0**20
    g = model.gamma
    inc = (theory.phi(model, 2 * q) - theory.phi(model, q)) / (q**g * (2**g - 1))
    assert inc == pytest.approx(math.gamma(1 - g) * model.c_nu, rel=1e-2)


@pytest.mark.parametrize("model", MODELS, ids=lambda m: m.label())
def test_phi_basic_shape(model):
    qs = np.linspace(0.01, 5, 30)
    vals = np.array([theory.phi(model, q) for q in qs])
    assert theory.phi(model, 0.0) == 0.0
    assert (np.diff(vals) > 0).all()
    assert (np.diff(vals, 2) < 1e-12).all()  # concave


# -- limit constants -----------------------------------------------------------------

def test_expected_Xk_exact():
    assert abs(theory.expected_Xk(3) - math.sqrt(3 * math.pi)) <= 1e-12
    assert abs(theory.expected_Xk(4) - 4 / math.sqrt(math.pi)) <= 1e-12
    with pytest.raises(ValueError):
        theory.expected_Xk(2)


def test_brownian_constants():
    p = theory.classify(Stable(2.0), 2)
    assert p.regime == theory.CRITICAL and p.log_correction
    assert theory.c_cr(Stable(2.0), 2) == pytest.approx(1 / (math.pi * math.sqrt(2)), rel=1e-14)
    assert p.constant == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-14)
    for r, c in enumerate(p.multiplicity, 1):
        want = math.gamma(r - 0.5) / (2 * math.sqrt(2) * math.factorial(r) * math.pi)
        assert c == pytest.approx(want, rel=1e-13)


def test_ford_half_critical_constant():
    k = 2
    closed = k ** (1 / k - 1) * math.gamma(3 - 2 / k) / math.gamma(1 - 1 / k)
    assert closed == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-15)
    assert theory.classify(FordAlpha(0.5), k).constant == pytest.approx(closed, rel=1e-14)


def test_dirichlet_subcritical_constant():
    assert theory.c_sub(DirichletBinary(1, 1), 2) == pytest.approx(math.sqrt(2) * math.pi / 4, rel=1e-10)
    p = theory.classify(DirichletBinary(1, 1), 2)
    assert p.constant == pytest.approx(math.sqrt(2) * math.pi**1.5 / 4, rel=1e-10)


def test_c_sub_numerator_vs_mpmath():
    m = FordAlpha(0.3)
    k = 3
    # 1 - (1-w)^3 - w^3 = 3w(1-w), factorised to avoid cancellation at tiny w
    f = lambda w: (3 * w * (1 - w)) ** (mpmath.mpf(1) / k) * (  # noqa: E731
        0.3 * (w * (1 - w)) ** -1.3 + 2 * 0.4 * (w * (1 - w)) ** -0.3) / mpmath.gamma(0.7)
    # the integrand is ~ w^(-0.97): integrate in t = -log w out to infinity
    ref = float(mpmath.quad(lambda t: f(mpmath.exp(-t)) * mpmath.exp(-t), [mpmath.log(2), 10, 100, 1000, 10**4, mpmath.inf]))
    assert theory.c_sub_numerator(m, k) == pytest.approx(ref, rel=1e-9)


@pytest.mark.parametrize("model,k", [(DirichletBinary(1, 1), 2), (BetaType(-0.3, 0.5), 2), (FordAlpha(0.3), 3),
                                     (Stable(2.0), 2), (FordAlpha(0.5), 2), (BetaType(-0.5, -0.5), 2)])
def test_constants_homogeneous(model, k):
    fn = theory.c_cr if theory.regime_of(model.gamma, k) == theory.CRITICAL else theory.c_sub
    base = fn(model, k)
    for s in (2.0, 0.25):  # exact binary scalings
        scaled = type(model)(**model.params(), scale=s)
        assert fn(scaled, k) == base
    scaled = type(model)(**model.params(), scale=3.7)
    assert fn(scaled, k) == pytest.approx(base, rel=1e-14)


def test_regime_errors():
    with pytest.raises(ValueError):
        theory.c_cr(FordAlpha(0.8), 2)
    with pytest.raises(ValueError):
        theory.c_sub(FordAlpha(0.8), 2)
    with pytest.raises(ValueError):
        theory.c_sub(Stable(1.5), 2)
    with pytest.raises(ValueError):
        theory.expected_area(DirichletBinary(1, 1), 2)
    with pytest.raises(ValueError):
        theory.classify(FordAlpha(0.5), 1)


def test_classify_regimes():
    assert theory.classify(FordAlpha(0.8), 2).regime == theory.SUPERCRITICAL
    assert theory.classify(FordAlpha(0.3), 3).regime == theory.SUBCRITICAL
    assert theory.classify(Stable(2.0), 3).regime == theory.SUPERCRITICAL
    assert theory.classify(BetaType(-0.5, 1.0), 2).regime == theory.CRITICAL


@pytest.mark.parametrize("regime,k,gamma,r,want", [
    (theory.SUBCRITICAL, 2, 0.0, 1, 0.5), (theory.CRITICAL, 2, 0.5, 2, 0.125),
    (theory.SUPERCRITICAL, 2, 0.8, 1, 0.8), (theory.SUPERCRITICAL, 2, 0.8, 2, 0.08),
])
def test_multiplicity_ratio_targets(regime, k, gamma, r, want):
    assert theory.multiplicity_ratio(regime, k, gamma, r) == pytest.approx(want, rel=1e-14)


@pytest.mark.parametrize("regime,k,gamma", [(theory.SUPERCRITICAL, 2, 0.8), (theory.SUPERCRITICAL, 4, 1 / 3),
                                             (theory.SUBCRITICAL, 3, 0.1), (theory.CRITICAL, 2, 0.5)])
def test_multiplicity_ratios_telescope(regime, k, gamma):
    # sum_{r <= R} ratio_r = 1 - Gamma(R + 1 - g) / (Gamma(1 - g) R!), g the index of the ratio law
    g = gamma if regime == theory.SUPERCRITICAL else 1 / k
    for R in (1, 5, 60):
        total = sum(theory.multiplicity_ratio(regime, k, gamma, r) for r in range(1, R + 1))
        exact = 1 - math.exp(math.lgamma(R + 1 - g) - math.lgamma(1 - g) - math.lgamma(R + 1))
        assert total == pytest.approx(exact, rel=1e-12)


def test_prediction_multiplicities_scale_with_constant():
    p = theory.classify(FordAlpha(0.8), 2, r_max=5)
    for r, c in enumerate(p.multiplicity, 1):
        assert c == pytest.approx(p.constant * p.ratio_target(r), rel=1e-14)


def test_area_and_limit_mean():
    assert theory.expected_area(Stable(2.0), 3) == pytest.approx(1.0, rel=1e-14)
    ford = FordAlpha(0.8)
    want = math.gamma(0.2) * 2**0.8 * ford.c_nu / theory.phi(ford, 0.6)
    assert theory.limit_mean(ford, 2) == pytest.approx(want, rel=1e-14)
    assert theory.limit_mean(ford, 2) == pytest.approx(2**0.8 / theory.phi(ford, 0.6), rel=1e-13)


# -- f_k and potential densities ------------------------------------------------------------

@pytest.mark.parametrize("x", [1e-12, 1e-6, 0.01, 0.3, 0.49])
def test_f2_closed_forms(x):
    stable = 2 * math.sqrt(2) / math.sqrt(math.pi) * math.sqrt(1 - 2 * x) / math.sqrt(x)
    assert theory.f_k_numeric(Stable(2.0), 2, x) == pytest.approx(stable, rel=1e-9)
    assert theory.f_k_numeric(DirichletBinary(1, 1), 2, x) == pytest.approx(math.sqrt(1 - 2 * x), rel=1e-9)


def test_f_k_support_and_monotone():
    m = FordAlpha(0.4)
    assert theory.f_k_numeric(m, 3, 0.76) == 0.0
    xs = np.geomspace(1e-8, 0.74, 25)
    vals = [theory.f_k_numeric(m, 3, x) for x in xs]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    with pytest.raises(ValueError):
        theory.f_k_numeric(m, 3, 1.0)


@pytest.mark.parametrize("a", [0.2, 0.4999, 0.5, 0.5004, 0.65, 0.9])
@pytest.mark.parametrize("t", [0.05, 0.69, 0.7, 4.0])
def test_ford_potential_density_vs_mpmath(a, t):
    x = mpmath.exp(-t)
    ref = x ** (3 - 2 * a) * (1 - x) ** (a - 1) / mpmath.gamma(a) * mpmath.hyp2f1(2, 1 - a, a, 1 - x)
    assert theory.ford_potential_density(a, t) == pytest.approx(float(ref), rel=1e-10)


@pytest.mark.parametrize("a", [0.15, 0.5, 0.8])
@pytest.mark.parametrize("q", [0.3, 1.0, 4.0])
def test_ford_potential_laplace_transform(a, q):
    L = theory.potential_laplace(lambda t: theory.ford_potential_density(a, t), q)
    assert abs(L * theory.phi(FordAlpha(a), q) - 1) <= 1e-6


@pytest.mark.parametrize("beta", [1.3, 2.0])
@pytest.mark.parametrize("q", [0.5, 2.0])
def test_stable_potential_laplace_transform(beta, q):
    L = theory.potential_laplace(lambda y: theory.stable_potential_density(beta, y), q)
    assert abs(L * theory.phi(Stable(beta), q) - 1) <= 1e-8


def test_truncated_phi_converges():
    m = FordAlpha(0.8)
    errs = [abs(theory.phi_eps(m, 0.6, e) / theory.phi(m, 0.6) - 1) for e in (1e-1, 1e-2, 1e-3)]
    assert errs == sorted(errs, reverse=True) and errs[-1] < 1e-5
