"""Limit constants, Laplace exponents and regime classification.

Closed forms are evaluated through :mod:`fraglab.specfun`; every closed form
that has an integral representation also has a ``*_quad`` twin computed
directly from the dislocation density, which the tests use as an independent
check.  Integrals over ``[1/2, 1)`` are taken in the variable
``s = log(1 - x)`` so that the power singularities at ``x = 1`` become
exponentially decaying tails.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from fraglab import specfun
from fraglab.models import BetaType, DirichletBinary, DislocationModel, FordAlpha, Stable
from fraglab.specfun import digamma, log_gamma  # noqa: F401  (public re-export)

CRITICAL_TOL = 1e-12
QUAD_EPSABS = 1e-13
QUAD_EPSREL = 1e-12

SUBCRITICAL = "subcritical"
CRITICAL = "critical"
SUPERCRITICAL = "supercritical"
KARLIN = "karlin"  # urn scheme with regularly varying S_x; gamma holds the index


class QuadratureError(RuntimeError):
    pass


# -- quadrature helpers -----------------------------------------------------------

def _quad(f, lo, hi, **kw):
    opts = dict(epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=400)
    opts.update(kw)
    val, err = integrate.quad(f, lo, hi, **opts)
    if not np.isfinite(val) or err > 1e-6 * max(1.0, abs(val)):
        raise QuadratureError(f"quadrature did not converge (value {val}, error {err})")
    return val


# densities grow at most like w^-2; below this they overflow.  _near_one adds
# the [0, W_MIN] piece back through a fitted local power law
W_MIN = 1e-150
# jump-size cap for the tagged Levy density: beyond it e^{-x} terms underflow.
# The mass dropped decays like e^{-(1 - gamma) X_CAP}
X_CAP = 300.0


def _near_one(F, w_hi=0.5):
    """int_0^{w_hi} F(w) dw via w = e^s; F may blow up like a power at 0."""
    body = _quad(lambda s: F(math.exp(s)) * math.exp(s), math.log(W_MIN), math.log(w_hi))
    # [0, W_MIN] is not negligible when F ~ w^p with p close to -1: fit the local power
    f0, f1 = F(W_MIN), F(W_MIN * math.e)
    if f0 != 0 and f1 != 0 and (f0 > 0) == (f1 > 0) and math.isfinite(f0) and math.isfinite(f1):
        p = math.log(f1 / f0)
        if p > -1:
            body += f0 * W_MIN / (p + 1)
    return body


def _s1_integral(model: DislocationModel, g):
    """int_{1/2}^1 g(x, 1-x) nu(s1 in dx) for a binary model."""
    if not model.binary:
        raise ValueError(f"{model.label()} has no explicit binary dislocation density")
    return _near_one(lambda w: g(1.0 - w, w) * float(model.s1_density(1.0 - w, w)))


def _xi_integral(model: DislocationModel, g):
    """int_0^1 g(u, 1-u) Xi(du) in the fragment-size variable."""
    upper = _near_one(lambda w: g(1.0 - w, w) * float(model.xi_density(1.0 - w, w)))
    lower = _near_one(lambda u: g(u, 1.0 - u) * float(model.xi_density(u, 1.0 - u)))
    return upper + lower


def _one_minus_pow(w, p):
    """1 - (1-w)^p, accurate for small w."""
    return -math.expm1(p * math.log1p(-w))


# -- Laplace exponent ---------------------------------------------------------------

def phi(model: DislocationModel, q: float) -> float:
    """Laplace exponent of the tagged-fragment subordinator, q >= 0."""
    if q < 0:
        raise ValueError(f"phi is only exposed on q >= 0, got {q}")
    if q == 0:
        return 0.0
    val = _phi_closed(model, q)
    if val is None or not np.isfinite(val):
        return phi_quad(model, q)
    return val


def _gamma_ratio(num, den):
    """prod Gamma(num) / prod Gamma(den); large (positive) arguments go through log-gamma."""
    if max(num + den) < 150:
        out = 1.0
        for x in num:
            out *= float(specfun.gamma(x))
        for x in den:
            out *= float(specfun.rgamma(x))
        return out
    return math.exp(sum(float(specfun.log_gamma(x)) for x in num) - sum(float(specfun.log_gamma(x)) for x in den))


def _phi_closed(model, q):
    if isinstance(model, Stable):
        b = model.beta
        return model.scale * b * _gamma_ratio((q + 1 - 1 / b,), (q,))
    if isinstance(model, FordAlpha):
        a = model.a
        return model.scale * _gamma_ratio((q + 1 - a, q + 2), (q, q + 3 - 2 * a))
    if isinstance(model, (BetaType, DirichletBinary)):
        a, b = model.a, model.b
        if min(abs(a), abs(b)) < 1e-4:
            return None
        # B(a + q + 1, b) = Gamma(b) Gamma(a + q + 1) / Gamma(a + b + q + 1), and symmetrically
        left = float(specfun.gamma(b)) * _gamma_ratio((a + q + 1,), (a + b + q + 1,))
        right = float(specfun.gamma(a)) * _gamma_ratio((b + q + 1,), (a + b + q + 1,))
        return model.scale * (float(specfun.beta_fn(a, b)) - left - right)
    return None


def phi_quad(model: DislocationModel, q: float) -> float:
    """phi(q) by quadrature of the dislocation (or tagged Levy) density."""
    if model.binary:
        return _s1_integral(
            model, lambda x, w: _one_minus_pow(w, q + 1) - w ** (q + 1)
        )
    return _xi_integral(model, lambda u, w: -math.expm1(q * math.log(u)) if u > 0 else 1.0)


def phi_prime0(model: DislocationModel) -> float:
    """phi'(0+) = int sum_i s_i |log s_i| nu(ds)."""
    g, rg, psi = specfun.gamma, specfun.rgamma, specfun.psi
    val = None
    if isinstance(model, Stable):
        b = model.beta
        val = model.scale * b * float(g(1 - 1 / b))
    elif isinstance(model, FordAlpha):
        a = model.a
        val = model.scale * float(g(1 - a) * rg(3 - 2 * a))
    elif isinstance(model, (BetaType, DirichletBinary)):
        a, b = model.a, model.b
        if min(abs(a), abs(b)) >= 1e-4:
            with np.errstate(invalid="ignore", divide="ignore"):
                bracket = (a + b) * psi(a + b + 1) - a * psi(a + 1) - b * psi(b + 1)
                val = model.scale * float(g(a) * g(b) * rg(a + b + 1) * bracket)
    if val is None or not np.isfinite(val):
        return phi_prime0_quad(model)
    return val


def phi_prime0_quad(model: DislocationModel) -> float:
    if model.binary:
        return _s1_integral(model, lambda x, w: -x * math.log1p(-w) - w * math.log(w))
    return _xi_integral(model, lambda u, w: -math.log(u) if u > 0 else math.inf)


def small_jump_mean(model: DislocationModel, eps: float) -> float:
    """int_0^eps x Xi(dx), the drift replacing jumps below eps."""
    return _quad(lambda s: math.exp(2 * s) * float(model.xi_density_x(math.exp(s))),
                 math.log(W_MIN), math.log(eps))


def phi_eps(model: DislocationModel, q: float, eps: float) -> float:
    """Laplace exponent after replacing jumps below eps by their mean drift."""
    g = lambda x: -math.expm1(-q * x) * float(model.xi_density_x(x))  # noqa: E731
    tail = _quad(lambda s: g(math.exp(s)) * math.exp(s), math.log(eps), 0.0) if eps < 1 else 0.0
    tail += _quad(g, max(eps, 1.0), X_CAP)
    drift = small_jump_mean(model, eps)
    return q * drift + tail


# -- (H_gamma) and the limit constants ---------------------------------------------------

def hgamma_params(model: DislocationModel) -> tuple[float, float]:
    """(gamma, c_nu) with nu(s1 <= 1 - x) ~ c_nu x^{-gamma}."""
    return model.gamma, model.c_nu


def _require_k(k):
    if int(k) != k or k < 2:
        raise ValueError(f"k must be an integer >= 2, got {k}")


def regime_of(gamma: float, k: int) -> str:
    kg = k * gamma
    if abs(kg - 1.0) <= CRITICAL_TOL:
        return CRITICAL
    return SUPERCRITICAL if kg > 1 else SUBCRITICAL


def c_sub_numerator(model: DislocationModel, k: int) -> float:
    return _s1_integral(
        model,
        lambda x, w: max(_one_minus_pow(w, k) - w ** k, 0.0) ** (1.0 / k),
    )


def c_sub(model: DislocationModel, k: int) -> float:
    """C^sub(k) = int (1 - sum s_i^k)^{1/k} nu(ds) / phi'(0+), for k gamma < 1."""
    _require_k(k)
    if regime_of(model.gamma, k) != SUBCRITICAL:
        raise ValueError(f"C^sub needs k*gamma < 1 (k={k}, gamma={model.gamma})")
    if not model.binary:
        raise ValueError(f"C^sub for {model.label()} needs the non-explicit stable measure")
    return c_sub_numerator(model, k) / phi_prime0(model)


def c_cr(model: DislocationModel, k: int) -> float:
    """C^cr(k) = c_nu k^{1/k - 1} / phi'(0+), for k gamma = 1."""
    _require_k(k)
    if regime_of(model.gamma, k) != CRITICAL:
        raise ValueError(f"C^cr needs k*gamma = 1 (k={k}, gamma={model.gamma})")
    return model.c_nu * k ** (1.0 / k - 1.0) / phi_prime0(model)


def expected_Xk(k: int) -> float:
    """Mean of the Brownian CRT limit X_k, k >= 3."""
    if int(k) != k or k < 3:
        raise ValueError("expected_Xk needs an integer k >= 3")
    return math.sqrt(k) * math.exp(float(specfun.log_gamma(k / 2 - 1) - specfun.log_gamma((k - 1) / 2)))


def expected_area(model: DislocationModel, k: int) -> float:
    """E[A_k] = c_nu / phi(k gamma - 1), supercritical only."""
    _require_k(k)
    if regime_of(model.gamma, k) != SUPERCRITICAL:
        raise ValueError("expected_area needs k*gamma > 1")
    return model.c_nu / phi(model, k * model.gamma - 1.0)


def limit_mean(model: DislocationModel, k: int) -> float:
    """E[Gamma(1-gamma) k^gamma A_k], the mean of the supercritical limit."""
    g = model.gamma
    return float(specfun.gamma(1 - g)) * k ** g * expected_area(model, k)


@dataclass(frozen=True)
class RegimePrediction:
    regime: str
    k: int
    gamma: float
    exponent: float
    log_correction: bool
    constant: float  # full limit of N_n / (n^e [log n]); mean of the limit if random
    random_limit: bool
    multiplicity: tuple = field(default=())  # r = 1, 2, ... limit constants of N_{n,r}

    def ratio_target(self, r: int) -> float:
        """Deterministic limit of N_{n,r} / N_n."""
        return multiplicity_ratio(self.regime, self.k, self.gamma, r)


def multiplicity_ratio(regime: str, k: int, gamma: float, r: int) -> float:
    lg = specfun.log_gamma
    if regime in (SUPERCRITICAL, KARLIN):
        return gamma * math.exp(float(lg(r - gamma) - lg(1 - gamma) - lg(r + 1)))
    return math.exp(float(lg(r - 1 / k) - lg(1 - 1 / k) - lg(r + 1))) / k


def classify(model: DislocationModel, k: int, r_max: int = 5) -> RegimePrediction:
    _require_k(k)
    gamma = model.gamma
    regime = regime_of(gamma, k)
    lg = specfun.log_gamma
    if regime == SUPERCRITICAL:
        area = expected_area(model, k)
        const = float(specfun.gamma(1 - gamma)) * k ** gamma * area
        mult = tuple(
            gamma * math.exp(float(lg(r - gamma) - lg(r + 1))) * k ** gamma * area
            for r in range(1, r_max + 1)
        )
        return RegimePrediction(regime, k, gamma, gamma, False, const, True, mult)
    C = c_cr(model, k) if regime == CRITICAL else c_sub(model, k)
    const = float(specfun.gamma(1 - 1 / k)) * C
    mult = tuple(
        math.exp(float(lg(r - 1 / k) - lg(r + 1))) / k * C for r in range(1, r_max + 1)
    )
    return RegimePrediction(regime, k, gamma, 1.0 / k, regime == CRITICAL, const, False, mult)


# -- f_k and potential densities ------------------------------------------------------------

def _solve_w(k, x):
    """w in (0, 1/2] with 1 - (1-w)^k - w^k = x."""
    H = lambda w: _one_minus_pow(w, k) - w ** k - x  # noqa: E731
    lo = x / k * 0.5
    while H(lo) > 0:
        lo *= 0.5
    return optimize.brentq(H, lo, 0.5, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)


def f_k_numeric(model: DislocationModel, k: int, x: float) -> float:
    """f_k(x) = nu(sum_i s_i^k <= 1 - x) for a binary model, 0 < x < 1."""
    _require_k(k)
    if not 0 < x < 1:
        raise ValueError(f"f_k needs 0 < x < 1, got {x}")
    if x >= 1 - 2.0 ** (1 - k):
        return 0.0
    w = _solve_w(k, x)
    if not model.binary:
        raise ValueError(f"{model.label()} has no explicit binary dislocation density")
    return _quad(lambda s: float(model.s1_density(1 - math.exp(s), math.exp(s))) * math.exp(s),
                 math.log(w), math.log(0.5))


def _hyp_series(A, B, C, z, tol, max_terms=100_000):
    term = 1.0
    total = 1.0
    n = 0
    while True:
        term *= (A + n) * (B + n) / ((C + n) * (n + 1)) * z
        total += term
        n += 1
        if n > 10 and abs(term) < tol * abs(total):
            return total
        if n >= max_terms:
            raise QuadratureError(f"hypergeometric series did not converge at z={z}")


def ford_potential_density(a: float, t: float, tol: float = 1e-14) -> float:
    """Density at t > 0 of the potential measure of Ford's tagged subordinator.

    f_a(t) = g_a(e^{-t}) with g_a(x) = x^{3-2a} (1-x)^{a-1} / Gamma(a) *
    sum_n (2)_n (1-a)_n / ((a)_n n!) (1-x)^n.  For 1 - x > 1/2 the series is
    continued to x = 0 through the standard z -> 1 - z connection formula.
    """
    if not 0 < a < 1:
        raise ValueError("ford_potential_density needs 0 < a < 1")
    if not t > 0:
        raise ValueError("ford_potential_density needs t > 0")
    x = math.exp(-t)
    z = -math.expm1(-t)
    g, rg = specfun.gamma, specfun.rgamma
    if a == 0.5:
        return z ** -0.5 / math.sqrt(math.pi)
    if z <= 0.5:
        return float(x ** (3 - 2 * a) * z ** (a - 1) * rg(a)) * _hyp_series(2.0, 1 - a, a, z, tol)
    if abs(a - 0.5) > 1e-3:
        first = float(g(2 * a - 3) * rg(a - 2) * rg(2 * a - 1)) * x ** (3 - 2 * a) \
            * _hyp_series(2.0, 1 - a, 4 - 2 * a, x, tol)
        second = float(g(3 - 2 * a) * rg(1 - a)) * _hyp_series(a - 2, 2 * a - 1, 2 * a - 2, x, tol)
        return z ** (a - 1) * (first + second)
    # Euler transform; its coefficients carry a factor (2a - 1), so the slow
    # algebraic tail is negligible this close to a = 1/2
    return float(rg(a)) * z ** (a - 1) * _hyp_series(a - 2, 2 * a - 1, a, z, tol, max_terms=10**6)


def stable_potential_density(beta: float, y: float) -> float:
    """Potential density (beta Gamma(1-1/beta))^{-1} (1 - e^{-y})^{-1/beta}."""
    return (-math.expm1(-y)) ** (-1.0 / beta) / (beta * float(specfun.gamma(1 - 1 / beta)))


def potential_laplace(density, q: float) -> float:
    """int_0^inf e^{-q t} density(t) dt, split at t = 1 for the t -> 0 singularity."""
    head = _quad(lambda s: math.exp(-q * math.exp(s)) * density(math.exp(s)) * math.exp(s),
                 math.log(W_MIN), 0.0)
    tail = _quad(lambda t: math.exp(-q * t) * density(t), 1.0, math.inf)
    return head + tail
