"""Tagged-fragment subordinator and the Monte Carlo estimators built on it.

The tagged fragment has size exp(-xi) with xi a subordinator whose Levy
measure Xi is read off the dislocation measure.  For finite measures xi is
compound Poisson at rate nu(S); otherwise jumps below ``eps`` are replaced by
their mean drift and the rest are drawn by inversion from a tabulated CDF.

All path estimators run many paths in lockstep, one jump per step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy import interpolate

from fraglab import theory
from fraglab.models import DislocationModel, _BetaLike

DEFAULT_EPS = 1e-3
TABLE_KNOTS = 2**14
MAX_STEPS = 10**6
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


class Estimate(NamedTuple):
    mean: float
    stderr: float  # nan when undefined (a single replica)


def _estimate(samples) -> Estimate:
    samples = np.asarray(samples, dtype=float)
    if samples.size < 2:
        return Estimate(float(samples.mean()), math.nan)
    return Estimate(float(samples.mean()), float(samples.std(ddof=1) / math.sqrt(samples.size)))


def _gl_cells(lo, hi, f):
    """Integral of f over each cell [lo_i, hi_i] by 8-point Gauss-Legendre."""
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    nodes = mid[:, None] + half[:, None] * _GL_X[None, :]
    return half * (f(nodes) @ _GL_W)


# -- jump law -------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TaggedJumpSampler:
    """Jump law of the tagged subordinator, possibly eps-truncated."""

    model: DislocationModel
    eps: float
    rate: float
    drift: float
    log_grid: np.ndarray | None = None  # knots in log x
    cdf: np.ndarray | None = None  # normalised cumulative Xi mass at the knots

    @property
    def truncated(self) -> bool:
        return self.log_grid is not None

    def sample(self, rng: np.random.Generator, size=None):
        if not self.truncated:
            m = self.model
            u = rng.beta(m.a, m.b, size=size)
            # size-biased pick: the tagged point follows u with probability u
            keep = rng.random(size) < u
            piece = np.where(keep, u, 1.0 - u)
            return -np.log(piece)
        y = np.interp(rng.random(size), self.cdf, self.log_grid)
        return np.exp(y)

    def phi(self, q: float) -> float:
        """Laplace exponent of the simulated (possibly truncated) subordinator."""
        if not self.truncated:
            return theory.phi(self.model, q)
        return theory.phi_eps(self.model, q, self.eps)


@lru_cache(maxsize=64)
def jump_sampler(model: DislocationModel, eps: float = DEFAULT_EPS) -> TaggedJumpSampler:
    if model.finite:
        if not isinstance(model, _BetaLike):
            raise ValueError(f"no finite-measure jump sampler for {model.label()}")
        return TaggedJumpSampler(model, 0.0, model.total_mass, 0.0)
    if not 0 < eps < 1:
        raise ValueError("infinite dislocation measures need a truncation 0 < eps < 1")
    knots = np.linspace(math.log(eps), math.log(theory.X_CAP), TABLE_KNOTS)

    def dens(y):
        x = np.exp(y)
        return x * model.xi_density_x(x)

    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        cells = _gl_cells(knots[:-1], knots[1:], dens)
    if not np.isfinite(cells).all():
        raise theory.QuadratureError(f"jump table for {model.label()} is not finite")
    cum = np.concatenate(([0.0], np.cumsum(cells)))
    rate = float(cum[-1])
    return TaggedJumpSampler(model, eps, rate, theory.small_jump_mean(model, eps), knots, cum / rate)


def sample_tagged_jump(model: DislocationModel, rng: np.random.Generator, size=None,
                       eps: float = DEFAULT_EPS):
    return jump_sampler(model, eps).sample(rng, size)


@dataclass(frozen=True)
class SubordinatorPath:
    times: np.ndarray  # jump times
    jumps: np.ndarray
    xi: np.ndarray  # value right after each jump
    eps: float
    drift: float

    def value_at(self, t: float) -> float:
        i = np.searchsorted(self.times, t, side="right")
        before = self.jumps[:i].sum()
        return float(before + self.drift * t)


def sample_path(model: DislocationModel, horizon: float, rng: np.random.Generator,
                eps: float = DEFAULT_EPS) -> SubordinatorPath:
    """One path of the tagged subordinator on [0, horizon]."""
    sp = jump_sampler(model, eps)
    count = rng.poisson(sp.rate * horizon)
    times = np.sort(rng.uniform(0.0, horizon, count))
    jumps = sp.sample(rng, count)
    xi = np.cumsum(jumps) + sp.drift * times
    return SubordinatorPath(times, jumps, xi, sp.eps, sp.drift)


def xi_at(model: DislocationModel, t: float, n_paths: int, rng: np.random.Generator,
          eps: float = DEFAULT_EPS) -> np.ndarray:
    """Independent samples of xi(t)."""
    sp = jump_sampler(model, eps)
    counts = rng.poisson(sp.rate * t, n_paths)
    jumps = sp.sample(rng, int(counts.sum()))
    owner = np.repeat(np.arange(n_paths), counts)
    return np.bincount(owner, weights=jumps, minlength=n_paths) + sp.drift * t


# -- leaf depth and area ---------------------------------------------------------------

def _require_supercritical(model, k):
    if not k * model.gamma > 1:
        raise ValueError(f"leaf depth needs k*gamma > 1 (k={k}, gamma={model.gamma})")


def leaf_depths(model: DislocationModel, k: int, n_paths: int, rng: np.random.Generator,
                tol: float = 1e-6, eps: float = DEFAULT_EPS,
                rao_blackwell: bool = False) -> np.ndarray:
    """Depth int_0^inf exp(alpha xi(t)) dt of the tagged leaf, alpha = 1 - k gamma.

    Paths stop once exp(alpha xi) < tol; the remaining integral is replaced by
    its conditional mean exp(alpha xi) / phi(-alpha).  With ``rao_blackwell``
    every inter-jump piece is replaced by its mean given the current value,
    exp(alpha xi) / (rate - alpha drift): same mean, less variance.
    """
    _require_supercritical(model, k)
    if not 0 < tol < 1:
        raise ValueError("tol must lie in (0, 1)")
    alpha = 1.0 - k * model.gamma
    sp = jump_sampler(model, eps)
    lam, d = sp.rate, sp.drift
    tail_mean = 1.0 / sp.phi(-alpha)
    stop = math.log(tol) / alpha  # xi level where exp(alpha xi) = tol

    depth = np.zeros(n_paths)
    xi = np.zeros(n_paths)
    active = np.arange(n_paths)
    for _ in range(MAX_STEPS):
        if active.size == 0:
            break
        x = xi[active]
        level = np.exp(alpha * x)
        dt = rng.exponential(1.0 / lam, active.size)
        if rao_blackwell:
            piece = level / (lam - alpha * d)
        elif d > 0:
            piece = level * -np.expm1(alpha * d * dt) / (-alpha * d)
        else:
            piece = level * dt
        depth[active] += piece
        x = x + d * dt + sp.sample(rng, active.size)
        xi[active] = x
        done = x >= stop
        depth[active[done]] += np.exp(alpha * x[done]) * tail_mean
        active = active[~done]
    else:
        raise RuntimeError("leaf-depth paths did not reach the stopping level")
    return depth


def leaf_depth(model: DislocationModel, k: int, tol: float, rng: np.random.Generator,
               eps: float = DEFAULT_EPS) -> float:
    return float(leaf_depths(model, k, 1, rng, tol=tol, eps=eps)[0])


def area_estimate(model: DislocationModel, k: int, replicas: int, rng: np.random.Generator,
                  tol: float = 1e-6, eps: float = DEFAULT_EPS,
                  rao_blackwell: bool = False) -> Estimate:
    """c_nu times the mean tagged-leaf depth, with its standard error."""
    if replicas < 1:
        raise ValueError("replicas must be positive")
    depths = leaf_depths(model, k, replicas, rng, tol=tol, eps=eps, rao_blackwell=rao_blackwell)
    return _estimate(model.c_nu * depths)


# -- g_k --------------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FkTable:
    """f_k(v) = nu(sum s_i^k <= 1 - v) and H(v) = (1/k) int_v^1 t^{1/k-1} f_k(t) dt.

    With h(w) = 1 - (1-w)^k - w^k and rho the density of 1 - s1 on (0, 1/2],
    f_k(v) = P(w(v)) and H(v) = A(w(v)) - v^{1/k} P(w(v)), where
    P(w) = int_w^{1/2} rho and A(w) = int_w^{1/2} rho h^{1/k}.
    """

    k: int
    v_max: float
    log_w: np.ndarray
    P: interpolate.PchipInterpolator
    A: interpolate.PchipInterpolator
    w_of_logv: interpolate.PchipInterpolator

    def w(self, v):
        v = np.asarray(v, dtype=float)
        w = np.exp(self.w_of_logv(np.log(v)))
        k = self.k
        for _ in range(3):
            h = -np.expm1(k * np.log1p(-w)) - w ** k
            dh = k * ((1 - w) ** (k - 1) - w ** (k - 1))
            safe = dh > 1e-8
            w = np.where(safe, w - (h - v) / np.where(safe, dh, 1.0), w)
            w = np.clip(w, 1e-300, 0.5)
        return w

    def f(self, v):
        v = np.asarray(v, dtype=float)
        out = np.zeros(v.shape)
        live = v < self.v_max
        if live.any():
            out[live] = self.P(np.log(self.w(v[live])))
        return out

    def H(self, v):
        v = np.asarray(v, dtype=float)
        out = np.zeros(v.shape)
        live = v < self.v_max
        if live.any():
            lw = np.log(self.w(v[live]))
            out[live] = self.A(lw) - v[live] ** (1.0 / self.k) * self.P(lw)
        return np.maximum(out, 0.0)


@lru_cache(maxsize=64)
def fk_table(model: DislocationModel, k: int, v_min: float = 1e-14) -> FkTable:
    if not model.binary:
        raise ValueError(f"f_k for {model.label()} needs its non-explicit dislocation density")
    w_lo = v_min / (4.0 * k)
    log_w = np.linspace(math.log(w_lo), math.log(0.5), TABLE_KNOTS)

    def h(w):
        return -np.expm1(k * np.log1p(-w)) - w ** k

    def rho(y, weight):
        w = np.exp(y)
        return w * model.s1_density(1.0 - w, w) * weight(w)

    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        cp = _gl_cells(log_w[:-1], log_w[1:], lambda y: rho(y, lambda w: 1.0))
        ca = _gl_cells(log_w[:-1], log_w[1:], lambda y: rho(y, lambda w: np.maximum(h(w), 0.0) ** (1.0 / k)))
    # cumulative from w = 1/2 downwards
    P = np.concatenate((np.cumsum(cp[::-1])[::-1], [0.0]))
    A = np.concatenate((np.cumsum(ca[::-1])[::-1], [0.0]))
    hv = h(np.exp(log_w))
    # h is flat at w = 1/2; the spline for w(v) only seeds Newton steps
    mono = np.concatenate(([True], np.diff(hv) > 0))
    w_of_logv = interpolate.PchipInterpolator(np.log(hv[mono]), log_w[mono], extrapolate=True)
    return FkTable(k, 1.0 - 2.0 ** (1 - k), log_w,
                   interpolate.PchipInterpolator(log_w, P), interpolate.PchipInterpolator(log_w, A),
                   w_of_logv)


def gk_samples(model: DislocationModel, k: int, x: float, n_paths: int, rng: np.random.Generator,
               eps: float = DEFAULT_EPS, rao_blackwell: bool = False) -> np.ndarray:
    """Per-path values of int_0^inf exp(xi) f_k(x exp(k xi)) dt."""
    theory._require_k(k)
    if not 0 < x < 1:
        raise ValueError(f"g_k needs 0 < x < 1, got {x}")
    table = fk_table(model, k, min(x, 1e-14))
    if x >= table.v_max:
        return np.zeros(n_paths)
    sp = jump_sampler(model, eps)
    lam, d = sp.rate, sp.drift
    stop = math.log(table.v_max / x) / k
    total = np.zeros(n_paths)
    xi = np.zeros(n_paths)
    active = np.arange(n_paths)
    scale = x ** (-1.0 / k)
    for _ in range(MAX_STEPS):
        if active.size == 0:
            break
        s = xi[active]
        dt = rng.exponential(1.0 / lam, active.size)
        if d > 0:
            # int e^y f_k(x e^{ky}) dy over the drift segment, through H
            va = x * np.exp(k * s)
            vb = np.minimum(x * np.exp(k * (s + d * dt)), table.v_max)
            piece = scale * (table.H(va) - table.H(vb)) / d
        else:
            hold = 1.0 / lam if rao_blackwell else dt
            piece = np.exp(s) * table.f(x * np.exp(k * s)) * hold
        total[active] += piece
        s = s + d * dt + sp.sample(rng, active.size)
        xi[active] = s
        active = active[s < stop]
    else:
        raise RuntimeError("g_k paths did not reach the stopping level")
    return total


def gk_estimate(model: DislocationModel, k: int, x: float, replicas: int, rng: np.random.Generator,
                eps: float = DEFAULT_EPS, rao_blackwell: bool = False) -> Estimate:
    """Monte Carlo g_k(x) = E int_0^inf exp(xi) f_k(x exp(k xi)) dt; zero for x >= 1."""
    if x >= 1:
        return Estimate(0.0, 0.0)
    return _estimate(gk_samples(model, k, x, replicas, rng, eps=eps, rao_blackwell=rao_blackwell))


def gk_normalisation(model: DislocationModel, k: int, x: float):
    """(regime, normalised value multiplier, limit) for the small-x behaviour of g_k."""
    regime = theory.regime_of(model.gamma, k)
    if regime == theory.SUPERCRITICAL:
        g = model.gamma
        return regime, x ** g, model.c_nu * k ** g / theory.phi(model, k * g - 1)
    if regime == theory.CRITICAL:
        return regime, x ** (1.0 / k) / abs(math.log(x)), theory.c_cr(model, k)
    return regime, x ** (1.0 / k), theory.c_sub(model, k)
