"""Dislocation measures for the four model families.

Every model is a frozen dataclass carrying its parameters and an optional
``scale`` factor (the measure ``scale * nu``).  Scaling never changes the
ancestor statistics, which is why the limit constants are homogeneous; it is
kept as a real parameter so that homogeneity can be tested rather than
assumed.

Binary measures expose the density of the largest fragment ``s1`` on
``[1/2, 1)``.  All four families also expose the density of the tagged-fragment
Levy measure written in the size variable ``u = exp(-x)`` of the fragment the
tagged point falls into.  Densities take the pair ``(u, 1 - u)`` so that the
``1 - u`` factor keeps full relative precision near ``u = 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from fraglab import specfun


@dataclass(frozen=True)
class DislocationModel:
    scale: float = field(default=1.0, kw_only=True)

    family = "abstract"
    binary = True

    # -- hooks -------------------------------------------------------------
    def _pair_density(self, u, v):
        """Density of sum_i nu(s_i in du) at u, with v = 1 - u (binary only)."""
        raise NotImplementedError

    # -- derived quantities --------------------------------------------------
    @property
    def gamma(self) -> float:
        raise NotImplementedError

    @property
    def c_nu(self) -> float:
        raise NotImplementedError

    @property
    def finite(self) -> bool:
        return False

    @property
    def total_mass(self) -> float:
        return math.inf

    def s1_density(self, x, one_minus_x=None):
        """Density of nu(s1 in dx) for x in [1/2, 1)."""
        if not self.binary:
            raise ValueError(f"{self.label()} has no explicit binary dislocation density")
        x = np.asarray(x, dtype=float)
        v = 1.0 - x if one_minus_x is None else np.asarray(one_minus_x, dtype=float)
        return self._pair_density(x, v)

    def xi_density(self, u, one_minus_u=None):
        """Density in u of the tagged Levy measure (jump x = -log u)."""
        u = np.asarray(u, dtype=float)
        v = 1.0 - u if one_minus_u is None else np.asarray(one_minus_u, dtype=float)
        return u * self._pair_density(u, v)

    def xi_density_x(self, x):
        """Density of the tagged Levy measure in the jump variable x > 0."""
        x = np.asarray(x, dtype=float)
        u = np.exp(-x)
        return u * self.xi_density(u, -np.expm1(-x))

    def sample_s1(self, rng, size=None):
        raise ValueError(f"{self.label()} has infinite dislocation measure; no first split")

    # -- presentation --------------------------------------------------------
    def params(self) -> dict:
        raise NotImplementedError

    def params_str(self) -> str:
        items = dict(self.params())
        if self.scale != 1.0:
            items["scale"] = self.scale
        return ";".join(f"{k}={v:g}" for k, v in items.items())

    def label(self) -> str:
        return f"{self.family}({self.params_str()})"


@dataclass(frozen=True)
class _BetaLike(DislocationModel):
    a: float = 1.0
    b: float = 1.0

    def _pair_density(self, u, v):
        a, b = self.a, self.b
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return self.scale * (u ** (a - 1) * v ** (b - 1) + u ** (b - 1) * v ** (a - 1))

    def params(self):
        return {"a": self.a, "b": self.b}


@dataclass(frozen=True)
class DirichletBinary(_BetaLike):
    """Binary Dirichlet dislocation: split at a Beta(a, b) point.

    The measure is ``scale * B(a, b) * Law(max(U, 1-U))`` with U ~ Beta(a, b),
    i.e. the same measure as :class:`BetaType` with positive parameters, so
    ``c_nu = nu(S) = scale * B(a, b)``.
    """

    family = "dirichlet"

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError(f"DirichletBinary needs a > 0 and b > 0, got a={self.a}, b={self.b}")
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    @property
    def gamma(self):
        return 0.0

    @property
    def finite(self):
        return True

    @property
    def total_mass(self):
        return self.scale * float(specfun.beta_fn(self.a, self.b))

    @property
    def c_nu(self):
        return self.total_mass

    def sample_s1(self, rng, size=None):
        u = rng.beta(self.a, self.b, size=size)
        return np.maximum(u, 1.0 - u)


@dataclass(frozen=True)
class BetaType(_BetaLike):
    """Beta-type binary measure, finite iff min(a, b) > 0.

    Parameters are stored with ``a >= b`` (the measure is symmetric in them).
    """

    family = "betatype"

    def __post_init__(self):
        if not (self.a > -1 and self.b > -1):
            raise ValueError(f"BetaType needs a > -1 and b > -1, got a={self.a}, b={self.b}")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        if self.b > self.a:
            hi, lo = self.b, self.a
            object.__setattr__(self, "a", hi)
            object.__setattr__(self, "b", lo)

    def _require_hg(self):
        if self.b == 0:
            raise ValueError("BetaType with b = 0 is regularly varying, outside (H_gamma)")

    @property
    def gamma(self):
        self._require_hg()
        return max(-self.b, 0.0)

    @property
    def finite(self):
        return self.b > 0

    @property
    def total_mass(self):
        if self.b > 0:
            return self.scale * float(specfun.beta_fn(self.a, self.b))
        return math.inf

    @property
    def c_nu(self):
        self._require_hg()
        if self.b > 0:
            return self.total_mass
        return self.scale * (2.0 if self.a == self.b else 1.0) / abs(self.b)

    def sample_s1(self, rng, size=None):
        if not self.finite:
            return super().sample_s1(rng, size)
        u = rng.beta(self.a, self.b, size=size)
        return np.maximum(u, 1.0 - u)


@dataclass(frozen=True)
class FordAlpha(DislocationModel):
    """Ford's alpha-model measure nu_a, a in (0, 1)."""

    a: float = 0.5
    family = "ford"

    def __post_init__(self):
        if not 0 < self.a < 1:
            raise ValueError(f"FordAlpha needs 0 < a < 1, got {self.a}")
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    def _pair_density(self, u, v):
        a = self.a
        w = u * v
        norm = self.scale * float(specfun.rgamma(1.0 - a))
        with np.errstate(divide="ignore", over="ignore"):
            return norm * (a * w ** (-a - 1) + 2 * (1 - 2 * a) * w ** (-a))

    @property
    def gamma(self):
        return self.a

    @property
    def c_nu(self):
        return self.scale * float(specfun.rgamma(1.0 - self.a))

    def params(self):
        return {"a": self.a}


@dataclass(frozen=True)
class Stable(DislocationModel):
    """Stable-tree measure nu_beta, beta in (1, 2].

    beta = 2 is the binary Brownian measure (2^{-1/2} times the CRT one).  For
    beta < 2 the dislocation measure itself is not explicit, but the tagged
    Levy measure is: scale * beta / |Gamma(-alpha)| u^{alpha-1} (1-u)^{-1-alpha}
    with alpha = 1 - 1/beta, whose Laplace exponent is beta Gamma(q+alpha)/Gamma(q).
    """

    beta: float = 2.0
    family = "stable"

    def __post_init__(self):
        if not 1 < self.beta <= 2:
            raise ValueError(f"Stable needs 1 < beta <= 2, got {self.beta}")
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    @property
    def binary(self):
        return self.beta == 2.0

    def _pair_density(self, u, v):
        if not self.binary:
            raise ValueError("stable measure with beta < 2 is not binary")
        with np.errstate(divide="ignore", over="ignore"):
            return self.scale / math.sqrt(math.pi) * (u * v) ** -1.5

    def xi_density(self, u, one_minus_u=None):
        u = np.asarray(u, dtype=float)
        v = 1.0 - u if one_minus_u is None else np.asarray(one_minus_u, dtype=float)
        alpha = 1.0 - 1.0 / self.beta
        norm = self.scale * self.beta / abs(float(specfun.gamma(-alpha)))
        with np.errstate(divide="ignore", over="ignore"):
            return norm * u ** (alpha - 1) * v ** (-1 - alpha)

    @property
    def gamma(self):
        return 1.0 - 1.0 / self.beta

    @property
    def c_nu(self):
        return self.scale * self.beta * float(specfun.rgamma(1.0 / self.beta))

    def params(self):
        return {"beta": self.beta}


FAMILIES = {
    "dirichlet": DirichletBinary,
    "betatype": BetaType,
    "ford": FordAlpha,
    "stable": Stable,
}


def parse_params(text: str | None) -> dict:
    """Parse ``"a=0.5,b=1"`` (commas or semicolons) into a float dict."""
    out = {}
    if not text:
        return out
    for item in text.replace(";", ",").split(","):
        item = item.strip()
        if not item:
            continue
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"malformed parameter {item!r}, expected key=value")
        out[key.strip()] = float(value)
    return out


def make_model(family: str, params: dict | str | None = None) -> DislocationModel:
    if isinstance(params, str) or params is None:
        params = parse_params(params)
    try:
        cls = FAMILIES[family]
    except KeyError:
        raise ValueError(f"unknown model family {family!r}; choose from {sorted(FAMILIES)}") from None
    return cls(**params)
