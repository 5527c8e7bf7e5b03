"""Karlin occupancy scheme: n draws from a nonincreasing probability sequence.

Infinite laws are truncated at an index J.  Draws falling beyond J are
counted as distinct singleton urns; the only error this introduces is a
collision among tail draws, whose expected number is at most
``n^2 / 2 * sum_{j > J} p_j^2``.  J is chosen to keep that below ``tol``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import special, stats

from fraglab import specfun
from fraglab.tree import AncestorStats

DEFAULT_COLLISION_TOL = 1e-3
MAX_TABLE = 50_000_000


class TruncationError(ValueError):
    pass


class UrnLaw:
    """Nonincreasing probabilities p_1 >= p_2 >= ... summing to one."""

    def head(self, J: int) -> np.ndarray:
        raise NotImplementedError

    def tail_mass(self, J: int) -> float:
        """sum_{j > J} p_j."""
        raise NotImplementedError

    def tail_square(self, J: int) -> float:
        """sum_{j > J} p_j^2."""
        raise NotImplementedError

    def p(self, j):
        return self.head(int(np.max(j)))[np.asarray(j) - 1]

    def collision_bound(self, n: int, J: int) -> float:
        return 0.5 * n * n * self.tail_square(J)

    def truncation_index(self, n: int, tol: float = DEFAULT_COLLISION_TOL) -> int:
        """Smallest power-of-two J with collision_bound(n, J) <= tol."""
        J = 16
        while self.collision_bound(n, J) > tol:
            J *= 2
            if J > MAX_TABLE:
                raise TruncationError(f"no truncation below {MAX_TABLE} meets tol={tol} at n={n}")
        return J


@dataclass(frozen=True, eq=False)
class ExplicitLaw(UrnLaw):
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size == 0 or (p < 0).any():
            raise ValueError("probabilities must be a nonempty vector of nonnegative numbers")
        if (np.diff(p) > 0).any():
            raise ValueError("probabilities must be nonincreasing")
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"probabilities must sum to 1, got {p.sum()}")
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_weights(cls, w):
        w = np.sort(np.asarray(w, dtype=float))[::-1]
        return cls(w / w.sum())

    @property
    def size(self):
        return self.probs.size

    def head(self, J):
        out = np.zeros(J)
        m = min(J, self.size)
        out[:m] = self.probs[:m]
        return out

    def tail_mass(self, J):
        return float(self.probs[J:].sum())

    def tail_square(self, J):
        return float(np.square(self.probs[J:]).sum())

    def truncation_index(self, n, tol=DEFAULT_COLLISION_TOL):
        return self.size


@dataclass(frozen=True, eq=False)
class ZipfLaw(UrnLaw):
    s: float

    def __post_init__(self):
        if not self.s > 1:
            raise ValueError(f"Zipf exponent must exceed 1, got {self.s}")

    @cached_property
    def zeta(self):
        return float(special.zeta(self.s))

    def head(self, J):
        return np.arange(1, J + 1, dtype=float) ** -self.s / self.zeta

    def tail_mass(self, J):
        return float(special.zeta(self.s, J + 1)) / self.zeta

    def tail_mass_bound(self, J):
        """Integral bound J^{1-s} / ((s-1) zeta(s)) on the tail mass."""
        return J ** (1 - self.s) / ((self.s - 1) * self.zeta)

    def tail_square(self, J):
        return float(special.zeta(2 * self.s, J + 1)) / self.zeta ** 2


@dataclass(frozen=True, eq=False)
class GeometricLaw(UrnLaw):
    """p_j = (1 - q) q^{j-1}."""

    q: float

    def __post_init__(self):
        if not 0 < self.q < 1:
            raise ValueError(f"geometric ratio must lie in (0, 1), got {self.q}")

    def head(self, J):
        return (1 - self.q) * self.q ** np.arange(J, dtype=float)

    def tail_mass(self, J):
        return self.q ** J

    def tail_square(self, J):
        return (1 - self.q) ** 2 * self.q ** (2 * J) / (1 - self.q ** 2)


def make_law(kind: str, **params) -> UrnLaw:
    if kind == "zipf":
        return ZipfLaw(float(params["s"]))
    if kind == "geometric":
        return GeometricLaw(float(params["q"]))
    if kind == "explicit":
        return ExplicitLaw.from_weights(params["probs"])
    raise ValueError(f"unknown urn law {kind!r}")


def _resolve_J(law, n, J, tol):
    if J is None:
        return law.truncation_index(n, tol)
    bound = law.collision_bound(n, J)
    if bound > tol:
        raise TruncationError(
            f"truncation J={J} leaves {bound:.3g} expected tail collisions at n={n} (tol {tol}); re-truncate"
        )
    return J


def simulate_occupancy(law: UrnLaw, n: int, rng: np.random.Generator, J: int | None = None,
                       tol: float = DEFAULT_COLLISION_TOL) -> AncestorStats:
    """Occupancy counts (N_n, N_{n,r}) after n i.i.d. draws.

    The head counts are one multinomial vector; the number of tail draws is
    Binomial(n, tail mass) and each of them opens its own urn.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    J = _resolve_J(law, n, J, tol)
    head = law.head(J)
    tail = max(law.tail_mass(J), 0.0)
    n_tail = int(rng.binomial(n, min(tail, 1.0))) if tail > 0 else 0
    mass = head.sum()
    counts = rng.multinomial(n - n_tail, head / mass) if n > n_tail else np.zeros(J, dtype=np.int64)
    counts = counts[counts > 0]
    hist = np.bincount(counts)
    histogram = {int(r): int(h) for r, h in enumerate(hist) if h > 0}
    if n_tail:
        histogram[1] = histogram.get(1, 0) + n_tail
    N = int(counts.size) + n_tail
    return AncestorStats(n=n, k=1, N=N, histogram=dict(sorted(histogram.items()))).check()


@dataclass(frozen=True)
class ExpectedCounts:
    N: float
    Nr: dict
    # tail contributions are only bracketed: true value lies in value + [lo, hi]
    N_interval: tuple = (0.0, 0.0)
    Nr_interval: dict = field(default_factory=dict)


def expected_counts(law: UrnLaw, n: int, r_max: int = 10, J: int | None = None,
                    tol: float = DEFAULT_COLLISION_TOL) -> ExpectedCounts:
    """E[N_n] = sum_j 1 - (1-p_j)^n and E[N_{n,r}] = sum_j Bin(n, p_j)(r)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    J = _resolve_J(law, n, J, tol)
    p = law.head(J)
    p = p[p > 0]
    N = float(-np.expm1(n * np.log1p(-np.minimum(p, 1.0))).sum()) if p.size else 0.0
    T, T2 = law.tail_mass(J), law.tail_square(J)
    pair = 0.5 * n * n * T2
    # tail: n T - C(n,2) T2 <= E[N_tail] <= n T; centre on n T - pair / 2
    N += n * T - 0.5 * pair
    rs = range(1, min(r_max, n) + 1)
    Nr, Nr_int = {}, {}
    for r in rs:
        val = float(stats.binom.pmf(r, n, p).sum())
        if r == 1:
            val += n * T - pair
            Nr_int[r] = (-pair, pair)
        else:
            val += 0.5 * pair
            Nr_int[r] = (-0.5 * pair, 0.5 * pair)
        Nr[r] = val
    return ExpectedCounts(N=N, Nr=Nr, N_interval=(-0.5 * pair, 0.5 * pair), Nr_interval=Nr_int)


def urn_distribution_function(law: UrnLaw, x: float) -> int:
    """S_x = max{j : p_j >= x}, 0 when x > p_1."""
    if not x > 0:
        raise ValueError("S_x needs x > 0")
    if isinstance(law, ExplicitLaw):
        # -p is nondecreasing; count entries with p >= x
        return int(np.searchsorted(-law.probs, -x, side="right"))
    if isinstance(law, ZipfLaw):
        ok = lambda j: j >= 1 and j ** -law.s / law.zeta >= x  # noqa: E731
        guess = int(math.floor((x * law.zeta) ** (-1.0 / law.s)))
    elif isinstance(law, GeometricLaw):
        ok = lambda j: j >= 1 and (1 - law.q) * law.q ** (j - 1) >= x  # noqa: E731
        if x > 1 - law.q:
            return 0
        guess = 1 + int(math.floor(math.log(x / (1 - law.q)) / math.log(law.q)))
    else:
        raise TypeError(f"unsupported law {type(law).__name__}")
    # rounding fixups around the analytic inverse
    while guess >= 1 and not ok(guess):
        guess -= 1
    while ok(guess + 1):
        guess += 1
    return max(guess, 0)


def karlin_prediction(rho: float, L: float, r: int | None = None):
    """Limits of N_n / (n^rho l(n)) and, given r, of N_{n,r} / (n^rho l(n))."""
    if not 0 < rho < 1:
        raise ValueError(f"Karlin index must lie in (0, 1), got {rho}")
    if L < 0:
        raise ValueError("L must be nonnegative")
    total = float(specfun.gamma(1 - rho)) * L
    if r is None:
        return total
    if int(r) != r or r < 1:
        raise ValueError("r must be a positive integer")
    return total, rho * float(specfun.gamma(r - rho)) / math.factorial(r) * L


def zipf_karlin_constant(s: float) -> float:
    """Gamma(1 - 1/s) zeta(s)^{-1/s}: the limit of N_n / n^{1/s} for Zipf(s)."""
    law = ZipfLaw(s)
    return karlin_prediction(1.0 / s, law.zeta ** (-1.0 / s))
