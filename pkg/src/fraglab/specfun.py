"""Gamma-family special functions used by every closed-form constant.

Thin wrappers around :mod:`scipy.special` with the domain checks the rest of
the package relies on.  All constant formulas in :mod:`fraglab.theory` and the
dislocation densities in :mod:`fraglab.models` go through this module (looked
up as module attributes at call time), so a single monkeypatch here is enough
to inject a fault into every Gamma evaluation.
"""
from __future__ import annotations

import numpy as np
from scipy import special as _sp

EULER_GAMMA = float(np.euler_gamma)


def _check_positive(x, name):
    if np.any(np.asarray(x) <= 0):
        raise ValueError(f"{name} requires a positive argument, got {x!r}")


def log_gamma(x):
    """log Gamma(x) for x > 0."""
    _check_positive(x, "log_gamma")
    return _sp.gammaln(x)


def digamma(x):
    """psi(x) = Gamma'(x)/Gamma(x) for x > 0."""
    _check_positive(x, "digamma")
    return _sp.psi(x)


def gamma(x):
    """Gamma(x) on the whole real line (poles return inf)."""
    return _sp.gamma(x)


def rgamma(x):
    """1/Gamma(x); vanishes at the poles 0, -1, -2, ..."""
    return _sp.rgamma(x)


def beta_fn(a, b):
    """Analytic continuation of B(a, b) = Gamma(a)Gamma(b)/Gamma(a+b).

    Valid for negative non-integer arguments, which the infinite Beta-type
    dislocation measures need.
    """
    return gamma(a) * gamma(b) * rgamma(a + b)


def psi(x):
    """Unchecked digamma, defined at negative non-integers as well."""
    return _sp.psi(x)
