"""Ancestor-counting statistics in random fragmentation trees.

Modules: :mod:`tree` (arena trees, LCA, ancestor statistics),
:mod:`generators` (tree models and the lazy cascade), :mod:`urn` (Karlin
occupancy), :mod:`theory` (limit constants), :mod:`fragproc` (tagged-fragment
Monte Carlo) and :mod:`harness` (experiments, fits, CSV, selftest).
"""
from fraglab.models import BetaType, DirichletBinary, DislocationModel, FordAlpha, Stable, make_model
from fraglab.tree import AncestorStats, Tree, build_tree

__version__ = "0.1.0"

__all__ = [
    "AncestorStats", "BetaType", "DirichletBinary", "DislocationModel", "FordAlpha", "Stable",
    "Tree", "build_tree", "make_model",
]
