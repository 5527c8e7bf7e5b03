"""Random tree models and the lazy fragmentation-cascade sampler.

Growth chains (Remy, Ford) are numba kernels fed with uniforms drawn from the
caller's ``numpy.random.Generator``, so every sampler is a pure function of its
parameters and RNG stream.
"""
from __future__ import annotations

from functools import lru_cache

import numba
import numpy as np
from scipy.special import gammaln, zeta

from fraglab.models import DislocationModel
from fraglab.tree import SENTINEL, AncestorStats, LeafGrouping, Tree, build_tree

CASCADE_DEPTH_CAP = 10**6


class CascadeDepthError(RuntimeError):
    pass


class RejectionBudgetExhausted(RuntimeError):
    pass


# -- growth chains --------------------------------------------------------------

def _planted_cherry(n_leaves):
    # root 0 -> 1 -> (2, 3); every graft adds an internal node then a leaf
    parent = np.empty(2 * n_leaves, dtype=np.int64)
    parent[:4] = (SENTINEL, 0, 1, 1)
    return parent


@numba.njit(cache=True)
def _remy_kernel(parent, uniforms):
    m = 4
    for step in range(uniforms.size):
        # any of the m - 1 non-root edges, identified by their lower node
        v = 1 + int(uniforms[step] * (m - 1))
        w, leaf = m, m + 1
        parent[w] = parent[v]
        parent[v] = w
        parent[leaf] = w
        m += 2
    return parent


@numba.njit(cache=True)
def _ford_kernel(parent, uniforms, a):
    n_total = parent.size
    internal = np.empty(n_total, dtype=np.int64)
    external = np.empty(n_total, dtype=np.int64)
    internal[0] = 1
    external[0] = 2
    external[1] = 3
    n_int, n_ext = 1, 2
    m = 4
    for step in range(uniforms.size):
        w_int = a * n_int
        x = uniforms[step] * (w_int + (1.0 - a) * n_ext)
        if x < w_int:
            v = internal[min(int(x / a), n_int - 1)]
        else:
            v = external[min(int((x - w_int) / (1.0 - a)), n_ext - 1)]
        w, leaf = m, m + 1
        parent[w] = parent[v]
        parent[v] = w
        parent[leaf] = w
        internal[n_int] = w
        external[n_ext] = leaf
        n_int += 1
        n_ext += 1
        m += 2
    return parent


def _growth_leaves(n_leaves):
    # leaves in creation order: 2, 3, then every second new node
    return np.concatenate(([2, 3], np.arange(5, 2 * n_leaves, 2))).astype(np.int64)


def remy(n_leaves: int, rng: np.random.Generator) -> Tree:
    """Uniform leaf-labelled planted binary tree (Remy's growth chain).

    Leaves are listed in order of creation.
    """
    if n_leaves < 2:
        raise ValueError("remy needs n_leaves >= 2")
    parent = _remy_kernel(_planted_cherry(n_leaves), rng.random(n_leaves - 2))
    return build_tree(parent, leaf_order=_growth_leaves(n_leaves))


def ford(a: float, n_leaves: int, rng: np.random.Generator) -> Tree:
    """Ford's alpha-model growth chain with n_leaves external edges.

    Internal edges (the planted root edge included) have weight a, external
    edges weight 1 - a.
    """
    if not 0 < a < 1:
        raise ValueError(f"ford needs 0 < a < 1, got {a}")
    if n_leaves < 2:
        raise ValueError("ford needs n_leaves >= 2")
    parent = _ford_kernel(_planted_cherry(n_leaves), rng.random(n_leaves - 2), float(a))
    return build_tree(parent, leaf_order=_growth_leaves(n_leaves))


# -- beta-splitting -------------------------------------------------------------

def beta_split_weights(beta: float, m: int) -> np.ndarray:
    """Normalised P(left clade has i leaves), i = 1..m-1, for a clade of m."""
    i = np.arange(1, m)
    logw = gammaln(beta + i + 1) + gammaln(beta + m - i + 1) - gammaln(i + 1) - gammaln(m - i + 1)
    w = np.exp(logw - logw.max())
    return w / w.sum()


@lru_cache(maxsize=4096)
def _split_cdf(beta, m):
    return np.cumsum(beta_split_weights(beta, m))


def beta_splitting(beta: float, n_leaves: int, rng: np.random.Generator) -> Tree:
    """Aldous' beta-splitting tree with n_leaves leaves, planted.

    Nodes are numbered in depth-first preorder, left clade first, so the
    default leaf order is left to right.
    """
    if not beta > -2:
        raise ValueError(f"beta_splitting needs beta > -2, got {beta}")
    if n_leaves < 1:
        raise ValueError("beta_splitting needs n_leaves >= 1")
    beta = float(beta)
    parent = np.empty(2 * n_leaves, dtype=np.int64)
    parent[0] = SENTINEL
    nxt = 1
    stack = [(0, n_leaves)]  # (parent node, clade size)
    while stack:
        p, m = stack.pop()
        node = nxt
        nxt += 1
        parent[node] = p
        if m == 1:
            continue
        if m == 2:
            i = 1
        else:
            cdf = _split_cdf(beta, m) if m <= 2048 else np.cumsum(beta_split_weights(beta, m))
            i = 1 + int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
            i = min(i, m - 1)
        # right pushed first so the left clade is numbered first
        stack.append((node, m - i))
        stack.append((node, i))
    return build_tree(parent[:nxt])


# -- lazy cascade -----------------------------------------------------------------

def cascade_mrca(model: DislocationModel, n: int, k: int, rng: np.random.Generator) -> AncestorStats:
    """Exact (N_n(k), N_{n,r}(k)) for the fragmentation tree of a finite binary nu.

    Groups of k marked points descend together through the cascade; at every
    fragment the largest child has relative size V ~ normalised law of s1 and
    each point independently falls into it with probability V.  A group
    resolves (its MRCA is the current fragment) as soon as its points are not
    all on one side.
    """
    if not model.finite:
        raise ValueError(f"cascade_mrca needs a finite dislocation measure, got {model.label()}")
    if not model.binary:
        raise ValueError("cascade_mrca needs a binary dislocation measure")
    if n < 1 or k < 2:
        raise ValueError("cascade_mrca needs n >= 1 and k >= 2")

    frag = np.zeros(n, dtype=np.int64)  # current fragment of every unresolved group
    active = np.arange(n)
    ancestor = np.empty(n, dtype=np.int64)
    next_id = 1
    depth = 0
    while active.size:
        depth += 1
        if depth > CASCADE_DEPTH_CAP:
            raise CascadeDepthError("cascade exceeded the recursion-depth guard")
        ids, inv = np.unique(frag, return_inverse=True)
        v = model.sample_s1(rng, size=ids.size)
        big = rng.binomial(k, v[inv])
        split = (big > 0) & (big < k)
        ancestor[active[split]] = frag[split]
        stay = ~split
        child = next_id + 2 * inv[stay] + (big[stay] == 0)
        next_id += 2 * ids.size
        active = active[stay]
        frag = child
    ids, counts = np.unique(ancestor, return_counts=True)
    rs, hs = np.unique(counts, return_counts=True)
    stats = AncestorStats(
        n=n,
        k=k,
        N=int(ids.size),
        histogram={int(r): int(h) for r, h in zip(rs, hs)},
        multiplicity={int(i): int(c) for i, c in zip(ids, counts)},
    )
    return stats.check()


# -- experimental stable proxy ------------------------------------------------------

def stable_offspring_law(beta: float, kmax: int = 100_000):
    """Critical offspring law p_0 > 0, p_1 = 0, p_j ∝ j^{-1-beta} for j >= 2.

    Returns (p0, probabilities for j = 2..kmax, tail mass beyond kmax).
    """
    if not 1 < beta < 2:
        raise ValueError("stable proxy needs 1 < beta < 2")
    c = 1.0 / (zeta(beta) - 1.0)  # mean one
    j = np.arange(2, kmax + 1, dtype=float)
    p = c * j ** (-1.0 - beta)
    p0 = 1.0 - c * (zeta(1.0 + beta) - 1.0)
    tail = c * zeta(1.0 + beta, kmax + 1)
    return p0, p, tail


def gw_stable_tree(beta: float, n_leaves: int, rng: np.random.Generator,
                   max_attempts: int = 200_000) -> Tree:
    """Experimental: critical GW tree with j^{-1-beta} offspring tail, n_leaves leaves.

    Conditioned by rejection; the tree is planted (an extra root above the GW
    root).  Not covered by any convergence statement; used for exploration.
    """
    if n_leaves < 1:
        raise ValueError("n_leaves must be positive")
    p0, p, tail = stable_offspring_law(beta)
    probs = np.concatenate(([p0], p))
    probs[-1] += tail
    values = np.concatenate(([0], np.arange(2, p.size + 2)))
    cdf = np.cumsum(probs)
    cdf /= cdf[-1]
    chunk = 4 * n_leaves + 16
    for _ in range(max_attempts):
        offspring = []
        open_slots = 1
        leaves = 0
        while open_slots > 0 and leaves <= n_leaves:
            draw = values[np.searchsorted(cdf, rng.random(min(chunk, 4 * open_slots + 4)), side="right")]
            for x in draw:
                offspring.append(int(x))
                open_slots += int(x) - 1
                leaves += x == 0
                if open_slots == 0 or leaves > n_leaves:
                    break
        if open_slots == 0 and leaves == n_leaves:
            return _tree_from_lukasiewicz(offspring)
    raise RejectionBudgetExhausted(f"no GW tree with {n_leaves} leaves in {max_attempts} attempts")


def _tree_from_lukasiewicz(offspring):
    # depth-first offspring sequence -> planted parent array
    parent = np.empty(len(offspring) + 1, dtype=np.int64)
    parent[0] = SENTINEL
    stack = [[0, 1]]  # [node, remaining children]
    for idx, c in enumerate(offspring, start=1):
        while stack[-1][1] == 0:
            stack.pop()
        stack[-1][1] -= 1
        parent[idx] = stack[-1][0]
        if c:
            stack.append([idx, c])
    return build_tree(parent)


# -- leaf grouping -----------------------------------------------------------------

def group_leaves(tree: Tree, k: int, policy: str = "consecutive",
                 rng: np.random.Generator | None = None) -> LeafGrouping:
    """Split the leaves into n = floor(L/k) disjoint k-groups.

    ``consecutive``: group i is leaves (i, i+n, ..., i+(k-1)n) in leaf order.
    ``random_disjoint``: uniform random partition of a uniform n*k-subset.
    """
    L = tree.n_leaves
    if L < k:
        raise ValueError(f"tree has {L} leaves, fewer than k={k}")
    n = L // k
    if policy == "consecutive":
        idx = (np.arange(n)[:, None] + n * np.arange(k)[None, :]).ravel()
        flat = tree.leaves[idx]
    elif policy == "random_disjoint":
        if rng is None:
            raise ValueError("random_disjoint grouping needs an rng")
        flat = tree.leaves[rng.permutation(L)[: n * k]]
    else:
        raise ValueError(f"unknown grouping policy {policy!r}")
    return LeafGrouping(k=k, n=n, leaves=np.ascontiguousarray(flat, dtype=np.int64))


def shape_key(tree: Tree, labels=None):
    """Canonical leaf-labelled shape: nested frozensets of leaf ranks."""
    rank = {int(v): i for i, v in enumerate(tree.leaves)} if labels is None else labels

    def rec(v):
        ch = tree.children(v)
        if ch.size == 0:
            return rank[int(v)]
        if ch.size == 1:
            return rec(ch[0])
        return frozenset(rec(c) for c in ch)

    return rec(tree.root)


__all__ = [
    "remy", "ford", "beta_splitting", "beta_split_weights", "cascade_mrca",
    "gw_stable_tree", "stable_offspring_law", "group_leaves", "shape_key",
    "CascadeDepthError", "RejectionBudgetExhausted",
]
