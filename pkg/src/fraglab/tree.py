"""Rooted arena trees with O(1) LCA and ancestor-counting statistics.

A :class:`Tree` is immutable once built.  Children are stored in CSR form
(``child_ptr``/``child_idx``), LCA queries go through an Euler tour and a
sparse table of range-minimum indices over the tour depths.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numba
import numpy as np

SENTINEL = -1


class TreeError(ValueError):
    """Raised for parent arrays that do not describe a single rooted tree."""


@numba.njit(cache=True)
def _euler_tour(child_ptr, child_idx, root, n):
    tour = np.empty(2 * n - 1, dtype=np.int64)
    first = np.full(n, -1, dtype=np.int64)
    depth = np.zeros(n, dtype=np.int64)
    stack_node = np.empty(n, dtype=np.int64)
    stack_next = np.empty(n, dtype=np.int64)
    top = 0
    stack_node[0] = root
    stack_next[0] = child_ptr[root]
    pos = 0
    tour[pos] = root
    first[root] = 0
    pos += 1
    while top >= 0:
        v = stack_node[top]
        nxt = stack_next[top]
        if nxt < child_ptr[v + 1]:
            c = child_idx[nxt]
            stack_next[top] = nxt + 1
            depth[c] = depth[v] + 1
            first[c] = pos
            tour[pos] = c
            pos += 1
            top += 1
            stack_node[top] = c
            stack_next[top] = child_ptr[c]
        else:
            top -= 1
            if top >= 0:
                tour[pos] = stack_node[top]
                pos += 1
    return tour[:pos], first, depth


@dataclass(frozen=True, eq=False)
class Tree:
    parent: np.ndarray
    child_ptr: np.ndarray
    child_idx: np.ndarray
    depth: np.ndarray
    leaves: np.ndarray
    tour: np.ndarray
    first: np.ndarray
    tour_depth: np.ndarray
    sparse: list = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return len(self.parent)

    @property
    def n_leaves(self) -> int:
        return len(self.leaves)

    @property
    def root(self) -> int:
        return int(self.tour[0])

    def children(self, v: int) -> np.ndarray:
        return self.child_idx[self.child_ptr[v]:self.child_ptr[v + 1]]

    def is_leaf_mask(self) -> np.ndarray:
        mask = np.diff(self.child_ptr) == 0
        mask[self.root] = False
        return mask

    def _check_nodes(self, nodes):
        nodes = np.asarray(nodes, dtype=np.int64)
        if nodes.size and (nodes.min() < 0 or nodes.max() >= self.n_nodes):
            raise IndexError(f"node index out of range [0, {self.n_nodes})")
        return nodes

    def lca_many(self, u, v) -> np.ndarray:
        """Vectorised LCA of the pairs (u[i], v[i])."""
        u = self._check_nodes(u)
        v = self._check_nodes(v)
        lo = np.minimum(self.first[u], self.first[v])
        hi = np.maximum(self.first[u], self.first[v])
        length = hi - lo + 1
        j = np.floor(np.log2(length)).astype(np.int64)
        # guard against log2 rounding at exact powers of two
        j -= (1 << j) > length
        j += (1 << (j + 1)) <= length
        out = np.empty(lo.shape, dtype=np.int64)
        for level in np.unique(j):
            sel = j == level
            table = self.sparse[level]
            left = table[lo[sel]]
            right = table[hi[sel] - (1 << level) + 1]
            pick = np.where(self.tour_depth[left] <= self.tour_depth[right], left, right)
            out[sel] = self.tour[pick]
        return out


def build_tree(parents, leaf_order=None) -> Tree:
    """Build a :class:`Tree` from a parent array (``-1`` marks the root).

    ``leaf_order`` optionally fixes the leaf list order (growth chains pass
    creation order); by default leaves are listed by increasing node index.
    The root is never a leaf, even when it has no children.
    """
    parent = np.asarray(parents, dtype=np.int64).copy()
    if parent.ndim != 1 or parent.size == 0:
        raise TreeError("parent array must be a nonempty 1-d sequence")
    n = parent.size
    roots = np.flatnonzero(parent == SENTINEL)
    if roots.size != 1:
        raise TreeError(f"expected exactly one root, found {roots.size}")
    others = parent[parent != SENTINEL]
    if others.size and (others.min() < 0 or others.max() >= n):
        raise TreeError("parent index out of range")
    root = int(roots[0])

    nonroot = np.flatnonzero(parent != SENTINEL)
    order = nonroot[np.argsort(parent[nonroot], kind="stable")]
    counts = np.bincount(parent[nonroot], minlength=n)
    child_ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=child_ptr[1:])
    child_idx = order.astype(np.int64)

    tour, first, depth = _euler_tour(child_ptr, child_idx, root, n)
    if (first < 0).any() or tour.size != 2 * n - 1:
        raise TreeError("parent links contain a cycle (some nodes unreachable from the root)")

    tour_depth = depth[tour]
    sparse = [np.arange(tour.size, dtype=np.int64)]
    span = 1
    while 2 * span <= tour.size:
        prev = sparse[-1]
        m = tour.size - 2 * span + 1
        left = prev[:m]
        right = prev[span:span + m]
        sparse.append(np.where(tour_depth[left] <= tour_depth[right], left, right))
        span *= 2

    is_leaf = counts == 0
    is_leaf[root] = False
    if leaf_order is None:
        leaves = np.flatnonzero(is_leaf)
    else:
        leaves = np.asarray(leaf_order, dtype=np.int64)
        if leaves.size != is_leaf.sum() or not is_leaf[leaves].all():
            raise TreeError("leaf_order must list every leaf exactly once")
    return Tree(parent, child_ptr, child_idx, depth, leaves, tour, first, tour_depth, sparse)


def lca(tree: Tree, u: int, v: int) -> int:
    return int(tree.lca_many(np.array([u]), np.array([v]))[0])


def lca_group(tree: Tree, nodes) -> int:
    """MRCA of a nonempty set of nodes, folding pairwise LCA."""
    nodes = np.asarray(nodes, dtype=np.int64).ravel()
    if nodes.size == 0:
        raise ValueError("lca_group needs at least one node")
    acc = tree._check_nodes(nodes[:1])
    for v in nodes[1:]:
        acc = tree.lca_many(acc, np.array([v]))
    return int(acc[0])


@dataclass(frozen=True)
class LeafGrouping:
    k: int
    n: int
    leaves: np.ndarray  # flat, group i in [i*k, (i+1)*k)

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("group size must be positive")
        if self.leaves.shape != (self.n * self.k,):
            raise ValueError("flat leaf array must have n*k entries")
        if np.unique(self.leaves).size != self.leaves.size:
            raise ValueError("grouped leaves must be distinct")

    def groups(self) -> np.ndarray:
        return self.leaves.reshape(self.n, self.k)


@dataclass
class AncestorStats:
    """N_n(k), the multiplicity histogram and per-ancestor counts.

    ``histogram[r]`` is the number of ancestors hit by exactly r groups.
    ``multiplicity`` maps ancestor identity to its group count; samplers that
    do not track identities (the urn overflow) leave it as ``None``.
    """

    n: int
    k: int
    N: int
    histogram: dict
    multiplicity: dict | None = None

    def N_r(self, r: int) -> int:
        return self.histogram.get(r, 0)

    def check(self):
        assert sum(self.histogram.values()) == self.N, "sum_r N_r != N"
        assert sum(r * c for r, c in self.histogram.items()) == self.n, "sum_r r N_r != n"
        if self.multiplicity is not None:
            assert sum(self.multiplicity.values()) == self.n, "sum_b D_b != n"
            assert len(self.multiplicity) == self.N
            top = max(self.multiplicity.values(), default=0)
            assert top == max((r for r, c in self.histogram.items() if c > 0), default=0)
        return self


def stats_from_ancestors(ancestors, k: int) -> AncestorStats:
    """Collect AncestorStats from the list of per-group ancestor identities."""
    ancestors = np.asarray(ancestors)
    ids, counts = np.unique(ancestors, return_counts=True)
    rs, hs = np.unique(counts, return_counts=True)
    stats = AncestorStats(
        n=int(ancestors.size),
        k=k,
        N=int(ids.size),
        histogram={int(r): int(h) for r, h in zip(rs, hs)},
        multiplicity={int(i): int(c) for i, c in zip(ids, counts)},
    )
    return stats.check()


def group_mrcas(tree: Tree, grouping: LeafGrouping) -> np.ndarray:
    """MRCA node of every group, as an array of length n."""
    g = grouping.groups()
    acc = tree._check_nodes(g[:, 0])
    for j in range(1, grouping.k):
        acc = tree.lca_many(acc, g[:, j])
    return acc


def ancestor_stats(tree: Tree, grouping: LeafGrouping) -> AncestorStats:
    return stats_from_ancestors(group_mrcas(tree, grouping), grouping.k)


def subtree_leaf_counts(tree: Tree) -> np.ndarray:
    counts = tree.is_leaf_mask().astype(np.int64)
    # deepest first so every child is folded before its parent
    order = np.argsort(-tree.depth, kind="stable")
    for v in order:
        p = tree.parent[v]
        if p != SENTINEL:
            counts[p] += counts[v]
    return counts


def _comb_ratio(m: np.ndarray, total: int, k: int) -> np.ndarray:
    """C(m, k) / C(total, k) without forming the binomials."""
    out = np.ones(m.shape, dtype=float)
    for i in range(k):
        out *= np.clip(m - i, 0, None) / (total - i)
    return out


def mrca_distribution(tree: Tree, k: int) -> dict:
    """P(k, T, b) for k distinct uniform leaves, over branchpoints b.

    Returned as an ordered dict, descending probability, ties by node index.
    """
    L = tree.n_leaves
    if not 1 <= k <= L:
        raise ValueError(f"need 1 <= k <= leaf count {L}, got k={k}")
    below = subtree_leaf_counts(tree)
    own = _comb_ratio(below, L, k)
    child_sum = np.zeros(tree.n_nodes)
    nonroot = tree.parent != SENTINEL
    np.add.at(child_sum, tree.parent[nonroot], own[nonroot])
    prob = own - child_sum
    if L <= 60:
        # exact integer arithmetic for small trees
        denom = comb(L, k)
        exact = np.array([comb(int(c), k) for c in below], dtype=object)
        csum = np.zeros(tree.n_nodes, dtype=object)
        for v in np.flatnonzero(nonroot):
            csum[tree.parent[v]] += exact[v]
        prob = np.array([float((exact[v] - csum[v]) / denom) for v in range(tree.n_nodes)])
    nodes = np.flatnonzero(prob > 0)
    order = sorted(nodes, key=lambda v: (-prob[v], v))
    return {int(v): float(prob[v]) for v in order}
