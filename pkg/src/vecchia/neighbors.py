"""Ordered nearest-neighbor conditioning sets.

Position ``i`` of an ordering conditions on the ``min(m, i)`` nearest points
among positions ``0..i-1`` (distance ties go to the smaller position), plus
itself.  Sets are stored in CSR form over positions of the ordering.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .locations import as_locations


@dataclass(frozen=True, eq=False)
class NeighborSets:
    """Row ``i`` is ``indices[indptr[i]:indptr[i+1]]``: ascending, ending in ``i``.

    ``ranked`` holds the same neighbors without ``i`` in nearest-first order,
    row ``i`` spanning ``indptr[i] - i`` to ``indptr[i+1] - i - 1``.  It is
    None for sets built without distance information.
    """

    indptr: np.ndarray
    indices: np.ndarray
    ranked: np.ndarray | None = None

    @classmethod
    def from_rows(cls, rows, ranked_rows=None):
        """Build from per-position neighbor lists (self may be omitted)."""
        n = len(rows)
        clean = []
        for i, r in enumerate(rows):
            r = np.unique(np.asarray(r, dtype=np.intp))
            r = r[r != i]
            if r.size and (r[0] < 0 or r[-1] > i):
                raise ValueError(f"row {i} has neighbors outside 0..{i}")
            clean.append(np.append(r, i))
        indptr = np.zeros(n + 1, dtype=np.intp)
        indptr[1:] = np.cumsum([c.size for c in clean])
        indices = np.concatenate(clean) if n else np.zeros(0, dtype=np.intp)
        ranked = None
        if ranked_rows is not None:
            ranked = np.concatenate(
                [np.asarray(r, dtype=np.intp) for r in ranked_rows] + [np.zeros(0, dtype=np.intp)]
            )
            if ranked.size != indices.size - n:
                raise ValueError("ranked rows do not match the neighbor rows")
        return cls(indptr, indices.astype(np.intp), ranked)

    def __len__(self):
        return self.indptr.shape[0] - 1

    def __getitem__(self, i):
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def rows(self):
        return [self[i] for i in range(len(self))]

    def sizes(self):
        return np.diff(self.indptr)

    def nearest_first(self, i):
        """Neighbors of ``i`` excluding itself, nearest first when known."""
        if self.ranked is None:
            return self[i][:-1]
        return self.ranked[self.indptr[i] - i:self.indptr[i + 1] - i - 1]

    def is_valid(self):
        for i in range(len(self)):
            r = self[i]
            if r.size == 0 or r[-1] != i or np.any(np.diff(r) <= 0) or r[0] < 0:
                return False
        return True

    def contains(self, other):
        """True when every row of ``other`` is a subset of this row."""
        return all(np.isin(other[i], self[i]).all() for i in range(len(self)))

    def same_sets(self, other):
        return np.array_equal(self.indptr, other.indptr) and np.array_equal(
            self.indices, other.indices
        )


def full_conditioning(n):
    """Every position conditions on all previous positions."""
    return NeighborSets.from_rows([np.arange(i) for i in range(n)])


def _geometry(locs, spatial_only):
    if isinstance(locs, np.ndarray) and locs.ndim == 2:
        return np.asarray(locs, dtype=float)
    return as_locations(locs).points(spatial_only=spatial_only)


def _sqdist(X, x):
    out = (X[:, 0] - x[0]) ** 2
    for k in range(1, X.shape[1]):
        out += (X[:, k] - x[k]) ** 2
    return out


def _m_per_row(m, n):
    m = np.asarray(m, dtype=np.intp)
    if m.ndim == 0:
        m = np.full(n, int(m), dtype=np.intp)
    if m.shape != (n,) or np.any(m < 0):
        raise ValueError("m must be a nonnegative count or one count per point")
    return np.minimum(m, np.arange(n))


def _select(cand, d2, mi):
    # lexicographic (distance, position); returns chosen positions nearest-first
    order = np.lexsort((cand, d2))[:mi]
    return cand[order], d2[order[-1]] if mi else -np.inf


def _brute_row(Xp, i, mi):
    if mi == 0:
        return np.zeros(0, dtype=np.intp)
    d2 = _sqdist(Xp[:i], Xp[i])
    if mi < i:
        cut = np.partition(d2, mi - 1)[mi - 1]
        cand = np.flatnonzero(d2 <= cut)
    else:
        cand = np.arange(i)
    sel, _ = _select(cand.astype(np.intp), d2[cand], mi)
    return sel


def _assemble(n, chosen):
    rows = [np.sort(c) for c in chosen]
    return NeighborSets.from_rows(rows, chosen)


def nn_ordered_brute(locs, perm, m, spatial_only=True):
    """Ordered nearest neighbors by scanning all previous points."""
    X = _geometry(locs, spatial_only)
    Xp = X[perm.forward]
    n = Xp.shape[0]
    mrow = _m_per_row(m, n)
    return _assemble(n, [_brute_row(Xp, i, mrow[i]) for i in range(n)])


def build_tree(locs, spatial_only=True):
    """kd-tree over the original (unpermuted) points, reusable across orderings."""
    return cKDTree(_geometry(locs, spatial_only))


def nn_ordered_fast(locs, perm, m, spatial_only=True, tree=None, return_rounds=False):
    """Ordered nearest neighbors via k-nearest queries with doubling k.

    Each unresolved position asks the tree for its k nearest points overall,
    starting with k = 2m and doubling.  A position is resolved once it has
    at least m previous points among them strictly closer than the k-th
    returned distance, which guarantees no unseen previous point can tie or
    beat them.  Positions still unresolved when k reaches n are scanned by
    brute force.  Output is identical to :func:`nn_ordered_brute`.

    With ``return_rounds`` also returns the round (1, 2, ...) in which each
    position resolved; 0 means trivially resolved, -1 brute force.
    """
    X = _geometry(locs, spatial_only)
    n = X.shape[0]
    Xp = X[perm.forward]
    mrow = _m_per_row(m, n)
    if tree is None:
        tree = cKDTree(X)
    chosen = [None] * n
    rounds = np.zeros(n, dtype=np.intp)
    for i in np.flatnonzero(mrow == 0):
        chosen[i] = np.zeros(0, dtype=np.intp)
    todo = np.flatnonzero(mrow > 0)
    mmax = int(mrow.max()) if n else 0
    k = 2 * mmax
    r = 1
    while todo.size:
        if k >= n:
            for i in todo:
                chosen[i] = _brute_row(Xp, i, mrow[i])
                rounds[i] = -1
            break
        dist, idx = tree.query(Xp[todo], k=k)
        cand_pos = perm.inverse[idx]
        dmax2 = (dist[:, -1] ** 2) * (1.0 - 1e-9)
        left = []
        for row, i in enumerate(todo):
            cp = cand_pos[row]
            cp = cp[cp < i]
            mi = mrow[i]
            if cp.size < mi:
                left.append(i)
                continue
            d2 = _sqdist(Xp[cp], Xp[i])
            sel, dm = _select(cp, d2, mi)
            if dm < dmax2[row]:
                chosen[i] = sel
                rounds[i] = r
            else:
                left.append(i)
        todo = np.asarray(left, dtype=np.intp)
        k *= 2
        r += 1
    sets = _assemble(n, chosen)
    return (sets, rounds) if return_rounds else sets


def nn_ordered(locs, perm, m, spatial_only=True, check=False, tree=None):
    """Fast ordered neighbors; ``check`` re-derives them by brute force."""
    fast = nn_ordered_fast(locs, perm, m, spatial_only=spatial_only, tree=tree)
    if check:
        brute = nn_ordered_brute(locs, perm, m, spatial_only=spatial_only)
        if not fast.same_sets(brute):
            raise AssertionError("fast neighbor search disagrees with brute force")
    return fast
