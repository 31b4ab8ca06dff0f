"""Greedy grouping of ordered observations into blocks with shared factorizations.

A block ``B_k`` conditions on the union ``U_k`` of its members' neighbor
sets.  Member ``i`` then uses the expanded set ``{j in U_k : j <= i}``, which
is the prefix of the sorted ``U_k`` ending at ``i``; all members' rows come
from one Cholesky factorization of the covariance of ``U_k``.
"""

from dataclasses import dataclass

import numpy as np

from .neighbors import NeighborSets


@dataclass(frozen=True, eq=False)
class BlockPartition:
    """Disjoint blocks covering positions ``0..n-1``.

    ``blocks[k]`` and ``unions[k]`` are ascending arrays; ``block_of[i]`` is
    the block holding position ``i``.  Blocks are listed by their largest
    member, which is also the largest element of the union.
    """

    blocks: tuple
    unions: tuple
    block_of: np.ndarray

    @classmethod
    def singletons(cls, sets):
        """One block per position with ``U = J_i`` (the ungrouped case)."""
        n = len(sets)
        blocks = tuple(np.array([i], dtype=np.intp) for i in range(n))
        unions = tuple(np.asarray(sets[i], dtype=np.intp) for i in range(n))
        return cls(blocks, unions, np.arange(n, dtype=np.intp))

    @property
    def n(self):
        return self.block_of.shape[0]

    @property
    def n_blocks(self):
        return len(self.blocks)

    def expanded(self):
        """Expanded per-position conditioning sets as :class:`NeighborSets`."""
        rows = [None] * self.n
        for B, U in zip(self.blocks, self.unions):
            cut = np.searchsorted(U, B)
            for i, p in zip(B, cut):
                rows[i] = U[:p + 1]
        return NeighborSets.from_rows(rows)

    def memory(self):
        """Sum of squared union sizes, the storage needed for all A^k."""
        return int(sum(U.size ** 2 for U in self.unions))

    def flops(self):
        return int(sum(U.size ** 3 for U in self.unions))

    def stats(self):
        """Block count plus mean/max union and expanded-set sizes."""
        u = np.array([U.size for U in self.unions])
        jbar = self._jbar_sizes()
        return {
            "K": self.n_blocks,
            "mean_U": float(u.mean()),
            "max_U": int(u.max()),
            "mean_Jbar": float(jbar.mean()),
            "max_Jbar": int(jbar.max()),
        }

    def _jbar_sizes(self):
        sizes = np.empty(self.n, dtype=np.intp)
        for B, U in zip(self.blocks, self.unions):
            sizes[B] = np.searchsorted(U, B) + 1
        return sizes

    def backend_arrays(self):
        """Flat index arrays consumed by the block kernels.

        Returns ``(u_ptr, u_idx, m_ptr, m_pos, members)`` where block k's
        union is ``u_idx[u_ptr[k]:u_ptr[k+1]]``, its members sit at union
        positions ``m_pos[m_ptr[k]:m_ptr[k+1]]`` and ``members`` lists the
        member positions in the same order.
        """
        K = self.n_blocks
        u_ptr = np.zeros(K + 1, dtype=np.intp)
        u_ptr[1:] = np.cumsum([U.size for U in self.unions])
        m_ptr = np.zeros(K + 1, dtype=np.intp)
        m_ptr[1:] = np.cumsum([B.size for B in self.blocks])
        u_idx = np.concatenate(self.unions).astype(np.intp)
        members = np.concatenate(self.blocks).astype(np.intp)
        m_pos = np.concatenate(
            [np.searchsorted(U, B) for B, U in zip(self.blocks, self.unions)]
        ).astype(np.intp)
        return u_ptr, u_idx, m_ptr, m_pos, members

    def is_valid(self, sets=None):
        n = self.n
        seen = np.zeros(n, dtype=np.intp)
        for k, (B, U) in enumerate(zip(self.blocks, self.unions)):
            seen[B] += 1
            if np.any(self.block_of[B] != k) or U[-1] != B[-1]:
                return False
            if not np.isin(B, U).all() or np.any(np.diff(U) <= 0):
                return False
        if not np.all(seen == 1):
            return False
        return sets is None or self.expanded().contains(sets)


RULES = ("literal", "anchored")


def merge_accepted(size_a, size_b, size_union):
    """Memory rule: the merged block's squared union size may not grow."""
    return size_union ** 2 <= size_a ** 2 + size_b ** 2


def group_blocks(sets, m=None, rule="literal"):
    """Greedy single-pass merge of blocks.

    For ``l = 0..m-1`` and each position ``i`` in turn, the block holding
    ``i`` absorbs the block holding its ``l``-th nearest previous neighbor
    ``j`` whenever the squared size of the merged union does not exceed the
    sum of the two squared sizes.  Positions with fewer than ``l + 1``
    neighbors are skipped for that ``l``.

    Parameters
    ----------
    sets : NeighborSets
        Ungrouped conditioning sets.  Neighbors are visited nearest-first
        when ``sets.ranked`` is available, otherwise from the largest
        (latest) index down.
    m : int, optional
        Number of sweeps; defaults to the largest neighbor count.
    rule : {"literal", "anchored"}
        ``"literal"`` locates blocks by membership as described above.
        ``"anchored"`` keys every block by the position that created it:
        position ``i`` proposes a merge only while ``j`` still anchors a
        block, and the merged block is re-anchored at ``i``.  The literal
        rule lets the first few hundred positions cascade into one block
        (each new point adds a single union element); the anchored rule
        avoids that and yields many more, smaller blocks.
    """
    if rule not in RULES:
        raise ValueError(f"unknown grouping rule {rule!r}; expected one of {RULES}")
    n = len(sets)
    sizes = sets.sizes() - 1
    if m is None:
        m = int(sizes.max()) if n else 0
    ranked = [
        sets.nearest_first(i) if sets.ranked is not None else sets[i][-2::-1]
        for i in range(n)
    ]
    empty = np.zeros(0, dtype=np.intp)
    members = [[i] for i in range(n)]
    unions = [np.asarray(sets[i], dtype=np.intp) for i in range(n)]
    block_of = np.arange(n, dtype=np.intp)
    anchored = rule == "anchored"
    for ell in range(m):
        for i in np.flatnonzero(sizes > ell):
            j = ranked[i][ell]
            if anchored:
                if not members[j]:
                    continue
                k, k2 = i, j
            else:
                k, k2 = block_of[i], block_of[j]
                if k == k2:
                    continue
            a = unions[k] if members[k] else empty
            b = unions[k2]
            u = np.union1d(a, b)
            if merge_accepted(a.size, b.size, u.size):
                members[k].extend(members[k2])
                block_of[members[k2]] = k
                members[k2] = []
                unions[k] = u
                unions[k2] = empty
    live = [k for k in range(n) if members[k]]
    live.sort(key=lambda k: unions[k][-1])
    blocks = tuple(np.sort(np.asarray(members[k], dtype=np.intp)) for k in live)
    out_unions = tuple(unions[k] for k in live)
    relabel = np.empty(n, dtype=np.intp)
    for new, B in enumerate(blocks):
        relabel[B] = new
    return BlockPartition(blocks, out_unions, relabel)


def lossless_partition(sets):
    """Merge consecutive positions whenever that leaves every set unchanged.

    Position ``i`` joins the current block when the block's union equals
    ``J_i`` restricted to indices up to the block's last member.  The
    expanded sets then equal ``sets`` exactly, so the approximation is the
    same while nested sets (e.g. full conditioning) share one factorization.
    """
    n = len(sets)
    blocks, unions = [], []
    cur, U = [], None
    for i in range(n):
        J = np.asarray(sets[i], dtype=np.intp)
        if cur and np.array_equal(J[J <= U[-1]], U):
            cur.append(i)
        else:
            if cur:
                blocks.append(np.asarray(cur, dtype=np.intp))
                unions.append(U)
            cur = [i]
        U = J
    if cur:
        blocks.append(np.asarray(cur, dtype=np.intp))
        unions.append(U)
    block_of = np.empty(n, dtype=np.intp)
    for k, B in enumerate(blocks):
        block_of[B] = k
    return BlockPartition(tuple(blocks), tuple(unions), block_of)


def build_grouped_sets(partition, sets=None):
    """Expanded sets of ``partition``; checks they contain ``sets`` if given."""
    expanded = partition.expanded()
    if sets is not None and not expanded.contains(sets):
        raise AssertionError("expanded sets do not contain the original neighbor sets")
    return expanded
