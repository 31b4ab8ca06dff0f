"""Orderings of observation locations.

All functions return a :class:`Permutation` whose ``forward[i]`` is the
original index of the point placed at position ``i``.  Ties are broken by
the lowest original index.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .locations import as_locations

SCHEMES = ("coord", "sum", "middle", "random", "mmd", "ammd")


@dataclass(frozen=True, eq=False)
class Permutation:
    forward: np.ndarray
    inverse: np.ndarray

    @classmethod
    def from_forward(cls, forward):
        forward = np.asarray(forward, dtype=np.intp)
        n = forward.shape[0]
        if forward.ndim != 1 or np.any(forward < 0) or np.any(forward >= n):
            raise ValueError("forward is not a permutation of 0..n-1")
        inverse = np.full(n, -1, dtype=np.intp)
        inverse[forward] = np.arange(n, dtype=np.intp)
        if np.any(inverse < 0):
            raise ValueError("forward is not a permutation of 0..n-1")
        return cls(forward, inverse)

    @classmethod
    def identity(cls, n):
        return cls.from_forward(np.arange(n))

    def __len__(self):
        return self.forward.shape[0]

    def is_valid(self):
        n = len(self)
        return bool(
            np.array_equal(np.sort(self.forward), np.arange(n))
            and np.array_equal(self.inverse[self.forward], np.arange(n))
        )


def _points(locs):
    if isinstance(locs, np.ndarray) and locs.ndim == 2:
        return np.asarray(locs, dtype=float)
    return as_locations(locs).points()


def order_sorted_coordinate(locs, axis=0):
    """Sort by one coordinate, or by the coordinate sum when ``axis="sum"``."""
    X = _points(locs)
    key = X.sum(axis=1) if axis == "sum" else X[:, int(axis)]
    return Permutation.from_forward(np.argsort(key, kind="stable"))


def order_middle_out(locs, center=None):
    """Sort by distance to ``center`` (default: coordinate mean)."""
    X = _points(locs)
    c = X.mean(axis=0) if center is None else np.asarray(center, dtype=float)
    return Permutation.from_forward(np.argsort(_sqdist(X, c), kind="stable"))


def order_random(n, seed=0):
    """Uniformly random permutation from a seeded Philox stream."""
    rng = np.random.Generator(np.random.Philox(seed))
    return Permutation.from_forward(rng.permutation(int(n)))


def _sqdist(X, x):
    out = (X[:, 0] - x[0]) ** 2
    for k in range(1, X.shape[1]):
        out += (X[:, k] - x[k]) ** 2
    return out


def order_mmd_exact(locs, center=None):
    """Maximum-minimum-distance ordering, starting nearest ``center``.

    O(n^2): keeps each unselected point's squared distance to the nearest
    selected point and updates it after every pick.
    """
    X = _points(locs)
    n = X.shape[0]
    c = X.mean(axis=0) if center is None else np.asarray(center, dtype=float)
    order = np.empty(n, dtype=np.intp)
    first = int(np.argmin(_sqdist(X, c)))
    order[0] = first
    mind = _sqdist(X, X[first])
    mind[first] = -np.inf
    for j in range(1, n):
        nxt = int(np.argmax(mind))
        order[j] = nxt
        np.minimum(mind, _sqdist(X, X[nxt]), out=mind)
        mind[nxt] = -np.inf
    return Permutation.from_forward(order)


def _box_grid(X, n_boxes):
    lo = X.min(axis=0)
    side = X.max(axis=0) - lo
    # sides negligible next to the longest are treated as flat
    active = side > 1e-9 * side.max()
    counts = np.ones(X.shape[1], dtype=np.intp)
    if active.any():
        logscale = (math.log(n_boxes) - np.log(side[active]).sum()) / active.sum()
        raw = np.exp(np.minimum(np.log(side[active]) + logscale, math.log(n_boxes)))
        counts[active] = np.maximum(1, np.round(raw)).astype(np.intp)
    while np.prod(counts.astype(float)) > 4.0 * n_boxes:
        k = int(np.argmax(counts))
        counts[k] = (counts[k] + 1) // 2
    width = np.where(active, side, 1.0) / counts
    cell = np.floor((X - lo) / width).astype(np.intp)
    cell = np.clip(cell, 0, counts - 1)
    return lo, width, counts, cell


def order_ammd(locs, target=16, max_exact_boxes=4096):
    """Approximate maximum-minimum-distance ordering on a box grid.

    Points are binned into about ``n / target`` boxes (split per dimension in
    proportion to the bounding box).  Non-empty boxes are ordered by MMD on
    their centers, recursively with this function when there are more than
    ``max_exact_boxes`` of them.  The ordering then cycles through the boxes,
    each visit emitting the box's unordered point farthest from the selected
    points in the box and its 3^d neighbors.  A box with no selected
    neighbors yet contributes its point nearest the box center.
    """
    X = _points(locs)
    n, d = X.shape
    n_boxes = math.ceil(n / target)
    if n_boxes <= 1:
        return order_mmd_exact(X)
    lo, width, counts, cell = _box_grid(X, n_boxes)
    box_id = np.ravel_multi_index(cell.T, counts)
    boxes, inv = np.unique(box_id, return_inverse=True)
    inv = inv.ravel()
    if boxes.size == 1:
        return order_mmd_exact(X)

    by_box = np.argsort(inv, kind="stable")
    starts = np.searchsorted(inv[by_box], np.arange(boxes.size + 1))
    members = [by_box[starts[b]:starts[b + 1]] for b in range(boxes.size)]

    box_cells = np.stack(np.unravel_index(boxes, counts), axis=1)
    centers = lo + (box_cells + 0.5) * width
    if boxes.size > max_exact_boxes:
        box_order = order_ammd(centers, target, max_exact_boxes).forward
    else:
        box_order = order_mmd_exact(centers).forward

    lookup = {int(b): k for k, b in enumerate(boxes)}
    neighbors = []
    offsets = list(itertools.product((-1, 0, 1), repeat=d))
    for k in range(boxes.size):
        nb = []
        for off in offsets:
            c = box_cells[k] + off
            if np.all(c >= 0) and np.all(c < counts):
                j = lookup.get(int(np.ravel_multi_index(c, counts)))
                if j is not None:
                    nb.append(j)
        neighbors.append(nb)

    mind = np.full(n, np.inf)
    alive = np.ones(n, dtype=bool)
    remaining = np.array([m.size for m in members])
    order = np.empty(n, dtype=np.intp)
    pos = 0
    cycle = [int(b) for b in box_order]
    while pos < n:
        for b in cycle:
            mem = members[b]
            cand = mem[alive[mem]]
            vals = mind[cand]
            best = vals.max()
            if best == np.inf:
                pool = cand[vals == np.inf]
                pick = int(pool[np.argmin(_sqdist(X[pool], centers[b]))])
            else:
                pick = int(cand[np.argmax(vals)])
            order[pos] = pick
            pos += 1
            alive[pick] = False
            remaining[b] -= 1
            x = X[pick]
            for nb in neighbors[b]:
                m = members[nb]
                mind[m] = np.minimum(mind[m], _sqdist(X[m], x))
        cycle = [b for b in cycle if remaining[b] > 0]
    return Permutation.from_forward(order)


def order_points(locs, scheme, seed=0, axis=0, center=None, target=16):
    """Dispatch on a scheme name from :data:`SCHEMES`."""
    if scheme == "coord":
        return order_sorted_coordinate(locs, axis)
    if scheme == "sum":
        return order_sorted_coordinate(locs, "sum")
    if scheme == "middle":
        return order_middle_out(locs, center)
    if scheme == "random":
        return order_random(len(_points(locs)), seed)
    if scheme == "mmd":
        return order_mmd_exact(locs, center)
    if scheme == "ammd":
        return order_ammd(locs, target)
    raise ValueError(f"unknown ordering {scheme!r}; expected one of {SCHEMES}")
