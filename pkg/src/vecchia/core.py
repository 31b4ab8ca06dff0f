"""Sparse inverse-Cholesky approximation and the Vecchia log-likelihood.

Everything here works in the permuted frame: position ``i`` of the ordering
is original observation ``perm.forward[i]``.  Row ``i`` of the factor holds
the coefficients of the conditional density of position ``i`` given its
conditioning set, with the diagonal entry last.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from . import _backend
from .grouping import BlockPartition
from .locations import as_locations
from .neighbors import NeighborSets

LOG_2PI = math.log(2.0 * math.pi)


class NumericalError(ArithmeticError):
    """A numerical failure that callers may want to report, not crash on."""


class FactorizationError(NumericalError):
    """Covariance of a conditioning block is not numerically positive definite."""

    def __init__(self, block, positions, model=None):
        self.block = int(block)
        self.positions = np.asarray(positions)
        self.model = model
        shown = ", ".join(str(int(p)) for p in self.positions[:8])
        more = ", ..." if self.positions.size > 8 else ""
        super().__init__(
            f"Cholesky factorization failed for block {self.block} "
            f"(positions {shown}{more}); coincident locations or a near-singular "
            "covariance; try a positive nugget or jitter"
        )


class RankDeficientError(NumericalError):
    """The whitened design matrix does not have full column rank."""


@dataclass(frozen=True, eq=False)
class SparseInverseCholesky:
    """Row-sparse lower-triangular approximation to the inverse Cholesky factor.

    Row ``i`` has column indices ``indices[indptr[i]:indptr[i+1]]`` (ascending,
    last equal to ``i``) and matching coefficients in ``data``.
    """

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    perm: object = None

    @property
    def n(self):
        return self.indptr.shape[0] - 1

    @property
    def diag(self):
        return self.data[self.indptr[1:] - 1]

    def row(self, i):
        sl = slice(self.indptr[i], self.indptr[i + 1])
        return self.indices[sl], self.data[sl]

    def logdet(self):
        return float(np.sum(np.log(self.diag)))

    def permute(self, v):
        """Original order to permuted order (identity if no permutation)."""
        v = np.asarray(v, dtype=float)
        return v if self.perm is None else v[self.perm.forward]

    def unpermute(self, v):
        v = np.asarray(v, dtype=float)
        return v if self.perm is None else v[self.perm.inverse]

    def matvec(self, v):
        """``G @ v`` for a permuted-frame vector or (n, q) array."""
        v = np.asarray(v, dtype=float)
        prod = self.data[:, None] * v[self.indices].reshape(self.indices.shape[0], -1)
        out = np.add.reduceat(prod, self.indptr[:-1], axis=0)
        return out.reshape(v.shape)

    def solve(self, b, start=0):
        """Solve ``G x = b`` by forward substitution (permuted frame).

        Rows before ``start`` of ``b`` are taken as already-known values of
        ``x``, which gives the lower-right block solve used for prediction.
        """
        b = np.asarray(b, dtype=float)
        B = np.array(b.reshape(b.shape[0], -1), dtype=float, order="C")
        _backend.impl().forward_solve(self.indptr, self.indices, self.data, B, int(start))
        return B.reshape(b.shape)

    def to_scipy(self):
        return sparse.csr_matrix((self.data, self.indices, self.indptr), shape=(self.n, self.n))

    def to_dense(self):
        return self.to_scipy().toarray()

    def sets(self):
        return NeighborSets(self.indptr, self.indices)


def _partition(sets, blocks):
    if blocks is not None:
        return blocks
    if isinstance(sets, BlockPartition):
        return sets
    if sets is None:
        raise ValueError("need neighbor sets or a block partition")
    return BlockPartition.singletons(sets)


def _threads(threads):
    return _backend.default_threads() if threads is None else max(1, int(threads))


def permuted_scaled_coords(model, locs, perm):
    X = model.scaled_coords(as_locations(locs))
    return np.ascontiguousarray(X[perm.forward])


def build_gamma_tilde(model, locs, perm, sets=None, blocks=None, threads=None, jitter=0.0):
    """Assemble the sparse inverse-Cholesky factor.

    Parameters
    ----------
    model : CovarianceModel
    locs : LocationSet
    perm : Permutation
    sets : NeighborSets or BlockPartition
        Ungrouped sets (one factorization per position) or a partition
        (one factorization per block, member rows read off its inverse
        Cholesky factor).
    blocks : BlockPartition, optional
        Alternative way to pass a partition.
    threads : int, optional
        Worker threads for the compiled backend.
    jitter : float
        Extra diagonal added to every block covariance.

    Raises
    ------
    FactorizationError
        Naming the first block whose covariance cannot be factored.
    """
    part = _partition(sets, blocks)
    X = permuted_scaled_coords(model, locs, perm)
    u_ptr, u_idx, m_ptr, m_pos, members = part.backend_arrays()
    n = part.n
    lengths = np.empty(n, dtype=np.intp)
    lengths[members] = m_pos + 1
    indptr = np.zeros(n + 1, dtype=np.intp)
    np.cumsum(lengths, out=indptr[1:])
    indices = np.empty(indptr[-1], dtype=np.intp)
    for B, U in zip(part.blocks, part.unions):
        for i, p in zip(B, np.searchsorted(U, B)):
            indices[indptr[i]:indptr[i] + p + 1] = U[:p + 1]
    out_ptr = np.ascontiguousarray(indptr[members])
    data = np.zeros(indptr[-1])
    status = _backend.impl().block_rows(
        X, u_ptr, u_idx, m_ptr, m_pos, float(model.smoothness), float(model.variance),
        float(model.nugget + jitter), _threads(threads), out_ptr, data,
    )
    if status >= 0:
        raise FactorizationError(status, part.unions[status], model)
    return SparseInverseCholesky(indptr, indices, data, perm)


def loglik(G, y, mean=None, X=None, beta=None):
    """Vecchia log-likelihood given a built factor.

    ``y`` is in original order.  The mean is ``X @ beta`` when a design is
    given, else the scalar ``mean`` (default 0).
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (G.n,):
        raise ValueError(f"y has shape {y.shape}, expected ({G.n},)")
    if X is not None:
        r = y - np.asarray(X, dtype=float) @ np.asarray(beta, dtype=float)
    else:
        r = y - (0.0 if mean is None else float(mean))
    z = G.matvec(G.permute(r))
    return -0.5 * G.n * LOG_2PI + G.logdet() - 0.5 * float(z @ z)


def _solve_normal(ZX, Zy):
    p = ZX.shape[1]
    s = np.linalg.svd(ZX, compute_uv=False)
    if s.size < p or s[-1] <= s[0] * max(ZX.shape) * np.finfo(float).eps:
        raise RankDeficientError(f"whitened design matrix has rank < {p}")
    try:
        c = cho_factor(ZX.T @ ZX)
    except LinAlgError as exc:
        raise RankDeficientError(str(exc)) from exc
    return cho_solve(c, ZX.T @ Zy)


def profile_beta(G, X, y):
    """Generalized least squares mean coefficients under the factor ``G``.

    Returns ``(beta, loglik)`` with the log-likelihood evaluated at ``beta``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    if X.shape[0] != y.shape[0] or y.shape != (G.n,):
        raise ValueError("X, y and the factor disagree in length")
    ZX = G.matvec(G.permute(X))
    Zy = G.matvec(G.permute(y))
    beta = _solve_normal(ZX, Zy)
    return beta, loglik(G, y, X=X, beta=beta)


@dataclass(frozen=True, eq=False)
class LikelihoodPlan:
    """Model-independent pieces of a likelihood evaluation, reusable across θ."""

    perm: object
    partition: BlockPartition
    u_ptr: np.ndarray
    u_idx: np.ndarray
    m_ptr: np.ndarray
    m_pos: np.ndarray
    members: np.ndarray

    @classmethod
    def build(cls, perm, sets):
        part = _partition(sets, None)
        return cls(perm, part, *part.backend_arrays())

    @property
    def n(self):
        return self.partition.n


@dataclass(frozen=True)
class LoglikResult:
    loglik: float
    beta: np.ndarray | None = None


def vecchia_loglik(model, locs, plan, y, X=None, threads=None, jitter=0.0):
    """Vecchia log-likelihood without materializing the factor.

    Each block factors its covariance once and forward-solves the data
    restricted to its union; member rows of the result are the whitened
    residuals.  With a design ``X`` the mean coefficients are profiled out.

    Parameters
    ----------
    plan : LikelihoodPlan or (perm, sets) tuple
    """
    if not isinstance(plan, LikelihoodPlan):
        plan = LikelihoodPlan.build(*plan)
    perm = plan.perm
    y = np.asarray(y, dtype=float)
    if y.shape != (plan.n,):
        raise ValueError(f"y has shape {y.shape}, expected ({plan.n},)")
    Xc = permuted_scaled_coords(model, locs, perm)
    if X is None:
        W = (y - model.mean)[perm.forward][:, None]
    else:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        W = np.hstack([y[:, None], X])[perm.forward]
    W = np.ascontiguousarray(W)
    Z = np.zeros_like(W)
    diag = np.zeros(plan.n)
    status = _backend.impl().block_solve(
        Xc, plan.u_ptr, plan.u_idx, plan.m_ptr, plan.m_pos, W,
        float(model.smoothness), float(model.variance), float(model.nugget + jitter),
        _threads(threads), Z, diag,
    )
    if status >= 0:
        raise FactorizationError(status, plan.partition.unions[status], model)
    beta = None
    if X is None:
        z = Z[:, 0]
    else:
        beta = _solve_normal(Z[:, 1:], Z[:, 0])
        z = Z[:, 0] - Z[:, 1:] @ beta
    ll = -0.5 * plan.n * LOG_2PI + float(np.sum(np.log(diag))) - 0.5 * float(z @ z)
    return LoglikResult(ll, beta)


def dense_loglik(model, locs, y, X=None, beta=None, jitter=0.0):
    """Exact Gaussian log-density from a dense Cholesky factorization."""
    from .covariance import build_cov_matrix

    C = build_cov_matrix(model, locs, jitter=jitter)
    y = np.asarray(y, dtype=float)
    r = y - (model.mean if X is None else np.asarray(X) @ np.asarray(beta))
    try:
        c, low = cho_factor(C, lower=True)
    except LinAlgError as exc:
        raise NumericalError(f"dense covariance is not positive definite: {exc}") from exc
    logdet = 2.0 * np.sum(np.log(np.diag(c)))
    quad = float(r @ cho_solve((c, low), r))
    return -0.5 * y.size * LOG_2PI - 0.5 * logdet - 0.5 * quad
