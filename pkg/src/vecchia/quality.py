"""Dense oracle, KL divergences, misspecified information and baselines.

Everything here materializes n x n matrices, so it is limited to
``ORACLE_CAP`` observations.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cholesky, solve_triangular
from scipy.optimize import minimize
from scipy.spatial.distance import cdist

from .core import NumericalError, build_gamma_tilde
from .covariance import build_cov_matrix
from .grouping import BlockPartition, lossless_partition
from .locations import as_locations

ORACLE_CAP = 4096


def _check_cap(n, cap):
    if n > cap:
        raise ValueError(f"dense oracle limited to {cap} points, got {n}")


def _chol(S, what="matrix"):
    try:
        return cholesky(S, lower=True, check_finite=False)
    except LinAlgError as exc:
        raise NumericalError(f"{what} is not positive definite: {exc}") from exc


@dataclass(frozen=True, eq=False)
class DenseGaussian:
    """Mean-zero Gaussian with a dense covariance and its Cholesky factor."""

    cov: np.ndarray
    chol: np.ndarray
    logdet: float

    @classmethod
    def from_cov(cls, S, cap=ORACLE_CAP):
        S = np.asarray(S, dtype=float)
        _check_cap(S.shape[0], cap)
        L = _chol(S, "covariance")
        return cls(S, L, 2.0 * float(np.sum(np.log(np.diag(L)))))

    @classmethod
    def from_model(cls, model, locs, perm=None, cap=ORACLE_CAP, jitter=0.0):
        """Covariance of ``locs``, in the permuted frame when ``perm`` is given."""
        locs = as_locations(locs)
        _check_cap(locs.n, cap)
        S = build_cov_matrix(model, locs, jitter=jitter)
        if perm is not None:
            S = S[np.ix_(perm.forward, perm.forward)]
        return cls.from_cov(S, cap)

    @property
    def n(self):
        return self.cov.shape[0]

    def logpdf(self, y):
        z = solve_triangular(self.chol, np.asarray(y, dtype=float), lower=True)
        return -0.5 * self.n * math.log(2 * math.pi) - 0.5 * self.logdet - 0.5 * float(z @ z)


def kl_divergence_general(S0, S1):
    """KL divergence from N(0, S0) to N(0, S1)."""
    S0 = np.asarray(S0, dtype=float)
    S1 = np.asarray(S1, dtype=float)
    if S0.shape != S1.shape or S0.shape[0] != S0.shape[1]:
        raise ValueError(f"shape mismatch: {S0.shape} vs {S1.shape}")
    L0 = _chol(S0, "first covariance")
    L1 = _chol(S1, "second covariance")
    M = solve_triangular(L1, L0, lower=True)
    n = S0.shape[0]
    trace = float(np.sum(M * M))
    logdet_ratio = 2.0 * float(np.sum(np.log(np.diag(L1)) - np.log(np.diag(L0))))
    return 0.5 * (trace - n + logdet_ratio)


def kl_divergence_vecchia(model, locs, perm, sets, dense=None, threads=None):
    """KL divergence from the exact model to its Vecchia approximation.

    The trace term equals n when the factor is built at the true parameters,
    leaving half the difference of log-determinants.  ``sets`` may be
    neighbor sets or a block partition; ``dense`` lets callers reuse the
    exact log-determinant across many approximations.
    """
    if dense is None:
        dense = DenseGaussian.from_model(model, locs, perm)
    G = build_gamma_tilde(model, locs, perm, sets, threads=threads)
    return 0.5 * (-2.0 * G.logdet() - dense.logdet)


def vecchia_implied_covariance(G):
    """Dense ``(G^T G)^{-1}`` in the permuted frame."""
    Gd = G.to_dense()
    Ginv = solve_triangular(Gd, np.eye(G.n), lower=True)
    return Ginv @ Ginv.T


def kl_divergence_vecchia_dense(model, locs, perm, sets):
    """Same quantity as :func:`kl_divergence_vecchia` without the shortcut."""
    dense = DenseGaussian.from_model(model, locs, perm)
    G = build_gamma_tilde(model, locs, perm, sets)
    return kl_divergence_general(dense.cov, vecchia_implied_covariance(G))


def trace_identity(model, locs, perm, sets):
    """``tr(G^T G S0)``, which equals n at the true parameters."""
    dense = DenseGaussian.from_model(model, locs, perm)
    G = build_gamma_tilde(model, locs, perm, sets).to_dense()
    return float(np.sum((G @ dense.cov) * G))


# ---------------------------------------------------------------------------
# misspecified (Godambe) information


@dataclass(frozen=True, eq=False)
class InformationMatrices:
    params: tuple
    fisher: np.ndarray
    godambe: np.ndarray
    expected_score: np.ndarray
    expected_hessian: np.ndarray
    score_covariance: np.ndarray
    relative_efficiency: np.ndarray

    def as_dict(self):
        return {p: float(e) for p, e in zip(self.params, self.relative_efficiency)}


def _shift(model, names, steps):
    return model.replace(**{k: model.get(k) * math.exp(s) for k, s in zip(names, steps) if s})


def _first_differences(fun, model, names, h, richardson=True):
    """Central differences of ``fun`` in log-parameters, optionally extrapolated."""
    p = len(names)

    def central(step):
        out = []
        for i in range(p):
            e = np.zeros(p)
            e[i] = step
            out.append((fun(_shift(model, names, e)) - fun(_shift(model, names, -e))) / (2 * step))
        return out

    d1 = central(h)
    if not richardson:
        return d1
    d2 = central(h / 2)
    return [(4 * b - a) / 3 for a, b in zip(d1, d2)]


def _second_differences(fun, model, names, h, f0):
    p = len(names)
    out = [[None] * p for _ in range(p)]
    for i in range(p):
        e = np.zeros(p)
        e[i] = h
        out[i][i] = (fun(_shift(model, names, e)) - 2 * f0 + fun(_shift(model, names, -e))) / h**2
        for j in range(i):
            f = np.zeros(p)
            f[j] = h
            v = (
                fun(_shift(model, names, e + f)) - fun(_shift(model, names, e - f))
                - fun(_shift(model, names, -e + f)) + fun(_shift(model, names, -e - f))
            ) / (4 * h**2)
            out[i][j] = out[j][i] = v
    return out


def _cq(model, locs, perm, part):
    """Constant and quadratic-form matrix of the Vecchia log-likelihood."""
    G = build_gamma_tilde(model, locs, perm, part)
    c = -0.5 * G.n * math.log(2 * math.pi) + G.logdet()
    Gd = G.to_dense()
    return np.concatenate([[c], (Gd.T @ Gd).ravel()])


def _unpack(v, n):
    return v[0], v[1:].reshape(n, n)


def _dense_factor(model, locs, perm, part):
    return build_gamma_tilde(model, locs, perm, part).to_dense()


HESSIAN_ROUTES = ("nested", "rowwise")


def godambe_information(model, locs, perm, sets, params=None, rel_step=1e-4,
                        richardson=True, hessian="rowwise", cap=ORACLE_CAP):
    """Fisher and Godambe information of the Vecchia likelihood at ``model``.

    The approximate log-likelihood is ``c(theta) - y^T Q(theta) y / 2`` with
    ``Q = G^T G``.  Derivatives are taken with respect to log-parameters by
    central differences with step ``rel_step``; first derivatives are
    Richardson extrapolated unless ``richardson=False``.  Relative
    efficiencies are ``diag(I^{-1}) / diag(H^{-1})`` and do not depend on
    the log scale.

    Parameters
    ----------
    params : sequence of str, optional
        Parameter names to differentiate (default: all with nonzero value).
    hessian : {"nested", "rowwise"}
        ``"nested"`` differentiates ``c`` and ``Q`` twice.  ``"rowwise"``
        uses that every factor of the approximation is a correctly
        specified conditional density, so the expected Hessian is minus the
        summed per-row information
        ``tr(dG_a S0 dG_b^T) + sum_i s_a[i] s_b[i]`` with
        ``s_a = diag(G S0 dG_a^T)``; only first derivatives of ``G`` are
        needed, which is far less sensitive to rounding on ill-conditioned
        covariances.
    """
    if hessian not in HESSIAN_ROUTES:
        raise ValueError(f"unknown hessian route {hessian!r}; expected one of {HESSIAN_ROUTES}")
    locs = as_locations(locs)
    _check_cap(locs.n, cap)
    names = tuple(params or [k for k in model.param_names if model.get(k) > 0])
    n = locs.n
    p = len(names)
    part = sets if isinstance(sets, BlockPartition) else lossless_partition(sets)
    dense = DenseGaussian.from_model(model, locs, perm, cap)
    S0 = dense.cov

    fun = lambda m: _cq(m, locs, perm, part)  # noqa: E731
    d1 = [_unpack(v, n) for v in _first_differences(fun, model, names, rel_step, richardson)]
    score = np.array([dc - 0.5 * float(np.sum(dQ * S0)) for dc, dQ in d1])
    QS = [dQ @ S0 for _, dQ in d1]
    J = np.empty((p, p))
    for i in range(p):
        for j in range(p):
            J[i, j] = score[i] * score[j] + 0.5 * float(np.sum(QS[i] * QS[j].T))
    J = 0.5 * (J + J.T)

    Hs = np.empty((p, p))
    if hessian == "nested":
        d2 = _second_differences(fun, model, names, rel_step, fun(model))
        for i in range(p):
            for j in range(p):
                c2, Q2 = _unpack(d2[i][j], n)
                Hs[i, j] = c2 - 0.5 * float(np.sum(Q2 * S0))
    else:
        G = _dense_factor(model, locs, perm, part)
        gfun = lambda m: _dense_factor(m, locs, perm, part)  # noqa: E731
        dG = _first_differences(gfun, model, names, rel_step, richardson)
        GS = G @ S0
        dGS = [d @ S0 for d in dG]
        s = [np.einsum("ij,ij->i", GS, d) for d in dG]
        for i in range(p):
            for j in range(p):
                Hs[i, j] = -(float(np.sum(dGS[i] * dG[j])) + float(s[i] @ s[j]))
    Hs = 0.5 * (Hs + Hs.T)
    if np.linalg.cond(J) > 1e14:
        raise NumericalError("score covariance is numerically singular")
    H = Hs @ np.linalg.solve(J, Hs)

    sig = lambda m: DenseGaussian.from_model(m, locs, perm, cap).cov.ravel()  # noqa: E731
    dS = [v.reshape(n, n) for v in _first_differences(sig, model, names, rel_step, richardson)]
    W = [solve_triangular(dense.chol.T, solve_triangular(dense.chol, d, lower=True), lower=False)
         for d in dS]
    fisher = np.array([[0.5 * float(np.sum(W[i] * W[j].T)) for j in range(p)] for i in range(p)])
    fisher = 0.5 * (fisher + fisher.T)
    releff = np.diag(np.linalg.inv(fisher)) / np.diag(np.linalg.inv(H))
    return InformationMatrices(names, fisher, H, score, Hs, J, releff)


# ---------------------------------------------------------------------------
# baselines


def tile_labels(locs, tiles):
    """Label points by an equal-width tiling of their bounding box."""
    X = as_locations(locs).coords
    tiles = np.broadcast_to(np.asarray(tiles, dtype=int), (X.shape[1],))
    lo, hi = X.min(axis=0), X.max(axis=0)
    width = np.where(hi > lo, (hi - lo) / tiles, 1.0)
    cell = np.clip(np.floor((X - lo) / width).astype(int), 0, tiles - 1)
    return np.ravel_multi_index(cell.T, tiles)


def baseline_block_independent(model, locs, tiles=3, cap=ORACLE_CAP, labels=None):
    """KL divergence of the approximation that treats tiles as independent.

    ``tiles`` is the number of tiles per dimension (scalar or per-dimension);
    ``labels`` overrides the tiling with an explicit block label per point.
    """
    locs = as_locations(locs)
    _check_cap(locs.n, cap)
    S0 = build_cov_matrix(model, locs)
    lab = tile_labels(locs, tiles) if labels is None else np.asarray(labels)
    S1 = np.where(lab[:, None] == lab[None, :], S0, 0.0)
    return kl_divergence_general(S0, S1)


def wendland1(r):
    """Wendland taper (1 - r)_+^4 (4 r + 1) at range-scaled distance r."""
    r = np.asarray(r, dtype=float)
    return np.where(r < 1.0, (1.0 - np.minimum(r, 1.0)) ** 4 * (4.0 * r + 1.0), 0.0)


def taper_range_for(locs, nnz):
    """Taper range giving roughly ``nnz`` nonzeros per row on average."""
    X = as_locations(locs).coords
    D = cdist(X, X)
    k = int(min(max(nnz, 1), X.shape[0]))
    kth = np.partition(D, k - 1, axis=1)[:, k - 1]
    return float(np.mean(kth)) * (1 + 1e-9)


def tapered_covariance(model, locs, taper_range):
    locs = as_locations(locs)
    X = model.scaled_coords(locs)
    D = cdist(X, X)
    raw = cdist(locs.coords, locs.coords) if not locs.has_time else D * model.range
    S = model.variance * model.correlation(D) * wendland1(raw / taper_range)
    S[np.diag_indices_from(S)] = model.variance + model.nugget
    return S


@dataclass(frozen=True)
class TaperResult:
    kl: float
    variance: float
    range: float
    converged: bool


def baseline_taper(model, locs, taper_range, optimize=True, cap=ORACLE_CAP, full_output=False):
    """KL divergence of a tapered Matérn approximation.

    With ``optimize`` the variance and range of the tapered model are chosen
    to minimize the KL divergence (Nelder-Mead in log space, started at the
    true values).
    """
    locs = as_locations(locs)
    _check_cap(locs.n, cap)
    S0 = build_cov_matrix(model, locs)

    def kl_at(logp):
        m = model.replace(variance=math.exp(logp[0]), range=math.exp(logp[1]))
        try:
            return kl_divergence_general(S0, tapered_covariance(m, locs, taper_range))
        except NumericalError:
            return np.inf

    x0 = np.log([model.variance, model.range])
    best, ok = x0, True
    if optimize:
        res = minimize(kl_at, x0, method="Nelder-Mead",
                       options=dict(xatol=1e-6, fatol=1e-10, maxfev=400,
                                    initial_simplex=[x0, x0 + [0.2, 0], x0 + [0, 0.2]]))
        if res.fun <= kl_at(x0):
            best, ok = res.x, bool(res.success)
    kl = kl_at(best)
    if full_output:
        return TaperResult(kl, float(math.exp(best[0])), float(math.exp(best[1])), ok)
    return kl
