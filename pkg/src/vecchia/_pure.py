"""Pure numpy/scipy implementations of the hot kernels.

Every function here has a compiled twin in ``_core.pyx`` with the same
signature; ``_backend`` picks one at import.  Index arrays are ``np.intp``.
"""

import math

import numpy as np
from scipy.linalg import LinAlgError, cholesky, solve_triangular

from ._rgamma import EVEN, HALF_INTEGER_TOL, MAX_HALF_ORDER, ODD

_EPS = 1e-16
_XMIN = 2.0
_MAXIT = 10000


def half_integer_order(nu):
    """Return n if nu is within tolerance of n + 1/2, else None."""
    twice = round(2.0 * nu)
    if twice % 2 == 1 and abs(2.0 * nu - twice) < 2.0 * HALF_INTEGER_TOL:
        n = (twice - 1) // 2
        if n <= MAX_HALF_ORDER:
            return n
    return None


def _gamma_parts(mu):
    mu2 = mu * mu
    gam2 = 0.0
    for c in reversed(ODD):
        gam2 = gam2 * mu2 + c
    gam1 = 0.0
    for c in reversed(EVEN):
        gam1 = gam1 * mu2 + c
    gam1 = -gam1
    return gam1, gam2, gam2 - mu * gam1, gam2 + mu * gam1


def _half_integer_bessel(n, x, scaled=False):
    s = 0.0
    for k in range(n + 1):
        s += math.factorial(n + k) / (math.factorial(k) * math.factorial(n - k)) * (2.0 * x) ** (-k)
    return math.sqrt(math.pi / (2.0 * x)) * (1.0 if scaled else math.exp(-x)) * s


def bessel_k(nu, x, scaled=False):
    """Modified Bessel function of the second kind, K_nu(x), for scalar input.

    Half-integer orders use the terminating closed form.  Otherwise the
    fractional part mu in [-1/2, 1/2) is evaluated with Temme's series for
    x < 2 or Steed's continued fraction for x >= 2, followed by upward
    recurrence in the order.  ``scaled`` returns exp(x) K_nu(x).
    """
    nu = float(nu)
    x = float(x)
    if not (nu > 0.0) or not (x > 0.0):
        raise ValueError(f"bessel_k requires nu > 0 and x > 0, got nu={nu}, x={x}")
    n = half_integer_order(nu)
    if n is not None:
        val = _half_integer_bessel(n, x, scaled)
    else:
        val = _bessel_k_general(nu, x, scaled)
    if math.isinf(val):
        raise OverflowError(f"K_{nu}({x}) overflows double precision")
    return val


def _bessel_k_general(nu, x, scaled=False):
    nl = int(nu + 0.5)
    xmu = nu - nl
    xmu2 = xmu * xmu
    xi = 1.0 / x
    xi2 = 2.0 * xi
    if x < _XMIN:
        x2 = 0.5 * x
        pimu = math.pi * xmu
        fact = 1.0 if abs(pimu) < _EPS else pimu / math.sin(pimu)
        d = -math.log(x2)
        e = xmu * d
        fact2 = 1.0 if abs(e) < _EPS else math.sinh(e) / e
        gam1, gam2, gampl, gammi = _gamma_parts(xmu)
        ff = fact * (gam1 * math.cosh(e) + gam2 * fact2 * d)
        total = ff
        e = math.exp(e)
        p = 0.5 * e / gampl
        q = 0.5 / (e * gammi)
        c = 1.0
        d = x2 * x2
        total1 = p
        for i in range(1, _MAXIT + 1):
            ff = (i * ff + p + q) / (i * i - xmu2)
            c *= d / i
            p /= i - xmu
            q /= i + xmu
            delta = c * ff
            total += delta
            total1 += c * (p - i * ff)
            if abs(delta) < abs(total) * _EPS:
                break
        rkmu = total
        rk1 = total1 * xi2
        if scaled:
            rkmu *= math.exp(x)
            rk1 *= math.exp(x)
    else:
        b = 2.0 * (1.0 + x)
        d = 1.0 / b
        h = delh = d
        q1, q2 = 0.0, 1.0
        a1 = 0.25 - xmu2
        q = c = a1
        a = -a1
        s = 1.0 + q * delh
        for i in range(2, _MAXIT + 1):
            a -= 2 * (i - 1)
            c = -a * c / i
            qnew = (q1 - b * q2) / a
            q1, q2 = q2, qnew
            q += c * qnew
            b += 2.0
            d = 1.0 / (b + a * d)
            delh = (b * d - 1.0) * delh
            h += delh
            dels = q * delh
            s += dels
            if abs(dels / s) < _EPS:
                break
        h = a1 * h
        rkmu = math.sqrt(math.pi / (2.0 * x)) * (1.0 if scaled else math.exp(-x)) / s
        rk1 = rkmu * (xmu + x + 0.5 - h) * xi
    for i in range(1, nl + 1):
        rkmu, rk1 = rk1, (xmu + i) * xi2 * rk1 + rkmu
    return rkmu


def bessel_k_array(nu, x):
    """Vectorised K_nu(x) for a scalar order and an array of positive x."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    flat = x.ravel()
    res = out.ravel()
    n = half_integer_order(nu)
    if n is not None:
        s = np.zeros_like(flat)
        for k in range(n + 1):
            s += math.factorial(n + k) / (math.factorial(k) * math.factorial(n - k)) * (2.0 * flat) ** (-k)
        res[:] = np.sqrt(np.pi / (2.0 * flat)) * np.exp(-flat) * s
        return out
    nl = int(nu + 0.5)
    xmu = nu - nl
    xmu2 = xmu * xmu
    rkmu = np.empty_like(flat)
    rk1 = np.empty_like(flat)

    small = flat < _XMIN
    if small.any():
        xs = flat[small]
        x2 = 0.5 * xs
        pimu = math.pi * xmu
        fact = 1.0 if abs(pimu) < _EPS else pimu / math.sin(pimu)
        d = -np.log(x2)
        e = xmu * d
        with np.errstate(invalid="ignore", divide="ignore"):
            fact2 = np.where(np.abs(e) < _EPS, 1.0, np.sinh(e) / e)
        gam1, gam2, gampl, gammi = _gamma_parts(xmu)
        ff = fact * (gam1 * np.cosh(e) + gam2 * fact2 * d)
        total = ff.copy()
        e = np.exp(e)
        p = 0.5 * e / gampl
        q = 0.5 / (e * gammi)
        c = np.ones_like(xs)
        dd = x2 * x2
        total1 = p.copy()
        for i in range(1, _MAXIT + 1):
            ff = (i * ff + p + q) / (i * i - xmu2)
            c *= dd / i
            p /= i - xmu
            q /= i + xmu
            delta = c * ff
            total += delta
            total1 += c * (p - i * ff)
            if np.all(np.abs(delta) < np.abs(total) * _EPS):
                break
        rkmu[small] = total
        rk1[small] = total1 * 2.0 / xs

    large = ~small
    if large.any():
        xl = flat[large]
        b = 2.0 * (1.0 + xl)
        d = 1.0 / b
        h = d.copy()
        delh = d.copy()
        q1 = np.zeros_like(xl)
        q2 = np.ones_like(xl)
        a1 = 0.25 - xmu2
        q = np.full_like(xl, a1)
        c = a1
        a = -a1
        s = 1.0 + q * delh
        for i in range(2, _MAXIT + 1):
            a -= 2 * (i - 1)
            c = -a * c / i
            qnew = (q1 - b * q2) / a
            q1, q2 = q2, qnew
            q = q + c * qnew
            b = b + 2.0
            d = 1.0 / (b + a * d)
            delh = (b * d - 1.0) * delh
            h = h + delh
            dels = q * delh
            s = s + dels
            if np.all(np.abs(dels / s) < _EPS):
                break
        h = a1 * h
        with np.errstate(under="ignore"):
            km = np.sqrt(np.pi / (2.0 * xl)) * np.exp(-xl) / s
        rkmu[large] = km
        rk1[large] = km * (xmu + xl + 0.5 - h) / xl

    xi2 = 2.0 / flat
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(1, nl + 1):
            rkmu, rk1 = rk1, (xmu + i) * xi2 * rk1 + rkmu
    res[:] = rkmu
    return out


def matern_coefficients(nu):
    """Constants for the unit-variance, unit-range Matérn correlation.

    Returns ``(n, coef, lognorm)``.  For half-integer nu = n + 1/2 the
    correlation is ``exp(-t) * polyval(coef, t)``; otherwise ``n`` is -1 and
    the correlation is ``exp(nu*log(t) + lognorm) * K_nu(t)``.
    """
    lognorm = -math.lgamma(nu) - (nu - 1.0) * math.log(2.0)
    n = half_integer_order(nu)
    if n is None:
        return -1, np.zeros(1), lognorm
    norm = math.sqrt(math.pi / 2.0) * math.exp(lognorm)
    coef = np.array([
        norm * math.factorial(n + k) / (math.factorial(k) * math.factorial(n - k)) * 2.0 ** (-k)
        for k in range(n + 1)
    ])
    return n, coef, lognorm


def matern_corr(t, nu):
    """Matérn correlation of scaled distance t (unit range, unit variance)."""
    t = np.asarray(t, dtype=float)
    n, coef, lognorm = matern_coefficients(nu)
    out = np.ones_like(t)
    pos = t > 0
    tp = t[pos]
    if n >= 0:
        out[pos] = np.exp(-tp) * np.polyval(coef, tp)
        return out
    with np.errstate(over="ignore", under="ignore", invalid="ignore", divide="ignore"):
        k = bessel_k_array(nu, tp)
        val = np.exp(nu * np.log(tp) + lognorm) * k
    val = np.where(np.isinf(k), 1.0, val)
    val = np.where(k == 0.0, 0.0, val)
    # rounding in the small-t series can overshoot 1 by ~1e-13
    out[pos] = np.minimum(val, 1.0)
    return out


# a squared pivot this close to rounding of its diagonal counts as singular
PIVOT_TOL = 8.0 * np.finfo(float).eps


def _block_factor(X, U, nu, variance, nugget):
    XU = X[U]
    diff = XU[:, None, :] - XU[None, :, :]
    dist = np.sqrt(np.einsum("abk,abk->ab", diff, diff))
    A = variance * matern_corr(dist, nu)
    A[np.diag_indices_from(A)] = variance + nugget
    L = cholesky(A, lower=True, check_finite=False)
    if np.any(np.diag(L) ** 2 <= PIVOT_TOL * (variance + nugget)):
        raise LinAlgError("pivot lost to rounding")
    return L


def block_solve(X, u_ptr, u_idx, m_ptr, m_pos, W, nu, variance, nugget, nthreads, Z, diag):
    """Per block: factor the covariance of U_k and forward-solve the W rows.

    Writes member rows of ``L_k^{-1} W[U_k]`` into ``Z`` and ``1/L_k[p, p]``
    into ``diag``.  Returns -1 on success or the index of the first block
    whose covariance is not numerically positive definite.
    """
    for k in range(len(u_ptr) - 1):
        U = u_idx[u_ptr[k]:u_ptr[k + 1]]
        try:
            L = _block_factor(X, U, nu, variance, nugget)
        except (LinAlgError, ValueError):
            return k
        Y = solve_triangular(L, W[U], lower=True, check_finite=False)
        pos = m_pos[m_ptr[k]:m_ptr[k + 1]]
        g = U[pos]
        Z[g] = Y[pos]
        diag[g] = 1.0 / L[pos, pos]
    return -1


def block_rows(X, u_ptr, u_idx, m_ptr, m_pos, nu, variance, nugget, nthreads, out_ptr, data):
    """Per block: write row p of L_k^{-1} (entries 0..p) for every member p.

    ``out_ptr[r]`` is the offset in ``data`` for the r-th member overall.
    """
    r = 0
    for k in range(len(u_ptr) - 1):
        U = u_idx[u_ptr[k]:u_ptr[k + 1]]
        try:
            L = _block_factor(X, U, nu, variance, nugget)
        except (LinAlgError, ValueError):
            return k
        Linv = solve_triangular(L, np.eye(len(U)), lower=True, check_finite=False)
        for p in m_pos[m_ptr[k]:m_ptr[k + 1]]:
            o = out_ptr[r]
            data[o:o + p + 1] = Linv[p, :p + 1]
            r += 1
    return -1


def forward_solve(indptr, indices, data, B, start):
    """In-place sparse lower-triangular solve for rows ``start..n-1`` of B.

    Rows before ``start`` are taken as known solution values.
    """
    for i in range(start, len(indptr) - 1):
        lo, hi = indptr[i], indptr[i + 1] - 1
        if hi > lo:
            B[i] -= data[lo:hi] @ B[indices[lo:hi]]
        B[i] /= data[hi]
