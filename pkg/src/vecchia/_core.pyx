# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels.

Mirrors ``_pure`` function-for-function.  Block loops release the GIL and
run under OpenMP when the extension was built with it.
"""

import numpy as np

from cython.parallel cimport parallel, prange
from libc.math cimport cosh, exp, fabs, isinf, log, sin, sinh, sqrt, M_PI
from libc.float cimport DBL_EPSILON
from libc.stdlib cimport free, malloc

from vecchia._pure import matern_coefficients, half_integer_order
from vecchia._rgamma import EVEN, ODD, MAX_HALF_ORDER

cdef enum:
    NCOEF = 14
    MAXHALF = 31

cdef double _ODD[NCOEF]
cdef double _EVEN[NCOEF]
for _i in range(NCOEF):
    _ODD[_i] = ODD[_i]
    _EVEN[_i] = EVEN[_i]

cdef double _EPS = 1e-16
cdef int _MAXIT = 10000


cdef struct Matern:
    double nu
    int n               # half-integer order, -1 for the general path
    double lognorm
    double coef[MAXHALF]


cdef double _bessel_general(double nu, double x, bint scaled=False) noexcept nogil:
    cdef int nl = <int>(nu + 0.5)
    cdef double xmu = nu - nl
    cdef double xmu2 = xmu * xmu
    cdef double xi = 1.0 / x
    cdef double xi2 = 2.0 * xi
    cdef double x2, pimu, fact, d, e, fact2, gam1, gam2, gampl, gammi, mu2
    cdef double ff, total, total1, p, q, c, delta, rkmu, rk1, rktemp
    cdef double b, h, delh, q1, q2, a1, a, s, qnew, dels
    cdef int i
    if x < 2.0:
        x2 = 0.5 * x
        pimu = M_PI * xmu
        fact = 1.0 if fabs(pimu) < _EPS else pimu / sin(pimu)
        d = -log(x2)
        e = xmu * d
        fact2 = 1.0 if fabs(e) < _EPS else sinh(e) / e
        mu2 = xmu2
        gam2 = 0.0
        gam1 = 0.0
        for i in range(NCOEF - 1, -1, -1):
            gam2 = gam2 * mu2 + _ODD[i]
            gam1 = gam1 * mu2 + _EVEN[i]
        gam1 = -gam1
        gampl = gam2 - xmu * gam1
        gammi = gam2 + xmu * gam1
        ff = fact * (gam1 * cosh(e) + gam2 * fact2 * d)
        total = ff
        e = exp(e)
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
            if fabs(delta) < fabs(total) * _EPS:
                break
        rkmu = total
        rk1 = total1 * xi2
        if scaled:
            rkmu = rkmu * exp(x)
            rk1 = rk1 * exp(x)
    else:
        b = 2.0 * (1.0 + x)
        d = 1.0 / b
        h = d
        delh = d
        q1 = 0.0
        q2 = 1.0
        a1 = 0.25 - xmu2
        q = a1
        c = a1
        a = -a1
        s = 1.0 + q * delh
        for i in range(2, _MAXIT + 1):
            a -= 2 * (i - 1)
            c = -a * c / i
            qnew = (q1 - b * q2) / a
            q1 = q2
            q2 = qnew
            q += c * qnew
            b += 2.0
            d = 1.0 / (b + a * d)
            delh = (b * d - 1.0) * delh
            h += delh
            dels = q * delh
            s += dels
            if fabs(dels / s) < _EPS:
                break
        h = a1 * h
        rkmu = sqrt(M_PI / (2.0 * x)) * (1.0 if scaled else exp(-x)) / s
        rk1 = rkmu * (xmu + x + 0.5 - h) * xi
    for i in range(1, nl + 1):
        rktemp = (xmu + i) * xi2 * rk1 + rkmu
        rkmu = rk1
        rk1 = rktemp
    return rkmu


cdef double _bessel_half(int n, double x, bint scaled=False) noexcept nogil:
    cdef double s = 0.0, term = 1.0
    cdef int k
    # term_k = (n+k)! / (k! (n-k)!) (2x)^-k, built by ratio
    for k in range(n + 1):
        s += term
        term *= (n + k + 1.0) * (n - k) / ((k + 1.0) * 2.0 * x)
    return sqrt(M_PI / (2.0 * x)) * (1.0 if scaled else exp(-x)) * s


cdef inline double _corr(const Matern* mt, double t) noexcept nogil:
    cdef double poly, kval, val
    cdef int k
    if t <= 0.0:
        return 1.0
    if mt.n >= 0:
        poly = mt.coef[0]
        for k in range(1, mt.n + 1):
            poly = poly * t + mt.coef[k]
        return exp(-t) * poly
    kval = _bessel_general(mt.nu, t)
    if isinf(kval):
        return 1.0
    if kval == 0.0:
        return 0.0
    # rounding in the small-t series can overshoot 1 by ~1e-13
    val = exp(mt.nu * log(t) + mt.lognorm) * kval
    return 1.0 if val > 1.0 else val


cdef Matern _make_matern(double nu) except *:
    cdef Matern mt
    cdef int k
    n, coef, lognorm = matern_coefficients(nu)
    mt.nu = nu
    mt.n = n
    mt.lognorm = lognorm
    if n >= 0:
        for k in range(n + 1):
            mt.coef[k] = coef[k]
    return mt


def bessel_k(double nu, double x, bint scaled=False):
    """K_nu(x) for scalar arguments (compiled); ``scaled`` gives exp(x) K_nu(x)."""
    if not (nu > 0.0) or not (x > 0.0):
        raise ValueError(f"bessel_k requires nu > 0 and x > 0, got nu={nu}, x={x}")
    n = half_integer_order(nu)
    cdef double val
    if n is not None:
        val = _bessel_half(n, x, scaled)
    else:
        val = _bessel_general(nu, x, scaled)
    if isinf(val):
        raise OverflowError(f"K_{nu}({x}) overflows double precision")
    return val


def bessel_k_array(double nu, x):
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=float).ravel()
    out = np.empty(xv.shape[0])
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    n = half_integer_order(nu)
    cdef int hn = -1 if n is None else n
    with nogil:
        for i in range(xv.shape[0]):
            ov[i] = _bessel_half(hn, xv[i]) if hn >= 0 else _bessel_general(nu, xv[i])
    return out.reshape(np.shape(x))


def matern_corr(t, double nu):
    cdef double[::1] tv = np.ascontiguousarray(t, dtype=float).ravel()
    out = np.empty(tv.shape[0])
    cdef double[::1] ov = out
    cdef Matern mt = _make_matern(nu)
    cdef Py_ssize_t i
    with nogil:
        for i in range(tv.shape[0]):
            ov[i] = _corr(&mt, tv[i])
    return out.reshape(np.shape(t))


cdef int _fill_and_factor(const double[:, ::1] X, const Py_ssize_t[::1] u_idx,
                          Py_ssize_t u0, Py_ssize_t s, const Matern* mt,
                          double variance, double nugget, double* A) noexcept nogil:
    """Fill the lower triangle of the block covariance and factor in place.

    Column-oriented Cholesky: entry (i, j) depends only on the leading
    (i+1)x(j+1) data, so a prefix of U factors identically on its own.
    """
    cdef Py_ssize_t a, b, r, dim = X.shape[1]
    cdef Py_ssize_t ia, ib
    cdef double acc, diff, piv
    # a squared pivot this close to rounding of its diagonal counts as singular
    cdef double tol = 8.0 * DBL_EPSILON * (variance + nugget)
    for a in range(s):
        ia = u_idx[u0 + a]
        for b in range(a):
            ib = u_idx[u0 + b]
            acc = 0.0
            for r in range(dim):
                diff = X[ia, r] - X[ib, r]
                acc = acc + diff * diff
            A[a * s + b] = variance * _corr(mt, sqrt(acc))
        A[a * s + a] = variance + nugget
    for b in range(s):
        acc = A[b * s + b]
        for r in range(b):
            acc = acc - A[b * s + r] * A[b * s + r]
        if not (acc > tol):
            return 1
        piv = sqrt(acc)
        A[b * s + b] = piv
        for a in range(b + 1, s):
            acc = A[a * s + b]
            for r in range(b):
                acc = acc - A[a * s + r] * A[b * s + r]
            A[a * s + b] = acc / piv
    return 0


def block_solve(const double[:, ::1] X, const Py_ssize_t[::1] u_ptr, const Py_ssize_t[::1] u_idx,
                const Py_ssize_t[::1] m_ptr, const Py_ssize_t[::1] m_pos, const double[:, ::1] W,
                double nu, double variance, double nugget, int nthreads,
                double[:, ::1] Z, double[::1] diag):
    cdef Matern mt = _make_matern(nu)
    cdef Py_ssize_t K = u_ptr.shape[0] - 1
    cdef Py_ssize_t q = W.shape[1]
    cdef Py_ssize_t maxs = 0, k
    for k in range(K):
        if u_ptr[k + 1] - u_ptr[k] > maxs:
            maxs = u_ptr[k + 1] - u_ptr[k]
    status = np.zeros(K, dtype=np.int8)
    cdef signed char[::1] st = status
    cdef double* A
    cdef double* Y
    cdef Py_ssize_t s, u0, a, b, c, p, g, j
    cdef double acc
    with nogil, parallel(num_threads=max(nthreads, 1)):
        A = <double*> malloc(maxs * maxs * sizeof(double))
        Y = <double*> malloc(maxs * q * sizeof(double))
        for k in prange(K, schedule="dynamic"):
            u0 = u_ptr[k]
            s = u_ptr[k + 1] - u0
            if _fill_and_factor(X, u_idx, u0, s, &mt, variance, nugget, A):
                st[k] = 1
                continue
            for a in range(s):
                for c in range(q):
                    acc = W[u_idx[u0 + a], c]
                    for b in range(a):
                        acc = acc - A[a * s + b] * Y[b * q + c]
                    Y[a * q + c] = acc / A[a * s + a]
            for j in range(m_ptr[k], m_ptr[k + 1]):
                p = m_pos[j]
                g = u_idx[u0 + p]
                diag[g] = 1.0 / A[p * s + p]
                for c in range(q):
                    Z[g, c] = Y[p * q + c]
        free(A)
        free(Y)
    bad = np.flatnonzero(status)
    return int(bad[0]) if bad.size else -1


def block_rows(const double[:, ::1] X, const Py_ssize_t[::1] u_ptr, const Py_ssize_t[::1] u_idx,
               const Py_ssize_t[::1] m_ptr, const Py_ssize_t[::1] m_pos,
               double nu, double variance, double nugget, int nthreads,
               const Py_ssize_t[::1] out_ptr, double[::1] data):
    cdef Matern mt = _make_matern(nu)
    cdef Py_ssize_t K = u_ptr.shape[0] - 1
    cdef Py_ssize_t maxs = 0, k
    for k in range(K):
        if u_ptr[k + 1] - u_ptr[k] > maxs:
            maxs = u_ptr[k + 1] - u_ptr[k]
    status = np.zeros(K, dtype=np.int8)
    cdef signed char[::1] st = status
    cdef double* A
    cdef double* x
    cdef Py_ssize_t s, u0, p, jj, r, o, mem
    cdef double acc
    with nogil, parallel(num_threads=max(nthreads, 1)):
        A = <double*> malloc(maxs * maxs * sizeof(double))
        x = <double*> malloc(maxs * sizeof(double))
        for k in prange(K, schedule="dynamic"):
            u0 = u_ptr[k]
            s = u_ptr[k + 1] - u0
            if _fill_and_factor(X, u_idx, u0, s, &mt, variance, nugget, A):
                st[k] = 1
                continue
            for mem in range(m_ptr[k], m_ptr[k + 1]):
                p = m_pos[mem]
                o = out_ptr[mem]
                # row p of L^{-1}: x^T L = e_p^T on the leading (p+1) block
                x[p] = 1.0 / A[p * s + p]
                for jj in range(p - 1, -1, -1):
                    acc = 0.0
                    for r in range(jj + 1, p + 1):
                        acc = acc + x[r] * A[r * s + jj]
                    x[jj] = -acc / A[jj * s + jj]
                for jj in range(p + 1):
                    data[o + jj] = x[jj]
        free(A)
        free(x)
    bad = np.flatnonzero(status)
    return int(bad[0]) if bad.size else -1


def forward_solve(const Py_ssize_t[::1] indptr, const Py_ssize_t[::1] indices,
                  const double[::1] data, double[:, ::1] B, Py_ssize_t start):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t q = B.shape[1]
    cdef Py_ssize_t i, e, c, lo, hi, j
    cdef double v
    with nogil:
        for i in range(start, n):
            lo = indptr[i]
            hi = indptr[i + 1] - 1
            for e in range(lo, hi):
                j = indices[e]
                v = data[e]
                for c in range(q):
                    B[i, c] -= v * B[j, c]
            for c in range(q):
                B[i, c] /= data[hi]
