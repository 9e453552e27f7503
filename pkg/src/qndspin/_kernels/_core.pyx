# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled doublet-fit kernel.

Levenberg-Marquardt on the two-Lorentzian model with analytic Jacobian,
mirroring py_fallback.py step for step.  Parameter order:
[x_plus, x_minus, width(FWHM), amp_plus, amp_minus, baseline].
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, sqrt

cnp.import_array()

BACKEND = "compiled"

DEF NPAR = 6
cdef double LAMBDA0 = 1e-3
cdef double REL_TOL = 1e-12
cdef double STEP_TOL = 1e-11
cdef int MAX_ITER = 200


cdef inline void _model_into(double* p, double[::1] x, double[::1] out, Py_ssize_t n) noexcept nogil:
    cdef double h = (p[2] / 2.0) * (p[2] / 2.0)
    cdef Py_ssize_t i
    cdef double dp, dm
    for i in range(n):
        dp = x[i] - p[0]
        dm = x[i] - p[1]
        out[i] = p[5] + p[3] * h / (dp * dp + h) + p[4] * h / (dm * dm + h)


cdef inline double _cost(double* p, double[::1] x, double[::1] y, double[::1] sw,
                         double[::1] scratch, Py_ssize_t n) noexcept nogil:
    cdef double c = 0.0, r
    cdef Py_ssize_t i
    _model_into(p, x, scratch, n)
    for i in range(n):
        r = sw[i] * (scratch[i] - y[i])
        c += r * r
    return c


cdef inline void _normal_eqs(double* p, double[::1] x, double[::1] y, double[::1] sw,
                             double* a, double* g, Py_ssize_t n) noexcept nogil:
    """Fill a = J^T J (row-major 6x6) and g = J^T r for weighted residuals."""
    cdef double h = (p[2] / 2.0) * (p[2] / 2.0)
    cdef double w3 = (p[2] / 2.0) * (p[2] / 2.0) * (p[2] / 2.0)
    cdef Py_ssize_t i
    cdef int j, k
    cdef double dp, dm, lp, lm, r, f, s
    cdef double row[NPAR]
    for j in range(NPAR):
        g[j] = 0.0
        for k in range(NPAR):
            a[j * NPAR + k] = 0.0
    for i in range(n):
        dp = x[i] - p[0]
        dm = x[i] - p[1]
        lp = h / (dp * dp + h)
        lm = h / (dm * dm + h)
        f = p[5] + p[3] * lp + p[4] * lm
        s = sw[i]
        row[0] = s * (p[3] * 2.0 * dp * lp * lp / h)
        row[1] = s * (p[4] * 2.0 * dm * lm * lm / h)
        row[2] = s * ((p[3] * dp * dp * lp * lp + p[4] * dm * dm * lm * lm) / w3)
        row[3] = s * lp
        row[4] = s * lm
        row[5] = s
        r = s * (f - y[i])
        for j in range(NPAR):
            g[j] += row[j] * r
            for k in range(j, NPAR):
                a[j * NPAR + k] += row[j] * row[k]
    for j in range(NPAR):
        for k in range(j):
            a[j * NPAR + k] = a[k * NPAR + j]


cdef inline int _solve6(double* a_in, double* b_in, double* out) noexcept nogil:
    """Gaussian elimination with partial pivoting; returns 0 on success."""
    cdef double a[NPAR * NPAR]
    cdef double b[NPAR]
    cdef int i, j, k, piv
    cdef double best, tmp, factor
    for i in range(NPAR * NPAR):
        a[i] = a_in[i]
    for i in range(NPAR):
        b[i] = b_in[i]
    for k in range(NPAR):
        piv = k
        best = fabs(a[k * NPAR + k])
        for i in range(k + 1, NPAR):
            if fabs(a[i * NPAR + k]) > best:
                best = fabs(a[i * NPAR + k])
                piv = i
        if best == 0.0 or best != best:
            return 1
        if piv != k:
            for j in range(NPAR):
                tmp = a[k * NPAR + j]
                a[k * NPAR + j] = a[piv * NPAR + j]
                a[piv * NPAR + j] = tmp
            tmp = b[k]
            b[k] = b[piv]
            b[piv] = tmp
        for i in range(k + 1, NPAR):
            factor = a[i * NPAR + k] / a[k * NPAR + k]
            for j in range(k, NPAR):
                a[i * NPAR + j] -= factor * a[k * NPAR + j]
            b[i] -= factor * b[k]
    for k in range(NPAR - 1, -1, -1):
        tmp = b[k]
        for j in range(k + 1, NPAR):
            tmp -= a[k * NPAR + j] * out[j]
        out[k] = tmp / a[k * NPAR + k]
    return 0


cdef inline int _invert6(double* a_in, double* inv) noexcept nogil:
    cdef double col[NPAR]
    cdef double sol[NPAR]
    cdef int i, j
    for j in range(NPAR):
        for i in range(NPAR):
            col[i] = 1.0 if i == j else 0.0
        if _solve6(a_in, col, sol):
            return 1
        for i in range(NPAR):
            inv[i * NPAR + j] = sol[i]
    return 0


def doublet_model(p, x):
    """b + A+ L(x; x+, w) + A- L(x; x-, w), peak-normalized Lorentzians."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xa = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] pa = np.ascontiguousarray(p, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(xa.shape[0], dtype=np.float64)
    cdef double[::1] xv = xa
    cdef double[::1] ov = out
    _model_into(<double*> pa.data, xv, ov, xa.shape[0])
    return out


def fit_doublet(x, y, wgt, p0):
    """Weighted LM fit.  Returns (p, cov, chi2, converged, n_iter)."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xa = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ya = np.ascontiguousarray(y, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] swa = np.sqrt(np.ascontiguousarray(wgt, dtype=np.float64))
    cdef Py_ssize_t n = xa.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] scratch = np.empty(n, dtype=np.float64)
    cdef double[::1] xv = xa, yv = ya, swv = swa, scv = scratch

    cdef double p[NPAR]
    cdef double p_try[NPAR]
    cdef double a[NPAR * NPAR]
    cdef double aug[NPAR * NPAR]
    cdef double g[NPAR]
    cdef double negg[NPAR]
    cdef double delta[NPAR]
    cdef double caps[NPAR]
    cdef double cov_c[NPAR * NPAR]
    cdef int i, j, it, inner, stepped, converged, singular
    cdef double cost, cost_try, lam, rel, maxstep, over, amp

    p0 = np.ascontiguousarray(p0, dtype=np.float64)
    for i in range(NPAR):
        p[i] = (<double*> (<cnp.ndarray> p0).data)[i]

    # per-iteration trust region from the seed (see py_fallback._step_caps)
    amp = fabs(p[3])
    if fabs(p[4]) > amp:
        amp = fabs(p[4])
    if fabs(p[5]) > amp:
        amp = fabs(p[5])
    if amp < 1.0:
        amp = 1.0
    amp *= 2.0
    caps[0] = fabs(p[2])
    caps[1] = fabs(p[2])
    caps[2] = fabs(p[2])
    caps[3] = amp
    caps[4] = amp
    caps[5] = amp

    cost = _cost(p, xv, yv, swv, scv, n)
    lam = LAMBDA0
    converged = 0
    it = 0
    singular = 0
    with nogil:
        for it in range(1, MAX_ITER + 1):
            _normal_eqs(p, xv, yv, swv, a, g, n)
            stepped = 0
            for inner in range(30):
                for i in range(NPAR * NPAR):
                    aug[i] = a[i]
                for i in range(NPAR):
                    aug[i * NPAR + i] += lam * a[i * NPAR + i]
                    negg[i] = -g[i]
                if _solve6(aug, negg, delta):
                    singular = 1
                    break
                for i in range(NPAR):
                    if delta[i] != delta[i]:
                        singular = 1
                        break
                if singular:
                    break
                over = 0.0
                for i in range(NPAR):
                    if fabs(delta[i]) / caps[i] > over:
                        over = fabs(delta[i]) / caps[i]
                if over > 1.0:
                    for i in range(NPAR):
                        delta[i] /= over
                for i in range(NPAR):
                    p_try[i] = p[i] + delta[i]
                if p_try[2] <= 0.0:
                    p_try[2] = fabs(p_try[2]) if p_try[2] != 0.0 else 0.5 * p[2]
                cost_try = _cost(p_try, xv, yv, swv, scv, n)
                if cost_try <= cost:
                    rel = (cost - cost_try) / (cost if cost > 1e-300 else 1e-300)
                    for i in range(NPAR):
                        p[i] = p_try[i]
                    cost = cost_try
                    lam = lam / 3.0
                    if lam < 1e-12:
                        lam = 1e-12
                    stepped = 1
                    maxstep = 0.0
                    for i in range(NPAR):
                        if fabs(delta[i]) > maxstep:
                            maxstep = fabs(delta[i])
                    if rel < REL_TOL or maxstep < STEP_TOL:
                        converged = 1
                    break
                lam *= 7.0
                if lam > 1e12:
                    break
            if singular:
                break
            if not stepped:
                converged = 1 if it > 1 else 0
                break
            if converged:
                break

    cdef cnp.ndarray[cnp.float64_t, ndim=1] p_out = np.empty(NPAR, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] cov = np.empty((NPAR, NPAR), dtype=np.float64)
    for i in range(NPAR):
        p_out[i] = p[i]
    if singular:
        cov[:] = np.nan
        return p_out, cov, cost, False, it
    _normal_eqs(p, xv, yv, swv, a, g, n)
    if _invert6(a, cov_c):
        cov[:] = np.nan
        return p_out, cov, cost, False, it
    for i in range(NPAR):
        for j in range(NPAR):
            cov[i, j] = cov_c[i * NPAR + j]
    ok = bool(np.all(np.isfinite(np.asarray(cov))))
    return p_out, cov, cost, bool(converged and ok), it
