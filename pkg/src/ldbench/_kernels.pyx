# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False, language_level=3
"""Compiled kernels: per-node adaptive RK5(4), symplectic-net strides and
fused training passes, and reservoir loops. Signature-compatible with the
numpy fallback in _kernels_py; grid kernels parallelize over nodes with
OpenMP, training kernels stay serial for determinism.
"""

import numpy as np

cimport openmp
from cython.parallel cimport prange
from libc.math cimport exp, fabs, isfinite, log1p, pow, sqrt, tanh

BACKEND_NAME = "compiled"

cdef double STATE_LIMIT = 1e8
cdef double MIN_STEP_FRACTION = 1e-14
cdef double LN2 = 0.6931471805599453094
DEF MAX_DIM = 8

# Dormand-Prince 5(4) tableau
cdef double A21 = 1.0 / 5.0
cdef double A31 = 3.0 / 40.0, A32 = 9.0 / 40.0
cdef double A41 = 44.0 / 45.0, A42 = -56.0 / 15.0, A43 = 32.0 / 9.0
cdef double A51 = 19372.0 / 6561.0, A52 = -25360.0 / 2187.0
cdef double A53 = 64448.0 / 6561.0, A54 = -212.0 / 729.0
cdef double A61 = 9017.0 / 3168.0, A62 = -355.0 / 33.0
cdef double A63 = 46732.0 / 5247.0, A64 = 49.0 / 176.0, A65 = -5103.0 / 18656.0
cdef double B1 = 35.0 / 384.0, B3 = 500.0 / 1113.0, B4 = 125.0 / 192.0
cdef double B5 = -2187.0 / 6784.0, B6 = 11.0 / 84.0
cdef double E1 = 71.0 / 57600.0, E3 = -71.0 / 16695.0, E4 = 71.0 / 1920.0
cdef double E5 = -17253.0 / 339200.0, E6 = 22.0 / 525.0, E7 = -1.0 / 40.0


cdef inline void _rhs(int sys_id, double param, double* y, double* out, double sgn) noexcept nogil:
    cdef double q, q0, q1, p0, p1, z0, z1, k2
    if sys_id == 0:
        q = y[0]
        out[0] = sgn * y[1]
        out[1] = sgn * (q - q * q * q)
    elif sys_id == 2:
        out[0] = sgn * param * y[1]
        out[1] = -sgn * param * y[0]
    else:
        k2 = param * param
        q0 = y[0]; q1 = y[1]; p0 = y[2]; p1 = y[3]
        z0 = q0 * q0 + p0 * p0
        z1 = q1 * q1 + p1 * p1
        out[0] = sgn * (-z0 * p0 - 2.0 * q0 * q1 * p1 - p0 * (q1 * q1 + 3.0 * p1 * p1))
        out[1] = sgn * (-0.5 * k2 * p1 - 1.5 * p1 * z1 - 2.0 * q0 * p0 * q1
                        - p1 * (q0 * q0 + 3.0 * p0 * p0))
        out[2] = sgn * (z0 * q0 + 2.0 * p0 * q1 * p1 + q0 * (3.0 * q1 * q1 + p1 * p1))
        out[3] = sgn * (0.5 * k2 * q1 + 1.5 * q1 * z1 + 2.0 * q0 * p0 * p1
                        + q1 * (3.0 * q0 * q0 + p0 * p0))


cdef inline int _rk_stride(int sys_id, double param, double* y, int d,
                           double goal, double sgn, double rtol, double atol) noexcept nogil:
    """Advance y in place by `goal` time units along the sgn-scaled field.

    Returns 1 on success, 0 on step underflow / non-finite state.
    """
    cdef double k[7][MAX_DIM]
    cdef double z[MAX_DIM]
    cdef double znew[MAX_DIM]
    cdef double erri
    cdef double t = 0.0, h, hh, d0, d1, sc, errnorm, raw, scale, val
    cdef int i, accept

    _rhs(sys_id, param, y, k[0], sgn)
    d0 = 0.0
    d1 = 0.0
    for i in range(d):
        sc = atol + rtol * fabs(y[i])
        d0 += (y[i] / sc) * (y[i] / sc)
        d1 += (k[0][i] / sc) * (k[0][i] / sc)
    d0 = sqrt(d0 / d)
    d1 = sqrt(d1 / d)
    if d0 > 1e-10 and d1 > 1e-10:
        h = 0.01 * d0 / d1
    else:
        h = 1e-6
    if h > goal:
        h = goal

    while t < goal * (1.0 - 1e-15):
        hh = h
        if hh > goal - t:
            hh = goal - t
        _rhs(sys_id, param, y, k[0], sgn)
        for i in range(d):
            z[i] = y[i] + hh * A21 * k[0][i]
        _rhs(sys_id, param, z, k[1], sgn)
        for i in range(d):
            z[i] = y[i] + hh * (A31 * k[0][i] + A32 * k[1][i])
        _rhs(sys_id, param, z, k[2], sgn)
        for i in range(d):
            z[i] = y[i] + hh * (A41 * k[0][i] + A42 * k[1][i] + A43 * k[2][i])
        _rhs(sys_id, param, z, k[3], sgn)
        for i in range(d):
            z[i] = y[i] + hh * (A51 * k[0][i] + A52 * k[1][i] + A53 * k[2][i] + A54 * k[3][i])
        _rhs(sys_id, param, z, k[4], sgn)
        for i in range(d):
            z[i] = y[i] + hh * (A61 * k[0][i] + A62 * k[1][i] + A63 * k[2][i]
                                + A64 * k[3][i] + A65 * k[4][i])
        _rhs(sys_id, param, z, k[5], sgn)
        for i in range(d):
            znew[i] = y[i] + hh * (B1 * k[0][i] + B3 * k[2][i] + B4 * k[3][i]
                                   + B5 * k[4][i] + B6 * k[5][i])
        _rhs(sys_id, param, znew, k[6], sgn)

        errnorm = 0.0
        accept = 1
        for i in range(d):
            erri = hh * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i]
                         + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i])
            val = fabs(y[i])
            if fabs(znew[i]) > val:
                val = fabs(znew[i])
            scale = atol + rtol * val
            errnorm += (erri / scale) * (erri / scale)
            if not isfinite(znew[i]):
                accept = 0
        errnorm = sqrt(errnorm / d)
        if not isfinite(errnorm):
            accept = 0
        if accept and errnorm <= 1.0:
            for i in range(d):
                y[i] = znew[i]
                if fabs(y[i]) > STATE_LIMIT:
                    return 0
            t += hh
        if accept:
            raw = 0.9 * pow(errnorm, -0.2) if errnorm > 0.0 else 5.0
        else:
            raw = 0.2
        if raw < 0.2:
            raw = 0.2
        elif raw > 5.0:
            raw = 5.0
        h = hh * raw
        if h < MIN_STEP_FRACTION * goal:
            return 0
    return 1


def reference_stride(int sys_id, double param, double[:, ::1] y, unsigned char[::1] active,
                     double dt, double rtol, double atol, int nthreads=1):
    cdef Py_ssize_t n = y.shape[0]
    cdef int d = <int> y.shape[1]
    cdef double goal = fabs(dt)
    cdef double sgn = 1.0 if dt > 0 else -1.0
    cdef Py_ssize_t r
    if goal == 0.0 or d > MAX_DIM:
        if d > MAX_DIM:
            raise ValueError("state dimension exceeds the compiled kernel limit")
        return
    if nthreads < 1:
        nthreads = 1
    for r in prange(n, nogil=True, num_threads=nthreads, schedule='static'):
        if active[r]:
            if not _rk_stride(sys_id, param, &y[r, 0], d, goal, sgn, rtol, atol):
                active[r] = 0


# ---------------------------------------------------------------------------
# Symplectic-net strides
# ---------------------------------------------------------------------------


cdef inline void _grad_v(const double* K, const double* a, const double* b,
                         const double* x, double* out, double* z,
                         int m, int n, double sign) noexcept nogil:
    """out += sign * K^T (a * tanh(Kx + b)); z is m-sized scratch."""
    cdef int h, i
    cdef double s, acc
    for h in range(m):
        s = b[h]
        for i in range(n):
            s = s + K[h * n + i] * x[i]
        z[h] = s
    for h in range(m):
        z[h] = a[h] * tanh(z[h])
    for i in range(n):
        acc = 0.0
        for h in range(m):
            acc = acc + K[h * n + i] * z[h]
        out[i] = out[i] + sign * acc


def sympnet_stride(double[:, :, ::1] K, double[:, ::1] a, double[:, ::1] b,
                   double[:, ::1] y, unsigned char[::1] active, int direction, int nthreads=1):
    cdef Py_ssize_t nrows = y.shape[0]
    cdef int n_mod = <int> K.shape[0]
    cdef int m = <int> K.shape[1]
    cdef int n = <int> K.shape[2]
    cdef double sign = 1.0 if direction > 0 else -1.0
    cdef Py_ssize_t r
    cdef int j, jj, tid
    if nthreads < 1:
        nthreads = 1
    scratch_np = np.empty((nthreads, m))
    cdef double[:, ::1] scratch = scratch_np
    for r in prange(nrows, nogil=True, num_threads=nthreads, schedule='static'):
        if not active[r]:
            continue
        tid = openmp.omp_get_thread_num()
        for jj in range(n_mod):
            j = jj if direction > 0 else n_mod - 1 - jj
            if j % 2 == 0:
                _grad_v(&K[j, 0, 0], &a[j, 0], &b[j, 0], &y[r, n], &y[r, 0],
                        &scratch[tid, 0], m, n, sign)
            else:
                _grad_v(&K[j, 0, 0], &a[j, 0], &b[j, 0], &y[r, 0], &y[r, n],
                        &scratch[tid, 0], m, n, sign)


cdef void _henon_row(const double[:, :, ::1] K, const double[:, ::1] a,
                     const double[:, ::1] b, const double[:, ::1] eta,
                     double* row, double* z, int n_layers, int m, int n,
                     int direction) noexcept nogil:
    cdef double q[MAX_DIM]
    cdef double p[MAX_DIM]
    cdef double g[MAX_DIM]
    cdef int j, jj, rep, i
    for i in range(n):
        q[i] = row[i]
        p[i] = row[n + i]
    for jj in range(n_layers):
        j = jj if direction > 0 else n_layers - 1 - jj
        for rep in range(4):
            if direction > 0:
                # (q, p) -> (p, -q + grad V(p) + eta)
                for i in range(n):
                    g[i] = eta[j, i] - q[i]
                _grad_v(&K[j, 0, 0], &a[j, 0], &b[j, 0], p, g, z, m, n, 1.0)
                for i in range(n):
                    q[i] = p[i]
                    p[i] = g[i]
            else:
                # (q', p') -> (grad V(q') + eta - p', q')
                for i in range(n):
                    g[i] = eta[j, i] - p[i]
                _grad_v(&K[j, 0, 0], &a[j, 0], &b[j, 0], q, g, z, m, n, 1.0)
                for i in range(n):
                    p[i] = q[i]
                    q[i] = g[i]
    for i in range(n):
        row[i] = q[i]
        row[n + i] = p[i]


def henon_stride(double[:, :, ::1] K, double[:, ::1] a, double[:, ::1] b,
                 double[:, ::1] eta, double[:, ::1] y, unsigned char[::1] active,
                 int direction, int nthreads=1):
    cdef Py_ssize_t nrows = y.shape[0]
    cdef int n_layers = <int> K.shape[0]
    cdef int m = <int> K.shape[1]
    cdef int n = <int> K.shape[2]
    cdef Py_ssize_t r
    cdef int tid
    if n > MAX_DIM:
        raise ValueError("state dimension exceeds the compiled kernel limit")
    if nthreads < 1:
        nthreads = 1
    scratch_np = np.empty((nthreads, m))
    cdef double[:, ::1] scratch = scratch_np
    for r in prange(nrows, nogil=True, num_threads=nthreads, schedule='static'):
        if not active[r]:
            continue
        tid = openmp.omp_get_thread_num()
        _henon_row(K, a, b, eta, &y[r, 0], &scratch[tid, 0], n_layers, m, n, direction)


cdef inline void _ghnn_grad(const double* W1, const double* b1, const double* W2,
                            const double* b2, const double* a, const double* x,
                            double* out, double* z1, double* s1, double* h1,
                            double* t2, double* w, int m, int n, double sign) noexcept nogil:
    """out += sign * grad of a^T logcosh(W2 logcosh(W1 x + b1) + b2)."""
    cdef int h, i, g
    cdef double s, acc, az
    for h in range(m):
        s = b1[h]
        for i in range(n):
            s = s + W1[h * n + i] * x[i]
        z1[h] = s
    for h in range(m):
        s1[h] = tanh(z1[h])
        az = fabs(z1[h])
        h1[h] = az + log1p(exp(-2.0 * az)) - LN2
    for h in range(m):
        s = b2[h]
        for g in range(m):
            s = s + W2[h * m + g] * h1[g]
        t2[h] = s
    for h in range(m):
        t2[h] = a[h] * tanh(t2[h])
    for g in range(m):
        acc = 0.0
        for h in range(m):
            acc = acc + W2[h * m + g] * t2[h]
        w[g] = acc * s1[g]
    for i in range(n):
        acc = 0.0
        for h in range(m):
            acc = acc + W1[h * n + i] * w[h]
        out[i] = out[i] + sign * acc


def ghnn_stride(double[:, :, :, ::1] W1, double[:, :, ::1] b1, double[:, :, :, ::1] W2,
                double[:, :, ::1] b2, double[:, :, ::1] av, double[:, ::1] y,
                unsigned char[::1] active, int direction, int nthreads=1):
    cdef Py_ssize_t nrows = y.shape[0]
    cdef int n_ham = <int> W1.shape[0]
    cdef int m = <int> W1.shape[2]
    cdef int n = <int> W1.shape[3]
    cdef Py_ssize_t r
    cdef int i, ii, tid
    if nthreads < 1:
        nthreads = 1
    scratch_np = np.empty((nthreads, 5 * m))
    cdef double[:, ::1] sc = scratch_np
    for r in prange(nrows, nogil=True, num_threads=nthreads, schedule='static'):
        if not active[r]:
            continue
        tid = openmp.omp_get_thread_num()
        for ii in range(n_ham):
            if direction > 0:
                i = ii
                _ghnn_grad(&W1[i, 0, 0, 0], &b1[i, 0, 0], &W2[i, 0, 0, 0], &b2[i, 0, 0],
                           &av[i, 0, 0], &y[r, n], &y[r, 0],
                           &sc[tid, 0], &sc[tid, m], &sc[tid, 2 * m], &sc[tid, 3 * m],
                           &sc[tid, 4 * m], m, n, 1.0)
                _ghnn_grad(&W1[i, 1, 0, 0], &b1[i, 1, 0], &W2[i, 1, 0, 0], &b2[i, 1, 0],
                           &av[i, 1, 0], &y[r, 0], &y[r, n],
                           &sc[tid, 0], &sc[tid, m], &sc[tid, 2 * m], &sc[tid, 3 * m],
                           &sc[tid, 4 * m], m, n, -1.0)
            else:
                i = n_ham - 1 - ii
                _ghnn_grad(&W1[i, 1, 0, 0], &b1[i, 1, 0], &W2[i, 1, 0, 0], &b2[i, 1, 0],
                           &av[i, 1, 0], &y[r, 0], &y[r, n],
                           &sc[tid, 0], &sc[tid, m], &sc[tid, 2 * m], &sc[tid, 3 * m],
                           &sc[tid, 4 * m], m, n, 1.0)
                _ghnn_grad(&W1[i, 0, 0, 0], &b1[i, 0, 0], &W2[i, 0, 0, 0], &b2[i, 0, 0],
                           &av[i, 0, 0], &y[r, n], &y[r, 0],
                           &sc[tid, 0], &sc[tid, m], &sc[tid, 2 * m], &sc[tid, 3 * m],
                           &sc[tid, 4 * m], m, n, -1.0)


# ---------------------------------------------------------------------------
# Fused training passes (serial, deterministic)
# ---------------------------------------------------------------------------


def sympnet_grads(double[:, :, ::1] K, double[:, ::1] a, double[:, ::1] b,
                  double[:, ::1] X, double[:, ::1] Y,
                  double[:, :, ::1] gK, double[:, ::1] ga, double[:, ::1] gb,
                  int nthreads=1):
    cdef Py_ssize_t B = X.shape[0]
    cdef int n_mod = <int> K.shape[0]
    cdef int m = <int> K.shape[1]
    cdef int n = <int> K.shape[2]
    cdef double loss = 0.0, s, acc, diff, t_h
    cdef Py_ssize_t r
    cdef int j, h, i
    cdef double q[MAX_DIM]
    cdef double p[MAX_DIM]
    cdef double dq[MAX_DIM]
    cdef double dp[MAX_DIM]

    cache_z = np.empty((n_mod, m))
    cache_x = np.empty((n_mod, MAX_DIM))
    tvec = np.empty(m)
    cdef double[:, ::1] cz = cache_z
    cdef double[:, ::1] cx = cache_x
    cdef double[::1] tv = tvec
    gK[:, :, :] = 0.0
    ga[:, :] = 0.0
    gb[:, :] = 0.0

    with nogil:
        for r in range(B):
            for i in range(n):
                q[i] = X[r, i]
                p[i] = X[r, n + i]
            for j in range(n_mod):
                if j % 2 == 0:
                    for i in range(n):
                        cx[j, i] = p[i]
                else:
                    for i in range(n):
                        cx[j, i] = q[i]
                for h in range(m):
                    s = b[j, h]
                    for i in range(n):
                        s = s + K[j, h, i] * cx[j, i]
                    cz[j, h] = s
                for h in range(m):
                    cz[j, h] = tanh(cz[j, h])
                for i in range(n):
                    acc = 0.0
                    for h in range(m):
                        acc = acc + K[j, h, i] * a[j, h] * cz[j, h]
                    if j % 2 == 0:
                        q[i] = q[i] + acc
                    else:
                        p[i] = p[i] + acc
            for i in range(n):
                diff = q[i] - Y[r, i]
                loss += diff * diff
                dq[i] = 2.0 * diff / B
                diff = p[i] - Y[r, n + i]
                loss += diff * diff
                dp[i] = 2.0 * diff / B
            for j in range(n_mod - 1, -1, -1):
                # upstream on the module's shear output
                for h in range(m):
                    t_h = 0.0
                    for i in range(n):
                        t_h = t_h + K[j, h, i] * (dq[i] if j % 2 == 0 else dp[i])
                    tv[h] = t_h
                for h in range(m):
                    s = cz[j, h]
                    t_h = tv[h]
                    ga[j, h] += s * t_h
                    gb[j, h] += a[j, h] * (1.0 - s * s) * t_h
                for i in range(n):
                    acc = 0.0
                    for h in range(m):
                        s = cz[j, h]
                        gK[j, h, i] += a[j, h] * s * (dq[i] if j % 2 == 0 else dp[i]) \
                            + a[j, h] * (1.0 - s * s) * tv[h] * cx[j, i]
                        acc = acc + K[j, h, i] * a[j, h] * (1.0 - s * s) * tv[h]
                    if j % 2 == 0:
                        dp[i] = dp[i] + acc
                    else:
                        dq[i] = dq[i] + acc
    return loss / B


def henon_grads(double[:, :, ::1] K, double[:, ::1] a, double[:, ::1] b,
                double[:, ::1] eta, double[:, ::1] X, double[:, ::1] Y,
                double[:, :, ::1] gK, double[:, ::1] ga, double[:, ::1] gb,
                double[:, ::1] geta, int nthreads=1):
    cdef Py_ssize_t B = X.shape[0]
    cdef int n_layers = <int> K.shape[0]
    cdef int m = <int> K.shape[1]
    cdef int n = <int> K.shape[2]
    cdef int n_maps = 4 * n_layers
    cdef double loss = 0.0, s, acc, diff, t_h, dq_new
    cdef Py_ssize_t r
    cdef int j, h, i, step
    cdef double q[MAX_DIM]
    cdef double p[MAX_DIM]
    cdef double dq[MAX_DIM]
    cdef double dp[MAX_DIM]
    cdef double tmp[MAX_DIM]

    cache_z = np.empty((n_maps, m))
    cache_p = np.empty((n_maps, MAX_DIM))
    tvec = np.empty(m)
    cdef double[:, ::1] cz = cache_z
    cdef double[:, ::1] cp = cache_p
    cdef double[::1] tv = tvec
    gK[:, :, :] = 0.0
    ga[:, :] = 0.0
    gb[:, :] = 0.0
    geta[:, :] = 0.0

    with nogil:
        for r in range(B):
            for i in range(n):
                q[i] = X[r, i]
                p[i] = X[r, n + i]
            for step in range(n_maps):
                j = step // 4
                for i in range(n):
                    cp[step, i] = p[i]
                for h in range(m):
                    s = b[j, h]
                    for i in range(n):
                        s = s + K[j, h, i] * p[i]
                    cz[step, h] = s
                for h in range(m):
                    cz[step, h] = tanh(cz[step, h])
                for i in range(n):
                    acc = eta[j, i] - q[i]
                    for h in range(m):
                        acc = acc + K[j, h, i] * a[j, h] * cz[step, h]
                    tmp[i] = acc
                for i in range(n):
                    q[i] = p[i]
                    p[i] = tmp[i]
            for i in range(n):
                diff = q[i] - Y[r, i]
                loss += diff * diff
                dq[i] = 2.0 * diff / B
                diff = p[i] - Y[r, n + i]
                loss += diff * diff
                dp[i] = 2.0 * diff / B
            for step in range(n_maps - 1, -1, -1):
                j = step // 4
                for h in range(m):
                    t_h = 0.0
                    for i in range(n):
                        t_h = t_h + K[j, h, i] * dp[i]
                    tv[h] = t_h
                for h in range(m):
                    s = cz[step, h]
                    ga[j, h] += s * tv[h]
                    gb[j, h] += a[j, h] * (1.0 - s * s) * tv[h]
                for i in range(n):
                    geta[j, i] += dp[i]
                    acc = 0.0
                    for h in range(m):
                        s = cz[step, h]
                        gK[j, h, i] += a[j, h] * s * dp[i] \
                            + a[j, h] * (1.0 - s * s) * tv[h] * cp[step, i]
                        acc = acc + K[j, h, i] * a[j, h] * (1.0 - s * s) * tv[h]
                    tmp[i] = dq[i] + acc
                for i in range(n):
                    dq_new = tmp[i]
                    tmp[i] = -dp[i]
                    dp[i] = dq_new
                for i in range(n):
                    dq[i] = tmp[i]
    return loss / B


cdef inline void _ghnn_net_backward(const double* W1, const double* b1, const double* W2,
                                    const double* b2, const double* a, const double* x,
                                    const double* up, double* dx,
                                    double* gW1, double* gb1, double* gW2, double* gb2,
                                    double* ga, double* z1, double* s1, double* h1,
                                    double* s2, double* w, double* t1, double* alpha_,
                                    double* beta_, double* gamma_, double* delta_,
                                    int m, int n) noexcept nogil:
    """Forward + backward through y = grad V(x) with upstream gradient up.

    Accumulates parameter gradients and writes dL/dx into dx (accumulated).
    """
    cdef int h, g, i
    cdef double s, acc, az, wb
    for h in range(m):
        s = b1[h]
        for i in range(n):
            s = s + W1[h * n + i] * x[i]
        z1[h] = s
    for h in range(m):
        s1[h] = tanh(z1[h])
        az = fabs(z1[h])
        h1[h] = az + log1p(exp(-2.0 * az)) - LN2
    for h in range(m):
        s = b2[h]
        for g in range(m):
            s = s + W2[h * m + g] * h1[g]
        s2[h] = s
    for h in range(m):
        s2[h] = tanh(s2[h])
    for g in range(m):
        acc = 0.0
        for h in range(m):
            acc = acc + W2[h * m + g] * a[h] * s2[h]
        w[g] = acc
    # t1 = W1 up ; beta = t1 * s1 ; alpha = t1 * (1 - s1^2) * w
    for h in range(m):
        s = 0.0
        for i in range(n):
            s = s + W1[h * n + i] * up[i]
        t1[h] = s
        beta_[h] = s * s1[h]
        alpha_[h] = s * (1.0 - s1[h] * s1[h]) * w[h]
    # gamma = a * (1 - s2^2) * (W2 beta) ; ga += s2 * (W2 beta)
    for h in range(m):
        s = 0.0
        for g in range(m):
            s = s + W2[h * m + g] * beta_[g]
        wb = s
        gamma_[h] = a[h] * (1.0 - s2[h] * s2[h]) * wb
        ga[h] += s2[h] * wb
    # delta = s1 * (W2^T gamma)
    for g in range(m):
        s = 0.0
        for h in range(m):
            s = s + W2[h * m + g] * gamma_[h]
        delta_[g] = s1[g] * s
    # parameter gradients
    for h in range(m):
        gb1[h] += alpha_[h] + delta_[h]
        gb2[h] += gamma_[h]
        for i in range(n):
            gW1[h * n + i] += (s1[h] * w[h]) * up[i] + (alpha_[h] + delta_[h]) * x[i]
        for g in range(m):
            gW2[h * m + g] += a[h] * s2[h] * beta_[g] + gamma_[h] * h1[g]
    for i in range(n):
        s = 0.0
        for h in range(m):
            s = s + W1[h * n + i] * (alpha_[h] + delta_[h])
        dx[i] = dx[i] + s


def ghnn_grads(double[:, :, :, ::1] W1, double[:, :, ::1] b1, double[:, :, :, ::1] W2,
               double[:, :, ::1] b2, double[:, :, ::1] av,
               double[:, ::1] X, double[:, ::1] Y,
               double[:, :, :, ::1] gW1, double[:, :, ::1] gb1, double[:, :, :, ::1] gW2,
               double[:, :, ::1] gb2, double[:, :, ::1] gav, int nthreads=1):
    cdef Py_ssize_t B = X.shape[0]
    cdef int n_ham = <int> W1.shape[0]
    cdef int m = <int> W1.shape[2]
    cdef int n = <int> W1.shape[3]
    cdef double loss = 0.0, s, acc, diff
    cdef Py_ssize_t r
    cdef int i, hh, k
    cdef double q[MAX_DIM]
    cdef double p[MAX_DIM]
    cdef double dq[MAX_DIM]
    cdef double dp[MAX_DIM]
    cdef double neg_dp[MAX_DIM]

    # per-sample caches of module inputs
    cache_pin = np.empty((n_ham, MAX_DIM))
    cache_qin = np.empty((n_ham, MAX_DIM))
    scratch = np.empty((10, m))
    cdef double[:, ::1] cpin = cache_pin
    cdef double[:, ::1] cqin = cache_qin
    cdef double[:, ::1] scr = scratch
    gW1[:, :, :, :] = 0.0
    gb1[:, :, :] = 0.0
    gW2[:, :, :, :] = 0.0
    gb2[:, :, :] = 0.0
    gav[:, :, :] = 0.0

    with nogil:
        for r in range(B):
            for i in range(n):
                q[i] = X[r, i]
                p[i] = X[r, n + i]
            for hh in range(n_ham):
                for i in range(n):
                    cpin[hh, i] = p[i]
                _ghnn_grad(&W1[hh, 0, 0, 0], &b1[hh, 0, 0], &W2[hh, 0, 0, 0], &b2[hh, 0, 0],
                           &av[hh, 0, 0], p, q,
                           &scr[0, 0], &scr[1, 0], &scr[2, 0], &scr[3, 0], &scr[4, 0],
                           m, n, 1.0)
                for i in range(n):
                    cqin[hh, i] = q[i]
                _ghnn_grad(&W1[hh, 1, 0, 0], &b1[hh, 1, 0], &W2[hh, 1, 0, 0], &b2[hh, 1, 0],
                           &av[hh, 1, 0], q, p,
                           &scr[0, 0], &scr[1, 0], &scr[2, 0], &scr[3, 0], &scr[4, 0],
                           m, n, -1.0)
            for i in range(n):
                diff = q[i] - Y[r, i]
                loss += diff * diff
                dq[i] = 2.0 * diff / B
                diff = p[i] - Y[r, n + i]
                loss += diff * diff
                dp[i] = 2.0 * diff / B
            for hh in range(n_ham - 1, -1, -1):
                for i in range(n):
                    neg_dp[i] = -dp[i]
                _ghnn_net_backward(&W1[hh, 1, 0, 0], &b1[hh, 1, 0], &W2[hh, 1, 0, 0],
                                   &b2[hh, 1, 0], &av[hh, 1, 0], &cqin[hh, 0], neg_dp, dq,
                                   &gW1[hh, 1, 0, 0], &gb1[hh, 1, 0], &gW2[hh, 1, 0, 0],
                                   &gb2[hh, 1, 0], &gav[hh, 1, 0],
                                   &scr[0, 0], &scr[1, 0], &scr[2, 0], &scr[3, 0],
                                   &scr[4, 0], &scr[5, 0], &scr[6, 0], &scr[7, 0],
                                   &scr[8, 0], &scr[9, 0], m, n)
                _ghnn_net_backward(&W1[hh, 0, 0, 0], &b1[hh, 0, 0], &W2[hh, 0, 0, 0],
                                   &b2[hh, 0, 0], &av[hh, 0, 0], &cpin[hh, 0], dq, dp,
                                   &gW1[hh, 0, 0, 0], &gb1[hh, 0, 0], &gW2[hh, 0, 0, 0],
                                   &gb2[hh, 0, 0], &gav[hh, 0, 0],
                                   &scr[0, 0], &scr[1, 0], &scr[2, 0], &scr[3, 0],
                                   &scr[4, 0], &scr[5, 0], &scr[6, 0], &scr[7, 0],
                                   &scr[8, 0], &scr[9, 0], m, n)
    return loss / B


# ---------------------------------------------------------------------------
# Reservoir kernels (W_x in CSR form)
# ---------------------------------------------------------------------------


def reservoir_update(long[::1] indptr, long[::1] indices, double[::1] data,
                     double[:, ::1] Wu, double alpha, double[:, ::1] u, double[:, ::1] x,
                     unsigned char[::1] active, int nthreads=1):
    cdef Py_ssize_t nrows = u.shape[0]
    cdef int nh = <int> x.shape[1]
    cdef int d = <int> u.shape[1]
    cdef Py_ssize_t r
    cdef int h, i, tid
    cdef long idx
    cdef double s
    if nthreads < 1:
        nthreads = 1
    scratch_np = np.empty((nthreads, nh))
    cdef double[:, ::1] xn = scratch_np
    for r in prange(nrows, nogil=True, num_threads=nthreads, schedule='static'):
        if not active[r]:
            continue
        tid = openmp.omp_get_thread_num()
        for h in range(nh):
            s = 0.0
            for idx in range(indptr[h], indptr[h + 1]):
                s = s + data[idx] * x[r, indices[idx]]
            for i in range(d):
                s = s + Wu[h, i] * u[r, i]
            xn[tid, h] = s
        for h in range(nh):  # separate loop: vectorizable tanh
            x[r, h] = (1.0 - alpha) * x[r, h] + alpha * tanh(xn[tid, h])


def reservoir_readout(double[:, ::1] Wout, double[:, ::1] x, double[:, ::1] u,
                      unsigned char[::1] active, int nthreads=1):
    cdef Py_ssize_t nrows = u.shape[0]
    cdef int nh = <int> x.shape[1]
    cdef int d = <int> u.shape[1]
    cdef Py_ssize_t r
    cdef int h, i
    cdef double s
    if nthreads < 1:
        nthreads = 1
    for r in prange(nrows, nogil=True, num_threads=nthreads, schedule='static'):
        if not active[r]:
            continue
        for i in range(d):
            s = 0.0
            for h in range(nh):
                s = s + Wout[i, h] * x[r, h]
            u[r, i] = s


def reservoir_collect(long[::1] indptr, long[::1] indices, double[::1] data,
                      double[:, ::1] Wu, double alpha, double[:, :, ::1] useq,
                      double[:, ::1] x0, double[:, :, ::1] out, int nthreads=1):
    cdef Py_ssize_t nrows = useq.shape[0]
    cdef int T = <int> useq.shape[1]
    cdef int d = <int> useq.shape[2]
    cdef int nh = <int> x0.shape[1]
    cdef Py_ssize_t r
    cdef int t, h, i
    cdef long idx
    cdef double s
    if nthreads < 1:
        nthreads = 1
    for r in prange(nrows, nogil=True, num_threads=nthreads, schedule='static'):
        for t in range(T):
            for h in range(nh):
                s = 0.0
                if t == 0:
                    for idx in range(indptr[h], indptr[h + 1]):
                        s = s + data[idx] * x0[r, indices[idx]]
                else:
                    for idx in range(indptr[h], indptr[h + 1]):
                        s = s + data[idx] * out[r, t - 1, indices[idx]]
                for i in range(d):
                    s = s + Wu[h, i] * useq[r, t, i]
                out[r, t, h] = s
            if t == 0:
                for h in range(nh):
                    out[r, t, h] = (1.0 - alpha) * x0[r, h] + alpha * tanh(out[r, t, h])
            else:
                for h in range(nh):
                    out[r, t, h] = (1.0 - alpha) * out[r, t - 1, h] + alpha * tanh(out[r, t, h])
