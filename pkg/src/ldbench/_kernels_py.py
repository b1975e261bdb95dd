"""Pure-numpy implementations of the hot kernels.

This is the fallback backend selected when the compiled extension is not
available. Every function here has a signature-compatible twin in
``ldbench._kernels`` (Cython); the two are held to numerical parity by
tests/test_kernels.py. All batch arrays are C-contiguous float64, states
are flat [q; p] rows, and ``active`` masks are uint8 (1 = live node).
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"

# Dormand-Prince 5(4) tableau (error coefficients include the FSAL stage).
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_DP_A = [
    np.array([], dtype=float),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
]
_DP_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
_DP_E = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)

_MIN_STEP_FRACTION = 1e-14
_STATE_LIMIT = 1e8


def _rhs(sys_id: int, param: float, y: np.ndarray) -> np.ndarray:
    out = np.empty_like(y)
    if sys_id == 0:  # duffing
        q = y[:, 0]
        out[:, 0] = y[:, 1]
        out[:, 1] = q - q**3
    elif sys_id == 2:  # harmonic
        out[:, 0] = param * y[:, 1]
        out[:, 1] = -param * y[:, 0]
    else:  # three-mode NLS
        k2 = param * param
        q0, q1, p0, p1 = y[:, 0], y[:, 1], y[:, 2], y[:, 3]
        z0 = q0**2 + p0**2
        z1 = q1**2 + p1**2
        out[:, 0] = -z0 * p0 - 2.0 * q0 * q1 * p1 - p0 * (q1**2 + 3.0 * p1**2)
        out[:, 1] = (
            -0.5 * k2 * p1 - 1.5 * p1 * z1 - 2.0 * q0 * p0 * q1 - p1 * (q0**2 + 3.0 * p0**2)
        )
        out[:, 2] = z0 * q0 + 2.0 * p0 * q1 * p1 + q0 * (3.0 * q1**2 + p1**2)
        out[:, 3] = (
            0.5 * k2 * q1 + 1.5 * q1 * z1 + 2.0 * q0 * p0 * p1 + q1 * (3.0 * q0**2 + p0**2)
        )
    return out


def reference_stride(sys_id, param, y, active, dt, rtol, atol, nthreads=1):
    """Advance every active row of y by dt with adaptive DP5(4).

    Backward strides pass dt < 0 and are integrated as the time-reversed
    field over |dt| (one code path, symmetric error behavior). Rows whose
    step size underflows or whose state leaves the finite range are
    deactivated in place.
    """
    y = np.asarray(y)
    goal = abs(dt)
    if goal == 0.0:
        return
    sgn = 1.0 if dt > 0 else -1.0

    idx = np.flatnonzero(active)
    if idx.size == 0:
        return
    yy = y[idx]
    n_rows, d = yy.shape
    t = np.zeros(n_rows)
    alive = np.ones(n_rows, dtype=bool)
    done = np.zeros(n_rows, dtype=bool)

    def field(z):
        return sgn * _rhs(sys_id, param, z)

    # Initial step heuristic shared with the compiled backend.
    f0 = field(yy)
    sc = atol + rtol * np.abs(yy)
    d0 = np.sqrt(np.mean((yy / sc) ** 2, axis=1))
    d1 = np.sqrt(np.mean((f0 / sc) ** 2, axis=1))
    h = np.where((d0 > 1e-10) & (d1 > 1e-10), 0.01 * d0 / np.maximum(d1, 1e-300), 1e-6)
    h = np.minimum(h, goal)

    while True:
        run = alive & ~done
        if not np.any(run):
            break
        rows = np.flatnonzero(run)
        z = yy[rows]
        hh = np.minimum(h[rows], goal - t[rows])

        ks = np.empty((7, rows.size, d))
        ks[0] = field(z)
        for s in range(1, 6):
            zs = z + hh[:, None] * np.einsum("s,srd->rd", _DP_A[s], ks[:s])
            ks[s] = field(zs)
        z_new = z + hh[:, None] * np.einsum("s,srd->rd", _DP_B, ks[:6])
        ks[6] = field(z_new)
        err = hh[:, None] * np.einsum("s,srd->rd", _DP_E, ks)

        scale = atol + rtol * np.maximum(np.abs(z), np.abs(z_new))
        errnorm = np.sqrt(np.mean((err / scale) ** 2, axis=1))
        bad = ~np.isfinite(errnorm) | ~np.all(np.isfinite(z_new), axis=1)
        errnorm = np.where(bad, np.inf, errnorm)

        accept = errnorm <= 1.0
        acc_rows = rows[accept]
        yy[acc_rows] = z_new[accept]
        t[acc_rows] += hh[accept]
        done[acc_rows] = t[acc_rows] >= goal * (1.0 - 1e-15)

        with np.errstate(divide="ignore", over="ignore"):
            raw = 0.9 * errnorm ** (-0.2)
        # errnorm == 0 -> inf -> clipped to the max growth factor
        factor = np.where(np.isnan(raw), 0.2, np.clip(raw, 0.2, 5.0))
        h[rows] = hh * factor

        dead = rows[(h[rows] < _MIN_STEP_FRACTION * goal) | bad]
        alive[dead] = False
        overflow = rows[np.any(np.abs(yy[rows]) > _STATE_LIMIT, axis=1)]
        alive[overflow] = False

    y[idx] = yy
    active[idx[~alive]] = 0


def _grad_v(K, a, b, x):
    """nabla V(x) = K^T (a * tanh(K x + b)) for a batch x of shape (B, n)."""
    z = x @ K.T + b
    return (a * np.tanh(z)) @ K


def sympnet_stride(K, a, b, y, active, direction, nthreads=1):
    """Apply the alternating gradient-module chain in place.

    Modules are stored in application order [upper, lower, upper, ...];
    direction=-1 applies the exact inverses in reverse order.
    """
    n = K.shape[2]
    idx = np.flatnonzero(active)
    q = y[idx, :n]
    p = y[idx, n:]
    n_mod = K.shape[0]
    order = range(n_mod) if direction > 0 else range(n_mod - 1, -1, -1)
    sign = 1.0 if direction > 0 else -1.0
    for j in order:
        if j % 2 == 0:
            q = q + sign * _grad_v(K[j], a[j], b[j], p)
        else:
            p = p + sign * _grad_v(K[j], a[j], b[j], q)
    y[np.ix_(idx, np.arange(n))] = q
    y[np.ix_(idx, np.arange(n, 2 * n))] = p


def henon_stride(K, a, b, eta, y, active, direction, nthreads=1):
    """Apply the stacked Henon layers (4 identical maps per layer) in place."""
    n = K.shape[2]
    idx = np.flatnonzero(active)
    q = y[idx, :n].copy()
    p = y[idx, n:].copy()
    n_layers = K.shape[0]
    order = range(n_layers) if direction > 0 else range(n_layers - 1, -1, -1)
    for j in order:
        for _ in range(4):
            if direction > 0:
                q, p = p, -q + _grad_v(K[j], a[j], b[j], p) + eta[j]
            else:
                q, p = _grad_v(K[j], a[j], b[j], q) + eta[j] - p, q
    y[np.ix_(idx, np.arange(n))] = q
    y[np.ix_(idx, np.arange(n, 2 * n))] = p


def _grad_two_layer(W1, b1, W2, b2, a, x):
    """Gradient of the two-hidden-layer scalar net a^T logcosh(W2 logcosh(W1 x + b1) + b2)."""
    z1 = x @ W1.T + b1
    s1 = np.tanh(z1)
    h1 = _logcosh(z1)
    z2 = h1 @ W2.T + b2
    s2 = np.tanh(z2)
    w = (a * s2) @ W2
    return (s1 * w) @ W1


def _logcosh(z):
    # log(cosh(z)) = |z| + log1p(exp(-2|z|)) - log 2, overflow-safe
    az = np.abs(z)
    return az + np.log1p(np.exp(-2.0 * az)) - np.log(2.0)


def ghnn_stride(W1, b1, W2, b2, av, y, active, direction, nthreads=1):
    """Symplectic-Euler composition of per-Hamiltonian (K_i, V_i) nets, in place.

    Forward, per Hamiltonian i: q += grad K_i(p); p -= grad V_i(q_new).
    The inverse reverses module order and undoes each shear exactly.
    """
    n = W1.shape[3]
    idx = np.flatnonzero(active)
    q = y[idx, :n]
    p = y[idx, n:]
    n_ham = W1.shape[0]
    if direction > 0:
        for i in range(n_ham):
            q = q + _grad_two_layer(W1[i, 0], b1[i, 0], W2[i, 0], b2[i, 0], av[i, 0], p)
            p = p - _grad_two_layer(W1[i, 1], b1[i, 1], W2[i, 1], b2[i, 1], av[i, 1], q)
    else:
        for i in range(n_ham - 1, -1, -1):
            p = p + _grad_two_layer(W1[i, 1], b1[i, 1], W2[i, 1], b2[i, 1], av[i, 1], q)
            q = q - _grad_two_layer(W1[i, 0], b1[i, 0], W2[i, 0], b2[i, 0], av[i, 0], p)
    y[np.ix_(idx, np.arange(n))] = q
    y[np.ix_(idx, np.arange(n, 2 * n))] = p


# ---------------------------------------------------------------------------
# Training passes: loss plus analytic parameter gradients of the one-step MSE
# (mean over the batch of the squared Euclidean prediction error).
# ---------------------------------------------------------------------------


def sympnet_grads(K, a, b, X, Y, gK, ga, gb, nthreads=1):
    n = K.shape[2]
    B = X.shape[0]
    n_mod = K.shape[0]
    q, p = X[:, :n].copy(), X[:, n:].copy()
    cache = []
    for j in range(n_mod):
        x_in = p if j % 2 == 0 else q
        z = x_in @ K[j].T + b[j]
        s = np.tanh(z)
        g = (a[j] * s) @ K[j]
        cache.append((x_in, s))
        if j % 2 == 0:
            q = q + g
        else:
            p = p + g
    pred = np.concatenate([q, p], axis=1)
    diff = pred - Y
    loss = float(np.sum(diff * diff) / B)

    dq = 2.0 * diff[:, :n] / B
    dp = 2.0 * diff[:, n:] / B
    gK[...] = 0.0
    ga[...] = 0.0
    gb[...] = 0.0
    for j in range(n_mod - 1, -1, -1):
        x_in, s = cache[j]
        up = dq if j % 2 == 0 else dp
        t = up @ K[j].T
        sp = 1.0 - s * s
        asp_t = a[j] * sp * t
        ga[j] = np.sum(s * t, axis=0)
        gb[j] = np.sum(asp_t, axis=0)
        gK[j] = (a[j] * s).T @ up + asp_t.T @ x_in
        back = asp_t @ K[j]
        if j % 2 == 0:
            dp = dp + back
        else:
            dq = dq + back
    return loss


def henon_grads(K, a, b, eta, X, Y, gK, ga, gb, geta, nthreads=1):
    n = K.shape[2]
    B = X.shape[0]
    n_layers = K.shape[0]
    q, p = X[:, :n].copy(), X[:, n:].copy()
    cache = []
    for j in range(n_layers):
        for _ in range(4):
            z = p @ K[j].T + b[j]
            s = np.tanh(z)
            g = (a[j] * s) @ K[j]
            cache.append((j, p, s))
            q, p = p, -q + g + eta[j]
    pred = np.concatenate([q, p], axis=1)
    diff = pred - Y
    loss = float(np.sum(diff * diff) / B)

    dq = 2.0 * diff[:, :n] / B
    dp = 2.0 * diff[:, n:] / B
    gK[...] = 0.0
    ga[...] = 0.0
    gb[...] = 0.0
    geta[...] = 0.0
    for j, p_in, s in reversed(cache):
        # forward was (q', p') = (p, -q + gradV(p) + eta)
        t = dp @ K[j].T
        sp = 1.0 - s * s
        asp_t = a[j] * sp * t
        ga[j] += np.sum(s * t, axis=0)
        gb[j] += np.sum(asp_t, axis=0)
        geta[j] += np.sum(dp, axis=0)
        gK[j] += (a[j] * s).T @ dp + asp_t.T @ p_in
        dq_new = dq + asp_t @ K[j]
        dq, dp = -dp, dq_new
    return loss


def _ghnn_grad_net(W1, b1, W2, b2, a, x, up):
    """Backprop an upstream gradient through y = grad V(x); returns dx and param grads."""
    z1 = x @ W1.T + b1
    s1 = np.tanh(z1)
    h1 = _logcosh(z1)
    z2 = h1 @ W2.T + b2
    s2 = np.tanh(z2)
    w = (a * s2) @ W2

    t1 = up @ W1.T
    alpha = t1 * (1.0 - s1 * s1) * w
    beta = t1 * s1
    gamma = a * (1.0 - s2 * s2) * (beta @ W2.T)
    delta = s1 * (gamma @ W2)

    gW1 = (s1 * w).T @ up + (alpha + delta).T @ x
    gb1 = np.sum(alpha + delta, axis=0)
    gW2 = (a * s2).T @ beta + gamma.T @ h1
    gb2 = np.sum(gamma, axis=0)
    ga = np.sum(s2 * (beta @ W2.T), axis=0)
    dx = (alpha + delta) @ W1
    return dx, gW1, gb1, gW2, gb2, ga


def ghnn_grads(W1, b1, W2, b2, av, X, Y, gW1, gb1, gW2, gb2, gav, nthreads=1):
    n = W1.shape[3]
    B = X.shape[0]
    n_ham = W1.shape[0]
    q, p = X[:, :n].copy(), X[:, n:].copy()
    cache = []
    for i in range(n_ham):
        p_in = p
        gk = _grad_two_layer(W1[i, 0], b1[i, 0], W2[i, 0], b2[i, 0], av[i, 0], p)
        q = q + gk
        q_in = q
        gv = _grad_two_layer(W1[i, 1], b1[i, 1], W2[i, 1], b2[i, 1], av[i, 1], q)
        p = p - gv
        cache.append((p_in, q_in))
    pred = np.concatenate([q, p], axis=1)
    diff = pred - Y
    loss = float(np.sum(diff * diff) / B)

    dq = 2.0 * diff[:, :n] / B
    dp = 2.0 * diff[:, n:] / B
    for arr in (gW1, gb1, gW2, gb2, gav):
        arr[...] = 0.0
    for i in range(n_ham - 1, -1, -1):
        p_in, q_in = cache[i]
        dx, w1, c1, w2, c2, ca = _ghnn_grad_net(
            W1[i, 1], b1[i, 1], W2[i, 1], b2[i, 1], av[i, 1], q_in, -dp
        )
        gW1[i, 1] += w1
        gb1[i, 1] += c1
        gW2[i, 1] += w2
        gb2[i, 1] += c2
        gav[i, 1] += ca
        dq = dq + dx
        dx, w1, c1, w2, c2, ca = _ghnn_grad_net(
            W1[i, 0], b1[i, 0], W2[i, 0], b2[i, 0], av[i, 0], p_in, dq
        )
        gW1[i, 0] += w1
        gb1[i, 0] += c1
        gW2[i, 0] += w2
        gb2[i, 0] += c2
        gav[i, 0] += ca
        dp = dp + dx
    return loss


# ---------------------------------------------------------------------------
# Reservoir kernels. W_x is CSR (indptr/indices/data); hidden states are rows.
# ---------------------------------------------------------------------------


def _wx_dot(indptr, indices, data, x):
    """Sparse W_x times each hidden-state row of x: returns x @ W_x^T."""
    from scipy.sparse import csr_matrix

    n_h = x.shape[1]
    wx = csr_matrix((data, indices, indptr), shape=(n_h, n_h))
    return x @ wx.T


def reservoir_update(indptr, indices, data, Wu, alpha, u, x, active, nthreads=1):
    """x <- (1 - alpha) x + alpha tanh(W_x x + W_u u), row-wise, in place."""
    idx = np.flatnonzero(active)
    pre = _wx_dot(indptr, indices, data, x[idx]) + u[idx] @ Wu.T
    x[idx] = (1.0 - alpha) * x[idx] + alpha * np.tanh(pre)


def reservoir_readout(Wout, x, u, active, nthreads=1):
    """u <- W_out x for active rows, in place."""
    idx = np.flatnonzero(active)
    u[idx] = x[idx] @ Wout.T


def reservoir_collect(indptr, indices, data, Wu, alpha, useq, x0, out, nthreads=1):
    """Teacher-forced state collection for a batch of input sequences.

    useq: (B, T, d) inputs, x0: (B, N_h) initial hidden states,
    out: (B, T, N_h) receives the state after consuming each input.
    """
    x = x0.copy()
    for t in range(useq.shape[1]):
        pre = _wx_dot(indptr, indices, data, x) + useq[:, t] @ Wu.T
        x = (1.0 - alpha) * x + alpha * np.tanh(pre)
        out[:, t] = x
