"""Compiled orbit kernels.

Every hot loop that walks an orbit lives here so that the public modules can
stay in plain numpy. A system is passed around as the packed tuple produced by
:meth:`toruslyap.systems.TorusSystem.packed`::

    (A, A_inv, axes, freqs, amps, phases)

with ``A``/``A_inv`` float64 ``(d, d)``, ``axes`` int64 ``(m,)``, ``freqs``
float64 ``(m, d)`` and ``amps``/``phases`` float64 ``(m,)``.
"""

import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi


@njit(cache=True)
def wrap(v):
    r = v - math.floor(v)
    # v slightly below an integer can round up to exactly 1.0
    if r >= 1.0:
        r = 0.0
    return r


@njit(cache=True)
def forward_step(x, A, axes, freqs, amps, phases, y, J):
    """Write f(x) into ``y`` and D_x f into ``J``."""
    d = x.size
    for i in range(d):
        s = 0.0
        for j in range(d):
            s += A[i, j] * x[j]
        y[i] = wrap(s)
    for i in range(d):
        for j in range(d):
            J[i, j] = A[i, j]
    mt = np.empty(d)
    for s in range(axes.size):
        a = axes[s]
        arg = 0.0
        for j in range(d):
            arg += freqs[s, j] * y[j]
        theta = TWO_PI * arg + phases[s]
        c = TWO_PI * amps[s] * math.cos(theta)
        for col in range(d):
            t = 0.0
            for j in range(d):
                t += freqs[s, j] * J[j, col]
            mt[col] = t
        for col in range(d):
            J[a, col] += c * mt[col]
        y[a] = wrap(y[a] + amps[s] * math.sin(theta))


@njit(cache=True)
def backward_step(x, A_inv, axes, freqs, amps, phases, y, J):
    """Write f^{-1}(x) into ``y`` and D_x(f^{-1}) into ``J``."""
    d = x.size
    z = x.copy()
    K = np.eye(d)
    mt = np.empty(d)
    for s in range(axes.size - 1, -1, -1):
        a = axes[s]
        arg = 0.0
        for j in range(d):
            arg += freqs[s, j] * z[j]
        theta = TWO_PI * arg + phases[s]
        c = -TWO_PI * amps[s] * math.cos(theta)
        for col in range(d):
            t = 0.0
            for j in range(d):
                t += freqs[s, j] * K[j, col]
            mt[col] = t
        for col in range(d):
            K[a, col] += c * mt[col]
        z[a] = wrap(z[a] - amps[s] * math.sin(theta))
    for i in range(d):
        s = 0.0
        for j in range(d):
            s += A_inv[i, j] * z[j]
        y[i] = wrap(s)
    for i in range(d):
        for j in range(d):
            t = 0.0
            for l in range(d):
                t += A_inv[i, l] * K[l, j]
            J[i, j] = t


@njit(cache=True)
def step(x, backward, A, A_inv, axes, freqs, amps, phases, y, J):
    if backward:
        backward_step(x, A_inv, axes, freqs, amps, phases, y, J)
    else:
        forward_step(x, A, axes, freqs, amps, phases, y, J)


@njit(cache=True)
def orbit(x0, n, backward, A, A_inv, axes, freqs, amps, phases):
    """Points x_0..x_n and the Jacobians at x_0..x_{n-1} along one direction."""
    d = x0.size
    pts = np.empty((n + 1, d))
    Js = np.empty((n, d, d))
    pts[0] = x0
    y = np.empty(d)
    J = np.empty((d, d))
    for t in range(n):
        step(pts[t], backward, A, A_inv, axes, freqs, amps, phases, y, J)
        pts[t + 1] = y
        Js[t] = J
    return pts, Js


@njit(cache=True)
def points_jacobians(xs, backward, A, A_inv, axes, freqs, amps, phases):
    """Image points and Jacobians for a batch of base points."""
    N, d = xs.shape
    ys = np.empty((N, d))
    Js = np.empty((N, d, d))
    y = np.empty(d)
    J = np.empty((d, d))
    for i in range(N):
        step(xs[i], backward, A, A_inv, axes, freqs, amps, phases, y, J)
        ys[i] = y
        Js[i] = J
    return ys, Js


@njit(cache=True)
def _mgs(M, Q, logr):
    """Gram-Schmidt with one re-orthogonalisation pass; returns -1 or bad column."""
    d, r = M.shape
    for j in range(r):
        v = M[:, j].copy()
        for _ in range(2):
            for i in range(j):
                c = 0.0
                for l in range(d):
                    c += Q[l, i] * v[l]
                for l in range(d):
                    v[l] -= c * Q[l, i]
        nrm = 0.0
        for l in range(d):
            nrm += v[l] * v[l]
        nrm = math.sqrt(nrm)
        if not (nrm > 0.0) or not math.isfinite(nrm):
            return j
        for l in range(d):
            Q[l, j] = v[l] / nrm
        logr[j] = math.log(nrm)
    return -1


@njit(cache=True)
def qr_run(x0, n_transient, n_steps, n_records, backward, A, A_inv, axes, freqs, amps, phases):
    """Discrete QR method.

    Returns (log-sums, running-mean history, record steps, final point,
    failing step or -1).
    """
    d = x0.size
    x = x0.copy()
    y = np.empty(d)
    J = np.empty((d, d))
    Q = np.eye(d)
    Qn = np.empty((d, d))
    logr = np.zeros(d)
    sums = np.zeros(d)
    every = max(1, n_steps // max(1, n_records))
    n_rec = n_steps // every
    hist = np.zeros((n_rec, d))
    rec_steps = np.zeros(n_rec, dtype=np.int64)
    rec = 0
    total = n_transient + n_steps
    for t in range(total):
        step(x, backward, A, A_inv, axes, freqs, amps, phases, y, J)
        M = J @ Q
        bad = _mgs(M, Qn, logr)
        if bad >= 0:
            return sums, hist, rec_steps, x, t
        Q[:, :] = Qn
        x[:] = y
        if t >= n_transient:
            s = t - n_transient + 1
            for i in range(d):
                sums[i] += logr[i]
            if s % every == 0 and rec < n_rec:
                for i in range(d):
                    hist[rec, i] = sums[i] / s
                rec_steps[rec] = s
                rec += 1
    return sums, hist, rec_steps, x, -1


@njit(cache=True)
def qr_sweep(Js, Q0):
    """Orthonormal frames Q_0..Q_n pushed along a recorded Jacobian sequence."""
    n = Js.shape[0]
    d, r = Q0.shape
    Qs = np.empty((n + 1, d, r))
    logs = np.empty((n, r))
    Qs[0] = Q0
    Qn = np.empty((d, r))
    logr = np.empty(r)
    for t in range(n):
        M = Js[t] @ Qs[t]
        bad = _mgs(M, Qn, logr)
        if bad >= 0:
            raise ValueError("re-orthonormalisation failed")
        Qs[t + 1] = Qn
        logs[t] = logr
    return Qs, logs


@njit(cache=True)
def small_det(S):
    k = S.shape[0]
    if k == 0:
        return 1.0
    W = S.copy()
    det = 1.0
    for c in range(k):
        p = c
        best = abs(W[c, c])
        for r in range(c + 1, k):
            if abs(W[r, c]) > best:
                best = abs(W[r, c])
                p = r
        if best == 0.0:
            return 0.0
        if p != c:
            for l in range(k):
                tmp = W[c, l]
                W[c, l] = W[p, l]
                W[p, l] = tmp
            det = -det
        det *= W[c, c]
        for r in range(c + 1, k):
            f = W[r, c] / W[c, c]
            for l in range(c, k):
                W[r, l] -= f * W[c, l]
    return det


@njit(cache=True)
def compound_into(M, combos, out):
    C, k = combos.shape
    S = np.empty((k, k))
    for I in range(C):
        for Jc in range(C):
            for a in range(k):
                for b in range(k):
                    S[a, b] = M[combos[I, a], combos[Jc, b]]
            out[I, Jc] = small_det(S)


@njit(cache=True)
def _renormalise(C):
    """Scale C by an exact power of two; return the binary exponent removed."""
    m = 0.0
    for v in C.flat:
        if abs(v) > m:
            m = abs(v)
    if m == 0.0 or not math.isfinite(m):
        return 0
    e = math.frexp(m)[1] - 1
    if e != 0:
        C *= math.ldexp(1.0, -e)
    return e


@njit(cache=True)
def log_compound_norm(x0, n_transient, n_steps, combos, backward, A, A_inv, axes, freqs, amps, phases):
    """log ||compound(Phi(n_steps, x), k)||_2 at x = f^{n_transient}(x0).

    The product is rescaled by powers of two every step so the accumulated
    exponent is exact. Returns (log norm, failing step or -1).
    """
    d = x0.size
    Cn = combos.shape[0]
    x = x0.copy()
    y = np.empty(d)
    J = np.empty((d, d))
    for t in range(n_transient):
        step(x, backward, A, A_inv, axes, freqs, amps, phases, y, J)
        x[:] = y
    P = np.eye(Cn)
    Ck = np.empty((Cn, Cn))
    E = 0
    for t in range(n_steps):
        step(x, backward, A, A_inv, axes, freqs, amps, phases, y, J)
        compound_into(J, combos, Ck)
        P = Ck @ P
        E += _renormalise(P)
        ok = True
        for v in P.flat:
            if not math.isfinite(v):
                ok = False
        if not ok:
            return np.nan, t
        x[:] = y
    s = np.linalg.svd(P)[1]
    if s[0] == 0.0:
        return -np.inf, -1
    return E * math.log(2.0) + math.log(s[0]), -1


@njit(cache=True)
def batch_log_compound_norms(xs, n_steps, combos, backward, A, A_inv, axes, freqs, amps, phases):
    N = xs.shape[0]
    out = np.empty(N)
    bad = np.full(N, -1, dtype=np.int64)
    for i in range(N):
        v, b = log_compound_norm(xs[i], 0, n_steps, combos, backward, A, A_inv, axes, freqs, amps, phases)
        out[i] = v
        bad[i] = b
    return out, bad
