"""Compiled kernels for least squares over the probability simplex.

The objective is ``f(w) = ||A w - a||^2`` minimized subject to ``w >= 0``
and ``sum(w) == 1``. Columns of ``A`` are donors.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def project_simplex(y):
    """Euclidean projection onto the probability simplex (sort-based)."""
    n = y.size
    u = np.sort(y)[::-1]
    css = 0.0
    theta = 0.0
    for i in range(n):
        css += u[i]
        t = (css - 1.0) / (i + 1)
        if u[i] - t > 0.0:
            theta = t
    return np.maximum(y - theta, 0.0)


@njit(cache=True)
def _objective(A, a, w):
    r = A @ w - a
    return r @ r


@njit(cache=True)
def _face_minimizer(A, a, support):
    """Minimizer of ||A w - a|| on the affine hull {sum(w_S) = 1, w_rest = 0}.

    Parameterized as w_S = e_last + Q z with Q = [I; -1'], which keeps the
    least-squares problem in residual form (no normal equations).
    """
    m = support.size
    last = A[:, support[m - 1]]
    if m == 1:
        return np.ones(1)
    B = np.empty((A.shape[0], m - 1))
    for k in range(m - 1):
        B[:, k] = A[:, support[k]] - last
    z = np.linalg.lstsq(B, a - last, 1e-12)[0]
    out = np.empty(m)
    out[: m - 1] = z
    out[m - 1] = 1.0 - np.sum(z)
    return out


@njit(cache=True)
def _active_set_descent(A, a, w, f):
    """Move to the minimizer of the current face, dropping blocking coordinates.

    Each pass steps toward the face minimizer and stops at the first
    coordinate that would turn negative; that coordinate leaves the support
    and the face is re-solved. Every accepted move lowers the objective.
    """
    n = w.size
    for _ in range(n):
        idx = np.nonzero(w > 0.0)[0]
        cand = _face_minimizer(A, a, idx)
        p = cand - w[idx]
        tau = 1.0
        block = -1
        for k in range(idx.size):
            if p[k] < 0.0:
                r = w[idx[k]] / (-p[k])
                if r < tau:
                    tau = r
                    block = k
        w_try = w.copy()
        for k in range(idx.size):
            w_try[idx[k]] = max(w[idx[k]] + tau * p[k], 0.0)
        if block >= 0:
            w_try[idx[block]] = 0.0
        s = np.sum(w_try)
        if s <= 0.0:
            break
        w_try /= s
        f_try = _objective(A, a, w_try)
        if f_try > f:
            break
        w = w_try
        f = f_try
        if block < 0:
            break
    return w, f


@njit(cache=True)
def solve_simplex_qp(A, a, w0, tol, max_iter):
    """Projected gradient descent with exact line search plus active-set refinement.

    Stops when the norm of the unit-step gradient mapping
    ``w - P(w - grad f(w))`` is at most ``tol``.

    Returns (w, iterations, converged, pg_norm, fw_gap, n_increases).
    """
    w = w0.copy()
    a_norm2 = np.sum(A * A)
    step = 1.0 / (2.0 * a_norm2) if a_norm2 > 0.0 else 1.0
    f = _objective(A, a, w)
    n_increases = 0
    converged = False
    pg_norm = np.inf
    it = 0
    while True:
        r = A @ w - a
        g = 2.0 * (A.T @ r)
        pg = w - project_simplex(w - g)
        pg_norm = np.sqrt(np.sum(pg * pg))
        if pg_norm <= tol:
            converged = True
            break
        if it >= max_iter:
            break
        it += 1

        d = project_simplex(w - step * g) - w
        gd = g @ d
        if gd >= 0.0:
            break
        Ad = A @ d
        dHd = Ad @ Ad
        alpha = 1.0
        if dHd > 0.0:
            alpha = min(1.0, -gd / (2.0 * dHd))
        w_new = np.maximum(w + alpha * d, 0.0)
        w_new /= np.sum(w_new)
        f_new = _objective(A, a, w_new)
        w_new, f_new = _active_set_descent(A, a, w_new, f_new)

        if f_new > f + 1e-13 * (1.0 + f):
            n_increases += 1
        w = w_new
        f = f_new

    r = A @ w - a
    g = 2.0 * (A.T @ r)
    fw_gap = g @ w - np.min(g)
    return w, it, converged, pg_norm, fw_gap, n_increases


@njit(cache=True)
def solve_weighted(Xk, x1, v, tol, max_iter):
    """Scale predictors by sqrt(v), start at the best single donor, solve.

    ``Xk`` is (K, J) with donors as columns. Ties for the starting donor go
    to the earliest column.
    """
    K, J = Xk.shape
    sv = np.sqrt(v)
    A = np.empty((K, J))
    a = np.empty(K)
    for k in range(K):
        a[k] = x1[k] * sv[k]
        for j in range(J):
            A[k, j] = Xk[k, j] * sv[k]
    best = 0
    best_loss = np.inf
    for j in range(J):
        s = 0.0
        for k in range(K):
            d = A[k, j] - a[k]
            s += d * d
        if s < best_loss:
            best_loss = s
            best = j
    w0 = np.zeros(J)
    w0[best] = 1.0
    return solve_simplex_qp(A, a, w0, tol, max_iter)


@njit(cache=True)
def outcome_loss(Yk, y1, w):
    """Mean squared gap between ``y1`` and ``Yk @ w`` (``Yk`` is periods x donors)."""
    r = y1 - Yk @ w
    return np.mean(r * r)
