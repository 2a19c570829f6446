"""Hot loops with a numba implementation and a pure-numpy fallback.

The public names (:func:`rk4_linear`, :func:`tridiag_solve`) dispatch on
:data:`carbon_threshold._accel.USE_NUMBA`.  The ``*_numba`` and ``*_numpy``
variants stay importable for benchmarking and cross-checking.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded

from ._accel import HAVE_NUMBA, USE_NUMBA, njit

# ---------------------------------------------------------------------------
# RK4 for y'' = -p(x) y' - q(x) y - r(x), coefficients sampled on a half-step grid
# ---------------------------------------------------------------------------


def _rk4_linear_py(p, q, r, y0, dy0, h, guard):
    n = (p.shape[0] - 1) // 2
    y = np.empty_like(p[: n + 1])
    z = np.empty_like(p[: n + 1])
    y[0] = y0
    z[0] = dy0
    last = n
    half = 0.5 * h
    for i in range(n):
        j = 2 * i
        yi = y[i]
        zi = z[i]
        k1y = zi
        k1z = -p[j] * zi - q[j] * yi - r[j]
        y2 = yi + half * k1y
        z2 = zi + half * k1z
        k2y = z2
        k2z = -p[j + 1] * z2 - q[j + 1] * y2 - r[j + 1]
        y3 = yi + half * k2y
        z3 = zi + half * k2z
        k3y = z3
        k3z = -p[j + 1] * z3 - q[j + 1] * y3 - r[j + 1]
        y4 = yi + h * k3y
        z4 = zi + h * k3z
        k4y = z4
        k4z = -p[j + 2] * z4 - q[j + 2] * y4 - r[j + 2]
        yn = yi + h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        zn = zi + h / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z)
        if not (abs(yn) <= guard and abs(zn) <= guard):
            last = i
            break
        y[i + 1] = yn
        z[i + 1] = zn
    return y, z, last


rk4_linear_numba = njit(cache=True)(_rk4_linear_py) if HAVE_NUMBA else None


def _apply(M, Y):
    return np.einsum("nij,nj->ni", M, Y)


def rk4_linear_numpy(p, q, r, y0, dy0, h, guard):
    """Same recurrence as the numba loop, evaluated as a prefix scan of affine maps.

    Each RK4 step of a linear system is ``Y -> A_i Y + B_i``; composing the
    maps with a Hillis-Steele scan gives every node in ``log2(n)`` vectorised
    passes.
    """
    n = (p.shape[0] - 1) // 2
    dtype = np.result_type(p, q, r, np.asarray(y0), np.asarray(dy0))
    y = np.empty(n + 1, dtype=dtype)
    z = np.empty(n + 1, dtype=dtype)
    y[0], z[0] = y0, dy0
    if n == 0:
        return y, z, 0

    def system(idx):
        M = np.zeros((n, 2, 2), dtype=dtype)
        M[:, 0, 1] = 1.0
        M[:, 1, 0] = -q[idx]
        M[:, 1, 1] = -p[idx]
        F = np.zeros((n, 2), dtype=dtype)
        F[:, 1] = -r[idx]
        return M, F

    j = np.arange(n) * 2
    M0, F0 = system(j)
    Mh, Fh = system(j + 1)
    M1, F1 = system(j + 2)

    def step(Y, with_source):
        s = 1.0 if with_source else 0.0
        k1 = _apply(M0, Y) + s * F0
        k2 = _apply(Mh, Y + 0.5 * h * k1) + s * Fh
        k3 = _apply(Mh, Y + 0.5 * h * k2) + s * Fh
        k4 = _apply(M1, Y + h * k3) + s * F1
        return Y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    A = np.empty((n, 2, 2), dtype=dtype)
    e = np.zeros((n, 2), dtype=dtype)
    e[:, 0] = 1.0
    A[:, :, 0] = step(e, False)
    e[:] = 0.0
    e[:, 1] = 1.0
    A[:, :, 1] = step(e, False)
    B = step(np.zeros((n, 2), dtype=dtype), True)

    with np.errstate(over="ignore", invalid="ignore"):
        d = 1
        while d < n:
            A_new = A.copy()
            B_new = B.copy()
            A_new[d:] = A[d:] @ A[:-d]
            B_new[d:] = _apply(A[d:], B[:-d]) + B[d:]
            A, B = A_new, B_new
            d *= 2
        Y = _apply(A, np.broadcast_to(np.array([y0, dy0], dtype=dtype), (n, 2))) + B
    y[1:] = Y[:, 0]
    z[1:] = Y[:, 1]
    ok = (np.abs(y) <= guard) & (np.abs(z) <= guard)
    bad = np.flatnonzero(~ok)
    last = n if bad.size == 0 else int(bad[0]) - 1
    return y, z, last


def rk4_linear(p, q, r, y0, dy0, h, guard=1e250):
    """Integrate ``y'' + p y' + q y + r = 0`` forward with fixed-step RK4.

    ``p, q, r`` are sampled at every half step (length ``2n + 1``).  Returns
    ``(y, y', last)``, with ``last`` the index of the final node whose values
    stayed within ``guard``.
    """
    dtype = np.result_type(p, q, r, np.asarray(y0), np.asarray(dy0))
    p = np.ascontiguousarray(p, dtype=dtype)
    q = np.ascontiguousarray(q, dtype=dtype)
    r = np.ascontiguousarray(r, dtype=dtype)
    if USE_NUMBA:
        return rk4_linear_numba(p, q, r, dtype.type(y0), dtype.type(dy0), float(h), float(guard))
    return rk4_linear_numpy(p, q, r, y0, dy0, h, guard)


# ---------------------------------------------------------------------------
# Tridiagonal systems
# ---------------------------------------------------------------------------


def _thomas_py(lower, diag, upper, rhs):
    n = diag.shape[0]
    cp = np.empty_like(diag)
    dp = np.empty_like(rhs)
    x = np.empty_like(rhs)
    piv = diag[0]
    if piv == 0:
        x[:] = np.nan
        return x
    cp[0] = upper[0] / piv
    dp[0] = rhs[0] / piv
    for i in range(1, n):
        piv = diag[i] - lower[i] * cp[i - 1]
        if piv == 0:
            x[:] = np.nan
            return x
        cp[i] = upper[i] / piv
        dp[i] = (rhs[i] - lower[i] * dp[i - 1]) / piv
    x[n - 1] = dp[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x


thomas_numba = njit(cache=True)(_thomas_py) if HAVE_NUMBA else None


def thomas_numpy(lower, diag, upper, rhs):
    """Banded LAPACK solve; ``lower[0]`` and ``upper[-1]`` are ignored."""
    n = diag.shape[0]
    ab = np.zeros((3, n), dtype=np.result_type(lower, diag, upper))
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    try:
        return solve_banded((1, 1), ab, rhs, check_finite=False)
    except np.linalg.LinAlgError:
        return np.full(n, np.nan, dtype=np.result_type(ab, rhs))


def tridiag_solve(lower, diag, upper, rhs):
    dtype = np.result_type(lower, diag, upper, rhs)
    args = [np.ascontiguousarray(a, dtype=dtype) for a in (lower, diag, upper, rhs)]
    if USE_NUMBA:
        return thomas_numba(*args)
    return thomas_numpy(*args)
