"""Linear second-order ODEs ``a g'' + b g' + c g + f = 0`` on a uniform grid.

Initial-value problems use fixed-step RK4; two-point boundary-value problems
use central finite differences with one Richardson extrapolation.  Solutions
are stored as nodal values, slopes and ODE-implied second derivatives, which
makes quintic Hermite interpolation available off the grid.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from . import kernels
from .errors import (
    NonfiniteCoefficient,
    OutOfDomain,
    SingularSystem,
    StiffnessFailure,
    TruncationTooSmall,
)

Coef = Union[float, complex, Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class Grid:
    h: float
    n: int

    @classmethod
    def from_scenario(cls, s) -> "Grid":
        return cls(s.grid.h, s.grid.n)

    @property
    def x_max(self) -> float:
        return self.n * self.h

    def nodes(self, n: int | None = None) -> np.ndarray:
        n = self.n if n is None else n
        return np.arange(n + 1) * self.h

    def half_nodes(self, n: int | None = None) -> np.ndarray:
        n = self.n if n is None else n
        return np.arange(2 * n + 1) * (0.5 * self.h)

    def index_at_or_above(self, x: float) -> int:
        return min(self.n, int(np.ceil(x / self.h - 1e-9)))


def _sample(coef: Coef, x: np.ndarray) -> np.ndarray:
    if callable(coef):
        out = np.asarray(coef(x))
        return np.broadcast_to(out, x.shape) if out.shape != x.shape else out
    return np.full(x.shape, coef, dtype=np.result_type(type(coef), np.float64))


@dataclass(frozen=True)
class LinearOde:
    """Coefficients of ``a g'' + b g' + c g + f = 0``; each a constant or a vectorised callable."""

    a: Coef
    b: Coef
    c: Coef
    f: Coef = 0.0

    def coefficients(self, x: np.ndarray):
        a, b, c, f = (_sample(k, x) for k in (self.a, self.b, self.c, self.f))
        for name, arr in zip("abcf", (a, b, c, f)):
            if not np.all(np.isfinite(arr)):
                raise NonfiniteCoefficient(f"coefficient {name} is not finite on the domain")
        if np.any(np.real(a) <= 0):
            raise NonfiniteCoefficient("diffusion coefficient a(x) must be positive")
        return a, b, c, f

    def homogeneous(self) -> "LinearOde":
        return LinearOde(self.a, self.b, self.c, 0.0)

    def second_derivative(self, x, g, dg):
        a, b, c, f = self.coefficients(np.asarray(x, dtype=float))
        return -(b * dg + c * g + f) / a


class SampledSolution:
    """Nodal samples of ``g`` and ``g'`` on ``x_i = i*h``, with C^2 quintic Hermite evaluation."""

    def __init__(self, h: float, g, dg, d2g, ode: LinearOde | None = None):
        self.h = float(h)
        self.g = np.asarray(g)
        self.dg = np.asarray(dg)
        self.d2g = np.asarray(d2g)
        self.ode = ode
        self.x = np.arange(self.g.shape[0]) * self.h

    @classmethod
    def from_values(cls, h, g, dg, ode: LinearOde):
        x = np.arange(len(g)) * h
        return cls(h, g, dg, ode.second_derivative(x, g, dg), ode)

    @property
    def n(self) -> int:
        return self.g.shape[0] - 1

    @property
    def x_end(self) -> float:
        return self.x[-1]

    def truncated(self, n: int) -> "SampledSolution":
        return SampledSolution(self.h, self.g[: n + 1], self.dg[: n + 1], self.d2g[: n + 1], self.ode)

    def _combine(self, other, sign):
        m = min(self.n, other.n) + 1
        return SampledSolution(self.h, self.g[:m] + sign * other.g[:m], self.dg[:m] + sign * other.dg[:m],
                               self.d2g[:m] + sign * other.d2g[:m])

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __mul__(self, k):
        return SampledSolution(self.h, k * self.g, k * self.dg, k * self.d2g)

    __rmul__ = __mul__

    def eval(self, x):
        """Interpolated ``(g(x), g'(x))``; grid nodes return the stored samples exactly."""
        xq = np.asarray(x, dtype=float)
        lo, hi = 0.0, self.x[-1]
        if np.any(xq < lo - 1e-12) or np.any(xq > hi + 1e-9 * max(1.0, hi)):
            bad = xq[(xq < lo - 1e-12) | (xq > hi + 1e-9 * max(1.0, hi))].flat[0]
            raise OutOfDomain(float(bad), lo, hi)
        xq = np.clip(xq, lo, hi)
        i = np.clip(np.searchsorted(self.x, xq, side="right") - 1, 0, self.n - 1)
        h = self.h
        t = np.where(xq == self.x[i + 1], 1.0, (xq - self.x[i]) / h)
        t2 = t * t
        t3 = t2 * t
        t4 = t3 * t
        t5 = t4 * t
        y0, y1 = self.g[i], self.g[i + 1]
        d0, d1 = h * self.dg[i], h * self.dg[i + 1]
        s0, s1 = h * h * self.d2g[i], h * h * self.d2g[i + 1]
        val = (y0 * (1 - 10 * t3 + 15 * t4 - 6 * t5) + y1 * (10 * t3 - 15 * t4 + 6 * t5)
               + d0 * (t - 6 * t3 + 8 * t4 - 3 * t5) + d1 * (-4 * t3 + 7 * t4 - 3 * t5)
               + s0 * 0.5 * (t2 - 3 * t3 + 3 * t4 - t5) + s1 * 0.5 * (t3 - 2 * t4 + t5))
        der = (y0 * (-30 * t2 + 60 * t3 - 30 * t4) + y1 * (30 * t2 - 60 * t3 + 30 * t4)
               + d0 * (1 - 18 * t2 + 32 * t3 - 15 * t4) + d1 * (-12 * t2 + 28 * t3 - 15 * t4)
               + s0 * 0.5 * (2 * t - 9 * t2 + 12 * t3 - 5 * t4) + s1 * 0.5 * (3 * t2 - 8 * t3 + 5 * t4)) / h
        if np.ndim(x) == 0:
            return val[()], der[()]
        return val, der

    def __call__(self, x):
        return self.eval(x)[0]

    def slope(self, x):
        return self.eval(x)[1]

    def residual(self, ode: LinearOde | None = None, relative: bool = True) -> np.ndarray:
        """ODE residual at interior nodes with ``g''`` from 4th-order differences of ``g'``."""
        ode = ode or self.ode
        if ode is None:
            raise ValueError("no ODE attached to this solution")
        a, b, c, f = ode.coefficients(self.x)
        dg = self.dg
        d2 = (-dg[4:] + 8 * dg[3:-1] - 8 * dg[1:-3] + dg[:-4]) / (12 * self.h)
        sl = slice(2, -2)
        terms = (a[sl] * d2, b[sl] * dg[sl], c[sl] * self.g[sl], f[sl])
        res = np.abs(sum(terms))
        if relative:
            scale = sum(np.abs(t) for t in terms)
            res = res / np.maximum(scale, np.finfo(float).tiny)
        return res


def _end_index(grid: Grid, x_end: float | None) -> int:
    if x_end is None:
        return grid.n
    return grid.index_at_or_above(x_end)


def solve_ivp(ode: LinearOde, y0, dy0, grid: Grid, x_end: float | None = None,
              guard: float = 1e250) -> SampledSolution:
    """Forward RK4 from ``x = 0``.

    Integration stops early, without error, once ``|g|`` exceeds ``guard``.
    The returned solution then covers only the reached prefix.
    """
    n = _end_index(grid, x_end)
    xh = grid.half_nodes(n)
    a, b, c, f = ode.coefficients(xh)
    p, q, r = b / a, c / a, f / a
    rate = np.max(np.abs(p)) + np.sqrt(np.max(np.abs(q)))
    if grid.h * rate > 2.5:
        raise StiffnessFailure(f"step h={grid.h} too large for coefficient scale {rate:.3g}")
    y, z, last = kernels.rk4_linear(p, q, r, y0, dy0, grid.h, guard)
    if last < min(n, 4):
        raise StiffnessFailure("solution left the representable range immediately")
    y, z = y[: last + 1], z[: last + 1]
    d2 = -(p[: 2 * last + 1: 2] * z + q[: 2 * last + 1: 2] * y + r[: 2 * last + 1: 2])
    return SampledSolution(grid.h, y, z, d2, ode)


def _fd_solve(a, b, c, f, h, left, right, robin=None):
    """Central differences with Dirichlet ends, or ``g' = robin * (g - right)`` at the right end."""
    dtype = np.result_type(a, b, c, f, left, right, 0.0 if robin is None else robin)
    last = None if robin is not None else -1
    ai, bi, ci, fi = a[1:last], b[1:last], c[1:last], f[1:last]
    lower = (ai / h**2 - bi / (2 * h)).astype(dtype)
    diag = (-2 * ai / h**2 + ci).astype(dtype)
    upper = (ai / h**2 + bi / (2 * h)).astype(dtype)
    rhs = -fi.astype(dtype)
    rhs[0] -= lower[0] * left
    if robin is None:
        rhs[-1] -= upper[-1] * right
    else:
        # ghost node from the central-difference Robin condition
        k = 2 * a[-1] / h + b[-1]
        lower[-1] = 2 * a[-1] / h**2
        diag[-1] += 2 * a[-1] * robin / h + b[-1] * robin
        rhs[-1] += k * robin * right
    inner = kernels.tridiag_solve(lower, diag, upper, rhs)
    if not np.all(np.isfinite(inner)):
        raise SingularSystem("tridiagonal solve produced non-finite values")
    g = np.empty(inner.shape[0] + (2 if robin is None else 1), dtype=inner.dtype)
    g[0] = left
    if robin is None:
        g[-1] = right
        g[1:-1] = inner
    else:
        g[1:] = inner
    return g


def decay_rate(ode: LinearOde, x: float):
    """Root with negative real part of the constant-coefficient equation frozen at ``x``.

    ``None`` when no such root exists (no decaying far-field mode).
    """
    a, b, c, _ = ode.coefficients(np.array([float(x)]))
    a, b, c = a[0], b[0], c[0]
    disc = np.sqrt(np.asarray(b * b - 4 * a * c, dtype=complex))
    roots = ((-b - disc) / (2 * a), (-b + disc) / (2 * a))
    r = min(roots, key=lambda z: z.real)
    if not r.real < 0:
        return None
    if np.isrealobj(c) and np.isrealobj(b) and np.isrealobj(a):
        return float(r.real)
    return complex(r)


def _derivative4(g, h):
    d = np.empty_like(g)
    d[2:-2] = (-g[4:] + 8 * g[3:-1] - 8 * g[1:-3] + g[:-4]) / (12 * h)
    d[0] = (-25 * g[0] + 48 * g[1] - 36 * g[2] + 16 * g[3] - 3 * g[4]) / (12 * h)
    d[1] = (-3 * g[0] - 10 * g[1] + 18 * g[2] - 6 * g[3] + g[4]) / (12 * h)
    d[-1] = (25 * g[-1] - 48 * g[-2] + 36 * g[-3] - 16 * g[-4] + 3 * g[-5]) / (12 * h)
    d[-2] = (3 * g[-1] + 10 * g[-2] - 18 * g[-3] + 6 * g[-4] - g[-5]) / (12 * h)
    return d


def _asymptotic(ode: LinearOde, robin, x_end: float, margin: float, tol: float) -> bool:
    """True when the far-field condition is exact to ``tol``: the decay rate is the same a margin earlier."""
    if robin is None:
        return False
    earlier = decay_rate(ode.homogeneous(), max(0.0, x_end - margin))
    return earlier is not None and abs(earlier - robin) <= tol * abs(robin)


def solve_bvp(ode: LinearOde, left, right, grid: Grid, x_end: float | None = None,
              flat_tol: float | None = None, flat_margin: float = 20.0,
              far_field: bool = False) -> SampledSolution:
    """Boundary-value problem on ``[0, x_end]`` with ``g(0) = left``.

    At the right end either ``g = right`` or, with ``far_field``, the
    asymptotic condition ``g' = r (g - right)``: ``right`` is then the limit
    at infinity and ``r`` the decaying root of the equation with coefficients
    frozen at ``x_end``.  The latter is exact for constant coefficients and
    avoids a boundary layer when the far field decays slowly.

    Uses second-order central differences on steps ``h`` and ``h/2`` and
    Richardson-extrapolates to fourth order at the ``h`` nodes.  Slopes come
    from five-point differences.  With ``flat_tol`` set, the solution must be
    flat (relative slope below ``flat_tol``) at ``flat_margin`` before the
    right end.  Otherwise the truncated domain is too short for the
    boundary value to stand in for the limit at infinity.
    """
    n = _end_index(grid, x_end)
    if n < 8:
        raise SingularSystem("domain too short for the boundary-value solver")
    xh = grid.half_nodes(n)
    a, b, c, f = ode.coefficients(xh)
    robin = decay_rate(ode.homogeneous(), n * grid.h) if far_field else None
    fine = _fd_solve(a, b, c, f, 0.5 * grid.h, left, right, robin)
    coarse = _fd_solve(a[::2], b[::2], c[::2], f[::2], grid.h, left, right, robin)
    g = (4.0 * fine[::2] - coarse) / 3.0
    g[0] = left
    if robin is None:
        g[-1] = right
    dg = _derivative4(g, grid.h)
    sol = SampledSolution.from_values(grid.h, g, dg, ode)
    if flat_tol is not None and not _asymptotic(ode, robin, n * grid.h, flat_margin, flat_tol):
        k = max(0, n - int(round(flat_margin / grid.h)))
        scale = max(1.0, float(np.max(np.abs(g))))
        if abs(dg[k]) > flat_tol * scale:
            raise TruncationTooSmall(
                f"solution not flat near x={k * grid.h:.4g}: slope {abs(dg[k]):.3g}; increase grid.x_max")
    return sol
