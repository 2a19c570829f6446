"""Value of a threshold strategy under exponential discounting, general diffusion.

Below the threshold the value solves

    sigma^2/2 g'' + mu g' - r g + Lambda = 0,          g(0) = 0,

and above it the same equation with drift ``mu - l_max`` and source
``(gamma - beta) l_max + Lambda``, bounded at infinity.  The two branches are
glued with C^1 matching at ``b``.

Numerically the interior branch is written as ``C1 * phi + P`` with
``phi = v1 - v2`` the homogeneous solution vanishing at 0 and ``P`` a
particular solution with ``P(0) = 0`` obtained from a boundary-value solve.
``P`` stays of order ``Lambda / r`` so the matching never subtracts two
numbers of size ``exp(theta_1 b)``.  The variation-of-parameters particular
``B1`` (the classical representation) is still computed and the coefficient
``C1`` is reported in that normalisation.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson

from .errors import NoCrossingWithinBound, TruncationTooSmall
from .model import Scenario
from .ode import Grid, LinearOde, SampledSolution, solve_bvp, solve_ivp
from .roots import CrossingResult, scan_crossings

FLAT_TOL = 1e-4
SCAN_STEP = 0.01
# the interior growing mode is integrated until it reaches this size
GROWTH_GUARD = 1e150
# thresholds are searched this far below the end of the interior solutions
INTERIOR_MARGIN = 2.0
# doublings of the domain tried when a far-field solution is not yet flat
MAX_EXTENSIONS = 3

log = logging.getLogger(__name__)


def interior_ode(s: Scenario, rate: float, source) -> LinearOde:
    return LinearOde(lambda x: 0.5 * s.vol(x) ** 2, s.net_drift, -rate, source)


def exterior_ode(s: Scenario, rate: float, source) -> LinearOde:
    return LinearOde(lambda x: 0.5 * s.vol(x) ** 2, lambda x: s.net_drift(x) - s.econ.l_max, -rate, source)


class ThresholdBasis:
    """Threshold-independent solutions for discount rate ``rate``.

    Parameters
    ----------
    s : Scenario
    rate : float
        Effective discount rate (``delta`` for the exponential value,
        ``lambda + delta`` for the present-biased building blocks).
    interior_source, exterior_source : float
        Constant running rewards below and above the threshold.
    """

    def __init__(self, s: Scenario, rate: float, interior_source: float, exterior_source: float,
                 grid: Grid | None = None, flat_tol: float | None = FLAT_TOL, extend: bool = True):
        self.scenario = s
        self.rate = float(rate)
        self.interior_source = float(interior_source)
        self.exterior_source = float(exterior_source)
        g = grid or Grid.from_scenario(s)

        # exterior first: a slowly decaying far field may call for a longer domain
        self.ode_out = exterior_ode(s, rate, self.exterior_source)
        hom_out = exterior_ode(s, rate, 0.0)
        for attempt in range(MAX_EXTENSIONS + 1):
            try:
                self.v3 = solve_bvp(hom_out, 1.0, 0.0, g, flat_tol=flat_tol, far_field=True)
                self.u = solve_bvp(self.ode_out, 0.0, self.exterior_source / self.rate, g, flat_tol=flat_tol,
                                   far_field=True)
                break
            except TruncationTooSmall:
                if not extend or attempt == MAX_EXTENSIONS:
                    raise
                g = Grid(g.h, 2 * g.n)
                log.warning("far field not flat; extending domain to x=%.6g", g.x_max)
        self.grid = g

        hom_in = interior_ode(s, rate, 0.0)
        self.v1 = solve_ivp(hom_in, 1.0, 1.0, g, guard=GROWTH_GUARD)
        self.v2 = solve_ivp(hom_in, 1.0, -1.0, g, x_end=self.v1.x_end)
        self.phi = self.v1 - self.v2
        self.phi.ode = hom_in
        self.x_interior = self.v1.x_end

        self.ode_in = interior_ode(s, rate, self.interior_source)
        self.particular = solve_bvp(self.ode_in, 0.0, self.interior_source / self.rate, g,
                                    x_end=self.x_interior, far_field=True)
        self._b1 = None

    # -- classical representation ------------------------------------------------
    @property
    def wronskian(self) -> np.ndarray:
        """``v1 v2' - v2 v1'`` from Abel's identity (sampling the products would cancel)."""
        return abel_wronskian(self.ode_in, self.v1.x[: self.v2.n + 1], -2.0)

    @property
    def B1(self) -> SampledSolution:
        """Variation-of-parameters particular with ``B1(0) = B1'(0) = 0`` (composite Simpson)."""
        if self._b1 is None:
            self._b1 = variation_of_parameters(self.v1, self.v2, self.ode_in)
        return self._b1

    @property
    def shift(self) -> float:
        """``k`` with ``particular = B1 + k * phi`` (both vanish at 0, ``phi'(0) = 2``)."""
        return float(self.particular.dg[0]) / 2.0

    @property
    def b_max(self) -> float:
        """Largest threshold the interior solutions support."""
        return self.x_interior - INTERIOR_MARGIN

    # -- matching ------------------------------------------------------------------
    def _check_b(self, b):
        b = np.asarray(b, dtype=float)
        if np.any(b > self.b_max + 1e-12):
            raise TruncationTooSmall(
                f"threshold {float(np.max(b)):.4g} beyond interior range {self.b_max:.4g}")
        return b

    def coefficients(self, b, particular_in=None, particular_out=None):
        """Matching coefficients ``(C1, C3)`` in the stable normalisation.

        The interior value is ``C1 phi + particular_in`` and the exterior one is
        ``C3 v3 + particular_out``.  The particulars default to this basis's own.
        """
        b = self._check_b(b)
        pin, dpin = particular_in if particular_in is not None else self.particular.eval(b)
        pout, dpout = particular_out if particular_out is not None else self.u.eval(b)
        f, df = self.phi.eval(b)
        w, dw = self.v3.eval(b)
        det = df * w - f * dw
        c1 = (w * (dpout - dpin) - dw * (pout - pin)) / det
        c3 = (f * (dpout - dpin) - df * (pout - pin)) / det
        return c1, c3

    def C1_classical(self, b):
        """``C1`` for the representation ``C1 (v1 - v2) + B1``."""
        return self.coefficients(b)[0] + self.shift

    def crossing(self, b):
        """Marginal value at the threshold, ``C3(b) v3'(b) + u'(b)``."""
        _, c3 = self.coefficients(b)
        return c3 * self.v3.slope(b) + self.u.slope(b)

    def value(self, b: float, x):
        """``(V_b(x), V_b'(x))`` for scalar ``b``."""
        c1, c3 = self.coefficients(float(b))
        x = np.asarray(x, dtype=float)
        below = x < b
        val = np.empty_like(x)
        der = np.empty_like(x)
        if np.any(below):
            f, df = self.phi.eval(x[below])
            p, dp = self.particular.eval(x[below])
            val[below] = c1 * f + p
            der[below] = c1 * df + dp
        if np.any(~below):
            w, dw = self.v3.eval(x[~below])
            u, du = self.u.eval(x[~below])
            val[~below] = c3 * w + u
            der[~below] = c3 * dw + du
        if np.ndim(x) == 0:
            return val[()], der[()]
        return val, der

    def sampled_value(self, b: float) -> "PiecewiseValue":
        return PiecewiseValue.build(self, float(b))


@dataclass
class PiecewiseValue:
    """A threshold value function sampled on the grid, with slope access.

    Nodal values come from the matched representation.  Second derivatives
    are taken from the ODE on each side of the threshold, so Hermite
    interpolation inside the cell containing ``b`` is only C^1 accurate.
    """

    b: float
    c1: float
    c3: float
    samples: SampledSolution
    bound: float

    @classmethod
    def build(cls, basis: ThresholdBasis, b: float, bound: float | None = None) -> "PiecewiseValue":
        c1, c3 = basis.coefficients(b)
        n = basis.u.n
        g = np.empty(n + 1)
        dg = np.empty(n + 1)
        d2 = np.empty(n + 1)
        x = basis.u.x
        k = int(np.searchsorted(x, b, side="left"))
        f = basis.phi
        p = basis.particular
        g[:k] = c1 * f.g[:k] + p.g[:k]
        dg[:k] = c1 * f.dg[:k] + p.dg[:k]
        d2[:k] = c1 * f.d2g[:k] + p.d2g[:k]
        g[k:] = c3 * basis.v3.g[k:] + basis.u.g[k:]
        dg[k:] = c3 * basis.v3.dg[k:] + basis.u.dg[k:]
        d2[k:] = c3 * basis.v3.d2g[k:] + basis.u.d2g[k:]
        if bound is None:
            bound = basis.exterior_source / basis.rate
        return cls(b, float(c1), float(c3), SampledSolution(basis.grid.h, g, dg, d2), bound)

    @property
    def x(self):
        return self.samples.x

    @property
    def values(self):
        return self.samples.g

    def __call__(self, x):
        return self.samples(x)

    def eval(self, x):
        return self.samples.eval(x)


def abel_wronskian(ode: LinearOde, x: np.ndarray, w0: float) -> np.ndarray:
    a, b, _, _ = ode.coefficients(x)
    return w0 * np.exp(-cumulative_simpson(b / a, x=x, initial=0.0))


def variation_of_parameters(v1: SampledSolution, v2: SampledSolution, ode: LinearOde) -> SampledSolution:
    """Particular solution vanishing with its slope at 0, via cumulative Simpson quadrature."""
    n = min(v1.n, v2.n)
    x = v1.x[: n + 1]
    a, _, _, f = ode.coefficients(x)
    y1, y2 = v1.g[: n + 1], v2.g[: n + 1]
    d1, d2 = v1.dg[: n + 1], v2.dg[: n + 1]
    w = abel_wronskian(ode, x, float(y1[0] * d2[0] - y2[0] * d1[0]))
    src = f / a
    i1 = cumulative_simpson(y2 * src / w, x=x, initial=0.0)
    i2 = cumulative_simpson(y1 * src / w, x=x, initial=0.0)
    g = y1 * i1 - y2 * i2
    dg = d1 * i1 - d2 * i2
    return SampledSolution.from_values(v1.h, g, dg, ode)


@dataclass
class ExpThreshold:
    b_star: float
    crossing: CrossingResult
    cap: float
    b0: float | None


class ExpBasis(ThresholdBasis):
    """Basis for the exponential-discounting value at rate ``delta``."""

    def __init__(self, s: Scenario, grid: Grid | None = None, flat_tol: float | None = FLAT_TOL,
                 extend: bool = True):
        e = s.econ
        super().__init__(s, e.delta, e.Lambda, e.reward_emitting, grid, flat_tol, extend)

    @property
    def bound(self) -> float:
        return self.scenario.econ.value_bound


def build_exp_basis(s: Scenario, **kw) -> ExpBasis:
    return ExpBasis(s, **kw)


def exp_value_at(basis: ThresholdBasis, b: float, x):
    return basis.value(b, x)


def search_cap(basis: ThresholdBasis, step: float = SCAN_STEP):
    """Upper end of the threshold search and the point ``b0`` where it comes from.

    With negative net drift at 0 the cap is the first ``b`` with
    ``C1(b) + Lambda / (2 mu(0)) > 0``; otherwise, or when that point lies
    outside the interior range, the largest supported threshold.
    """
    s = basis.scenario
    hard = min(basis.b_max, basis.grid.x_max - 10.0)
    mu0 = float(s.net_drift(0.0))
    if mu0 >= 0:
        return hard, None
    bs = np.arange(0.0, hard + 0.5 * step, step)
    ok = basis.C1_classical(bs) + basis.interior_source / (2.0 * mu0) > 0
    if not np.any(ok):
        return hard, None
    b0 = float(bs[int(np.argmax(ok))])
    return min(hard, b0), b0


def threshold_exp(basis: ThresholdBasis, step: float = SCAN_STEP) -> ExpThreshold:
    """Optimal threshold: infimum of ``{b > 0 : C3(b) v3'(b) + u'(b) <= gamma - beta}``."""
    margin = basis.scenario.econ.margin
    cap, b0 = search_cap(basis, step)
    res = scan_crossings(basis.crossing, 0.0, cap, step, margin)
    if res.first is None and cap < basis.b_max:
        # the cap is only a sufficient bound; continue up to the interior range
        res = scan_crossings(basis.crossing, 0.0, basis.b_max, step, margin)
    if res.first is None:
        raise NoCrossingWithinBound(
            f"marginal value stays above {margin:.6g} on [0, {basis.b_max:.4g}]")
    return ExpThreshold(res.first, res, cap, b0)
