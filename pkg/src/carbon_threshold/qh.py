"""Equilibrium value and threshold under stochastic quasi-hyperbolic discounting.

For threshold ``b`` the equilibrium value solves, below and above ``b``,

    sigma^2/2 g'' + mu g' - (lambda + delta) g + Lambda + lambda*alpha*V_b^E = 0,
    sigma^2/2 g'' + (mu - l_max) g' - (lambda + delta) g + K + lambda*alpha*V_b^E = 0,

with ``g(0) = 0``, boundedness and C^1 matching at ``b``.  Since the operator
at rate ``lambda + delta`` is the rate-``delta`` operator minus ``lambda``,
``alpha * V_b^E`` plus ``(1 - alpha)`` times the rate-``(lambda + delta)``
particular solutions is a particular solution of each branch, for every
``b`` at once.  The threshold scan therefore needs no per-``b`` differential
solves: only the homogeneous matching is redone.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .brownian import LAMBDA_EXP_CUTOFF
from .errors import NoCrossingWithinBound, SandwichViolation
from .exp_value import (
    ExpBasis,
    PiecewiseValue,
    ThresholdBasis,
    exterior_ode,
    threshold_exp,
    variation_of_parameters,
)
from .model import Scenario
from .ode import LinearOde, SampledSolution, solve_bvp
from .roots import CrossingResult, scan_crossings

SCAN_STEP = 0.02
SANDWICH_TOL = 1e-6


class QhBasis:
    """Threshold-independent pieces at rate ``lambda + delta`` plus the exponential basis."""

    def __init__(self, s: Scenario, exp_basis: ExpBasis | None = None):
        self.scenario = s
        self.exp = exp_basis if exp_basis is not None else ExpBasis(s)
        e, bias = s.econ, s.bias
        self.lam, self.alpha = bias.lam, bias.alpha
        self.degenerate = self.lam < LAMBDA_EXP_CUTOFF
        if self.degenerate:
            self.bar = self.exp
        else:
            self.bar = ThresholdBasis(s, self.lam + e.delta, e.Lambda, e.reward_emitting, self.exp.grid)
            if self.bar.grid.n != self.exp.grid.n:
                self.exp = ExpBasis(s, grid=self.bar.grid)

    @property
    def unbiased(self) -> bool:
        return self.degenerate or self.alpha == 1.0

    @property
    def v3(self) -> SampledSolution:
        return self.bar.v3

    @property
    def b_max(self) -> float:
        return min(self.exp.b_max, self.bar.b_max)

    @property
    def bound(self) -> float:
        return self.scenario.qh_bound

    def _particulars(self, b):
        """Values and slopes at ``b`` of the interior and exterior particular solutions."""
        a = self.alpha
        E, Q = self.exp, self.bar
        c1e, c3e = E.coefficients(b)
        f, df = E.phi.eval(b)
        p, dp = E.particular.eval(b)
        w, dw = E.v3.eval(b)
        u, du = E.u.eval(b)
        pq, dpq = Q.particular.eval(b)
        uq, duq = Q.u.eval(b)
        pin = (a * (c1e * f + p) + (1 - a) * pq, a * (c1e * df + dp) + (1 - a) * dpq)
        pout = (a * (c3e * w + u) + (1 - a) * uq, a * (c3e * dw + du) + (1 - a) * duq)
        return pin, pout, (c1e, c3e)

    def coefficients(self, b):
        """``(C1bar, C3bar)`` in the stable normalisation, plus the exponential ``(C1, C3)``."""
        if self.unbiased:
            c = self.exp.coefficients(b)
            return np.zeros_like(c[0]), np.zeros_like(c[1]), c
        pin, pout, ce = self._particulars(b)
        c1, c3 = self.bar.coefficients(b, pin, pout)
        return c1, c3, ce

    def crossing(self, b):
        """Marginal equilibrium value at the threshold, ``C3bar v3bar'(b) + ubar_b'(b)``."""
        if self.unbiased:
            return self.exp.crossing(b)
        pin, pout, _ = self._particulars(b)
        _, c3 = self.bar.coefficients(b, pin, pout)
        return c3 * self.bar.v3.slope(b) + pout[1]

    def value(self, b: float, x):
        """``(V_b(x), V_b'(x))``."""
        if self.unbiased:
            return self.exp.value(b, x)
        a = self.alpha
        c1, c3, _ = self.coefficients(float(b))
        scalar = np.ndim(x) == 0
        x = np.atleast_1d(np.asarray(x, dtype=float))
        ve, dve = self.exp.value(b, x)
        below = x < b
        val = a * np.asarray(ve, dtype=float)
        der = a * np.asarray(dve, dtype=float)
        Q = self.bar
        if np.any(below):
            f, df = Q.phi.eval(x[below])
            p, dp = Q.particular.eval(x[below])
            val[below] += c1 * f + (1 - a) * p
            der[below] += c1 * df + (1 - a) * dp
        if np.any(~below):
            w, dw = Q.v3.eval(x[~below])
            u, du = Q.u.eval(x[~below])
            val[~below] += c3 * w + (1 - a) * u
            der[~below] += c3 * dw + (1 - a) * du
        if scalar:
            return val[0], der[0]
        return val, der

    def sampled_value(self, b: float) -> PiecewiseValue:
        b = float(b)
        ve = PiecewiseValue.build(self.exp, b)
        if self.unbiased:
            return ve
        a = self.alpha
        qe = PiecewiseValue.build(self.bar, b)
        c1, c3, _ = self.coefficients(b)
        samples = SampledSolution(self.exp.grid.h, a * ve.samples.g + (1 - a) * qe.samples.g,
                                  a * ve.samples.dg + (1 - a) * qe.samples.dg,
                                  a * ve.samples.d2g + (1 - a) * qe.samples.d2g)
        return PiecewiseValue(b, float(c1), float(c3), samples, self.bound)

    # -- classical representation --------------------------------------------------
    def classical_particulars(self, b: float):
        """Interior ``B1bar(.; b)`` and exterior ``ubar_b`` as separate differential solves.

        ``ubar_b`` solves the exterior equation on the whole half-line with the
        source built from ``V_b^E`` at the same threshold, ``ubar_b(0) = 0``,
        and tends to ``(lambda alpha + delta)/(lambda + delta) * K / delta``.
        It and ``B1bar`` are only needed to report coefficients in the
        classical form; the threshold search does not use them.
        """
        s, a, lam = self.scenario, self.alpha, self.lam
        ve = PiecewiseValue.build(self.exp, float(b))
        rate = lam + s.econ.delta
        src_out = lambda x: s.econ.reward_emitting + lam * a * ve(x)
        ode_out = exterior_ode(s, rate, src_out)
        far = (lam * a + s.econ.delta) / rate * s.econ.value_bound
        ubar = solve_bvp(ode_out, 0.0, far, self.exp.grid, far_field=True)
        Q = self.bar
        ode_in = LinearOde(Q.ode_in.a, Q.ode_in.b, Q.ode_in.c, lambda x: s.econ.Lambda + lam * a * ve(x))
        b1 = variation_of_parameters(Q.v1, Q.v2, ode_in)
        return b1, ubar

    def classical_coefficients(self, b: float):
        """``(C1bar, C3bar)`` for ``V_b = C1bar (v1bar - v2bar) + B1bar`` below and ``C3bar v3bar + ubar_b`` above."""
        b1, ubar = self.classical_particulars(b)
        c1, c3, _ = self.coefficients(float(b))
        vb, dvb = self.value(b, b)
        c3_classical = (vb - ubar(b)) / self.bar.v3(b)
        # slope of the stable interior particular at 0 fixes the shift to B1bar
        val_small = self.value(b, 0.0)[1]
        c1_classical = (val_small - b1.dg[0]) / 2.0
        return c1_classical, c3_classical


@dataclass
class QhThreshold:
    b_star: float
    b_star_E: float
    crossing: CrossingResult

    @property
    def roots(self) -> list:
        return self.crossing.sign_changes


def build_qh_basis(s: Scenario, exp_basis: ExpBasis | None = None) -> QhBasis:
    return QhBasis(s, exp_basis)


def qh_value_for_threshold(qb: QhBasis, b: float, check: bool = True) -> PiecewiseValue:
    """Sampled equilibrium value for threshold ``b``; optionally asserts the sandwich bounds."""
    v = qb.sampled_value(b)
    if check and not qb.unbiased:
        check_sandwich(qb, b, v)
    return v


def check_sandwich(qb: QhBasis, b: float, v: PiecewiseValue | None = None, tol: float = SANDWICH_TOL):
    v = v or qb.sampled_value(b)
    ve = PiecewiseValue.build(qb.exp, float(b))
    slack = tol * qb.exp.bound
    lo = qb.alpha * ve.values - v.values
    hi = v.values - ve.values
    worst = max(float(np.max(lo)), float(np.max(hi)))
    if worst > slack:
        i = int(np.argmax(np.maximum(lo, hi)))
        raise SandwichViolation(f"sandwich bound violated by {worst:.3g} at x={v.x[i]:.4g} for b={b:.6g}")
    return worst


def equilibrium_threshold(qb: QhBasis, step: float = SCAN_STEP, exp_threshold=None,
                          roots_upper: float | None = None) -> QhThreshold:
    """Equilibrium threshold ``b* = inf{b > 0 : marginal value at b <= gamma - beta}``.

    The search is capped at the exponential threshold.  Every sign change of
    the marginal-value condition on ``[0, roots_upper]`` is reported as well
    (``roots_upper`` defaults to the cap).
    """
    et = exp_threshold or threshold_exp(qb.exp)
    b_e = et.b_star
    if qb.unbiased:
        return QhThreshold(b_e, b_e, et.crossing)
    margin = qb.scenario.econ.margin
    if b_e == 0.0:
        return QhThreshold(0.0, 0.0, CrossingResult(first=0.0, holds_at_zero=True))
    upper = b_e if roots_upper is None else max(b_e, min(roots_upper, qb.b_max))
    res = scan_crossings(qb.crossing, 0.0, upper, step, margin)
    first = res.first
    if first is None or first > b_e:
        if qb.crossing(np.array([b_e]))[0] - margin <= 1e-9:
            first = b_e
        else:
            raise NoCrossingWithinBound(f"no equilibrium threshold below b*_E={b_e:.6g}")
    res.first = first
    return QhThreshold(first, b_e, res)
