"""Closed forms for constant drift and volatility.

Everything is evaluated in multiprecision (``mpmath``).  The printed
representations subtract terms of size ``exp(theta*b)`` from each other, and
at large present-bias intensities that loses every double-precision digit.
Results are returned as Python floats (or complex for the Laplace
transform).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import mpmath as mp
import numpy as np

from .errors import InvariantViolation, NoCrossingWithinBound
from .roots import CrossingResult, scan_crossings

DEFAULT_DPS = 40
LAMBDA_EXP_CUTOFF = 1e-10


def roots(mu, sigma, rate):
    """Characteristic roots of ``sigma^2/2 g'' + mu g' - rate g = 0``.

    Returns ``(theta_plus, theta_minus)`` with solutions ``exp(theta_plus x)``
    and ``exp(-theta_minus x)``; both positive for ``rate > 0``.  Works for
    numpy scalars/arrays (real or complex) and mpmath numbers.
    """
    s2 = sigma * sigma
    if isinstance(rate, (mp.mpf, mp.mpc)) or isinstance(mu, mp.mpf):
        d = mp.sqrt(mu * mu + 2 * s2 * rate)
    else:
        d = np.sqrt(mu * mu + 2 * s2 * rate + 0j) if np.iscomplexobj(rate) else np.sqrt(mu * mu + 2 * s2 * rate)
    return (-mu + d) / s2, (mu + d) / s2


@dataclass(frozen=True)
class BrownianParams:
    mu: float          # net drift mu_bar - l_base
    sigma: float
    l_max: float
    delta: float
    margin: float      # gamma - beta
    Lambda: float
    lam: float = 0.0
    alpha: float = 1.0

    @classmethod
    def from_scenario(cls, s) -> "BrownianParams":
        if not s.diffusion.is_constant:
            raise InvariantViolation("closed forms need constant coefficients", s.diffusion.kind)
        e = s.econ
        return cls(float(s.net_drift(0.0)), s.diffusion.sigma, e.l_max, e.delta, e.margin, e.Lambda,
                   s.bias.lam, s.bias.alpha)

    @property
    def reward_emitting(self) -> float:
        return self.margin * self.l_max + self.Lambda


class BrownianModel:
    """Closed-form value functions, thresholds and transforms for one parameter set."""

    def __init__(self, params: BrownianParams, dps: int = DEFAULT_DPS):
        self.p = params
        self.dps = dps
        with mp.workdps(dps):
            P = params
            mu, sg, d = mp.mpf(P.mu), mp.mpf(P.sigma), mp.mpf(P.delta)
            self._mu, self._sg, self._delta = mu, sg, d
            self._s2 = sg * sg
            self._Lam = mp.mpf(P.Lambda)
            self._K = mp.mpf(P.margin) * P.l_max + self._Lam
            self._gbl = mp.mpf(P.margin) * P.l_max
            self.t1, self.t2 = roots(mu, sg, d)
            self.t3, self.t4 = roots(mu - P.l_max, sg, d)
            rq = mp.mpf(P.lam) + d
            self.u1, self.u2 = roots(mu, sg, rq)
            self.u3, self.u4 = roots(mu - P.l_max, sg, rq)
        self._coeff_cache = lru_cache(maxsize=4096)(self._coefficients)

    # -- exponential discounting ------------------------------------------------
    def I(self, b):
        """``(I1, I2, I3, I4)`` at threshold ``b``."""
        with mp.workdps(self._prec(b)):
            b = mp.mpf(b)
            t1, t2, t3, t4, s2 = self.t1, self.t2, self.t3, self.t4, self._s2
            e1, e2, e4 = mp.exp(t1 * b), mp.exp(-t2 * b), mp.exp(-t4 * b)
            den = (t1 + t4) * e1 + (t2 - t4) * e2
            I1 = (2 * (t2 * (t1 + t4) * e1 + t1 * (t4 - t2) * e2 - t4 * (t1 + t2))
                  / (s2 * t1 * t2 * (t1 + t2)) + 2 / (s2 * t3)) / den
            I2 = (2 * self._gbl / (s2 * t3)) / den
            I3 = (2 * (e1 - e2) / (s2 * (t1 + t2)) + 2 * e4 / (s2 * (t3 + t4))
                  - (t1 * e1 + t2 * e2) * I1) / (t4 * e4)
            I4 = (2 * self._gbl * e4 / (s2 * (t3 + t4)) - (t1 * e1 + t2 * e2) * I2) / (t4 * e4)
            return I1, I2, I3, I4

    def K(self, b):
        I1, I2, I3, I4 = self.I(b)
        return I1 * self._Lam + I2, I3 * self._Lam + I4

    def M(self, b):
        """Coefficients of the exponential value in its exponential-sum form."""
        with mp.workdps(self._prec(b)):
            K1, K4 = self.K(b)
            t1, t2, t3, t4, s2 = self.t1, self.t2, self.t3, self.t4, self._s2
            L, K = self._Lam, self._K
            M1 = K1 - 2 * L / s2 / (t1 * (t1 + t2))
            M2 = -K1 - 2 * L / s2 / (t2 * (t1 + t2))
            M3 = 2 * L / (s2 * t1 * t2)
            M4 = K4 - 2 * K / s2 / (t4 * (t3 + t4))
            M5 = 2 * K / (s2 * t3 * t4)
            return M1, M2, M3, M4, M5

    def _exp_mp(self, b, x):
        with mp.workdps(self._prec(b)):
            b, x = mp.mpf(b), mp.mpf(x)
            t1, t2, t3, t4, s2 = self.t1, self.t2, self.t3, self.t4, self._s2
            I1, I2, I3, I4 = self.I(b)
            L, gbl = self._Lam, self._gbl
            if x < b:
                e1, e2 = mp.exp(t1 * x), mp.exp(-t2 * x)
                v = ((e1 - e2) * I1 - 2 / s2 * (e1 - 1) / (t1 * (t1 + t2))
                     + 2 / s2 * (1 - e2) / (t2 * (t1 + t2))) * L + (e1 - e2) * I2
                dv = ((t1 * e1 + t2 * e2) * I1 - 2 / s2 * e1 / (t1 + t2)
                      + 2 / s2 * e2 / (t1 + t2)) * L + (t1 * e1 + t2 * e2) * I2
            else:
                e4 = mp.exp(-t4 * x)
                c34 = 2 / (s2 * t3 * (t3 + t4))
                v = (e4 * I3 + c34 + 2 / s2 * (1 - e4) / (t4 * (t3 + t4))) * L \
                    + e4 * I4 + gbl * c34 + 2 * gbl / s2 * (1 - e4) / (t4 * (t3 + t4))
                dv = (-t4 * e4 * I3 + 2 / s2 * e4 / (t3 + t4)) * L - t4 * e4 * I4 \
                    + 2 * gbl / s2 * e4 / (t3 + t4)
            return v, dv

    def exp_value(self, b, x):
        """``(V_b^E(x), V_b^E'(x))`` as floats."""
        v, dv = self._exp_mp(b, x)
        return float(v), float(dv)

    def exp_crossing(self, b) -> float:
        """Marginal value at the threshold, ``V_b^E'(b)`` from the upper branch."""
        return self.exp_value(b, b)[1]

    def exp_threshold(self, step: float = 0.01, upper: float = 400.0, chunk: float = 5.0) -> CrossingResult:
        """Smallest ``b`` with ``V_b^E'(b) <= gamma - beta``, scanning chunk by chunk."""
        lo, changes = 0.0, []
        while lo < upper:
            hi = min(upper, lo + chunk)
            res = scan_crossings(np.vectorize(self.exp_crossing), lo, hi, step, self.p.margin,
                                 scalar_fn=self.exp_crossing)
            changes += res.sign_changes
            if res.first is not None:
                res.sign_changes = sorted(set(changes))
                res.holds_at_zero = res.holds_at_zero and lo == 0.0
                return res
            lo = hi
        raise NoCrossingWithinBound(f"no exponential threshold below {upper}")

    def _prec(self, b) -> int:
        grow = max(float(self.t1), float(self.u1)) * abs(float(b))
        return self.dps + int(grow / 2.3)

    # -- quasi-hyperbolic discounting ------------------------------------------
    def _coefficients(self, b):
        with mp.workdps(self._prec(b)):
            b = mp.mpf(b)
            M1, M2, M3, M4, M5 = self.M(b)
            P3b, dP3b = self._P3(b, b, (M1, M2, M3))
            P5b, dP5b = self._P5(b, b, (M4, M5))
            u1, u2, u4 = self.u1, self.u2, self.u4
            den = (u1 + u4) * mp.exp(u1 * b) + (u2 - u4) * mp.exp(-u2 * b)
            N1 = (u4 * (P5b - P3b) + dP5b - dP3b) / den
            N4 = (N1 * (mp.exp(u1 * b) - mp.exp(-u2 * b)) + P3b - P5b) / mp.exp(-u4 * b)
            return (M1, M2, M3, M4, M5), N1, N4

    def _P3(self, x, b, M):
        M1, M2, M3 = M
        t1, t2, u1, u2, s2 = self.t1, self.t2, self.u1, self.u2, self._s2
        L, la = self._Lam, mp.mpf(self.p.lam) * self.p.alpha
        eu1, eu2, e1, e2 = mp.exp(u1 * x), mp.exp(-u2 * x), mp.exp(t1 * x), mp.exp(-t2 * x)
        c = 2 * la / (s2 * (u1 + u2))
        A = M1 / (u1 - t1) + M2 / (u1 + t2) + M3 / u1
        B = M1 / (t1 + u2) + M2 / (u2 - t2) + M3 / u2
        C = M1 / (u1 - t1) + M1 / (t1 + u2)
        D = M2 / (u1 + t2) + M2 / (u2 - t2)
        v = (-2 * L / s2 * (eu1 - 1) / (u1 * (u1 + u2)) + 2 * L / s2 * (1 - eu2) / (u2 * (u1 + u2))
             + 2 * la / (s2 * u1 * u2) * M3 - c * (A * eu1 + B * eu2) + c * (C * e1 + D * e2))
        dv = (2 * L / (s2 * (u1 + u2)) * (-eu1 + eu2)
              - c * (u1 * M1 / (u1 - t1) + u1 * M2 / (u1 + t2) + M3) * eu1
              + c * (u2 * M1 / (t1 + u2) + u2 * M2 / (u2 - t2) + M3) * eu2
              + c * (C * t1 * e1 - D * t2 * e2))
        return v, dv

    def _P5(self, x, b, M):
        M4, M5 = M
        t4, u3, u4, s2 = self.t4, self.u3, self.u4, self._s2
        K, la = self._K, mp.mpf(self.p.lam) * self.p.alpha
        eu4, e4 = mp.exp(-u4 * x), mp.exp(-t4 * x)
        c = 2 * la / (s2 * (u3 + u4))
        v = (2 * K / s2 / (u3 * (u3 + u4)) + 2 * K / s2 * (1 - eu4) / (u4 * (u3 + u4))
             + 2 * la / (s2 * u3 * u4) * M5 - c * (M4 / (u4 - t4) + M5 / u4) * eu4
             + c * (M4 / (u3 + t4) + M4 / (u4 - t4)) * e4)
        dv = (2 * K / (s2 * (u3 + u4)) * eu4 + c * (u4 * M4 / (u4 - t4) + M5) * eu4
              - c * (M4 / (u3 + t4) + M4 / (u4 - t4)) * t4 * e4)
        return v, dv

    def P3(self, x, b):
        with mp.workdps(self._prec(b)):
            return tuple(float(t) for t in self._P3(mp.mpf(x), b, self.M(b)[:3]))

    def P5(self, x, b):
        with mp.workdps(self._prec(b)):
            return tuple(float(t) for t in self._P5(mp.mpf(x), b, self.M(b)[3:]))

    def N(self, b):
        _, N1, N4 = self._coeff_cache(float(b))
        return float(N1), float(N4)

    def _biased(self) -> bool:
        return self.p.lam >= LAMBDA_EXP_CUTOFF and self.p.alpha != 1.0

    def qh_value(self, b, x):
        """``(V_b(x), V_b'(x))`` of the equilibrium value for threshold ``b``."""
        if not self._biased():
            return self.exp_value(b, x)
        with mp.workdps(self._prec(b)):
            M, N1, N4 = self._coeff_cache(float(b))
            x = mp.mpf(x)
            if x < b:
                P, dP = self._P3(x, b, M[:3])
                v = N1 * (mp.exp(self.u1 * x) - mp.exp(-self.u2 * x)) + P
                dv = N1 * (self.u1 * mp.exp(self.u1 * x) + self.u2 * mp.exp(-self.u2 * x)) + dP
            else:
                P, dP = self._P5(x, b, M[3:])
                v = N4 * mp.exp(-self.u4 * x) + P
                dv = -self.u4 * N4 * mp.exp(-self.u4 * x) + dP
            return float(v), float(dv)

    def qh_crossing(self, b) -> float:
        return self.qh_value(b, b)[1]

    def qh_threshold(self, step: float = 0.02, upper: float | None = None) -> CrossingResult:
        """Infimum root of ``V_b'(b) = gamma - beta`` and all sign changes up to ``upper``.

        ``upper`` defaults to the exponential threshold, which bounds the
        equilibrium threshold from above.
        """
        if not self._biased():
            return self.exp_threshold()
        if upper is None:
            upper = self.exp_threshold().first
        if upper == 0.0:
            return CrossingResult(first=0.0, sign_changes=[], holds_at_zero=True)
        res = scan_crossings(np.vectorize(self.qh_crossing), 0.0, upper, step, self.p.margin,
                             scalar_fn=self.qh_crossing)
        if res.first is None:
            res.first = float(upper)
        return res

    # -- depletion transform ---------------------------------------------------
    def laplace(self, b, x, s):
        """``E_x[exp(-s tau_b)]`` for complex or real ``s``."""
        with mp.workdps(self.dps):
            s = mp.mpmathify(s)
            b, x = mp.mpf(b), mp.mpf(x)
            r1, r2 = roots(self._mu, self._sg, s)
            _, r4 = roots(self._mu - self.p.l_max, self._sg, s)
            if b <= 0:
                val = mp.exp(-r4 * x)
            else:
                e1, e2 = mp.exp(r1 * b), mp.exp(-r2 * b)
                A = -(r4 - r2) * e2 / ((r1 + r4) * e1 - (r4 - r2) * e2)
                if x < b:
                    val = A * mp.exp(r1 * x) + (1 - A) * mp.exp(-r2 * x)
                else:
                    val = (A * e1 + (1 - A) * e2) * mp.exp(-r4 * (x - b))
            return complex(val) if isinstance(val, mp.mpc) and val.imag != 0 else float(mp.re(val))

    def depletion_prob(self, b, x, t, method: str = "talbot") -> float:
        """``P_x(tau_b <= t)`` by multiprecision inversion (oracle only)."""
        with mp.workdps(self.dps):
            def F(s):
                s = mp.mpmathify(s)
                r1, r2 = roots(self._mu, self._sg, s)
                _, r4 = roots(self._mu - self.p.l_max, self._sg, s)
                bb, xx = mp.mpf(b), mp.mpf(x)
                if bb <= 0:
                    return mp.exp(-r4 * xx) / s
                e1, e2 = mp.exp(r1 * bb), mp.exp(-r2 * bb)
                A = -(r4 - r2) * e2 / ((r1 + r4) * e1 - (r4 - r2) * e2)
                if xx < bb:
                    return (A * mp.exp(r1 * xx) + (1 - A) * mp.exp(-r2 * xx)) / s
                return (A * e1 + (1 - A) * e2) * mp.exp(-r4 * (xx - bb)) / s
            return float(mp.invertlaplace(F, t, method=method))


def from_scenario(s, dps: int = DEFAULT_DPS) -> BrownianModel:
    return BrownianModel(BrownianParams.from_scenario(s), dps)
