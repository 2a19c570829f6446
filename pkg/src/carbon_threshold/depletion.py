"""Depletion-time transform under a threshold strategy and its inversion.

``L(x; s) = E_x[exp(-s tau_b)]`` solves

    sigma^2/2 g'' + mu g' - s g = 0                  on (0, b),
    sigma^2/2 g'' + (mu - l_max) g' - s g = 0        on (b, inf),

with ``g(0) = 1``, boundedness and C^1 matching at ``b``.  Below ``b`` the
solution is ``zeta + C * phi`` with ``zeta`` a boundary-value solution with
``zeta(0) = 1`` and ``phi`` the initial-value solution with ``phi(0) = 0,
phi'(0) = 1``; above ``b`` it is ``A * w`` with ``w`` the decaying solution
normalised by ``w(b) = 1``.  The depletion probability ``P_x(tau_b <= t)`` is
the inverse transform of ``L(x; s) / s``.

Complex ``s`` (Talbot nodes have negative real part) is handled by the same
solvers.  The right end of the exterior problem is placed where the
unwanted fast mode has decayed by ``exp(-TAIL_DECAY)`` relative to the
wanted one, which also works after continuation to ``Re(s) < 0``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import InversionUnstable, TruncationTooSmall
from .model import Scenario
from .ode import Grid, LinearOde, solve_bvp, solve_ivp

TALBOT_M = 32
GAVER_N = 14
# Euler summation on the Bromwich line: discretisation error ~ exp(-EULER_A)
EULER_A = 18.4
EULER_N = 15
EULER_M = 11
# agreement demanded between the two inversion methods
CROSS_TOL = 1e-3
# h * |characteristic root| kept below this for the per-s solves
STEP_RESOLUTION = 0.05
# log of the suppression of the growing mode at the exterior cut
TAIL_DECAY = 34.0
MIN_TAIL = 20.0
INTERIOR_PAD = 5.0


def _local_roots(s: Scenario, x: np.ndarray, sval: complex, extra_drift: float):
    a = 0.5 * s.vol(x) ** 2
    mu = s.net_drift(x) - extra_drift
    d = np.sqrt(mu.astype(complex) ** 2 + 4 * a * sval)
    return a, mu, d


@dataclass
class TransformSolution:
    """Solution of the transform problem for one ``(b, s)``; evaluates ``L(x; s)`` for any ``x``."""

    b: float
    s: complex
    zeta: object | None
    phi: object | None
    w: object
    C: complex
    A: complex
    zeta_slope0: complex = 0.0

    def __call__(self, x):
        xq = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty(xq.shape, dtype=complex)
        below = xq < self.b
        if np.any(below):
            out[below] = self.zeta(xq[below]) + self.C * self.phi(xq[below])
        if np.any(~below):
            y = xq[~below] - self.b
            if np.any(y > self.w.x_end + 1e-9):
                raise TruncationTooSmall(f"x={float(np.max(xq)):.4g} beyond the exterior solve")
            out[~below] = self.A * self.w(y)
        return out[0] if np.ndim(x) == 0 else out

    @property
    def C4(self) -> complex:
        """Interior coefficient for ``v5 + C4 v4`` with ``v5(0) = v5'(0) = 1``, ``v4(0) = 0, v4'(0) = 1``."""
        return self.C + self.zeta_slope0 - 1.0


def _step_for(s: Scenario, sval: complex, x_hi: float, h0: float) -> float:
    xs = np.linspace(0.0, max(x_hi, 1.0), 64)
    a, mu, d = _local_roots(s, xs, sval, 0.0)
    a2, mu2, d2 = _local_roots(s, xs, sval, s.econ.l_max)
    scale = max(np.max((np.abs(mu) + np.abs(d)) / (2 * a)), np.max((np.abs(mu2) + np.abs(d2)) / (2 * a2)))
    h = min(h0, STEP_RESOLUTION / max(scale, 1e-12))
    # keep the node count of a unit interval an integer
    return 1.0 / math.ceil(1.0 / h)


def _exterior_length(s: Scenario, b: float, x: float, sval: complex, x_cap: float) -> float:
    """Length past ``max(x, b)`` that suppresses the fast mode by ``TAIL_DECAY``."""
    xs = np.linspace(b, x_cap, 256)
    a, _, d = _local_roots(s, xs, sval, s.econ.l_max)
    sep = np.real(d) / a
    # integrate the separation rate from max(x, b) outward
    start = max(x, b)
    mask = xs >= start
    if not np.any(mask) or np.any(sep[mask] <= 0):
        return x_cap - b
    xm, sm = xs[mask], sep[mask]
    acc = np.concatenate([[0.0], np.cumsum(0.5 * (sm[1:] + sm[:-1]) * np.diff(xm))])
    k = np.searchsorted(acc, TAIL_DECAY)
    end = xm[-1] if k >= xm.size else xm[k]
    return min(x_cap, max(end, start + MIN_TAIL)) - b


def solve_transform(s: Scenario, b: float, sval: complex, x_max: float | None = None,
                    h: float | None = None) -> TransformSolution:
    """Transform solution for threshold ``b`` at argument ``s``; valid for ``x`` up to ``x_max``."""
    b = max(float(b), 0.0)
    sval = complex(sval)
    x_cap = s.grid.x_max
    x_need = min(x_cap, s.x0 if x_max is None else float(x_max))
    h = h or _step_for(s, sval, max(x_need, b) + MIN_TAIL, s.grid.h)
    vol2 = lambda y: 0.5 * s.vol(y) ** 2

    length = _exterior_length(s, b, x_need, sval, x_cap)
    n_ext = max(8, int(math.ceil(length / h)))
    ext = LinearOde(lambda y: vol2(y + b), lambda y: s.net_drift(y + b) - s.econ.l_max, -sval)
    w = solve_bvp(ext, 1.0 + 0j, 0j, Grid(h, n_ext))
    dw_b = w.dg[0]

    if b == 0.0:
        return TransformSolution(0.0, sval, None, None, w, 0j, 1.0 + 0j)

    inner = LinearOde(vol2, s.net_drift, -sval)
    n_in = max(8, int(math.ceil((b + INTERIOR_PAD) / h)))
    zeta = solve_bvp(inner, 1.0 + 0j, 0j, Grid(h, n_in))
    phi = solve_ivp(inner, 0j, 1.0 + 0j, Grid(h, n_in), x_end=b + 2 * h)
    z, dz = zeta.eval(b)
    f, df = phi.eval(b)
    # zeta + C phi = A and zeta' + C phi' = A w'(b)
    C = (dw_b * z - dz) / (df - dw_b * f)
    A = z + C * f
    return TransformSolution(b, sval, zeta, phi, w, complex(C), complex(A), complex(zeta.dg[0]))


def laplace_transform(s: Scenario, b: float, x, sval) -> complex | np.ndarray:
    """``E_x[exp(-s tau_b)]``."""
    xm = float(np.max(np.atleast_1d(x)))
    val = solve_transform(s, b, sval, x_max=max(xm, s.x0))(x)
    if np.isrealobj(sval) or np.imag(sval) == 0:
        return np.real(val)
    return val


# -- inversion ---------------------------------------------------------------------

def talbot_nodes(t: float, M: int = TALBOT_M):
    """Fixed-Talbot nodes and weights: ``f(t) ~ sum Re(w_k F(s_k))``."""
    r = 2.0 * M / (5.0 * t)
    theta = np.arange(1, M) * np.pi / M
    cot = 1.0 / np.tan(theta)
    nodes = np.concatenate([[r + 0j], r * theta * (cot + 1j)])
    sigma = theta + (theta * cot - 1.0) * cot
    weights = np.concatenate([[0.5 * np.exp(r * t) + 0j],
                              np.exp(t * nodes[1:]) * (1.0 + 1j * sigma)]) * (r / M)
    return nodes, weights


def _stehfest_coefficients(n: int) -> list[Fraction]:
    half = n // 2
    out = []
    for k in range(1, n + 1):
        acc = Fraction(0)
        for j in range((k + 1) // 2, min(k, half) + 1):
            num = j**half * math.factorial(2 * j)
            den = (math.factorial(half - j) * math.factorial(j) * math.factorial(j - 1)
                   * math.factorial(k - j) * math.factorial(2 * j - k))
            acc += Fraction(num, den)
        out.append((-1) ** (k + half) * acc)
    return out


_STEHFEST = {}


def gaver_nodes(t: float, n: int = GAVER_N):
    if n not in _STEHFEST:
        _STEHFEST[n] = _stehfest_coefficients(n)
    ln2t = math.log(2.0) / t
    nodes = np.arange(1, n + 1) * ln2t
    return nodes, [float(v) * ln2t for v in _STEHFEST[n]]


def euler_nodes(t: float, a: float = EULER_A, n: int = EULER_N, m: int = EULER_M):
    """Nodes and weights of the Euler-accelerated trapezoidal Bromwich sum.

    The alternating series of trapezoidal terms is truncated by a binomial
    average of the partial sums ``n .. n + m``, which folds into one weight
    per node.
    """
    k = np.arange(n + m + 1)
    nodes = (a + 2j * np.pi * k) / (2.0 * t)
    base = math.exp(a / 2.0) / t * (-1.0) ** k
    base[0] *= 0.5
    avg = np.array([math.comb(m, j) for j in range(m + 1)], dtype=float) / 2.0**m
    tail = np.cumsum(avg[::-1])[::-1]  # share of the averaged partial sums containing each term
    c = np.ones(n + m + 1)
    c[n + 1:] = tail[1:]
    return nodes, base * c


@dataclass
class Inversion:
    value: float
    method: str
    talbot: float | None = None
    euler: float | None = None


class DepletionSolver:
    """Inverts ``L(x; s)/s`` for one scenario and threshold, caching per-``s`` solves."""

    def __init__(self, s: Scenario, b: float, x_max: float | None = None, workers: int = 1):
        self.scenario = s
        self.b = float(b)
        self.x_max = s.x0 if x_max is None else float(x_max)
        self.workers = max(1, int(workers))
        self._cache: dict[complex, TransformSolution] = {}

    def solution(self, sval: complex) -> TransformSolution:
        key = complex(sval)
        sol = self._cache.get(key)
        if sol is None:
            sol = solve_transform(self.scenario, self.b, key, self.x_max)
            self._cache[key] = sol
        return sol

    def _values(self, nodes, x: float) -> np.ndarray:
        def one(sv):
            return complex(self.solution(sv)(x)) / sv
        if self.workers > 1:
            with ThreadPoolExecutor(self.workers) as pool:
                vals = list(pool.map(one, nodes))
        else:
            vals = [one(sv) for sv in nodes]
        return np.array(vals)

    def talbot(self, x: float, t: float, M: int = TALBOT_M):
        nodes, weights = talbot_nodes(t, M)
        terms = np.real(weights * self._values(nodes, x))
        return math.fsum(terms), terms

    def euler(self, x: float, t: float) -> float:
        nodes, weights = euler_nodes(t)
        return math.fsum(np.real(weights * self._values(nodes, x)))

    def gaver(self, x: float, t: float, n: int = GAVER_N) -> float:
        """Gaver-Stehfest value; slow to converge for steep CDFs, kept as a diagnostic."""
        nodes, weights = gaver_nodes(t, n)
        vals = np.real(self._values(nodes.astype(complex), x))
        return math.fsum(w * v for w, v in zip(weights, vals))

    def cdf(self, x: float, t: float, cross_check: bool = True) -> Inversion:
        """``P_x(tau_b <= t)``: fixed Talbot, Euler summation as fallback and cross-check."""
        if t <= 0:
            raise ValueError("t must be positive")
        if x <= 0:
            return Inversion(1.0, "trivial", 1.0, 1.0)
        tal, terms = self.talbot(x, t)
        scale = max(1.0, float(np.max(np.abs(terms))))
        tail = float(np.sum(np.abs(terms[-4:])))
        talbot_ok = math.isfinite(tal) and -1e-6 <= tal <= 1 + 1e-6 and tail < 1e-8 * scale
        eul = self.euler(x, t) if (cross_check or not talbot_ok) else None
        if talbot_ok:
            if eul is not None and abs(eul - tal) > CROSS_TOL:
                raise InversionUnstable(f"Talbot {tal:.6g} and Euler {eul:.6g} disagree at t={t:g}")
            return Inversion(min(1.0, max(0.0, tal)), "talbot", tal, eul)
        if eul is None or not (math.isfinite(eul) and -CROSS_TOL <= eul <= 1 + CROSS_TOL):
            raise InversionUnstable(f"both inversions failed at t={t:g} (Talbot {tal:.6g}, Euler {eul})")
        if math.isfinite(tal) and abs(eul - tal) > CROSS_TOL:
            raise InversionUnstable(f"Talbot {tal:.6g} oscillates and disagrees with Euler {eul:.6g}")
        return Inversion(min(1.0, max(0.0, eul)), "euler", tal, eul)


def invert_to_cdf(s: Scenario, b: float, x: float, t: float, cross_check: bool = True) -> float:
    """Finite-time depletion probability ``psi_b(x; t)``."""
    return DepletionSolver(s, b, x_max=max(x, s.x0)).cdf(x, t, cross_check).value


@dataclass
class DepletionCurve:
    x: float
    b: float
    times: np.ndarray
    psi: np.ndarray
    methods: list = field(default_factory=list)
    mc_estimate: float | None = None
    mc_stderr: float | None = None
    mc_time: float | None = None

    def mc_agrees(self, k: float = 3.0, floor: float = 1e-4) -> bool | None:
        """Inversion and Monte Carlo within ``k`` standard errors (``floor`` guards a zero stderr)."""
        if self.mc_estimate is None:
            return None
        i = int(np.argmin(np.abs(self.times - self.mc_time)))
        return abs(self.psi[i] - self.mc_estimate) <= k * max(self.mc_stderr, floor)


def depletion_report(s: Scenario, b: float, x: float | None = None, horizon=None,
                     mc_paths: int = 0, seed: int = 0, workers: int = 1) -> DepletionCurve:
    """Depletion curve at the requested times with an optional Monte-Carlo check at the last one."""
    x = s.x0 if x is None else float(x)
    times = np.atleast_1d(np.asarray(s.horizon_T if horizon is None else horizon, dtype=float))
    solver = DepletionSolver(s, b, x_max=x, workers=workers)
    out = [solver.cdf(x, float(t)) for t in times]
    psi = np.array([o.value for o in out])
    curve = DepletionCurve(x, float(b), times, psi, [o.method for o in out])
    if mc_paths > 0:
        from .mc import mc_depletion_prob

        t_mc = float(times[-1])
        est = mc_depletion_prob(s, b, x, t_mc, mc_paths, seed)
        curve.mc_estimate, curve.mc_stderr, curve.mc_time = est.mean, est.stderr, t_mc
    return curve
