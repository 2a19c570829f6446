"""Monte-Carlo simulation of the controlled budget under a threshold strategy.

Euler-Maruyama with drift ``mu(X) - l_max 1{X >= b}`` and volatility
``sigma(X)``.  Normals come from a counter-based generator keyed by
``(seed, stream, path, step)``, so every path is reproducible on its own:
results do not depend on the number of workers or on chunking, and two runs
with different thresholds but the same seed share the noise sequence.

Absorption is located by linear interpolation inside the step.  An optional
Brownian-bridge test also catches excursions below zero between grid
points.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _accel
from ._accel import HAVE_NUMBA, njit, prange
from .model import OU, CONSTANT, Scenario

DEFAULT_DT = 1.0 / 365.0
# horizon for the discounted objectives; the neglected tail is reported as a bracket
DEFAULT_T_MAX = 200.0
CHUNK = 65536

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_STEP = np.uint64(0xD1B54A32D192ED03)
_TWO53 = 1.0 / 9007199254740992.0

NOISE, WAIT, BRIDGE = 1, 2, 3


@njit(cache=True)
def _splitmix(z):
    z = z + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _splitmix_np(z):
    z = z + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def stream_key(seed: int, stream: int) -> np.uint64:
    with np.errstate(over="ignore"):
        k = _splitmix_np(np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64))
        return _splitmix_np(k ^ np.uint64(stream))[0]


def path_keys(key: np.uint64, paths: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        return _splitmix_np(np.asarray(paths, dtype=np.uint64) * _STEP + key)


def _uniform_np(pkeys, counter: int):
    with np.errstate(over="ignore"):
        z = _splitmix_np(pkeys + np.uint64(counter) * _GOLDEN)
    return ((z >> np.uint64(11)).astype(np.float64) + 1.0) * _TWO53


@njit(cache=True)
def _uniform(pkey, counter):
    z = _splitmix(pkey + np.uint64(counter) * np.uint64(0x9E3779B97F4A7C15))
    return (np.float64(z >> np.uint64(11)) + 1.0) * 1.1102230246251565e-16


def normals_np(pkeys: np.ndarray, step: int) -> np.ndarray:
    """Standard normals for one step of every path (Box-Muller pairs over consecutive steps)."""
    pair = step >> 1
    u1 = _uniform_np(pkeys, 2 * pair)
    u2 = _uniform_np(pkeys, 2 * pair + 1)
    r = np.sqrt(-2.0 * np.log(u1))
    return r * (np.cos if step % 2 == 0 else np.sin)(2.0 * np.pi * u2)


@dataclass(frozen=True)
class Coefficients:
    """Net drift and volatility as affine functions or a uniform table."""

    d0: float
    d1: float
    v0: float
    v1: float
    table_h: float = 0.0
    table_mu: np.ndarray = np.zeros(1)
    table_sig: np.ndarray = np.zeros(1)

    @property
    def tabulated(self) -> bool:
        return self.table_h > 0.0

    @classmethod
    def from_scenario(cls, s: Scenario, h: float = 0.01) -> "Coefficients":
        d, l_base = s.diffusion, s.econ.l_base
        if d.kind == CONSTANT:
            return cls(d.mu_bar - l_base, 0.0, d.sigma, 0.0)
        if d.kind == OU:
            return cls(d.kappa * d.theta_level - l_base, -d.kappa, d.sigma0, d.sigma1)
        x = np.arange(int(round(s.grid.x_max / h)) + 1) * h
        return cls(0.0, 0.0, 0.0, 0.0, h, np.ascontiguousarray(s.net_drift(x), dtype=float),
                   np.ascontiguousarray(s.vol(x), dtype=float))

    def drift_vol(self, x):
        if not self.tabulated:
            return self.d0 + self.d1 * x, self.v0 + self.v1 * x
        return (np.interp(x, np.arange(self.table_mu.size) * self.table_h, self.table_mu),
                np.interp(x, np.arange(self.table_sig.size) * self.table_h, self.table_sig))


@dataclass(frozen=True)
class RunSpec:
    x0: float
    b: float
    dt: float
    n_steps: int
    l_max: float
    delta: float
    reward_below: float
    reward_above: float
    lam: float = 0.0
    bridge: bool = False


@njit(cache=True)
def _coef(x, d0, d1, v0, v1, th, tmu, tsig):
    if th <= 0.0:
        return d0 + d1 * x, v0 + v1 * x
    u = x / th
    if u <= 0.0:
        return tmu[0], tsig[0]
    last = tmu.shape[0] - 1
    if u >= last:
        return tmu[last], tsig[last]
    i = int(u)
    w = u - i
    return tmu[i] * (1 - w) + tmu[i + 1] * w, tsig[i] * (1 - w) + tsig[i + 1] * w


def _kernel_body(first, n, key_noise, key_wait, key_bridge, x0, b, dt, n_steps, l_max, delta,
                 r_lo, r_hi, lam, bridge, d0, d1, v0, v1, th, tmu, tsig, tau, reward, x_stop, eta_out):
    sq = math.sqrt(dt)
    disc_step = math.exp(-delta * dt)
    step_int = (1.0 - disc_step) / delta
    for k in prange(n):
        p = np.uint64(first + k)
        kn = _splitmix(p * np.uint64(0xD1B54A32D192ED03) + key_noise)
        eta = np.inf
        if lam > 0.0:
            kw = _splitmix(p * np.uint64(0xD1B54A32D192ED03) + key_wait)
            eta = -math.log(_uniform(kw, 0)) / lam
        kb = _splitmix(p * np.uint64(0xD1B54A32D192ED03) + key_bridge)
        x = x0
        disc = 1.0
        acc = 0.0
        t_stop = np.inf
        z1 = 0.0
        x_end = x0
        for i in range(n_steps):
            t = i * dt
            emit = x >= b
            rate = r_hi if emit else r_lo
            if eta < t + dt:
                frac = (eta - t) / dt
                acc += rate * disc * (1.0 - math.exp(-delta * (eta - t))) / delta
                if i % 2 == 0:
                    u1 = _uniform(kn, i)
                    u2 = _uniform(kn, i + 1)
                    rr = math.sqrt(-2.0 * math.log(u1))
                    z = rr * math.cos(2.0 * math.pi * u2)
                else:
                    z = z1
                mu, sg = _coef(x, d0, d1, v0, v1, th, tmu, tsig)
                if emit:
                    mu -= l_max
                xn = x + mu * dt + sg * sq * z
                x_end = x + frac * (xn - x)
                if x_end <= 0.0:
                    # absorbed before the waiting time ends
                    f0 = x / (x - xn)
                    acc -= rate * disc * (math.exp(-delta * f0 * dt) - math.exp(-delta * (eta - t))) / delta
                    t_stop = t + f0 * dt
                    x_end = 0.0
                    eta = np.inf
                break
            if i % 2 == 0:
                u1 = _uniform(kn, i)
                u2 = _uniform(kn, i + 1)
                rr = math.sqrt(-2.0 * math.log(u1))
                z = rr * math.cos(2.0 * math.pi * u2)
                z1 = rr * math.sin(2.0 * math.pi * u2)
            else:
                z = z1
            mu, sg = _coef(x, d0, d1, v0, v1, th, tmu, tsig)
            if emit:
                mu -= l_max
            xn = x + mu * dt + sg * sq * z
            if xn <= 0.0:
                f0 = x / (x - xn)
                acc += rate * disc * (1.0 - math.exp(-delta * f0 * dt)) / delta
                t_stop = t + f0 * dt
                x_end = 0.0
                break
            if bridge:
                pc = math.exp(-2.0 * x * xn / (sg * sg * dt))
                if _uniform(kb, i) < pc:
                    # crossing between grid points; place it mid-step
                    acc += rate * disc * (1.0 - math.exp(-delta * 0.5 * dt)) / delta
                    t_stop = t + 0.5 * dt
                    x_end = 0.0
                    break
            acc += rate * disc * step_int
            disc *= disc_step
            x = xn
            x_end = xn
        tau[k] = t_stop
        reward[k] = acc
        x_stop[k] = x_end
        eta_out[k] = eta


_mc_kernel = njit(parallel=True, cache=True)(_kernel_body) if HAVE_NUMBA else None


def _run_numba(spec: RunSpec, coef: Coefficients, seed: int, first: int, n: int):
    tau = np.empty(n)
    reward = np.empty(n)
    x_stop = np.empty(n)
    eta = np.empty(n)
    _mc_kernel(first, n, stream_key(seed, NOISE), stream_key(seed, WAIT), stream_key(seed, BRIDGE),
               float(spec.x0), float(spec.b), float(spec.dt), int(spec.n_steps), float(spec.l_max),
               float(spec.delta), float(spec.reward_below), float(spec.reward_above), float(spec.lam),
               bool(spec.bridge), coef.d0, coef.d1, coef.v0, coef.v1, coef.table_h,
               np.ascontiguousarray(coef.table_mu, dtype=float),
               np.ascontiguousarray(coef.table_sig, dtype=float), tau, reward, x_stop, eta)
    return tau, reward, x_stop, eta


def _run_numpy(spec: RunSpec, coef: Coefficients, seed: int, first: int, n: int):
    """Vectorised over paths; the active set shrinks as paths stop."""
    paths = np.arange(first, first + n, dtype=np.uint64)
    kn = path_keys(stream_key(seed, NOISE), paths)
    kb = path_keys(stream_key(seed, BRIDGE), paths)
    if spec.lam > 0:
        eta = -np.log(_uniform_np(path_keys(stream_key(seed, WAIT), paths), 0)) / spec.lam
    else:
        eta = np.full(n, np.inf)
    dt, delta = spec.dt, spec.delta
    sq = math.sqrt(dt)
    disc_step = math.exp(-delta * dt)
    step_int = (1.0 - disc_step) / delta
    tau = np.full(n, np.inf)
    reward = np.zeros(n)
    x_stop = np.full(n, float(spec.x0))
    eta_out = eta.copy()
    idx = np.arange(n)
    x = np.full(n, float(spec.x0))
    disc = 1.0
    for i in range(spec.n_steps):
        if idx.size == 0:
            break
        t = i * dt
        emit = x >= spec.b
        rate = np.where(emit, spec.reward_above, spec.reward_below)
        z = normals_np(kn[idx], i)
        mu, sg = coef.drift_vol(x)
        mu = mu - spec.l_max * emit
        xn = x + mu * dt + sg * sq * z
        stop = np.zeros(idx.size, dtype=bool)

        wait = eta[idx] < t + dt
        if np.any(wait):
            e = eta[idx][wait]
            frac = (e - t) / dt
            xw, xnw, rw = x[wait], xn[wait], rate[wait]
            xe = xw + frac * (xnw - xw)
            add = rw * disc * (1.0 - np.exp(-delta * (e - t))) / delta
            dead = xe <= 0
            f0 = np.where(dead, xw / np.where(dead, xw - xnw, 1.0), 0.0)
            add = np.where(dead, add - rw * disc * (np.exp(-delta * f0 * dt) - np.exp(-delta * (e - t))) / delta, add)
            j = idx[wait]
            reward[j] += add
            x_stop[j] = np.where(dead, 0.0, xe)
            tau[j] = np.where(dead, t + f0 * dt, np.inf)
            eta_out[j] = np.where(dead, np.inf, e)
            stop[wait] = True

        go = ~stop
        hit = go & (xn <= 0)
        if np.any(hit):
            f0 = x[hit] / (x[hit] - xn[hit])
            j = idx[hit]
            reward[j] += rate[hit] * disc * (1.0 - np.exp(-delta * f0 * dt)) / delta
            tau[j] = t + f0 * dt
            x_stop[j] = 0.0
            stop |= hit
        if spec.bridge:
            live = ~stop
            pc = np.zeros(idx.size)
            pc[live] = np.exp(-2.0 * x[live] * xn[live] / (sg[live] ** 2 * dt))
            u = _uniform_np(kb[idx], i)
            cross = live & (u < pc)
            if np.any(cross):
                j = idx[cross]
                reward[j] += rate[cross] * disc * (1.0 - math.exp(-delta * 0.5 * dt)) / delta
                tau[j] = t + 0.5 * dt
                x_stop[j] = 0.0
                stop |= cross
        live = ~stop
        j = idx[live]
        reward[j] += rate[live] * disc * step_int
        x_stop[j] = xn[live]
        disc *= disc_step
        idx, x = j, xn[live]
    return tau, reward, x_stop, eta_out


def run_paths(spec: RunSpec, coef: Coefficients, seed: int, n: int, backend: str | None = None):
    """Per-path ``(tau, reward, x_stop, eta)``; ``tau = inf`` when alive at the horizon."""
    use_numba = (_accel.USE_NUMBA if backend is None else backend == "numba") and _mc_kernel is not None
    run = _run_numba if use_numba else _run_numpy
    parts = [run(spec, coef, seed, first, min(CHUNK, n - first)) for first in range(0, n, CHUNK)]
    return tuple(np.concatenate(p) for p in zip(*parts))


@dataclass
class McEstimate:
    mean: float
    stderr: float
    n: int
    seed: int
    dt: float
    bracket: tuple | None = None

    @classmethod
    def from_samples(cls, samples: np.ndarray, seed: int, dt: float, bracket=None) -> "McEstimate":
        n = samples.size
        mean = float(np.sum(samples) / n)
        sd = float(np.std(samples, ddof=1)) if n > 1 else 0.0
        return cls(mean, sd / math.sqrt(n), n, seed, dt, bracket)

    def within(self, value: float, k: float = 3.0) -> bool:
        return abs(self.mean - value) <= k * self.stderr


def _spec(s: Scenario, b: float, x0: float, dt: float, horizon: float, lam: float = 0.0,
          bridge: bool = False) -> RunSpec:
    e = s.econ
    return RunSpec(float(x0), float(b), float(dt), int(math.ceil(horizon / dt - 1e-9)), e.l_max, e.delta,
                   e.Lambda, e.reward_emitting, lam, bridge)


def mc_depletion_prob(s: Scenario, b: float, x0: float, t: float, n: int, seed: int,
                      dt: float = DEFAULT_DT, bridge: bool = False, backend: str | None = None) -> McEstimate:
    """Fraction of paths depleted by time ``t``."""
    if t <= 0:
        return McEstimate(0.0, 0.0, n, seed, dt)
    tau, _, _, _ = run_paths(_spec(s, b, x0, dt, t, bridge=bridge), Coefficients.from_scenario(s), seed, n, backend)
    return McEstimate.from_samples((tau <= t).astype(float), seed, dt)


def mc_value_exp(s: Scenario, b: float, x0: float, n: int, seed: int, dt: float = DEFAULT_DT,
                 t_max: float = DEFAULT_T_MAX, bridge: bool = False, backend: str | None = None) -> McEstimate:
    """Discounted reward up to depletion, capped at ``t_max`` with the tail as a bracket."""
    tau, reward, _, _ = run_paths(_spec(s, b, x0, dt, t_max, bridge=bridge), Coefficients.from_scenario(s),
                                  seed, n, backend)
    est = McEstimate.from_samples(reward, seed, dt)
    alive = float(np.mean(~np.isfinite(tau)))
    tail = s.econ.reward_emitting * math.exp(-s.econ.delta * t_max) / s.econ.delta
    est.bracket = (est.mean, est.mean + alive * tail)
    return est


def mc_value_qh(s: Scenario, b: float, x0: float, n: int, seed: int, exp_value=None,
                dt: float = DEFAULT_DT, t_max: float = DEFAULT_T_MAX, bridge: bool = False,
                backend: str | None = None) -> McEstimate:
    """Present-biased objective: rewards until ``min(tau, eta0)``, then ``alpha`` times the exponential value.

    ``exp_value`` is a callable ``x -> V_b^E(x)``; it is built from the
    scenario when omitted.
    """
    lam, alpha = s.bias.lam, s.bias.alpha
    if exp_value is None:
        from .exp_value import ExpBasis, PiecewiseValue

        exp_value = PiecewiseValue.build(ExpBasis(s), float(b))
    spec = _spec(s, b, x0, dt, t_max, lam=lam, bridge=bridge)
    tau, reward, x_stop, eta = run_paths(spec, Coefficients.from_scenario(s), seed, n, backend)
    handed = np.isfinite(eta) & ~np.isfinite(tau)
    total = reward.copy()
    if np.any(handed):
        xs = np.minimum(x_stop[handed], s.grid.x_max)
        total[handed] += alpha * np.exp(-s.econ.delta * eta[handed]) * exp_value(xs)
    est = McEstimate.from_samples(total, seed, dt)
    alive = float(np.mean(~np.isfinite(tau) & ~np.isfinite(eta)))
    tail = s.econ.reward_emitting * math.exp(-s.econ.delta * t_max) / s.econ.delta
    est.bracket = (est.mean, est.mean + alive * tail)
    return est


@dataclass
class PathRecord:
    t: np.ndarray
    x: np.ndarray
    emitting: np.ndarray
    tau: float
    depleted: bool
    seed: int
    path: int = 0

    def to_csv(self, fh) -> None:
        fh.write("t,X,emitting\n")
        for ti, xi, ei in zip(self.t, self.x, self.emitting):
            fh.write(f"{ti:.6g},{xi:.6g},{int(ei)}\n")


def simulate_path(s: Scenario, b: float, x0: float, dt: float, horizon: float, seed: int,
                  path: int = 0) -> PathRecord:
    """One Euler path on the time grid, stopped at the first nonpositive value."""
    coef = Coefficients.from_scenario(s)
    key = path_keys(stream_key(seed, NOISE), np.array([path], dtype=np.uint64))
    n = int(math.ceil(horizon / dt - 1e-9))
    sq = math.sqrt(dt)
    xs = [float(x0)]
    flags = []
    tau = math.inf
    x = float(x0)
    for i in range(n):
        emit = x >= b
        flags.append(emit)
        mu, sg = coef.drift_vol(np.array([x]))
        z = normals_np(key, i)[0]
        xn = float(mu[0] - s.econ.l_max * emit) * dt + float(sg[0]) * sq * z + x
        if xn <= 0.0:
            tau = i * dt + dt * x / (x - xn)
            xs.append(0.0)
            break
        xs.append(xn)
        x = xn
    t = np.arange(len(xs)) * dt
    if math.isfinite(tau):
        t[-1] = tau
    flags.append(False if math.isfinite(tau) else x >= b)
    return PathRecord(t, np.array(xs), np.array(flags, dtype=bool), tau, math.isfinite(tau), seed, path)
