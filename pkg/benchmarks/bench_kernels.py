"""Compare the numba kernels with their numpy fallbacks.

    python benchmarks/bench_kernels.py [--paths 20000] [--repeat 3]
"""
import argparse
import time

import numpy as np

from carbon_threshold import _accel, kernels, mc
from carbon_threshold.model import build_scenario
from carbon_threshold.tables import packaged_config


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def rk4_case(n=40000):
    h = 0.01
    x = np.linspace(0, n * h, 2 * n + 1)
    p = np.full_like(x, -0.475)
    q = np.full_like(x, -0.05)
    r = -0.25 - 0.01 * np.sin(x)
    return (p, q, r, 0.0, 1.0, h, 1e250)


def thomas_case(n=40000):
    rng = np.random.default_rng(0)
    lower = rng.uniform(-1, 0, n)
    upper = rng.uniform(-1, 0, n)
    diag = 2.5 + np.abs(lower) + np.abs(upper)
    return (lower, diag, upper, rng.normal(size=n))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--paths", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        print("numba not installed; nothing to compare")
        return

    rk = rk4_case()
    th = thomas_case()
    s = build_scenario(packaged_config("baseline"))
    coef = mc.Coefficients.from_scenario(s)
    spec = mc._spec(s, 3.86, 34.0, 1 / 365, 25.0)

    # warm-up compiles the numba versions
    kernels.rk4_linear_numba(*rk)
    kernels.thomas_numba(*th)
    mc.run_paths(spec, coef, 0, 256, backend="numba")

    rows = [
        ("rk4 (80k half-steps)", lambda: kernels.rk4_linear_numpy(*rk), lambda: kernels.rk4_linear_numba(*rk)),
        ("tridiagonal (40k)", lambda: kernels.thomas_numpy(*th), lambda: kernels.thomas_numba(*th)),
        (f"mc paths ({args.paths} x 25y daily)", lambda: mc.run_paths(spec, coef, 1, args.paths, backend="numpy"),
         lambda: mc.run_paths(spec, coef, 1, args.paths, backend="numba")),
    ]
    print(f"{'kernel':34s} {'numpy [s]':>10s} {'numba [s]':>10s} {'ratio':>7s}")
    for name, f_np, f_nb in rows:
        t_np = best_of(f_np, args.repeat)
        t_nb = best_of(f_nb, args.repeat)
        print(f"{name:34s} {t_np:10.4f} {t_nb:10.4f} {t_np / t_nb:7.1f}")

    a = mc.run_paths(spec, coef, 1, 2000, backend="numpy")
    b = mc.run_paths(spec, coef, 1, 2000, backend="numba")
    same = all(np.allclose(u, v, rtol=1e-12, atol=1e-12, equal_nan=True) for u, v in zip(a, b))
    print("mc backends agree:", same)


if __name__ == "__main__":
    main()
