import numpy as np
import pytest

from carbon_threshold import kernels
from carbon_threshold.errors import OutOfDomain, StiffnessFailure, TruncationTooSmall
from carbon_threshold.ode import Grid, LinearOde, solve_bvp, solve_ivp


def test_ivp_exponential_growth():
    # g'' - g = 0, g(0) = 0, g'(0) = 1  ->  sinh
    sol = solve_ivp(LinearOde(1.0, 0.0, -1.0), 0.0, 1.0, Grid(0.01, 500))
    x = sol.x
    assert np.max(np.abs(sol.g - np.sinh(x)) / np.cosh(x)) < 1e-9
    assert np.max(np.abs(sol.dg - np.cosh(x)) / np.cosh(x)) < 1e-9


def test_ivp_complex_coefficients():
    s = 0.3 + 2.0j
    sol = solve_ivp(LinearOde(2.0, -0.95, -s), 1.0, 0.0, Grid(0.01, 300))
    r = np.roots([2.0, -0.95, -s])
    A = np.linalg.solve([[1, 1], r], [1.0, 0.0])
    exact = A[0] * np.exp(r[0] * sol.x) + A[1] * np.exp(r[1] * sol.x)
    assert np.max(np.abs(sol.g - exact) / np.maximum(1, np.abs(exact))) < 1e-8


def test_ivp_guard_truncates():
    sol = solve_ivp(LinearOde(1.0, 0.0, -100.0), 0.0, 1.0, Grid(0.01, 20000), guard=1e50)
    assert sol.n < 20000
    assert np.all(np.abs(sol.g) <= 1e50)


def test_ivp_stiffness_rejected():
    with pytest.raises(StiffnessFailure):
        solve_ivp(LinearOde(1.0, 0.0, -1e6), 0.0, 1.0, Grid(0.01, 100))


def test_bvp_decaying_solution():
    # 2 g'' - 0.95 g' - 0.1 g + 1 = 0, g(0) = 0, g -> 10 at infinity
    ode = LinearOde(2.0, -0.95, -0.1, 1.0)
    sol = solve_bvp(ode, 0.0, 10.0, Grid(0.01, 40000), flat_tol=1e-8)
    r = min(np.roots([2.0, -0.95, -0.1]))
    exact = 10.0 * (1 - np.exp(r * sol.x))
    assert np.max(np.abs(sol.g - exact)) < 1e-8
    assert np.max(np.abs(sol.dg - (-10.0 * r * np.exp(r * sol.x)))) < 1e-7


def test_bvp_short_domain_flagged():
    ode = LinearOde(2.0, -0.95, -0.001, 1.0)
    with pytest.raises(TruncationTooSmall):
        solve_bvp(ode, 0.0, 1000.0, Grid(0.01, 3000), flat_tol=1e-8)


def test_hermite_interpolation_and_domain():
    sol = solve_ivp(LinearOde(1.0, 0.0, 1.0), 0.0, 1.0, Grid(0.01, 1000))
    xq = np.linspace(0, 10, 777)
    v, d = sol.eval(xq)
    assert np.max(np.abs(v - np.sin(xq))) < 1e-8
    assert np.max(np.abs(d - np.cos(xq))) < 1e-7
    with pytest.raises(OutOfDomain):
        sol(10.5)


def test_residual_small():
    ode = LinearOde(lambda x: 1 + 0.01 * x, -0.5, -0.1, 1.0)
    sol = solve_bvp(ode, 0.0, 10.0, Grid(0.01, 30000))
    assert np.median(sol.residual()) < 1e-6


@pytest.mark.skipif(not kernels.HAVE_NUMBA, reason="numba not installed")
def test_rk4_backends_agree():
    n = 2000
    x = np.linspace(0, n * 0.01, 2 * n + 1)
    p, q, r = -0.3 + 0.01 * x, -0.05 + 0 * x, np.sin(x)
    a = kernels.rk4_linear_numba(p, q, r, 0.0, 1.0, 0.01, 1e250)
    b = kernels.rk4_linear_numpy(p, q, r, 0.0, 1.0, 0.01, 1e250)
    assert a[2] == b[2]
    np.testing.assert_allclose(a[0], b[0], rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(a[1], b[1], rtol=1e-12, atol=1e-12)


@pytest.mark.skipif(not kernels.HAVE_NUMBA, reason="numba not installed")
def test_tridiagonal_backends_agree():
    rng = np.random.default_rng(3)
    n = 500
    lo, up = rng.uniform(-1, 0, n), rng.uniform(-1, 0, n)
    diag = 2.5 + np.abs(lo) + np.abs(up)
    rhs = rng.normal(size=n)
    x1 = kernels.thomas_numba(lo, diag, up, rhs)
    x2 = kernels.thomas_numpy(lo, diag, up, rhs)
    np.testing.assert_allclose(x1, x2, rtol=1e-12, atol=1e-13)
    A = np.diag(diag) + np.diag(lo[1:], -1) + np.diag(up[:-1], 1)
    np.testing.assert_allclose(A @ x1, rhs, atol=1e-12)


def test_far_field_condition_removes_boundary_layer():
    # decaying root about -0.0175: still 0.3% from the limit at x = 340
    ode = LinearOde(0.8176, -5.70, -0.1, 4.0)
    r = (5.70 - np.sqrt(5.70**2 + 4 * 0.8176 * 0.1)) / (2 * 0.8176)
    sol = solve_bvp(ode, 0.0, 40.0, Grid(0.01, 34000), far_field=True)
    exact = 40.0 * (1 - np.exp(r * sol.x))
    assert np.max(np.abs(sol.g - exact)) < 1e-8
    assert np.max(np.abs(sol.dg + 40.0 * r * np.exp(r * sol.x))) < 1e-8
    dirichlet = solve_bvp(ode, 0.0, 40.0, Grid(0.01, 34000))
    assert abs(dirichlet.dg[-1]) > 0.1
