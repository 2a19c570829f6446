import numpy as np
import pytest

from carbon_threshold.brownian import from_scenario as closed_form
from carbon_threshold.depletion import (
    DepletionSolver,
    depletion_report,
    invert_to_cdf,
    laplace_transform,
    solve_transform,
)

B_E, B_QH = 5.511215, 3.855739


@pytest.fixture(scope="module")
def oracle(baseline):
    return closed_form(baseline)


@pytest.mark.parametrize("sval", [0.05, 1.0, 0.3 + 2.0j, 2.0 - 5.0j])
@pytest.mark.parametrize("x", [0.7, 3.0, 5.0, 12.0, 34.0])
def test_transform_matches_closed_form(baseline, oracle, sval, x):
    got = laplace_transform(baseline, B_E, x, sval)
    exact = oracle.laplace(B_E, x, sval)
    assert abs(got - exact) <= 1e-6 * max(1e-12, abs(exact)) + 1e-14


def test_transform_boundary_values(baseline):
    sol = solve_transform(baseline, B_QH, 0.5)
    assert sol(0.0) == pytest.approx(1.0, abs=1e-12)
    vals = np.abs([sol(x) for x in (1.0, 5.0, 20.0, 34.0)])
    assert np.all(np.diff(vals) < 0)


def test_transform_zero_threshold(baseline, oracle):
    for x in (1.0, 10.0, 34.0):
        assert laplace_transform(baseline, 0.0, x, 0.4) == pytest.approx(oracle.laplace(0.0, x, 0.4), rel=1e-7)


@pytest.mark.parametrize("b,t", [(B_E, 25.0), (B_QH, 25.0), (B_E, 10.0), (B_QH, 50.0), (0.0, 15.0)])
def test_cdf_matches_closed_form(baseline, oracle, b, t):
    assert invert_to_cdf(baseline, b, 34.0, t) == pytest.approx(oracle.depletion_prob(b, 34.0, t), abs=1e-6)


def test_cdf_monotone_in_time_and_bounded(baseline):
    solver = DepletionSolver(baseline, B_E)
    ts = [1.0, 5.0, 10.0, 15.0, 20.0, 30.0, 50.0]
    psi = [solver.cdf(34.0, t).value for t in ts]
    assert all(0.0 <= p <= 1.0 for p in psi)
    assert all(a <= b + 1e-9 for a, b in zip(psi, psi[1:]))


def test_talbot_and_euler_agree(baseline):
    solver = DepletionSolver(baseline, B_QH)
    inv = solver.cdf(34.0, 20.0)
    assert inv.method == "talbot"
    assert abs(inv.talbot - inv.euler) < 1e-5


def test_gaver_diagnostic_in_range(baseline):
    solver = DepletionSolver(baseline, B_E)
    assert solver.gaver(34.0, 25.0) == pytest.approx(solver.cdf(34.0, 25.0).value, abs=1e-2)


def test_budget_exhausted_is_certain(baseline):
    assert DepletionSolver(baseline, B_E).cdf(0.0, 5.0).value == 1.0


def test_report_with_monte_carlo(baseline):
    rep = depletion_report(baseline, B_E, x=10.0, horizon=[5.0, 10.0], mc_paths=4000, seed=3)
    assert rep.psi.shape == (2,)
    assert rep.psi[0] <= rep.psi[1]
    assert rep.mc_estimate is not None and 0.0 < rep.mc_estimate < 1.0
    # discrete monitoring only biases low; allow a generous margin at 4000 paths
    assert abs(rep.psi[1] - rep.mc_estimate) < 5 * rep.mc_stderr + 0.02


def test_ou_transform_is_a_probability(ou):
    sol = DepletionSolver(ou, 6.712)
    inv = sol.cdf(34.0, 25.0)
    assert 0.99 < inv.value <= 1.0
    assert abs(inv.talbot - inv.euler) < 1e-4
