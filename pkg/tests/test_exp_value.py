import numpy as np
import pytest

from carbon_threshold.brownian import from_scenario as closed_form
from carbon_threshold.exp_value import ExpBasis, PiecewiseValue, abel_wronskian, threshold_exp
from carbon_threshold.model import DiffusionSpec, make_scenario

from conftest import scenario


@pytest.fixture(scope="module")
def basis(baseline):
    return ExpBasis(baseline)


def sign_changes(v):
    s = np.sign(v[v != 0])
    return int(np.count_nonzero(s[1:] != s[:-1]))


def test_threshold_matches_closed_form(baseline, basis):
    et = threshold_exp(basis)
    assert et.b_star == pytest.approx(closed_form(baseline).exp_threshold().first, abs=1e-6)
    assert et.b_star == pytest.approx(5.5112, abs=1e-3)


def test_value_matches_closed_form(baseline, basis):
    bm = closed_form(baseline)
    b = threshold_exp(basis).b_star
    for x in (0.3, 2.0, b, 9.0, 34.0, 120.0):
        v, d = basis.value(b, x)
        ve, de = bm.exp_value(b, x)
        assert v == pytest.approx(ve, rel=1e-8)
        assert d == pytest.approx(de, rel=1e-6, abs=1e-9)


def test_value_at_zero_and_bound(baseline, basis):
    b = threshold_exp(basis).b_star
    pv = PiecewiseValue.build(basis, b)
    assert pv.values[0] == 0.0
    bound = baseline.econ.value_bound
    assert np.all(pv.values <= bound * (1 + 1e-12))
    assert np.all(np.diff(pv.values) > 0)


def test_smooth_fit(baseline, basis):
    b = threshold_exp(basis).b_star
    margin = baseline.econ.margin
    pv = PiecewiseValue.build(basis, b)
    assert pv.eval(b)[1] == pytest.approx(margin, abs=1e-6)
    assert sign_changes(pv.samples.dg - margin) == 1


def test_any_threshold_value_is_c1(baseline, basis):
    for b in (1.0, 3.3, 8.0):
        lo = basis.value(b, b - 1e-7)
        hi = basis.value(b, b)
        assert lo[0] == pytest.approx(hi[0], abs=1e-6)
        assert lo[1] == pytest.approx(hi[1], abs=1e-5)


def test_abel_wronskian_matches_numerical(basis):
    ode = basis.ode_in
    x = basis.v1.x[:2000]
    w_num = basis.v1.g[:2000] * basis.v2.dg[:2000] - basis.v1.dg[:2000] * basis.v2.g[:2000]
    w_abel = abel_wronskian(ode, x, w_num[0])
    np.testing.assert_allclose(w_abel, w_num, rtol=1e-7)


def test_threshold_increases_with_sustainability_weight():
    bs = [threshold_exp(ExpBasis(scenario("baseline", {"econ.Lambda_bar": v}))).b_star for v in (0.1, 0.3, 0.6, 0.9)]
    assert all(b1 < b2 for b1, b2 in zip(bs, bs[1:]))


def test_zero_threshold_when_emitting_always_pays():
    s = scenario("baseline", {"econ.Lambda_bar": 0.0, "econ.l_base": 0.1})
    bm = closed_form(s)
    et = threshold_exp(ExpBasis(s))
    assert et.b_star == pytest.approx(bm.exp_threshold().first, abs=1e-6)


def test_custom_kind_reproduces_constant(baseline):
    x = np.linspace(0, baseline.grid.x_max, 101)
    d = DiffusionSpec.custom(x, np.full_like(x, 0.05), np.full_like(x, 2.0))
    s = make_scenario(d, baseline.econ, baseline.bias, baseline.x0, baseline.horizon_T)
    assert threshold_exp(ExpBasis(s)).b_star == pytest.approx(5.511215, abs=1e-5)


def test_ou_grid_extended_and_bounded(ou):
    basis = ExpBasis(ou)
    assert basis.grid.x_max >= ou.grid.x_max
    b = threshold_exp(basis).b_star
    pv = PiecewiseValue.build(basis, b)
    assert np.all(pv.values <= ou.econ.value_bound * (1 + 1e-12))
    assert pv.eval(b)[1] == pytest.approx(ou.econ.margin, abs=1e-6)
