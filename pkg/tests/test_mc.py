import math

import numpy as np
import pytest

from carbon_threshold import _accel
from carbon_threshold.depletion import invert_to_cdf
from carbon_threshold.mc import (
    Coefficients,
    McEstimate,
    _spec,
    mc_depletion_prob,
    mc_value_exp,
    normals_np,
    path_keys,
    run_paths,
    simulate_path,
    stream_key,
)

from conftest import scenario


def test_counter_rng_is_deterministic_and_standard():
    key = stream_key(11, 1)
    keys = path_keys(key, np.arange(200000, dtype=np.uint64))
    z = normals_np(keys, 0)
    assert np.array_equal(z, normals_np(keys, 0))
    assert abs(z.mean()) < 0.01
    assert abs(z.std() - 1.0) < 0.01
    z1 = normals_np(keys, 1)
    assert abs(np.corrcoef(z, z1)[0, 1]) < 0.01


def test_reproducible_and_seed_sensitive(baseline):
    a = mc_depletion_prob(baseline, 5.51, 10.0, 5.0, 3000, seed=42)
    b = mc_depletion_prob(baseline, 5.51, 10.0, 5.0, 3000, seed=42)
    c = mc_depletion_prob(baseline, 5.51, 10.0, 5.0, 3000, seed=43)
    assert a.mean == b.mean and a.stderr == b.stderr
    assert a.mean != c.mean


def test_chunking_does_not_change_paths(baseline):
    spec = _spec(baseline, 5.51, 10.0, 1 / 52, 5.0)
    coef = Coefficients.from_scenario(baseline)
    small = run_paths(spec, coef, 9, 100)
    big = run_paths(spec, coef, 9, 70000)
    for u, v in zip(small, big):
        np.testing.assert_array_equal(u, v[:100])


@pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not installed")
@pytest.mark.parametrize("name,bridge,lam", [("baseline", False, 0.0), ("baseline", True, 1.0), ("ou", True, 1.0)])
def test_backends_agree(name, bridge, lam):
    s = scenario(name)
    spec = _spec(s, 5.0, 12.0, 1 / 365, 8.0, lam=lam, bridge=bridge)
    coef = Coefficients.from_scenario(s)
    a = run_paths(spec, coef, 1, 3000, backend="numba")
    b = run_paths(spec, coef, 1, 3000, backend="numpy")
    for u, v in zip(a, b):
        np.testing.assert_allclose(u, v, rtol=1e-10, atol=1e-12)


def test_single_path_matches_kernel(baseline):
    rec = simulate_path(baseline, 5.51, 34.0, 1 / 365, 25.0, seed=7, path=3)
    spec = _spec(baseline, 5.51, 34.0, 1 / 365, 25.0)
    tau = run_paths(spec, Coefficients.from_scenario(baseline), 7, 4)[0][3]
    if rec.depleted:
        assert rec.tau == pytest.approx(tau, abs=1e-9)
    else:
        assert not math.isfinite(tau)
    assert rec.depleted == (rec.x[-1] == 0.0)


def test_emitting_flag_follows_threshold(baseline):
    rec = simulate_path(baseline, 5.51, 34.0, 1 / 365, 25.0, seed=2)
    live = rec.x[:-1] > 0
    np.testing.assert_array_equal(rec.emitting[:-1][live], rec.x[:-1][live] >= 5.51)


def test_shared_noise_orders_paths(baseline):
    dt, l_max = 1 / 365, baseline.econ.l_max
    for seed in range(5):
        hi = simulate_path(baseline, 5.51, 34.0, dt, 25.0, seed)
        lo = simulate_path(baseline, 3.86, 34.0, dt, 25.0, seed)
        m = min(len(hi.x), len(lo.x)) - 1
        assert np.all(hi.x[:m] >= lo.x[:m] - l_max * dt - 1e-12)
        # identical prefix while both paths sit above both thresholds
        assert hi.x[1] == lo.x[1]


def test_zero_volatility_path_is_deterministic():
    s = scenario("baseline", {"model.sigma": 1e-12})
    rec = simulate_path(s, 5.0, 10.0, 1 / 365, 25.0, seed=1)
    # emits at 3.95/yr down to b = 5, then drifts at 0.95/yr
    expected = (10.0 - 5.0) / 3.95 + 5.0 / 0.95
    assert rec.depleted
    # the step that crosses b can overshoot by 3.95 dt, shortening the slow leg by up to 4.2 dt
    assert rec.tau == pytest.approx(expected, abs=5 / 365)
    assert rec.tau <= expected + 1 / 365


def test_depletion_bias_shrinks_with_step(baseline):
    exact = invert_to_cdf(baseline, 5.51, 10.0, 10.0)
    coarse = mc_depletion_prob(baseline, 5.51, 10.0, 10.0, 40000, seed=5, dt=1 / 12)
    fine = mc_depletion_prob(baseline, 5.51, 10.0, 10.0, 40000, seed=5, dt=1 / 365)
    assert abs(fine.mean - exact) < abs(coarse.mean - exact)
    bridged = mc_depletion_prob(baseline, 5.51, 10.0, 10.0, 40000, seed=5, dt=1 / 365, bridge=True)
    assert bridged.within(exact, 3.0)


def test_ou_depletion_against_inversion(ou):
    exact = invert_to_cdf(ou, 6.71, 20.0, 6.0)
    est = mc_depletion_prob(ou, 6.71, 20.0, 6.0, 40000, seed=5, bridge=True)
    assert est.within(exact, 3.0)


def test_value_estimate_bracket(baseline):
    est = mc_value_exp(baseline, 5.51, 34.0, 2000, seed=1, dt=1 / 52, t_max=60.0)
    lo, hi = est.bracket
    assert lo <= hi
    assert 0 < est.mean < baseline.econ.value_bound


def test_estimate_from_samples():
    est = McEstimate.from_samples(np.array([0.0, 1.0, 1.0, 0.0]), seed=0, dt=0.1)
    assert est.mean == 0.5
    assert est.stderr == pytest.approx(np.std([0, 1, 1, 0], ddof=1) / 2)
