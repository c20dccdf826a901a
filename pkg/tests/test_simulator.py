import dataclasses

import numpy as np
import pytest
from scipy.linalg import expm

from wavc.errors import IntegrationDivergedError, WavcError
from wavc.estimator import sample_stats
from wavc.netmodel import solve_power_flow
from wavc.simulator import (Dynamics, NoiseModel, PmuWindow, Scenario, ScenarioEvent, apply_measurement_noise,
                            initial_state, read_trajectory_csv, run, sample_pmu, scenario_from_dict,
                            scenario_to_dict, stationary_covariance, step, write_trajectory_csv)

from conftest import two_bus


def quiet(case):
    """Copy of ``case`` without load noise."""
    out = case.copy()
    for b in out.buses:
        if b.load is not None:
            b.load = dataclasses.replace(b.load, sigma_p=0.0, sigma_q=0.0)
    return out


def test_equilibrium_is_fixed_point(case3):
    case = quiet(case3)
    st = initial_state(case)
    nxt = step(st, case, 1 / 600)
    np.testing.assert_allclose(nxt.theta, st.theta, rtol=0, atol=1e-12)
    np.testing.assert_allclose(nxt.v, st.v, rtol=0, atol=1e-12)
    np.testing.assert_allclose(nxt.svc_alpha, st.svc_alpha, rtol=0, atol=1e-12)
    np.testing.assert_allclose(nxt.svc_vm, st.svc_vm, rtol=0, atol=1e-12)


def test_step_is_deterministic(case3):
    st = initial_state(case3)
    z = np.random.default_rng(5).standard_normal(6)
    a = step(st, case3, 1 / 600, z)
    b = step(st, case3, 1 / 600, z)
    assert np.array_equal(a.theta, b.theta) and np.array_equal(a.v, b.v)


def test_divergence_names_a_bus(case3):
    st = initial_state(case3)
    with pytest.raises(IntegrationDivergedError) as info, np.errstate(all="ignore"):
        for _ in range(50):
            st = step(st, case3, 5.0)
    assert info.value.bus in case3.load_ids


def test_ou_autocorrelation_matches_analytic():
    case = two_bus(x=0.1, p=0.3, q=0.1, sigma=0.05)
    pf = solve_power_flow(case)
    a = pf.model.drift_matrix(pf.theta, pf.v)
    h = pf.model.diffusion_matrix()
    res = run(case, Scenario(duration_s=300.0, seed=11), pf=pf)
    x = res.window().states()
    c = stationary_covariance(a, h)
    for lag in (3, 12, 30):
        st = sample_stats(x, lag=lag, dt=1 / 60)
        expected = expm(a * lag / 60) @ c
        rho_hat = st.lag_cov[1, 1] / st.cov[1, 1]
        rho = expected[1, 1] / c[1, 1]
        assert abs(rho_hat - rho) < 0.05


def test_quiescent_run_stays_at_equilibrium(case3):
    case = quiet(case3)
    res = run(case, Scenario(duration_s=5.0))
    # the start point is a power-flow solution to 1e-8 mismatch, not an exact root
    assert np.max(np.abs(res.v - res.v[0])) < 1e-10
    assert np.max(np.abs(res.theta - res.theta[0])) < 1e-10


def test_run_is_deterministic(case3):
    sc = Scenario(duration_s=3.0, seed=4)
    a, b = run(case3, sc), run(case3, sc)
    assert np.array_equal(a.v, b.v) and np.array_equal(a.theta, b.theta)
    c = run(case3, sc, stream=2)
    assert not np.array_equal(a.v, c.v)


def test_load_step_sags_to_power_flow_oracle(case3):
    case = quiet(case3)
    pf0 = solve_power_flow(case)
    buses = [2, 4]
    ev = ScenarioEvent(at=0.5, kind="load_step", buses=(2, 4), dp=0.25, dq=0.25)
    res = run(case, Scenario(duration_s=60.0, events=[ev], svc_mode="frozen"), pf=pf0)
    oracle = solve_power_flow(case.with_scaled_loads(buses, 0.25, 0.25), alpha=pf0.alpha)
    np.testing.assert_allclose(res.v[-1], oracle.v, atol=1e-6)
    for b in buses:
        k = case.load_ids.index(b)
        assert res.v[-1, k] < pf0.v[k]


def test_line_trip_settles_to_power_flow_oracle(case3):
    case = quiet(case3)
    pf0 = solve_power_flow(case)
    ev = ScenarioEvent(at=0.0, kind="line_trip", branch=(2, 4))
    res = run(case, Scenario(duration_s=60.0, events=[ev], svc_mode="frozen"), pf=pf0)
    oracle = solve_power_flow(case.with_branch_status(2, 4, False), alpha=pf0.alpha)
    np.testing.assert_allclose(res.v[-1], oracle.v, atol=1e-6)
    np.testing.assert_allclose(res.theta[-1], oracle.theta, atol=1e-6)


def test_set_vref_on_bus_without_svc(case3):
    ev = ScenarioEvent(at=0.0, kind="set_vref", bus=2, value=1.0)
    with pytest.raises(WavcError, match="no SVC"):
        run(case3, Scenario(duration_s=1.0, events=[ev]))


def test_set_vref_moves_regulated_voltage(case3):
    case = quiet(case3)
    pf = solve_power_flow(case)
    ev = ScenarioEvent(at=0.0, kind="set_vref", bus=3, value=float(pf.vref[0]) + 0.01)
    res = run(case, Scenario(duration_s=60.0, events=[ev]), pf=pf)
    k = case.load_ids.index(3)
    assert res.v[-1, k] > pf.v[k] + 0.005


@pytest.mark.parametrize("bad", [
    dict(duration_s=0.0),
    dict(duration_s=1.0, dt_s=1 / 500),
    dict(duration_s=1.0, svc_mode="off"),
])
def test_scenario_validation(bad):
    with pytest.raises(WavcError):
        Scenario(**bad)


def test_event_validation():
    with pytest.raises(WavcError):
        ScenarioEvent(at=-1.0, kind="load_step")
    with pytest.raises(WavcError):
        ScenarioEvent(at=0.0, kind="line_trip")


def test_scenario_dict_roundtrip():
    sc = Scenario(duration_s=10.0, events=[ScenarioEvent(1.0, "load_step", (2, 3), 0.1, 0.2)],
                  seed=3, noise=NoiseModel("high", 3))
    back = scenario_from_dict(scenario_to_dict(sc))
    assert back.events[0].to_dict() == sc.events[0].to_dict()
    assert back.noise.kind == "high" and back.seed == 3


def _window(n=10000, m=3, seed=0):
    rng = np.random.default_rng(seed)
    return PmuWindow(60.0, 0.0, rng.standard_normal((n, m)) * 0.01, 1 + rng.standard_normal((n, m)) * 0.01,
                     [1, 2, 3])


def test_measurement_noise_none_is_exact():
    w = _window()
    out = apply_measurement_noise(w, NoiseModel("none"))
    assert np.array_equal(out.v, w.v) and np.array_equal(out.theta, w.theta)


def test_measurement_noise_high_std():
    w = _window()
    out = apply_measurement_noise(w, NoiseModel("high", seed=1))
    err = np.concatenate([(out.v - w.v).ravel(), (out.theta - w.theta).ravel()])
    assert abs(err.std() / 1e-4 - 1) < 0.2


def test_measurement_noise_replay():
    w = _window()
    a = apply_measurement_noise(w, NoiseModel("high", seed=9))
    b = apply_measurement_noise(w, NoiseModel("high", seed=9))
    assert np.array_equal(a.v, b.v)


def test_low_noise_scales_with_largest_change():
    w = _window()
    th_std, v_std = NoiseModel("low").channel_std(w)
    np.testing.assert_allclose(v_std, 0.1 * np.max(np.abs(np.diff(w.v, axis=0)), axis=0))


def test_sample_pmu_without_noise_is_state(case3):
    st = initial_state(case3)
    th, v, p, q = sample_pmu(st, Dynamics(case3), NoiseModel("none"))
    assert np.array_equal(th, st.theta) and np.array_equal(v, st.v)


def test_trajectory_csv_roundtrip(case3, tmp_path):
    res = run(case3, Scenario(duration_s=1.0, seed=2))
    path = tmp_path / "traj.csv"
    write_trajectory_csv(res, path)
    back = read_trajectory_csv(path)
    assert back.bus_ids == res.load_ids
    assert np.array_equal(back.v, res.v) and np.array_equal(back.q, res.q)
    np.testing.assert_array_equal(back.t, res.t)


def test_window_select_and_slice(case3):
    w = run(case3, Scenario(duration_s=2.0, seed=1)).window()
    sub = w.select([4, 2])
    np.testing.assert_array_equal(sub.v[:, 0], w.v[:, 2])
    part = w.slice(1.0)
    assert part.n == 60 and part.t0 == pytest.approx(1.0)
    with pytest.raises(WavcError):
        w.select([99])
