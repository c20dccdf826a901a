import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm, logm

from wavc.errors import (IllConditionedError, InsufficientDataError, PartitionError, RankDeficientError,
                         SingularMatrixError)
from wavc.estimator import (estimate_ls, estimate_sensitivities, estimate_state_matrix,
                            estimate_time_constants, estimate_tls, extract_sensitivities, matrix_log,
                            partition, reduce_for_missing, roundtrip_error, sample_stats)
from wavc.netmodel import solve_power_flow
from wavc.simulator import (NoiseModel, PmuWindow, Scenario, apply_measurement_noise, run,
                            sample_linear_ou)

from conftest import rel_fro


@pytest.fixture(scope="module")
def case3_truth(case3):
    pf = solve_power_flow(case3)
    md = pf.model
    return pf, md.drift_matrix(pf.theta, pf.v), md.diffusion_matrix()


@pytest.fixture(scope="module")
def case3_ambient(case3, case3_truth):
    pf = case3_truth[0]
    return run(case3, Scenario(duration_s=300.0, seed=0, svc_mode="frozen"), pf=pf, stream=2).window()


# -- sample statistics ------------------------------------------------------------

def test_constant_window_has_zero_covariances():
    st_ = sample_stats(np.ones((50, 3)), dt=0.1)
    assert not st_.cov.any() and not st_.lag_cov.any()


def test_two_sample_covariance_by_hand():
    a, b = np.array([1.0, 2.0]), np.array([3.0, -1.0])
    mu = (a + b) / 2
    expected = np.outer(a - mu, a - mu) + np.outer(b - mu, b - mu)
    st_ = sample_stats(np.vstack([a, b]), dt=1.0)
    np.testing.assert_allclose(st_.cov, expected, atol=1e-15)


def test_too_short_window():
    with pytest.raises(InsufficientDataError):
        sample_stats(np.ones((1, 2)), dt=1.0)


def test_sample_covariance_of_exact_ou_matches_lyapunov(case3_truth):
    from wavc.simulator import stationary_covariance
    _, a, h = case3_truth
    x = sample_linear_ou(a, h, 300, 60, seed=1)
    c = stationary_covariance(a, h)
    assert rel_fro(sample_stats(x, dt=1 / 60).cov, c) < 0.15


# -- matrix logarithm -------------------------------------------------------------

def test_log_identity():
    out, resid = matrix_log(np.eye(4))
    np.testing.assert_allclose(out, 0, atol=1e-15)
    assert resid == 0


def test_log_diagonal():
    out, _ = matrix_log(np.diag([np.e, np.e ** 2]))
    np.testing.assert_allclose(out, np.diag([1.0, 2.0]), atol=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_log_inverts_expm(seed):
    rng = np.random.default_rng(seed)
    a0 = rng.standard_normal((6, 6)) - 3 * np.eye(6)
    dt = 0.0167
    out, _ = matrix_log(expm(dt * a0))
    assert rel_fro(out / dt, a0) < 1e-6
    np.testing.assert_allclose(out, logm(expm(dt * a0)).real, atol=1e-10)


def test_log_of_singular_matrix():
    with pytest.raises(SingularMatrixError):
        matrix_log(np.diag([1.0, 0.0]))


def test_log_of_defective_matrix():
    with pytest.raises(IllConditionedError):
        matrix_log(np.array([[1.0, 1.0], [0.0, 1.0]]))


# -- drift estimation ----------------------------------------------------------

def test_drift_from_exact_ou(case3_truth):
    _, a, h = case3_truth
    x = sample_linear_ou(a, h, 300, 60, seed=0)
    drift = estimate_state_matrix(sample_stats(x, dt=1 / 60))
    assert rel_fro(drift.a_hat, a) < 0.10
    assert drift.stable
    assert roundtrip_error(drift.a_hat, drift.transition, 1 / 60) < 1e-6


def test_white_noise_is_never_silent():
    x = np.random.default_rng(0).standard_normal((3000, 4))
    with pytest.raises(IllConditionedError, match="no resolvable dynamics"):
        estimate_state_matrix(sample_stats(x, dt=1 / 60))


def test_singular_covariance_names_channels():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((500, 2))
    x = np.column_stack([x, x[:, 0]])
    with pytest.raises(SingularMatrixError, match="c0.*c2|c2.*c0"):
        estimate_state_matrix(sample_stats(x, dt=0.1), ["c0", "c1", "c2"])


def test_case39_jacobian_accuracy(case39):
    pf = solve_power_flow(case39)
    win = run(case39, Scenario(duration_s=300.0, seed=0, svc_mode="frozen"), pf=pf, stream=2).window()
    est = estimate_sensitivities(win)
    j = pf.model.jacobian(pf.theta, pf.v).full
    assert rel_fro(est.j_hat, j) < 0.15
    np.testing.assert_allclose(est.s_hat @ est.j_hat, np.eye(38), atol=1e-8)


# -- time constants -------------------------------------------------------------

def _manufactured_window(tau, n=400, m=2, seed=0):
    rng = np.random.default_rng(seed)
    dt = 1 / 60
    p = rng.standard_normal((n, m))
    q = rng.standard_normal((n, m))
    avg_p = 0.5 * (p[:-1] + p[1:])
    avg_q = 0.5 * (q[:-1] + q[1:])
    th = np.vstack([np.zeros(m), np.cumsum(avg_p * dt / tau, axis=0)])
    v = 1 + np.vstack([np.zeros(m), np.cumsum(avg_q * dt / tau, axis=0)])
    return PmuWindow(60.0, 0.0, th, v, list(range(m)), p + 0.7, q - 0.2)


def test_time_constants_exact_linear_data():
    t_th, t_v = estimate_time_constants(_manufactured_window(30.0))
    np.testing.assert_allclose(t_th, 30.0, atol=1e-6)
    np.testing.assert_allclose(t_v, 30.0, atol=1e-6)


def test_time_constants_short_window_exact_data():
    t_th, _ = estimate_time_constants(_manufactured_window(30.0), p=6, start=100)
    np.testing.assert_allclose(t_th, 30.0, atol=1e-6)


def test_time_constants_need_power():
    w = _manufactured_window(30.0)
    with pytest.raises(InsufficientDataError):
        estimate_time_constants(PmuWindow(60.0, 0.0, w.theta, w.v, w.bus_ids))
    with pytest.raises(InsufficientDataError):
        estimate_time_constants(w, p=1)


# -- extraction -------------------------------------------------------------------

def test_extract_trivial():
    j, s = extract_sensitivities(-np.eye(4), [2.0, 2.0], [2.0, 2.0])
    np.testing.assert_allclose(j, -2 * np.eye(4))
    np.testing.assert_allclose(s, -0.5 * np.eye(4))


def test_extract_recovers_analytic_jacobian(case3_truth):
    pf, a, _ = case3_truth
    md = pf.model
    j, _ = extract_sensitivities(a, md.tau_theta, md.tau_v)
    np.testing.assert_allclose(j, md.jacobian(pf.theta, pf.v).full, rtol=0, atol=1e-10)


# -- partitioning ----------------------------------------------------------------

def test_partition_all_controlled():
    s = np.random.default_rng(0).standard_normal((6, 6))
    blk = partition(s, [1, 2, 3], [], bus_ids=[1, 2, 3])
    assert blk.svq_uu.shape == (0, 0) and blk.svq_uc.shape == (0, 3)
    np.testing.assert_array_equal(blk.svq_cc, s[3:, 3:])


def test_partition_case39_shapes(case39):
    pf = solve_power_flow(case39)
    j = pf.model.jacobian(pf.theta, pf.v).full
    ids = pf.model.load_ids
    unc = [b for b in ids if b not in (3, 9, 20)]
    blk = partition(np.linalg.inv(j), [3, 9, 20], unc, bus_ids=ids)
    for name, shape in (("cc", (3, 3)), ("cu", (3, 16)), ("uc", (16, 3)), ("uu", (16, 16))):
        assert getattr(blk, "svq_" + name).shape == shape
        assert getattr(blk, "svp_" + name).shape == shape


def test_partition_rejects_overlap_and_unknown():
    s = np.eye(4)
    with pytest.raises(PartitionError):
        partition(s, [1], [1, 2], bus_ids=[1, 2])
    with pytest.raises(PartitionError):
        partition(s, [5], [1], bus_ids=[1, 2])


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 7), st.integers(0, 2 ** 31 - 1), st.data())
def test_partition_permutation_identity(m, seed, data):
    rng = np.random.default_rng(seed)
    s = rng.standard_normal((2 * m, 2 * m))
    ids = list(range(10, 10 + m))
    perm = data.draw(st.permutations(ids))
    k = data.draw(st.integers(1, m))
    c, u = perm[:k], perm[k:]
    blk = partition(s, c, u, bus_ids=ids)
    svp, svq = blk.reassemble()
    order = [ids.index(b) for b in c + u]
    np.testing.assert_array_equal(svq, s[m:, m:][np.ix_(order, order)])
    np.testing.assert_array_equal(svp, s[m:, :m][np.ix_(order, order)])


def test_reduce_for_missing():
    rng = np.random.default_rng(1)
    s = rng.standard_normal((10, 10))
    ids = [1, 2, 3, 4, 5]
    blk = partition(s, [1, 2], [3, 4, 5], bus_ids=ids)
    same = reduce_for_missing(blk, ids)
    np.testing.assert_array_equal(same.svq_uc, blk.svq_uc)
    red = reduce_for_missing(blk, [2, 3, 5])
    assert red.controlled == (2,) and red.uncontrolled == (3, 5)
    np.testing.assert_array_equal(red.svq_uc, s[5:, 5:][np.ix_([2, 4], [1])])
    none_left = reduce_for_missing(blk, [3])
    assert not none_left.enabled
    with pytest.raises(PartitionError):
        reduce_for_missing(blk, [9])


# -- LS / TLS baselines ------------------------------------------------------------

def test_ls_tls_exact_linear_system():
    rng = np.random.default_rng(2)
    j = rng.standard_normal((4, 4))
    dx = rng.standard_normal((200, 4))
    dy = dx @ j.T
    np.testing.assert_allclose(estimate_ls(dx=dx, dy=dy), j, atol=1e-8)
    np.testing.assert_allclose(estimate_tls(dx=dx, dy=dy), j, atol=1e-8)


def test_ls_rank_deficient():
    with pytest.raises(RankDeficientError):
        estimate_ls(dx=np.zeros((50, 3)), dy=np.zeros((50, 3)))
    with pytest.raises(RankDeficientError):
        estimate_tls(dx=np.ones((2, 3)), dy=np.ones((2, 3)))


def test_tls_worse_than_ou_under_high_noise(case39):
    # Measured on case39: OU 0.45, TLS 0.034.  The network P/Q channels are
    # noise-free here, which is exactly the errors-in-variables setting TLS
    # handles; see the project notes.
    pf = solve_power_flow(case39)
    win = run(case39, Scenario(duration_s=300.0, seed=0, svc_mode="frozen"), pf=pf, stream=2).window()
    noisy = apply_measurement_noise(win, NoiseModel("high", 0))
    j = pf.model.jacobian(pf.theta, pf.v).full
    ou = rel_fro(estimate_sensitivities(noisy).j_hat, j)
    tls = rel_fro(estimate_tls(noisy), j)
    assert tls > ou
