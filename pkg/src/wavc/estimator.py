"""Sensitivity identification from ambient PMU windows.

Under ambient load fluctuations the load-bus states follow a vector OU
process ``dx = A x dt + H dW`` whose lag covariance obeys
``G(dt) = expm(A dt) C``.  From a window of samples::

    A_hat = logm(G_hat C_hat^{-1}) / dt

The load time constants come from regressing the state rates on the measured
power deviations, after which ``J_hat = diag(T_hat) A_hat`` and
``S_hat = J_hat^{-1}``.  Least squares and total least squares estimators on
consecutive differences are provided as baselines.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .errors import (IllConditionedError, InsufficientDataError, PartitionError, RankDeficientError,
                     SingularMatrixError, UnidentifiableError)

LOG_RESIDUAL_TOL = 1e-8
COND_LIMIT = 1e13


class StabilityWarning(UserWarning):
    """The estimated state matrix has an eigenvalue with non-negative real part."""


@dataclass
class SampleStats:
    mean: np.ndarray
    cov: np.ndarray
    lag_cov: np.ndarray
    dt: float
    n: int


def _as_samples(window):
    if hasattr(window, "states"):
        return window.states(), window.dt
    raise TypeError("expected a PmuWindow")


def sample_stats(window, lag=1, dt=None):
    """Sample mean, covariance and ``lag``-sample lag covariance.

    ``window`` is a :class:`~wavc.simulator.PmuWindow` or an (n, d) array (then
    ``dt`` is required).  Both covariances are centred on the mean of the
    whole window and normalised by ``n - 1``.
    """
    if isinstance(window, np.ndarray):
        x = window
        if dt is None:
            raise ValueError("dt is required for raw sample arrays")
    else:
        x, dt = _as_samples(window)
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if n < 2 or n <= lag:
        raise InsufficientDataError(f"need more than {max(lag, 1)} samples, got {n}")
    mu = x.mean(axis=0)
    d = x - mu
    cov = d.T @ d / (n - 1)
    cov = 0.5 * (cov + cov.T)
    lag_cov = d[lag:].T @ d[:-lag] / (n - 1)
    return SampleStats(mu, cov, lag_cov, float(dt * lag), n)


def matrix_log(m):
    """Principal matrix logarithm by eigendecomposition.

    Returns
    -------
    log_m : ndarray
        Real part of ``V diag(Log lambda) V^{-1}``.
    residual : float
        Frobenius norm of the discarded imaginary part.
    """
    m = np.asarray(m, dtype=float)
    lam, vec = np.linalg.eig(m)
    small = np.abs(lam) < 1e-12
    if np.any(small):
        raise SingularMatrixError(f"matrix has an eigenvalue of modulus {np.abs(lam).min():.2e}")
    kappa = np.linalg.cond(vec)
    if not np.isfinite(kappa) or kappa > 1e12:
        raise IllConditionedError(
            f"eigenvector matrix condition {kappa:.2e}; the matrix is (nearly) defective, "
            "use a longer window")
    logm = vec @ np.diag(np.log(lam.astype(complex))) @ np.linalg.inv(vec)
    return logm.real, float(np.linalg.norm(logm.imag))


def _collinear_pair(cov):
    d = np.sqrt(np.clip(np.diag(cov), 1e-300, None))
    corr = cov / np.outer(d, d)
    np.fill_diagonal(corr, 0.0)
    i, j = np.unravel_index(np.argmax(np.abs(corr)), corr.shape)
    return int(min(i, j)), int(max(i, j)), float(corr[i, j])


@dataclass
class DriftEstimate:
    a_hat: np.ndarray
    transition: np.ndarray
    log_residual: float
    condition: float
    stable: bool
    warnings: list = field(default_factory=list)


def estimate_state_matrix(stats, channel_names=None):
    """``A_hat = logm(G C^{-1}) / dt`` with diagnostics.

    Raises
    ------
    SingularMatrixError
        ``C_hat`` is singular; the message names the most collinear channels.
    IllConditionedError
        A mode of ``G C^{-1}`` is indistinguishable from zero (white data).
    """
    cov = stats.cov
    d = cov.shape[0]
    names = channel_names or [f"x{i}" for i in range(d)]
    cond = float(np.linalg.cond(cov)) if d else 1.0
    if not np.isfinite(cond) or cond > COND_LIMIT:
        i, j, r = _collinear_pair(cov)
        raise SingularMatrixError(
            f"sample covariance is singular (cond {cond:.2e}); most collinear channels "
            f"{names[i]} and {names[j]} (correlation {r:+.6f})")
    # G C^{-1} via a solve: C is symmetric, so (G C^{-1})^T = C^{-1} G^T
    try:
        trans = np.linalg.solve(cov, stats.lag_cov.T).T
    except np.linalg.LinAlgError:
        i, j, r = _collinear_pair(cov)
        raise SingularMatrixError(
            f"sample covariance is singular; most collinear channels {names[i]} and {names[j]}") from None
    # eigenvalues within sampling noise of zero: no lag correlation to invert
    floor = 3.0 / np.sqrt(stats.n)
    lam_min = float(np.min(np.abs(np.linalg.eigvals(trans)))) if d else 1.0
    if lam_min < floor:
        raise IllConditionedError(
            f"lag-{stats.dt:.4g} s transition has an eigenvalue of modulus {lam_min:.2e}, below the "
            f"sampling-noise floor {floor:.2e}; the window shows no resolvable dynamics")
    logm, resid = matrix_log(trans)
    a_hat = logm / stats.dt
    notes = []
    if resid > LOG_RESIDUAL_TOL * max(1.0, np.linalg.norm(logm)):
        notes.append(f"matrix log imaginary residual {resid:.2e}")
    eig = np.linalg.eigvals(a_hat)
    stable = bool(np.all(eig.real < 0))
    if not stable:
        msg = f"estimated state matrix is not stable (max Re eig {eig.real.max():.3e})"
        notes.append(msg)
        warnings.warn(msg, StabilityWarning, stacklevel=2)
    return DriftEstimate(a_hat, trans, resid, cond, stable, notes)


def roundtrip_error(a_hat, transition, dt):
    """``||expm(dt A_hat) - G C^{-1}||_F / ||G C^{-1}||_F``.

    Checks the eigendecomposition logarithm against an independent matrix
    exponential; a large value means the log landed off the principal branch.
    """
    transition = np.asarray(transition, float)
    den = np.linalg.norm(transition)
    if den == 0.0:
        return float("inf")
    return float(np.linalg.norm(expm(dt * np.asarray(a_hat, float)) - transition) / den)


def estimate_time_constants(window, p=None, start=0):
    """Load time constants from the angle/magnitude rates and power channels.

    For each bus the recovery rate ``1/tau`` is the slope of
    ``(x(t_{i+1}) - x(t_i)) / dt`` against the power deviation, with
    deviations centred on their sample means::

        1/tau = sum_i dP(t_i) * dx_i / dt  /  sum_i dP(t_i) * dPbar_i

    ``dPbar_i`` is the centred interval average ``(P(t_i) + P(t_{i+1})) / 2``.
    The start-point deviation ``dP(t_i)`` acts as an instrument: it is
    uncorrelated with the load noise entering during the interval, while the
    interval average removes the O(a dt) bias that a start-point regressor
    picks up on buses whose power recovers within a few samples.

    Parameters
    ----------
    window : PmuWindow
        Must carry the ``p`` and ``q`` channels.
    p : int, optional
        Number of regression intervals (default: the whole window).
    start : int
        Index of the first sample used.

    Returns
    -------
    (t_theta, t_v) : tuple of ndarray
    """
    if not window.has_power:
        raise InsufficientDataError("time-constant regression needs the P and Q channels")
    n = window.n
    if p is None:
        p = n - 1 - start
    if p < 2 or start + p + 1 > n:
        raise InsufficientDataError(f"need {start + p + 1} samples for p = {p}, window has {n}")
    sl = slice(start, start + p)
    nx = slice(start + 1, start + p + 1)
    dt = window.dt
    out = []
    for x, pw, ch in ((window.theta, window.p, "P"), (window.v, window.q, "Q")):
        rate = (x[nx] - x[sl]) / dt
        z = pw[sl] - pw[sl].mean(axis=0)
        avg = 0.5 * (pw[sl] + pw[nx])
        avg = avg - avg.mean(axis=0)
        den = np.sum(z * avg, axis=0)
        num = np.sum(z * rate, axis=0)
        bad = np.flatnonzero(np.sum(z * z, axis=0) < 1e-14)
        if bad.size:
            bus = window.bus_ids[bad[0]]
            raise UnidentifiableError(f"no {ch} excitation at bus {bus}", bus)
        inv_tau = num / den
        bad = np.flatnonzero(~(inv_tau > 0))
        if bad.size:
            bus = window.bus_ids[bad[0]]
            raise UnidentifiableError(f"non-positive {ch} recovery rate at bus {bus}", bus)
        out.append(1.0 / inv_tau)
    return out[0], out[1]


def extract_sensitivities(a_hat, t_theta, t_v):
    """``J_hat = diag(T) A_hat`` and ``S_hat = J_hat^{-1}``."""
    t = np.concatenate([np.asarray(t_theta, float), np.asarray(t_v, float)])
    if np.any(t <= 0):
        raise ValueError("time constants must be positive")
    j = t[:, None] * np.asarray(a_hat, float)
    cond = float(np.linalg.cond(j))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularMatrixError(f"estimated Jacobian is singular (cond {cond:.2e})")
    s = np.linalg.solve(j, np.eye(j.shape[0]))
    return j, s


@dataclass(frozen=True)
class SensitivityEstimate:
    a_hat: np.ndarray
    t_theta: np.ndarray
    t_v: np.ndarray
    j_hat: np.ndarray
    s_hat: np.ndarray
    bus_ids: tuple
    log_residual: float
    condition: float
    stable: bool = True
    warnings: tuple = ()
    transition: np.ndarray = None

    @property
    def m(self):
        return len(self.bus_ids)

    def blocks(self, which="s"):
        mat = self.s_hat if which == "s" else self.j_hat
        m = self.m
        return mat[:m, :m], mat[:m, m:], mat[m:, :m], mat[m:, m:]


def estimate_sensitivities(window, tc_window=None, tc_samples=None, time_constants=None):
    """Full identification pipeline on one ambient window.

    Parameters
    ----------
    window : PmuWindow
        Angle and magnitude channels used for ``A_hat``.
    tc_window : PmuWindow, optional
        Window with power channels for the time constants (default ``window``).
    tc_samples : int, optional
        Regression length; default the whole window.
    time_constants : tuple, optional
        Known ``(t_theta, t_v)``; skips the regression.
    """
    stats = sample_stats(window)
    names = [f"theta_{b}" for b in window.bus_ids] + [f"v_{b}" for b in window.bus_ids]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", StabilityWarning)
        drift = estimate_state_matrix(stats, names)
    if time_constants is None:
        t_theta, t_v = estimate_time_constants(tc_window if tc_window is not None else window, p=tc_samples)
    else:
        t_theta, t_v = (np.asarray(x, float) for x in time_constants)
    j, s = extract_sensitivities(drift.a_hat, t_theta, t_v)
    return SensitivityEstimate(drift.a_hat, t_theta, t_v, j, s, tuple(window.bus_ids),
                               drift.log_residual, drift.condition, drift.stable, tuple(drift.warnings),
                               drift.transition)


# -- partitioning ---------------------------------------------------------------

BLOCK_NAMES = ("svp_cc", "svp_cu", "svp_uc", "svp_uu", "svq_cc", "svq_cu", "svq_uc", "svq_uu")


@dataclass
class PartitionedS:
    """Voltage rows of ``S`` split by controlled (c) and uncontrolled (u) buses.

    ``svp_xy`` holds dV_x/dP_y and ``svq_xy`` holds dV_x/dQ_y.  ``c_idx`` and
    ``u_idx`` are the positions of the two bus sets in the source ordering.
    """

    controlled: tuple
    uncontrolled: tuple
    svp_cc: np.ndarray
    svp_cu: np.ndarray
    svp_uc: np.ndarray
    svp_uu: np.ndarray
    svq_cc: np.ndarray
    svq_cu: np.ndarray
    svq_uc: np.ndarray
    svq_uu: np.ndarray
    c_idx: np.ndarray
    u_idx: np.ndarray
    source_ids: tuple

    @property
    def n_c(self):
        return len(self.controlled)

    @property
    def n_u(self):
        return len(self.uncontrolled)

    @property
    def enabled(self):
        return self.n_c > 0

    def reassemble(self):
        """``(S_VP, S_VQ)`` over the ``controlled + uncontrolled`` ordering."""
        svp = np.block([[self.svp_cc, self.svp_cu], [self.svp_uc, self.svp_uu]])
        svq = np.block([[self.svq_cc, self.svq_cu], [self.svq_uc, self.svq_uu]])
        return svp, svq


def _s_and_ids(s):
    if isinstance(s, SensitivityEstimate):
        return s.s_hat, list(s.bus_ids)
    raise TypeError("expected a SensitivityEstimate or (S, bus_ids)")


def partition(s, controlled, uncontrolled, bus_ids=None):
    """Split the voltage rows of ``S`` into the eight c/u blocks.

    ``s`` is a :class:`SensitivityEstimate` or a 2m x 2m array with
    ``bus_ids`` giving its bus ordering.
    """
    if bus_ids is None:
        s, bus_ids = _s_and_ids(s)
    s = np.asarray(s, float)
    bus_ids = list(bus_ids)
    controlled, uncontrolled = tuple(controlled), tuple(uncontrolled)
    overlap = set(controlled) & set(uncontrolled)
    if overlap:
        raise PartitionError(f"buses {sorted(overlap)} are both controlled and uncontrolled")
    pos = {b: i for i, b in enumerate(bus_ids)}
    missing = [b for b in controlled + uncontrolled if b not in pos]
    if missing:
        raise PartitionError(f"buses {missing} are not in the estimate")
    m = len(bus_ids)
    ci = np.array([pos[b] for b in controlled], dtype=int)
    ui = np.array([pos[b] for b in uncontrolled], dtype=int)
    svp = s[m:, :m]
    svq = s[m:, m:]
    sub = lambda a, r, c: a[np.ix_(r, c)]  # noqa: E731
    return PartitionedS(controlled, uncontrolled,
                        sub(svp, ci, ci), sub(svp, ci, ui), sub(svp, ui, ci), sub(svp, ui, ui),
                        sub(svq, ci, ci), sub(svq, ci, ui), sub(svq, ui, ci), sub(svq, ui, ui),
                        ci, ui, tuple(bus_ids))


def reduce_for_missing(blocks, available):
    """Drop buses without PMUs from both roles of a :class:`PartitionedS`.

    The result has ``enabled`` False when no controlled bus is left; the
    controller then stays idle instead of failing.
    """
    avail = set(available)
    unknown = avail - set(blocks.source_ids)
    if unknown:
        raise PartitionError(f"available buses {sorted(unknown)} are not modelled")
    keep_c = [i for i, b in enumerate(blocks.controlled) if b in avail]
    keep_u = [i for i, b in enumerate(blocks.uncontrolled) if b in avail]
    kc = np.array(keep_c, dtype=int)
    ku = np.array(keep_u, dtype=int)
    parts = {}
    for name in BLOCK_NAMES:
        a = getattr(blocks, name)
        r = kc if name[4] == "c" else ku
        c = kc if name[5] == "c" else ku
        parts[name] = a[np.ix_(r, c)]
    return PartitionedS(tuple(blocks.controlled[i] for i in keep_c),
                        tuple(blocks.uncontrolled[i] for i in keep_u),
                        c_idx=blocks.c_idx[kc], u_idx=blocks.u_idx[ku],
                        source_ids=blocks.source_ids, **parts)


# -- LS / TLS baselines -----------------------------------------------------------

def _differences(window):
    if not window.has_power:
        raise InsufficientDataError("LS/TLS estimation needs the P and Q channels")
    x = np.diff(window.states(), axis=0)
    y = np.diff(np.hstack([window.p, window.q]), axis=0)
    return x, y


def _check_rank(x):
    d = x.shape[1]
    if x.shape[0] < d:
        raise RankDeficientError(f"{x.shape[0]} samples for {d} unknowns per row", rank=x.shape[0])
    sv = np.linalg.svd(x, compute_uv=False)
    tol = sv[0] * max(x.shape) * np.finfo(float).eps if sv.size and sv[0] > 0 else 0.0
    rank = int(np.sum(sv > tol)) if sv.size and sv[0] > 0 else 0
    if rank < d:
        raise RankDeficientError(f"state differences have numerical rank {rank} < {d}", rank=rank)


def estimate_ls(window=None, dx=None, dy=None):
    """Least-squares ``J`` from ``[dP; dQ] = J [dtheta; dV]`` over consecutive differences."""
    if window is not None:
        dx, dy = _differences(window)
    dx, dy = np.asarray(dx, float), np.asarray(dy, float)
    _check_rank(dx)
    jt, *_ = np.linalg.lstsq(dx, dy, rcond=None)
    return jt.T


def estimate_tls(window=None, dx=None, dy=None):
    """Total-least-squares ``J`` from the smallest right singular subspace of ``[dX dY]``."""
    if window is not None:
        dx, dy = _differences(window)
    dx, dy = np.asarray(dx, float), np.asarray(dy, float)
    _check_rank(dx)
    d = dx.shape[1]
    _, _, vt = np.linalg.svd(np.hstack([dx, dy]), full_matrices=False)
    v = vt.T
    v12 = v[:d, d:]
    v22 = v[d:, d:]
    if np.linalg.cond(v22) > 1e14:
        raise RankDeficientError("TLS solution does not exist (singular V22 block)", rank=None)
    jt = -np.linalg.solve(v22.T, v12.T).T
    return jt.T
