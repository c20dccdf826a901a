"""Wide-area voltage control through SVC reference updates.

At each PMU instant the controller checks its gates (settling delay after the
disturbance, minimum spacing between actions, deviation threshold).  When
they pass, it predicts the uncontrolled-bus deviations as an affine function
of the controlled-bus voltages::

    dV_u = M_c dV_c + dist,   M_c = S_VQ,uc S_VQ,cc^{-1}

where ``dist`` is identified from the current measurements, and picks the
controlled-bus voltage targets minimising ``||dV_u||_inf`` within the voltage
and SVC output limits.  Targets are dispatched as absolute SVC references.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ControllerSkip, WavcError
from .estimator import partition
from .lpsolver import LinfProblem, solve_linf
from .netmodel import svc_q_limits

MODES = ("none", "model_free", "model_based", "model_based_stale")


@dataclass
class ControllerConfig:
    mode: str = "model_free"
    d1: float = 30.0
    d2: float = 0.2
    threshold: float = 0.005
    v_c_bounds: Optional[list] = None
    q_c_bounds: Optional[list] = None
    ss_window: float = 20.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise WavcError(f"unknown controller mode {self.mode!r}; expected one of {MODES}")
        if not (self.d1 > 0 and self.d2 > 0 and self.threshold > 0 and self.ss_window > 0):
            raise WavcError("d1, d2, threshold and ss_window must be positive")
        for name in ("v_c_bounds", "q_c_bounds"):
            bounds = getattr(self, name)
            if bounds is not None and any(lo > hi for lo, hi in bounds):
                raise WavcError(f"{name} must be ordered (min, max) pairs")


def default_threshold(case):
    """0.01 p.u. on 68-bus-shape systems, 0.005 p.u. otherwise."""
    return 0.01 if len(case.buses) >= 60 else 0.005


def config_from_dict(d, case=None, mode=None):
    d = dict(d or {})
    thr = d.get("threshold_pu")
    if thr is None:
        thr = default_threshold(case) if case is not None else 0.005
    return ControllerConfig(
        mode=mode or d.get("mode", "model_free"),
        d1=float(d.get("d1_s", 30.0)),
        d2=float(d.get("d2_s", 0.2)),
        threshold=float(thr),
        v_c_bounds=d.get("vc_bounds"),
        q_c_bounds=d.get("qc_bounds"),
        ss_window=float(d.get("ss_window_s", 20.0)),
    )


@dataclass
class ControlState:
    """Reference values and bookkeeping for one closed-loop run.

    ``v_ref_u`` / ``v_c0`` are the pre-disturbance steady-state voltages at
    the uncontrolled and controlled buses, ``vref0`` and ``q_c0`` the SVC
    references and outputs there.  ``target`` is the current controlled-bus
    voltage change relative to ``v_c0`` requested by the controller.
    """

    uncontrolled: tuple
    controlled: tuple
    v_ref_u: np.ndarray
    v_c0: np.ndarray
    vref0: np.ndarray
    q_c0: np.ndarray
    v_ref_c: np.ndarray
    disturbance_t: float = 0.0
    last_action_t: float = -math.inf
    target: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.target is None:
            self.target = np.zeros(len(self.controlled))


@dataclass
class ControlAction:
    t: float
    buses: tuple
    delta_vref: np.ndarray
    vref: np.ndarray
    predicted_objective: float


def should_act(t, dv_u, state, config):
    """All three gates: settling delay, action spacing, deviation threshold."""
    if t < state.disturbance_t + config.d1 - 1e-9:
        return False
    if t < state.last_action_t + config.d2 - 1e-9:
        return False
    dv_u = np.asarray(dv_u)
    return bool(dv_u.size) and float(np.max(np.abs(dv_u))) >= config.threshold


def gain_matrix(blocks):
    """``M_c = S_VQ,uc S_VQ,cc^{-1}``; raises :class:`ControllerSkip` if singular."""
    scc = blocks.svq_cc
    cond = np.linalg.cond(scc) if scc.size else 1.0
    if not np.isfinite(cond) or cond > 1e12:
        raise ControllerSkip(f"S_VQ,cc is singular (cond {cond:.2e})")
    return np.linalg.solve(scc.T, blocks.svq_uc.T).T


def _bounds(config, n_c, default):
    if config is None:
        return np.array([default] * n_c, dtype=float)
    arr = np.asarray(config, dtype=float).reshape(-1, 2)
    if arr.shape[0] == 1 and n_c != 1:
        arr = np.repeat(arr, n_c, axis=0)
    if arr.shape[0] != n_c:
        raise WavcError(f"expected {n_c} bound pairs, got {arr.shape[0]}")
    return arr


def assemble_problem(blocks, dv_u, dv_c, dq_c, state, config, q_limits=None):
    """LP for the controlled-bus voltage targets ``x`` (relative to ``v_c0``).

    Parameters
    ----------
    blocks : PartitionedS
    dv_u, dv_c : array
        Measured voltage deviations from the pre-disturbance steady state.
    dq_c : array
        Measured change of the SVC reactive injections.
    q_limits : array, optional
        (n_c, 2) SVC injection limits used when the config has none.

    Notes
    -----
    The residual map is ``M_c`` with offset ``dist = dv_u - M_c dv_c``.  The
    SVC injection after the move is predicted as
    ``dq(x) = -S_cc^{-1} x + dq_c + S_cc^{-1} dv_c`` and kept inside its limits.
    """
    mc = gain_matrix(blocks)
    n_c = blocks.n_c
    dist = np.asarray(dv_u, float) - mc @ np.asarray(dv_c, float)
    vb = _bounds(config.v_c_bounds, n_c, (0.90, 1.10))
    x_lo = vb[:, 0] - state.vref0
    x_hi = vb[:, 1] - state.vref0
    if np.any(x_lo > x_hi):
        raise ControllerSkip("voltage bounds exclude the reference range")
    qb = _bounds(config.q_c_bounds, n_c, (0.0, 0.0)) if config.q_c_bounds is not None else q_limits
    if qb is None:
        return LinfProblem(mc, dist, x_lo, x_hi)
    inv = np.linalg.inv(blocks.svq_cc)
    q0 = np.asarray(dq_c, float) + inv @ np.asarray(dv_c, float)
    g = -inv
    g_lo = qb[:, 0] - state.q_c0 - q0
    g_hi = qb[:, 1] - state.q_c0 - q0
    return LinfProblem(mc, dist, x_lo, x_hi, g, g_lo, g_hi)


def tick(t, sample, blocks, state, config, bus_pos, svc_pos, q_limits=None, log=None):
    """One control step; returns a :class:`ControlAction` or ``None``.

    ``bus_pos`` maps bus id to its column in ``sample.v``; ``svc_pos`` maps an
    SVC bus to its index in ``sample.svc_q``.  ``q_limits`` rows follow
    ``state.controlled``.  Failures are appended to
    ``log`` and the tick is skipped.
    """
    if not blocks.enabled:
        return None
    u_cols = [bus_pos[b] for b in blocks.uncontrolled]
    u_ref = [state.uncontrolled.index(b) for b in blocks.uncontrolled]
    dv_u = sample.v[u_cols] - state.v_ref_u[u_ref]
    if not should_act(t, dv_u, state, config):
        return None
    c_state = [state.controlled.index(b) for b in blocks.controlled]
    dv_c = sample.v[[bus_pos[b] for b in blocks.controlled]] - state.v_c0[c_state]
    dq_c = sample.svc_q[[svc_pos[b] for b in blocks.controlled]] - state.q_c0[c_state]
    sub = _SubState(state, c_state)
    if q_limits is not None:
        q_limits = np.asarray(q_limits)[c_state]
    try:
        prob = assemble_problem(blocks, dv_u, dv_c, dq_c, sub, config, q_limits)
        sol = solve_linf(prob, prefer=state.target[c_state])
    except (ControllerSkip, np.linalg.LinAlgError) as exc:
        if log is not None:
            log.append({"t": float(t), "skip": str(exc)})
        return None
    if sol.status != "optimal":
        if log is not None:
            log.append({"t": float(t), "skip": f"LP infeasible at constraint {sol.infeasible_constraint}"})
        return None
    new_ref = state.vref0[c_state] + sol.x
    old_ref = state.v_ref_c[c_state].copy()
    state.v_ref_c[c_state] = new_ref
    state.target[c_state] = sol.x
    state.last_action_t = t
    return ControlAction(float(t), tuple(blocks.controlled), new_ref - old_ref, new_ref, sol.objective)


@dataclass
class _SubState:
    """View of a :class:`ControlState` restricted to the dispatched SVCs."""

    parent: ControlState
    idx: list

    @property
    def vref0(self):
        return self.parent.vref0[self.idx]

    @property
    def q_c0(self):
        return self.parent.q_c0[self.idx]


class WavcController:
    """Closed-loop observer for :func:`wavc.simulator.run`.

    Parameters
    ----------
    config : ControllerConfig
    blocks : PartitionedS or None
        Sensitivity blocks; ``None`` (or ``mode == "none"``) disables control.
    state : ControlState
    load_ids, svc_ids : list
        Orderings of the simulator's sample vectors.
    q_limits : array, optional
        Per-controlled-bus SVC injection limits.
    """

    def __init__(self, config, blocks, state, load_ids, svc_ids, q_limits=None):
        self.config = config
        self.blocks = blocks
        self.state = state
        self.bus_pos = {b: i for i, b in enumerate(load_ids)}
        self.svc_pos = {b: i for i, b in enumerate(svc_ids)}
        self.q_limits = q_limits
        self.actions = []
        self.log = []
        self.solve_times = []

    def __call__(self, sample):
        if self.config.mode == "none" or self.blocks is None:
            return None
        t0 = time.perf_counter()
        act = tick(sample.t, sample, self.blocks, self.state, self.config, self.bus_pos,
                   self.svc_pos, self.q_limits, self.log)
        if act is None:
            return None
        self.solve_times.append(time.perf_counter() - t0)
        self.actions.append(act)
        return {b: float(v) for b, v in zip(act.buses, act.vref)}


def svc_q_bounds(case, buses):
    """SVC injection limits at 1 p.u. for ``buses`` as an (n, 2) array."""
    return np.array([svc_q_limits(case.svc(b)) for b in buses], dtype=float).reshape(-1, 2)


def analytic_blocks(pf, controlled, uncontrolled):
    """Partitioned ``S = J^{-1}`` from the analytic Jacobian at ``pf``."""
    md = pf.model
    j = md.jacobian(pf.theta, pf.v).full
    s = np.linalg.solve(j, np.eye(j.shape[0]))
    return partition(s, controlled, uncontrolled, bus_ids=md.load_ids)


def performance_index(v_u, v_ref_u, t=None, ss_window=None):
    """RMS over buses of the steady-state deviation from the references.

    ``v_u`` is (n_samples, n_u); with ``t`` and ``ss_window`` only samples in
    the final ``ss_window`` seconds are averaged, otherwise all rows are.
    """
    v_u = np.atleast_2d(np.asarray(v_u, dtype=float))
    if t is not None and ss_window is not None:
        t = np.asarray(t, dtype=float)
        if t[-1] - t[0] < ss_window:
            raise WavcError("trajectory is shorter than the steady-state window")
        v_u = v_u[t >= t[-1] - ss_window + 1e-9]
    vss = v_u.mean(axis=0)
    dev = vss - np.asarray(v_ref_u, dtype=float)
    return float(np.sqrt(np.sum(dev * dev) / dev.size)) if dev.size else 0.0
