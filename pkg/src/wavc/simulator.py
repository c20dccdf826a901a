"""Stochastic load and SVC dynamics, scenario events and PMU streams.

The load buses follow first-order recovery dynamics driven by Gaussian load
fluctuations::

    d theta_k = (P_k - Ps_k) / tau_theta_k dt - Ps_k sigma_P_k / tau_theta_k dW
    d V_k     = (Q_k - Qs_k) / tau_V_k dt     - Qs_k sigma_Q_k / tau_V_k dW

with ``P_k``, ``Q_k`` the power absorbed from the network (plus the SVC
injection on the reactive side).  Integration is Euler-Maruyama on a fixed
step; PMU rows are taken at the start of every sample interval.

SVCs run in one of two modes.  ``active`` integrates the filter and firing
angle regulator.  ``frozen`` holds the firing angle, which is how ambient
windows for identification are recorded: the SVC then acts as a fixed
susceptance and the load dynamics are exactly the linear OU process of the
network model.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.linalg import expm, solve_continuous_lyapunov

from .errors import IntegrationDivergedError, WavcError
from .netmodel import network_model, solve_power_flow

NOISE_KINDS = ("none", "low", "high")
EVENT_KINDS = ("load_step", "line_trip", "set_vref")
SVC_MODES = ("active", "frozen")


# -- data types ---------------------------------------------------------------

@dataclass
class SystemState:
    t: float
    theta: np.ndarray
    v: np.ndarray
    svc_vm: np.ndarray
    svc_alpha: np.ndarray
    svc_vref: np.ndarray

    def copy(self):
        return SystemState(self.t, self.theta.copy(), self.v.copy(), self.svc_vm.copy(),
                           self.svc_alpha.copy(), self.svc_vref.copy())


@dataclass
class NoiseModel:
    """Measurement noise added to PMU rows.

    ``low`` uses a standard deviation of ``low_fraction`` times the largest
    sample-to-sample change of each channel over the noise-free window;
    ``high`` uses a fixed ``high_std`` on the angle and magnitude channels.
    Process noise is not part of this model; it is drawn from the scenario
    seed so that measurement and process streams stay independent.
    """

    kind: str = "none"
    seed: int = 0
    high_std: float = 1e-4
    low_fraction: float = 0.1

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise WavcError(f"unknown noise kind {self.kind!r}; expected one of {NOISE_KINDS}")

    def rng(self, stream=7):
        return np.random.default_rng(np.random.SeedSequence([int(self.seed), int(stream)]))

    def channel_std(self, window):
        """Per-bus ``(theta_std, v_std)`` for ``window`` (truth, before noise)."""
        m = len(window.bus_ids)
        if self.kind == "none":
            return np.zeros(m), np.zeros(m)
        if self.kind == "high":
            return np.full(m, self.high_std), np.full(m, self.high_std)
        if window.n < 2:
            return np.zeros(m), np.zeros(m)
        th = self.low_fraction * np.max(np.abs(np.diff(window.theta, axis=0)), axis=0)
        vv = self.low_fraction * np.max(np.abs(np.diff(window.v, axis=0)), axis=0)
        return th, vv


@dataclass
class PmuWindow:
    sample_rate: float
    t0: float
    theta: np.ndarray
    v: np.ndarray
    bus_ids: list
    p: Optional[np.ndarray] = None
    q: Optional[np.ndarray] = None

    def __post_init__(self):
        n, m = self.theta.shape
        if self.v.shape != (n, m) or len(self.bus_ids) != m:
            raise WavcError("PMU channels disagree in shape or bus ordering")
        for ch in (self.p, self.q):
            if ch is not None and ch.shape != (n, m):
                raise WavcError("PMU power channels disagree in shape")

    @property
    def n(self):
        return self.theta.shape[0]

    @property
    def dt(self):
        return 1.0 / self.sample_rate

    @property
    def t(self):
        return self.t0 + np.arange(self.n) / self.sample_rate

    @property
    def has_power(self):
        return self.p is not None and self.q is not None

    def states(self):
        """Stacked ``[theta, V]`` rows, shape (n, 2m)."""
        return np.hstack([self.theta, self.v])

    def select(self, buses):
        pos = {b: i for i, b in enumerate(self.bus_ids)}
        try:
            idx = [pos[b] for b in buses]
        except KeyError as exc:
            raise WavcError(f"bus {exc.args[0]} is not in the window") from None
        pick = lambda a: None if a is None else a[:, idx]  # noqa: E731
        return PmuWindow(self.sample_rate, self.t0, self.theta[:, idx], self.v[:, idx],
                         list(buses), pick(self.p), pick(self.q))

    def slice(self, start_s=None, stop_s=None):
        """Rows with ``start_s <= t < stop_s`` (times in seconds)."""
        t = self.t
        mask = np.ones(self.n, dtype=bool)
        if start_s is not None:
            mask &= t >= start_s - 1e-9
        if stop_s is not None:
            mask &= t < stop_s - 1e-9
        idx = np.flatnonzero(mask)
        if idx.size == 0:
            raise WavcError("empty window slice")
        sl = slice(idx[0], idx[-1] + 1)
        cut = lambda a: None if a is None else a[sl]  # noqa: E731
        return PmuWindow(self.sample_rate, float(t[idx[0]]), self.theta[sl], self.v[sl],
                         list(self.bus_ids), cut(self.p), cut(self.q))


@dataclass
class ScenarioEvent:
    at: float
    kind: str
    buses: tuple = ()
    dp: float = 0.0
    dq: float = 0.0
    branch: Optional[tuple] = None
    bus: Optional[int] = None
    value: Optional[float] = None

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise WavcError(f"unknown event kind {self.kind!r}")
        if self.at < 0:
            raise WavcError("event time must be non-negative")
        if self.kind == "line_trip" and (self.branch is None or len(self.branch) != 2):
            raise WavcError("line_trip needs a two-bus branch")
        if self.kind == "set_vref" and (self.bus is None or self.value is None):
            raise WavcError("set_vref needs bus and value")

    def to_dict(self):
        d = {"at": self.at, "kind": self.kind}
        if self.kind == "load_step":
            d.update(buses=list(self.buses), dp=self.dp, dq=self.dq)
        elif self.kind == "line_trip":
            d["branch"] = list(self.branch)
        else:
            d.update(bus=self.bus, value=self.value)
        return d


def event_from_dict(d):
    branch = d.get("branch")
    return ScenarioEvent(
        at=float(d["at"]),
        kind=d["kind"],
        buses=tuple(int(b) for b in d.get("buses", ())),
        dp=float(d.get("dp", 0.0)),
        dq=float(d.get("dq", 0.0)),
        branch=None if branch is None else (int(branch[0]), int(branch[1])),
        bus=None if d.get("bus") is None else int(d["bus"]),
        value=None if d.get("value") is None else float(d["value"]),
    )


@dataclass
class Scenario:
    duration_s: float
    dt_s: float = 1.0 / 600.0
    sample_rate_hz: float = 60.0
    noise: NoiseModel = field(default_factory=NoiseModel)
    events: list = field(default_factory=list)
    seed: int = 0
    svc_mode: str = "active"
    controller: Optional[dict] = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.duration_s <= 0 or self.dt_s <= 0 or self.sample_rate_hz <= 0:
            raise WavcError("duration, dt and sample rate must be positive")
        if self.svc_mode not in SVC_MODES:
            raise WavcError(f"unknown svc_mode {self.svc_mode!r}")
        ratio = 1.0 / (self.dt_s * self.sample_rate_hz)
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise WavcError("dt_s must divide the PMU sample interval")
        self.events = sorted(self.events, key=lambda e: e.at)

    @property
    def substeps(self):
        return int(round(1.0 / (self.dt_s * self.sample_rate_hz)))

    @property
    def n_samples(self):
        return int(round(self.duration_s * self.sample_rate_hz))


def scenario_from_dict(d):
    noise = d.get("noise", "none")
    if isinstance(noise, str):
        noise = {"kind": noise}
    seed = int(d.get("seed", 0))
    noise = NoiseModel(**{"seed": seed, **noise})
    known = {"duration_s", "dt_s", "sample_rate_hz", "noise", "events", "seed", "svc_mode", "controller"}
    return Scenario(
        duration_s=float(d["duration_s"]),
        dt_s=float(d.get("dt_s", 1.0 / 600.0)),
        sample_rate_hz=float(d.get("sample_rate_hz", 60.0)),
        noise=noise,
        events=[event_from_dict(e) for e in d.get("events", [])],
        seed=seed,
        svc_mode=d.get("svc_mode", "active"),
        controller=d.get("controller"),
        extra={k: v for k, v in d.items() if k not in known},
    )


def scenario_to_dict(sc):
    d = {
        "duration_s": sc.duration_s,
        "dt_s": sc.dt_s,
        "sample_rate_hz": sc.sample_rate_hz,
        "noise": {"kind": sc.noise.kind, "high_std": sc.noise.high_std,
                  "low_fraction": sc.noise.low_fraction},
        "events": [e.to_dict() for e in sc.events],
        "seed": sc.seed,
        "svc_mode": sc.svc_mode,
    }
    if sc.controller is not None:
        d["controller"] = sc.controller
    d.update(sc.extra)
    return d


def load_scenario(path):
    p = Path(path)
    if not p.exists():
        alt = Path(__file__).parent / "data" / p.name
        if not p.suffix:
            alt = alt.with_suffix(".json")
        if alt.exists():
            p = alt
    with open(p, encoding="utf-8") as fh:
        return scenario_from_dict(json.load(fh))


# -- dynamics -----------------------------------------------------------------

class Dynamics:
    """Right-hand side of the load and SVC equations for one network topology.

    Holds mutable copies of the demand vectors so that load steps and line
    trips can be applied during a run without touching the case.
    """

    def __init__(self, case):
        self.case = case
        self.model = network_model(case)
        md = self.model
        self.ps = md.ps.copy()
        self.qs = md.qs.copy()
        self.pos = md.svc_pos
        self.sp = md.svc_arrays()
        self._refresh_noise()

    def _refresh_noise(self):
        md = self.model
        self.h_theta = -self.ps * md.sigma_p / md.tau_theta
        self.h_v = -self.qs * md.sigma_q / md.tau_v
        self.inv_tau_theta = 1.0 / md.tau_theta
        self.inv_tau_v = 1.0 / md.tau_v
        sp = self.sp
        if len(self.pos):
            # regulator coefficients of d(alpha)/dt = -c_d a + c_f (vm - k_m v) + c_r (vref - vm)
            self._c_d = sp["k_d"] / sp["t2"]
            self._c_f = sp["k"] * sp["t1"] / (sp["t2"] * sp["t2"] * sp["t_m"])
            self._c_r = sp["k"] / sp["t2"]
            self._b0 = np.pi * (2 - sp["x_l"] / sp["x_c"])
            self._bd = np.pi * sp["x_l"]

    @property
    def load_ids(self):
        return self.model.load_ids

    @property
    def svc_ids(self):
        return self.model.svc_ids

    def svc_q(self, v, alpha):
        vk = v[self.pos]
        return (2 * alpha - np.sin(2 * alpha) - self._b0) / self._bd * (vk * vk)

    def channels(self, theta, v, alpha):
        """PMU power channels: absorbed P and absorbed Q plus SVC injection."""
        p, q = self.model.absorption(theta, v)
        if len(self.pos):
            q[self.pos] += self.svc_q(v, alpha)
        return p, q

    def apply_load_step(self, buses, dp, dq):
        lpos = {b: i for i, b in enumerate(self.load_ids)}
        for b in buses:
            if b not in lpos:
                raise WavcError(f"load_step names bus {b}, which is not a dynamic load")
            self.ps[lpos[b]] *= 1 + dp
            self.qs[lpos[b]] *= 1 + dq
        self._refresh_noise()

    def apply_line_trip(self, a, b):
        case = self.case.with_branch_status(a, b, False)
        self.case = case
        md = network_model(case)
        self.model = md
        self._refresh_noise()

    def advance(self, theta, v, vm, alpha, vref, dt, z, svc_active):
        """One Euler-Maruyama step; ``z`` holds 2m standard normals."""
        p, q = self.channels(theta, v, alpha)
        sq = math.sqrt(dt)
        m = len(theta)
        th_new = theta + dt * (p - self.ps) * self.inv_tau_theta + self.h_theta * sq * z[:m]
        v_new = v + dt * (q - self.qs) * self.inv_tau_v + self.h_v * sq * z[m:]
        if len(self.pos):
            sp = self.sp
            vkm = sp["k_m"] * v[self.pos]
            vm_new = vm + dt * (vkm - vm) / sp["t_m"]
            if svc_active:
                da = -self._c_d * alpha + self._c_f * (vm - vkm) + self._c_r * (vref - vm)
                alpha_new = np.minimum(np.maximum(alpha + dt * da, sp["alpha_min"]), sp["alpha_max"])
            else:
                alpha_new = alpha
        else:
            vm_new, alpha_new = vm, alpha
        return th_new, v_new, vm_new, alpha_new


def _check_finite(dyn, st):
    for arr, ids in ((st.theta, dyn.load_ids), (st.v, dyn.load_ids),
                     (st.svc_vm, dyn.svc_ids), (st.svc_alpha, dyn.svc_ids)):
        bad = np.flatnonzero(~np.isfinite(arr))
        if bad.size:
            bus = ids[bad[0]]
            raise IntegrationDivergedError(f"state diverged at bus {bus}, t = {st.t:.4f} s", bus=bus, t=st.t)


def step(state, dyn, dt, z=None, svc_active=True):
    """Advance ``state`` by one Euler-Maruyama step of length ``dt``.

    ``dyn`` is a :class:`Dynamics` (a case is accepted and wrapped).  ``z``
    is the vector of 2m standard normal increments; ``None`` means no process
    noise.
    """
    if dt <= 0:
        raise WavcError("dt must be positive")
    if not isinstance(dyn, Dynamics):
        dyn = Dynamics(dyn)
    m = len(state.theta)
    if z is None:
        z = np.zeros(2 * m)
    th, v, vm, al = dyn.advance(state.theta, state.v, state.svc_vm, state.svc_alpha,
                                state.svc_vref, dt, z, svc_active)
    out = SystemState(state.t + dt, th, v, vm, al, state.svc_vref.copy())
    _check_finite(dyn, out)
    return out


def initial_state(case, pf=None):
    """Equilibrium state from the solved power flow, SVC regulators settled."""
    if pf is None:
        pf = solve_power_flow(case)
    md = pf.model
    pos = md.svc_pos
    vm = md.svc_arrays()["k_m"] * pf.v[pos] if len(pos) else np.zeros(0)
    return SystemState(0.0, pf.theta.copy(), pf.v.copy(), vm, pf.alpha.copy(), pf.vref.copy())


def sample_pmu(state, dyn, noise=None, rng=None, std=None):
    """One PMU row ``(theta, v, p, q)``; measurement noise on theta and v.

    ``std`` overrides the per-bus ``(theta_std, v_std)`` of ``noise``; it is
    required for ``low`` noise, whose level is set from a reference window.
    """
    p, q = dyn.channels(state.theta, state.v, state.svc_alpha)
    theta, v = state.theta.copy(), state.v.copy()
    if noise is not None and noise.kind != "none":
        if std is None:
            if noise.kind == "low":
                raise WavcError("low measurement noise needs a per-channel std from a reference window")
            m = len(theta)
            std = (np.full(m, noise.high_std), np.full(m, noise.high_std))
        rng = noise.rng() if rng is None else rng
        theta = theta + std[0] * rng.standard_normal(len(theta))
        v = v + std[1] * rng.standard_normal(len(v))
    return theta, v, p, q


def apply_measurement_noise(window, noise, std=None, stream=8):
    """Copy of ``window`` with measurement noise on the angle and magnitude channels."""
    if noise.kind == "none":
        return replace(window, theta=window.theta.copy(), v=window.v.copy())
    if std is None:
        std = noise.channel_std(window)
    rng = noise.rng(stream)
    n, m = window.theta.shape
    th = window.theta + std[0] * rng.standard_normal((n, m))
    vv = window.v + std[1] * rng.standard_normal((n, m))
    return replace(window, theta=th, v=vv)


# -- runs ---------------------------------------------------------------------

@dataclass
class PmuSample:
    """What a closed-loop observer sees at one PMU instant."""

    t: float
    theta: np.ndarray
    v: np.ndarray
    p: np.ndarray
    q: np.ndarray
    svc_q: np.ndarray
    svc_vref: np.ndarray


@dataclass
class SimulationResult:
    t: np.ndarray
    theta: np.ndarray
    v: np.ndarray
    p: np.ndarray
    q: np.ndarray
    svc_alpha: np.ndarray
    svc_vref: np.ndarray
    svc_q: np.ndarray
    load_ids: list
    svc_ids: list
    sample_rate: float
    final_state: SystemState
    log: list = field(default_factory=list)

    def window(self):
        return PmuWindow(self.sample_rate, float(self.t[0]), self.theta, self.v,
                         list(self.load_ids), self.p, self.q)


BLOCK = 4096


def run(case, scenario, observer=None, measurement_std=None, pf=None, state=None, stream=1):
    """Integrate ``case`` through ``scenario``.

    Parameters
    ----------
    case : GridCase
    scenario : Scenario
    observer : callable, optional
        Called as ``observer(sample)`` with a :class:`PmuSample` at every PMU
        instant; it may return a mapping ``{svc_bus: vref}`` which is applied
        immediately (the closed-loop path of the controller).
    measurement_std : tuple of arrays, optional
        Per-bus ``(theta_std, v_std)`` of the noise added to the samples the
        observer sees.  Defaults to the scenario noise model (``high`` only).
    pf : PowerFlowResult, optional
        Starting equilibrium; solved from the case when omitted.
    state : SystemState, optional
        Explicit start state, overriding ``pf``.
    stream : int
        Key of the process-noise stream under the scenario seed, so that an
        ambient run and a disturbance run with the same seed stay independent.

    Returns
    -------
    SimulationResult
        Noise-free PMU-rate trajectory (the truth) plus the final state.
    """
    dyn = Dynamics(case)
    if state is None:
        state = initial_state(case, pf)
    st = state.copy()
    m = dyn.model.m
    ns = len(dyn.svc_ids)
    nsub = scenario.substeps
    dt = scenario.dt_s
    n = scenario.n_samples
    svc_active = scenario.svc_mode == "active"
    proc = np.random.default_rng(np.random.SeedSequence([int(scenario.seed), int(stream)]))
    noise = scenario.noise
    meas_rng = noise.rng()
    if measurement_std is None and noise.kind == "high":
        measurement_std = (np.full(m, noise.high_std), np.full(m, noise.high_std))
    noisy = measurement_std is not None and noise.kind != "none"
    svc_index = {b: i for i, b in enumerate(dyn.svc_ids)}

    out = {k: np.empty((n, m)) for k in ("theta", "v", "p", "q")}
    out_alpha = np.empty((n, ns))
    out_vref = np.empty((n, ns))
    out_sq = np.empty((n, ns))
    times = st.t + np.arange(n) / scenario.sample_rate_hz
    events = list(scenario.events)
    ev_i = 0
    log = []
    zbuf = np.empty((0, 2 * m))
    zpos = 0
    th, v, vm, al, vref = st.theta, st.v, st.svc_vm, st.svc_alpha, st.svc_vref.copy()
    t = st.t
    total = n * nsub
    k = 0
    for i in range(n):
        t = times[i] if i else st.t
        while ev_i < len(events) and events[ev_i].at <= t + 1e-12:
            ev = events[ev_i]
            if ev.kind == "load_step":
                dyn.apply_load_step(ev.buses, ev.dp, ev.dq)
            elif ev.kind == "line_trip":
                dyn.apply_line_trip(*ev.branch)
            else:
                if ev.bus not in svc_index:
                    raise WavcError(f"set_vref event at t={ev.at} names bus {ev.bus}, which has no SVC")
                vref[svc_index[ev.bus]] = ev.value
            log.append({"t": float(t), "event": ev.to_dict()})
            ev_i += 1
        p, q = dyn.channels(th, v, al)
        sq_now = dyn.svc_q(v, al) if ns else np.zeros(0)
        out["theta"][i] = th
        out["v"][i] = v
        out["p"][i] = p
        out["q"][i] = q
        out_alpha[i] = al
        out_sq[i] = sq_now
        if observer is not None:
            mth, mv = th, v
            if noisy:
                mth = th + measurement_std[0] * meas_rng.standard_normal(m)
                mv = v + measurement_std[1] * meas_rng.standard_normal(m)
            cmd = observer(PmuSample(float(t), mth.copy(), mv.copy(), p.copy(), q.copy(),
                                     sq_now.copy(), vref.copy()))
            if cmd:
                for bus, val in cmd.items():
                    vref[svc_index[bus]] = val
        out_vref[i] = vref
        if not (np.all(np.isfinite(th)) and np.all(np.isfinite(v)) and np.all(np.isfinite(al))):
            cur = SystemState(float(t), th, v, vm, al, vref)
            try:
                _check_finite(dyn, cur)
            except IntegrationDivergedError as exc:
                raise IntegrationDivergedError(f"{exc} (after {len(log)} events)", exc.bus, exc.t) from None
        for _ in range(nsub):
            if zpos >= zbuf.shape[0]:
                zbuf = proc.standard_normal((min(BLOCK, total - k), 2 * m))
                zpos = 0
            th, v, vm, al = dyn.advance(th, v, vm, al, vref, dt, zbuf[zpos], svc_active)
            zpos += 1
            k += 1
    final = SystemState(float(st.t + n / scenario.sample_rate_hz), th, v, vm, al, vref.copy())
    _check_finite(dyn, final)
    return SimulationResult(times, out["theta"], out["v"], out["p"], out["q"], out_alpha, out_vref,
                            out_sq, list(dyn.load_ids), list(dyn.svc_ids), scenario.sample_rate_hz,
                            final, log)


# -- exact linear OU sampling ---------------------------------------------------

def stationary_covariance(a, h):
    """Solution ``C`` of ``A C + C A^T + H H^T = 0``."""
    q = h @ h.T
    c = solve_continuous_lyapunov(a, -q)
    return 0.5 * (c + c.T)


def sample_linear_ou(a, h, duration_s, sample_rate_hz, seed, x0=None):
    """Exact discrete samples of ``dx = A x dt + H dW``.

    Uses the transition ``x_{k+1} = e^{A dt} x_k + w_k`` with
    ``cov(w) = C - e^{A dt} C e^{A dt}^T``.  The first row is drawn from the
    stationary law unless ``x0`` is given.  Returns an (n, d) array.
    """
    a = np.asarray(a, dtype=float)
    h = np.asarray(h, dtype=float)
    dt = 1.0 / sample_rate_hz
    n = int(round(duration_s * sample_rate_hz))
    d = a.shape[0]
    phi = expm(a * dt)
    c = stationary_covariance(a, h)
    w = c - phi @ c @ phi.T
    lw = np.linalg.cholesky(0.5 * (w + w.T) + 1e-300 * np.eye(d))
    rng = np.random.default_rng(seed)
    x = np.empty((n, d))
    x[0] = np.linalg.cholesky(c) @ rng.standard_normal(d) if x0 is None else x0
    z = rng.standard_normal((n - 1, d)) @ lw.T
    for k in range(1, n):
        x[k] = phi @ x[k - 1] + z[k - 1]
    return x


# -- CSV ------------------------------------------------------------------------

def trajectory_header(bus_ids):
    cols = ["t"]
    for ch in ("theta", "v", "p", "q"):
        cols += [f"{ch}_{b}" for b in bus_ids]
    return cols


def write_trajectory_csv(result, path):
    """Write a PMU-rate trajectory (a :class:`SimulationResult` or :class:`PmuWindow`)."""
    if isinstance(result, SimulationResult):
        win = result.window()
    else:
        win = result
    m = len(win.bus_ids)
    zeros = np.full((win.n, m), np.nan)
    data = np.column_stack([win.t, win.theta, win.v,
                            win.p if win.p is not None else zeros,
                            win.q if win.q is not None else zeros])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trajectory_header(win.bus_ids))
        for row in data:
            w.writerow([repr(float(x)) for x in row])


def read_trajectory_csv(path):
    """Read a trajectory CSV back into a :class:`PmuWindow`."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    if header[0] != "t":
        raise WavcError(f"{path}: first column must be t")
    ids = [int(c.split("_", 1)[1]) for c in header if c.startswith("theta_")]
    m = len(ids)
    if header != trajectory_header(ids):
        raise WavcError(f"{path}: unexpected column layout")
    data = np.array([[float(x) for x in r] for r in rows[1:]])
    if data.shape[0] < 2:
        raise WavcError(f"{path}: need at least two samples")
    t = data[:, 0]
    rate = 1.0 / float(np.median(np.diff(t)))
    rate = round(rate, 6)
    blocks = [data[:, 1 + k * m:1 + (k + 1) * m] for k in range(4)]
    p = None if np.all(np.isnan(blocks[2])) else blocks[2]
    q = None if np.all(np.isnan(blocks[3])) else blocks[3]
    return PmuWindow(rate, float(t[0]), blocks[0], blocks[1], ids, p, q)
