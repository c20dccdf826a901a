"""Static network model: admittance assembly, load-bus power absorption,
its analytic Jacobian and the Newton power flow.

Sign convention: ``P`` and ``Q`` returned here are the powers *absorbed* from
the network at a bus, i.e. the negative of the usual bus injection
``V * conj(Y V)``.  With this convention a dynamic load is in equilibrium
when its absorption equals its demand ``(Ps, Qs)``.

Generator buses are ideal sources with fixed magnitude and angle; static
(transit) buses are Kron-reduced away before any dynamic computation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import PowerFlowError, ZeroImpedanceError


@dataclass
class AdmittanceMatrix:
    g: np.ndarray
    b: np.ndarray
    bus_ids: list

    @property
    def y(self):
        return self.g + 1j * self.b

    @classmethod
    def from_complex(cls, y, bus_ids):
        return cls(np.ascontiguousarray(y.real), np.ascontiguousarray(y.imag), list(bus_ids))

    def index(self, ids):
        pos = {bid: i for i, bid in enumerate(self.bus_ids)}
        return np.array([pos[i] for i in ids], dtype=int)


@dataclass
class JacobianBlocks:
    p_theta: np.ndarray
    p_v: np.ndarray
    q_theta: np.ndarray
    q_v: np.ndarray

    @property
    def full(self):
        return np.block([[self.p_theta, self.p_v], [self.q_theta, self.q_v]])

    @classmethod
    def from_full(cls, j):
        m = j.shape[0] // 2
        return cls(j[:m, :m].copy(), j[:m, m:].copy(), j[m:, :m].copy(), j[m:, m:].copy())


def build_admittance(case):
    """Bus admittance matrix of ``case`` in its bus order.

    Parallel branches add.  Out-of-service branches are skipped.
    """
    ids = case.bus_ids
    pos = {bid: i for i, bid in enumerate(ids)}
    n = len(ids)
    y = np.zeros((n, n), dtype=complex)
    for br in case.branches:
        if not br.in_service:
            continue
        z = complex(br.r, br.x)
        if z == 0:
            raise ZeroImpedanceError(f"branch {br.from_bus}-{br.to_bus} has zero impedance")
        ys = 1.0 / z
        i, k = pos[br.from_bus], pos[br.to_bus]
        half = 0.5j * br.b_shunt
        y[i, i] += ys + half
        y[k, k] += ys + half
        y[i, k] -= ys
        y[k, i] -= ys
    for b in case.buses:
        if b.g_shunt or b.b_shunt:
            i = pos[b.id]
            y[i, i] += complex(b.g_shunt, b.b_shunt)
    return AdmittanceMatrix.from_complex(y, ids)


def kron_reduce(adm, keep_ids):
    """Eliminate every bus not in ``keep_ids`` (zero-injection elimination)."""
    keep = adm.index(keep_ids)
    drop = np.setdiff1d(np.arange(len(adm.bus_ids)), keep)
    y = adm.y
    if drop.size == 0:
        return AdmittanceMatrix.from_complex(y[np.ix_(keep, keep)], keep_ids)
    ykk = y[np.ix_(keep, keep)]
    yks = y[np.ix_(keep, drop)]
    ysk = y[np.ix_(drop, keep)]
    yss = y[np.ix_(drop, drop)]
    red = ykk - yks @ np.linalg.solve(yss, ysk)
    return AdmittanceMatrix.from_complex(red, keep_ids)


def _complex_voltage(v, theta):
    return np.asarray(v) * np.exp(1j * np.asarray(theta))


def power_injections(v, theta, adm, load_ids):
    """Absorbed ``(P, Q)`` at ``load_ids`` for bus voltages ``v``/``theta``
    given in ``adm.bus_ids`` order."""
    if len(load_ids) == 0:
        return np.zeros(0), np.zeros(0)
    idx = adm.index(load_ids)
    e = _complex_voltage(v, theta)
    s = e[idx] * np.conj(adm.y[idx] @ e)
    return -s.real, -s.imag


def analytic_jacobian(v, theta, adm, load_ids):
    """Derivatives of the absorbed powers at ``load_ids`` with respect to the
    angles and magnitudes of the same buses (all other buses held fixed)."""
    idx = adm.index(load_ids)
    y = adm.y
    e = _complex_voltage(v, theta)
    cur = y @ e
    ve = np.diag(e)
    vn = np.diag(e / np.abs(e))
    ds_dth = 1j * ve @ np.conj(np.diag(cur) - y @ ve)
    ds_dv = ve @ np.conj(y @ vn) + np.conj(np.diag(cur)) @ vn
    sub = np.ix_(idx, idx)
    return JacobianBlocks(
        p_theta=-ds_dth[sub].real,
        p_v=-ds_dv[sub].real,
        q_theta=-ds_dth[sub].imag,
        q_v=-ds_dv[sub].imag,
    )


# -- SVC ------------------------------------------------------------------

def svc_susceptance(alpha, x_l, x_c):
    return (2 * alpha - np.sin(2 * alpha) - np.pi * (2 - x_l / x_c)) / (np.pi * x_l)


def svc_injection(alpha, v, x_l, x_c):
    """Reactive power injected by a TCR-FC SVC at firing angle ``alpha``."""
    return svc_susceptance(alpha, x_l, x_c) * v ** 2


def svc_injection_dalpha(alpha, v, x_l):
    return (2 - 2 * np.cos(2 * alpha)) / (np.pi * x_l) * v ** 2


def zero_injection_angle(svc):
    """Firing angle of zero reactive output, clamped to the SVC limits."""
    target = math.pi * (2 - svc.x_l / svc.x_c)
    lo, hi = svc.alpha_min, svc.alpha_max
    f = lambda a: 2 * a - math.sin(2 * a) - target  # noqa: E731  monotone in a
    if f(lo) >= 0:
        return lo
    if f(hi) <= 0:
        return hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def svc_q_limits(svc, v=1.0):
    """(min, max) reactive injection over the firing-angle range at voltage ``v``."""
    qa = float(svc_injection(svc.alpha_min, v, svc.x_l, svc.x_c))
    qb = float(svc_injection(svc.alpha_max, v, svc.x_l, svc.x_c))
    return min(qa, qb), max(qa, qb)


# -- reduced dynamic network ----------------------------------------------

@dataclass
class NetworkModel:
    """Kron-reduced network over generator and dynamic-load buses.

    Arrays are ordered like ``load_ids`` (dynamic loads) and ``svc_ids``.
    """

    adm: AdmittanceMatrix
    load_ids: list
    gen_ids: list
    v_gen: np.ndarray
    theta_gen: np.ndarray
    ps: np.ndarray
    qs: np.ndarray
    tau_theta: np.ndarray
    tau_v: np.ndarray
    sigma_p: np.ndarray
    sigma_q: np.ndarray
    svc_ids: list
    svc_pos: np.ndarray
    svcs: list
    y_load: np.ndarray = field(repr=False, default=None)
    load_idx: np.ndarray = field(repr=False, default=None)
    gen_idx: np.ndarray = field(repr=False, default=None)
    e_gen: np.ndarray = field(repr=False, default=None)
    _y_ll: np.ndarray = field(repr=False, default=None, compare=False)
    _i_gen: np.ndarray = field(repr=False, default=None, compare=False)

    @property
    def m(self):
        return len(self.load_ids)

    def full_voltage(self, theta, v):
        n = len(self.adm.bus_ids)
        vv = np.empty(n)
        th = np.empty(n)
        vv[self.gen_idx] = self.v_gen
        th[self.gen_idx] = self.theta_gen
        vv[self.load_idx] = v
        th[self.load_idx] = theta
        return vv, th

    def absorption(self, theta, v):
        """Fast absorbed (P, Q) at the load buses."""
        if self._y_ll is None:
            self._y_ll = np.ascontiguousarray(self.y_load[:, self.load_idx])
            self._i_gen = self.y_load[:, self.gen_idx] @ self.e_gen
        e_l = v * np.exp(1j * theta)
        s = e_l * np.conj(self._y_ll @ e_l + self._i_gen)
        return -s.real, -s.imag

    def jacobian(self, theta, v):
        vv, th = self.full_voltage(theta, v)
        return analytic_jacobian(vv, th, self.adm, self.load_ids)

    def svc_arrays(self):
        """Per-SVC parameter arrays, keyed by attribute name."""
        keys = ("k_m", "k_d", "k", "t_m", "t1", "t2", "x_l", "x_c", "alpha_min", "alpha_max")
        return {k: np.array([getattr(s, k) for s in self.svcs], dtype=float) for k in keys}

    def drift_matrix(self, theta, v):
        """Linearized load-dynamics state matrix ``diag(1/T) J``."""
        j = self.jacobian(theta, v).full
        return j / np.concatenate([self.tau_theta, self.tau_v])[:, None]

    def diffusion_matrix(self):
        """Noise input matrix of the linearized load dynamics."""
        return np.diag(np.concatenate([
            -self.ps * self.sigma_p / self.tau_theta,
            -self.qs * self.sigma_q / self.tau_v,
        ]))


def network_model(case):
    adm_full = build_admittance(case)
    gens = {g.bus: g for g in case.generators}
    keep = [b for b in case.bus_ids if b in gens or case.bus(b).kind == "dynamic_load"]
    adm = kron_reduce(adm_full, keep)
    load_ids = case.load_ids
    gen_ids = [b for b in keep if b in gens]
    loads = [case.bus(b).load for b in load_ids]
    svc_ids = case.svc_ids
    lpos = {b: i for i, b in enumerate(load_ids)}
    model = NetworkModel(
        adm=adm,
        load_ids=load_ids,
        gen_ids=gen_ids,
        v_gen=np.array([gens[b].v for b in gen_ids]),
        theta_gen=np.array([gens[b].theta for b in gen_ids]),
        ps=np.array([ld.p for ld in loads]),
        qs=np.array([ld.q for ld in loads]),
        tau_theta=np.array([ld.tau_theta for ld in loads]),
        tau_v=np.array([ld.tau_v for ld in loads]),
        sigma_p=np.array([ld.sigma_p for ld in loads]),
        sigma_q=np.array([ld.sigma_q for ld in loads]),
        svc_ids=svc_ids,
        svc_pos=np.array([lpos[b] for b in svc_ids], dtype=int),
        svcs=list(case.svcs),
    )
    model.load_idx = adm.index(load_ids)
    model.gen_idx = adm.index(gen_ids)
    model.y_load = adm.y[model.load_idx]
    model.e_gen = model.v_gen * np.exp(1j * model.theta_gen)
    return model


# -- power flow -------------------------------------------------------------

@dataclass
class PowerFlowResult:
    theta: np.ndarray
    v: np.ndarray
    alpha: np.ndarray
    vref: np.ndarray
    iterations: int
    residual: float
    model: NetworkModel

    @property
    def load_ids(self):
        return self.model.load_ids


def default_alpha(case):
    return np.array([s.alpha0 if s.alpha0 is not None else zero_injection_angle(s)
                     for s in case.svcs], dtype=float)


def solve_power_flow(case, alpha=None, regulate_svc=False, vref=None, theta0=None, v0=None):
    """Newton power flow over the dynamic-load buses.

    Generators are fixed sources.  SVCs contribute their reactive injection at
    the given firing angles (``alpha``, default :func:`default_alpha`).  With
    ``regulate_svc`` the firing angles become unknowns fixed by the regulator
    equilibrium ``K (vref - K_M V) = K_D alpha``.

    Returns
    -------
    PowerFlowResult
        Load-bus angles and magnitudes in ``case.load_ids`` order, SVC angles
        and the references that put each regulator in equilibrium.
    """
    model = network_model(case)
    m = model.m
    ns = len(model.svc_ids)
    sp = model.svc_arrays()
    pos = model.svc_pos
    alpha = default_alpha(case) if alpha is None else np.asarray(alpha, dtype=float).copy()
    if regulate_svc:
        if vref is None:
            vref = np.array([s.vref0 for s in case.svcs], dtype=float)
        vref = np.asarray(vref, dtype=float)
    if theta0 is None:
        theta0 = np.array([case.bus(b).theta0 for b in model.load_ids], dtype=float)
    if v0 is None:
        v0 = np.array([case.bus(b).v0 for b in model.load_ids], dtype=float)
    theta = np.array(theta0, dtype=float)
    v = np.array(v0, dtype=float)
    tol, max_iter = case.solver.tol, case.solver.max_iter

    def residual():
        p, q = model.absorption(theta, v)
        fq = q - model.qs
        if ns:
            fq[pos] += svc_injection(alpha, v[pos], sp["x_l"], sp["x_c"])
        parts = [p - model.ps, fq]
        if regulate_svc and ns:
            parts.append(sp["k"] * (vref - sp["k_m"] * v[pos]) - sp["k_d"] * alpha)
        return np.concatenate(parts)

    if m == 0:
        return PowerFlowResult(theta, v, alpha, _equilibrium_vref(alpha, v, sp, pos), 0, 0.0, model)

    f = residual()
    it = 0
    while True:
        res = float(np.max(np.abs(f)))
        if not np.isfinite(res):
            raise PowerFlowError("power flow produced non-finite values", residual=res, iterations=it)
        if res < tol:
            break
        if it >= max_iter:
            raise PowerFlowError(
                f"power flow did not converge in {max_iter} iterations (residual {res:.3e})",
                residual=res, iterations=it)
        jac = model.jacobian(theta, v).full
        if ns:
            jac[m + pos, m + pos] += 2 * svc_susceptance(alpha, sp["x_l"], sp["x_c"]) * v[pos]
        if regulate_svc and ns:
            size = 2 * m + ns
            big = np.zeros((size, size))
            big[:2 * m, :2 * m] = jac
            big[m + pos, 2 * m + np.arange(ns)] = svc_injection_dalpha(alpha, v[pos], sp["x_l"])
            big[2 * m + np.arange(ns), m + pos] = -sp["k"] * sp["k_m"]
            big[2 * m + np.arange(ns), 2 * m + np.arange(ns)] = -sp["k_d"]
            jac = big
        try:
            dz = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError as exc:
            raise PowerFlowError(f"singular power-flow Jacobian at iteration {it}",
                                 residual=res, iterations=it) from exc
        theta = theta + dz[:m]
        v = v + dz[m:2 * m]
        if regulate_svc and ns:
            alpha = alpha + dz[2 * m:]
        it += 1
        f = residual()

    if not regulate_svc:
        vref = _equilibrium_vref(alpha, v, sp, pos)
    return PowerFlowResult(theta, v, alpha, np.asarray(vref, dtype=float), it, res, model)


def _equilibrium_vref(alpha, v, sp, pos):
    if len(pos) == 0:
        return np.zeros(0)
    return sp["k_m"] * v[pos] + sp["k_d"] * alpha / sp["k"]


def initialize_svcs(case):
    """Solve the base power flow and write ``alpha0``/``vref0`` into the case's SVCs."""
    pf = solve_power_flow(case)
    for s, a, r in zip(case.svcs, pf.alpha, pf.vref):
        s.alpha0 = float(a)
        s.vref0 = float(r)
    return pf


def full_bus_voltages(case, pf):
    """Complex voltages at every bus of ``case``, static buses recovered from
    the zero-injection condition."""
    adm = build_admittance(case)
    y = adm.y
    model = pf.model
    vv, th = model.full_voltage(pf.theta, pf.v)
    known = adm.index(model.adm.bus_ids)
    e = np.zeros(len(adm.bus_ids), dtype=complex)
    e[known] = vv * np.exp(1j * th)
    drop = np.setdiff1d(np.arange(len(adm.bus_ids)), known)
    if drop.size:
        e[drop] = -np.linalg.solve(y[np.ix_(drop, drop)], y[np.ix_(drop, known)] @ e[known])
    return e


def branch_flows(case, pf):
    """Apparent power magnitude at the sending end of every branch (0 if out of service)."""
    e = full_bus_voltages(case, pf)
    pos = {b: i for i, b in enumerate(case.bus_ids)}
    out = np.zeros(len(case.branches))
    for k, br in enumerate(case.branches):
        if not br.in_service:
            continue
        i, j = pos[br.from_bus], pos[br.to_bus]
        ys = 1.0 / complex(br.r, br.x)
        cur = (e[i] - e[j]) * ys + e[i] * 0.5j * br.b_shunt
        out[k] = abs(e[i] * np.conj(cur))
    return out
