"""Experiment orchestration: ambient identification, closed-loop runs, scoring.

One experiment couples a case, a disturbance scenario and a controlled-bus
set.  For every seed the harness

1. simulates an ambient window around the pre-disturbance equilibrium with
   the SVC regulators frozen, adds measurement noise and identifies the
   sensitivity blocks (only when a model-free mode is requested),
2. runs the disturbance scenario once per controller mode on the same
   process-noise stream, so that the modes are compared on paired paths,
3. scores each run with the steady-state RMS deviation of the uncontrolled
   buses and writes the trajectory CSV.

Results go to ``report.json`` (validated against :data:`REPORT_SCHEMA`),
``lambda.csv`` and, when matplotlib is available, PNG figures.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from .case import case_to_dict, load_case
from .controller import (MODES, ControlState, WavcController, analytic_blocks, config_from_dict,
                         gain_matrix, performance_index, svc_q_bounds)
from .errors import PowerFlowError, WavcError
from .estimator import estimate_sensitivities, partition, reduce_for_missing, roundtrip_error
from .netmodel import branch_flows, solve_power_flow, svc_injection
from .simulator import (NoiseModel, Scenario, apply_measurement_noise, load_scenario,
                        read_trajectory_csv, run, write_trajectory_csv)

log = logging.getLogger(__name__)

SCHEMA_VERSION = "1.0"
DATA_DIR = Path(__file__).parent / "data"

# process-noise stream keys under one seed
AMBIENT_STREAM = 2
CONTROL_STREAM = 1

EXPERIMENT_SCHEMA = {
    "type": "object",
    "required": ["case", "scenario", "modes", "seeds"],
    "properties": {
        "name": {"type": "string"},
        "case": {"type": "string"},
        "scenario": {"type": "string"},
        "controlled": {"type": "array", "items": {"type": "integer"}},
        "modes": {"type": "array", "minItems": 1, "items": {"enum": list(MODES)}},
        "seeds": {"type": "array", "minItems": 1, "items": {"type": "integer"}},
        "ambient_s": {"type": "number", "exclusiveMinimum": 0},
        "monitor_bus": {"type": "integer"},
        "pmu": {
            "type": "object",
            "properties": {
                "buses": {"type": "array", "items": {"type": "integer"}},
                "placement": {"enum": ["best", "worst"]},
                "count": {"type": "integer", "minimum": 1},
                "fraction": {"type": "number", "exclusiveMinimum": 0},
            },
        },
    },
}

_NUM_OR_NULL = {"type": ["number", "null"]}

REPORT_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "experiment", "cells", "estimates", "summary"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "experiment": {
            "type": "object",
            "required": ["name", "case_file", "scenario_file", "modes", "seeds", "controlled",
                         "uncontrolled", "controller", "noise", "disturbance_t"],
        },
        "cells": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["mode", "seed", "status", "lambda", "actions", "trajectory"],
                "properties": {
                    "mode": {"enum": list(MODES)},
                    "seed": {"type": "integer"},
                    "status": {"enum": ["ok", "error"]},
                    "lambda": {"anyOf": [{"type": "number", "minimum": 0}, {"type": "null"}]},
                    "actions": {"type": "integer", "minimum": 0},
                    "trajectory": {"type": ["string", "null"]},
                    "error": {"type": ["string", "null"]},
                    "solve_time_max_s": _NUM_OR_NULL,
                    "solve_time_mean_s": _NUM_OR_NULL,
                },
            },
        },
        "estimates": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["seed", "status"],
                "properties": {
                    "seed": {"type": "integer"},
                    "status": {"enum": ["ok", "error"]},
                    "log_residual": _NUM_OR_NULL,
                    "condition": _NUM_OR_NULL,
                    "roundtrip": _NUM_OR_NULL,
                    "tau_max_rel_error": _NUM_OR_NULL,
                    "gain_rel_error": _NUM_OR_NULL,
                    "elapsed_s": _NUM_OR_NULL,
                },
            },
        },
        "summary": {"type": "object"},
    },
}


@dataclass
class ExperimentSpec:
    """What to run.

    ``controlled`` lists the SVC buses driven by the controller; the other
    SVCs of the case file are treated as not installed.  ``pmu`` restricts
    the measured buses, either explicitly (``{"buses": [...]}``) or by
    sensitivity ranking (``{"placement": "best", "count": 13}``).
    """

    case_file: str
    scenario_file: str
    modes: list
    seeds: list
    outputs: str
    controlled: tuple = ()
    name: str = "experiment"
    ambient_s: float = 300.0
    pmu: Optional[dict] = None
    monitor_bus: Optional[int] = None
    write_trajectories: bool = True
    figures: bool = True

    def __post_init__(self):
        self.modes = list(self.modes)
        self.seeds = [int(s) for s in self.seeds]
        self.controlled = tuple(int(b) for b in self.controlled)
        if not self.modes or not self.seeds:
            raise WavcError("an experiment needs at least one mode and one seed")
        bad = [m for m in self.modes if m not in MODES]
        if bad:
            raise WavcError(f"unknown modes {bad}; expected a subset of {MODES}")
        if self.ambient_s <= 0:
            raise WavcError("ambient_s must be positive")


def _resolve(path, base=None):
    p = Path(path)
    if p.exists():
        return p
    cands = []
    if base is not None:
        cands.append(Path(base) / p)
    cands.append(DATA_DIR / p.name)
    if not p.suffix:
        cands += [c.with_suffix(".json") for c in cands]
    for c in cands:
        if c.exists():
            return c
    raise WavcError(f"cannot find {path}")


def load_experiment(path, outputs=None, seeds=None):
    """Read an experiment JSON (bare names resolve to the shipped data)."""
    p = _resolve(path)
    with open(p, encoding="utf-8") as fh:
        d = json.load(fh)
    try:
        jsonschema.validate(d, EXPERIMENT_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise WavcError(f"{p}: {exc.message}") from None
    return ExperimentSpec(
        case_file=str(_resolve(d["case"], p.parent)),
        scenario_file=str(_resolve(d["scenario"], p.parent)),
        modes=d["modes"],
        seeds=seeds if seeds is not None else d["seeds"],
        outputs=str(outputs or Path("results") / d.get("name", p.stem)),
        controlled=tuple(d.get("controlled", ())),
        name=d.get("name", p.stem),
        ambient_s=float(d.get("ambient_s", 300.0)),
        pmu=d.get("pmu"),
        monitor_bus=d.get("monitor_bus"),
    )


# -- PMU placement ----------------------------------------------------------------

def rank_pmu_locations(case, load_step_fraction=0.25):
    """Rank dynamic-load buses by how much their branch flows rise under load growth.

    All loads are scaled by ``1 + load_step_fraction``; each branch scores
    ``(|S_after| - |S_before|) / dP_total`` and a bus takes the largest score
    among its in-service branches.  Returns ``[(bus, score), ...]`` ordered by
    descending score, ties by ascending bus id.
    """
    loads = case.load_ids
    if load_step_fraction == 0:
        return [(b, 0.0) for b in sorted(loads)]
    pf0 = solve_power_flow(case)
    stepped = case.with_scaled_loads(loads, load_step_fraction, load_step_fraction)
    try:
        pf1 = solve_power_flow(stepped, regulate_svc=True, vref=pf0.vref, theta0=pf0.theta, v0=pf0.v)
    except PowerFlowError as exc:
        raise PowerFlowError(f"power flow after a {load_step_fraction:.0%} load step failed ({exc}); "
                             "try a smaller fraction", exc.residual, exc.iterations) from None
    dp = load_step_fraction * sum(case.bus(b).load.p for b in loads)
    rise = (branch_flows(stepped, pf1) - branch_flows(case, pf0)) / abs(dp)
    best = {b: -math.inf for b in loads}
    for k, br in enumerate(case.branches):
        if not br.in_service:
            continue
        for b in (br.from_bus, br.to_bus):
            if b in best:
                best[b] = max(best[b], float(rise[k]))
    scores = [(b, s if np.isfinite(s) else 0.0) for b, s in best.items()]
    return sorted(scores, key=lambda x: (-x[1], x[0]))


def pmu_placement(case, count, placement="best", fraction=0.25):
    """Buses receiving PMUs: the ``count`` most (``best``) or least (``worst``) sensitive."""
    ranked = [b for b, _ in rank_pmu_locations(case, fraction)]
    if not 0 < count <= len(ranked):
        raise WavcError(f"PMU count must be in 1..{len(ranked)}")
    chosen = ranked[:count] if placement == "best" else ranked[-count:]
    return sorted(chosen)


# -- experiment -------------------------------------------------------------------

@dataclass
class RunReport:
    """Outcome of :func:`run_experiment`; ``to_dict`` is the JSON report."""

    experiment: dict
    cells: list
    estimates: list
    path: Optional[str] = None
    schema_version: str = SCHEMA_VERSION

    def lambdas(self, mode):
        """Per-seed lambda of ``mode`` in seed order (None for failed cells)."""
        return [c["lambda"] for c in self.cells if c["mode"] == mode]

    def mean_lambda(self, mode):
        vals = [x for x in self.lambdas(mode) if x is not None]
        return float(np.mean(vals)) if vals else None

    def cell(self, mode, seed):
        for c in self.cells:
            if c["mode"] == mode and c["seed"] == seed:
                return c
        raise KeyError((mode, seed))

    def summary(self):
        out = {}
        for mode in self.experiment["modes"]:
            vals = self.lambdas(mode)
            ok = [x for x in vals if x is not None]
            out[mode] = {"lambda_mean": float(np.mean(ok)) if ok else None,
                         "lambda": vals, "n_ok": len(ok)}
        return out

    def to_dict(self):
        return {"schema_version": self.schema_version, "experiment": self.experiment,
                "cells": self.cells, "estimates": self.estimates, "summary": self.summary()}

    def save(self, path):
        d = self.to_dict()
        jsonschema.validate(d, REPORT_SCHEMA)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(d, fh, indent=2, allow_nan=False)
            fh.write("\n")
        self.path = str(path)
        return path


def load_report(path):
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    jsonschema.validate(d, REPORT_SCHEMA)
    return RunReport(d["experiment"], d["cells"], d["estimates"], path=str(path),
                     schema_version=d["schema_version"])


@dataclass
class _Setup:
    """Everything shared by the cells of one experiment."""

    case: object
    post_case: object
    scenario: Scenario
    pf_base: object
    pf_ref: object
    controlled: tuple
    uncontrolled: tuple
    available: Optional[list]
    disturbance_t: float
    controller: dict
    q_limits: np.ndarray
    extras: dict = field(default_factory=dict)


def disturbance_time(scenario):
    """``disturbance_t`` from the scenario, else the first load step, else 0."""
    if "disturbance_t" in scenario.extra:
        return float(scenario.extra["disturbance_t"])
    steps = [e.at for e in scenario.events if e.kind == "load_step"]
    return min(steps) if steps else 0.0


def prepare(spec):
    """Load the inputs and solve the reference operating points.

    Line trips scheduled at or before the disturbance define the topology the
    controller has to live with.  Trips at ``t = 0`` are taken as already
    settled: the runs start from the regulated post-trip equilibrium.  The
    base (pre-trip) equilibrium is kept for the stale model.
    """
    base = load_case(spec.case_file)
    controlled = spec.controlled or tuple(base.svc_ids)
    case = base.with_svcs_at(controlled)
    scenario = load_scenario(spec.scenario_file)
    t_d = disturbance_time(scenario)
    post = case
    for ev in scenario.events:
        if ev.kind == "line_trip" and ev.at <= t_d:
            post = post.with_branch_status(*ev.branch, False)
    pf_base = solve_power_flow(case)
    pf_ref = pf_base
    if post is not case:
        pf_ref = solve_power_flow(post, regulate_svc=True, vref=pf_base.vref,
                                  theta0=pf_base.theta, v0=pf_base.v)
    unc = tuple(b for b in case.load_ids if b not in controlled)
    available = None
    if spec.pmu:
        if "buses" in spec.pmu:
            available = sorted(int(b) for b in spec.pmu["buses"])
        else:
            available = pmu_placement(case, int(spec.pmu.get("count", max(1, round(len(case.bus_ids) / 3)))),
                                      spec.pmu.get("placement", "best"), float(spec.pmu.get("fraction", 0.25)))
        unknown = set(available) - set(case.load_ids)
        if unknown:
            raise WavcError(f"PMU buses {sorted(unknown)} are not dynamic-load buses")
    return _Setup(case, post, scenario, pf_base, pf_ref, controlled, unc, available, t_d,
                  dict(scenario.controller or {}), svc_q_bounds(case, controlled))


def _measurement_std(noise, window):
    if noise.kind == "none":
        return None
    return noise.channel_std(window)


_AMBIENT_CACHE = {}
_AMBIENT_CACHE_SIZE = 8


def ambient_window(setup, duration_s, seed):
    """Noise-free ambient PMU window around the reference equilibrium.

    SVC regulators are frozen at their equilibrium firing angles.  Windows
    are memoised per (topology, SVC set, timing, seed) so that experiments
    sharing a configuration identify from the same data.
    """
    sc = setup.scenario
    key = (json.dumps(case_to_dict(setup.post_case), sort_keys=True), float(duration_s),
           sc.dt_s, sc.sample_rate_hz, int(seed))
    hit = _AMBIENT_CACHE.get(key)
    if hit is not None:
        return hit
    amb = Scenario(duration_s=duration_s, dt_s=sc.dt_s, sample_rate_hz=sc.sample_rate_hz,
                   seed=seed, svc_mode="frozen")
    win = run(setup.post_case, amb, pf=setup.pf_ref, stream=AMBIENT_STREAM).window()
    if len(_AMBIENT_CACHE) >= _AMBIENT_CACHE_SIZE:
        _AMBIENT_CACHE.pop(next(iter(_AMBIENT_CACHE)))
    _AMBIENT_CACHE[key] = win
    return win


def _identify(setup, spec, seed):
    """Ambient run, measurement noise and identification for one seed."""
    sc = setup.scenario
    truth = ambient_window(setup, spec.ambient_s, seed)
    noise = NoiseModel(sc.noise.kind, seed, sc.noise.high_std, sc.noise.low_fraction)
    std = _measurement_std(noise, truth)
    win = apply_measurement_noise(truth, noise, std)
    if setup.available is not None:
        win = win.select(setup.available)
    t0 = time.perf_counter()
    est = estimate_sensitivities(win)
    elapsed = time.perf_counter() - t0
    md = setup.pf_ref.model
    pos = {b: i for i, b in enumerate(md.load_ids)}
    idx = [pos[b] for b in est.bus_ids]
    tau = np.concatenate([md.tau_theta[idx], md.tau_v[idx]])
    tau_hat = np.concatenate([est.t_theta, est.t_v])
    diag = {
        "seed": seed, "status": "ok", "error": None,
        "log_residual": float(est.log_residual), "condition": float(est.condition),
        "roundtrip": roundtrip_error(est.a_hat, est.transition, win.dt),
        "tau_max_rel_error": float(np.max(np.abs(tau_hat - tau) / tau)),
        "stable": bool(est.stable), "elapsed_s": elapsed, "buses": len(est.bus_ids),
        "gain_rel_error": None,
    }
    return est, std, diag


def _blocks(mode, setup, est):
    c, u = setup.controlled, setup.uncontrolled
    avail = setup.available
    if mode == "none":
        return None
    if mode == "model_free":
        if avail is None:
            return partition(est, c, u)
        return partition(est, [b for b in c if b in avail], [b for b in u if b in avail])
    if mode == "model_based":
        blocks = analytic_blocks(setup.pf_ref, c, u)
    else:
        blocks = analytic_blocks(setup.pf_base, c, u)
    return reduce_for_missing(blocks, avail) if avail is not None else blocks


def _control_state(setup):
    pf = setup.pf_ref
    md = pf.model
    pos = {b: i for i, b in enumerate(md.load_ids)}
    spos = {b: i for i, b in enumerate(md.svc_ids)}
    si = [spos[b] for b in setup.controlled]
    sp = md.svc_arrays()
    q_all = svc_injection(pf.alpha, pf.v[md.svc_pos], sp["x_l"], sp["x_c"])
    return ControlState(
        uncontrolled=setup.uncontrolled, controlled=setup.controlled,
        v_ref_u=pf.v[[pos[b] for b in setup.uncontrolled]],
        v_c0=pf.v[[pos[b] for b in setup.controlled]],
        vref0=pf.vref[si].copy(), q_c0=q_all[si].copy(), v_ref_c=pf.vref[si].copy(),
        disturbance_t=setup.disturbance_t)


def run_cell(setup, mode, seed, blocks, std):
    """One closed-loop run; returns (SimulationResult, WavcController, lambda)."""
    sc = setup.scenario
    settled = [e for e in sc.events if e.kind == "line_trip" and e.at <= 0.0]
    case, pf = (setup.post_case, setup.pf_ref) if settled else (setup.case, setup.pf_base)
    if settled and len(settled) != sum(e.kind == "line_trip" and e.at <= setup.disturbance_t for e in sc.events):
        raise WavcError("line trips before the disturbance must all be at t = 0 or all later")
    scn = Scenario(duration_s=sc.duration_s, dt_s=sc.dt_s, sample_rate_hz=sc.sample_rate_hz,
                   noise=NoiseModel(sc.noise.kind, seed, sc.noise.high_std, sc.noise.low_fraction),
                   events=[e for e in sc.events if not any(e is x for x in settled)],
                   seed=seed, svc_mode=sc.svc_mode)
    cfg = config_from_dict(setup.controller, setup.case, mode)
    state = _control_state(setup)
    ctrl = WavcController(cfg, blocks, state, case.load_ids, case.svc_ids, setup.q_limits)
    res = run(case, scn, observer=ctrl, measurement_std=std, pf=pf, stream=CONTROL_STREAM)
    pos = {b: i for i, b in enumerate(res.load_ids)}
    v_u = res.v[:, [pos[b] for b in setup.uncontrolled]]
    lam = performance_index(v_u, state.v_ref_u, res.t, cfg.ss_window)
    return res, ctrl, lam


def run_experiment(spec):
    """Run every (mode, seed) cell of ``spec`` and write the artifacts.

    A failing stage is recorded on its cell and the remaining cells still
    run.  Returns a :class:`RunReport` whose ``path`` points at report.json.
    """
    out = Path(spec.outputs)
    out.mkdir(parents=True, exist_ok=True)
    setup = prepare(spec)
    cfg = config_from_dict(setup.controller, setup.case, spec.modes[0])
    experiment = {
        "name": spec.name, "case_file": str(spec.case_file), "scenario_file": str(spec.scenario_file),
        "modes": list(spec.modes), "seeds": list(spec.seeds),
        "controlled": list(setup.controlled), "uncontrolled": list(setup.uncontrolled),
        "pmu_buses": setup.available, "ambient_s": spec.ambient_s,
        "disturbance_t": setup.disturbance_t, "duration_s": setup.scenario.duration_s,
        "noise": setup.scenario.noise.kind,
        "events": [e.to_dict() for e in setup.scenario.events],
        "controller": {"d1_s": cfg.d1, "d2_s": cfg.d2, "threshold_pu": cfg.threshold,
                       "vc_bounds": cfg.v_c_bounds, "qc_bounds": cfg.q_c_bounds,
                       "ss_window_s": cfg.ss_window},
    }
    need_est = "model_free" in spec.modes
    true_gain = None
    if need_est:
        try:
            true_gain = gain_matrix(_blocks("model_based", setup, None))
        except WavcError:
            true_gain = None
    cells, estimates = [], []
    for seed in spec.seeds:
        est, std, est_err = None, None, None
        if need_est:
            try:
                est, std, diag = _identify(setup, spec, seed)
                if true_gain is not None:
                    g = gain_matrix(_blocks("model_free", setup, est))
                    if g.shape == true_gain.shape:
                        diag["gain_rel_error"] = float(np.linalg.norm(g - true_gain) / np.linalg.norm(true_gain))
            except Exception as exc:  # recorded per cell, the experiment goes on
                est_err = f"{type(exc).__name__}: {exc}"
                diag = {"seed": seed, "status": "error", "error": est_err}
            estimates.append(diag)
        elif setup.scenario.noise.kind != "none":
            std = _ambient_std(setup, spec, seed)
        for mode in spec.modes:
            cell = {"mode": mode, "seed": seed, "status": "ok", "lambda": None, "actions": 0,
                    "trajectory": None, "error": None, "solve_time_max_s": None,
                    "solve_time_mean_s": None, "skipped_ticks": 0}
            t0 = time.perf_counter()
            try:
                if mode == "model_free" and est is None:
                    raise WavcError(f"identification failed: {est_err}")
                blocks = _blocks(mode, setup, est)
                res, ctrl, lam = run_cell(setup, mode, seed, blocks, std)
                cell["lambda"] = lam
                cell["actions"] = len(ctrl.actions)
                cell["skipped_ticks"] = len(ctrl.log)
                if ctrl.solve_times:
                    cell["solve_time_max_s"] = float(max(ctrl.solve_times))
                    cell["solve_time_mean_s"] = float(np.mean(ctrl.solve_times))
                if spec.write_trajectories:
                    name = f"trajectory_{mode}_{seed}.csv"
                    write_trajectory_csv(res, out / name)
                    cell["trajectory"] = name
            except Exception as exc:  # recorded per cell, the experiment goes on
                cell["status"] = "error"
                cell["error"] = f"{type(exc).__name__}: {exc}"
                log.warning("%s seed %d %s failed: %s", spec.name, seed, mode, cell["error"])
            cell["wall_s"] = time.perf_counter() - t0
            log.info("%s seed %d %-18s lambda %s", spec.name, seed, mode, cell["lambda"])
            cells.append(cell)
    report = RunReport(experiment, cells, estimates)
    report.save(out / "report.json")
    _write_lambda_table(report, out / "lambda.csv")
    if spec.figures and spec.write_trajectories:
        _figures(report, out, spec.monitor_bus or setup.uncontrolled[0])
    return report


def _ambient_std(setup, spec, seed):
    """Measurement-noise level when no identification run is needed."""
    noise = setup.scenario.noise
    if noise.kind == "high":
        m = len(setup.case.load_ids)
        return np.full(m, noise.high_std), np.full(m, noise.high_std)
    win = ambient_window(setup, spec.ambient_s, seed)
    return NoiseModel(noise.kind, seed, noise.high_std, noise.low_fraction).channel_std(win)


def _write_lambda_table(report, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mode", "seed", "lambda", "actions", "status"])
        for c in report.cells:
            lam = "" if c["lambda"] is None else repr(float(c["lambda"]))
            w.writerow([c["mode"], c["seed"], lam, c["actions"], c["status"]])


def _figures(report, out, bus):
    try:
        from . import plotting
    except ImportError:  # matplotlib missing: CSVs are still written
        return
    seed = report.experiment["seeds"][0]
    try:
        path = emit_plot_data(report, bus, seed=seed, out=out / f"voltage_bus{bus}_seed{seed}.csv")
    except WavcError as exc:
        log.warning("no plot data: %s", exc)
        return
    plotting.plot_voltage_profile(path, path.with_suffix(".png"), title=f"{report.experiment['name']}: bus {bus}")
    plotting.plot_lambda(report, out / "lambda.png")


# -- plot data ----------------------------------------------------------------------

def emit_plot_data(report, bus, seed=None, out=None):
    """CSV of ``t`` and the bus-``bus`` voltage of every mode for one seed.

    Parameters
    ----------
    report : RunReport or path to report.json
    bus : int
    seed : int, optional
        Defaults to the first seed of the experiment.
    out : path, optional
        Destination; defaults to ``plot_bus<bus>_seed<seed>.csv`` next to the report.

    Returns
    -------
    pathlib.Path
    """
    if not isinstance(report, RunReport):
        report = load_report(report)
    if report.path is None:
        raise WavcError("report has no location on disk; save it first")
    base = Path(report.path).parent
    seed = report.experiment["seeds"][0] if seed is None else int(seed)
    cols, t = [], None
    for mode in report.experiment["modes"]:
        try:
            cell = report.cell(mode, seed)
        except KeyError:
            raise WavcError(f"seed {seed} is not in the report") from None
        if not cell.get("trajectory"):
            continue
        win = read_trajectory_csv(base / cell["trajectory"])
        if bus not in win.bus_ids:
            raise WavcError(f"bus {bus} is not measured; valid buses are {sorted(win.bus_ids)}")
        tt = win.t
        if t is None:
            t = tt
        elif tt.shape != t.shape or np.any(tt != t):
            raise WavcError(f"trajectory of {mode} is on a different time grid")
        cols.append((mode, win.v[:, win.bus_ids.index(bus)]))
    if not cols:
        raise WavcError(f"no trajectories for seed {seed}")
    out = Path(out) if out is not None else base / f"plot_bus{bus}_seed{seed}.csv"
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"v_{m}" for m, _ in cols])
        for i in range(len(t)):
            w.writerow([repr(float(t[i]))] + [repr(float(c[i])) for _, c in cols])
    return out
