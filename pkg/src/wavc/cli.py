"""Command-line entry point: ``wavc <subcommand> --seed N --out DIR``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import harness
from .case import load_case
from .controller import MODES
from .errors import WavcError
from .estimator import estimate_sensitivities, roundtrip_error
from .netmodel import solve_power_flow
from .simulator import (NoiseModel, Scenario, apply_measurement_noise, load_scenario,
                        read_trajectory_csv, run, write_trajectory_csv)


def _out(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _bus_list(text):
    return tuple(int(x) for x in text.split(",") if x.strip())


def cmd_simulate(args):
    case = load_case(args.case)
    if args.scenario:
        sc = load_scenario(args.scenario)
        sc.seed = args.seed
        sc.noise.seed = args.seed
        if args.duration:
            sc.duration_s = args.duration
    else:
        sc = Scenario(duration_s=args.duration or 60.0, seed=args.seed, svc_mode=args.svc_mode)
    res = run(case, sc)
    out = _out(args)
    path = out / f"trajectory_{args.seed}.csv"
    if sc.noise.kind != "none":
        write_trajectory_csv(apply_measurement_noise(res.window(), sc.noise), path)
    else:
        write_trajectory_csv(res, path)
    from . import plotting
    plotting.plot_trajectory(path, path.with_suffix(".png"), title=f"{Path(args.case).stem}: V")
    print(path)


def cmd_estimate(args):
    case = load_case(args.case)
    if args.window:
        win = read_trajectory_csv(args.window)
    else:
        pf = solve_power_flow(case)
        sc = Scenario(duration_s=args.duration, seed=args.seed, svc_mode="frozen")
        win = run(case, sc, pf=pf, stream=harness.AMBIENT_STREAM).window()
        win = apply_measurement_noise(win, NoiseModel(args.noise, args.seed))
    est = estimate_sensitivities(win, tc_samples=args.tc_samples)
    out = _out(args)
    doc = {
        "bus_ids": list(est.bus_ids),
        "t_theta": est.t_theta.tolist(), "t_v": est.t_v.tolist(),
        "a_hat": est.a_hat.tolist(), "j_hat": est.j_hat.tolist(),
        "log_residual": est.log_residual, "condition": est.condition, "stable": est.stable,
        "roundtrip": roundtrip_error(est.a_hat, est.transition, win.dt),
        "warnings": list(est.warnings),
    }
    path = out / f"estimate_{args.seed}.json"
    path.write_text(json.dumps(doc, indent=2) + "\n")
    m = est.m
    with open(out / f"j_hat_{args.seed}.csv", "w", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"theta_{b}" for b in est.bus_ids] + [f"v_{b}" for b in est.bus_ids])
        for row in est.j_hat:
            w.writerow([repr(float(x)) for x in row])
    from . import plotting
    plotting.plot_matrix(est.j_hat[m:, m:], out / f"j_qv_{args.seed}.png", title="estimated J_QV")
    print(path)


def cmd_control(args):
    spec = harness.ExperimentSpec(
        case_file=args.case, scenario_file=args.scenario, modes=[args.mode], seeds=[args.seed],
        outputs=args.out, controlled=_bus_list(args.controlled), name=f"control_{args.mode}",
        ambient_s=args.ambient_s)
    rep = harness.run_experiment(spec)
    _print_summary(rep)


def cmd_experiment(args):
    seeds = [args.seed] if args.seed is not None else None
    spec = harness.load_experiment(args.spec, outputs=args.out, seeds=seeds)
    rep = harness.run_experiment(spec)
    _print_summary(rep)


def _print_summary(rep):
    for c in rep.cells:
        lam = "failed: " + c["error"] if c["lambda"] is None else f"{c['lambda']:.6f}"
        print(f"{c['mode']:<18} seed {c['seed']:<4} lambda {lam}  actions {c['actions']}")
    print(rep.path)


def cmd_rank_pmu(args):
    case = load_case(args.case)
    ranked = harness.rank_pmu_locations(case, args.fraction)
    out = _out(args)
    path = out / "pmu_ranking.csv"
    with open(path, "w", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "bus", "score"])
        for i, (b, s) in enumerate(ranked, start=1):
            w.writerow([i, b, repr(float(s))])
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots(figsize=(7, 3))
    ax.bar([str(b) for b, _ in ranked], [s for _, s in ranked], color="0.6")
    ax.set_xlabel("bus")
    ax.set_ylabel("flow rise / dP")
    fig.tight_layout()
    fig.savefig(path.with_suffix(".png"), dpi=120)
    plt.close(fig)
    for i, (b, s) in enumerate(ranked, start=1):
        print(f"{i:3d}  bus {b:<4} {s:.6f}")


def cmd_plot_data(args):
    report = Path(args.report)
    if report.is_dir():
        report = report / "report.json"
    out = _out(args)
    path = harness.emit_plot_data(report, args.bus, seed=args.seed,
                                  out=out / f"plot_bus{args.bus}.csv")
    from . import plotting
    plotting.plot_voltage_profile(path, path.with_suffix(".png"), title=f"bus {args.bus}")
    print(path)


def build_parser():
    p = argparse.ArgumentParser(prog="wavc", description="Ambient-data sensitivity identification "
                                "and wide-area SVC voltage control on simulated grids.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed_default=0):
        sp.add_argument("--seed", type=int, default=seed_default,
                        help="RNG seed" if seed_default is not None else "run only this seed")
        sp.add_argument("--out", default="results", help="output directory (default: results)")
        return sp

    s = common(sub.add_parser("simulate", help="open-loop simulation to a trajectory CSV"))
    s.add_argument("--case", default="case39", help="shipped case name or case JSON path")
    s.add_argument("--scenario", help="scenario name or JSON path; ambient run when omitted")
    s.add_argument("--duration", type=float, help="override the scenario duration, s")
    s.add_argument("--svc-mode", choices=["active", "frozen"], default="active",
                   help="SVC regulators active or frozen at equilibrium")
    s.set_defaults(func=cmd_simulate)

    s = common(sub.add_parser("estimate", help="identify A, tau and J from an ambient window"))
    s.add_argument("--case", default="case39", help="shipped case name or case JSON path")
    s.add_argument("--window", help="trajectory CSV; simulated when omitted")
    s.add_argument("--duration", type=float, default=300.0, help="simulated window length, s")
    s.add_argument("--noise", choices=["none", "low", "high"], default="none", help="PMU measurement noise")
    s.add_argument("--tc-samples", type=int, help="samples for the time-constant regression (default: all)")
    s.set_defaults(func=cmd_estimate)

    s = common(sub.add_parser("control", help="one closed-loop run of a single controller mode"))
    s.add_argument("--case", default="case39", help="shipped case name or case JSON path")
    s.add_argument("--scenario", default="scenario_caseC", help="scenario name or JSON path")
    s.add_argument("--controlled", default="3,9,20", help="comma-separated SVC buses")
    s.add_argument("--mode", choices=MODES, default="model_free", help="controller mode")
    s.add_argument("--ambient-s", type=float, default=300.0, help="identification window, s")
    s.set_defaults(func=cmd_control)

    s = common(sub.add_parser("experiment", help="run a shipped or custom experiment spec"), None)
    s.add_argument("--spec", default="experiment_caseC", help="shipped experiment name or JSON path")
    s.set_defaults(func=cmd_experiment)

    s = common(sub.add_parser("rank-pmu", help="rank buses by branch-flow sensitivity"))
    s.add_argument("--case", default="case39", help="shipped case name or case JSON path")
    s.add_argument("--fraction", type=float, default=0.25, help="load growth used for the ranking")
    s.set_defaults(func=cmd_rank_pmu)

    s = common(sub.add_parser("plot-data", help="per-mode voltage of one bus from a report"), None)
    s.add_argument("--report", required=True, help="report.json or its directory")
    s.add_argument("--bus", type=int, required=True, help="bus whose voltage is extracted")
    s.set_defaults(func=cmd_plot_data)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except WavcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
