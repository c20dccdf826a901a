"""Regenerate the shipped scenario and experiment files under src/wavc/data/.

Load-step scenarios raise P and Q demand at the uncontrolled load buses of
each controlled-bus combination.  The topology scenario opens line 26-27
before the run and then raises the reactive demand.  Experiments reference
their case and scenario by bare name.

    python tools/make_experiments.py
"""
import json
from pathlib import Path

DATA = Path(__file__).resolve().parents[1] / "src" / "wavc" / "data"

CASE39_LOADS = [1, 3, 4, 7, 8, 9, 12, 15, 16, 18, 20, 21, 23, 24, 25, 26, 27, 28, 29]
CASE68_SVCS = [20, 25, 29, 41, 42]

COMBOS = {
    "caseA": [3],
    "caseB": [3, 20],
    "caseC": [3, 9, 20],
    "caseD": [3, 9, 20, 23],
    "caseE": [3, 9, 12, 20, 23],
}

SEEDS = [0, 1, 2, 3, 4]
MODES = ["none", "model_based", "model_free"]
CONTROLLER39 = {"d1_s": 30.0, "d2_s": 0.2, "threshold_pu": 0.005, "ss_window_s": 20.0}
CONTROLLER68 = {"d1_s": 30.0, "d2_s": 0.2, "threshold_pu": 0.01, "ss_window_s": 20.0}


def uncontrolled(loads, controlled):
    return [b for b in loads if b not in controlled]


def load_step(at, buses, dp, dq):
    return {"at": at, "kind": "load_step", "buses": buses, "dp": dp, "dq": dq}


def scenario(duration, events, controller, noise="none"):
    return {"duration_s": duration, "dt_s": 1 / 600, "sample_rate_hz": 60.0, "noise": noise,
            "events": events, "controller": controller}


def experiment(name, case, scen, controlled, modes, seeds=SEEDS, **extra):
    d = {"name": name, "case": case, "scenario": scen, "controlled": controlled,
         "modes": modes, "seeds": seeds, "ambient_s": 300.0}
    d.update(extra)
    return d


def build():
    files = {}
    for name, ctrl in COMBOS.items():
        step = load_step(2.0, uncontrolled(CASE39_LOADS, ctrl), 0.25, 0.25)
        files[f"scenario_{name}"] = scenario(120.0, [step], CONTROLLER39)
        files[f"experiment_{name}"] = experiment(name, "case39", f"scenario_{name}", ctrl, MODES,
                                                 monitor_bus=4)
    c_ctrl = COMBOS["caseC"]
    c_step = load_step(2.0, uncontrolled(CASE39_LOADS, c_ctrl), 0.25, 0.25)
    for level in ("low", "high"):
        files[f"scenario_caseC_noise_{level}"] = scenario(120.0, [c_step], CONTROLLER39, noise=level)
        files[f"experiment_caseC_noise_{level}"] = experiment(
            f"caseC_noise_{level}", "case39", f"scenario_caseC_noise_{level}", c_ctrl, ["model_free"],
            monitor_bus=4)
    for placement in ("best", "worst"):
        files[f"experiment_caseC_missing_{placement}"] = experiment(
            f"caseC_missing_{placement}", "case39", "scenario_caseC", c_ctrl, ["model_free"],
            pmu={"placement": placement, "count": 13, "fraction": 0.25}, monitor_bus=15)
    e_ctrl = COMBOS["caseE"]
    trip = {"at": 0.0, "kind": "line_trip", "branch": [26, 27]}
    files["scenario_topology"] = scenario(
        140.0, [trip, load_step(20.0, uncontrolled(CASE39_LOADS, e_ctrl), 0.0, 0.30)], CONTROLLER39)
    files["experiment_topology"] = experiment(
        "topology", "case39", "scenario_topology", e_ctrl,
        ["none", "model_based_stale", "model_based", "model_free"], monitor_bus=15)
    return files


def build68(load_ids):
    files = {}
    step = load_step(2.0, uncontrolled(load_ids, CASE68_SVCS), 0.0, 0.20)
    files["scenario_case68"] = scenario(120.0, [step], CONTROLLER68)
    files["experiment_case68"] = experiment("case68", "case68", "scenario_case68", CASE68_SVCS, MODES,
                                            seeds=[0], monitor_bus=21)
    return files


def main():
    case68 = json.loads((DATA / "case68.json").read_text())
    loads68 = [b["id"] for b in case68["buses"] if b.get("kind") == "dynamic_load"]
    files = build()
    files.update(build68(loads68))
    quiet = scenario(60.0, [], CONTROLLER39)
    files["scenario_quiescent"] = quiet
    for name, d in files.items():
        (DATA / f"{name}.json").write_text(json.dumps(d, indent=2) + "\n")
        print("wrote", name)


if __name__ == "__main__":
    main()
