"""Regenerate the shipped case fixtures under src/wavc/data/.

case39 uses the New England 39-bus topology with 19 dynamic loads.  Branch
impedances are scaled by ``STIFFNESS`` and demand and dispatch by its
inverse relative to the textbook data: the operating point keeps its shape while the network is
stiff enough for 300 s ambient windows to pin down every load time constant.
Generator angles come from a conventional PV/slack power flow so that the
fixed-source model starts from a realistic dispatch.  case68 is a synthetic
network with the 68-bus shape (16 generators, 35 dynamic loads).

Load noise is specified as an absolute intensity ``h`` (p.u.) per channel,
stored as ``sigma = h / |Ps|`` so that small loads are still excited.

    python tools/make_cases.py [--hp 0.05] [--hq 0.05]
"""
import argparse
import json
from pathlib import Path

import numpy as np
from scipy.optimize import fsolve

DATA = Path(__file__).resolve().parents[1] / "src" / "wavc" / "data"

SVC_FIXTURE = {"x_l": 0.05, "x_c": 0.1}
STIFFNESS = 0.4

IEEE39_BRANCHES = [
    (1, 2, 0.0035, 0.0411, 0.6987), (1, 39, 0.0010, 0.0250, 0.7500),
    (2, 3, 0.0013, 0.0151, 0.2572), (2, 25, 0.0070, 0.0086, 0.1460),
    (2, 30, 0.0, 0.0181, 0.0), (3, 4, 0.0013, 0.0213, 0.2214),
    (3, 18, 0.0011, 0.0133, 0.2138), (4, 5, 0.0008, 0.0128, 0.1342),
    (4, 14, 0.0008, 0.0129, 0.1382), (5, 6, 0.0002, 0.0026, 0.0434),
    (5, 8, 0.0008, 0.0112, 0.1476), (6, 7, 0.0006, 0.0092, 0.1130),
    (6, 11, 0.0007, 0.0082, 0.1389), (6, 31, 0.0, 0.0250, 0.0),
    (7, 8, 0.0004, 0.0046, 0.0780), (8, 9, 0.0023, 0.0363, 0.3804),
    (9, 39, 0.0010, 0.0250, 1.2000), (10, 11, 0.0004, 0.0043, 0.0729),
    (10, 13, 0.0004, 0.0043, 0.0729), (10, 32, 0.0, 0.0200, 0.0),
    (12, 11, 0.0016, 0.0435, 0.0), (12, 13, 0.0016, 0.0435, 0.0),
    (13, 14, 0.0009, 0.0101, 0.1723), (14, 15, 0.0018, 0.0217, 0.3660),
    (15, 16, 0.0009, 0.0094, 0.1710), (16, 17, 0.0007, 0.0089, 0.1342),
    (16, 19, 0.0016, 0.0195, 0.3040), (16, 21, 0.0008, 0.0135, 0.2548),
    (16, 24, 0.0003, 0.0059, 0.0680), (17, 18, 0.0007, 0.0082, 0.1319),
    (17, 27, 0.0013, 0.0173, 0.3216), (19, 20, 0.0007, 0.0138, 0.0),
    (19, 33, 0.0007, 0.0142, 0.0), (20, 34, 0.0009, 0.0180, 0.0),
    (21, 22, 0.0008, 0.0140, 0.2565), (22, 23, 0.0006, 0.0096, 0.1846),
    (22, 35, 0.0, 0.0143, 0.0), (23, 24, 0.0022, 0.0350, 0.3610),
    (23, 36, 0.0005, 0.0272, 0.0), (25, 26, 0.0032, 0.0323, 0.5130),
    (25, 37, 0.0006, 0.0232, 0.0), (26, 27, 0.0014, 0.0147, 0.2396),
    (26, 28, 0.0043, 0.0474, 0.7802), (26, 29, 0.0057, 0.0625, 1.0290),
    (28, 29, 0.0014, 0.0151, 0.2490), (29, 38, 0.0008, 0.0156, 0.0),
]

# MW, Mvar on the 19 dynamic load buses (buses 1 and 9 carry added load)
IEEE39_LOADS = {
    1: (60.0, 15.0), 3: (322.0, 2.4), 4: (500.0, 184.0), 7: (233.8, 84.0),
    8: (522.0, 176.0), 9: (65.0, 20.0), 12: (7.5, 88.0), 15: (320.0, 153.0),
    16: (329.0, 32.3), 18: (158.0, 30.0), 20: (628.0, 103.0), 21: (274.0, 115.0),
    23: (247.5, 84.6), 24: (308.6, -92.2), 25: (224.0, 47.2), 26: (139.0, 17.0),
    27: (281.0, 75.5), 28: (206.0, 27.6), 29: (283.5, 26.9),
}
IEEE39_GENS = {  # bus: (V setpoint, P MW); 31 is the slack
    30: (1.0475, 250.0), 31: (0.9820, None), 32: (0.9831, 650.0), 33: (0.9972, 632.0),
    34: (1.0123, 508.0), 35: (1.0493, 650.0), 36: (1.0635, 560.0), 37: (1.0278, 540.0),
    38: (1.0265, 830.0), 39: (1.0300, 1000.0),
}


def ybus(ids, branches):
    pos = {b: i for i, b in enumerate(ids)}
    y = np.zeros((len(ids), len(ids)), dtype=complex)
    for f, t, r, x, b in branches:
        ys = 1 / complex(r, x)
        i, k = pos[f], pos[t]
        y[i, i] += ys + 0.5j * b
        y[k, k] += ys + 0.5j * b
        y[i, k] -= ys
        y[k, i] -= ys
    return y


def pv_power_flow(ids, branches, gens, slack, pq_load):
    """Conventional power flow; returns complex voltages in ``ids`` order."""
    y = ybus(ids, branches)
    pos = {b: i for i, b in enumerate(ids)}
    pq = [b for b in ids if b not in gens]
    va_idx = [pos[b] for b in ids if b != slack]
    vm_idx = [pos[b] for b in pq]
    vm = np.ones(len(ids))
    for b, (v, _) in gens.items():
        vm[pos[b]] = v
    pinj = np.zeros(len(ids))
    qinj = np.zeros(len(ids))
    for b, (_, p) in gens.items():
        if p is not None:
            pinj[pos[b]] += p
    for b, (p, q) in pq_load.items():
        pinj[pos[b]] -= p
        qinj[pos[b]] -= q

    def unpack(z):
        va = np.zeros(len(ids))
        vv = vm.copy()
        va[va_idx] = z[:len(va_idx)]
        vv[vm_idx] = z[len(va_idx):]
        return vv * np.exp(1j * va)

    def f(z):
        e = unpack(z)
        s = e * np.conj(y @ e)
        return np.concatenate([(s.real - pinj)[va_idx], (s.imag - qinj)[vm_idx]])

    z0 = np.concatenate([np.zeros(len(va_idx)), np.ones(len(vm_idx))])
    z, info, ier, msg = fsolve(f, z0, full_output=True, xtol=1e-13)
    if ier != 1 or np.max(np.abs(f(z))) > 1e-8:
        raise RuntimeError(f"PV power flow failed: {msg}")
    return unpack(z)


def svc_entry(bus):
    return {"bus": bus, **SVC_FIXTURE}


def load_entry(p, q, tau, hp, hq):
    return {"tau_theta": tau, "tau_v": tau, "p": p, "q": q,
            "sigma_p": round(hp / abs(p), 9), "sigma_q": round(hq / abs(q), 9)}


def make_case39(hp, hq):
    ids = list(range(1, 40))
    base = 100.0
    k = STIFFNESS
    branches = [(f, t, r * k, x * k, b) for f, t, r, x, b in IEEE39_BRANCHES]
    loads = {b: (p / base / k, q / base / k) for b, (p, q) in IEEE39_LOADS.items()}
    gens = {b: (v, None if p is None else p / base / k) for b, (v, p) in IEEE39_GENS.items()}
    e = pv_power_flow(ids, branches, gens, 31, loads)
    ang = np.angle(e)
    ang = ang - ang[30]
    buses = []
    for b in ids:
        if b in gens:
            buses.append({"id": b, "kind": "generator"})
        elif b in loads:
            p, q = loads[b]
            buses.append({"id": b, "kind": "dynamic_load", "load": load_entry(p, q, 30.0, hp, hq)})
        else:
            buses.append({"id": b, "kind": "static"})
    return {
        "name": "case39",
        "base_mva": base,
        "buses": buses,
        "branches": [{"from": f, "to": t, "r": r, "x": x, "b_shunt": bsh, "in_service": True}
                     for f, t, r, x, bsh in branches],
        "svcs": [svc_entry(b) for b in (3, 9, 12, 20, 23)],
        "generators": [{"bus": b, "v": gens[b][0], "theta": 0.0 if b == 31 else round(float(ang[b - 1]), 12),
                        "reference": b == 31} for b in sorted(gens)],
    }


def make_case3():
    # one slack source feeding three dynamic loads; small enough to assemble by hand
    return {
        "name": "case3",
        "base_mva": 100.0,
        "buses": [
            {"id": 1, "kind": "generator"},
            {"id": 2, "kind": "dynamic_load", "load": {"tau_theta": 2.0, "tau_v": 1.5, "p": 0.8, "q": 0.3,
                                                        "sigma_p": 0.05, "sigma_q": 0.08}},
            {"id": 3, "kind": "dynamic_load", "load": {"tau_theta": 2.5, "tau_v": 2.0, "p": 0.6, "q": 0.25,
                                                        "sigma_p": 0.05, "sigma_q": 0.08}},
            {"id": 4, "kind": "dynamic_load", "load": {"tau_theta": 2.0, "tau_v": 1.5, "p": 0.5, "q": 0.2,
                                                        "sigma_p": 0.05, "sigma_q": 0.08}},
        ],
        "branches": [
            {"from": 1, "to": 2, "r": 0.005, "x": 0.05, "b_shunt": 0.02},
            {"from": 1, "to": 3, "r": 0.004, "x": 0.04, "b_shunt": 0.0},
            {"from": 2, "to": 3, "r": 0.01, "x": 0.1, "b_shunt": 0.0},
            {"from": 2, "to": 4, "r": 0.01, "x": 0.08, "b_shunt": 0.0},
            {"from": 3, "to": 4, "r": 0.005, "x": 0.05, "b_shunt": 0.01},
        ],
        "svcs": [svc_entry(3)],
        "generators": [{"bus": 1, "v": 1.02, "theta": 0.0, "reference": True}],
    }


def make_case68(hp, hq, seed=68):
    rng = np.random.default_rng(seed)
    base = 100.0
    gen_ids = list(range(53, 69))
    net_ids = list(range(1, 53))
    svc_buses = [20, 25, 29, 41, 42]
    must_load = set(svc_buses) | {21}
    others = [b for b in net_ids if b not in must_load]
    load_ids = sorted(must_load | set(rng.choice(others, 35 - len(must_load), replace=False).tolist()))
    branches = []
    # a ring over the network buses plus random chords
    for i in range(len(net_ids)):
        a, b = net_ids[i], net_ids[(i + 1) % len(net_ids)]
        x = float(np.round(rng.uniform(0.006, 0.02), 4))
        branches.append((a, b, round(x / 11, 5), x, round(x * 12, 4)))
    seen = {frozenset(br[:2]) for br in branches}
    while len(branches) < 52 + 18:
        a, b = sorted(rng.choice(net_ids, 2, replace=False).tolist())
        if frozenset((a, b)) in seen or abs(a - b) > 12:
            continue
        seen.add(frozenset((a, b)))
        x = float(np.round(rng.uniform(0.01, 0.03), 4))
        branches.append((a, b, round(x / 11, 5), x, round(x * 12, 4)))
    attach = np.linspace(1, 52, len(gen_ids) + 1)[:-1].round().astype(int)
    for g, a in zip(gen_ids, attach):
        branches.append((int(a), g, 0.0, float(np.round(rng.uniform(0.012, 0.02), 4)), 0.0))
    loads = {}
    for b in load_ids:
        loads[b] = (float(np.round(rng.uniform(0.8, 4.0), 3)), float(np.round(rng.uniform(0.1, 1.2), 3)))
    total = sum(p for p, _ in loads.values())
    ids = net_ids + gen_ids
    gens = {g: (float(np.round(rng.uniform(1.0, 1.04), 4)), None if g == 65 else total / len(gen_ids))
            for g in gen_ids}
    e = pv_power_flow(ids, branches, gens, 65, loads)
    ang = np.angle(e)
    ang = ang - ang[ids.index(65)]
    buses = []
    for b in ids:
        if b in gens:
            buses.append({"id": b, "kind": "generator"})
        elif b in loads:
            p, q = loads[b]
            buses.append({"id": b, "kind": "dynamic_load", "load": load_entry(p, q, 30.0, hp, hq)})
        else:
            buses.append({"id": b, "kind": "static"})
    return {
        "name": "case68",
        "base_mva": base,
        "buses": buses,
        "branches": [{"from": f, "to": t, "r": r, "x": x, "b_shunt": bsh, "in_service": True}
                     for f, t, r, x, bsh in branches],
        "svcs": [svc_entry(b) for b in svc_buses],
        "generators": [{"bus": g, "v": gens[g][0], "theta": 0.0 if g == 65 else round(float(ang[ids.index(g)]), 12),
                        "reference": g == 65} for g in gen_ids],
    }


def write(d):
    path = DATA / f"{d['name']}.json"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(d, fh, indent=1)
        fh.write("\n")
    print("wrote", path)


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--hp", type=float, default=0.05, help="absolute P noise intensity, p.u.")
    ap.add_argument("--hq", type=float, default=0.05, help="absolute Q noise intensity, p.u.")
    args = ap.parse_args()
    DATA.mkdir(parents=True, exist_ok=True)
    write(make_case3())
    write(make_case39(args.hp, args.hq))
    write(make_case68(args.hp, args.hq))
