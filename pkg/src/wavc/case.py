"""Grid case description and its JSON representation.

A case lists buses, branches, SVCs and the fixed generator sources.  All
quantities are per unit on ``base_mva`` and angles are in radians.

Bus kinds
---------
``generator``
    Fixed voltage source (magnitude and angle held constant).
``dynamic_load``
    Load bus with first-order recovery dynamics in angle and magnitude.
``static``
    Transit bus, optionally carrying a constant-impedance shunt.  These are
    eliminated from the dynamic model by Kron reduction.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

from .errors import CaseError

BUS_KINDS = ("generator", "dynamic_load", "static")


@dataclass
class LoadParams:
    tau_theta: float
    tau_v: float
    p: float
    q: float
    sigma_p: float = 0.0
    sigma_q: float = 0.0


@dataclass
class Bus:
    id: int
    kind: str
    v0: float = 1.0
    theta0: float = 0.0
    load: Optional[LoadParams] = None
    g_shunt: float = 0.0
    b_shunt: float = 0.0


@dataclass
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b_shunt: float = 0.0
    in_service: bool = True

    @property
    def key(self):
        return (self.from_bus, self.to_bus)


@dataclass
class SvcParams:
    """Thyristor-controlled SVC with a lead-lag voltage regulator.

    ``alpha0`` is the firing angle at the initial operating point; when left
    as ``None`` the angle of zero reactive output is used, so an idle SVC does
    not disturb the pre-existing power flow.  ``vref0`` is filled in by
    :func:`wavc.netmodel.initialize_svcs` such that the regulator is in
    equilibrium at the solved operating point.
    """

    bus: int
    k_m: float = 1.0
    k_d: float = 0.01
    k: float = 25.0
    t_m: float = 0.01
    t1: float = 0.1
    t2: float = 10.0
    x_l: float = 0.2
    x_c: float = 0.1
    alpha_min: float = math.pi / 2
    alpha_max: float = math.pi
    vref0: Optional[float] = None
    alpha0: Optional[float] = None


@dataclass
class Generator:
    bus: int
    v: float
    theta: float = 0.0
    reference: bool = False


@dataclass
class SolverSettings:
    tol: float = 1e-8
    max_iter: int = 50


@dataclass
class GridCase:
    buses: list
    branches: list
    svcs: list = field(default_factory=list)
    generators: list = field(default_factory=list)
    base_mva: float = 100.0
    name: str = "case"
    solver: SolverSettings = field(default_factory=SolverSettings)

    def __post_init__(self):
        self.validate()

    # -- lookups -----------------------------------------------------------
    @property
    def bus_ids(self):
        return [b.id for b in self.buses]

    @property
    def load_ids(self):
        return [b.id for b in self.buses if b.kind == "dynamic_load"]

    @property
    def generator_ids(self):
        return [g.bus for g in self.generators]

    @property
    def svc_ids(self):
        return [s.bus for s in self.svcs]

    def bus(self, bus_id):
        for b in self.buses:
            if b.id == bus_id:
                return b
        raise KeyError(bus_id)

    def svc(self, bus_id):
        for s in self.svcs:
            if s.bus == bus_id:
                return s
        raise KeyError(bus_id)

    def find_branch(self, a, b):
        """Index of the first branch joining buses ``a`` and ``b`` (either direction)."""
        for i, br in enumerate(self.branches):
            if {br.from_bus, br.to_bus} == {a, b}:
                return i
        raise KeyError((a, b))

    # -- validation --------------------------------------------------------
    def validate(self):
        ids = self.bus_ids
        if len(set(ids)) != len(ids):
            raise CaseError("bus ids are not unique")
        idset = set(ids)
        for b in self.buses:
            if b.kind not in BUS_KINDS:
                raise CaseError(f"bus {b.id}: unknown kind {b.kind!r}")
            if (b.kind == "dynamic_load") != (b.load is not None):
                raise CaseError(f"bus {b.id}: load parameters present iff kind is dynamic_load")
            if b.load is not None:
                ld = b.load
                if not (ld.tau_theta > 0 and ld.tau_v > 0):
                    raise CaseError(f"bus {b.id}: time constants must be positive")
                if ld.sigma_p < 0 or ld.sigma_q < 0:
                    raise CaseError(f"bus {b.id}: negative load noise intensity")
        for br in self.branches:
            if br.from_bus not in idset or br.to_bus not in idset:
                raise CaseError(f"branch {br.key} references an unknown bus")
            if br.r < 0:
                raise CaseError(f"branch {br.key}: negative resistance")
        gen_buses = set()
        for g in self.generators:
            if g.bus not in idset or self.bus(g.bus).kind != "generator":
                raise CaseError(f"generator entry for bus {g.bus} does not match a generator bus")
            gen_buses.add(g.bus)
        for b in self.buses:
            if b.kind == "generator" and b.id not in gen_buses:
                raise CaseError(f"generator bus {b.id} has no generator entry")
        refs = [g for g in self.generators if g.reference]
        if len(refs) != 1:
            raise CaseError(f"exactly one reference bus required, found {len(refs)}")
        if refs[0].theta != 0.0:
            raise CaseError("reference bus angle must be 0")
        for s in self.svcs:
            if s.bus not in idset or self.bus(s.bus).kind != "dynamic_load":
                raise CaseError(f"SVC at bus {s.bus} must sit on a dynamic load bus")
            if not (s.t_m > 0 and s.t2 > 0 and s.x_l > 0 and s.x_c > 0):
                raise CaseError(f"SVC at bus {s.bus}: t_m, t2, x_l, x_c must be positive")
            if not s.alpha_min < s.alpha_max:
                raise CaseError(f"SVC at bus {s.bus}: alpha_min must be below alpha_max")

    # -- derived cases -----------------------------------------------------
    def copy(self):
        return copy.deepcopy(self)

    def with_branch_status(self, a, b, in_service):
        out = self.copy()
        i = out.find_branch(a, b)
        out.branches[i] = replace(out.branches[i], in_service=in_service)
        return out

    def with_svcs_at(self, buses):
        """Copy keeping only the SVCs installed at ``buses``."""
        sel = set(buses)
        unknown = sel - set(self.svc_ids)
        if unknown:
            raise CaseError(f"buses {sorted(unknown)} have no SVC in this case")
        out = self.copy()
        out.svcs = [s for s in out.svcs if s.bus in sel]
        return out

    def with_scaled_loads(self, buses, dp_frac, dq_frac):
        """Copy with P and Q demand at ``buses`` scaled by (1 + fraction)."""
        out = self.copy()
        sel = set(buses)
        for b in out.buses:
            if b.id in sel and b.load is not None:
                b.load = replace(b.load, p=b.load.p * (1 + dp_frac), q=b.load.q * (1 + dq_frac))
        return out


# -- JSON -----------------------------------------------------------------

def case_from_dict(d):
    buses = []
    for bd in d["buses"]:
        load = bd.get("load")
        buses.append(Bus(
            id=int(bd["id"]),
            kind=bd["kind"],
            v0=float(bd.get("v0", 1.0)),
            theta0=float(bd.get("theta0", 0.0)),
            load=LoadParams(**load) if load is not None else None,
            g_shunt=float(bd.get("g_shunt", 0.0)),
            b_shunt=float(bd.get("b_shunt", 0.0)),
        ))
    branches = [
        Branch(
            from_bus=int(br["from"]),
            to_bus=int(br["to"]),
            r=float(br.get("r", 0.0)),
            x=float(br["x"]),
            b_shunt=float(br.get("b_shunt", 0.0)),
            in_service=bool(br.get("in_service", True)),
        )
        for br in d["branches"]
    ]
    svcs = [SvcParams(**s) for s in d.get("svcs", [])]
    gens = [Generator(bus=int(g["bus"]), v=float(g["v"]), theta=float(g.get("theta", 0.0)),
                      reference=bool(g.get("reference", False)))
            for g in d.get("generators", [])]
    solver = SolverSettings(**d.get("solver", {}))
    return GridCase(buses=buses, branches=branches, svcs=svcs, generators=gens,
                    base_mva=float(d.get("base_mva", 100.0)), name=d.get("name", "case"),
                    solver=solver)


def case_to_dict(case):
    buses = []
    for b in case.buses:
        bd = {"id": b.id, "kind": b.kind, "v0": b.v0, "theta0": b.theta0}
        if b.load is not None:
            bd["load"] = asdict(b.load)
        if b.g_shunt or b.b_shunt:
            bd["g_shunt"] = b.g_shunt
            bd["b_shunt"] = b.b_shunt
        buses.append(bd)
    return {
        "name": case.name,
        "base_mva": case.base_mva,
        "buses": buses,
        "branches": [
            {"from": br.from_bus, "to": br.to_bus, "r": br.r, "x": br.x,
             "b_shunt": br.b_shunt, "in_service": br.in_service}
            for br in case.branches
        ],
        "svcs": [asdict(s) for s in case.svcs],
        "generators": [asdict(g) for g in case.generators],
        "solver": asdict(case.solver),
    }


def load_case(path):
    """Read a case JSON file.  Bare names resolve to the shipped fixtures."""
    p = Path(path)
    if not p.exists() and not p.suffix:
        p = Path(__file__).parent / "data" / f"{path}.json"
    elif not p.exists():
        alt = Path(__file__).parent / "data" / p.name
        if alt.exists():
            p = alt
    with open(p, encoding="utf-8") as fh:
        return case_from_dict(json.load(fh))


def save_case(case, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(case_to_dict(case), fh, indent=1)
        fh.write("\n")
