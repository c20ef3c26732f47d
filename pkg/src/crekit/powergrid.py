"""Multi-area DC dispatch: case parsing, stitching, compilation, oracle.

Parses the numeric-matrix subset of MATPOWER case files, stitches areas
into a multi-area system joined by tie-lines, and compiles one parametric
QP per area with the boundary-bus phase angles as the shared parameter
vector.  Quantities are per-unit on the case MVA base (100 MVA unless the
case says otherwise); angles are radians.  Generator cost constants are
dropped (they shift every objective identically).

Parameter convention: boundary angles are ordered by (area index, bus id),
and all parameter coefficients are scaled by the configured factor
(default 0.01), which enlarges the critical regions without changing the
optimal cost; the physical angle is ``scaling * theta``.
"""

import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _qpsolve
from .cre import Agent
from .errors import CaseParseError, ModelError
from .mplcp import MpQP
from .polyhedra import HPolyhedron

DEFAULT_CAPACITY_MW = 800.0
DEFAULT_SCALING = 0.01


@dataclass(frozen=True)
class Bus:
    id: int
    btype: int
    pd: float                        # load, p.u.


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    x: float                         # reactance, p.u.
    rate: float                      # flow limit, p.u.


@dataclass(frozen=True)
class Generator:
    bus: int
    pmin: float
    pmax: float


@dataclass(frozen=True)
class GenCost:
    c2: float                        # $/MW^2 h
    c1: float                        # $/MWh
    c0: float


@dataclass(frozen=True)
class CaseData:
    name: str
    base_mva: float
    buses: tuple
    branches: tuple
    generators: tuple
    gencost: tuple

    def __post_init__(self):
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise ModelError(f"{self.name}: duplicate bus ids")
        known = set(ids)
        for br in self.branches:
            if br.from_bus not in known or br.to_bus not in known:
                raise ModelError(f"{self.name}: branch references unknown bus "
                                 f"{br.from_bus}-{br.to_bus}")
            if br.x <= 0:
                raise ModelError(f"{self.name}: nonpositive reactance on "
                                 f"{br.from_bus}-{br.to_bus}")
        for g in self.generators:
            if g.bus not in known:
                raise ModelError(f"{self.name}: generator at unknown bus {g.bus}")
        if len(self.gencost) != len(self.generators):
            raise ModelError(f"{self.name}: gencost rows do not match generators")
        for c in self.gencost:
            if c.c2 < 0:
                raise ModelError(f"{self.name}: negative quadratic cost coefficient")
        if len(self.buses) > 1 and not self._connected():
            raise ModelError(f"{self.name}: network graph is not connected")

    def _connected(self):
        adj = {b.id: set() for b in self.buses}
        for br in self.branches:
            adj[br.from_bus].add(br.to_bus)
            adj[br.to_bus].add(br.from_bus)
        seen = {self.buses[0].id}
        stack = [self.buses[0].id]
        while stack:
            for nxt in adj[stack.pop()]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return len(seen) == len(self.buses)

    def bus_index(self):
        return {b.id: i for i, b in enumerate(self.buses)}

    def gens_at(self, bus_id):
        return [i for i, g in enumerate(self.generators) if g.bus == bus_id]


def _strip_comments(text):
    return [line.split("%", 1)[0] for line in text.splitlines()]


def _parse_matrix(lines, start, section):
    """Rows of a bracketed numeric matrix starting at ``lines[start]``."""
    rows = []
    buf = ""
    open_seen = "[" in lines[start]
    i = start
    if open_seen:
        buf = lines[start].split("[", 1)[1]
    while i < len(lines):
        if not open_seen:
            i += 1
            if i >= len(lines):
                break
            if "[" in lines[i]:
                open_seen = True
                buf = lines[i].split("[", 1)[1]
            continue
        closing = "]" in buf
        chunk = buf.split("]", 1)[0] if closing else buf
        for piece in chunk.replace(";", "\n").splitlines():
            piece = piece.strip().rstrip(",")
            if not piece:
                continue
            parts = re.split(r"[,\s]+", piece)
            try:
                row = [float(v) for v in parts if v]
            except ValueError as exc:
                raise CaseParseError(f"{section}: malformed row {piece!r}",
                                     line_no=i + 1) from exc
            if any(math.isnan(v) for v in row):
                raise CaseParseError(f"{section}: NaN entry", line_no=i + 1)
            if row:
                rows.append((row, i + 1))
        if closing:
            return rows, i
        i += 1
        buf = lines[i] if i < len(lines) else ""
    raise CaseParseError(f"{section}: unterminated matrix", line_no=start + 1)


def parse_matpower_case(text, name="case"):
    """Parse the mpc.bus / branch / gen / gencost numeric subset of a case file."""
    lines = _strip_comments(text)
    sections = {}
    base_mva = 100.0
    for i, line in enumerate(lines):
        m = re.match(r"\s*mpc\.(\w+)\s*=", line)
        if not m:
            continue
        key = m.group(1)
        if key == "baseMVA":
            try:
                base_mva = float(line.split("=", 1)[1].strip().rstrip(";"))
            except ValueError as exc:
                raise CaseParseError("baseMVA: malformed value", line_no=i + 1) from exc
        elif key in ("bus", "branch", "gen", "gencost"):
            sections[key], _ = _parse_matrix(lines, i, key)
    for required in ("bus", "branch", "gen", "gencost"):
        if required not in sections:
            raise CaseParseError(f"missing section mpc.{required}")

    def need(row, ncols, section, line_no):
        if len(row) < ncols:
            raise CaseParseError(
                f"{section}: row has {len(row)} columns, expected >= {ncols}",
                line_no=line_no)

    buses = []
    for row, ln in sections["bus"]:
        need(row, 3, "bus", ln)
        buses.append(Bus(id=int(row[0]), btype=int(row[1]), pd=row[2] / base_mva))
    bus_ids = {b.id for b in buses}

    branches = []
    for row, ln in sections["branch"]:
        need(row, 6, "branch", ln)
        f_bus, t_bus = int(row[0]), int(row[1])
        if f_bus not in bus_ids or t_bus not in bus_ids:
            raise CaseParseError(f"branch: unknown bus {f_bus} or {t_bus}", line_no=ln)
        rate_mw = row[5] if row[5] > 0 else DEFAULT_CAPACITY_MW
        branches.append(Branch(from_bus=f_bus, to_bus=t_bus, x=row[3],
                               rate=rate_mw / base_mva))

    gens = []
    for row, ln in sections["gen"]:
        need(row, 10, "gen", ln)
        bus = int(row[0])
        if bus not in bus_ids:
            raise CaseParseError(f"gen: unknown bus {bus}", line_no=ln)
        gens.append(Generator(bus=bus, pmin=row[9] / base_mva, pmax=row[8] / base_mva))

    costs = []
    for row, ln in sections["gencost"]:
        need(row, 4, "gencost", ln)
        if int(row[0]) != 2:
            raise CaseParseError("gencost: only polynomial cost model 2 supported",
                                 line_no=ln)
        ncost = int(row[3])
        need(row, 4 + ncost, "gencost", ln)
        coeffs = row[4:4 + ncost]
        if ncost == 3:
            c2, c1, c0 = coeffs
        elif ncost == 2:
            c2, (c1, c0) = 0.0, coeffs
        elif ncost == 1:
            c2, c1, c0 = 0.0, 0.0, coeffs[0]
        else:
            raise CaseParseError(f"gencost: unsupported ncost {ncost}", line_no=ln)
        costs.append(GenCost(c2=c2, c1=c1, c0=c0))

    return CaseData(name=name, base_mva=base_mva, buses=tuple(buses),
                    branches=tuple(branches), generators=tuple(gens),
                    gencost=tuple(costs))


def serialize_case(case):
    """Emit a parseable case text (inverse of :func:`parse_matpower_case`)."""
    base = case.base_mva
    out = [f"function mpc = {case.name}", "mpc.version = '2';",
           f"mpc.baseMVA = {base!r};", "mpc.bus = ["]
    for b in case.buses:
        out.append(f"  {b.id} {b.btype} {b.pd * base!r} 0 0 0 1 1 0 110 1 1.1 0.9;")
    out.append("];")
    out.append("mpc.gen = [")
    for g in case.generators:
        out.append(f"  {g.bus} 0 0 0 0 1 {base!r} 1 {g.pmax * base!r} {g.pmin * base!r};")
    out.append("];")
    out.append("mpc.branch = [")
    for br in case.branches:
        out.append(f"  {br.from_bus} {br.to_bus} 0 {br.x!r} 0 {br.rate * base!r} 0 0 0 0 1;")
    out.append("];")
    out.append("mpc.gencost = [")
    for c in case.gencost:
        out.append(f"  2 0 0 3 {c.c2!r} {c.c1!r} {c.c0!r};")
    out.append("];")
    return "\n".join(out) + "\n"


def build_dc_matrices(case):
    """Nodal susceptance matrix B and branch flow matrix H of one case.

    ``B[k, l] = -1/x`` for each branch, diagonals make rows sum to zero;
    ``H`` has one row per branch with ``+-1/x`` at its endpoints.
    """
    idx = case.bus_index()
    nb = len(case.buses)
    B = np.zeros((nb, nb))
    H = np.zeros((len(case.branches), nb))
    for r, br in enumerate(case.branches):
        i, j = idx[br.from_bus], idx[br.to_bus]
        y = 1.0 / br.x
        B[i, j] -= y
        B[j, i] -= y
        B[i, i] += y
        B[j, j] += y
        H[r, i] = y
        H[r, j] = -y
    return B, H


@dataclass(frozen=True)
class TieLine:
    from_area: int
    from_bus: int
    to_area: int
    to_bus: int
    x: float
    capacity: float                  # p.u.


@dataclass(frozen=True)
class MultiAreaSystem:
    areas: tuple
    tie_lines: tuple
    boundary: tuple                  # (area, bus id), ordered
    reference: tuple                 # (area, bus id)

    @property
    def d(self):
        return len(self.boundary)

    def boundary_index(self):
        return {ab: i for i, ab in enumerate(self.boundary)}


def stitch_areas(cases, tie_specs, ref_spec, default_capacity_mw=DEFAULT_CAPACITY_MW):
    """Join per-area cases with tie-lines and register the boundary buses.

    ``tie_specs`` entries: (from_area, from_bus, to_area, to_bus, x[, capacity_mw]).
    Missing capacities take the default.  Boundary buses must not host
    generators; ties must join distinct areas.
    """
    cases = tuple(cases)
    ties = []
    boundary = set()
    base = cases[0].base_mva if cases else 100.0
    for spec in tie_specs:
        if isinstance(spec, dict):
            fa, fb = int(spec["from_area"]), int(spec["from_bus"])
            ta, tb = int(spec["to_area"]), int(spec["to_bus"])
            x = float(spec["x"])
            cap_mw = float(spec.get("capacity", default_capacity_mw))
        else:
            fa, fb, ta, tb, x = spec[:5]
            cap_mw = float(spec[5]) if len(spec) > 5 else default_capacity_mw
        if fa == ta:
            raise ModelError(f"tie-line endpoints are both in area {fa}")
        for area, bus in ((fa, fb), (ta, tb)):
            if area < 0 or area >= len(cases):
                raise ModelError(f"tie-line references missing area {area}")
            if bus not in {b.id for b in cases[area].buses}:
                raise ModelError(f"tie-line references missing bus {bus} in area {area}")
            boundary.add((area, bus))
        if x <= 0:
            raise ModelError("tie-line reactance must be positive")
        ties.append(TieLine(fa, fb, ta, tb, float(x), cap_mw / base))
    for area, bus in sorted(boundary):
        if cases[area].gens_at(bus):
            raise ModelError(f"generator on boundary bus {bus} of area {area}")
    ref_area, ref_bus = int(ref_spec[0]), int(ref_spec[1])
    if ref_area < 0 or ref_area >= len(cases):
        raise ModelError(f"reference area {ref_area} does not exist")
    if ref_bus not in {b.id for b in cases[ref_area].buses}:
        raise ModelError(f"reference bus {ref_bus} not in area {ref_area}")
    return MultiAreaSystem(areas=cases, tie_lines=tuple(ties),
                           boundary=tuple(sorted(boundary)),
                           reference=(ref_area, ref_bus))


def _global_structure(system):
    """Global bus indexing, stitched susceptance matrix, and branch lists."""
    gmap = {}
    count = 0
    for a, case in enumerate(system.areas):
        for b in case.buses:
            gmap[(a, b.id)] = count
            count += 1
    B = np.zeros((count, count))
    branches = []                    # (area or None, from_g, to_g, y, rate)
    for a, case in enumerate(system.areas):
        for br in case.branches:
            i, j = gmap[(a, br.from_bus)], gmap[(a, br.to_bus)]
            y = 1.0 / br.x
            B[i, j] -= y
            B[j, i] -= y
            B[i, i] += y
            B[j, j] += y
            branches.append((a, i, j, y, br.rate))
    ties = []
    for t in system.tie_lines:
        i, j = gmap[(t.from_area, t.from_bus)], gmap[(t.to_area, t.to_bus)]
        y = 1.0 / t.x
        B[i, j] -= y
        B[j, i] -= y
        B[i, i] += y
        B[j, j] += y
        ties.append((i, j, y, t.capacity))
    return gmap, B, branches, ties


def _cost_coeffs(case):
    """Quadratic/linear objective coefficients for per-unit generation."""
    base = case.base_mva
    h = np.array([2.0 * c.c2 * base * base for c in case.gencost])
    f = np.array([c.c1 * base for c in case.gencost])
    return h, f


@dataclass(frozen=True)
class AreaCompilation:
    """One area's parametric QP plus the index maps into the system."""

    area: int
    problem: MpQP
    var_kinds: tuple                 # ("gen", gen index) or ("angle", bus id)
    theta_order: tuple               # (area, bus id) per parameter column

    def agent(self, name=None):
        return Agent(name or f"area{self.area}", self.problem)


def compile_agents(system, scaling=DEFAULT_SCALING):
    """Per-area parametric QPs plus the coordinator's parameter polyhedron.

    Each agent owns its internal power balance, the balance of its own
    boundary buses, internal line limits, generation bounds, and the
    reference row when the reference bus is internal.  The coordinator set
    holds the tie-line limits, angle boxes, and a boundary reference row.
    All theta coefficients are multiplied by ``scaling``.
    """
    gmap, B, branches, ties = _global_structure(system)
    gkeys = [None] * len(gmap)
    for key, g in gmap.items():
        gkeys[g] = key
    bidx = system.boundary_index()
    d = system.d
    boundary_set = set(system.boundary)
    ref_area, ref_bus = system.reference
    ref_is_boundary = (ref_area, ref_bus) in boundary_set

    compilations = []
    for a, case in enumerate(system.areas):
        internal = [b.id for b in case.buses if (a, b.id) not in boundary_set]
        own_boundary = [b.id for b in case.buses if (a, b.id) in boundary_set]
        ng = len(case.generators)
        if ng + len(internal) == 0:
            raise ModelError(f"area {a} has no internal buses and no generators")
        var_kinds = tuple([("gen", i) for i in range(ng)]
                          + [("angle", bus) for bus in internal])
        n = len(var_kinds)
        gen_col = {i: i for i in range(ng)}
        ang_col = {bus: ng + i for i, bus in enumerate(internal)}

        rows_a, rows_b, rows_c = [], [], []

        def add(arow, rhs, crow, is_eq):
            # equality rows enter as opposite inequality pairs (the
            # reformulation to complementarity form is literal that way)
            rows_a.append(arow)
            rows_b.append(rhs)
            rows_c.append(crow)
            if is_eq:
                rows_a.append(-arow)
                rows_b.append(-rhs)
                rows_c.append(-crow)

        def balance_row(bus_id, pd):
            g = gmap[(a, bus_id)]
            arow = np.zeros(n)
            crow = np.zeros(d)
            for j, case_b in enumerate(system.areas):
                for b in case_b.buses:
                    coef = B[g, gmap[(j, b.id)]]
                    if coef == 0.0:
                        continue
                    if (j, b.id) in boundary_set:
                        crow[bidx[(j, b.id)]] -= coef
                    else:
                        if j != a:
                            raise ModelError("internal coupling across areas")
                        arow[ang_col[b.id]] += coef
            for gi in case.gens_at(bus_id):
                arow[gen_col[gi]] -= 1.0
            add(arow, -pd, crow, True)

        for b in case.buses:
            if b.id in ang_col:
                balance_row(b.id, b.pd)
        for b in case.buses:
            if b.id in own_boundary:
                balance_row(b.id, b.pd)

        for (ar, i, j, y, rate) in branches:
            if ar != a:
                continue
            arow = np.zeros(n)
            crow = np.zeros(d)
            for g, sgn in ((i, 1.0), (j, -1.0)):
                key = gkeys[g]
                if key in boundary_set:
                    crow[bidx[key]] -= sgn * y
                else:
                    arow[ang_col[key[1]]] += sgn * y
            add(arow.copy(), rate, crow.copy(), False)
            add(-arow, rate, -crow, False)

        for gi, gen in enumerate(case.generators):
            arow = np.zeros(n)
            arow[gen_col[gi]] = 1.0
            add(arow.copy(), gen.pmax, np.zeros(d), False)
            add(-arow, -gen.pmin, np.zeros(d), False)

        if not ref_is_boundary and ref_area == a:
            arow = np.zeros(n)
            arow[ang_col[ref_bus]] = 1.0
            add(arow, 0.0, np.zeros(d), True)

        hdiag, flin = _cost_coeffs(case)
        H = np.zeros((n, n))
        f = np.zeros(n)
        H[:ng, :ng] = np.diag(hdiag)
        f[:ng] = flin
        problem = MpQP(H=H, f=f, A=np.vstack(rows_a), b=np.array(rows_b),
                       C=scaling * np.vstack(rows_c) if rows_c else np.zeros((0, d)),
                       free=np.ones(n, dtype=bool))
        compilations.append(AreaCompilation(area=a, problem=problem,
                                            var_kinds=var_kinds,
                                            theta_order=tuple(system.boundary)))

    theta_rows = []
    for (i, j, y, cap) in ties:
        key_i = gkeys[i]
        key_j = gkeys[j]
        row = np.zeros(d)
        row[bidx[key_i]] = y
        row[bidx[key_j]] = -y
        theta_rows.append((scaling * row, cap, False))
        theta_rows.append((-scaling * row, cap, False))
    for pos in range(d):
        e = np.zeros(d)
        e[pos] = 1.0
        theta_rows.append((scaling * e, math.pi, False))
        theta_rows.append((-scaling * e, math.pi, False))
    if ref_is_boundary:
        e = np.zeros(d)
        e[bidx[(ref_area, ref_bus)]] = 1.0
        theta_rows.append((scaling * e, 0.0, True))
    Theta = HPolyhedron.from_rows(theta_rows, d)
    return compilations, Theta


@dataclass(frozen=True)
class CentralizedSolution:
    J: float
    g: np.ndarray                    # generation, ordered area by area
    delta: np.ndarray                # angles in the global bus order
    boundary_delta: np.ndarray       # angles of the boundary buses, theta order


def centralized_solve(system):
    """Monolithic dispatch of the whole stitched system (the exactness oracle)."""
    gmap, B, branches, ties = _global_structure(system)
    nb = B.shape[0]
    gen_owner = [(a, gi) for a, case in enumerate(system.areas)
                 for gi in range(len(case.generators))]
    ng = len(gen_owner)
    n = ng + nb

    rows_a, rows_b, rows_eq = [], [], []

    def add(arow, rhs, is_eq):
        rows_a.append(arow)
        rows_b.append(rhs)
        rows_eq.append(is_eq)

    for a, case in enumerate(system.areas):
        for b in case.buses:
            g = gmap[(a, b.id)]
            arow = np.zeros(n)
            arow[ng:] = B[g]
            for k, (aa, gi) in enumerate(gen_owner):
                if aa == a and case.generators[gi].bus == b.id:
                    arow[k] -= 1.0
            add(arow, -b.pd, True)

    for (_ar, i, j, y, rate) in branches:
        arow = np.zeros(n)
        arow[ng + i] = y
        arow[ng + j] = -y
        add(arow.copy(), rate, False)
        add(-arow, rate, False)
    for (i, j, y, cap) in ties:
        arow = np.zeros(n)
        arow[ng + i] = y
        arow[ng + j] = -y
        add(arow.copy(), cap, False)
        add(-arow, cap, False)

    for k, (a, gi) in enumerate(gen_owner):
        gen = system.areas[a].generators[gi]
        arow = np.zeros(n)
        arow[k] = 1.0
        add(arow.copy(), gen.pmax, False)
        add(-arow, -gen.pmin, False)

    arow = np.zeros(n)
    arow[ng + gmap[system.reference]] = 1.0
    add(arow, 0.0, True)

    H = np.zeros((n, n))
    f = np.zeros(n)
    k = 0
    for case in system.areas:
        hdiag, flin = _cost_coeffs(case)
        for i in range(len(case.generators)):
            H[k, k] = hdiag[i]
            f[k] = flin[i]
            k += 1

    res = _qpsolve.solve_qp(H, f, np.vstack(rows_a), np.array(rows_b),
                            eq=np.array(rows_eq))
    if res.status != "optimal":
        from .errors import InfeasibleParameterError
        raise InfeasibleParameterError("system is infeasible", z0=res.z0)
    delta = res.x[ng:]
    boundary_delta = np.array([delta[gmap[key]] for key in system.boundary])
    return CentralizedSolution(J=res.obj, g=res.x[:ng], delta=delta,
                               boundary_delta=boundary_delta)


def boundary_theta(system, solution, scaling=DEFAULT_SCALING):
    """Coordinator coordinates of the centralized optimum's boundary angles."""
    return solution.boundary_delta / scaling


def load_case(path):
    path = Path(path)
    return parse_matpower_case(path.read_text(), name=path.stem)


def load_system(path):
    """Multi-area system from a JSON config; returns (system, config dict)."""
    path = Path(path)
    cfg = json.loads(path.read_text())
    base_dir = path.parent
    cases = [load_case(base_dir / p) for p in cfg["areas"]]
    default_cap = float(cfg.get("defaults", {}).get("capacity_mw", DEFAULT_CAPACITY_MW))
    ref = (cfg["reference"]["area"], cfg["reference"]["bus"])
    system = stitch_areas(cases, cfg.get("tie_lines", []), ref,
                          default_capacity_mw=default_cap)
    cfg.setdefault("scaling", DEFAULT_SCALING)
    return system, cfg
