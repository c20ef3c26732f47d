"""Command-line entry point: region queries, coordination runs, baselines.

Traces are emitted as JSON lines (one record per iteration) next to a CSV
summary row per run; see docs/trace-schema.md for the field lists.  All
numeric outputs are deterministic for a fixed seed; only the *_ms timing
fields vary between reruns.
"""

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__, powergrid
from .baselines import AdmmConfig, BendersConfig, admm_run, benders_run
from .cre import CreConfig, run
from .degeneracy import all_regions_containing
from .errors import (CapacityError, CaseParseError, CrekitError,
                     InfeasibleParameterError, NonConvergedError)
from .mplcp import MpQP

log = logging.getLogger("crekit")

SUMMARY_FIELDS = ["method", "system", "start", "seed", "run", "converged", "iters",
                  "total_ms", "cre_solving_ms", "degeneracy_ms", "J", "v_norm_or_gap"]


@dataclass(frozen=True)
class RunManifest:
    command: str
    config_hash: str
    seed: object
    version: str
    wall_ms: float
    cre_solving_ms: float
    degeneracy_ms: float


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_jsonl(path, records):
    with open(path, "a") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def _append_summary(path, row):
    path = Path(path)
    new = not path.exists()
    with open(path, "a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SUMMARY_FIELDS)
        if new:
            writer.writeheader()
        writer.writerow(row)


def _region_to_dict(cr):
    return {
        "A": cr.region.A.tolist(),
        "b": cr.region.b.tolist(),
        "eq": cr.region.eq.astype(int).tolist(),
        "basis": list(cr.basis.indices) if cr.basis else None,
        "solution_T": cr.solution_map.T.tolist(),
        "solution_k": cr.solution_map.k.tolist(),
        "x_T": cr.x_map.T.tolist(),
        "x_k": cr.x_map.k.tolist(),
        "vf": {"Hhat": cr.vf.Hhat.tolist(), "fhat": cr.vf.fhat.tolist(),
               "chat": cr.vf.chat},
        "low_dimensional": cr.low_dimensional,
    }


def cmd_regions(args):
    try:
        problem = MpQP.load(args.problem)
    except (OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
        print(f"cannot load problem: {exc}", file=sys.stderr)
        return 1
    theta = np.array([float(v) for v in args.theta.split(",")])
    try:
        bundle = all_regions_containing(problem, theta)
    except InfeasibleParameterError as exc:
        json.dump({"error": "infeasible", "z0": exc.z0}, sys.stderr)
        sys.stderr.write("\n")
        return 2
    except CapacityError as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return 3
    out = {
        "theta": bundle.theta.tolist(),
        "verdict": (None if bundle.verdict is None else asdict(bundle.verdict)),
        "vertices": [v.tolist() for v in bundle.vertices],
        "bases": [list(b.indices) for b in bundle.bases],
        "regions": [_region_to_dict(cr) for cr in bundle.regions],
    }
    text = json.dumps(out, indent=1, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def _load_compiled(system_path):
    system, cfg = powergrid.load_system(system_path)
    comps, Theta = powergrid.compile_agents(system, cfg.get("scaling", 0.01))
    agents = [c.agent() for c in comps]
    name = cfg.get("name", Path(system_path).stem)
    return system, agents, Theta, name, cfg


def _out_paths(args, default_stem):
    trace = args.trace or f"{default_stem}.trace.jsonl"
    summary = args.summary or f"{default_stem}.summary.csv"
    manifest = args.manifest or f"{default_stem}.manifest.json"
    return trace, summary, manifest


def _finish(args, command, records, summary_rows, wall_ms, cre_ms, deg_ms, name, seed):
    trace, summary, manifest = _out_paths(args, name)
    _write_jsonl(trace, records)
    for row in summary_rows:
        _append_summary(summary, row)
    man = RunManifest(command=command, config_hash=_sha256(args.system), seed=seed,
                      version=__version__, wall_ms=wall_ms,
                      cre_solving_ms=cre_ms, degeneracy_ms=deg_ms)
    Path(manifest).write_text(json.dumps(asdict(man), indent=1, sort_keys=True) + "\n")


def cmd_cre(args):
    system, agents, Theta, name, cfg = _load_compiled(args.system)
    config = CreConfig(eps0=args.eps0, alpha=args.alpha, beta=args.beta,
                       v_tol=args.vtol, obj_tol=args.obj_tol, max_iter=args.max_iter)
    records, rows = [], []
    tot_wall = tot_cre = tot_deg = 0.0
    exit_code = 0
    for r in range(args.repeat):
        seed = None if args.seed is None else args.seed + r
        t0 = time.perf_counter()
        try:
            res = run(agents, Theta, config, start=args.start, seed=seed)
            converged = True
        except NonConvergedError as exc:
            res = exc.result
            converged = False
            exit_code = 4
        wall = 1e3 * (time.perf_counter() - t0)
        cre_ms = sum(rec["cre_solving_ms"] for rec in res.trace)
        deg_ms = sum(rec["degeneracy_ms"] for rec in res.trace)
        for rec in res.trace:
            records.append({"method": "cre", "run": r, **rec})
        rows.append({"method": "cre", "system": name, "start": args.start,
                     "seed": seed, "run": r, "converged": converged,
                     "iters": res.iterations, "total_ms": f"{wall:.3f}",
                     "cre_solving_ms": f"{cre_ms:.3f}",
                     "degeneracy_ms": f"{deg_ms:.3f}",
                     "J": repr(float(res.J_star)),
                     "v_norm_or_gap": "" if res.v_norm is None else repr(res.v_norm)})
        tot_wall += wall
        tot_cre += cre_ms
        tot_deg += deg_ms
    _finish(args, "cre-run", records, rows, tot_wall, tot_cre, tot_deg, name, args.seed)
    return exit_code


def cmd_baseline(args):
    system, agents, Theta, name, cfg = _load_compiled(args.system)
    records, rows = [], []
    tot_wall = 0.0
    exit_code = 0
    for r in range(args.repeat):
        seed = None if args.seed is None else args.seed + r
        t0 = time.perf_counter()
        try:
            if args.method == "admm":
                res = admm_run(agents, Theta, AdmmConfig(rho=args.rho, tol=args.tol,
                                                         max_iter=args.max_iter),
                               start=args.start, seed=seed)
            else:
                res = benders_run(agents, Theta,
                                  BendersConfig(gap_tol=args.tol, max_iter=args.max_iter),
                                  start=args.start, seed=seed)
            converged, trace = True, res.trace
            J, metric, iters = res.J, res.metric, res.iterations
        except NonConvergedError as exc:
            converged, trace = False, exc.trace
            J, metric, iters = float("nan"), float("nan"), args.max_iter
            exit_code = 4
        wall = 1e3 * (time.perf_counter() - t0)
        for rec in trace:
            records.append({"method": args.method, "run": r, **rec})
        rows.append({"method": args.method, "system": name, "start": args.start,
                     "seed": seed, "run": r, "converged": converged, "iters": iters,
                     "total_ms": f"{wall:.3f}", "cre_solving_ms": "",
                     "degeneracy_ms": "", "J": repr(float(J)),
                     "v_norm_or_gap": repr(float(metric))})
        tot_wall += wall
    _finish(args, f"baseline:{args.method}", records, rows, tot_wall, 0.0, 0.0,
            f"{name}.{args.method}", args.seed)
    return exit_code


def cmd_centralized(args):
    system, agents, Theta, name, cfg = _load_compiled(args.system)
    t0 = time.perf_counter()
    try:
        sol = powergrid.centralized_solve(system)
    except InfeasibleParameterError as exc:
        json.dump({"error": "infeasible", "z0": exc.z0}, sys.stderr)
        sys.stderr.write("\n")
        return 2
    wall = 1e3 * (time.perf_counter() - t0)
    row = {"method": "centralized", "system": name, "start": "", "seed": "",
           "run": 0, "converged": True, "iters": 1, "total_ms": f"{wall:.3f}",
           "cre_solving_ms": "", "degeneracy_ms": "", "J": repr(float(sol.J)),
           "v_norm_or_gap": ""}
    if args.summary:
        _append_summary(args.summary, row)
    print(json.dumps({"J": sol.J, "g": sol.g.tolist(),
                      "boundary_delta": sol.boundary_delta.tolist()}, sort_keys=True))
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(prog="crekit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("regions", help="all critical regions containing theta")
    p.add_argument("--problem", required=True, help="problem JSON path")
    p.add_argument("--theta", required=True, help="comma-separated parameter values")
    p.add_argument("--out", help="output JSON path (default: stdout)")
    p.set_defaults(func=cmd_regions)

    def common(p):
        p.add_argument("--system", required=True, help="multi-area config JSON")
        p.add_argument("--start", choices=["cold", "random"], default="cold")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--repeat", type=int, default=1)
        p.add_argument("--trace", help="trace JSONL path")
        p.add_argument("--summary", help="summary CSV path")
        p.add_argument("--manifest", help="manifest JSON path")

    p = sub.add_parser("cre-run", help="run the exploration coordinator")
    common(p)
    p.add_argument("--eps0", type=float, default=1e-2)
    p.add_argument("--alpha", type=float, default=2.0)
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--vtol", type=float, default=1e-2)
    p.add_argument("--obj-tol", type=float, default=1e-4)
    p.add_argument("--max-iter", type=int, default=200)
    p.set_defaults(func=cmd_cre)

    p = sub.add_parser("baseline", help="run an ADMM or Benders baseline")
    common(p)
    p.add_argument("--method", choices=["admm", "benders"], required=True)
    p.add_argument("--rho", type=float, default=0.1)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--max-iter", type=int, default=3000)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("centralized", help="monolithic oracle solve")
    p.add_argument("--system", required=True)
    p.add_argument("--summary", help="summary CSV path")
    p.set_defaults(func=cmd_centralized)
    return parser


def main(argv=None):
    logging.basicConfig(level=os.environ.get("CREKIT_LOG", "WARNING").upper())
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CaseParseError as exc:
        print(f"parse error (line {exc.line_no}): {exc}", file=sys.stderr)
        return 1
    except CrekitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
