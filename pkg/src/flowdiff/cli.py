"""Command-line front end: solve, cluster, verify, and bench modes."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time

import numpy as np

from .errors import (FeasibilityError, FlowDiffError, GraphParseError,
                     NumericalError, UsageError, VerificationError)
from .graph import Graph, parse_edge_list, sweep_cut
from .instance import make_l2_instance
from .oracle import QP_VERTEX_CAP, qp_solve_exact
from .solver import Solver, SolverConfig
from . import generators

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PARSE = 2
EXIT_NUMERICAL = 3
EXIT_VERIFY = 4

SCHEMA_VERSION = 1


def _fmt(x):
    """17 significant digits: enough to round-trip doubles reproducibly."""
    return float(f"{float(x):.17g}")


def ingest_graph(path) -> Graph:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_edge_list(fh)


def build_demand(g: Graph, seeds, total_mass, uniform=False):
    """Demand d = sink capacities (degrees) minus seeded source mass."""
    seeds = sorted(set(int(s) for s in seeds))
    if not seeds:
        raise UsageError("need at least one seed vertex")
    for s in seeds:
        if not 0 <= s < g.n:
            raise UsageError(f"seed {s} out of range")
    if total_mass <= 0:
        raise UsageError("total mass must be positive")
    vol_v = float(g.wdeg.sum())
    if total_mass > vol_v + 1e-9:
        raise UsageError(
            f"total mass {total_mass} exceeds graph volume {vol_v}: infeasible")
    s_vec = np.zeros(g.n)
    if uniform:
        s_vec[seeds] = total_mass / len(seeds)
    else:
        vol_s = g.volume(seeds)
        for s in seeds:
            s_vec[s] = total_mass * g.wdeg[s] / vol_s
    return g.wdeg - s_vec


def read_demand_file(path, n):
    d = np.zeros(n)
    with open(path, "r", encoding="utf-8") as fh:
        for ln, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise GraphParseError(f"expected 'u d_u', got {line!r}", line=ln)
            u = int(parts[0])
            if not 0 <= u < n:
                raise GraphParseError(f"vertex {u} out of range", line=ln)
            d[u] = float(parts[1])
    return d


def _config_from_args(args):
    cfg = SolverConfig()
    cfg.eps = args.eps
    cfg.rng_seed = args.seed
    if args.kappa is not None:
        cfg.kappa = args.kappa
    if args.j is not None:
        cfg.j = args.j
    if args.base_case_edges is not None:
        cfg.base_case_edges = args.base_case_edges
    if args.inner_delta is not None:
        cfg.inner_delta = args.inner_delta
    cfg.validate()
    return cfg


def _emit(payload, args):
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def run_solve(args, cluster=False):
    g = ingest_graph(args.input)
    if args.demand_file:
        if args.seeds:
            raise UsageError("give either --seeds or --demand-file, not both")
        d = read_demand_file(args.demand_file, g.n)
    else:
        if not args.seeds:
            raise UsageError("cluster/solve needs --seeds or --demand-file")
        seeds = [int(s) for s in args.seeds.split(",")]
        mass = args.mass if args.mass is not None else 2.0 * g.volume(seeds)
        d = build_demand(g, seeds, mass, uniform=args.uniform_mass)
    cfg = _config_from_args(args)
    solver = Solver(cfg)
    x, flow, stats = solver.l2_diffusion(g, d, args.eps)
    inst = make_l2_instance(g, d)
    payload = {
        "schema": SCHEMA_VERSION,
        "mode": "cluster" if cluster else "solve",
        "n": g.n,
        "m": g.m,
        "energy": _fmt(inst.energy(x)),
        "potentials": [_fmt(v) for v in x],
        "flow": [_fmt(v) for v in flow],
        # timing is excluded so identical (input, config, seed) runs emit
        # byte-identical files
        "stats": stats.to_dict(timing=False),
    }
    if cluster:
        cut, phi = sweep_cut(g, x)
        payload["cut_vertices"] = sorted(int(v) for v in cut)
        payload["conductance"] = _fmt(phi)
    _emit(payload, args)
    return EXIT_OK


def run_verify(args):
    g = ingest_graph(args.input)
    if g.n > QP_VERTEX_CAP:
        raise UsageError(f"verify mode is capped at {QP_VERTEX_CAP} vertices")
    if args.demand_file:
        d = read_demand_file(args.demand_file, g.n)
    elif args.seeds:
        seeds = [int(s) for s in args.seeds.split(",")]
        mass = args.mass if args.mass is not None else 2.0 * g.volume(seeds)
        d = build_demand(g, seeds, mass, uniform=args.uniform_mass)
    else:
        rng = np.random.default_rng(args.seed)
        d = rng.normal(size=g.n)
        label = g.components()
        for cid in range(label.max() + 1):
            mask = label == cid
            excess = d[mask].sum()
            if excess < 0:
                d[mask] -= (excess - 0.01) / mask.sum()
    cfg = _config_from_args(args)
    solver = Solver(cfg)
    x, _, _ = solver.l2_diffusion(g, d, args.eps)
    inst = make_l2_instance(g, d)
    e_solver = inst.energy(x)
    _, e_oracle = qp_solve_exact(inst)
    ok = e_solver <= e_oracle / (1 + args.eps) + 1e-9 * (1 + abs(e_oracle))
    payload = {
        "schema": SCHEMA_VERSION,
        "mode": "verify",
        "solver_energy": _fmt(e_solver),
        "oracle_energy": _fmt(e_oracle),
        "eps": args.eps,
        "pass": bool(ok),
    }
    _emit(payload, args)
    if not ok:
        raise VerificationError(
            f"solver energy {e_solver} vs oracle {e_oracle} at eps={args.eps}")
    return EXIT_OK


def _bench_family(name, size, seed):
    if name == "grid":
        cols = max(2, int(round((size / 2) ** 0.5)))
        rows = max(2, int(round(size / (2 * cols))))
        return generators.grid_graph(rows, cols)
    if name == "ring":
        return generators.ring_graph(max(3, size))
    if name == "expander":
        return generators.expander_graph(max(4, size // 2), seed=seed)
    if name == "barbell":
        return generators.barbell_graph(max(3, size // 2))
    raise UsageError(f"unknown bench family {name!r}")


def run_bench(args):
    sizes = [int(s) for s in (args.sizes or "16384,32768,65536,131072").split(",")]
    families = (args.family or "grid").split(",")
    rows = []
    for fam in families:
        for size in sizes:
            g = _bench_family(fam, size, args.seed)
            rng = np.random.default_rng(args.seed + size)
            d = rng.normal(size=g.n)
            d -= d.mean()
            d += 0.05
            cfg = _config_from_args(args)
            cfg.time_budget = args.time_budget
            solver = Solver(cfg)
            t0 = time.perf_counter()
            status = "ok"
            try:
                solver.l2_diffusion(g, d, args.eps)
            except NumericalError as exc:
                status = f"aborted: {exc}"
            wall_ms = (time.perf_counter() - t0) * 1e3
            st = solver.stats.to_dict()
            rows.append({
                "family": fam,
                "n": g.n,
                "m": g.m,
                "wall_ms": round(wall_ms, 3),
                "oracle_calls": st["total_oracle_calls"],
                "levels": st["levels"],
                "status": status,
            })
    if args.format == "json":
        _emit({"schema": SCHEMA_VERSION, "mode": "bench", "rows": rows}, args)
    else:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
        if args.output:
            with open(args.output, "w", encoding="utf-8") as fh:
                fh.write(buf.getvalue())
        else:
            sys.stdout.write(buf.getvalue())
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(
        prog="flowdiff",
        description="L2-norm flow diffusion solver and sweep-cut clustering")
    ap.add_argument("--input", help="edge-list file (u v [c] per line)")
    ap.add_argument("--mode", required=True,
                    choices=["solve", "cluster", "verify", "bench"])
    ap.add_argument("--eps", type=float, default=1e-6)
    ap.add_argument("--seeds", help="comma-separated seed vertex ids")
    ap.add_argument("--mass", type=float, help="total source mass")
    ap.add_argument("--uniform-mass", action="store_true",
                    help="split mass uniformly over seeds instead of by degree")
    ap.add_argument("--demand-file", help="file with 'u d_u' lines")
    ap.add_argument("--kappa", type=float, help="fixed preconditioner budget")
    ap.add_argument("--j", type=int, help="fixed j-tree root budget")
    ap.add_argument("--base-case-edges", type=int)
    ap.add_argument("--inner-delta", type=float)
    ap.add_argument("--seed", type=int, default=0, help="rng seed")
    ap.add_argument("--output", help="output path (default stdout)")
    ap.add_argument("--format", choices=["json", "csv"], default="json")
    ap.add_argument("--family", help="bench graph families (comma list)")
    ap.add_argument("--sizes", help="bench edge-count targets (comma list)")
    ap.add_argument("--time-budget", type=float,
                    help="bench per-instance wall budget in seconds")
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
        if args.mode in ("solve", "cluster", "verify") and not args.input:
            raise UsageError(f"--input is required for mode {args.mode}")
        if args.mode == "solve":
            return run_solve(args)
        if args.mode == "cluster":
            return run_solve(args, cluster=True)
        if args.mode == "verify":
            return run_verify(args)
        return run_bench(args)
    except GraphParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (UsageError, FeasibilityError, FileNotFoundError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except VerificationError as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except (NumericalError, FlowDiffError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
