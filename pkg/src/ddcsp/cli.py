"""Command-line front end: ``ddcsp gen|solve|bench|dd|check``.

Exit codes: 0 success, 1 infeasible (or a solution that fails its check),
2 any other error.
"""
from __future__ import annotations

import argparse
import csv
import itertools
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from . import bilevel, robust
from .dd import export_dot
from .errors import (CapExceeded, DDCSPError, InfeasibleInstance, NoFeasiblePath, ParseError,
                     PathCapExceeded, SolverError, StateCapExceeded, TimeLimitReached)
from .instances import (dumps, instance_to_dict, read_instance, read_solution, write_instance,
                        write_solution)
from .milp.lpformat import write_lp_file

EXIT_OK, EXIT_INFEASIBLE, EXIT_ERROR = 0, 1, 2
BILEVEL_METHODS = ("ddr", "brute", "emit-lp")
ROBUST_METHODS = ("ddro", "ip", "brute", "emit-lp")
OBJ_TOL = 1e-6


@dataclass
class RunRecord:
    instance: str
    method: str
    status: str
    objective: float | None
    time: float
    iterations: int | None
    seed: int | None


RECORD_FIELDS = list(RunRecord.__dataclass_fields__)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6f}" if not v.is_integer() else f"{v:g}"
    return str(v)


def write_records(records, fh) -> None:
    w = csv.writer(fh)
    w.writerow(RECORD_FIELDS)
    for rec in records:
        w.writerow([_fmt(getattr(rec, f)) for f in RECORD_FIELDS])


def _as_bilevel(inst, order=None):
    if isinstance(inst, bilevel.CpspInstance):
        return inst.to_bilevel(order or "weight-asc")
    return inst


# -- solving -----------------------------------------------------------------

def run_method(inst, method: str, time_limit: float | None = None, rule: str = "auto",
               strategy: str = "first"):
    """Solve ``inst``; returns ``(objective, solution dict, iterations or nodes, solution)``."""
    if isinstance(inst, robust.RtsptwInstance):
        if method == "ddro":
            sol = robust.solve_state_augmenting(inst, strategy=strategy, time_limit=time_limit)
        elif method == "ip":
            sol = robust.solve_ip_augmenting(inst, time_limit=time_limit)
        elif method == "brute":
            sol = robust.brute_force_robust(inst)
        else:
            raise ValueError(f"method must be one of {ROBUST_METHODS[:-1]}")
        data = {"kind": "rtsptw-solution", "route": list(sol.route), "objective": sol.objective,
                "scenarios": [list(s) for s in sol.scenarios]}
        return sol.objective, data, len(sol.log) or None, sol
    model = _as_bilevel(inst)
    if method == "ddr":
        sol = bilevel.solve_ddr(model, rule=rule, time_limit=time_limit)
        iters = sol.stats.get("nodes")
    elif method == "brute":
        sol = bilevel.brute_force_bilevel(model)
        iters = None
    else:
        raise ValueError(f"method must be one of {BILEVEL_METHODS[:-1]}")
    data = {"kind": "bilevel-solution", "x_leader": list(sol.x_leader),
            "x_follower": list(sol.x_follower), "objective": sol.leader_objective,
            "follower_objective": sol.follower_objective}
    return sol.leader_objective, data, iters, sol


def _status_of(exc: Exception) -> str:
    if isinstance(exc, (NoFeasiblePath, InfeasibleInstance)):
        return "infeasible"
    if isinstance(exc, TimeLimitReached):
        return "timeout"
    if isinstance(exc, (CapExceeded, PathCapExceeded, StateCapExceeded)):
        return "cap"
    if isinstance(exc, SolverError) and exc.status in ("timeout", "cap", "infeasible"):
        return exc.status
    return "error"


def _emit_lp(inst, args) -> None:
    if isinstance(inst, robust.RtsptwInstance):
        if args.route:
            model = robust.build_sep_milp(inst, [int(v) for v in args.route.split(",")])
        else:
            scen = json.loads(args.scenarios) if args.scenarios else [list(inst.l)]
            model = robust.build_ip_baseline(inst, scen, big_m=args.big_m)
    else:
        model_inst = _as_bilevel(inst)
        rule = args.rule
        dd = bilevel.build_follower_dd(model_inst, drop_negative=False if rule == "range" else None)
        model = bilevel.build_single_level_milp(model_inst, dd,
                                                bilevel.compute_big_m(model_inst, dd, rule))
    write_lp_file(model, args.lp_out)
    print(f"wrote {args.lp_out}: {model.num_vars} variables, {model.num_constraints} rows, "
          f"{model.num_binaries} binaries")


def cmd_solve(args) -> int:
    inst = read_instance(args.instance)
    robust_kind = isinstance(inst, robust.RtsptwInstance)
    allowed = ROBUST_METHODS if robust_kind else BILEVEL_METHODS
    if args.method not in allowed:
        print(f"error: method must be one of {', '.join(allowed)} for this instance",
              file=sys.stderr)
        return EXIT_ERROR
    if args.method == "emit-lp":
        if not args.lp_out:
            print("error: emit-lp needs --lp-out", file=sys.stderr)
            return EXIT_ERROR
        _emit_lp(inst, args)
        return EXIT_OK
    t0 = time.perf_counter()
    status, objective, iters, data, sol = "optimal", None, None, None, None
    try:
        objective, data, iters, sol = run_method(inst, args.method, args.time_limit, args.rule,
                                                 args.strategy)
    except DDCSPError as exc:
        status = _status_of(exc)
        print(f"status: {status} ({exc})")
    elapsed = time.perf_counter() - t0
    if status == "optimal":
        print("status: optimal")
        print(f"objective: {objective:g}")
        if robust_kind:
            print("route: " + " ".join(map(str, sol.route)))
            print(f"scenarios added: {len(sol.scenarios)}")
            if sol.log:
                print("iteration  objective  scenarios  labels  time")
                for rec in sol.log:
                    print(f"{rec.iteration:9d}  {rec.objective:9g}  {rec.scenarios:9d}  "
                          f"{rec.labels:6d}  {rec.time:.4f}")
                if args.log:
                    robust.write_iteration_log(sol.log, args.log)
            ok = robust.separate(inst, sol.route) is None
            print(f"check robust feasibility: {'pass' if ok else 'FAIL'}")
        else:
            print("x_leader: " + "".join(map(str, sol.x_leader)))
            print("x_follower: " + "".join(map(str, sol.x_follower)))
            print(f"follower objective: {sol.follower_objective:g}")
            for k, v in sol.residuals.items():
                print(f"certificate {k}: {v:.3g}")
        if args.out:
            write_solution(data, args.out)
    if args.record:
        seed = (inst.meta.get("seed") if hasattr(inst, "meta") else None)
        rec = RunRecord(Path(args.instance).stem, args.method, status, objective, elapsed, iters,
                        seed)
        path = Path(args.record)
        new = not path.exists() or path.stat().st_size == 0
        with open(path, "a", newline="") as fh:
            w = csv.writer(fh)
            if new:
                w.writerow(RECORD_FIELDS)
            w.writerow([_fmt(getattr(rec, f)) for f in RECORD_FIELDS])
    if status == "optimal":
        return EXIT_OK
    return EXIT_INFEASIBLE if status == "infeasible" else EXIT_ERROR


# -- generation ----------------------------------------------------------------

def make_instance(kind: str, params: dict):
    if kind == "cpsp":
        return bilevel.generate_cpsp(int(params["n"]), float(params["t"]),
                                     params.get("dist", "u25"), int(params.get("seed", 0)),
                                     params.get("d_mode", "cF"),
                                     params.get("follower_profit", "default"))
    if kind == "rtsptw":
        return robust.generate_rtsptw(int(params["n"]), int(params["w"]), int(params["b"]),
                                      int(params.get("seed", 0)))
    raise ValueError("kind must be 'cpsp' or 'rtsptw'")


def cmd_gen(args) -> int:
    if args.kind == "cpsp":
        if args.t is None:
            print("error: cpsp needs --t", file=sys.stderr)
            return EXIT_ERROR
        params = {"n": args.n, "t": args.t, "dist": args.dist, "seed": args.seed,
                  "d_mode": args.d_mode,
                  "follower_profit": "signed" if args.signed else "default"}
    else:
        if args.w is None or args.b is None:
            print("error: rtsptw needs --w and --b", file=sys.stderr)
            return EXIT_ERROR
        params = {"n": args.n, "w": args.w, "b": args.b, "seed": args.seed}
    inst = make_instance(args.kind, params)
    if args.out:
        write_instance(inst, args.out)
    else:
        sys.stdout.write(dumps(instance_to_dict(inst)))
    return EXIT_OK


# -- benchmark -----------------------------------------------------------------

def _instance_id(kind: str, params: dict) -> str:
    keys = ("n", "t", "dist", "d_mode") if kind == "cpsp" else ("n", "w", "b")
    parts = [kind] + [f"{k}{params[k]}" for k in keys if k in params]
    return "-".join(parts) + f"-s{params['seed']}"


def _bench_task(task):
    kind, params, method, time_limit = task
    inst = make_instance(kind, params)
    t0 = time.perf_counter()
    status, objective, iters = "optimal", None, None
    try:
        objective, _, iters, _ = run_method(inst, method, time_limit)
    except DDCSPError as exc:
        status = _status_of(exc)
    except Exception:  # a sweep records failures instead of stopping
        status = "error"
    return RunRecord(_instance_id(kind, params), method, status, objective,
                     time.perf_counter() - t0, iters, params["seed"])


def bench_tasks(config: dict) -> list:
    kind = config.get("kind")
    if kind not in ("cpsp", "rtsptw"):
        raise ParseError("bench config needs kind 'cpsp' or 'rtsptw'")
    grid = config.get("grid", {})
    keys = sorted(grid)
    seeds = config.get("seeds", [0])
    methods = config.get("methods", [])
    time_limit = config.get("time_limit")
    tasks = []
    for combo in itertools.product(*(grid[k] for k in keys)) if keys else ():
        for seed in seeds:
            params = dict(zip(keys, combo), seed=seed)
            for m in methods:
                tasks.append((kind, params, m, time_limit))
    return tasks


def mismatches(records) -> list:
    """Instances whose optimal runs disagree on the objective."""
    by_inst = {}
    for rec in records:
        if rec.status == "optimal":
            by_inst.setdefault(rec.instance, []).append(rec)
    bad = []
    for name, recs in by_inst.items():
        vals = [r.objective for r in recs]
        if max(vals) - min(vals) > OBJ_TOL * (1 + max(abs(v) for v in vals)):
            bad.append(name)
    return bad


def run_bench(config: dict, jobs: int = 1) -> list:
    tasks = bench_tasks(config)
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_bench_task, tasks))
    return [_bench_task(t) for t in tasks]


def cmd_bench(args) -> int:
    try:
        config = json.loads(Path(args.config).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"bench config is not valid JSON: {exc}") from None
    records = run_bench(config, args.jobs)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            write_records(records, fh)
    else:
        write_records(records, sys.stdout)
    bad = mismatches(records)
    counts = {}
    for rec in records:
        counts[rec.status] = counts.get(rec.status, 0) + 1
    summary = ", ".join(f"{k}={v}" for k, v in sorted(counts.items()))
    print(f"{len(records)} runs ({summary or 'none'}); objective mismatches: {len(bad)}",
          file=sys.stderr)
    for name in bad:
        print(f"mismatch: {name}", file=sys.stderr)
    return EXIT_OK if not bad else EXIT_ERROR


# -- diagrams and checks -------------------------------------------------------

def _diagram(inst, prune=True):
    if isinstance(inst, robust.RtsptwInstance):
        return robust.build_tsp_dd(inst, prune=prune)
    return bilevel.build_follower_dd(_as_bilevel(inst))


def cmd_dd(args) -> int:
    inst = read_instance(args.instance)
    dd = _diagram(inst, prune=not args.no_prune)
    if args.action == "dot":
        text = export_dot(dd)
        if args.out:
            Path(args.out).write_text(text)
        else:
            sys.stdout.write(text)
        return EXIT_OK
    print(f"nodes: {dd.num_nodes}")
    print(f"arcs: {dd.num_arcs}")
    print(f"paths: {dd.path_count()}")
    print("layer sizes: " + " ".join(map(str, dd.layer_sizes())))
    if args.action == "build" and args.out:
        data = {"kind": "dd", "num_vars": dd.num_vars, "var_order": list(dd.var_order),
                "node_layer": list(dd.node_layer), "tails": list(dd.tails),
                "heads": list(dd.heads), "values": list(dd.values), "lengths": list(dd.lengths)}
        Path(args.out).write_text(dumps(data))
    return EXIT_OK


def check_solution(inst, sol: dict) -> list[str]:
    """Problems found with ``sol``; empty when it checks out."""
    problems = []
    if isinstance(inst, robust.RtsptwInstance):
        route = [int(v) for v in sol.get("route", [])]
        try:
            inst.validate_route(route)
        except ValueError as exc:
            return [str(exc)]
        found = robust.separate(inst, route)
        if found is not None:
            problems.append(f"scenario {tuple(found[1])} misses the deadline of vertex {found[0]}")
        cost = inst.route_cost(route)
        if "objective" in sol and abs(cost - sol["objective"]) > OBJ_TOL:
            problems.append(f"route costs {cost:g}, file says {sol['objective']:g}")
        return problems
    model = _as_bilevel(inst)
    xl = [int(v) for v in sol.get("x_leader", [])]
    xf = [int(v) for v in sol.get("x_follower", [])]
    if len(xl) != model.n or len(xf) != model.n:
        return ["solution vectors have the wrong length"]
    for i, (a, b_, rhs) in enumerate(zip(model.AL, model.BL, model.bL)):
        lhs = sum(a[j] * xl[j] + b_[j] * xf[j] for j in range(model.n))
        if lhs > rhs + OBJ_TOL:
            problems.append(f"leader row {i} is violated ({lhs:g} > {rhs:g})")
    if any(xl[j] and xf[j] for j in range(model.n)):
        problems.append("the follower uses a blocked item")
    dd = bilevel.build_follower_dd(model, drop_negative=False)
    for i, (row, rhs) in enumerate(zip(model.AF, model.bF)):
        if sum(row[j] * xf[j] for j in range(model.n)) > rhs + OBJ_TOL:
            problems.append(f"follower row {i} is violated")
    if not problems:
        best = bilevel.follower_best(dd, xl).objective
        fval = bilevel.follower_value(model, dd, xf)
        if fval < best - OBJ_TOL:
            problems.append(f"follower response {fval:g} is not optimal ({best:g})")
    val = bilevel.leader_value(model, xl, xf)
    if "objective" in sol and abs(val - sol["objective"]) > OBJ_TOL:
        problems.append(f"leader objective is {val:g}, file says {sol['objective']:g}")
    return problems


def cmd_check(args) -> int:
    inst = read_instance(args.instance)
    problems = check_solution(inst, read_solution(args.solution))
    for p in problems:
        print(f"FAIL: {p}")
    if not problems:
        print("ok")
    return EXIT_OK if not problems else EXIT_INFEASIBLE


# -- argument parsing ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ddcsp", description=(
        "Decision-diagram methods for constrained paths, bilevel blocking problems "
        "and robust routing."))
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a random instance file")
    g.add_argument("kind", choices=("cpsp", "rtsptw"))
    g.add_argument("--n", type=int, required=True, help="items (cpsp) or end-depot index (rtsptw)")
    g.add_argument("--t", type=float, help="cpsp budget tightness in (0, 1]")
    g.add_argument("--dist", default="u25", choices=sorted(bilevel.DIST_BOUNDS),
                   help="cpsp weight distribution")
    g.add_argument("--d-mode", default="cF", choices=("cF", "cL", "zero"),
                   help="cpsp leader penalty on follower items")
    g.add_argument("--signed", action="store_true", help="cpsp follower profits in U(-10, 10)")
    g.add_argument("--w", type=int, help="rtsptw window width")
    g.add_argument("--b", type=int, help="rtsptw uncertainty budget")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", help="output file (default: stdout)")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="solve an instance file")
    s.add_argument("instance")
    s.add_argument("--method", required=True,
                   help="bilevel: ddr, brute, emit-lp; robust: ddro, ip, brute, emit-lp")
    s.add_argument("--rule", default="auto", choices=("auto", "ell", "range"),
                   help="big-M rule for the bilevel model")
    s.add_argument("--strategy", default="first", choices=("first", "most-violated"),
                   help="scenario separation for ddro")
    s.add_argument("--time-limit", type=float, help="seconds, checked cooperatively")
    s.add_argument("--out", help="write the solution as JSON")
    s.add_argument("--log", help="write the ddro iteration log as CSV")
    s.add_argument("--record", help="append a run record to this CSV file")
    s.add_argument("--lp-out", help="LP file written by emit-lp")
    s.add_argument("--route", help="emit-lp: comma-separated route for the separation model")
    s.add_argument("--scenarios", help="emit-lp: JSON list of scenarios for the routing model")
    s.add_argument("--big-m", default="edge", choices=("edge", "dn"),
                   help="emit-lp: big-M rule of the routing model")
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", help="run a parameter sweep from a JSON config")
    b.add_argument("config")
    b.add_argument("--out", help="CSV output (default: stdout)")
    b.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    b.set_defaults(func=cmd_bench)

    d = sub.add_parser("dd", help="build a decision diagram and report on it")
    d.add_argument("action", choices=("build", "stats", "dot"))
    d.add_argument("instance")
    d.add_argument("--out", help="output file for 'dot' or 'build'")
    d.add_argument("--no-prune", action="store_true", help="rtsptw: keep deadline-infeasible arcs")
    d.set_defaults(func=cmd_dd)

    c = sub.add_parser("check", help="verify a solution file against an instance")
    c.add_argument("instance")
    c.add_argument("solution")
    c.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (NoFeasiblePath, InfeasibleInstance) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (DDCSPError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
