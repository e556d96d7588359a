"""Command-line surface: generate, solve, eval, check, bench.

Exit codes: 0 success, 1 usage error, 2 validation failure (bad inputs,
infeasible checks), 3 numeric check failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from datetime import datetime, timezone

import numpy as np

from . import __version__
from ._kernels import backend_name
from .evaluator import (
    EvaluationError,
    SofteningConfig,
    claim_equality_warnings,
    hard_value,
    protection_table,
)
from .generators import GridSpec, gen_grid, gen_office, gen_points_complete
from .graph import GraphFormatError, PatrollingGraph, load_graph, serialize_graph
from .optimizer import OptimizerConfig, regstar
from .oracle import PathLimitError, brute_protection, enumerate_paths, fd_gradient, mc_protection
from .strategy import build_index, strategy_from_json, strategy_to_json

USAGE_ERROR = 1
VALIDATION_ERROR = 2
NUMERIC_ERROR = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_ERROR)


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
        if not text.endswith("\n"):
            fh.write("\n")


def _graph_sha256(g: PatrollingGraph) -> str:
    return hashlib.sha256(serialize_graph(g).encode()).hexdigest()


def _load_strategy_file(g: PatrollingGraph, path: str):
    with open(path, "r", encoding="utf-8") as fh:
        return strategy_from_json(g, fh.read())


def _optimizer_config(args) -> OptimizerConfig:
    soft = SofteningConfig(
        margin=args.margin, temperature=args.temperature, eps_support=args.eps_support
    )
    return OptimizerConfig(
        delta=args.delta,
        threshold=args.threshold,
        max_iters=args.max_iters,
        softening=soft,
        normalization=args.normalization,
        step_scale=args.step_scale,
    )


def _add_optimizer_flags(p: argparse.ArgumentParser) -> None:
    d = OptimizerConfig()
    p.add_argument("--delta", type=float, default=d.delta, help="step decay rate")
    p.add_argument("--threshold", type=float, default=d.threshold, help="convergence threshold")
    p.add_argument("--max-iters", type=int, default=d.max_iters)
    p.add_argument("--step-scale", type=float, default=d.step_scale)
    p.add_argument("--normalization", choices=["full", "pivot"], default=d.normalization)
    p.add_argument("--margin", type=float, default=d.softening.margin)
    p.add_argument("--temperature", type=float, default=d.softening.temperature)
    p.add_argument("--eps-support", type=float, default=d.softening.eps_support)
    p.add_argument("--jobs", type=int, default=1, help="parallel restart workers")


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------


def _cmd_generate(args) -> int:
    if args.family == "grid":
        spec = GridSpec(
            n=args.n,
            k=args.targets,
            seed=args.seed,
            cost_range=(args.cost_min, args.cost_max),
            attack_time_rule=args.attack_rule,
            beta_rule=args.beta_rule,
        )
        g = gen_grid(spec)
    elif args.family == "points":
        with open(args.points_file, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        pts = [tuple(p) for p in doc["points"]]
        g = gen_points_complete(
            pts,
            seed=args.seed,
            cost_range=(args.cost_min, args.cost_max),
            attack_time_rule=args.attack_rule,
            beta_rule=args.beta_rule,
        )
    else:
        g = gen_office(args.floors, beta=args.beta, attack_time=args.attack_time)
    _write(args.output, serialize_graph(g))
    print(f"wrote {args.output}: {g.n_vertices} vertices, {g.n_targets} targets, {g.n_edges} edges")
    return 0


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------


def _run_result_json(result, index, round_floats: bool = False) -> str:
    best = result.best
    doc = {
        "best": {
            "value": best.final_value,
            "strategy": json.loads(strategy_to_json(index, best.final_strategy)),
            "iters": best.iterations,
        },
        "all_values": result.all_values,
        "close_fraction": result.close_fraction,
    }
    return json.dumps(doc, indent=1, sort_keys=True)


def _cmd_solve(args) -> int:
    g = load_graph(args.graph)
    cfg = _optimizer_config(args)
    t0 = time.perf_counter()
    result = regstar(g, args.mem, args.restarts, cfg, seed=args.seed, jobs=args.jobs)
    wall = time.perf_counter() - t0
    index = build_index(g, args.mem)
    _write(args.output, _run_result_json(result, index))
    if args.strategy_out:
        _write(args.strategy_out, strategy_to_json(index, result.best.final_strategy))
    manifest = {
        "command": ["solve"] + list(args.raw_argv),
        "config": {
            "mem": args.mem,
            "restarts": args.restarts,
            "seed": args.seed,
            "delta": cfg.delta,
            "threshold": cfg.threshold,
            "max_iters": cfg.max_iters,
            "step_scale": cfg.step_scale,
            "normalization": cfg.normalization,
            "margin": cfg.softening.margin,
            "temperature": cfg.softening.temperature,
            "eps_support": cfg.softening.eps_support,
            "jobs": args.jobs,
        },
        "graph_sha256": _graph_sha256(g),
        "package_version": __version__,
        "backend": backend_name(),
        "wall_time_s": wall,
        "created_utc": datetime.now(timezone.utc).isoformat(),
    }
    _write(args.output + ".manifest.json", json.dumps(manifest, indent=1, sort_keys=True))
    print(
        f"best value {result.best.final_value:.6g} over {args.restarts} restarts "
        f"({result.close_fraction:.1%} close), {wall:.1f}s"
    )
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def _cmd_eval(args) -> int:
    g = load_graph(args.graph)
    index, sigma = _load_strategy_file(g, args.strategy)
    table = protection_table(g, index, sigma, want_grads=False)
    report = hard_value(table, g, index, sigma, eps_support=args.eps_support)
    ws, wt = report.worst_case
    doc = {
        "rval": report.value,
        "worst_case": {
            "edge": [list(p) for p in index.slot_label(ws)],
            "target": wt,
        },
        "candidates": [
            {"edge": [list(p) for p in index.slot_label(j)], "target": t, "loss": loss}
            for j, t, loss in report.per_candidate[: args.top]
        ],
        "stats": {
            "lambda_max": table.stats.lambda_max,
            "heap_peak": table.stats.heap_peak,
        },
        "warnings": claim_equality_warnings(index, sigma, args.eps_support),
    }
    text = json.dumps(doc, indent=1, sort_keys=True)
    if args.output:
        _write(args.output, text)
    else:
        print(text)
    return 0


# ---------------------------------------------------------------------------
# check
# ---------------------------------------------------------------------------


def _cmd_check(args) -> int:
    g = load_graph(args.graph)
    index, sigma = _load_strategy_file(g, args.strategy)
    table = protection_table(g, index, sigma, want_grads=True)
    rng = np.random.default_rng(args.seed)

    max_val_err = 0.0
    for j in range(index.n_slots):
        for t in g.target_ids:
            bv = brute_protection(g, index, sigma, j, t, limit=args.max_paths)
            max_val_err = max(max_val_err, abs(bv - table.value(j, t)))

    max_grad_err = 0.0
    pairs = [
        (int(rng.integers(0, index.n_slots)), g.target_ids[int(rng.integers(0, g.n_targets))])
        for _ in range(args.fd_pairs)
    ]
    for j, t in pairs:
        ps = enumerate_paths(g, index, sigma, j, t, eps=0.0, limit=args.max_paths)
        fd = fd_gradient(lambda s: ps.protection(s), sigma, h=1e-6)
        an = table.grad(j, t)
        scale = max(1.0, float(np.max(np.abs(an))))
        max_grad_err = max(max_grad_err, float(np.max(np.abs(fd - an))) / scale)

    max_z = 0.0
    for i in range(args.mc_pairs):
        j = int(rng.integers(0, index.n_slots))
        t = g.target_ids[int(rng.integers(0, g.n_targets))]
        mean, stderr = mc_protection(g, index, sigma, j, t, n=args.mc_samples, seed=rng)
        exact = table.value(j, t)
        if stderr > 0:
            max_z = max(max_z, abs(mean - exact) / stderr)
        elif abs(mean - exact) > 1e-9:
            max_z = np.inf

    ok = max_val_err <= args.value_tol and max_grad_err <= args.grad_tol and max_z <= args.z_max
    print(f"max value error:          {max_val_err:.3e}  (tol {args.value_tol:.1e})")
    print(f"max relative grad error:  {max_grad_err:.3e}  (tol {args.grad_tol:.1e})")
    print(f"max playout z-score:      {max_z:.2f}  (max {args.z_max})")
    print("OK" if ok else "FAILED")
    return 0 if ok else NUMERIC_ERROR


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------


def _cmd_bench(args) -> int:
    if args.family == "office":
        g = gen_office(args.floors, beta=args.beta, attack_time=args.attack_time)
        params = f"floors={args.floors}"
    elif args.family == "grid":
        g = gen_grid(GridSpec(n=args.n, k=args.targets, seed=args.seed))
        params = f"n={args.n};k={args.targets}"
    else:
        with open(args.points_file, "r", encoding="utf-8") as fh:
            pts = [tuple(p) for p in json.load(fh)["points"]]
        g = gen_points_complete(pts, seed=args.seed)
        params = f"points={len(pts)}"
    cfg = _optimizer_config(args)
    mems = [int(m) for m in args.mem_list.split(",")]
    rows = []
    for m in mems:
        result = regstar(g, m, args.restarts, cfg, seed=args.seed, jobs=args.jobs)
        rows.append(
            {
                "family": args.family,
                "params": params,
                "m": m,
                "restarts": args.restarts,
                "best": round(result.best.final_value, 4),
                "close_pct": round(100.0 * result.close_fraction, 2),
                "iters_avg": round(float(np.mean(result.all_iterations)), 1),
                "time_s_avg": round(float(np.mean(result.all_wall_times)), 4),
            }
        )
        print(
            f"m={m}: best={rows[-1]['best']} close={rows[-1]['close_pct']}% "
            f"iters_avg={rows[-1]['iters_avg']} time_s_avg={rows[-1]['time_s_avg']}"
        )
    fields = ["family", "params", "m", "restarts", "best", "close_pct", "iters_avg", "time_s_avg"]
    with open(args.output, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {args.output}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="patrolkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write an instance graph JSON")
    p.add_argument("--family", choices=["grid", "points", "office"], required=True)
    p.add_argument("--n", type=int, default=6, help="grid side")
    p.add_argument("--targets", type=int, default=10, help="number of grid targets")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cost-min", type=float, default=180.0)
    p.add_argument("--cost-max", type=float, default=200.0)
    p.add_argument("--attack-rule", choices=["standard", "extended"], default=None)
    p.add_argument("--beta-rule", choices=["perfect", "uniform"], default=None)
    p.add_argument("--points-file", help="JSON file with {'points': [[x, y], ...]}")
    p.add_argument("--floors", type=int, default=1)
    p.add_argument("--beta", type=float, default=0.9, help="office detection probability")
    p.add_argument("--attack-time", type=int, default=None, help="office attack time override")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("solve", help="synthesize a strategy by restarted ascent")
    p.add_argument("graph")
    p.add_argument("--mem", type=int, required=True, help="memory elements per vertex")
    p.add_argument("--restarts", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    _add_optimizer_flags(p)
    p.add_argument("-o", "--output", required=True, help="run-result JSON path")
    p.add_argument("--strategy-out", help="also write the best strategy JSON here")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("eval", help="evaluate a strategy file against its graph")
    p.add_argument("graph")
    p.add_argument("strategy")
    p.add_argument("--eps-support", type=float, default=1e-6)
    p.add_argument("--top", type=int, default=50, help="candidates to include in the report")
    p.add_argument("-o", "--output")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("check", help="validate the sweep against oracles on a small instance")
    p.add_argument("graph")
    p.add_argument("strategy")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fd-pairs", type=int, default=3)
    p.add_argument("--mc-pairs", type=int, default=2)
    p.add_argument("--mc-samples", type=int, default=20000)
    p.add_argument("--max-paths", type=int, default=10**6)
    p.add_argument("--value-tol", type=float, default=1e-9)
    p.add_argument("--grad-tol", type=float, default=1e-5)
    p.add_argument("--z-max", type=float, default=4.0)
    p.set_defaults(func=_cmd_check)

    p = sub.add_parser("bench", help="per-memory-size synthesis benchmark, CSV output")
    p.add_argument("--family", choices=["office", "grid", "points"], required=True)
    p.add_argument("--floors", type=int, default=1)
    p.add_argument("--beta", type=float, default=0.9)
    p.add_argument("--attack-time", type=int, default=None)
    p.add_argument("--n", type=int, default=9)
    p.add_argument("--targets", type=int, default=10)
    p.add_argument("--points-file")
    p.add_argument("--mem-list", default="1,2,3,4")
    p.add_argument("--restarts", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    _add_optimizer_flags(p)
    p.add_argument("-o", "--output", required=True, help="CSV path")
    p.set_defaults(func=_cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.raw_argv = argv
    # Families resolve their own rule defaults: grids default to the standard
    # attack rule with perfect detection, point clouds to the extended rule
    # with imperfect detection.
    if getattr(args, "attack_rule", "x") is None:
        args.attack_rule = "standard" if args.family == "grid" else "extended"
    if getattr(args, "beta_rule", "x") is None:
        args.beta_rule = "perfect" if args.family == "grid" else "uniform"
    try:
        return int(args.func(args))
    except (GraphFormatError, EvaluationError, PathLimitError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return VALIDATION_ERROR


if __name__ == "__main__":
    sys.exit(main())
