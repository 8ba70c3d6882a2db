"""Command-line entry points.

Subcommands: ``plan`` (rank candidate caps by predicted human effort),
``simulate`` (synthetic users execute a plan end to end), ``evaluate``
(score a partition export against gold), ``synth`` (seeded dataset
generator), ``calibrate`` (synthetic calibration to a params file) and
``serve`` (HTTP API for the browser client).

Times print in minutes; ``--verbose`` adds raw seconds. Exit codes:
0 ok, 1 validation problem, 2 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import random
import statistics
import sys
from pathlib import Path

from . import files
from .calibration import DegenerateFit
from .core import GoldPartition, ValueTable, precision_recall
from .costmodel import (
    GlobalParams,
    PurityModel,
    UserParams,
    default_caps,
    rank_plans,
)
from .datagen import TypoModel, synthesize
from .hac import SimilarityConfig, run_joint
from .multiuser import run_team_pipeline
from .report import (
    format_table,
    plan_rows,
    plot_method_times,
    write_plan_report,
)
from .simulator import generate_user, run_synthetic_calibration, simulate_session

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_INTERNAL = 2


class ValidationError(Exception):
    pass


def _parse_caps(spec: str, n: int) -> list[int]:
    """Cap-set spec: comma-separated ints, ``a..b`` ranges, and ``n``."""
    caps: set[int] = set()
    for token in spec.split(","):
        token = token.strip()
        if not token:
            continue
        if token == "n":
            caps.add(n)
        elif ".." in token:
            lo, hi = token.split("..", 1)
            hi_val = n if hi.strip() == "n" else int(hi)
            caps.update(range(int(lo), min(hi_val, n) + 1))
        else:
            caps.add(int(token))
    caps = {c for c in caps if 1 <= c <= n}
    if not caps:
        raise ValidationError(f"cap spec {spec!r} yields no usable caps for n={n}")
    return sorted(caps)


def _load_dataset(args) -> tuple[ValueTable, GoldPartition | None]:
    table = files.load_values(args.values, getattr(args, "column", None))
    if len(table) == 0:
        raise ValidationError(f"{args.values}: no values")
    gold = None
    if getattr(args, "gold", None):
        gold = files.load_gold(args.gold, table)
    return table, gold


def _resolve_params(args, table, gold) -> tuple[UserParams, PurityModel, GlobalParams]:
    if getattr(args, "params", None):
        return files.load_params(args.params)
    if gold is not None:
        user = generate_user(args.seed)
        result = run_synthetic_calibration(table, gold, user)
        log.info("no --params: calibrated a synthetic user (seed %d)", args.seed)
        return result.user_params, result.purity_model, GlobalParams()
    log.warning("no --params and no --gold: using default costs and an assumed purity curve")
    return UserParams(), PurityModel(1.0, -0.35), GlobalParams()


def _minutes(seconds: float) -> float:
    return round(seconds / 60.0, 2)


def cmd_plan(args) -> int:
    table, gold = _load_dataset(args)
    user, model, g = _resolve_params(args, table, gold)
    caps = _parse_caps(args.caps, len(table)) if args.caps else default_caps(len(table))
    cfg = SimilarityConfig(linkage=args.linkage, stop_threshold=args.threshold)
    joint = run_joint(table, cfg, caps)
    sizes_by_cap = {c: joint[c].partition.sizes() for c in caps}
    estimates = rank_plans(sizes_by_cap, model, user, g)
    selected = estimates[0]

    true_costs = None
    if gold is not None and args.simulate_rank:
        sim_user = generate_user(args.seed)
        true_costs = {}
        for cap in caps:
            clusters = [sorted(c.members) for c in joint[cap].partition.clusters]
            rep = simulate_session(table, clusters, gold, sim_user)
            true_costs[cap] = rep.total_seconds

    rows = plan_rows(estimates, true_costs)
    headers = list(rows[0].keys())
    print(format_table(headers, [[r[h] for h in headers] for r in rows[: args.top]]))
    print(f"\nselected cap: {selected.cap} "
          f"(predicted {_minutes(selected.estimated_seconds)} min)")
    if true_costs is not None:
        by_true = sorted(caps, key=lambda c: true_costs[c])
        rank = by_true.index(selected.cap) + 1
        best = by_true[0]
        diff = true_costs[selected.cap] - true_costs[best]
        pct = 100.0 * diff / true_costs[best] if true_costs[best] else 0.0
        print(f"picked plan rank by simulated cost: {rank}/{len(caps)}; "
              f"time diff to best plan: {_minutes(diff)} min ({pct:.1f}%)")
    if args.outdir:
        paths = write_plan_report(Path(args.outdir), estimates, true_costs,
                                  figures=args.figures)
        print("wrote: " + ", ".join(str(p) for p in paths))
    if args.verbose:
        print(f"[seconds] selected={selected.estimated_seconds:.1f}")
    return EXIT_OK


def _plan_cap(plan: str, n: int) -> int | None:
    """None means per-user auto selection."""
    if plan == "auto":
        return None
    if plan == "merge":
        return 1
    if plan in ("full", "quack"):
        return n
    try:
        cap = int(plan)
    except ValueError:
        raise ValidationError(f"unknown plan {plan!r}: use auto, merge, full, or a cap")
    if not 1 <= cap <= n:
        raise ValidationError(f"cap {cap} outside 1..{n}")
    return cap


def cmd_simulate(args) -> int:
    table, gold = _load_dataset(args)
    if gold is None:
        raise ValidationError("simulate requires --gold")
    g = GlobalParams()
    cfg = SimilarityConfig(linkage=args.linkage, stop_threshold=args.threshold)
    rng = random.Random(args.seed)

    if args.team > 1:
        walls = []
        for i in range(args.users):
            report = run_team_pipeline(table, gold, args.team, cfg, g,
                                       seed=rng.randrange(2**31))
            if not (report.precision == 1.0 and report.recall == 1.0 and report.gold_sequence):
                print("ERROR: a team run did not certify an exact partition", file=sys.stderr)
                return EXIT_INTERNAL
            walls.append(report.wall_seconds)
        print(f"team size {args.team}, {args.users} runs: "
              f"mean {_minutes(statistics.mean(walls))} min, "
              f"min {_minutes(min(walls))}, max {_minutes(max(walls))}, "
              f"median {_minutes(statistics.median(walls))}; accuracy 100%")
        if args.verbose:
            print(f"[seconds] walls={[round(w, 1) for w in walls]}")
        return EXIT_OK

    fixed_cap = _plan_cap(args.plan, len(table))
    caps = default_caps(len(table))
    needed = set(caps) if fixed_cap is None else {fixed_cap}
    joint = run_joint(table, cfg, sorted(needed))
    sizes_by_cap = {c: joint[c].partition.sizes() for c in joint}

    totals = []
    overheads = []
    selected_caps = []
    all_exact = True
    for i in range(args.users):
        user = generate_user(rng.randrange(2**31))
        overhead = 0.0
        cap = fixed_cap
        if cap is None:
            cal = run_synthetic_calibration(table, gold, user)
            overhead = cal.total_elapsed_seconds
            cap = rank_plans(sizes_by_cap, cal.purity_model, cal.user_params, g)[0].cap
        clusters = [sorted(c.members) for c in joint[cap].partition.clusters]
        rep = simulate_session(table, clusters, gold, user, g)
        exact = rep.precision == 1.0 and rep.recall == 1.0 and rep.gold_sequence
        all_exact = all_exact and exact
        totals.append(rep.total_seconds + overhead)
        overheads.append(overhead)
        selected_caps.append(cap)

    label = args.plan if fixed_cap is None else f"cap={fixed_cap}"
    print(f"plan {label}, {args.users} simulated users: "
          f"mean {_minutes(statistics.mean(totals))} min, "
          f"min {_minutes(min(totals))}, max {_minutes(max(totals))}; "
          f"accuracy {'100%' if all_exact else 'NOT EXACT'}")
    if fixed_cap is None:
        print(f"selected caps: {sorted(set(selected_caps))}")
    if args.outdir:
        outdir = Path(args.outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        with open(outdir / "simulate.json", "w", encoding="utf-8") as fh:
            json.dump({"plan": label, "minutes": [t / 60.0 for t in totals],
                       "calibration_minutes": [o / 60.0 for o in overheads],
                       "exact": all_exact}, fh, indent=2)
        if args.figures:
            plot_method_times(outdir / "user_minutes.png",
                              {f"u{i}": t / 60.0 for i, t in enumerate(totals)})
    if args.verbose:
        print(f"[seconds] totals={[round(t, 1) for t in totals]}")
    return EXIT_OK if all_exact else EXIT_INTERNAL


def cmd_evaluate(args) -> int:
    table = files.load_values(args.values) if args.values else None
    if table is None:
        # take the value universe from the partition file itself
        import csv as _csv

        rows = list(_csv.reader(Path(args.partition).read_text(encoding="utf-8").splitlines()))
        if rows and rows[0][:2] == ["value", "cluster_id"]:
            rows = rows[1:]
        table = ValueTable(r[0] for r in rows if r)
    partition = files.load_partition(args.partition, table)
    gold = files.load_gold(args.gold, table)
    p, r = precision_recall(partition, gold)
    from .core import match_set_size

    print(f"precision: {p:.4f}  recall: {r:.4f}")
    print(f"matches: candidate={match_set_size(partition)} gold={match_set_size(gold.partition)}")
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.entities > args.n:
        raise ValidationError("--entities cannot exceed --n")
    typo = TypoModel(max_edits=args.max_edits)
    table, gold = synthesize(args.n, args.entities, seed=args.seed, typo_model=typo,
                             confusability=args.confusability)
    files.write_values(args.out_values, table)
    files.write_gold(args.out_gold, table, gold)
    print(f"wrote {len(table)} values over {len(gold.partition)} entities "
          f"to {args.out_values} and {args.out_gold}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    table, gold = _load_dataset(args)
    if gold is None:
        raise ValidationError("synthetic calibration requires --gold")
    user = generate_user(args.seed)
    result = run_synthetic_calibration(table, gold, user)
    files.save_params(args.out, result.user_params, result.purity_model, GlobalParams())
    print(f"calibrated synthetic user seed={args.seed}: "
          f"{result.total_elapsed_seconds:.1f}s of task time; wrote {args.out}")
    if args.verbose:
        print(json.dumps(result.diagnostics["alpha_samples"], indent=2))
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(Path(args.data_dir))
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="valnorm", description=__doc__)
    parser.add_argument("--verbose", action="store_true", help="also print raw seconds")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_dataset_args(p, gold_required=False):
        p.add_argument("--values", required=True, help="value list (txt or csv)")
        p.add_argument("--column", help="CSV column holding the values")
        p.add_argument("--gold", required=gold_required, help="gold CSV value,cluster_id")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--linkage", default="average", choices=["single", "complete", "average"])
        p.add_argument("--threshold", type=float, default=0.3)

    p = sub.add_parser("plan", help="rank candidate caps by predicted effort")
    add_dataset_args(p)
    p.add_argument("--params", help="params JSON from calibrate")
    p.add_argument("--caps", help="cap set, e.g. '1..100,n'")
    p.add_argument("--top", type=int, default=15, help="rows to print")
    p.add_argument("--simulate-rank", action="store_true",
                   help="with --gold: simulate every plan and report the pick's true rank")
    p.add_argument("--outdir", help="write plans.csv/plans.jsonl (+figures) here")
    p.add_argument("--figures", action="store_true")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", help="synthetic users execute a plan")
    add_dataset_args(p, gold_required=True)
    p.add_argument("--users", type=int, default=1, help="simulated users / team runs")
    p.add_argument("--plan", default="auto",
                   help="auto, merge, full (alias: quack), or an integer cap")
    p.add_argument("--team", type=int, default=1, help="collaborating users per run")
    p.add_argument("--outdir")
    p.add_argument("--figures", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="precision/recall of a partition export")
    p.add_argument("--partition", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--values", help="optional value list; default: from the export")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--entities", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--confusability", type=float, default=0.5)
    p.add_argument("--max-edits", type=int, default=2)
    p.add_argument("--out-values", default="values.txt")
    p.add_argument("--out-gold", default="gold.csv")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("calibrate", help="synthetic calibration to a params file")
    add_dataset_args(p, gold_required=True)
    p.add_argument("--out", default="params.json")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("serve", help="run the HTTP API")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8800)
    p.add_argument("--data-dir", default="./valnorm-data")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, files.ParseError, files.GoldCoverageError,
            DegenerateFit, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception:  # pragma: no cover - last-resort diagnostics
        logging.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
