"""Command-line entry point: run an experiment matrix and emit its result files."""

from __future__ import annotations

import argparse
import sys

from .bench import ExperimentSpec, RunResult, aggregate, run_matrix
from .errors import ConfigError
from .planner import PLANNERS
from .world import BUILTIN_SCENES


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="hqcnbv",
        description="Hybrid quantum-classical next-best-view exploration experiments.",
    )
    p.add_argument("--scene", nargs="+", default=["S2"],
                   help=f"built-in scene ({', '.join(BUILTIN_SCENES)}) or path to a scene JSON file")
    p.add_argument("--planner", nargs="+", default=["hqc"], choices=PLANNERS)
    p.add_argument("--ansatz", nargs="+", default=["fa"], type=str.lower, choices=("fa", "ne", "ig", "eg"))
    p.add_argument("--hamiltonian", nargs="+", default=["ch"], type=str.lower, choices=("ch", "nc", "sqx"))
    seeds = p.add_mutually_exclusive_group()
    seeds.add_argument("--seed", type=int, help="single seed")
    seeds.add_argument("--seeds", type=int, nargs="+", help="explicit seed list (default: 0 1 2 3 4)")
    p.add_argument("--shots", type=int, default=1024)
    p.add_argument("--iters", type=int, default=None, help="SPSA iterations per decision (default 100)")
    p.add_argument("--layers", type=int, default=5)
    p.add_argument("--qp", type=int, default=4, help="qubits per view parameter")
    p.add_argument("--coverage-threshold", type=float, default=0.90)
    p.add_argument("--max-views", type=int, default=80)
    p.add_argument("--beta", type=float, default=None, help="classical-cost mix weight (default 1.0)")
    p.add_argument("--out", default=None, help="output directory; omit to only print the summary")
    p.add_argument("--dump-distributions", action="store_true",
                   help="write per-step basis-state probabilities for hqc runs")
    p.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    p.add_argument("-q", "--quiet", action="store_true", help="suppress per-run lines")
    return p


def spec_from_args(args: argparse.Namespace) -> ExperimentSpec:
    if args.seed is not None:
        seeds = (args.seed,)
    else:
        seeds = tuple(args.seeds) if args.seeds else (0, 1, 2, 3, 4)
    spsa = {}
    if args.iters is not None:
        spsa["n_iter"] = args.iters
    if args.beta is not None:
        spsa["beta"] = args.beta
    return ExperimentSpec(
        scenes=tuple(args.scene),
        planners=tuple(args.planner),
        ansatz=tuple(a.upper() for a in args.ansatz),
        hamiltonian=tuple(h.upper() for h in args.hamiltonian),
        seeds=seeds,
        coverage_threshold=args.coverage_threshold,
        max_views=args.max_views,
        shots=args.shots,
        layers=args.layers,
        q_p=args.qp,
        spsa=spsa,
        out=args.out,
        dump_distributions=args.dump_distributions,
        workers=args.workers,
    )


def _line(res: RunResult) -> str:
    s = res.summary
    if s.status != "ok":
        return f"{res.key.run_id:<28} FAILED  {s.error}"
    reach = "-" if s.views_to_threshold is None else str(s.views_to_threshold)
    eff = "-" if s.efficiency is None else f"{s.efficiency:.4f}"
    return (
        f"{res.key.run_id:<28} coverage={s.final_coverage:.3f} views={s.views:<3d} "
        f"to_threshold={reach:<3} path={s.path_length:.2f} eff={eff} "
        f"fallbacks={s.fallback_count} {s.termination} ({s.wall_time:.1f}s)"
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = spec_from_args(args)
        printer = None if args.quiet else (lambda r: print(_line(r), flush=True))
        results = run_matrix(spec, on_result=printer)
    except ConfigError as exc:
        print(f"hqcnbv: error: {exc}", file=sys.stderr)
        return 2

    for g in aggregate(r.summary for r in results):
        views = "-" if g["median_views_to_threshold"] is None else f"{g['median_views_to_threshold']:g}"
        eff = "-" if g["mean_efficiency"] is None else f"{g['mean_efficiency']:.4f}"
        print(
            f"[{g['scene']} {g['planner']} {g['ansatz']} {g['hamiltonian']}] runs={g['runs']} "
            f"median_views_to_threshold={views} median_coverage={g['median_final_coverage']:.3f} "
            f"mean_efficiency={eff}"
        )
    if args.out:
        print(f"results written to {args.out}")
    failed = [r for r in results if r.summary.status != "ok"]
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
