"""Command-line front end.

Subcommands: ``generate`` (synthetic workload files), ``run`` (one
detector, one epoch, scored), ``sweep`` (parameter grids to CSV),
``analyze`` (closed-form error model and simulated ARE to CSV) and
``bench`` (update throughput). Flags carry the conventional symbol
names (``--r`` rows, ``--G`` segment width, ``--theta`` threshold
scale) with defaults matching the evaluated configuration: r=3,
theta=0.5, G=4, 512-byte host bitmap.

Output files are machine-first (CSV / JSON) and deterministic for a
fixed seed; wall-clock throughput is only emitted where explicitly
requested since it cannot be reproducible.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace

from . import analysis, evaluation, workload
from .baselines import FullAddressSketch, HierarchicalLC, SpreadSketchLite
from .prefix import SegmentConfig
from .sketch import SegSketch, SketchConfig

DETECTORS = ("segsketch", "fulladdr", "spreadsketch", "hierlc")

MEMORY_GRID_KB = (32, 64, 128, 256, 512)
THETA_GRID = (0.35, 0.5, 0.65)
SEGMENT_GRID = (2, 4, 6, 8)
BITMAP_GRID_KB = (0.25, 0.5, 0.75, 1.0)
RATIO_GRID = (20, 25, 33, 50)


def _add_detector_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--detector", choices=DETECTORS, default="segsketch", help="detector to run")
    p.add_argument("--memory-kb", type=int, default=64, help="memory budget in KB")
    p.add_argument("--r", type=int, default=3, help="bucket rows")
    p.add_argument("--G", type=int, default=4, help="IP segment width in bits")
    p.add_argument("--theta", type=float, default=0.5, help="threshold scaling factor")
    p.add_argument(
        "--host-bitmap-bytes", type=int, default=512, help="host bitmap size in bytes"
    )
    p.add_argument(
        "--direction",
        choices=("spreader", "receiver"),
        default="spreader",
        help="key on sources (spreader) or destinations (receiver)",
    )
    p.add_argument("--seed", type=int, default=0, help="hash/replacement seed")
    p.add_argument(
        "--clear-host-on-replace",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="clear the host bitmap too when a bucket is replaced (segsketch)",
    )
    p.add_argument(
        "--cutoff",
        type=float,
        default=None,
        help="flat report cutoff (required by fulladdr and spreadsketch)",
    )


def build_detector(
    name: str,
    args,
    memory_bytes: int,
    theta: float | None = None,
    segment_bits: int | None = None,
    host_bitmap_bits: int | None = None,
):
    theta = args.theta if theta is None else theta
    segment_bits = args.G if segment_bits is None else segment_bits
    host_bitmap_bits = 8 * args.host_bitmap_bytes if host_bitmap_bits is None else host_bitmap_bits
    if name == "segsketch":
        return SegSketch(
            SketchConfig(
                memory_budget_bytes=memory_bytes,
                rows=args.r,
                host_bitmap_bits=host_bitmap_bits,
                segments=SegmentConfig(segment_bits=segment_bits),
                theta=theta,
                direction=args.direction,
                clear_host_on_replace=args.clear_host_on_replace,
                seed=args.seed,
            )
        )
    if name == "fulladdr":
        if args.cutoff is None:
            raise SystemExit("fulladdr requires --cutoff (flat report threshold)")
        return FullAddressSketch(
            memory_budget_bytes=memory_bytes,
            cutoff=args.cutoff,
            rows=args.r,
            host_bitmap_bits=host_bitmap_bits,
            direction=args.direction,
            seed=args.seed,
        )
    if name == "spreadsketch":
        if args.cutoff is None:
            raise SystemExit("spreadsketch requires --cutoff (flat report threshold)")
        return SpreadSketchLite(
            memory_budget_bytes=memory_bytes,
            cutoff=args.cutoff,
            rows=args.r,
            direction=args.direction,
            seed=args.seed,
        )
    if name == "hierlc":
        return HierarchicalLC(
            memory_budget_bytes=memory_bytes,
            theta=theta,
            direction=args.direction,
            seed=args.seed,
        )
    raise SystemExit(f"unknown detector {name!r}")


def cmd_generate(args) -> int:
    lengths = tuple(int(x) for x in args.attacker_prefix_len.split(","))
    spec = workload.GeneratorSpec(
        benign_host_count=args.benign,
        benign_peer_range=(args.benign_peers_min, args.benign_peers_max),
        diverse_benign_count=args.diverse,
        diverse_benign_peers=args.diverse_peers,
        attacker_count=args.attackers,
        attacker_prefix_lengths=lengths,
        attacker_subnet_cardinality=(args.attacker_cardinality_min, args.attacker_cardinality_max),
        duplication=args.duplication,
        seed=args.seed,
    )
    trace, truth = workload.generate(spec)
    if args.direction == "receiver":
        trace, truth = workload.receiver_view(trace, truth)
    count = workload.write_trace(args.out_trace, trace)
    workload.write_truth(args.out_truth, truth)
    print(
        f"wrote {count} packets ({args.attackers} attackers, {args.diverse} diverse benign, "
        f"{args.benign} benign hosts) to {args.out_trace}; truth in {args.out_truth}"
    )
    return 0


def _report_rows(report) -> list[dict]:
    rows = []
    for e in report:
        rows.append(
            {
                "host": workload.format_address(e.host),
                "estimate": f"{e.estimate:.4f}",
                "prefix_bits": getattr(e, "prefix_bits", 0),
            }
        )
    return rows


def cmd_run(args) -> int:
    trace = workload.load_trace(args.trace)
    truth = workload.read_truth(args.truth)
    detector = build_detector(args.detector, args, args.memory_kb * 1024)
    report, elapsed = evaluation.run_epoch(detector, trace)
    role = "receiver" if args.direction == "receiver" else "spreader"
    metrics = evaluation.score(report, truth, positive_role=role)

    payload = {
        "config": {
            "detector": args.detector,
            "memory_kb": args.memory_kb,
            "r": args.r,
            "G": args.G,
            "theta": args.theta,
            "host_bitmap_bytes": args.host_bitmap_bytes,
            "direction": args.direction,
            "seed": args.seed,
            "cutoff": args.cutoff,
            "trace": args.trace,
        },
        "metrics": {k: v for k, v in metrics.to_dict().items() if k != "throughput_mpps"},
        "reported_hosts": len(report),
        "conventions": evaluation.SCORING_CONVENTIONS,
    }
    if args.bench:
        payload["throughput_mpps"] = evaluation.throughput_bench(
            detector, trace, repetitions=args.repetitions
        )
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if args.report_out:
        with open(args.report_out, "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=("host", "estimate", "prefix_bits"))
            writer.writeheader()
            writer.writerows(_report_rows(report))
    if args.save_sketch:
        if args.detector != "segsketch":
            raise SystemExit("--save-sketch only applies to the segsketch detector")
        detector.save(args.save_sketch)
    print(
        f"{args.detector} @ {args.memory_kb}KB: precision={metrics.precision:.3f} "
        f"recall={metrics.recall:.3f} f1={metrics.f1:.3f} are={metrics.are:.3f} "
        f"({len(trace)} packets in {elapsed:.2f}s)"
    )
    return 0


def _sweep_points(args) -> list[tuple[str, object]]:
    axis = args.axis
    if axis == "memory":
        return [("memory_kb", kb) for kb in MEMORY_GRID_KB]
    if axis == "theta":
        return [("theta", t) for t in THETA_GRID]
    if axis == "G":
        return [("G", g) for g in SEGMENT_GRID]
    if axis == "bitmap":
        return [("bitmap_kb", kb) for kb in BITMAP_GRID_KB]
    return [("ratio", r) for r in RATIO_GRID]


def cmd_sweep(args) -> int:
    if args.axis == "G" and args.detector != "segsketch":
        raise SystemExit("the G axis only applies to segsketch")
    if args.axis == "bitmap" and args.detector not in ("segsketch", "fulladdr"):
        raise SystemExit("the bitmap axis needs a detector with a host bitmap")
    if args.axis == "theta" and args.detector not in ("segsketch", "hierlc"):
        raise SystemExit("the theta axis needs a threshold-scaled detector")

    role = "receiver" if args.direction == "receiver" else "spreader"
    if args.axis != "ratio":
        if not args.trace or not args.truth:
            raise SystemExit(f"--trace and --truth are required for the {args.axis} axis")
        trace = workload.load_trace(args.trace)
        truth = workload.read_truth(args.truth)

    rows = []
    for column, value in _sweep_points(args):
        memory = args.memory_kb * 1024
        kwargs = {}
        if column == "memory_kb":
            memory = int(value) * 1024
        elif column == "theta":
            kwargs["theta"] = value
        elif column == "G":
            kwargs["segment_bits"] = value
        elif column == "bitmap_kb":
            kwargs["host_bitmap_bits"] = int(value * 1024) * 8
        else:  # ratio
            spec = replace(workload.standard_spec(args.seed), benign_host_count=50 * int(value))
            trace, truth = workload.generate(spec)
            if args.direction == "receiver":
                trace, truth = workload.receiver_view(trace, truth)
        detector = build_detector(args.detector, args, memory, **kwargs)
        metrics = evaluation.evaluate(detector, trace, truth, positive_role=role)
        row = {"detector": args.detector, "axis": args.axis, "point": value,
               "memory_kb": memory // 1024}
        row.update((k, v) for k, v in metrics.to_dict().items() if k != "throughput_mpps")
        rows.append(row)

    fieldnames = list(rows[0].keys())
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {len(rows)} sweep rows to {args.out}")
    return 0


def cmd_analyze(args) -> int:
    if args.N is not None:
        points = [(args.N, args.C, args.l, args.G_value)]
    else:
        # Subnet peers must fit the subnet: a /24 holds only 256 addresses.
        points = [
            (10_000, min(1_000, 1 << (32 - l - 1)), l, g)
            for l in (8, 16, 24)
            for g in (2, 4, 6, 8)
        ]
    fieldnames = (
        "strategy,N,C,l,G,epsilon,M,U,bound,gap_exact,gap_taylor,simulated_are".split(",")
    )
    rows = []
    for n, c, l, g in points:
        inputs = analysis.BoundInputs(
            total_peers=n, subnet_peers=c, prefix_len=l, segment_bits=g
        )
        gap = analysis.expected_error_gap(inputs)
        for strategy in (analysis.FULL_ADDRESS, analysis.HOST_ADDRESS):
            varset = analysis.strategy_variables(strategy, inputs)
            try:
                bound = analysis.deviation_probability_bound(strategy, inputs)
            except analysis.NonPositiveEpsilonError:
                bound = float("nan")  # flagged, not fatal
            sim = (
                analysis.simulate_are(strategy, inputs, trials=args.trials, seed=args.seed)
                if args.trials > 0
                else float("nan")
            )
            rows.append(
                {
                    "strategy": strategy,
                    "N": n,
                    "C": c,
                    "l": l,
                    "G": g,
                    "epsilon": f"{varset.epsilon:.6g}",
                    "M": f"{varset.hash_space:.6g}",
                    "U": f"{varset.misclassified:.6g}",
                    "bound": f"{bound:.6g}",
                    "gap_exact": f"{gap.exact:.6g}",
                    "gap_taylor": f"{gap.taylor:.6g}",
                    "simulated_are": f"{sim:.6g}",
                }
            )
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {len(rows)} analysis rows to {args.out}")
    return 0


def cmd_bench(args) -> int:
    trace = workload.load_trace(args.trace)
    detector = build_detector(args.detector, args, args.memory_kb * 1024)
    mpps = evaluation.throughput_bench(detector, trace, repetitions=args.repetitions)
    print(f"{args.detector} @ {args.memory_kb}KB: {mpps:.2f} Mpps "
          f"(median of {args.repetitions} runs, {len(trace)} packets)")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(
                {"detector": args.detector, "memory_kb": args.memory_kb, "mpps": mpps},
                fh,
                sort_keys=True,
            )
            fh.write("\n")
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segsketch",
        description="Subnet-aware super-host detection: workloads, detectors, sweeps, bounds.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    g = sub.add_parser("generate", help="write a synthetic trace + ground truth", formatter_class=fmt)
    g.add_argument("--benign", type=int, default=1650, help="plain benign host count")
    g.add_argument("--benign-peers-min", type=int, default=1)
    g.add_argument("--benign-peers-max", type=int, default=30)
    g.add_argument("--diverse", type=int, default=20, help="diverse benign host count")
    g.add_argument("--diverse-peers", type=int, default=1000)
    g.add_argument("--attackers", type=int, default=50)
    g.add_argument("--attacker-prefix-len", default="24", help="comma list over {8,16,24}")
    g.add_argument("--attacker-cardinality-min", type=int, default=200)
    g.add_argument("--attacker-cardinality-max", type=int, default=250)
    g.add_argument("--duplication", type=int, default=4, help="packets per distinct pair")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--direction", choices=("spreader", "receiver"), default="spreader")
    g.add_argument("--out-trace", required=True)
    g.add_argument("--out-truth", required=True)
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="run one detector over a trace and score it", formatter_class=fmt)
    _add_detector_flags(r)
    r.add_argument("--trace", required=True)
    r.add_argument("--truth", required=True)
    r.add_argument("--out", required=True, help="metrics JSON path")
    r.add_argument("--report-out", default=None, help="optional detections CSV")
    r.add_argument("--save-sketch", default=None, help="optional sketch snapshot (.npz)")
    r.add_argument("--bench", action="store_true", help="also measure update throughput")
    r.add_argument("--repetitions", type=int, default=3)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="sweep one axis, write a results CSV", formatter_class=fmt)
    _add_detector_flags(s)
    s.add_argument("--axis", choices=("memory", "theta", "G", "bitmap", "ratio"), required=True)
    s.add_argument("--trace", default=None)
    s.add_argument("--truth", default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    a = sub.add_parser("analyze", help="error-model table (bounds, gaps, simulated ARE)", formatter_class=fmt)
    a.add_argument("--N", type=int, default=None, help="total peers (single-point mode)")
    a.add_argument("--C", type=int, default=1000, help="subnet peers")
    a.add_argument("--l", type=int, default=16, help="true prefix length")
    a.add_argument("--G-value", type=int, default=4, dest="G_value", help="segment width")
    a.add_argument("--trials", type=int, default=200, help="ARE simulation trials (0 skips)")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_analyze)

    b = sub.add_parser("bench", help="median update throughput in Mpps", formatter_class=fmt)
    _add_detector_flags(b)
    b.add_argument("--trace", required=True)
    b.add_argument("--repetitions", type=int, default=3)
    b.add_argument("--out", default=None)
    b.set_defaults(func=cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
