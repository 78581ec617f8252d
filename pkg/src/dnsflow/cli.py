"""``dnsflow`` command line: generate, run, aggregate, plan, compare, inspect.

Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import datetime as dt
import glob
import logging
import os
import sys
from decimal import Decimal, InvalidOperation
from pathlib import Path

from . import aggregates, colstore, datagen, planner
from .colstore import SegmentError, SegmentReader
from .engine import DEFAULT_CHUNK_RECORDS, PipelineConfig, run_pipeline
from .errors import PipelineError, ValidationError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_IO = 3

OUTPUT_ROOT_ENV = "DNSFLOW_OUTPUT_ROOT"

log = logging.getLogger("dnsflow")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _non_negative_decimal(text: str) -> Decimal:
    try:
        value = Decimal(text)
    except InvalidOperation:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if value < 0 or not value.is_finite():
        raise argparse.ArgumentTypeError(f"expected a non-negative number, got {text}")
    return value


def _iso_date(text: str) -> str:
    try:
        return dt.date.fromisoformat(text).isoformat()
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected YYYY-MM-DD, got {text!r}") from None


def _scenario(text: str) -> planner.Scenario:
    try:
        name, nodes, minutes = text.split(":")
        return planner.Scenario(name, _positive_int(nodes), _non_negative_decimal(minutes))
    except (ValueError, argparse.ArgumentTypeError):
        raise argparse.ArgumentTypeError(f"expected INSTANCE:NODES:MINUTES, got {text!r}") from None


def _default_out(sub: str) -> str | None:
    root = os.environ.get(OUTPUT_ROOT_ENV)
    return str(Path(root) / sub) if root else None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dnsflow", description="DNS query-log analytics pipeline and cluster planner.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a synthetic dataset (logs, CDR, CRM, rules, manifest)")
    p.add_argument("--spec", type=Path, help="JSON generator spec; overrides the defaults")
    p.add_argument("--seed", type=int, help="PRNG seed")
    p.add_argument("--subscribers", type=_positive_int, help="number of subscribers")
    p.add_argument("--days", type=_positive_int, help="number of days of traffic")
    p.add_argument("--queries-per-day", type=float, help="mean queries per subscriber per day")
    p.add_argument("--out", type=Path, default=_default_out("generated"), help="output directory")

    p = sub.add_parser("run", help="parse, sanitize, enrich and write the partitioned dataset")
    p.add_argument("--logs", required=True, help="glob matching the raw DNS log files")
    p.add_argument("--cdr", required=True, type=Path, help="CDR CSV (subscriber_id,ip,start_ms,end_ms)")
    p.add_argument("--crm", required=True, type=Path, help="CRM CSV (subscriber_id,city,region_code)")
    p.add_argument("--rules", required=True, type=Path, help="category rules CSV (suffix,category)")
    p.add_argument("--out", type=Path, default=_default_out("dataset"), help="dataset output root")
    p.add_argument("--workers", type=_positive_int, default=1, help="worker processes (default 1)")
    p.add_argument("--chunk", type=_positive_int, default=DEFAULT_CHUNK_RECORDS, help=f"lines per chunk (default {DEFAULT_CHUNK_RECORDS})")

    p = sub.add_parser("aggregate", help="compute one report over a dataset as CSV")
    p.add_argument("--dataset", required=True, type=Path, help="dataset root written by 'run'")
    p.add_argument("--report", required=True, choices=sorted(aggregates.REPORTS), help="which report")
    p.add_argument("--from", dest="start", type=_iso_date, help="first date, inclusive (default: earliest)")
    p.add_argument("--to", dest="end", type=_iso_date, help="last date, inclusive (default: latest)")
    p.add_argument("--out", required=True, type=Path, help="CSV output path")

    p = sub.add_parser("plan", help="size Spark executors for a cluster and optionally cost a run")
    p.add_argument("--catalog", type=Path, help="instance catalog CSV (default: built-in)")
    p.add_argument("--instance", required=True, help="instance type name")
    p.add_argument("--nodes", required=True, type=_positive_int, help="core node count (master excluded)")
    p.add_argument("--runtime-min", type=_non_negative_decimal, help="measured runtime in minutes")

    p = sub.add_parser("compare", help="cost comparison table for several cluster scenarios")
    p.add_argument("--catalog", type=Path, help="instance catalog CSV (default: built-in)")
    p.add_argument(
        "--scenario",
        action="append",
        type=_scenario,
        help="INSTANCE:NODES:MINUTES, repeatable (default: the three 1+10 node reference cases)",
    )
    p.add_argument("--out", type=Path, help="CSV output path (default: stdout)")

    p = sub.add_parser("inspect", help="print a segment's header and column directory")
    p.add_argument("--segment", required=True, type=Path, help="segment file")
    return parser


def _catalog(path: Path | None) -> dict[str, planner.InstanceType]:
    return planner.load_catalog(path) if path else planner.default_catalog()


def cmd_generate(args) -> int:
    if args.out is None:
        raise UsageError("--out is required")
    if args.spec:
        spec = datagen.GeneratorSpec.from_json(args.spec.read_text(encoding="utf-8"))
    else:
        spec = datagen.default_spec()
    for attr, value in (
        ("seed", args.seed),
        ("subscriber_count", args.subscribers),
        ("days", args.days),
        ("base_queries_per_subscriber_day", args.queries_per_day),
    ):
        if value is not None:
            setattr(spec, attr, value)
    try:
        spec.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    manifest = datagen.generate(spec, args.out)
    print(f"generated {manifest.total_lines} log lines in {len(manifest.log_files)} files")
    print(args.out / "manifest.txt")
    return EXIT_OK


def cmd_run(args) -> int:
    if args.out is None:
        raise UsageError("--out is required")
    inputs = sorted(glob.glob(args.logs))
    if not inputs:
        raise UsageError(f"--logs {args.logs!r} matched no files")
    config = PipelineConfig(
        inputs=[Path(p) for p in inputs],
        cdr_path=args.cdr,
        crm_path=args.crm,
        rules_path=args.rules,
        output_root=args.out,
        chunk_records=args.chunk,
        worker_count=args.workers,
    )
    report = run_pipeline(config)
    s = report.sanitize
    print(f"lines={report.total_lines} parsed={report.parsed} rejected={report.rejected}")
    print(f"sanitize: input={s.input_count} null_incomplete={s.null_incomplete_removed} duplicates={s.duplicates_removed} output={s.output_count}")
    print(f"enriched={report.enriched} joined={report.join.joined} segments={report.segments_written} wall_ms={report.wall_ms}")
    print(args.out / "run_report.txt")
    return EXIT_OK


def cmd_aggregate(args) -> int:
    if not args.dataset.is_dir():
        raise FileNotFoundError(f"dataset directory not found: {args.dataset}")
    dates = aggregates.dataset_dates(args.dataset)
    start = args.start or (dates[0] if dates else None)
    end = args.end or (dates[-1] if dates else None)
    if start is None or end is None or end < start or not any(start <= d <= end for d in dates):
        print(f"no partitions in range {start}..{end} under {args.dataset}", file=sys.stderr)
        return EXIT_DATA
    result = aggregates.REPORTS[args.report](args.dataset, start, end)
    aggregates.emit_plot_data(result, args.out)
    if result.missing_dates:
        print(f"warning: no partitions for {', '.join(result.missing_dates)}", file=sys.stderr)
    print(f"{args.report}: {len(result.rows)} rows -> {args.out}")
    return EXIT_OK


def cmd_plan(args) -> int:
    catalog = _catalog(args.catalog)
    inst = catalog.get(args.instance)
    if inst is None:
        raise planner.UnknownInstance(f"unknown instance type {args.instance!r}; known: {', '.join(catalog)}")
    plan = planner.plan_executors(inst, args.nodes)
    print(f"instance={inst.name} vcpus={inst.vcpus} ram_gib={inst.ram_gib} core_nodes={args.nodes}")
    print(
        f"cores={plan.executor_cores} memory={plan.executor_memory_gib} overhead={plan.memory_overhead_gib} "
        f"executors_per_node={plan.executors_per_node} instances={plan.executor_instances} "
        f"parallel_tasks={plan.parallel_tasks} dynamic_allocation=false"
    )
    for key, value in plan.spark_conf().items():
        print(f"  {key}={value}")
    if args.runtime_min is not None:
        cost = planner.estimate_cost(args.nodes + 1, inst.hourly_rate_usd, args.runtime_min)
        print(f"cost: nodes={cost.node_count} rate={inst.hourly_rate_usd} runtime_min={cost.runtime_minutes} total_usd={cost.total_cost_usd}")
    return EXIT_OK


def cmd_compare(args) -> int:
    catalog = _catalog(args.catalog)
    rows = planner.compare_scenarios(catalog, args.scenario or list(planner.REFERENCE_SCENARIOS))
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            planner.write_comparison(rows, catalog, fh)
        print(f"{len(rows)} scenarios -> {args.out}")
    else:
        planner.write_comparison(rows, catalog, sys.stdout)
    return EXIT_OK


def cmd_inspect(args) -> int:
    reader = SegmentReader.open(args.segment)
    reader.records()  # full decode, so payload corruption surfaces here
    info = reader.info
    print(f"segment: {args.segment}")
    print(f"magic: {colstore.MAGIC.decode()} version: {colstore.VERSION}")
    print(f"record_count: {info.record_count}")
    print(f"file_size: {info.file_size}")
    print(f"columns: {len(info.columns)}")
    for col in info.columns:
        print(f"  {col.name:<14} {colstore.Encoding.NAMES[col.encoding]:<13} offset={col.offset} length={col.length}")
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "run": cmd_run,
    "aggregate": cmd_aggregate,
    "plan": cmd_plan,
    "compare": cmd_compare,
    "inspect": cmd_inspect,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"dnsflow {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValidationError, SegmentError, ValueError) as exc:
        print(f"dnsflow {args.command}: invalid data: {exc}", file=sys.stderr)
        return EXIT_DATA
    except PipelineError as exc:
        code = EXIT_IO if isinstance(exc.cause, OSError) else EXIT_DATA
        print(f"dnsflow {args.command}: {exc}", file=sys.stderr)
        return code
    except OSError as exc:
        print(f"dnsflow {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
