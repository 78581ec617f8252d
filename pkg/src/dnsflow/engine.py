"""Chunked parallel runner: parse -> sanitize -> enrich -> partition -> write.

The run has two stages separated by a merge barrier:

* map: each chunk of log lines is parsed, null/incomplete rows are dropped
  and the survivors are bucketed by partition and spilled to disk;
* reduce: each partition concatenates its spills in chunk order, removes
  duplicates, joins subscriber data and writes one final segment.

Deduplication therefore sees the whole partition no matter how the input was
chunked, and because duplicates share their timestamp and server they can
never straddle two partitions.

Workers are processes, not threads, so CPU-bound parsing actually runs in
parallel. ``worker_count == 1`` runs every task inline in the caller.
"""

from __future__ import annotations

import logging
import multiprocessing
import os
import shutil
import tempfile
import time
from concurrent.futures import FIRST_EXCEPTION, Future, ProcessPoolExecutor, wait
from dataclasses import dataclass, field
from itertools import islice
from pathlib import Path
from typing import Callable, Iterable, Sequence

from . import colstore
from .enrich import (
    AssignmentIndex,
    EnrichedRecord,
    JoinStats,
    SubscriberProfile,
    build_assignment_index,
    enrich,
    load_cdr,
    load_crm,
    load_rules,
)
from .errors import DnsflowError, PipelineError
from .logmodel import RejectStats, parse_lines
from .sanitizer import SanitizeReport, is_null_or_incomplete, sanitize

__all__ = [
    "DEFAULT_CHUNK_RECORDS",
    "PipelineConfig",
    "WorkChunk",
    "RunReport",
    "plan_chunks",
    "run_pipeline",
    "load_reference_data",
]

log = logging.getLogger(__name__)

DEFAULT_CHUNK_RECORDS = 1 << 20
RUN_REPORT_NAME = "run_report.txt"
SANITIZE_REPORT_NAME = "sanitize_report.csv"


@dataclass
class PipelineConfig:
    inputs: Sequence[Path]
    cdr_path: Path
    crm_path: Path
    rules_path: Path
    output_root: Path
    chunk_records: int = DEFAULT_CHUNK_RECORDS
    worker_count: int = 1

    def __post_init__(self):
        if self.chunk_records < 1:
            raise ValueError("chunk_records must be >= 1")
        if self.worker_count < 1:
            raise ValueError("worker_count must be >= 1")
        self.inputs = [Path(p) for p in self.inputs]
        self.output_root = Path(self.output_root)


@dataclass(frozen=True)
class WorkChunk:
    chunk_id: int
    path: Path
    byte_offset: int
    first_line: int
    line_count: int


@dataclass
class RunReport:
    total_lines: int = 0
    parsed: int = 0
    rejected: int = 0
    rejects: dict[str, int] = field(default_factory=dict)
    sanitize: SanitizeReport = field(default_factory=SanitizeReport)
    enriched: int = 0
    join: JoinStats = field(default_factory=JoinStats)
    chunks: int = 0
    partitions: int = 0
    segments_written: int = 0
    wall_ms: int = 0
    worker_tasks: dict[str, int] = field(default_factory=dict)

    def check(self) -> None:
        """Raise PipelineError if an accounting identity is broken."""
        problems = []
        if self.parsed + self.rejected != self.total_lines:
            problems.append("parsed + rejected != total_lines")
        if self.sanitize.input_count != self.parsed:
            problems.append("sanitize input != parsed")
        if not self.sanitize.is_consistent():
            problems.append("sanitize report does not balance")
        if self.enriched != self.sanitize.output_count:
            problems.append("enriched != sanitize output")
        if problems:
            raise PipelineError("run accounting broken: " + "; ".join(problems))

    def to_text(self) -> str:
        lines = [
            f"total_lines: {self.total_lines}",
            f"parsed: {self.parsed}",
            f"rejected: {self.rejected}",
        ]
        lines += [f"rejected.{k}: {v}" for k, v in self.rejects.items()]
        lines += [
            f"sanitize.input: {self.sanitize.input_count}",
            f"sanitize.null_incomplete: {self.sanitize.null_incomplete_removed}",
            f"sanitize.duplicates: {self.sanitize.duplicates_removed}",
            f"sanitize.output: {self.sanitize.output_count}",
            f"enriched: {self.enriched}",
            f"joined: {self.join.joined}",
            f"unjoined.no_assignment: {self.join.no_assignment}",
            f"unjoined.missing_crm: {self.join.missing_crm}",
            f"chunks: {self.chunks}",
            f"partitions: {self.partitions}",
            f"segments_written: {self.segments_written}",
            f"wall_ms: {self.wall_ms}",
        ]
        lines += [f"worker_tasks.{k}: {v}" for k, v in sorted(self.worker_tasks.items())]
        return "\n".join(lines) + "\n"

    def write(self, root: Path) -> tuple[Path, Path]:
        report_path = root / RUN_REPORT_NAME
        csv_path = root / SANITIZE_REPORT_NAME
        report_path.write_text(self.to_text(), encoding="utf-8")
        csv_path.write_text(f"{SanitizeReport.CSV_HEADER}\n{self.sanitize.to_csv_row()}\n", encoding="utf-8")
        return report_path, csv_path


def plan_chunks(inputs: Iterable[str | Path], chunk_records: int) -> list[WorkChunk]:
    """Split each file into runs of ``chunk_records`` physical lines; chunks never span files."""
    if chunk_records < 1:
        raise ValueError("chunk_records must be >= 1")
    chunks: list[WorkChunk] = []
    for path in inputs:
        path = Path(path)
        try:
            with open(path, "rb") as fh:
                offset = 0
                line_no = 0
                start_offset = 0
                start_line = 0
                for line in fh:
                    offset += len(line)
                    line_no += 1
                    if line_no - start_line == chunk_records:
                        chunks.append(WorkChunk(len(chunks), path, start_offset, start_line, chunk_records))
                        start_offset, start_line = offset, line_no
                if line_no > start_line:
                    chunks.append(WorkChunk(len(chunks), path, start_offset, start_line, line_no - start_line))
        except OSError as exc:
            raise PipelineError(f"cannot read input {path}: {exc.strerror or exc}", exc) from exc
    return chunks


# --- worker side ------------------------------------------------------------

_STATE: dict = {}


def _init_worker(index: AssignmentIndex, crm: dict, rules: dict, spill_dir: str) -> None:
    _STATE.update(index=index, crm=crm, rules=rules, spill_dir=spill_dir)


@dataclass
class _MapResult:
    chunk_id: int
    lines: int
    parsed: int
    rejects: RejectStats
    null_removed: int
    spills: list[tuple[colstore.PartitionKey, str, int]]
    pid: int


@dataclass
class _ReduceResult:
    key: colstore.PartitionKey
    report: SanitizeReport
    join: JoinStats
    path: str
    pid: int


def _map_chunk(chunk: WorkChunk) -> _MapResult:
    stats = RejectStats()
    with open(chunk.path, "rb") as fh:
        fh.seek(chunk.byte_offset)
        raw = list(islice(fh, chunk.line_count))
    records = parse_lines(raw, stats)
    lines = sum(1 for line in raw if line.rstrip(b"\n"))

    keyer = colstore.PartitionKeyCache()
    buckets: dict[colstore.PartitionKey, list[EnrichedRecord]] = {}
    null_removed = 0
    for rec in records:
        if is_null_or_incomplete(rec):
            null_removed += 1
            continue
        key = keyer(rec.timestamp_ms, rec.server_id)
        bucket = buckets.get(key)
        if bucket is None:
            bucket = buckets[key] = []
        # placeholder enrichment; the real join happens after dedup
        bucket.append(EnrichedRecord(*rec, None, None, None, ""))

    spills = []
    chunk_dir = Path(_STATE["spill_dir"]) / f"chunk-{chunk.chunk_id:06d}"
    for i, (key, bucket) in enumerate(buckets.items()):
        path = chunk_dir / f"spill-{i:04d}{colstore.SEGMENT_SUFFIX}"
        colstore.write_segment(bucket, path)
        spills.append((key, str(path), len(bucket)))
    return _MapResult(chunk.chunk_id, lines, len(records), stats, null_removed, spills, os.getpid())


def _reduce_partition(key: colstore.PartitionKey, spill_paths: list[str], output_root: str) -> _ReduceResult:
    records: list[EnrichedRecord] = []
    for p in spill_paths:
        records.extend(colstore.read_segment(p))
    survivors, report = sanitize(records)
    join = JoinStats()
    enriched = enrich(survivors, _STATE["index"], _STATE["crm"], _STATE["rules"], join)
    path = Path(output_root) / colstore.partition_path(key, 0)
    colstore.write_segment(enriched, path)
    for p in spill_paths:
        os.unlink(p)
    return _ReduceResult(key, report, join, str(path), os.getpid())


# --- driver -------------------------------------------------------------------


def load_reference_data(config: PipelineConfig) -> tuple[AssignmentIndex, dict[int, SubscriberProfile], dict[str, str]]:
    """Load and validate CDR, CRM and rules; raises ValidationError or OSError."""
    index = build_assignment_index(load_cdr(config.cdr_path))
    crm = load_crm(config.crm_path)
    rules = load_rules(config.rules_path)
    return index, crm, rules


class _InlineExecutor:
    """Runs submitted tasks immediately in the calling process."""

    def submit(self, fn: Callable, *args) -> Future:
        fut: Future = Future()
        try:
            fut.set_result(fn(*args))
        except BaseException as exc:
            fut.set_exception(exc)
        return fut

    def shutdown(self, wait: bool = True, cancel_futures: bool = False) -> None:
        pass


def _make_executor(workers: int, initargs: tuple):
    if workers == 1:
        _init_worker(*initargs)
        return _InlineExecutor()
    methods = multiprocessing.get_all_start_methods()
    ctx = multiprocessing.get_context("fork" if "fork" in methods else None)
    return ProcessPoolExecutor(max_workers=workers, mp_context=ctx, initializer=_init_worker, initargs=initargs)


def _gather(futures: dict[Future, str]) -> list:
    """Wait for all futures, failing fast on the first error."""
    done, pending = wait(futures, return_when=FIRST_EXCEPTION)
    for fut in done:
        exc = fut.exception()
        if exc is not None:
            for p in pending:
                p.cancel()
            raise PipelineError(f"{futures[fut]} failed: {exc}", exc) from exc
    return [f.result() for f in futures]


def run_pipeline(config: PipelineConfig) -> RunReport:
    """Run the whole pipeline and persist the partitioned dataset under ``output_root``.

    The persisted dataset is independent of ``chunk_records`` and
    ``worker_count``. Raises ValidationError for bad reference data and
    PipelineError for anything that aborts the run.
    """
    started = time.perf_counter()
    root = config.output_root
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise PipelineError(f"cannot create output root {root}: {exc.strerror or exc}", exc) from exc
    if any(True for _ in colstore.segments_in(root)):
        raise PipelineError(f"output root {root} already holds a dataset")

    index, crm, rules = load_reference_data(config)
    chunks = plan_chunks(config.inputs, config.chunk_records)
    report = RunReport(chunks=len(chunks))
    spill_dir = tempfile.mkdtemp(prefix="_spill-", dir=root)
    pid_tasks: dict[int, int] = {}

    executor = _make_executor(config.worker_count, (index, crm, rules, spill_dir))
    try:
        futures = {executor.submit(_map_chunk, c): f"chunk {c.chunk_id} ({c.path} @ byte {c.byte_offset}, line {c.first_line})" for c in chunks}
        map_results: list[_MapResult] = sorted(_gather(futures), key=lambda r: r.chunk_id)

        # merge barrier: group spills per partition in chunk order
        by_partition: dict[colstore.PartitionKey, list[str]] = {}
        rejects = RejectStats()
        for res in map_results:
            pid_tasks[res.pid] = pid_tasks.get(res.pid, 0) + 1
            report.total_lines += res.lines
            report.parsed += res.parsed
            rejects.merge(res.rejects)
            report.sanitize.null_incomplete_removed += res.null_removed
            for key, path, _ in res.spills:
                by_partition.setdefault(key, []).append(path)
        report.rejected = rejects.total
        report.rejects = rejects.as_dict()
        report.sanitize.input_count = report.parsed

        keys = sorted(by_partition, key=lambda k: (k.date, k.hour, int(k.server_id)))
        futures = {
            executor.submit(_reduce_partition, k, by_partition[k], str(root)): f"partition {colstore.partition_path(k, 0)}"
            for k in keys
        }
        for res in _gather(futures):
            pid_tasks[res.pid] = pid_tasks.get(res.pid, 0) + 1
            report.sanitize.duplicates_removed += res.report.duplicates_removed
            report.sanitize.output_count += res.report.output_count
            report.join.merge(res.join)
            report.segments_written += 1
        report.partitions = len(keys)
        report.enriched = report.join.records
    except DnsflowError:
        raise
    except OSError as exc:
        raise PipelineError(f"I/O failure during run: {exc}", exc) from exc
    finally:
        executor.shutdown(wait=True, cancel_futures=True)
        shutil.rmtree(spill_dir, ignore_errors=True)

    report.worker_tasks = {f"worker-{i}": pid_tasks[pid] for i, pid in enumerate(sorted(pid_tasks))}
    report.wall_ms = round((time.perf_counter() - started) * 1000)
    report.check()
    report.write(root)
    log.info("run complete: %d lines, %d records written to %d segments", report.total_lines, report.enriched, report.segments_written)
    return report
