"""Drop null/incomplete and duplicate query records."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, TypeVar

from .logmodel import DnsQueryRecord

__all__ = ["PLACEHOLDER_NAMES", "SanitizeReport", "dedup_key", "is_null_or_incomplete", "sanitize"]

PLACEHOLDER_NAMES = frozenset({"-", "."})

R = TypeVar("R", bound=DnsQueryRecord)


@dataclass
class SanitizeReport:
    input_count: int = 0
    null_incomplete_removed: int = 0
    duplicates_removed: int = 0
    output_count: int = 0

    CSV_HEADER = "input,null_incomplete,duplicates,output"

    def merge(self, other: SanitizeReport) -> None:
        self.input_count += other.input_count
        self.null_incomplete_removed += other.null_incomplete_removed
        self.duplicates_removed += other.duplicates_removed
        self.output_count += other.output_count

    def is_consistent(self) -> bool:
        return self.output_count == (
            self.input_count - self.null_incomplete_removed - self.duplicates_removed
        )

    def to_csv_row(self) -> str:
        return (
            f"{self.input_count},{self.null_incomplete_removed},"
            f"{self.duplicates_removed},{self.output_count}"
        )

    @classmethod
    def from_csv_row(cls, row: str) -> SanitizeReport:
        values = [int(v) for v in row.strip().split(",")]
        if len(values) != 4:
            raise ValueError(f"expected 4 fields in sanitize report row, got {len(values)}")
        return cls(*values)


def is_null_or_incomplete(record: DnsQueryRecord) -> bool:
    return record.timestamp_ms == 0 or record.query_name in PLACEHOLDER_NAMES or not record.query_name


def dedup_key(record: DnsQueryRecord) -> tuple:
    # response_code is deliberately not part of the key
    return record[:5]


def sanitize(records: Sequence[R]) -> tuple[list[R], SanitizeReport]:
    """Remove placeholder/zero-timestamp records, then exact duplicates.

    The first occurrence of each duplicate key is kept and survivors keep their
    input order. Works on enriched records too, since they extend the base
    record fields.
    """
    report = SanitizeReport(input_count=len(records))
    seen: set[tuple] = set()
    out: list[R] = []
    for rec in records:
        if is_null_or_incomplete(rec):
            report.null_incomplete_removed += 1
            continue
        key = rec[:5]
        if key in seen:
            report.duplicates_removed += 1
            continue
        seen.add(key)
        out.append(rec)
    report.output_count = len(out)
    return out, report
