"""Exact distinct-subscriber aggregations over a persisted partitioned dataset.

Three reports are supported:

* hourly unique active users per (date, hour, server);
* per-category unique users per (date, hour);
* per-region query volume and unique users per date.

Records without a subscriber are excluded from every distinct count but
still count as queries; in the region report they sit under region ``??``.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import ClassVar, Iterator

import numpy as np

from .colstore import PartitionKey, SegmentReader, iter_partitions
from .logmodel import ServerId

__all__ = [
    "UNJOINED_REGION",
    "AggregateResult",
    "HourlyUniqueUsers",
    "CategoryTraffic",
    "RegionDensity",
    "REPORTS",
    "unique_users_hourly",
    "category_traffic",
    "region_density",
    "emit_plot_data",
    "load_plot_data",
    "dataset_dates",
]

log = logging.getLogger(__name__)

UNJOINED_REGION = "??"


@dataclass
class AggregateResult:
    HEADER: ClassVar[tuple[str, ...]] = ()
    rows: list[tuple] = field(default_factory=list)
    missing_dates: list[str] = field(default_factory=list)

    @classmethod
    def coerce_row(cls, raw: list[str]) -> tuple:
        raise NotImplementedError


@dataclass
class HourlyUniqueUsers(AggregateResult):
    HEADER: ClassVar[tuple[str, ...]] = ("date", "hour", "server", "unique_subscribers")

    @classmethod
    def coerce_row(cls, raw):
        return (raw[0], int(raw[1]), raw[2], int(raw[3]))


@dataclass
class CategoryTraffic(AggregateResult):
    HEADER: ClassVar[tuple[str, ...]] = ("date", "hour", "category", "unique_subscribers")

    @classmethod
    def coerce_row(cls, raw):
        return (raw[0], int(raw[1]), raw[2], int(raw[3]))


@dataclass
class RegionDensity(AggregateResult):
    HEADER: ClassVar[tuple[str, ...]] = ("date", "region", "query_count", "unique_subscribers")

    @classmethod
    def coerce_row(cls, raw):
        return (raw[0], raw[1], int(raw[2]), int(raw[3]))


def _as_date(value: str | dt.date) -> dt.date:
    return value if isinstance(value, dt.date) else dt.date.fromisoformat(value)


def _date_range(start, end) -> list[str]:
    first = _as_date(start)
    last = _as_date(end) if end is not None else first
    if last < first:
        return []
    return [(first + dt.timedelta(days=i)).isoformat() for i in range((last - first).days + 1)]


def dataset_dates(root: str | Path) -> list[str]:
    return sorted({key.date for key, _ in iter_partitions(root)})


def _partitions_in(root, start, end, result: AggregateResult) -> Iterator[tuple[PartitionKey, list[Path]]]:
    wanted = _date_range(start, end)
    wanted_set = set(wanted)
    seen = set()
    for key, parts in iter_partitions(root):
        if key.date in wanted_set:
            seen.add(key.date)
            yield key, parts
    result.missing_dates = [d for d in wanted if d not in seen]
    if result.missing_dates:
        log.warning("no partitions under %s for dates: %s", root, ", ".join(result.missing_dates))


def _subscribers(reader: SegmentReader) -> tuple[np.ndarray, np.ndarray]:
    return reader.optional("subscriber_id")


def unique_users_hourly(root: str | Path, start, end=None) -> HourlyUniqueUsers:
    """Distinct subscribers per (date, hour, server) over ``start``..``end`` inclusive."""
    result = HourlyUniqueUsers()
    for key, parts in _partitions_in(root, start, end, result):
        subs: set[int] = set()
        for path in parts:
            _, values = _subscribers(SegmentReader.open(path))
            subs.update(np.unique(values).tolist())
        result.rows.append((key.date, key.hour, ServerId(key.server_id).label, len(subs)))
    return result


def category_traffic(root: str | Path, start, end=None) -> CategoryTraffic:
    """Distinct subscribers per (date, hour, category), all servers combined."""
    result = CategoryTraffic()
    acc: dict[tuple[str, int], dict[str, set[int]]] = {}
    for key, parts in _partitions_in(root, start, end, result):
        per_cat = acc.setdefault((key.date, key.hour), {})
        for path in parts:
            reader = SegmentReader.open(path)
            entries, idx = reader.dictionary("category")
            presence, values = _subscribers(reader)
            joined_idx = idx[presence]
            for code, category in enumerate(entries):
                subs = per_cat.setdefault(category, set())
                subs.update(np.unique(values[joined_idx == code]).tolist())
    for (date, hour), per_cat in acc.items():
        for category, subs in per_cat.items():
            result.rows.append((date, hour, category, len(subs)))
    result.rows.sort()
    return result


def region_density(root: str | Path, start, end=None) -> RegionDensity:
    """Per-date query count and distinct subscribers by CRM region code."""
    result = RegionDensity()
    counts: dict[tuple[str, str], int] = {}
    subs_by: dict[tuple[str, str], set[int]] = {}
    for key, parts in _partitions_in(root, start, end, result):
        for path in parts:
            reader = SegmentReader.open(path)
            entries, idx = reader.dictionary("region_code")
            presence, values = _subscribers(reader)
            per_code = np.bincount(idx, minlength=len(entries)).tolist()
            joined_idx = idx[presence]
            for code, region in enumerate(entries):
                k = (key.date, region or UNJOINED_REGION)
                if per_code[code] == 0:
                    continue
                counts[k] = counts.get(k, 0) + per_code[code]
                subs = subs_by.setdefault(k, set())
                subs.update(np.unique(values[joined_idx == code]).tolist())
    result.rows = sorted((date, region, counts[(date, region)], len(subs_by[(date, region)])) for date, region in counts)
    return result


REPORTS = {
    "hourly-users": unique_users_hourly,
    "category": category_traffic,
    "region": region_density,
}

_RESULT_TYPES = {cls.HEADER: cls for cls in (HourlyUniqueUsers, CategoryTraffic, RegionDensity)}


def emit_plot_data(result: AggregateResult, path: str | Path) -> Path:
    """Write ``result`` as a headed CSV with LF line endings, rows in key order."""
    path = Path(path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(result.HEADER)
        writer.writerows(result.rows)
    return path


def load_plot_data(path: str | Path) -> AggregateResult:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader, ()))
        cls = _RESULT_TYPES.get(header)
        if cls is None:
            raise ValueError(f"{path}: unrecognized aggregate header {','.join(header)}")
        return cls(rows=[cls.coerce_row(row) for row in reader if row])
