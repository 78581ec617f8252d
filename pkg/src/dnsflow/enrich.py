"""Interval join of DNS records onto subscribers, CRM lookup and domain categories."""

from __future__ import annotations

import csv
from bisect import bisect_right
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Optional, Sequence

from .errors import ValidationError
from .logmodel import DnsQueryRecord, QueryType, ServerId, int_to_ip, ip_to_int

__all__ = [
    "DEFAULT_CATEGORIES",
    "UNCATEGORIZED",
    "SubscriberAssignment",
    "SubscriberProfile",
    "EnrichedRecord",
    "JoinStats",
    "AssignmentIndex",
    "OverlappingIntervals",
    "build_assignment_index",
    "categorize",
    "enrich",
    "load_cdr",
    "load_crm",
    "load_rules",
    "write_cdr",
    "write_crm",
    "write_rules",
]

DEFAULT_CATEGORIES = (
    "Technology/Internet",
    "News/Media",
    "Social",
    "Video/Streaming",
    "Shopping",
    "Other",
)
UNCATEGORIZED = "Uncategorized"


class SubscriberAssignment(NamedTuple):
    subscriber_id: int
    client_ip: int
    start_ms: int
    end_ms: int  # exclusive


class SubscriberProfile(NamedTuple):
    subscriber_id: int
    city: str
    region_code: str


class EnrichedRecord(NamedTuple):
    timestamp_ms: int
    server_id: ServerId
    client_ip: int
    query_name: str
    query_type: QueryType
    response_code: int
    subscriber_id: Optional[int]
    city: Optional[str]
    region_code: Optional[str]
    category: str


@dataclass
class JoinStats:
    records: int = 0
    joined: int = 0
    no_assignment: int = 0
    missing_crm: int = 0

    def merge(self, other: JoinStats) -> None:
        self.records += other.records
        self.joined += other.joined
        self.no_assignment += other.no_assignment
        self.missing_crm += other.missing_crm


class OverlappingIntervals(ValidationError):
    def __init__(self, ip: int, first: SubscriberAssignment, second: SubscriberAssignment):
        self.ip = ip
        self.first = first
        self.second = second
        super().__init__(
            f"overlapping CDR intervals on {int_to_ip(ip)}: "
            f"[{first.start_ms},{first.end_ms}) subscriber {first.subscriber_id} and "
            f"[{second.start_ms},{second.end_ms}) subscriber {second.subscriber_id}"
        )


class AssignmentIndex:
    """Per-IP sorted interval lists answering ``lookup(ip, t)`` by bisection."""

    def __init__(self, table: dict[int, tuple[list[int], list[int], list[int]]]):
        self._table = table

    def __len__(self) -> int:
        return sum(len(starts) for starts, _, _ in self._table.values())

    def lookup(self, ip: int, t: int) -> int | None:
        entry = self._table.get(ip)
        if entry is None:
            return None
        starts, ends, subs = entry
        i = bisect_right(starts, t) - 1
        if i >= 0 and t < ends[i]:
            return subs[i]
        return None


def build_assignment_index(assignments: Iterable[SubscriberAssignment]) -> AssignmentIndex:
    by_ip: dict[int, list[SubscriberAssignment]] = {}
    for a in assignments:
        if a.start_ms >= a.end_ms:
            raise ValidationError(
                f"empty CDR interval [{a.start_ms},{a.end_ms}) for subscriber {a.subscriber_id}"
            )
        by_ip.setdefault(a.client_ip, []).append(a)

    table = {}
    for ip, items in by_ip.items():
        items.sort(key=lambda a: (a.start_ms, a.end_ms))
        for prev, cur in zip(items, items[1:]):
            if cur.start_ms < prev.end_ms:
                raise OverlappingIntervals(ip, prev, cur)
        table[ip] = (
            [a.start_ms for a in items],
            [a.end_ms for a in items],
            [a.subscriber_id for a in items],
        )
    return AssignmentIndex(table)


def categorize(query_name: str, rules: Mapping[str, str]) -> str:
    """Longest rule suffix matching on a label boundary, else ``Uncategorized``."""
    name = query_name
    while True:
        category = rules.get(name)
        if category is not None:
            return category
        dot = name.find(".")
        if dot < 0:
            return UNCATEGORIZED
        name = name[dot + 1 :]


def enrich(
    records: Sequence[DnsQueryRecord],
    index: AssignmentIndex,
    crm: Mapping[int, SubscriberProfile],
    rules: Mapping[str, str],
    stats: JoinStats | None = None,
) -> list[EnrichedRecord]:
    """Left-join ``records`` onto subscribers; output is one row per input row.

    A subscriber found in the CDR index but missing from the CRM table is
    treated as unjoined (all subscriber fields absent) and counted in
    ``stats.missing_crm``.
    """
    out: list[EnrichedRecord] = []
    append = out.append
    cat_cache: dict[str, str] = {}
    joined = no_assignment = missing_crm = 0
    lookup = index.lookup
    for rec in records:
        name = rec[3]
        category = cat_cache.get(name)
        if category is None:
            category = cat_cache[name] = categorize(name, rules)
        sub = lookup(rec[2], rec[0])
        if sub is None:
            no_assignment += 1
            append(EnrichedRecord(*rec[:6], None, None, None, category))
            continue
        profile = crm.get(sub)
        if profile is None:
            missing_crm += 1
            append(EnrichedRecord(*rec[:6], None, None, None, category))
            continue
        joined += 1
        append(EnrichedRecord(*rec[:6], sub, profile.city, profile.region_code, category))
    if stats is not None:
        stats.merge(JoinStats(len(records), joined, no_assignment, missing_crm))
    return out


# --- CSV loaders -----------------------------------------------------------


def _read_csv(path: str | Path, header: list[str]) -> Iterable[tuple[int, list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None or [h.strip() for h in first] != header:
            raise ValidationError(f"{path}: expected header {','.join(header)}, got {first}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValidationError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            yield lineno, row


def _uint(value: str, what: str, where: str) -> int:
    try:
        v = int(value)
    except ValueError:
        raise ValidationError(f"{where}: bad {what} {value!r}") from None
    if v < 0 or v >= 2**64:
        raise ValidationError(f"{where}: {what} out of range: {v}")
    return v


def load_cdr(path: str | Path) -> list[SubscriberAssignment]:
    out = []
    for lineno, (sub, ip, start, end) in _read_csv(path, ["subscriber_id", "ip", "start_ms", "end_ms"]):
        where = f"{path}:{lineno}"
        ip_value = ip_to_int(ip.strip())
        if ip_value is None:
            raise ValidationError(f"{where}: bad IPv4 address {ip!r}")
        out.append(
            SubscriberAssignment(
                _uint(sub, "subscriber_id", where),
                ip_value,
                _uint(start, "start_ms", where),
                _uint(end, "end_ms", where),
            )
        )
    return out


def load_crm(path: str | Path) -> dict[int, SubscriberProfile]:
    out: dict[int, SubscriberProfile] = {}
    for lineno, (sub, city, region) in _read_csv(path, ["subscriber_id", "city", "region_code"]):
        where = f"{path}:{lineno}"
        sid = _uint(sub, "subscriber_id", where)
        if sid in out:
            raise ValidationError(f"{where}: duplicate subscriber_id {sid}")
        if not city or not region:
            raise ValidationError(f"{where}: city and region_code must be non-empty")
        out[sid] = SubscriberProfile(sid, city, region)
    return out


def load_rules(path: str | Path) -> dict[str, str]:
    rules: dict[str, str] = {}
    for lineno, (suffix, category) in _read_csv(path, ["suffix", "category"]):
        where = f"{path}:{lineno}"
        suffix = suffix.strip()
        if not suffix or suffix.startswith(".") or suffix != suffix.lower():
            raise ValidationError(f"{where}: suffix must be non-empty, lowercase, without leading dot")
        if suffix in rules:
            raise ValidationError(f"{where}: duplicate rule for suffix {suffix!r}")
        if not category:
            raise ValidationError(f"{where}: empty category")
        rules[suffix] = category
    return rules


def write_cdr(path: str | Path, assignments: Iterable[SubscriberAssignment]) -> int:
    n = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("subscriber_id,ip,start_ms,end_ms\n")
        for a in assignments:
            fh.write(f"{a.subscriber_id},{int_to_ip(a.client_ip)},{a.start_ms},{a.end_ms}\n")
            n += 1
    return n


def write_crm(path: str | Path, profiles: Iterable[SubscriberProfile]) -> int:
    n = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["subscriber_id", "city", "region_code"])
        for p in profiles:
            writer.writerow([p.subscriber_id, p.city, p.region_code])
            n += 1
    return n


def write_rules(path: str | Path, rules: Mapping[str, str]) -> int:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["suffix", "category"])
        for suffix, category in rules.items():
            writer.writerow([suffix, category])
    return len(rules)
