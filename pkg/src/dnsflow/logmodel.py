"""Parsed DNS query records and the canonical tab-separated log line format.

A log line carries six tab-separated fields::

    <timestamp_ms>\t<server>\t<client_ip>\t<query_name>\t<query_type>\t<rcode>

``server`` is one of ``dns1``/``dns2``/``dns3``, ``client_ip`` a dotted quad,
``query_type`` an uppercase token and ``rcode`` a decimal integer.
"""

from __future__ import annotations

import enum
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Union

__all__ = [
    "ServerId",
    "QueryType",
    "RejectReason",
    "DnsQueryRecord",
    "RejectStats",
    "ParseOutcome",
    "parse_line",
    "parse_lines",
    "parse_file",
    "format_line",
    "ip_to_int",
    "int_to_ip",
    "MAX_RCODE",
    "LogReadError",
]

MAX_RCODE = 0xFFFF
_MAX_U64 = 2**64 - 1
_IP_CACHE_LIMIT = 1 << 16
_DOMAIN_RE = re.compile(rb"[\x21-\x7e]{1,253}")
_TYPE_TOKEN_RE = re.compile(rb"[A-Z][A-Z0-9]{0,15}")


class ServerId(enum.IntEnum):
    DNS1 = 1
    DNS2 = 2
    DNS3 = 3

    @property
    def label(self) -> str:
        return self.name.lower()


class QueryType(enum.IntEnum):
    """Query types kept as distinct values; values are the DNS RR type codes."""

    OTHER = 0
    A = 1
    NS = 2
    CNAME = 5
    PTR = 12
    MX = 15
    TXT = 16
    AAAA = 28


class RejectReason(enum.Enum):
    WrongFieldCount = "wrong_field_count"
    BadTimestamp = "bad_timestamp"
    BadServer = "bad_server"
    BadIp = "bad_ip"
    # Also covers names that are too long, non-ASCII, or contain whitespace.
    EmptyDomain = "empty_domain"
    BadType = "bad_type"
    BadRcode = "bad_rcode"


class DnsQueryRecord(NamedTuple):
    timestamp_ms: int
    server_id: ServerId
    client_ip: int
    query_name: str
    query_type: QueryType
    response_code: int


ParseOutcome = Union[DnsQueryRecord, RejectReason]

_SERVERS = {s.label.encode(): s for s in ServerId}
_TYPES = {t.name.encode(): t for t in QueryType}


def ip_to_int(text: str | bytes) -> int | None:
    """Dotted quad to a 32-bit integer, or None when malformed."""
    if isinstance(text, str):
        if not text.isascii():
            return None
        text = text.encode("ascii")
    parts = text.split(b".")
    if len(parts) != 4:
        return None
    value = 0
    for part in parts:
        if not (1 <= len(part) <= 3) or not part.isdigit():
            return None
        octet = int(part)
        if octet > 255:
            return None
        value = (value << 8) | octet
    return value


def int_to_ip(value: int) -> str:
    return f"{value >> 24 & 255}.{value >> 16 & 255}.{value >> 8 & 255}.{value & 255}"


def _parse_uint(token: bytes, limit: int) -> int | None:
    if not token or len(token) > 20 or not token.isdigit():
        return None
    value = int(token)
    return value if value <= limit else None


def parse_line(line: bytes, _ip_cache: dict[bytes, int | None] | None = None) -> ParseOutcome:
    """Parse one log line (without its newline) into a record or a reject reason.

    Fields are checked left to right; the first failing field names the reason.
    Never raises for any byte string.
    """
    fields = line.split(b"\t")
    if len(fields) != 6:
        return RejectReason.WrongFieldCount
    ts_raw, server_raw, ip_raw, name_raw, type_raw, rcode_raw = fields

    ts = _parse_uint(ts_raw, _MAX_U64)
    if not ts:
        return RejectReason.BadTimestamp

    server = _SERVERS.get(server_raw)
    if server is None:
        return RejectReason.BadServer

    if _ip_cache is None:
        ip = ip_to_int(ip_raw)
    else:
        try:
            ip = _ip_cache[ip_raw]
        except KeyError:
            if len(_ip_cache) >= _IP_CACHE_LIMIT:
                _ip_cache.clear()
            ip = _ip_cache[ip_raw] = ip_to_int(ip_raw)
    if ip is None:
        return RejectReason.BadIp

    if _DOMAIN_RE.fullmatch(name_raw) is None:
        return RejectReason.EmptyDomain

    qtype = _TYPES.get(type_raw)
    if qtype is None:
        if _TYPE_TOKEN_RE.fullmatch(type_raw) is None:
            return RejectReason.BadType
        qtype = QueryType.OTHER

    rcode = _parse_uint(rcode_raw, MAX_RCODE)
    if rcode is None:
        return RejectReason.BadRcode

    return DnsQueryRecord(ts, server, ip, name_raw.decode("ascii").lower(), qtype, rcode)


def format_line(record: DnsQueryRecord) -> str:
    """Canonical line for ``record``, without the trailing newline."""
    return "\t".join(
        (
            str(record.timestamp_ms),
            ServerId(record.server_id).label,
            int_to_ip(record.client_ip),
            record.query_name,
            QueryType(record.query_type).name,
            str(record.response_code),
        )
    )


@dataclass
class RejectStats:
    """Per-reason reject counters for a batch of lines."""

    counts: Counter = field(default_factory=Counter)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def add(self, reason: RejectReason, n: int = 1) -> None:
        self.counts[reason] += n

    def merge(self, other: RejectStats) -> None:
        self.counts.update(other.counts)

    def as_dict(self) -> dict[str, int]:
        return {r.value: self.counts.get(r, 0) for r in RejectReason}


def parse_lines(lines, stats: RejectStats) -> list[DnsQueryRecord]:
    """Parse an iterable of raw lines; empty lines are skipped, not rejected."""
    out: list[DnsQueryRecord] = []
    append = out.append
    ip_cache: dict[bytes, int | None] = {}
    for line in lines:
        if line.endswith(b"\n"):
            line = line[:-1]
        if not line:
            continue
        outcome = parse_line(line, ip_cache)
        if type(outcome) is DnsQueryRecord:
            append(outcome)
        else:
            stats.add(outcome)
    return out


class LogReadError(OSError):
    """A log file could not be read; carries the offending path."""


def parse_file(path: str | Path) -> tuple[list[DnsQueryRecord], RejectStats]:
    stats = RejectStats()
    try:
        with open(path, "rb") as fh:
            records = parse_lines(fh, stats)
    except OSError as exc:
        raise LogReadError(f"cannot read log file {path}: {exc.strerror or exc}") from exc
    return records, stats
