"""Dictionary-encoded columnar segment files and the partitioned dataset layout.

Segment layout (little-endian)::

    "TNDC" | u8 version=1 | u64 record_count | u32 column_count
    column_count x (u16 name_len | name | u8 encoding | u64 offset | u64 length)
    payloads, contiguous, in directory order, ending exactly at end of file

Encodings: 1 = u64 values, 2 = u32 values, 3 = dictionary strings
(u32 dict size, u32-length-prefixed entries, record_count u32 indices),
4 = optional u64 (record_count presence bytes, then one u64 per present value).
Offsets are absolute file positions.
"""

from __future__ import annotations

import datetime as dt
import os
import re
import struct
from dataclasses import dataclass
from itertools import starmap
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from .enrich import EnrichedRecord
from .errors import DnsflowError, ValidationError
from .logmodel import QueryType, ServerId

__all__ = [
    "MAGIC",
    "VERSION",
    "SEGMENT_SUFFIX",
    "Encoding",
    "ColumnEntry",
    "SegmentInfo",
    "PartitionKey",
    "SegmentError",
    "BadMagic",
    "UnsupportedVersion",
    "CorruptDirectory",
    "CountMismatch",
    "CorruptPayload",
    "MixedPartition",
    "EmptySegment",
    "partition_key",
    "partition_path",
    "parse_partition_dir",
    "write_segment",
    "encode_segment",
    "read_segment",
    "SegmentReader",
    "iter_partitions",
]

MAGIC = b"TNDC"
VERSION = 1
SEGMENT_SUFFIX = ".tnc"

_HEADER = struct.Struct("<4sBQI")
_ENTRY_TAIL = struct.Struct("<BQQ")
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")

MS_PER_HOUR = 3_600_000
MS_PER_DAY = 86_400_000
_EPOCH_ORDINAL = dt.date(1970, 1, 1).toordinal()


class Encoding:
    U64 = 1
    U32 = 2
    DICT = 3
    OPT_U64 = 4

    NAMES = {1: "u64", 2: "u32", 3: "dict-string", 4: "optional-u64"}


SCHEMA: tuple[tuple[str, int], ...] = (
    ("timestamp_ms", Encoding.U64),
    ("server_id", Encoding.U32),
    ("client_ip", Encoding.U32),
    ("query_name", Encoding.DICT),
    ("query_type", Encoding.U32),
    ("response_code", Encoding.U32),
    ("subscriber_id", Encoding.OPT_U64),
    ("city", Encoding.DICT),
    ("region_code", Encoding.DICT),
    ("category", Encoding.DICT),
)
_SCHEMA_INDEX = {name: i for i, (name, _) in enumerate(SCHEMA)}

_SERVER_BY_CODE = {int(s): s for s in ServerId}
_TYPE_BY_CODE = {int(t): t for t in QueryType}


class SegmentError(DnsflowError):
    """A segment file is unreadable or violates the format."""


class BadMagic(SegmentError):
    pass


class UnsupportedVersion(SegmentError):
    pass


class CorruptDirectory(SegmentError):
    pass


class CountMismatch(SegmentError):
    pass


class CorruptPayload(SegmentError):
    """Payload bytes decode to values outside their domain."""


class MixedPartition(ValidationError):
    pass


class EmptySegment(ValidationError):
    pass


class ColumnEntry(NamedTuple):
    name: str
    encoding: int
    offset: int
    length: int


@dataclass(frozen=True)
class SegmentInfo:
    path: Path | None
    record_count: int
    columns: tuple[ColumnEntry, ...]
    file_size: int

    def column(self, name: str) -> ColumnEntry:
        return self.columns[_SCHEMA_INDEX[name]]


class PartitionKey(NamedTuple):
    date: str  # YYYY-MM-DD, UTC
    hour: int
    server_id: ServerId


def _hour_key(hour_index: int) -> tuple[str, int]:
    day, hour = divmod(hour_index, 24)
    return dt.date.fromordinal(_EPOCH_ORDINAL + day).isoformat(), hour


def partition_key(timestamp_ms: int, server_id: ServerId) -> PartitionKey:
    date, hour = _hour_key(timestamp_ms // MS_PER_HOUR)
    return PartitionKey(date, hour, ServerId(server_id))


def partition_path(key: PartitionKey, part_index: int) -> str:
    server = ServerId(key.server_id).label
    return f"date={key.date}/hour={key.hour:02d}/server={server}/part-{part_index:05d}{SEGMENT_SUFFIX}"


_PART_DIR_RE = re.compile(r"date=(\d{4}-\d{2}-\d{2})/hour=(\d{2})/server=(dns[123])$")


def parse_partition_dir(rel: str) -> PartitionKey | None:
    m = _PART_DIR_RE.match(rel.replace(os.sep, "/"))
    if m is None:
        return None
    return PartitionKey(m.group(1), int(m.group(2)), ServerId[m.group(3).upper()])


class PartitionKeyCache:
    """Memoizes key derivation per (hour, server); timestamps repeat hours heavily."""

    def __init__(self):
        self._hours: dict[int, tuple[str, int]] = {}

    def __call__(self, timestamp_ms: int, server_id: ServerId) -> PartitionKey:
        hi = timestamp_ms // MS_PER_HOUR
        hk = self._hours.get(hi)
        if hk is None:
            hk = self._hours[hi] = _hour_key(hi)
        return PartitionKey(hk[0], hk[1], server_id)


# --- encoding ---------------------------------------------------------------


def _encode_dict(values: Sequence[str]) -> bytes:
    lookup: dict[str, int] = {}
    indices = [lookup.setdefault(v, len(lookup)) for v in values]
    parts = [_U32.pack(len(lookup))]
    for entry in lookup:
        raw = entry.encode("utf-8")
        parts.append(_U32.pack(len(raw)))
        parts.append(raw)
    parts.append(np.asarray(indices, dtype="<u4").tobytes())
    return b"".join(parts)


def _encode_optional(values: Sequence[int | None]) -> bytes:
    presence = bytes(0 if v is None else 1 for v in values)
    present = [v for v in values if v is not None]
    return presence + np.asarray(present, dtype="<u8").tobytes()


def _encode_columns(records: Sequence[EnrichedRecord]) -> list[bytes]:
    cols = list(zip(*records))
    out = []
    for (name, enc), values in zip(SCHEMA, cols):
        if enc == Encoding.U64:
            out.append(np.asarray(values, dtype="<u8").tobytes())
        elif enc == Encoding.U32:
            out.append(np.asarray(values, dtype="<u4").tobytes())
        elif enc == Encoding.DICT:
            if name in ("city", "region_code"):
                values = ["" if v is None else v for v in values]
            out.append(_encode_dict(values))
        else:
            out.append(_encode_optional(values))
    return out


def encode_segment(records: Sequence[EnrichedRecord]) -> tuple[bytes, SegmentInfo]:
    """Serialize ``records`` into segment bytes (no partition checks)."""
    if not records:
        raise EmptySegment("a segment must contain at least one record")
    payloads = _encode_columns(records)
    dir_size = sum(_U16.size + len(name.encode()) + _ENTRY_TAIL.size for name, _ in SCHEMA)
    offset = _HEADER.size + dir_size
    entries = []
    directory = []
    for (name, enc), payload in zip(SCHEMA, payloads):
        entries.append(ColumnEntry(name, enc, offset, len(payload)))
        raw_name = name.encode()
        directory.append(_U16.pack(len(raw_name)) + raw_name + _ENTRY_TAIL.pack(enc, offset, len(payload)))
        offset += len(payload)
    data = b"".join(
        [_HEADER.pack(MAGIC, VERSION, len(records), len(SCHEMA)), *directory, *payloads]
    )
    return data, SegmentInfo(None, len(records), tuple(entries), len(data))


def write_segment(records: Sequence[EnrichedRecord], path: str | Path) -> SegmentInfo:
    """Write one immutable segment; every record must share a partition key."""
    if not records:
        raise EmptySegment("a segment must contain at least one record")
    keys = PartitionKeyCache()
    first = keys(records[0].timestamp_ms, records[0].server_id)
    for rec in records:
        if keys(rec.timestamp_ms, rec.server_id) != first:
            raise MixedPartition(f"records span partitions {first} and {keys(rec.timestamp_ms, rec.server_id)}")
    data, info = encode_segment(records)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)
    return SegmentInfo(path, info.record_count, info.columns, info.file_size)


# --- decoding ---------------------------------------------------------------


class SegmentReader:
    """Validates a segment's header and directory on open; decodes columns on demand."""

    def __init__(self, data: bytes, path: str | Path | None = None):
        self.data = data
        self.path = Path(path) if path is not None else None
        self.info = self._parse_directory()

    @classmethod
    def open(cls, path: str | Path) -> SegmentReader:
        with open(path, "rb") as fh:
            return cls(fh.read(), path)

    def _where(self) -> str:
        return str(self.path) if self.path else "<segment>"

    def _parse_directory(self) -> SegmentInfo:
        data = self.data
        where = self._where()
        if len(data) < 4 or data[:4] != MAGIC:
            raise BadMagic(f"{where}: bad magic {data[:4]!r}")
        if len(data) < 5 or data[4] != VERSION:
            raise UnsupportedVersion(f"{where}: unsupported version {data[4] if len(data) > 4 else None}")
        if len(data) < _HEADER.size:
            raise CorruptDirectory(f"{where}: truncated header")
        _, _, n, ncols = _HEADER.unpack_from(data, 0)
        if ncols != len(SCHEMA):
            raise CorruptDirectory(f"{where}: column_count {ncols}, expected {len(SCHEMA)}")

        pos = _HEADER.size
        entries = []
        for expected_name, expected_enc in SCHEMA:
            if pos + _U16.size > len(data):
                raise CorruptDirectory(f"{where}: directory truncated")
            (name_len,) = _U16.unpack_from(data, pos)
            pos += _U16.size
            if pos + name_len + _ENTRY_TAIL.size > len(data):
                raise CorruptDirectory(f"{where}: directory truncated")
            name = data[pos : pos + name_len]
            pos += name_len
            enc, offset, length = _ENTRY_TAIL.unpack_from(data, pos)
            pos += _ENTRY_TAIL.size
            if name != expected_name.encode() or enc != expected_enc:
                raise CorruptDirectory(
                    f"{where}: directory entry {name!r}/{enc} does not match {expected_name}/{expected_enc}"
                )
            entries.append(ColumnEntry(expected_name, enc, offset, length))

        # Payloads must tile [end of directory, end of file) exactly.
        cursor = pos
        for e in entries:
            if e.offset != cursor or e.offset + e.length > len(data):
                raise CorruptDirectory(
                    f"{where}: column {e.name} at [{e.offset},{e.offset + e.length}) "
                    f"out of bounds or not contiguous (expected offset {cursor}, file size {len(data)})"
                )
            cursor = e.offset + e.length
        if cursor != len(data):
            raise CorruptDirectory(f"{where}: payloads end at {cursor}, file size {len(data)}")

        for e in entries:
            if e.encoding == Encoding.U64:
                ok = e.length == 8 * n
            elif e.encoding == Encoding.U32:
                ok = e.length == 4 * n
            elif e.encoding == Encoding.OPT_U64:
                ok = e.length >= n and (e.length - n) % 8 == 0
            else:
                ok = e.length >= 4 + 4 * n
            if not ok:
                raise CountMismatch(f"{where}: column {e.name} length {e.length} inconsistent with {n} records")
        return SegmentInfo(self.path, n, tuple(entries), len(data))

    @property
    def record_count(self) -> int:
        return self.info.record_count

    def _payload(self, name: str) -> tuple[ColumnEntry, memoryview]:
        e = self.info.column(name)
        return e, memoryview(self.data)[e.offset : e.offset + e.length]

    def fixed(self, name: str) -> np.ndarray:
        e, buf = self._payload(name)
        dtype = "<u8" if e.encoding == Encoding.U64 else "<u4"
        return np.frombuffer(buf, dtype=dtype)

    def dictionary(self, name: str) -> tuple[list[str], np.ndarray]:
        """Return (dictionary entries, per-record indices)."""
        e, buf = self._payload(name)
        n = self.record_count
        where = self._where()
        (size,) = _U32.unpack_from(buf, 0)
        pos = 4
        entries = []
        for _ in range(size):
            if pos + 4 > len(buf):
                raise CorruptPayload(f"{where}: dictionary of {name} overruns its payload")
            (length,) = _U32.unpack_from(buf, pos)
            pos += 4
            if pos + length > len(buf):
                raise CorruptPayload(f"{where}: dictionary of {name} overruns its payload")
            try:
                entries.append(bytes(buf[pos : pos + length]).decode("utf-8"))
            except UnicodeDecodeError as exc:
                raise CorruptPayload(f"{where}: non UTF-8 entry in {name}") from exc
            pos += length
        if len(buf) - pos != 4 * n:
            raise CountMismatch(f"{where}: column {name} holds {(len(buf) - pos) / 4} indices, expected {n}")
        indices = np.frombuffer(buf[pos:], dtype="<u4")
        if n and int(indices.max()) >= size:
            raise CorruptPayload(f"{where}: dictionary index out of range in {name}")
        return entries, indices

    def optional(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        """Return (presence mask, values of present rows)."""
        e, buf = self._payload(name)
        n = self.record_count
        presence = np.frombuffer(buf[:n], dtype=np.uint8)
        if presence.size and int(presence.max()) > 1:
            raise CorruptPayload(f"{self._where()}: presence bytes of {name} not 0/1")
        values = np.frombuffer(buf[n:], dtype="<u8")
        if values.size != int(presence.sum()):
            raise CountMismatch(
                f"{self._where()}: {name} has {values.size} values for {int(presence.sum())} present rows"
            )
        return presence.astype(bool), values

    def strings(self, name: str, empty_as_none: bool = False) -> list[str | None]:
        entries, indices = self.dictionary(name)
        if empty_as_none:
            entries = [v if v else None for v in entries]
        return [entries[i] for i in indices.tolist()]

    def optional_list(self, name: str) -> list[int | None]:
        presence, values = self.optional(name)
        out: list[int | None] = [None] * self.record_count
        for i, v in zip(np.flatnonzero(presence).tolist(), values.tolist()):
            out[i] = v
        return out

    def records(self) -> list[EnrichedRecord]:
        n = self.record_count
        try:
            servers = [_SERVER_BY_CODE[c] for c in self.fixed("server_id").tolist()]
            qtypes = [_TYPE_BY_CODE[c] for c in self.fixed("query_type").tolist()]
        except KeyError as exc:
            raise CorruptPayload(f"{self._where()}: unknown enum code {exc.args[0]}") from None
        cols = [
            self.fixed("timestamp_ms").tolist(),
            servers,
            self.fixed("client_ip").tolist(),
            self.strings("query_name"),
            qtypes,
            self.fixed("response_code").tolist(),
            self.optional_list("subscriber_id"),
            self.strings("city", empty_as_none=True),
            self.strings("region_code", empty_as_none=True),
            self.strings("category"),
        ]
        if any(len(c) != n for c in cols):
            raise CountMismatch(f"{self._where()}: column lengths disagree with record_count {n}")
        return list(starmap(EnrichedRecord, zip(*cols)))


def read_segment(path: str | Path) -> list[EnrichedRecord]:
    return SegmentReader.open(path).records()


def iter_partitions(root: str | Path) -> Iterator[tuple[PartitionKey, list[Path]]]:
    """Yield (key, sorted segment paths) for every partition under ``root``, in key order."""
    root = Path(root)
    found = []
    for date_dir in sorted(root.glob("date=*")):
        for hour_dir in sorted(date_dir.glob("hour=*")):
            for server_dir in sorted(hour_dir.glob("server=*")):
                key = parse_partition_dir(str(server_dir.relative_to(root)))
                if key is None:
                    continue
                parts = sorted(server_dir.glob(f"part-*{SEGMENT_SUFFIX}"))
                if parts:
                    found.append((key, parts))
    found.sort(key=lambda kp: (kp[0].date, kp[0].hour, int(kp[0].server_id)))
    yield from found


def segments_in(root: str | Path) -> Iterable[Path]:
    for _, parts in iter_partitions(root):
        yield from parts
