"""Seeded synthetic DNS logs plus matching CDR, CRM and category-rule files.

The generator plants known ground truth so downstream stages can be checked
exactly: every planted duplicate and placeholder is counted in the manifest,
accidental duplicates are impossible, and the number of records that should
join to a subscriber is recorded.

Subscribers hold one IP lease per half-day (the split hour is drawn per
day); leases are drawn as permutations of an IP pool so that intervals on any
single IP never overlap. Traffic from addresses outside the pool never joins.
"""

from __future__ import annotations

import datetime as dt
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .enrich import (
    DEFAULT_CATEGORIES,
    UNCATEGORIZED,
    SubscriberAssignment,
    SubscriberProfile,
    write_cdr,
    write_crm,
    write_rules,
)
from .logmodel import QueryType, ServerId, int_to_ip

__all__ = [
    "GeneratorSpec",
    "Manifest",
    "default_spec",
    "generate",
    "DOMAINS",
    "REGION_CITIES",
]

MS_PER_HOUR = 3_600_000
MS_PER_DAY = 86_400_000

# Traffic shape: quiet in the small hours, busiest in the evening.
DEFAULT_HOURLY_WEIGHTS = (
    0.80, 0.60, 0.40, 0.25, 0.15, 0.15, 0.22, 0.35,
    0.50, 0.60, 0.65, 0.70, 0.72, 0.72, 0.70, 0.70,
    0.72, 0.78, 0.85, 0.92, 1.00, 1.00, 1.00, 0.95,
)  # fmt: skip

DEFAULT_CATEGORY_MIX = {
    "Technology/Internet": 0.34,
    "Social": 0.20,
    "Video/Streaming": 0.18,
    "News/Media": 0.12,
    "Shopping": 0.10,
    "Other": 0.06,
}

REGION_CITIES = {
    "34": "Istanbul",
    "06": "Ankara",
    "35": "Izmir",
    "16": "Bursa",
    "07": "Antalya",
    "01": "Adana",
    "42": "Konya",
    "27": "Gaziantep",
}

DEFAULT_REGION_MIX = {
    "34": 0.35,
    "06": 0.15,
    "35": 0.12,
    "16": 0.08,
    "07": 0.08,
    "42": 0.08,
    "01": 0.07,
    "27": 0.07,
}

DOMAINS = {
    "Technology/Internet": [
        "google.com", "microsoft.com", "apple.com", "github.com", "cloudflare.com",
        "amazonaws.com", "akamaiedge.net", "ubuntu.com", "mozilla.org", "stackoverflow.com",
    ],
    "News/Media": [
        "news.google.com", "hurriyet.com.tr", "milliyet.com.tr", "sozcu.com.tr", "bbc.co.uk",
        "cnn.com", "reuters.com", "ntv.com.tr",
    ],
    "Social": [
        "facebook.com", "instagram.com", "twitter.com", "whatsapp.net", "linkedin.com",
        "reddit.com", "tiktok.com", "eksisozluk.com",
    ],
    "Video/Streaming": [
        "youtube.com", "googlevideo.com", "netflix.com", "nflxvideo.net", "twitch.tv",
        "spotify.com", "blutv.com", "puhutv.com",
    ],
    "Shopping": [
        "trendyol.com", "hepsiburada.com", "n11.com", "amazon.com.tr", "sahibinden.com",
        "gittigidiyor.com", "ciceksepeti.com",
    ],
    "Other": [
        "wikipedia.org", "weather.com", "mgm.gov.tr", "turkiye.gov.tr", "booking.com",
        "pool.ntp.org",
    ],
}  # fmt: skip

_PREFIXES = ("", "www.", "api.", "cdn.", "m.", "static.")

_QTYPES = (QueryType.A, QueryType.AAAA, QueryType.CNAME, QueryType.MX, QueryType.TXT, QueryType.NS, QueryType.PTR)
_QTYPE_P = (0.62, 0.26, 0.04, 0.02, 0.03, 0.015, 0.015)
_RCODES = (0, 3, 2)
_RCODE_P = (0.95, 0.04, 0.01)

_POOL_BASE = 10 << 24  # 10.0.0.0/8
_UNJOINED_BASE = (100 << 24) | (64 << 16)  # 100.64.0.0/10
_UNJOINED_POOL = 1 << 16


@dataclass
class GeneratorSpec:
    seed: int = 20190507
    subscriber_count: int = 2000
    days: int = 7
    base_queries_per_subscriber_day: float = 50.0
    hourly_weights: tuple[float, ...] = DEFAULT_HOURLY_WEIGHTS
    category_mix: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_CATEGORY_MIX))
    region_mix: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_REGION_MIX))
    duplicate_rate: float = 0.01
    placeholder_rate: float = 0.005
    unjoined_rate: float = 0.05
    start_date: str = "2019-05-07"
    duplicate_max_lag: int = 5000

    def validate(self) -> None:
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.subscriber_count < 1 or self.days < 1:
            raise ValueError("subscriber_count and days must be >= 1")
        if self.base_queries_per_subscriber_day < 0:
            raise ValueError("base_queries_per_subscriber_day must be >= 0")
        if len(self.hourly_weights) != 24 or any(w < 0 for w in self.hourly_weights):
            raise ValueError("hourly_weights must be 24 non-negative numbers")
        if not any(self.hourly_weights):
            raise ValueError("hourly_weights must not all be zero")
        for name, mix in (("category_mix", self.category_mix), ("region_mix", self.region_mix)):
            if not mix or any(p < 0 for p in mix.values()):
                raise ValueError(f"{name} must be a non-empty mapping of non-negative probabilities")
            if abs(math.fsum(mix.values()) - 1.0) > 1e-9:
                raise ValueError(f"{name} must sum to 1")
        unknown = set(self.category_mix) - set(DOMAINS) - {UNCATEGORIZED}
        if unknown:
            raise ValueError(f"category_mix names categories without domains: {sorted(unknown)}")
        for name in ("duplicate_rate", "placeholder_rate", "unjoined_rate"):
            if not 0 <= getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in [0, 1)")
        if self.duplicate_max_lag < 0:
            raise ValueError("duplicate_max_lag must be >= 0")
        dt.date.fromisoformat(self.start_date)

    @classmethod
    def from_json(cls, text: str) -> GeneratorSpec:
        data = json.loads(text)
        if not isinstance(data, dict):
            raise ValueError("generator spec must be a JSON object")
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown generator spec keys: {sorted(unknown)}")
        if "hourly_weights" in data:
            data["hourly_weights"] = tuple(data["hourly_weights"])
        spec = cls(**data)
        spec.validate()
        return spec

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def default_spec() -> GeneratorSpec:
    return GeneratorSpec()


@dataclass
class Manifest:
    seed: int
    subscriber_count: int
    days: int
    start_date: str
    generated_records: int = 0  # distinct records, placeholders included
    planted_placeholders: int = 0
    planted_duplicates: int = 0
    total_lines: int = 0
    clean_records: int = 0
    joined_records: int = 0
    unjoined_records: int = 0
    cdr_intervals: int = 0
    crm_rows: int = 0
    rule_count: int = 0
    hourly_intensity: list[float] = field(default_factory=list)
    files: dict[str, int] = field(default_factory=dict)
    log_files: list[str] = field(default_factory=list)
    cdr_path: str = "cdr.csv"
    crm_path: str = "crm.csv"
    rules_path: str = "rules.csv"

    _SCALARS = (
        "seed", "subscriber_count", "days", "start_date", "generated_records",
        "planted_placeholders", "planted_duplicates", "total_lines", "clean_records",
        "joined_records", "unjoined_records", "cdr_intervals", "crm_rows", "rule_count",
        "cdr_path", "crm_path", "rules_path",
    )  # fmt: skip

    def to_text(self) -> str:
        lines = [f"{k}: {getattr(self, k)}" for k in self._SCALARS]
        lines += [f"hourly_intensity.{h:02d}: {w!r}" for h, w in enumerate(self.hourly_intensity)]
        lines += [f"file.{name}: {count}" for name, count in self.files.items()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> Manifest:
        values: dict[str, str] = {}
        for line in text.splitlines():
            if line.strip():
                key, _, value = line.partition(": ")
                values[key] = value
        m = cls(int(values["seed"]), int(values["subscriber_count"]), int(values["days"]), values["start_date"])
        for k in cls._SCALARS[4:]:
            current = getattr(m, k)
            setattr(m, k, type(current)(values[k]))
        m.hourly_intensity = [float(values[f"hourly_intensity.{h:02d}"]) for h in range(24) if f"hourly_intensity.{h:02d}" in values]
        m.files = {k[5:]: int(v) for k, v in values.items() if k.startswith("file.")}
        m.log_files = [name for name in m.files if name.startswith("logs/")]
        return m

    @classmethod
    def read(cls, path: str | Path) -> Manifest:
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


def _domain_table(category_mix: dict[str, float]) -> tuple[list[str], list[list[str]], dict[str, str]]:
    cats = list(category_mix)
    names: list[list[str]] = []
    rules: dict[str, str] = {}
    for cat in DEFAULT_CATEGORIES:
        for base in DOMAINS[cat]:
            rules[base] = cat
    for cat in cats:
        if cat == UNCATEGORIZED:
            names.append([f"{p}site{i}.example" for i in range(20) for p in _PREFIXES[:2]])
        else:
            names.append([p + base for base in DOMAINS[cat] for p in _PREFIXES])
    return cats, names, rules


def generate(spec: GeneratorSpec, out_dir: str | Path) -> Manifest:
    """Write logs/, cdr.csv, crm.csv, rules.csv and manifest.txt under ``out_dir``."""
    spec.validate()
    out = Path(out_dir)
    (out / "logs").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    n_subs = spec.subscriber_count
    manifest = Manifest(spec.seed, n_subs, spec.days, spec.start_date)

    weights = np.asarray(spec.hourly_weights, dtype=float)
    hour_p = weights / weights.sum()
    manifest.hourly_intensity = hour_p.tolist()

    regions = list(spec.region_mix)
    sub_region = rng.choice(len(regions), size=n_subs, p=np.asarray(list(spec.region_mix.values())))
    sub_ids = np.arange(1, n_subs + 1)
    profiles = [
        SubscriberProfile(int(s), REGION_CITIES.get(regions[r], f"City-{regions[r]}"), regions[r])
        for s, r in zip(sub_ids, sub_region)
    ]

    cats, cat_names, rules = _domain_table(spec.category_mix)
    cat_p = np.asarray([spec.category_mix[c] for c in cats])
    pool_size = 2 * n_subs
    day0 = dt.date.fromisoformat(spec.start_date)
    epoch_day0 = (day0 - dt.date(1970, 1, 1)).days

    assignments: list[SubscriberAssignment] = []
    ip_text: dict[int, str] = {}
    seen: set[tuple] = set()
    per_day_queries = int(round(n_subs * spec.base_queries_per_subscriber_day))
    qtype_names = [t.name for t in _QTYPES]
    server_labels = {s: ServerId(s).label for s in (1, 2, 3)}

    for d in range(spec.days):
        day_start = (epoch_day0 + d) * MS_PER_DAY
        split = day_start + int(rng.integers(6, 19)) * MS_PER_HOUR + int(rng.integers(0, MS_PER_HOUR))
        leases = []
        for lo, hi in ((day_start, split), (split, day_start + MS_PER_DAY)):
            ips = _POOL_BASE + rng.permutation(pool_size)[:n_subs]
            leases.append((hi, ips))
            assignments.extend(
                SubscriberAssignment(int(s), int(ip), lo, hi) for s, ip in zip(sub_ids, ips)
            )

        n = per_day_queries
        hours = rng.choice(24, size=n, p=hour_p)
        ts = day_start + hours * MS_PER_HOUR + rng.integers(0, MS_PER_HOUR, size=n)
        subs = rng.integers(0, n_subs, size=n)
        unjoined = rng.random(n) < spec.unjoined_rate
        unjoined_ip = _UNJOINED_BASE + rng.integers(0, _UNJOINED_POOL, size=n)
        servers = rng.integers(1, 4, size=n)
        cat_idx = rng.choice(len(cats), size=n, p=cat_p)
        name_u = rng.random(n)
        qtypes = rng.choice(len(_QTYPES), size=n, p=_QTYPE_P)
        rcodes = rng.choice(len(_RCODES), size=n, p=_RCODE_P)
        placeholder = rng.random(n) < spec.placeholder_rate
        placeholder_kind = rng.integers(0, 2, size=n)
        duplicate = (rng.random(n) < spec.duplicate_rate) & ~placeholder
        lags = rng.integers(0, spec.duplicate_max_lag + 1, size=n)

        order = np.argsort(ts, kind="stable")
        files: dict[int, list[tuple[float, str]]] = {1: [], 2: [], 3: []}
        for i in order.tolist():
            t = int(ts[i])
            server = int(servers[i])
            if placeholder[i]:
                name = "-" if placeholder_kind[i] else "."
            else:
                choices = cat_names[cat_idx[i]]
                name = choices[int(name_u[i] * len(choices))]
            qtype = qtype_names[qtypes[i]]
            while True:
                if unjoined[i]:
                    ip = int(unjoined_ip[i])
                else:
                    ip = int(leases[0][1][subs[i]] if t < leases[0][0] else leases[1][1][subs[i]])
                if (t, server, ip, name, qtype) not in seen:
                    break
                # accidental collision: redraw the millisecond within the same hour
                t = t - t % MS_PER_HOUR + int(rng.integers(0, MS_PER_HOUR))
            seen.add((t, server, ip, name, qtype))
            text_ip = ip_text.get(ip)
            if text_ip is None:
                text_ip = ip_text[ip] = int_to_ip(ip)
            line = f"{t}\t{server_labels[server]}\t{text_ip}\t{name}\t{qtype}\t{_RCODES[rcodes[i]]}\n"
            bucket = files[server]
            pos = float(len(bucket))
            bucket.append((pos, line))
            manifest.generated_records += 1
            if placeholder[i]:
                manifest.planted_placeholders += 1
            elif unjoined[i]:
                manifest.unjoined_records += 1
            else:
                manifest.joined_records += 1
            if duplicate[i]:
                bucket.append((pos + int(lags[i]) + 0.5, line))
                manifest.planted_duplicates += 1
        seen.clear()

        date = (day0 + dt.timedelta(days=d)).isoformat()
        for server, bucket in files.items():
            bucket.sort(key=lambda pl: pl[0])
            rel = f"logs/{server_labels[server]}-{date}.log"
            with open(out / rel, "w", encoding="ascii", newline="\n") as fh:
                fh.writelines(line for _, line in bucket)
            manifest.files[rel] = len(bucket)
            manifest.log_files.append(rel)
            manifest.total_lines += len(bucket)

    manifest.clean_records = manifest.generated_records - manifest.planted_placeholders
    manifest.cdr_intervals = write_cdr(out / manifest.cdr_path, assignments)
    manifest.crm_rows = write_crm(out / manifest.crm_path, profiles)
    manifest.rule_count = write_rules(out / manifest.rules_path, rules)
    for rel in (manifest.cdr_path, manifest.crm_path, manifest.rules_path):
        manifest.files[rel] = _count_lines(out / rel) - 1
    (out / "manifest.txt").write_text(manifest.to_text(), encoding="utf-8")
    return manifest


def _count_lines(path: Path) -> int:
    with open(path, "rb") as fh:
        return sum(1 for _ in fh)
