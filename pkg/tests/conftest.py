from __future__ import annotations

import random
from pathlib import Path

import pytest

from dnsflow import datagen
from dnsflow.engine import PipelineConfig
from dnsflow.enrich import EnrichedRecord
from dnsflow.logmodel import QueryType, ServerId

HOUR0 = 1559174400000  # 2019-05-30T00:00:00Z

ACCEPTANCE_RESULTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)


def make_record(ts=HOUR0, server=ServerId.DNS1, ip=0x0A000001, name="a.com", qtype=QueryType.A, rcode=0,
                sub=None, city=None, region=None, category="Uncategorized") -> EnrichedRecord:
    if sub is not None and city is None:
        city, region = "Istanbul", "34"
    return EnrichedRecord(ts, server, ip, name, qtype, rcode, sub, city, region, category)


def random_batch(rng: random.Random, n: int, hour_start: int = HOUR0, server=ServerId.DNS2) -> list[EnrichedRecord]:
    """Random records sharing one (date, hour, server) partition."""
    names = [f"h{i}.example{rng.randint(0, 50)}.com" for i in range(max(1, n // 4))]
    cities = ["Istanbul", "Ankara", "İzmir", "Şanlıurfa"]
    out = []
    for _ in range(n):
        joined = rng.random() < 0.7
        sub = rng.randint(0, 2**64 - 1) if joined else None
        out.append(
            EnrichedRecord(
                hour_start + rng.randint(0, 3_599_999),
                server,
                rng.randint(0, 2**32 - 1),
                rng.choice(names),
                rng.choice(list(QueryType)),
                rng.randint(0, 65535),
                sub,
                rng.choice(cities) if joined else None,
                str(rng.randint(1, 81)).zfill(2) if joined else None,
                rng.choice(["Technology/Internet", "Social", "Uncategorized", "Other"]),
            )
        )
    return out


def pipeline_config(gen_dir: Path, out: Path, **kw) -> PipelineConfig:
    return PipelineConfig(
        inputs=sorted(gen_dir.glob("logs/*.log")),
        cdr_path=gen_dir / "cdr.csv",
        crm_path=gen_dir / "crm.csv",
        rules_path=gen_dir / "rules.csv",
        output_root=out,
        **kw,
    )


@pytest.fixture(scope="session")
def small_generated(tmp_path_factory) -> tuple[Path, datagen.Manifest]:
    """About 12k lines over two days, with duplicates and placeholders planted."""
    out = tmp_path_factory.mktemp("gen-small")
    spec = datagen.GeneratorSpec(
        seed=7, subscriber_count=150, days=2, base_queries_per_subscriber_day=40,
        duplicate_rate=0.02, placeholder_rate=0.01, duplicate_max_lag=300,
    )
    return out, datagen.generate(spec, out)
