from __future__ import annotations

import random

from hypothesis import given
from hypothesis import strategies as st
from oracles import nested_loop_sanitize

from dnsflow.logmodel import DnsQueryRecord, QueryType, ServerId
from dnsflow.sanitizer import SanitizeReport, sanitize


def rec(ts=1000, name="a.com", server=ServerId.DNS1, ip=1, qtype=QueryType.A, rcode=0):
    return DnsQueryRecord(ts, server, ip, name, qtype, rcode)


def test_exact_duplicate_removed():
    r1, r2 = rec(), rec(ts=2000)
    out, report = sanitize([r1, r1, r2])
    assert out == [r1, r2]
    assert report.duplicates_removed == 1
    assert report == SanitizeReport(3, 0, 1, 2)


def test_placeholder_removed():
    out, report = sanitize([rec(name="-")])
    assert out == []
    assert report.null_incomplete_removed == 1


def test_zero_timestamp_and_dot_removed():
    out, report = sanitize([rec(ts=0), rec(name="."), rec()])
    assert out == [rec()]
    assert report.null_incomplete_removed == 2


def test_rcode_not_part_of_key_keeps_first():
    first, second = rec(rcode=0), rec(rcode=3)
    out, report = sanitize([first, second])
    assert out == [first]
    assert out[0].response_code == 0


def test_retry_a_millisecond_later_is_kept():
    out, _ = sanitize([rec(ts=1000), rec(ts=1001)])
    assert len(out) == 2


def _planted(seed=3):
    rng = random.Random(seed)
    base = [
        rec(ts=1_000_000 + i * 7, name=f"h{i % 97}.com", ip=rng.randint(0, 500), server=rng.choice(list(ServerId)))
        for i in range(850)
    ]
    records = list(base)
    for i in rng.sample(range(850), 100):
        records.insert(rng.randint(0, len(records)), base[i])
    for _ in range(50):
        records.insert(rng.randint(0, len(records)), rec(ts=rng.randint(1, 10**9), name=rng.choice(["-", "."])))
    return records


def test_planted_thousand_matches_nested_loop_oracle():
    records = _planted()
    assert len(records) == 1000
    out, report = sanitize(records)
    oracle_out, nulls, dups = nested_loop_sanitize(records)
    assert len(out) == 850
    assert out == oracle_out
    assert (report.null_incomplete_removed, report.duplicates_removed) == (nulls, dups) == (50, 100)


def test_csv_row_roundtrip():
    report = SanitizeReport(10, 2, 3, 5)
    assert report.to_csv_row() == "10,2,3,5"
    assert SanitizeReport.from_csv_row(report.to_csv_row()) == report


# Small domains so random lists contain plenty of duplicates and placeholders.
small_records = st.lists(
    st.builds(
        DnsQueryRecord,
        st.integers(0, 4),
        st.sampled_from(list(ServerId)),
        st.integers(0, 2),
        st.sampled_from(["a.com", "b.com", "-", "."]),
        st.sampled_from([QueryType.A, QueryType.AAAA]),
        st.integers(0, 3),
    ),
    max_size=60,
)


@given(small_records)
def test_report_balances_and_matches_oracle(records):
    out, report = sanitize(records)
    assert report.is_consistent()
    assert report.input_count == len(records)
    oracle_out, nulls, dups = nested_loop_sanitize(records)
    assert out == oracle_out
    assert (report.null_incomplete_removed, report.duplicates_removed) == (nulls, dups)


@given(small_records)
def test_idempotent(records):
    once, _ = sanitize(records)
    twice, report = sanitize(once)
    assert twice == once
    assert report.null_incomplete_removed == report.duplicates_removed == 0


@given(small_records)
def test_survivor_order_preserved(records):
    out, _ = sanitize(records)
    positions = [next(i for i, r in enumerate(records) if r is s) for s in out]
    assert positions == sorted(positions)
