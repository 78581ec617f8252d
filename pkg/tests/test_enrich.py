from __future__ import annotations

import random

import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import nested_loop_join, oracle_category

from dnsflow.enrich import (
    UNCATEGORIZED,
    EnrichedRecord,
    JoinStats,
    OverlappingIntervals,
    SubscriberAssignment,
    SubscriberProfile,
    build_assignment_index,
    categorize,
    enrich,
    load_cdr,
    load_crm,
    load_rules,
    write_cdr,
    write_crm,
    write_rules,
)
from dnsflow.errors import ValidationError
from dnsflow.logmodel import DnsQueryRecord, QueryType, ServerId, ip_to_int

IP = ip_to_int("10.0.0.1")


@pytest.fixture
def index():
    return build_assignment_index([SubscriberAssignment(7, IP, 100, 200)])


def test_lookup_inside(index):
    assert index.lookup(IP, 150) == 7
    assert index.lookup(IP, 100) == 7


def test_lookup_half_open_end(index):
    assert index.lookup(IP, 200) is None
    assert index.lookup(IP, 99) is None
    assert index.lookup(IP + 1, 150) is None


def test_overlap_rejected():
    with pytest.raises(OverlappingIntervals) as err:
        build_assignment_index([SubscriberAssignment(1, IP, 100, 200), SubscriberAssignment(2, IP, 150, 300)])
    assert err.value.ip == IP


def test_adjacent_intervals_allowed():
    idx = build_assignment_index([SubscriberAssignment(1, IP, 100, 200), SubscriberAssignment(2, IP, 200, 300)])
    assert idx.lookup(IP, 199) == 1
    assert idx.lookup(IP, 200) == 2


def test_empty_interval_rejected():
    with pytest.raises(ValidationError):
        build_assignment_index([SubscriberAssignment(1, IP, 100, 100)])


@given(
    st.lists(st.tuples(st.integers(0, 1000), st.integers(1, 50)), min_size=1, max_size=20),
    st.integers(0, 3),
)
def test_end_boundary_never_matches_own_interval(spans, gap):
    # lay intervals out back to back (optionally with gaps) so they are disjoint
    assignments, cursor = [], 0
    for i, (offset, length) in enumerate(spans):
        start = cursor + gap * (offset % 3)
        assignments.append(SubscriberAssignment(i, IP, start, start + length))
        cursor = start + length
    idx = build_assignment_index(assignments)
    for a in assignments:
        assert idx.lookup(IP, a.start_ms) == a.subscriber_id
        assert idx.lookup(IP, a.end_ms) != a.subscriber_id


RULES = {"google.com": "Technology/Internet"}


def test_categorize_suffix_match():
    assert categorize("mail.google.com", RULES) == "Technology/Internet"
    assert categorize("google.com", RULES) == "Technology/Internet"


def test_categorize_label_boundary():
    assert categorize("notgoogle.com", RULES) == UNCATEGORIZED


def test_categorize_longest_suffix_wins():
    assert categorize("a.b.com", {"b.com": "X", "a.b.com": "Y"}) == "Y"
    assert categorize("z.a.b.com", {"b.com": "X", "a.b.com": "Y"}) == "Y"
    assert categorize("c.b.com", {"b.com": "X", "a.b.com": "Y"}) == "X"


label = st.text(alphabet="abcxyz", min_size=1, max_size=3)
domain = st.lists(label, min_size=1, max_size=4).map(".".join)


@given(domain, st.dictionaries(domain, st.sampled_from(["A", "B", "C"]), max_size=8), domain)
def test_categorize_matches_oracle_and_ignores_nonmatching_rule(name, rules, extra):
    assert categorize(name, rules) == oracle_category(name, rules)
    if not (name == extra or name.endswith("." + extra)) and extra not in rules:
        assert categorize(name, {**rules, extra: "Z"}) == categorize(name, rules)


def test_enrich_single_rule_composition(index):
    r = DnsQueryRecord(150, ServerId.DNS1, IP, "news.example.com", QueryType.A, 0)
    crm = {7: SubscriberProfile(7, "Istanbul", "34")}
    stats = JoinStats()
    (out,) = enrich([r], index, crm, {"example.com": "News/Media"}, stats)
    assert out == EnrichedRecord(*r, 7, "Istanbul", "34", "News/Media")
    assert stats == JoinStats(1, 1, 0, 0)


def test_enrich_left_join_keeps_unmatched(index):
    r = DnsQueryRecord(150, ServerId.DNS1, IP + 5, "mail.google.com", QueryType.A, 0)
    (out,) = enrich([r], index, {}, RULES)
    assert out.subscriber_id is None and out.city is None and out.region_code is None
    assert out.category == "Technology/Internet"


def test_enrich_missing_crm_row_drops_all_subscriber_fields(index):
    r = DnsQueryRecord(150, ServerId.DNS1, IP, "x.org", QueryType.A, 0)
    stats = JoinStats()
    (out,) = enrich([r], index, {}, {}, stats)
    assert (out.subscriber_id, out.city, out.region_code) == (None, None, None)
    assert out.category == UNCATEGORIZED
    assert stats.missing_crm == 1


def _random_join_inputs(seed, n_records, n_assign):
    rng = random.Random(seed)
    ips = [ip_to_int(f"10.0.{i // 256}.{i % 256}") for i in range(120)]
    assignments = []
    per_ip = {}
    for k in range(n_assign):
        ip = rng.choice(ips)
        start = per_ip.get(ip, 0) + rng.randint(0, 50)
        end = start + rng.randint(1, 400)
        per_ip[ip] = end
        assignments.append(SubscriberAssignment(rng.randint(1, 300), ip, start, end))
    crm = {s: SubscriberProfile(s, f"city{s % 9}", f"{s % 81:02d}") for s in range(1, 300) if s % 13}
    names = ["a.b.com", "b.com", "x.a.b.com", "c.org", "b.org", "www.c.org", "zzz.net"]
    rules = {"b.com": "Social", "a.b.com": "News/Media", "c.org": "Other"}
    horizon = max(per_ip.values()) + 50
    records = [
        DnsQueryRecord(
            rng.randint(0, horizon), rng.choice(list(ServerId)), rng.choice(ips + [1, 2, 3]),
            rng.choice(names), QueryType.A, 0,
        )
        for _ in range(n_records)
    ]
    return records, assignments, crm, rules


def test_enrich_matches_nested_loop_oracle_10k():
    records, assignments, crm, rules = _random_join_inputs(11, 10_000, 500)
    out = enrich(records, build_assignment_index(assignments), crm, rules)
    assert len(out) == len(records)
    assert [tuple(r) for r in out] == nested_loop_join(records, assignments, crm, rules)


@given(st.integers(0, 2**32), st.integers(0, 300))
def test_left_join_cardinality(seed, n):
    records, assignments, crm, rules = _random_join_inputs(seed, n, 40)
    out = enrich(records, build_assignment_index(assignments), crm, rules)
    assert len(out) == n
    for r in out:
        assert (r.subscriber_id is None) == (r.city is None) == (r.region_code is None)


def test_csv_roundtrip(tmp_path):
    assignments = [SubscriberAssignment(3, IP, 10, 20), SubscriberAssignment(4, IP + 1, 0, 5)]
    write_cdr(tmp_path / "cdr.csv", assignments)
    assert load_cdr(tmp_path / "cdr.csv") == assignments
    profiles = [SubscriberProfile(3, "Istanbul", "34"), SubscriberProfile(4, "Ankara, Merkez", "06")]
    write_crm(tmp_path / "crm.csv", profiles)
    assert list(load_crm(tmp_path / "crm.csv").values()) == profiles
    write_rules(tmp_path / "rules.csv", {"google.com": "Technology/Internet"})
    assert load_rules(tmp_path / "rules.csv") == {"google.com": "Technology/Internet"}


@pytest.mark.parametrize(
    "loader, text",
    [
        (load_cdr, "subscriber,ip,start_ms,end_ms\n"),
        (load_cdr, "subscriber_id,ip,start_ms,end_ms\n1,10.0.0.300,1,2\n"),
        (load_cdr, "subscriber_id,ip,start_ms,end_ms\n1,10.0.0.1,x,2\n"),
        (load_crm, "subscriber_id,city,region_code\n1,A,01\n1,B,02\n"),
        (load_crm, "subscriber_id,city,region_code\n1,,01\n"),
        (load_rules, "suffix,category\n.google.com,X\n"),
        (load_rules, "suffix,category\ngoogle.com,X\ngoogle.com,Y\n"),
        (load_rules, "suffix,category\nGoogle.com,X\n"),
    ],
)
def test_loader_validation(tmp_path, loader, text):
    p = tmp_path / "in.csv"
    p.write_text(text)
    with pytest.raises(ValidationError):
        loader(p)
