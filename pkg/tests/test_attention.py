import datetime as dt
import gzip
import re
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from proxy_align.attention import (
    IpAssignment,
    LogStats,
    SchemaError,
    assign_ip3,
    backtest_validity,
    count_views,
    dedupe_views,
    filter_robots,
    filter_valid,
    holdings_access_fraction,
    is_valid_request,
    parse_log,
    parse_quarter,
    process_logs,
    quarter_cutoff_date,
    quarter_of,
    read_ip_map,
    read_patterns,
    read_views,
    validity_start,
    write_views,
)
from proxy_align.filing_parser import Campaign, read_jsonl

CASE = Path(__file__).parent / "fixtures" / "logs_case"
HEADER = "ip,date,time,zone,cik,accession,extention,code,size,idx,norefer,noagent,find,crawler,browser"


def line(ip="1.2.3.abc", date="2014-03-05", time="10:00:00", acc="0000000001-14-000001", ext="d1.htm", size=1000, idx=0):
    return f"{ip},{date},{time},0,1,{acc},{ext},200,{size},{idx},0,0,10,0,"


def parse(*rows):
    return list(parse_log([HEADER] + list(rows)))


# --- parsing ----------------------------------------------------------------------


def test_parse_ip_prefix():
    (e,) = parse(line(ip="199.253.64.mns"))
    assert e.ip3 == (199, 253, 64) and e.prefix == "199.253.64" and e.suffix == "mns"


def test_parse_skips_malformed():
    stats = LogStats()
    rows = [line(), line(ip="299.1.1.abc"), "garbage", line(date="2014-02-30"), line(), line()]
    out = list(parse_log([HEADER] + rows, stats))
    assert len(out) == 3 and stats.rows == 6 and stats.skipped == 3


def test_header_drift_is_error():
    with pytest.raises(SchemaError):
        list(parse_log(["ip,date,time,cik", line()]))


def test_gzip_transparent(tmp_path):
    p = tmp_path / "log.csv.gz"
    with gzip.open(p, "wt") as fh:
        fh.write("\n".join([HEADER, line(), line(time="11:00:00")]) + "\n")
    assert len(list(parse_log(p))) == 2


# --- filters ----------------------------------------------------------------------------


def _robot_rows(ip, n, date="2014-03-05"):
    return [line(ip=ip, date=date, acc=f"0000000001-14-{k:06d}") for k in range(n)]


def test_robot_threshold_strict():
    es = parse(*_robot_rows("9.9.9.aaa", 1001), *_robot_rows("8.8.8.bbb", 1000), line(ip="9.9.9.aaa", date="2014-03-06"))
    kept = filter_robots(es)
    assert {e.ip for e in kept if e.date == dt.date(2014, 3, 5)} == {"8.8.8.bbb"}
    assert [e.ip for e in kept if e.date == dt.date(2014, 3, 6)] == ["9.9.9.aaa"]


def test_robot_counts_distinct_filings():
    rows = [line(ip="9.9.9.aaa", time=f"10:{m:02d}:00") for m in range(60)] * 20
    assert len(filter_robots(parse(*rows))) == 1200


def test_robot_key_ip3():
    rows = [line(ip=f"9.9.9.{'ab'[k % 2]}x", acc=f"0000000001-14-{k:06d}") for k in range(1002)]
    es = parse(*rows)
    assert len(filter_robots(es, key="ip")) == 1002
    assert filter_robots(es, key="ip3") == []


def test_validity_exclusions():
    ok, ico, xml, index, idx, small, edge = parse(
        line(), line(ext="favicon.ico"), line(ext="primary_doc.xml"), line(ext="0000000001-14-000001-index.htm"), line(idx=1), line(size=499), line(size=500)
    )
    assert [is_valid_request(e) for e in (ok, ico, xml, index, idx, small, edge)] == [True, False, False, False, False, False, True]


def test_dedup_boundaries():
    assert len(dedupe_views(parse(line(time="10:00:00"), line(time="10:04:59")))) == 1
    assert len(dedupe_views(parse(line(time="10:00:00"), line(time="10:05:01")))) == 2
    assert len(dedupe_views(parse(line(time="10:00:00"), line(time="10:05:00")))) == 2
    # different accession or address is never merged
    assert len(dedupe_views(parse(line(), line(acc="0000000001-14-000002"), line(ip="1.2.3.xyz")))) == 3


@given(st.lists(st.integers(0, 4000), min_size=1, max_size=30))
def test_dedup_gap_rule(seconds):
    base = dt.datetime(2014, 3, 5)
    rows = [line(time=(base + dt.timedelta(seconds=s)).time().isoformat()) for s in seconds]
    kept = dedupe_views(parse(*rows))
    s = sorted(seconds)
    expect = 1 + sum(b - a >= 300 for a, b in zip(s, s[1:]))
    assert len(kept) == expect


# --- assignment -----------------------------------------------------------------------------


PATTERNS = [("A", re.compile(r"(.*blackrock.*)", re.I)), ("B", re.compile(r"(.*vanguard.*)", re.I))]


def test_assign_exclusive_plurality_tie():
    ips = [("BlackRock Inc", "1.1.1.1")]
    ips += [("BlackRock Inc", f"2.2.2.{k}") for k in range(5)] + [("Vanguard Group", f"2.2.2.{k + 10}") for k in range(3)]
    ips += [("BlackRock Inc", f"3.3.3.{k}") for k in range(4)] + [("Vanguard Group", f"3.3.3.{k + 10}") for k in range(4)]
    ips += [("Acme Widgets", "4.4.4.4"), ("BlackRock Inc", "5.5.5.999")]
    out = assign_ip3(ips, PATTERNS)
    assert {p: a.institution_id for p, a in out.items()} == {"1.1.1": "A", "2.2.2": "A"}


def test_assign_counts_distinct_addresses():
    ips = [("BlackRock", "2.2.2.1")] * 5 + [("Vanguard", "2.2.2.7"), ("Vanguard", "2.2.2.8")]
    assert assign_ip3(ips, PATTERNS)["2.2.2"].institution_id == "B"


# --- validity backtest --------------------------------------------------------------------------


def test_cambiar_backtest():
    series = {"2015Q4": 0.019, "2015Q3": 0.033, "2015Q2": 0.0, "2015Q1": 0.001}
    assert validity_start(series) == "2015Q2"
    assert quarter_cutoff_date("2015Q2") == dt.date(2015, 6, 1)
    out = backtest_validity({"1.1.1": IpAssignment("1.1.1", "CAMBIAR")}, {"CAMBIAR": series})
    assert out["1.1.1"].valid_from == dt.date(2015, 6, 1)
    assert not out["1.1.1"].covers(dt.date(2015, 5, 31)) and out["1.1.1"].covers(dt.date(2015, 6, 1))


def test_backtest_no_truncation():
    assert validity_start({"2016Q4": 0.05, "2016Q3": 0.02, "2016Q2": 0.03}) is None
    assert validity_start({"2016Q4": 0.05, "2016Q3": 0.0, "2016Q2": 0.03, "2016Q1": 0.0}) is None
    assert validity_start({}) is None
    assert validity_start({"2016Q4": 0.01, "2016Q3": 0.01}) == "2016Q4"  # "more than 1%" fails at exactly 1%


def test_backtest_walks_from_start():
    series = {"2016Q4": 0.0, "2016Q3": 0.0, "2015Q4": 0.0, "2015Q3": 0.0, "2016Q2": 0.5, "2016Q1": 0.5}
    assert validity_start(series) == "2016Q4"
    assert validity_start(series, start="2016Q2") == "2015Q4"


def test_access_fraction():
    held = {"I1": {"2015Q1": {1, 2, 3, 4}, "2015Q2": set()}}
    viewed = {"I1": {"2015Q1": {2, 9}}}
    assert holdings_access_fraction(held, viewed) == {"I1": {"2015Q1": 0.25}}


def test_quarters():
    assert parse_quarter("2015q2") == (2015, 2)
    assert quarter_of(dt.date(2015, 6, 30)) == "2015Q2"
    with pytest.raises(ValueError):
        parse_quarter("2015Q5")


# --- counting ----------------------------------------------------------------------------------


def _campaign(cid, accs, start, end):
    return Campaign(cid, 1, 2, list(accs), [start] * len(accs), start, end)


def test_count_window_and_unassigned():
    c = _campaign("C1", ["0000000001-14-000001"], dt.date(2014, 3, 1), dt.date(2014, 3, 10))
    es = parse(line(date="2014-03-01"), line(date="2014-04-09"), line(date="2014-04-10"), line(ip="7.7.7.abc", date="2014-03-02"))
    (vc,) = count_views(es, {"1.2.3": IpAssignment("1.2.3", "A")}, [c])
    assert vc.views == 2 and vc.window == (dt.date(2014, 3, 1), dt.date(2014, 4, 9))


def test_count_respects_validity_dates():
    c = _campaign("C1", ["0000000001-14-000001"], dt.date(2014, 3, 1), dt.date(2014, 3, 10))
    es = parse(line(date="2014-03-02"), line(date="2014-03-20"))
    (vc,) = count_views(es, {"1.2.3": IpAssignment("1.2.3", "A", valid_from=dt.date(2014, 3, 15))}, [c])
    assert vc.views == 1


def _fixture_inputs():
    assignments = assign_ip3(read_ip_map(CASE / "ip_map.csv"), read_patterns(CASE / "institution_patterns.csv"))
    campaigns = read_jsonl(CASE / "campaigns.jsonl", Campaign)
    return assignments, campaigns


def test_fixture_golden(tmp_path):
    assignments, campaigns = _fixture_inputs()
    views = process_logs([CASE / "log20140301.csv"], assignments, campaigns, institutions=["INST_A", "INST_B"])
    write_views(tmp_path / "views.csv", views)
    assert (tmp_path / "views.csv").read_text() == (CASE / "views.golden.csv").read_text()
    assert read_views(tmp_path / "views.csv") == views


def test_dedup_before_robots_same_counts():
    # the fixture's robot is removed under either order, so counts must agree
    assignments, campaigns = _fixture_inputs()
    es = list(parse_log(CASE / "log20140301.csv"))
    a = filter_valid(filter_robots(es))
    b = filter_robots(filter_valid(es))
    ca = count_views(a, assignments, campaigns, institutions=["INST_A", "INST_B"])
    cb = count_views(b, assignments, campaigns, institutions=["INST_A", "INST_B"])
    assert ca == cb


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 60), st.integers(0, 60))
def test_counts_monotone_in_window(t1, t2):
    assignments, campaigns = _fixture_inputs()
    kept = filter_valid(filter_robots(parse_log(CASE / "log20140301.csv")))
    lo, hi = sorted((t1, t2))
    small = count_views(kept, assignments, campaigns, tail_days=lo)
    big = count_views(kept, assignments, campaigns, tail_days=hi)
    assert all(s.views <= b.views for s, b in zip(small, big))
