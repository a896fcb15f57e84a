import datetime as dt

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from proxy_align.alignment import (
    HoldingRecord,
    HoldingsTable,
    Meeting,
    MeetingProposal,
    PanelRow,
    TypeTable,
    ag_align,
    aggregate_holdings,
    aggregate_panel,
    classify_proposal_type,
    compute_align_panel,
    event_split_panel,
    guideline_panel,
    months_before,
    num_interaction,
    read_panel,
    sup_act,
    type_based_align,
    write_panel,
)
from proxy_align.filing_parser import Campaign
from proxy_align.preference_model import InstitutionModel, VoteRecord
from proxy_align.text_features import Vocabulary

D = dt.date(2014, 3, 1)


def camp(cid="C1", act=1, tgt=100, start=D, end=None, messages=("",), dates=None):
    end = end or start
    dates = dates or [start]
    return Campaign(cid, act, tgt, [f"A{i}" for i in range(len(dates))], list(dates), start, end, list(messages))


def model(inst, alpha, beta, version=""):
    return InstitutionModel(inst, alpha, np.asarray(beta, float), version, (D, D), 100, 0.1, 1.0)


def row(inst, align, holding, cid="C1"):
    return PanelRow(cid, inst, align, holding)


# --- holdings --------------------------------------------------------------------


def test_aggregate_holdings_drops_negative():
    (r,) = aggregate_holdings([("F1", "I1", 30.0), ("F2", "I1", -10.0)], 1000.0)
    assert r.frac_mcap == pytest.approx(0.03)


def test_aggregate_holdings_additive_and_zero():
    recs = aggregate_holdings([("F1", "I1", 10.0), ("F2", "I1", 20.0)], 1000.0, institutions=["I2"])
    assert {r.institution_id: r.frac_mcap for r in recs} == {"I1": pytest.approx(0.03), "I2": 0.0}


def test_aggregate_holdings_book_equity_and_errors():
    (r,) = aggregate_holdings([("F1", "I1", 10.0)], None, book_equity=100.0)
    assert r.frac_mcap == pytest.approx(0.1)
    for bad in (0.0, -5.0, None):
        with pytest.raises(ValueError):
            aggregate_holdings([("F1", "I1", 1.0)], bad)


def test_holdings_point_in_time_and_lag():
    t = HoldingsTable([HoldingRecord("I1", 100, dt.date(2013, 6, 30), 0.02), HoldingRecord("I1", 100, dt.date(2013, 12, 31), 0.05)])
    assert t.get("I1", 100, dt.date(2013, 6, 29)) == 0.0
    assert t.get("I1", 100, dt.date(2013, 6, 30)) == 0.02
    assert t.get("I1", 100, dt.date(2014, 3, 1)) == 0.05
    assert t.lagged("I1", 100, dt.date(2014, 3, 1)) == 0.02
    assert t.get("I9", 100, D) == 0.0
    assert months_before(dt.date(2014, 8, 31), 6) == dt.date(2014, 2, 28)


# --- align panel ----------------------------------------------------------------------


def test_panel_zero_fill():
    vocab = Vocabulary(["board", "vote"], [1, 1])
    models = {i: model(i, 0.3, [0.0, 0.0]) for i in ("I1", "I2", "I3")}
    hold = HoldingsTable([HoldingRecord("I2", 100, D, 0.04)])
    rows = compute_align_panel(camp(messages=["board vote"]), models, hold, vocab)
    assert [r.institution_id for r in rows] == ["I1", "I2", "I3"]
    assert [r.holding for r in rows] == [0.0, 0.04, 0.0]


def test_empty_message_gives_clamped_intercept():
    vocab = Vocabulary(["board"], [1])
    models = {"I1": model("I1", 1.4, [0.1]), "I2": model("I2", 0.25, [0.1])}
    rows = compute_align_panel(camp(messages=[""]), models, HoldingsTable([]), vocab)
    assert [r.align for r in rows] == [1.0, 0.25]


def test_missing_model_row_omitted():
    vocab = Vocabulary(["board"], [1])
    rows = compute_align_panel(camp(), {"I1": model("I1", 0.2, [0])}, HoldingsTable([]), vocab, institutions=["I1", "I2"])
    assert [r.institution_id for r in rows] == ["I1"]


def test_planted_phrases_rank_institutions():
    vocab = Vocabulary(["declassifi", "pill", "poison pill"], [3, 3, 3])
    a = model("A", 0.3, [0.2, -0.1, 0.0])
    b = model("B", 0.3, [-0.2, 0.1, 0.0])
    rows = compute_align_panel(camp(messages=["We will declassify the board and declassify it now."]), {"A": a, "B": b}, HoldingsTable([]), vocab)
    al = {r.institution_id: r.align for r in rows}
    assert al["A"] > al["B"]


def test_panel_csv_roundtrip(tmp_path):
    rows = [PanelRow("C1", "I1", 0.1 + 0.2, 0.02, 0.01, None, 1 / 3, 2, 1, 0, 5, 6, 2014), PanelRow("C1", "I2", 0.0)]
    write_panel(tmp_path / "p.csv", rows)
    assert read_panel(tmp_path / "p.csv") == rows


# --- aggregates -------------------------------------------------------------------------


def test_ag_align_exact_anchor():
    agg = ag_align([row("A", 0.9, 0.02), row("B", 0.3, 0.01)])
    assert agg.ag_align == 0.7
    assert agg.own_dum == 0 and agg.total_mf_ownership == pytest.approx(0.03)


def test_single_holder_identity():
    assert ag_align([row("A", 0.37, 0.05), row("B", 0.9, 0.0)]).ag_align == 0.37


def test_own_dum_cutoff():
    assert ag_align([row("A", 0.5, 0.10), row("B", 0.5, 0.05)]).own_dum == 1
    assert ag_align([row("A", 0.5, 0.10), row("B", 0.5, 0.04)]).own_dum == 0
    assert ag_align([row("A", 0.5, 0.143)]).own_dum == 0


def test_ag_align_errors():
    with pytest.raises(ValueError):
        ag_align([row("A", 0.5, 0.0)])
    assert ag_align([row("A", 0.5, 0.0)], allow_absent=True) is None
    with pytest.raises(ValueError):
        ag_align([])
    with pytest.raises(ValueError):
        ag_align([row("A", 0.5, 0.1), row("B", 0.5, 0.1, cid="C2")])


def test_aggregate_panel_skips_unheld_and_attaches_wins():
    rows = [row("A", 0.5, 0.1), row("A", 0.2, 0.0, cid="C2")]
    (agg,) = aggregate_panel(rows, wins={"C1": 1})
    assert agg.campaign_id == "C1" and agg.win == 1


member = st.tuples(st.floats(0, 1), st.floats(1e-6, 0.2))


@given(st.lists(member, min_size=1, max_size=12))
def test_ag_align_is_convex_combination(ms):
    agg = ag_align([row(f"I{k}", a, h) for k, (a, h) in enumerate(ms)])
    aligns = [a for a, _ in ms]
    assert min(aligns) <= agg.ag_align <= max(aligns)


@given(st.lists(member, min_size=1, max_size=12), st.integers(-6, 6), st.floats(0.01, 100))
def test_ag_align_scale_invariant(ms, k, c):
    base = ag_align([row(f"I{j}", a, h) for j, (a, h) in enumerate(ms)]).ag_align
    # power-of-two scaling is exact in floating point, so equality is exact
    exact = ag_align([row(f"I{j}", a, h * 2.0**k) for j, (a, h) in enumerate(ms)]).ag_align
    assert exact == base
    approx = ag_align([row(f"I{j}", a, h * c) for j, (a, h) in enumerate(ms)]).ag_align
    assert approx == pytest.approx(base, rel=1e-12, abs=1e-15)


# --- interactions --------------------------------------------------------------------------


def test_num_interaction_counts():
    cs = [camp("C1", 1, 100, dt.date(2010, 1, 1)), camp("C2", 1, 200, dt.date(2011, 1, 1)), camp("C3", 1, 300, dt.date(2012, 1, 1)), camp("X", 2, 100, dt.date(2012, 1, 1))]
    hold = HoldingsTable([HoldingRecord("I1", 100, dt.date(2009, 12, 31), 0.02), HoldingRecord("I1", 200, dt.date(2010, 12, 31), 0.01)])
    out = num_interaction(cs, hold, ["I1"])
    assert out[("C1", "I1")] == 0
    assert out[("C2", "I1")] == 1
    assert out[("C3", "I1")] == 1  # exactly 1% does not count
    assert out[("X", "I1")] == 0


@given(st.lists(st.tuples(st.integers(0, 3000), st.integers(1, 4), st.floats(0, 0.05)), min_size=1, max_size=15))
def test_num_interaction_monotone(spec):
    cs = [camp(f"C{k}", 7, tgt, D + dt.timedelta(days=d)) for k, (d, tgt, _) in enumerate(spec)]
    hold = HoldingsTable([HoldingRecord("I1", tgt, D - dt.timedelta(days=1), h) for _, tgt, h in spec])
    out = num_interaction(cs, hold, ["I1"])
    seq = [out[(c.campaign_id, "I1")] for c in sorted(cs, key=lambda c: (c.start_date, c.campaign_id))]
    assert seq[0] == 0 and all(a <= b for a, b in zip(seq, seq[1:]))


# --- sup_act -------------------------------------------------------------------------------


def _meeting(date, descs=("Declassify the Board", "Require Independent Board Chairman", "Adopt Proxy Access Right")):
    return Meeting(100, date, tuple(MeetingProposal(f"M{k}", d) for k, d in enumerate(descs)))


def _votes(inst, casts, funds=("F1", "F2")):
    return [VoteRecord(inst, f, f"M{k}", D, "against", c) for f in funds for k, c in enumerate(casts)]


def test_sup_act_one_of_three():
    c = camp(start=dt.date(2014, 1, 1), end=dt.date(2014, 3, 1))
    out = sup_act(c, [_meeting(dt.date(2014, 5, 1))], _votes("I1", ["for", "against", "against"]))
    assert out["I1"] == pytest.approx(1 / 3)
    assert round(out["I1"], 2) == 0.33


def test_sup_act_meeting_filters():
    c = camp(start=dt.date(2013, 1, 1), end=dt.date(2014, 3, 1))
    v = _votes("I1", ["for", "for", "for"])
    assert sup_act(c, [_meeting(dt.date(2015, 4, 5))], v) == {}  # 400 days after end
    assert sup_act(c, [_meeting(dt.date(2014, 1, 20))], v) == {}  # 40 days before end
    assert sup_act(c, [_meeting(dt.date(2014, 1, 30))], v)["I1"] == 1.0  # 30 days before end
    mgmt_only = Meeting(100, dt.date(2014, 5, 1), (MeetingProposal("M0", "Elect Management Nominee J. Doe"),))
    assert sup_act(c, [mgmt_only], v) == {}
    mgmt_sponsor = Meeting(100, dt.date(2014, 5, 1), (MeetingProposal("M0", "Ratify Auditors", "management"),))
    assert sup_act(c, [mgmt_sponsor], v) == {}


def test_sup_act_earliest_qualifying_meeting():
    c = camp(start=dt.date(2014, 1, 1), end=dt.date(2014, 3, 1))
    early = Meeting(100, dt.date(2014, 4, 1), (MeetingProposal("M0", "Ratify Auditors", "management"),))
    first = _meeting(dt.date(2014, 5, 1), ("Declassify the Board",))
    later = Meeting(100, dt.date(2014, 6, 1), (MeetingProposal("M9", "Require Independent Board Chairman"),))
    v = _votes("I1", ["for"]) + [VoteRecord("I1", "F1", "M9", D, "against", "against")]
    assert sup_act(c, [later, early, first], v) == {"I1": 1.0}


@given(st.permutations(range(6)))
def test_sup_act_fund_order_invariant(perm):
    c = camp(start=dt.date(2014, 1, 1), end=dt.date(2014, 3, 1))
    v = _votes("I1", ["for", "against", "abstain"], funds=("F1", "F2"))
    shuffled = [v[i] for i in perm]
    assert sup_act(c, [_meeting(dt.date(2014, 5, 1))], shuffled) == sup_act(c, [_meeting(dt.date(2014, 5, 1))], v)


# --- proposal types ------------------------------------------------------------------------------


def test_classify_examples():
    assert classify_proposal_type("Declassify the Board of Directors") == 3
    assert classify_proposal_type("Require Independent Board Chairman") == 2
    assert classify_proposal_type("Totally novel proposal heading") is None
    assert classify_proposal_type("") is None


def test_classify_normalization_and_prefix():
    assert classify_proposal_type("  DECLASSIFY the board of directors. ") == 3
    assert classify_proposal_type("Company-Specific Board-Related (inactive)") == 9
    t = TypeTable([("Political Contributions Disclosure", 4), ("Political Lobbying Disclosure", 4), ("Political Activities", 6)])
    assert t.classify("Political Contributions Disclosure and Oversight") == 4
    assert t.classify("Political Contrib") == 4  # truncated, single candidate type
    assert t.classify("Political") is None  # too short to disambiguate


def _hist(inst, pid, desc, casts, date=dt.date(2013, 5, 1)):
    return [VoteRecord(inst, f"F{k}", pid, date, "for", c, desc) for k, c in enumerate(casts)]


def test_type_based_align_fraction():
    c = camp(start=dt.date(2014, 1, 1))
    votes = []
    for k, lab in enumerate([1, 1, 1, 1, 0]):
        votes += _hist("I1", f"P{k}", "Declassify the Board of Directors", ["against" if lab else "for"])
    assert type_based_align(c, ["Declassify the Board of Directors"], votes) == {"I1": pytest.approx(0.8)}


def test_type_based_align_absent_and_mean():
    c = camp(start=dt.date(2014, 1, 1))
    votes = _hist("I1", "P1", "Declassify the Board of Directors", ["against"]) + _hist("I1", "P2", "Require Independent Board Chairman", ["for"])
    out = type_based_align(c, ["Declassify the Board of Directors", "Require Independent Board Chairman"], votes)
    assert out == {"I1": 0.5}
    assert type_based_align(c, ["Adopt Proxy Access Right"], votes) == {}
    old = _hist("I2", "P3", "Declassify the Board of Directors", ["against"], date=dt.date(2011, 12, 31))
    assert "I2" not in type_based_align(c, ["Declassify the Board of Directors"], old)


@given(st.permutations(range(4)))
def test_type_based_align_fund_order_invariant(perm):
    c = camp(start=dt.date(2014, 1, 1))
    votes = _hist("I1", "P1", "Declassify the Board of Directors", ["against", "for", "for", "abstain"])
    assert type_based_align(c, ["Declassify the Board of Directors"], [votes[i] for i in perm]) == type_based_align(
        c, ["Declassify the Board of Directors"], votes
    )


# --- event split and guidelines ---------------------------------------------------------------------


def test_event_split_panel():
    dates = [dt.date(2014, 1, 1), dt.date(2014, 2, 1), dt.date(2014, 4, 1)]
    c = camp(start=dates[0], end=dates[-1], dates=dates, messages=["board", "board", "vote"])
    vocab = Vocabulary(["board", "vote"], [1, 1])
    models = {"I1": model("I1", 0.2, [0.1, 0.0]), "I2": model("I2", 0.2, [0.0, 0.1])}
    rows = event_split_panel(c, dt.date(2014, 3, 1), ["I2"], models, HoldingsTable([]), vocab)
    assert [(r.institution_id, r.post, r.acquired) for r in rows] == [("I1", 0, 0), ("I2", 0, 1), ("I1", 1, 0), ("I2", 1, 1)]
    assert rows[0].align == pytest.approx(0.4) and rows[3].align == pytest.approx(0.3)


def test_guideline_panel():
    m = model("I1", 0.0, [0.002, -0.0005, 0.0])
    rows = guideline_panel({("I1", 2013): {"board": 2}}, {("I1", 2014): m}, ["board", "pill", "vote"])
    assert [(r["phrase"], r["count"], r["abs_beta"]) for r in rows] == [("board", 2, 20.0), ("pill", 0, 5.0), ("vote", 0, 0.0)]
    assert guideline_panel({("I1", 2014): {"board": 1}}, {("I1", 2014): m}, ["board", "pill", "vote"]) == []
    present = guideline_panel({("I1", 2013): {"board": 2}}, {("I1", 2014): m}, ["board", "pill", "vote"], present_only=True)
    assert [r["phrase"] for r in present] == ["board"]
    with pytest.raises(ValueError):
        guideline_panel({("I1", 2013): {}}, {("I1", 2014): m}, ["board"])
