import csv
import datetime as dt
import json
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from proxy_align.edgar_client import FilingRecord
from proxy_align.filing_parser import (
    Campaign,
    GuidelineDoc,
    IssRow,
    ProposalText,
    bunch_campaigns,
    clean_html,
    clean_lines,
    dedupe_filings,
    extract_guidelines,
    extract_message,
    merge_director_rows,
    read_jsonl,
    score_proposal_line,
    segment_proposals,
    split_campaign_at_event,
    write_jsonl,
)

FIX = Path(__file__).parent / "fixtures"
D0 = dt.date(2013, 1, 1)


def load_iss(path):
    with open(path, newline="") as fh:
        return [
            IssRow(r["description"], int(r["item_number"]), (r["nominees"],) if r["nominees"] else ())
            for r in csv.DictReader(fh)
        ]


# --- cleaning --------------------------------------------------------------------


def test_clean_html_drops_tables_and_trims():
    body = [f"<p>head line {i}</p>" for i in range(75)]
    body += ["<table>"] + [f"<tr><td>cell {i}</td></tr>" for i in range(20)] + ["</table>"]
    body += [f"<p>content line {i}</p>" for i in range(50)]
    body += [f"<p>tail line {i}</p>" for i in range(75)]
    assert len(body) == 222
    out = clean_html("\n".join(body))
    assert out == [f"content line {i}" for i in range(50)]


def test_clean_html_short_input_is_empty():
    assert clean_html("\n".join(f"line {i}" for i in range(100))) == []
    assert clean_html("") == []


def test_clean_html_plain_text():
    lines = [f"line {i}" for i in range(160)]
    assert clean_html("\n".join(lines)) == lines[75:85]


def test_accents_and_bytes():
    assert clean_lines("Café résumé") == ["Cafe resume"]
    assert clean_lines(b"abc \xff\xfe def") == ["abc def"]


# --- line scores -----------------------------------------------------------------


def test_heading_outscores_prose():
    hi = score_proposal_line("PROPOSAL 4 - DECLASSIFY THE BOARD", "Declassify the Board of Directors", 4)
    lo = score_proposal_line("our directors believe the current structure serves shareholders well", "Declassify the Board of Directors", 4)
    assert hi > lo


def test_empty_line_scores_zero():
    assert score_proposal_line("", "anything", 1) == 0.0


@given(st.text(max_size=100), st.text(max_size=40), st.none() | st.integers(0, 30))
def test_score_deterministic_nonnegative(line, desc, item):
    a = score_proposal_line(line, desc, item)
    assert a == score_proposal_line(line, desc, item) and a >= 0


# --- segmentation ------------------------------------------------------------------


def test_def14a_golden():
    doc = clean_html((FIX / "def14a_sample.htm").read_text())
    rows = merge_director_rows(load_iss(FIX / "def14a_sample.iss.csv"))
    segs = segment_proposals(doc, rows, 320193, dt.date(2014, 5, 20))
    golden = json.loads((FIX / "def14a_sample.golden.json").read_text())
    assert [json.loads(s.to_json()) for s in segs] == golden
    assert all(s.word_count > 30 for s in segs)


def test_merge_director_rows():
    rows = [IssRow("Elect Director A", 1, ("A",)), IssRow("Elect Director B", 1, ("B",)), IssRow("Ratify Auditors", 2)]
    merged = merge_director_rows(rows)
    assert [r.description for r in merged] == ["Elect Directors", "Ratify Auditors"]
    assert merged[0].nominees == ("A", "B")


def _single_doc():
    return [
        "PROPOSAL 1 - ADOPT MAJORITY VOTING",
        "The proponent asks the board to adopt a majority vote standard for uncontested director elections at all future meetings.",
        "Under plurality voting a director can be elected with a single vote even when a majority of shares are withheld.",
        "Majority voting makes directors accountable and is used by most large companies today.",
        "The proponent believes this change would improve board accountability.",
        "Please vote for this proposal.",
        "The Board of Directors recommends a vote against this proposal.",
        "Our board believes the current standard has served shareholders well.",
    ]


def test_single_proposal_ends_before_recommendation():
    segs = segment_proposals(_single_doc(), [IssRow("Adopt Majority Voting for Election of Directors", 1)])
    assert len(segs) == 1
    assert segs[0].body.splitlines() == _single_doc()[:6]


def test_thirty_word_floor():
    doc = _single_doc()[:1] + ["Short text here."] * 4 + ["more."] + _single_doc()[6:]
    segs = segment_proposals(doc, [IssRow("Adopt Majority Voting", 1)])
    assert segs == [] and segs.unmatched == []


def test_unmatched_row_reported():
    segs = segment_proposals(["a b c d e f"] * 10, [IssRow("Declassify the Board", None)])
    assert segs == [] and len(segs.unmatched) == 1


def test_empty_rows():
    assert segment_proposals(_single_doc(), []) == []


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 8), min_size=1, max_size=6))
def test_segments_are_ordered_and_disjoint(sizes):
    titles = ["ELECT DIRECTORS", "RATIFY AUDITORS", "APPROVE OMNIBUS STOCK PLAN", "DECLASSIFY THE BOARD", "REDUCE SUPERMAJORITY VOTE", "REPORT ON LOBBYING"]
    doc = []
    for k, n in enumerate(sizes):
        doc.append(f"PROPOSAL {k + 1} - {titles[k]}")
        doc += [f"Paragraph {k}.{j} describing the matter in enough words to pass the floor, with further detail on the item." for j in range(n)]
    segs = segment_proposals(doc, [IssRow(titles[k].title(), k + 1) for k in range(len(sizes))])
    spans = [(doc.index(s.body.splitlines()[0]), doc.index(s.body.splitlines()[-1])) for s in segs]
    assert all(a <= b for a, b in spans)
    assert all(b1 < a2 for (_, b1), (a2, _) in zip(spans, spans[1:]))
    assert all(s.word_count > 30 for s in segs)


def test_proposal_jsonl_roundtrip(tmp_path):
    p = ProposalText("1-2014-05-20-1", "Ratify Auditors", 1, dt.date(2014, 5, 20), "body words", 2)
    write_jsonl(tmp_path / "p.jsonl", [p])
    assert read_jsonl(tmp_path / "p.jsonl", ProposalText) == [p]


# --- messages ------------------------------------------------------------------------


def test_message_golden():
    from proxy_align.edgar_client import parse_sgml_header

    rec = parse_sgml_header((FIX / "dfan14a_sample.txt").read_text())
    m = extract_message(rec.body, rec.filer_name, rec.subject_name)
    assert m is not None and not m.low_confidence
    assert m.text == (FIX / "dfan14a_sample.golden.txt").read_text().rstrip("\n")


def test_message_none_cases():
    assert extract_message("") is None
    assert extract_message("<p>See Exhibit 99.1 attached hereto.</p>") is None
    banter = "Dear Fellow Shareholders,\nThe merger agreement provides for cash.\nSincerely,"
    assert extract_message(banter) is None


def test_message_without_end_cue_is_low_confidence():
    m = extract_message("Intro\nDear Fellow Shareholder,\nWe ask for your vote.\nMore reasons.")
    assert m.low_confidence and m.text == "We ask for your vote.\nMore reasons."


def test_message_placeholder_cue():
    body = "Barnwell Partners is seeking your support for its three nominees at Acme.\nPlease sign, date and return the GOLD proxy card today."
    m = extract_message(body, activist="BARNWELL PARTNERS LLC", target="ACME INC")
    assert m.text == "its three nominees at Acme."


def test_earliest_begin_cue_wins():
    body = "Ladies and Gentlemen:\nFirst text.\nWarm regards\nDear Fellow Shareholders,\nSecond text.\nSincerely"
    assert extract_message(body).text == "First text."


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from(["Dear Fellow Shareholders,", "Sincerely,", "We seek change.", "Vote GOLD.", "Ladies and Gentlemen", "text"]), max_size=12))
def test_message_is_substring(lines):
    body = "\n".join(lines)
    m = extract_message(body)
    if m is not None:
        assert m.text in "\n".join(clean_lines(body))


# --- campaigns -----------------------------------------------------------------------


def _filing(days, acc_n, filer=10, subject=20, body=None):
    return FilingRecord(
        f"0000000010-13-{acc_n:06d}", "DFAN14A", filer, subject, "ACT", "TGT", D0 + dt.timedelta(days=days), body or f"doc {acc_n}", []
    )


def test_bunching_splits_on_gap():
    fs = [_filing(0, 1), _filing(100, 2), _filing(290, 3)]
    cs = bunch_campaigns(fs)
    assert [c.filings for c in cs] == [[fs[0].accession, fs[1].accession], [fs[2].accession]]


def test_bunching_single_and_boundary():
    (c,) = bunch_campaigns([_filing(5, 1)])
    assert c.start_date == c.end_date
    assert len(bunch_campaigns([_filing(0, 1), _filing(180, 2)])) == 1
    assert len(bunch_campaigns([_filing(0, 1), _filing(181, 2)])) == 2


def test_bunching_merge_override():
    fs = [_filing(0, 1), _filing(400, 2)]
    assert len(bunch_campaigns(fs, merge_pairs=[(10, 20)])) == 1


@given(st.lists(st.tuples(st.integers(0, 2000), st.integers(1, 3), st.integers(1, 2)), max_size=25))
def test_bunching_partition(spec):
    fs = [_filing(d, k, filer=f, subject=s) for k, (d, f, s) in enumerate(spec)]
    cs = bunch_campaigns(fs)
    accs = [a for c in cs for a in c.filings]
    assert sorted(accs) == sorted(f.accession for f in fs)
    assert len(set(accs)) == len(accs)
    for c in cs:
        assert c.start_date <= c.end_date
        gaps = [(b - a).days for a, b in zip(c.filing_dates, c.filing_dates[1:])]
        assert all(0 <= g <= 180 for g in gaps)


def test_split_at_event():
    fs = [_filing(0, 1), _filing(10, 2), _filing(30, 3), _filing(40, 4)]
    (c,) = bunch_campaigns(fs, {f.accession: f"m{k}" for k, f in enumerate(fs)})
    pre, post = split_campaign_at_event(c, D0 + dt.timedelta(days=20))
    assert len(pre.filings) == 2 and len(post.filings) == 2
    assert pre.message_text == "m0\n\nm1" and post.message_text == "m2\n\nm3"
    with pytest.raises(ValueError):
        split_campaign_at_event(c, D0 - dt.timedelta(days=1))


def test_campaign_json_roundtrip(tmp_path):
    (c,) = bunch_campaigns([_filing(0, 1), _filing(3, 2)], {"0000000010-13-000001": "hello"})
    write_jsonl(tmp_path / "c.jsonl", [c])
    assert read_jsonl(tmp_path / "c.jsonl", Campaign) == [c]


def test_dedupe_mirrored_filings():
    a = _filing(0, 1, body="<p>Same   Letter</p>")
    b = _filing(1, 2, body="same letter")
    c = _filing(2, 3, body="different letter")
    assert [f.accession for f in dedupe_filings([b, a, c])] == [a.accession, c.accession]


# --- guidelines ---------------------------------------------------------------------------


def test_guideline_golden():
    g = extract_guidelines((FIX / "prospectus_sample.htm").read_text(), "F1", 2014)
    assert g.body == (FIX / "prospectus_sample.golden.txt").read_text().rstrip("\n")
    assert g.flags == ["multiple_cues"]


def test_guideline_absent():
    assert extract_guidelines("<p>INVESTMENT RESTRICTIONS</p><p>None.</p>") is None


def test_guideline_json_roundtrip():
    g = GuidelineDoc("F1", 2014, "text", ["multiple_cues"])
    assert GuidelineDoc.from_json(g.to_json()) == g
