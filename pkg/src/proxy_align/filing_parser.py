"""Structured text from raw filings.

* DEF 14A proxy statements -> per-proposal text segments
* contested-solicitation filings -> the activist's message to shareholders
* fund prospectuses -> proxy-voting guideline sections
* filings of one activist/target pair -> bunched campaigns
"""

from __future__ import annotations

import datetime as dt
import hashlib
import html
import json
import logging
import re
import unicodedata
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .edgar_client import FilingRecord

log = logging.getLogger(__name__)

HEAD_TRIM = 75
TAIL_TRIM = 75
MIN_PROPOSAL_WORDS = 30
RECOMMEND_CUE = "the board of directors recommends"


def _data_lines(name: str) -> list[str]:
    text = resources.files("proxy_align").joinpath(f"data/{name}").read_text()
    return [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]


# --- cleaning --------------------------------------------------------------

_TABLE_RE = re.compile(r"<table\b.*?</table\s*>", re.I | re.S)
_BLOCK_RE = re.compile(r"<\s*(?:br|/?p|/?div|/?tr|/?li|/?h[1-6]|/?center|/?pre)\b[^>]*>", re.I)
_TAG_RE = re.compile(r"<[^>]*>")
_SPACE_RE = re.compile(r"[ \t\r\f\v\xa0]+")


def fold_text(s: str) -> str:
    """Fold accents to ASCII and drop anything that will not survive the fold."""
    s = unicodedata.normalize("NFKD", s)
    s = s.replace("—", "-").replace("–", "-").replace("’", "'").replace("“", '"').replace("”", '"')
    return s.encode("ascii", "ignore").decode("ascii")


def clean_lines(body: str | bytes) -> list[str]:
    """Markup-free, accent-folded, non-blank lines."""
    if isinstance(body, bytes):
        body = body.decode("utf-8", "ignore")
    if not body:
        return []
    text = _TABLE_RE.sub("\n", body)
    text = _BLOCK_RE.sub("\n", text)
    text = _TAG_RE.sub("", text)
    text = fold_text(html.unescape(text))
    out = []
    for ln in text.split("\n"):
        ln = _SPACE_RE.sub(" ", ln).strip()
        if ln:
            out.append(ln)
    return out


def clean_html(body: str | bytes, head: int = HEAD_TRIM, tail: int = TAIL_TRIM) -> list[str]:
    """Clean a proxy statement and drop the first ``head`` and last ``tail`` lines."""
    lines = clean_lines(body)
    if head + tail >= len(lines):
        return []
    return lines[head : len(lines) - tail]


# --- proposal segmentation -------------------------------------------------


@dataclass
class LineScoreWeights:
    uppercase: float = 2.0
    marker: float = 1.0
    overlap: float = 3.0
    short_line: float = 1.0
    item_number: float = 3.0
    floor: float = 2.0
    short_len: int = 80


_MARKERS = [re.compile(p, re.I) for p in (r"\bproposal\b", r"\bnumber\b", r"\bno\.", r"\bitem\b")]
_ALPHA_RE = re.compile(r"[a-z]+")
_NUM_RE = re.compile(r"\d+")


def score_proposal_line(line: str, description: str, item_number: int | None, weights: LineScoreWeights | None = None) -> float:
    """Heuristic score that ``line`` opens the proposal described by ``description``."""
    w = weights or LineScoreWeights()
    if not line or not line.strip():
        return 0.0
    score = 0.0
    letters = [c for c in line if c.isalpha()]
    if letters and all(c.isupper() for c in letters):
        score += w.uppercase
    score += w.marker * sum(1 for m in _MARKERS if m.search(line))
    words = set(_ALPHA_RE.findall(line.lower()))
    desc = set(_ALPHA_RE.findall(description.lower()))
    if words and desc:
        score += w.overlap * len(words & desc) / len(words | desc)
    if len(line) < w.short_len:
        score += w.short_line
    if item_number is not None and str(item_number) in _NUM_RE.findall(line):
        score += w.item_number
    return score


@dataclass
class IssRow:
    description: str
    item_number: int | None
    nominees: tuple[str, ...] = ()


@dataclass
class ProposalText:
    proposal_id: str
    description: str
    item_number: int | None
    meeting_date: dt.date | None
    body: str
    word_count: int

    def to_json(self) -> str:
        d = asdict(self)
        d["meeting_date"] = self.meeting_date.isoformat() if self.meeting_date else None
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "ProposalText":
        d = json.loads(line)
        md = d.get("meeting_date")
        d["meeting_date"] = dt.date.fromisoformat(md) if md else None
        return cls(**d)


class Segments(list):
    """Segmented proposals; ``unmatched`` lists the ISS rows with no confident start line."""

    def __init__(self, items=(), unmatched=()):
        super().__init__(items)
        self.unmatched = list(unmatched)


def is_director_row(description: str) -> bool:
    d = description.lower()
    return d.startswith("elect director") or d.startswith("elect directors")


def merge_director_rows(rows: Sequence[IssRow]) -> list[IssRow]:
    """Collapse individual director-election rows into one search target."""
    out: list[IssRow] = []
    merged: IssRow | None = None
    for r in rows:
        if is_director_row(r.description):
            if merged is None:
                merged = IssRow("Elect Directors", r.item_number, tuple(r.nominees))
                out.append(merged)
            else:
                merged.nominees = merged.nominees + tuple(r.nominees)
        else:
            out.append(r)
    return out


def _best_start(doc: Sequence[str], row: IssRow, lo: int, weights: LineScoreWeights):
    best, best_j = -1.0, -1
    for j in range(lo, len(doc)):
        s = score_proposal_line(doc[j], row.description, row.item_number, weights)
        if j + 1 < len(doc):
            s = max(s, score_proposal_line(doc[j] + " " + doc[j + 1], row.description, row.item_number, weights))
        if s > best:
            best, best_j = s, j
    return best_j, best


def segment_proposals(
    doc: Sequence[str],
    iss_rows: Sequence[IssRow],
    cik: int | str = 0,
    meeting_date: dt.date | None = None,
    weights: LineScoreWeights | None = None,
    min_words: int = MIN_PROPOSAL_WORDS,
) -> Segments:
    """Cut a cleaned DEF 14A into one text segment per ISS proposal row.

    Rows are searched in order; each search starts five lines after the
    previous start. A segment runs to two lines before the next start; the
    last one to the line before "The Board of Directors recommends" (looked
    for from five lines after its start) or fifty lines past its start.
    """
    weights = weights or LineScoreWeights()
    starts: list[tuple[IssRow, int]] = []
    unmatched: list[IssRow] = []
    lo = 0
    for row in iss_rows:
        j, s = _best_start(doc, row, lo, weights)
        if j < 0 or s < weights.floor:
            log.info("no line scores above %.2f for %r", weights.floor, row.description)
            unmatched.append(row)
            continue
        starts.append((row, j))
        lo = j + 5

    out = Segments(unmatched=unmatched)
    for k, (row, start) in enumerate(starts):
        if k + 1 < len(starts):
            end = starts[k + 1][1] - 2
        else:
            end = min(start + 50, len(doc) - 1)
            for t in range(start + 5, len(doc)):
                if RECOMMEND_CUE in doc[t].lower():
                    end = t - 1
                    break
        lines = list(doc[start : end + 1])
        if row.nominees and lines:
            names = [n.lower() for n in row.nominees]
            lines = [lines[0]] + [ln for ln in lines[1:] if any(nm in ln.lower() for nm in names)]
        body = "\n".join(lines)
        n_words = len(body.split())
        if n_words <= min_words:
            log.info("dropping %r: %d words", row.description, n_words)
            continue
        date_key = meeting_date.isoformat() if meeting_date else ""
        out.append(ProposalText(f"{cik}-{date_key}-{row.item_number}", row.description, row.item_number, meeting_date, body, n_words))
    return out


# --- activist messages -----------------------------------------------------


@dataclass
class Cue:
    begin: str
    end: str


def load_cues(path=None) -> list[Cue]:
    lines = _data_lines("message_cues.tsv") if path is None else [
        ln for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.startswith("#")
    ]
    cues = []
    for ln in lines:
        begin, end = ln.split("\t")
        cues.append(Cue(begin.strip(), end.strip()))
    return cues


_SUFFIX_RE = re.compile(r"[\s,]+(?:l\.?l\.?c|l\.?p|inc|corp(?:oration)?|co|ltd|plc|n\.?a|lp|llc|/[a-z]+/?)\.?$", re.I)


def _name_regex(name: str) -> str:
    name = name.strip()
    while True:
        trimmed = _SUFFIX_RE.sub("", name)
        if trimmed == name:
            break
        name = trimmed
    words = re.findall(r"[A-Za-z0-9]+", name)
    if not words:
        return r"(?!x)x"
    return r"[\W_]+".join(re.escape(w) for w in words)


def _literal_regex(text: str) -> str:
    parts = []
    for tok in re.split(r"(\{ACTIVIST\}|\{TARGET\})", text):
        if tok in ("{ACTIVIST}", "{TARGET}"):
            parts.append(tok)
            continue
        words = re.findall(r"[A-Za-z0-9]+", tok)
        pieces = []
        for w in words:
            if len(w) > 2 and w.lower().endswith("s"):
                pieces.append(re.escape(w[:-1]) + r"['’]?s")
            elif w.isalpha():
                pieces.append(re.escape(w) + r"(?:['’]?s)?")
            else:
                pieces.append(re.escape(w))
        if pieces:
            parts.append(r"[\W_]+".join(pieces))
    out = ""
    for p in parts:
        if out:
            out += r"[\W_]+"
        out += p
    return r"\b" + out + r"\b"


def compile_cue(pattern: str, activist: str = "", target: str = "") -> re.Pattern | None:
    if pattern.startswith("re:"):
        rx = pattern[3:]
    else:
        rx = _literal_regex(pattern)
    if "{ACTIVIST}" in rx:
        if not activist:
            return None
        rx = rx.replace("{ACTIVIST}", _name_regex(activist))
    if "{TARGET}" in rx:
        if not target:
            return None
        rx = rx.replace("{TARGET}", _name_regex(target))
    return re.compile(rx, re.I | re.M)


@dataclass
class Message:
    text: str
    low_confidence: bool = False
    cue_index: int = -1


_EXHIBIT_RE = re.compile(r"\bexhibit\b", re.I)
_EDGE = " \t\r\n,:;-"  # salutation punctuation left around a cue match


def load_screen(path=None) -> list[str]:
    if path is None:
        return [ln.strip().lower() for ln in _data_lines("mna_screen.txt")]
    return [ln.strip().lower() for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.startswith("#")]


def extract_message(
    body: str | bytes,
    activist: str = "",
    target: str = "",
    cues: Sequence[Cue] | None = None,
    screen: Sequence[str] | None = None,
    screen_lines: int = 40,
    exhibit_max_words: int = 100,
) -> Message | None:
    """The activist's message: text between the earliest begin cue and its end cue.

    Returns None for empty filings, bare exhibit references and filings that
    trip the merger/litigation keyword screen.
    """
    lines = clean_lines(body)
    if not lines:
        return None
    text = "\n".join(lines)
    n_words = len(text.split())
    if n_words < exhibit_max_words and _EXHIBIT_RE.search(text):
        return None
    head = "\n".join(lines[:screen_lines]).lower()
    for kw in load_screen() if screen is None else screen:
        if kw in head:
            return None

    cues = load_cues() if cues is None else cues
    best = None
    for k, cue in enumerate(cues):
        rx = compile_cue(cue.begin, activist, target)
        if rx is None:
            continue
        m = rx.search(text)
        if m and (best is None or m.start() < best[1].start()):
            best = (k, m)
    if best is None:
        return None
    k, m = best
    end_rx = compile_cue(cues[k].end, activist, target)
    e = end_rx.search(text, m.end()) if end_rx is not None else None
    if e is None:
        return Message(text[m.end() :].strip(_EDGE), low_confidence=True, cue_index=k)
    return Message(text[m.end() : e.start()].strip(_EDGE), low_confidence=False, cue_index=k)


# --- campaigns -------------------------------------------------------------


@dataclass
class Campaign:
    campaign_id: str
    activist_cik: int
    target_cik: int
    filings: list[str]
    filing_dates: list[dt.date]
    start_date: dt.date
    end_date: dt.date
    messages: list[str] = field(default_factory=list)
    activist_name: str = ""
    target_name: str = ""

    @property
    def message_text(self) -> str:
        return "\n\n".join(m for m in self.messages if m)

    def to_json(self) -> str:
        d = {
            "campaign_id": self.campaign_id,
            "activist_cik": self.activist_cik,
            "target_cik": self.target_cik,
            "activist_name": self.activist_name,
            "target_name": self.target_name,
            "filings": self.filings,
            "filing_dates": [x.isoformat() for x in self.filing_dates],
            "start_date": self.start_date.isoformat(),
            "end_date": self.end_date.isoformat(),
            "messages": self.messages,
            "message_text": self.message_text,
        }
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "Campaign":
        d = json.loads(line)
        return cls(
            campaign_id=d["campaign_id"],
            activist_cik=int(d["activist_cik"]),
            target_cik=int(d["target_cik"]),
            filings=list(d["filings"]),
            filing_dates=[dt.date.fromisoformat(x) for x in d["filing_dates"]],
            start_date=dt.date.fromisoformat(d["start_date"]),
            end_date=dt.date.fromisoformat(d["end_date"]),
            messages=list(d.get("messages", [])),
            activist_name=d.get("activist_name", ""),
            target_name=d.get("target_name", ""),
        )


def _make_campaign(filer: int, subject: int, run: list[tuple[FilingRecord, str]]) -> Campaign:
    dates = [f.date_filed for f, _ in run]
    return Campaign(
        campaign_id=f"{filer}-{subject}-{dates[0]:%Y%m%d}",
        activist_cik=filer,
        target_cik=subject,
        filings=[f.accession for f, _ in run],
        filing_dates=dates,
        start_date=dates[0],
        end_date=dates[-1],
        messages=[m for _, m in run],
        activist_name=run[0][0].filer_name,
        target_name=run[0][0].subject_name,
    )


def bunch_campaigns(
    filings: Iterable[FilingRecord],
    messages: dict[str, str] | None = None,
    max_gap_days: int = 180,
    merge_pairs: Iterable[tuple[int, int]] = (),
) -> list[Campaign]:
    """Group filings per (filer, subject) into runs with consecutive gaps <= max_gap_days.

    ``merge_pairs`` lists activist/target pairs that form one campaign
    regardless of gaps. ``messages`` maps accession to extracted message text.
    """
    messages = messages or {}
    forced = set(merge_pairs)
    groups: dict[tuple[int, int], list[FilingRecord]] = {}
    for f in filings:
        groups.setdefault((f.filer_cik, f.subject_cik), []).append(f)
    out = []
    for (filer, subject) in sorted(groups):
        fs = sorted(groups[(filer, subject)], key=lambda f: (f.date_filed, f.accession))
        run = [(fs[0], messages.get(fs[0].accession, ""))]
        for prev, cur in zip(fs, fs[1:]):
            gap = (cur.date_filed - prev.date_filed).days
            if gap > max_gap_days and (filer, subject) not in forced:
                out.append(_make_campaign(filer, subject, run))
                run = []
            run.append((cur, messages.get(cur.accession, "")))
        out.append(_make_campaign(filer, subject, run))
    out.sort(key=lambda c: (c.start_date, c.campaign_id))
    return out


def split_campaign_at_event(campaign: Campaign, event_date: dt.date) -> tuple[Campaign, Campaign]:
    """Split filings into those before ``event_date`` and those on/after it."""
    if not campaign.start_date < event_date < campaign.end_date:
        raise ValueError(
            f"event {event_date} not strictly inside campaign window {campaign.start_date}..{campaign.end_date}"
        )
    halves = []
    for tag, keep in (("pre", lambda d: d < event_date), ("post", lambda d: d >= event_date)):
        idx = [i for i, d in enumerate(campaign.filing_dates) if keep(d)]
        dates = [campaign.filing_dates[i] for i in idx]
        msgs = [campaign.messages[i] for i in idx] if campaign.messages else []
        halves.append(
            Campaign(
                campaign_id=f"{campaign.campaign_id}-{tag}",
                activist_cik=campaign.activist_cik,
                target_cik=campaign.target_cik,
                filings=[campaign.filings[i] for i in idx],
                filing_dates=dates,
                start_date=dates[0],
                end_date=dates[-1],
                messages=msgs,
                activist_name=campaign.activist_name,
                target_name=campaign.target_name,
            )
        )
    return halves[0], halves[1]


def body_hash(body: str) -> str:
    norm = " ".join(clean_lines(body)).lower()
    return hashlib.sha256(norm.encode()).hexdigest()


def dedupe_filings(filings: Iterable[FilingRecord]) -> list[FilingRecord]:
    """Drop filings whose normalized body repeats an earlier one (same pair)."""
    seen = set()
    out = []
    for f in sorted(filings, key=lambda f: (f.date_filed, f.accession)):
        key = (f.filer_cik, f.subject_cik, body_hash(f.body))
        if key in seen:
            log.info("duplicate filing %s dropped", f.accession)
            continue
        seen.add(key)
        out.append(f)
    return out


# --- proxy-voting guidelines -----------------------------------------------


@dataclass
class GuidelineDoc:
    institution_id: str
    year: int
    body: str
    flags: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "GuidelineDoc":
        return cls(**json.loads(line))


def _is_heading(line: str) -> bool:
    letters = [c for c in line if c.isalpha()]
    return len(letters) >= 3 and len(line) < 80 and all(c.isupper() for c in letters)


def extract_guidelines(body: str | bytes, institution_id: str = "", year: int = 0, cues: Sequence[str] | None = None) -> GuidelineDoc | None:
    """Section after the first proxy-voting cue, up to the next upper-case heading."""
    lines = clean_lines(body)
    cues = [c.lower() for c in (cues or _data_lines("guideline_cues.txt"))]
    hits = [i for i, ln in enumerate(lines) if any(c in ln.lower() for c in cues)]
    if not hits:
        return None
    first = hits[0]
    flags = []
    if len(hits) > 1:
        flags.append("multiple_cues")
    cue_line = lines[first]
    low = cue_line.lower()
    pos = min(low.index(c) + len(c) for c in cues if c in low)
    section = []
    rest = cue_line[pos:].strip(" .:-")
    if rest:
        section.append(rest)
    for ln in lines[first + 1 :]:
        if _is_heading(ln) and not any(c in ln.lower() for c in cues):
            break
        section.append(ln)
    text = "\n".join(section).strip()
    if not text:
        return None
    return GuidelineDoc(institution_id, year, text, flags)


def read_jsonl(path, cls):
    with open(path) as fh:
        return [cls.from_json(ln) for ln in fh if ln.strip()]


def write_jsonl(path, items) -> None:
    with open(path, "w") as fh:
        for it in items:
            fh.write(it.to_json() + "\n")
