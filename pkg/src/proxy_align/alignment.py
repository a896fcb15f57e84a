"""Campaign x institution alignment panels and campaign-level aggregates."""

from __future__ import annotations

import csv
import datetime as dt
import logging
import re
from bisect import bisect_right
from collections import defaultdict
from dataclasses import asdict, dataclass, fields
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .filing_parser import Campaign, split_campaign_at_event
from .preference_model import InstitutionModel, VoteRecord, make_label, predict_align, years_before
from .text_features import Vocabulary, normalize, vectorize

log = logging.getLogger(__name__)

OWN_DUM_CUTOFF = 0.143
INTERACTION_THRESHOLD = 0.01


# --- holdings ----------------------------------------------------------------


@dataclass(frozen=True)
class HoldingRecord:
    institution_id: str
    target_cik: int
    as_of: dt.date
    frac_mcap: float

    def __post_init__(self):
        if not 0.0 <= self.frac_mcap <= 1.0:
            raise ValueError(f"frac_mcap {self.frac_mcap} outside [0, 1]")


def aggregate_holdings(
    fund_positions: Iterable[tuple[str, str, float]],
    market_cap: float | None,
    target_cik: int = 0,
    as_of: dt.date | None = None,
    book_equity: float | None = None,
    institutions: Iterable[str] = (),
) -> list[HoldingRecord]:
    """Sum non-negative fund position values per institution over the target's size.

    ``fund_positions`` rows are (fund_id, institution_id, position_value).
    When ``market_cap`` is missing, ``book_equity`` stands in. Institutions
    listed in ``institutions`` without positions get explicit zero records.
    """
    size = market_cap if market_cap is not None else book_equity
    if size is None or not size > 0:
        raise ValueError(f"target size must be positive, got {size!r}")
    totals: dict[str, float] = defaultdict(float)
    for inst in institutions:
        totals[inst] += 0.0
    for _fund, inst, value in fund_positions:
        totals[inst] += max(float(value), 0.0)
    as_of = as_of or dt.date.min
    return [HoldingRecord(inst, int(target_cik), as_of, min(v / size, 1.0)) for inst, v in sorted(totals.items())]


def read_holdings(path) -> list[HoldingRecord]:
    with open(path, newline="") as fh:
        return [
            HoldingRecord(r["institution_id"], int(r["target_cik"]), dt.date.fromisoformat(r["as_of"]), float(r["frac_mcap"]))
            for r in csv.DictReader(fh)
        ]


def write_holdings(path, records: Iterable[HoldingRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["institution_id", "target_cik", "as_of", "frac_mcap"])
        for r in records:
            w.writerow([r.institution_id, r.target_cik, r.as_of.isoformat(), repr(r.frac_mcap)])


def months_before(d: dt.date, months: int) -> dt.date:
    y, m = divmod(d.year * 12 + d.month - 1 - months, 12)
    m += 1
    for day in (d.day, 30, 29, 28):
        try:
            return dt.date(y, m, day)
        except ValueError:
            continue
    raise AssertionError("unreachable")


class HoldingsTable:
    """Point-in-time lookup: the latest report dated on or before a query date."""

    def __init__(self, records: Iterable[HoldingRecord]):
        series: dict[tuple[str, int], list[tuple[dt.date, float]]] = defaultdict(list)
        for r in records:
            series[(r.institution_id, r.target_cik)].append((r.as_of, r.frac_mcap))
        self._dates = {}
        self._values = {}
        for k, pts in series.items():
            pts.sort()
            self._dates[k] = [d for d, _ in pts]
            self._values[k] = [v for _, v in pts]
        self.institutions = sorted({k[0] for k in series})

    def get(self, institution_id: str, target_cik: int, on: dt.date) -> float:
        key = (institution_id, int(target_cik))
        dates = self._dates.get(key)
        if not dates:
            return 0.0
        j = bisect_right(dates, on)
        return self._values[key][j - 1] if j else 0.0

    def lagged(self, institution_id: str, target_cik: int, on: dt.date, months: int = 6) -> float:
        return self.get(institution_id, target_cik, months_before(on, months))


# --- panel rows --------------------------------------------------------------


@dataclass
class PanelRow:
    campaign_id: str
    institution_id: str
    align: float
    holding: float = 0.0
    holding_6m: float = 0.0
    view: int | None = 0
    sup_act: float | None = None
    num_interaction: int = 0
    acquired: int = 0
    post: int = 0
    activist_cik: int = 0
    target_cik: int = 0
    year: int = 0


PANEL_COLUMNS = [f.name for f in fields(PanelRow)]


def write_panel(path, rows: Iterable[PanelRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PANEL_COLUMNS)
        for r in rows:
            d = asdict(r)
            w.writerow(["" if d[c] is None else (repr(d[c]) if isinstance(d[c], float) else d[c]) for c in PANEL_COLUMNS])


def read_panel(path) -> list[PanelRow]:
    out = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            out.append(
                PanelRow(
                    campaign_id=r["campaign_id"],
                    institution_id=r["institution_id"],
                    align=float(r["align"]),
                    holding=float(r["holding"]),
                    holding_6m=float(r["holding_6m"]),
                    view=int(r["view"]) if r["view"] else None,
                    sup_act=float(r["sup_act"]) if r["sup_act"] else None,
                    num_interaction=int(r["num_interaction"]),
                    acquired=int(r["acquired"]),
                    post=int(r["post"]),
                    activist_cik=int(r["activist_cik"]),
                    target_cik=int(r["target_cik"]),
                    year=int(r["year"]),
                )
            )
    return out


def message_vector(campaign: Campaign, vocab: Vocabulary, **normalize_kwargs):
    return vectorize(normalize(campaign.message_text, **normalize_kwargs), vocab, doc_id=campaign.campaign_id)


def compute_align_panel(
    campaign: Campaign,
    models: Mapping[str, InstitutionModel],
    holdings: HoldingsTable,
    vocab: Vocabulary,
    institutions: Iterable[str] | None = None,
    lag_months: int = 6,
) -> list[PanelRow]:
    """One row per institution with a model; uninvested institutions hold 0."""
    x = message_vector(campaign, vocab)
    wanted = sorted(models) if institutions is None else sorted(set(institutions))
    rows = []
    for inst in wanted:
        model = models.get(inst)
        if model is None:
            log.info("%s: no model for institution %s, row omitted", campaign.campaign_id, inst)
            continue
        rows.append(
            PanelRow(
                campaign_id=campaign.campaign_id,
                institution_id=inst,
                align=predict_align(model, x),
                holding=holdings.get(inst, campaign.target_cik, campaign.start_date),
                holding_6m=holdings.lagged(inst, campaign.target_cik, campaign.start_date, lag_months),
                activist_cik=campaign.activist_cik,
                target_cik=campaign.target_cik,
                year=campaign.start_date.year,
            )
        )
    return rows


# --- campaign-level aggregates -----------------------------------------------


@dataclass
class AggregateAlignment:
    campaign_id: str
    ag_align: float
    own_dum: int
    total_mf_ownership: float
    win: int | None = None


def ag_align(rows: Sequence[PanelRow], cutoff: float = OWN_DUM_CUTOFF, allow_absent: bool = False) -> AggregateAlignment | None:
    """Holdings-weighted mean alignment and the ownership dummy.

    The weighted mean is evaluated in exact rational arithmetic and rounded
    once, so it is the correctly rounded value of the float inputs.
    """
    if not rows:
        raise ValueError("ag_align needs at least one row")
    ids = {r.campaign_id for r in rows}
    if len(ids) != 1:
        raise ValueError(f"rows span several campaigns: {sorted(ids)[:3]}")
    total = sum((Fraction(r.holding) for r in rows), Fraction(0))
    if total <= 0:
        if allow_absent:
            return None
        raise ValueError(f"campaign {rows[0].campaign_id}: no institution holds the target")
    num = sum((Fraction(r.align) * Fraction(r.holding) for r in rows), Fraction(0))
    tot = float(total)
    return AggregateAlignment(rows[0].campaign_id, float(num / total), int(tot > cutoff), tot)


def aggregate_panel(rows: Iterable[PanelRow], cutoff: float = OWN_DUM_CUTOFF, wins: Mapping[str, int] | None = None):
    by_campaign: dict[str, list[PanelRow]] = defaultdict(list)
    for r in rows:
        by_campaign[r.campaign_id].append(r)
    out = []
    for cid in sorted(by_campaign):
        agg = ag_align(by_campaign[cid], cutoff, allow_absent=True)
        if agg is None:
            continue
        if wins is not None:
            agg.win = wins.get(cid)
        out.append(agg)
    return out


def num_interaction(
    campaigns: Sequence[Campaign],
    holdings: HoldingsTable,
    institutions: Iterable[str] | None = None,
    threshold: float = INTERACTION_THRESHOLD,
) -> dict[tuple[str, str], int]:
    """(campaign_id, institution_id) -> number of earlier campaigns by the same
    activist in which the institution held more than ``threshold`` of the target."""
    insts = sorted(institutions) if institutions is not None else holdings.institutions
    by_activist: dict[int, list[Campaign]] = defaultdict(list)
    for c in campaigns:
        by_activist[c.activist_cik].append(c)
    out = {}
    for act in sorted(by_activist):
        seq = sorted(by_activist[act], key=lambda c: (c.start_date, c.campaign_id))
        counts = dict.fromkeys(insts, 0)
        for c in seq:
            for i in insts:
                out[(c.campaign_id, i)] = counts[i]
            for i in insts:
                if holdings.get(i, c.target_cik, c.start_date) > threshold:
                    counts[i] += 1
    return out


# --- realized support --------------------------------------------------------


@dataclass(frozen=True)
class MeetingProposal:
    proposal_id: str
    description: str
    sponsor: str = "shareholder"  # or "management"


@dataclass(frozen=True)
class Meeting:
    target_cik: int
    meeting_date: dt.date
    proposals: tuple[MeetingProposal, ...]


def _activist_items(m: Meeting) -> list[MeetingProposal]:
    return [
        p for p in m.proposals if p.sponsor.lower().startswith("share") and "management nominee" not in p.description.lower()
    ]


def select_sup_act_meeting(
    campaign: Campaign, meetings: Iterable[Meeting], before_end_days: int = 30, after_end_days: int = 365
) -> Meeting | None:
    """Earliest qualifying meeting on or after the campaign start."""
    lo = campaign.end_date - dt.timedelta(days=before_end_days)
    hi = campaign.end_date + dt.timedelta(days=after_end_days)
    ok = [
        m
        for m in meetings
        if m.target_cik == campaign.target_cik
        and lo <= m.meeting_date <= hi
        and m.meeting_date >= campaign.start_date
        and _activist_items(m)
    ]
    return min(ok, key=lambda m: m.meeting_date) if ok else None


def sup_act(
    campaign: Campaign,
    meetings: Iterable[Meeting],
    votes: Iterable[VoteRecord],
    before_end_days: int = 30,
    after_end_days: int = 365,
) -> dict[str, float]:
    """Per institution: share of (fund, proposal) votes not following management
    on the activist items of the first qualifying meeting. Empty when none qualifies."""
    m = select_sup_act_meeting(campaign, meetings, before_end_days, after_end_days)
    if m is None:
        return {}
    keep = {p.proposal_id for p in _activist_items(m)}
    hits: dict[str, list[int]] = defaultdict(lambda: [0, 0])
    for v in votes:
        if v.proposal_id in keep:
            h = hits[v.institution_id]
            h[0] += int(v.against_mgmt)
            h[1] += 1
    return {i: a / n for i, (a, n) in sorted(hits.items()) if n}


# --- proposal types ------------------------------------------------------------


def _norm_desc(s: str) -> str:
    s = s.lower().replace("–", "-").replace("—", "-")
    s = re.sub(r"\(inactive\)", " ", s)
    s = re.sub(r"\s*-\s*", " - ", s)
    s = re.sub(r"\s+", " ", s).strip()
    return s.rstrip(". ").strip()


class TypeTable:
    def __init__(self, rows: Iterable[tuple[str, int]]):
        self.exact: dict[str, int] = {}
        for pat, tid in rows:
            self.exact.setdefault(_norm_desc(pat), int(tid))
        self._by_len = sorted(self.exact, key=len, reverse=True)

    @classmethod
    def load(cls, path=None) -> "TypeTable":
        if path is None:
            text = resources.files("proxy_align").joinpath("data/proposal_types.tsv").read_text()
        else:
            text = Path(path).read_text()
        rows = []
        for ln in text.splitlines():
            if not ln.strip() or ln.startswith("#"):
                continue
            pat, tid = ln.rsplit("\t", 1)
            rows.append((pat, int(tid)))
        return cls(rows)

    def classify(self, description: str) -> int | None:
        d = _norm_desc(description)
        if not d:
            return None
        if d in self.exact:
            return self.exact[d]
        for pat in self._by_len:
            if d.startswith(pat):
                return self.exact[pat]
        # truncated description: accept only when every candidate agrees
        cands = {self.exact[p] for p in self._by_len if p.startswith(d)}
        if len(d) >= 12 and len(cands) == 1:
            return cands.pop()
        return None


_DEFAULT_TABLE: TypeTable | None = None


def classify_proposal_type(description: str, type_table: TypeTable | None = None) -> int | None:
    global _DEFAULT_TABLE
    if type_table is None:
        if _DEFAULT_TABLE is None:
            _DEFAULT_TABLE = TypeTable.load()
        type_table = _DEFAULT_TABLE
    return type_table.classify(description)


def type_based_align(
    campaign: Campaign,
    fight_descriptions: Sequence[str],
    votes: Iterable[VoteRecord],
    window_years: int = 2,
    type_table: TypeTable | None = None,
) -> dict[str, float]:
    """Historical against-management rate on same-type proposals.

    For each classified fight proposal, an institution's rate is the mean
    per-proposal label over its same-type proposals from the window before
    the campaign start. Rates are averaged over fight proposals that have
    history; institutions with none are absent.
    """
    fight_types = [classify_proposal_type(d, type_table) for d in fight_descriptions]
    fight_types = [t for t in fight_types if t is not None]
    if not fight_types:
        return {}
    lo = years_before(campaign.start_date, window_years)
    grouped: dict[tuple[str, str], list[VoteRecord]] = defaultdict(list)
    ptype: dict[str, int | None] = {}
    for v in votes:
        if not lo <= v.meeting_date < campaign.start_date:
            continue
        if v.proposal_id not in ptype:
            ptype[v.proposal_id] = classify_proposal_type(v.description, type_table)
        if ptype[v.proposal_id] in fight_types:
            grouped[(v.institution_id, v.proposal_id)].append(v)
    per_type: dict[str, dict[int, list[float]]] = defaultdict(lambda: defaultdict(list))
    for (inst, pid), recs in grouped.items():
        per_type[inst][ptype[pid]].append(make_label(recs))
    out = {}
    for inst in sorted(per_type):
        rates = [sum(v) / len(v) for t in fight_types if (v := per_type[inst].get(t))]
        if rates:
            out[inst] = sum(rates) / len(rates)
    return out


# --- event split and guideline panel -------------------------------------------


def event_split_panel(
    campaign: Campaign,
    event_date: dt.date,
    acquirers: Iterable[str],
    models: Mapping[str, InstitutionModel],
    holdings: HoldingsTable,
    vocab: Vocabulary,
) -> list[PanelRow]:
    """Rows for the pre- and post-event halves of a campaign.

    ``acquired`` marks institutions that bought another institution holding
    the target; ``post`` marks rows of the post-event half.
    """
    acq = set(acquirers)
    pre, post = split_campaign_at_event(campaign, event_date)
    rows = []
    for half, flag in ((pre, 0), (post, 1)):
        for r in compute_align_panel(half, models, holdings, vocab):
            r.acquired = int(r.institution_id in acq)
            r.post = flag
            rows.append(r)
    return rows


def guideline_panel(
    counts: Mapping[tuple[str, int], Mapping[str, int]],
    models: Mapping[tuple[str, int], InstitutionModel],
    phrases: Sequence[str],
    present_only: bool = False,
) -> list[dict]:
    """Phrase-level rows pairing guideline counts in year t with the absolute
    coefficient (x 10,000) of the model estimated at the end of year t + 1.

    ``counts`` maps (institution, t) to phrase counts; ``models`` maps
    (institution, year) to the model whose window ends in that year.
    """
    seen: dict[str, set[str]] = defaultdict(set)
    for (inst, _t), c in counts.items():
        seen[inst].update(p for p, n in c.items() if n > 0)
    rows = []
    for (inst, t) in sorted(counts):
        model = models.get((inst, t + 1))
        if model is None:
            continue
        if len(phrases) != model.K:
            raise ValueError(f"{len(phrases)} phrases for a model with K={model.K}")
        c = counts[(inst, t)]
        for k, p in enumerate(phrases):
            if present_only and p not in seen[inst]:
                continue
            rows.append(
                {
                    "institution_id": inst,
                    "year": t,
                    "inst_year": f"{inst}:{t}",
                    "phrase": p,
                    "count": int(c.get(p, 0)),
                    "abs_beta": abs(float(model.beta[k])) * 10_000.0,
                }
            )
    return rows
