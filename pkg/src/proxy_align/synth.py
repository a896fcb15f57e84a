"""Seeded synthetic data with planted ground truth.

Everything is drawn from counter-based Philox streams keyed by
``(seed, stream_id)``, so each component can be regenerated on its own and
reruns are byte-identical. Outputs use the same file formats the pipeline
reads from real sources.
"""

from __future__ import annotations

import csv
import datetime as dt
import gzip
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .alignment import HoldingRecord, HoldingsTable, PanelRow, ag_align, months_before, write_holdings, write_panel
from .attention import DERA_COLUMNS
from .filing_parser import Campaign, ProposalText, write_jsonl
from .preference_model import VoteRecord, write_votes
from .text_features import _stemmer, load_stopwords

log = logging.getLogger(__name__)

STREAMS = {"words": 0, "corpus": 1, "weights": 2, "votes": 3, "campaigns": 4, "holdings": 5, "panel": 6, "win": 7, "logs": 8}

_CONS = "bdfgklmnprtvz"
_VOWS = "aiou"


@dataclass
class SynthConfig:
    seed: int = 0
    n_institutions: int = 10
    n_proposals: int = 200
    n_campaigns: int = 200
    vocab_size: int = 240
    n_topics: int = 12
    n_background: int = 60
    n_funds: int = 50
    noise_sd: float = 0.1
    planted_beta_holding: float = 0.005
    planted_interaction: float = 0.08
    panel_noise_sd: float = 0.05
    key_words: int = 5
    liked_topics: int = 3
    disliked_topics: int = 3
    topic_effect: float = 0.45
    hold_prob: float = 0.3
    hold_median: float = 0.04
    tilt_prob: float = 0.7
    win_base: float = 0.05
    win_gamma: float = 0.04
    win_lambda: float = -0.4
    view_rate: float = 2.0

    def __post_init__(self):
        for name in ("n_institutions", "n_proposals", "n_campaigns", "vocab_size", "n_topics", "n_funds"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.noise_sd < 0 or self.panel_noise_sd < 0:
            raise ValueError("noise standard deviations must be non-negative")
        if self.vocab_size - self.n_background < self.n_topics * self.key_words:
            raise ValueError("vocab_size too small for the topic layout")


def stream(seed: int, stream_id: int | str) -> np.random.Generator:
    """Independent generator for one named component."""
    sid = STREAMS[stream_id] if isinstance(stream_id, str) else int(stream_id)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(sid,))))


# --- corpus ------------------------------------------------------------------


def make_words(cfg: SynthConfig) -> list[str]:
    """Pronounceable tokens that survive normalization unchanged."""
    rng = stream(cfg.seed, "words")
    stem = _stemmer("porter")
    stop = load_stopwords()
    seen, out = set(), []
    while len(out) < cfg.vocab_size:
        c = rng.integers(0, len(_CONS), 3)
        v = rng.integers(0, len(_VOWS), 2)
        w = _CONS[c[0]] + _VOWS[v[0]] + _CONS[c[1]] + _VOWS[v[1]] + _CONS[c[2]]
        if w in seen or w in stop or stem.stemWord(w) != w:
            continue
        seen.add(w)
        out.append(w)
    return out


@dataclass
class Corpus:
    words: list[str]
    topics: list[list[int]]  # word indices per topic
    background: list[int]
    proposals: list[ProposalText]
    tokens: list[list[int]]  # word indices per proposal
    main_topic: list[int]

    def topic_of_word(self) -> dict[int, int]:
        return {w: k for k, ws in enumerate(self.topics) for w in ws}


def _layout(cfg: SynthConfig):
    n_topic_words = cfg.vocab_size - cfg.n_background
    per = n_topic_words // cfg.n_topics
    topics = [list(range(k * per, (k + 1) * per)) for k in range(cfg.n_topics)]
    background = list(range(cfg.n_topics * per, cfg.vocab_size))
    return topics, background


def _render(words: list[str], idx: list[int], rng) -> str:
    toks = [words[i] for i in idx]
    sentences, i = [], 0
    while i < len(toks):
        k = int(rng.integers(8, 16))
        chunk = toks[i : i + k]
        chunk[0] = chunk[0].capitalize()
        sentences.append(" ".join(chunk) + ".")
        i += k
    return " ".join(sentences)


def _draw_doc(rng, topics, background, main: int, second: int | None, length: int, bg_share: float = 0.3) -> list[int]:
    n_bg = int(round(bg_share * length))
    n_top = length - n_bg
    n_sec = int(round(0.2 * n_top)) if second is not None else 0
    idx = list(rng.choice(topics[main], n_top - n_sec))
    if n_sec:
        idx += list(rng.choice(topics[second], n_sec))
    if background and n_bg:
        idx += list(rng.choice(background, n_bg))
    idx = [int(i) for i in idx]
    rng.shuffle(idx)
    return idx


def gen_corpus(cfg: SynthConfig) -> Corpus:
    words = make_words(cfg)
    topics, background = _layout(cfg)
    rng = stream(cfg.seed, "corpus")
    start = dt.date(2011, 7, 1)
    proposals, toks, mains = [], [], []
    for s in range(cfg.n_proposals):
        main = int(rng.integers(0, cfg.n_topics))
        second = int(rng.integers(0, cfg.n_topics)) if rng.random() < 0.3 else None
        idx = _draw_doc(rng, topics, background, main, second, int(rng.integers(60, 121)))
        md = start + dt.timedelta(days=int(rng.integers(0, 549)))
        body = _render(words, idx, rng)
        proposals.append(
            ProposalText(
                proposal_id=f"P{s:05d}",
                description=f"Shareholder Proposal on Topic {main + 1}",
                item_number=4 + s % 3,
                meeting_date=md,
                body=body,
                word_count=len(idx),
            )
        )
        toks.append(idx)
        mains.append(main)
    return Corpus(words, topics, background, proposals, toks, mains)


# --- preferences and votes -----------------------------------------------------


@dataclass
class Preferences:
    institutions: list[str]
    alpha: np.ndarray  # (n_inst,)
    weights: np.ndarray  # (n_inst, vocab_size) planted w*
    liked: list[list[int]]
    disliked: list[list[int]]


def institution_ids(cfg: SynthConfig) -> list[str]:
    return [f"INST{i:03d}" for i in range(cfg.n_institutions)]


def gen_preferences(cfg: SynthConfig, corpus: Corpus) -> Preferences:
    rng = stream(cfg.seed, "weights")
    insts = institution_ids(cfg)
    per = len(corpus.topics[0])
    # expected key-word count in a document whose main topic carries the keys
    expected = 0.7 * 90 * 0.9 * cfg.key_words / per
    amp = cfg.topic_effect / expected
    W = np.zeros((len(insts), cfg.vocab_size))
    alpha = rng.uniform(0.35, 0.65, len(insts))
    liked, disliked = [], []
    for i in range(len(insts)):
        order = rng.permutation(cfg.n_topics)
        lk = sorted(int(k) for k in order[: cfg.liked_topics])
        dk = sorted(int(k) for k in order[cfg.liked_topics : cfg.liked_topics + cfg.disliked_topics])
        for k, sign in [(k, 1.0) for k in lk] + [(k, -1.0) for k in dk]:
            keys = rng.choice(corpus.topics[k], cfg.key_words, replace=False)
            W[i, keys] = sign * amp
        liked.append(lk)
        disliked.append(dk)
    return Preferences(insts, alpha, W, liked, disliked)


def label_means(cfg: SynthConfig, corpus: Corpus, prefs: Preferences, noise: bool = True) -> np.ndarray:
    """(n_inst, n_proposals) intended against-management fractions."""
    X = np.zeros((cfg.n_proposals, cfg.vocab_size))
    for s, idx in enumerate(corpus.tokens):
        np.add.at(X[s], idx, 1.0)
    score = prefs.alpha[:, None] + prefs.weights @ X.T
    if noise and cfg.noise_sd > 0:
        rng = stream(cfg.seed, "votes")
        score = score + rng.normal(0.0, cfg.noise_sd, score.shape)
    return np.clip(score, 0.0, 1.0)


def gen_votes(cfg: SynthConfig, corpus: Corpus, prefs: Preferences, means: np.ndarray | None = None) -> list[VoteRecord]:
    """Fund-level votes whose institution mean is ``means``.

    Management recommends against every proposal; a fund that departs from
    management votes for (mostly) or abstains.
    """
    if means is None:
        means = label_means(cfg, corpus, prefs)
    rng = stream(cfg.seed + 1_000_003, "votes")
    out = []
    for i, inst in enumerate(prefs.institutions):
        against = rng.random((cfg.n_proposals, cfg.n_funds)) < means[i][:, None]
        abstain = rng.random((cfg.n_proposals, cfg.n_funds)) < 0.1
        for s, p in enumerate(corpus.proposals):
            for f in range(cfg.n_funds):
                cast = ("abstain" if abstain[s, f] else "for") if against[s, f] else "against"
                out.append(VoteRecord(inst, f"{inst}-F{f:03d}", p.proposal_id, p.meeting_date, "against", cast, p.description))
    return out


# --- campaigns, holdings, panel ------------------------------------------------


@dataclass
class World:
    cfg: SynthConfig
    corpus: Corpus
    prefs: Preferences
    campaigns: list[Campaign]
    holdings: list[HoldingRecord]
    tilt: dict[str, str | None]
    panel: list[PanelRow] = field(default_factory=list)
    wins: dict[str, int] = field(default_factory=dict)
    campaign_truth: list[dict] = field(default_factory=list)


def _campaign_skeletons(cfg: SynthConfig, rng):
    n_act = max(1, cfg.n_campaigns // 4)
    out = []
    for p in range(cfg.n_campaigns):
        act = 1_000_001 + int(rng.integers(0, n_act))
        tgt = 2_000_001 + p
        start = dt.date(2013, 1, 2) + dt.timedelta(days=int(rng.integers(0, 180)))
        n_f = int(rng.integers(1, 6))
        dates = [start]
        for _ in range(n_f - 1):
            dates.append(dates[-1] + dt.timedelta(days=int(rng.integers(5, 61))))
        out.append((act, tgt, dates))
    return out


def gen_holdings(cfg: SynthConfig, skeletons, insts) -> list[HoldingRecord]:
    rng = stream(cfg.seed, "holdings")
    recs = []
    for act, tgt, dates in skeletons:
        start = dates[0]
        cur_date = start - dt.timedelta(days=15)
        lag_date = months_before(start, 6) - dt.timedelta(days=15)
        for inst in insts:
            held = rng.random() < cfg.hold_prob
            h = min(float(cfg.hold_median * rng.lognormal(0.0, 0.6)), 0.5) if held else 0.0
            lag_held = held if rng.random() < 0.9 else not held
            h6 = min(h * float(rng.uniform(0.7, 1.3)), 0.5) if held and lag_held else (
                min(float(cfg.hold_median * rng.lognormal(0.0, 0.6)), 0.5) if lag_held and not held else 0.0
            )
            if h6 > 0:
                recs.append(HoldingRecord(inst, tgt, lag_date, h6))
            if h > 0:
                recs.append(HoldingRecord(inst, tgt, cur_date, h))
            elif h6 > 0:
                recs.append(HoldingRecord(inst, tgt, cur_date, 0.0))
    recs.sort(key=lambda r: (r.target_cik, r.institution_id, r.as_of))
    return recs


def gen_campaigns(cfg: SynthConfig, corpus: Corpus, prefs: Preferences):
    """Campaigns whose messages lean toward the largest holder's liked topics."""
    rng = stream(cfg.seed, "campaigns")
    skeletons = _campaign_skeletons(cfg, rng)
    holdings = gen_holdings(cfg, skeletons, prefs.institutions)
    table = HoldingsTable(holdings)
    campaigns, tilt = [], {}
    counter = 0
    for act, tgt, dates in skeletons:
        hs = [table.get(i, tgt, dates[0]) for i in prefs.institutions]
        j = int(np.argmax(hs)) if max(hs) > 0 else None
        tilted = j is not None and rng.random() < cfg.tilt_prob
        accs, msgs = [], []
        for d in dates:
            counter += 1
            accs.append(f"{act:010d}-{d.year % 100:02d}-{counter:06d}")
            if tilted:
                main = int(rng.choice(prefs.liked[j]))
            else:
                main = int(rng.integers(0, cfg.n_topics))
            second = int(rng.integers(0, cfg.n_topics))
            idx = _draw_doc(rng, corpus.topics, corpus.background, main, second, int(rng.integers(60, 121)))
            msgs.append(_render(corpus.words, idx, rng))
        cid = f"{act}-{tgt}-{dates[0]:%Y%m%d}"
        tilt[cid] = prefs.institutions[j] if tilted else None
        campaigns.append(
            Campaign(
                campaign_id=cid,
                activist_cik=act,
                target_cik=tgt,
                filings=accs,
                filing_dates=list(dates),
                start_date=dates[0],
                end_date=dates[-1],
                messages=msgs,
                activist_name=f"Activist {act} Partners LP",
                target_name=f"Target {tgt} Corp",
            )
        )
    return campaigns, holdings, tilt


def gen_panel(cfg: SynthConfig, campaigns: list[Campaign], holdings: list[HoldingRecord], insts: list[str]):
    """Planted panel and campaign outcomes.

    align = fe_campaign + fe_institution + beta * holding / sd(holding) + e,
    with the sample SD (ddof=1) of the panel's holding column, so a
    standardized regression targets ``planted_beta_holding`` exactly. Win
    follows a linear probability model in AgAlign / sd(AgAlign), OwnDum and
    their product.
    """
    rng = stream(cfg.seed, "panel")
    table = HoldingsTable(holdings)
    cells = [(c, i) for c in campaigns for i in insts]
    h = np.array([table.get(i, c.target_cik, c.start_date) for c, i in cells])
    h6 = np.array([table.lagged(i, c.target_cik, c.start_date) for c, i in cells])
    sd_h = h.std(ddof=1) if h.size > 1 and h.std() > 0 else 1.0
    fe_c = dict(zip((c.campaign_id for c in campaigns), rng.uniform(0.3, 0.5, len(campaigns))))
    fe_i = dict(zip(insts, rng.uniform(0.0, 0.2, len(insts))))
    e = np.clip(rng.normal(0.0, cfg.panel_noise_sd, len(cells)), -3.5 * cfg.panel_noise_sd, 3.5 * cfg.panel_noise_sd)
    align = np.array([fe_c[c.campaign_id] + fe_i[i] for c, i in cells]) + cfg.planted_beta_holding * h / sd_h + e
    if align.min() < 0 or align.max() > 1:
        log.warning("planted align leaves [0, 1] (%.3f, %.3f)", align.min(), align.max())
    rows = [
        PanelRow(
            campaign_id=c.campaign_id,
            institution_id=i,
            align=float(a),
            holding=float(hh),
            holding_6m=float(hh6),
            activist_cik=c.activist_cik,
            target_cik=c.target_cik,
            year=c.start_date.year,
        )
        for (c, i), a, hh, hh6 in zip(cells, align, h, h6)
    ]
    by_c: dict[str, list[PanelRow]] = {}
    for r in rows:
        by_c.setdefault(r.campaign_id, []).append(r)
    aggs = [ag_align(by_c[c.campaign_id], allow_absent=True) for c in campaigns]
    aggs = [a for a in aggs if a is not None]
    ag = np.array([a.ag_align for a in aggs])
    sd_ag = ag.std(ddof=1) if ag.size > 1 and ag.std() > 0 else 1.0
    wrng = stream(cfg.seed, "win")
    wins, truth = {}, []
    for a in aggs:
        z = a.ag_align / sd_ag
        p = cfg.win_base + cfg.win_gamma * z + cfg.win_lambda * a.own_dum + cfg.planted_interaction * z * a.own_dum
        pc = min(max(p, 0.0), 1.0)
        w = int(wrng.random() < pc)
        wins[a.campaign_id] = w
        truth.append({"campaign_id": a.campaign_id, "ag_align": a.ag_align, "own_dum": a.own_dum, "win": w, "p_win": p})
    clipped = sum(1 for t in truth if not 0.0 <= t["p_win"] <= 1.0)
    if clipped:
        log.warning("%d win probabilities clipped to [0, 1]", clipped)
    return rows, wins, truth


def build_world(cfg: SynthConfig) -> World:
    corpus = gen_corpus(cfg)
    prefs = gen_preferences(cfg, corpus)
    campaigns, holdings, tilt = gen_campaigns(cfg, corpus, prefs)
    panel, wins, truth = gen_panel(cfg, campaigns, holdings, prefs.institutions)
    return World(cfg, corpus, prefs, campaigns, holdings, tilt, panel, wins, truth)


def panel_frame(rows):
    import pandas as pd

    return pd.DataFrame([asdict(r) for r in rows])


# --- logs ------------------------------------------------------------------------


@dataclass
class LogBundle:
    rows: list[list[str]]
    ip_map: list[tuple[str, str]]
    patterns: list[tuple[str, str]]
    golden: dict[tuple[str, str], int]


def _org_name(inst: str) -> str:
    return f"Synthetic {inst.title()} Asset Management"


def gen_logs(cfg: SynthConfig, campaigns: list[Campaign], insts: list[str], panel: list[PanelRow] | None = None) -> LogBundle:
    """DERA-format rows whose filtered view counts equal ``golden``.

    Each institution owns a /24 block. Extra blocks exercise the plurality
    rule (5 vs 3 addresses) and the tie rule (4 vs 4, dropped). Noise rows
    (icons, XML, index pages, tiny files, out-of-window hits, duplicates,
    a robot day, a tied block) never count.
    """
    rng = stream(cfg.seed, "logs")
    ip_map, patterns = [], []
    blocks = {}
    for n, inst in enumerate(insts):
        b = f"198.{51 + n // 200}.{n % 200 + 1}"
        blocks[inst] = b
        patterns.append((inst, f"(.*{inst.lower()}.*)"))
        for host in range(10, 10 + int(rng.integers(3, 8))):
            ip_map.append((_org_name(inst), f"{b}.{host}"))
    # plurality block owned 5:3 by the first two institutions
    if len(insts) >= 2:
        for host in range(1, 6):
            ip_map.append((_org_name(insts[0]), f"203.0.113.{host}"))
        for host in range(6, 9):
            ip_map.append((_org_name(insts[1]), f"203.0.113.{host}"))
        for host in range(1, 5):
            ip_map.append((_org_name(insts[0]), f"192.0.2.{host}"))
        for host in range(5, 9):
            ip_map.append((_org_name(insts[1]), f"192.0.2.{host}"))
    align = {(r.campaign_id, r.institution_id): r.align for r in (panel or [])}

    rows = []
    golden: dict[tuple[str, str], int] = {}
    used: dict[tuple[str, str, dt.date], list[int]] = {}

    def emit(ip, d, secs, cik, acc, ext="", size=None, idx=0):
        hh, rem = divmod(secs, 3600)
        mm, ss = divmod(rem, 60)
        size = int(rng.integers(2_000, 400_000)) if size is None else size
        rows.append([ip, d.isoformat(), f"{hh:02d}:{mm:02d}:{ss:02d}", "0", str(cik), acc, ext or f"{acc}.txt", "200", f"{size}.0", str(idx), "0", "0", "0", "0", ""])

    def free_time(ip, acc, d):
        taken = used.setdefault((ip, acc, d), [])
        while True:
            t = int(rng.integers(0, 86_400 - 900))
            if all(abs(t - u) >= 900 for u in taken):
                taken.append(t)
                return t

    suffixes = ["abc", "dfg", "hij", "klm", "nop"]
    for c in campaigns:
        lo, hi = c.start_date, c.end_date + dt.timedelta(days=30)
        span = (hi - lo).days
        for k, inst in enumerate(insts):
            lam = cfg.view_rate * (0.5 + align.get((c.campaign_id, inst), 0.5))
            n = int(rng.poisson(lam))
            golden[(c.campaign_id, inst)] = n
            block = blocks[inst]
            if k == 0 and len(insts) >= 2 and rng.random() < 0.5:
                block = "203.0.113"  # plurality block also maps to insts[0]
            for _ in range(n):
                ip = f"{block}.{suffixes[int(rng.integers(0, len(suffixes)))]}"
                acc = c.filings[int(rng.integers(0, len(c.filings)))]
                d = lo + dt.timedelta(days=int(rng.integers(0, span + 1)))
                t = free_time(ip, acc, d)
                emit(ip, d, t, c.target_cik, acc)
                if rng.random() < 0.3:  # duplicate inside the five-minute window
                    emit(ip, d, t + int(rng.integers(1, 300)), c.target_cik, acc)
            if rng.random() < 0.2:  # noise that must not count
                ip = f"{block}.qrs"
                acc = c.filings[0]
                d = lo + dt.timedelta(days=int(rng.integers(0, span + 1)))
                kind = int(rng.integers(0, 5))
                t = free_time(ip, acc, d)
                if kind == 0:
                    emit(ip, d, t, c.target_cik, acc, ext="favicon.ico")
                elif kind == 1:
                    emit(ip, d, t, c.target_cik, acc, ext="primary_doc.xml")
                elif kind == 2:
                    emit(ip, d, t, c.target_cik, acc, ext=f"{acc}-index.htm", idx=1)
                elif kind == 3:
                    emit(ip, d, t, c.target_cik, acc, size=int(rng.integers(0, 500)))
                else:
                    emit(ip, hi + dt.timedelta(days=int(rng.integers(1, 60))), t, c.target_cik, acc)
        # hits from the tied block are never attributed
        emit("192.0.2.tie", lo, int(rng.integers(0, 80_000)), c.target_cik, c.filings[0])
    # one robot day: an assigned address pulling more than a thousand filings
    if campaigns:
        c0 = campaigns[0]
        robot_ip = f"{blocks[insts[0]]}.zzz"
        d = c0.start_date
        accs = list(c0.filings) + [f"9999999999-13-{k:06d}" for k in range(1001)]
        for k, acc in enumerate(accs):
            emit(robot_ip, d, (k * 37) % 80_000, c0.target_cik, acc)
    rows.sort(key=lambda r: (r[1], r[2], r[0], r[5], r[6]))
    return LogBundle(rows, ip_map, patterns, golden)


def write_logs(out_dir: Path, bundle: LogBundle) -> list[Path]:
    """One gzip shard per month."""
    out_dir.mkdir(parents=True, exist_ok=True)
    header = DERA_COLUMNS + ["norefer", "noagent", "find", "crawler", "browser"]
    by_month: dict[str, list[list[str]]] = {}
    for r in bundle.rows:
        by_month.setdefault(r[1][:7].replace("-", ""), []).append(r)
    paths = []
    for m in sorted(by_month):
        p = out_dir / f"log{m}.csv.gz"
        buf = [",".join(header)] + [",".join(r) for r in by_month[m]]
        # mtime=0 keeps the gzip bytes reproducible
        with open(p, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0, filename="") as gz:
            gz.write(("\n".join(buf) + "\n").encode())
        paths.append(p)
    return paths


# --- writer ------------------------------------------------------------------------


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_synth(out_dir, cfg: SynthConfig) -> dict:
    """Write a complete synthetic data directory; returns the truth record."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    world = build_world(cfg)
    votes = gen_votes(cfg, world.corpus, world.prefs)
    bundle = gen_logs(cfg, world.campaigns, world.prefs.institutions, world.panel)
    for r in world.panel:
        r.view = bundle.golden.get((r.campaign_id, r.institution_id), 0)

    write_jsonl(out / "proposals.jsonl", world.corpus.proposals)
    write_votes(out / "votes.csv", votes)
    write_jsonl(out / "campaigns.jsonl", world.campaigns)
    write_holdings(out / "holdings.csv", world.holdings)
    _write_csv(out / "wins.csv", ["campaign_id", "win"], sorted(world.wins.items()))
    write_panel(out / "panel_truth.csv", world.panel)
    _write_csv(
        out / "campaign_truth.csv",
        ["campaign_id", "ag_align", "own_dum", "win", "p_win"],
        [[t["campaign_id"], repr(t["ag_align"]), t["own_dum"], t["win"], repr(t["p_win"])] for t in world.campaign_truth],
    )
    write_logs(out / "logs", bundle)
    _write_csv(out / "ip_map.csv", ["org_name", "ipv4"], bundle.ip_map)
    _write_csv(out / "institution_patterns.csv", ["institution_id", "regex"], bundle.patterns)
    _write_csv(
        out / "views_truth.csv",
        ["campaign_id", "institution_id", "views"],
        [[c, i, n] for (c, i), n in sorted(bundle.golden.items())],
    )
    top = {}
    for i, inst in enumerate(world.prefs.institutions):
        w = world.prefs.weights[i]
        nz = np.flatnonzero(w)
        top[inst] = {world.corpus.words[k]: float(w[k]) for k in nz}
    truth = {
        "config": asdict(cfg),
        "alpha": dict(zip(world.prefs.institutions, map(float, world.prefs.alpha))),
        "weights": top,
        "liked_topics": dict(zip(world.prefs.institutions, world.prefs.liked)),
        "disliked_topics": dict(zip(world.prefs.institutions, world.prefs.disliked)),
        "tilt": world.tilt,
    }
    (out / "truth.json").write_text(json.dumps(truth, sort_keys=True, indent=1) + "\n")
    return truth
