"""Command-line pipeline: ingest, parse, featurize, train, align, attention,
regress, synth, report and sweep.

Stages hand off through files. Each stage records a stamp (hash of its
parameters and inputs) and is skipped when nothing changed.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import hashlib
import json
import logging
import shutil
import sys
import time
from collections import defaultdict
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .config import fingerprint, get_path, load_config, set_path

log = logging.getLogger("proxy_align")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

# artifact -> subcommand that produces it (None: supplied by the user or `synth`)
PRODUCERS = {
    "filings.jsonl": "ingest",
    "thirteenf.txt": "ingest",
    "proposals.jsonl": "parse",
    "campaigns.jsonl": "parse",
    "guidelines.jsonl": "parse",
    "vocab.tsv": "featurize",
    "vectors.jsonl": "featurize",
    "models/index.csv": "train",
    "panel.csv": "align",
    "campaigns_agg.csv": "align",
    "event_panel.csv": "align",
    "guideline_panel.csv": "align",
    "views.csv": "attention",
    "results.json": "regress",
    "tables/all.txt": "regress",
}

SWEEP_KEYS = {
    "max_n": "text.max_n",
    "min_df": "text.min_df",
    "max_df": "text.max_df",
    "min_votes": "text.min_votes",
    "window_years": "text.window_years",
    "own_dum_cutoff": "alignment.own_dum_cutoff",
}


class DataError(Exception):
    pass


class MissingArtifact(DataError):
    def __init__(self, names):
        names = [names] if isinstance(names, str) else list(names)
        parts = []
        for n in names:
            prod = PRODUCERS.get(n)
            hint = f"run `proxy-align {prod}`" if prod else "place it in the data directory (or run `proxy-align synth`)"
            parts.append(f"{n} ({hint})")
        super().__init__("missing artifact(s): " + "; ".join(parts))
        self.names = names


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --- context -------------------------------------------------------------------


class Ctx:
    def __init__(self, cfg: dict, force: bool = False, extra_search=()):
        self.cfg = cfg
        self.data = Path(cfg["paths"]["data"])
        self.out = Path(cfg["paths"]["output"])
        self.cache = Path(cfg["paths"]["cache"])
        self.force = force
        self.search = [self.out, *map(Path, extra_search), self.data]

    def find(self, name: str, required: bool = True) -> Path | None:
        for d in self.search:
            p = d / name
            if p.exists():
                return p
        if required:
            raise MissingArtifact(name)
        return None

    def output(self, name: str) -> Path:
        p = self.out / name
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    # stage stamps
    def _stamp_path(self, stage: str) -> Path:
        return self.out / ".stamps" / f"{stage}.json"

    def stamp_key(self, params, inputs) -> str:
        h = hashlib.sha256(fingerprint(params).encode())
        for p in inputs:
            if p is None:
                h.update(b"<none>")
                continue
            p = Path(p)
            files = sorted(x for x in p.rglob("*") if x.is_file()) if p.is_dir() else [p]
            for f in files:
                h.update(str(f.name).encode())
                h.update(hashlib.sha256(f.read_bytes()).digest())
        return h.hexdigest()

    def up_to_date(self, stage: str, key: str, outputs) -> bool:
        sp = self._stamp_path(stage)
        if self.force or not sp.exists():
            return False
        try:
            rec = json.loads(sp.read_text())
        except json.JSONDecodeError:
            return False
        return rec.get("key") == key and all((self.out / o).exists() for o in outputs)

    def mark(self, stage: str, key: str) -> None:
        sp = self._stamp_path(stage)
        sp.parent.mkdir(parents=True, exist_ok=True)
        sp.write_text(json.dumps({"stage": stage, "key": key}) + "\n")


def _say(msg: str) -> None:
    print(msg, flush=True)


# --- ingest / parse --------------------------------------------------------------


def cmd_ingest(ctx: Ctx, args) -> int:
    from .edgar_client import EdgarClient, FetchError, parse_master_index, parse_sgml_header, quarter_range, thirteenf_ciks

    e = ctx.cfg["edgar"]
    forms = args.forms.split(",") if args.forms else list(e["forms"])
    q_from = args.from_q or e["from"]
    q_to = args.to_q or e["to"]
    client = EdgarClient(ctx.cache, network=bool(e["network"]), user_agent=e["user_agent"])
    thirteenf: set[int] = set()
    records, failures = [], 0
    for y, q in quarter_range(str(q_from), str(q_to)):
        try:
            entries = parse_master_index(client.fetch_master_index(y, q))
        except FetchError as exc:
            log.warning("index %dQ%d unavailable: %s", y, q, exc)
            failures += 1
            continue
        thirteenf |= thirteenf_ciks(entries)
        for ent in entries:
            if ent.form_type not in forms:
                continue
            acc = Path(ent.path).stem
            try:
                raw = client.fetch_filing(acc, cik=ent.cik)
                rec = parse_sgml_header(raw)
            except Exception as exc:  # one bad filing should not stop the crawl
                log.warning("%s: %s", acc, exc)
                failures += 1
                continue
            records.append(
                {
                    "accession": rec.accession,
                    "form_type": rec.form_type,
                    "filer_cik": rec.filer_cik,
                    "subject_cik": rec.subject_cik,
                    "filer_name": rec.filer_name,
                    "subject_name": rec.subject_name,
                    "date_filed": rec.date_filed.isoformat() if rec.date_filed else None,
                    "flags": rec.flags,
                    "index_cik": ent.cik,
                }
            )
    if not records and failures:
        raise DataError("ingest retrieved nothing; enable edgar.network or populate the cache")
    records.sort(key=lambda r: (r["date_filed"] or "", r["accession"]))
    with open(ctx.output("filings.jsonl"), "w") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    ctx.output("thirteenf.txt").write_text("".join(f"{c}\n" for c in sorted(thirteenf)))
    _say(f"ingest: {len(records)} filings, {len(thirteenf)} 13F filers, {failures} failures")
    return EXIT_OK


def _load_body(ctx: Ctx, rec: dict) -> str:
    from .edgar_client import EdgarClient, parse_sgml_header

    raw = EdgarClient(ctx.cache, network=False).fetch_filing(rec["accession"], cik=rec.get("index_cik"))
    return parse_sgml_header(raw).body


def cmd_parse(ctx: Ctx, args) -> int:
    from .edgar_client import CONTEST_FORMS, FilingRecord, filter_13f_filers
    from .filing_parser import (
        IssRow,
        LineScoreWeights,
        bunch_campaigns,
        clean_html,
        dedupe_filings,
        extract_guidelines,
        extract_message,
        merge_director_rows,
        segment_proposals,
        write_jsonl,
    )

    p = ctx.cfg["parse"]
    src = ctx.find("filings.jsonl")
    recs = [json.loads(ln) for ln in src.read_text().splitlines() if ln.strip()]
    tf = ctx.find("thirteenf.txt", required=False)
    thirteenf = {int(x) for x in tf.read_text().split()} if tf else None

    contest = []
    for r in recs:
        if r["form_type"] not in CONTEST_FORMS:
            continue
        contest.append(
            FilingRecord(
                r["accession"], r["form_type"], r["filer_cik"], r["subject_cik"], r["filer_name"], r["subject_name"],
                dt.date.fromisoformat(r["date_filed"]), _load_body(ctx, r), list(r.get("flags", [])),
            )
        )
    if thirteenf is not None:
        contest = filter_13f_filers(contest, thirteenf)
    contest = [f for f in dedupe_filings(contest) if f.subject_cik]
    messages = {}
    for f in contest:
        m = extract_message(f.body, f.filer_name, f.subject_name, screen_lines=p["screen_lines"], exhibit_max_words=p["exhibit_max_words"])
        messages[f.accession] = m.text if m else ""
    with_msg = [f for f in contest if messages[f.accession]]
    campaigns = bunch_campaigns(with_msg, messages, max_gap_days=int(p["max_gap_days"]))
    write_jsonl(ctx.output("campaigns.jsonl"), campaigns)

    proposals = []
    iss_path = ctx.find("iss_rows.csv", required=False)
    if iss_path is not None:
        weights = LineScoreWeights(**p["line_weights"])
        rows_by_key = defaultdict(list)
        with open(iss_path, newline="") as fh:
            for r in csv.DictReader(fh):
                nominees = tuple(x.strip() for x in r.get("nominees", "").split(";") if x.strip())
                item = int(r["item_number"]) if r.get("item_number") else None
                rows_by_key[(int(r["cik"]), r["meeting_date"])].append(IssRow(r["description"], item, nominees))
        defs = {}
        for r in recs:
            if r["form_type"] == "DEF14A":
                defs.setdefault(int(r["filer_cik"] or r.get("index_cik") or 0), []).append(r)
        for (cik, md), rows in sorted(rows_by_key.items()):
            cands = [r for r in defs.get(cik, []) if r["date_filed"] and r["date_filed"] <= md]
            if not cands:
                continue
            r = max(cands, key=lambda x: x["date_filed"])
            doc = clean_html(_load_body(ctx, r), p["head_trim"], p["tail_trim"])
            segs = segment_proposals(doc, merge_director_rows(rows), cik, dt.date.fromisoformat(md), weights, int(p["min_words"]))
            proposals.extend(segs)
    write_jsonl(ctx.output("proposals.jsonl"), proposals)

    guides = []
    for r in recs:
        if r["form_type"] == "485BPOS" and r["date_filed"]:
            g = extract_guidelines(_load_body(ctx, r), str(r["filer_cik"]), int(r["date_filed"][:4]))
            if g is not None:
                guides.append(g)
    write_jsonl(ctx.output("guidelines.jsonl"), guides)
    _say(f"parse: {len(campaigns)} campaigns, {len(proposals)} proposal segments, {len(guides)} guideline documents")
    return EXIT_OK


# --- featurize / train -------------------------------------------------------------


def cmd_featurize(ctx: Ctx, args) -> int:
    from .filing_parser import ProposalText, read_jsonl
    from .text_features import build_vocabulary, normalize, vectorize

    t = ctx.cfg["text"]
    src = ctx.find("proposals.jsonl")
    params = {k: t[k] for k in ("max_n", "min_df", "max_df", "stemmer")}
    key = ctx.stamp_key(params, [src])
    if ctx.up_to_date("featurize", key, ["vocab.tsv", "vectors.jsonl"]):
        _say("featurize: up to date")
        return EXIT_OK
    props = sorted(read_jsonl(src, ProposalText), key=lambda p: p.proposal_id)
    if not props:
        raise DataError(f"{src} holds no proposals")
    docs = [normalize(p.body, stemmer=t["stemmer"]) for p in props]
    vocab = build_vocabulary(docs, int(t["max_n"]), float(t["min_df"]), float(t["max_df"]))
    vocab.save(ctx.output("vocab.tsv"))
    with open(ctx.output("vectors.jsonl"), "w") as fh:
        for p, d in zip(props, docs):
            fh.write(vectorize(d, vocab, p.proposal_id).to_json() + "\n")
    ctx.mark("featurize", key)
    _say(f"featurize: K={vocab.K} phrases from {len(props)} proposals (vocab {vocab.version})")
    return EXIT_OK


def svr_config(cfg: dict):
    from .preference_model import SvrConfig

    s = cfg["svr"]
    lo, hi = s["c_exponents"]
    return SvrConfig(
        epsilon=float(s["epsilon"]),
        c_grid=[10.0**j for j in range(int(lo), int(hi) + 1)],
        folds=int(s["folds"]),
        tolerance=float(s["tolerance"]),
        seed=int(cfg["seed"]),
        max_iter=int(s["max_iter"]),
    )


def _read_campaigns(ctx: Ctx):
    from .filing_parser import Campaign, read_jsonl

    return sorted(read_jsonl(ctx.find("campaigns.jsonl"), Campaign), key=lambda c: (c.start_date, c.campaign_id))


def cmd_train(ctx: Ctx, args) -> int:
    from .preference_model import fit_institution_model, index_votes, read_votes, select_training_set, years_before
    from .text_features import DocVector, Vocabulary

    t = ctx.cfg["text"]
    paths = [ctx.find("vocab.tsv"), ctx.find("vectors.jsonl"), ctx.find("votes.csv"), ctx.find("campaigns.jsonl")]
    params = {"text": t, "svr": ctx.cfg["svr"], "seed": ctx.cfg["seed"]}
    key = ctx.stamp_key(params, paths)
    if ctx.up_to_date("train", key, ["models/index.csv"]):
        _say("train: up to date")
        return EXIT_OK
    vocab = Vocabulary.load(paths[0])
    vectors = {}
    with open(paths[1]) as fh:
        for ln in fh:
            if ln.strip():
                v = DocVector.from_json(ln)
                vectors[v.doc_id] = v
    votes = index_votes(read_votes(paths[2]))
    campaigns = _read_campaigns(ctx)
    conf = svr_config(ctx.cfg)
    mdir = ctx.out / "models"
    if mdir.exists():
        shutil.rmtree(mdir)
    mdir.mkdir(parents=True)
    fitted: dict[tuple[str, str], object] = {}
    index_rows = []
    t0 = time.time()
    for c in campaigns:
        for inst in sorted(votes):
            ex = select_training_set(votes[inst], vectors, c.start_date, int(t["window_years"]), int(t["min_votes"]))
            if ex is None:
                continue
            set_key = hashlib.sha256(",".join(e.proposal_id for e in ex).encode()).hexdigest()[:16]
            fname = f"{inst}__{set_key}.model"
            if (inst, set_key) not in fitted:
                window = (years_before(c.start_date, int(t["window_years"])), c.start_date)
                model = fit_institution_model(ex, vocab.K, vocab.version, conf, inst, window)
                model.save(mdir / fname)
                fitted[(inst, set_key)] = model
            m = fitted[(inst, set_key)]
            index_rows.append([c.campaign_id, inst, fname, m.n_train, repr(m.cv_mae), repr(m.best_c)])
    with open(mdir / "index.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["campaign_id", "institution_id", "model_file", "n_train", "cv_mae", "best_c"])
        w.writerows(index_rows)
    ctx.mark("train", key)
    _say(f"train: {len(fitted)} models for {len(index_rows)} campaign-institution pairs in {time.time() - t0:.1f}s")
    return EXIT_OK


# --- align / attention -----------------------------------------------------------


def _load_models(ctx: Ctx):
    from .preference_model import InstitutionModel

    idx_path = ctx.find("models/index.csv")
    cache, by_campaign = {}, defaultdict(dict)
    with open(idx_path, newline="") as fh:
        for r in csv.DictReader(fh):
            f = r["model_file"]
            if f not in cache:
                cache[f] = InstitutionModel.load(idx_path.parent / f)
            by_campaign[r["campaign_id"]][r["institution_id"]] = cache[f]
    return by_campaign, cache


def _read_meetings(path):
    from .alignment import Meeting, MeetingProposal

    out = []
    for ln in Path(path).read_text().splitlines():
        if not ln.strip():
            continue
        d = json.loads(ln)
        props = tuple(MeetingProposal(p["proposal_id"], p.get("description", ""), p.get("sponsor", "shareholder")) for p in d["proposals"])
        out.append(Meeting(int(d["target_cik"]), dt.date.fromisoformat(d["meeting_date"]), props))
    return out


def cmd_align(ctx: Ctx, args) -> int:
    from .alignment import (
        HoldingsTable,
        aggregate_panel,
        compute_align_panel,
        event_split_panel,
        guideline_panel,
        num_interaction,
        read_holdings,
        sup_act,
        type_based_align,
        write_panel,
    )
    from .attention import read_views
    from .text_features import Vocabulary

    a = ctx.cfg["alignment"]
    opt_names = ["views.csv", "meetings.jsonl", "wins.csv", "mergers.csv", "guidelines.jsonl", "fight_proposals.csv"]
    optional = {n: ctx.find(n, required=False) for n in opt_names}
    needs_votes = optional["meetings.jsonl"] or optional["fight_proposals.csv"]
    req = [ctx.find("campaigns.jsonl"), ctx.find("vocab.tsv"), ctx.find("models/index.csv"), ctx.find("holdings.csv")]
    models_dir = req[2].parent
    inputs = req + [models_dir] + list(optional.values()) + ([ctx.find("votes.csv")] if needs_votes else [])
    key = ctx.stamp_key({"alignment": a}, inputs)
    if ctx.up_to_date("align", key, ["panel.csv", "campaigns_agg.csv"]):
        _say("align: up to date")
        return EXIT_OK

    campaigns = _read_campaigns(ctx)
    vocab = Vocabulary.load(req[1])
    models, _ = _load_models(ctx)
    holdings = HoldingsTable(read_holdings(req[3]))
    views = {}
    if optional["views.csv"]:
        views = {(v.campaign_id, v.institution_id): v.views for v in read_views(optional["views.csv"])}
    votes = None
    if needs_votes:
        from .preference_model import read_votes

        votes = read_votes(ctx.find("votes.csv"))

    rows = []
    for c in campaigns:
        rows.extend(compute_align_panel(c, models.get(c.campaign_id, {}), holdings, vocab, lag_months=int(a["lag_months"])))
    if not rows:
        raise DataError("no campaign has an institution with a trained model")
    inter = num_interaction(campaigns, holdings, sorted({r.institution_id for r in rows}), float(a["interaction_threshold"]))
    support = {}
    if optional["meetings.jsonl"]:
        meetings = _read_meetings(optional["meetings.jsonl"])
        for c in campaigns:
            for inst, v in sup_act(c, meetings, votes, int(a["sup_act_before_end_days"]), int(a["sup_act_after_end_days"])).items():
                support[(c.campaign_id, inst)] = v
    for r in rows:
        k = (r.campaign_id, r.institution_id)
        r.num_interaction = inter.get(k, 0)
        r.view = views.get(k, 0) if views else None
        r.sup_act = support.get(k)
    write_panel(ctx.output("panel.csv"), rows)

    wins = None
    if optional["wins.csv"]:
        with open(optional["wins.csv"], newline="") as fh:
            wins = {r["campaign_id"]: int(r["win"]) for r in csv.DictReader(fh) if r["win"] != ""}
    aggs = aggregate_panel(rows, float(a["own_dum_cutoff"]), wins)
    with open(ctx.output("campaigns_agg.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["campaign_id", "ag_align", "own_dum", "total_mf_ownership", "win"])
        for g in aggs:
            w.writerow([g.campaign_id, repr(g.ag_align), g.own_dum, repr(g.total_mf_ownership), "" if g.win is None else g.win])

    if optional["mergers.csv"]:
        by_id = {c.campaign_id: c for c in campaigns}
        ev_rows = []
        with open(optional["mergers.csv"], newline="") as fh:
            mergers = list(csv.DictReader(fh))
        for m in mergers:
            c = by_id.get(m["campaign_id"])
            if c is None:
                continue
            acq = [x for x in m["acquirers"].split(";") if x]
            ev_rows.extend(event_split_panel(c, dt.date.fromisoformat(m["event_date"]), acq, models.get(c.campaign_id, {}), holdings, vocab))
        df = pd.DataFrame([r.__dict__ for r in ev_rows])
        if not df.empty:
            df["acquired_post"] = df["acquired"] * df["post"]
        df.to_csv(ctx.output("event_panel.csv"), index=False)

    if optional["fight_proposals.csv"]:
        by_id = {c.campaign_id: c for c in campaigns}
        descs = defaultdict(list)
        with open(optional["fight_proposals.csv"], newline="") as fh:
            for r in csv.DictReader(fh):
                descs[r["campaign_id"]].append(r["description"])
        with open(ctx.output("type_align.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["campaign_id", "institution_id", "type_align"])
            for cid in sorted(descs):
                if cid in by_id:
                    for inst, v in type_based_align(by_id[cid], descs[cid], votes, int(ctx.cfg["text"]["window_years"])).items():
                        w.writerow([cid, inst, repr(v)])

    if optional["guidelines.jsonl"]:
        from .filing_parser import GuidelineDoc, read_jsonl
        from .text_features import phrase_counts

        docs = read_jsonl(optional["guidelines.jsonl"], GuidelineDoc)
        counts = {(g.institution_id, g.year): phrase_counts(g.body, vocab) for g in docs}
        _, model_files = _load_models(ctx)
        by_year = {}
        for m in model_files.values():
            by_year.setdefault((m.institution_id, m.window[1].year), m)
        pd.DataFrame(guideline_panel(counts, by_year, vocab.phrases)).to_csv(ctx.output("guideline_panel.csv"), index=False)

    ctx.mark("align", key)
    _say(f"align: {len(rows)} panel rows over {len({r.campaign_id for r in rows})} campaigns; {len(aggs)} with holders")
    return EXIT_OK


def cmd_attention(ctx: Ctx, args) -> int:
    from .attention import (
        assign_ip3,
        backtest_validity,
        process_logs,
        read_ip_map,
        read_patterns,
        write_views,
    )

    at = ctx.cfg["attention"]
    logs_dir = ctx.find("logs")
    ip_map = ctx.find("ip_map.csv")
    pats = ctx.find("institution_patterns.csv")
    access_path = ctx.find("access_fractions.csv", required=False)
    camp_path = ctx.find("campaigns.jsonl")
    key = ctx.stamp_key({"attention": at}, [logs_dir, ip_map, pats, access_path, camp_path])
    if ctx.up_to_date("attention", key, ["views.csv"]):
        _say("attention: up to date")
        return EXIT_OK
    assignments = assign_ip3(read_ip_map(ip_map), read_patterns(pats))
    if access_path is not None:
        access = defaultdict(dict)
        with open(access_path, newline="") as fh:
            for r in csv.DictReader(fh):
                access[r["institution_id"]][r["quarter"]] = float(r["fraction"])
        assignments = backtest_validity(assignments, access, float(at["validity_threshold"]))
    with open(ctx.output("ip3_assignments.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ip3_prefix", "institution_id", "valid_from", "valid_to"])
        for p in sorted(assignments):
            a = assignments[p]
            w.writerow([p, a.institution_id, a.valid_from or "", a.valid_to or ""])
    shards = sorted(p for p in logs_dir.iterdir() if p.name.endswith((".csv", ".csv.gz")))
    campaigns = _read_campaigns(ctx)
    views = process_logs(
        shards,
        assignments,
        campaigns,
        robot_threshold=int(at["robot_threshold"]),
        min_size=int(at["min_size"]),
        dedup_seconds=int(at["dedup_seconds"]),
        tail_days=int(at["tail_days"]),
        institutions=sorted({a.institution_id for a in assignments.values()}),
    )
    write_views(ctx.output("views.csv"), views)
    ctx.mark("attention", key)
    _say(f"attention: {sum(v.views for v in views)} views over {len(shards)} log shards, {len(assignments)} IP3 blocks")
    return EXIT_OK


# --- regress / report / sweep --------------------------------------------------------


DATA_FILES = {"panel": "panel.csv", "campaign": "campaigns_agg.csv", "event": "event_panel.csv", "guideline": "guideline_panel.csv"}


def run_regressions(ctx: Ctx, overrides: dict[str, Path | None] | None = None, only: list[str] | None = None):
    from .econometrics import RankDeficient, RegressionSpec, run_spec

    overrides = overrides or {}
    frames: dict[str, pd.DataFrame | None] = {}
    results, skipped = [], []
    for raw in ctx.cfg["regression"]["specs"]:
        raw = dict(raw)
        level = raw.pop("data", "panel")
        spec = RegressionSpec.from_dict(raw)
        if only and spec.name not in only:
            continue
        if level not in frames:
            path = overrides.get(level) or ctx.find(DATA_FILES[level], required=level == "panel")
            frames[level] = pd.read_csv(path) if path is not None and Path(path).stat().st_size > 1 else None
        df = frames[level]
        if df is None or df.empty:
            skipped.append((spec.name, f"no {DATA_FILES[level]}"))
            continue
        missing = [c for c in spec.columns() if c not in df.columns]
        if missing:
            raise DataError(f"spec {spec.name}: missing columns {', '.join(missing)}")
        if df[spec.outcome].isna().all():
            skipped.append((spec.name, f"outcome {spec.outcome} unavailable"))
            continue
        try:
            results.append(run_spec(df, spec, tol=float(ctx.cfg["regression"]["demean_tol"])))
        except RankDeficient as exc:
            # a degenerate spec in the default batch (e.g. a regressor that is
            # constant on this panel) should not block the others
            if only:
                raise
            skipped.append((spec.name, str(exc)))
    return results, skipped


def _write_tables(ctx: Ctx, results, prefix: str = "tables") -> None:
    from .econometrics import render_csv, render_table

    for r in results:
        ctx.output(f"{prefix}/{r.spec_name}.txt").write_text(render_table([r]))
        ctx.output(f"{prefix}/{r.spec_name}.csv").write_text(render_csv([r]))
    ctx.output(f"{prefix}/all.txt").write_text("\n".join(f"{r.spec_name}\n{render_table([r])}" for r in results))


def cmd_regress(ctx: Ctx, args) -> int:
    overrides = {"panel": args.panel, "campaign": args.campaign_table}
    overrides = {k: Path(v) for k, v in overrides.items() if v}
    for p in overrides.values():
        if not p.exists():
            raise DataError(f"{p} does not exist")
    results, skipped = run_regressions(ctx, overrides, args.spec or None)
    if not results:
        raise DataError("no regression could be run: " + "; ".join(f"{n} ({why})" for n, why in skipped))
    _write_tables(ctx, results)
    payload = {"results": [r.as_dict() for r in results], "skipped": [{"spec": n, "reason": w} for n, w in skipped]}
    ctx.output("results.json").write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")
    for n, why in skipped:
        _say(f"regress: skipped {n}: {why}")
    from .econometrics import render_table

    _say(render_table(results).rstrip())
    return EXIT_OK


def cmd_report(ctx: Ctx, args) -> int:
    needed = ["results.json", "tables/all.txt", "panel.csv", "models/index.csv"]
    missing = [n for n in needed if not (ctx.out / n).exists()]
    if missing:
        raise MissingArtifact(missing)
    res = json.loads((ctx.out / "results.json").read_text())
    idx = pd.read_csv(ctx.out / "models/index.csv")
    panel = pd.read_csv(ctx.out / "panel.csv")
    lines = [
        "# proxy-align report",
        "",
        f"- campaigns in panel: {panel['campaign_id'].nunique()}",
        f"- institutions in panel: {panel['institution_id'].nunique()}",
        f"- panel rows: {len(panel)} ({(panel['holding'] > 0).mean():.1%} with non-zero holdings)",
        f"- mean align: {panel['align'].mean():.3f} (sd {panel['align'].std():.3f})",
        f"- distinct models: {idx['model_file'].nunique()}; mean CV MAE {idx.drop_duplicates('model_file')['cv_mae'].mean():.3f}",
        "",
        "## Regressions",
        "",
        "```",
        (ctx.out / "tables/all.txt").read_text().rstrip(),
        "```",
    ]
    if res.get("skipped"):
        lines += ["", "Skipped: " + ", ".join(f"{s['spec']} ({s['reason']})" for s in res["skipped"])]
    ctx.output("report.md").write_text("\n".join(lines) + "\n")
    _say(f"report: wrote {ctx.out / 'report.md'}")
    return EXIT_OK


def parse_grid(spec: str) -> tuple[str, list]:
    """``name=3..5`` (integer range) or ``name=0.5,0.6,0.7``."""
    if "=" not in spec:
        raise UsageError(f"--param expects name=values, got {spec!r}")
    name, vals = spec.split("=", 1)
    name = name.strip()
    vals = vals.strip()
    if ".." in vals and "," not in vals:
        lo, hi = vals.split("..", 1)
        try:
            lo_i, hi_i = int(lo), int(hi)
        except ValueError as exc:
            raise UsageError(f"range {vals!r} must have integer bounds") from exc
        if lo_i > hi_i:
            raise UsageError(f"empty range {vals!r}")
        values = list(range(lo_i, hi_i + 1))
    else:
        import yaml

        values = [yaml.safe_load(v) for v in vals.split(",") if v.strip()]
    if not values:
        raise UsageError(f"no values in {spec!r}")
    return name, values


def cmd_sweep(ctx: Ctx, args) -> int:
    import copy

    from .econometrics import render_table

    stage_for = {
        "text.max_n": "featurize",
        "text.min_df": "featurize",
        "text.max_df": "featurize",
        "text.stemmer": "featurize",
        "text.min_votes": "train",
        "text.window_years": "train",
    }
    order = ["featurize", "train", "align"]
    table_spec = args.table_spec or ctx.cfg["sweep"]["table_spec"]
    summary = []
    for spec in args.param:
        name, values = parse_grid(spec)
        dotted = SWEEP_KEYS.get(name, name)
        if get_path(ctx.cfg, dotted) is None:
            raise UsageError(f"unknown sweep parameter {name!r}")
        first = order.index(stage_for.get(dotted, "align"))
        for v in values:
            cfg = copy.deepcopy(ctx.cfg)
            set_path(cfg, dotted.split("."), v)
            sub_out = ctx.out / "sweep" / f"{name}={v}"
            cfg["paths"]["output"] = str(sub_out)
            sub = Ctx(cfg, force=ctx.force, extra_search=[ctx.out])
            sub_out.mkdir(parents=True, exist_ok=True)
            for stage in order[first:]:
                STAGES[stage](sub, args)
            results, _ = run_regressions(sub)
            _write_tables(sub, results)
            hit = [r for r in results if r.spec_name == table_spec]
            if hit:
                r = hit[0]
                j = 0
                summary.append([name, v, r.names[j], r.coef[j], r.se[j], r.t_stat[j], r.n])
                _say(f"sweep {name}={v}\n{render_table([r]).rstrip()}")
    with open(ctx.output("sweep/sweep.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["param", "value", "regressor", "coef", "se", "t", "n"])
        for row in summary:
            w.writerow([row[0], row[1], row[2], repr(float(row[3])), repr(float(row[4])), repr(float(row[5])), row[6]])
    _say(f"sweep: {len(summary)} tables for spec {table_spec}")
    return EXIT_OK


def cmd_synth(ctx: Ctx, args) -> int:
    from .synth import SynthConfig, write_synth

    params = dict(ctx.cfg.get("synth") or {})
    params["seed"] = int(ctx.cfg["seed"])
    try:
        scfg = SynthConfig(**params)
    except TypeError as exc:
        raise UsageError(f"bad synth configuration: {exc}") from exc
    key = ctx.stamp_key(params, [])
    marker = ctx.data / ".synth_stamp"
    if not ctx.force and marker.exists() and marker.read_text().strip() == key and (ctx.data / "truth.json").exists():
        _say("synth: up to date")
        return EXIT_OK
    write_synth(ctx.data, scfg)
    marker.write_text(key + "\n")
    _say(f"synth: wrote {ctx.data} (seed {scfg.seed}, {scfg.n_institutions} institutions, {scfg.n_campaigns} campaigns)")
    return EXIT_OK


STAGES = {
    "ingest": cmd_ingest,
    "parse": cmd_parse,
    "featurize": cmd_featurize,
    "train": cmd_train,
    "align": cmd_align,
    "attention": cmd_attention,
    "regress": cmd_regress,
    "synth": cmd_synth,
    "report": cmd_report,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="proxy-align", description="Activist proxy-communication alignment pipeline")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-c", "--config", help="YAML config file")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    ap.add_argument("--force", action="store_true", help="ignore stage stamps")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True
    p = sub.add_parser("ingest", help="download EDGAR indices and filings")
    p.add_argument("--forms")
    p.add_argument("--from", dest="from_q")
    p.add_argument("--to", dest="to_q")
    sub.add_parser("parse", help="extract messages, campaigns, proposals, guidelines")
    sub.add_parser("featurize", help="build the vocabulary and proposal vectors")
    sub.add_parser("train", help="fit per-institution SVR models")
    sub.add_parser("align", help="score campaigns and build panels")
    sub.add_parser("attention", help="count EDGAR views per campaign and institution")
    p = sub.add_parser("regress", help="run the configured regressions")
    p.add_argument("--panel", help="panel CSV to use instead of the align output")
    p.add_argument("--campaign-table", help="campaign-level CSV for the win regression")
    p.add_argument("--spec", action="append", default=[], help="run only this spec (repeatable)")
    sub.add_parser("synth", help="write a seeded synthetic data directory")
    sub.add_parser("report", help="summarize outputs")
    p = sub.add_parser("sweep", help="rerun stages over parameter grids")
    p.add_argument("--param", action="append", required=True, help="name=lo..hi or name=v1,v2,...")
    p.add_argument("--table-spec", help="spec whose coefficient is tabulated")
    return ap


def main(argv=None) -> int:
    from .econometrics import ConvergenceError, RankDeficient

    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.overrides)
    except (OSError, ValueError) as exc:
        print(f"proxy-align: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    ctx = Ctx(cfg, force=args.force)
    try:
        return STAGES[args.command](ctx, args)
    except UsageError as exc:
        print(f"proxy-align: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConvergenceError, RankDeficient, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"proxy-align: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"proxy-align: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
