"""EDGAR server-log processing: robot and validity filters, IP3 block
assignment, and per-campaign view counts."""

from __future__ import annotations

import csv
import datetime as dt
import gzip
import io
import logging
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

log = logging.getLogger(__name__)

DERA_COLUMNS = ["ip", "date", "time", "zone", "cik", "accession", "extention", "code", "size", "idx"]
ROBOT_THRESHOLD = 1000
MIN_SIZE = 500
DEDUP_SECONDS = 300
VIEW_TAIL_DAYS = 30

_IP_RE = re.compile(r"^(\d{1,3})\.(\d{1,3})\.(\d{1,3})\.([A-Za-z0-9]+)$")


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class LogEntry:
    ip3: tuple[int, int, int]
    suffix: str
    date: dt.date
    time: dt.time
    cik: int
    accession: str
    extension: str
    size: int
    is_index: int

    @property
    def ip(self) -> str:
        return "{}.{}.{}.".format(*self.ip3) + self.suffix

    @property
    def prefix(self) -> str:
        return "{}.{}.{}".format(*self.ip3)

    @property
    def when(self) -> dt.datetime:
        return dt.datetime.combine(self.date, self.time)


def parse_ip(ip: str) -> tuple[tuple[int, int, int], str] | None:
    m = _IP_RE.match(ip.strip())
    if not m:
        return None
    octets = tuple(int(g) for g in m.groups()[:3])
    if any(o > 255 for o in octets):
        return None
    return octets, m.group(4)


class LogStats:
    def __init__(self):
        self.rows = 0
        self.skipped = 0


def _open_text(path) -> io.TextIOBase:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"\x1f\x8b":
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8", errors="replace", newline="")
    return open(path, encoding="utf-8", errors="replace", newline="")


def parse_log(source, stats: LogStats | None = None) -> Iterator[LogEntry]:
    """Yield typed entries from DERA log CSV rows.

    ``source`` is a path (plain or gzip) or an iterable of text lines. The
    header must start with the DERA column layout; malformed rows are
    counted in ``stats.skipped``.
    """
    stats = stats if stats is not None else LogStats()
    if isinstance(source, (str, Path)):
        with _open_text(source) as fh:
            yield from parse_log(fh, stats)
        return
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None:
        return
    header = [h.strip().lower() for h in header]
    if header[: len(DERA_COLUMNS)] != DERA_COLUMNS:
        raise SchemaError(f"unexpected log header {header[:len(DERA_COLUMNS)]}; expected {DERA_COLUMNS}")
    for row in reader:
        stats.rows += 1
        entry = _parse_row(row)
        if entry is None:
            stats.skipped += 1
            continue
        yield entry


def _parse_row(row: Sequence[str]) -> LogEntry | None:
    if len(row) < len(DERA_COLUMNS):
        return None
    ip = parse_ip(row[0])
    if ip is None:
        return None
    try:
        date = dt.date.fromisoformat(row[1].strip())
        time = dt.time.fromisoformat(row[2].strip())
        cik = int(float(row[4]))
        size_s = row[8].strip()
        size = int(float(size_s)) if size_s else 0
        idx_s = row[9].strip()
        idx = int(float(idx_s)) if idx_s else 0
    except ValueError:
        return None
    return LogEntry(ip[0], ip[1], date, time, cik, row[5].strip(), row[6].strip(), size, idx)


# --- filters -----------------------------------------------------------------


def filter_robots(entries: Iterable[LogEntry], threshold: int = ROBOT_THRESHOLD, key: str = "ip") -> list[LogEntry]:
    """Drop every entry of an (address, day) that requested more than
    ``threshold`` distinct filings that day. ``key`` is "ip" (anonymized
    full address) or "ip3"."""
    entries = list(entries)
    keyf = (lambda e: e.ip) if key == "ip" else (lambda e: e.prefix)
    distinct: dict[tuple[str, dt.date], set[str]] = defaultdict(set)
    for e in entries:
        distinct[(keyf(e), e.date)].add(e.accession)
    robots = {k for k, s in distinct.items() if len(s) > threshold}
    if robots:
        log.info("robot filter: %d address-days removed", len(robots))
    return [e for e in entries if (keyf(e), e.date) not in robots]


def is_valid_request(e: LogEntry, min_size: int = MIN_SIZE) -> bool:
    ext = e.extension.lower()
    if e.is_index == 1 or ext.endswith("index.htm") or ext.endswith("index.html"):
        return False
    if ext.endswith(".ico") or ext.endswith(".xml"):
        return False
    return e.size >= min_size


def dedupe_views(entries: Iterable[LogEntry], seconds: int = DEDUP_SECONDS) -> list[LogEntry]:
    """Collapse same-(address, accession) hits less than ``seconds`` apart.

    Hits chain: each hit is compared with the previous hit of the same key,
    and a new view starts once a gap reaches ``seconds``.
    """
    by_key: dict[tuple[str, str], list[LogEntry]] = defaultdict(list)
    for e in entries:
        by_key[(e.ip, e.accession)].append(e)
    out = []
    for k in sorted(by_key):
        hits = sorted(by_key[k], key=lambda e: e.when)
        prev = None
        for e in hits:
            if prev is None or (e.when - prev.when).total_seconds() >= seconds:
                out.append(e)
            prev = e
    out.sort(key=lambda e: (e.when, e.ip, e.accession))
    return out


def filter_valid(entries: Iterable[LogEntry], min_size: int = MIN_SIZE, dedup_seconds: int = DEDUP_SECONDS) -> list[LogEntry]:
    return dedupe_views((e for e in entries if is_valid_request(e, min_size)), dedup_seconds)


# --- IP3 assignment ------------------------------------------------------------


@dataclass(frozen=True)
class IpAssignment:
    ip3_prefix: str
    institution_id: str
    valid_from: dt.date | None = None
    valid_to: dt.date | None = None

    def covers(self, d: dt.date) -> bool:
        return (self.valid_from is None or d >= self.valid_from) and (self.valid_to is None or d <= self.valid_to)


def read_patterns(path) -> list[tuple[str, re.Pattern]]:
    with open(path, newline="") as fh:
        return [(r["institution_id"], re.compile(r["regex"], re.I)) for r in csv.DictReader(fh)]


def read_ip_map(path) -> list[tuple[str, str]]:
    with open(path, newline="") as fh:
        return [(r["org_name"], r["ipv4"]) for r in csv.DictReader(fh)]


def match_institution(org_name: str, patterns: Sequence[tuple[str, re.Pattern]]) -> str | None:
    for inst, rx in patterns:
        if rx.fullmatch(org_name) or rx.search(org_name):
            return inst
    return None


def assign_ip3(org_ips: Iterable[tuple[str, str]], patterns: Sequence[tuple[str, re.Pattern]]) -> dict[str, IpAssignment]:
    """Give each IP3 block to the institution owning the most addresses in it.
    Blocks with a tie at the top are dropped."""
    owned: dict[str, dict[str, set[str]]] = defaultdict(lambda: defaultdict(set))
    for org, ip in org_ips:
        inst = match_institution(org, patterns)
        if inst is None:
            continue
        parts = ip.strip().split(".")
        if len(parts) != 4 or not all(p.isdigit() and int(p) <= 255 for p in parts):
            log.debug("ignoring malformed address %r", ip)
            continue
        owned[".".join(parts[:3])][inst].add(ip.strip())
    out = {}
    for prefix in sorted(owned):
        ranked = sorted(((len(a), i) for i, a in owned[prefix].items()), reverse=True)
        if len(ranked) > 1 and ranked[0][0] == ranked[1][0]:
            log.info("IP3 block %s dropped: tie between %s and %s", prefix, ranked[0][1], ranked[1][1])
            continue
        out[prefix] = IpAssignment(prefix, ranked[0][1])
    return out


# --- validity backtest ---------------------------------------------------------


def parse_quarter(label: str) -> tuple[int, int]:
    m = re.fullmatch(r"(\d{4})Q([1-4])", label.strip().upper())
    if not m:
        raise ValueError(f"bad quarter label {label!r}")
    return int(m.group(1)), int(m.group(2))


def quarter_label(y: int, q: int) -> str:
    return f"{y}Q{q}"


def quarter_of(d: dt.date) -> str:
    return quarter_label(d.year, (d.month - 1) // 3 + 1)


def _prev_quarter(y: int, q: int) -> tuple[int, int]:
    return (y, q - 1) if q > 1 else (y - 1, 4)


def holdings_access_fraction(
    held: Mapping[str, Mapping[str, set]], viewed: Mapping[str, Mapping[str, set]]
) -> dict[str, dict[str, float]]:
    """institution -> quarter -> share of held firms whose filings it viewed."""
    out: dict[str, dict[str, float]] = {}
    for inst, by_q in held.items():
        out[inst] = {}
        for q, firms in by_q.items():
            if firms:
                seen = viewed.get(inst, {}).get(q, set())
                out[inst][q] = len(set(firms) & set(seen)) / len(firms)
    return out


def validity_start(series: Mapping[str, float], threshold: float = 0.01, start: str | None = None) -> str | None:
    """Walk back from ``start`` (default: latest quarter in ``series``) and
    return the later quarter of the first pair of consecutive quarters that
    both access at most ``threshold``; None when no such pair exists."""
    if not series:
        return None
    y, q = parse_quarter(start) if start else max(parse_quarter(k) for k in series)
    earliest = min(parse_quarter(k) for k in series)
    vals = {parse_quarter(k): v for k, v in series.items()}
    while (y, q) > earliest:
        py, pq = _prev_quarter(y, q)
        a, b = vals.get((y, q)), vals.get((py, pq))
        if a is not None and b is not None and a <= threshold and b <= threshold:
            return quarter_label(y, q)
        y, q = py, pq
    return None


def quarter_cutoff_date(label: str) -> dt.date:
    """First day of the quarter's final month (holdings are dated at quarter end)."""
    y, q = parse_quarter(label)
    return dt.date(y, 3 * q, 1)


def backtest_validity(
    assignments: Mapping[str, IpAssignment],
    access: Mapping[str, Mapping[str, float]],
    threshold: float = 0.01,
    start: str | None = None,
) -> dict[str, IpAssignment]:
    out = {}
    for prefix, a in assignments.items():
        cut = validity_start(access.get(a.institution_id, {}), threshold, start)
        if cut is not None:
            vf = quarter_cutoff_date(cut)
            if a.valid_from is None or vf > a.valid_from:
                a = replace(a, valid_from=vf)
        out[prefix] = a
    return out


# --- counting ------------------------------------------------------------------


@dataclass(frozen=True)
class ViewCount:
    campaign_id: str
    institution_id: str
    views: int
    window: tuple[dt.date, dt.date]


def count_views(
    entries: Iterable[LogEntry],
    assignments: Mapping[str, IpAssignment],
    campaigns: Sequence,
    fight_docs: Mapping[str, set[str]] | None = None,
    institutions: Iterable[str] = (),
    tail_days: int = VIEW_TAIL_DAYS,
) -> list[ViewCount]:
    """Views of each campaign's documents by assigned institutions within
    [start, end + tail_days]. Listed ``institutions`` get zero rows."""
    docs = {c.campaign_id: set(fight_docs[c.campaign_id]) if fight_docs else set(c.filings) for c in campaigns}
    windows = {c.campaign_id: (c.start_date, c.end_date + dt.timedelta(days=tail_days)) for c in campaigns}
    by_acc: dict[str, list[str]] = defaultdict(list)
    for cid, accs in docs.items():
        for acc in accs:
            by_acc[acc].append(cid)
    counts: Counter = Counter()
    multi = 0
    for e in entries:
        cids = by_acc.get(e.accession)
        if not cids:
            continue
        a = assignments.get(e.prefix)
        if a is None or not a.covers(e.date):
            continue
        hit = [cid for cid in cids if windows[cid][0] <= e.date <= windows[cid][1]]
        if len(hit) > 1:
            multi += 1
        for cid in hit:
            counts[(cid, a.institution_id)] += 1
    if multi:
        log.info("%d log entries matched more than one campaign", multi)
    insts = set(institutions) | {i for _, i in counts}
    out = []
    for c in sorted(campaigns, key=lambda c: c.campaign_id):
        for i in sorted(insts):
            out.append(ViewCount(c.campaign_id, i, counts.get((c.campaign_id, i), 0), windows[c.campaign_id]))
    return out


def process_logs(
    sources: Iterable,
    assignments: Mapping[str, IpAssignment],
    campaigns: Sequence,
    robot_threshold: int = ROBOT_THRESHOLD,
    min_size: int = MIN_SIZE,
    dedup_seconds: int = DEDUP_SECONDS,
    tail_days: int = VIEW_TAIL_DAYS,
    institutions: Iterable[str] = (),
) -> list[ViewCount]:
    """Robots, validity filters and dedup per daily shard, then counting.

    Each source is one day's log file (or line iterable); counts merge by
    addition across shards.
    """
    total: Counter = Counter()
    insts = set(institutions)
    for src in sources:
        kept = filter_valid(filter_robots(parse_log(src), robot_threshold), min_size, dedup_seconds)
        for vc in count_views(kept, assignments, campaigns, tail_days=tail_days):
            total[(vc.campaign_id, vc.institution_id)] += vc.views
            insts.add(vc.institution_id)
    windows = {c.campaign_id: (c.start_date, c.end_date + dt.timedelta(days=tail_days)) for c in campaigns}
    return [
        ViewCount(c.campaign_id, i, total.get((c.campaign_id, i), 0), windows[c.campaign_id])
        for c in sorted(campaigns, key=lambda c: c.campaign_id)
        for i in sorted(insts)
    ]


def write_views(path, views: Iterable[ViewCount]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["campaign_id", "institution_id", "views", "window_start", "window_end"])
        for v in views:
            w.writerow([v.campaign_id, v.institution_id, v.views, v.window[0].isoformat(), v.window[1].isoformat()])


def read_views(path) -> list[ViewCount]:
    with open(path, newline="") as fh:
        return [
            ViewCount(
                r["campaign_id"],
                r["institution_id"],
                int(r["views"]),
                (dt.date.fromisoformat(r["window_start"]), dt.date.fromisoformat(r["window_end"])),
            )
            for r in csv.DictReader(fh)
        ]
