"""EDGAR index parsing, SGML header parsing and a cached filing fetcher."""

from __future__ import annotations

import datetime as dt
import hashlib
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

log = logging.getLogger(__name__)

CONTEST_FORMS = ("DEFC14A", "DFAN14A", "PREC14A")
THIRTEENF_FORMS = ("13F-HR", "13F-NT", "13F-E")
STUDY_FORMS = CONTEST_FORMS + ("DEF14A", "485BPOS")

DEFAULT_ARCHIVE_URL = "https://www.sec.gov/Archives/edgar/data/{cik}/{accession}.txt"
DEFAULT_INDEX_URL = "https://www.sec.gov/Archives/edgar/full-index/{year}/QTR{quarter}/master.idx"
DEFAULT_USER_AGENT = "proxy-align research contact@example.org"

ACCESSION_RE = re.compile(r"^\d{10}-\d{2}-\d{6}$")


@dataclass(frozen=True)
class IndexEntry:
    cik: int
    company_name: str
    form_type: str
    date_filed: dt.date
    path: str


class IndexEntries(list):
    """Parsed master-index rows; ``skipped`` counts malformed rows."""

    skipped = 0


def parse_master_index(index_text: str) -> IndexEntries:
    """Parse EDGAR ``master.idx`` content (``CIK|Company|Form|Date|Filename``)."""
    out = IndexEntries()
    if not index_text or not index_text.strip():
        log.warning("empty master index")
        return out
    lines = index_text.splitlines()
    start = 0
    for i, ln in enumerate(lines):
        if ln.startswith("---"):
            start = i + 1
            break
    else:
        # no dashed separator: skip a leading column-header row if present
        for i, ln in enumerate(lines):
            if ln.startswith("CIK|"):
                start = i + 1
                break
    skipped = 0
    for ln in lines[start:]:
        if not ln.strip():
            continue
        parts = ln.split("|")
        if len(parts) != 5:
            skipped += 1
            continue
        cik_s, name, form, date_s, path = (p.strip() for p in parts)
        try:
            cik = int(cik_s)
            date_filed = dt.date.fromisoformat(date_s)
        except ValueError:
            skipped += 1
            continue
        if cik <= 0 or not form:
            skipped += 1
            continue
        out.append(IndexEntry(cik, name, form, date_filed, path))
    out.skipped = skipped
    if skipped:
        log.info("master index: skipped %d malformed rows", skipped)
    return out


def serialize_master_index(entries: Iterable[IndexEntry], description: str = "Master Index of EDGAR Dissemination Feed") -> str:
    header = [
        f"Description:           {description}",
        "Last Data Received:    ",
        "Comments:              webmaster@sec.gov",
        "Anonymous FTP:         ftp://ftp.sec.gov/edgar/",
        "",
        "",
        "",
        "",
        "",
        "CIK|Company Name|Form Type|Date Filed|Filename",
        "-" * 80,
    ]
    rows = [f"{e.cik}|{e.company_name}|{e.form_type}|{e.date_filed.isoformat()}|{e.path}" for e in entries]
    return "\n".join(header + rows) + "\n"


def thirteenf_ciks(entries: Iterable[IndexEntry]) -> set[int]:
    return {e.cik for e in entries if e.form_type in THIRTEENF_FORMS}


# --- SGML headers ----------------------------------------------------------


@dataclass
class FilingRecord:
    accession: str
    form_type: str
    filer_cik: int
    subject_cik: int
    filer_name: str
    subject_name: str
    date_filed: dt.date | None
    body: str
    flags: list[str] = field(default_factory=list)


class UnparseableFiling(ValueError):
    pass


_HEADER_RE = re.compile(r"<SEC-HEADER>(.*?)</SEC-HEADER>", re.S | re.I)
_IMS_HEADER_RE = re.compile(r"<IMS-HEADER>(.*?)</IMS-HEADER>", re.S | re.I)
_FIELD_RE = re.compile(r"^\s*([A-Z][A-Z0-9 \-/]*?):\s*(.*?)\s*$")
_SECTION_NAMES = ("SUBJECT COMPANY", "FILED BY", "FILER")


def _header_sections(header: str):
    """Yield (section_name, {field: value}) in header order."""
    top: dict[str, str] = {}
    current_name, current = None, None
    sections = []
    for ln in header.splitlines():
        m = _FIELD_RE.match(ln)
        if not m:
            continue
        key, val = m.group(1).strip(), m.group(2)
        if key in _SECTION_NAMES and not val:
            current_name, current = key, {}
            sections.append((current_name, current))
            continue
        if current is None:
            top.setdefault(key, val)
        else:
            current.setdefault(key, val)
    return top, sections


def _parse_date(s: str) -> dt.date | None:
    s = (s or "").strip()
    for fmt in ("%Y%m%d", "%Y-%m-%d"):
        try:
            return dt.datetime.strptime(s, fmt).date()
        except ValueError:
            pass
    return None


def _cik(section: dict[str, str]) -> int:
    try:
        return int(section.get("CENTRAL INDEX KEY", "0") or 0)
    except ValueError:
        return 0


def parse_sgml_header(body: str | bytes) -> FilingRecord:
    """Pull accession, form type, filer and subject out of an EDGAR SGML header.

    Missing sections leave zero/empty fields and a flag. Duplicate sections
    keep the first occurrence.
    """
    if isinstance(body, (bytes, bytearray)):
        body = bytes(body).decode("utf-8", "replace")
    if not isinstance(body, str):
        raise UnparseableFiling(f"expected text, got {type(body).__name__}")
    m = _HEADER_RE.search(body) or _IMS_HEADER_RE.search(body)
    if m:
        header, rest = m.group(1), body[m.end() :]
    else:
        # bare .hdr.sgml files carry the fields without the wrapper tag
        head = body[:20000]
        if "ACCESSION NUMBER:" not in head:
            raise UnparseableFiling("no SEC header block")
        cut = head.find("<DOCUMENT>")
        header = head if cut < 0 else head[:cut]
        rest = body[len(header) :]
    top, sections = _header_sections(header)
    accession = top.get("ACCESSION NUMBER", "").strip()
    if not ACCESSION_RE.match(accession):
        raise UnparseableFiling(f"bad accession number {accession!r}")
    form = top.get("CONFORMED SUBMISSION TYPE", "").strip()
    flags: list[str] = []

    def pick(name):
        found = [s for n, s in sections if n == name]
        if len(found) > 1:
            flags.append(f"duplicate_{name.lower().replace(' ', '_')}")
            log.info("%s: %d %s blocks, keeping the first", accession, len(found), name)
        return found[0] if found else None

    subject = pick("SUBJECT COMPANY")
    filer = pick("FILED BY") or pick("FILER")
    if filer is None:
        flags.append("missing_filer")
    if subject is None:
        flags.append("missing_subject")
    if form in CONTEST_FORMS and (filer is None or subject is None):
        flags.append("incomplete_contest_header")
    filer = filer or {}
    subject = subject or {}
    return FilingRecord(
        accession=accession,
        form_type=form,
        filer_cik=_cik(filer),
        subject_cik=_cik(subject),
        filer_name=filer.get("COMPANY CONFORMED NAME", "").strip(),
        subject_name=subject.get("COMPANY CONFORMED NAME", "").strip(),
        date_filed=_parse_date(top.get("FILED AS OF DATE", "")),
        body=rest,
        flags=flags,
    )


def filter_13f_filers(filings: Iterable[FilingRecord], thirteenf: set[int]) -> list[FilingRecord]:
    return [f for f in filings if f.filer_cik in thirteenf]


# --- fetching --------------------------------------------------------------


class FetchError(RuntimeError):
    """Retryable: network failure, HTTP error, or cache miss with network disabled."""

    def __init__(self, msg: str, attempts: int):
        super().__init__(f"{msg} (after {attempts} attempt(s))")
        self.attempts = attempts


class CacheCorruption(RuntimeError):
    pass


class RateLimiter:
    """At most ``rate`` acquisitions per second across threads."""

    def __init__(self, rate: float = 10.0):
        self.interval = 1.0 / rate
        self._lock = threading.Lock()
        self._next = 0.0

    def acquire(self) -> None:
        with self._lock:
            now = time.monotonic()
            wait = self._next - now
            self._next = max(now, self._next) + self.interval
        if wait > 0:
            time.sleep(wait)


_DEFAULT_LIMITER = RateLimiter(10.0)


@dataclass
class EdgarClient:
    cache_dir: Path
    network: bool = False
    user_agent: str = field(default_factory=lambda: os.environ.get("PROXY_ALIGN_USER_AGENT", DEFAULT_USER_AGENT))
    archive_url: str = field(default_factory=lambda: os.environ.get("PROXY_ALIGN_ARCHIVE_URL", DEFAULT_ARCHIVE_URL))
    index_url: str = field(default_factory=lambda: os.environ.get("PROXY_ALIGN_INDEX_URL", DEFAULT_INDEX_URL))
    max_attempts: int = 3
    backoff: float = 1.0
    limiter: RateLimiter = field(default_factory=lambda: _DEFAULT_LIMITER)
    _locks: dict = field(default_factory=dict, repr=False)
    _locks_guard: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self):
        self.cache_dir = Path(self.cache_dir)

    def _lock_for(self, key: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(key, threading.Lock())

    def cache_path(self, accession: str, cik: int) -> Path:
        return self.cache_dir / str(cik) / f"{accession}.txt"

    def _find_cached(self, accession: str) -> Path | None:
        hits = sorted(self.cache_dir.glob(f"*/{accession}.txt"))
        return hits[0] if hits else None

    @staticmethod
    def _read_verified(path: Path) -> bytes:
        data = path.read_bytes()
        digest_file = path.with_suffix(".sha256")
        if not digest_file.exists():
            raise CacheCorruption(f"{path}: checksum file missing")
        if hashlib.sha256(data).hexdigest() != digest_file.read_text().strip():
            raise CacheCorruption(f"{path}: checksum mismatch")
        return data

    def _get(self, url: str) -> bytes:
        import requests

        attempts = 0
        last = ""
        while attempts < self.max_attempts:
            attempts += 1
            self.limiter.acquire()
            try:
                resp = requests.get(url, headers={"User-Agent": self.user_agent}, timeout=30)
            except requests.RequestException as exc:
                last = str(exc)
            else:
                if resp.status_code == 200 and resp.content:
                    return resp.content
                last = f"HTTP {resp.status_code}"
            if attempts < self.max_attempts:
                time.sleep(self.backoff * attempts)
        raise FetchError(f"GET {url} failed: {last}", attempts)

    def fetch_filing(self, accession: str, cik: int | None = None) -> bytes:
        """Raw submission text, from cache when present."""
        if not ACCESSION_RE.match(accession):
            raise ValueError(f"malformed accession {accession!r}")
        with self._lock_for(accession):
            hit = self._find_cached(accession)
            if hit is not None:
                return self._read_verified(hit)
            if not self.network:
                raise FetchError(f"{accession} not cached and network disabled", 0)
            cik = int(accession[:10]) if cik is None else int(cik)
            data = self._get(self.archive_url.format(cik=cik, accession=accession))
            self._store(self.cache_path(accession, cik), data)
            return data

    @staticmethod
    def _store(path: Path, data: bytes) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".part")
        tmp.write_bytes(data)
        path.with_suffix(".sha256").write_text(hashlib.sha256(data).hexdigest() + "\n")
        tmp.replace(path)

    def store_filing(self, accession: str, cik: int, data: bytes) -> Path:
        """Place already-downloaded bytes into the cache layout."""
        path = self.cache_path(accession, cik)
        self._store(path, data)
        return path

    def fetch_master_index(self, year: int, quarter: int) -> str:
        path = self.cache_dir / "index" / f"{year}Q{quarter}.idx"
        if path.exists():
            return self._read_verified(path).decode("latin-1")
        if not self.network:
            raise FetchError(f"index {year}Q{quarter} not cached and network disabled", 0)
        data = self._get(self.index_url.format(year=year, quarter=quarter))
        self._store(path, data)
        return data.decode("latin-1")


def fetch_filing(accession: str, cache_dir, network: bool = False, cik: int | None = None) -> bytes:
    return EdgarClient(Path(cache_dir), network=network).fetch_filing(accession, cik)


def quarter_range(start: str, stop: str) -> list[tuple[int, int]]:
    """Inclusive list of (year, quarter) from labels like ``2003Q3``."""

    def parse(s):
        m = re.fullmatch(r"(\d{4})Q([1-4])", s.strip().upper())
        if not m:
            raise ValueError(f"bad quarter label {s!r}")
        return int(m.group(1)), int(m.group(2))

    y, q = parse(start)
    y1, q1 = parse(stop)
    out = []
    while (y, q) <= (y1, q1):
        out.append((y, q))
        q += 1
        if q == 5:
            y, q = y + 1, 1
    return out
