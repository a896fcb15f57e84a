"""Text normalization and sparse n-gram count vectors."""

from __future__ import annotations

import hashlib
import html
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
import snowballstemmer

VOCAB_MAGIC = "#proxy-align-vocab"
VOCAB_FORMAT = 1

_TAG_RE = re.compile(r"<[^>]+>")
_WORD_RE = re.compile(r"[^\W\d_]+")


@lru_cache(maxsize=None)
def load_stopwords(path: str | None = None) -> frozenset[str]:
    if path is None:
        text = resources.files("proxy_align").joinpath("data/stopwords.txt").read_text()
    else:
        text = Path(path).read_text()
    words = (ln.strip().lower() for ln in text.splitlines())
    return frozenset(w for w in words if w and not w.startswith("#"))


@lru_cache(maxsize=None)
def _stemmer(name: str):
    return snowballstemmer.stemmer(name)


def normalize(text: str, stopwords: frozenset[str] | None = None, stemmer: str = "porter") -> list[str]:
    """Lowercase, strip markup/digits/punctuation, drop stop words, stem.

    Tokens with non-ASCII letters are dropped (a coarse filter for non-English
    words). ``stemmer`` is any snowball algorithm name; ``"none"`` disables it.
    """
    if not text:
        return []
    if stopwords is None:
        stopwords = load_stopwords()
    text = html.unescape(_TAG_RE.sub(" ", text)).lower()
    tokens = [t for t in _WORD_RE.findall(text) if t.isascii() and t not in stopwords]
    if stemmer != "none" and tokens:
        tokens = _stemmer(stemmer).stemWords(tokens)
    return tokens


def iter_ngrams(tokens: Sequence[str], max_n: int) -> Iterable[str]:
    """All contiguous 1..max_n-grams, joined by a single space."""
    L = len(tokens)
    for n in range(1, max_n + 1):
        for i in range(L - n + 1):
            yield " ".join(tokens[i : i + n])


@dataclass
class Vocabulary:
    phrases: list[str]
    doc_freq: list[int]
    n_docs: int = 0
    max_n: int = 5
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.index = {p: i for i, p in enumerate(self.phrases)}
        if len(self.index) != len(self.phrases):
            raise ValueError("vocabulary phrases must be unique")

    @property
    def K(self) -> int:
        return len(self.phrases)

    def __len__(self):
        return len(self.phrases)

    def to_text(self) -> str:
        lines = [f"{VOCAB_MAGIC}\t{VOCAB_FORMAT}\tn_docs={self.n_docs}\tmax_n={self.max_n}"]
        lines += [f"{p}\t{d}" for p, d in zip(self.phrases, self.doc_freq)]
        return "\n".join(lines) + "\n"

    @property
    def version(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "Vocabulary":
        lines = text.splitlines()
        if not lines or not lines[0].startswith(VOCAB_MAGIC):
            raise ValueError("not a vocabulary file")
        meta = dict(kv.split("=", 1) for kv in lines[0].split("\t")[2:])
        phrases, dfs = [], []
        for ln in lines[1:]:
            if not ln:
                continue
            phrase, df = ln.rsplit("\t", 1)
            phrases.append(phrase)
            dfs.append(int(df))
        return cls(phrases, dfs, n_docs=int(meta.get("n_docs", 0)), max_n=int(meta.get("max_n", 5)))

    @classmethod
    def load(cls, path) -> "Vocabulary":
        return cls.from_text(Path(path).read_text())


def build_vocabulary(
    corpus: Sequence[Sequence[str]], max_n: int = 5, min_df: float = 0.01, max_df: float = 0.70
) -> Vocabulary:
    """Keep n-grams whose document share lies strictly inside (min_df, max_df)."""
    if not corpus:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    N = len(corpus)
    df: Counter[str] = Counter()
    for doc in corpus:
        df.update(set(iter_ngrams(doc, max_n)))
    keep = sorted(p for p, c in df.items() if min_df < c / N < max_df)
    return Vocabulary(keep, [df[p] for p in keep], n_docs=N, max_n=max_n)


@dataclass
class DocVector:
    doc_id: str
    counts: dict[int, int]
    vocab_version: str = ""

    def to_json(self) -> str:
        pairs = sorted(self.counts.items())
        return json.dumps({"doc_id": self.doc_id, "vocab_version": self.vocab_version, "counts": pairs})

    @classmethod
    def from_json(cls, line: str) -> "DocVector":
        d = json.loads(line)
        return cls(d["doc_id"], {int(i): int(c) for i, c in d["counts"]}, d.get("vocab_version", ""))


def vectorize(doc: Sequence[str], vocab: Vocabulary, doc_id: str = "") -> DocVector:
    """Raw counts of vocabulary phrases; overlapping occurrences all count."""
    counts: Counter[int] = Counter()
    index = vocab.index
    for gram in iter_ngrams(doc, vocab.max_n):
        k = index.get(gram)
        if k is not None:
            counts[k] += 1
    return DocVector(doc_id, dict(counts), vocab.version)


def to_matrix(vectors: Sequence[DocVector], K: int) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    for r, v in enumerate(vectors):
        for k, c in v.counts.items():
            rows.append(r)
            cols.append(k)
            vals.append(c)
    return sp.csr_matrix(
        (np.asarray(vals, dtype=np.float64), (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64))),
        shape=(len(vectors), K),
    )


def phrase_counts(text: str, vocab: Vocabulary, **normalize_kwargs) -> dict[str, int]:
    """Occurrences of each vocabulary phrase in ``text`` (used for guideline documents)."""
    vec = vectorize(normalize(text, **normalize_kwargs), vocab)
    return {vocab.phrases[k]: c for k, c in vec.counts.items()}
