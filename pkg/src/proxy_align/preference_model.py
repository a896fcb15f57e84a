"""Per-institution voting-preference models.

Labels are the fraction of an institution's funds that did not follow the
management recommendation on a proposal. A linear epsilon-insensitive SVR
maps phrase counts to that fraction; the regularization constant is picked
by k-fold cross-validation on mean absolute error.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from . import kernels
from .text_features import DocVector, to_matrix

log = logging.getLogger(__name__)

VOTE_CODES = ("for", "against", "abstain", "withhold", "do_not_vote", "none")
_VOTE_ALIASES = {
    "do not vote": "do_not_vote",
    "dnv": "do_not_vote",
    "donotvote": "do_not_vote",
    "do-not-vote": "do_not_vote",
    "withheld": "withhold",
    "": "none",
    "n/a": "none",
}

MODEL_MAGIC = "#proxy-align-model"
MODEL_FORMAT = 1


def normalize_vote(code: str) -> str:
    c = (code or "").strip().lower()
    c = _VOTE_ALIASES.get(c, c.replace(" ", "_"))
    if c not in VOTE_CODES:
        raise ValueError(f"unknown vote code {code!r}")
    return c


@dataclass(frozen=True)
class VoteRecord:
    institution_id: str
    fund_id: str
    proposal_id: str
    meeting_date: dt.date
    mgmt_rec: str
    cast: str
    description: str = ""

    def __post_init__(self):
        object.__setattr__(self, "mgmt_rec", normalize_vote(self.mgmt_rec))
        object.__setattr__(self, "cast", normalize_vote(self.cast))

    @property
    def against_mgmt(self) -> bool:
        return self.cast != self.mgmt_rec


VOTE_FIELDS = ["institution_id", "fund_id", "proposal_id", "meeting_date", "mgmt_rec", "cast", "description"]


def read_votes(path) -> list[VoteRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(VOTE_FIELDS) - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"{path}: votes file lacks columns {sorted(missing)}")
        return [
            VoteRecord(
                r["institution_id"],
                r["fund_id"],
                r["proposal_id"],
                dt.date.fromisoformat(r["meeting_date"]),
                r["mgmt_rec"],
                r["cast"],
                r["description"],
            )
            for r in reader
        ]


def write_votes(path, votes: Iterable[VoteRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(VOTE_FIELDS)
        for v in votes:
            w.writerow([v.institution_id, v.fund_id, v.proposal_id, v.meeting_date.isoformat(), v.mgmt_rec, v.cast, v.description])


def index_votes(votes: Iterable[VoteRecord]) -> dict[str, dict[str, list[VoteRecord]]]:
    """institution -> proposal -> fund-level records."""
    out: dict[str, dict[str, list[VoteRecord]]] = defaultdict(lambda: defaultdict(list))
    for v in votes:
        out[v.institution_id][v.proposal_id].append(v)
    return out


def make_label(records: Sequence[VoteRecord]) -> float:
    """Fraction of fund votes that differ from the management recommendation."""
    if not records:
        raise ValueError("make_label needs at least one fund record")
    return sum(r.against_mgmt for r in records) / len(records)


def years_before(d: dt.date, years: int) -> dt.date:
    try:
        return d.replace(year=d.year - years)
    except ValueError:  # Feb 29
        return d.replace(year=d.year - years, day=28)


@dataclass
class LabeledExample:
    proposal_id: str
    x: DocVector
    y: float

    def __post_init__(self):
        if not 0.0 <= self.y <= 1.0:
            raise ValueError(f"label {self.y} outside [0, 1]")


def select_training_set(
    votes_by_proposal: dict[str, list[VoteRecord]],
    vectors: dict[str, DocVector],
    as_of: dt.date,
    window_years: int = 2,
    min_n: int = 100,
) -> list[LabeledExample] | None:
    """Labeled proposals voted in ``[as_of - window_years, as_of]``.

    ``votes_by_proposal`` holds one institution's records. Proposals without a
    text vector are skipped. Returns None below ``min_n`` examples.
    """
    start = years_before(as_of, window_years)
    out = []
    for pid in sorted(votes_by_proposal):
        recs = votes_by_proposal[pid]
        if pid not in vectors or not recs:
            continue
        if start <= recs[0].meeting_date <= as_of:
            out.append(LabeledExample(pid, vectors[pid], make_label(recs)))
    if len(out) < min_n:
        return None
    return out


# --- SVR -------------------------------------------------------------------


def default_c_grid() -> list[float]:
    return [10.0**j for j in range(-15, 5)]


@dataclass
class SvrConfig:
    epsilon: float = 0.001
    c_grid: list[float] = field(default_factory=default_c_grid)
    folds: int = 3
    tolerance: float = 1e-6
    seed: int = 0
    max_iter: int = 10_000_000

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if not self.c_grid:
            raise ValueError("c_grid must be non-empty")
        if self.folds < 2:
            raise ValueError("folds must be at least 2")


def svr_objective(alpha: float, beta, X, y, C: float, epsilon: float) -> float:
    """0.5 * ||beta||^2 + C * sum(max(0, |y - alpha - X beta| - epsilon))."""
    beta = np.asarray(beta, dtype=np.float64)
    r = np.asarray(y, dtype=np.float64) - alpha - np.asarray(X @ beta).ravel()
    return 0.5 * float(beta @ beta) + C * float(np.maximum(0.0, np.abs(r) - epsilon).sum())


def tube_intercept(residuals, epsilon: float) -> float:
    """Intercept minimizing the epsilon-insensitive loss of ``residuals - a``.

    The loss is convex and piecewise linear with kinks at ``r +/- epsilon``;
    the midpoint of its set of minimizers is returned.
    """
    r = np.asarray(residuals, dtype=np.float64)
    if r.size == 0:
        return 0.0
    lo = np.sort(r - epsilon)
    hi = np.sort(r + epsilon)
    cand = np.unique(np.concatenate([lo, hi]))
    # sum over lo > a of (lo - a)
    lo_suffix = np.concatenate([np.cumsum(lo[::-1])[::-1], [0.0]])
    k_lo = np.searchsorted(lo, cand, side="right")
    above = lo_suffix[k_lo] - (lo.size - k_lo) * cand
    # sum over hi < a of (a - hi)
    hi_prefix = np.concatenate([[0.0], np.cumsum(hi)])
    k_hi = np.searchsorted(hi, cand, side="left")
    below = k_hi * cand - hi_prefix[k_hi]
    h = above + below
    best = h.min()
    on_min = cand[h <= best + 1e-12 * (1.0 + abs(best))]
    return float(0.5 * (on_min[0] + on_min[-1]))


def _check_inputs(X, y):
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1 or y.size == 0:
        raise ValueError("train_svr needs a non-empty 1-d target")
    if X.shape[0] != y.size:
        raise ValueError(f"X has {X.shape[0]} rows but y has {y.size}")
    data = X.data if sp.issparse(X) else np.asarray(X)
    if not (np.all(np.isfinite(data)) and np.all(np.isfinite(y))):
        raise ValueError("train_svr received non-finite inputs")
    return y


def _fit_dual(K, y, C, epsilon, tol, max_iter):
    """Dual coefficients and intercept from a precomputed Gram matrix."""
    n = y.size
    if C * n < 1e-12:
        coef = np.zeros(n)
    else:
        coef, n_iter, converged = kernels.smo_svr(K, y, epsilon, C, tol, max_iter)
        if not converged:
            log.warning("SMO hit max_iter=%d at C=%g before reaching tol=%g", max_iter, C, tol)
    alpha = tube_intercept(y - K @ coef, epsilon)
    return coef, alpha


def gram(X) -> np.ndarray:
    K = X @ X.T
    K = K.toarray() if sp.issparse(K) else np.asarray(K)
    return np.ascontiguousarray(K, dtype=np.float64)


def train_svr(X, y, C: float, epsilon: float = 0.001, tol: float = 1e-6, max_iter: int = 10_000_000):
    """Fit a linear epsilon-SVR with an unpenalized intercept.

    Returns ``(alpha, beta)``. ``X`` may be dense or scipy-sparse.
    """
    y = _check_inputs(X, y)
    coef, alpha = _fit_dual(gram(X), y, C, epsilon, tol, max_iter)
    beta = np.asarray(X.T @ coef).ravel()
    return alpha, beta


def _fold_ids(n: int, folds: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    ids = np.arange(n) % folds
    return ids[rng.permutation(n)]


def grid_search(X, y, config: SvrConfig, return_table: bool = False):
    """Pick C by k-fold CV on mean absolute error of clamped predictions.

    Ties go to the smaller C. Returns ``(best_c, cv_mae)`` and, with
    ``return_table``, also a list of ``(c, mae, mse)`` rows.
    """
    y = _check_inputs(X, y)
    n = y.size
    if n < config.folds:
        raise ValueError(f"need at least {config.folds} examples for {config.folds}-fold CV, got {n}")
    K = gram(X)
    fold = _fold_ids(n, config.folds, config.seed)
    splits = []
    for k in range(config.folds):
        te = np.flatnonzero(fold == k)
        tr = np.flatnonzero(fold != k)
        splits.append((tr, te, np.ascontiguousarray(K[np.ix_(tr, tr)]), K[np.ix_(te, tr)]))
    table = []
    best_c, best_mae = None, np.inf
    for c in sorted(config.c_grid):
        abs_err = np.empty(n)
        for tr, te, Ktr, Kte in splits:
            coef, alpha = _fit_dual(Ktr, y[tr], c, config.epsilon, config.tolerance, config.max_iter)
            pred = np.clip(alpha + Kte @ coef, 0.0, 1.0)
            abs_err[te] = np.abs(y[te] - pred)
        mae = float(abs_err.mean())
        mse = float((abs_err**2).mean())
        table.append((c, mae, mse))
        log.debug("C=%g mae=%.6f mse=%.6f", c, mae, mse)
        if mae < best_mae - 1e-12 * max(1.0, best_mae if np.isfinite(best_mae) else 1.0):
            best_c, best_mae = c, mae
    if return_table:
        return best_c, best_mae, table
    return best_c, best_mae


def out_of_fold_mae(X, y, config: SvrConfig) -> tuple[float, float]:
    """Nested CV: C is re-selected inside every outer training fold.

    Returns ``(svr_mae, constant_mae)`` where the constant predictor is the
    outer training-fold mean.
    """
    y = _check_inputs(X, y)
    X = sp.csr_matrix(X) if sp.issparse(X) else np.asarray(X)
    fold = _fold_ids(y.size, config.folds, config.seed + 1)
    err = np.empty(y.size)
    err0 = np.empty(y.size)
    for k in range(config.folds):
        te = np.flatnonzero(fold == k)
        tr = np.flatnonzero(fold != k)
        c, _ = grid_search(X[tr], y[tr], config)
        alpha, beta = train_svr(X[tr], y[tr], c, config.epsilon, config.tolerance, config.max_iter)
        pred = np.clip(alpha + np.asarray(X[te] @ beta).ravel(), 0.0, 1.0)
        err[te] = np.abs(y[te] - pred)
        err0[te] = np.abs(y[te] - y[tr].mean())
    return float(err.mean()), float(err0.mean())


# --- models ----------------------------------------------------------------


@dataclass
class InstitutionModel:
    institution_id: str
    alpha: float
    beta: np.ndarray
    vocab_version: str
    window: tuple[dt.date, dt.date]
    n_train: int
    cv_mae: float
    best_c: float = float("nan")

    @property
    def K(self) -> int:
        return int(self.beta.shape[0])

    def to_text(self) -> str:
        header = {
            "institution_id": self.institution_id,
            "window": [self.window[0].isoformat(), self.window[1].isoformat()],
            "vocab_version": self.vocab_version,
            "alpha": repr(float(self.alpha)),
            "cv_mae": repr(float(self.cv_mae)),
            "best_c": repr(float(self.best_c)),
            "n_train": int(self.n_train),
            "K": self.K,
        }
        lines = [f"{MODEL_MAGIC}\t{MODEL_FORMAT}", json.dumps(header, sort_keys=True)]
        for k in np.flatnonzero(self.beta):
            lines.append(f"{k}\t{float(self.beta[k])!r}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "InstitutionModel":
        lines = text.splitlines()
        if len(lines) < 2 or not lines[0].startswith(MODEL_MAGIC):
            raise ValueError("not a model file")
        fmt = int(lines[0].split("\t")[1])
        if fmt != MODEL_FORMAT:
            raise ValueError(f"unsupported model format {fmt}")
        h = json.loads(lines[1])
        beta = np.zeros(int(h["K"]))
        for ln in lines[2:]:
            if ln:
                k, v = ln.split("\t")
                beta[int(k)] = float(v)
        return cls(
            institution_id=h["institution_id"],
            alpha=float(h["alpha"]),
            beta=beta,
            vocab_version=h["vocab_version"],
            window=(dt.date.fromisoformat(h["window"][0]), dt.date.fromisoformat(h["window"][1])),
            n_train=int(h["n_train"]),
            cv_mae=float(h["cv_mae"]),
            best_c=float(h["best_c"]),
        )

    @classmethod
    def load(cls, path) -> "InstitutionModel":
        return cls.from_text(Path(path).read_text())


class VocabularyMismatch(ValueError):
    pass


def fit_institution_model(
    examples: Sequence[LabeledExample],
    K: int,
    vocab_version: str,
    config: SvrConfig,
    institution_id: str = "",
    window: tuple[dt.date, dt.date] | None = None,
) -> InstitutionModel:
    """Grid-search C, then refit on all examples."""
    for ex in examples:
        if ex.x.vocab_version and ex.x.vocab_version != vocab_version:
            raise VocabularyMismatch(f"example {ex.proposal_id} built on vocab {ex.x.vocab_version}")
    X = to_matrix([ex.x for ex in examples], K)
    y = np.array([ex.y for ex in examples])
    best_c, cv_mae = grid_search(X, y, config)
    alpha, beta = train_svr(X, y, best_c, config.epsilon, config.tolerance, config.max_iter)
    if window is None:
        window = (dt.date.min, dt.date.min)
    return InstitutionModel(institution_id, alpha, beta, vocab_version, window, len(examples), cv_mae, best_c)


def raw_score(model: InstitutionModel, x: DocVector) -> float:
    if x.vocab_version and model.vocab_version and x.vocab_version != model.vocab_version:
        raise VocabularyMismatch(
            f"document built on vocab {x.vocab_version}, model {model.institution_id} on {model.vocab_version}"
        )
    s = model.alpha
    for k, c in x.counts.items():
        if k >= model.K:
            raise VocabularyMismatch(f"phrase index {k} outside model vocabulary of size {model.K}")
        s += model.beta[k] * c
    return float(s)


def predict_align(model: InstitutionModel, x: DocVector) -> float:
    """Linear score clamped to [0, 1]."""
    return min(1.0, max(0.0, raw_score(model, x)))


def evaluate_mae(model: InstitutionModel, heldout: Sequence[LabeledExample]) -> float:
    if not heldout:
        raise ValueError("evaluate_mae needs at least one held-out example")
    return float(np.mean([abs(ex.y - predict_align(model, ex.x)) for ex in heldout]))


def export_coefficients(model: InstitutionModel, phrases: Sequence[str]) -> list[tuple[str, float]]:
    """(phrase, coefficient x 10,000) for every phrase, largest magnitude first."""
    if len(phrases) != model.K:
        raise VocabularyMismatch(f"{len(phrases)} phrases for a model with K={model.K}")
    rows = [(p, float(b) * 10_000.0) for p, b in zip(phrases, model.beta)]
    rows.sort(key=lambda r: (-abs(r[1]), r[0]))
    return rows
