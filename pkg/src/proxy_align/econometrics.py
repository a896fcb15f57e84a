"""Fixed-effects OLS with clustered / HC1 errors and table rendering."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd
from scipy import stats
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from . import kernels

log = logging.getLogger(__name__)


class RankDeficient(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


def standardize(col, name: str = "column") -> np.ndarray:
    """Divide by the sample SD (ddof=1). No centering."""
    x = np.asarray(col, dtype=float)
    if x.size < 2:
        raise ValueError(f"cannot standardize {name}: fewer than two values")
    sd = x.std(ddof=1)
    if not np.isfinite(sd) or sd <= 0:
        raise ValueError(f"cannot standardize {name}: zero standard deviation")
    return x / sd


def _codes(factor) -> tuple[np.ndarray, int]:
    codes, uniques = pd.factorize(pd.Series(factor), sort=True)
    if (codes < 0).any():
        raise ValueError("missing values in fixed-effect factor")
    return codes.astype(np.int64), len(uniques)


def absorbed_dof(factors: Sequence) -> int:
    """Number of parameters absorbed by the fixed effects.

    One factor absorbs its level count; two factors absorb G1 + G2 minus the
    number of connected components of the bipartite level graph.
    """
    if not factors:
        return 0
    coded = [_codes(f) for f in factors]
    if len(coded) == 1:
        return coded[0][1]
    if len(coded) > 2:
        raise ValueError("at most two fixed-effect factors are supported")
    (c1, g1), (c2, g2) = coded
    n = c1.size
    adj = coo_matrix((np.ones(n), (c1, c2 + g1)), shape=(g1 + g2, g1 + g2))
    n_comp, _ = connected_components(adj, directed=False)
    return g1 + g2 - n_comp


def within_transform(data, fe_factors: Sequence, tol: float = 1e-10, max_sweeps: int = 10_000):
    """Demean columns of ``data`` over up to two factors by alternating projections.

    Returns ``(demeaned, n_sweeps)``. The input is not modified.
    """
    arr = np.array(data, dtype=np.float64, order="C", copy=True)
    squeeze = arr.ndim == 1
    if squeeze:
        arr = arr[:, None]
    if len(fe_factors) > 2:
        raise ValueError("at most two fixed-effect factors are supported")
    if not fe_factors:
        return (arr[:, 0] if squeeze else arr), 0
    coded = [_codes(f) for f in fe_factors]
    for c, _ in coded:
        if c.size != arr.shape[0]:
            raise ValueError("factor length does not match data")
    codes = [c for c, _ in coded]
    n_groups = [g for _, g in coded]
    sweeps = kernels.demean_sweeps(arr, codes, n_groups, tol, max_sweeps)
    if sweeps < 0:
        raise ConvergenceError(f"demeaning did not converge in {max_sweeps} sweeps")
    return (arr[:, 0] if squeeze else arr), sweeps


@dataclass
class RegressionResult:
    names: list[str]
    coef: np.ndarray
    se: np.ndarray | None = None
    r2: float = float("nan")
    n: int = 0
    residuals: np.ndarray | None = None
    k_total: int = 0
    se_kind: str = "none"
    df_resid: int = 0
    n_clusters: int | None = None
    fe: tuple = ()
    spec_name: str = ""
    _X: np.ndarray | None = field(default=None, repr=False)
    _bread: np.ndarray | None = field(default=None, repr=False)

    @property
    def t_stat(self) -> np.ndarray:
        return self.coef / self.se

    @property
    def p_value(self) -> np.ndarray:
        df = (self.n_clusters - 1) if self.se_kind == "cluster" and self.n_clusters else max(self.df_resid, 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            return 2 * stats.t.sf(np.abs(self.t_stat), df)

    def as_dict(self) -> dict:
        return {
            "spec": self.spec_name,
            "n": self.n,
            "r2": self.r2,
            "se_kind": self.se_kind,
            "coef": dict(zip(self.names, map(float, self.coef))),
            "se": dict(zip(self.names, map(float, self.se))) if self.se is not None else None,
        }


def ols(y, X, names: Sequence[str] | None = None, rank_tol: float = 1e-10) -> RegressionResult:
    """Least squares through a QR factorization."""
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, k = X.shape
    names = list(names) if names is not None else [f"x{j}" for j in range(k)]
    if n < k:
        raise RankDeficient(f"{n} observations for {k} regressors")
    Q, R = np.linalg.qr(X)
    d = np.abs(np.diag(R))
    scale = max(np.linalg.norm(X, axis=0).max(), 1e-300)
    bad = [names[j] for j in range(k) if d[j] <= rank_tol * scale]
    if bad:
        raise RankDeficient("regressors are linearly dependent: " + ", ".join(bad))
    coef = np.linalg.solve(R, Q.T @ y)
    resid = y - X @ coef
    Rinv = np.linalg.solve(R, np.eye(k))
    bread = Rinv @ Rinv.T
    return RegressionResult(names=names, coef=coef, n=n, residuals=resid, k_total=k, df_resid=n - k, _X=X, _bread=bread)


def classical_se(result: RegressionResult) -> np.ndarray:
    e = result.residuals
    s2 = e @ e / (result.n - result.k_total)
    return np.sqrt(np.diag(result._bread) * s2)


def robust_se(result: RegressionResult) -> np.ndarray:
    """HC1 sandwich standard errors."""
    X, e, n, k = result._X, result.residuals, result.n, result.k_total
    if n <= k:
        raise ValueError("no residual degrees of freedom")
    Xe = X * e[:, None]
    meat = Xe.T @ Xe
    V = n / (n - k) * result._bread @ meat @ result._bread
    return np.sqrt(np.clip(np.diag(V), 0.0, None))


def cluster_se(result: RegressionResult, clusters, k_fe: int | None = None) -> np.ndarray:
    """Cluster-robust sandwich SEs with the G/(G-1) * (N-1)/(N-K) correction.

    ``k_fe`` overrides the absorbed-parameter count stored on the result.
    """
    X, e, n = result._X, result.residuals, result.n
    codes, G = _codes(clusters)
    if codes.size != n:
        raise ValueError("cluster labels do not match rows")
    if G < 2:
        raise ValueError("clustered errors need at least two clusters")
    k = result.k_total if k_fe is None else X.shape[1] + k_fe
    if n <= k:
        raise ValueError("no residual degrees of freedom")
    scores = np.zeros((G, X.shape[1]))
    np.add.at(scores, codes, X * e[:, None])
    meat = scores.T @ scores
    factor = G / (G - 1) * (n - 1) / (n - k)
    V = factor * result._bread @ meat @ result._bread
    return np.sqrt(np.clip(np.diag(V), 0.0, None))


def r_squared(y, residuals) -> float:
    """Overall R^2 on the untransformed outcome."""
    y = np.asarray(y, dtype=float)
    sst = ((y - y.mean()) ** 2).sum()
    if sst <= 0:
        raise ValueError("outcome has zero total variation")
    return float(1.0 - (np.asarray(residuals) ** 2).sum() / sst)


# --- specs ------------------------------------------------------------------


@dataclass
class RegressionSpec:
    name: str
    outcome: str
    regressors: list[str]
    fe: list[str] = field(default_factory=list)
    cluster: str | None = None
    robust: bool = False
    standardize: bool = True
    interactions: list[tuple[str, str]] = field(default_factory=list)
    add_constant: bool = True
    sample: str | None = None  # optional pandas query applied first

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionSpec":
        d = dict(d)
        d["interactions"] = [tuple(p) for p in d.get("interactions", [])]
        d["regressors"] = list(d.get("regressors", []))
        d["fe"] = list(d.get("fe", []))
        return cls(**d)

    def columns(self) -> list[str]:
        cols = [self.outcome, *self.regressors, *self.fe]
        for a, b in self.interactions:
            cols += [a, b]
        if self.cluster:
            cols.append(self.cluster)
        return list(dict.fromkeys(cols))


def _is_binary(x: np.ndarray) -> bool:
    return bool(np.isin(x, (0.0, 1.0)).all())


def design(data: pd.DataFrame, spec: RegressionSpec):
    """Build (y, X, names, frame) after sample selection and standardization.

    Binary regressors are left unscaled; interactions multiply the
    (standardized) base columns.
    """
    missing = [c for c in spec.columns() if c not in data.columns]
    if missing:
        raise KeyError("missing columns: " + ", ".join(missing))
    df = data.query(spec.sample) if spec.sample else data
    df = df.dropna(subset=spec.columns())
    if df.empty:
        raise ValueError(f"{spec.name}: no rows after dropping missing values")
    base = {}
    for c in dict.fromkeys([*spec.regressors, *[v for p in spec.interactions for v in p]]):
        x = df[c].to_numpy(dtype=float)
        if spec.standardize and not _is_binary(x):
            x = standardize(x, c)
        base[c] = x
    cols, names = [], []
    for c in spec.regressors:
        cols.append(base[c])
        names.append(c)
    for a, b in spec.interactions:
        cols.append(base[a] * base[b])
        names.append(f"{a}*{b}")
    X = np.column_stack(cols) if cols else np.empty((len(df), 0))
    y = df[spec.outcome].to_numpy(dtype=float)
    return y, X, names, df


def run_spec(data: pd.DataFrame, spec: RegressionSpec, tol: float = 1e-10) -> RegressionResult:
    y, X, names, df = design(data, spec)
    factors = [df[f].to_numpy() for f in spec.fe]
    if factors:
        Z, _ = within_transform(np.column_stack([y, X]), factors, tol=tol)
        yw, Xw = Z[:, 0], Z[:, 1:]
        k_fe = absorbed_dof(factors)
    else:
        yw, Xw = y, X
        k_fe = 0
        if spec.add_constant:
            Xw = np.column_stack([Xw, np.ones_like(y)])
            names = names + ["const"]
    res = ols(yw, Xw, names)
    res.k_total = Xw.shape[1] + k_fe
    res.df_resid = res.n - res.k_total
    res.r2 = r_squared(y, res.residuals)
    res.fe = tuple(spec.fe)
    res.spec_name = spec.name
    if spec.cluster:
        res.se = cluster_se(res, df[spec.cluster].to_numpy())
        res.se_kind = "cluster"
        res.n_clusters = int(df[spec.cluster].nunique())
    elif spec.robust:
        res.se = robust_se(res)
        res.se_kind = "robust"
    else:
        res.se = classical_se(res)
        res.se_kind = "classical"
    return res


# --- tables -----------------------------------------------------------------


def stars(p: float) -> str:
    if not np.isfinite(p):
        return ""
    return "***" if p < 0.01 else "**" if p < 0.05 else "*" if p < 0.10 else ""


def _cells(results: Sequence[RegressionResult], digits: int):
    names = list(dict.fromkeys(n for r in results for n in r.names))
    rows = []
    for nm in names:
        coef_row, t_row = [nm], [""]
        for r in results:
            if nm in r.names:
                j = r.names.index(nm)
                coef_row.append(f"{r.coef[j]:.{digits}f}{stars(r.p_value[j])}")
                t_row.append(f"[{r.t_stat[j]:.2f}]")
            else:
                coef_row.append("")
                t_row.append("")
        rows += [coef_row, t_row]
    fes = list(dict.fromkeys(f for r in results for f in r.fe))
    for f in fes:
        rows.append([f"FE {f}"] + ["Yes" if f in r.fe else "No" for r in results])
    rows.append(["Observations"] + [f"{r.n:,}" for r in results])
    rows.append(["R2"] + [f"{r.r2:.3f}" for r in results])
    header = [""] + [r.spec_name or f"({i + 1})" for i, r in enumerate(results)]
    return header, rows


def render_table(results: Sequence[RegressionResult], digits: int = 3) -> str:
    """Plain-text table: coefficients with stars, t-statistics in brackets."""
    header, rows = _cells(results, digits)
    widths = [max(len(str(r[j])) for r in [header] + rows) for j in range(len(header))]
    fmt = lambda r: "  ".join(str(c).ljust(widths[0]) if j == 0 else str(c).rjust(widths[j]) for j, c in enumerate(r))
    rule = "-" * len(fmt(header))
    lines = [rule, fmt(header), rule] + [fmt(r) for r in rows] + [rule]
    lines.append("t-statistics in brackets; * p<0.10, ** p<0.05, *** p<0.01")
    return "\n".join(lines) + "\n"


def render_csv(results: Sequence[RegressionResult], digits: int = 3) -> str:
    header, rows = _cells(results, digits)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()
