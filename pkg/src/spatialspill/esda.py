"""Exploratory spatial data analysis.

Descriptive statistics with group contrasts and correlation stars, global
Moran's I, LM diagnostics on OLS residuals, and local Moran (LISA)
clustering with conditional permutation inference.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .errors import ConstantColumn, ConstantVector, InvalidValue, LengthMismatch
from .estimators import FitResult
from .ingest import AttributeTable
from .weights import WeightsMatrix

__all__ = [
    "DescriptiveReport",
    "MoranResult",
    "DiagnosticsReport",
    "LisaResult",
    "describe",
    "global_moran",
    "lm_diagnostics",
    "local_moran",
    "stars",
]


def stars(p: float) -> str:
    if p < 0.01:
        return "***"
    if p < 0.05:
        return "**"
    if p < 0.1:
        return "*"
    return ""


def _two_sided_pseudo_p(observed: float, permuted: np.ndarray) -> float:
    n_perm = permuted.size
    upper = int(np.count_nonzero(permuted >= observed))
    lower = int(np.count_nonzero(permuted <= observed))
    return min(1.0, 2.0 * (min(upper, lower) + 1) / (n_perm + 1))


# --------------------------------------------------------------------------
# describe


@dataclass
class DescriptiveReport:
    variables: list[str]
    n: int
    mean: dict[str, float]
    sd: dict[str, float]
    skewness: dict[str, float]
    group_by: str | None = None
    group_means: dict[str, tuple[float, float]] = field(default_factory=dict)
    welch_t: dict[str, float] = field(default_factory=dict)
    welch_p: dict[str, float] = field(default_factory=dict)
    corr: np.ndarray | None = None
    corr_p: np.ndarray | None = None

    def corr_stars(self) -> list[list[str]]:
        k = len(self.variables)
        return [["" if i == j else stars(self.corr_p[i, j]) for j in range(k)] for i in range(k)]

    def summary_rows(self) -> list[dict]:
        rows = []
        for v in self.variables:
            row = {"variable": v, "mean": self.mean[v], "sd": self.sd[v], "skewness": self.skewness[v]}
            if self.group_by:
                g0, g1 = self.group_means[v]
                row.update({f"mean_{self.group_by}0": g0, f"mean_{self.group_by}1": g1,
                            "welch_t": self.welch_t[v], "welch_p": self.welch_p[v]})
            rows.append(row)
        return rows


def skewness(x: np.ndarray) -> float:
    """Moment skewness m3 / m2^1.5."""
    z = x - x.mean()
    m2 = np.mean(z ** 2)
    if m2 == 0:
        raise ConstantColumn("skewness undefined for a constant column")
    return float(np.mean(z ** 3) / m2 ** 1.5)


def describe(table: AttributeTable, variables: Sequence[str], group_by: str | None = None) -> DescriptiveReport:
    """Means, standard deviations, skewness, Welch contrasts and Pearson correlations."""
    variables = list(variables)
    data = {v: np.asarray(table[v], dtype=float) for v in variables}
    for v, x in data.items():
        if np.ptp(x) == 0:
            raise ConstantColumn(f"column {v!r} is constant")
    rep = DescriptiveReport(
        variables=variables,
        n=table.n_rows,
        mean={v: float(x.mean()) for v, x in data.items()},
        sd={v: float(x.std(ddof=1)) if x.size > 1 else 0.0 for v, x in data.items()},
        skewness={v: skewness(x) for v, x in data.items()},
        group_by=group_by,
    )
    if group_by is not None:
        g = np.asarray(table[group_by])
        if not np.all(np.isin(g, (0.0, 1.0))):
            raise InvalidValue(f"group column {group_by!r} must be 0/1")
        for v, x in data.items():
            a, b = x[g == 1], x[g == 0]
            rep.group_means[v] = (float(b.mean()), float(a.mean()))
            if v == group_by:
                t, p = float("nan"), float("nan")  # constant within each group by construction
            elif np.array_equal(np.sort(a), np.sort(b)):
                t, p = 0.0, 1.0
            else:
                res = stats.ttest_ind(a, b, equal_var=False)
                t, p = float(res.statistic), float(res.pvalue)
            rep.welch_t[v] = t
            rep.welch_p[v] = p
    k = len(variables)
    mat = np.column_stack([data[v] for v in variables]) if k else np.empty((table.n_rows, 0))
    corr = np.corrcoef(mat, rowvar=False).reshape(k, k) if k else np.empty((0, 0))
    corr = np.clip(0.5 * (corr + corr.T), -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    n = table.n_rows
    pv = np.zeros((k, k))
    for i in range(k):
        for j in range(k):
            if i != j:
                r = corr[i, j]
                if abs(r) >= 1.0:
                    pv[i, j] = 0.0
                else:
                    t = r * math.sqrt((n - 2) / (1 - r * r))
                    pv[i, j] = 2 * stats.t.sf(abs(t), n - 2)
    rep.corr, rep.corr_p = corr, pv
    return rep


# --------------------------------------------------------------------------
# global Moran


@dataclass
class MoranResult:
    I: float
    expectation: float
    variance: float
    z_score: float
    p_value: float
    n_used: int
    permutations: int = 0
    p_sim: float | None = None
    permuted: np.ndarray | None = field(default=None, repr=False)
    z: np.ndarray | None = field(default=None, repr=False)
    lag: np.ndarray | None = field(default=None, repr=False)

    def scatter(self) -> list[tuple[float, float]]:
        """Moran scatterplot points (standardized value, its spatial lag)."""
        return list(zip(self.z.tolist(), self.lag.tolist()))


def _prepare(x, w: WeightsMatrix) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if x.size != w.n:
        raise LengthMismatch(f"vector has {x.size} entries, weights are {w.n}x{w.n}")
    if not np.all(np.isfinite(x)):
        raise InvalidValue("vector contains non-finite values")
    z = x - x.mean()
    if np.all(z == 0) or float(z @ z) == 0:
        raise ConstantVector("Moran's I is undefined for a constant vector")
    return z


def _permutation_rows(seed: int, indices: Sequence[int], n: int) -> np.ndarray:
    return np.array([np.random.default_rng([seed, int(p)]).permutation(n) for p in indices])


def _run_chunks(fn, total: int, threads: int):
    chunks = np.array_split(np.arange(total), max(1, min(threads, total)))
    if threads <= 1 or len(chunks) == 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, chunks))


def global_moran(x, w: WeightsMatrix, permutations: int = 0, seed: int = 0, threads: int = 1) -> MoranResult:
    """Global Moran's I with normality inference and optional permutation p."""
    z = _prepare(x, w)
    n = w.n
    s0 = w.s0
    if s0 == 0:
        raise InvalidValue("weights matrix has no links")
    denom = float(z @ z)
    lag = w.lag(z)
    stat = n / s0 * float(z @ lag) / denom
    ei = -1.0 / (n - 1)
    s1, s2 = w.s1, w.s2
    vi = (n * n * s1 - n * s2 + 3 * s0 * s0) / ((n * n - 1) * s0 * s0) - ei * ei
    zs = (stat - ei) / math.sqrt(vi)
    res = MoranResult(I=stat, expectation=ei, variance=vi, z_score=zs, p_value=2 * stats.norm.sf(abs(zs)),
                      n_used=n, z=z / math.sqrt(denom / n), lag=w.lag(z / math.sqrt(denom / n)))
    if permutations > 0:
        m = w.sparse

        def chunk(idx):
            if idx.size == 0:
                return np.empty(0)
            zp = z[_permutation_rows(seed, idx, n)]  # (len(idx), n)
            num = np.einsum("ij,ij->i", zp, (m @ zp.T).T)
            return n / s0 * num / denom

        perm = np.concatenate(_run_chunks(chunk, permutations, threads))
        res.permutations = permutations
        res.permuted = perm
        res.p_sim = _two_sided_pseudo_p(stat, perm)
    return res


# --------------------------------------------------------------------------
# LM diagnostics


@dataclass
class DiagnosticsReport:
    n: int
    k: int
    moran_residual: tuple[float, float, float]  # (I, z, p)
    lm_error: tuple[float, float]
    robust_lm_error: tuple[float, float]
    lm_lag: tuple[float, float]
    robust_lm_lag: tuple[float, float]
    lm_sarma: tuple[float, float]
    w_fingerprint: str = ""

    def rows(self) -> list[dict]:
        i, z, p = self.moran_residual
        return [
            {"test": "moran_residual_z", "statistic": z, "p_value": p, "moran_i": i},
            {"test": "lm_error", "statistic": self.lm_error[0], "p_value": self.lm_error[1]},
            {"test": "robust_lm_error", "statistic": self.robust_lm_error[0], "p_value": self.robust_lm_error[1]},
            {"test": "lm_lag", "statistic": self.lm_lag[0], "p_value": self.lm_lag[1]},
            {"test": "robust_lm_lag", "statistic": self.robust_lm_lag[0], "p_value": self.robust_lm_lag[1]},
            {"test": "lm_sarma", "statistic": self.lm_sarma[0], "p_value": self.lm_sarma[1]},
        ]


def _chi2(stat: float, df: int = 1) -> tuple[float, float]:
    return float(stat), float(stats.chi2.sf(stat, df))


def lm_diagnostics(ols: FitResult, w: WeightsMatrix) -> DiagnosticsReport:
    """Residual Moran z-test and the LM error/lag score tests with robust forms."""
    if ols.design is None or ols.y is None:
        raise InvalidValue("fit result carries no design matrix; refit with fit_ols")
    if ols.kind != "OLS":
        raise InvalidValue(f"LM diagnostics need an OLS fit, got {ols.kind}")
    x, y, e = ols.design, ols.y, ols.residuals
    n, k = x.shape
    if w.n != n:
        raise LengthMismatch(f"weights are {w.n}x{w.n} but the fit has {n} observations")
    m = w.sparse
    sig2 = float(e @ e) / n
    we = w.lag(e)
    wy = w.lag(y)
    t = float(m.multiply(m).sum() + m.multiply(m.T).sum())
    xtx_inv = np.linalg.inv(x.T @ x)
    wxb = w.lag(x @ np.linalg.lstsq(x, y, rcond=None)[0])
    mwxb = wxb - x @ (xtx_inv @ (x.T @ wxb))
    nj = t + float(wxb @ mwxb) / sig2
    d_err = float(e @ we) / sig2
    d_lag = float(e @ wy) / sig2

    lm_err = d_err ** 2 / t
    lm_lag = d_lag ** 2 / nj
    rlm_err = (d_err - t / nj * d_lag) ** 2 / (t * (1.0 - t / nj))
    rlm_lag = (d_lag - d_err) ** 2 / (nj - t)
    sarma = rlm_err + lm_lag

    # residual Moran, moments under the OLS null
    s0 = w.s0
    mi = n / s0 * float(e @ we) / float(e @ e)
    wd = w.dense()
    mw = wd - x @ (xtx_inv @ (x.T @ wd))
    tr_mw = float(np.trace(mw))
    tr_mwmwt = float(np.sum(mw * mw))
    tr_mw2 = float(np.sum(mw * mw.T))
    ei = n / s0 * tr_mw / (n - k)
    vi = (n / s0) ** 2 * (tr_mwmwt + tr_mw2 + tr_mw ** 2) / ((n - k) * (n - k + 2)) - ei ** 2
    zi = (mi - ei) / math.sqrt(vi)
    return DiagnosticsReport(
        n=n, k=k, moran_residual=(mi, zi, float(2 * stats.norm.sf(abs(zi)))),
        lm_error=_chi2(lm_err), robust_lm_error=_chi2(rlm_err), lm_lag=_chi2(lm_lag),
        robust_lm_lag=_chi2(rlm_lag), lm_sarma=_chi2(sarma, 2), w_fingerprint=w.fingerprint,
    )


# --------------------------------------------------------------------------
# LISA


QUADRANTS = ("HH", "LH", "LL", "HL")


@dataclass
class LisaResult:
    region_ids: tuple[str, ...]
    local_i: np.ndarray
    pseudo_p: np.ndarray
    quadrant: list[str | None]
    significant: np.ndarray
    alpha: float
    permutations: int
    seed: int

    def rows(self) -> list[dict]:
        return [
            {"region_id": r, "local_i": float(li), "pseudo_p": float(p), "quadrant": q or "", "significant": bool(s)}
            for r, li, p, q, s in zip(self.region_ids, self.local_i, self.pseudo_p, self.quadrant, self.significant)
        ]

    def properties(self) -> dict[str, dict]:
        """Per-region attributes for a map layer."""
        return {row["region_id"]: {k: (row[k] or None) if k == "quadrant" else row[k]
                                   for k in ("local_i", "pseudo_p", "quadrant", "significant")}
                for row in self.rows()}


def _quadrant(zi: float, li: float) -> str | None:
    if zi > 0 and li > 0:
        return "HH"
    if zi < 0 and li < 0:
        return "LL"
    if zi > 0 and li < 0:
        return "HL"
    if zi < 0 and li > 0:
        return "LH"
    return None


def local_moran(x, w: WeightsMatrix, permutations: int = 999, alpha: float = 0.05, seed: int = 0,
                threads: int = 1) -> LisaResult:
    """Local Moran statistics ``I_i = z_i (W z)_i / m2`` with ``m2 = sum(z^2)/n``.

    Inference holds region i fixed and draws its neighbor values from a
    random permutation of the other n-1 values; permutation p uses the
    random stream keyed by ``(seed, p)`` shared across regions.
    """
    if permutations < 99:
        raise InvalidValue("local Moran needs at least 99 permutations")
    z = _prepare(x, w)
    n = w.n
    m2 = float(z @ z) / n
    lag = w.lag(z)
    local_i = z * lag / m2
    m = w.sparse
    counts = np.diff(m.indptr)
    kmax = int(counts.max()) if n else 0
    # permutation p: first kmax entries of a permutation of range(n - 1)
    draws = np.array([np.random.default_rng([seed, p]).permutation(n - 1)[:kmax] for p in range(permutations)])

    def chunk(idx):
        out = np.ones(idx.size)
        for pos, i in enumerate(idx):
            ki = counts[i]
            if ki == 0:
                continue
            lo, hi = m.indptr[i], m.indptr[i + 1]
            wi = m.data[lo:hi]
            cand = draws[:, :ki]
            cand = cand + (cand >= i)  # skip region i itself
            perm_i = z[i] * (z[cand] @ wi) / m2
            out[pos] = _two_sided_pseudo_p(local_i[i], perm_i)
        return out

    pseudo = np.concatenate(_run_chunks(chunk, n, threads))
    quads: list[str | None] = []
    for i in range(n):
        quads.append(None if counts[i] == 0 else _quadrant(z[i], lag[i]))
    pseudo[counts == 0] = 1.0
    sig = (pseudo <= alpha) & (counts > 0)
    return LisaResult(w.region_ids, local_i, pseudo, quads, sig, alpha, permutations, seed)
