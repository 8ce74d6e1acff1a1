"""Direct, indirect and total marginal effects from the reduced form.

For regressor k the impact matrix is S_k = (I - rho W)^-1 (beta_k I + theta_k W).
The direct effect is the mean diagonal of S_k, the total effect its mean row
sum, and the indirect effect their difference.  Traces come from the cached
eigenvalues of W; row sums from one LU factorization of (I - rho W) per
parameter draw.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import stats

from .errors import DimensionMismatch, InvalidValue, OutOfStationaryRegion
from .estimators import FitResult
from .weights import WeightsMatrix

__all__ = ["EffectsTable", "decompose_effects", "impact_point", "MAX_REDRAWS"]

MAX_REDRAWS = 1000


@dataclass
class EffectsTable:
    """Per-regressor effects; arrays are ordered like ``regressors``."""

    regressors: list[str]
    direct: np.ndarray
    indirect: np.ndarray
    total: np.ndarray
    draws: int
    seed: int
    rejected: int = 0
    sim_direct: np.ndarray | None = field(default=None, repr=False)
    sim_indirect: np.ndarray | None = field(default=None, repr=False)
    sim_total: np.ndarray | None = field(default=None, repr=False)
    spatial: dict[str, tuple[float, float]] = field(default_factory=dict)  # name -> (estimate, se)

    def _summary(self, sims: np.ndarray | None, point: np.ndarray):
        if sims is None or sims.shape[0] < 2:
            nan = np.full(point.shape, np.nan)
            return point, nan, nan, nan
        mean = sims.mean(axis=0)
        sd = sims.std(axis=0, ddof=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = mean / sd
        t = np.where(sd == 0, np.where(mean == 0, 0.0, np.inf), t)
        p = 2 * stats.norm.sf(np.abs(t))
        return mean, sd, t, p

    def summary(self, kind: str) -> dict[str, np.ndarray]:
        point = {"direct": self.direct, "indirect": self.indirect, "total": self.total}[kind]
        sims = {"direct": self.sim_direct, "indirect": self.sim_indirect, "total": self.sim_total}[kind]
        mean, se, t, p = self._summary(sims, point)
        return {"estimate": point, "mean": mean, "se": se, "t": t, "p": p}

    def rows(self) -> list[dict]:
        """Long-format rows: panel, variable, estimate, mean, se, t, p."""
        out = []
        for panel in ("direct", "indirect", "total"):
            s = self.summary(panel)
            for i, name in enumerate(self.regressors):
                out.append({"panel": panel, "variable": name, "estimate": float(s["estimate"][i]),
                            "mean": float(s["mean"][i]), "se": float(s["se"][i]), "t": float(s["t"][i]),
                            "p": float(s["p"][i])})
        for name, (est, se) in self.spatial.items():
            t = est / se if se > 0 else float("nan")
            out.append({"panel": "spatial", "variable": name, "estimate": est, "mean": est, "se": se, "t": t,
                        "p": float(2 * stats.norm.sf(abs(t))) if np.isfinite(t) else float("nan")})
        return out


class _ReducedForm:
    """Effects for arbitrary (beta, theta, rho) on a fixed W."""

    def __init__(self, w: WeightsMatrix):
        self.w = w
        self.n = w.n
        self.ev = w.eigenvalues
        self.ones = np.ones(self.n)
        self.w1 = w.lag(self.ones)
        self.sparse_lu = w.nnz < 0.1 * self.n * self.n

    def _solve_pair(self, rho: float) -> tuple[np.ndarray, np.ndarray]:
        rhs = np.column_stack([self.ones, self.w1])
        if self.sparse_lu:
            a = (sp.identity(self.n, format="csc") - rho * self.w.sparse.tocsc()).tocsc()
            sol = spla.splu(a).solve(rhs)
        else:
            lu = sla.lu_factor(np.eye(self.n) - rho * self.w.dense())
            sol = sla.lu_solve(lu, rhs)
        return sol[:, 0], sol[:, 1]

    def effects(self, beta: np.ndarray, theta: np.ndarray, rho: float):
        beta = np.asarray(beta, dtype=float)
        theta = np.asarray(theta, dtype=float)
        n = self.n
        if rho == 0.0:
            direct = beta.copy()  # tr(W) = 0
            total = beta + theta * (self.w1.sum() / n)
            return direct, total - direct, total
        d = 1.0 - rho * self.ev
        tr_a = float(np.real(np.sum(1.0 / d)))
        tr_aw = float(np.real(np.sum(self.ev / d)))
        a1, aw1 = self._solve_pair(rho)
        direct = (beta * tr_a + theta * tr_aw) / n
        total = beta * (a1.sum() / n) + theta * (aw1.sum() / n)
        return direct, total - direct, total


def _theta_full(fit: FitResult, theta_vals) -> np.ndarray:
    out = np.zeros(len(fit.spec.regressors))
    for d, v in zip(fit.spec.durbin_set, theta_vals):
        out[fit.spec.regressors.index(d)] = v
    return out


def impact_point(fit: FitResult, w: WeightsMatrix):
    """Point estimates ``(direct, indirect, total)`` at the fitted parameters."""
    return _ReducedForm(w).effects(fit.beta, _theta_full(fit, fit.theta), fit.rho)


def decompose_effects(fit: FitResult, w: WeightsMatrix, draws: int = 1000, seed: int = 0) -> EffectsTable:
    """Direct/indirect/total effects with simulation-based inference.

    Draw ``d`` takes parameters from N(estimates, vcov) on the stream keyed
    by ``(seed, d, attempt)``; a draw with rho outside the stationary
    interval is rejected and redrawn.
    """
    if fit.n != w.n:
        raise DimensionMismatch(f"fit has {fit.n} observations but weights are {w.n}x{w.n}")
    if draws < 0:
        raise InvalidValue("draws must be >= 0")
    if fit.w_fingerprint is not None and fit.w_fingerprint != w.fingerprint:
        raise DimensionMismatch("weights matrix differs from the one used to fit the model")
    rf = _ReducedForm(w)
    regs = list(fit.spec.regressors)
    direct, indirect, total = rf.effects(fit.beta, _theta_full(fit, fit.theta), fit.rho)
    if fit.spec.kind in ("OLS", "SEM"):
        indirect = np.zeros_like(indirect)
        total = direct.copy()
    table = EffectsTable(regs, direct, indirect, total, draws, seed)
    for nm in ("rho", "lambda"):
        if nm in fit.param_names:
            table.spatial[nm] = (fit.param(nm), fit.se(nm))
    if draws == 0:
        return table

    names = list(regs) + [f"W_{d}" for d in fit.spec.durbin_set]
    if fit.spec.has_rho:
        names.append("rho")
    idx = [fit.param_names.index(nm) for nm in names]
    mean = fit.params[idx]
    cov = fit.vcov[np.ix_(idx, idx)]
    cov = 0.5 * (cov + cov.T)
    # factor once; eigh tolerates positive semi-definite covariances
    vals, vecs = np.linalg.eigh(cov)
    factor = vecs * np.sqrt(np.clip(vals, 0.0, None))
    lo, hi = w.stationary_interval()
    k = len(regs)
    kd = len(fit.spec.durbin_set)
    sims = np.empty((3, draws, k))
    rejected = 0
    for d in range(draws):
        for attempt in range(MAX_REDRAWS):
            rng = np.random.default_rng([seed, d, attempt])
            p = mean + factor @ rng.standard_normal(len(mean))
            rho = float(p[k + kd]) if fit.spec.has_rho else 0.0
            if lo < rho < hi:
                break
            rejected += 1
        else:
            raise OutOfStationaryRegion(f"draw {d}: {MAX_REDRAWS} consecutive rho draws outside ({lo}, {hi})")
        beta = p[:k]
        theta = _theta_full(fit, p[k:k + kd])
        dr, ind, tot = rf.effects(beta, theta, rho)
        if fit.spec.kind in ("OLS", "SEM"):
            ind = np.zeros_like(ind)
            tot = dr.copy()
        sims[0, d], sims[1, d], sims[2, d] = dr, ind, tot
    table.sim_direct, table.sim_indirect, table.sim_total = sims
    table.rejected = rejected
    return table
