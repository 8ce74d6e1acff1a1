"""OLS and the spatial regression family fitted by maximum likelihood.

The general nesting model is

    y = rho W y + alpha + X beta + W X_d theta + e,    e = lambda W e + u,
    u ~ N(0, sigma2 I)

and SAR, SEM, SLX, SDM, SDEM, SAC are the restrictions listed in
``MODEL_TERMS``.  Likelihoods are concentrated over (alpha, beta, theta,
sigma2) and maximized over rho and/or lambda; the log-Jacobian terms come
from the cached eigenvalues of W.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats
from scipy.optimize import minimize

from .errors import (
    DimensionMismatch,
    InvalidValue,
    NonConvergence,
    OutOfStationaryRegion,
    RankDeficientAfterLag,
    SingularDesign,
)
from .ingest import AttributeTable
from .optimize import maximize_bounded, maximize_local
from .weights import WeightsMatrix

__all__ = [
    "ModelSpec",
    "FitResult",
    "MODEL_TERMS",
    "fit",
    "fit_ols",
    "fit_spatial",
    "log_det_term",
    "admissible_interval",
    "SpatialLikelihood",
]

# kind -> (WY, WX, We)
MODEL_TERMS = {
    "OLS": (False, False, False),
    "SLX": (False, True, False),
    "SEM": (False, False, True),
    "SAR": (True, False, False),
    "SDEM": (False, True, True),
    "SDM": (True, True, False),
    "SAC": (True, False, True),
    "GNS": (True, True, True),
}

BOUNDARY_MARGIN = 1e-6
OUTER_TOL = 1e-7
MAX_OUTER = 200


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    response: str
    regressors: tuple[str, ...]
    durbin_set: tuple[str, ...] = ()
    intercept: bool = True
    se_mode: str = "robust"

    def __post_init__(self):
        kind = self.kind.upper()
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "regressors", tuple(self.regressors))
        object.__setattr__(self, "durbin_set", tuple(self.durbin_set))
        if kind not in MODEL_TERMS:
            raise InvalidValue(f"unknown model kind {self.kind!r}")
        if self.se_mode not in ("robust", "classical"):
            raise InvalidValue(f"se_mode must be 'robust' or 'classical', not {self.se_mode!r}")
        extra = [d for d in self.durbin_set if d not in self.regressors]
        if extra:
            raise InvalidValue(f"durbin_set columns not among regressors: {', '.join(extra)}")
        wants_wx = MODEL_TERMS[kind][1]
        if wants_wx and not self.durbin_set:
            raise InvalidValue(f"{kind} needs a nonempty durbin_set")
        if not wants_wx and self.durbin_set:
            raise InvalidValue(f"{kind} has no WX term; durbin_set must be empty")

    @property
    def has_rho(self) -> bool:
        return MODEL_TERMS[self.kind][0]

    @property
    def has_lambda(self) -> bool:
        return MODEL_TERMS[self.kind][2]

    def coefficient_names(self) -> list[str]:
        names = ["const"] if self.intercept else []
        names += list(self.regressors)
        names += [f"W_{d}" for d in self.durbin_set]
        return names

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "response": self.response,
            "regressors": list(self.regressors),
            "durbin_set": list(self.durbin_set),
            "intercept": self.intercept,
            "se_mode": self.se_mode,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(d["kind"], d["response"], tuple(d["regressors"]), tuple(d.get("durbin_set", ())),
                   bool(d.get("intercept", True)), d.get("se_mode", "robust"))


@dataclass
class FitResult:
    """Estimates for one model; ``params``/``vcov`` follow ``param_names``."""

    spec: ModelSpec
    param_names: tuple[str, ...]
    params: np.ndarray
    vcov: np.ndarray
    intercept: float | None
    beta: np.ndarray
    theta: np.ndarray
    rho: float
    lambda_: float
    sigma2: float
    loglik: float
    n: int
    k: int
    r2: float
    adj_r2: float | None
    residuals: np.ndarray
    fitted: np.ndarray
    w_fingerprint: str | None = None
    w_normalization: str | None = None
    df_resid: int | None = None
    iterations: int = 0
    converged: bool = True
    notes: list[str] = field(default_factory=list)
    # kept for diagnostics; not serialized
    y: np.ndarray | None = field(default=None, repr=False)
    design: np.ndarray | None = field(default=None, repr=False)

    @property
    def kind(self) -> str:
        return self.spec.kind

    @property
    def bse(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.vcov), 0.0, None))

    @property
    def tvalues(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.params / self.bse

    @property
    def pvalues(self) -> np.ndarray:
        t = np.abs(self.tvalues)
        if self.df_resid is not None:
            return 2 * stats.t.sf(t, self.df_resid)
        return 2 * stats.norm.sf(t)

    def param(self, name: str) -> float:
        return float(self.params[self.param_names.index(name)])

    def se(self, name: str) -> float:
        return float(self.bse[self.param_names.index(name)])

    def coef_table(self) -> list[dict]:
        return [
            {"name": nm, "estimate": float(p), "se": float(s), "t": float(t), "p": float(pv)}
            for nm, p, s, t, pv in zip(self.param_names, self.params, self.bse, self.tvalues, self.pvalues)
        ]

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "param_names": list(self.param_names),
            "params": self.params.tolist(),
            "vcov": self.vcov.tolist(),
            "intercept": self.intercept,
            "beta": self.beta.tolist(),
            "theta": self.theta.tolist(),
            "rho": self.rho,
            "lambda": self.lambda_,
            "sigma2": self.sigma2,
            "loglik": self.loglik,
            "n": self.n,
            "k": self.k,
            "r2": self.r2,
            "adj_r2": self.adj_r2,
            "r2_label": "r2" if self.spec.kind in ("OLS", "SLX") else "pseudo_r2",
            "residuals": self.residuals.tolist(),
            "fitted": self.fitted.tolist(),
            "w_fingerprint": self.w_fingerprint,
            "w_normalization": self.w_normalization,
            "df_resid": self.df_resid,
            "iterations": self.iterations,
            "converged": self.converged,
            "notes": list(self.notes),
            "coefficients": self.coef_table(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        return cls(
            spec=ModelSpec.from_dict(d["spec"]),
            param_names=tuple(d["param_names"]),
            params=np.asarray(d["params"], dtype=float),
            vcov=np.asarray(d["vcov"], dtype=float),
            intercept=d["intercept"],
            beta=np.asarray(d["beta"], dtype=float),
            theta=np.asarray(d["theta"], dtype=float),
            rho=float(d["rho"]),
            lambda_=float(d["lambda"]),
            sigma2=float(d["sigma2"]),
            loglik=float(d["loglik"]),
            n=int(d["n"]),
            k=int(d["k"]),
            r2=float(d["r2"]),
            adj_r2=d.get("adj_r2"),
            residuals=np.asarray(d["residuals"], dtype=float),
            fitted=np.asarray(d["fitted"], dtype=float),
            w_fingerprint=d.get("w_fingerprint"),
            w_normalization=d.get("w_normalization"),
            df_resid=d.get("df_resid"),
            iterations=int(d.get("iterations", 0)),
            converged=bool(d.get("converged", True)),
            notes=list(d.get("notes", [])),
        )


# --------------------------------------------------------------------------
# design


def _dependent_columns(z: np.ndarray, names: Sequence[str]) -> list[str]:
    _, s, vt = np.linalg.svd(z, full_matrices=False)
    tol = s.max() * max(z.shape) * np.finfo(float).eps
    null = vt[s <= tol]
    if null.size == 0:
        null = vt[-1:]
    mask = np.any(np.abs(null) > 1e-8, axis=0)
    return [nm for nm, m in zip(names, mask) if m]


def build_design(spec: ModelSpec, table: AttributeTable, w: WeightsMatrix | None):
    """Return ``(y, Z, names)`` with columns const | X | W X_d."""
    y = np.asarray(table[spec.response], dtype=float)
    x = table.matrix(spec.regressors)
    n = y.size
    base = [np.ones((n, 1))] if spec.intercept else []
    base.append(x)
    z_base = np.hstack(base) if base else np.empty((n, 0))
    names = spec.coefficient_names()
    n_base = z_base.shape[1]
    if n_base == 0:
        raise SingularDesign("model has no regressors")
    if n <= n_base:
        raise SingularDesign(f"n={n} observations cannot identify {n_base} coefficients")
    if np.linalg.matrix_rank(z_base) < n_base:
        dep = _dependent_columns(z_base, names[:n_base])
        raise SingularDesign(f"design matrix is rank deficient; dependent columns: {', '.join(dep)}")
    if spec.durbin_set:
        if w is None:
            raise InvalidValue(f"{spec.kind} requires a weights matrix")
        if w.n != n:
            raise DimensionMismatch(f"weights are {w.n}x{w.n} but the table has {n} rows")
        wx = w.lag(table.matrix(spec.durbin_set))
        z = np.hstack([z_base, wx])
        if z.shape[1] >= n or np.linalg.matrix_rank(z) < z.shape[1]:
            dep = _dependent_columns(z, names)
            raise RankDeficientAfterLag(f"lagged regressors are collinear with X; dependent columns: {', '.join(dep)}")
    else:
        z = z_base
    return y, z, names


def _split_coefficients(spec: ModelSpec, b: np.ndarray):
    off = 1 if spec.intercept else 0
    k = len(spec.regressors)
    icpt = float(b[0]) if spec.intercept else None
    return icpt, np.array(b[off:off + k]), np.array(b[off + k:])


def _pseudo_r2(y, fitted):
    if np.std(fitted) == 0:
        return 0.0
    return float(np.corrcoef(y, fitted)[0, 1] ** 2)


# --------------------------------------------------------------------------
# OLS / SLX


def fit_ols(spec: ModelSpec, table: AttributeTable, w: WeightsMatrix | None = None) -> FitResult:
    """Least squares for OLS and SLX, with HC1 or classical covariance."""
    if spec.kind not in ("OLS", "SLX"):
        raise InvalidValue(f"fit_ols handles OLS and SLX, not {spec.kind}")
    if w is not None and w.n != table.n_rows:
        raise DimensionMismatch(f"weights are {w.n}x{w.n} but the table has {table.n_rows} rows")
    y, z, names = build_design(spec, table, w)
    n, k = z.shape
    q, r = np.linalg.qr(z)
    b = np.linalg.solve(r, q.T @ y)
    e = y - z @ b
    ssr = float(e @ e)
    df = n - k
    r_inv = np.linalg.solve(r, np.eye(k))
    xtx_inv = r_inv @ r_inv.T
    if spec.se_mode == "robust":
        meat = (z * (e ** 2)[:, None]).T @ z
        vcov = n / df * xtx_inv @ meat @ xtx_inv
    else:
        vcov = ssr / df * xtx_inv
    vcov = 0.5 * (vcov + vcov.T)
    if spec.intercept:
        tss = float(((y - y.mean()) ** 2).sum())
    else:
        tss = float((y ** 2).sum())
    r2 = 1.0 - ssr / tss if tss > 0 else 1.0
    adj = 1.0 - (1.0 - r2) * (n - (1 if spec.intercept else 0)) / df
    loglik = -0.5 * n * (math.log(2 * math.pi) + math.log(ssr / n) + 1.0) if ssr > 0 else math.inf
    icpt, beta, theta = _split_coefficients(spec, b)
    return FitResult(
        spec=spec, param_names=tuple(names), params=b, vcov=vcov, intercept=icpt, beta=beta, theta=theta,
        rho=0.0, lambda_=0.0, sigma2=ssr / df, loglik=loglik, n=n, k=k, r2=r2, adj_r2=adj,
        residuals=e, fitted=z @ b, w_fingerprint=w.fingerprint if w is not None else None,
        w_normalization=w.normalization if w is not None else None, df_resid=df, y=y, design=z,
    )


# --------------------------------------------------------------------------
# likelihood


def log_det_term(a: float, w: WeightsMatrix) -> float:
    """ln|det(I - a W)| from the eigenvalues of W."""
    lo, hi = w.stationary_interval()
    if not lo < a < hi:
        raise OutOfStationaryRegion(f"{a} is outside the stationary interval ({lo}, {hi})")
    return _logdet(a, w.eigenvalues)


def _logdet(a: float, ev: np.ndarray) -> float:
    if a == 0.0:
        return 0.0
    return float(np.log(np.abs(1.0 - a * ev)).sum())


def _trace_term(a: float, ev: np.ndarray) -> float:
    """d/da ln|I - aW| = -tr(W (I - aW)^-1)."""
    return float(-(ev / (1.0 - a * ev)).real.sum())


def admissible_interval(w: WeightsMatrix, margin: float = BOUNDARY_MARGIN) -> tuple[float, float]:
    """Search interval for rho/lambda: stationary interval shrunk by ``margin``."""
    lo, hi = w.stationary_interval()
    if not np.isfinite(lo):
        lo = -1.0 / margin
    if not np.isfinite(hi):
        hi = 1.0 / margin
    if w.normalization == "row":
        hi = min(hi, 1.0)
    return lo + margin, hi - margin


class SpatialLikelihood:
    """Gaussian log-likelihood of the general nesting model on fixed data.

    Parameter vector for the full likelihood is ``[b..., rho?, lambda?, sigma2]``
    where rho/lambda appear only when the model estimates them.
    """

    def __init__(self, y: np.ndarray, z: np.ndarray, w: WeightsMatrix, has_rho: bool, has_lambda: bool):
        self.y = y
        self.z = z
        self.w = w
        self.n = y.size
        self.has_rho = has_rho
        self.has_lambda = has_lambda
        self.ev = w.eigenvalues
        self.wy = w.lag(y)
        self.wwy = w.lag(self.wy)
        self.wz = w.lag(z)

    # concentrated ----------------------------------------------------------
    def _filtered(self, rho, lam):
        yt = self.y - rho * self.wy - lam * (self.wy - rho * self.wwy)
        zt = self.z - lam * self.wz
        return yt, zt

    def solve(self, rho: float, lam: float):
        """GLS step at fixed (rho, lambda): returns ``(b, u, sigma2)``."""
        yt, zt = self._filtered(rho, lam)
        b, *_ = np.linalg.lstsq(zt, yt, rcond=None)
        u = yt - zt @ b
        return b, u, float(u @ u) / self.n

    def concentrated(self, rho: float, lam: float) -> float:
        _, _, s2 = self.solve(rho, lam)
        return (-0.5 * self.n * (math.log(2 * math.pi) + 1.0 + math.log(s2))
                + _logdet(rho, self.ev) + _logdet(lam, self.ev))

    def concentrated_grad(self, rho: float, lam: float) -> tuple[float, float]:
        b, u, s2 = self.solve(rho, lam)
        g_rho = _trace_term(rho, self.ev) + float(u @ (self.wy - lam * self.wwy)) / s2
        we = self.wy - rho * self.wwy - self.wz @ b
        g_lam = _trace_term(lam, self.ev) + float(u @ we) / s2
        return g_rho, g_lam

    # full ----------------------------------------------------------------
    def unpack(self, theta: np.ndarray):
        k = self.z.shape[1]
        b = theta[:k]
        pos = k
        rho = lam = 0.0
        if self.has_rho:
            rho = float(theta[pos])
            pos += 1
        if self.has_lambda:
            lam = float(theta[pos])
            pos += 1
        return b, rho, lam, float(theta[pos])

    def pack(self, b, rho, lam, s2) -> np.ndarray:
        parts = [np.asarray(b, dtype=float)]
        if self.has_rho:
            parts.append([rho])
        if self.has_lambda:
            parts.append([lam])
        parts.append([s2])
        return np.concatenate(parts)

    def _resid(self, b, rho, lam):
        e = self.y - rho * self.wy - self.z @ b
        we = self.wy - rho * self.wwy - self.wz @ b
        return e, e - lam * we, we

    def loglik(self, theta: np.ndarray) -> float:
        b, rho, lam, s2 = self.unpack(theta)
        if s2 <= 0:
            return -np.inf
        _, u, _ = self._resid(b, rho, lam)
        return (-0.5 * self.n * math.log(2 * math.pi * s2) + _logdet(rho, self.ev) + _logdet(lam, self.ev)
                - float(u @ u) / (2 * s2))

    def score(self, theta: np.ndarray) -> np.ndarray:
        b, rho, lam, s2 = self.unpack(theta)
        e, u, we = self._resid(b, rho, lam)
        zt = self.z - lam * self.wz
        parts = [zt.T @ u / s2]
        if self.has_rho:
            parts.append([_trace_term(rho, self.ev) + float(u @ (self.wy - lam * self.wwy)) / s2])
        if self.has_lambda:
            parts.append([_trace_term(lam, self.ev) + float(u @ we) / s2])
        parts.append([-0.5 * self.n / s2 + float(u @ u) / (2 * s2 * s2)])
        return np.concatenate(parts)

    def score_contributions(self, theta: np.ndarray) -> np.ndarray:
        """Per-observation scores whose outer products estimate the score variance.

        The rho and lambda scores contain quadratic forms ``u'Pu - sigma2 tr P``
        that are not sums of independent terms; each is rewritten as the
        martingale-difference sum
        ``sum_i P_ii (u_i^2 - sigma2) + u_i sum_{j<i} (P_ij + P_ji) u_j``.
        Column sums equal :meth:`score` up to the ``tr P`` rounding.
        """
        b, rho, lam, s2 = self.unpack(theta)
        e, u, we = self._resid(b, rho, lam)
        zt = self.z - lam * self.wz
        cols = [zt * (u / s2)[:, None]]
        wd = self.w.dense()
        eye = np.eye(self.n)
        b_inv = np.linalg.inv(eye - lam * wd) if lam != 0 else eye
        if self.has_rho:
            a_inv = np.linalg.inv(eye - rho * wd) if rho != 0 else eye
            bw_ainv = (wd - lam * (wd @ wd)) @ a_inv
            linear = bw_ainv @ (self.z @ b)
            cols.append((u * linear / s2 + _md_quadratic(bw_ainv @ b_inv, u, s2) / s2)[:, None])
        if self.has_lambda:
            cols.append((_md_quadratic(wd @ b_inv, u, s2) / s2)[:, None])
        cols.append((-0.5 / s2 + u ** 2 / (2 * s2 * s2))[:, None])
        return np.hstack(cols)

    def hessian(self, theta: np.ndarray) -> np.ndarray:
        """Central-difference Jacobian of the analytic score."""
        p = theta.size
        hess = np.empty((p, p))
        for j in range(p):
            h = 1e-5 * max(1.0, abs(theta[j]))
            up, dn = theta.copy(), theta.copy()
            up[j] += h
            dn[j] -= h
            hess[:, j] = (self.score(up) - self.score(dn)) / (2 * h)
        return 0.5 * (hess + hess.T)


def _md_quadratic(p: np.ndarray, u: np.ndarray, s2: float) -> np.ndarray:
    """Martingale-difference terms of ``u'Pu - s2 tr(P)``."""
    sym = np.tril(p + p.T, -1)
    return np.diag(p) * (u ** 2 - s2) + u * (sym @ u)


def _maximize(lik: SpatialLikelihood, lo: float, hi: float, kind: str):
    """Returns ``(rho, lam, loglik, iterations, converged)``."""
    if lik.has_rho and not lik.has_lambda:
        x, fx, it = maximize_bounded(lambda r: lik.concentrated(r, 0.0), lo, hi,
                                     grad=lambda r: lik.concentrated_grad(r, 0.0)[0])
        return x, 0.0, fx, it, True
    if lik.has_lambda and not lik.has_rho:
        x, fx, it = maximize_bounded(lambda l: lik.concentrated(0.0, l), lo, hi,
                                     grad=lambda l: lik.concentrated_grad(0.0, l)[1])
        return 0.0, x, fx, it, True

    warnings.warn(
        f"{kind} nests both a spatial lag and a spatial error process; rho and lambda are weakly "
        "identified and estimates may be unstable",
        stacklevel=3,
    )
    r1, f1, _ = maximize_bounded(lambda r: lik.concentrated(r, 0.0), lo, hi,
                                 grad=lambda r: lik.concentrated_grad(r, 0.0)[0])
    l1, f2, _ = maximize_bounded(lambda l: lik.concentrated(0.0, l), lo, hi,
                                 grad=lambda l: lik.concentrated_grad(0.0, l)[1])
    rho, lam, best = (r1, 0.0, f1) if f1 >= f2 else (0.0, l1, f2)
    converged = False
    it = 0
    for it in range(1, MAX_OUTER + 1):
        prev = (rho, lam, best)
        if it == 1:
            r, fr, _ = maximize_bounded(lambda r: lik.concentrated(r, lam), lo, hi,
                                        grad=lambda r: lik.concentrated_grad(r, lam)[0])
        else:
            r, fr = maximize_local(lambda r: lik.concentrated(r, lam), rho, lo, hi,
                                   grad=lambda r: lik.concentrated_grad(r, lam)[0])
        if fr > best:
            rho, best = r, fr
        if it == 1:
            l, fl, _ = maximize_bounded(lambda l: lik.concentrated(rho, l), lo, hi,
                                        grad=lambda l: lik.concentrated_grad(rho, l)[1])
        else:
            l, fl = maximize_local(lambda l: lik.concentrated(rho, l), lam, lo, hi,
                                   grad=lambda l: lik.concentrated_grad(rho, l)[1])
        if fl > best:
            lam, best = l, fl
        if abs(rho - prev[0]) + abs(lam - prev[1]) < OUTER_TOL:
            converged = True
            break

    # joint polish along the rho/lambda ridge that coordinate moves crawl along
    def negf(p):
        try:
            return -lik.concentrated(p[0], p[1])
        except (ValueError, FloatingPointError):
            return np.inf

    def negg(p):
        return -np.asarray(lik.concentrated_grad(p[0], p[1]))

    res = minimize(negf, np.array([rho, lam]), jac=negg, method="L-BFGS-B", bounds=[(lo, hi), (lo, hi)],
                   options={"ftol": 1e-15, "gtol": 1e-10, "maxiter": 500})
    if np.isfinite(res.fun) and -res.fun >= best:
        rho, lam, best = float(res.x[0]), float(res.x[1]), float(-res.fun)
    g = np.asarray(lik.concentrated_grad(rho, lam))
    interior = [abs(v - lo) > 1e-4 and abs(v - hi) > 1e-4 for v in (rho, lam)]
    gmax = max((abs(gi) for gi, inside in zip(g, interior) if inside), default=0.0)
    if not converged and gmax < 1e-4:
        converged = True
    if not converged:
        raise NonConvergence(
            f"{kind}: no convergence after {MAX_OUTER} outer iterations (rho={rho:.6g}, lambda={lam:.6g}, "
            f"|grad|={gmax:.3g})",
            last_iterate=(rho, lam),
        )
    return rho, lam, best, it, converged


def fit_spatial(spec: ModelSpec, table: AttributeTable, w: WeightsMatrix) -> FitResult:
    """Maximum-likelihood fit of SEM, SAR, SDEM, SDM, SAC or GNS."""
    if spec.kind in ("OLS", "SLX"):
        raise InvalidValue(f"{spec.kind} is fitted by fit_ols")
    if w.n != table.n_rows:
        raise DimensionMismatch(f"weights are {w.n}x{w.n} but the table has {table.n_rows} rows")
    if w.normalization == "none":
        warnings.warn("weights matrix is not normalized; the parameter space may be unusual", stacklevel=2)
    y, z, names = build_design(spec, table, w)
    lik = SpatialLikelihood(y, z, w, spec.has_rho, spec.has_lambda)
    lo, hi = admissible_interval(w)
    rho, lam, ll, iters, converged = _maximize(lik, lo, hi, spec.kind)
    b, u, s2 = lik.solve(rho, lam)
    theta_hat = lik.pack(b, rho, lam, s2)
    ll = lik.loglik(theta_hat)

    hess = lik.hessian(theta_hat)
    try:
        bread = np.linalg.inv(-hess)
    except np.linalg.LinAlgError:
        bread = np.linalg.pinv(-hess)
    notes = []
    if np.any(np.linalg.eigvalsh(-hess) <= 0):
        notes.append("negative Hessian is not positive definite at the optimum")
    if spec.se_mode == "robust":
        s = lik.score_contributions(theta_hat)
        vcov = bread @ (s.T @ s) @ bread
    else:
        vcov = bread
    vcov = 0.5 * (vcov + vcov.T)

    pnames = list(names)
    if spec.has_rho:
        pnames.append("rho")
    if spec.has_lambda:
        pnames.append("lambda")
    pnames.append("sigma2")
    e = y - rho * lik.wy - z @ b
    fitted = y - e
    icpt, beta, theta = _split_coefficients(spec, b)
    k = z.shape[1] + int(spec.has_rho) + int(spec.has_lambda)
    return FitResult(
        spec=spec, param_names=tuple(pnames), params=theta_hat, vcov=vcov, intercept=icpt, beta=beta,
        theta=theta, rho=float(rho), lambda_=float(lam), sigma2=s2, loglik=ll, n=y.size, k=k,
        r2=_pseudo_r2(y, fitted), adj_r2=None, residuals=e, fitted=fitted, w_fingerprint=w.fingerprint,
        w_normalization=w.normalization, df_resid=None, iterations=iters, converged=converged, notes=notes,
        y=y, design=z,
    )


def fit(spec: ModelSpec, table: AttributeTable, w: WeightsMatrix | None = None) -> FitResult:
    """Dispatch to :func:`fit_ols` or :func:`fit_spatial` by ``spec.kind``."""
    if spec.kind in ("OLS", "SLX"):
        return fit_ols(spec, table, w)
    if w is None:
        raise InvalidValue(f"{spec.kind} requires a weights matrix")
    return fit_spatial(spec, table, w)
