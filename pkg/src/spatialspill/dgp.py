"""Simulation from the general nesting process, and lattice fixtures."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DimensionMismatch, InvalidValue, OutOfStationaryRegion
from .graph import NeighborGraph
from .ingest import AttributeTable, GeometrySet, _frozen
from .weights import WeightsMatrix

__all__ = ["DgpParams", "make_lattice", "simulate_dgp", "generate_x", "simulate_table"]


@dataclass(frozen=True)
class DgpParams:
    beta: tuple[float, ...]
    rho: float = 0.0
    lambda_: float = 0.0
    theta: tuple[float, ...] = ()
    alpha: float = 0.0
    sigma: float = 1.0
    seed: int = 0
    durbin_index: tuple[int, ...] | None = field(default=None)

    def durbin_columns(self) -> tuple[int, ...]:
        """Indices of the lagged columns; defaults to the first ``len(theta)``."""
        if self.durbin_index is not None:
            return tuple(self.durbin_index)
        return tuple(range(len(self.theta)))


def make_lattice(rows: int, cols: int, rule: str = "rook") -> tuple[GeometrySet, NeighborGraph]:
    """Grid of unit squares, ids ``r{row}c{col}`` in row-major order."""
    if rows < 1 or cols < 1 or rows * cols < 2:
        raise InvalidValue("lattice needs at least two cells")
    if rule not in ("rook", "queen"):
        raise InvalidValue(f"rule must be 'rook' or 'queen', not {rule!r}")
    ids = []
    polys = []
    cents = []
    for r in range(rows):
        for c in range(cols):
            ids.append(f"r{r}c{c}")
            ring = np.array([[c, r], [c + 1, r], [c + 1, r + 1], [c, r + 1], [c, r]], dtype=float)
            ring.flags.writeable = False
            polys.append(((ring,),))
            cents.append((c + 0.5, r + 0.5))
    steps = [(0, 1), (1, 0)]
    if rule == "queen":
        steps += [(1, 1), (1, -1)]
    edges = []
    for r in range(rows):
        for c in range(cols):
            for dr, dc in steps:
                rr, cc = r + dr, c + dc
                if 0 <= rr < rows and 0 <= cc < cols:
                    edges.append((r * cols + c, rr * cols + cc))
    geom = GeometrySet(tuple(ids), tuple(polys), _frozen(np.array(cents)))
    return geom, NeighborGraph.from_edges(ids, edges)


def generate_x(n: int, k: int, seed: int) -> np.ndarray:
    """Independent standard normal regressors."""
    return np.random.default_rng([seed, 0x5EED]).standard_normal((n, k))


def _check_param(name, a, w):
    lo, hi = w.stationary_interval()
    if not lo < a < hi:
        raise OutOfStationaryRegion(f"{name}={a} outside the stationary interval ({lo}, {hi})")


def _solve(w: WeightsMatrix, a: float, rhs: np.ndarray) -> np.ndarray:
    if a == 0.0:
        return rhs.copy()
    if w.nnz < 0.1 * w.n * w.n:
        op = (sp.identity(w.n, format="csc") - a * w.sparse.tocsc()).tocsc()
        return spla.splu(op).solve(rhs)
    return sla.solve(np.eye(w.n) - a * w.dense(), rhs)


def simulate_dgp(params: DgpParams, x, w: WeightsMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``y`` from the general nesting process.

    u ~ N(0, sigma^2 I);  e = (I - lambda W)^-1 u;
    y = (I - rho W)^-1 (alpha + X beta + W X_d theta + e).

    ``x`` is an ``(n, k)`` design or an integer ``k`` to draw standard
    normal columns from ``params.seed``.  Returns ``(y, u)``.
    """
    if isinstance(x, (int, np.integer)):
        x = generate_x(w.n, int(x), params.seed)
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] != w.n:
        raise DimensionMismatch(f"design has shape {x.shape}, weights are {w.n}x{w.n}")
    if x.shape[1] != len(params.beta):
        raise DimensionMismatch(f"{len(params.beta)} betas for {x.shape[1]} columns")
    didx = params.durbin_columns()
    if len(didx) != len(params.theta):
        raise DimensionMismatch("theta length must match the durbin set")
    if params.sigma <= 0:
        raise InvalidValue("sigma must be positive")
    _check_param("rho", params.rho, w)
    _check_param("lambda", params.lambda_, w)
    rng = np.random.default_rng([params.seed, 0xE44])
    u = params.sigma * rng.standard_normal(w.n)
    e = _solve(w, params.lambda_, u)
    mean = params.alpha + x @ np.asarray(params.beta, dtype=float)
    if didx:
        mean = mean + w.lag(x[:, list(didx)]) @ np.asarray(params.theta, dtype=float)
    y = _solve(w, params.rho, mean + e)
    return y, u


def simulate_table(params: DgpParams, w: WeightsMatrix, k: int | None = None, x=None,
                   names: list[str] | None = None) -> AttributeTable:
    """Simulated data as an :class:`AttributeTable` with columns ``y, x1..xk``."""
    if x is None:
        x = generate_x(w.n, k if k is not None else len(params.beta), params.seed)
    x = np.asarray(x, dtype=float)
    y, _ = simulate_dgp(params, x, w)
    names = names or [f"x{i + 1}" for i in range(x.shape[1])]
    cols = {"y": y}
    cols.update({nm: x[:, i] for i, nm in enumerate(names)})
    return AttributeTable(w.region_ids, cols)
