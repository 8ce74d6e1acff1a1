"""Spatial weights: contiguity and inverse-distance construction, normalization.

A :class:`WeightsMatrix` wraps a CSR matrix with zero diagonal and strictly
positive stored weights.  Its eigenvalues are computed once, on first use,
and shared by every log-determinant evaluation and effects computation.
"""

from __future__ import annotations

import hashlib
import threading
import warnings
from collections import defaultdict
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import (
    BadHeader,
    CoincidentCentroids,
    DegenerateGeometry,
    InvalidValue,
    UnknownNeighborId,
    ZeroMatrix,
)
from .graph import NeighborGraph
from .ingest import GeometrySet

__all__ = [
    "NeighborGraph",
    "WeightsMatrix",
    "build_contiguity",
    "build_inverse_distance",
    "haversine_km",
    "normalize",
    "connectivity_summary",
    "read_wm",
    "write_wm",
    "EARTH_RADIUS_KM",
]

EARTH_RADIUS_KM = 6371.0088
_DENSE_EIG_LIMIT = 4000


class WeightsMatrix:
    """Sparse N x N spatial weights with normalization provenance.

    Parameters
    ----------
    matrix : array-like or sparse matrix
        Nonnegative weights; zeros are dropped, the diagonal must be zero.
    region_ids : sequence of str
        Row/column labels.
    normalization : {"none", "row", "spectral"}
    provenance : str
        How the structure was built, e.g. ``"contiguity:rook:1"`` or
        ``"inverse_distance"``.
    """

    def __init__(self, matrix, region_ids: Sequence[str], normalization: str = "none",
                 provenance: str = "custom", _similarity: np.ndarray | None = None):
        m = sp.csr_matrix(matrix, dtype=float)
        m.eliminate_zeros()
        m.sort_indices()
        n = m.shape[0]
        if m.shape != (n, n):
            raise InvalidValue(f"weights must be square, got {m.shape}")
        if len(region_ids) != n:
            raise InvalidValue(f"{len(region_ids)} region ids for a {n}x{n} matrix")
        if np.any(m.diagonal() != 0):
            raise InvalidValue("weights matrix must have a zero diagonal")
        if m.nnz and (not np.all(np.isfinite(m.data)) or np.any(m.data <= 0)):
            raise InvalidValue("stored weights must be strictly positive and finite")
        if normalization not in ("none", "row", "spectral"):
            raise InvalidValue(f"unknown normalization {normalization!r}")
        m.data.flags.writeable = False
        self._m = m
        self.region_ids = tuple(str(r) for r in region_ids)
        self.normalization = normalization
        self.provenance = provenance
        # d with D^{1/2} W D^{-1/2} symmetric, when known (row-normalized symmetric input)
        self._similarity = _similarity
        self._eig_lock = threading.Lock()
        self._eigenvalues: np.ndarray | None = None

    # -- basic views -------------------------------------------------------
    @property
    def n(self) -> int:
        return self._m.shape[0]

    @property
    def sparse(self) -> sp.csr_matrix:
        return self._m

    def dense(self) -> np.ndarray:
        return self._m.toarray()

    def lag(self, x: np.ndarray) -> np.ndarray:
        """Spatial lag ``W @ x``."""
        return self._m @ x

    @property
    def nnz(self) -> int:
        return self._m.nnz

    @property
    def s0(self) -> float:
        return float(self._m.data.sum())

    @property
    def s1(self) -> float:
        t = self._m + self._m.T
        return float(0.5 * t.multiply(t).sum())

    @property
    def s2(self) -> float:
        r = np.asarray(self._m.sum(axis=1)).ravel()
        c = np.asarray(self._m.sum(axis=0)).ravel()
        return float(((r + c) ** 2).sum())

    def triples(self) -> list[tuple[int, int, float]]:
        coo = self._m.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return [(int(coo.row[k]), int(coo.col[k]), float(coo.data[k])) for k in order]

    def structure(self) -> NeighborGraph | None:
        """Binary neighbor graph, or ``None`` when the structure is asymmetric."""
        if not self.is_structurally_symmetric():
            return None
        adj = tuple(tuple(int(j) for j in self._m.indices[self._m.indptr[i]:self._m.indptr[i + 1]])
                    for i in range(self.n))
        return NeighborGraph(self.region_ids, adj)

    def is_structurally_symmetric(self) -> bool:
        b = (self._m != 0).astype(np.int8)
        return (b != b.T).nnz == 0

    def is_symmetric(self, tol: float = 0.0) -> bool:
        d = self._m - self._m.T
        return d.nnz == 0 or float(np.abs(d.data).max()) <= tol

    def islands(self) -> tuple[str, ...]:
        counts = np.diff(self._m.indptr)
        return tuple(r for r, c in zip(self.region_ids, counts) if c == 0)

    @property
    def fingerprint(self) -> str:
        """SHA-256 over ids, normalization and exact weights."""
        h = hashlib.sha256()
        h.update("\x1f".join(self.region_ids).encode())
        h.update(self.normalization.encode())
        h.update(self._m.indptr.astype(np.int64).tobytes())
        h.update(self._m.indices.astype(np.int64).tobytes())
        h.update(self._m.data.astype(np.float64).tobytes())
        return h.hexdigest()

    def reorder(self, order: Sequence[str]) -> "WeightsMatrix":
        pos = {r: i for i, r in enumerate(self.region_ids)}
        if set(order) != set(pos) or len(order) != len(pos):
            raise InvalidValue("reorder requires exactly the same id set")
        idx = np.array([pos[r] for r in order])
        m = self._m[idx][:, idx]
        sim = None if self._similarity is None else self._similarity[idx]
        return WeightsMatrix(m, order, self.normalization, self.provenance, sim)

    def subset(self, ids: Sequence[str]) -> "WeightsMatrix":
        """Restrict to ``ids`` (in the given order) without renormalizing."""
        pos = {r: i for i, r in enumerate(self.region_ids)}
        idx = np.array([pos[r] for r in ids])
        return WeightsMatrix(self._m[idx][:, idx], ids, "none", self.provenance)

    # -- spectrum ----------------------------------------------------------
    @property
    def eigenvalues(self) -> np.ndarray:
        """All eigenvalues of W (complex dtype only if any are non-real)."""
        if self._eigenvalues is None:
            with self._eig_lock:
                if self._eigenvalues is None:
                    self._eigenvalues = self._compute_eigenvalues()
        return self._eigenvalues

    def _compute_eigenvalues(self) -> np.ndarray:
        a = self.dense()
        if self.is_symmetric(tol=1e-14 * max(1.0, float(np.abs(a).max(initial=0.0)))):
            ev = sla.eigvalsh(0.5 * (a + a.T))
        elif self._similarity is not None:
            s = np.sqrt(self._similarity)
            b = (s[:, None] * a) / s[None, :]
            ev = sla.eigvalsh(0.5 * (b + b.T))
        else:
            ev = sla.eigvals(a)
            if np.all(np.abs(ev.imag) <= 1e-10 * max(1.0, np.abs(ev).max())):
                ev = ev.real.copy()
            else:
                ev = ev.astype(complex)
        ev.flags.writeable = False
        return ev

    @property
    def spectral_bounds(self) -> tuple[float, float]:
        """(smallest, largest) real eigenvalue."""
        ev = self.eigenvalues
        if np.iscomplexobj(ev):
            real = ev[np.abs(ev.imag) <= 1e-10].real
            ev = real if real.size else ev.real
        return float(ev.min()), float(ev.max())

    def stationary_interval(self) -> tuple[float, float]:
        """Open interval of ``a`` for which ``I - aW`` is nonsingular around 0.

        ``(-1, 1)`` for spectral normalization; otherwise
        ``(1/omega_min, 1/omega_max)``.
        """
        if self.normalization == "spectral":
            return -1.0, 1.0
        lo, hi = self.spectral_bounds
        left = 1.0 / lo if lo < 0 else -np.inf
        right = 1.0 / hi if hi > 0 else np.inf
        return left, right

    def __repr__(self):
        return (f"WeightsMatrix(n={self.n}, nnz={self.nnz}, normalization={self.normalization!r}, "
                f"provenance={self.provenance!r})")

    # -- constructors ------------------------------------------------------
    @classmethod
    def from_graph(cls, graph: NeighborGraph, provenance: str = "graph") -> "WeightsMatrix":
        rows = [i for i, nb in enumerate(graph.adjacency) for _ in nb]
        cols = [j for nb in graph.adjacency for j in nb]
        m = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(graph.n, graph.n))
        return cls(m, graph.region_ids, "none", provenance)


# --------------------------------------------------------------------------
# contiguity


def _snap(ring: np.ndarray, tol: float) -> list[tuple[int, int]]:
    q = np.rint(np.asarray(ring, dtype=float) / tol).astype(np.int64)
    return [(int(a), int(b)) for a, b in q]


def _collinear_overlap(p1, p2, q1, q2) -> bool:
    """True when two integer segments are collinear with positive overlap."""
    dx, dy = p2[0] - p1[0], p2[1] - p1[1]
    if dx * (q1[1] - p1[1]) - dy * (q1[0] - p1[0]) != 0:
        return False
    if dx * (q2[1] - p1[1]) - dy * (q2[0] - p1[0]) != 0:
        return False
    # project on the segment direction (exact integer arithmetic)
    t = sorted((0, dx * dx + dy * dy))
    s = sorted((dx * (q1[0] - p1[0]) + dy * (q1[1] - p1[1]),
                dx * (q2[0] - p1[0]) + dy * (q2[1] - p1[1])))
    return min(t[1], s[1]) - max(t[0], s[0]) > 0


def build_contiguity(geometry: GeometrySet, rule: str = "queen", order: int = 1,
                     snap_tolerance: float = 1e-9, exact_order: bool = False) -> NeighborGraph:
    """Contiguity neighbor graph from polygon boundaries.

    Coordinates are snapped to a grid of size ``snap_tolerance`` and then
    compared exactly.  Queen links regions sharing a boundary vertex; rook
    requires a shared boundary segment of positive length (identical
    segments, or collinear overlapping segments between regions that
    already share a vertex).  ``order > 1`` links regions within that graph
    distance, or at exactly that distance with ``exact_order``.
    """
    if rule not in ("queen", "rook"):
        raise InvalidValue(f"rule must be 'queen' or 'rook', not {rule!r}")
    if order < 1:
        raise InvalidValue("order must be >= 1")
    if geometry.n == 0:
        raise InvalidValue("geometry is empty")
    if snap_tolerance <= 0:
        raise InvalidValue("snap tolerance must be positive")
    areas = geometry.areas()
    flat = [r for r, a in zip(geometry.region_ids, areas) if not a > 0]
    if flat:
        raise DegenerateGeometry(f"zero-area regions: {', '.join(flat)}")

    vertex_owner: dict[tuple[int, int], set[int]] = defaultdict(set)
    seg_owner: dict[frozenset, set[int]] = defaultdict(set)
    segs_at: list[dict[tuple[int, int], list[tuple]]] = []
    for i, polys in enumerate(geometry.polygons):
        at: dict[tuple[int, int], list[tuple]] = defaultdict(list)
        for poly in polys:
            for ring in poly:
                pts = _snap(ring, snap_tolerance)
                for a, b in zip(pts[:-1], pts[1:]):
                    vertex_owner[a].add(i)
                    if a == b:
                        continue
                    seg_owner[frozenset((a, b))].add(i)
                    at[a].append((a, b))
                    at[b].append((a, b))
        segs_at.append(at)

    shared_vertices: dict[tuple[int, int], list[tuple[int, int]]] = defaultdict(list)
    for v, owners in vertex_owner.items():
        if len(owners) > 1:
            ow = sorted(owners)
            for x in range(len(ow)):
                for y in range(x + 1, len(ow)):
                    shared_vertices[(ow[x], ow[y])].append(v)

    edges: set[tuple[int, int]] = set()
    if rule == "queen":
        edges = set(shared_vertices)
    else:
        for owners in seg_owner.values():
            if len(owners) > 1:
                ow = sorted(owners)
                for x in range(len(ow)):
                    for y in range(x + 1, len(ow)):
                        edges.add((ow[x], ow[y]))
        for (i, j), verts in shared_vertices.items():
            if (i, j) in edges:
                continue
            found = False
            for v in verts:
                for s in segs_at[i].get(v, ()):
                    for t in segs_at[j].get(v, ()):
                        if _collinear_overlap(s[0], s[1], t[0], t[1]):
                            found = True
                            break
                    if found:
                        break
                if found:
                    break
            if found:
                edges.add((i, j))
    graph = NeighborGraph.from_edges(geometry.region_ids, edges)
    if order > 1:
        graph = graph.higher_order(order, cumulative=not exact_order)
    return graph


# --------------------------------------------------------------------------
# distance


def haversine_km(lon1, lat1, lon2, lat2, radius: float = EARTH_RADIUS_KM):
    """Great-circle distance in kilometers between points given in degrees."""
    lon1, lat1, lon2, lat2 = map(np.radians, (lon1, lat1, lon2, lat2))
    a = np.sin((lat2 - lat1) / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2
    return 2 * radius * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def build_inverse_distance(geometry: GeometrySet) -> WeightsMatrix:
    """Dense inverse great-circle distance between centroids, no cut-off."""
    n = geometry.n
    if n < 2:
        raise InvalidValue("inverse-distance weights need at least two regions")
    lon, lat = geometry.centroids[:, 0], geometry.centroids[:, 1]
    d = haversine_km(lon[:, None], lat[:, None], lon[None, :], lat[None, :])
    off = ~np.eye(n, dtype=bool)
    zero = np.argwhere((d == 0) & off)
    if zero.size:
        i, j = zero[0]
        raise CoincidentCentroids(
            f"regions {geometry.region_ids[i]!r} and {geometry.region_ids[j]!r} have coincident centroids"
        )
    w = np.zeros_like(d)
    w[off] = 1.0 / d[off]
    return WeightsMatrix(w, geometry.region_ids, "none", "inverse_distance")


# --------------------------------------------------------------------------
# normalization


def normalize(w, scheme: str = "row") -> WeightsMatrix:
    """Row-standardize or spectrally normalize a weights matrix or graph.

    Island rows stay all zero under row standardization (a warning lists
    them).  Spectral normalization divides by the largest-magnitude
    eigenvalue.
    """
    if isinstance(w, NeighborGraph):
        w = WeightsMatrix.from_graph(w)
    if w.nnz == 0:
        raise ZeroMatrix("weights matrix has no entries")
    m = w.sparse
    if scheme == "row":
        rs = np.asarray(m.sum(axis=1)).ravel()
        isl = rs == 0
        if isl.any():
            ids = [r for r, z in zip(w.region_ids, isl) if z]
            warnings.warn(f"{len(ids)} island rows left all-zero: {', '.join(ids)}", stacklevel=2)
        inv = np.where(isl, 0.0, 1.0 / np.where(isl, 1.0, rs))
        out = sp.diags(inv) @ m
        sim = None
        if w.is_symmetric():
            sim = np.where(isl, 1.0, rs)
        elif w._similarity is not None:
            sim = w._similarity * np.where(isl, 1.0, rs)
        return WeightsMatrix(out, w.region_ids, "row", w.provenance, sim)
    if scheme == "spectral":
        radius = spectral_radius(w)
        if radius == 0:
            raise ZeroMatrix("weights matrix is nilpotent (spectral radius 0)")
        out = WeightsMatrix(m / radius, w.region_ids, "spectral", w.provenance, w._similarity)
        if w._eigenvalues is not None:
            ev = w._eigenvalues / radius
            ev.flags.writeable = False
            out._eigenvalues = ev
        return out
    if scheme == "none":
        return w
    raise InvalidValue(f"unknown normalization scheme {scheme!r}")


def spectral_radius(w: WeightsMatrix) -> float:
    if w.n <= _DENSE_EIG_LIMIT:
        return float(np.abs(w.eigenvalues).max())
    from scipy.sparse.linalg import eigs

    val = eigs(w.sparse, k=1, which="LM", return_eigenvectors=False)
    return float(np.abs(val).max())


def connectivity_summary(w) -> dict:
    """Counts and neighbor-cardinality statistics for a weights matrix or graph."""
    if isinstance(w, NeighborGraph):
        w = WeightsMatrix.from_graph(w)
    counts = np.diff(w.sparse.indptr)
    islands = w.islands()
    return {
        "n": w.n,
        "nonzero": int(w.nnz),
        "min_neighbors": int(counts.min()) if w.n else 0,
        "mean_neighbors": float(counts.mean()) if w.n else 0.0,
        "max_neighbors": int(counts.max()) if w.n else 0,
        "islands": len(islands),
        "island_ids": list(islands),
        "symmetric": bool(w.is_structurally_symmetric()),
        "normalization": w.normalization,
        "provenance": w.provenance,
    }


# --------------------------------------------------------------------------
# .wm triple files


def format_wm(w: WeightsMatrix) -> str:
    for rid in w.region_ids:
        if not rid or any(ch.isspace() for ch in rid):
            raise InvalidValue(f"region id {rid!r} contains whitespace; cannot write .wm")
    lines = [f"{w.n} {w.normalization} {w.provenance}", "# region_ids " + " ".join(w.region_ids)]
    ids = w.region_ids
    for i, j, v in w.triples():
        lines.append(f"{ids[i]} {ids[j]} {v:.17g}")
    return "\n".join(lines) + "\n"


def write_wm(path, w: WeightsMatrix) -> None:
    Path(path).write_text(format_wm(w), encoding="utf-8")


def parse_wm(text: str, region_ids: Sequence[str] | None = None) -> WeightsMatrix:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise BadHeader("empty .wm file")
    head = lines[0].split()
    if len(head) != 3:
        raise BadHeader(f".wm header {lines[0]!r} must be 'n normalization provenance'")
    try:
        n = int(head[0])
    except ValueError:
        raise BadHeader(f".wm header count {head[0]!r} is not an integer") from None
    norm, prov = head[1], head[2]
    ids = list(region_ids) if region_ids is not None else None
    triples = []
    for ln in lines[1:]:
        if ln.startswith("#"):
            parts = ln[1:].split()
            if parts and parts[0] == "region_ids" and ids is None:
                ids = parts[1:]
            continue
        parts = ln.split()
        if len(parts) != 3:
            raise BadHeader(f".wm line {ln!r} must be 'row col weight'")
        triples.append((parts[0], parts[1], float(parts[2])))
    if ids is None:
        ids = []
        for a, b, _ in triples:
            for r in (a, b):
                if r not in ids:
                    ids.append(r)
    if len(ids) != n:
        raise BadHeader(f".wm header declares {n} regions but {len(ids)} ids are known")
    pos = {r: i for i, r in enumerate(ids)}
    rows, cols, vals = [], [], []
    for a, b, v in triples:
        for r in (a, b):
            if r not in pos:
                raise UnknownNeighborId(f".wm references unknown region id {r!r}")
        rows.append(pos[a])
        cols.append(pos[b])
        vals.append(v)
    m = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    sim = None
    if norm == "row":
        # recover the symmetrizer of a row-standardized symmetric matrix: W_ij d_i = W_ji d_j
        rs_inv = np.zeros(n)
        for i in range(n):
            row = m.data[m.indptr[i]:m.indptr[i + 1]]
            rs_inv[i] = row.max() if row.size else 1.0
        cand = 1.0 / rs_inv
        c = sp.diags(cand) @ m
        asym = abs(c - c.T).max() if c.nnz else 0.0
        if asym <= 1e-12 * max(1.0, abs(c).max() if c.nnz else 0.0):
            sim = cand
    return WeightsMatrix(m, ids, norm, prov, sim)


def read_wm(path, region_ids: Sequence[str] | None = None) -> WeightsMatrix:
    return parse_wm(Path(path).read_text(encoding="utf-8"), region_ids)
