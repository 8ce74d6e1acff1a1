"""Loading region attribute tables, boundary geometry and GAL neighbor files."""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    AlignmentError,
    BadHeader,
    DuplicateId,
    EmptyTable,
    InvalidValue,
    MalformedRing,
    MissingColumn,
    MissingIdProperty,
    NeighborCountMismatch,
    NonNumericCell,
    UnknownNeighborId,
    UnsupportedGeometryKind,
)
from .graph import NeighborGraph

__all__ = [
    "AttributeTable",
    "GeometrySet",
    "load_table",
    "load_geometry",
    "read_gal",
    "write_gal",
    "format_gal",
    "gal_io",
    "align",
]

PROPORTION_COLUMNS = ("prop_religious", "permanent_5y", "prop_degree", "prop_foreign")
NONNEGATIVE_COLUMNS = ("ls_sd",)
BINARY_COLUMNS = ("urban",)


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.flags.writeable = False
    return arr


class AttributeTable:
    """Region-indexed table of numeric community variables.

    Columns are read-only float arrays aligned with ``region_ids``.
    """

    def __init__(self, region_ids: Sequence[str], columns: Mapping[str, Iterable[float]]):
        ids = tuple(str(r) for r in region_ids)
        seen: set[str] = set()
        for r in ids:
            if not r:
                raise InvalidValue("empty region id")
            if r in seen:
                raise DuplicateId(f"duplicate region id {r!r}")
            seen.add(r)
        cols = {}
        for name, values in columns.items():
            arr = _frozen(values)
            if arr.shape != (len(ids),):
                raise InvalidValue(f"column {name!r} has {arr.size} entries, expected {len(ids)}")
            if not np.all(np.isfinite(arr)):
                bad = ids[int(np.flatnonzero(~np.isfinite(arr))[0])]
                raise InvalidValue(f"column {name!r} has a non-finite value at region {bad!r}")
            cols[name] = arr
        _check_domains(ids, cols)
        self._ids = ids
        self._cols = cols

    @property
    def region_ids(self) -> tuple[str, ...]:
        return self._ids

    @property
    def columns(self) -> dict[str, np.ndarray]:
        return dict(self._cols)

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(self._cols)

    @property
    def n_rows(self) -> int:
        return len(self._ids)

    def __len__(self):
        return len(self._ids)

    def __contains__(self, name):
        return name in self._cols

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self._cols[name]
        except KeyError:
            raise MissingColumn(f"column {name!r} not in table (have {', '.join(self._cols)})") from None

    def matrix(self, names: Sequence[str]) -> np.ndarray:
        """Stack the named columns into an ``(n_rows, len(names))`` array."""
        if not names:
            return np.empty((self.n_rows, 0))
        return np.column_stack([self[c] for c in names])

    def reindex(self, order: Sequence[str]) -> "AttributeTable":
        pos = {r: i for i, r in enumerate(self._ids)}
        missing = [r for r in order if r not in pos]
        if missing:
            raise AlignmentError(f"ids not in table: {', '.join(missing)}", missing_left=missing)
        idx = np.array([pos[r] for r in order], dtype=int)
        return AttributeTable(order, {k: v[idx] for k, v in self._cols.items()})

    def subset(self, ids: Iterable[str]) -> "AttributeTable":
        keep = set(ids)
        return self.reindex([r for r in self._ids if r in keep])

    def with_column(self, name: str, values) -> "AttributeTable":
        cols = dict(self._cols)
        cols[name] = values
        return AttributeTable(self._ids, cols)

    def __eq__(self, other):
        if not isinstance(other, AttributeTable):
            return NotImplemented
        return (
            self._ids == other._ids
            and tuple(self._cols) == tuple(other._cols)
            and all(np.array_equal(self._cols[k], other._cols[k]) for k in self._cols)
        )

    def __repr__(self):
        return f"AttributeTable(n_rows={self.n_rows}, columns={list(self._cols)})"


def _check_domains(ids, cols):
    for name in PROPORTION_COLUMNS:
        if name in cols and np.any((cols[name] < 0) | (cols[name] > 1)):
            i = int(np.flatnonzero((cols[name] < 0) | (cols[name] > 1))[0])
            raise InvalidValue(f"{name} must lie in [0, 1]; region {ids[i]!r} has {cols[name][i]}")
    for name in NONNEGATIVE_COLUMNS:
        if name in cols and np.any(cols[name] < 0):
            i = int(np.flatnonzero(cols[name] < 0)[0])
            raise InvalidValue(f"{name} must be >= 0; region {ids[i]!r} has {cols[name][i]}")
    for name in BINARY_COLUMNS:
        if name in cols and not np.all(np.isin(cols[name], (0.0, 1.0))):
            i = int(np.flatnonzero(~np.isin(cols[name], (0.0, 1.0)))[0])
            raise InvalidValue(f"{name} must be 0 or 1; region {ids[i]!r} has {cols[name][i]}")


def load_table(path, id_column: str = "region_id", delimiter: str = ",") -> AttributeTable:
    """Read a delimiter-separated attribute file with a header row.

    Every column other than ``id_column`` must parse as a finite number;
    blanks are rejected rather than imputed.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyTable(f"{path}: no header row") from None
        if id_column not in header:
            raise MissingColumn(f"{path}: id column {id_column!r} not in header {header}")
        id_pos = header.index(id_column)
        names = [h for i, h in enumerate(header) if i != id_pos]
        ids: list[str] = []
        values: list[list[float]] = [[] for _ in names]
        seen: set[str] = set()
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise NonNumericCell(f"{path}: line {lineno} has {len(row)} fields, expected {len(header)}")
            rid = row[id_pos].strip()
            if not rid:
                raise InvalidValue(f"{path}: line {lineno} has an empty id")
            if rid in seen:
                raise DuplicateId(f"{path}: duplicate region id {rid!r} (line {lineno})")
            seen.add(rid)
            ids.append(rid)
            k = 0
            for i, cell in enumerate(row):
                if i == id_pos:
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise NonNumericCell(
                        f"{path}: line {lineno}, column {names[k]!r}: cannot parse {cell!r}"
                    ) from None
                if not math.isfinite(v):
                    raise NonNumericCell(f"{path}: line {lineno}, column {names[k]!r}: non-finite {cell!r}")
                values[k].append(v)
                k += 1
    if not ids:
        raise EmptyTable(f"{path}: no data rows")
    return AttributeTable(ids, dict(zip(names, values)))


# --------------------------------------------------------------------------
# geometry


def _ring_area_centroid(ring: np.ndarray) -> tuple[float, float, float]:
    x, y = ring[:, 0], ring[:, 1]
    cross = x[:-1] * y[1:] - x[1:] * y[:-1]
    a = cross.sum() / 2.0
    if a == 0.0:
        return 0.0, float(x[:-1].mean()), float(y[:-1].mean())
    cx = ((x[:-1] + x[1:]) * cross).sum() / (6.0 * a)
    cy = ((y[:-1] + y[1:]) * cross).sum() / (6.0 * a)
    return a, cx, cy


def polygon_area(rings: Sequence[np.ndarray]) -> float:
    """Area of a polygon given as ``[exterior, *holes]``."""
    total = abs(_ring_area_centroid(rings[0])[0])
    for hole in rings[1:]:
        total -= abs(_ring_area_centroid(hole)[0])
    return total


def area_centroid(polygons: Sequence[Sequence[np.ndarray]]) -> tuple[float, float]:
    """Planar area-weighted centroid of a (multi)polygon; holes subtract."""
    wsum = 0.0
    cx = cy = 0.0
    for rings in polygons:
        for r, ring in enumerate(rings):
            a, x, y = _ring_area_centroid(ring)
            a = abs(a) if r == 0 else -abs(a)
            wsum += a
            cx += a * x
            cy += a * y
    if wsum == 0.0:
        pts = np.vstack([ring[:-1] for rings in polygons for ring in rings[:1]])
        return float(pts[:, 0].mean()), float(pts[:, 1].mean())
    return cx / wsum, cy / wsum


@dataclass(frozen=True, eq=False)
class GeometrySet:
    """Region polygons in (longitude, latitude) degrees plus one centroid each.

    ``polygons[i]`` is a tuple of polygons; each polygon is a tuple of
    closed rings (exterior first, then holes), each ring an ``(m, 2)``
    array.
    """

    region_ids: tuple[str, ...]
    polygons: tuple[tuple[tuple[np.ndarray, ...], ...], ...]
    centroids: np.ndarray

    @property
    def n(self) -> int:
        return len(self.region_ids)

    def areas(self) -> np.ndarray:
        return np.array([sum(polygon_area(p) for p in polys) for polys in self.polygons])

    def reindex(self, order: Sequence[str]) -> "GeometrySet":
        pos = {r: i for i, r in enumerate(self.region_ids)}
        idx = [pos[r] for r in order]
        return GeometrySet(
            tuple(order),
            tuple(self.polygons[i] for i in idx),
            _frozen(self.centroids[idx]),
        )

    def __eq__(self, other):
        if not isinstance(other, GeometrySet):
            return NotImplemented
        if self.region_ids != other.region_ids or not np.array_equal(self.centroids, other.centroids):
            return False
        for pa, pb in zip(self.polygons, other.polygons):
            if len(pa) != len(pb):
                return False
            for ra, rb in zip(pa, pb):
                if len(ra) != len(rb) or not all(np.array_equal(a, b) for a, b in zip(ra, rb)):
                    return False
        return True


def _close_ring(coords, rid) -> np.ndarray:
    ring = np.asarray(coords, dtype=float)
    if ring.ndim != 2 or ring.shape[1] < 2:
        raise MalformedRing(f"region {rid!r}: ring is not a list of coordinate pairs")
    ring = ring[:, :2]
    if len(ring) and not np.array_equal(ring[0], ring[-1]):
        warnings.warn(f"region {rid!r}: unclosed ring closed by repeating its first vertex", stacklevel=3)
        ring = np.vstack([ring, ring[:1]])
    if len(ring) < 4:
        raise MalformedRing(f"region {rid!r}: ring has {len(ring)} vertices after closure, need >= 4")
    ring.flags.writeable = False
    return ring


def geometry_from_features(features: Sequence[Mapping], id_property: str = "region_id") -> GeometrySet:
    ids: list[str] = []
    polys: list[tuple] = []
    cents: list[tuple[float, float]] = []
    for k, feat in enumerate(features):
        props = feat.get("properties") or {}
        if id_property not in props or props[id_property] in (None, ""):
            raise MissingIdProperty(f"feature {k} has no {id_property!r} property")
        rid = str(props[id_property])
        if rid in ids:
            raise DuplicateId(f"duplicate region id {rid!r} in geometry")
        geom = feat.get("geometry") or {}
        kind = geom.get("type")
        if kind == "Polygon":
            parts = [geom["coordinates"]]
        elif kind == "MultiPolygon":
            parts = geom["coordinates"]
        else:
            raise UnsupportedGeometryKind(f"region {rid!r}: geometry type {kind!r} is not Polygon/MultiPolygon")
        region = tuple(tuple(_close_ring(ring, rid) for ring in part) for part in parts)
        if not region or any(not p for p in region):
            raise MalformedRing(f"region {rid!r}: empty polygon")
        if "centroid" in props and props["centroid"] is not None:
            c = props["centroid"]
            cents.append((float(c[0]), float(c[1])))
        else:
            cents.append(area_centroid(region))
        ids.append(rid)
        polys.append(region)
    return GeometrySet(tuple(ids), tuple(polys), _frozen(np.array(cents, dtype=float).reshape(-1, 2)))


def load_geometry(path, id_property: str = "region_id") -> GeometrySet:
    """Read a JSON feature collection of Polygon/MultiPolygon features."""
    with Path(path).open(encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("type") != "FeatureCollection":
        raise UnsupportedGeometryKind(f"{path}: top-level type must be FeatureCollection")
    return geometry_from_features(doc.get("features", []), id_property)


def geometry_to_geojson(geometry: GeometrySet, id_property: str = "region_id", properties=None) -> dict:
    """Feature collection for ``geometry``; ``properties`` maps id -> extra dict."""
    feats = []
    for rid, polys in zip(geometry.region_ids, geometry.polygons):
        coords = [[ring.tolist() for ring in p] for p in polys]
        g = {"type": "Polygon", "coordinates": coords[0]} if len(coords) == 1 else {
            "type": "MultiPolygon", "coordinates": coords}
        props = {id_property: rid}
        if properties and rid in properties:
            props.update(properties[rid])
        feats.append({"type": "Feature", "properties": props, "geometry": g})
    return {"type": "FeatureCollection", "features": feats}


def align(table: AttributeTable, geometry: GeometrySet) -> tuple[AttributeTable, GeometrySet]:
    """Reorder ``geometry`` to the table's row order; abort on any id mismatch."""
    t_ids, g_ids = set(table.region_ids), set(geometry.region_ids)
    only_t = sorted(t_ids - g_ids)
    only_g = sorted(g_ids - t_ids)
    if only_t or only_g:
        parts = []
        if only_t:
            parts.append(f"in table but not geometry: {', '.join(only_t)}")
        if only_g:
            parts.append(f"in geometry but not table: {', '.join(only_g)}")
        raise AlignmentError("; ".join(parts), only_t, only_g)
    return table, geometry.reindex(table.region_ids)


# --------------------------------------------------------------------------
# GAL


def _gal_lines(text: str) -> list[str]:
    return [ln.rstrip("\r\n") for ln in text.splitlines() if not ln.lstrip().startswith("#")]


def parse_gal(text: str) -> NeighborGraph:
    lines = _gal_lines(text)
    while lines and not lines[0].strip():
        lines.pop(0)
    if not lines:
        raise BadHeader("empty GAL file")
    head = lines[0].split()
    try:
        if len(head) == 1:
            n = int(head[0])
        elif len(head) >= 2 and head[0] == "0":
            n = int(head[1])  # GeoDa-style "0 n shapefile idvar"
        else:
            raise ValueError
    except ValueError:
        raise BadHeader(f"GAL header {lines[0]!r} is not a region count") from None
    if n < 0:
        raise BadHeader(f"negative region count {n}")
    body = lines[1:]
    while body and not body[-1].strip() and len(body) > 2 * n:
        body.pop()
    if len(body) < 2 * n:
        # a trailing k=0 neighbor line may have been stripped by an editor
        body = body + [""] * (2 * n - len(body))
    if len(body) != 2 * n:
        raise BadHeader(f"GAL header declares {n} regions but the body has {len(body)} lines")
    order: list[str] = []
    listed: dict[str, list[str]] = {}
    for r in range(n):
        parts = body[2 * r].split()
        if len(parts) != 2:
            raise BadHeader(f"region line {body[2 * r]!r} must be '<id> <k>'")
        rid, k_txt = parts
        try:
            k = int(k_txt)
        except ValueError:
            raise BadHeader(f"region line {body[2 * r]!r}: count {k_txt!r} is not an integer") from None
        nbrs = body[2 * r + 1].split()
        if len(nbrs) != k:
            raise NeighborCountMismatch(f"region {rid!r} declares {k} neighbors but lists {len(nbrs)}")
        if rid in listed:
            raise DuplicateId(f"region {rid!r} appears twice in GAL file")
        order.append(rid)
        listed[rid] = nbrs
    known = set(order)
    for rid, nbrs in listed.items():
        for j in nbrs:
            if j not in known:
                raise UnknownNeighborId(f"region {rid!r} lists unknown neighbor id {j!r}")
    return NeighborGraph.from_neighbor_ids(listed, order)


def read_gal(path) -> NeighborGraph:
    return parse_gal(Path(path).read_text(encoding="utf-8"))


def format_gal(graph: NeighborGraph) -> str:
    """Canonical GAL text: neighbor ids sorted lexicographically."""
    for rid in graph.region_ids:
        if not rid or any(ch.isspace() for ch in rid):
            raise InvalidValue(f"region id {rid!r} contains whitespace; cannot write GAL")
    out = [str(graph.n)]
    for rid, nbrs in zip(graph.region_ids, graph.adjacency):
        names = sorted(graph.region_ids[j] for j in nbrs)
        out.append(f"{rid} {len(names)}")
        out.append(" ".join(names))
    return "\n".join(out) + "\n"


def write_gal(path, graph: NeighborGraph) -> None:
    Path(path).write_text(format_gal(graph), encoding="utf-8")


def gal_io(path, direction: str = "read", graph: NeighborGraph | None = None):
    """Read or write a GAL neighbor file."""
    if direction == "read":
        return read_gal(path)
    if direction == "write":
        if graph is None:
            raise InvalidValue("writing a GAL file requires a graph")
        write_gal(path, graph)
        return None
    raise InvalidValue(f"direction must be 'read' or 'write', not {direction!r}")
