import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spatialspill.errors import (
    AlignmentError,
    BadHeader,
    DuplicateId,
    InvalidValue,
    MalformedRing,
    MissingColumn,
    MissingIdProperty,
    NeighborCountMismatch,
    NonNumericCell,
    UnknownNeighborId,
    UnsupportedGeometryKind,
)
from spatialspill.graph import NeighborGraph
from spatialspill.ingest import (
    AttributeTable,
    align,
    format_gal,
    gal_io,
    geometry_from_features,
    load_geometry,
    load_table,
    parse_gal,
    polygon_area,
)


def square(x0, y0, rid, close=True):
    ring = [[x0, y0], [x0 + 1, y0], [x0 + 1, y0 + 1], [x0, y0 + 1]]
    if close:
        ring.append(ring[0])
    return {"type": "Feature", "properties": {"region_id": rid},
            "geometry": {"type": "Polygon", "coordinates": [ring]}}


# ---- tables


def test_minimal_table(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("id,y\nA,0\n")
    t = load_table(p, id_column="id")
    assert t.n_rows == 1
    assert t["y"].tolist() == [0.0]


def test_duplicate_id_named(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("region_id,y\nA,1\nB,2\nA,3\n")
    with pytest.raises(DuplicateId, match="'A'"):
        load_table(p)


def test_non_numeric_cell_reports_location(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("region_id,y\nA,1\nB,abc\n")
    with pytest.raises(NonNumericCell, match="y"):
        load_table(p)


def test_missing_id_column(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("name,y\nA,1\n")
    with pytest.raises(MissingColumn):
        load_table(p)


def test_column_access_and_domain_checks():
    t = AttributeTable(["A", "B"], {"y": [1.0, 2.0]})
    with pytest.raises(MissingColumn):
        t["nope"]
    with pytest.raises(InvalidValue):
        AttributeTable(["A", "B"], {"prop_degree": [0.2, 1.5]})
    with pytest.raises(InvalidValue):
        AttributeTable(["A", "B"], {"urban": [0, 2]})
    with pytest.raises(InvalidValue):
        AttributeTable(["A", "B"], {"ls_sd": [-0.1, 1]})
    with pytest.raises(ValueError):
        t["y"][0] = 5.0


def test_load_determinism(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("region_id,y,x\nA,1,2\nB,3.5,-1e-3\n")
    assert load_table(p) == load_table(p)


# ---- geometry


def test_two_squares_centroids():
    g = geometry_from_features([square(0, 0, "a"), square(1, 0, "b")])
    assert g.n == 2
    np.testing.assert_allclose(g.centroids, [[0.5, 0.5], [1.5, 0.5]], atol=1e-15)
    np.testing.assert_allclose(g.areas(), [1.0, 1.0])


def test_missing_id_property():
    f = square(0, 0, "a")
    f["properties"] = {}
    with pytest.raises(MissingIdProperty):
        geometry_from_features([f])


def test_unsupported_kind():
    f = {"type": "Feature", "properties": {"region_id": "p"}, "geometry": {"type": "Point", "coordinates": [0, 0]}}
    with pytest.raises(UnsupportedGeometryKind):
        geometry_from_features([f])


def test_unclosed_triangle_auto_closed():
    tri = [[0.0, 0.0], [2.0, 0.0], [0.0, 1.0]]
    oracle = tri + [tri[0]]  # closing by direct append
    f = {"type": "Feature", "properties": {"region_id": "t"}, "geometry": {"type": "Polygon", "coordinates": [tri]}}
    with pytest.warns(UserWarning, match="unclosed"):
        g = geometry_from_features([f])
    ring = g.polygons[0][0][0]
    assert ring.shape == (4, 2)
    np.testing.assert_array_equal(ring, np.array(oracle))


def test_degenerate_ring_rejected():
    f = {"type": "Feature", "properties": {"region_id": "t"},
         "geometry": {"type": "Polygon", "coordinates": [[[0, 0], [1, 0]]]}}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(MalformedRing):
            geometry_from_features([f])


def test_polygon_area_with_hole():
    outer = np.array([[0, 0], [4, 0], [4, 4], [0, 4], [0, 0]], float)
    hole = np.array([[1, 1], [1, 2], [2, 2], [2, 1], [1, 1]], float)
    assert polygon_area([outer, hole]) == pytest.approx(15.0)


def test_load_geometry_file(tmp_path):
    p = tmp_path / "g.geojson"
    p.write_text(json.dumps({"type": "FeatureCollection", "features": [square(0, 0, "a"), square(1, 0, "b")]}))
    g = load_geometry(p)
    assert g.region_ids == ("a", "b")
    assert load_geometry(p) == g


def test_align_reorders_and_reports_every_mismatch():
    g = geometry_from_features([square(0, 0, "a"), square(1, 0, "b"), square(2, 0, "c")])
    t = AttributeTable(["c", "a", "b"], {"y": [1, 2, 3]})
    t2, g2 = align(t, g)
    assert g2.region_ids == t2.region_ids == ("c", "a", "b")
    bad = AttributeTable(["a", "b", "x", "y"], {"y": [1, 2, 3, 4]})
    with pytest.raises(AlignmentError) as ei:
        align(bad, g)
    assert list(ei.value.missing_left) == ["x", "y"]
    assert list(ei.value.missing_right) == ["c"]
    for rid in ("x", "y", "c"):
        assert rid in str(ei.value)


# ---- GAL


def test_gal_path_graph():
    g = parse_gal("3\nA 1\nB\nB 2\nA C\nC 1\nB")
    # hand parse: A-B, B-C
    assert g.region_ids == ("A", "B", "C")
    assert g.edges() == {(0, 1), (1, 2)}


def test_gal_count_mismatch():
    with pytest.raises(NeighborCountMismatch):
        parse_gal("3\nA 1\nB\nB 2\nA\nC 1\nB")


def test_gal_unknown_neighbor():
    with pytest.raises(UnknownNeighborId, match="'Z'"):
        parse_gal("2\nA 1\nZ\nB 1\nA\n")


def test_gal_bad_header():
    with pytest.raises(BadHeader):
        parse_gal("three\nA 0\n\n")


def test_gal_geoda_header():
    g = parse_gal("0 2 shapes id\nA 1\nB\nB 1\nA\n")
    assert g.n_edges == 1


def test_gal_write_read_canonical(tmp_path):
    text = "3\nA 1\nB\nB 2\nC A\nC 1\nB"
    g = parse_gal(text)
    canon = format_gal(g)
    assert canon == "3\nA 1\nB\nB 2\nA C\nC 1\nB\n"
    p = tmp_path / "g.gal"
    gal_io(p, "write", g)
    assert p.read_text() == canon
    assert format_gal(gal_io(p, "read")) == canon


@st.composite
def graphs(draw):
    n = draw(st.integers(1, 12))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    edges = draw(st.lists(st.sampled_from(pairs), unique=True)) if pairs else []
    ids = [f"r{i}" for i in range(n)]
    return NeighborGraph.from_edges(ids, edges)


@settings(max_examples=60, deadline=None)
@given(graphs())
def test_gal_round_trip_property(g):
    assert parse_gal(format_gal(g)) == g
