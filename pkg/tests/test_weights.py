import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import bfs_within, grid_edges, haversine, power_iteration_radius, row_standardize
from spatialspill.dgp import make_lattice
from spatialspill.errors import CoincidentCentroids, DegenerateGeometry, ZeroMatrix
from spatialspill.graph import NeighborGraph
from spatialspill.ingest import GeometrySet, geometry_from_features
from spatialspill.weights import (
    WeightsMatrix,
    build_contiguity,
    build_inverse_distance,
    connectivity_summary,
    format_wm,
    haversine_km,
    normalize,
    parse_wm,
)


def path3():
    return WeightsMatrix.from_graph(NeighborGraph.from_edges(["A", "B", "C"], [(0, 1), (1, 2)]))


def feature(rid, ring):
    return {"type": "Feature", "properties": {"region_id": rid}, "geometry": {"type": "Polygon", "coordinates": [ring]}}


def unit(x0, y0, rid):
    return feature(rid, [[x0, y0], [x0 + 1, y0], [x0 + 1, y0 + 1], [x0, y0 + 1], [x0, y0]])


def points(coords):
    """GeometrySet of tiny squares with explicit centroids (lon, lat)."""
    feats = []
    for k, (lon, lat) in enumerate(coords):
        f = unit(lon, lat, f"p{k}")
        f["properties"]["centroid"] = [lon, lat]
        feats.append(f)
    return geometry_from_features(feats)


# ---- contiguity


def test_2x2_rook_and_queen_counts():
    geom, _ = make_lattice(2, 2)
    assert build_contiguity(geom, "rook").n_edges == 4
    assert build_contiguity(geom, "queen").n_edges == 6


@pytest.mark.parametrize("rows,cols", [(3, 3), (4, 6), (1, 5), (5, 2)])
@pytest.mark.parametrize("rule", ["rook", "queen"])
def test_contiguity_matches_brute_force(rows, cols, rule):
    geom, _ = make_lattice(rows, cols)
    g = build_contiguity(geom, rule)
    assert g.edges() == grid_edges(rows, cols, rule == "queen")


def test_second_order_rook_center_gains_corners():
    geom, _ = make_lattice(3, 3)
    g1 = build_contiguity(geom, "rook")
    g2 = build_contiguity(geom, "rook", order=2)
    adj = {i: set(nb) for i, nb in enumerate(g1.adjacency)}
    for i in range(9):
        assert set(g2.adjacency[i]) == bfs_within(adj, i, 2)
    center = set(g2.neighbors("r1c1"))
    assert {"r0c0", "r0c2", "r2c0", "r2c2"} <= center


def test_exact_order_excludes_first_ring():
    geom, _ = make_lattice(3, 3)
    g = build_contiguity(geom, "rook", order=2, exact_order=True)
    assert set(g.neighbors("r1c1")) == {"r0c0", "r0c2", "r2c0", "r2c2"}


def test_orders_are_monotone():
    geom, _ = make_lattice(5, 5)
    prev = set()
    for p in range(1, 5):
        e = build_contiguity(geom, "queen", order=p).edges()
        assert prev <= e
        prev = e


def test_disjoint_squares_are_islands():
    geom = geometry_from_features([unit(0, 0, "a"), unit(5, 5, "b")])
    g = build_contiguity(geom, "queen")
    assert g.n_edges == 0
    assert connectivity_summary(WeightsMatrix.from_graph(g))["islands"] == 2


def test_rook_partial_edge_overlap():
    # b's lower edge overlaps half of a's upper edge without sharing its endpoints
    a = feature("a", [[0, 0], [2, 0], [2, 1], [0, 1], [0, 0]])
    b = feature("b", [[1, 1], [3, 1], [3, 2], [1, 2], [1, 1]])
    c = feature("c", [[2, 1], [2, 0], [3, 0], [3, 1], [2, 1]])
    geom = geometry_from_features([a, b, c])
    rook = build_contiguity(geom, "rook")
    assert (0, 2) in rook.edges()  # shared x=2 segment
    assert (1, 2) in rook.edges()  # c's top edge lies on b's bottom edge


def test_corner_touch_is_queen_only():
    geom = geometry_from_features([unit(0, 0, "a"), unit(1, 1, "b")])
    assert build_contiguity(geom, "rook").n_edges == 0
    assert build_contiguity(geom, "queen").n_edges == 1


def test_zero_area_region_rejected():
    flat = feature("z", [[0, 0], [1, 0], [2, 0], [0, 0]])
    geom = geometry_from_features([unit(0, 0, "a"), flat])
    with pytest.raises(DegenerateGeometry):
        build_contiguity(geom)


def test_snapping_joins_nearly_shared_edges():
    a = unit(0, 0, "a")
    b = feature("b", [[1 + 1e-12, 0], [2, 0], [2, 1], [1 + 1e-12, 1], [1 + 1e-12, 0]])
    geom = geometry_from_features([a, b])
    assert build_contiguity(geom, "rook", snap_tolerance=1e-9).n_edges == 1


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 7), st.integers(2, 7))
def test_queen_contains_rook_and_symmetric(rows, cols):
    geom, _ = make_lattice(rows, cols)
    rook = build_contiguity(geom, "rook")
    queen = build_contiguity(geom, "queen")
    assert rook.edges() <= queen.edges()
    for g in (rook, queen):
        m = WeightsMatrix.from_graph(g).dense()
        np.testing.assert_array_equal(m, m.T)


# ---- inverse distance


def test_inverse_distance_100km():
    # a meridian arc of 100 km spans 100 / R radians of latitude
    dlat = math.degrees(100.0 / 6371.0088)
    w = build_inverse_distance(points([(0.0, 0.0), (0.0, dlat)]))
    np.testing.assert_allclose(w.dense(), [[0, 0.01], [0.01, 0]], rtol=1e-12)


def test_equatorial_distances_linear_in_longitude():
    assert haversine(0, 0, 1, 0) == pytest.approx(111.19, abs=0.01)
    w = build_inverse_distance(points([(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)])).dense()
    assert w[0, 2] == pytest.approx(w[0, 1] / 2, abs=1e-6)
    assert w[0, 1] == pytest.approx(1 / haversine(0, 0, 1, 0), rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(-179, 179), st.floats(-80, 80), st.floats(-179, 179), st.floats(-80, 80))
def test_haversine_matches_oracle(lon1, lat1, lon2, lat2):
    assert float(haversine_km(lon1, lat1, lon2, lat2)) == pytest.approx(haversine(lon1, lat1, lon2, lat2),
                                                                        rel=1e-9, abs=1e-9)


def test_coincident_centroids():
    with pytest.raises(CoincidentCentroids):
        build_inverse_distance(points([(1.0, 1.0), (2.0, 2.0), (1.0, 1.0)]))


# ---- normalization


def test_row_normalized_path():
    w = normalize(path3(), "row")
    np.testing.assert_allclose(w.dense(), [[0, 1, 0], [0.5, 0, 0.5], [0, 1, 0]], atol=0)
    assert w.is_structurally_symmetric
    assert not w.is_symmetric()


def test_spectral_normalized_path():
    raw = path3().dense()
    lam = np.max(np.abs(np.linalg.eigvals(raw)))
    assert lam == pytest.approx(math.sqrt(2), abs=1e-14)
    w = normalize(path3(), "spectral")
    np.testing.assert_allclose(w.dense(), raw / lam, rtol=1e-14)


def test_spectral_two_cycle_unchanged():
    g = NeighborGraph.from_edges(["A", "B"], [(0, 1)])
    w = normalize(WeightsMatrix.from_graph(g), "spectral")
    np.testing.assert_allclose(w.dense(), [[0, 1], [1, 0]], atol=1e-15)


def test_islands_stay_zero_and_warn():
    g = NeighborGraph.from_edges(["A", "B", "C"], [(0, 1)])
    with pytest.warns(UserWarning, match="C"):
        w = normalize(WeightsMatrix.from_graph(g), "row")
    np.testing.assert_allclose(w.lag(np.ones(3)), [1, 1, 0], atol=1e-12)


def test_zero_matrix():
    g = NeighborGraph.from_edges(["A", "B"], [])
    with pytest.raises(ZeroMatrix):
        normalize(WeightsMatrix.from_graph(g), "row")


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 9), st.integers(2, 9), st.sampled_from(["rook", "queen"]))
def test_normalization_properties(rows, cols, rule):
    geom, _ = make_lattice(rows, cols)
    raw = WeightsMatrix.from_graph(build_contiguity(geom, rule))
    wr = normalize(raw, "row")
    np.testing.assert_allclose(wr.lag(np.ones(wr.n)), 1.0, atol=1e-12)
    np.testing.assert_allclose(wr.dense(), row_standardize(raw.dense()), atol=1e-15)
    assert wr.is_structurally_symmetric
    ws = normalize(raw, "spectral")
    assert power_iteration_radius(ws.dense()) == pytest.approx(1.0, abs=1e-9)


def test_eigenvalues_of_row_normalized_match_dense():
    w = normalize(WeightsMatrix.from_graph(make_lattice(4, 5, "queen")[1]), "row")
    ours = np.sort(np.real(w.eigenvalues))
    ref = np.sort(np.real(np.linalg.eigvals(w.dense())))
    np.testing.assert_allclose(ours, ref, atol=1e-10)


def test_connectivity_summary_path():
    s = connectivity_summary(path3())
    assert s["mean_neighbors"] == pytest.approx(4 / 3)
    assert s["islands"] == 0
    assert s["symmetric"] is True


def test_wm_round_trip():
    w = normalize(WeightsMatrix.from_graph(make_lattice(3, 4, "queen")[1]), "row")
    back = parse_wm(format_wm(w))
    assert back.region_ids == w.region_ids
    np.testing.assert_array_equal(back.dense(), w.dense())
    assert back.fingerprint == w.fingerprint
    np.testing.assert_allclose(np.sort(np.real(back.eigenvalues)), np.sort(np.real(w.eigenvalues)), atol=1e-12)


def test_reorder_then_normalize_commutes():
    raw = WeightsMatrix.from_graph(make_lattice(3, 3)[1])
    order = list(reversed(raw.region_ids))
    a = normalize(raw.reorder(order), "row")
    b = normalize(raw, "row").reorder(order)
    np.testing.assert_array_equal(a.dense(), b.dense())
    assert a.fingerprint == b.fingerprint


def test_stationary_interval_row():
    w = normalize(WeightsMatrix.from_graph(make_lattice(4, 4)[1]), "row")
    lo, hi = w.stationary_interval()
    ev = np.real(np.linalg.eigvals(w.dense()))
    assert hi == pytest.approx(1.0 / ev.max(), abs=1e-10)
    assert lo == pytest.approx(1.0 / ev.min(), abs=1e-10)


def test_lattice_geometry_builds_cleanly():
    assert isinstance(make_lattice(2, 2)[0], GeometrySet)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        build_contiguity(make_lattice(2, 3)[0])
