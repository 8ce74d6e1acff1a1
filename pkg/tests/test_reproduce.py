"""Smoke test of the full comparison pipeline on synthetic data with the real column layout."""

import json

import numpy as np
import pytest

from spatialspill.dgp import generate_x, make_lattice
from spatialspill.errors import MissingExternalData
from spatialspill.ingest import geometry_to_geojson
from spatialspill.reproduce import DURBIN, REGRESSORS, RESPONSE, comparison_is_plausible, reproduce


@pytest.fixture(scope="module")
def synthetic_inputs(tmp_path_factory):
    d = tmp_path_factory.mktemp("repro")
    geom, _ = make_lattice(8, 10, "rook")
    rng = np.random.default_rng(0)
    n = geom.n
    x = generate_x(n, len(REGRESSORS), 1)
    cols = dict(zip(REGRESSORS, x.T))
    for c in ("prop_religious", "permanent_5y", "prop_degree", "prop_foreign"):
        cols[c] = rng.uniform(0, 1, n)
    cols["ls_sd"] = rng.uniform(0.5, 2.0, n)
    y = 8 + sum(0.1 * v for v in cols.values()) + rng.normal(scale=0.3, size=n)
    urban = (rng.random(n) < 0.4).astype(float)
    lines = ["region_id," + ",".join([RESPONSE, *REGRESSORS, "urban"])]
    for i, rid in enumerate(geom.region_ids):
        vals = [y[i], *(cols[c][i] for c in REGRESSORS), urban[i]]
        lines.append(rid + "," + ",".join(f"{v:.17g}" for v in vals))
    data = d / "data.csv"
    data.write_text("\n".join(lines) + "\n")
    gj = d / "geom.geojson"
    gj.write_text(json.dumps(geometry_to_geojson(geom)))
    ids = d / "sub.txt"
    ids.write_text("\n".join(geom.region_ids[:40]) + "\n")
    return data, gj, ids


def test_pipeline_runs_end_to_end(synthetic_inputs):
    data, gj, ids = synthetic_inputs
    rep = reproduce(data, gj, ontario_ids=ids, draws=20, seed=1)
    keys = {(r["sample"], r["weights"], r["model"]) for r in rep.rows}
    assert ("full", "rook1", "SDM") in keys
    assert ("ontario", "invdist", "GNS") in keys
    assert {"rook1", "queen1", "queen2", "invdist"} <= {w for _, w in rep.diagnostics}
    for r in rep.rows:
        if r["published"] is not None and r["computed"] is not None:
            assert r["abs_deviation"] == pytest.approx(abs(r["computed"] - r["published"]))
    sdm = rep.fits[("full", "rook1", "SDM")]
    assert sdm.spec.durbin_set == DURBIN
    flags = comparison_is_plausible(rep)
    assert set(flags) == {"ols_hh_income", "ols_ls_sd", "ols_adj_r2", "ols_n", "lm_error_rook",
                          "lm_ordering_rook", "sdm_rho", "sdm_indirect_unemp", "sdem_lambda"}
    assert flags["ols_n"] is False  # 80 synthetic regions, not 1215


def test_missing_inputs(tmp_path):
    with pytest.raises(MissingExternalData, match="--data"):
        reproduce(tmp_path / "none.csv", tmp_path / "none.geojson")
