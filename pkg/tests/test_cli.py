import json
import subprocess
import sys

import jsonschema
import pytest

from spatialspill.cli import FIT_SCHEMA, build_parser, execute


@pytest.fixture
def sim_files(tmp_path):
    data, gal = tmp_path / "d.csv", tmp_path / "w.gal"
    rc = execute(["simulate", "--lattice", "8x8", "--model", "sdm", "--rho", "0.3", "--theta", "0.5",
                  "--seed", "3", "--out", f"{data},{gal}"])
    assert rc == 0
    return data, gal


def test_simulate_writes_data_and_manifest(sim_files):
    data, gal = sim_files
    assert data.read_text().splitlines()[0] == "region_id,y,x1,x2"
    assert gal.read_text().startswith("64\n")
    man = json.loads((data.parent / "d.csv.manifest.json").read_text())
    assert man["subcommand"] == "simulate"
    assert man["options"]["seed"] == 3
    assert "version" in man and "created" in man


def test_fit_sdm_validates_against_schema(sim_files, tmp_path):
    data, gal = sim_files
    out = tmp_path / "fit.json"
    rc = execute(["fit", "--model", "sdm", "--data", str(data), "--y", "y", "--x", "x1,x2", "--durbin", "x1",
                  "--weights", str(gal), "--out", str(out), "--quiet"])
    assert rc == 0
    doc = json.loads(out.read_text())
    jsonschema.validate(doc, FIT_SCHEMA)
    assert doc["spec"]["kind"] == "SDM"
    man = json.loads((tmp_path / "fit.json.manifest.json").read_text())
    assert set(man["inputs"]) == {str(data), str(gal)}
    assert all(len(h) == 64 for h in man["inputs"].values())


def test_effects_after_fit(sim_files, tmp_path):
    data, gal = sim_files
    fj, eff = tmp_path / "fit.json", tmp_path / "eff.csv"
    assert execute(["fit", "--model", "sdm", "--data", str(data), "--y", "y", "--x", "x1,x2", "--durbin", "x1",
                    "--weights", str(gal), "--out", str(fj), "--quiet"]) == 0
    assert execute(["effects", "--fit", str(fj), "--weights", str(gal), "--draws", "50", "--out", str(eff)]) == 0
    lines = eff.read_text().splitlines()
    assert lines[0] == "panel,variable,estimate,mean,se,t,p,stars"
    assert len(lines) == 1 + 6 + 1


def test_primary_outputs_are_byte_identical(sim_files, tmp_path):
    data, gal = sim_files
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / f"lisa_{tag}.csv"
        assert execute(["lisa", "--data", str(data), "--variable", "y", "--weights", str(gal),
                        "--permutations", "99", "--seed", "5", "--threads", "2", "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_numbers_use_17_significant_digits(sim_files, tmp_path):
    data, gal = sim_files
    out = tmp_path / "m.csv"
    assert execute(["moran", "--data", str(data), "--variable", "y", "--weights", str(gal),
                    "--permutations", "0", "--out", str(out)]) == 0
    header, row = out.read_text().splitlines()
    i_text = row.split(",")[1]
    assert float(repr(float(i_text))) == float(i_text)
    assert len(i_text.replace("-", "").replace(".", "").lstrip("0")) >= 15


def test_unknown_flag_exit_2(capsys):
    rc = execute(["fit", "--model", "ols", "--data", "d.csv", "--y", "y", "--x", "x", "--out", "o.json",
                  "--frobnicate"])
    assert rc == 2
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    assert "--frobnicate" in err[0]


def test_unknown_neighbor_exit_1(sim_files, tmp_path, capsys):
    data, gal = sim_files
    lines = gal.read_text().splitlines()
    lines[2] = lines[2] + " ghost99"
    lines[1] = lines[1].split()[0] + f" {len(lines[2].split())}"
    bad = tmp_path / "bad.gal"
    bad.write_text("\n".join(lines) + "\n")
    out = tmp_path / "m.csv"
    rc = execute(["moran", "--data", str(data), "--variable", "y", "--weights", str(bad), "--out", str(out)])
    assert rc == 1
    err = capsys.readouterr().err
    assert "UnknownNeighborId" in err and "ghost99" in err
    assert not out.exists()
    assert not list(tmp_path.glob(".m.csv.*"))


def test_reproduce_without_data_exit_1(tmp_path, capsys):
    rc = execute(["reproduce", "--data", str(tmp_path / "missing.csv"), "--out-dir", str(tmp_path / "o")])
    assert rc == 1
    assert "MissingExternalData" in capsys.readouterr().err
    assert not (tmp_path / "o" / "comparison.csv").exists()


def test_threads_env_fallback(monkeypatch):
    monkeypatch.setenv("SPATIALSPILL_THREADS", "3")
    args = build_parser().parse_args(["simulate", "--lattice", "2x2", "--out", "a,b"])
    assert args.threads == 3
    args = build_parser().parse_args(["--threads", "2", "simulate", "--lattice", "2x2", "--out", "a,b"])
    assert args.threads == 2
    args = build_parser().parse_args(["simulate", "--lattice", "2x2", "--out", "a,b", "--threads", "5"])
    assert args.threads == 5


def test_global_flags_before_subcommand(sim_files, tmp_path):
    data, gal = sim_files
    out = tmp_path / "m.csv"
    assert execute(["--seed", "4", "--quiet", "moran", "--data", str(data), "--variable", "y",
                    "--weights", str(gal), "--permutations", "9", "--out", str(out)]) == 0
    man = json.loads((tmp_path / "m.csv.manifest.json").read_text())
    assert man["options"]["seed"] == 4


def test_weights_and_describe(tmp_path):
    from spatialspill.dgp import make_lattice
    from spatialspill.ingest import geometry_to_geojson

    geom, _ = make_lattice(4, 4)
    gj = tmp_path / "g.geojson"
    gj.write_text(json.dumps(geometry_to_geojson(geom)))
    gal = tmp_path / "q.gal"
    assert execute(["weights", "--geometry", str(gj), "--rule", "queen", "--out", str(gal), "--quiet"]) == 0
    assert gal.read_text().startswith("16\n")
    wm = tmp_path / "d.wm"
    assert execute(["weights", "--geometry", str(gj), "--rule", "invdist", "--normalize", "spectral",
                    "--out", str(wm), "--quiet"]) == 0
    assert wm.read_text().split()[1] == "spectral"
    assert execute(["weights", "--geometry", str(gj), "--rule", "invdist", "--out", str(tmp_path / "x.gal"),
                    "--quiet"]) == 1


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "spatialspill", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.startswith("spatialspill ")
