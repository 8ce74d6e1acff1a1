"""``spatialspill`` command-line interface.

Exit status: 0 on success, 2 on usage errors, 1 on data or model errors.
Outputs are written atomically and each run leaves a ``<output>.manifest.json``
next to its primary output.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import logging
import os
import sys
import tempfile
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .dgp import DgpParams, make_lattice, simulate_dgp, generate_x
from .effects import decompose_effects
from .errors import InvalidValue, SpatialSpillError
from .esda import describe, global_moran, lm_diagnostics, local_moran, stars
from .estimators import MODEL_TERMS, FitResult, ModelSpec, fit
from .ingest import (
    AttributeTable,
    align,
    format_gal,
    geometry_to_geojson,
    load_geometry,
    load_table,
    read_gal,
)
from .reproduce import reproduce
from .weights import (
    WeightsMatrix,
    build_contiguity,
    build_inverse_distance,
    connectivity_summary,
    format_wm,
    normalize,
    read_wm,
)

log = logging.getLogger("spatialspill")

FIT_SCHEMA = {
    "type": "object",
    "required": ["spec", "param_names", "params", "vcov", "beta", "theta", "rho", "lambda", "sigma2",
                 "loglik", "n", "k", "r2", "residuals", "w_fingerprint", "region_ids"],
    "properties": {
        "spec": {
            "type": "object",
            "required": ["kind", "response", "regressors", "durbin_set", "intercept", "se_mode"],
            "properties": {
                "kind": {"enum": list(MODEL_TERMS)},
                "regressors": {"type": "array", "items": {"type": "string"}},
                "durbin_set": {"type": "array", "items": {"type": "string"}},
                "se_mode": {"enum": ["robust", "classical"]},
            },
        },
        "param_names": {"type": "array", "items": {"type": "string"}},
        "params": {"type": "array", "items": {"type": "number"}},
        "vcov": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
        "rho": {"type": "number"},
        "lambda": {"type": "number"},
        "sigma2": {"type": "number", "exclusiveMinimum": 0},
        "loglik": {"type": "number"},
        "n": {"type": "integer", "minimum": 1},
        "k": {"type": "integer", "minimum": 1},
        "residuals": {"type": "array", "items": {"type": "number"}},
        "w_fingerprint": {"type": ["string", "null"]},
        "region_ids": {"type": "array", "items": {"type": "string"}},
    },
}


# --------------------------------------------------------------------------
# output helpers


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    if v is None:
        return ""
    return str(v)


def atomic_write(path, data: str | bytes) -> None:
    """Write via a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": ""})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def csv_text(rows: list[dict], columns: list[str] | None = None) -> str:
    columns = columns or (list(rows[0]) if rows else [])
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(columns)
    for r in rows:
        wr.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"not JSON serializable: {type(o)}")


def json_text(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=False, default=_json_default) + "\n"


def _sha256(path) -> str | None:
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except OSError:
        return None


def write_manifest(args, primary_output, inputs: list, outputs: list) -> None:
    opts = {k: v for k, v in vars(args).items() if k != "func"}
    manifest = {
        "tool": "spatialspill",
        "version": __version__,
        "subcommand": args.command,
        "options": opts,
        "inputs": {str(p): _sha256(p) for p in inputs if p},
        "outputs": [str(p) for p in outputs],
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    atomic_write(f"{primary_output}.manifest.json", json_text(manifest))


def _split(s: str | None) -> list[str]:
    return [p.strip() for p in s.split(",") if p.strip()] if s else []


def _floats(s: str | None) -> list[float]:
    try:
        return [float(p) for p in _split(s)]
    except ValueError:
        raise InvalidValue(f"expected a comma-separated list of numbers, got {s!r}") from None


# --------------------------------------------------------------------------
# weights loading


def load_weights(path, normalization: str = "row", order=None) -> WeightsMatrix:
    """Read a .gal or .wm file, reorder to ``order`` and normalize."""
    path = Path(path)
    if path.suffix.lower() == ".gal":
        w = WeightsMatrix.from_graph(read_gal(path), provenance="gal")
    else:
        w = read_wm(path)
    if order is not None:
        missing_w = sorted(set(order) - set(w.region_ids))
        missing_t = sorted(set(w.region_ids) - set(order))
        if missing_w or missing_t:
            from .errors import AlignmentError

            raise AlignmentError(
                f"weights/table id mismatch; not in weights: {', '.join(missing_w) or '-'}; "
                f"not in table: {', '.join(missing_t) or '-'}", missing_w, missing_t)
        w = w.reorder(list(order))
    if normalization != "none" and w.normalization != normalization:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            w = normalize(w, normalization)
        for c in caught:
            log.warning("%s", c.message)
    return w


# --------------------------------------------------------------------------
# subcommands


def cmd_weights(args) -> int:
    geom = load_geometry(args.geometry, args.id_property)
    out = Path(args.output)
    if args.rule == "invdist":
        w = build_inverse_distance(geom)
        graph = None
    else:
        graph = build_contiguity(geom, args.rule, args.order, args.snap_tolerance, args.exact_order)
        prov = f"contiguity:{args.rule}:{args.order}" + (":exact" if args.exact_order else "")
        w = WeightsMatrix.from_graph(graph, provenance=prov)
    if out.suffix.lower() == ".gal":
        if graph is None:
            raise InvalidValue("GAL files hold binary neighbor lists; write inverse-distance weights as .wm")
        if args.normalize != "none":
            log.warning("GAL stores the binary structure; normalization is applied when the file is used")
        atomic_write(out, format_gal(graph))
    else:
        if args.normalize != "none":
            w = normalize(w, args.normalize)
        atomic_write(out, format_wm(w))
    summary = connectivity_summary(w)
    if not args.quiet:
        print(json.dumps(summary))
    write_manifest(args, out, [args.geometry], [out])
    return 0


def cmd_describe(args) -> int:
    table = load_table(args.data, args.id_column)
    variables = _split(args.vars) or [c for c in table.column_names if c != args.group_by]
    rep = describe(table, variables, args.group_by)
    atomic_write(args.output, csv_text(rep.summary_rows()))
    outputs = [args.output]
    if args.corr_out:
        rows = []
        st = rep.corr_stars()
        for i, v in enumerate(rep.variables):
            row = {"variable": v}
            for j, u in enumerate(rep.variables):
                row[u] = f"{rep.corr[i, j]:.17g}{st[i][j]}"
            rows.append(row)
        atomic_write(args.corr_out, csv_text(rows, ["variable", *rep.variables]))
        outputs.append(args.corr_out)
    write_manifest(args, args.output, [args.data], outputs)
    return 0


def _table_and_weights(args):
    table = load_table(args.data, args.id_column)
    w = load_weights(args.weights, args.normalize, table.region_ids)
    return table, w


def cmd_moran(args) -> int:
    table, w = _table_and_weights(args)
    res = global_moran(table[args.variable], w, args.permutations, args.seed, args.threads)
    row = {"variable": args.variable, "I": res.I, "expectation": res.expectation, "variance": res.variance,
           "z": res.z_score, "p_norm": res.p_value, "permutations": res.permutations, "p_sim": res.p_sim,
           "n": res.n_used}
    atomic_write(args.output, csv_text([row]))
    outputs = [args.output]
    if args.scatter:
        rows = [{"region_id": r, "z": a, "lag_z": b} for r, (a, b) in zip(w.region_ids, res.scatter())]
        atomic_write(args.scatter, csv_text(rows))
        outputs.append(args.scatter)
    write_manifest(args, args.output, [args.data, args.weights], outputs)
    return 0


def cmd_diagnose(args) -> int:
    table = load_table(args.data, args.id_column)
    ols = fit(ModelSpec("OLS", args.y, tuple(_split(args.x)), se_mode=args.se), table)
    rows = []
    for wpath in args.weights:
        w = load_weights(wpath, args.normalize, table.region_ids)
        for r in lm_diagnostics(ols, w).rows():
            rows.append({"weights": wpath, **r})
    atomic_write(args.output, csv_text(rows, ["weights", "test", "statistic", "p_value", "moran_i"]))
    write_manifest(args, args.output, [args.data, *args.weights], [args.output])
    return 0


def cmd_fit(args) -> int:
    table = load_table(args.data, args.id_column)
    kind = args.model.upper()
    durbin = tuple(_split(args.durbin))
    spec = ModelSpec(kind, args.y, tuple(_split(args.x)), durbin, se_mode=args.se)
    w = None
    if kind != "OLS" or args.weights:
        if not args.weights:
            raise InvalidValue(f"{kind} requires --weights")
        w = load_weights(args.weights, args.normalize, table.region_ids)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = fit(spec, table, w)
    for c in caught:
        log.warning("%s", c.message)
    doc = res.to_dict()
    doc["region_ids"] = list(table.region_ids)
    doc["tool_version"] = __version__
    atomic_write(args.output, json_text(doc))
    if not args.quiet:
        for row in res.coef_table():
            print(f"{row['name']:>24s} {row['estimate']: .6f} ({row['t']: .2f}){stars(row['p'])}")
        print(f"{'loglik':>24s} {res.loglik:.6f}")
    write_manifest(args, args.output, [args.data, args.weights], [args.output])
    return 0


def cmd_effects(args) -> int:
    doc = json.loads(Path(args.fit).read_text(encoding="utf-8"))
    res = FitResult.from_dict(doc)
    norm = args.normalize or res.w_normalization or "row"
    w = load_weights(args.weights, norm, doc.get("region_ids"))
    table = decompose_effects(res, w, args.draws, args.seed)
    rows = table.rows()
    for r in rows:
        r["stars"] = stars(r["p"]) if np.isfinite(r["p"]) else ""
    cols = ["panel", "variable", "estimate", "mean", "se", "t", "p", "stars"]
    atomic_write(args.output, csv_text(rows, cols))
    if not args.quiet and table.rejected:
        log.warning("%d rho draws rejected outside the stationary interval", table.rejected)
    write_manifest(args, args.output, [args.fit, args.weights], [args.output])
    return 0


def cmd_lisa(args) -> int:
    table, w = _table_and_weights(args)
    res = local_moran(table[args.variable], w, args.permutations, args.alpha, args.seed, args.threads)
    atomic_write(args.output, csv_text(res.rows()))
    outputs = [args.output]
    inputs = [args.data, args.weights]
    if args.layer:
        if not args.geometry:
            raise InvalidValue("--layer needs --geometry")
        geom = load_geometry(args.geometry, args.id_property)
        _, geom = align(table, geom)
        atomic_write(args.layer, json_text(geometry_to_geojson(geom, args.id_property, res.properties())))
        outputs.append(args.layer)
        inputs.append(args.geometry)
    write_manifest(args, args.output, inputs, outputs)
    return 0


def cmd_simulate(args) -> int:
    try:
        r_txt, c_txt = args.lattice.lower().split("x")
        rows, cols = int(r_txt), int(c_txt)
    except ValueError:
        raise InvalidValue(f"--lattice must look like 30x30, got {args.lattice!r}") from None
    outs = _split(args.output)
    if len(outs) != 2:
        raise InvalidValue("--out takes DATA.csv,WEIGHTS.gal")
    kind = args.model.upper()
    wants_rho, wants_wx, wants_lam = MODEL_TERMS[kind]
    beta = tuple(_floats(args.beta))
    theta = tuple(_floats(args.theta)) if wants_wx else ()
    rho = args.rho if wants_rho else 0.0
    lam = args.lambda_ if wants_lam else 0.0
    if (args.rho and not wants_rho) or (args.lambda_ and not wants_lam) or (args.theta and not wants_wx):
        log.warning("parameters not part of %s are ignored", kind)
    _, graph = make_lattice(rows, cols, args.rule)
    w = normalize(graph, "row")
    params = DgpParams(beta=beta, rho=rho, lambda_=lam, theta=theta, alpha=args.alpha, sigma=args.sigma,
                       seed=args.seed)
    x = generate_x(w.n, len(beta), args.seed)
    y, _ = simulate_dgp(params, x, w)
    data = [{"region_id": r, "y": y[i], **{f"x{j + 1}": x[i, j] for j in range(x.shape[1])}}
            for i, r in enumerate(w.region_ids)]
    atomic_write(outs[0], csv_text(data))
    atomic_write(outs[1], format_gal(graph))
    write_manifest(args, outs[0], [], outs)
    return 0


def cmd_reproduce(args) -> int:
    report = reproduce(args.data, args.geometry, id_column=args.id_column, id_property=args.id_property,
                       ontario_ids=args.ontario_ids, toronto_ids=args.toronto_ids, draws=args.draws,
                       seed=args.seed, snap_tolerance=args.snap_tolerance)
    out = Path(args.out_dir)
    cols = ["sample", "weights", "model", "quantity", "computed", "t", "published", "abs_deviation"]
    atomic_write(out / "comparison.csv", csv_text(report.rows, cols))
    if not args.quiet:
        for r in report.rows:
            if r["published"] is not None:
                print(f"{r['sample']:8s} {r['weights']:8s} {r['model']:5s} {r['quantity']:36s} "
                      f"{r['computed']: .4f}  published {r['published']: .4f}")
    write_manifest(args, out / "comparison.csv", [args.data, args.geometry], [out / "comparison.csv"])
    return 0


# --------------------------------------------------------------------------
# parser


def _threads_default() -> int:
    try:
        return max(1, int(os.environ.get("SPATIALSPILL_THREADS", "1")))
    except ValueError:
        return 1


class _Parser(argparse.ArgumentParser):
    """Usage errors print a single line and exit with status 2."""

    def error(self, message):
        self.exit(2, f"{self.prog}: error: {message}\n")


def _global_flags() -> argparse.ArgumentParser:
    # a fresh parent per parser: argparse shares parent actions by reference and
    # set_defaults on one parser would otherwise leak into the subcommands
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help="worker threads (default: $SPATIALSPILL_THREADS or 1)")
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()

    p = _Parser(prog="spatialspill", parents=[_global_flags()],
                description="Spatial weights, diagnostics, spatial regression and spillover effects.")
    p.add_argument("--version", action="version", version=f"spatialspill {__version__}")
    p.set_defaults(seed=0, threads=_threads_default(), quiet=False)
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def data_opts(sp_):
        sp_.add_argument("--data", required=True, help="attribute CSV")
        sp_.add_argument("--id-column", default="region_id")

    def weights_opts(sp_, multiple=False):
        if multiple:
            sp_.add_argument("--weights", required=True, action="append", help=".gal or .wm (repeatable)")
        else:
            sp_.add_argument("--weights", required=True, help=".gal or .wm file")
        sp_.add_argument("--normalize", choices=["row", "spectral", "none"], default="row")

    s = sub.add_parser("weights", parents=[common], help="build a weights file from geometry")
    s.add_argument("--geometry", required=True)
    s.add_argument("--id-property", default="region_id")
    s.add_argument("--rule", choices=["queen", "rook", "invdist"], default="queen")
    s.add_argument("--order", type=int, default=1)
    s.add_argument("--exact-order", action="store_true", help="neighbors at exactly --order, not within it")
    s.add_argument("--normalize", choices=["row", "spectral", "none"], default="none")
    s.add_argument("--snap-tolerance", type=float, default=1e-9)
    s.add_argument("-o", "--out", dest="output", required=True)
    s.set_defaults(func=cmd_weights)

    s = sub.add_parser("describe", parents=[common], help="descriptive statistics and correlations")
    data_opts(s)
    s.add_argument("--vars", help="comma-separated columns (default: all)")
    s.add_argument("--group-by")
    s.add_argument("--out", dest="output", required=True)
    s.add_argument("--corr-out")
    s.set_defaults(func=cmd_describe)

    s = sub.add_parser("moran", parents=[common], help="global Moran's I")
    data_opts(s)
    s.add_argument("--variable", required=True)
    weights_opts(s)
    s.add_argument("--permutations", type=int, default=999)
    s.add_argument("--scatter", help="write Moran scatterplot data here")
    s.add_argument("--out", dest="output", required=True)
    s.set_defaults(func=cmd_moran)

    s = sub.add_parser("diagnose", parents=[common], help="LM diagnostics on OLS residuals")
    data_opts(s)
    s.add_argument("--y", required=True)
    s.add_argument("--x", required=True)
    weights_opts(s, multiple=True)
    s.add_argument("--se", choices=["robust", "classical"], default="robust")
    s.add_argument("--out", dest="output", required=True)
    s.set_defaults(func=cmd_diagnose)

    s = sub.add_parser("fit", parents=[common], help="fit OLS or a spatial model")
    s.add_argument("--model", required=True, type=str.lower,
                   choices=["ols", "slx", "sem", "sar", "sdem", "sdm", "sac", "gns"])
    data_opts(s)
    s.add_argument("--y", required=True)
    s.add_argument("--x", required=True)
    s.add_argument("--durbin", help="comma-separated regressors to lag")
    s.add_argument("--weights")
    s.add_argument("--normalize", choices=["row", "spectral", "none"], default="row")
    s.add_argument("--se", choices=["robust", "classical"], default="robust")
    s.add_argument("--out", dest="output", required=True)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("effects", parents=[common], help="direct/indirect/total effects of a fit")
    s.add_argument("--fit", required=True)
    s.add_argument("--weights", required=True)
    s.add_argument("--normalize", choices=["row", "spectral", "none"], default=None,
                   help="default: the normalization recorded in the fit")
    s.add_argument("--draws", type=int, default=1000)
    s.add_argument("--out", dest="output", required=True)
    s.set_defaults(func=cmd_effects)

    s = sub.add_parser("lisa", parents=[common], help="local Moran clusters")
    data_opts(s)
    s.add_argument("--variable", required=True)
    weights_opts(s)
    s.add_argument("--permutations", type=int, default=999)
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--geometry")
    s.add_argument("--id-property", default="region_id")
    s.add_argument("--layer", help="write a feature collection with LISA attributes")
    s.add_argument("--out", dest="output", required=True)
    s.set_defaults(func=cmd_lisa)

    s = sub.add_parser("simulate", parents=[common], help="simulate data on a lattice")
    s.add_argument("--lattice", required=True, help="ROWSxCOLS")
    s.add_argument("--rule", choices=["rook", "queen"], default="rook")
    s.add_argument("--model", type=str.lower, default="sar",
                   choices=["ols", "slx", "sem", "sar", "sdem", "sdm", "sac", "gns"])
    s.add_argument("--rho", type=float, default=0.0)
    s.add_argument("--lambda", dest="lambda_", type=float, default=0.0)
    s.add_argument("--beta", default="1,2")
    s.add_argument("--theta")
    s.add_argument("--alpha", type=float, default=0.0)
    s.add_argument("--sigma", type=float, default=1.0)
    s.add_argument("--out", dest="output", required=True, help="DATA.csv,WEIGHTS.gal")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("reproduce", parents=[common], help="run the full pipeline on the community dataset")
    s.add_argument("--data")
    s.add_argument("--geometry")
    s.add_argument("--id-column", default="region_id")
    s.add_argument("--id-property", default="region_id")
    s.add_argument("--ontario-ids", help="file with one region id per line")
    s.add_argument("--toronto-ids", help="file with one region id per line")
    s.add_argument("--draws", type=int, default=1000)
    s.add_argument("--snap-tolerance", type=float, default=1e-9)
    s.add_argument("--out-dir", default="reproduce_out")
    s.set_defaults(func=cmd_reproduce)
    return p


def execute(argv=None) -> int:
    """Run one subcommand; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore" if args.quiet else "default")
            return args.func(args)
    except SpatialSpillError as exc:
        print(f"spatialspill: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"spatialspill: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(execute())


if __name__ == "__main__":
    main()
