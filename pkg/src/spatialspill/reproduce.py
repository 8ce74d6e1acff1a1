"""End-to-end run on the Canadian community life-satisfaction data.

The dataset and boundary file are external (not redistributed).  The
pipeline fits OLS, runs the dependence diagnostics under four weights
matrices, fits SLX/SDEM/SDM/GNS under rook contiguity and inverse distance,
decomposes effects, and lays every computed number next to its published
counterpart.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

from .effects import decompose_effects
from .errors import MissingExternalData
from .esda import describe, lm_diagnostics
from .estimators import ModelSpec, fit
from .ingest import GeometrySet, align, load_geometry, load_table
from .weights import WeightsMatrix, build_contiguity, build_inverse_distance, normalize

log = logging.getLogger(__name__)

__all__ = ["PUBLISHED", "REGRESSORS", "DURBIN", "reproduce", "ComparisonReport", "DATA_POINTER"]

RESPONSE = "life_satisfaction"
REGRESSORS = (
    "hh_income_log", "unemp_rate", "commute_min", "pop_density_log", "prop_religious",
    "permanent_5y", "prop_degree", "prop_foreign", "ls_sd",
)
DURBIN = ("hh_income_log", "unemp_rate", "ls_sd")
MODELS = ("OLS", "SLX", "SDEM", "SDM", "GNS")

DATA_POINTER = (
    "supply the public-use community life-satisfaction file (Helliwell et al., Canadian community "
    "well-being data aggregated from CCHS/GSS, 1215 communities) with --data, and a matching "
    "community boundary feature collection with --geometry"
)


def _direct(*rows):
    return {v: dict(zip(MODELS, vals)) for v, vals in zip(REGRESSORS, rows)}


def _indirect(hh, un, sd):
    models = MODELS[1:]
    return {"hh_income_log": dict(zip(models, hh)), "unemp_rate": dict(zip(models, un)),
            "ls_sd": dict(zip(models, sd))}


# None marks a published cell with an inconsistent sign/t pair, excluded from comparison.
PUBLISHED = {
    "ols": {
        "coef": {"hh_income_log": 0.091, "unemp_rate": 0.002, "commute_min": -0.004, "pop_density_log": -0.017,
                 "prop_religious": 0.236, "permanent_5y": 0.320, "prop_degree": 0.199, "prop_foreign": -0.340,
                 "ls_sd": -0.556, "const": 7.642},
        "t": {"hh_income_log": 4.06, "unemp_rate": 1.25, "commute_min": -4.58, "pop_density_log": -6.89,
              "prop_religious": 5.82, "permanent_5y": 4.82, "prop_degree": 3.22, "prop_foreign": -8.82,
              "ls_sd": -21.50, "const": 30.65},
        "adj_r2": 0.611,
        "n": 1215,
        "f": 196.48,
    },
    "describe": {
        "mean_life_satisfaction": 8.04,
        "skew_life_satisfaction": -0.35,
        "skew_ls_sd": 0.31,
        "urban_mean_life_satisfaction": 7.97,
        "rural_mean_life_satisfaction": 8.15,
        "urban_mean_pop_density_log": 6.92,
        "rural_mean_pop_density_log": 2.29,
        "corr_life_satisfaction": {"hh_income_log": 0.1051, "unemp_rate": -0.0507, "commute_min": -0.2654,
                                   "pop_density_log": -0.4465, "prop_religious": 0.3078, "permanent_5y": 0.4041,
                                   "prop_degree": -0.0250, "prop_foreign": -0.5077, "ls_sd": -0.5464,
                                   "urban": -0.3730},
    },
    "diagnostics": {
        "queen1": {"moran_residual_z": 5.771, "lm_error": 29.215, "robust_lm_error": 28.998, "lm_lag": 0.225,
                   "robust_lm_lag": 0.008},
        "queen2": {"moran_residual_z": 5.957, "lm_error": 29.219, "robust_lm_error": 29.151, "lm_lag": 0.075,
                   "robust_lm_lag": 0.006},
        "rook1": {"moran_residual_z": 5.970, "lm_error": 29.675, "robust_lm_error": 30.967, "lm_lag": 2.649,
                  "robust_lm_lag": 3.941},
        "invdist": {"moran_residual_z": 4.011, "lm_error": 2.704, "robust_lm_error": 2.844, "lm_lag": 12.836,
                    "robust_lm_lag": 12.977},
    },
    "full": {
        "rook1": {
            "direct": _direct(
                (0.091, 0.087, 0.093, 0.151, 0.121), (0.002, -0.003, -0.003, -0.002, -0.002),
                (-0.004, -0.003, -0.003, -0.003, -0.003), (-0.017, -0.017, -0.017, -0.014, -0.016),
                (0.236, 0.216, 0.235, 0.167, 0.198), (0.320, 0.305, 0.267, 0.268, 0.267),
                (0.199, 0.175, 0.170, 0.119, 0.143), (-0.340, -0.342, -0.333, -0.270, -0.297),
                (-0.556, None, -0.559, None, -0.557)),
            "indirect": _indirect((-0.011, -0.011, -0.124, -0.070), (0.007, 0.007, 0.005, 0.006),
                                  (0.007, 0.010, -0.020, -0.006)),
            "rho": {"SDM": 0.162, "GNS": 0.087},
            "lambda": {"SDEM": 0.212, "GNS": 0.126},
            "r2": {"OLS": 0.611, "SLX": 0.617, "SDEM": 0.617, "SDM": 0.617, "GNS": 0.618},
        },
        "invdist": {
            "direct": _direct(
                (0.091, 0.084, 0.083, 0.089, 0.082), (0.002, 0.001, 0.001, 0.001, 0.001),
                (-0.004, -0.002, -0.002, -0.003, -0.002), (-0.017, -0.012, -0.011, -0.012, -0.011),
                (0.236, 0.246, 0.252, 0.241, 0.254), (0.320, 0.312, 0.310, 0.313, 0.310),
                (0.199, 0.212, 0.220, 0.207, 0.222), (-0.340, -0.253, -0.237, -0.240, -0.239),
                (-0.556, None, -0.557, None, -0.557)),
            "indirect": _indirect((-0.009, -0.014, -0.031, -0.008), (0.018, 0.019, 0.018, 0.019),
                                  (-0.056, -0.041, -0.039, -0.043)),
            "rho": {"SDM": 0.051, "GNS": -0.016},
            "lambda": {"SDEM": 0.513, "GNS": 0.525},
            "r2": {"OLS": 0.611, "SLX": 0.618, "SDEM": 0.617, "SDM": 0.617, "GNS": 0.617},
        },
    },
    "toronto": {
        "rook1": {"indirect": _indirect((-0.020, -0.019, -0.078, -0.140), (0.016, 0.017, 0.014, 0.010),
                                        (0.060, 0.055, 0.039, 0.045)),
                  "rho": {"SDM": 0.096, "GNS": 0.186}, "lambda": {"SDEM": 0.036, "GNS": -0.159}},
        "invdist": {"indirect": _indirect((-0.082, -0.085, -0.116, -0.163), (-0.004, -0.003, 0.000, 0.007),
                                          (0.570, 0.581, 0.540, 0.438)),
                    "rho": {"SDM": 0.072, "GNS": 0.174}, "lambda": {"SDEM": 0.081, "GNS": -0.319}},
    },
    "ontario": {
        "rook1": {"indirect": _indirect((-0.011, -0.011, -0.044, -0.083), (0.012, 0.012, 0.010, 0.008),
                                        (0.021, 0.021, 0.010, 0.012)),
                  "rho": {"SDM": -0.054, "GNS": 0.120}, "lambda": {"SDEM": 0.002, "GNS": -0.110}},
        "invdist": {"indirect": _indirect((-0.014, 0.001, 0.008, -0.041), (-0.010, -0.015, -0.013, -0.008),
                                          (0.142, 0.068, 0.186, -0.074)),
                    "rho": {"SDM": -0.072, "GNS": 0.132}, "lambda": {"SDEM": -0.471, "GNS": -0.695}},
    },
}


@dataclass
class ComparisonReport:
    rows: list[dict] = field(default_factory=list)
    fits: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    effects: dict = field(default_factory=dict)

    def add(self, sample: str, weights: str, model: str, quantity: str, computed, published, t=None):
        dev = abs(computed - published) if published is not None and computed is not None else None
        self.rows.append({"sample": sample, "weights": weights, "model": model, "quantity": quantity,
                          "computed": computed, "t": t, "published": published, "abs_deviation": dev})


def build_weights(geometry: GeometrySet, snap_tolerance: float = 1e-9) -> dict[str, WeightsMatrix]:
    out = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for name, rule, order in (("rook1", "rook", 1), ("queen1", "queen", 1), ("queen2", "queen", 2)):
            g = build_contiguity(geometry, rule, order, snap_tolerance)
            w = WeightsMatrix.from_graph(g, provenance=f"contiguity:{rule}:{order}")
            out[name] = normalize(w, "row")
        out["invdist"] = normalize(build_inverse_distance(geometry), "spectral")
    return out


def _run_models(report, sample, wname, table, w, draws, seed):
    for model in MODELS[1:]:
        durbin = DURBIN if model in ("SLX", "SDEM", "SDM", "GNS") else ()
        spec = ModelSpec(model, RESPONSE, REGRESSORS, durbin, se_mode="robust")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = fit(spec, table, w)
        eff = decompose_effects(res, w, draws=draws, seed=seed)
        report.fits[(sample, wname, model)] = res
        report.effects[(sample, wname, model)] = eff
        pub = PUBLISHED[sample][wname]
        for panel in ("direct", "indirect"):
            s = eff.summary(panel)
            for i, var in enumerate(eff.regressors):
                ref = pub.get(panel, {}).get(var, {})
                if model in ref:
                    report.add(sample, wname, model, f"{panel}:{var}", float(s["estimate"][i]), ref.get(model),
                               float(s["t"][i]))
        for nm, key in (("rho", "rho"), ("lambda", "lambda")):
            if nm in res.param_names:
                report.add(sample, wname, model, nm, res.param(nm), pub.get(key, {}).get(model),
                           res.param(nm) / res.se(nm))
        if "r2" in pub:
            report.add(sample, wname, model, "pseudo_r2" if model != "SLX" else "adj_r2",
                       res.r2 if model != "SLX" else res.adj_r2, pub["r2"].get(model))


def reproduce(data_path, geometry_path, *, id_column: str = "region_id", id_property: str = "region_id",
              ontario_ids=None, toronto_ids=None, draws: int = 1000, seed: int = 0,
              snap_tolerance: float = 1e-9) -> ComparisonReport:
    """Run the full-sample pipeline (and optional subsamples) against published values."""
    for p in (data_path, geometry_path):
        if p is None or not Path(p).exists():
            raise MissingExternalData(f"external input {p!r} not found; {DATA_POINTER}")
    table = load_table(data_path, id_column)
    geometry = load_geometry(geometry_path, id_property)
    table, geometry = align(table, geometry)
    report = ComparisonReport()

    variables = [RESPONSE, *REGRESSORS] + (["urban"] if "urban" in table else [])
    desc = describe(table, variables, "urban" if "urban" in table else None)
    pd_ = PUBLISHED["describe"]
    report.add("full", "-", "-", "mean:life_satisfaction", desc.mean[RESPONSE], pd_["mean_life_satisfaction"])
    report.add("full", "-", "-", "skewness:life_satisfaction", desc.skewness[RESPONSE], pd_["skew_life_satisfaction"])
    report.add("full", "-", "-", "skewness:ls_sd", desc.skewness["ls_sd"], pd_["skew_ls_sd"])
    if desc.group_by:
        rural, urban = desc.group_means[RESPONSE]
        report.add("full", "-", "-", "urban_mean:life_satisfaction", urban, pd_["urban_mean_life_satisfaction"])
        report.add("full", "-", "-", "rural_mean:life_satisfaction", rural, pd_["rural_mean_life_satisfaction"])
        rural, urban = desc.group_means["pop_density_log"]
        report.add("full", "-", "-", "urban_mean:pop_density_log", urban, pd_["urban_mean_pop_density_log"])
        report.add("full", "-", "-", "rural_mean:pop_density_log", rural, pd_["rural_mean_pop_density_log"])
    for j, var in enumerate(variables[1:], start=1):
        if var in pd_["corr_life_satisfaction"]:
            report.add("full", "-", "-", f"corr:life_satisfaction:{var}", float(desc.corr[0, j]),
                       pd_["corr_life_satisfaction"][var])

    ols = fit(ModelSpec("OLS", RESPONSE, REGRESSORS, se_mode="robust"), table)
    report.fits[("full", "-", "OLS")] = ols
    for name, val in PUBLISHED["ols"]["coef"].items():
        report.add("full", "-", "OLS", f"coef:{name}", ols.param(name), val, float(ols.tvalues[ols.param_names.index(name)]))
    report.add("full", "-", "OLS", "adj_r2", ols.adj_r2, PUBLISHED["ols"]["adj_r2"])
    report.add("full", "-", "OLS", "n", float(ols.n), float(PUBLISHED["ols"]["n"]))

    weights = build_weights(geometry, snap_tolerance)
    for wname, w in weights.items():
        diag = lm_diagnostics(ols, w)
        report.diagnostics[("full", wname)] = diag
        for row in diag.rows():
            ref = PUBLISHED["diagnostics"][wname].get(row["test"])
            report.add("full", wname, "OLS", f"diag:{row['test']}", row["statistic"], ref)
    for wname in ("rook1", "invdist"):
        log.info("fitting full sample under %s", wname)
        _run_models(report, "full", wname, table, weights[wname], draws, seed)

    for sample, ids_path in (("ontario", ontario_ids), ("toronto", toronto_ids)):
        if ids_path is None:
            log.info("no id list for %s subsample; skipping", sample)
            continue
        ids = [ln.strip() for ln in Path(ids_path).read_text().splitlines() if ln.strip()]
        sub_t = table.subset(ids)
        sub_g = geometry.reindex(sub_t.region_ids)
        sub_w = build_weights(sub_g, snap_tolerance)
        ols_s = fit(ModelSpec("OLS", RESPONSE, REGRESSORS, se_mode="robust"), sub_t)
        report.fits[(sample, "-", "OLS")] = ols_s
        report.add(sample, "-", "OLS", "n", float(ols_s.n), 355.0 if sample == "ontario" else 274.0)
        for wname in ("rook1", "invdist"):
            _run_models(report, sample, wname, sub_t, sub_w[wname], draws, seed)
    return report


def comparison_is_plausible(report: ComparisonReport) -> dict[str, bool]:
    """Tolerance-banded checks against the published full-sample numbers."""
    def get(sample, wname, model, quantity):
        for r in report.rows:
            if (r["sample"], r["weights"], r["model"], r["quantity"]) == (sample, wname, model, quantity):
                return r
        return None

    out = {}
    ols = report.fits[("full", "-", "OLS")]
    out["ols_hh_income"] = abs(ols.param("hh_income_log") - 0.091) <= 0.01
    out["ols_ls_sd"] = abs(ols.param("ls_sd") - (-0.556)) <= 0.02
    out["ols_adj_r2"] = abs(ols.adj_r2 - 0.611) <= 0.01
    out["ols_n"] = ols.n == 1215
    diag = report.diagnostics[("full", "rook1")]
    out["lm_error_rook"] = abs(diag.lm_error[0] - 29.675) <= 0.15 * 29.675
    out["lm_ordering_rook"] = diag.lm_error[0] > diag.lm_lag[0]
    sdm = report.fits[("full", "rook1", "SDM")]
    out["sdm_rho"] = abs(sdm.rho - 0.162) <= 0.03 and sdm.pvalues[sdm.param_names.index("rho")] < 0.01
    row = get("full", "rook1", "SDM", "indirect:unemp_rate")
    eff = report.effects[("full", "rook1", "SDM")].summary("indirect")
    k = report.effects[("full", "rook1", "SDM")].regressors.index("unemp_rate")
    out["sdm_indirect_unemp"] = row is not None and row["computed"] > 0 and eff["p"][k] < 0.05
    sdem = report.fits[("full", "rook1", "SDEM")]
    out["sdem_lambda"] = abs(sdem.lambda_ - 0.212) <= 0.04
    return out

