"""Command-line front end: simulate, estimate, and montecarlo subcommands.

One YAML config drives every command; flags override file values field by
field. Outputs are byte-reproducible for a fixed seed: every file is written
with deterministic ordering and full-precision float formatting, and no
wall-clock information lands in any output file.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure. On failure a machine-readable JSON error summary is printed to
stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import pandas as pd

from . import ingest, reports
from .config import RunConfig
from .errors import ConfigError, DataError, NumericalError, PatchmigError
from .fleet import PriceInputs
from .patch_model import PatchGraph
from .simulator import default_scenario, run, to_panel
from .stage1 import Stage1Spec, capture_technology, fit_stage1, recover_biomass
from .stage2 import (
    Stage2Spec,
    alpha0_label,
    alpha1_label,
    build_migration_rows,
    d_label,
    fit_aux_total,
    fit_stage2,
    harvest_from_panel,
    recover_structure,
    whole_fishery_series,
)

__all__ = ["main", "build_parser", "cmd_simulate", "cmd_estimate", "cmd_montecarlo"]

Z90 = 1.6448536269514722  # two-sided 90% normal quantile, for coverage checks


# ---------------------------------------------------------------------------
# Shared plumbing
# ---------------------------------------------------------------------------

def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, set)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, np.floating):
        return float(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


def _write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def totals_from_truth(truth: pd.DataFrame) -> dict[int, float]:
    """Whole-fishery biomass per year: sum over patches of the monthly mean."""
    per = truth.groupby(["year", "patch_id"])["biomass"].mean()
    return {int(y): float(v) for y, v in per.groupby("year").sum().items()}


def run_estimation(panel, graph: PatchGraph, cfg: RunConfig, totals) -> dict:
    """Full two-stage pipeline on an assembled market panel.

    ``totals`` is the annual whole-fishery biomass used to calibrate levels
    (None when the stock exponent is fixed via config and levels stay
    relative). Returns every intermediate product, keyed by stage.
    """
    est_cfg = cfg.estimation
    spec = Stage1Spec.from_panel(panel, reference_cell=est_cfg.reference_cell)
    fit = fit_stage1(spec, iterate=est_cfg.iterate, capture_exact=est_cfg.capture_exact)
    biomass = recover_biomass(
        fit,
        beta=est_cfg.beta,
        annual_totals=totals,
        pool_elasticity=est_cfg.pool_elasticity,
    )
    tech = capture_technology(fit, biomass)
    harvest = harvest_from_panel(panel)
    rows = build_migration_rows(
        Stage2Spec(
            biomass=biomass,
            graph=graph,
            harvest=harvest,
            include_harvest=est_cfg.include_harvest,
        )
    )
    reduced = fit_stage2(rows, iterate=est_cfg.iterate)
    total_x, total_h, t_keys = whole_fishery_series(biomass, harvest)
    aux = fit_aux_total(total_x, total_h, t_keys)
    structural = recover_structure(
        reduced,
        aux,
        graph,
        level=est_cfg.ci_level,
        paper_mapping=est_cfg.paper_mapping,
    )
    return {
        "fit": fit,
        "biomass": biomass,
        "tech": tech,
        "harvest": harvest,
        "reduced": reduced,
        "aux": aux,
        "structural": structural,
    }


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def cmd_simulate(cfg: RunConfig) -> int:
    """Generate the reference scenario and write its six input files."""
    sc = default_scenario(
        seed=cfg.scenario.seed, horizon_months=cfg.scenario.horizon_months
    )
    res = run(sc)
    paths = cfg.paths
    os.makedirs(paths.out_dir, exist_ok=True)
    ingest.write_trips(paths.resolve("trips"), res.records)
    ingest.write_roster(paths.resolve("roster"), sc.roster())
    ingest.write_prices(paths.resolve("prices"), sc.price_rows())
    ingest.write_distances(paths.resolve("distances"), sc.graph.port_distances)
    ingest.write_truth(paths.resolve("truth"), res.truth)
    ingest.write_totals(paths.resolve("totals"), res.annual_totals())
    flag = " (terminated early: all patches depleted)" if res.terminated_early else ""
    print(
        f"simulate: seed {sc.seed}, {len(res.records)} vessel-month records over "
        f"{sc.horizon_months} months, {sc.graph.n_patches} patches -> {paths.out_dir}{flag}"
    )
    return 0


# ---------------------------------------------------------------------------
# estimate
# ---------------------------------------------------------------------------

def _require_file(path: str) -> str:
    if not os.path.exists(path):
        raise DataError(f"missing input file: {path}")
    return path


def _estimation_inputs(cfg: RunConfig):
    """Parse input CSVs into a panel, graph, and calibration totals."""
    paths = cfg.paths
    records = ingest.parse_trips(_require_file(paths.resolve("trips")))
    roster = ingest.parse_roster(_require_file(paths.resolve("roster")))
    raw_prices = ingest.parse_prices(_require_file(paths.resolve("prices")))
    distances = ingest.parse_distances(_require_file(paths.resolve("distances")))
    graph = PatchGraph(
        n_patches=distances.shape[1],
        adjacency=cfg.adjacency,
        port_distances=distances,
    )
    prices = {
        key: PriceInputs(
            landed_price=landed,
            fuel_price=fuel,
            vessel_fuel_rate=cfg.fleet.vessel_fuel_rate,
            expected_catch_per_trip=cfg.fleet.expected_catch_per_trip,
        )
        for key, (landed, fuel) in raw_prices.items()
    }
    panel = ingest.build_panel(
        records, roster, prices, graph, laplace=cfg.estimation.laplace
    )
    mode = cfg.estimation.calibration
    if mode == "truth":
        totals = totals_from_truth(ingest.read_truth(_require_file(paths.resolve("truth"))))
    elif mode == "totals":
        totals = ingest.read_totals(_require_file(paths.resolve("totals")))
    else:
        totals = None
    return panel, graph, totals


def _write_estimate_reports(cfg: RunConfig, out: dict) -> None:
    paths = cfg.paths
    os.makedirs(paths.out_dir, exist_ok=True)

    def at(name):
        return os.path.join(paths.out_dir, name)

    fit, biomass, tech = out["fit"], out["biomass"], out["tech"]
    reduced, aux, structural = out["reduced"], out["aux"], out["structural"]
    convention = cfg.estimation.row_sum_convention

    params1 = reports.stage1_param_frame(fit)
    footer1 = reports.stage1_footer_frame(fit)
    reports.write_table_csv(params1, at("stage1_params.csv"))
    reports.write_table_csv(footer1, at("stage1_fit.csv"))
    with open(at("stage1_params.txt"), "w", encoding="utf-8", newline="") as fh:
        fh.write(reports.format_table_text(params1, title="Fleet demand system"))
        fh.write("\n")
        fh.write(reports.format_table_text(footer1, title="Equation fit", float_fmt="%.4f"))

    reports.write_biomass_csv(biomass, at("biomass.csv"))

    reduced2 = reports.stage2_reduced_frame(reduced)
    reports.write_table_csv(reduced2, at("stage2_reduced.csv"))
    reports.write_table_text(
        reduced2, at("stage2_reduced.txt"), title="Migration system, reduced form"
    )

    params2 = reports.stage2_param_frame(structural, aux, row_sum_convention=convention)
    reports.write_table_csv(params2, at("stage2_params.csv"))
    reports.write_table_text(
        params2, at("stage2_params.txt"), title="Growth and migration parameters"
    )

    cap = reports.capacity_frame(structural)
    reports.write_table_csv(cap, at("capacity.csv"))
    reports.write_table_text(
        cap, at("capacity.txt"), title="Carrying capacity per patch", float_fmt="%.3f"
    )

    summary = {
        "stage1": {
            "reference_cell": list(fit.reference_cell),
            "n_cells": len(fit.spec.cells),
            "years": list(fit.spec.years),
            "ports": list(fit.spec.ports),
            "dropped": fit.spec.diagnostics,
        },
        "biomass": {
            "beta": biomass.beta_used,
            "scale": biomass.scale,
            "calibration": biomass.calibration,
            "calibration_source": cfg.estimation.calibration,
        },
        "capture": {
            "gamma": tech["gamma"],
            "lngamma": tech["lngamma"],
            "alpha_by_year": tech["alpha_by_year"],
            "alpha_pooled": tech["alpha_pooled"],
        },
        "aggregate": {"r": aux.r, "k_total": aux.k_total},
        "structural": {
            "ci_level": structural.level,
            "paper_mapping": structural.paper_mapping,
            "row_sum_convention": convention,
            "scale_factor": structural.scale_factor,
            "k_reported": structural.reported_k(),
            "fallback_patches": [
                int(r.patch_id) for r in structural.capacity.itertuples() if r.fallback
            ],
            "unidentified_patches": [
                int(r.patch_id)
                for r in structural.capacity.itertuples()
                if r.unidentified
            ],
        },
    }
    _write_json(at("run_summary.json"), summary)


def cmd_estimate(cfg: RunConfig) -> int:
    """Run ingest -> demand system -> migration system; write all reports."""
    panel, graph, totals = _estimation_inputs(cfg)
    out = run_estimation(panel, graph, cfg, totals)
    _write_estimate_reports(cfg, out)
    structural = out["structural"]
    print(
        f"estimate: r={structural.r:.5f}, K_total={structural.k_total:.1f}, "
        f"beta={out['biomass'].beta_used:.4f}, "
        f"{len(structural.reported_k())}/{structural.capacity.shape[0]} capacities "
        f"identified -> {cfg.paths.out_dir}"
    )
    return 0


# ---------------------------------------------------------------------------
# montecarlo
# ---------------------------------------------------------------------------

def _scenario_truths(sc, fit, truth: pd.DataFrame) -> dict[str, float]:
    """True values of every labelled parameter under the scenario.

    Demand intercepts and the capture constant absorb the reference cell's
    log biomass (the effect normalization), so their truths are seed
    specific in stochastic replications.
    """
    y_ref, m_ref, k_ref = fit.reference_cell
    hit = truth[
        (truth.year == y_ref) & (truth.month == m_ref) & (truth.patch_id == k_ref)
    ]
    x_ref = float(hit["biomass"].iloc[0])
    beta = sc.tech.beta
    truths: dict[str, float] = {}
    for y in fit.spec.years:
        truths[f"alpha0[{y}]"] = sc.utility.a0 + beta * math.log(x_ref)
        truths[f"alpha2[{y}]"] = sc.tech.alpha
        for p in fit.spec.ports:
            truths[f"alpha1[{y},port{p}]"] = sc.utility.a1
    truths["lngamma"] = math.log(sc.tech.gamma) + beta * math.log(x_ref)
    rates = sc.dispersion.rates
    r, carrying = sc.bio.r, sc.bio.carrying_capacity
    for k in range(1, sc.graph.n_patches + 1):
        truths[alpha0_label(k)] = 1.0 + r + rates[k - 1, k - 1]
        truths[alpha1_label(k)] = r / carrying[k - 1]
        for h in sc.graph.neighbors(k):
            truths[d_label(h, k)] = rates[h - 1, k - 1]
    truths["r"] = r
    truths["k_total"] = float(carrying.sum())
    return truths


def _mc_replication(seed: int, cfg: RunConfig) -> dict:
    """One simulate-plus-estimate replication; returns rows and summaries."""
    sc = default_scenario(seed=seed, horizon_months=cfg.scenario.horizon_months)
    res = run(sc, noiseless=cfg.montecarlo.noiseless)
    panel = to_panel(res, laplace=cfg.estimation.laplace)
    totals = res.annual_totals() if cfg.estimation.calibration != "none" else None
    out = run_estimation(panel, sc.graph, cfg, totals)
    fit, biomass, structural = out["fit"], out["biomass"], out["structural"]
    truths = _scenario_truths(sc, fit, res.truth)

    rows = []
    sources = [(fit.estimates, None), (out["reduced"], None), (out["aux"].estimates, ("r", "k_total"))]
    for est, only in sources:
        for label in truths:
            if only is not None and label not in only:
                continue
            if only is None and label not in est.alias and label not in est.labels:
                continue
            try:
                value, se = est.param(label), est.se(label)
            except (KeyError, PatchmigError):
                continue
            rows.append(
                {
                    "parameter": label,
                    "truth": truths[label],
                    "estimate": float(value),
                    "se": float(se),
                }
            )

    # Per-replication quality summaries used to freeze desk tolerances.
    d_errs = [
        abs(structural.d_offdiag[(h, k)] - truths[d_label(h, k)])
        for (h, k) in structural.d_offdiag
    ]
    frac_d = float(np.mean([e <= 0.1 for e in d_errs]))
    carrying = sc.bio.carrying_capacity
    reported = structural.reported_k()
    k_rel = {
        k: abs(reported[k] - carrying[k - 1]) / carrying[k - 1] for k in reported
    }
    frac_k = float(sum(1 for v in k_rel.values() if v <= 0.15)) / sc.graph.n_patches

    merged = biomass.table.merge(
        res.truth, on=["year", "month", "patch_id"], suffixes=("_est", "_true")
    )
    rel = (merged["biomass_est"] - merged["biomass_true"]).abs() / merged["biomass_true"]

    return {
        "seed": seed,
        "rows": rows,
        "beta_hat": biomass.beta_used,
        "gamma_rel_err": out["tech"]["gamma"] / sc.tech.gamma - 1.0,
        "alpha_pooled": out["tech"]["alpha_pooled"],
        "alpha_true": sc.tech.alpha,
        "beta_true": sc.tech.beta,
        "frac_d_within_010": frac_d,
        "frac_k_within_15pct": frac_k,
        "k_rel_err_median": float(np.median(list(k_rel.values()))) if k_rel else math.nan,
        "biomass_rel_p50": float(rel.quantile(0.50)),
        "biomass_rel_p90": float(rel.quantile(0.90)),
        "biomass_rel_max": float(rel.max()),
        "n_fallback": int(structural.capacity["fallback"].sum()),
        "n_unidentified": int(structural.capacity["unidentified"].sum()),
    }


def _mc_worker(args):
    seed, cfg = args
    try:
        return _mc_replication(seed, cfg)
    except (PatchmigError, np.linalg.LinAlgError) as exc:
        return {"seed": seed, "error": f"{type(exc).__name__}: {exc}"}


def _aggregate_mc(results: list[dict]) -> tuple[pd.DataFrame, dict]:
    """Parameter table (bias, RMSE, 90% coverage) plus scenario-level stats."""
    frames = []
    for rep in results:
        f = pd.DataFrame(rep["rows"])
        f["seed"] = rep["seed"]
        frames.append(f)
    table = pd.concat(frames, ignore_index=True)
    table["error"] = table["estimate"] - table["truth"]
    table["covered_90"] = np.where(
        table["se"] > 0,
        table["error"].abs() <= Z90 * table["se"],
        table["error"].abs() <= 1e-12,
    )

    order = {lab: i for i, lab in enumerate(dict.fromkeys(table["parameter"]))}
    agg_rows = []
    for label, g in table.groupby("parameter", sort=False):
        agg_rows.append(
            {
                "parameter": label,
                "truth": float(g["truth"].mean()),
                "mean_estimate": float(g["estimate"].mean()),
                "bias": float(g["error"].mean()),
                "rmse": float(np.sqrt(np.mean(g["error"] ** 2))),
                "coverage_90": float(g["covered_90"].mean()),
                "n": int(g.shape[0]),
            }
        )
    agg_rows.sort(key=lambda r: order[r["parameter"]])
    param_table = pd.DataFrame(agg_rows)

    beta_err = np.array([r["beta_hat"] - r["beta_true"] for r in results])
    a2_err = np.array([r["alpha_pooled"] - r["alpha_true"] for r in results])
    gamma_rel = np.array([r["gamma_rel_err"] for r in results])
    derived = {
        "beta": {"bias": float(beta_err.mean()), "rmse": float(np.sqrt((beta_err**2).mean()))},
        "alpha_pooled": {
            "bias": float(a2_err.mean()),
            "rmse": float(np.sqrt((a2_err**2).mean())),
            "frac_within_0.05": float(np.mean(np.abs(a2_err) <= 0.05)),
        },
        "gamma_relative": {
            "bias": float(gamma_rel.mean()),
            "rmse": float(np.sqrt((gamma_rel**2).mean())),
        },
        "migration": {
            "frac_reps_d_within_0.10_ge_80pct": float(
                np.mean([r["frac_d_within_010"] >= 0.8 for r in results])
            ),
            "mean_frac_d_within_0.10": float(
                np.mean([r["frac_d_within_010"] for r in results])
            ),
        },
        "capacity": {
            "frac_reps_k_within_15pct_ge_80pct": float(
                np.mean([r["frac_k_within_15pct"] >= 0.8 for r in results])
            ),
            "mean_frac_k_within_15pct": float(
                np.mean([r["frac_k_within_15pct"] for r in results])
            ),
            "median_k_rel_err": float(
                np.nanmedian([r["k_rel_err_median"] for r in results])
            ),
            "mean_n_fallback": float(np.mean([r["n_fallback"] for r in results])),
            "mean_n_unidentified": float(np.mean([r["n_unidentified"] for r in results])),
        },
        "biomass_relative_error": {
            "mean_p50": float(np.mean([r["biomass_rel_p50"] for r in results])),
            "mean_p90": float(np.mean([r["biomass_rel_p90"] for r in results])),
            "max": float(np.max([r["biomass_rel_max"] for r in results])),
        },
    }
    return param_table, derived


def cmd_montecarlo(cfg: RunConfig) -> int:
    """Replicate simulate+estimate across seeds; report bias, RMSE, coverage.

    This is the calibration run that freezes the desk-scenario tolerances:
    the committed report documents what the default pipeline achieves across
    replications. Individual replication failures are counted and reported;
    the command fails only if every replication fails.
    """
    mc = cfg.montecarlo
    seeds = list(range(1, mc.n_reps + 1))
    jobs = [(s, cfg) for s in seeds]
    if mc.workers == 1:
        outcomes = [_mc_worker(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=mc.workers or os.cpu_count()) as pool:
            outcomes = list(pool.map(_mc_worker, jobs))

    ok = [o for o in outcomes if "error" not in o]
    failures = {o["seed"]: o["error"] for o in outcomes if "error" in o}
    if not ok:
        raise NumericalError(
            f"all {mc.n_reps} replications failed",
            diagnostics={"failures": failures},
        )

    param_table, derived = _aggregate_mc(ok)
    paths = cfg.paths
    os.makedirs(paths.out_dir, exist_ok=True)
    reports.write_table_csv(param_table, os.path.join(paths.out_dir, "montecarlo.csv"))

    summary = {
        "n_reps": mc.n_reps,
        "n_ok": len(ok),
        "n_failed": len(failures),
        "failures": {str(k): v for k, v in failures.items()},
        "noiseless": mc.noiseless,
        "horizon_months": cfg.scenario.horizon_months,
        "derived": derived,
        "coverage_90": {
            "min": float(param_table["coverage_90"].min()),
            "median": float(param_table["coverage_90"].median()),
            "max": float(param_table["coverage_90"].max()),
        },
    }
    _write_json(os.path.join(paths.out_dir, "montecarlo_summary.json"), summary)

    with open(
        os.path.join(paths.out_dir, "montecarlo.txt"), "w", encoding="utf-8", newline=""
    ) as fh:
        fh.write(
            reports.format_table_text(
                param_table,
                title=f"Monte Carlo calibration, {len(ok)}/{mc.n_reps} replications",
                float_fmt="%.6f",
            )
        )
        fh.write("\n")
        for key, block in derived.items():
            fh.write(f"{key}: " + ", ".join(f"{k}={v:.6g}" for k, v in block.items()) + "\n")

    print(
        f"montecarlo: {len(ok)}/{mc.n_reps} replications succeeded, "
        f"coverage_90 median {summary['coverage_90']['median']:.3f} -> {paths.out_dir}"
    )
    return 0


# ---------------------------------------------------------------------------
# Argument parsing and dispatch
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="patchmig",
        description=(
            "Patch-structured fishery toolkit: simulate a synthetic fleet, "
            "estimate migration and capacity parameters from its aggregate "
            "behavior, and calibrate tolerances by Monte Carlo."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="YAML config file")
        sp.add_argument("--out-dir", help="directory for outputs and default input files")
        sp.add_argument("--seed", type=int, help="scenario seed")

    sim = sub.add_parser("simulate", help="generate synthetic fishery input files")
    common(sim)
    sim.add_argument("--horizon-months", type=int, help="months to simulate")
    sim.set_defaults(func=cmd_simulate)

    est = sub.add_parser("estimate", help="run the two-stage estimation pipeline")
    common(est)
    est.add_argument("--ci-level", type=float, help="capacity fallback confidence level")
    est.add_argument(
        "--paper-mapping",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="use the alternate structural mapping for the migration diagonal",
    )
    est.add_argument(
        "--no-harvest",
        action="store_true",
        help="exclude harvest from the migration-system response",
    )
    est.add_argument(
        "--row-sum-convention",
        choices=["conservative_zero", "paper_one"],
        help="reporting convention for the migration diagonal",
    )
    est.add_argument("--beta", type=float, help="fix the capture stock exponent")
    est.add_argument(
        "--calibration",
        choices=["truth", "totals", "none"],
        help="source of annual biomass totals for level calibration",
    )
    est.add_argument("--laplace", type=float, help="add-lambda share smoothing")
    est.set_defaults(func=cmd_estimate)

    mc = sub.add_parser("montecarlo", help="replicate simulate+estimate across seeds")
    common(mc)
    mc.add_argument("--n-reps", type=int, help="number of replications (seeds 1..n)")
    mc.add_argument("--workers", type=int, help="process pool size (default: CPUs)")
    mc.add_argument(
        "--noiseless",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="use exact choice shares instead of sampled trips",
    )
    mc.set_defaults(func=cmd_montecarlo)
    return parser


def _config_from_args(ns: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.load(ns.config) if ns.config else RunConfig()
    estimation = {}
    if ns.command == "estimate":
        estimation = {
            "ci_level": ns.ci_level,
            "paper_mapping": ns.paper_mapping,
            "include_harvest": False if ns.no_harvest else None,
            "row_sum_convention": ns.row_sum_convention,
            "beta": ns.beta,
            "calibration": ns.calibration,
            "laplace": ns.laplace,
        }
    montecarlo = {}
    if ns.command == "montecarlo":
        montecarlo = {
            "n_reps": ns.n_reps,
            "workers": ns.workers,
            "noiseless": ns.noiseless,
        }
    return cfg.override(
        scenario={
            "seed": ns.seed,
            "horizon_months": getattr(ns, "horizon_months", None),
        },
        paths={"out_dir": ns.out_dir},
        estimation=estimation,
        montecarlo=montecarlo,
    )


def _origin_module(exc: BaseException) -> str:
    mod = __package__ or "patchmig"
    tb = exc.__traceback__
    while tb is not None:
        name = tb.tb_frame.f_globals.get("__name__", "")
        if name.startswith(mod.split(".")[0]):
            mod = name
        tb = tb.tb_next
    return mod


_EXIT_CODES = {ConfigError: 2, DataError: 3, NumericalError: 4}


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = _config_from_args(ns)
        return int(ns.func(cfg))
    except PatchmigError as exc:
        payload = {
            "error": type(exc).__name__,
            "message": str(exc),
            "module": _origin_module(exc),
            "diagnostics": _jsonable(exc.diagnostics),
        }
        print(json.dumps(payload, sort_keys=True, default=str), file=sys.stderr)
        return _EXIT_CODES.get(type(exc), 1)


if __name__ == "__main__":
    sys.exit(main())
