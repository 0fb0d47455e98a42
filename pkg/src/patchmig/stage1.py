"""First estimation stage: share inversion, joint SUR, biomass recovery.

The demand side inverts market shares per Berry, ln(s_k) - ln(s_0), one
equation per port, with a full set of (year, month, patch) cell effects
xi. The log capture function joins the system as a fifth equation whose
rows carry the same cell effects with coefficient one, because the stock
term beta*ln(x) of the capture function is exactly the cell effect. Cross
equation restrictions: the effort elasticity alpha2 is one parameter per
year shared between the capture equation and the demand coefficient on the
first log covariate (when covariates are present), and ln(gamma) is a
single parameter across years.

Identification of levels: the cell-effect block admits one global shift
(absorbed by the per-year demand intercepts jointly with ln(gamma)), so
exactly one reference cell is pinned to zero. Keeping gamma common across
years makes the capture equation transmit levels between years; estimated
effects are then comparable across the whole horizon and an external
biomass total per year can pin both the remaining global scale and, if
unknown, the conversion beta itself. A per-year normalization instead
would leave one free scale per year, and no amount of calibration data
could then separate beta from those scales.

The recovered biomass x = exp(xi/beta) is reported with effects re-stated
at the calibrated level, so beta*ln(x) always reproduces the stored effect.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .econ_kernel import Equation, EstimateSet, LinearSystemSpec, sur
from .errors import ConfigError, DataError, NumericalError
from .ingest import MarketPanel

__all__ = [
    "Stage1Spec",
    "Stage1Fit",
    "BiomassPanel",
    "invert_shares",
    "fit_stage1",
    "recover_biomass",
    "capture_technology",
]

BETA_BRACKET = (1e-3, 10.0)
BISECT_TOL = 1e-10


def _cell_key(year: int, month: int, patch: int) -> int:
    return year * 10000 + month * 100 + patch


def _xi_label(year: int, month: int, patch: int) -> str:
    return f"xi[{year}-{month:02d},patch{patch}]"


def invert_shares(panel: MarketPanel) -> tuple[pd.DataFrame, dict]:
    """Berry inversion: regression rows with response ln(s_k) - ln(s_0).

    Rows from markets with a zero outside share, rows with zero share, and
    rows with non-positive net price are excluded; the diagnostics dict
    reports each count. Optional covariate columns z1..zn in the panel are
    carried through as logs.
    """
    rows = panel.rows.merge(
        panel.markets[["port_id", "year", "month", "outside_share"]],
        on=["port_id", "year", "month"],
        validate="many_to_one",
    )
    z_cols = sorted(
        (c for c in panel.rows.columns if c.startswith("z") and c[1:].isdigit()),
        key=lambda c: int(c[1:]),
    )

    boundary = rows["outside_share"] <= 0
    zero_share = (rows["share"] <= 0) & ~boundary
    bad_price = (rows["net_price"] <= 0) & ~boundary & ~zero_share
    keep = ~(boundary | zero_share | bad_price)
    diagnostics = {
        "rows_in": len(rows),
        "dropped_boundary_market": int(boundary.sum()),
        "dropped_zero_share": int(zero_share.sum()),
        "dropped_nonpositive_price": int(bad_price.sum()),
        "rows_used": int(keep.sum()),
    }
    if not keep.any():
        raise DataError("share inversion left no usable rows", diagnostics=diagnostics)

    out = rows.loc[keep, ["port_id", "year", "month", "patch_id"]].copy()
    out["response"] = np.log(rows.loc[keep, "share"]) - np.log(
        rows.loc[keep, "outside_share"]
    )
    out["ln_net_price"] = np.log(rows.loc[keep, "net_price"])
    for i, c in enumerate(z_cols, start=1):
        z = rows.loc[keep, c]
        if (z <= 0).any():
            raise DataError(f"covariate column {c} must be positive")
        out[f"ln_z{i}"] = np.log(z)
    out = out.reset_index(drop=True)
    return out, diagnostics


def _capture_rows(panel: MarketPanel) -> pd.DataFrame:
    """Patch-month totals for the log capture equation (H > 0 required)."""
    z_cols = sorted(
        (c for c in panel.rows.columns if c.startswith("z") and c[1:].isdigit()),
        key=lambda c: int(c[1:]),
    )
    agg = {"effort": "sum", "catch": "sum"}
    agg.update({c: "first" for c in z_cols})
    g = panel.rows.groupby(["year", "month", "patch_id"], as_index=False).agg(agg)
    g = g[(g["effort"] > 0) & (g["catch"] > 0)].reset_index(drop=True)
    g["ln_catch"] = np.log(g["catch"])
    g["ln_effort"] = np.log(g["effort"])
    for i, c in enumerate(z_cols, start=1):
        g[f"ln_z{i}"] = np.log(g[c])
    return g


@dataclass
class Stage1Spec:
    """Assembled inputs for the five-equation system.

    ``cells`` lists every (year, month, patch) present in either the demand
    rows or the capture rows; each gets one effect, except the reference
    cell which is pinned to zero. ``restrictions`` documents the sharing of
    coefficients across equations.
    """

    panel: MarketPanel
    demand_rows: pd.DataFrame
    capture_rows: pd.DataFrame
    years: list[int]
    ports: list[int]
    cells: list[tuple[int, int, int]]
    reference_cell: tuple[int, int, int]
    restrictions: dict[str, str]
    diagnostics: dict = field(default_factory=dict)

    @classmethod
    def from_panel(
        cls, panel: MarketPanel, reference_cell: tuple[int, int, int] | None = None
    ) -> "Stage1Spec":
        demand, diagnostics = invert_shares(panel)
        cap = _capture_rows(panel)
        if demand["month"].nunique() < 2 and demand["year"].nunique() < 2:
            raise DataError("stage 1 needs at least two months of markets")

        cells = sorted(
            set(map(tuple, demand[["year", "month", "patch_id"]].values))
            | set(map(tuple, cap[["year", "month", "patch_id"]].values))
        )
        cells = [(int(y), int(m), int(k)) for y, m, k in cells]
        if reference_cell is None:
            reference_cell = cells[0]
        elif tuple(reference_cell) not in set(cells):
            raise ConfigError(f"reference cell {reference_cell} has no regression rows")

        return cls(
            panel=panel,
            demand_rows=demand,
            capture_rows=cap,
            years=sorted(set(demand["year"]) | set(cap["year"])),
            ports=sorted(demand["port_id"].unique()),
            cells=cells,
            reference_cell=tuple(reference_cell),
            restrictions={
                "alpha2": "per year; shared between capture ln(effort) and "
                          "demand ln(z1) when covariates are present",
                "lngamma": "single parameter across all years",
                "xi": "per (year, month, patch) cell; shared across all five "
                      "equations with coefficient one; reference cell pinned to zero",
            },
            diagnostics=diagnostics,
        )


@dataclass
class Stage1Fit:
    """SUR estimates plus the extracted cell-effect panel."""

    estimates: EstimateSet
    effects: pd.DataFrame
    reference_cell: tuple[int, int, int]
    spec: Stage1Spec

    def effect(self, year: int, month: int, patch: int) -> float:
        m = self.effects
        hit = m[(m.year == year) & (m.month == month) & (m.patch_id == patch)]
        if hit.empty:
            raise DataError(f"no effect for cell {(year, month, patch)}")
        return float(hit["effect"].iloc[0])


def _build_equation(name, frame, spec, base_terms):
    """Design matrix for one equation: base terms plus the cell-effect block.

    ``base_terms`` is a list of (column values, label) pairs. Cell effects
    get 0/1 columns, skipping the reference cell.
    """
    n = len(frame)
    ref = spec.reference_cell
    cell_of_row = list(zip(frame["year"], frame["month"], frame["patch_id"]))
    used_cells = sorted({c for c in cell_of_row if c != ref})

    labels = [lab for _, lab in base_terms]
    cols = [np.asarray(v, dtype=float) for v, _ in base_terms]
    for cell in used_cells:
        mask = np.fromiter((c == cell for c in cell_of_row), dtype=float, count=n)
        cols.append(mask)
        labels.append(_xi_label(*cell))
    x = np.column_stack(cols)
    index = np.array([_cell_key(*c) for c in cell_of_row])
    y = frame["response"].to_numpy(dtype=float)
    return Equation(name=name, y=y, X=x, labels=labels, index=index)


def fit_stage1(
    spec: Stage1Spec,
    iterate: bool = False,
    capture_exact: bool = True,
) -> Stage1Fit:
    """Joint SUR of the port demand equations and the log capture function.

    All stochastics in the model enter through vessel choices, so the
    capture function is an accounting identity in measured catch and
    effort: with ``capture_exact=True`` (default) its rows are imposed
    with infinite precision weight — the GLS limit for a disturbance-free
    equation — which pins each cell effect to ln(catch) - ln(gamma) -
    alpha2 * ln(effort). Demand-side sampling noise then cannot leak into
    the recovered effects. ``capture_exact=False`` reverts to weighting
    the capture equation by its estimated residual variance.
    """
    z_names = [c for c in spec.demand_rows.columns if c.startswith("ln_z")]

    equations = []
    for port in spec.ports:
        rows = spec.demand_rows[spec.demand_rows["port_id"] == port]
        cols, labels = [], []
        years = rows["year"].to_numpy()
        for y in spec.years:
            mask = (years == y).astype(float)
            cols.append(mask)
            labels.append(f"alpha0[{y}]")
            cols.append(mask * rows["ln_net_price"].to_numpy())
            labels.append(f"alpha1[{y},port{port}]")
            for i, zc in enumerate(z_names, start=1):
                cols.append(mask * rows[zc].to_numpy())
                labels.append(f"alpha2[{y}]" if i == 1 else f"alpha2_{i}[{y}]")
        eq = _build_equation(f"demand_port{port}", rows, spec, list(zip(cols, labels)))
        equations.append(eq)

    cap = spec.capture_rows.rename(columns={"ln_catch": "response"})
    years = cap["year"].to_numpy()
    cols = [np.ones(len(cap))]
    labels = ["lngamma"]
    for y in spec.years:
        mask = (years == y).astype(float)
        cols.append(mask * cap["ln_effort"].to_numpy())
        labels.append(f"alpha2[{y}]")
        for i in range(1, len(z_names) + 1):
            cols.append(mask * cap[f"ln_z{i}"].to_numpy())
            labels.append(f"rho{i}[{y}]")
    equations.append(
        _build_equation("capture", cap, spec, list(zip(cols, labels)))
    )

    est = sur(
        LinearSystemSpec(equations=equations),
        mode="pairwise",
        iterate=iterate,
        exact=("capture",) if capture_exact else (),
    )

    effect_rows = []
    for cell in spec.cells:
        if cell == spec.reference_cell:
            effect_rows.append((*cell, 0.0))
        else:
            effect_rows.append((*cell, est.param(_xi_label(*cell))))
    effects = pd.DataFrame(effect_rows, columns=["year", "month", "patch_id", "effect"])
    return Stage1Fit(
        estimates=est,
        effects=effects,
        reference_cell=spec.reference_cell,
        spec=spec,
    )


# ---------------------------------------------------------------------------
# Biomass recovery
# ---------------------------------------------------------------------------

@dataclass
class BiomassPanel:
    """Recovered biomass levels plus the effects restated at those levels.

    ``table`` has columns patch_id, year, month, biomass, effect, with
    beta_used * ln(biomass) equal to the stored effect. ``scale`` is the
    global level multiplier applied on top of exp(effect/beta); without
    calibration it is 1 and levels are relative to the reference cell.
    """

    table: pd.DataFrame
    beta_used: float
    scale: float
    calibration: str
    reference_cell: tuple[int, int, int] | None = None

    def level(self, year: int, month: int, patch: int) -> float:
        t = self.table
        hit = t[(t.year == year) & (t.month == month) & (t.patch_id == patch)]
        if hit.empty:
            raise DataError(f"no biomass for cell {(year, month, patch)}")
        return float(hit["biomass"].iloc[0])

    def annual_totals(self) -> dict[int, float]:
        per = self.table.groupby(["year", "patch_id"])["biomass"].mean()
        return {int(y): float(v) for y, v in per.groupby("year").sum().items()}


def _log_year_sums(effects: pd.DataFrame, beta: float) -> pd.Series:
    """ln of per-year biomass sums, computed via log-sum-exp for stability.

    Small beta values inflate exp(effect/beta) far past float range during
    the bisection scan, so the per-year sums are kept in logs. The overall
    magnitude cancels out of the calibration objective.
    """
    tmp = effects[["year", "patch_id"]].copy()
    tmp["e"] = effects["effect"].to_numpy() / beta

    def lse_mean(s):
        m = s.max()
        return m + np.log(np.mean(np.exp(s - m)))

    per = tmp.groupby(["year", "patch_id"])["e"].apply(lse_mean)

    def lse_sum(s):
        m = s.max()
        return m + np.log(np.sum(np.exp(s - m)))

    return per.groupby("year").apply(lse_sum)


def _totals_objective(effects, beta, totals):
    """Least-squares misfit of scaled year sums against the totals.

    Returns the objective on normalized sums (invariant to the overall
    magnitude of exp(effect/beta)) and the actual scale, which may
    underflow to zero far from the solution without affecting the search.
    """
    log_s = _log_year_sums(effects, beta)
    b = np.array([totals[int(y)] for y in log_s.index])
    m = float(log_s.max())
    sv = np.exp(log_s.to_numpy() - m)
    c_norm = float(sv @ b) / float(sv @ sv)
    resid = c_norm * sv - b
    return float(resid @ resid), c_norm * np.exp(-m)


def _pool_capture_elasticity(fit: Stage1Fit) -> pd.DataFrame:
    """Re-state cell effects at the pooled (cross-year mean) elasticity.

    The capture function holds in each cell, so replacing the per-year
    effort elasticity by its pooled value moves the difference into the
    effect: effect += (alpha2[year] - pooled) * ln(effort). The elasticity
    is one technology parameter; its year-indexed estimates differ only
    through finite-sample endogeneity of effort, and those differences
    otherwise masquerade as year-level biomass shifts that distort the
    beta calibration. When the per-year estimates agree the adjustment is
    zero, so exact fits are unchanged.
    """
    a2 = {y: fit.estimates.param(f"alpha2[{y}]") for y in fit.spec.years}
    pooled = float(np.mean(list(a2.values())))
    cap = fit.spec.capture_rows
    ln_e = {
        (int(y), int(m), int(k)): float(v)
        for y, m, k, v in zip(cap["year"], cap["month"], cap["patch_id"], cap["ln_effort"])
    }
    effects = fit.effects.copy()
    adjust = np.array(
        [
            (a2[int(y)] - pooled) * ln_e.get((int(y), int(m), int(k)), 0.0)
            for y, m, k in zip(effects["year"], effects["month"], effects["patch_id"])
        ]
    )
    effects["effect"] = effects["effect"].to_numpy() + adjust
    return effects


def recover_biomass(
    fit: Stage1Fit | pd.DataFrame,
    beta: float | None = None,
    annual_totals: dict[int, float] | None = None,
    pool_elasticity: bool = True,
) -> BiomassPanel:
    """Convert cell effects to biomass levels, x = scale * exp(effect/beta).

    With ``beta`` given and no totals, levels are relative (scale 1). Annual
    totals calibrate the global scale by least squares across years; if
    ``beta`` is not given, totals must be, and beta is solved by bisection
    on the derivative of the calibration objective over [1e-3, 10].

    With a full fit as input, effects are first re-stated at the pooled
    effort elasticity (see ``_pool_capture_elasticity``); pass
    ``pool_elasticity=False`` to convert the raw effects instead. A bare
    effects frame is always converted as given.
    """
    if isinstance(fit, Stage1Fit):
        effects = _pool_capture_elasticity(fit) if pool_elasticity else fit.effects
        reference = fit.reference_cell
    else:
        effects = fit
        reference = None
        need = {"year", "month", "patch_id", "effect"}
        if not need.issubset(effects.columns):
            raise DataError(f"effects frame must have columns {sorted(need)}")
    if beta is None and annual_totals is None:
        raise ConfigError("recover_biomass needs beta, annual totals, or both")
    if beta is not None and beta <= 0:
        raise ConfigError(f"beta must be positive, got {beta}")

    if annual_totals is not None:
        years = sorted(set(int(y) for y in effects["year"]))
        missing = [y for y in years if y not in annual_totals]
        if missing:
            raise DataError(f"annual totals missing for years {missing}")
        if any(annual_totals[y] <= 0 for y in years):
            raise DataError("annual totals must be positive")

    calibration = "fixed-beta"
    if beta is None:
        lo, hi = BETA_BRACKET
        if len(set(int(y) for y in effects["year"])) < 2:
            raise DataError("beta calibration needs totals for at least two years")

        def dg(b, h=1e-7):
            step = h * max(b, 1.0)
            g_hi, _ = _totals_objective(effects, b + step, annual_totals)
            g_lo, _ = _totals_objective(effects, b - step, annual_totals)
            return (g_hi - g_lo) / (2 * step)

        # Scan the whole bracket and bisect the stationarity condition around
        # the global grid minimum; taking the first sign change instead can
        # land on a shallow spurious minimum near the lower end.
        grid = np.geomspace(lo, hi, 160)
        vals = np.array([_totals_objective(effects, b, annual_totals)[0] for b in grid])
        i_star = int(np.argmin(vals))
        if i_star == 0 or i_star == len(grid) - 1:
            raise NumericalError(
                "beta calibration root not bracketed in [1e-3, 10]",
                diagnostics={
                    "objective_at_ends": (float(vals[0]), float(vals[-1])),
                    "argmin_at_boundary": float(grid[i_star]),
                },
            )
        a, b = float(grid[i_star - 1]), float(grid[i_star + 1])
        while b - a > BISECT_TOL:
            mid = 0.5 * (a + b)
            if dg(mid) < 0:
                a = mid
            else:
                b = mid
        beta = 0.5 * (a + b)
        calibration = "totals"

    if annual_totals is not None:
        _, scale = _totals_objective(effects, beta, annual_totals)
        if calibration == "fixed-beta":
            calibration = "fixed-beta+totals"
    else:
        scale = 1.0

    table = effects.copy()
    table["biomass"] = scale * np.exp(table["effect"].to_numpy() / beta)
    if not np.isfinite(table["biomass"].to_numpy()).all() or (table["biomass"] <= 0).any():
        raise NumericalError(
            "biomass conversion produced non-positive or non-finite levels",
            diagnostics={"beta": float(beta), "scale": float(scale)},
        )
    table["effect"] = beta * np.log(table["biomass"].to_numpy())
    table = table[["patch_id", "year", "month", "biomass", "effect"]].reset_index(drop=True)
    return BiomassPanel(
        table=table,
        beta_used=float(beta),
        scale=float(scale),
        calibration=calibration,
        reference_cell=reference,
    )


def capture_technology(fit: Stage1Fit, biomass: BiomassPanel) -> dict:
    """Technology parameters at calibrated levels.

    The raw SUR intercept absorbs the global level of the cell-effect
    block, and the calibration scale is that level expressed in biomass
    units: x = scale * exp(effect/beta) means beta*ln(x) - effect =
    beta*ln(scale) in every cell, so gamma is recovered by removing
    beta*ln(scale) from the raw intercept.
    """
    lngamma = fit.estimates.param("lngamma") - biomass.beta_used * np.log(biomass.scale)
    alpha = {y: fit.estimates.param(f"alpha2[{y}]") for y in fit.spec.years}
    return {
        "gamma": float(np.exp(lngamma)),
        "lngamma": float(lngamma),
        "alpha_by_year": alpha,
        "alpha_pooled": float(np.mean(list(alpha.values()))),
        "beta": biomass.beta_used,
        "reference_cell": fit.reference_cell,
    }
