"""Second estimation stage: migration regressions and structural recovery.

Each patch k gets one transition equation on the recovered biomass panel:

    x_{t+1}^k + H_t^k = alpha0 * x_t^k - alpha1 * (x_t^k)^2
                        + sum over neighbours h of d_hk * x_t^h

Expanding the patch transition x_{t+1} = x + r x (1 - x/K) + sum d_hk x^h
- H shows the reduced form maps to structure as alpha0 = 1 + r + d_kk and
alpha1 = r/K_k. Some write-ups state alpha0 = r - d_kk and omit both the
"1 +" and the harvest term; that algebra is not consistent with the
transition it claims to expand, so the expansion-consistent mapping is the
default here and the stated variant stays available behind switches
(``paper_mapping``, ``include_harvest=False``) for comparison runs.

Harvest is moved to the left side by default because it is observed in the
panel; leaving it out (the stated variant) pushes it into the error term.

The design column for alpha1 is -(x^2), so the reported coefficient is
r/K_k itself, positive for a healthy patch. No sign restrictions anywhere:
negative point estimates of alpha1 produce a negative point K_k, in which
case the reported capacity falls back to the confidence-interval upper
limit of alpha1 at the chosen level (positive there means the data cannot
rule out a finite positive capacity), and patches whose upper limit is
still non-positive are dropped from the capacity rescaling entirely.

r and the total capacity K come from a separate nonlinear fit of the
whole-fishery series, where inter-patch flows cancel under the
conservative row-sum convention; per-patch capacities are rescaled
proportionally so they add up to that total.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .econ_kernel import (
    Equation,
    EstimateSet,
    LinearSystemSpec,
    confidence_interval,
    nls_system,
    sur,
)
from .errors import ConfigError, DataError, NumericalError
from .ingest import MarketPanel, int_to_ym, ym_to_int
from .patch_model import PatchGraph
from .stage1 import BiomassPanel

__all__ = [
    "Stage2Spec",
    "MigrationRows",
    "AuxFit",
    "StructuralEstimates",
    "harvest_from_panel",
    "build_migration_rows",
    "fit_stage2",
    "fit_aux_total",
    "recover_structure",
]


def alpha0_label(k: int) -> str:
    return f"alpha0II[patch{k}]"


def alpha1_label(k: int) -> str:
    return f"alpha1II[patch{k}]"


def d_label(h: int, k: int) -> str:
    return f"d[{h}->{k}]"


def harvest_from_panel(panel: MarketPanel) -> pd.DataFrame:
    """Observed harvest per patch-month: catch summed over ports."""
    g = panel.rows.groupby(["patch_id", "year", "month"], as_index=False)["catch"].sum()
    return g.rename(columns={"catch": "harvest"})


@dataclass
class Stage2Spec:
    """Inputs for the migration system.

    ``harvest`` columns: patch_id, year, month, harvest. ``include_harvest``
    moves observed harvest to the response; switching it off reproduces the
    stated variant where harvest is left in the error term.
    """

    biomass: BiomassPanel
    graph: PatchGraph
    harvest: pd.DataFrame | None = None
    include_harvest: bool = True

    def __post_init__(self):
        if self.include_harvest:
            if self.harvest is None:
                raise ConfigError("include_harvest requires a harvest panel")
            need = {"patch_id", "year", "month", "harvest"}
            if not need.issubset(self.harvest.columns):
                raise DataError(f"harvest panel must have columns {sorted(need)}")


@dataclass
class MigrationRows:
    """Per-patch regression frames keyed by month, plus drop diagnostics."""

    frames: dict[int, pd.DataFrame]
    neighbors: dict[int, list[int]]
    diagnostics: dict = field(default_factory=dict)


def build_migration_rows(spec: Stage2Spec) -> MigrationRows:
    """One regression row per usable consecutive month pair per patch."""
    table = spec.biomass.table
    n = spec.graph.n_patches
    present = set(int(p) for p in table["patch_id"].unique())
    missing = sorted(set(range(1, n + 1)) - present)
    if missing:
        raise DataError(f"biomass panel has no rows for patches {missing}")

    wide = (
        table.pivot_table(index=["year", "month"], columns="patch_id", values="biomass")
        .reindex(columns=range(1, n + 1))
        .sort_index()
    )
    t_keys = np.array([ym_to_int(y, m) for y, m in wide.index])
    x = wide.to_numpy()

    harvest = None
    if spec.include_harvest:
        hw = (
            spec.harvest.pivot_table(
                index=["year", "month"], columns="patch_id", values="harvest"
            )
            .reindex(index=wide.index, columns=wide.columns)
            .fillna(0.0)
        )
        harvest = hw.to_numpy()

    # A usable pair needs adjacent months and every input value present:
    # the patch at t and t+1 plus each neighbour at t. Missing patch-month
    # cells (no trips landed there) count as gaps and drop the pairs that
    # touch them.
    consecutive = t_keys[1:] == t_keys[:-1] + 1
    neighbors = {k: spec.graph.neighbors(k) for k in range(1, n + 1)}

    frames = {}
    dropped = {}
    for k in range(1, n + 1):
        rows = []
        n_dropped = 0
        for i in range(len(t_keys) - 1):
            if not consecutive[i]:
                n_dropped += 1
                continue
            xk = x[i, k - 1]
            x_next = x[i + 1, k - 1]
            x_nbrs = [x[i, h - 1] for h in neighbors[k]]
            if not np.isfinite([xk, x_next, *x_nbrs]).all():
                n_dropped += 1
                continue
            resp = x_next
            if spec.include_harvest:
                resp = resp + harvest[i, k - 1]
            row = {
                "t": int(t_keys[i]),
                "response": resp,
                "x": xk,
                "neg_x_sq": -(xk ** 2),
            }
            for h, xh in zip(neighbors[k], x_nbrs):
                row[f"x_n{h}"] = xh
            rows.append(row)
        if len(rows) < 3:
            raise DataError(
                f"patch {k} has {len(rows)} usable month pairs; at least 3 required"
            )
        frames[k] = pd.DataFrame(rows)
        dropped[k] = n_dropped

    return MigrationRows(
        frames=frames,
        neighbors=neighbors,
        diagnostics={
            "dropped_pairs_by_patch": dropped,
            "pairs_per_patch": {k: len(f) for k, f in frames.items()},
        },
    )


def fit_stage2(rows: MigrationRows, iterate: bool = False) -> EstimateSet:
    """Joint SUR across the patch transition equations (no intercepts)."""
    equations = []
    for k, frame in sorted(rows.frames.items()):
        cols = [frame["x"].to_numpy(), frame["neg_x_sq"].to_numpy()]
        labels = [alpha0_label(k), alpha1_label(k)]
        for h in rows.neighbors[k]:
            cols.append(frame[f"x_n{h}"].to_numpy())
            labels.append(d_label(h, k))
        equations.append(
            Equation(
                name=f"patch{k}",
                y=frame["response"].to_numpy(),
                X=np.column_stack(cols),
                labels=labels,
                index=frame["t"].to_numpy(),
            )
        )
    return sur(LinearSystemSpec(equations=equations), mode="pairwise", iterate=iterate)


# ---------------------------------------------------------------------------
# Whole-fishery auxiliary fit
# ---------------------------------------------------------------------------

def whole_fishery_series(
    biomass: BiomassPanel, harvest: pd.DataFrame
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sum the panel over patches per month: (X_t, H_t, month keys).

    Months missing any patch's biomass are dropped (the sum would
    under-count); month keys let the auxiliary fit skip the resulting gaps.
    """
    wide = biomass.table.pivot_table(
        index=["year", "month"], columns="patch_id", values="biomass"
    ).sort_index()
    complete = wide.notna().all(axis=1)
    wide = wide[complete]
    if wide.empty:
        raise DataError("no month has biomass for every patch")
    hw = (
        harvest.pivot_table(index=["year", "month"], columns="patch_id", values="harvest")
        .reindex(index=wide.index, columns=wide.columns)
        .fillna(0.0)
    )
    t_keys = np.array([ym_to_int(y, m) for y, m in wide.index])
    return wide.sum(axis=1).to_numpy(), hw.sum(axis=1).to_numpy(), t_keys


@dataclass
class AuxFit:
    """Aggregate logistic parameters with their covariance."""

    r: float
    k_total: float
    estimates: EstimateSet


def fit_aux_total(total_biomass, total_harvest, t_keys=None) -> AuxFit:
    """Fit X_{t+1} = X_t + r X_t (1 - X_t / K) - H_t by nonlinear least squares.

    Inter-patch dispersal cancels in the fishery-wide sum under the
    conservative convention, leaving the aggregate logistic. ``t_keys``
    (integer month keys) marks gaps: only adjacent-month pairs enter the
    fit. A singular Jacobian (for example a series resting at equilibrium)
    means (r, K) is not identified and raises, as do negative estimates.
    """
    x = np.asarray(total_biomass, dtype=float).ravel()
    h = np.asarray(total_harvest, dtype=float).ravel()
    if x.shape != h.shape:
        raise DataError(f"series lengths differ: {x.shape[0]} vs {h.shape[0]}")
    if x.shape[0] < 4:
        raise DataError(f"whole-fishery series has {x.shape[0]} points; need at least 4")
    if not (np.isfinite(x).all() and np.isfinite(h).all()):
        raise DataError("whole-fishery series contains non-finite values")
    if np.any(x <= 0):
        raise DataError("whole-fishery biomass must be positive")
    if t_keys is not None:
        t = np.asarray(t_keys, dtype=int).ravel()
        if t.shape != x.shape:
            raise DataError("t_keys must match the series length")
        keep = t[1:] == t[:-1] + 1
    else:
        keep = np.ones(x.shape[0] - 1, dtype=bool)
    if int(keep.sum()) < 3:
        raise DataError(
            f"only {int(keep.sum())} adjacent-month pairs in the whole-fishery series"
        )

    # Fit in mean-normalized units so the two Jacobian columns are on
    # comparable scales (K is orders of magnitude above r), then map back.
    s = float(x.mean())
    xs, hs = x / s, h / s
    x0, x1, h0 = xs[:-1][keep], xs[1:][keep], hs[:-1][keep]

    def residual(theta):
        r, k = theta
        return x1 - (x0 + r * x0 * (1 - x0 / k) - h0)

    def jacobian(theta):
        r, k = theta
        return np.column_stack([-x0 * (1 - x0 / k), -r * x0 ** 2 / k ** 2])

    # Linear-in-(r, r/K) least squares supplies the starting point.
    g = np.column_stack([x0, -(x0 ** 2)])
    b, *_ = np.linalg.lstsq(g, x1 - x0 + h0, rcond=None)
    r0 = b[0] if b[0] > 0 else 0.1
    k0 = b[0] / b[1] if b[0] > 0 and b[1] > 0 else 2.0 * float(xs.max())

    est = nls_system(residual, np.array([r0, k0]), ["r", "k_total"], jacobian=jacobian)
    if est.diagnostics.get("singular_jacobian"):
        raise NumericalError(
            "aggregate logistic is unidentified on this series (singular Jacobian)",
            diagnostics={"r": est.param("r"), "k_total": est.param("k_total") * s},
        )
    # Undo the normalization: K scales by s, r is scale-free.
    t_mat = np.diag([1.0, s])
    est = EstimateSet(
        labels=est.labels,
        values=t_mat @ est.values,
        cov=t_mat @ est.cov @ t_mat,
        alias=est.alias,
        sigma=est.sigma * s ** 2,
        equation_names=est.equation_names,
        nobs=est.nobs,
        r_squared=est.r_squared,
        residuals={name: res * s for name, res in est.residuals.items()},
        diagnostics={**est.diagnostics, "series_scale": s},
    )
    r_hat, k_hat = est.param("r"), est.param("k_total")
    if r_hat <= 0 or k_hat <= 0:
        raise NumericalError(
            "aggregate logistic fit produced non-positive parameters",
            diagnostics={"r": r_hat, "k_total": k_hat},
        )
    return AuxFit(r=float(r_hat), k_total=float(k_hat), estimates=est)


# ---------------------------------------------------------------------------
# Structural recovery
# ---------------------------------------------------------------------------

@dataclass
class StructuralEstimates:
    """Biological parameters recovered from the reduced form.

    ``capacity`` has one row per patch: alpha1 point estimate, point K,
    CI-based K at the chosen level, the reported (rescaled) K, and flags.
    ``d_offdiag`` maps (h, k) to the migration rate from h into k.
    """

    r: float
    k_total: float
    level: float
    capacity: pd.DataFrame
    d_kk: dict[int, float]
    d_offdiag: dict[tuple[int, int], float]
    scale_factor: float
    paper_mapping: bool
    reduced: EstimateSet

    def reported_k(self) -> dict[int, float]:
        out = {}
        for row in self.capacity.itertuples():
            if not row.unidentified:
                out[int(row.patch_id)] = float(row.k_reported)
        return out


def recover_structure(
    reduced: EstimateSet,
    aux,
    graph: PatchGraph,
    level: float = 0.80,
    paper_mapping: bool = False,
) -> StructuralEstimates:
    """Map reduced-form coefficients to r-consistent biological parameters.

    ``aux`` is an AuxFit or a plain (r, K_total) pair. The default mapping
    inverts alpha0 = 1 + r + d_kk; ``paper_mapping`` switches to the stated
    alpha0 = r - d_kk variant. Capacities use K_k = r / alpha1_k with the
    CI-upper-limit fallback for non-positive alpha1, then rescale so the
    identified patches sum to K_total.
    """
    if isinstance(aux, AuxFit):
        r, k_total = aux.r, aux.k_total
    else:
        r, k_total = float(aux[0]), float(aux[1])
    if r <= 0:
        raise ConfigError(f"auxiliary growth rate must be positive, got {r}")
    if not 0 < level < 1:
        raise ConfigError(f"confidence level must be in (0, 1), got {level}")

    n = graph.n_patches
    d_kk = {}
    d_offdiag = {}
    cap_rows = []
    for k in range(1, n + 1):
        a0 = reduced.param(alpha0_label(k))
        a1 = reduced.param(alpha1_label(k))
        d_kk[k] = (r - a0) if paper_mapping else (a0 - 1.0 - r)
        for h in graph.neighbors(k):
            d_offdiag[(h, k)] = reduced.param(d_label(h, k))

        k_point = r / a1 if a1 != 0 else np.inf
        fallback = not a1 > 0
        _, upper = confidence_interval(reduced, alpha1_label(k), level)
        k_ci = r / upper if upper > 0 else np.nan
        unidentified = fallback and upper <= 0
        k_used = k_point if not fallback else k_ci
        cap_rows.append(
            {
                "patch_id": k,
                "alpha1": a1,
                "k_point": k_point,
                "k_ci_upper": k_ci,
                "k_used": k_used,
                "fallback": fallback,
                "unidentified": unidentified,
            }
        )

    capacity = pd.DataFrame(cap_rows)
    usable = capacity[~capacity["unidentified"]]
    total_used = float(usable["k_used"].sum())
    if total_used <= 0:
        raise NumericalError(
            "no identified capacities to rescale",
            diagnostics={"k_used": capacity["k_used"].tolist()},
        )
    scale = k_total / total_used
    capacity["k_reported"] = np.where(
        capacity["unidentified"], np.nan, capacity["k_used"] * scale
    )

    return StructuralEstimates(
        r=r,
        k_total=k_total,
        level=level,
        capacity=capacity,
        d_kk=d_kk,
        d_offdiag=d_offdiag,
        scale_factor=float(scale),
        paper_mapping=paper_mapping,
        reduced=reduced,
    )
