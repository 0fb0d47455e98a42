"""Report tables: parameter frames plus CSV and aligned-text renderers.

Value extraction is separated from rendering so the same formatter serves
every table. Frames are plain DataFrames with a ``parameter`` (or
``patch_id``) key column followed by numeric columns; renderers are
deterministic — CSV cells use ``repr`` for floats so files are
byte-reproducible, text tables use a caller-chosen fixed-point format.
"""

from __future__ import annotations

import csv
import math
import re

import numpy as np
import pandas as pd

from .econ_kernel import EstimateSet, confidence_interval
from .stage1 import BiomassPanel, Stage1Fit
from .stage2 import StructuralEstimates, alpha0_label, alpha1_label, d_label

__all__ = [
    "stage1_param_frame",
    "stage1_footer_frame",
    "stage2_reduced_frame",
    "stage2_param_frame",
    "capacity_frame",
    "write_table_csv",
    "format_table_text",
    "write_table_text",
    "write_biomass_csv",
]


def _row(est: EstimateSet, label: str, display: str | None = None) -> dict:
    se = est.se(label)
    value = est.param(label)
    return {
        "parameter": display or label,
        "estimate": float(value),
        "std_error": float(se),
        "z_value": float(value / se) if se > 0 else math.nan,
    }


def stage1_param_frame(fit: Stage1Fit) -> pd.DataFrame:
    """Demand-side parameter table: intercepts per year, price coefficients
    per year and port, effort elasticities per year."""
    est = fit.estimates
    rows = []
    for y in fit.spec.years:
        rows.append(_row(est, f"alpha0[{y}]"))
    for y in fit.spec.years:
        for p in fit.spec.ports:
            rows.append(_row(est, f"alpha1[{y},port{p}]"))
    for y in fit.spec.years:
        rows.append(_row(est, f"alpha2[{y}]"))
    return pd.DataFrame(rows, columns=["parameter", "estimate", "std_error", "z_value"])


def stage1_footer_frame(fit: Stage1Fit) -> pd.DataFrame:
    """Per-equation fit block: observations, free parameter count, R²."""
    est = fit.estimates
    rows = []
    for name in est.equation_names:
        rows.append(
            {
                "equation": name,
                "observations": int(est.nobs[name]),
                "parameters": int(est.diagnostics.get("n_params", {}).get(name, 0)),
                "r_squared": float(est.r_squared[name]),
            }
        )
    return pd.DataFrame(rows, columns=["equation", "observations", "parameters", "r_squared"])


_D_LABEL = re.compile(r"^d\[(\d+)->(\d+)\]$")


def stage2_reduced_frame(reduced: EstimateSet) -> pd.DataFrame:
    """Reduced-form migration table: per-patch intercepts, per-patch
    quadratic terms, then all neighbor-flow coefficients."""
    patches = sorted(
        int(m.group(1))
        for m in (re.match(r"^alpha0II\[patch(\d+)\]$", lab) for lab in reduced.labels)
        if m
    )
    flows = sorted(
        (int(m.group(1)), int(m.group(2)))
        for m in (_D_LABEL.match(lab) for lab in reduced.labels)
        if m
    )
    rows = []
    for k in patches:
        rows.append(_row(reduced, alpha0_label(k)))
    for k in patches:
        rows.append(_row(reduced, alpha1_label(k)))
    for h, k in flows:
        rows.append(_row(reduced, d_label(h, k)))
    return pd.DataFrame(rows, columns=["parameter", "estimate", "std_error", "z_value"])


def stage2_param_frame(
    structural: StructuralEstimates,
    aux=None,
    row_sum_convention: str = "conservative_zero",
) -> pd.DataFrame:
    """Structural biology table: growth rate, migration diagonal per patch,
    neighbor flow rates.

    Under the "paper_one" convention the diagonal is displayed as a
    retention share (net rate + 1); off-diagonal flows are identical under
    both conventions. The growth-rate standard error comes from the
    auxiliary whole-fishery fit when provided; diagonal standard errors
    combine the reduced-form intercept variance with the growth-rate
    variance (independent fits).
    """
    reduced = structural.reduced
    r_se = math.nan
    if aux is not None and getattr(aux, "estimates", None) is not None:
        r_se = float(aux.estimates.se("r"))
    rows = [
        {
            "parameter": "r",
            "estimate": structural.r,
            "std_error": r_se,
            "z_value": structural.r / r_se if r_se and r_se > 0 else math.nan,
        }
    ]
    diag_shift = 1.0 if row_sum_convention == "paper_one" else 0.0
    var_r = r_se**2 if math.isfinite(r_se) else 0.0
    for k in sorted(structural.d_kk):
        est = structural.d_kk[k] + diag_shift
        se = math.sqrt(reduced.se(alpha0_label(k)) ** 2 + var_r)
        rows.append(
            {
                "parameter": f"d[{k}->{k}]",
                "estimate": est,
                "std_error": se,
                "z_value": est / se if se > 0 else math.nan,
            }
        )
    for h, k in sorted(structural.d_offdiag):
        rows.append(_row(reduced, d_label(h, k)))
    return pd.DataFrame(rows, columns=["parameter", "estimate", "std_error", "z_value"])


def capacity_frame(structural: StructuralEstimates) -> pd.DataFrame:
    """Carrying-capacity table with confidence-limit columns.

    ``k_upper_80`` / ``k_upper_90`` are the capacities implied by the upper
    confidence limits of the per-patch quadratic coefficient (the smallest
    capacities consistent with the data at each level); ``k_point`` is the
    point estimate, ``k_reported`` the rescaled value actually reported
    (point when positive, else the fallback confidence-limit value).
    """
    reduced = structural.reduced
    rows = []
    for row in structural.capacity.itertuples():
        k = int(row.patch_id)
        limits = {}
        for level in (0.80, 0.90):
            _, upper = confidence_interval(reduced, alpha1_label(k), level)
            limits[level] = structural.r / upper if upper > 0 else math.nan
        rows.append(
            {
                "patch_id": k,
                "k_upper_80": limits[0.80],
                "k_upper_90": limits[0.90],
                "k_point": float(row.k_point),
                "k_reported": float(row.k_reported),
                "fallback": bool(row.fallback),
                "unidentified": bool(row.unidentified),
            }
        )
    return pd.DataFrame(
        rows,
        columns=[
            "patch_id", "k_upper_80", "k_upper_90", "k_point",
            "k_reported", "fallback", "unidentified",
        ],
    )


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def _csv_cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_table_csv(frame: pd.DataFrame, path) -> None:
    """Write a frame as CSV with byte-stable float formatting."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(frame.columns)
        for row in frame.itertuples(index=False):
            w.writerow([_csv_cell(v) for v in row])


def _text_cell(v, float_fmt: str) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "yes" if v else "no"
    if isinstance(v, (float, np.floating)):
        return "." if math.isnan(v) else float_fmt % v
    return str(v)


def format_table_text(
    frame: pd.DataFrame, title: str | None = None, float_fmt: str = "%.5f"
) -> str:
    """Render a frame as an aligned fixed-width text table.

    The first column is left-aligned, remaining columns right-aligned;
    missing values print as ".".
    """
    headers = [str(c) for c in frame.columns]
    body = [
        [_text_cell(v, float_fmt) for v in row]
        for row in frame.itertuples(index=False)
    ]
    widths = [
        max(len(headers[j]), max((len(r[j]) for r in body), default=0))
        for j in range(len(headers))
    ]

    def fmt_line(cells):
        parts = [cells[0].ljust(widths[0])]
        parts += [cells[j].rjust(widths[j]) for j in range(1, len(cells))]
        return "  ".join(parts).rstrip()

    lines = []
    if title:
        lines.append(title)
    lines.append(fmt_line(headers))
    lines.append("  ".join("-" * w for w in widths))
    lines.extend(fmt_line(r) for r in body)
    return "\n".join(lines) + "\n"


def write_table_text(
    frame: pd.DataFrame, path, title: str | None = None, float_fmt: str = "%.5f"
) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_table_text(frame, title=title, float_fmt=float_fmt))


def write_biomass_csv(panel: BiomassPanel, path) -> None:
    """Write recovered biomass levels, one row per (patch, year, month)."""
    table = panel.table.sort_values(["patch_id", "year", "month"])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["patch_id", "year", "month", "biomass_tons"])
        for row in table.itertuples(index=False):
            w.writerow(
                [int(row.patch_id), int(row.year), int(row.month), repr(float(row.biomass))]
            )
