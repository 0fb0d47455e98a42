"""Migration stage: transition rows, joint fit, aggregate fit, structure."""

import math

import numpy as np
import pandas as pd
import pytest

from patchmig.econ_kernel import EstimateSet
from patchmig.errors import ConfigError, DataError, NumericalError
from patchmig.patch_model import PatchGraph
from patchmig.stage1 import BiomassPanel
from patchmig.stage2 import (
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

PAIR_GRAPH = PatchGraph(2, [(1, 2)], np.ones((1, 2)))


def _panel_from_table(rows) -> BiomassPanel:
    table = pd.DataFrame(rows, columns=["patch_id", "year", "month", "biomass"])
    table["effect"] = np.log(table["biomass"])
    return BiomassPanel(table=table, beta_used=1.0, scale=1.0, calibration="fixed-beta")


def _grid_panel(months, patches, value=None) -> BiomassPanel:
    rows = []
    for m in months:
        for k in patches:
            rows.append((k, 2001, m, value(k, m) if value else 100.0 + 10 * k + m))
    return _panel_from_table(rows)


def _synthetic_reduced(graph, r, carrying, rates, var=1e-8) -> EstimateSet:
    labels, values = [], []
    for k in range(1, graph.n_patches + 1):
        labels.append(alpha0_label(k))
        values.append(1.0 + r + rates[k - 1, k - 1])
        labels.append(alpha1_label(k))
        values.append(r / carrying[k - 1])
        for h in graph.neighbors(k):
            labels.append(d_label(h, k))
            values.append(rates[h - 1, k - 1])
    values = np.array(values)
    return EstimateSet(labels=labels, values=values, cov=var * np.eye(len(values)), alias={})


class TestMigrationRows:
    def test_gap_months_drop_pairs(self):
        panel = _grid_panel([1, 2, 3, 5, 6, 7], [1, 2])
        rows = build_migration_rows(Stage2Spec(biomass=panel, graph=PAIR_GRAPH, include_harvest=False))
        for k in (1, 2):
            assert len(rows.frames[k]) == 4
            assert rows.diagnostics["dropped_pairs_by_patch"][k] == 1
        assert list(rows.frames[1]["t"]) == sorted(rows.frames[1]["t"])

    def test_missing_cell_drops_touching_pairs(self):
        panel = _grid_panel([1, 2, 3, 4, 5, 6], [1, 2])
        table = panel.table[~((panel.table.patch_id == 2) & (panel.table.month == 3))]
        panel = BiomassPanel(table=table.reset_index(drop=True), beta_used=1.0, scale=1.0, calibration="fixed-beta")
        rows = build_migration_rows(Stage2Spec(biomass=panel, graph=PAIR_GRAPH, include_harvest=False))
        # Patch 2 loses the pairs starting at months 2 and 3 (its own value at
        # month 3 serves once as next-month response, once as current stock);
        # patch 1 only loses the pair starting at month 3, where its
        # neighbour's current value is the missing cell.
        assert len(rows.frames[2]) == 3
        assert len(rows.frames[1]) == 4

    def test_too_few_pairs_is_data_error(self):
        panel = _grid_panel([1, 2, 3], [1, 2])
        with pytest.raises(DataError, match="at least 3"):
            build_migration_rows(Stage2Spec(biomass=panel, graph=PAIR_GRAPH, include_harvest=False))

    def test_absent_patch_is_data_error(self):
        panel = _grid_panel([1, 2, 3, 4], [1])
        with pytest.raises(DataError, match="no rows for patches \\[2\\]"):
            build_migration_rows(Stage2Spec(biomass=panel, graph=PAIR_GRAPH, include_harvest=False))

    def test_harvest_moves_into_response(self):
        panel = _grid_panel([1, 2, 3, 4, 5], [1, 2])
        harvest = pd.DataFrame(
            [(k, 2001, m, 7.0) for m in range(1, 6) for k in (1, 2)],
            columns=["patch_id", "year", "month", "harvest"],
        )
        with_h = build_migration_rows(
            Stage2Spec(biomass=panel, graph=PAIR_GRAPH, harvest=harvest, include_harvest=True)
        )
        without = build_migration_rows(
            Stage2Spec(biomass=panel, graph=PAIR_GRAPH, include_harvest=False)
        )
        gap = with_h.frames[1]["response"].to_numpy() - without.frames[1]["response"].to_numpy()
        assert np.allclose(gap, 7.0)
        assert np.allclose(with_h.frames[1]["x"], without.frames[1]["x"])

    def test_include_harvest_requires_panel(self):
        panel = _grid_panel([1, 2, 3, 4], [1, 2])
        with pytest.raises(ConfigError, match="harvest"):
            Stage2Spec(biomass=panel, graph=PAIR_GRAPH, harvest=None, include_harvest=True)

    def test_harvest_panel_schema_checked(self):
        panel = _grid_panel([1, 2, 3, 4], [1, 2])
        bad = pd.DataFrame({"patch_id": [1], "year": [2001], "month": [1], "tons": [1.0]})
        with pytest.raises(DataError, match="columns"):
            Stage2Spec(biomass=panel, graph=PAIR_GRAPH, harvest=bad, include_harvest=True)

    def test_regressor_count_follows_degree(self, noiseless_bundle):
        reduced = noiseless_bundle["reduced"]
        counts = reduced.diagnostics["n_params"]
        graph = noiseless_bundle["scenario"].graph
        for k in range(1, graph.n_patches + 1):
            assert counts[f"patch{k}"] == 2 + len(graph.neighbors(k))
            assert counts[f"patch{k}"] in {4, 5, 6}


class TestFitStage2:
    def test_noiseless_recovers_structure_coefficients(self, noiseless_bundle):
        sc = noiseless_bundle["scenario"]
        reduced = noiseless_bundle["reduced"]
        rates = sc.dispersion.rates
        r, carrying = sc.bio.r, sc.bio.carrying_capacity
        for k in range(1, sc.graph.n_patches + 1):
            assert reduced.param(alpha0_label(k)) == pytest.approx(
                1.0 + r + rates[k - 1, k - 1], abs=1e-6
            )
            assert reduced.param(alpha1_label(k)) == pytest.approx(
                r / carrying[k - 1], abs=1e-6
            )
            for h in sc.graph.neighbors(k):
                assert reduced.param(d_label(h, k)) == pytest.approx(
                    rates[h - 1, k - 1], abs=1e-6
                )

    def test_desk_flows_mostly_within_tolerance(self, desk_bundle):
        sc = desk_bundle["scenario"]
        structural = desk_bundle["structural"]
        rates = sc.dispersion.rates
        errs = [
            abs(v - rates[h - 1, k - 1]) for (h, k), v in structural.d_offdiag.items()
        ]
        assert np.mean([e <= 0.1 for e in errs]) >= 0.8


class TestAuxTotal:
    def _series(self, r=0.05, k=1e6, x0=2e5, n=40):
        x = [x0]
        h = []
        for t in range(n - 1):
            ht = 0.01 * x[-1] * (1.2 + math.sin(t))
            nxt = x[-1] + r * x[-1] * (1 - x[-1] / k) - ht
            h.append(ht)
            x.append(nxt)
        h.append(0.0)
        return np.array(x), np.array(h)

    def test_exact_logistic_recovered(self):
        x, h = self._series()
        aux = fit_aux_total(x, h)
        assert aux.r == pytest.approx(0.05, rel=1e-6)
        assert aux.k_total == pytest.approx(1e6, rel=1e-6)
        assert aux.estimates.se("r") < 1e-8

    def test_gap_months_skipped_via_keys(self):
        # Simulate 25 months, then lose months 10-14 from the record; the
        # surviving observations span a genuine five-month hole.
        x_full, h_full = self._series(n=25)
        idx = list(range(10)) + list(range(15, 25))
        x, h, keys = x_full[idx], h_full[idx], np.array(idx)
        aux = fit_aux_total(x, h, t_keys=keys)
        # The pair spanning the hole is excluded, so the fit stays exact.
        assert aux.r == pytest.approx(0.05, rel=1e-6)
        assert aux.k_total == pytest.approx(1e6, rel=1e-6)
        # Passing no keys treats the hole as one month and distorts the fit.
        aux_wrong = fit_aux_total(x, h)
        assert abs(aux_wrong.r - 0.05) > 1e-6

    def test_equilibrium_series_unidentified(self):
        x = np.full(30, 5e5)
        h = np.zeros(30)
        with pytest.raises(NumericalError, match="aggregate logistic"):
            fit_aux_total(x, h)

    def test_validation_errors(self):
        with pytest.raises(DataError, match="lengths differ"):
            fit_aux_total(np.ones(10), np.ones(9))
        with pytest.raises(DataError, match="at least 4"):
            fit_aux_total(np.ones(3), np.ones(3))
        with pytest.raises(DataError, match="positive"):
            fit_aux_total(np.array([1.0, -1.0, 1.0, 1.0]), np.zeros(4))
        with pytest.raises(DataError, match="non-finite"):
            fit_aux_total(np.array([1.0, np.nan, 1.0, 1.0]), np.zeros(4))
        with pytest.raises(DataError, match="t_keys"):
            fit_aux_total(np.ones(4), np.zeros(4), t_keys=np.arange(3))
        with pytest.raises(DataError, match="adjacent-month"):
            fit_aux_total(np.ones(4) * 2, np.zeros(4), t_keys=np.array([1, 5, 9, 13]))

    def test_whole_fishery_series_drops_incomplete_months(self, noiseless_bundle):
        bio, harvest = noiseless_bundle["biomass"], noiseless_bundle["harvest"]
        x, h, keys = whole_fishery_series(bio, harvest)
        assert len(x) == len(h) == len(keys)
        table = bio.table
        complete = table.groupby(["year", "month"])["patch_id"].nunique()
        assert len(x) == int((complete == 8).sum())

    def test_noiseless_aggregate_close_to_truth(self, noiseless_bundle):
        """The aggregate logistic mis-specifies patch heterogeneity slightly,
        so recovery is close but not exact even without sampling noise."""
        sc = noiseless_bundle["scenario"]
        aux = noiseless_bundle["aux"]
        assert aux.r == pytest.approx(sc.bio.r, rel=0.05)
        assert aux.k_total == pytest.approx(float(sc.bio.carrying_capacity.sum()), rel=0.05)


class TestRecoverStructure:
    GRAPH = PatchGraph(3, [(1, 2), (2, 3)], np.ones((1, 3)))
    R = 0.2
    CARRY = np.array([1000.0, 2000.0, 3000.0])

    def _rates(self):
        rates = np.zeros((3, 3))
        rates[0, 1], rates[1, 0] = 0.04, 0.03
        rates[1, 2], rates[2, 1] = 0.05, 0.02
        np.fill_diagonal(rates, -rates.sum(axis=1))
        return rates

    def test_round_trip_exact(self):
        rates = self._rates()
        reduced = _synthetic_reduced(self.GRAPH, self.R, self.CARRY, rates)
        st = recover_structure(reduced, (self.R, float(self.CARRY.sum())), self.GRAPH)
        for k in range(1, 4):
            assert st.d_kk[k] == pytest.approx(rates[k - 1, k - 1], abs=1e-12)
        for (h, k), v in st.d_offdiag.items():
            assert v == pytest.approx(rates[h - 1, k - 1], abs=1e-12)
        assert st.scale_factor == pytest.approx(1.0, abs=1e-12)
        for k, v in st.reported_k().items():
            assert v == pytest.approx(self.CARRY[k - 1], rel=1e-12)

    def test_rescaling_preserves_ratios_and_total(self):
        reduced = _synthetic_reduced(self.GRAPH, self.R, self.CARRY, self._rates())
        st = recover_structure(reduced, (self.R, 12000.0), self.GRAPH)
        got = st.reported_k()
        assert sum(got.values()) == pytest.approx(12000.0)
        assert got[2] / got[1] == pytest.approx(2.0, rel=1e-12)
        assert got[3] / got[1] == pytest.approx(3.0, rel=1e-12)

    def test_negative_point_capacity_falls_back_to_ci_upper(self):
        reduced = _synthetic_reduced(self.GRAPH, self.R, self.CARRY, self._rates())
        values = reduced.values.copy()
        i = reduced.labels.index(alpha1_label(2))
        values[i] = -0.001  # negative point estimate, upper CI limit positive
        cov = reduced.cov.copy()
        cov[i, i] = 0.01**2
        bad = EstimateSet(labels=reduced.labels, values=values, cov=cov, alias={})
        st = recover_structure(bad, (self.R, 6000.0), self.GRAPH, level=0.80)
        row = st.capacity[st.capacity.patch_id == 2].iloc[0]
        assert bool(row.fallback) and not bool(row.unidentified)
        assert row.k_point < 0
        assert row.k_ci_upper > 0
        assert (st.capacity["k_reported"] > 0).all()
        assert sum(st.reported_k().values()) == pytest.approx(6000.0)

    def test_unidentified_patch_excluded_from_rescaling(self):
        reduced = _synthetic_reduced(self.GRAPH, self.R, self.CARRY, self._rates())
        values = reduced.values.copy()
        i = reduced.labels.index(alpha1_label(3))
        values[i] = -0.5  # so negative even the CI upper limit stays negative
        bad = EstimateSet(
            labels=reduced.labels, values=values, cov=reduced.cov.copy(), alias={}
        )
        st = recover_structure(bad, (self.R, 3000.0), self.GRAPH)
        row = st.capacity[st.capacity.patch_id == 3].iloc[0]
        assert bool(row.unidentified)
        assert 3 not in st.reported_k()
        assert math.isnan(row.k_reported)
        assert sum(st.reported_k().values()) == pytest.approx(3000.0)

    def test_all_unidentified_is_numerical_error(self):
        labels, values = [], []
        for k in range(1, 4):
            labels += [alpha0_label(k), alpha1_label(k)]
            values += [1.0, -0.5]
            for h in self.GRAPH.neighbors(k):
                labels.append(d_label(h, k))
                values.append(0.0)
        bad = EstimateSet(
            labels=labels, values=np.array(values), cov=1e-8 * np.eye(len(values)), alias={}
        )
        with pytest.raises(NumericalError, match="no identified capacities"):
            recover_structure(bad, (0.2, 1000.0), self.GRAPH)

    def test_paper_mapping_changes_diagonal_only(self):
        rates = self._rates()
        reduced = _synthetic_reduced(self.GRAPH, self.R, self.CARRY, rates)
        canonical = recover_structure(reduced, (self.R, 6000.0), self.GRAPH)
        alt = recover_structure(reduced, (self.R, 6000.0), self.GRAPH, paper_mapping=True)
        assert alt.d_offdiag == canonical.d_offdiag
        assert alt.reported_k() == canonical.reported_k()
        for k in range(1, 4):
            a0 = reduced.param(alpha0_label(k))
            assert alt.d_kk[k] == pytest.approx(self.R - a0)

    def test_level_validation(self):
        reduced = _synthetic_reduced(self.GRAPH, self.R, self.CARRY, self._rates())
        with pytest.raises(ConfigError, match="confidence level"):
            recover_structure(reduced, (self.R, 6000.0), self.GRAPH, level=1.2)
        with pytest.raises(ConfigError, match="growth rate"):
            recover_structure(reduced, (-0.1, 6000.0), self.GRAPH)

    def test_desk_capacities_within_fifteen_percent(self, desk_bundle):
        sc = desk_bundle["scenario"]
        reported = desk_bundle["structural"].reported_k()
        carrying = sc.bio.carrying_capacity
        rel = [
            abs(reported[k] - carrying[k - 1]) / carrying[k - 1]
            for k in reported
        ]
        assert np.mean([e <= 0.15 for e in rel]) >= 0.8


class TestHarvestFromPanel:
    def test_totals_match_panel(self, desk_bundle):
        harvest = harvest_from_panel(desk_bundle["panel"])
        assert set(harvest.columns) >= {"patch_id", "year", "month", "harvest"}
        total = float(desk_bundle["panel"].rows["catch"].sum())
        assert harvest["harvest"].sum() == pytest.approx(total)
