"""CSV schema and market-panel construction tests.

Round-trip identities (write then parse) are the oracle for the file
formats; the share arithmetic is checked against counted examples small
enough to verify by hand.
"""

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose

from patchmig import DataError
from patchmig.fleet import PriceInputs
from patchmig.ingest import (
    MarketPanel,
    RosterEntry,
    TripRecord,
    build_panel,
    int_to_ym,
    parse_distances,
    parse_prices,
    parse_roster,
    parse_trips,
    read_totals,
    read_truth,
    write_distances,
    write_prices,
    write_roster,
    write_totals,
    write_trips,
    write_truth,
    ym_to_int,
)
from patchmig.patch_model import PatchGraph

PIN = PriceInputs(
    landed_price=100.0, vessel_fuel_rate=1.0, fuel_price=2.0, expected_catch_per_trip=6.0
)


def small_graph(n_patches=2, n_ports=1, dist=30.0):
    adjacency = [(k, k + 1) for k in range(1, n_patches)]
    distances = np.full((n_ports, n_patches), dist)
    return PatchGraph(n_patches=n_patches, adjacency=adjacency, port_distances=distances)


def month_roster(n, port=1, ym=(2001, 1)):
    return [
        RosterEntry(vessel_id=f"V{i}", port_id=port, from_ym=ym, to_ym=ym)
        for i in range(1, n + 1)
    ]


def price_grid(ports, yms):
    return {(p, y, m): PIN for p in ports for (y, m) in yms}


# ---------------------------------------------------------------------------
# Month arithmetic and record invariants
# ---------------------------------------------------------------------------

def test_ym_round_trip():
    for y in (1999, 2001, 2024):
        for m in range(1, 13):
            assert int_to_ym(ym_to_int(y, m)) == (y, m)
    assert ym_to_int(2001, 12) + 1 == ym_to_int(2002, 1)


def test_ym_rejects_bad_month():
    with pytest.raises(DataError):
        ym_to_int(2001, 13)


def test_trip_record_outside_must_have_zero_catch():
    TripRecord("V1", 1, 2001, 1, 0, 0.0)
    TripRecord("V1", 1, 2001, 1, 3, 2.5)
    with pytest.raises(DataError):
        TripRecord("V1", 1, 2001, 1, 0, 1.0)
    with pytest.raises(DataError):
        TripRecord("V1", 1, 2001, 1, 3, 0.0)
    with pytest.raises(DataError):
        TripRecord("V1", 1, 2001, 1, 3, -1.0)


def test_roster_entry_window():
    e = RosterEntry("V1", 1, (2001, 3), (2002, 2))
    assert e.active(2001, 3) and e.active(2001, 12) and e.active(2002, 2)
    assert not e.active(2001, 2) and not e.active(2002, 3)


# ---------------------------------------------------------------------------
# CSV round trips
# ---------------------------------------------------------------------------

def test_trips_round_trip(tmp_path):
    records = [
        TripRecord("V1", 1, 2001, 1, 2, 10.333333333333334),
        TripRecord("V2", 1, 2001, 1, 0, 0.0),
        TripRecord("V1", 1, 2001, 2, 1, 0.1),
    ]
    path = tmp_path / "trips.csv"
    write_trips(path, records)
    assert parse_trips(path) == records


def test_trips_write_is_byte_stable(tmp_path):
    records = [TripRecord("V1", 2, 2003, 7, 4, 1.2345678901234567)]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_trips(a, records)
    write_trips(b, records)
    assert a.read_bytes() == b.read_bytes()


def test_trips_empty_file_with_header(tmp_path):
    path = tmp_path / "trips.csv"
    path.write_text("vessel_id,port_id,year,month,patch_id,catch_tons\n")
    assert parse_trips(path) == []


def test_trips_malformed_rows_reported_with_line_numbers(tmp_path):
    path = tmp_path / "trips.csv"
    path.write_text(
        "vessel_id,port_id,year,month,patch_id,catch_tons\n"
        "V1,1,2001,1,2,5.0\n"
        "V2,1,2001,1,2,-3.0\n"
        "V3,1,2001,1,2,abc\n"
    )
    with pytest.raises(DataError) as err:
        parse_trips(path)
    msg = str(err.value)
    assert "line 3" in msg and "line 4" in msg and "2 malformed" in msg


def test_trips_strict_mode_stops_at_first_error(tmp_path):
    path = tmp_path / "trips.csv"
    path.write_text(
        "vessel_id,port_id,year,month,patch_id,catch_tons\n"
        "V2,1,2001,1,2,-3.0\n"
        "V3,1,2001,1,2,abc\n"
    )
    with pytest.raises(DataError) as err:
        parse_trips(path, strict=True)
    assert "line 2" in str(err.value) and "line 3" not in str(err.value)


def test_trips_header_mismatch(tmp_path):
    path = tmp_path / "trips.csv"
    path.write_text("vessel,port_id,year,month,patch_id,catch_tons\nV1,1,2001,1,0,0.0\n")
    with pytest.raises(DataError):
        parse_trips(path)


def test_trips_missing_file(tmp_path):
    with pytest.raises(DataError):
        parse_trips(tmp_path / "nope.csv")


def test_roster_round_trip_and_validation(tmp_path):
    roster = [
        RosterEntry("V1", 1, (2001, 1), (2004, 12)),
        RosterEntry("V2", 2, (2001, 6), (2001, 6)),
    ]
    path = tmp_path / "roster.csv"
    write_roster(path, roster)
    assert parse_roster(path) == roster

    bad = tmp_path / "bad.csv"
    bad.write_text("vessel_id,port_id,from_ym,to_ym\nV1,1,2002-01,2001-12\n")
    with pytest.raises(DataError):
        parse_roster(bad)


def test_prices_round_trip_and_duplicates(tmp_path):
    prices = {(1, 2001, 1): (100.0, 2.0), (2, 2001, 1): (101.5, 2.0)}
    path = tmp_path / "prices.csv"
    write_prices(path, prices)
    assert parse_prices(path) == prices

    dup = tmp_path / "dup.csv"
    dup.write_text(
        "port_id,year,month,landed_price,fuel_price\n1,2001,1,100,2\n1,2001,1,90,2\n"
    )
    with pytest.raises(DataError):
        parse_prices(dup)


def test_distances_round_trip_and_completeness(tmp_path):
    mat = np.array([[18.0, 43.0], [25.0, 18.0]])
    path = tmp_path / "distances.csv"
    write_distances(path, mat)
    assert_allclose(parse_distances(path), mat, rtol=0, atol=0)

    holey = tmp_path / "holey.csv"
    holey.write_text("port_id,patch_id,nmi\n1,1,18\n1,2,43\n2,1,25\n")
    with pytest.raises(DataError) as err:
        parse_distances(holey)
    assert "missing" in str(err.value)


def test_truth_and_totals_round_trip(tmp_path):
    truth = pd.DataFrame(
        [(1, 2001, 1, 3120.0), (2, 2001, 1, 2880.25)],
        columns=["patch_id", "year", "month", "biomass"],
    )
    tp = tmp_path / "truth.csv"
    write_truth(tp, truth)
    pd.testing.assert_frame_equal(read_truth(tp), truth)

    totals = {2001: 24000.0, 2002: 23111.125}
    op = tmp_path / "totals.csv"
    write_totals(op, totals)
    assert read_totals(op) == totals


# ---------------------------------------------------------------------------
# Panel construction
# ---------------------------------------------------------------------------

def test_build_panel_counts_shares_by_roster():
    # 5 vessels, choices (1, 1, 2, outside, outside).
    records = [
        TripRecord("V1", 1, 2001, 1, 1, 4.0),
        TripRecord("V2", 1, 2001, 1, 1, 6.0),
        TripRecord("V3", 1, 2001, 1, 2, 3.0),
        TripRecord("V4", 1, 2001, 1, 0, 0.0),
        TripRecord("V5", 1, 2001, 1, 0, 0.0),
    ]
    panel = build_panel(
        records, month_roster(5), price_grid([1], [(2001, 1)]), small_graph()
    )
    rows = panel.rows.set_index("patch_id")
    assert_allclose(rows.loc[1, "share"], 0.4, rtol=0, atol=0)
    assert_allclose(rows.loc[2, "share"], 0.2, rtol=0, atol=0)
    assert_allclose(panel.markets.loc[0, "outside_share"], 0.4, rtol=0, atol=0)
    assert_allclose(rows.loc[1, "catch"], 10.0, rtol=0, atol=0)
    assert rows.loc[1, "effort"] == 2 and rows.loc[2, "effort"] == 1
    assert bool(panel.markets.loc[0, "interior"])


def test_build_panel_vessels_without_records_count_as_outside():
    records = [TripRecord("V1", 1, 2001, 1, 1, 4.0)]
    panel = build_panel(
        records, month_roster(4), price_grid([1], [(2001, 1)]), small_graph()
    )
    assert_allclose(panel.markets.loc[0, "outside_share"], 0.75, rtol=0, atol=0)


def test_build_panel_all_outside_market_not_interior():
    records = [
        TripRecord("V1", 1, 2001, 1, 0, 0.0),
        TripRecord("V2", 1, 2001, 1, 0, 0.0),
    ]
    panel = build_panel(
        records, month_roster(2), price_grid([1], [(2001, 1)]), small_graph()
    )
    assert not bool(panel.markets.loc[0, "interior"])
    assert panel.diagnostics["zero_share_rows"] == 2
    assert (panel.rows["share"] == 0).all()


def test_build_panel_boundary_market_flagged():
    records = [
        TripRecord("V1", 1, 2001, 1, 1, 4.0),
        TripRecord("V2", 1, 2001, 1, 2, 4.0),
    ]
    panel = build_panel(
        records, month_roster(2), price_grid([1], [(2001, 1)]), small_graph()
    )
    assert panel.diagnostics["boundary_markets"] == 1
    assert not bool(panel.markets.loc[0, "interior"])


def test_build_panel_roster_smaller_than_active_vessels():
    records = [
        TripRecord("V1", 1, 2001, 1, 1, 4.0),
        TripRecord("V2", 1, 2001, 1, 1, 4.0),
        TripRecord("V3", 1, 2001, 1, 2, 4.0),
    ]
    with pytest.raises(DataError) as err:
        build_panel(records, month_roster(2), price_grid([1], [(2001, 1)]), small_graph())
    assert "roster" in str(err.value)


def test_build_panel_duplicate_vessel_month():
    records = [
        TripRecord("V1", 1, 2001, 1, 1, 4.0),
        TripRecord("V1", 1, 2001, 1, 2, 4.0),
    ]
    with pytest.raises(DataError):
        build_panel(records, month_roster(2), price_grid([1], [(2001, 1)]), small_graph())


def test_build_panel_unknown_ids():
    graph = small_graph()
    with pytest.raises(DataError):
        build_panel(
            [TripRecord("V1", 9, 2001, 1, 1, 4.0)],
            month_roster(1), price_grid([1], [(2001, 1)]), graph,
        )
    with pytest.raises(DataError):
        build_panel(
            [TripRecord("V1", 1, 2001, 1, 7, 4.0)],
            month_roster(1), price_grid([1], [(2001, 1)]), graph,
        )


def test_build_panel_record_outside_roster_window():
    records = [TripRecord("V1", 1, 2001, 2, 1, 4.0)]
    with pytest.raises(DataError) as err:
        build_panel(records, month_roster(1), price_grid([1], [(2001, 2)]), small_graph())
    assert "roster window" in str(err.value)


def test_build_panel_missing_price():
    records = [TripRecord("V1", 1, 2001, 1, 1, 4.0)]
    with pytest.raises(DataError) as err:
        build_panel(records, month_roster(1), {}, small_graph())
    assert "price" in str(err.value)


def test_build_panel_permutation_invariant():
    rng = np.random.default_rng(7)
    records = []
    for i in range(12):
        pick = int(rng.integers(0, 3))
        records.append(
            TripRecord(f"V{i}", 1, 2001, 1 + i % 3, pick, 0.0 if pick == 0 else 2.0)
        )
    roster = [
        RosterEntry(f"V{i}", 1, (2001, 1), (2001, 3)) for i in range(12)
    ]
    prices = price_grid([1], [(2001, m) for m in (1, 2, 3)])
    a = build_panel(records, roster, prices, small_graph())
    shuffled = list(records)
    rng.shuffle(shuffled)
    b = build_panel(shuffled, roster, prices, small_graph())
    pd.testing.assert_frame_equal(a.rows, b.rows)
    pd.testing.assert_frame_equal(a.markets, b.markets)


def test_build_panel_shares_sum_to_one():
    rng = np.random.default_rng(3)
    roster = month_roster(40)
    records = []
    for i in range(1, 31):
        pick = int(rng.integers(0, 3))
        records.append(
            TripRecord(f"V{i}", 1, 2001, 1, pick, 0.0 if pick == 0 else 1.5)
        )
    panel = build_panel(records, roster, price_grid([1], [(2001, 1)]), small_graph())
    total = panel.rows["share"].sum() + panel.markets.loc[0, "outside_share"]
    assert_allclose(total, 1.0, rtol=0, atol=1e-12)


def test_build_panel_net_price_uses_port_distance():
    graph = small_graph(n_patches=1, n_ports=1, dist=30.0)
    records = [TripRecord("V1", 1, 2001, 1, 1, 4.0)]
    panel = build_panel(records, month_roster(1), price_grid([1], [(2001, 1)]), graph)
    # 100 - 2*30*1.0*2.0/6.0 = 80
    assert_allclose(panel.rows.loc[0, "net_price"], 80.0, rtol=0, atol=1e-12)


def test_build_panel_nonpositive_price_flagged():
    graph = small_graph(n_patches=1, n_ports=1, dist=200.0)
    records = [TripRecord("V1", 1, 2001, 1, 1, 4.0)]
    panel = build_panel(records, month_roster(1), price_grid([1], [(2001, 1)]), graph)
    # 100 - 2*200*2/6 = -33.3
    assert panel.diagnostics["nonpositive_price_rows"] == 1
    assert bool(panel.rows.loc[0, "nonpositive_price"])


def test_build_panel_laplace_smoothing():
    records = [TripRecord("V1", 1, 2001, 1, 1, 4.0)]
    lam = 0.5
    panel = build_panel(
        records, month_roster(2), price_grid([1], [(2001, 1)]), small_graph(), laplace=lam
    )
    denom = 2 + lam * 3
    rows = panel.rows.set_index("patch_id")
    assert_allclose(rows.loc[1, "share"], (1 + lam) / denom, rtol=0, atol=1e-15)
    assert_allclose(rows.loc[2, "share"], lam / denom, rtol=0, atol=1e-15)
    assert_allclose(
        panel.markets.loc[0, "outside_share"], (1 + lam) / denom, rtol=0, atol=1e-15
    )
    assert panel.diagnostics["zero_share_rows"] == 0
    with pytest.raises(DataError):
        build_panel(records, month_roster(2), price_grid([1], [(2001, 1)]),
                    small_graph(), laplace=-0.1)


def test_build_panel_catch_totals_match_records():
    rng = np.random.default_rng(11)
    roster = month_roster(25)
    records = []
    for i in range(1, 26):
        pick = int(rng.integers(0, 3))
        catch = 0.0 if pick == 0 else float(rng.uniform(0.5, 9))
        records.append(TripRecord(f"V{i}", 1, 2001, 1, pick, catch))
    panel = build_panel(records, roster, price_grid([1], [(2001, 1)]), small_graph())
    want = sum(r.catch_tons for r in records)
    assert_allclose(panel.rows["catch"].sum(), want, rtol=0, atol=1e-12)
