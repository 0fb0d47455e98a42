"""Trip/roster/price CSV schemas and market-share panel construction.

File formats (UTF-8, comma separated, dot decimal, header row required):

    trips.csv      vessel_id,port_id,year,month,patch_id,catch_tons
    roster.csv     vessel_id,port_id,from_ym,to_ym        (ym as YYYY-MM)
    prices.csv     port_id,year,month,landed_price,fuel_price
    distances.csv  port_id,patch_id,nmi
    truth.csv      patch_id,year,month,biomass            (simulator output)
    totals.csv     year,total_biomass                     (calibration input)

patch_id 0 is the outside option (a vessel that stayed in port); such rows
carry zero catch. A market is one (port, year, month). Shares divide choice
counts by the roster size of the market, so vessels with no record in a
month count as outside implicitly. One record per vessel per month.

Zero shares and non-positive net prices are flagged here, never dropped;
the estimation stage decides what to exclude and reports it.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import DataError
from .fleet import PriceInputs, net_price
from .patch_model import PatchGraph

__all__ = [
    "TripRecord",
    "RosterEntry",
    "MarketPanel",
    "parse_trips",
    "parse_roster",
    "parse_prices",
    "parse_distances",
    "build_panel",
    "write_trips",
    "write_roster",
    "write_prices",
    "write_distances",
    "write_truth",
    "write_totals",
    "read_truth",
    "read_totals",
    "ym_to_int",
    "int_to_ym",
]

OUTSIDE_PATCH = 0


def ym_to_int(year: int, month: int) -> int:
    """Monotone integer key for a calendar month."""
    if not 1 <= month <= 12:
        raise DataError(f"month must be 1..12, got {month}")
    return year * 12 + (month - 1)


def int_to_ym(t: int) -> tuple[int, int]:
    return t // 12, t % 12 + 1


@dataclass(frozen=True)
class TripRecord:
    """One vessel-month choice; patch_id 0 means the vessel stayed in port."""

    vessel_id: str
    port_id: int
    year: int
    month: int
    patch_id: int
    catch_tons: float

    def __post_init__(self):
        if self.patch_id < 0:
            raise DataError(f"patch_id must be >= 0, got {self.patch_id}")
        if self.catch_tons < 0:
            raise DataError(f"catch_tons must be >= 0, got {self.catch_tons}")
        if (self.patch_id == OUTSIDE_PATCH) != (self.catch_tons == 0.0):
            raise DataError(
                "catch_tons must be zero exactly for outside records "
                f"(patch {self.patch_id}, catch {self.catch_tons})"
            )
        if not 1 <= self.month <= 12:
            raise DataError(f"month must be 1..12, got {self.month}")


@dataclass(frozen=True)
class RosterEntry:
    """A vessel's membership window at a port, inclusive on both ends."""

    vessel_id: str
    port_id: int
    from_ym: tuple[int, int]
    to_ym: tuple[int, int]

    def active(self, year: int, month: int) -> bool:
        return self.from_ym <= (year, month) <= self.to_ym


@dataclass
class MarketPanel:
    """Market-level shares, effort and catch plus per-market metadata.

    ``rows`` has one line per (port, year, month, patch) over the full patch
    grid: share, effort (trips), catch (tons), net_price, and the flags
    zero_share / nonpositive_price. ``markets`` has one line per (port,
    year, month): roster size, outside share, and an interior flag that is
    False when the outside share is zero. ``diagnostics`` counts what was
    flagged.
    """

    rows: pd.DataFrame
    markets: pd.DataFrame
    n_patches: int
    diagnostics: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# CSV parsing
# ---------------------------------------------------------------------------

def _read_rows(path, expected_columns):
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from None
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty file, expected header {expected_columns}")
        if list(reader.fieldnames) != expected_columns:
            raise DataError(
                f"{path}: header {reader.fieldnames} does not match {expected_columns}"
            )
        return list(reader)


def _collect(path, raw_rows, convert, strict):
    """Convert raw dict rows, gathering per-line errors."""
    out, problems = [], []
    for line_no, raw in enumerate(raw_rows, start=2):  # header is line 1
        try:
            out.append(convert(raw))
        except (DataError, ValueError, KeyError) as exc:
            if strict:
                raise DataError(f"{path}: line {line_no}: {exc}") from None
            problems.append(f"line {line_no}: {exc}")
    if problems:
        listing = "; ".join(problems[:20])
        more = f" (+{len(problems) - 20} more)" if len(problems) > 20 else ""
        raise DataError(f"{path}: {len(problems)} malformed rows: {listing}{more}")
    return out


def parse_trips(path, strict: bool = False) -> list[TripRecord]:
    """Read trips.csv; all rows must be valid or a DataError lists the bad ones."""
    raw = _read_rows(path, ["vessel_id", "port_id", "year", "month", "patch_id", "catch_tons"])

    def convert(r):
        return TripRecord(
            vessel_id=r["vessel_id"],
            port_id=int(r["port_id"]),
            year=int(r["year"]),
            month=int(r["month"]),
            patch_id=int(r["patch_id"]),
            catch_tons=float(r["catch_tons"]),
        )

    return _collect(path, raw, convert, strict)


def _parse_ym(s: str) -> tuple[int, int]:
    parts = s.split("-")
    if len(parts) != 2:
        raise ValueError(f"expected YYYY-MM, got {s!r}")
    y, m = int(parts[0]), int(parts[1])
    if not 1 <= m <= 12:
        raise ValueError(f"month out of range in {s!r}")
    return y, m


def parse_roster(path, strict: bool = False) -> list[RosterEntry]:
    raw = _read_rows(path, ["vessel_id", "port_id", "from_ym", "to_ym"])

    def convert(r):
        entry = RosterEntry(
            vessel_id=r["vessel_id"],
            port_id=int(r["port_id"]),
            from_ym=_parse_ym(r["from_ym"]),
            to_ym=_parse_ym(r["to_ym"]),
        )
        if entry.from_ym > entry.to_ym:
            raise ValueError(f"window {r['from_ym']}..{r['to_ym']} is reversed")
        return entry

    return _collect(path, raw, convert, strict)


def parse_prices(path, strict: bool = False) -> dict:
    """prices.csv -> {(port_id, year, month): (landed_price, fuel_price)}."""
    raw = _read_rows(path, ["port_id", "year", "month", "landed_price", "fuel_price"])

    def convert(r):
        landed, fuel = float(r["landed_price"]), float(r["fuel_price"])
        if landed <= 0 or fuel <= 0:
            raise ValueError("prices must be positive")
        return (int(r["port_id"]), int(r["year"]), int(r["month"])), (landed, fuel)

    pairs = _collect(path, raw, convert, strict)
    out = {}
    for key, val in pairs:
        if key in out:
            raise DataError(f"{path}: duplicate price row for {key}")
        out[key] = val
    return out


def parse_distances(path, strict: bool = False) -> np.ndarray:
    """distances.csv -> (n_ports, n_patches) matrix; the grid must be complete."""
    raw = _read_rows(path, ["port_id", "patch_id", "nmi"])

    def convert(r):
        nmi = float(r["nmi"])
        if nmi <= 0:
            raise ValueError(f"distance must be > 0, got {nmi}")
        return int(r["port_id"]), int(r["patch_id"]), nmi

    triples = _collect(path, raw, convert, strict)
    if not triples:
        raise DataError(f"{path}: no distance rows")
    ports = sorted({t[0] for t in triples})
    patches = sorted({t[1] for t in triples})
    if ports != list(range(1, len(ports) + 1)) or patches != list(range(1, len(patches) + 1)):
        raise DataError(f"{path}: port and patch ids must be contiguous from 1")
    mat = np.full((len(ports), len(patches)), np.nan)
    for p, k, nmi in triples:
        if not np.isnan(mat[p - 1, k - 1]):
            raise DataError(f"{path}: duplicate distance for port {p}, patch {k}")
        mat[p - 1, k - 1] = nmi
    if np.isnan(mat).any():
        missing = [(int(i + 1), int(j + 1)) for i, j in zip(*np.where(np.isnan(mat)))]
        raise DataError(f"{path}: missing distances for (port, patch) pairs {missing[:10]}")
    return mat


def read_truth(path) -> pd.DataFrame:
    raw = _read_rows(path, ["patch_id", "year", "month", "biomass"])
    rows = [
        (int(r["patch_id"]), int(r["year"]), int(r["month"]), float(r["biomass"]))
        for r in raw
    ]
    return pd.DataFrame(rows, columns=["patch_id", "year", "month", "biomass"])


def read_totals(path) -> dict[int, float]:
    raw = _read_rows(path, ["year", "total_biomass"])
    return {int(r["year"]): float(r["total_biomass"]) for r in raw}


# ---------------------------------------------------------------------------
# CSV writing (byte-stable: repr for floats, fixed ordering)
# ---------------------------------------------------------------------------

def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_trips(path, records: list[TripRecord]) -> None:
    _write_csv(
        path,
        ["vessel_id", "port_id", "year", "month", "patch_id", "catch_tons"],
        [
            (r.vessel_id, r.port_id, r.year, r.month, r.patch_id, repr(r.catch_tons))
            for r in records
        ],
    )


def write_roster(path, roster: list[RosterEntry]) -> None:
    _write_csv(
        path,
        ["vessel_id", "port_id", "from_ym", "to_ym"],
        [
            (e.vessel_id, e.port_id,
             f"{e.from_ym[0]:04d}-{e.from_ym[1]:02d}",
             f"{e.to_ym[0]:04d}-{e.to_ym[1]:02d}")
            for e in roster
        ],
    )


def write_prices(path, prices: dict) -> None:
    rows = [
        (p, y, m, repr(landed), repr(fuel))
        for (p, y, m), (landed, fuel) in sorted(prices.items())
    ]
    _write_csv(path, ["port_id", "year", "month", "landed_price", "fuel_price"], rows)


def write_distances(path, matrix: np.ndarray) -> None:
    rows = [
        (p + 1, k + 1, repr(float(matrix[p, k])))
        for p in range(matrix.shape[0])
        for k in range(matrix.shape[1])
    ]
    _write_csv(path, ["port_id", "patch_id", "nmi"], rows)


def write_truth(path, truth: pd.DataFrame) -> None:
    rows = [
        (int(r.patch_id), int(r.year), int(r.month), repr(float(r.biomass)))
        for r in truth.itertuples()
    ]
    _write_csv(path, ["patch_id", "year", "month", "biomass"], rows)


def write_totals(path, totals: dict[int, float]) -> None:
    _write_csv(
        path,
        ["year", "total_biomass"],
        [(y, repr(float(v))) for y, v in sorted(totals.items())],
    )


# ---------------------------------------------------------------------------
# Panel construction
# ---------------------------------------------------------------------------

def build_panel(
    records: list[TripRecord],
    roster: list[RosterEntry],
    prices: dict,
    graph: PatchGraph,
    laplace: float = 0.0,
) -> MarketPanel:
    """Aggregate vessel-month records into a market share panel.

    ``prices`` maps (port_id, year, month) to PriceInputs. Markets span every
    month inside the roster windows for every port with a positive roster.
    ``laplace`` > 0 applies add-lambda smoothing to the share counts (for
    sparse real data; leave at zero for anything synthetic).
    """
    n = graph.n_patches
    n_ports = graph.n_ports
    if laplace < 0:
        raise DataError("laplace smoothing must be >= 0")

    for rec in records:
        if not 1 <= rec.port_id <= n_ports:
            raise DataError(f"unknown port id {rec.port_id} (graph has {n_ports} ports)")
        if rec.patch_id > n:
            raise DataError(f"unknown patch id {rec.patch_id} (graph has {n} patches)")

    seen: set[tuple[str, int, int]] = set()
    for rec in records:
        key = (rec.vessel_id, rec.year, rec.month)
        if key in seen:
            raise DataError(
                f"vessel {rec.vessel_id} has more than one record in {rec.year}-{rec.month:02d}"
            )
        seen.add(key)

    if not roster:
        raise DataError("empty roster")
    t_lo = min(ym_to_int(*e.from_ym) for e in roster)
    t_hi = max(ym_to_int(*e.to_ym) for e in roster)

    # Roster size per (port, ym).
    roster_size: dict[tuple[int, int], int] = {}
    for e in roster:
        if not 1 <= e.port_id <= n_ports:
            raise DataError(f"roster entry for unknown port {e.port_id}")
        for t in range(ym_to_int(*e.from_ym), ym_to_int(*e.to_ym) + 1):
            roster_size[(e.port_id, t)] = roster_size.get((e.port_id, t), 0) + 1

    # Choice counts and catch sums.
    counts: dict[tuple[int, int], np.ndarray] = {}
    catch: dict[tuple[int, int], np.ndarray] = {}
    active: dict[tuple[int, int], int] = {}
    for rec in records:
        t = ym_to_int(rec.year, rec.month)
        key = (rec.port_id, t)
        if key not in roster_size:
            raise DataError(
                f"record for port {rec.port_id} at {rec.year}-{rec.month:02d} "
                "outside every roster window"
            )
        counts.setdefault(key, np.zeros(n))
        catch.setdefault(key, np.zeros(n))
        active[key] = active.get(key, 0) + 1
        if rec.patch_id != OUTSIDE_PATCH:
            counts[key][rec.patch_id - 1] += 1
            catch[key][rec.patch_id - 1] += rec.catch_tons

    row_acc, market_acc = [], []
    n_zero_share = n_bad_price = n_boundary_markets = 0
    for port in range(1, n_ports + 1):
        for t in range(t_lo, t_hi + 1):
            size = roster_size.get((port, t), 0)
            if size == 0:
                continue
            year, month = int_to_ym(t)
            key = (port, t)
            n_active = active.get(key, 0)
            if n_active > size:
                raise DataError(
                    f"market port {port} {year}-{month:02d}: {n_active} active vessels "
                    f"exceed roster size {size}"
                )
            c = counts.get(key, np.zeros(n))
            h = catch.get(key, np.zeros(n))
            price_key = (port, year, month)
            if price_key not in prices:
                raise DataError(f"no price inputs for port {port} at {year}-{month:02d}")
            pin = prices[price_key]
            denom = size + laplace * (n + 1)
            shares = (c + laplace) / denom
            outside = (size - c.sum() + laplace) / denom
            interior = outside > 0 and np.all(shares > 0)
            if outside <= 0:
                n_boundary_markets += 1
            for k in range(1, n + 1):
                p_hat = net_price(pin, graph.port_distances[port - 1, k - 1])
                zero_share = shares[k - 1] <= 0
                bad_price = p_hat <= 0
                n_zero_share += int(zero_share)
                n_bad_price += int(bad_price)
                row_acc.append(
                    (port, year, month, k, shares[k - 1], c[k - 1], h[k - 1],
                     p_hat, zero_share, bad_price)
                )
            market_acc.append((port, year, month, size, n_active, outside, interior))

    rows = pd.DataFrame(
        row_acc,
        columns=["port_id", "year", "month", "patch_id", "share", "effort",
                 "catch", "net_price", "zero_share", "nonpositive_price"],
    )
    markets = pd.DataFrame(
        market_acc,
        columns=["port_id", "year", "month", "roster", "n_active",
                 "outside_share", "interior"],
    )
    return MarketPanel(
        rows=rows,
        markets=markets,
        n_patches=n,
        diagnostics={
            "zero_share_rows": n_zero_share,
            "nonpositive_price_rows": n_bad_price,
            "boundary_markets": n_boundary_markets,
            "laplace": laplace,
        },
    )
