"""Forward simulation of the patch fishery and its observing fleet.

Each month every rostered vessel picks one patch (or stays in port) from a
logit over net-price and stock utilities, where the unobserved quality of a
patch is beta * ln(biomass). Total monthly harvest per patch comes from the
capture technology applied to the effort counts; the stock then grows,
disperses, and loses the harvest. All vessels observe beginning-of-month
biomass and harvest lands at month end.

The stochastic mode draws individual choices; the noiseless mode records the
exact choice probabilities as fractional effort, which gives estimators an
exact target to reproduce. Randomness is confined to choice draws: month t
uses its own substream spawned from the scenario seed, so trajectories are
reproducible regardless of how per-month work is scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import ConfigError
from .fleet import (
    CaptureTech,
    PriceInputs,
    UtilitySpec,
    capture,
    choice_utilities,
    logit_shares,
    net_price,
    sample_choice,
)
from .ingest import MarketPanel, RosterEntry, TripRecord, build_panel, int_to_ym, ym_to_int
from .patch_model import BioParams, DispersionMatrix, PatchGraph, StockState, step

__all__ = [
    "Scenario",
    "SimulationResult",
    "seasonal_price_series",
    "run",
    "to_panel",
    "default_scenario",
]


def seasonal_price_series(
    horizon_months: int,
    start_month: int,
    base: float,
    amplitude: float = 0.0,
    trend_per_month: float = 0.0,
) -> tuple[float, ...]:
    """Landed-price path base * (1 + amplitude * cos(month phase)) + trend * t.

    The seasonal term peaks in June and troughs in December. Every value must
    come out positive.
    """
    if base <= 0:
        raise ConfigError("base landed price must be positive")
    if abs(amplitude) >= 1:
        raise ConfigError("seasonal amplitude must stay below 1 in magnitude")
    out = []
    for t in range(horizon_months):
        month = (start_month - 1 + t) % 12 + 1
        seasonal = amplitude * math.cos(2 * math.pi * (month - 6) / 12)
        value = base * (1 + seasonal) + trend_per_month * t
        if value <= 0:
            raise ConfigError(f"landed price path reached {value} at month offset {t}")
        out.append(float(value))
    return tuple(out)


def _frozen(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Scenario:
    """Everything needed to reproduce one synthetic fishery.

    ``price_series`` gives the landed price per month offset (shared by all
    ports); fuel price is flat. ``covariate_series``, when present, has shape
    (horizon, n_covariates, n_patches) and must match the lengths of
    tech.rho and utility.a2.
    """

    graph: PatchGraph
    bio: BioParams
    dispersion: DispersionMatrix
    tech: CaptureTech
    utility: UtilitySpec
    vessels_per_port: tuple[int, ...]
    initial_stock: np.ndarray
    price_series: tuple[float, ...]
    fuel_price: float
    vessel_fuel_rate: float
    expected_catch_per_trip: float
    horizon_months: int
    covariate_series: np.ndarray | None = None
    start_year: int = 2001
    start_month: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.horizon_months < 2:
            raise ConfigError("horizon must be at least two months")
        if not 1 <= self.start_month <= 12:
            raise ConfigError(f"start_month must be 1..12, got {self.start_month}")
        if len(self.vessels_per_port) != self.graph.n_ports:
            raise ConfigError(
                f"{len(self.vessels_per_port)} vessel counts for "
                f"{self.graph.n_ports} ports"
            )
        if any(v < 0 for v in self.vessels_per_port):
            raise ConfigError("vessel counts must be >= 0")
        x0 = np.asarray(self.initial_stock, dtype=float)
        if x0.shape != (self.graph.n_patches,):
            raise ConfigError(
                f"initial stock has shape {x0.shape}, expected ({self.graph.n_patches},)"
            )
        if np.any(x0 <= 0) or np.any(x0 > self.bio.carrying_capacity):
            raise ConfigError("initial stock must lie in (0, K] per patch")
        if len(self.price_series) != self.horizon_months:
            raise ConfigError(
                f"price series has {len(self.price_series)} entries for "
                f"{self.horizon_months} months"
            )
        if any(p <= 0 for p in self.price_series):
            raise ConfigError("landed prices must be positive")
        if self.fuel_price <= 0 or self.vessel_fuel_rate <= 0 or self.expected_catch_per_trip <= 0:
            raise ConfigError("fuel price, fuel rate and expected catch must be positive")
        n_z = len(self.tech.rho)
        if len(self.utility.a2) != n_z:
            raise ConfigError("tech.rho and utility.a2 must have the same length")
        if self.covariate_series is None:
            if n_z:
                raise ConfigError("covariate coefficients given but no covariate series")
        else:
            z = np.asarray(self.covariate_series, dtype=float)
            want = (self.horizon_months, n_z, self.graph.n_patches)
            if n_z == 0 or z.shape != want:
                raise ConfigError(f"covariate series has shape {z.shape}, expected {want}")
            if np.any(z <= 0):
                raise ConfigError("covariates must be positive (they enter in logs)")
            object.__setattr__(self, "covariate_series", _frozen(z))
        object.__setattr__(self, "initial_stock", _frozen(x0))
        object.__setattr__(self, "vessels_per_port", tuple(int(v) for v in self.vessels_per_port))
        object.__setattr__(self, "price_series", tuple(float(p) for p in self.price_series))

    def months(self):
        """Yield (t, year, month) over the horizon."""
        t0 = ym_to_int(self.start_year, self.start_month)
        for t in range(self.horizon_months):
            year, month = int_to_ym(t0 + t)
            yield t, year, month

    def price_inputs(self, t: int) -> PriceInputs:
        return PriceInputs(
            landed_price=self.price_series[t],
            vessel_fuel_rate=self.vessel_fuel_rate,
            fuel_price=self.fuel_price,
            expected_catch_per_trip=self.expected_catch_per_trip,
        )

    def roster(self) -> list[RosterEntry]:
        last = int_to_ym(ym_to_int(self.start_year, self.start_month) + self.horizon_months - 1)
        out = []
        for j, count in enumerate(self.vessels_per_port, start=1):
            for v in range(1, count + 1):
                out.append(
                    RosterEntry(
                        vessel_id=f"P{j}-V{v:03d}",
                        port_id=j,
                        from_ym=(self.start_year, self.start_month),
                        to_ym=last,
                    )
                )
        return out

    def price_rows(self) -> dict:
        """(port, year, month) -> (landed, fuel), the prices.csv content."""
        out = {}
        for t, year, month in self.months():
            for j in range(1, self.graph.n_ports + 1):
                out[(j, year, month)] = (self.price_series[t], self.fuel_price)
        return out

    def price_inputs_table(self) -> dict:
        """(port, year, month) -> PriceInputs, for panel construction."""
        out = {}
        for t, year, month in self.months():
            pin = self.price_inputs(t)
            for j in range(1, self.graph.n_ports + 1):
                out[(j, year, month)] = pin
        return out


@dataclass
class SimulationResult:
    """Simulator output: vessel records, true states, and harvest bookkeeping.

    ``records`` is empty in noiseless mode, where ``shares`` instead holds
    the exact per-market choice probabilities (port, year, month, patch,
    share, effort, catch, net_price; effort fractional). ``truth`` holds
    start-of-month biomass per patch, ``harvest`` the tons removed per
    patch-month with the effort that removed them. ``terminated_early`` is
    set when every patch hit zero before the horizon ended.
    """

    scenario: Scenario
    records: list[TripRecord]
    shares: pd.DataFrame | None
    truth: pd.DataFrame
    harvest: pd.DataFrame
    final_state: StockState
    terminated_early: bool

    def annual_totals(self) -> dict[int, float]:
        """Whole-fishery biomass per year: sum over patches of the monthly mean."""
        per = self.truth.groupby(["year", "patch_id"])["biomass"].mean()
        return {int(y): float(v) for y, v in per.groupby("year").sum().items()}


def _month_rng(seed: int, t: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(t,)))


def run(scenario: Scenario, noiseless: bool = False) -> SimulationResult:
    """Simulate the scenario; choice draws are the only randomness."""
    sc = scenario
    n = sc.graph.n_patches
    state = StockState(x=sc.initial_stock, period=0)
    records: list[TripRecord] = []
    share_rows = []
    truth_rows = []
    harvest_rows = []
    terminated_early = False

    for t, year, month in sc.months():
        x = state.x
        for k in range(n):
            truth_rows.append((k + 1, year, month, float(x[k])))

        positive = x > 0
        xi = np.full(n, -np.inf)
        xi[positive] = sc.tech.beta * np.log(x[positive])

        z_t = None if sc.covariate_series is None else sc.covariate_series[t]
        pin = sc.price_inputs(t)
        port_effort = np.zeros((sc.graph.n_ports, n))
        rng = _month_rng(sc.seed, t)
        month_utilities = []
        month_picks = []

        for j in range(1, sc.graph.n_ports + 1):
            n_vessels = sc.vessels_per_port[j - 1]
            p_hat = np.array(
                [net_price(pin, sc.graph.port_distances[j - 1, k]) for k in range(n)]
            )
            u = choice_utilities(sc.utility, p_hat, xi, covariates=z_t)
            month_utilities.append((j, u, p_hat))
            if noiseless:
                s, _ = logit_shares(u)
                port_effort[j - 1] = s * n_vessels
            else:
                for v in range(1, n_vessels + 1):
                    pick = sample_choice(u, rng)
                    if pick > 0:
                        port_effort[j - 1, pick - 1] += 1
                    month_picks.append((f"P{j}-V{v:03d}", j, pick))
        effort = port_effort.sum(axis=0)

        h = np.array(
            [capture(sc.tech, effort[k], x[k], covariates=None if z_t is None else z_t[:, k])
             for k in range(n)]
        )
        for k in range(n):
            harvest_rows.append((k + 1, year, month, float(h[k]), float(effort[k])))

        if noiseless:
            for j, u, p_hat in month_utilities:
                s, _ = logit_shares(u)
                n_vessels = sc.vessels_per_port[j - 1]
                for k in range(n):
                    e_jk = s[k] * n_vessels
                    catch_jk = h[k] * e_jk / effort[k] if effort[k] > 0 else 0.0
                    share_rows.append(
                        (j, year, month, k + 1, float(s[k]), float(e_jk),
                         float(catch_jk), float(p_hat[k]))
                    )
        else:
            # Each trip lands an equal split of its patch's monthly harvest.
            for vessel_id, j, pick in month_picks:
                catch = float(h[pick - 1] / effort[pick - 1]) if pick > 0 else 0.0
                records.append(
                    TripRecord(
                        vessel_id=vessel_id,
                        port_id=j,
                        year=year,
                        month=month,
                        patch_id=pick,
                        catch_tons=catch,
                    )
                )

        state = step(state, sc.bio, sc.dispersion, h)
        if state.depleted.all():
            terminated_early = True
            break

    truth = pd.DataFrame(truth_rows, columns=["patch_id", "year", "month", "biomass"])
    harvest = pd.DataFrame(
        harvest_rows, columns=["patch_id", "year", "month", "harvest", "effort"]
    )
    shares = None
    if noiseless:
        shares = pd.DataFrame(
            share_rows,
            columns=["port_id", "year", "month", "patch_id", "share",
                     "effort", "catch", "net_price"],
        )
    return SimulationResult(
        scenario=sc,
        records=records,
        shares=shares,
        truth=truth,
        harvest=harvest,
        final_state=state,
        terminated_early=terminated_early,
    )


def to_panel(result: SimulationResult, laplace: float = 0.0) -> MarketPanel:
    """Market panel for estimation, from either simulation mode.

    Stochastic runs aggregate their trip records exactly as the CSV pipeline
    would. Noiseless runs inject the analytic shares directly, with
    fractional effort, so the panel is an exact function of the model.
    """
    sc = result.scenario
    if result.shares is None:
        return build_panel(
            result.records, sc.roster(), sc.price_inputs_table(), sc.graph, laplace=laplace
        )

    rows = result.shares.copy()
    rows["zero_share"] = rows["share"] <= 0
    rows["nonpositive_price"] = rows["net_price"] <= 0
    market_acc = []
    n_boundary = 0
    for (port, year, month), grp in rows.groupby(["port_id", "year", "month"], sort=True):
        size = sc.vessels_per_port[port - 1]
        outside = 1.0 - float(grp["share"].sum())
        interior = outside > 0 and bool((grp["share"] > 0).all())
        n_boundary += int(outside <= 0)
        market_acc.append(
            (port, year, month, size, float(grp["effort"].sum()), outside, interior)
        )
    markets = pd.DataFrame(
        market_acc,
        columns=["port_id", "year", "month", "roster", "n_active",
                 "outside_share", "interior"],
    )
    return MarketPanel(
        rows=rows,
        markets=markets,
        n_patches=sc.graph.n_patches,
        diagnostics={
            "zero_share_rows": int(rows["zero_share"].sum()),
            "nonpositive_price_rows": int(rows["nonpositive_price"].sum()),
            "boundary_markets": n_boundary,
            "laplace": 0.0,
            "noiseless": True,
        },
    )


def default_scenario(seed: int = 1, horizon_months: int = 48) -> Scenario:
    """Reference fishery: 8 patches on a 2x4 coastal grid, 4 ports, 120 vessels.

    Patch k sits at column (k-1)//2 and row (k-1)%2; adjacency joins grid
    neighbours. Port j faces column j-1, so distance grows with column
    offset and slightly with row. Parameters are synthetic, chosen so that
    net prices stay positive everywhere, the outside option keeps a healthy
    share, and harvest moves stocks without crashing them.

    Identification drives three design choices. Carrying capacities
    alternate small/large so neighbouring patches differ strongly; every
    patch starts at the same absolute stock level, so trajectories fan out
    at K-dependent speeds and neighbours stay informative about migration.
    A strong price season (±30%) swings fleet participation month to month,
    which is what pins down the effort elasticity. The stock exponent and
    the catch constant are calibrated so that a trip at typical effort and
    mid-range stock lands about the fleet's expected catch per trip.
    """
    n_patches, n_ports = 8, 4

    def col(k):
        return (k - 1) // 2

    def row(k):
        return (k - 1) % 2

    adjacency = []
    for a in range(1, n_patches + 1):
        for b in range(a + 1, n_patches + 1):
            if abs(col(a) - col(b)) + abs(row(a) - row(b)) == 1:
                adjacency.append((a, b))

    distances = np.array(
        [
            [18.0 + 25.0 * abs(col(k) - j) + 7.0 * row(k) for k in range(1, n_patches + 1)]
            for j in range(n_ports)
        ]
    )
    graph = PatchGraph(n_patches=n_patches, adjacency=adjacency, port_distances=distances)

    carrying = np.array([3400.0, 6900.0, 3800.0, 6500.0, 3600.0, 6700.0, 4000.0, 6300.0])
    bio = BioParams(r=0.25, carrying_capacity=carrying)

    flows = {
        (1, 2): 0.0514, (1, 3): 0.0298,
        (2, 1): 0.042, (2, 4): 0.0327,
        (3, 1): 0.0334, (3, 4): 0.0521,
        (3, 5): 0.0349, (4, 2): 0.0356,
        (4, 3): 0.0236, (4, 6): 0.0503,
        (5, 3): 0.0517, (5, 6): 0.0252,
        (5, 7): 0.0548, (6, 4): 0.0442,
        (6, 5): 0.0344, (6, 8): 0.0483,
        (7, 5): 0.0591, (7, 8): 0.0551,
        (8, 6): 0.0264, (8, 7): 0.0265,
    }
    dispersion = DispersionMatrix.from_flows(n_patches, flows, graph=graph)

    beta = 3.5
    x_mid = 0.7 * float(carrying.mean())
    catch_per_trip = 6.0
    # One trip at typical effort (13 trips on the patch) and mid-range stock
    # lands catch_per_trip tons: gamma * 13^(alpha-1) * x_mid^beta = 6.
    tech = CaptureTech(
        gamma=catch_per_trip / (13.0 ** 0.1 * x_mid ** beta), alpha=1.1, beta=beta
    )
    # Mean utility near 0.1 at a typical net price of 75 and mid-range stock
    # keeps the outside option at a healthy share in every market.
    utility = UtilitySpec(a0=0.1 - 1.5 * math.log(75.0) - beta * math.log(x_mid), a1=1.5)

    return Scenario(
        graph=graph,
        bio=bio,
        dispersion=dispersion,
        tech=tech,
        utility=utility,
        vessels_per_port=(30, 30, 30, 30),
        initial_stock=np.full(n_patches, 0.3 * float(carrying.mean())),
        price_series=seasonal_price_series(
            horizon_months, 1, base=100.0, amplitude=0.30, trend_per_month=0.0
        ),
        fuel_price=2.0,
        vessel_fuel_rate=1.0,
        expected_catch_per_trip=catch_per_trip,
        horizon_months=horizon_months,
        seed=seed,
    )
