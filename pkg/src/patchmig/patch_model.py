"""Patch-structured stock dynamics: logistic growth, dispersal, monthly stepping.

The fishery is a set of patches on an adjacency graph. Each patch k carries a
biomass x^k (tons) that grows logistically toward its own capacity K_k and
exchanges mass with adjacent patches through a dispersion matrix D.

Orientation convention
----------------------
Dispersal here is source-stock driven. D is stored with rows indexed by the
source patch and columns by the destination: D[h, k] is the monthly rate at
which stock flows from patch h into patch k, so net migration into patch k is

    MN^k = d_kk * x^k + sum_{h != k} D[h, k] * x^h,

the matrix-vector product ``D.T @ x``. Some presentations of this model write
the off-diagonal sum with the destination stock x^k inside it; that form does
not conserve mass and we do not use it. Under the ``conservative_zero``
convention every row of D sums to zero (all stock leaving a source patch
arrives somewhere) and diagonal entries are non-positive, which makes total
net migration vanish identically. The ``paper_one`` convention (rows sum to
one) is retained for comparability and ``unconstrained`` disables the check.

Units are tons and months throughout.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .errors import ConfigError, DataError

__all__ = [
    "RowSumConvention",
    "PatchGraph",
    "BioParams",
    "DispersionMatrix",
    "StockState",
    "logistic_growth",
    "net_migration",
    "step",
]

# Tolerance for the row-sum conventions checked at construction.
ROW_SUM_TOL = 1e-12


class RowSumConvention(enum.Enum):
    """How the rows of a dispersion matrix are constrained."""

    CONSERVATIVE_ZERO = "conservative_zero"
    PAPER_ONE = "paper_one"
    UNCONSTRAINED = "unconstrained"


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class PatchGraph:
    """Patch adjacency plus port-to-patch distances.

    Parameters
    ----------
    n_patches : int
        Number of patches, labelled 1..n_patches.
    adjacency : sequence of (int, int)
        Unordered adjacent patch pairs, 1-based. Symmetry is implied; each
        pair may be given in either order but only once.
    port_distances : array (n_ports, n_patches)
        Steaming distance (nautical miles) from each port to each patch.
    """

    n_patches: int
    adjacency: frozenset = field(repr=False)
    port_distances: NDArray = field(repr=False)

    def __init__(self, n_patches, adjacency, port_distances):
        if n_patches < 1:
            raise ConfigError("n_patches must be >= 1")
        pairs = set()
        for h, k in adjacency:
            h, k = int(h), int(k)
            if h == k:
                raise ConfigError(f"patch {h} cannot be adjacent to itself")
            if not (1 <= h <= n_patches and 1 <= k <= n_patches):
                raise ConfigError(f"adjacent pair ({h}, {k}) outside 1..{n_patches}")
            pairs.add((min(h, k), max(h, k)))
        dist = _freeze(port_distances)
        if dist.ndim != 2 or dist.shape[1] != n_patches:
            raise ConfigError(
                f"port_distances must be (n_ports, {n_patches}), got {dist.shape}"
            )
        if not np.all(dist > 0):
            raise ConfigError("port distances must be strictly positive")
        object.__setattr__(self, "n_patches", int(n_patches))
        object.__setattr__(self, "adjacency", frozenset(pairs))
        object.__setattr__(self, "port_distances", dist)

    @property
    def n_ports(self) -> int:
        return self.port_distances.shape[0]

    def neighbors(self, k: int) -> list[int]:
        """Patches adjacent to patch k (1-based), ascending."""
        if not 1 <= k <= self.n_patches:
            raise DataError(f"patch index {k} outside 1..{self.n_patches}")
        out = set()
        for a, b in self.adjacency:
            if a == k:
                out.add(b)
            elif b == k:
                out.add(a)
        return sorted(out)

    def is_adjacent(self, h: int, k: int) -> bool:
        return (min(h, k), max(h, k)) in self.adjacency

    def to_dict(self) -> dict:
        return {
            "n_patches": self.n_patches,
            "adjacency": sorted(list(p) for p in self.adjacency),
            "port_distances": self.port_distances.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PatchGraph":
        return cls(d["n_patches"], d["adjacency"], d["port_distances"])


@dataclass(frozen=True)
class BioParams:
    """Biological parameters: intrinsic growth rate and per-patch capacities."""

    r: float
    carrying_capacity: NDArray = field(repr=False)

    def __init__(self, r, carrying_capacity):
        k = _freeze(carrying_capacity)
        if r < 0:
            raise ConfigError(f"intrinsic growth rate must be >= 0, got {r}")
        if k.ndim != 1 or not np.all(k > 0):
            raise ConfigError("carrying capacities must be a 1-d vector of positives")
        object.__setattr__(self, "r", float(r))
        object.__setattr__(self, "carrying_capacity", k)

    @property
    def n_patches(self) -> int:
        return self.carrying_capacity.shape[0]

    def to_dict(self) -> dict:
        return {"r": self.r, "carrying_capacity": self.carrying_capacity.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "BioParams":
        return cls(d["r"], d["carrying_capacity"])


@dataclass(frozen=True)
class DispersionMatrix:
    """Monthly dispersal rates between patches.

    ``rates[h-1, k-1]`` is the flow rate from patch h into patch k for h != k;
    the diagonal holds each patch's own net outflow rate. Off-diagonal entries
    must be zero wherever the graph has no edge. The row-sum convention is
    validated at construction, see the module docstring.
    """

    rates: NDArray = field(repr=False)
    convention: RowSumConvention

    def __init__(self, rates, convention=RowSumConvention.CONSERVATIVE_ZERO, graph=None):
        if isinstance(convention, str):
            convention = RowSumConvention(convention)
        d = _freeze(rates)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ConfigError(f"dispersion matrix must be square, got {d.shape}")
        n = d.shape[0]
        if graph is not None:
            if graph.n_patches != n:
                raise ConfigError(
                    f"dispersion matrix is {n}x{n} but graph has {graph.n_patches} patches"
                )
            for h in range(1, n + 1):
                for k in range(1, n + 1):
                    if h != k and d[h - 1, k - 1] != 0.0 and not graph.is_adjacent(h, k):
                        raise ConfigError(
                            f"nonzero dispersal rate between non-adjacent patches ({h}, {k})"
                        )
        row_sums = d.sum(axis=1)
        if convention is RowSumConvention.CONSERVATIVE_ZERO:
            bad = np.abs(row_sums) > ROW_SUM_TOL
            if np.any(bad):
                raise ConfigError(
                    f"conservative_zero rows must sum to 0, offending rows {np.where(bad)[0] + 1}"
                )
            if np.any(np.diag(d) > 0):
                raise ConfigError("conservative_zero requires non-positive diagonal entries")
        elif convention is RowSumConvention.PAPER_ONE:
            bad = np.abs(row_sums - 1.0) > ROW_SUM_TOL
            if np.any(bad):
                raise ConfigError(
                    f"paper_one rows must sum to 1, offending rows {np.where(bad)[0] + 1}"
                )
        object.__setattr__(self, "rates", d)
        object.__setattr__(self, "convention", convention)

    @property
    def n_patches(self) -> int:
        return self.rates.shape[0]

    @classmethod
    def from_flows(cls, n_patches, flows, graph=None) -> "DispersionMatrix":
        """Build a conservative matrix from directed flow rates.

        ``flows`` maps (source, destination) 1-based pairs to non-negative
        rates; each diagonal entry is set to minus the total outflow of its
        row so the conservative_zero convention holds by construction.
        """
        d = np.zeros((n_patches, n_patches))
        for (h, k), rate in flows.items():
            if h == k:
                raise ConfigError("flows must be between distinct patches")
            if rate < 0:
                raise ConfigError(f"flow rate for ({h}, {k}) must be >= 0, got {rate}")
            d[h - 1, k - 1] = rate
        np.fill_diagonal(d, 0.0)
        np.fill_diagonal(d, -d.sum(axis=1))
        return cls(d, RowSumConvention.CONSERVATIVE_ZERO, graph=graph)

    def to_dict(self) -> dict:
        return {"convention": self.convention.value, "rates": self.rates.tolist()}

    @classmethod
    def from_dict(cls, d: dict, graph=None) -> "DispersionMatrix":
        return cls(d["rates"], d["convention"], graph=graph)


@dataclass(frozen=True)
class StockState:
    """Biomass vector at the start of a period, plus depletion bookkeeping."""

    x: NDArray = field(repr=False)
    period: int = 0
    depleted: NDArray = field(default=None, repr=False)

    def __init__(self, x, period=0, depleted=None):
        xv = _freeze(x)
        if xv.ndim != 1:
            raise ConfigError("stock must be a 1-d vector")
        if np.any(xv < 0):
            raise ConfigError("stock must be non-negative")
        if depleted is None:
            depleted = np.zeros(xv.shape[0], dtype=bool)
        dep = np.array(depleted, dtype=bool)
        dep.flags.writeable = False
        object.__setattr__(self, "x", xv)
        object.__setattr__(self, "period", int(period))
        object.__setattr__(self, "depleted", dep)

    @property
    def n_patches(self) -> int:
        return self.x.shape[0]


def logistic_growth(x, r, carrying_capacity):
    """Surplus production f = r * x * (1 - x / K), elementwise.

    Zero at x = 0 and x = K; negative above K. Accepts scalars or vectors.
    """
    x = np.asarray(x, dtype=float)
    k = np.asarray(carrying_capacity, dtype=float)
    if np.any(k <= 0):
        raise ConfigError("carrying capacity must be positive")
    if np.any(x < 0):
        raise DataError("stock must be non-negative")
    if r < 0:
        raise ConfigError("growth rate must be >= 0")
    return r * x * (1.0 - x / k)


def net_migration(dispersion: DispersionMatrix, x) -> np.ndarray:
    """Net migration vector MN = D.T @ x (see module docstring for orientation)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (dispersion.n_patches,):
        raise DataError(
            f"stock vector has shape {x.shape}, expected ({dispersion.n_patches},)"
        )
    return dispersion.rates.T @ x


def step(state: StockState, bio: BioParams, dispersion: DispersionMatrix, harvest) -> StockState:
    """Advance the stock one month: x' = x + f(x) - H + MN, floored at zero.

    A patch whose pre-floor stock would be negative is set to exactly zero and
    flagged as depleted; flags are sticky across periods.
    """
    h = np.asarray(harvest, dtype=float)
    n = state.n_patches
    if bio.n_patches != n or dispersion.n_patches != n or h.shape != (n,):
        raise DataError(
            "state, bio, dispersion and harvest disagree on the number of patches"
        )
    if np.any(h < 0):
        raise DataError("harvest must be non-negative")
    growth = logistic_growth(state.x, bio.r, bio.carrying_capacity)
    x_new = state.x + growth - h + net_migration(dispersion, state.x)
    hit_floor = x_new < 0
    x_new = np.where(hit_floor, 0.0, x_new)
    return StockState(
        x=x_new,
        period=state.period + 1,
        depleted=state.depleted | hit_floor,
    )
