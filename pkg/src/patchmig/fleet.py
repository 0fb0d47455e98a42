"""Fleet behaviour: harvest technology, trip economics, patch choice.

Aggregate monthly harvest in a patch is Cobb-Douglas in fleet effort (trips),
local biomass, and optional positive covariates:

    H = gamma * E**alpha * x**beta * prod_j z_j**rho_j.

A vessel's net price for fishing a patch is the landed price minus the fuel
cost of the round trip amortized over the expected catch; it can be negative
for far patches, in which case the patch is economically infeasible and its
choice utility is -inf (the alternative keeps its slot so indexing over
patches stays stable). Patch choice follows a random-utility logit with the
outside option (staying in port) normalized to utility zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .errors import ConfigError, DataError

__all__ = [
    "CaptureTech",
    "PriceInputs",
    "UtilitySpec",
    "capture",
    "net_price",
    "choice_utilities",
    "logit_shares",
    "sample_choice",
]


def _freeze(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class CaptureTech:
    """Harvest function parameters. ``rho`` is empty unless covariates are used."""

    gamma: float
    alpha: float
    beta: float
    rho: NDArray = field(default=(), repr=False)

    def __init__(self, gamma, alpha, beta, rho=()):
        if gamma <= 0:
            raise ConfigError(f"gamma must be > 0, got {gamma}")
        if alpha <= 0 or beta <= 0:
            raise ConfigError("alpha and beta must be > 0")
        object.__setattr__(self, "gamma", float(gamma))
        object.__setattr__(self, "alpha", float(alpha))
        object.__setattr__(self, "beta", float(beta))
        object.__setattr__(self, "rho", _freeze(np.atleast_1d(rho) if len(np.atleast_1d(rho)) else np.empty(0)))

    def to_dict(self) -> dict:
        return {"gamma": self.gamma, "alpha": self.alpha, "beta": self.beta,
                "rho": self.rho.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "CaptureTech":
        return cls(d["gamma"], d["alpha"], d["beta"], d.get("rho", ()))


@dataclass(frozen=True)
class PriceInputs:
    """Per-port, per-month price block used to compute net prices."""

    landed_price: float
    fuel_price: float
    vessel_fuel_rate: float
    expected_catch_per_trip: float

    def __init__(self, landed_price, fuel_price, vessel_fuel_rate, expected_catch_per_trip):
        if landed_price <= 0 or fuel_price <= 0 or vessel_fuel_rate <= 0:
            raise ConfigError("landed price, fuel price and fuel rate must be > 0")
        if expected_catch_per_trip <= 0:
            raise ConfigError("expected catch per trip must be > 0")
        object.__setattr__(self, "landed_price", float(landed_price))
        object.__setattr__(self, "fuel_price", float(fuel_price))
        object.__setattr__(self, "vessel_fuel_rate", float(vessel_fuel_rate))
        object.__setattr__(self, "expected_catch_per_trip", float(expected_catch_per_trip))


@dataclass(frozen=True)
class UtilitySpec:
    """Random-utility coefficients: intercept, log net price, log covariates."""

    a0: float
    a1: float
    a2: NDArray = field(default=(), repr=False)

    def __init__(self, a0, a1, a2=()):
        object.__setattr__(self, "a0", float(a0))
        object.__setattr__(self, "a1", float(a1))
        object.__setattr__(self, "a2", _freeze(np.atleast_1d(a2) if len(np.atleast_1d(a2)) else np.empty(0)))

    def to_dict(self) -> dict:
        return {"a0": self.a0, "a1": self.a1, "a2": self.a2.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "UtilitySpec":
        return cls(d["a0"], d["a1"], d.get("a2", ()))


def capture(tech: CaptureTech, effort, biomass, covariates=None) -> float:
    """Aggregate harvest (tons) from ``effort`` trips on ``biomass`` tons.

    Returns exactly zero when effort or biomass is zero. Covariates must be
    strictly positive and match ``tech.rho`` in length.
    """
    effort = float(effort)
    biomass = float(biomass)
    if effort < 0 or biomass < 0:
        raise DataError("effort and biomass must be non-negative")
    z = np.atleast_1d(covariates).astype(float) if covariates is not None else np.empty(0)
    if z.shape[0] != tech.rho.shape[0]:
        raise DataError(
            f"got {z.shape[0]} covariates but technology has {tech.rho.shape[0]} elasticities"
        )
    if np.any(z <= 0):
        raise DataError("covariates must be strictly positive")
    if effort == 0.0 or biomass == 0.0:
        return 0.0
    h = tech.gamma * effort ** tech.alpha * biomass ** tech.beta
    if z.size:
        h *= float(np.prod(z ** tech.rho))
    return h


def net_price(prices: PriceInputs, distance) -> float:
    """Landed price net of per-ton fuel cost for a round trip of ``distance`` nmi.

    The cost side is (2 * distance * fuel_rate * fuel_price) spread over the
    expected catch of one trip. The result may be negative.
    """
    distance = float(distance)
    if distance <= 0:
        raise DataError(f"distance must be > 0, got {distance}")
    cost_per_ton = (
        2.0 * distance * prices.vessel_fuel_rate * prices.fuel_price
        / prices.expected_catch_per_trip
    )
    return prices.landed_price - cost_per_ton


def choice_utilities(spec: UtilitySpec, net_prices, xi, covariates=None) -> np.ndarray:
    """Deterministic utility of each patch; the outside option is always 0.

    A patch with non-positive net price, or with xi = -inf (depleted stock),
    gets utility -inf rather than an error so patch indexing is preserved.
    """
    p = np.atleast_1d(np.asarray(net_prices, dtype=float))
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if p.shape != xi.shape:
        raise DataError(f"net prices {p.shape} and xi {xi.shape} disagree")
    n = p.shape[0]
    if covariates is None:
        z = np.empty((spec.a2.shape[0], n))
        if spec.a2.shape[0]:
            raise DataError("utility spec expects covariates but none were given")
    else:
        z = np.atleast_2d(np.asarray(covariates, dtype=float))
        if z.shape != (spec.a2.shape[0], n):
            raise DataError(
                f"covariates must be ({spec.a2.shape[0]}, {n}), got {z.shape}"
            )
        if np.any(z <= 0):
            raise DataError("covariates must be strictly positive")
    u = np.full(n, -np.inf)
    ok = (p > 0) & np.isfinite(xi)
    with np.errstate(divide="ignore"):
        u[ok] = spec.a0 + spec.a1 * np.log(p[ok]) + xi[ok]
    if spec.a2.shape[0]:
        u[ok] += spec.a2 @ np.log(z[:, ok])
    return u


def logit_shares(utilities) -> tuple[np.ndarray, float]:
    """Choice probabilities (patch shares, outside share) for given utilities.

    s_k = exp(u_k) / (1 + sum_j exp(u_j)) with the outside option's exp(0)
    contributing the 1. Computed with max subtraction so large utilities do
    not overflow; -inf utilities yield exactly zero shares.
    """
    u = np.atleast_1d(np.asarray(utilities, dtype=float))
    if np.any(np.isnan(u)):
        raise DataError("utilities contain NaN")
    m = max(0.0, float(u.max())) if u.size else 0.0
    with np.errstate(over="raise"):
        e = np.exp(u - m)
        e0 = np.exp(-m)
    denom = e0 + e.sum()
    return e / denom, float(e0 / denom)


def sample_choice(utilities, rng) -> int:
    """One random-utility draw: 0 for the outside option, k for patch k.

    Adds independent Gumbel(0, 1) noise to every alternative (outside
    included) and returns the argmax. Deterministic given the generator state.
    """
    u = np.atleast_1d(np.asarray(utilities, dtype=float))
    if np.any(np.isnan(u)):
        raise DataError("utilities contain NaN")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    full = np.concatenate(([0.0], u))
    noisy = full + rng.gumbel(0.0, 1.0, size=full.shape[0])
    return int(np.argmax(noisy))
