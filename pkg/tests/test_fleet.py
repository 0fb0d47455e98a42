"""Harvest technology, net prices, and the patch-choice logit."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from patchmig import DataError, ConfigError
from patchmig.fleet import (
    CaptureTech,
    PriceInputs,
    UtilitySpec,
    capture,
    choice_utilities,
    logit_shares,
    net_price,
    sample_choice,
)

# ---------------------------------------------------------------------------
# capture
# ---------------------------------------------------------------------------

def test_capture_unit_elasticities():
    tech = CaptureTech(gamma=1.0, alpha=1.0, beta=1.0)
    assert_allclose(capture(tech, 2.0, 3.0), 6.0, rtol=0)


def test_capture_zero_effort_or_stock():
    tech = CaptureTech(gamma=5.0, alpha=1.2, beta=0.8)
    assert capture(tech, 0.0, 100.0) == 0.0
    assert capture(tech, 10.0, 0.0) == 0.0


def test_capture_published_2001_technology():
    # gamma = 125.352, alpha = 1.07982 at unit effort and stock.
    tech = CaptureTech(gamma=125.352, alpha=1.07982, beta=1.0)
    assert_allclose(capture(tech, 1.0, 1.0), 125.352, rtol=0)
    # alpha only scales effort: doubling effort multiplies by 2**alpha.
    assert_allclose(
        capture(tech, 2.0, 1.0) / capture(tech, 1.0, 1.0), 2.0 ** 1.07982, rtol=1e-12
    )


def test_capture_homogeneity_randomized():
    rng = np.random.default_rng(5)
    for _ in range(200):
        tech = CaptureTech(
            gamma=rng.uniform(0.01, 50),
            alpha=rng.uniform(0.2, 2.0),
            beta=rng.uniform(0.2, 2.0),
        )
        e, x, lam = rng.uniform(0.1, 100, size=3)
        assert_allclose(
            capture(tech, lam * e, x), lam ** tech.alpha * capture(tech, e, x),
            rtol=1e-10,
        )
        assert_allclose(
            capture(tech, e, lam * x), lam ** tech.beta * capture(tech, e, x),
            rtol=1e-10,
        )


def test_capture_covariates():
    tech = CaptureTech(gamma=2.0, alpha=1.0, beta=1.0, rho=[0.5])
    assert_allclose(capture(tech, 1.0, 1.0, covariates=[4.0]), 4.0, rtol=1e-14)
    with pytest.raises(DataError):
        capture(tech, 1.0, 1.0, covariates=[0.0])
    with pytest.raises(DataError):
        capture(tech, 1.0, 1.0)  # missing covariate
    with pytest.raises(DataError):
        capture(CaptureTech(1.0, 1.0, 1.0), -1.0, 1.0)


def test_capture_tech_validation():
    with pytest.raises(ConfigError):
        CaptureTech(gamma=0.0, alpha=1.0, beta=1.0)
    with pytest.raises(ConfigError):
        CaptureTech(gamma=1.0, alpha=-1.0, beta=1.0)


# ---------------------------------------------------------------------------
# net_price
# ---------------------------------------------------------------------------

def test_net_price_worked_case():
    p = PriceInputs(landed_price=100.0, fuel_price=1.0, vessel_fuel_rate=0.5,
                    expected_catch_per_trip=2.0)
    assert_allclose(net_price(p, 20.0), 90.0, rtol=0)


def test_net_price_breakeven_and_negative():
    p = PriceInputs(landed_price=10.0, fuel_price=1.0, vessel_fuel_rate=0.5,
                    expected_catch_per_trip=2.0)
    assert net_price(p, 20.0) == 0.0
    assert net_price(p, 30.0) < 0.0


def test_net_price_monotone_in_distance():
    p = PriceInputs(100.0, 2.0, 0.4, 3.0)
    d = np.linspace(1, 400, 40)
    vals = [net_price(p, di) for di in d]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    with pytest.raises(DataError):
        net_price(p, 0.0)


def test_price_inputs_validation():
    with pytest.raises(ConfigError):
        PriceInputs(100.0, 1.0, 0.5, 0.0)
    with pytest.raises(ConfigError):
        PriceInputs(-5.0, 1.0, 0.5, 1.0)


# ---------------------------------------------------------------------------
# choice_utilities
# ---------------------------------------------------------------------------

def test_utilities_published_2001_port1():
    # a0 = 4.8311, a1 = 0.1500; unit net price and xi = 0 leave the intercept.
    spec = UtilitySpec(a0=4.8311, a1=0.1500)
    u = choice_utilities(spec, [1.0], xi=[0.0])
    assert_allclose(u, [4.8311], rtol=0)


def test_utilities_infeasible_patches():
    spec = UtilitySpec(a0=1.0, a1=0.5)
    u = choice_utilities(spec, [10.0, -3.0, 0.0], xi=[0.0, 0.0, 0.0])
    assert np.isfinite(u[0])
    assert u[1] == -np.inf and u[2] == -np.inf
    # Depleted patch: xi = -inf.
    u = choice_utilities(spec, [10.0, 10.0], xi=[0.0, -np.inf])
    assert np.isfinite(u[0]) and u[1] == -np.inf


def test_utilities_with_covariates():
    spec = UtilitySpec(a0=0.0, a1=1.0, a2=[2.0])
    u = choice_utilities(spec, [np.e], xi=[0.0], covariates=[[np.e]])
    assert_allclose(u, [3.0], rtol=1e-14)
    with pytest.raises(DataError):
        choice_utilities(spec, [1.0], xi=[0.0])  # covariates required


def test_utilities_shape_mismatch():
    spec = UtilitySpec(a0=0.0, a1=1.0)
    with pytest.raises(DataError):
        choice_utilities(spec, [1.0, 2.0], xi=[0.0])


# ---------------------------------------------------------------------------
# logit_shares
# ---------------------------------------------------------------------------

def test_shares_symmetric_four_patches():
    s, s0 = logit_shares(np.zeros(4))
    assert_allclose(s, np.full(4, 0.2), rtol=0, atol=1e-15)
    assert_allclose(s0, 0.2, rtol=0, atol=1e-15)


def test_shares_closed_form_two_patches():
    s, s0 = logit_shares([np.log(2.0), np.log(3.0)])
    assert_allclose(s, [2.0 / 6.0, 3.0 / 6.0], rtol=1e-14)
    assert_allclose(s0, 1.0 / 6.0, rtol=1e-14)


def test_shares_with_infeasible_patch():
    s, s0 = logit_shares([-np.inf, 0.0])
    assert s[0] == 0.0
    assert_allclose([s[1], s0], [0.5, 0.5], rtol=0)


def test_shares_overflow_safe():
    s, s0 = logit_shares([1000.0, 0.0])
    assert np.isfinite(s).all() and np.isfinite(s0)
    assert_allclose(s[0], 1.0, rtol=0, atol=1e-12)


def test_shares_sum_to_one_randomized():
    rng = np.random.default_rng(19)
    for _ in range(500):
        n = int(rng.integers(1, 12))
        u = rng.normal(0, 5, size=n)
        u[rng.random(n) < 0.2] = -np.inf
        s, s0 = logit_shares(u)
        assert abs(s.sum() + s0 - 1.0) <= 1e-12
        assert np.all(s >= 0) and s0 > 0


def test_shares_invert_back_to_utilities():
    # log share differences against the outside recover utilities exactly.
    rng = np.random.default_rng(23)
    for _ in range(500):
        u = rng.normal(0, 3, size=int(rng.integers(1, 10)))
        s, s0 = logit_shares(u)
        assert_allclose(np.log(s) - np.log(s0), u, rtol=0, atol=1e-12)


def test_shares_reject_nan():
    with pytest.raises(DataError):
        logit_shares([np.nan, 0.0])


# ---------------------------------------------------------------------------
# sample_choice
# ---------------------------------------------------------------------------

def test_sample_choice_deterministic_given_seed():
    u = [0.5, -0.2, 1.1]
    picks_a = [sample_choice(u, np.random.default_rng(77)) for _ in range(10)]
    picks_b = [sample_choice(u, np.random.default_rng(77)) for _ in range(10)]
    assert picks_a == picks_b


def test_sample_choice_single_feasible_patch():
    rng = np.random.default_rng(4)
    # Outside crushed by a huge patch utility: patch 1 always wins.
    assert all(sample_choice([50.0, -np.inf], rng) == 1 for _ in range(200))


def test_sample_choice_frequencies_match_analytic_shares():
    # u = (0, 0): outside and both patches each have probability 1/3.
    rng = np.random.default_rng(123)
    n = 100_000
    counts = np.zeros(3)
    for _ in range(n):
        counts[sample_choice([0.0, 0.0], rng)] += 1
    freq = counts / n
    assert np.all(np.abs(freq - 1.0 / 3.0) < 0.01)


def test_sample_choice_rejects_nan():
    with pytest.raises(DataError):
        sample_choice([np.nan], np.random.default_rng(0))
