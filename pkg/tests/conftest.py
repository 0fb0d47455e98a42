"""Shared fixtures: one noiseless and one stochastic end-to-end pipeline run.

Both are session-scoped because the full pipeline takes about a second; the
bundles expose every intermediate product so individual tests can assert on
exactly the stage they cover.
"""

import pytest

from patchmig.cli import run_estimation
from patchmig.config import RunConfig
from patchmig.simulator import default_scenario, run, to_panel


def _bundle(noiseless: bool) -> dict:
    sc = default_scenario(seed=1)
    res = run(sc, noiseless=noiseless)
    panel = to_panel(res)
    totals = res.annual_totals()
    out = run_estimation(panel, sc.graph, RunConfig(), totals)
    return {
        "scenario": sc,
        "result": res,
        "panel": panel,
        "totals": totals,
        **out,
    }


@pytest.fixture(scope="session")
def noiseless_bundle() -> dict:
    """Full pipeline on analytic shares: the exact-recovery oracle."""
    return _bundle(noiseless=True)


@pytest.fixture(scope="session")
def desk_bundle() -> dict:
    """Full pipeline on sampled trips at seed 1: the desk-noise scenario."""
    return _bundle(noiseless=False)
