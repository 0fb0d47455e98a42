"""patchmig: spatial fishery simulator and two-stage migration estimator.

Simulates vessel-level trip data from a patch-structured bioeconomic model and
recovers the biological parameters (growth, carrying capacities, inter-patch
migration rates) from the aggregate behaviour of the fleet, in two stages:
share inversion with joint demand/capture estimation, then per-patch stock
transition regressions.
"""

from .config import RunConfig
from .errors import ConfigError, DataError, NumericalError, PatchmigError
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
from .ingest import MarketPanel, RosterEntry, TripRecord, build_panel
from .patch_model import (
    BioParams,
    DispersionMatrix,
    PatchGraph,
    RowSumConvention,
    StockState,
    logistic_growth,
    net_migration,
    step,
)
from .simulator import Scenario, SimulationResult, default_scenario, run, to_panel
from .stage1 import (
    BiomassPanel,
    Stage1Fit,
    Stage1Spec,
    capture_technology,
    fit_stage1,
    invert_shares,
    recover_biomass,
)
from .stage2 import (
    AuxFit,
    Stage2Spec,
    StructuralEstimates,
    build_migration_rows,
    fit_aux_total,
    fit_stage2,
    harvest_from_panel,
    recover_structure,
    whole_fishery_series,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "RunConfig",
    "ConfigError",
    "DataError",
    "NumericalError",
    "PatchmigError",
    "CaptureTech",
    "PriceInputs",
    "UtilitySpec",
    "capture",
    "choice_utilities",
    "logit_shares",
    "net_price",
    "sample_choice",
    "MarketPanel",
    "RosterEntry",
    "TripRecord",
    "build_panel",
    "BioParams",
    "DispersionMatrix",
    "PatchGraph",
    "RowSumConvention",
    "StockState",
    "logistic_growth",
    "net_migration",
    "step",
    "Scenario",
    "SimulationResult",
    "default_scenario",
    "run",
    "to_panel",
    "BiomassPanel",
    "Stage1Fit",
    "Stage1Spec",
    "capture_technology",
    "fit_stage1",
    "invert_shares",
    "recover_biomass",
    "AuxFit",
    "Stage2Spec",
    "StructuralEstimates",
    "build_migration_rows",
    "fit_aux_total",
    "fit_stage2",
    "harvest_from_panel",
    "recover_structure",
    "whole_fishery_series",
]
