"""Run configuration: one YAML file drives every command.

The file is a key-value tree with one section per concern (scenario,
estimation, fleet, paths, montecarlo) plus the patch adjacency list used to
build the migration design. Any key may be omitted and takes its default;
unknown keys are rejected so typos cannot silently fall back to defaults.
Command-line flags override file values field by field.

Round trip guarantee: ``RunConfig.load(p)`` after ``cfg.save(p)`` returns a
config equal to ``cfg``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import yaml

from .errors import ConfigError

__all__ = [
    "ScenarioConfig",
    "EstimationConfig",
    "FleetConfig",
    "PathsConfig",
    "MonteCarloConfig",
    "RunConfig",
    "DEFAULT_ADJACENCY",
]

CI_LEVELS = (0.80, 0.90, 0.95)
ROW_SUM_CONVENTIONS = ("conservative_zero", "paper_one")
CALIBRATION_MODES = ("truth", "totals", "none")

# 2x4 coastal grid: patch k at column (k-1)//2, row (k-1)%2; edges join
# grid neighbours. Must match the reference scenario's graph.
DEFAULT_ADJACENCY = (
    (1, 2), (1, 3), (2, 4), (3, 4), (3, 5), (4, 6), (5, 6), (5, 7), (6, 8), (7, 8),
)


def _require_keys(section: str, d: dict, allowed: set[str]) -> None:
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(
            f"unknown keys in config section {section!r}: {unknown}; "
            f"allowed keys are {sorted(allowed)}"
        )


def _from_section(cls, section: str, d: dict | None):
    d = {} if d is None else dict(d)
    names = {f.name for f in dataclasses.fields(cls)}
    _require_keys(section, d, names)
    return cls(**d)


@dataclass(frozen=True)
class ScenarioConfig:
    """Simulation inputs: which seed and how many months of the reference
    fishery to generate."""

    seed: int = 1
    horizon_months: int = 48

    def __post_init__(self):
        if int(self.horizon_months) < 2:
            raise ConfigError("scenario.horizon_months must be at least 2")
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "horizon_months", int(self.horizon_months))


@dataclass(frozen=True)
class EstimationConfig:
    """Estimation switches shared by the estimate and montecarlo commands.

    ``beta`` fixes the stock exponent of the capture function; left unset it
    is calibrated from annual biomass totals, so ``calibration`` must then
    provide them ("truth" derives totals from truth.csv, "totals" reads
    totals.csv, "none" requires ``beta``). ``row_sum_convention`` selects the
    representation of the reported migration diagonal: net outflow rates
    under "conservative_zero", retention shares (net outflow + 1) under
    "paper_one". Off-diagonal rates are identical either way.
    """

    ci_level: float = 0.80
    paper_mapping: bool = False
    include_harvest: bool = True
    row_sum_convention: str = "conservative_zero"
    capture_exact: bool = True
    pool_elasticity: bool = True
    iterate: bool = False
    laplace: float = 0.0
    beta: float | None = None
    calibration: str = "truth"
    reference_cell: tuple[int, int, int] | None = None

    def __post_init__(self):
        if not any(abs(self.ci_level - lv) < 1e-12 for lv in CI_LEVELS):
            raise ConfigError(
                f"estimation.ci_level must be one of {CI_LEVELS}, got {self.ci_level}"
            )
        if self.row_sum_convention not in ROW_SUM_CONVENTIONS:
            raise ConfigError(
                f"estimation.row_sum_convention must be one of {ROW_SUM_CONVENTIONS}, "
                f"got {self.row_sum_convention!r}"
            )
        if self.calibration not in CALIBRATION_MODES:
            raise ConfigError(
                f"estimation.calibration must be one of {CALIBRATION_MODES}, "
                f"got {self.calibration!r}"
            )
        if self.beta is not None and float(self.beta) <= 0:
            raise ConfigError(f"estimation.beta must be positive, got {self.beta}")
        if self.calibration == "none" and self.beta is None:
            raise ConfigError(
                "estimation.calibration 'none' leaves the stock exponent "
                "uncalibrated; set estimation.beta"
            )
        if self.laplace < 0:
            raise ConfigError("estimation.laplace must be >= 0")
        if self.reference_cell is not None:
            cell = tuple(int(v) for v in self.reference_cell)
            if len(cell) != 3:
                raise ConfigError(
                    "estimation.reference_cell must be [year, month, patch]"
                )
            object.__setattr__(self, "reference_cell", cell)
        object.__setattr__(self, "ci_level", float(self.ci_level))
        object.__setattr__(
            self, "beta", None if self.beta is None else float(self.beta)
        )
        object.__setattr__(self, "laplace", float(self.laplace))


@dataclass(frozen=True)
class FleetConfig:
    """Cost-side constants needed to turn landed prices into net prices."""

    vessel_fuel_rate: float = 1.0
    expected_catch_per_trip: float = 6.0

    def __post_init__(self):
        if self.vessel_fuel_rate <= 0 or self.expected_catch_per_trip <= 0:
            raise ConfigError("fleet constants must be positive")
        object.__setattr__(self, "vessel_fuel_rate", float(self.vessel_fuel_rate))
        object.__setattr__(
            self, "expected_catch_per_trip", float(self.expected_catch_per_trip)
        )


@dataclass(frozen=True)
class PathsConfig:
    """Where inputs live and outputs go.

    Unset file paths resolve to the conventional name inside ``out_dir``
    (trips.csv, roster.csv, prices.csv, distances.csv, truth.csv,
    totals.csv).
    """

    out_dir: str = "."
    trips: str | None = None
    roster: str | None = None
    prices: str | None = None
    distances: str | None = None
    truth: str | None = None
    totals: str | None = None

    def resolve(self, name: str) -> str:
        explicit = getattr(self, name)
        if explicit is not None:
            return explicit
        return f"{self.out_dir.rstrip('/')}/{name}.csv"


@dataclass(frozen=True)
class MonteCarloConfig:
    """Replication settings for the calibration command."""

    n_reps: int = 100
    workers: int | None = None
    noiseless: bool = False

    def __post_init__(self):
        if int(self.n_reps) < 2:
            raise ConfigError("montecarlo.n_reps must be at least 2")
        if self.workers is not None and int(self.workers) < 1:
            raise ConfigError("montecarlo.workers must be >= 1")
        object.__setattr__(self, "n_reps", int(self.n_reps))
        object.__setattr__(
            self, "workers", None if self.workers is None else int(self.workers)
        )


@dataclass(frozen=True)
class RunConfig:
    """Everything a command needs, in one auditable object."""

    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    estimation: EstimationConfig = field(default_factory=EstimationConfig)
    fleet: FleetConfig = field(default_factory=FleetConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)
    montecarlo: MonteCarloConfig = field(default_factory=MonteCarloConfig)
    adjacency: tuple[tuple[int, int], ...] = DEFAULT_ADJACENCY

    def __post_init__(self):
        pairs = []
        for pair in self.adjacency:
            t = tuple(int(v) for v in pair)
            if len(t) != 2 or t[0] == t[1] or min(t) < 1:
                raise ConfigError(f"adjacency entries must be distinct 1-based pairs, got {pair}")
            pairs.append(t)
        if len(set(frozenset(p) for p in pairs)) != len(pairs):
            raise ConfigError("adjacency contains a duplicate edge")
        object.__setattr__(self, "adjacency", tuple(pairs))

    # -- serialization ------------------------------------------------------

    @classmethod
    def from_dict(cls, d: dict | None) -> "RunConfig":
        d = {} if d is None else dict(d)
        _require_keys(
            "<root>", d,
            {"scenario", "estimation", "fleet", "paths", "montecarlo", "adjacency"},
        )
        est = dict(d.get("estimation") or {})
        if est.get("reference_cell") is not None:
            est["reference_cell"] = tuple(int(v) for v in est["reference_cell"])
        return cls(
            scenario=_from_section(ScenarioConfig, "scenario", d.get("scenario")),
            estimation=_from_section(EstimationConfig, "estimation", est),
            fleet=_from_section(FleetConfig, "fleet", d.get("fleet")),
            paths=_from_section(PathsConfig, "paths", d.get("paths")),
            montecarlo=_from_section(MonteCarloConfig, "montecarlo", d.get("montecarlo")),
            adjacency=tuple(tuple(p) for p in d.get("adjacency", DEFAULT_ADJACENCY)),
        )

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["adjacency"] = [list(p) for p in self.adjacency]
        if self.estimation.reference_cell is not None:
            d["estimation"]["reference_cell"] = list(self.estimation.reference_cell)
        return d

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                raw = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot open config file {path}: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"config file {path} is not valid YAML: {exc}") from None
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise ConfigError(f"config file {path} must hold a mapping at the top level")
        return cls.from_dict(raw)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=True, default_flow_style=False)

    def override(self, **sections) -> "RunConfig":
        """New config with per-section field overrides.

        ``sections`` maps section name to a dict of field overrides; None
        values mean "not given" and are skipped, so CLI flags can be applied
        wholesale.
        """
        updates = {}
        for section, fields in sections.items():
            if section == "adjacency":
                if fields is not None:
                    updates["adjacency"] = tuple(tuple(p) for p in fields)
                continue
            if not hasattr(self, section):
                raise ConfigError(f"unknown config section {section!r}")
            given = {k: v for k, v in fields.items() if v is not None}
            if given:
                updates[section] = dataclasses.replace(getattr(self, section), **given)
        return dataclasses.replace(self, **updates) if updates else self
