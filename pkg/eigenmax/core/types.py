from __future__ import annotations

from enum import StrEnum, auto

from pydantic import BaseModel, ConfigDict, Field, computed_field


class OutputFormat(StrEnum):
    TEXT = auto()
    CSV = auto()
    JSON = auto()


class CommandName(StrEnum):
    ORACLE = "oracle"
    INDEX_VERIFY = "index-verify"
    SPECTRUM = "spectrum"
    OPTIMIZE = "optimize"
    HERSCH_CHECK = "hersch-check"


class Geometry(StrEnum):
    TORUS = auto()
    SPHERE = auto()
    FILE = auto()


class InitialDensity(StrEnum):
    UNIFORM = auto()
    PERTURBED = auto()
    BUMP = auto()


class StopReason(StrEnum):
    CERTIFIED = auto()
    STATIONARY = auto()
    STALLED = auto()
    BUDGET = auto()


class _Report(BaseModel):
    model_config = ConfigDict(frozen=True, ser_json_inf_nan="null")


class SpectrumReport(_Report):
    eigenvalues: list[float]
    residuals: list[float]
    clusters: list[list[int]]
    cluster_tol: float
    lambda_bar: float | None = None
    mass: float | None = None


class IndexReport(_Report):
    count: int
    tested_form: str
    cutoff_tol: float
    negative_eigenvalues: list[float] = Field(default_factory=list)


class PerEllCount(_Report):
    ell: int
    count: int
    multiplicity: int
    borderline: bool = False

    @computed_field
    @property
    def contribution(self) -> int:
        return self.count * self.multiplicity


class JacobiIndexReport(_Report):
    m: int
    k: int
    n: int
    alpha_minus: float
    per_ell: list[PerEllCount]
    axis_branch: bool = False

    @computed_field
    @property
    def total(self) -> int:
        return sum(entry.contribution for entry in self.per_ell)

    @property
    def borderline(self) -> bool:
        return any(entry.borderline for entry in self.per_ell)


class HistoryEntry(_Report):
    iteration: int
    lambda_bar: float
    certificate: float
    step: float = 0.0
    backtracks: int = 0


class EigenmapSummary(_Report):
    rank: int
    defect: float
    spherical: bool
    eigenvalue: float
    equation_residual: float
    harmonic_residual: float
    energy: float


class OptimizeRunReport(_Report):
    k: int
    cap: float
    mesh_cells: int
    mesh_vertices: int
    total_volume: float
    history: list[HistoryEntry]
    final_lambda_bar: float
    certificate: float
    stop_reason: StopReason
    direction_norm: float
    cluster: list[int]
    eigenmap: EigenmapSummary
    stability_index: int
    energy_density_index: int
    converged: bool


class OptimizeReport(_Report):
    version: str
    seed: int
    runs: list[OptimizeRunReport]

    @computed_field
    @property
    def converged(self) -> bool:
        return all(run.converged for run in self.runs)


class HerschReport(_Report):
    bound: float
    max_coordinate_bound: float
    lambda_bar: float
    reference: float
    center: list[float]
    center_residual: float


class OracleRow(_Report):
    m: int
    k: int
    n: int | None = None
    sigma_m: float | None = None
    energy: float | None = None
    alpha_minus: float | None = None
    per_ell: str = ""
    total_index: str = ""
    note: str = ""


class IndexVerifyRow(_Report):
    m: int
    k: int
    ell: int
    multiplicity: int
    analytic: int
    numeric: int

    @computed_field
    @property
    def agree(self) -> bool:
        return self.analytic == self.numeric
