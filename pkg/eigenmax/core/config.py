from __future__ import annotations

import os
from pathlib import Path
from typing import Any

from dotenv import dotenv_values
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator
from pydantic.fields import FieldInfo
from pydantic_settings import (
    BaseSettings,
    PydanticBaseSettingsSource,
    SettingsConfigDict,
)

from eigenmax.core.exceptions import ConfigError
from eigenmax.core.types import CommandName, Geometry, InitialDensity, OutputFormat

OUTPUT_DIR_ENV = "EIGENMAX_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = Path("eigenmax-out")


def unflatten_keys(flat: dict[str, str | None]) -> dict[str, Any]:
    nested: dict[str, Any] = {}
    for key, value in flat.items():
        if value is None:
            continue
        *groups, leaf = key.strip().split(".")
        target = nested
        for group in groups:
            target = target.setdefault(group, {})
        target[leaf] = value
    return nested


class KeyValueFileSettingsSource(PydanticBaseSettingsSource):
    """Run file of `key=value` lines; dotted keys address nested groups."""

    def __init__(self, settings_cls: type[BaseSettings], path: Path | None) -> None:
        super().__init__(settings_cls)
        self.path = path
        self.file_data = self._load()

    def _load(self) -> dict[str, Any]:
        if self.path is None:
            return {}
        if not self.path.is_file():
            raise ConfigError(f"Run file not found: {self.path}")
        try:
            return unflatten_keys(dotenv_values(self.path))
        except OSError as e:
            raise ConfigError(f"Cannot read {self.path}: {e}") from e

    def get_field_value(
        self, field: FieldInfo, field_name: str
    ) -> tuple[Any, str, bool]:
        return self.file_data.get(field_name), field_name, False

    def __call__(self) -> dict[str, Any]:
        return self.file_data


class OutputDirEnvSource(PydanticBaseSettingsSource):
    def get_field_value(
        self, field: FieldInfo, field_name: str
    ) -> tuple[Any, str, bool]:
        if field_name == "output_dir":
            return os.getenv(OUTPUT_DIR_ENV), field_name, False
        return None, field_name, False

    def __call__(self) -> dict[str, Any]:
        if value := os.getenv(OUTPUT_DIR_ENV):
            return {"output_dir": value}
        return {}


class MeshConfig(BaseModel):
    geometry: Geometry = Geometry.SPHERE
    dim: int = Field(default=2, ge=2, le=3)
    n_per_axis: int = Field(default=16, ge=3)
    side: float = Field(default=6.283185307179586, gt=0)
    sides: tuple[float, ...] | None = None
    level: int = Field(default=3, ge=0)
    max_cells: int = Field(default=2_000_000, gt=0)
    mesh_path: Path | None = None

    @field_validator("sides", mode="before")
    @classmethod
    def _split_sides(cls, v: Any) -> Any:
        if isinstance(v, str):
            return tuple(float(x) for x in v.replace(",", " ").split()) or None
        return v

    @model_validator(mode="after")
    def _check_file(self) -> MeshConfig:
        if self.geometry == Geometry.FILE and self.mesh_path is None:
            raise ValueError("geometry=file requires mesh_path")
        return self


class SolverConfig(BaseModel):
    sigma_rel: float = Field(default=1e-2, gt=0)
    solver_tol: float = Field(default=1e-12, gt=0)
    dense_limit: int = Field(default=600, ge=0)
    cluster_tol: float = Field(default=1e-6, gt=0)
    cluster_padding: int = Field(default=6, ge=1)
    mass_floor: float = Field(default=1e-12, gt=0)
    index_cutoff_tol: float = Field(default=1e-8, gt=0)


class AscentConfig(BaseModel):
    max_iterations: int = Field(default=200, ge=0)
    step_size: float = Field(default=0.5, gt=0)
    step_growth: float = Field(default=1.5, ge=1)
    step_max: float = Field(default=4.0, gt=0)
    max_backtracks: int = Field(default=12, ge=0)
    backtracking_slack: float = Field(default=1e-10, gt=0)
    ascent_cluster_tol: float = Field(default=1e-3, gt=0)
    direction_tol: float = Field(default=1e-9, gt=0)
    tol_cert: float = Field(default=1e-3, gt=0)
    tol_s: float = Field(default=2e-2, gt=0, lt=1)
    defect_threshold: float = Field(default=1e-2, gt=0)
    hull_iterations: int = Field(default=500, ge=1)
    initial_density: InitialDensity = InitialDensity.UNIFORM
    perturbation: float = Field(default=0.3, ge=0, lt=1)


class OracleConfig(BaseModel):
    m_min: int = Field(default=3, ge=1)
    m_max: int = Field(default=12, ge=1)
    k_min: int = Field(default=0, ge=0)
    k_max: int = Field(default=9, ge=0)


class IndexVerifyConfig(BaseModel):
    m_max: int = Field(default=10, ge=1)
    m_max_limit: int = Field(default=10, ge=7)
    grid_nodes: int = Field(default=2000, ge=8)
    grading: float = Field(default=2.0, ge=1)
    cutoff_tol: float = Field(default=1e-12, gt=0)

    @model_validator(mode="after")
    def _check_limit(self) -> IndexVerifyConfig:
        if self.m_max > self.m_max_limit:
            raise ValueError(
                f"m_max={self.m_max} exceeds the configured limit {self.m_max_limit}"
            )
        return self


class RunConfig(BaseSettings):
    command: CommandName = CommandName.ORACLE
    k: int = Field(default=1, ge=1)
    cap: float = Field(default=100.0, gt=0)
    caps: list[float] = Field(default_factory=list)
    seed: int = 0
    threads: int = Field(default=1, ge=1)
    output_dir: Path = DEFAULT_OUTPUT_DIR
    output_format: OutputFormat = OutputFormat.TEXT
    export_matrices: bool = False
    config_file: Path | None = Field(default=None, exclude=True)

    mesh: MeshConfig = Field(default_factory=MeshConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    ascent: AscentConfig = Field(default_factory=AscentConfig)
    oracle: OracleConfig = Field(default_factory=OracleConfig)
    index_verify: IndexVerifyConfig = Field(default_factory=IndexVerifyConfig)

    model_config = SettingsConfigDict(extra="forbid", case_sensitive=False)

    @field_validator("caps", mode="before")
    @classmethod
    def _split_caps(cls, v: Any) -> Any:
        if isinstance(v, str):
            return [float(x) for x in v.replace(",", " ").split()]
        return v

    @field_validator("caps", mode="after")
    @classmethod
    def _positive_caps(cls, v: list[float]) -> list[float]:
        if any(cap <= 0 for cap in v):
            raise ValueError("every cap in a sweep must be positive")
        return v

    @property
    def sweep_caps(self) -> list[float]:
        return self.caps or [self.cap]

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        """Explicit arguments win over the output-dir variable, which wins over the
        run file. Other environment variables are deliberately ignored.
        """
        config_file = getattr(init_settings, "init_kwargs", {}).get("config_file")
        return (
            init_settings,
            OutputDirEnvSource(settings_cls),
            KeyValueFileSettingsSource(
                settings_cls, Path(config_file) if config_file else None
            ),
        )

    @classmethod
    def load(cls, config_file: Path | None = None, **overrides: Any) -> RunConfig:
        try:
            return cls(config_file=config_file, **overrides)
        except ValidationError as e:
            raise ConfigError(f"Invalid run configuration: {e}") from e
