from __future__ import annotations

from typing import Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from congestion_mfc.exception.custom_exception import ConfigError
from congestion_mfc.logger import GLOBAL_LOGGER as log
from congestion_mfc.src.grid.spatial import SpatialSpec, resolve_spec
from congestion_mfc.src.grid.torus import TorusGrid
from congestion_mfc.src.model.congestion_model import CongestionModel
from congestion_mfc.src.solver.options import SolverOptions
from congestion_mfc.utils.config_loader import locate_key, parse_config_text


class DataBlock(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    m0: SpatialSpec = Field(default_factory=lambda: SpatialSpec(kind="constant", offset=1.0))
    u_T: SpatialSpec = Field(default_factory=SpatialSpec)

    @field_validator("m0", "u_T", mode="before")
    @classmethod
    def _resolve(cls, value: Union[str, dict, SpatialSpec, None]) -> SpatialSpec:
        return resolve_spec(value)


class McKVBlock(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    enabled: bool = False
    n_particles: int = Field(100000, ge=1)
    seed: int = 0
    plug_in_density: bool = False


class OutputBlock(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    root: Optional[str] = None


class RunConfig(BaseModel):
    """One batch run: model, grid, data, solver, particle check and output blocks."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    model: CongestionModel = Field(default_factory=CongestionModel)
    grid: TorusGrid
    data: DataBlock = Field(default_factory=DataBlock)
    solver: SolverOptions = Field(default_factory=SolverOptions)
    mckv: McKVBlock = Field(default_factory=McKVBlock)
    output: OutputBlock = Field(default_factory=OutputBlock)

    def with_overrides(
        self,
        seed: Optional[int] = None,
        max_iters: Optional[int] = None,
        tol_gap: Optional[float] = None,
    ) -> "RunConfig":
        solver_update = {}
        mckv_update = {}
        if seed is not None:
            solver_update["seed"] = seed
            mckv_update["seed"] = seed
        if max_iters is not None:
            solver_update["max_iters"] = max_iters
        if tol_gap is not None:
            solver_update["tol_gap"] = tol_gap
        if not solver_update and not mckv_update:
            return self
        # re-validate so overrides obey the same bounds as the file
        data = self.model_dump(mode="json")
        data["solver"].update(solver_update)
        data["mckv"].update(mckv_update)
        return RunConfig.model_validate(data)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.model_dump(mode="json"), sort_keys=False)

    @classmethod
    def from_yaml_text(cls, text: str) -> "RunConfig":
        raw = parse_config_text(text)
        try:
            return cls.model_validate(raw)
        except ValidationError as e:
            first = e.errors()[0]
            loc = tuple(first.get("loc", ()))
            key = ".".join(str(part) for part in loc) or None
            line = locate_key(text, loc)
            log.error("Invalid run config | key=%s | line=%s | error=%s", key, line, first.get("msg"))
            raise ConfigError(f"Invalid run config: {first.get('msg')}", key=key, line=line, error_details=e) from e
