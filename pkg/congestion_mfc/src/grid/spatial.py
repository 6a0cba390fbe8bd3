"""Spatial data specs (m0, u_T, c) sampled on the torus."""

from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from congestion_mfc.src.grid.torus import TorusGrid


class SpatialSpec(BaseModel):
    """
    kind:
      zero      0
      constant  offset
      cosine    offset + amplitude * mean_i cos(2 pi x_i)
      sin2      offset + amplitude * mean_i sin^2(2 pi x_i)
      file      a spatial slice stored in the field file format
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["zero", "constant", "cosine", "sin2", "file"] = "zero"
    offset: float = 0.0
    amplitude: float = 0.0
    path: Optional[str] = None

    @model_validator(mode="after")
    def _file_needs_path(self) -> "SpatialSpec":
        if self.kind == "file" and not self.path:
            raise ValueError("kind 'file' needs a path")
        return self

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Evaluate at points x of shape (..., d)."""
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "zero":
            return np.zeros(x.shape[:-1])
        if self.kind == "constant":
            return np.full(x.shape[:-1], self.offset)
        if self.kind == "cosine":
            return self.offset + self.amplitude * np.mean(np.cos(2.0 * np.pi * x), axis=-1)
        if self.kind == "sin2":
            return self.offset + self.amplitude * np.mean(np.sin(2.0 * np.pi * x) ** 2, axis=-1)
        return self._evaluate_file(x)

    def _evaluate_file(self, x: np.ndarray) -> np.ndarray:
        from congestion_mfc.utils.field_io import read_spatial_slice

        table = read_spatial_slice(Path(self.path))
        nx = table.shape[0]
        # nearest node, periodic
        idx = np.mod(np.rint(x * nx).astype(int), nx)
        return table[tuple(idx[..., i] for i in range(x.shape[-1]))]

    def sample(self, grid: TorusGrid) -> np.ndarray:
        return self.evaluate(grid.node_coordinates())


COST_SHORTCUTS = {
    "zero": SpatialSpec(kind="zero"),
    "cos2pi": SpatialSpec(kind="cosine", offset=0.5, amplitude=-0.5),
    "sin2": SpatialSpec(kind="sin2", offset=0.0, amplitude=1.0),
}


def resolve_spec(spec: Union[str, SpatialSpec, dict, None]) -> SpatialSpec:
    if spec is None:
        return COST_SHORTCUTS["zero"]
    if isinstance(spec, SpatialSpec):
        return spec
    if isinstance(spec, str):
        if spec not in COST_SHORTCUTS:
            raise ValueError(
                f"unknown spatial shortcut '{spec}', expected one of {sorted(COST_SHORTCUTS)}"
            )
        return COST_SHORTCUTS[spec]
    return SpatialSpec(**spec)


def total_mass_of(grid: TorusGrid, values: np.ndarray) -> float:
    return grid.cell_volume * float(np.sum(values))


def sample_density(grid: TorusGrid, spec: Union[str, SpatialSpec, dict]) -> np.ndarray:
    """Sample an initial density and rescale it to unit discrete mass."""
    values = resolve_spec(spec).sample(grid)
    if np.any(values <= 0.0):
        raise ValueError("initial density must be positive at every node")
    return values / total_mass_of(grid, values)


def constant_slice(grid: TorusGrid, value: float = 0.0) -> np.ndarray:
    return np.full(grid.spatial_shape, float(value))

