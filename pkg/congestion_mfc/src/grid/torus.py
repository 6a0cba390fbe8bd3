from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from congestion_mfc.exception.custom_exception import GridMismatchError


class Staggering(str, Enum):
    NODE_TIME = "node_time"  # nt + 1 slices, phi
    CELL_TIME = "cell_time"  # nt slices, m, z, gamma, a, b
    SPATIAL = "spatial"  # a single spatial slice (m0, u_T, c)


class TorusGrid(BaseModel):
    """
    Periodic space-time grid on [0, T] x T^d.

    Spatial nodes sit at x = i * h (i = 0 .. nx-1 per axis); phi lives on the
    nt + 1 time nodes, every other field on the nt time cells.
    h and dt are derived, never stored.
    """

    model_config = ConfigDict(frozen=True)

    d: int = Field(1, ge=1, le=2)
    nx: int = Field(..., ge=4)
    nt: int = Field(..., ge=2)
    T: float = Field(1.0, gt=0.0)

    @property
    def h(self) -> float:
        return 1.0 / self.nx

    @property
    def dt(self) -> float:
        return self.T / self.nt

    @property
    def spatial_shape(self) -> Tuple[int, ...]:
        return (self.nx,) * self.d

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    @property
    def weight(self) -> float:
        """Quadrature weight h^d * dt of one space-time cell."""
        return self.cell_volume * self.dt

    def shape(self, staggering: Staggering) -> Tuple[int, ...]:
        if staggering == Staggering.NODE_TIME:
            return (self.nt + 1,) + self.spatial_shape
        if staggering == Staggering.CELL_TIME:
            return (self.nt,) + self.spatial_shape
        return self.spatial_shape

    def node_coordinates(self) -> np.ndarray:
        """Spatial node coordinates, shape (nx, ..., nx, d)."""
        axes = [np.arange(self.nx) * self.h] * self.d
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def time_nodes(self) -> np.ndarray:
        return np.arange(self.nt + 1) * self.dt

    def time_cells(self) -> np.ndarray:
        return (np.arange(self.nt) + 0.5) * self.dt

    def spatial_axes(self, leading: int = 1) -> Tuple[int, ...]:
        return tuple(range(leading, leading + self.d))

    def require_same(self, other: "TorusGrid") -> None:
        if self != other:
            raise GridMismatchError(f"Grid mismatch | left={self!r} | right={other!r}")


@dataclass(frozen=True)
class SpaceTimeField:
    grid: TorusGrid
    values: np.ndarray
    staggering: Staggering = Staggering.CELL_TIME

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        expected = self.grid.shape(self.staggering)
        if values.shape != expected:
            raise GridMismatchError(
                f"Field shape does not match grid | staggering={self.staggering.value} "
                f"| shape={values.shape} | expected={expected}"
            )

    def with_values(self, values: np.ndarray) -> "SpaceTimeField":
        return SpaceTimeField(self.grid, values, self.staggering)

    def time_averaged(self) -> np.ndarray:
        """Average of the two endpoint slices of every time cell (node_time only)."""
        if self.staggering != Staggering.NODE_TIME:
            raise GridMismatchError("time averaging needs a node_time field")
        return 0.5 * (self.values[1:] + self.values[:-1])


@dataclass(frozen=True)
class VectorField:
    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        expected = self.grid.shape(Staggering.CELL_TIME) + (self.grid.d,)
        if values.shape != expected:
            raise GridMismatchError(
                f"Vector field shape does not match grid | shape={values.shape} | expected={expected}"
            )

    def norm(self) -> np.ndarray:
        return np.linalg.norm(self.values, axis=-1)

    def with_values(self, values: np.ndarray) -> "VectorField":
        return VectorField(self.grid, values)


def zeros(grid: TorusGrid, staggering: Staggering = Staggering.CELL_TIME) -> SpaceTimeField:
    return SpaceTimeField(grid, np.zeros(grid.shape(staggering)), staggering)


def zero_vector(grid: TorusGrid) -> VectorField:
    return VectorField(grid, np.zeros(grid.shape(Staggering.CELL_TIME) + (grid.d,)))


def check_spatial(grid: TorusGrid, values: np.ndarray, name: str = "field") -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if values.shape != grid.spatial_shape:
        raise GridMismatchError(
            f"Spatial slice does not match grid | name={name} | shape={values.shape} "
            f"| expected={grid.spatial_shape}"
        )
    return values
