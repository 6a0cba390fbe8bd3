"""
Discrete Fokker-Planck constraint.

The constraint is the adjoint of Lambda by construction: with
R = Lambda^*(m, z),

    R_j = 0          for the interior time nodes j = 1 .. nt-1
    R_0 + m0 / dt = 0

which is a Crank-Nicolson scheme for dm/dt - nu Lap m + div z = 0 with
m_k standing for the density at the cell midpoint (k + 1/2) dt.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from congestion_mfc.exception.custom_exception import GridMismatchError
from congestion_mfc.src.grid.operators import (
    divergence_array,
    lambda_adjoint,
)
from congestion_mfc.src.grid.torus import (
    SpaceTimeField,
    Staggering,
    TorusGrid,
    VectorField,
    check_spatial,
    zero_vector,
)
from congestion_mfc.src.model.congestion_model import CongestionModel


@dataclass(frozen=True)
class PrimalState:
    m: SpaceTimeField
    z: VectorField

    def __post_init__(self):
        self.m.grid.require_same(self.z.grid)
        if self.m.staggering != Staggering.CELL_TIME:
            raise GridMismatchError("density must live on cell_time slices")

    @property
    def grid(self) -> TorusGrid:
        return self.m.grid

    def velocity(self) -> VectorField:
        """w = z / m where m > 0, 0 elsewhere."""
        m = self.m.values[..., None]
        w = np.where(m > 0.0, self.z.values / np.where(m > 0.0, m, 1.0), 0.0)
        return VectorField(self.grid, w)


@dataclass(frozen=True)
class FPResidual:
    """Residuals in density units: dt * R on the interior nodes, dt * R_0 + m0 at t = 0."""

    interior: SpaceTimeField
    initial: np.ndarray

    def norm(self) -> float:
        """Largest discrete L1 norm over the time slices."""
        grid = self.interior.grid
        axes = grid.spatial_axes()
        per_slice = grid.cell_volume * np.sum(np.abs(self.interior.values), axis=axes)
        initial = grid.cell_volume * float(np.sum(np.abs(self.initial)))
        return float(max(np.max(per_slice), initial))


def fp_residual(model: CongestionModel, state: PrimalState, m0: np.ndarray) -> FPResidual:
    grid = state.grid
    m0 = check_spatial(grid, m0, "m0")
    adjoint = lambda_adjoint(model, state.m, state.z)
    interior = grid.dt * adjoint.body.values
    initial = grid.dt * adjoint.t0_slice + m0
    return FPResidual(SpaceTimeField(grid, interior, Staggering.NODE_TIME), initial)


def total_mass(m: SpaceTimeField, k: int) -> float:
    if not -m.values.shape[0] <= k < m.values.shape[0]:
        raise IndexError(f"time index {k} out of range for {m.values.shape[0]} slices")
    return m.grid.cell_volume * float(np.sum(m.values[k]))


def terminal_density(model: CongestionModel, state: PrimalState) -> np.ndarray:
    """m(T) = m_{nt-1} + dt/2 (nu Lap m - div z)_{nt-1}, i.e. dt times the tT slice."""
    return state.grid.dt * lambda_adjoint(model, state.m, state.z).tT_slice


def laplacian_symbol(grid: TorusGrid) -> np.ndarray:
    """Eigenvalues of the periodic (2d+1)-point Laplacian on the FFT modes."""
    k = np.arange(grid.nx)
    one_d = -4.0 / grid.h**2 * np.sin(np.pi * k / grid.nx) ** 2
    symbol = np.zeros(grid.spatial_shape)
    for axis in range(grid.d):
        shape = [1] * grid.d
        shape[axis] = grid.nx
        symbol = symbol + one_d.reshape(shape)
    return symbol


def solve_fokker_planck(
    grid: TorusGrid, nu: float, m0: np.ndarray, z: Optional[VectorField] = None
) -> SpaceTimeField:
    """
    The unique density with zero fp_residual for the flux z (z = 0 gives the
    discrete heat flow). Each Crank-Nicolson step is diagonal in Fourier space.
    """
    m0 = check_spatial(grid, m0, "m0")
    if z is None:
        z = zero_vector(grid)
    grid.require_same(z.grid)

    axes = tuple(range(grid.d))
    half = 0.5 * grid.dt * nu * laplacian_symbol(grid)
    implicit = 1.0 - half
    explicit = 1.0 + half
    div = divergence_array(z.values, grid)

    m = np.empty(grid.shape(Staggering.CELL_TIME))
    rhs = np.fft.fftn(m0 - 0.5 * grid.dt * div[0], axes=axes)
    current = rhs / implicit
    m[0] = np.real(np.fft.ifftn(current, axes=axes))
    for j in range(1, grid.nt):
        forcing = np.fft.fftn(-0.5 * grid.dt * (div[j - 1] + div[j]), axes=axes)
        current = (explicit * current + forcing) / implicit
        m[j] = np.real(np.fft.ifftn(current, axes=axes))
    return SpaceTimeField(grid, m, Staggering.CELL_TIME)

