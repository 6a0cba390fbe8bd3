"""
Discrete Lambda(phi) = (d_t phi + nu * Lap phi, D phi) and its exact adjoint.

Both spaces carry the same quadrature weight h^d * dt, so the adjoint below is
the plain transpose of Lambda and the PDHG steps can use Euclidean norms.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Tuple

import numpy as np

from congestion_mfc.exception.custom_exception import GridMismatchError
from congestion_mfc.logger import GLOBAL_LOGGER as log
from congestion_mfc.src.grid.torus import (
    SpaceTimeField,
    Staggering,
    TorusGrid,
    VectorField,
)

if TYPE_CHECKING:
    from congestion_mfc.src.model.congestion_model import CongestionModel


def _shift(values: np.ndarray, offset: int, axis: int) -> np.ndarray:
    # _shift(u, +1, ax)[i] == u[i + 1]
    return np.roll(values, -offset, axis=axis)


def laplacian_array(values: np.ndarray, grid: TorusGrid, leading: int = 1) -> np.ndarray:
    """(2d+1)-point periodic Laplacian over the trailing d spatial axes."""
    out = np.zeros_like(values)
    for axis in grid.spatial_axes(leading):
        out += _shift(values, 1, axis) + _shift(values, -1, axis) - 2.0 * values
    return out / grid.h**2


def gradient_array(values: np.ndarray, grid: TorusGrid, leading: int = 1) -> np.ndarray:
    """Centered periodic differences, components stacked on a new last axis."""
    comps = [
        (_shift(values, 1, axis) - _shift(values, -1, axis)) / (2.0 * grid.h)
        for axis in grid.spatial_axes(leading)
    ]
    return np.stack(comps, axis=-1)


def divergence_array(values: np.ndarray, grid: TorusGrid, leading: int = 1) -> np.ndarray:
    """Centered divergence; the transpose of gradient_array is minus this."""
    out = np.zeros(values.shape[:-1])
    for i, axis in enumerate(grid.spatial_axes(leading)):
        comp = values[..., i]
        out += (_shift(comp, 1, axis) - _shift(comp, -1, axis)) / (2.0 * grid.h)
    return out


def _require_node_time(phi: SpaceTimeField) -> None:
    if phi.staggering != Staggering.NODE_TIME:
        raise GridMismatchError(
            f"expected a node_time field | staggering={phi.staggering.value}"
        )


def gradient(phi: SpaceTimeField) -> VectorField:
    _require_node_time(phi)
    return VectorField(phi.grid, gradient_array(phi.time_averaged(), phi.grid))


def laplacian(phi_slice: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Laplacian of a single spatial slice."""
    return laplacian_array(np.asarray(phi_slice, dtype=np.float64), grid, leading=0)


def time_derivative(phi: SpaceTimeField) -> SpaceTimeField:
    _require_node_time(phi)
    values = (phi.values[1:] - phi.values[:-1]) / phi.grid.dt
    return SpaceTimeField(phi.grid, values, Staggering.CELL_TIME)


def divergence(z: VectorField) -> SpaceTimeField:
    return SpaceTimeField(z.grid, divergence_array(z.values, z.grid), Staggering.CELL_TIME)


def lambda_op(
    model: "CongestionModel", phi: SpaceTimeField
) -> Tuple[SpaceTimeField, VectorField]:
    _require_node_time(phi)
    grid = phi.grid
    averaged = phi.time_averaged()
    a = (phi.values[1:] - phi.values[:-1]) / grid.dt + model.nu * laplacian_array(
        averaged, grid
    )
    b = gradient_array(averaged, grid)
    return SpaceTimeField(grid, a, Staggering.CELL_TIME), VectorField(grid, b)


@dataclass(frozen=True)
class AdjointSlices:
    """
    Lambda^*(m, z) split into its interior body and the two boundary slices.

    body is a node_time field whose first and last slices are zero; the
    pairing identity reads <Lambda phi, (m, z)> = <phi, full()> with the
    common weight h^d * dt.
    """

    body: SpaceTimeField
    t0_slice: np.ndarray
    tT_slice: np.ndarray

    def full(self) -> np.ndarray:
        values = self.body.values.copy()
        values[0] = self.t0_slice
        values[-1] = self.tT_slice
        return values


def fokker_planck_source(
    model: "CongestionModel", m: SpaceTimeField, z: VectorField
) -> np.ndarray:
    """G = nu * Lap m - div z per time cell."""
    return model.nu * laplacian_array(m.values, m.grid) - divergence_array(z.values, z.grid)


def lambda_adjoint(
    model: "CongestionModel", m: SpaceTimeField, z: VectorField
) -> AdjointSlices:
    m.grid.require_same(z.grid)
    if m.staggering != Staggering.CELL_TIME:
        raise GridMismatchError("density must live on cell_time slices")
    grid = m.grid
    dt = grid.dt
    source = fokker_planck_source(model, m, z)

    # pad with an empty cell on both ends of the time axis
    pad = np.zeros((1,) + grid.spatial_shape)
    m_pad = np.concatenate([pad, m.values, pad])
    g_pad = np.concatenate([pad, source, pad])
    full = (m_pad[:-1] - m_pad[1:]) / dt + 0.5 * (g_pad[:-1] + g_pad[1:])

    body = full.copy()
    body[0] = 0.0
    body[-1] = 0.0
    return AdjointSlices(
        body=SpaceTimeField(grid, body, Staggering.NODE_TIME),
        t0_slice=full[0],
        tT_slice=full[-1],
    )


def pairing(grid: TorusGrid, *pairs: Tuple[np.ndarray, np.ndarray]) -> float:
    """Weighted inner product h^d * dt * sum(u * v) over any number of array pairs."""
    total = 0.0
    for u, v in pairs:
        total += float(np.sum(np.asarray(u) * np.asarray(v)))
    return grid.weight * total


def estimate_lambda_norm(
    grid: TorusGrid,
    model: "CongestionModel",
    iters: int = 30,
    seed: int = 0,
    free_terminal: bool = False,
) -> float:
    """
    Power iteration for the spectral norm of Lambda on the potentials
    (phi on nodes 0 .. nt-1, plus phi(T) when free_terminal, else pinned to zero).
    The estimate is nondecreasing in the iteration count.
    """
    if iters < 1:
        raise ValueError("power iteration needs at least one step")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(grid.shape(Staggering.NODE_TIME))
    if not free_terminal:
        v[-1] = 0.0
    v /= np.linalg.norm(v)

    estimate = 0.0
    for _ in range(iters):
        a, b = lambda_op(model, SpaceTimeField(grid, v, Staggering.NODE_TIME))
        w = lambda_adjoint(model, a, b).full()
        if not free_terminal:
            w[-1] = 0.0
        norm_w = float(np.linalg.norm(w))
        if norm_w == 0.0:
            return 0.0
        estimate = np.sqrt(norm_w)
        v = w / norm_w

    log.debug("Operator norm estimate | iters=%d | norm=%.6e", iters, estimate)
    return float(estimate)
