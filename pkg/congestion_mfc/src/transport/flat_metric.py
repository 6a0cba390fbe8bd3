"""
Flat (dual-Lipschitz) distance between grid densities and the time-Hoelder
quotient of t -> m(t) measured in it.

Test functions are grid functions whose increments along every lattice edge
are at most h. On the circle this is W1 and has the closed form
h * sum_i |F_i - median(F)|, F the cumulative mass difference.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from congestion_mfc.exception.custom_exception import NumericalConvergenceError
from congestion_mfc.logger import GLOBAL_LOGGER as log
from congestion_mfc.src.grid.torus import SpaceTimeField, Staggering, TorusGrid, check_spatial


def _circle_w1(grid: TorusGrid, diff: np.ndarray) -> float:
    cumulative = np.cumsum(grid.h * diff)
    return float(grid.h * np.sum(np.abs(cumulative - np.median(cumulative))))


def _edge_matrix(grid: TorusGrid) -> sparse.csr_matrix:
    """Signed incidence matrix of the periodic lattice, one row per edge."""
    n = grid.nx**grid.d
    index = np.arange(n).reshape(grid.spatial_shape)
    rows = []
    for axis in range(grid.d):
        heads = index.ravel()
        tails = np.roll(index, -1, axis=axis).ravel()
        rows.append((heads, tails))
    heads = np.concatenate([r[0] for r in rows])
    tails = np.concatenate([r[1] for r in rows])
    n_edges = heads.size
    data = np.concatenate([np.ones(n_edges), -np.ones(n_edges)])
    cols = np.concatenate([heads, tails])
    rows_idx = np.concatenate([np.arange(n_edges), np.arange(n_edges)])
    return sparse.csr_matrix((data, (rows_idx, cols)), shape=(n_edges, n))


def _lp_flat(grid: TorusGrid, diff: np.ndarray) -> float:
    n = grid.nx**grid.d
    incidence = _edge_matrix(grid)
    A_ub = sparse.vstack([incidence, -incidence]).tocsr()
    b_ub = np.full(A_ub.shape[0], grid.h)
    # xi at the first node is pinned to 0
    bounds = [(0.0, 0.0)] + [(None, None)] * (n - 1)
    objective = -grid.cell_volume * diff.ravel()
    result = linprog(objective, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if result.status != 0:
        raise NumericalConvergenceError(
            "flat distance LP failed", diagnostics={"status": result.status, "message": result.message}
        )
    return float(-result.fun)


def flat_distance(
    grid: TorusGrid,
    m_s: np.ndarray,
    m_t: np.ndarray,
    method: Literal["auto", "cdf", "lp"] = "auto",
) -> float:
    diff = check_spatial(grid, m_s, "m_s") - check_spatial(grid, m_t, "m_t")
    if method == "auto":
        method = "cdf" if grid.d == 1 else "lp"
    if method == "cdf":
        if grid.d != 1:
            raise ValueError("the cdf formula only applies on the circle (d = 1)")
        return _circle_w1(grid, diff)
    return _lp_flat(grid, diff)


@dataclass(frozen=True)
class HolderResult:
    quotient: float
    pair: Tuple[float, float]
    zeta: float


def holder_diagnostic(
    m: SpaceTimeField,
    zeta: float,
    m0: Optional[np.ndarray] = None,
    method: Literal["auto", "cdf", "lp"] = "auto",
) -> HolderResult:
    """
    max over pairs of time slices of d_w(m(s), m(t)) / |t - s|^zeta.
    Cell slices sit at (k + 1/2) dt; m0, when given, is added at t = 0.
    """
    if not 0.0 < zeta <= 1.0:
        raise ValueError(f"zeta must lie in (0, 1], got {zeta}")
    if m.staggering != Staggering.CELL_TIME:
        raise ValueError("holder_diagnostic expects a cell_time density")
    grid = m.grid
    times = list(grid.time_cells())
    slices = list(m.values)
    if m0 is not None:
        times.insert(0, 0.0)
        slices.insert(0, check_spatial(grid, m0, "m0"))

    best, best_pair = 0.0, (times[0], times[0])
    for i in range(len(times)):
        for j in range(i + 1, len(times)):
            distance = flat_distance(grid, slices[i], slices[j], method=method)
            quotient = distance / abs(times[j] - times[i]) ** zeta
            if quotient > best:
                best, best_pair = quotient, (times[i], times[j])
    log.debug("Hoelder diagnostic | zeta=%.3f | quotient=%.4e | pair=%s", zeta, best, best_pair)
    return HolderResult(quotient=float(best), pair=best_pair, zeta=zeta)
