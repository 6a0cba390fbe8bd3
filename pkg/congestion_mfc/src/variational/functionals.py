"""
Discrete primal and dual objectives.

    A(phi)      = h^d dt sum K(x, a, b) + h^d sum m0 phi(0),     (a, b) = Lambda phi
    A(phi, m)   = h^d dt sum m (a + H(x, m, b)) + h^d sum m0 phi(0)
    J(phi, g)   = h^d dt sum K(x, g, b) + h^d sum m0 phi(0),     g <= a, phi(T) <= u_T
    B(m, z)     = h^d dt sum L~(x, m, z) + h^d sum m(T) u_T      on the FP constraint set
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from congestion_mfc.exception.custom_exception import GridMismatchError, InfeasibleDualError
from congestion_mfc.logger import GLOBAL_LOGGER as log
from congestion_mfc.src.grid.operators import lambda_op
from congestion_mfc.src.grid.torus import SpaceTimeField, Staggering, check_spatial
from congestion_mfc.src.model.congestion_model import CongestionModel
from congestion_mfc.src.model.hamiltonian import cost_values, ltilde_values
from congestion_mfc.src.pointwise.psi import eval_K_field
from congestion_mfc.src.transport.fokker_planck import (
    PrimalState,
    fp_residual,
    terminal_density,
)

DEFAULT_TOL_FEAS = 1e-8
DEFAULT_TOL_DUAL = 1e-8


@dataclass(frozen=True)
class DualState:
    phi: SpaceTimeField
    gamma: SpaceTimeField

    def __post_init__(self):
        self.phi.grid.require_same(self.gamma.grid)
        if self.phi.staggering != Staggering.NODE_TIME:
            raise GridMismatchError("phi must live on node_time slices")
        if self.gamma.staggering != Staggering.CELL_TIME:
            raise GridMismatchError("gamma must live on cell_time slices")


def _initial_pairing(phi: SpaceTimeField, m0: np.ndarray) -> float:
    m0 = check_spatial(phi.grid, m0, "m0")
    return phi.grid.cell_volume * float(np.sum(m0 * phi.values[0]))


def eval_A(model: CongestionModel, phi: SpaceTimeField, m0: np.ndarray) -> float:
    grid = phi.grid
    a, b = lambda_op(model, phi)
    K, _ = eval_K_field(model, model.cost_on(grid), a.values, b.values)
    return grid.weight * float(np.sum(K)) + _initial_pairing(phi, m0)


def eval_A_pair(
    model: CongestionModel, phi: SpaceTimeField, m: SpaceTimeField, m0: np.ndarray
) -> float:
    """Inner objective for a given density; m H(x, m, p) is taken as 0 at m = 0."""
    grid = phi.grid
    grid.require_same(m.grid)
    a, b = lambda_op(model, phi)
    mv = m.values
    if np.any(mv < 0.0):
        return np.inf
    positive = mv > 0.0
    safe = np.where(positive, mv, 1.0)
    P = np.linalg.norm(b.values, axis=-1) ** model.beta
    mH = -(safe ** (1.0 - model.alpha)) * P + safe * cost_values(model, model.cost_on(grid), safe)
    integrand = np.where(positive, mv * a.values + mH, 0.0)
    return grid.weight * float(np.sum(integrand)) + _initial_pairing(phi, m0)


def eval_B_raw(model: CongestionModel, state: PrimalState, u_T: np.ndarray) -> float:
    """B without the feasibility test; +inf only through L~ itself."""
    grid = state.grid
    u_T = check_spatial(grid, u_T, "u_T")
    if np.any(state.m.values < 0.0):
        return np.inf
    L = ltilde_values(model, model.cost_on(grid), state.m.values, state.z.values)
    if not np.all(np.isfinite(L)):
        return np.inf
    mT = terminal_density(model, state)
    return grid.weight * float(np.sum(L)) + grid.cell_volume * float(np.sum(mT * u_T))


def eval_B(
    model: CongestionModel,
    state: PrimalState,
    u_T: np.ndarray,
    m0: np.ndarray,
    tol_feas: float = DEFAULT_TOL_FEAS,
) -> float:
    residual = fp_residual(model, state, m0).norm()
    if residual > tol_feas:
        log.debug("Primal state infeasible | fp_residual=%.3e | tol=%.1e", residual, tol_feas)
        return np.inf
    return eval_B_raw(model, state, u_T)


def check_dual_feasible(
    model: CongestionModel, dual: DualState, u_T: np.ndarray, tol: float = DEFAULT_TOL_DUAL
) -> None:
    grid = dual.phi.grid
    u_T = check_spatial(grid, u_T, "u_T")
    a, _ = lambda_op(model, dual.phi)
    slack = a.values - dual.gamma.values
    scale = max(1.0, float(np.max(np.abs(a.values))))
    if np.min(slack) < -tol * scale:
        raise InfeasibleDualError(
            f"gamma exceeds d_t phi + nu Lap phi | min_slack={float(np.min(slack)):.3e}"
        )
    terminal = dual.phi.values[-1] - u_T
    if np.max(terminal) > tol * max(1.0, float(np.max(np.abs(u_T)))):
        raise InfeasibleDualError(
            f"phi(T) exceeds u_T | max_excess={float(np.max(terminal)):.3e}"
        )


def eval_J(
    model: CongestionModel,
    dual: DualState,
    m0: np.ndarray,
    u_T: np.ndarray,
    tol: float = DEFAULT_TOL_DUAL,
) -> float:
    check_dual_feasible(model, dual, u_T, tol)
    grid = dual.phi.grid
    _, b = lambda_op(model, dual.phi)
    K, _ = eval_K_field(model, model.cost_on(grid), dual.gamma.values, b.values)
    return grid.weight * float(np.sum(K)) + _initial_pairing(dual.phi, m0)


def duality_gap(
    model: CongestionModel,
    dual: DualState,
    state: PrimalState,
    m0: np.ndarray,
    u_T: np.ndarray,
    tol_feas: float = DEFAULT_TOL_FEAS,
) -> float:
    primal = eval_B(model, state, u_T, m0, tol_feas)
    if not np.isfinite(primal):
        return np.inf
    return primal - eval_J(model, dual, m0, u_T)
