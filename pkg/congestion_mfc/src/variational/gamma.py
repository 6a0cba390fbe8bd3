from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from congestion_mfc.logger import GLOBAL_LOGGER as log
from congestion_mfc.src.grid.operators import gradient
from congestion_mfc.src.grid.torus import SpaceTimeField, Staggering
from congestion_mfc.src.model.congestion_model import CongestionModel
from congestion_mfc.src.model.hamiltonian import cost_m_values
from congestion_mfc.src.variational.functionals import DualState

EPS_DEG = 1e-10
TOL_GRADIENT = 1e-8


@dataclass(frozen=True)
class GammaResult:
    gamma: SpaceTimeField
    violations: np.ndarray  # m ~ 0 while D phi != 0

    @property
    def n_violations(self) -> int:
        return int(np.sum(self.violations))


def _split(
    model: CongestionModel, phi: SpaceTimeField, m: SpaceTimeField, eps_deg: float
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    grid = phi.grid
    grid.require_same(m.grid)
    c = model.cost_on(grid)
    mv = m.values
    P = gradient(phi).norm() ** model.beta
    occupied = mv >= eps_deg
    safe = np.where(occupied, mv, 1.0)

    # gamma1 = -l - m l_m, gamma2 = (1 - alpha) |D phi|^beta / m^alpha
    gamma1 = np.where(
        occupied,
        -(c + model.kappa * safe ** (model.q - 1.0)) - safe * cost_m_values(model, safe),
        -c * np.ones_like(mv),
    )
    gamma2 = np.where(occupied, (1.0 - model.alpha) * P / safe**model.alpha, 0.0)
    return gamma1, gamma2, occupied, P


def split_gamma(
    model: CongestionModel, phi: SpaceTimeField, m: SpaceTimeField, eps_deg: float = EPS_DEG
) -> Tuple[SpaceTimeField, SpaceTimeField]:
    """gamma_bar = gamma1 + gamma2 with gamma1 <= 0 and gamma2 >= 0."""
    gamma1, gamma2, _, _ = _split(model, phi, m, eps_deg)
    grid = phi.grid
    return (
        SpaceTimeField(grid, gamma1, Staggering.CELL_TIME),
        SpaceTimeField(grid, gamma2, Staggering.CELL_TIME),
    )


def extract_gamma(
    model: CongestionModel,
    phi: SpaceTimeField,
    m: SpaceTimeField,
    eps_deg: float = EPS_DEG,
    tol_gradient: float = TOL_GRADIENT,
) -> GammaResult:
    """
    gamma_bar = -H(x, m, D phi) - m H_m(x, m, D phi) cellwise. Cells with
    m < eps_deg use -l(x, 0); those with D phi != 0 as well are flagged.
    """
    gamma1, gamma2, occupied, P = _split(model, phi, m, eps_deg)
    violations = (~occupied) & (P ** (1.0 / model.beta) > tol_gradient)
    if np.any(violations):
        log.warning(
            "Empty cells with nonzero potential gradient | cells=%d", int(np.sum(violations))
        )
    return GammaResult(
        gamma=SpaceTimeField(phi.grid, gamma1 + gamma2, Staggering.CELL_TIME),
        violations=violations,
    )


def restrict_to_ktilde(model: CongestionModel, dual: DualState) -> DualState:
    """Lower gamma to -l(x, 0) wherever D phi = 0 and gamma is above it; J is unchanged."""
    grid = dual.phi.grid
    c = model.cost_on(grid)
    flat = gradient(dual.phi).norm() == 0.0
    lowered = np.where(flat & (dual.gamma.values > -c), -c, dual.gamma.values)
    return DualState(dual.phi, dual.gamma.with_values(lowered))


def a_priori_monitors(
    model: CongestionModel, phi: SpaceTimeField, m: SpaceTimeField
) -> Dict[str, float]:
    """Quantities bounded by the a-priori estimates; reported, never asserted."""
    grid = phi.grid
    grid.require_same(m.grid)
    w = grid.weight
    mv = np.maximum(m.values, 0.0)
    P = gradient(phi).norm() ** model.beta
    positive = mv > 0.0
    safe = np.where(positive, mv, 1.0)
    m2_hm = np.where(
        positive,
        model.alpha * P * safe ** (1.0 - model.alpha) + safe**2 * cost_m_values(model, safe),
        0.0,
    )
    return {
        "grad_phi_L_beta": float((w * np.sum(P)) ** (1.0 / model.beta)),
        "m_L_q": float((w * np.sum(mv**model.q)) ** (1.0 / model.q)),
        "congestion_energy": float(w * np.sum(np.where(positive, safe ** (1.0 - model.alpha) * P, 0.0))),
        "m2_H_m": float(w * np.sum(m2_hm)),
    }
