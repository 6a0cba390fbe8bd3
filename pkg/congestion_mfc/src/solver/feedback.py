from __future__ import annotations

import numpy as np

from congestion_mfc.src.grid.operators import gradient
from congestion_mfc.src.grid.torus import SpaceTimeField, VectorField
from congestion_mfc.src.model.congestion_model import CongestionModel
from congestion_mfc.src.model.hamiltonian import hamiltonian_p_values
from congestion_mfc.src.variational.certificate import recovered_flux
from congestion_mfc.src.variational.gamma import EPS_DEG


def recover_feedback(
    model: CongestionModel, m: SpaceTimeField, phi: SpaceTimeField, eps_deg: float = EPS_DEG
) -> VectorField:
    """z_rec = m H_p(x, m, D phi), zero on empty cells."""
    return recovered_flux(model, phi, m, eps_deg)


def feedback_velocity(
    model: CongestionModel, m: SpaceTimeField, phi: SpaceTimeField, eps_deg: float = EPS_DEG
) -> VectorField:
    """Optimal feedback v = H_p(x, m, D phi) on occupied cells, zero elsewhere."""
    m.grid.require_same(phi.grid)
    occupied = m.values >= eps_deg
    safe = np.where(occupied, m.values, 1.0)
    v = hamiltonian_p_values(model, safe, gradient(phi).values)
    return VectorField(m.grid, np.where(occupied[..., None], v, 0.0))
