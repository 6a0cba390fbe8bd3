"""
Weak-solution certificate for a computed pair (phi, m).

Clauses:
  integrability  the energy sums are finite and D phi = 0 wherever m = 0
  hjb            d_t phi + nu Lap phi >= gamma_bar cellwise and phi(T) <= u_T
  fp             the FP residual with the recovered flux z = m H_p(x, m, D phi)
  energy         h^d dt sum [L~(m, z) + m^2 H_m] + h^d sum m(T) u_T - h^d sum m0 phi(0)
  flux           ||z - m H_p||_1 / ||z||_1 when a flux is supplied
The bounded pairing (sup over a trigonometric basis of |<xi, phi(t)>| / ||xi||_Lip)
and the Hoelder quotient of t -> m(t) are reported alongside.
"""

from __future__ import annotations

from typing import Any, Dict, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from congestion_mfc.logger import GLOBAL_LOGGER as log
from congestion_mfc.src.grid.operators import gradient, lambda_op
from congestion_mfc.src.grid.torus import SpaceTimeField, TorusGrid, VectorField, check_spatial
from congestion_mfc.src.model.congestion_model import CongestionModel
from congestion_mfc.src.model.hamiltonian import hamiltonian_p_values, ltilde_values
from congestion_mfc.src.transport.flat_metric import holder_diagnostic
from congestion_mfc.src.transport.fokker_planck import PrimalState, fp_residual, terminal_density
from congestion_mfc.src.variational.functionals import eval_A, eval_B_raw
from congestion_mfc.src.variational.gamma import EPS_DEG, a_priori_monitors, extract_gamma


class CertificateTolerances(BaseModel):
    model_config = ConfigDict(frozen=True)

    tol_hjb: float = Field(1e-6, gt=0.0)
    tol_feas: float = Field(1e-6, gt=0.0)
    tol_energy: float = Field(1e-6, gt=0.0)
    tol_flux: float = Field(1e-3, gt=0.0)
    eps_deg: float = Field(EPS_DEG, gt=0.0)


class Certificate(BaseModel):
    gap: float
    primal_value: float
    dual_value: float
    hjb_min_residual: float
    terminal_max_residual: float
    hjb_convention_violations: int
    fp_residual_norm: float
    energy_identity_residual: float
    flux_consistency: Optional[float] = None
    bounded_pairing: float
    integrability_flags: Dict[str, bool]
    holder_quotient: float
    holder_zeta: float
    slack_quantiles: Dict[str, float]
    monitors: Dict[str, float] = Field(default_factory=dict)
    clauses: Dict[str, bool]

    @property
    def passed(self) -> bool:
        return all(self.clauses.values())

    def to_sections(self) -> Dict[str, Dict[str, Any]]:
        values = {
            "passed": self.passed,
            "gap": self.gap,
            "primal_value": self.primal_value,
            "dual_value": self.dual_value,
            "hjb_min_residual": self.hjb_min_residual,
            "terminal_max_residual": self.terminal_max_residual,
            "hjb_convention_violations": self.hjb_convention_violations,
            "fp_residual_norm": self.fp_residual_norm,
            "energy_identity_residual": self.energy_identity_residual,
            "flux_consistency": self.flux_consistency,
            "bounded_pairing": self.bounded_pairing,
            "holder_quotient": self.holder_quotient,
            "holder_zeta": self.holder_zeta,
        }
        return {
            "certificate": values,
            "certificate.clauses": dict(self.clauses),
            "certificate.integrability": dict(self.integrability_flags),
            "certificate.slack": dict(self.slack_quantiles),
            "certificate.monitors": dict(self.monitors),
        }


def fp_threshold(tolerances: CertificateTolerances, grid: TorusGrid, m0: np.ndarray) -> float:
    """Bound on the recovered-flux FP residual, scaled by the initial mass."""
    return tolerances.tol_feas * max(1.0, grid.cell_volume * float(np.sum(np.abs(m0))))


def recovered_flux(
    model: CongestionModel, phi: SpaceTimeField, m: SpaceTimeField, eps_deg: float = EPS_DEG
) -> VectorField:
    """z = m H_p(x, m, D phi) where m >= eps_deg, 0 elsewhere."""
    mv = m.values
    occupied = mv >= eps_deg
    safe = np.where(occupied, mv, 1.0)
    hp = hamiltonian_p_values(model, safe, gradient(phi).values)
    return VectorField(m.grid, np.where(occupied[..., None], safe[..., None] * hp, 0.0))


def bounded_pairing(phi: SpaceTimeField) -> float:
    """
    max over time nodes and over xi in {cos 2 pi k x_i, sin 2 pi k x_i} of
    |h^d sum xi phi(t)| / max(sup |xi|, Lip xi).
    """
    grid = phi.grid
    x = grid.node_coordinates()
    axes = grid.spatial_axes()
    best = 0.0
    for i in range(grid.d):
        for k in range(grid.nx):
            norm = max(1.0, 2.0 * np.pi * k)
            for basis in (np.cos, np.sin):
                xi = basis(2.0 * np.pi * k * x[..., i])
                if not np.any(xi):
                    continue
                pairing = grid.cell_volume * np.sum(phi.values * xi, axis=axes)
                best = max(best, float(np.max(np.abs(pairing))) / norm)
    return best


def _slack_quantiles(slack: np.ndarray) -> Dict[str, float]:
    if slack.size == 0:
        return {"min": 0.0, "q50": 0.0, "q99": 0.0, "max": 0.0}
    q = np.quantile(slack, [0.0, 0.5, 0.99, 1.0])
    return {"min": float(q[0]), "q50": float(q[1]), "q99": float(q[2]), "max": float(q[3])}


def check_weak_solution(
    model: CongestionModel,
    phi: SpaceTimeField,
    m: SpaceTimeField,
    m0: np.ndarray,
    u_T: np.ndarray,
    z: Optional[VectorField] = None,
    tolerances: Optional[CertificateTolerances] = None,
) -> Certificate:
    tol = tolerances or CertificateTolerances()
    grid: TorusGrid = phi.grid
    grid.require_same(m.grid)
    m0 = check_spatial(grid, m0, "m0")
    u_T = check_spatial(grid, u_T, "u_T")
    w = grid.weight

    a, _ = lambda_op(model, phi)
    gamma = extract_gamma(model, phi, m, eps_deg=tol.eps_deg)
    counted = ~gamma.violations
    slack = (a.values - gamma.gamma.values)[counted]
    hjb_min = float(np.min(slack)) if slack.size else 0.0
    terminal = float(np.max(phi.values[-1] - u_T))
    a_scale = max(1.0, float(np.max(np.abs(a.values))))
    u_scale = max(1.0, float(np.max(np.abs(u_T))))

    z_rec = recovered_flux(model, phi, m, tol.eps_deg)
    rec_state = PrimalState(m, z_rec)
    fp_norm = fp_residual(model, rec_state, m0).norm()

    # energy identity with the recovered flux
    c = model.cost_on(grid)
    mv = m.values
    L = ltilde_values(model, c, np.maximum(mv, 0.0), z_rec.values)
    monitors = a_priori_monitors(model, phi, m)
    mT = terminal_density(model, rec_state)
    primal_energy = w * float(np.sum(L)) + grid.cell_volume * float(np.sum(mT * u_T))
    initial = grid.cell_volume * float(np.sum(m0 * phi.values[0]))
    energy = primal_energy + monitors["m2_H_m"] - initial
    energy_scale = max(1.0, abs(primal_energy))

    flux_consistency = None
    state = rec_state
    if z is not None:
        state = PrimalState(m, z)
        z_l1 = float(np.sum(np.abs(z.values)))
        diff_l1 = float(np.sum(np.abs(z.values - z_rec.values)))
        flux_consistency = diff_l1 / z_l1 if z_l1 > 0.0 else diff_l1

    primal = eval_B_raw(model, state, u_T)
    dual = eval_A(model, phi, m0)
    gap = primal - dual

    integrability = {
        "m_L_q": bool(np.isfinite(monitors["m_L_q"])),
        "grad_phi_L_beta": bool(np.isfinite(monitors["grad_phi_L_beta"])),
        "congestion_energy": bool(np.isfinite(monitors["congestion_energy"])),
        "m2_H_m": bool(np.isfinite(monitors["m2_H_m"])),
        "ltilde": bool(np.all(np.isfinite(L))),
        "empty_cells_flat": gamma.n_violations == 0,
    }

    zeta = min(0.5, (1.0 - model.alpha) / model.beta)
    holder = holder_diagnostic(m, zeta, m0=m0)

    clauses = {
        "integrability": all(integrability.values()),
        "hjb": hjb_min >= -tol.tol_hjb * a_scale and terminal <= tol.tol_hjb * u_scale,
        "fp": fp_norm <= fp_threshold(tol, grid, m0),
        "energy": abs(energy) <= tol.tol_energy * energy_scale,
        "flux": flux_consistency is None or flux_consistency <= tol.tol_flux,
    }

    cert = Certificate(
        gap=gap,
        primal_value=primal,
        dual_value=dual,
        hjb_min_residual=hjb_min,
        terminal_max_residual=terminal,
        hjb_convention_violations=gamma.n_violations,
        fp_residual_norm=fp_norm,
        energy_identity_residual=energy,
        flux_consistency=flux_consistency,
        bounded_pairing=bounded_pairing(phi),
        integrability_flags=integrability,
        holder_quotient=holder.quotient,
        holder_zeta=zeta,
        slack_quantiles=_slack_quantiles(slack),
        monitors=monitors,
        clauses=clauses,
    )
    if cert.passed:
        log.info("Certificate passed | gap=%.3e | energy=%.3e | fp=%.3e", gap, energy, fp_norm)
    else:
        failed = [name for name, ok in clauses.items() if not ok]
        log.warning("Certificate failed | clauses=%s", ", ".join(failed))
    return cert
