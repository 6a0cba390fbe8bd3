"""
Congestion Hamiltonian, Lagrangian and the relaxed Lagrangian L~.

The *_values kernels take the cost offset c already evaluated (any array
broadcastable against m) and work on whole fields at once; the x-based
functions are thin wrappers for point queries.
Vectors (p, xi, z) always carry their d components on the last axis.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from congestion_mfc.exception.custom_exception import ModelDomainError
from congestion_mfc.src.model.congestion_model import CongestionModel


def _as_density(m, strict: bool) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if strict and np.any(m <= 0.0):
        raise ModelDomainError(f"density must be positive | min={float(np.min(m))}")
    if not strict and np.any(m < 0.0):
        raise ModelDomainError(f"density must be nonnegative | min={float(np.min(m))}")
    return m


def _norm(v) -> np.ndarray:
    return np.linalg.norm(np.asarray(v, dtype=np.float64), axis=-1)


def _out(value):
    value = np.asarray(value)
    return float(value.item()) if value.size == 1 else value


# ---------------------------------------------------------------------------
# field kernels
# ---------------------------------------------------------------------------


def cost_values(model: CongestionModel, c, m) -> np.ndarray:
    m = _as_density(m, strict=False)
    return c + model.kappa * np.power(m, model.q - 1.0)


def cost_m_values(model: CongestionModel, m) -> np.ndarray:
    m = _as_density(m, strict=False)
    with np.errstate(divide="ignore"):
        return model.kappa * (model.q - 1.0) * np.power(m, model.q - 2.0)


def hamiltonian_values(model: CongestionModel, c, m, p) -> np.ndarray:
    m = _as_density(m, strict=True)
    return -(_norm(p) ** model.beta) / m**model.alpha + cost_values(model, c, m)


def lagrangian_values(model: CongestionModel, c, m, xi) -> np.ndarray:
    m = _as_density(m, strict=True)
    kinetic = model.ltilde_coeff * m ** (model.alpha / (model.beta - 1.0))
    return kinetic * _norm(xi) ** model.beta_star + cost_values(model, c, m)


def hamiltonian_p_values(model: CongestionModel, m, p) -> np.ndarray:
    m = _as_density(m, strict=True)
    p = np.asarray(p, dtype=np.float64)
    pn = _norm(p)
    # |p|^(beta-2) p -> 0 as p -> 0 since beta > 1
    safe = np.where(pn > 0.0, pn, 1.0)
    factor = -model.beta * safe ** (model.beta - 2.0) / m**model.alpha
    return np.where(pn[..., None] > 0.0, factor[..., None] * p, 0.0)


def hamiltonian_m_values(model: CongestionModel, m, p) -> np.ndarray:
    m = _as_density(m, strict=True)
    congestion = model.alpha * _norm(p) ** model.beta * m ** (-model.alpha - 1.0)
    return congestion + cost_m_values(model, m)


def ltilde_values(model: CongestionModel, c, m, z) -> np.ndarray:
    """m * L(x, m, z/m) for m > 0, 0 at (0, 0), +inf at m = 0 with z != 0."""
    m = _as_density(m, strict=False)
    zn = _norm(z)
    positive = m > 0.0
    safe_m = np.where(positive, m, 1.0)
    interior = (
        model.ltilde_coeff * zn**model.ltilde_power * safe_m**model.ltilde_mass_exponent
        + safe_m * cost_values(model, c, safe_m)
    )
    at_zero = np.where(zn == 0.0, 0.0, np.inf)
    return np.where(positive, interior, at_zero)


# ---------------------------------------------------------------------------
# point queries
# ---------------------------------------------------------------------------


def running_cost(model: CongestionModel, x, m):
    return _out(cost_values(model, model.cost_at(x), m))


def running_cost_m(model: CongestionModel, x, m):
    return _out(cost_m_values(model, m))


def hamiltonian(model: CongestionModel, x, m, p):
    return _out(hamiltonian_values(model, model.cost_at(x), m, p))


def lagrangian(model: CongestionModel, x, m, xi):
    return _out(lagrangian_values(model, model.cost_at(x), m, xi))


def hamiltonian_p(model: CongestionModel, x, m, p) -> np.ndarray:
    return hamiltonian_p_values(model, m, p)


def hamiltonian_m(model: CongestionModel, x, m, p):
    return _out(hamiltonian_m_values(model, m, p))


def ltilde(model: CongestionModel, x, m, z):
    return _out(ltilde_values(model, model.cost_at(x), m, z))


def ltilde_recession(m, z):
    """Recession function of L~: 0 at the origin, +inf elsewhere."""
    m = np.asarray(m, dtype=np.float64)
    at_origin = (m == 0.0) & (_norm(z) == 0.0)
    return _out(np.where(at_origin, 0.0, np.inf))


# ---------------------------------------------------------------------------
# brute-force Legendre oracles
# ---------------------------------------------------------------------------


def _box(radius: float, n: int, d: int) -> np.ndarray:
    axis = np.linspace(-radius, radius, n)
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack(mesh, axis=-1).reshape(-1, d)


def hamiltonian_bruteforce(
    model: CongestionModel, x, m: float, p, n: int = 201, radius: Optional[float] = None
) -> float:
    """inf over an n^d velocity grid of xi . p + L(x, m, xi); decreases to H under nested refinement."""
    p = np.atleast_1d(np.asarray(p, dtype=np.float64))
    if radius is None:
        xi_opt = model.beta * float(_norm(p)) ** (model.beta - 1.0) / m**model.alpha
        radius = 2.0 * xi_opt + 1.0
    xi = _box(radius, n, p.shape[-1])
    values = xi @ p + lagrangian_values(model, model.cost_at(x), m, xi)
    return float(np.min(values))


def lagrangian_conjugate_bruteforce(
    model: CongestionModel, x, m: float, xi, n: int = 201, radius: Optional[float] = None
) -> float:
    """sup over an n^d momentum grid of -xi . p + H(x, m, p); increases to L under nested refinement."""
    xi = np.atleast_1d(np.asarray(xi, dtype=np.float64))
    if radius is None:
        p_opt = (float(_norm(xi)) * m**model.alpha / model.beta) ** (1.0 / (model.beta - 1.0))
        radius = 2.0 * p_opt + 1.0
    p = _box(radius, n, xi.shape[-1])
    values = -(p @ xi) + hamiltonian_values(model, model.cost_at(x), m, p)
    return float(np.max(values))
