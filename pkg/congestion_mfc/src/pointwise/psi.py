"""
psi(x, gamma, p): the minimizer over mu >= 0 of mu * gamma + mu * H(x, mu, p),
and K, the minimum value.

For mu > 0 the derivative of that objective is

    F(mu) = gamma + c + q kappa mu^(q-1) - (1 - alpha) |p|^beta mu^(-alpha),

which is strictly increasing, so psi is its root when F(0+) < 0 and 0 otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from congestion_mfc.exception.custom_exception import UnboundedModelError
from congestion_mfc.logger import GLOBAL_LOGGER as log
from congestion_mfc.src.model.congestion_model import CongestionModel
from congestion_mfc.src.pointwise.root import safeguarded_newton

DEFAULT_TOL_PSI = 1e-12
DEFAULT_MU_MAX = 1e12


class PsiBranch(str, Enum):
    INTERIOR_ROOT = "interior_root"
    BOUNDARY_ZERO = "boundary_zero"
    P_ZERO_ROOT = "p_zero_root"


# integer codes used by the field form
_BRANCH_CODES = {0: PsiBranch.INTERIOR_ROOT, 1: PsiBranch.BOUNDARY_ZERO, 2: PsiBranch.P_ZERO_ROOT}


@dataclass(frozen=True)
class PsiResult:
    mu: float
    residual: float
    branch: PsiBranch


@dataclass(frozen=True)
class PsiField:
    mu: np.ndarray
    residual: np.ndarray
    branch: np.ndarray  # int8 codes, see branch_at

    def branch_at(self, index) -> PsiBranch:
        return _BRANCH_CODES[int(self.branch[index])]


def stationarity(model: CongestionModel, g: np.ndarray, P: np.ndarray, mu: np.ndarray):
    """F(mu) and F'(mu) with g = gamma + c and P = |p|^beta, for mu > 0."""
    a, q, kappa = model.alpha, model.q, model.kappa
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        f = g + q * kappa * mu ** (q - 1.0) - (1.0 - a) * P * mu ** (-a)
        df = q * (q - 1.0) * kappa * mu ** (q - 2.0) + a * (1.0 - a) * P * mu ** (-a - 1.0)
    return f, df


def solve_psi_field(
    model: CongestionModel,
    c: np.ndarray,
    gamma: np.ndarray,
    p: np.ndarray,
    tol_psi: float = DEFAULT_TOL_PSI,
    warm: Optional[np.ndarray] = None,
    mu_max: float = DEFAULT_MU_MAX,
) -> PsiField:
    """
    Cellwise psi over whole fields. p carries its components on the last axis;
    c, gamma and the leading shape of p broadcast together. warm holds the
    previous psi per cell and seeds both the bracket and the first Newton step.
    """
    gamma = np.asarray(gamma, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    P = np.linalg.norm(p, axis=-1) ** model.beta
    g = np.asarray(c, dtype=np.float64) + gamma
    g, P = np.broadcast_arrays(g, P)
    shape = g.shape
    g, P = g.ravel(), P.ravel()

    mu = np.zeros(g.size)
    residual = np.zeros(g.size)
    branch = np.full(g.size, 1, dtype=np.int8)

    # F(0+) = g when p = 0; g - |p|^beta when alpha = 0; -inf otherwise
    if model.alpha > 0.0:
        f_zero = np.where(P > 0.0, -np.inf, g)
    else:
        f_zero = g - P

    p_zero = (P == 0.0) & (f_zero < 0.0)
    if np.any(p_zero):
        mu[p_zero] = (-g[p_zero] / (model.q * model.kappa)) ** (1.0 / (model.q - 1.0))
        residual[p_zero] = stationarity(model, g[p_zero], P[p_zero], mu[p_zero])[0]
        branch[p_zero] = 2

    interior = (P > 0.0) & (f_zero < 0.0)
    idx = np.flatnonzero(interior)
    if idx.size:
        gi, Pi = g[idx], P[idx]
        start = np.ones(idx.size)
        if warm is not None:
            w = np.broadcast_to(np.asarray(warm, dtype=np.float64), shape).ravel()[idx]
            start = np.maximum(start, np.where(np.isfinite(w), w, 1.0))

        hi = start.copy()
        lo = np.zeros(idx.size)
        grow = stationarity(model, gi, Pi, hi)[0] < 0.0
        while np.any(grow):
            lo[grow] = hi[grow]
            hi[grow] *= 2.0
            if np.any(hi[grow] > mu_max):
                log.error("psi bracket exceeded mu_max | mu_max=%.3e", mu_max)
                raise UnboundedModelError(
                    f"psi bracket exceeded mu_max={mu_max:.3e}; the cost grows too slowly"
                )
            grow[grow] = stationarity(model, gi[grow], Pi[grow], hi[grow])[0] < 0.0

        x0 = 0.5 * (lo + hi)
        if warm is not None:
            inside = (w > lo) & (w < hi)
            x0 = np.where(inside, w, x0)

        def func(x, sel):
            return stationarity(model, gi[sel], Pi[sel], x)

        result = safeguarded_newton(func, lo, hi, x0, tol_psi)
        mu[idx] = result.x
        residual[idx] = result.residual
        branch[idx] = 0

    return PsiField(mu=mu.reshape(shape), residual=residual.reshape(shape), branch=branch.reshape(shape))


def k_values(model: CongestionModel, g: np.ndarray, P: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """mu (g + kappa mu^(q-1)) - mu^(1-alpha) |p|^beta, which is 0 at mu = 0."""
    with np.errstate(invalid="ignore"):
        value = mu * (g + model.kappa * mu ** (model.q - 1.0)) - mu ** (1.0 - model.alpha) * P
    return np.where(mu > 0.0, value, 0.0)


def eval_K_field(
    model: CongestionModel,
    c: np.ndarray,
    gamma: np.ndarray,
    p: np.ndarray,
    tol_psi: float = DEFAULT_TOL_PSI,
    warm: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, PsiField]:
    psi = solve_psi_field(model, c, gamma, p, tol_psi=tol_psi, warm=warm)
    g = np.asarray(c, dtype=np.float64) + np.asarray(gamma, dtype=np.float64)
    P = np.linalg.norm(np.asarray(p, dtype=np.float64), axis=-1) ** model.beta
    g, P = np.broadcast_arrays(g, P)
    # rounding can push the minimum a hair above the mu = 0 value
    K = np.minimum(k_values(model, g, P, psi.mu), 0.0)
    return K, psi


def _point(model: CongestionModel, x, p) -> Tuple[np.ndarray, np.ndarray]:
    return model.cost_at(x).reshape(()), np.atleast_1d(np.asarray(p, dtype=np.float64))


def solve_psi(
    model: CongestionModel,
    x,
    gamma: float,
    p,
    tol_psi: float = DEFAULT_TOL_PSI,
    warm: Optional[float] = None,
    mu_max: float = DEFAULT_MU_MAX,
) -> PsiResult:
    c, p = _point(model, x, p)
    field = solve_psi_field(
        model, c, np.float64(gamma), p, tol_psi=tol_psi,
        warm=None if warm is None else np.float64(warm), mu_max=mu_max,
    )
    return PsiResult(
        mu=float(field.mu), residual=float(field.residual), branch=field.branch_at(())
    )


def eval_K(model: CongestionModel, x, gamma: float, p, tol_psi: float = DEFAULT_TOL_PSI) -> float:
    c, p = _point(model, x, p)
    K, _ = eval_K_field(model, c, np.float64(gamma), p, tol_psi=tol_psi)
    return float(K)
