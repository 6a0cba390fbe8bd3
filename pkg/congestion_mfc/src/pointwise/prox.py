"""
Proximal map of L~:

    argmin_{m >= 0, z}  ((m - m_hat)^2 + |z - z_hat|^2) / (2 sigma) + L~(x, m, z).

The optimal z is s * z_hat / |z_hat| with 0 <= s <= |z_hat|, so the problem
reduces to (m, s). For fixed m the s-equation

    s - s_hat + sigma A r m^e s^(r-1) = 0

is solved in closed form when r = 2 and by Newton from s_hat otherwise
(r = beta* >= 2, so the left side is convex and the iteration is monotone).
The outer equation in m is the derivative of the reduced objective, which is
increasing because partial minimization keeps convexity.
"""

from __future__ import annotations

from typing import Optional, Tuple

import numpy as np

from congestion_mfc.exception.custom_exception import NumericalConvergenceError
from congestion_mfc.logger import GLOBAL_LOGGER as log
from congestion_mfc.src.model.congestion_model import CongestionModel
from congestion_mfc.src.model.hamiltonian import ltilde_values
from congestion_mfc.src.pointwise.root import safeguarded_newton

DEFAULT_TOL_PROX = 1e-12
M_CAP = 1e15


def _pow_pos(base: np.ndarray, exponent) -> np.ndarray:
    """base^exponent for base > 0, 0 where base == 0 (exponent assumed positive there)."""
    positive = base > 0.0
    safe = np.where(positive, base, 1.0)
    return np.where(positive, safe**exponent, 0.0)


def _inner_s(model: CongestionModel, m: np.ndarray, s_hat: np.ndarray, sigma: float):
    """s(m) and ds/dm for m > 0."""
    A, r, e = model.ltilde_coeff, model.ltilde_power, model.ltilde_mass_exponent
    with np.errstate(over="ignore"):
        me = m**e
    k = sigma * A * r * me

    if r == 2.0:
        s = s_hat / (1.0 + k)
    else:
        s = s_hat.copy()
        active = np.flatnonzero(s_hat > 0.0)
        for _ in range(100):
            if not active.size:
                break
            sa, ka = s[active], k[active]
            h = sa - s_hat[active] + ka * sa ** (r - 1.0)
            dh = 1.0 + ka * (r - 1.0) * sa ** (r - 2.0)
            with np.errstate(invalid="ignore"):
                s_new = np.nan_to_num(np.maximum(sa - h / dh, 0.0), nan=0.0)
            s[active] = s_new
            moved = np.abs(s_new - sa) > 1e-15 * np.maximum(s_hat[active], 1.0)
            active = active[moved]

    # ds/dm = -sigma A r e m^(e-1) s^(r-1) / (1 + sigma A r (r-1) m^e s^(r-2))
    with np.errstate(over="ignore", invalid="ignore"):
        num = k * e / m * _pow_pos(s, r - 1.0)
        den = 1.0 + k * (r - 1.0) * (_pow_pos(s, r - 2.0) if r > 2.0 else 1.0)
        ds = np.where(s > 0.0, -num / den, 0.0)
    return s, ds


def _outer(
    model: CongestionModel,
    c: np.ndarray,
    m_hat: np.ndarray,
    s_hat: np.ndarray,
    sigma: float,
    m: np.ndarray,
):
    """sigma * g(m) and its derivative, g the reduced objective's m-derivative."""
    A, r, e = model.ltilde_coeff, model.ltilde_power, model.ltilde_mass_exponent
    q, kappa = model.q, model.kappa
    s, ds = _inner_s(model, m, s_hat, sigma)
    positive = s > 0.0
    safe_s = np.where(positive, s, 1.0)
    log_m = np.log(m)

    with np.errstate(over="ignore", invalid="ignore"):
        # s^r m^(e-1), s^r m^(e-2), s^(r-1) m^(e-1) through logs to avoid 0 * inf
        t1 = np.where(positive, np.exp(r * np.log(safe_s) + (e - 1.0) * log_m), 0.0)
        t2 = np.where(positive, np.exp(r * np.log(safe_s) + (e - 2.0) * log_m), 0.0)
        t3 = np.where(positive, np.exp((r - 1.0) * np.log(safe_s) + (e - 1.0) * log_m), 0.0)

        g = (m - m_hat) / sigma + A * e * t1 + c + kappa * q * m ** (q - 1.0)
        dg = (
            1.0 / sigma
            + A * e * (e - 1.0) * t2
            + kappa * q * (q - 1.0) * m ** (q - 2.0)
            + A * e * r * t3 * ds
        )
    return sigma * g, sigma * dg, s


def _objective(model, c, m_hat, s_hat, sigma, m, s) -> np.ndarray:
    quad = ((m - m_hat) ** 2 + (s - s_hat) ** 2) / (2.0 * sigma)
    return quad + ltilde_values(model, c, m, s[..., None])


def prox_ltilde_field(
    model: CongestionModel,
    c: np.ndarray,
    m_hat: np.ndarray,
    z_hat: np.ndarray,
    sigma: float,
    tol: float = DEFAULT_TOL_PROX,
    warm: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Cellwise prox; z_hat carries its components on the last axis."""
    if sigma <= 0.0:
        raise ValueError(f"prox step must be positive, got sigma={sigma}")
    m_hat = np.asarray(m_hat, dtype=np.float64)
    z_hat = np.asarray(z_hat, dtype=np.float64)
    shape = m_hat.shape
    d = z_hat.shape[-1]

    mh = m_hat.ravel()
    zh = z_hat.reshape(-1, d)
    sh = np.linalg.norm(zh, axis=-1)
    cc = np.broadcast_to(np.asarray(c, dtype=np.float64), shape).ravel()

    def func(x, sel):
        f, df, _ = _outer(model, cc[sel], mh[sel], sh[sel], sigma, x)
        return f, df

    # bracket: g(0+) < 0 is handled by lo = 0, grow hi until g(hi) >= 0
    hi = np.maximum(np.maximum(mh, 0.0), 1.0)
    grow = func(hi, np.arange(mh.size))[0] < 0.0
    lo = np.zeros(mh.size)
    while np.any(grow):
        lo[grow] = hi[grow]
        hi[grow] *= 2.0
        if np.any(hi[grow] > M_CAP):
            log.error("prox bracket exceeded cap | cap=%.1e", M_CAP)
            raise NumericalConvergenceError(
                "prox_ltilde bracket expansion failed",
                diagnostics={"cells": int(np.sum(grow)), "cap": M_CAP},
            )
        sel = np.flatnonzero(grow)
        grow[sel] = func(hi[sel], sel)[0] < 0.0

    x0 = 0.5 * (lo + hi)
    if warm is not None:
        w = np.broadcast_to(np.asarray(warm, dtype=np.float64), shape).ravel()
        x0 = np.where((w > lo) & (w < hi), w, x0)

    floor = 1e-14
    result = safeguarded_newton(func, lo, hi, x0, tol, max_iter=500, floor=floor)
    if not np.all(result.converged):
        bad = int(np.sum(~result.converged))
        log.error("prox_ltilde did not converge | cells=%d", bad)
        raise NumericalConvergenceError(
            "prox_ltilde outer iteration cap reached",
            diagnostics={
                "cells": bad,
                "max_residual": float(np.nanmax(np.abs(result.residual[~result.converged]))),
                "iterations": result.iterations,
            },
        )

    m = result.x
    _, _, s = _outer(model, cc, mh, sh, sigma, m)

    # compare against the origin; ties go to (0, 0)
    interior = _objective(model, cc, mh, sh, sigma, m, s)
    origin = (mh**2 + sh**2) / (2.0 * sigma)
    take_origin = origin <= interior + 1e-15 * np.maximum(np.abs(interior), 1.0)
    m = np.where(take_origin, 0.0, m)
    s = np.where(take_origin, 0.0, s)

    direction = np.where(sh[:, None] > 0.0, zh / np.where(sh > 0.0, sh, 1.0)[:, None], 0.0)
    z = s[:, None] * direction
    return m.reshape(shape), z.reshape(shape + (d,))


def prox_ltilde(
    model: CongestionModel,
    x,
    m_hat: float,
    z_hat,
    sigma: float,
    tol: float = DEFAULT_TOL_PROX,
) -> Tuple[float, np.ndarray]:
    z_hat = np.atleast_1d(np.asarray(z_hat, dtype=np.float64))
    m, z = prox_ltilde_field(
        model, model.cost_at(x).reshape(()), np.asarray(m_hat, dtype=np.float64), z_hat, sigma, tol=tol
    )
    return float(m), z
