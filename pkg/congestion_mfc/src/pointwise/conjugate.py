from __future__ import annotations

from typing import Tuple

import numpy as np

from congestion_mfc.src.model.congestion_model import CongestionModel
from congestion_mfc.src.pointwise.psi import eval_K_field


def conjugate_ltilde_bruteforce(
    model: CongestionModel,
    x,
    mu: float,
    z,
    gamma_range: Tuple[float, float] = (-4.0, 2.0),
    p_radius: float = 4.0,
    n: int = 65,
) -> float:
    """
    max over an n-point gamma axis times an n^d momentum box of
    -mu gamma - z . p + K(x, gamma, p). Lower bound for L~(x, mu, z),
    nondecreasing under nested refinement (n -> 2n - 1).
    """
    if mu < 0.0:
        raise ValueError("mu must be nonnegative")
    z = np.atleast_1d(np.asarray(z, dtype=np.float64))
    d = z.shape[-1]
    gammas = np.linspace(gamma_range[0], gamma_range[1], n)
    axis = np.linspace(-p_radius, p_radius, n)
    p_axes = np.meshgrid(*([axis] * d), indexing="ij")
    p = np.stack(p_axes, axis=-1).reshape(-1, d)

    G = gammas[:, None]
    P = p[None, :, :]
    K, _ = eval_K_field(model, model.cost_at(x), G, P)
    values = -mu * G - P @ z + K
    return float(np.max(values))
