from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

from congestion_mfc.logger import GLOBAL_LOGGER as log

# func(x, idx) -> (f, df) for the cells listed in idx
RootFunction = Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]


@dataclass
class RootResult:
    x: np.ndarray
    residual: np.ndarray
    converged: np.ndarray
    iterations: int


def safeguarded_newton(
    func: RootFunction,
    lo: np.ndarray,
    hi: np.ndarray,
    x0: np.ndarray,
    tol: float,
    newton_steps: int = 50,
    max_iter: int = 2000,
    floor: float = 0.0,
) -> RootResult:
    """
    Vectorized Newton on increasing functions with a bracket f(lo) < 0 <= f(hi).

    lo may be 0 with f(0) never evaluated. A Newton step leaving the open
    bracket, or a non-finite step, is replaced by bisection; after
    newton_steps iterations only bisection is used. A cell stops when
    |f| <= tol, when the bracket shrinks to a few ulps, or when hi <= floor.
    """
    lo = np.array(lo, dtype=np.float64, copy=True)
    hi = np.array(hi, dtype=np.float64, copy=True)
    x = np.array(x0, dtype=np.float64, copy=True)
    residual = np.full(x.shape, np.nan)
    converged = np.zeros(x.shape, dtype=bool)
    active = np.arange(x.size)
    eps = np.finfo(np.float64).eps

    it = 0
    while active.size and it < max_iter:
        xa = x[active]
        f, df = func(xa, active)
        residual[active] = f

        negative = f < 0.0
        lo[active] = np.where(negative, xa, lo[active])
        hi[active] = np.where(negative, hi[active], xa)

        la, ha = lo[active], hi[active]
        done = (np.abs(f) <= tol) | (ha - la <= 4.0 * eps * ha) | (ha <= floor)
        converged[active[done]] = True

        keep = ~done
        active = active[keep]
        if not active.size:
            break
        f, df, xa, la, ha = f[keep], df[keep], xa[keep], la[keep], ha[keep]
        if it == newton_steps:
            log.debug("Root solve falling back to bisection | cells=%d", active.size)

        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            step = xa - f / df
        bisect = 0.5 * (la + ha)
        use_bisection = (
            (it >= newton_steps)
            | ~np.isfinite(step)
            | (step <= la)
            | (step >= ha)
        )
        x[active] = np.where(use_bisection, bisect, step)
        it += 1

    if active.size:
        log.debug("Root solve hit the iteration cap | cells=%d | iters=%d", active.size, it)
    return RootResult(x=x, residual=residual, converged=converged, iterations=it)
