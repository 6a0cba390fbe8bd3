from __future__ import annotations

from typing import Any, Dict, List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, computed_field

from congestion_mfc.logger import GLOBAL_LOGGER as log
from congestion_mfc.src.model.congestion_model import CongestionModel
from congestion_mfc.src.model.hamiltonian import cost_m_values, cost_values


class Violation(BaseModel):
    model_config = ConfigDict(frozen=True)

    assumption: str
    point: Tuple[float, ...] = ()
    measured: float
    bound: float


class AuditReport(BaseModel):
    violations: List[Violation] = Field(default_factory=list)
    C1: float = float("nan")
    C2: float = float("nan")
    C3: float = float("nan")

    @computed_field
    @property
    def passed(self) -> bool:
        return not self.violations

    def to_sections(self) -> Dict[str, Dict[str, Any]]:
        sections: Dict[str, Dict[str, Any]] = {
            "audit": {
                "passed": self.passed,
                "violations": len(self.violations),
                "C1": self.C1,
                "C2": self.C2,
                "C3": self.C3,
            }
        }
        for i, v in enumerate(self.violations):
            sections[f"violation.{i}"] = {
                "assumption": v.assumption,
                "point": list(v.point) if v.point else "none",
                "measured": v.measured,
                "bound": v.bound,
            }
        return sections


def _fit_growth_constant(value: np.ndarray, power: np.ndarray) -> float:
    """
    Smallest C with power / C - C <= value <= C (1 + power) on every sample.
    The lower bound is C^2 + value * C - power >= 0, i.e. C at least the positive root.
    """
    upper = value / (1.0 + power)
    lower = 0.5 * (-value + np.sqrt(value**2 + 4.0 * power))
    return float(max(np.max(upper), np.max(lower), np.finfo(float).tiny))


def _torus_distance(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    delta = np.abs(x - y)
    delta = np.minimum(delta, 1.0 - delta)
    return np.linalg.norm(delta, axis=-1)


def _sample_points(n_x: int, d: int) -> np.ndarray:
    axis = np.arange(n_x) / n_x
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack(mesh, axis=-1).reshape(-1, d)


def _lipschitz_pairs(
    points: np.ndarray, rng: np.random.Generator, max_pairs: int
) -> Tuple[np.ndarray, np.ndarray]:
    n = points.shape[0]
    if n * (n - 1) // 2 <= max_pairs:
        i, j = np.triu_indices(n, k=1)
    else:
        i = rng.integers(0, n, size=max_pairs)
        j = rng.integers(0, n, size=max_pairs)
        keep = i != j
        i, j = i[keep], j[keep]
    return i, j


def audit_assumptions(
    model: CongestionModel,
    n_x: int = 64,
    n_m: int = 64,
    m_max: float = 10.0,
    d: int = 1,
    max_pairs: int = 20000,
    seed: int = 0,
) -> AuditReport:
    """
    Sample l on an (x, m) grid and check the standing assumptions: growth
    constants C1, C2 (fitted), the Lipschitz constant C3 (fitted), beta >= q*,
    positive diffusion, c >= 0 and strict convexity of m -> m l(x, m).
    """
    if n_x < 2 or n_m < 3:
        raise ValueError("audit needs n_x >= 2 and n_m >= 3 samples")
    log.info(
        "Model audit started | alpha=%s | beta=%s | q=%s | kappa=%s | nu=%s",
        model.alpha, model.beta, model.q, model.kappa, model.nu,
    )
    violations: List[Violation] = []

    if model.beta < model.q_star - 1e-12:
        violations.append(
            Violation(assumption="H3", measured=model.beta, bound=model.q_star)
        )
    if model.nu <= 0.0:
        violations.append(Violation(assumption="H5", measured=model.nu, bound=0.0))

    points = _sample_points(n_x, d)
    c = model.cost_at(points)
    if np.min(c) < 0.0:
        k = int(np.argmin(c))
        violations.append(
            Violation(
                assumption="cost_nonnegative",
                point=tuple(points[k].tolist()),
                measured=float(c[k]),
                bound=0.0,
            )
        )

    m = np.linspace(0.0, m_max, n_m)
    ell = cost_values(model, c[:, None], m[None, :])
    power = np.broadcast_to(m[None, :] ** (model.q - 1.0), ell.shape)
    if np.min(ell) < 0.0:
        k, j = np.unravel_index(int(np.argmin(ell)), ell.shape)
        violations.append(
            Violation(
                assumption="cost_nonnegative_density",
                point=tuple(points[k].tolist()) + (float(m[j]),),
                measured=float(ell[k, j]),
                bound=0.0,
            )
        )

    C1 = _fit_growth_constant(ell, power)

    m_pos = m[1:]
    ell_m = m_pos * cost_m_values(model, m_pos)
    C2 = _fit_growth_constant(ell_m[None, :], m_pos[None, :] ** (model.q - 1.0))

    # strict convexity of m -> m l(x, m) through second differences
    energy = m[None, :] * ell
    second = energy[:, 2:] - 2.0 * energy[:, 1:-1] + energy[:, :-2]
    scale = np.finfo(float).eps * np.maximum(np.abs(energy[:, 1:-1]), 1.0)
    if np.any(second <= scale):
        k, j = np.unravel_index(int(np.argmin(second - scale)), second.shape)
        violations.append(
            Violation(
                assumption="strict_convexity",
                point=tuple(points[k].tolist()) + (float(m[j + 1]),),
                measured=float(second[k, j]),
                bound=0.0,
            )
        )

    rng = np.random.default_rng(seed)
    i, j = _lipschitz_pairs(points, rng, max_pairs)
    dist = _torus_distance(points[i], points[j])
    # |l(x, m) - l(y, m)| / (1 + m^(q-1)) is largest at m = 0 for this family
    quotient = np.abs(c[i] - c[j]) / np.where(dist > 0.0, dist, np.inf)
    C3 = float(np.max(quotient)) if quotient.size else 0.0
    if not np.isfinite(C3):
        violations.append(Violation(assumption="lipschitz_cost", measured=C3, bound=np.inf))

    report = AuditReport(violations=violations, C1=C1, C2=C2, C3=C3)
    if report.passed:
        log.info("Model audit passed | C1=%.4g | C2=%.4g | C3=%.4g", C1, C2, C3)
    else:
        log.warning(
            "Model audit failed | violations=%s",
            ", ".join(v.assumption for v in report.violations),
        )
    return report
