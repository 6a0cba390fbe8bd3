from __future__ import annotations

from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from congestion_mfc.src.variational.certificate import Certificate

Step = Union[float, Literal["auto"]]


class SolverOptions(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    max_iters: int = Field(20000, ge=1)
    tol_gap: float = Field(1e-8, gt=0.0, description="relative duality gap")
    tol_feas: float = Field(1e-8, gt=0.0, description="FP residual in density units")
    tau: Step = "auto"
    sigma: Step = "auto"
    theta: float = Field(1.0, ge=0.0, le=1.0)
    check_every: int = Field(50, ge=1)
    seed: int = 0
    init_noise: float = Field(0.0, ge=0.0)
    power_iters: int = Field(30, ge=1)
    tol_prox: float = Field(1e-12, gt=0.0)
    eps_deg: float = Field(1e-10, gt=0.0)


class GapRecord(BaseModel):
    iteration: int
    gap: float
    rel_gap: float
    fp_residual: float
    primal: float
    dual: float
    gap_projected: float
    fp_recovered: float

    def score(self, tol_gap: float, tol_feas: float, tol_recovered: float) -> float:
        """Converged when <= 1: gap, FP of the iterate flux, FP of the flux m H_p."""
        return max(
            self.rel_gap / tol_gap,
            self.fp_residual / tol_feas,
            self.fp_recovered / tol_recovered,
        )


class SolverReport(BaseModel):
    iterations: int = 0
    converged: bool = False
    gap_history: List[GapRecord] = Field(default_factory=list)
    final_gap: float = float("nan")
    final_rel_gap: float = float("nan")
    fp_residual: float = float("nan")
    fp_recovered: float = float("nan")
    tau: float = float("nan")
    sigma: float = float("nan")
    norm_estimate: float = float("nan")
    wall_time: float = 0.0
    monitors: Dict[str, float] = Field(default_factory=dict)
    certificate: Optional[Certificate] = None

    def gap_frame(self) -> pd.DataFrame:
        columns = list(GapRecord.model_fields)
        return pd.DataFrame([r.model_dump() for r in self.gap_history], columns=columns)

    def write_gap_history(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.gap_frame().to_csv(path, index=False)
        return path

    def to_sections(self) -> Dict[str, Dict[str, Any]]:
        sections: Dict[str, Dict[str, Any]] = {
            "solver": {
                "converged": self.converged,
                "iterations": self.iterations,
                "final_gap": self.final_gap,
                "final_rel_gap": self.final_rel_gap,
                "fp_residual": self.fp_residual,
                "fp_recovered": self.fp_recovered,
                "tau": self.tau,
                "sigma": self.sigma,
                "norm_estimate": self.norm_estimate,
                "wall_time": self.wall_time,
            },
            "solver.monitors": dict(self.monitors),
        }
        if self.certificate is not None:
            sections.update(self.certificate.to_sections())
        return sections
