from __future__ import annotations

from typing import Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from congestion_mfc.src.grid.spatial import SpatialSpec, resolve_spec
from congestion_mfc.src.grid.torus import TorusGrid


class CongestionModel(BaseModel):
    """
    H(x, m, p) = -|p|^beta / m^alpha + l(x, m),  l(x, m) = c(x) + kappa * m^(q-1).

    The growth condition beta >= q* is left to audit_assumptions so that
    violating parameter sets can still be built and reported on.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    alpha: float = Field(0.5, ge=0.0, lt=1.0, description="congestion exponent")
    beta: float = Field(2.0, gt=1.0, le=2.0, description="gradient exponent")
    q: float = Field(2.0, gt=1.0, description="cost growth exponent")
    kappa: float = Field(1.0, gt=0.0, description="cost scale")
    nu: float = Field(0.05, ge=0.0, description="diffusion coefficient")
    cost: SpatialSpec = Field(default_factory=SpatialSpec, description="c(x) >= 0")

    @field_validator("cost", mode="before")
    @classmethod
    def _resolve_cost(cls, value: Union[str, dict, SpatialSpec, None]) -> SpatialSpec:
        return resolve_spec(value)

    @property
    def beta_star(self) -> float:
        return self.beta / (self.beta - 1.0)

    @property
    def q_star(self) -> float:
        return self.q / (self.q - 1.0)

    # L~(m, z) = A |z|^r m^e + m l(x, m)
    @property
    def ltilde_coeff(self) -> float:
        return (self.beta - 1.0) * self.beta ** (-self.beta_star)

    @property
    def ltilde_power(self) -> float:
        return self.beta_star

    @property
    def ltilde_mass_exponent(self) -> float:
        return (self.alpha - 1.0) / (self.beta - 1.0)

    def cost_at(self, x) -> np.ndarray:
        """c(x) at points of shape (..., d); a bare scalar is a point of the circle."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 0:
            x = x[None]
        return self.cost.evaluate(x)

    def cost_on(self, grid: TorusGrid) -> np.ndarray:
        return self.cost.sample(grid)

