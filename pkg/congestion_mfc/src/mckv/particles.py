"""
McKean-Vlasov particle cross-check.

Particles follow dX = v(t, X) dt + sqrt(2 nu) dW on the torus with a feedback
sampled on the grid (linear/bilinear in space, constant on each time cell),
stepped by Euler-Maruyama with the PDE time step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from congestion_mfc.exception.custom_exception import InsufficientParticlesError
from congestion_mfc.logger import GLOBAL_LOGGER as log
from congestion_mfc.src.grid.torus import SpaceTimeField, Staggering, TorusGrid, VectorField, check_spatial
from congestion_mfc.src.model.congestion_model import CongestionModel
from congestion_mfc.utils.thread_pool import map_ordered

MIN_PARTICLES = 100
BLOCK_SIZE = 8192


@dataclass(frozen=True)
class ParticleEnsemble:
    positions: np.ndarray  # (Np, d) in [0, 1)^d
    seed: int
    time_index: int

    @property
    def count(self) -> int:
        return self.positions.shape[0]


@dataclass(frozen=True)
class SimulationResult:
    grid: TorusGrid
    trajectory: np.ndarray  # (nt + 1, Np, d) positions at the time nodes
    node_densities: np.ndarray  # (nt + 1, *spatial) histograms at the time nodes
    densities: SpaceTimeField  # cell_time: mean of the two endpoint histograms
    seed: int

    @property
    def n_particles(self) -> int:
        return self.trajectory.shape[1]

    def ensemble(self, k: int) -> ParticleEnsemble:
        return ParticleEnsemble(self.trajectory[k], self.seed, k)


@dataclass(frozen=True)
class CostEstimate:
    mean: float
    standard_error: float
    n_used: int
    n_excluded: int


def nearest_nodes(grid: TorusGrid, X: np.ndarray) -> np.ndarray:
    return np.mod(np.rint(X / grid.h).astype(np.int64), grid.nx)


def interpolate_periodic(grid: TorusGrid, values: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Multilinear periodic interpolation of a spatial slice (optionally with trailing components)."""
    s = X / grid.h
    base = np.floor(s)
    frac = s - base
    i0 = np.mod(base.astype(np.int64), grid.nx)
    trailing = values.shape[grid.d:]
    out = np.zeros((X.shape[0],) + trailing)
    for corner in range(2**grid.d):
        bits = [(corner >> axis) & 1 for axis in range(grid.d)]
        weight = np.ones(X.shape[0])
        index = []
        for axis, bit in enumerate(bits):
            weight = weight * (frac[:, axis] if bit else 1.0 - frac[:, axis])
            index.append(np.mod(i0[:, axis] + bit, grid.nx))
        out += weight.reshape((-1,) + (1,) * len(trailing)) * values[tuple(index)]
    return out


def histogram(grid: TorusGrid, X: np.ndarray) -> np.ndarray:
    """Density on the nodes: particle counts by nearest node over Np h^d."""
    nodes = nearest_nodes(grid, X)
    flat = np.ravel_multi_index(tuple(nodes.T), grid.spatial_shape)
    counts = np.bincount(flat, minlength=grid.nx**grid.d).reshape(grid.spatial_shape)
    return counts / (X.shape[0] * grid.cell_volume)


def sample_initial(
    grid: TorusGrid, m0: np.ndarray, n: int, rng: np.random.Generator
) -> np.ndarray:
    """Inverse-CDF over node cells on the circle, rejection sampling in d = 2."""
    if grid.d == 1:
        weights = grid.h * m0
        cdf = np.cumsum(weights)
        cdf /= cdf[-1]
        cells = np.minimum(np.searchsorted(cdf, rng.random(n), side="right"), grid.nx - 1)
        x = (cells + rng.random(n) - 0.5) * grid.h
        return np.mod(x, 1.0)[:, None]

    peak = float(np.max(m0))
    accepted: List[np.ndarray] = []
    remaining = n
    while remaining > 0:
        proposal = rng.random((2 * remaining, grid.d))
        nodes = nearest_nodes(grid, proposal)
        ratio = m0[tuple(nodes.T)] / peak
        keep = proposal[rng.random(proposal.shape[0]) < ratio]
        accepted.append(keep[:remaining])
        remaining -= accepted[-1].shape[0]
    return np.concatenate(accepted, axis=0)


def _simulate_block(
    grid: TorusGrid,
    nu: float,
    v: np.ndarray,
    m0: np.ndarray,
    n: int,
    seed: int,
    block: int,
) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([seed, block]))
    X = sample_initial(grid, m0, n, rng)
    path = np.empty((grid.nt + 1, n, grid.d))
    path[0] = X
    noise_scale = np.sqrt(2.0 * nu * grid.dt)
    for k in range(grid.nt):
        drift = interpolate_periodic(grid, v[k], X)
        X = np.mod(X + drift * grid.dt + noise_scale * rng.standard_normal(X.shape), 1.0)
        path[k + 1] = X
    return path


def simulate(
    model: CongestionModel,
    v: VectorField,
    m0: np.ndarray,
    n_particles: int,
    seed: int = 0,
    block_size: int = BLOCK_SIZE,
) -> SimulationResult:
    grid = v.grid
    m0 = check_spatial(grid, m0, "m0")
    if n_particles < MIN_PARTICLES:
        raise InsufficientParticlesError(
            f"need at least {MIN_PARTICLES} particles, got {n_particles}"
        )

    sizes = [block_size] * (n_particles // block_size)
    if n_particles % block_size:
        sizes.append(n_particles % block_size)
    log.info(
        "Particle simulation started | Np=%d | blocks=%d | nt=%d | seed=%d",
        n_particles, len(sizes), grid.nt, seed,
    )

    paths = map_ordered(
        lambda job: _simulate_block(grid, model.nu, v.values, m0, job[1], seed, job[0]),
        list(enumerate(sizes)),
    )
    trajectory = np.concatenate(paths, axis=1)

    node_densities = np.stack([histogram(grid, trajectory[k]) for k in range(grid.nt + 1)])
    cells = 0.5 * (node_densities[1:] + node_densities[:-1])
    log.info("Particle simulation finished | Np=%d", n_particles)
    return SimulationResult(
        grid=grid,
        trajectory=trajectory,
        node_densities=node_densities,
        densities=SpaceTimeField(grid, cells, Staggering.CELL_TIME),
        seed=seed,
    )


def estimate_cost(
    model: CongestionModel,
    result: SimulationResult,
    v: VectorField,
    u_T: np.ndarray,
    density: Optional[SpaceTimeField] = None,
) -> CostEstimate:
    """
    Monte-Carlo mean over particles of sum_k L(X_k, m_hat, v(t_k, X_k)) dt + u_T(X_T).
    m_hat is the empirical density unless a density field is plugged in.
    Particles that put a nonzero control on an empty cell are excluded and counted.
    """
    grid = result.grid
    grid.require_same(v.grid)
    u_T = check_spatial(grid, u_T, "u_T")
    m_hat = result.densities if density is None else density
    grid.require_same(m_hat.grid)

    n = result.n_particles
    total = np.zeros(n)
    excluded = np.zeros(n, dtype=bool)
    A = model.ltilde_coeff
    for k in range(grid.nt):
        X = result.trajectory[k]
        nodes = nearest_nodes(grid, X)
        mk = np.maximum(m_hat.values[k][tuple(nodes.T)], 0.0)
        xi = np.linalg.norm(interpolate_periodic(grid, v.values[k], X), axis=-1)
        excluded |= (mk <= 0.0) & (xi > 0.0)
        kinetic = A * mk ** (model.alpha / (model.beta - 1.0)) * xi**model.beta_star
        running = model.cost_at(X) + model.kappa * mk ** (model.q - 1.0)
        total += (kinetic + running) * grid.dt
    total += interpolate_periodic(grid, u_T, result.trajectory[-1])

    used = total[~excluded]
    if excluded.any():
        log.warning("Particles excluded by the empty-cell guard | count=%d", int(excluded.sum()))
    if used.size == 0:
        return CostEstimate(mean=np.inf, standard_error=np.inf, n_used=0, n_excluded=n)
    se = float(np.std(used, ddof=1) / np.sqrt(used.size)) if used.size > 1 else np.inf
    return CostEstimate(
        mean=float(np.mean(used)),
        standard_error=se,
        n_used=int(used.size),
        n_excluded=int(excluded.sum()),
    )


def density_l1_errors(empirical: SpaceTimeField, reference: SpaceTimeField) -> np.ndarray:
    """Per-slice discrete L1 distance h^d sum |m_emp - m_ref|."""
    empirical.grid.require_same(reference.grid)
    if empirical.staggering != reference.staggering:
        raise ValueError("density fields use different staggerings")
    axes = empirical.grid.spatial_axes()
    diff = np.abs(empirical.values - reference.values)
    return empirical.grid.cell_volume * np.sum(diff, axis=axes)
