"""
Primal-dual hybrid gradient on the discrete saddle problem

    min_{m, z} max_{phi}  h^d dt sum L~(m, z) + <(m, z), Lambda phi> + h^d sum m0 phi(0)

with phi(T) <= u_T. Maximizing in phi enforces the FP constraint
(including m(0) = m0) and prices m(T) at u_T; minimizing in (m, z) gives A(phi). All inner products
carry the common weight h^d dt, so every prox is cellwise.
"""

from __future__ import annotations

import time
from typing import Optional, Tuple

import numpy as np

from congestion_mfc.exception.custom_exception import AuditFailedError
from congestion_mfc.logger import GLOBAL_LOGGER as log
from congestion_mfc.src.grid.operators import estimate_lambda_norm, lambda_adjoint, lambda_op
from congestion_mfc.src.grid.torus import SpaceTimeField, Staggering, TorusGrid, VectorField, check_spatial
from congestion_mfc.src.model.audit import audit_assumptions
from congestion_mfc.src.model.congestion_model import CongestionModel
from congestion_mfc.src.pointwise.prox import prox_ltilde_field
from congestion_mfc.src.solver.options import GapRecord, SolverOptions, SolverReport
from congestion_mfc.src.transport.fokker_planck import PrimalState, fp_residual, solve_fokker_planck
from congestion_mfc.src.variational.certificate import (
    CertificateTolerances,
    check_weak_solution,
    fp_threshold,
    recovered_flux,
)
from congestion_mfc.src.variational.functionals import DualState, eval_A, eval_B_raw
from congestion_mfc.src.variational.gamma import a_priori_monitors


def estimate_operator_norm(
    grid: TorusGrid, model: CongestionModel, iters: int = 30, seed: int = 0
) -> float:
    """Spectral norm of Lambda on all potentials, phi(T) included, by power iteration."""
    return estimate_lambda_norm(grid, model, iters=iters, seed=seed, free_terminal=True)


class PDHGSolver:
    """
    Runs the saddle iteration for one (model, grid, m0, u_T) problem:
      - step sizes from the operator norm
      - feasible-leaning start m = m0, z = 0, phi = u_T
      - periodic gap / FP residual checkpoints
      - extraction of (m, z), (phi, gamma) and the certificate
    """

    def __init__(
        self,
        model: CongestionModel,
        grid: TorusGrid,
        m0: np.ndarray,
        u_T: np.ndarray,
        options: Optional[SolverOptions] = None,
    ):
        self.model = model
        self.grid = grid
        self.m0 = check_spatial(grid, m0, "m0")
        self.u_T = check_spatial(grid, u_T, "u_T")
        self.options = options or SolverOptions()
        self.cost = model.cost_on(grid)
        self.certificate_tolerances = CertificateTolerances(eps_deg=self.options.eps_deg)
        self.tol_recovered = fp_threshold(self.certificate_tolerances, grid, self.m0)

        self._init_steps()
        self._init_state()
        log.info(
            "PDHG initialized | d=%d | nx=%d | nt=%d | tau=%.3e | sigma=%.3e | norm=%.4e",
            grid.d, grid.nx, grid.nt, self.tau, self.sigma, self.norm_estimate,
        )

    def _init_steps(self):
        opts = self.options
        self.norm_estimate = estimate_operator_norm(
            self.grid, self.model, iters=opts.power_iters, seed=opts.seed
        )
        norm = max(self.norm_estimate, np.finfo(float).tiny)
        # tau * sigma * ||K||^2 = 0.99^2 < 1
        budget = (0.99 / norm) ** 2
        if opts.tau == "auto" and opts.sigma == "auto":
            self.tau = self.sigma = 0.99 / norm
        elif opts.tau == "auto":
            self.sigma = float(opts.sigma)
            self.tau = budget / self.sigma
        elif opts.sigma == "auto":
            self.tau = float(opts.tau)
            self.sigma = budget / self.tau
        else:
            self.tau, self.sigma = float(opts.tau), float(opts.sigma)
            if self.tau * self.sigma * self.norm_estimate**2 >= 1.0:
                log.warning(
                    "Step sizes violate tau * sigma * ||K||^2 < 1 | tau=%.3e | sigma=%.3e",
                    self.tau, self.sigma,
                )

    def _init_state(self):
        grid, opts = self.grid, self.options
        nt = grid.nt
        self.m = np.repeat(self.m0[None], nt, axis=0)
        self.z = np.zeros(grid.shape(Staggering.CELL_TIME) + (grid.d,))
        self.phi = np.repeat(self.u_T[None], nt + 1, axis=0)
        if opts.init_noise > 0.0:
            rng = np.random.default_rng(opts.seed)
            self.m = self.m * (1.0 + opts.init_noise * rng.uniform(-0.5, 0.5, self.m.shape))
            self.z = self.z + opts.init_noise * rng.standard_normal(self.z.shape)
            self.phi[:-1] += opts.init_noise * rng.standard_normal(self.phi[:-1].shape)
        self.m_bar = self.m.copy()
        self.z_bar = self.z.copy()

    # ------------------------------------------------------------------ steps

    def _phi_field(self, values: np.ndarray) -> SpaceTimeField:
        return SpaceTimeField(self.grid, values, Staggering.NODE_TIME)

    def _state(self, m: np.ndarray, z: np.ndarray) -> PrimalState:
        return PrimalState(
            SpaceTimeField(self.grid, m, Staggering.CELL_TIME), VectorField(self.grid, z)
        )

    def _dual_step(self):
        state = self._state(self.m_bar, self.z_bar)
        step = lambda_adjoint(self.model, state.m, state.z).full()
        step[0] += self.m0 / self.grid.dt
        self.phi += self.sigma * step
        # terminal potential stays in phi(T) <= u_T
        self.phi[-1] = np.minimum(self.phi[-1], self.u_T)

    def _primal_step(self):
        a, b = lambda_op(self.model, self._phi_field(self.phi))
        m_old, z_old = self.m, self.z
        m_new, z_new = prox_ltilde_field(
            self.model,
            self.cost,
            m_old - self.tau * a.values,
            z_old - self.tau * b.values,
            self.tau,
            tol=self.options.tol_prox,
            warm=m_old,
        )
        theta = self.options.theta
        self.m_bar = m_new + theta * (m_new - m_old)
        self.z_bar = z_new + theta * (z_new - z_old)
        self.m, self.z = m_new, z_new

    def _checkpoint(self, iteration: int) -> GapRecord:
        state = self._state(self.m, self.z)
        phi = self._phi_field(self.phi)
        primal = eval_B_raw(self.model, state, self.u_T)
        dual = eval_A(self.model, phi, self.m0)
        gap = primal - dual
        denom = max(abs(primal), 1e-12)
        fp = fp_residual(self.model, state, self.m0).norm()

        # same flux, density pushed onto the constraint set: a true primal value
        projected = solve_fokker_planck(self.grid, self.model.nu, self.m0, state.z)
        gap_projected = eval_B_raw(self.model, PrimalState(projected, state.z), self.u_T) - dual

        # the certificate rebuilds the flux from phi; the stop rule holds it to the certificate bound
        eps = self.options.eps_deg
        m_cert = SpaceTimeField(self.grid, np.where(self.m < eps, 0.0, self.m), Staggering.CELL_TIME)
        z_rec = recovered_flux(self.model, phi, m_cert, eps)
        fp_recovered = fp_residual(self.model, PrimalState(m_cert, z_rec), self.m0).norm()

        return GapRecord(
            iteration=iteration,
            gap=gap,
            rel_gap=abs(gap) / denom,
            fp_residual=fp,
            primal=primal,
            dual=dual,
            gap_projected=gap_projected,
            fp_recovered=fp_recovered,
        )

    # -------------------------------------------------------------------- run

    def run(self) -> Tuple[PrimalState, DualState, SolverReport]:
        opts = self.options
        report = SolverReport(tau=self.tau, sigma=self.sigma, norm_estimate=self.norm_estimate)
        start = time.perf_counter()

        best_score = np.inf
        best = (self.m.copy(), self.z.copy(), self.phi.copy())
        record = None
        iteration = 0
        for iteration in range(1, opts.max_iters + 1):
            self._dual_step()
            self._primal_step()

            if iteration % opts.check_every and iteration != opts.max_iters:
                continue
            record = self._checkpoint(iteration)
            report.gap_history.append(record)
            log.info(
                "PDHG checkpoint | iter=%d | gap=%.3e | rel_gap=%.3e | fp_res=%.3e | fp_rec=%.3e",
                iteration, record.gap, record.rel_gap, record.fp_residual, record.fp_recovered,
            )
            score = record.score(opts.tol_gap, opts.tol_feas, self.tol_recovered)
            if np.isfinite(score) and score < best_score:
                best_score = score
                best = (self.m.copy(), self.z.copy(), self.phi.copy())
            if score <= 1.0:
                report.converged = True
                break

        if not report.converged:
            log.warning(
                "PDHG did not converge | iters=%d | best_score=%.3e", iteration, best_score
            )
            self.m, self.z, self.phi = best
            record = self._checkpoint(iteration)

        report.iterations = iteration
        report.final_gap = record.gap
        report.final_rel_gap = record.rel_gap
        report.fp_residual = record.fp_residual
        report.fp_recovered = record.fp_recovered
        report.wall_time = time.perf_counter() - start

        primal, dual = self._extract()
        report.monitors = a_priori_monitors(self.model, dual.phi, primal.m)
        report.certificate = check_weak_solution(
            self.model,
            dual.phi,
            primal.m,
            self.m0,
            self.u_T,
            z=primal.z,
            tolerances=self.certificate_tolerances,
        )
        log.info(
            "PDHG finished | converged=%s | iters=%d | rel_gap=%.3e | wall=%.2fs",
            report.converged, iteration, report.final_rel_gap, report.wall_time,
        )
        return primal, dual, report

    def _extract(self) -> Tuple[PrimalState, DualState]:
        eps = self.options.eps_deg
        empty = self.m < eps
        m = np.where(empty, 0.0, self.m)
        z = np.where(empty[..., None], 0.0, self.z)
        primal = self._state(m, z)
        phi = self._phi_field(self.phi.copy())
        a, _ = lambda_op(self.model, phi)
        return primal, DualState(phi, a)


def solve(
    model: CongestionModel,
    grid: TorusGrid,
    m0: np.ndarray,
    u_T: np.ndarray,
    options: Optional[SolverOptions] = None,
    audit: bool = True,
) -> Tuple[PrimalState, DualState, SolverReport]:
    if audit:
        audit_report = audit_assumptions(model, d=grid.d)
        if not audit_report.passed:
            names = ", ".join(v.assumption for v in audit_report.violations)
            log.error("Refusing to solve an unaudited model | violations=%s", names)
            raise AuditFailedError(f"model audit failed: {names}", report=audit_report)
    return PDHGSolver(model, grid, m0, u_T, options).run()
