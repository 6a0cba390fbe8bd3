import numpy as np
import pytest

from congestion_mfc.exception.custom_exception import AuditFailedError
from congestion_mfc.src.grid.operators import lambda_adjoint
from congestion_mfc.src.grid.spatial import sample_density
from congestion_mfc.src.grid.torus import SpaceTimeField, Staggering, TorusGrid, VectorField
from congestion_mfc.src.mckv.particles import density_l1_errors, estimate_cost, simulate
from congestion_mfc.src.model.congestion_model import CongestionModel
from congestion_mfc.src.solver.feedback import feedback_velocity, recover_feedback
from congestion_mfc.src.solver.options import GapRecord, SolverOptions
from congestion_mfc.src.solver.pdhg import PDHGSolver, solve
from congestion_mfc.src.transport.fokker_planck import total_mass
from congestion_mfc.src.variational.functionals import eval_B_raw


def _options(**kw):
    base = dict(max_iters=20000, tol_gap=1e-6, tol_feas=1e-6, check_every=25)
    base.update(kw)
    return SolverOptions(**base)


def test_uniform_problem_recovers_closed_form(tiny_grid, uniform_model):
    m0 = np.ones(tiny_grid.spatial_shape)
    u_T = np.zeros(tiny_grid.spatial_shape)
    primal, dual, report = solve(uniform_model, tiny_grid, m0, u_T, _options())

    assert report.converged
    np.testing.assert_allclose(primal.m.values, 1.0, atol=1e-3)
    np.testing.assert_allclose(primal.z.values, 0.0, atol=1e-3)
    t = tiny_grid.time_nodes()[:, None]
    np.testing.assert_allclose(dual.phi.values, np.broadcast_to(2.0 * (1.0 - t), dual.phi.values.shape), atol=1e-3)
    assert report.final_rel_gap <= 1e-6
    assert report.certificate is not None
    assert report.certificate.primal_value == pytest.approx(1.0, abs=1e-3)


def test_cosine_run_keeps_density_admissible(tiny_grid, uniform_model):
    m0 = sample_density(tiny_grid, {"kind": "cosine", "offset": 1.0, "amplitude": 0.5})
    u_T = 0.2 * np.cos(2 * np.pi * tiny_grid.node_coordinates()[..., 0])
    primal, _, report = solve(uniform_model, tiny_grid, m0, u_T, _options())

    assert report.converged
    assert np.all(primal.m.values >= 0.0)
    assert report.fp_residual <= 1e-6
    for k in range(tiny_grid.nt):
        assert total_mass(primal.m, k) == pytest.approx(1.0, abs=1e-5)


def test_projected_gap_is_never_negative(tiny_grid, uniform_model):
    m0 = sample_density(tiny_grid, {"kind": "cosine", "offset": 1.0, "amplitude": 0.8})
    u_T = np.sin(2 * np.pi * tiny_grid.node_coordinates()[..., 0])
    _, _, report = solve(
        uniform_model, tiny_grid, m0, u_T, _options(max_iters=500, check_every=10, init_noise=0.1)
    )
    assert report.gap_history
    for record in report.gap_history:
        assert record.gap_projected >= -1e-10


def test_gap_frame_matches_history(tiny_grid, uniform_model, tmp_path):
    m0 = np.ones(tiny_grid.spatial_shape)
    _, _, report = solve(
        uniform_model, tiny_grid, m0, np.zeros_like(m0), _options(max_iters=100, check_every=20)
    )
    frame = report.gap_frame()
    assert list(frame["iteration"]) == [r.iteration for r in report.gap_history]
    path = report.write_gap_history(tmp_path / "gap_history.csv")
    assert path.read_text().splitlines()[0].startswith("iteration,gap,rel_gap")
    assert list(frame.columns)[-1] == "fp_recovered"
    assert frame["fp_recovered"].notna().all()


def test_flux_matches_recovered_feedback(tiny_grid, uniform_model):
    m0 = sample_density(tiny_grid, {"kind": "cosine", "offset": 1.0, "amplitude": 0.3})
    primal, dual, report = solve(uniform_model, tiny_grid, m0, np.zeros_like(m0), _options())
    assert report.converged
    assert report.certificate.flux_consistency <= 1e-3

    z_rec = recover_feedback(uniform_model, primal.m, dual.phi)
    scale = max(np.sum(np.abs(primal.z.values)), 1e-12)
    assert np.sum(np.abs(z_rec.values - primal.z.values)) / scale <= 1e-2


def test_step_sizes_respect_the_norm_bound(tiny_grid, uniform_model):
    m0 = np.ones(tiny_grid.spatial_shape)
    auto = PDHGSolver(uniform_model, tiny_grid, m0, np.zeros_like(m0), _options())
    assert auto.tau == auto.sigma
    assert auto.tau * auto.sigma * auto.norm_estimate**2 == pytest.approx(0.99**2)

    fixed = PDHGSolver(uniform_model, tiny_grid, m0, np.zeros_like(m0), _options(tau=1e-3))
    assert fixed.tau == 1e-3
    assert fixed.tau * fixed.sigma * fixed.norm_estimate**2 == pytest.approx(0.99**2)


def test_runs_are_reproducible(tiny_grid, uniform_model):
    m0 = sample_density(tiny_grid, {"kind": "cosine", "offset": 1.0, "amplitude": 0.5})
    opts = _options(max_iters=200, init_noise=0.05, seed=7)
    first, _, _ = solve(uniform_model, tiny_grid, m0, np.zeros_like(m0), opts)
    second, _, _ = solve(uniform_model, tiny_grid, m0, np.zeros_like(m0), opts)
    np.testing.assert_array_equal(first.m.values, second.m.values)
    np.testing.assert_array_equal(first.z.values, second.z.values)


def test_different_seeds_reach_the_same_solution(tiny_grid, uniform_model):
    m0 = sample_density(tiny_grid, {"kind": "cosine", "offset": 1.0, "amplitude": 0.5})
    runs = [
        solve(
            uniform_model,
            tiny_grid,
            m0,
            np.zeros_like(m0),
            _options(tol_gap=1e-8, tol_feas=1e-8, init_noise=0.05, seed=seed),
        )
        for seed in (0, 3)
    ]
    assert all(report.converged for _, _, report in runs)
    (first, _, _), (second, _, _) = runs
    assert tiny_grid.weight * np.sum(np.abs(first.m.values - second.m.values)) <= 1e-5


def test_stop_rule_waits_for_the_recovered_flux():
    record = GapRecord(
        iteration=25, gap=1e-9, rel_gap=1e-9, fp_residual=1e-9, primal=1.0, dual=1.0, gap_projected=1e-9,
        fp_recovered=1.1e-6,
    )
    assert record.score(1e-8, 1e-8, 1e-6) == pytest.approx(1.1)
    assert record.model_copy(update={"fp_recovered": 5e-7}).score(1e-8, 1e-8, 1e-6) == pytest.approx(0.5)


@pytest.mark.parametrize("seed", [0, 12345])
def test_converged_run_with_spatial_cost_certifies(tiny_grid, seed):
    model = CongestionModel(alpha=0.5, beta=2.0, q=2.0, kappa=1.0, nu=0.05, cost="cos2pi")
    m0 = sample_density(tiny_grid, {"kind": "cosine", "offset": 1.0, "amplitude": 0.5})
    _, _, report = solve(
        model,
        tiny_grid,
        m0,
        np.zeros_like(m0),
        _options(tol_gap=1e-8, tol_feas=1e-8, init_noise=0.05, seed=seed),
    )
    assert report.converged
    assert report.fp_recovered <= 1e-6
    assert report.certificate.clauses["fp"]
    assert report.certificate.passed


@pytest.mark.parametrize("scale", [0.5, 3.0])
def test_uniform_solution_scales_with_kappa(tiny_grid, scale):
    # l = s m: gamma = -2 s, phi = 2 s (1 - t), value s
    model = CongestionModel(alpha=0.5, beta=2.0, q=2.0, kappa=scale, nu=0.05, cost="zero")
    m0 = np.ones(tiny_grid.spatial_shape)
    primal, dual, report = solve(model, tiny_grid, m0, np.zeros_like(m0), _options())
    assert report.converged
    np.testing.assert_allclose(primal.m.values, 1.0, atol=1e-3)
    t = tiny_grid.time_nodes()[:, None]
    expected = np.broadcast_to(2.0 * scale * (1.0 - t), dual.phi.values.shape)
    np.testing.assert_allclose(dual.phi.values, expected, atol=1e-3 * scale)
    assert report.certificate.primal_value == pytest.approx(scale, rel=1e-3)


def test_terminal_potential_is_projected_below_u_T(tiny_grid, uniform_model):
    m0 = sample_density(tiny_grid, {"kind": "cosine", "offset": 1.0, "amplitude": 0.5})
    u_T = 0.2 * np.cos(2 * np.pi * tiny_grid.node_coordinates()[..., 0])
    solver = PDHGSolver(uniform_model, tiny_grid, m0, u_T, _options(init_noise=0.1, seed=2))
    solver.phi[-1] = u_T + 1.0
    solver._dual_step()
    np.testing.assert_array_equal(solver.phi[-1], u_T)

    _, dual, report = solver.run()
    assert np.all(dual.phi.values[-1] <= u_T)
    assert report.certificate.terminal_max_residual <= 0.0


def test_particles_driven_by_optimal_feedback_match_the_primal_value(small_grid, uniform_model, cosine_m0):
    u_T = np.zeros(small_grid.spatial_shape)
    primal, dual, report = solve(uniform_model, small_grid, cosine_m0, u_T, _options())
    assert report.converged

    v = feedback_velocity(uniform_model, primal.m, dual.phi)
    result = simulate(uniform_model, v, cosine_m0, 100_000, seed=21)
    estimate = estimate_cost(uniform_model, result, v, u_T, density=primal.m)
    value = eval_B_raw(uniform_model, primal, u_T)
    assert estimate.n_excluded == 0
    assert abs(estimate.mean - value) <= 4.0 * estimate.standard_error + 2e-2 * abs(value)
    assert np.max(density_l1_errors(result.densities, primal.m)) <= 0.05


def test_unaudited_model_is_refused(tiny_grid):
    model = CongestionModel(q=3.0, beta=1.2)
    m0 = np.ones(tiny_grid.spatial_shape)
    with pytest.raises(AuditFailedError) as info:
        solve(model, tiny_grid, m0, np.zeros_like(m0), _options(max_iters=10))
    assert [v.assumption for v in info.value.report.violations] == ["H3"]


def test_feedback_vanishes_for_uniform_solution(small_grid, uniform_model, uniform_phi):
    m = SpaceTimeField(small_grid, np.ones(small_grid.shape(Staggering.CELL_TIME)), Staggering.CELL_TIME)
    phi = uniform_phi(small_grid)
    np.testing.assert_array_equal(feedback_velocity(uniform_model, m, phi).values, 0.0)
    np.testing.assert_array_equal(recover_feedback(uniform_model, m, phi).values, 0.0)


def test_feedback_is_zero_on_empty_cells(small_grid, uniform_model):
    t = small_grid.time_nodes()[:, None]
    x = small_grid.node_coordinates()[..., 0][None, :]
    phi = SpaceTimeField(small_grid, (1.0 - t) * np.sin(2 * np.pi * x), Staggering.NODE_TIME)
    m = np.ones(small_grid.shape(Staggering.CELL_TIME))
    m[:, 3] = 0.0
    v = feedback_velocity(uniform_model, SpaceTimeField(small_grid, m, Staggering.CELL_TIME), phi)
    np.testing.assert_array_equal(v.values[:, 3], 0.0)
    assert np.any(v.values != 0.0)


@pytest.mark.slow
def test_uniform_acceptance_run(uniform_model):
    grid = TorusGrid(d=1, nx=64, nt=64)
    m0 = np.ones(grid.spatial_shape)
    primal, dual, report = solve(uniform_model, grid, m0, np.zeros_like(m0), SolverOptions())
    assert report.converged
    assert report.final_rel_gap <= 1e-8
    assert report.fp_residual <= 1e-8
    np.testing.assert_allclose(primal.m.values, 1.0, atol=1e-6)
    assert report.certificate.passed
    t = grid.time_nodes()[:, None]
    np.testing.assert_allclose(dual.phi.values, np.broadcast_to(2.0 * (1.0 - t), dual.phi.values.shape), atol=1e-6)


def _dense_adjoint(model, grid):
    n_m = int(np.prod(grid.shape(Staggering.CELL_TIME)))
    columns = []
    for i in range(2 * n_m):
        e = np.zeros(2 * n_m)
        e[i] = 1.0
        m = SpaceTimeField(grid, e[:n_m].reshape(grid.shape(Staggering.CELL_TIME)), Staggering.CELL_TIME)
        z = VectorField(grid, e[n_m:].reshape(grid.shape(Staggering.CELL_TIME) + (1,)))
        columns.append(lambda_adjoint(model, m, z).full().ravel())
    return np.stack(columns, axis=1)


@pytest.mark.slow
def test_primal_value_matches_conic_solver(tiny_grid, flat_congestion_model):
    cp = pytest.importorskip("cvxpy")
    grid, model = tiny_grid, flat_congestion_model
    m0 = sample_density(grid, {"kind": "cosine", "offset": 1.0, "amplitude": 0.5})
    u_T = 0.2 * np.cos(2 * np.pi * grid.node_coordinates()[..., 0])

    n_m = grid.nt * grid.nx
    M = _dense_adjoint(model, grid)
    m = cp.Variable(n_m, nonneg=True)
    z = cp.Variable(n_m)
    R = M @ cp.hstack([m, z])
    target = np.zeros((grid.nt + 1) * grid.nx)
    target[: grid.nx] = -m0 / grid.dt
    # alpha = 0, beta = 2, zero cost: L~ = A z^2 / m + kappa m^2
    running = sum(cp.quad_over_lin(z[i], m[i]) for i in range(n_m)) * model.ltilde_coeff
    running = running + model.kappa * cp.sum_squares(m)
    terminal = grid.cell_volume * grid.dt * (R[grid.nt * grid.nx :] @ u_T)
    problem = cp.Problem(
        cp.Minimize(grid.weight * running + terminal),
        [R[: grid.nt * grid.nx] == target[: grid.nt * grid.nx]],
    )
    problem.solve()

    primal, dual, report = solve(model, grid, m0, u_T, _options(tol_gap=1e-7, tol_feas=1e-7), audit=False)
    assert report.converged
    assert eval_B_raw(model, primal, u_T) == pytest.approx(problem.value, rel=1e-3)
    assert np.max(np.abs(primal.m.values.ravel() - m.value)) <= 1e-4
    assert np.max(np.abs(primal.z.values.ravel() - z.value)) <= 1e-4

    # phi from the stationarity of the conic optimum: Lambda phi = -grad L~(m, z), phi(T) = u_T
    m_ref, z_ref = m.value, z.value
    grad = np.concatenate(
        [
            -model.ltilde_coeff * z_ref**2 / m_ref**2 + 2.0 * model.kappa * m_ref,
            2.0 * model.ltilde_coeff * z_ref / m_ref,
        ]
    )
    free = grid.nt * grid.nx
    rhs = -grad - M[free:].T @ u_T
    phi_ref = np.linalg.lstsq(M[:free].T, rhs, rcond=None)[0]
    assert np.max(np.abs(dual.phi.values[:-1].ravel() - phi_ref)) <= 1e-4
    np.testing.assert_allclose(dual.phi.values[-1], u_T, atol=1e-10)
