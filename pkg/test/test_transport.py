import numpy as np
import pytest

from congestion_mfc.src.grid.torus import SpaceTimeField, Staggering, TorusGrid, VectorField, zero_vector
from congestion_mfc.src.transport.flat_metric import flat_distance, holder_diagnostic
from congestion_mfc.src.transport.fokker_planck import (
    PrimalState,
    fp_residual,
    solve_fokker_planck,
    terminal_density,
    total_mass,
)


def _ones(grid):
    return SpaceTimeField(grid, np.ones(grid.shape(Staggering.CELL_TIME)), Staggering.CELL_TIME)


def test_uniform_state_is_feasible(small_grid, uniform_model):
    state = PrimalState(_ones(small_grid), zero_vector(small_grid))
    residual = fp_residual(uniform_model, state, np.ones(small_grid.spatial_shape))
    np.testing.assert_array_equal(residual.interior.values, 0.0)
    np.testing.assert_array_equal(residual.initial, 0.0)
    assert residual.norm() == 0.0
    np.testing.assert_allclose(terminal_density(uniform_model, state), 1.0, rtol=1e-14)


def test_heat_flow_has_zero_residual(small_grid, uniform_model, cosine_m0):
    m = solve_fokker_planck(small_grid, uniform_model.nu, cosine_m0)
    state = PrimalState(m, zero_vector(small_grid))
    assert fp_residual(uniform_model, state, cosine_m0).norm() <= 1e-13


def test_transported_density_has_zero_residual(grid_2d, uniform_model, rng):
    m0 = np.full(grid_2d.spatial_shape, 1.0)
    z = VectorField(grid_2d, 0.1 * rng.normal(size=grid_2d.shape(Staggering.CELL_TIME) + (2,)))
    m = solve_fokker_planck(grid_2d, uniform_model.nu, m0, z)
    assert fp_residual(uniform_model, PrimalState(m, z), m0).norm() <= 1e-12


def test_random_state_is_infeasible(small_grid, uniform_model, cosine_m0, rng):
    m = SpaceTimeField(small_grid, rng.uniform(size=small_grid.shape(Staggering.CELL_TIME)), Staggering.CELL_TIME)
    z = VectorField(small_grid, rng.normal(size=small_grid.shape(Staggering.CELL_TIME) + (1,)))
    residual = fp_residual(uniform_model, PrimalState(m, z), cosine_m0)
    assert residual.norm() > 1e-3
    assert np.count_nonzero(residual.interior.values[1:-1]) > 0


def test_total_mass(small_grid, uniform_model, cosine_m0, rng):
    assert total_mass(_ones(small_grid), 0) == pytest.approx(1.0, abs=1e-15)

    z = VectorField(small_grid, rng.normal(size=small_grid.shape(Staggering.CELL_TIME) + (1,)))
    m = solve_fokker_planck(small_grid, uniform_model.nu, cosine_m0, z)
    for k in range(small_grid.nt):
        assert total_mass(m, k) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(IndexError):
        total_mass(m, small_grid.nt)


def test_velocity_vanishes_on_empty_cells(small_grid):
    m = np.ones(small_grid.shape(Staggering.CELL_TIME))
    m[0, 0] = 0.0
    z = np.full(small_grid.shape(Staggering.CELL_TIME) + (1,), 2.0)
    state = PrimalState(SpaceTimeField(small_grid, m, Staggering.CELL_TIME), VectorField(small_grid, z))
    w = state.velocity().values
    assert w[0, 0, 0] == 0.0
    assert w[1, 3, 0] == 2.0


def _delta(grid, index):
    values = np.zeros(grid.spatial_shape)
    values[index] = 1.0 / grid.cell_volume
    return values


def test_circle_distance_of_point_masses(small_grid):
    for k in (1, 3, 8, 12):
        expected = min(k, small_grid.nx - k) * small_grid.h
        assert flat_distance(small_grid, _delta(small_grid, 0), _delta(small_grid, k)) == pytest.approx(expected)


def test_lp_agrees_with_closed_form_on_the_circle(small_grid, rng):
    for _ in range(3):
        m_s = rng.uniform(0.5, 1.5, small_grid.spatial_shape)
        m_t = rng.uniform(0.5, 1.5, small_grid.spatial_shape)
        m_t *= m_s.sum() / m_t.sum()
        cdf = flat_distance(small_grid, m_s, m_t, method="cdf")
        lp = flat_distance(small_grid, m_s, m_t, method="lp")
        assert lp == pytest.approx(cdf, rel=1e-7, abs=1e-12)


def test_lattice_distance_in_two_dimensions(grid_2d):
    distance = flat_distance(grid_2d, _delta(grid_2d, (0, 0)), _delta(grid_2d, (1, 1)))
    assert distance == pytest.approx(2.0 * grid_2d.h, rel=1e-7)
    with pytest.raises(ValueError):
        flat_distance(grid_2d, _delta(grid_2d, (0, 0)), _delta(grid_2d, (0, 0)), method="cdf")


def test_holder_quotient_of_constant_density(small_grid):
    result = holder_diagnostic(_ones(small_grid), 0.5)
    assert result.quotient == pytest.approx(0.0, abs=1e-14)


def test_holder_quotient_of_heat_flow(uniform_model):
    grid = TorusGrid(d=1, nx=32, nt=16)
    x = grid.node_coordinates()[..., 0]
    m0 = 1.0 + 0.5 * np.cos(2 * np.pi * x)
    m = solve_fokker_planck(grid, uniform_model.nu, m0)
    quotients = [holder_diagnostic(m, zeta, m0=m0).quotient for zeta in (0.25, 0.5, 1.0)]
    assert np.all(np.isfinite(quotients))
    assert quotients[0] > 0.0
    # |t - s| <= 1, so |t - s|^zeta shrinks as zeta grows
    assert quotients[0] <= quotients[1] <= quotients[2]


def test_holder_quotient_stays_bounded_under_refinement(uniform_model):
    # zeta = min(1/2, (1 - alpha) / beta) for the uniform model
    quotients = []
    for nx, nt in ((16, 8), (32, 16), (64, 32)):
        grid = TorusGrid(d=1, nx=nx, nt=nt)
        m0 = 1.0 + 0.5 * np.cos(2 * np.pi * grid.node_coordinates()[..., 0])
        m = solve_fokker_planck(grid, uniform_model.nu, m0)
        quotients.append(holder_diagnostic(m, 0.25, m0=m0).quotient)
    assert all(np.isfinite(q) and q > 0.0 for q in quotients)
    assert max(quotients) <= 1.5 * min(quotients)
