import numpy as np
import pytest

from congestion_mfc.exception.custom_exception import UnboundedModelError
from congestion_mfc.src.model.congestion_model import CongestionModel
from congestion_mfc.src.model.hamiltonian import ltilde
from congestion_mfc.src.pointwise.conjugate import conjugate_ltilde_bruteforce
from congestion_mfc.src.pointwise.prox import prox_ltilde, prox_ltilde_field
from congestion_mfc.src.pointwise.psi import (
    PsiBranch,
    eval_K,
    eval_K_field,
    solve_psi,
    solve_psi_field,
    stationarity,
)
from congestion_mfc.src.pointwise.root import safeguarded_newton


def test_safeguarded_newton_cube_roots():
    targets = np.array([0.5, 2.0, 7.0])

    def func(x, idx):
        return x**3 - targets[idx], 3.0 * x**2

    result = safeguarded_newton(func, np.zeros(3), np.full(3, 4.0), np.full(3, 2.0), tol=1e-14)
    assert result.converged.all()
    np.testing.assert_allclose(result.x, np.cbrt(targets), rtol=1e-12)


def test_psi_branches(uniform_model, flat_congestion_model):
    zero = solve_psi(uniform_model, 0.0, 1.0, [0.0])
    assert zero.mu == 0.0
    assert zero.branch == PsiBranch.BOUNDARY_ZERO

    interior = solve_psi(flat_congestion_model, 0.0, 0.0, [1.0])
    assert interior.mu == pytest.approx(0.5, abs=1e-12)
    assert interior.branch == PsiBranch.INTERIOR_ROOT

    closed = solve_psi(uniform_model, 0.0, -1.0, [0.0])
    assert closed.mu == pytest.approx(0.5, abs=1e-14)
    assert closed.branch == PsiBranch.P_ZERO_ROOT


def test_psi_alpha_zero_small_momentum_stays_on_boundary(flat_congestion_model):
    # F(0+) = gamma + c - |p|^2 >= 0
    result = solve_psi(flat_congestion_model, 0.0, 1.0, [0.5])
    assert result.mu == 0.0
    assert result.branch == PsiBranch.BOUNDARY_ZERO


def test_eval_K_examples(uniform_model, flat_congestion_model):
    assert eval_K(uniform_model, 0.0, 1.0, [0.0]) == 0.0
    assert eval_K(flat_congestion_model, 0.0, 0.0, [1.0]) == pytest.approx(-0.25, abs=1e-12)
    assert eval_K(uniform_model, 0.0, -1.0, [0.0]) == pytest.approx(-0.25, abs=1e-14)


def test_psi_is_the_minimizer(rng):
    model = CongestionModel(alpha=0.3, beta=1.8, q=2.5, kappa=0.7, cost="cos2pi")
    mu_grid = np.linspace(1e-6, 10.0, 200001)
    for _ in range(10):
        x, gamma = rng.uniform(), rng.uniform(-3.0, 1.0)
        p = rng.normal(size=1)
        c = model.cost_at(x).item()
        objective = mu_grid * (gamma + c + model.kappa * mu_grid ** (model.q - 1.0)) - mu_grid ** (
            1.0 - model.alpha
        ) * np.abs(p[0]) ** model.beta
        K = eval_K(model, x, gamma, p)
        assert K <= 0.0
        assert np.min(objective) >= K - 1e-9
        assert np.min(objective) == pytest.approx(K, abs=1e-4)


def test_K_is_concave(uniform_model, rng):
    for _ in range(100):
        g1, g2 = rng.uniform(-3.0, 2.0, 2)
        p1, p2 = rng.normal(size=(2, 1))
        mid = eval_K(uniform_model, 0.0, 0.5 * (g1 + g2), 0.5 * (p1 + p2))
        avg = 0.5 * (eval_K(uniform_model, 0.0, g1, p1) + eval_K(uniform_model, 0.0, g2, p2))
        assert mid >= avg - 1e-10


def test_field_form_matches_scalar_form(uniform_model, rng):
    gamma = rng.uniform(-3.0, 1.0, size=(4, 5))
    p = rng.normal(size=(4, 5, 1))
    K, psi = eval_K_field(uniform_model, np.zeros(5), gamma, p)
    for idx in np.ndindex(gamma.shape):
        assert K[idx] == pytest.approx(eval_K(uniform_model, 0.0, gamma[idx], p[idx]), abs=1e-12)
    warm = solve_psi_field(uniform_model, np.zeros(5), gamma, p, warm=psi.mu)
    np.testing.assert_allclose(warm.mu, psi.mu, atol=1e-10)


def test_psi_reports_unbounded_bracket(uniform_model):
    with pytest.raises(UnboundedModelError):
        solve_psi(uniform_model, 0.0, -1e3, [1.0], mu_max=10.0)


def _prox_objective(model, m, z, m_hat, z_hat, sigma):
    quad = ((m - m_hat) ** 2 + np.sum((z - z_hat) ** 2)) / (2.0 * sigma)
    return quad + ltilde(model, 0.0, m, z)


def test_prox_origin(uniform_model):
    m, z = prox_ltilde(uniform_model, 0.0, -0.5, [0.0], sigma=0.3)
    assert m == 0.0
    np.testing.assert_array_equal(z, [0.0])


@pytest.mark.parametrize("beta", [2.0, 1.5])
def test_prox_beats_local_perturbations(beta, rng):
    model = CongestionModel(alpha=0.5, beta=beta, q=2.0, kappa=1.0, cost="zero")
    for _ in range(5):
        m_hat = rng.uniform(-0.5, 2.0)
        z_hat = rng.normal(size=1)
        sigma = rng.uniform(0.05, 1.0)
        m, z = prox_ltilde(model, 0.0, m_hat, z_hat, sigma)
        best = _prox_objective(model, m, z, m_hat, z_hat, sigma)
        dm = rng.uniform(-1e-2, 1e-2, 1000)
        dz = rng.uniform(-1e-2, 1e-2, (1000, 1))
        for i in range(1000):
            mm = max(m + dm[i], 0.0)
            trial = _prox_objective(model, mm, z + dz[i], m_hat, z_hat, sigma)
            assert best <= trial + 1e-10 * max(1.0, abs(best))


def test_prox_vanishing_step_is_identity(uniform_model):
    m, z = prox_ltilde(uniform_model, 0.0, 1.0, [0.3], sigma=1e-8)
    assert m == pytest.approx(1.0, abs=1e-4)
    np.testing.assert_allclose(z, [0.3], atol=1e-4)


def test_prox_keeps_direction_in_two_dimensions(uniform_model, rng):
    m_hat = rng.uniform(0.5, 2.0, size=(3, 4))
    z_hat = rng.normal(size=(3, 4, 2))
    m, z = prox_ltilde_field(uniform_model, 0.0, m_hat, z_hat, 0.5)
    assert m.shape == m_hat.shape and z.shape == z_hat.shape
    cross = z[..., 0] * z_hat[..., 1] - z[..., 1] * z_hat[..., 0]
    np.testing.assert_allclose(cross, 0.0, atol=1e-12)
    assert np.all(np.sum(z * z_hat, axis=-1) >= 0.0)


def test_prox_rejects_nonpositive_step(uniform_model):
    with pytest.raises(ValueError):
        prox_ltilde(uniform_model, 0.0, 1.0, [0.0], sigma=0.0)


def test_conjugate_oracle_at_origin(uniform_model):
    assert conjugate_ltilde_bruteforce(uniform_model, 0.0, 0.0, [0.0]) == pytest.approx(0.0, abs=1e-14)


def test_conjugate_oracle_refines_to_ltilde(flat_congestion_model):
    values = [
        conjugate_ltilde_bruteforce(flat_congestion_model, 0.0, 1.0, [2.0], n=n) for n in (17, 33, 65)
    ]
    assert values[0] <= values[1] + 1e-12 <= values[2] + 2e-12
    assert values[-1] <= ltilde(flat_congestion_model, 0.0, 1.0, [2.0]) + 1e-9
    assert values[-1] == pytest.approx(2.0, abs=1e-8)


@pytest.mark.parametrize("gamma", [0.5, 0.0, -0.7])
def test_psi_is_continuous_as_momentum_vanishes(gamma, uniform_model, flat_congestion_model):
    # gamma + c above, at and below zero
    for model in (uniform_model, flat_congestion_model):
        at_zero = solve_psi(model, 0.0, gamma, [0.0])
        gaps = [abs(solve_psi(model, 0.0, gamma, [s]).mu - at_zero.mu) for s in (1e-2, 1e-4, 1e-6, 1e-8)]
        assert gaps[-1] <= 1e-6
        assert gaps[-1] <= gaps[0] + 1e-15
        assert eval_K(model, 0.0, gamma, [1e-8]) == pytest.approx(eval_K(model, 0.0, gamma, [0.0]), abs=1e-6)


def test_psi_residual_on_random_inputs(rng):
    model = CongestionModel(alpha=0.3, beta=1.8, q=2.5, kappa=0.7, cost="cos2pi")
    n = 10_000
    c = model.cost_at(rng.uniform(size=(n, 1)))
    gamma = rng.uniform(-3.0, 2.0, n)
    p = rng.normal(size=(n, 1))
    psi = solve_psi_field(model, c, gamma, p)

    g = gamma + c
    P = np.abs(p[:, 0]) ** model.beta
    assert np.all(psi.mu >= 0.0)
    positive = psi.mu > 0.0
    f, _ = stationarity(model, g[positive], P[positive], psi.mu[positive])
    scale = np.maximum(1.0, np.maximum(np.abs(g[positive]), P[positive]))
    assert np.max(np.abs(f) / scale) <= 1e-9
    # alpha > 0 and p != 0 always give an interior root
    assert np.all(positive[P > 0.0])


@pytest.mark.parametrize("alpha, beta, q", [(0.5, 2.0, 2.0), (0.0, 2.0, 2.0), (0.3, 1.8, 2.5)])
def test_prox_is_firmly_nonexpansive(alpha, beta, q, rng):
    model = CongestionModel(alpha=alpha, beta=beta, q=q, kappa=1.0, cost="zero")
    n, sigma = 500, 0.4
    m_a, m_b = rng.uniform(-1.0, 3.0, (2, n))
    z_a, z_b = rng.normal(size=(2, n, 1))
    pm_a, pz_a = prox_ltilde_field(model, 0.0, m_a, z_a, sigma)
    pm_b, pz_b = prox_ltilde_field(model, 0.0, m_b, z_b, sigma)

    dm, dz = pm_a - pm_b, (pz_a - pz_b)[:, 0]
    lhs = dm**2 + dz**2
    rhs = dm * (m_a - m_b) + dz * (z_a - z_b)[:, 0]
    assert np.all(lhs <= rhs + 1e-9)
