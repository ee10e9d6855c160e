import numpy as np
import pytest

from bbelab.collision import (CollisionContext, gamma2, gamma3, linearized_apply,
                              linearized_matrix, nonlinear_remainder, q_collision, scaled_tables)
from bbelab.equilibrium import EquilibriumParams, equilibrium_density
from bbelab.errors import GridMismatchError, NumericalError, ValidationError
from bbelab.vgrid import build_grid


def test_equilibrium_annihilated(small):
    grid, params, ctx, _, _ = small
    M = equilibrium_density(params, grid.nodes)
    Q = q_collision(ctx, M)
    assert np.max(np.abs(Q)) < 1e-13 * np.max(M)


def test_exact_conservation_random(small):
    grid, _, ctx, _, _ = small
    rng = np.random.default_rng(3)
    F = rng.uniform(0, 1, grid.n_nodes) * np.exp(-grid.speed_sq / 8)
    Q = q_collision(ctx, F)
    psi = np.column_stack([np.ones(grid.n_nodes), grid.nodes, grid.speed_sq])
    scale = grid.weight * np.abs(Q) @ (1 + grid.speed_sq)
    assert np.max(np.abs(grid.weight * psi.T @ Q)) < 1e-13 * scale


def test_q_rejects_bad_input(small):
    grid, _, ctx, _, _ = small
    F = np.ones(grid.n_nodes)
    F[3] = -1.0
    with pytest.raises(ValidationError):
        q_collision(ctx, F)
    F[3] = np.nan
    with pytest.raises(NumericalError):
        q_collision(ctx, F)
    with pytest.raises(GridMismatchError):
        q_collision(ctx, np.ones(10))


def test_linearized_symmetric_psd_kernel(small):
    _, _, _, Lop, _ = small
    assert Lop.symmetry_error() < 1e-13
    rep = Lop.spectral_report()
    assert rep["n_near_null"] == 5
    assert rep["psd_ok"]
    K = Lop.kernel_vectors()
    assert np.max(np.abs(Lop.matrix @ K)) < 1e-11 * rep["spectral_radius"] * np.max(np.abs(K))


def test_linearization_is_derivative_of_q(small):
    grid, params, ctx, Lop, _ = small
    M, lnN = scaled_tables(grid, params)
    N = np.exp(lnN)
    rng = np.random.default_rng(0)
    g = rng.standard_normal(grid.n_nodes) * np.exp(-grid.speed_sq / 6)
    d = 1e-5
    fd = (q_collision(ctx, M + d * N * g) - q_collision(ctx, M - d * N * g)) / (2 * d)
    np.testing.assert_allclose(-fd / N, Lop.matrix @ g, atol=1e-7 * np.max(np.abs(fd / N)))


def test_matrix_free_apply(small):
    grid, params, ctx, Lop, _ = small
    f = np.random.default_rng(1).standard_normal((grid.n_nodes, 2))
    np.testing.assert_allclose(linearized_apply(ctx, params, f), Lop.matrix @ f,
                               atol=1e-11 * np.max(np.abs(Lop.matrix @ f)))


def test_gamma2_kernel_identity(small):
    grid, params, ctx, Lop, _ = small
    M, lnN = scaled_tables(grid, params)
    N = np.exp(lnN)
    K = Lop.kernel_vectors()
    rng = np.random.default_rng(2)
    for _ in range(3):
        g = K @ rng.standard_normal(5)
        lhs = gamma2(ctx, params, g, g)
        rhs = 0.5 * Lop.matrix @ ((1 + 2 * M) * g * g / N)
        assert np.max(np.abs(lhs - rhs)) <= 1e-10 * np.max(np.abs(rhs))


def test_remainder_combines_gammas(small):
    grid, params, ctx, _, _ = small
    rng = np.random.default_rng(5)
    f = rng.standard_normal(grid.n_nodes) * np.exp(-grid.speed_sq / 6) * 1e-2
    eps = 0.3
    ref = gamma2(ctx, params, f, f) / eps + gamma3(ctx, params, f, f, f)
    out = nonlinear_remainder(ctx, params, f, eps)
    np.testing.assert_allclose(out, ref, atol=1e-12 * np.max(np.abs(ref)))


def test_matrix_cache_roundtrip(small, tmp_path, monkeypatch):
    monkeypatch.setenv("BBELAB_CACHE_DIR", str(tmp_path))
    grid = build_grid(7, 6.0)
    ctx = CollisionContext(grid)
    p = EquilibriumParams(1.0)
    a = linearized_matrix(ctx, p)
    assert list(tmp_path.iterdir())
    b = linearized_matrix(ctx, p)
    assert np.array_equal(a.matrix, b.matrix)


def test_empirical_bounds_finite(small):
    from bbelab.collision import empirical_bound_report
    rep = empirical_bound_report(small[2], small[1], samples=50)
    assert rep["finite"]
    assert rep["R2"] > 0 and rep["R3"] > 0
