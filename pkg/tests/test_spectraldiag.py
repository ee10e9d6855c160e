import numpy as np
import pytest

from bbelab.equilibrium import EquilibriumParams, oracle_table
from bbelab.errors import GridMismatchError
from bbelab.spectraldiag import (KernelBasis, MacroFields, ThirteenMomentState, energy_norm,
                                 hydro_lift, limit_moments, macro_extract, macro_lift,
                                 spectral_derivative)
from bbelab.vgrid import build_grid


def test_basis_orthonormal_and_projection(small):
    _, _, _, Lop, basis = small
    np.testing.assert_allclose(basis.gram(), np.eye(5), atol=1e-13)
    f = np.random.default_rng(0).standard_normal(basis.grid.n_nodes)
    p = basis.project(f)
    np.testing.assert_allclose(basis.project(p), p, atol=1e-12 * np.max(np.abs(p)))
    assert np.max(np.abs(basis.grid.weight * basis.micro(f) @ Lop.kernel_vectors())) < 1e-12


def test_projection_rejects_other_grid(small):
    basis = small[4]
    with pytest.raises(GridMismatchError):
        basis.project(np.ones(27))


def test_macro_roundtrip(small):
    basis = small[4]
    rng = np.random.default_rng(1)
    mf = MacroFields(rng.standard_normal(4), rng.standard_normal((4, 3)), rng.standard_normal(4))
    back = macro_extract(basis, macro_lift(basis, mf))
    np.testing.assert_allclose(back.a, mf.a, atol=1e-11)
    np.testing.assert_allclose(back.b, mf.b, atol=1e-11)
    np.testing.assert_allclose(back.c, mf.c, atol=1e-11)


def test_hydro_roundtrip_and_limit_moments(small):
    basis = small[4]
    x = np.linspace(0, 2 * np.pi, 8, endpoint=False)
    rho, theta = 0.1 * np.sin(x), 0.05 * np.cos(x)
    u = np.zeros((8, 3))
    u[:, 1] = 0.2 * np.sin(x)
    f = hydro_lift(basis, rho, u, theta)
    mom = limit_moments(basis, f)
    np.testing.assert_allclose(mom["rho"], rho, atol=1e-12)
    np.testing.assert_allclose(mom["theta"], theta, atol=1e-12)
    np.testing.assert_allclose(mom["u"], u, atol=1e-12)


def test_spectral_derivative_exact():
    L = (2 * np.pi, 4 * np.pi)
    x = np.arange(16) * L[0] / 16
    y = np.arange(12) * L[1] / 12
    X, Y = np.meshgrid(x, y, indexing="ij")
    f = np.sin(2 * X) * np.cos(Y / 2)
    np.testing.assert_allclose(spectral_derivative(f, 0, L), 2 * np.cos(2 * X) * np.cos(Y / 2), atol=1e-12)
    np.testing.assert_allclose(spectral_derivative(f, 1, L, order=2), -0.25 * f, atol=1e-12)


def test_energy_norm_single_mode():
    g = build_grid(5, 2.0)
    x = np.arange(8) * 2 * np.pi / 8
    prof = np.zeros(g.n_nodes)
    prof[0] = 1.0
    f = np.sin(x)[:, None] * prof
    # ||sin||^2 = pi on the torus; each derivative order adds the same amount for k = 1
    assert energy_norm(f, 2, g, (2 * np.pi,)) == pytest.approx(3 * np.pi * g.weight, rel=1e-12)


def test_thirteen_moment_closed_forms():
    grid = build_grid(9, 8.0)
    st = ThirteenMomentState(KernelBasis(grid, EquilibriumParams(1.0)))
    t = oracle_table(1.0)
    G = st.gram_model(t)
    assert np.linalg.det(G) == pytest.approx(st.det_formula(t), rel=1e-10)
    np.testing.assert_allclose(st.inverse_formula(t) @ G, np.eye(13), atol=1e-10)
