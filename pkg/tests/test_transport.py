import numpy as np
import pytest

from bbelab.errors import SolverStagnationError
from bbelab.transport import (coefficients, deflated_cg, discrete_flux_constants, flux_functions,
                              radial_form_check, solve_flux_inverse)


@pytest.fixture(scope="module")
def solved(small):
    _, _, _, Lop, basis = small
    inv = solve_flux_inverse(Lop, flux_functions(basis))
    return inv, basis


def test_flux_orthogonal_to_kernel(small):
    _, _, _, Lop, basis = small
    F = flux_functions(basis).stacked()
    K = Lop.kernel_vectors()
    assert np.max(np.abs(basis.grid.weight * F @ K)) < 1e-12 * np.max(np.abs(F))


def test_solve_residuals(solved):
    inv, _ = solved
    assert np.max(inv.relative_residuals) < 1e-10
    L = inv.matrix.matrix
    np.testing.assert_allclose(L @ inv.A_hat.T, inv.flux.A.T, atol=1e-9 * np.max(np.abs(inv.flux.A)))


def test_coefficients_positive_and_kappa2_small(solved):
    inv, basis = solved
    c = coefficients(inv, basis.table)
    assert c.nu > 0 and c.kappa1 > 0 and c.mu > 0 and c.kappa > 0
    assert abs(c.kappa2) < 1e-10 * c.kappa1
    assert c.mu == pytest.approx(0.0042858, rel=1e-3)
    d = c.as_dict()
    assert d["grid_fingerprint"] == basis.grid.fingerprint()


def test_radial_form_symmetries(solved):
    rep = radial_form_check(solved[0])
    assert rep["rotation_residual"] < 1e-10
    assert rep["trace_residual"] < 1e-8


def test_deflated_cg_stagnation():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((30, 30))
    L = A @ A.T + 1e-3 * np.eye(30)
    Q = np.zeros((30, 0))
    with pytest.raises(SolverStagnationError):
        deflated_cg(L, rng.standard_normal((30, 1)), Q, rtol=1e-15, max_iter=3)


def test_discrete_constants_C_A(small):
    basis = small[4]
    dc = discrete_flux_constants(basis)
    assert dc["C_A"] > 0
