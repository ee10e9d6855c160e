import math

import mpmath
import numpy as np
import pytest

from bbelab.equilibrium import (EquilibriumParams, asymptotic_check, certified_bound,
                                equilibrium_density, fit_equilibrium, fit_equilibrium_discrete,
                                log_M_scaled, moment_oracle, moments, multiplier_density,
                                oracle_table, closed_form_constants, polylog_exp,
                                temperature_classification)
from bbelab.errors import CondensationError, ValidationError
from bbelab.vgrid import build_grid


@pytest.mark.parametrize("s", [0.5, 1.5, 2.5, 3.5])
@pytest.mark.parametrize("lam", [1e-3, 0.1, 0.5, 1.0, 3.0, 20.0])
def test_polylog_against_mpmath(s, lam):
    ref = float(mpmath.polylog(s, mpmath.exp(-lam)))
    assert polylog_exp(s, lam) == pytest.approx(ref, rel=1e-12)


def test_oracle_moments_by_radial_quadrature():
    lam = 0.7
    for k, val in moment_oracle(lam).items():
        f = lambda r: 4 * mpmath.pi * r ** (k + 2) * mpmath.exp(-(r * r / 2 + lam)) / (
            1 - mpmath.exp(-(r * r / 2 + lam))) ** 2
        ref = float(mpmath.quad(f, [0, 4, mpmath.inf]))
        assert val == pytest.approx(ref, rel=1e-12)


def test_densities_and_identity():
    p = EquilibriumParams(0.8, 1.7)
    v = np.array([[0.3, -1.0, 2.0], [0.0, 0.0, 0.0]])
    M = equilibrium_density(p, v)
    r2 = np.sum(v * v, 1)
    np.testing.assert_allclose(M, 1 / np.expm1(r2 / (2 * p.temp) + p.lam), rtol=1e-14)
    np.testing.assert_allclose(multiplier_density(p, v) ** 2, M * (1 + M), rtol=1e-13)


def test_log_space_no_overflow():
    val = log_M_scaled(1.0, np.array([1e6]))
    assert np.isfinite(val).all()
    assert val[0] == pytest.approx(-(5e5 + 1.0))


def test_invalid_params():
    for lam in (0.0, -1.0, 60.0, float("nan")):
        with pytest.raises(ValidationError):
            EquilibriumParams(lam, 1.0)
    with pytest.raises(ValidationError):
        EquilibriumParams(1.0, 0.0)


def test_grid_moments_converge():
    p = EquilibriumParams(2.0)
    ref = oracle_table(2.0)
    tab = moments(p, build_grid(41, 10.0), check_resolution=False)
    assert tab.m2 == pytest.approx(ref.m2, rel=1e-6)


def test_resolution_warning():
    with pytest.warns(RuntimeWarning):
        moments(EquilibriumParams(1.0), build_grid(5, 6.0))


def test_table_derived_quantities():
    t = oracle_table(1.0)
    assert t.det0 > 0 and t.det2 > 0
    assert t.C_A == pytest.approx(t.m4 * t.det0 / (4 * t.m2 ** 2))
    assert t.K_lam == pytest.approx(t.m4 / (2 * t.m2) - 1)


def test_asymptotic_ratios_near_one_for_large_lambda():
    rep = asymptotic_check(30.0)
    assert rep["within_bracket"]
    for r in rep["ratios"].values():
        assert r == pytest.approx(1.0, rel=1e-6)


def test_temperature_classification():
    T = 1.0
    M0 = (2 * np.pi * T) ** 1.5 * float(mpmath.zeta(1.5))
    M2 = 3 * T * (2 * np.pi * T) ** 1.5 * float(mpmath.zeta(2.5))
    assert temperature_classification(M0, M2)["class"] == "critical"
    assert temperature_classification(M0, 2 * M2)["class"] == "high"
    assert temperature_classification(M0, 0.5 * M2)["class"] == "low"


def test_constants_closed_form():
    pc = closed_form_constants(EquilibriumParams(1.0, 1.0))
    q = math.exp(-1)
    assert pc.C_star == pytest.approx(q ** 2 * (1 - q) ** 16.5, rel=1e-14)
    pc2 = closed_form_constants(EquilibriumParams(1.0, 2.0))
    assert pc2.C_star == pytest.approx(q ** 2 * (1 - q) ** 16.5 * 2 ** -1.5, rel=1e-14)


def test_certified_bound_base_and_monotone():
    p = EquilibriumParams(1.0, 1.0)
    assert certified_bound(p, 2, [1, 1, 1]) == pytest.approx(12.0)
    assert certified_bound(p, 2, [1, 1, 1], variant="P") == pytest.approx(6.0)
    a = certified_bound(p, 3, [1e-4, 1e-4, 1e-4, 1e-4])
    b = certified_bound(p, 3, [1e-4, 1e-4, 2e-4, 2e-4])
    assert b > a
    with pytest.raises(ValidationError):
        certified_bound(p, 3, [1, 2, 1, 3])


def test_fit_recovers_parameters():
    p = EquilibriumParams(0.6, 1.4)
    u = np.array([0.2, -0.1, 0.3])
    mass = (2 * np.pi * p.temp) ** 1.5 * polylog_exp(1.5, p.lam)
    e_int = 1.5 * p.temp * (2 * np.pi * p.temp) ** 1.5 * polylog_exp(2.5, p.lam)
    fit = fit_equilibrium(mass, mass * u, e_int + 0.5 * mass * u @ u)
    assert fit.params.lam == pytest.approx(p.lam, rel=1e-10)
    assert fit.params.temp == pytest.approx(p.temp, rel=1e-10)
    np.testing.assert_allclose(fit.drift, u, atol=1e-13)


def test_fit_condensation_rejected():
    with pytest.raises(CondensationError):
        fit_equilibrium(1e3, np.zeros(3), 1.0)


def test_discrete_fit_matches_grid_invariants():
    g = build_grid(9, 8.0)
    M = equilibrium_density(EquilibriumParams(1.0, 1.0), g.nodes - [0.1, 0.0, 0.0])
    psi = np.column_stack([np.ones(g.n_nodes), g.nodes, g.speed_sq / 2])
    inv = g.weight * psi.T @ M
    fit = fit_equilibrium_discrete(g, inv)
    assert fit.residual < 1e-14
    np.testing.assert_allclose(g.weight * psi.T @ fit.values, inv, rtol=1e-13, atol=1e-13)
