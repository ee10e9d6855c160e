import numpy as np
import pytest

from bbelab.errors import ConfigError
from bbelab.nsf_ref import (NsfState, SpectralBox, heat_mode, initial_state, integrate, nsf_step,
                            shear_mode, taylor_green)


def test_leray_idempotent_and_divergence_free():
    box = SpectralBox((16, 16), (2 * np.pi, 2 * np.pi))
    rng = np.random.default_rng(0)
    u = rng.standard_normal((16, 16, 3))
    p = box.leray(u)
    np.testing.assert_allclose(box.leray(p), p, atol=1e-12)
    assert np.max(np.abs(box.divergence(p))) < 1e-11


def test_taylor_green_decay():
    box = SpectralBox((32, 32), (2 * np.pi, 2 * np.pi))
    u0, k2 = taylor_green(box, 0.1)
    mu = 0.05
    st = NsfState(u0, np.zeros(box.shape), 0.0, mu, 0.05, 1.0, box.lengths)
    end = integrate(st, [2.0], 0.05, box)[-1]
    np.testing.assert_allclose(end.u, u0 * np.exp(-mu * k2 * 2.0), atol=1e-10)


def test_heat_and_shear_modes_1d():
    box = SpectralBox((32,), (2 * np.pi,))
    x = np.arange(32) * 2 * np.pi / 32
    u = np.zeros((32, 3))
    u[:, 1] = shear_mode(x, 0.0, 0.01, 1, 0.1)
    st = NsfState(u, heat_mode(x, 0.0, 0.02, 1, 0.3), 0.0, 0.1, 0.3, 1.0, box.lengths)
    end = integrate(st, [5.0], 0.5, box)[-1]
    np.testing.assert_allclose(end.u[:, 1], shear_mode(x, 5.0, 0.01, 1, 0.1), atol=1e-14)
    np.testing.assert_allclose(end.theta, heat_mode(x, 5.0, 0.02, 1, 0.3), atol=1e-14)


def test_initial_state_boussinesq():
    box = SpectralBox((8,), (2 * np.pi,))
    theta0 = np.ones(8)
    st = initial_state(box, -theta0, np.zeros((8, 3)), theta0, 0.1, 0.1, 1.0, K_lam=2.0)
    np.testing.assert_allclose(st.theta, theta0)
    np.testing.assert_allclose(st.rho, -theta0)


def test_cfl_violation():
    box = SpectralBox((16,), (2 * np.pi,))
    u = np.zeros((16, 3))
    u[:, 0] = 10.0
    st = NsfState(u, np.zeros(16), 0.0, 0.1, 0.1, 1.0, box.lengths)
    with pytest.raises(ConfigError):
        nsf_step(st, 1.0, box)
