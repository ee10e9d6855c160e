import numpy as np
import pytest

from bbelab.equilibrium import EquilibriumParams
from bbelab.errors import ConfigError
from bbelab.kinetic_solver import (PerturbationSystem, SolverConfig, Trajectory,
                                   bi_temperature_datum, decay_rate, invariants, knudsen_sweep,
                                   relax_homogeneous, relaxation_report, scaling_equivalence_test,
                                   shear_datum, step)


def torus(eps=0.5, integrator="etd", dt=0.5, t_end=2.0, n_x=8):
    return SolverConfig(epsilon=eps, spatial={"n_x": n_x, "length": 2 * np.pi},
                        dt=dt, t_end=t_end, integrator=integrator)


def test_config_validation():
    with pytest.raises(ConfigError):
        SolverConfig(epsilon=0.0).validate()
    with pytest.raises(ConfigError):
        SolverConfig(integrator="euler").validate()
    with pytest.raises(ConfigError):
        SolverConfig(formulation="absolute", spatial={"n_x": 8, "length": 1.0}).validate()
    with pytest.raises(ConfigError):
        SolverConfig(spatial={"n_x": 7, "length": 1.0}).validate()


def test_zero_datum_stays_zero(small):
    cfg = torus()
    sys_ = PerturbationSystem(cfg, small[2], small[3])
    traj = sys_.run(np.zeros((8, small[0].n_nodes)))
    assert np.all(np.array(traj.snapshots) == 0)


def test_kernel_datum_is_stationary_without_x(small):
    grid, _, ctx, Lop, basis = small
    cfg = SolverConfig(epsilon=0.5, dt=0.1, t_end=0.5, integrator="imex")
    # the quadratic term is O(amplitude^2), so keep the datum tiny
    f0 = 1e-9 * basis.e[:, 4][None]
    out = step(f0, cfg, PerturbationSystem(cfg, ctx, Lop))
    np.testing.assert_allclose(out, f0, atol=1e-6 * np.max(np.abs(f0)))


def test_rk4_stability_guard(small):
    cfg = SolverConfig(epsilon=0.1, dt=0.1, t_end=0.1, integrator="rk4")
    sys_ = PerturbationSystem(cfg, small[2], small[3])
    with pytest.raises(ConfigError):
        sys_.step(np.zeros((1, small[0].n_nodes)), cfg.dt)


def test_integrators_agree(small):
    grid, _, ctx, Lop, basis = small
    x = np.arange(8) * 2 * np.pi / 8
    f0, _ = shear_datum(basis, x, 1.0, 1e-3, 1e-3)
    f0 = f0 + 1e-4 * np.sin(x)[:, None] * np.exp(-grid.speed_sq / 4)
    rho = Lop.spectral_report()["spectral_radius"]
    dt = 0.2 / rho
    out = {}
    for integ in ("rk4", "etd"):
        cfg = SolverConfig(epsilon=1.0, spatial={"n_x": 8, "length": 2 * np.pi}, dt=dt,
                           t_end=20 * dt, integrator=integ)
        out[integ] = PerturbationSystem(cfg, ctx, Lop).run(f0, diagnostics=False).snapshots[-1]
    err = np.max(np.abs(out["rk4"] - out["etd"])) / np.max(np.abs(out["rk4"]))
    assert err < 1e-3


def test_conservation_on_torus(small):
    grid, _, ctx, Lop, basis = small
    x = np.arange(8) * 2 * np.pi / 8
    f0, _ = shear_datum(basis, x, 1.0)
    traj = PerturbationSystem(torus(), ctx, Lop).run(f0)
    mass = np.array(traj.diagnostics["mass"])
    energy = np.array(traj.diagnostics["energy_moment"])
    assert np.max(np.abs(mass - mass[0])) < 1e-14
    assert np.max(np.abs(energy - energy[0])) < 1e-13


def test_trajectory_roundtrip(tmp_path, small):
    grid, _, ctx, Lop, basis = small
    x = np.arange(8) * 2 * np.pi / 8
    f0, _ = shear_datum(basis, x, 1.0)
    traj = PerturbationSystem(torus(t_end=1.0), ctx, Lop).run(f0)
    traj.save(tmp_path)
    back = Trajectory.load(tmp_path)
    assert back.times == traj.times
    np.testing.assert_array_equal(np.array(back.snapshots), np.array(traj.snapshots))
    assert back.fingerprint == grid.fingerprint()


def test_homogeneous_relaxation_small():
    cfg = SolverConfig(formulation="absolute", n_per_axis=9, v_max=8.0, dt=0.02, t_end=0.4)
    grid = cfg.grid()
    F0 = bi_temperature_datum(grid)
    traj = relax_homogeneous(cfg, F0)
    rep = relaxation_report(traj, grid)
    assert rep["min_entropy_increment"] >= -1e-12
    assert rep["invariant_drift"] < 1e-13
    np.testing.assert_allclose(invariants(grid, traj.snapshots[-1]), invariants(grid, F0), rtol=1e-13, atol=1e-14)


def test_scaling_equivalence():
    rep = scaling_equivalence_test(EquilibriumParams(1.0, 2.0), n_per_axis=7, v_max=5.0)
    assert rep["discrepancy"] < 1e-10


def test_sweep_decay_rate(small):
    base = SolverConfig(spatial={"n_x": 8, "length": 2 * np.pi}, dt=2.0, t_end=20.0, integrator="etd")
    res = knudsen_sweep(base, [0.2, 0.1])
    assert not res.failures
    mu = 0.0042858
    assert decay_rate(res.series[0.1], 1.0) == pytest.approx(mu, rel=2e-3)
    with pytest.raises(ConfigError):
        knudsen_sweep(base, [0.1, 0.2])
