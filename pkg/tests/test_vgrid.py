import numpy as np
import pytest

from bbelab.errors import ConfigError, GridMismatchError
from bbelab.vgrid import (build_grid, lattice_sigmas, octahedral_group, post_collision,
                          sphere_quadrature)


def test_nodes_and_spacing():
    g = build_grid(5, 2.0)
    assert g.n_nodes == 125
    assert g.h == pytest.approx(1.0)
    np.testing.assert_allclose(g.axis, [-2, -1, 0, 1, 2])
    assert g.integrate(np.ones(g.n_nodes)) == pytest.approx(125.0)


def test_index_roundtrip():
    g = build_grid(6, 3.0)
    assert np.array_equal(g.index(g.lattice), np.arange(g.n_nodes))
    assert g.index([6, 0, 0]) == -1


def test_bad_grid():
    with pytest.raises(ConfigError):
        build_grid(3, 1.0)
    with pytest.raises(ConfigError):
        build_grid(8, -1.0)


def test_fingerprint_and_mismatch():
    a, b = build_grid(7, 4.0), build_grid(7, 5.0)
    assert a.fingerprint() != b.fingerprint()
    assert a.fingerprint() == build_grid(7, 4.0).fingerprint()
    with pytest.raises(GridMismatchError):
        a.check_compatible(b)


def test_symmetry_permutation_maps_nodes():
    g = build_grid(7, 3.0)
    for perm, signs in octahedral_group()[::7]:
        R = np.zeros((3, 3))
        for row, (col, s) in enumerate(zip(perm, signs)):
            R[row, col] = s
        idx = g.symmetry_permutation(perm, signs)
        np.testing.assert_allclose(g.nodes[idx], g.nodes @ R.T, atol=1e-12)


def test_octahedral_group_size():
    assert len(octahedral_group()) == 48


def test_shell_members_share_length_and_parity():
    g = build_grid(7, 3.0)
    sh = g.shells
    for vec in ([1, 2, 0], [2, 2, 1], [3, 0, 0]):
        mem = sh.members(vec)
        assert len(mem) > 0
        assert np.all(np.sum(mem ** 2, 1) == np.dot(vec, vec))
        assert np.all((mem - vec) % 2 == 0)


def test_lattice_sigmas_unit():
    s = lattice_sigmas(np.array([1, 2, 2]))
    np.testing.assert_allclose(np.linalg.norm(s, axis=1), 1.0)


def test_post_collision_conserves():
    rng = np.random.default_rng(1)
    v, vs = rng.standard_normal(3), rng.standard_normal(3)
    sig = rng.standard_normal(3)
    sig /= np.linalg.norm(sig)
    vp, vsp = post_collision(v, vs, sig)
    np.testing.assert_allclose(vp + vsp, v + vs)
    assert vp @ vp + vsp @ vsp == pytest.approx(v @ v + vs @ vs)


def test_sphere_quadrature():
    q = sphere_quadrature(16, 32)
    assert q.integrate(np.ones(len(q.nodes))) == pytest.approx(4 * np.pi, rel=1e-12)
    assert q.integrate(q.nodes[:, 2] ** 2) == pytest.approx(4 * np.pi / 3, rel=1e-12)
    with pytest.raises(ConfigError):
        sphere_quadrature(8, 9)
