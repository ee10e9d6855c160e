"""Uniform velocity grids, sphere quadrature and collision geometry."""
from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigError, ValidationError

GRID_VERSION = 1


@dataclass(frozen=True)
class LatticeShells:
    """Lattice vectors grouped by squared length and parity class.

    A relative velocity g (in units of h) collides into every g' with
    |g'|^2 = |g|^2 and g' = g (mod 2), so the post-collision pair stays on
    the lattice.  ``vecs[start[key]:start[key+1]]`` lists the members of
    class ``key = 8*|g|^2 + parity`` whose components fit in the grid, and
    ``count[key]`` is the full class size used to normalise the angular
    weight.
    """
    vecs: np.ndarray
    start: np.ndarray
    count: np.ndarray

    @staticmethod
    def key(g) -> int:
        g = np.asarray(g, dtype=np.int64)
        nsq = int(g @ g)
        par = ((int(g[0]) & 1) << 2) | ((int(g[1]) & 1) << 1) | (int(g[2]) & 1)
        return 8 * nsq + par

    def members(self, g) -> np.ndarray:
        k = self.key(g)
        return self.vecs[self.start[k]:self.start[k + 1]]


def lattice_shells(n: int) -> LatticeShells:
    R = n - 1
    Rf = int(np.ceil(np.sqrt(3.0) * R))
    r = np.arange(-Rf, Rf + 1)
    A, B, C = (a.ravel() for a in np.meshgrid(r, r, r, indexing="ij"))
    nsq = A * A + B * B + C * C
    key = nsq * 8 + (((A & 1) << 2) | ((B & 1) << 1) | (C & 1))
    maxkey = 3 * R * R * 8 + 8
    keep = key < maxkey
    count = np.bincount(key[keep], minlength=maxkey).astype(np.int64)
    inb = keep & (np.abs(A) <= R) & (np.abs(B) <= R) & (np.abs(C) <= R)
    k2 = key[inb]
    order = np.argsort(k2, kind="stable")
    vecs = np.stack([A[inb], B[inb], C[inb]], 1)[order].astype(np.int64)
    start = np.zeros(maxkey + 1, np.int64)
    np.add.at(start, k2[order] + 1, 1)
    return LatticeShells(np.ascontiguousarray(vecs), np.cumsum(start), count)


@dataclass(frozen=True)
class VelocityGrid:
    """Cube of n^3 equispaced nodes on [-v_max, v_max]^3, flat index
    ``(a*n + b)*n + c`` for lattice coordinates (a, b, c)."""
    n_per_axis: int
    v_max: float
    h: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "h", 2.0 * self.v_max / (self.n_per_axis - 1))

    @property
    def n_nodes(self) -> int:
        return self.n_per_axis ** 3

    @cached_property
    def axis(self) -> np.ndarray:
        n = self.n_per_axis
        return (np.arange(n) - (n - 1) / 2.0) * self.h

    @cached_property
    def lattice(self) -> np.ndarray:
        n = self.n_per_axis
        k = np.arange(n)
        return np.stack(np.meshgrid(k, k, k, indexing="ij"), -1).reshape(-1, 3)

    @cached_property
    def nodes(self) -> np.ndarray:
        v = self.axis
        return np.stack(np.meshgrid(v, v, v, indexing="ij"), -1).reshape(-1, 3)

    @cached_property
    def speed_sq(self) -> np.ndarray:
        return np.einsum("ij,ij->i", self.nodes, self.nodes)

    @property
    def weight(self) -> float:
        return self.h ** 3

    @cached_property
    def weights(self) -> np.ndarray:
        return np.full(self.n_nodes, self.weight)

    @cached_property
    def shells(self) -> LatticeShells:
        return lattice_shells(self.n_per_axis)

    def index(self, lat) -> np.ndarray:
        """Flat index of lattice coordinates (..., 3); -1 when outside."""
        lat = np.asarray(lat, dtype=np.int64)
        n = self.n_per_axis
        inside = np.all((lat >= 0) & (lat < n), axis=-1)
        flat = (lat[..., 0] * n + lat[..., 1]) * n + lat[..., 2]
        return np.where(inside, flat, -1)

    def integrate(self, f, axis=-1):
        return self.weight * np.sum(f, axis=axis)

    def inner(self, f, g):
        return self.weight * np.sum(f * g, axis=-1)

    def fingerprint(self) -> str:
        payload = json.dumps({"n": self.n_per_axis, "v_max": repr(float(self.v_max)),
                              "version": GRID_VERSION}, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def symmetry_permutation(self, perm, signs) -> np.ndarray:
        """Index map for the signed axis permutation R.

        Returns ``idx`` with ``nodes[idx] == nodes @ R.T``, so ``f[idx]`` is
        the grid function v -> f(R v).
        """
        R = signed_permutation_matrix(perm, signs)
        n = self.n_per_axis
        centered = 2 * self.lattice - (n - 1)
        lat = ((centered @ R.T) + (n - 1)) // 2
        return self.index(lat)

    def check_compatible(self, other: "VelocityGrid"):
        from .errors import GridMismatchError
        if (other.n_per_axis, other.v_max) != (self.n_per_axis, self.v_max):
            raise GridMismatchError(
                f"grid ({other.n_per_axis}, {other.v_max}) does not match "
                f"({self.n_per_axis}, {self.v_max})")


def build_grid(n_per_axis: int, v_max: float) -> VelocityGrid:
    if int(n_per_axis) != n_per_axis or n_per_axis < 4:
        raise ConfigError(f"n_per_axis must be an integer >= 4, got {n_per_axis}")
    if not np.isfinite(v_max) or v_max <= 0:
        raise ConfigError(f"v_max must be positive, got {v_max}")
    return VelocityGrid(int(n_per_axis), float(v_max))


def signed_permutation_matrix(perm, signs) -> np.ndarray:
    R = np.zeros((3, 3), dtype=np.int64)
    for row, (col, s) in enumerate(zip(perm, signs)):
        R[row, col] = s
    return R


def octahedral_group():
    """All 48 signed axis permutations as (perm, signs) pairs."""
    return [(p, s) for p in itertools.permutations(range(3))
            for s in itertools.product((1, -1), repeat=3)]


# ---------------------------------------------------------------- sphere

@dataclass(frozen=True)
class SphereQuadrature:
    nodes: np.ndarray
    weights: np.ndarray

    def integrate(self, fvals) -> float:
        return float(np.dot(self.weights, fvals))


def sphere_quadrature(n_polar: int, n_azimuthal: int) -> SphereQuadrature:
    """Gauss-Legendre in cos(theta) times the uniform azimuthal rule."""
    if n_polar < 2 or n_azimuthal < 4:
        raise ConfigError("sphere quadrature needs n_polar >= 2 and n_azimuthal >= 4")
    if n_azimuthal % 2:
        raise ConfigError("n_azimuthal must be even so the rule is closed under sigma -> -sigma")
    x, wx = np.polynomial.legendre.leggauss(n_polar)
    phi = 2 * np.pi * np.arange(n_azimuthal) / n_azimuthal
    ct, ph = np.meshgrid(x, phi, indexing="ij")
    st = np.sqrt(1.0 - ct ** 2)
    nodes = np.stack([st * np.cos(ph), st * np.sin(ph), ct], -1).reshape(-1, 3)
    w = np.repeat(wx * (2 * np.pi / n_azimuthal), n_azimuthal)
    return SphereQuadrature(nodes, w)


# ---------------------------------------------------------------- geometry

def post_collision(v, v_star, sigma):
    """Elastic post-collision velocities for a unit direction sigma."""
    v = np.asarray(v, dtype=float)
    vs = np.asarray(v_star, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    norm = np.linalg.norm(sigma, axis=-1)
    if np.any(np.abs(norm - 1.0) > 1e-12):
        raise ValidationError("sigma must be a unit vector")
    center = 0.5 * (v + vs)
    half = 0.5 * np.linalg.norm(v - vs, axis=-1)[..., None] * sigma
    return center + half, center - half


def energy_split(v, v_star, sigma, kappa, iota):
    """Return (|v|^2+|v_*|^2, |v(kappa)|^2+|v_*(iota)|^2) for the segment
    points v + kappa (v' - v) and v_* + iota (v_*' - v_*)."""
    vp, vsp = post_collision(v, v_star, sigma)
    a = v + np.asarray(kappa)[..., None] * (vp - v)
    b = v_star + np.asarray(iota)[..., None] * (vsp - v_star)
    e0 = np.sum(v * v, -1) + np.sum(v_star * v_star, -1)
    return e0, np.sum(a * a, -1) + np.sum(b * b, -1)


def lattice_sigmas(g) -> np.ndarray:
    """Unit directions reachable on the lattice from relative vector g."""
    g = np.asarray(g, dtype=np.int64)
    nsq = int(g @ g)
    if nsq == 0:
        return np.zeros((0, 3))
    R = int(np.ceil(np.sqrt(nsq)))
    r = np.arange(-R, R + 1)
    cand = np.stack(np.meshgrid(r, r, r, indexing="ij"), -1).reshape(-1, 3)
    ok = (np.sum(cand ** 2, 1) == nsq) & np.all((cand - g) % 2 == 0, axis=1)
    return cand[ok] / np.sqrt(nsq)
