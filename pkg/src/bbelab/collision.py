"""Hard-sphere quantum collision operator on the velocity lattice.

Collisions are restricted to lattice-preserving outcomes: for a relative
vector g = k_i - k_j (grid units), the admissible post-collision relative
vectors are the lattice vectors g' with |g'| = |g| and g' = g (mod 2).
Each admissible g' carries the angular weight 4 pi / #{g'}, so the sphere
integral is replaced by an equal-weight average over the lattice shell.
Post-collision velocities then land exactly on nodes, which makes the
discrete operator conserve mass, momentum and energy exactly, annihilate
every discrete Bose-Einstein state and keep the linearization symmetric.
Tuples whose outcome leaves the grid are dropped (zero extension).
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .equilibrium import EquilibriumParams, log_M_scaled, log_N_scaled
from .errors import GridMismatchError, NumericalError, ValidationError
from .vgrid import VelocityGrid

CACHE_ENV = "BBELAB_CACHE_DIR"
MATRIX_VERSION = 1
_MAGIC = b"BBELMAT1"


# ====================================================================
# numba kernels.  All canonical loops visit every physical collision
# {i, j} <-> {p, q} exactly once through i < j, p < q, i < p, in a fixed
# order, so results do not depend on thread count.
# ====================================================================

@nb.njit(cache=True)
def _q_canon(n, wfac, F, vecs, start, cnt):
    Nv = n * n * n
    nn = n * n
    out = np.zeros(Nv)
    for i in range(Nv):
        a0 = i // nn; a1 = (i // n) % n; a2 = i % n
        Fi = F[i]
        for j in range(i + 1, Nv):
            b0 = j // nn; b1 = (j // n) % n; b2 = j % n
            g0 = a0 - b0; g1 = a1 - b1; g2 = a2 - b2
            nsq = g0 * g0 + g1 * g1 + g2 * g2
            key = nsq * 8 + ((g0 & 1) << 2) + ((g1 & 1) << 1) + (g2 & 1)
            W2 = 2.0 * wfac * math.sqrt(nsq) / cnt[key]
            s0 = a0 + b0; s1 = a1 + b1; s2 = a2 + b2
            Fj = F[j]
            for t in range(start[key], start[key + 1]):
                p0 = (s0 + vecs[t, 0]) >> 1; p1 = (s1 + vecs[t, 1]) >> 1; p2 = (s2 + vecs[t, 2]) >> 1
                if p0 < 0 or p0 >= n or p1 < 0 or p1 >= n or p2 < 0 or p2 >= n:
                    continue
                r0 = s0 - p0; r1 = s1 - p1; r2 = s2 - p2
                if r0 < 0 or r0 >= n or r1 < 0 or r1 >= n or r2 < 0 or r2 >= n:
                    continue
                ip = (p0 * n + p1) * n + p2
                iq = (r0 * n + r1) * n + r2
                if ip >= iq or i >= ip:
                    continue
                Fp = F[ip]; Fq = F[iq]
                D = W2 * (Fp * Fq * (1.0 + Fi + Fj) - Fi * Fj * (1.0 + Fp + Fq))
                out[i] += D; out[j] += D; out[ip] -= D; out[iq] -= D
    return out


@nb.njit(cache=True)
def _lmat_canon(n, wfac, lnN, vecs, start, cnt):
    Nv = n * n * n
    nn = n * n
    L = np.zeros((Nv, Nv))
    idx = np.empty(4, np.int64)
    sg = np.array([1.0, 1.0, -1.0, -1.0])
    worst = -1e300
    for i in range(Nv):
        a0 = i // nn; a1 = (i // n) % n; a2 = i % n
        for j in range(i + 1, Nv):
            b0 = j // nn; b1 = (j // n) % n; b2 = j % n
            g0 = a0 - b0; g1 = a1 - b1; g2 = a2 - b2
            nsq = g0 * g0 + g1 * g1 + g2 * g2
            key = nsq * 8 + ((g0 & 1) << 2) + ((g1 & 1) << 1) + (g2 & 1)
            W2 = 2.0 * wfac * math.sqrt(nsq) / cnt[key]
            s0 = a0 + b0; s1 = a1 + b1; s2 = a2 + b2
            for t in range(start[key], start[key + 1]):
                p0 = (s0 + vecs[t, 0]) >> 1; p1 = (s1 + vecs[t, 1]) >> 1; p2 = (s2 + vecs[t, 2]) >> 1
                if p0 < 0 or p0 >= n or p1 < 0 or p1 >= n or p2 < 0 or p2 >= n:
                    continue
                r0 = s0 - p0; r1 = s1 - p1; r2 = s2 - p2
                if r0 < 0 or r0 >= n or r1 < 0 or r1 >= n or r2 < 0 or r2 >= n:
                    continue
                ip = (p0 * n + p1) * n + p2
                iq = (r0 * n + r1) * n + r2
                if ip >= iq or i >= ip:
                    continue
                idx[0] = i; idx[1] = j; idx[2] = ip; idx[3] = iq
                tot = lnN[i] + lnN[j] + lnN[ip] + lnN[iq]
                for u in range(4):
                    for w in range(4):
                        e = tot - lnN[idx[u]] - lnN[idx[w]]
                        if e > worst:
                            worst = e
                        L[idx[u], idx[w]] += W2 * sg[u] * sg[w] * math.exp(e)
    return L, worst


@nb.njit(cache=True)
def _lvec_canon(n, wfac, lnN, u, vecs, start, cnt):
    """Matrix-free L f for a batch u = f / N of shape (Nv, m)."""
    Nv = n * n * n
    nn = n * n
    m = u.shape[1]
    out = np.zeros((Nv, m))
    invN = np.exp(-lnN)
    for i in range(Nv):
        a0 = i // nn; a1 = (i // n) % n; a2 = i % n
        for j in range(i + 1, Nv):
            b0 = j // nn; b1 = (j // n) % n; b2 = j % n
            g0 = a0 - b0; g1 = a1 - b1; g2 = a2 - b2
            nsq = g0 * g0 + g1 * g1 + g2 * g2
            key = nsq * 8 + ((g0 & 1) << 2) + ((g1 & 1) << 1) + (g2 & 1)
            W2 = 2.0 * wfac * math.sqrt(nsq) / cnt[key]
            s0 = a0 + b0; s1 = a1 + b1; s2 = a2 + b2
            for t in range(start[key], start[key + 1]):
                p0 = (s0 + vecs[t, 0]) >> 1; p1 = (s1 + vecs[t, 1]) >> 1; p2 = (s2 + vecs[t, 2]) >> 1
                if p0 < 0 or p0 >= n or p1 < 0 or p1 >= n or p2 < 0 or p2 >= n:
                    continue
                r0 = s0 - p0; r1 = s1 - p1; r2 = s2 - p2
                if r0 < 0 or r0 >= n or r1 < 0 or r1 >= n or r2 < 0 or r2 >= n:
                    continue
                ip = (p0 * n + p1) * n + p2
                iq = (r0 * n + r1) * n + r2
                if ip >= iq or i >= ip:
                    continue
                c = W2 * math.exp(lnN[i] + lnN[j] + lnN[ip] + lnN[iq])
                for k in range(m):
                    s = c * (u[i, k] + u[j, k] - u[ip, k] - u[iq, k])
                    out[i, k] += s * invN[i]; out[j, k] += s * invN[j]
                    out[ip, k] -= s * invN[ip]; out[iq, k] -= s * invN[iq]
    return out


@nb.njit(cache=True)
def _remainder_canon(n, wfac, M, lnN, G, inv_eps, vecs, start, cnt):
    """N^-1 sum W (P2(G)/eps + P3(G)) for a batch G = N f of shape (Nv, m)."""
    Nv = n * n * n
    nn = n * n
    m = G.shape[1]
    out = np.zeros((Nv, m))
    invN = np.exp(-lnN)
    for i in range(Nv):
        a0 = i // nn; a1 = (i // n) % n; a2 = i % n
        Mi = M[i]
        for j in range(i + 1, Nv):
            b0 = j // nn; b1 = (j // n) % n; b2 = j % n
            g0 = a0 - b0; g1 = a1 - b1; g2 = a2 - b2
            nsq = g0 * g0 + g1 * g1 + g2 * g2
            key = nsq * 8 + ((g0 & 1) << 2) + ((g1 & 1) << 1) + (g2 & 1)
            W2 = 2.0 * wfac * math.sqrt(nsq) / cnt[key]
            s0 = a0 + b0; s1 = a1 + b1; s2 = a2 + b2
            Mj = M[j]
            for t in range(start[key], start[key + 1]):
                p0 = (s0 + vecs[t, 0]) >> 1; p1 = (s1 + vecs[t, 1]) >> 1; p2 = (s2 + vecs[t, 2]) >> 1
                if p0 < 0 or p0 >= n or p1 < 0 or p1 >= n or p2 < 0 or p2 >= n:
                    continue
                r0 = s0 - p0; r1 = s1 - p1; r2 = s2 - p2
                if r0 < 0 or r0 >= n or r1 < 0 or r1 >= n or r2 < 0 or r2 >= n:
                    continue
                ip = (p0 * n + p1) * n + p2
                iq = (r0 * n + r1) * n + r2
                if ip >= iq or i >= ip:
                    continue
                Mp = M[ip]; Mq = M[iq]
                gi = 1.0 + Mi + Mj
                go = 1.0 + Mp + Mq
                for k in range(m):
                    hi = G[i, k]; hj = G[j, k]; hp = G[ip, k]; hq = G[iq, k]
                    hpq = hp * hq
                    hij = hi * hj
                    P2 = (hpq * gi + (Mp * hq + hp * Mq) * (hi + hj)
                          - hij * go - (Mi * hj + hi * Mj) * (hp + hq))
                    P3 = hpq * (hi + hj) - hij * (hp + hq)
                    X = W2 * (P2 * inv_eps + P3)
                    out[i, k] += X * invN[i]; out[j, k] += X * invN[j]
                    out[ip, k] -= X * invN[ip]; out[iq, k] -= X * invN[iq]
    return out


@nb.njit(cache=True)
def _gamma_full(n, wfac, M, lnN, G, H, R, mode, vecs, start, cnt):
    """Row-wise sum over all (j, g') for the non-symmetric forms.

    mode 2: Pi_2(g, h) with G = N g, H = N h.
    mode 3: the trilinear bracket with G, H, R = N g, N h, N rho.
    Result is multiplied by N^-1 at the end.
    """
    Nv = n * n * n
    nn = n * n
    out = np.zeros(Nv)
    for i in range(Nv):
        a0 = i // nn; a1 = (i // n) % n; a2 = i % n
        Mi = M[i]
        acc = 0.0
        for j in range(Nv):
            if j == i:
                continue
            b0 = j // nn; b1 = (j // n) % n; b2 = j % n
            g0 = a0 - b0; g1 = a1 - b1; g2 = a2 - b2
            nsq = g0 * g0 + g1 * g1 + g2 * g2
            key = nsq * 8 + ((g0 & 1) << 2) + ((g1 & 1) << 1) + (g2 & 1)
            W = wfac * math.sqrt(nsq) / cnt[key]
            s0 = a0 + b0; s1 = a1 + b1; s2 = a2 + b2
            Mj = M[j]
            part = 0.0
            for t in range(start[key], start[key + 1]):
                p0 = (s0 + vecs[t, 0]) >> 1; p1 = (s1 + vecs[t, 1]) >> 1; p2 = (s2 + vecs[t, 2]) >> 1
                if p0 < 0 or p0 >= n or p1 < 0 or p1 >= n or p2 < 0 or p2 >= n:
                    continue
                r0 = s0 - p0; r1 = s1 - p1; r2 = s2 - p2
                if r0 < 0 or r0 >= n or r1 < 0 or r1 >= n or r2 < 0 or r2 >= n:
                    continue
                ip = (p0 * n + p1) * n + p2
                iq = (r0 * n + r1) * n + r2
                Mp = M[ip]; Mq = M[iq]
                if mode == 2:
                    # v -> i, v_* -> j, v' -> p, v_*' -> q
                    x = (G[iq] * H[ip] - G[j] * H[i]
                         + G[iq] * H[ip] * (Mi + Mj) - G[j] * H[i] * (Mp + Mq)
                         + G[j] * H[ip] * (Mq - Mi) - G[iq] * H[i] * (Mj - Mp)
                         + G[ip] * H[i] * (Mq - Mj) + G[iq] * H[j] * (Mp - Mi))
                else:
                    x = (G[iq] * H[ip] * (R[j] + R[i]) - G[j] * H[i] * (R[iq] + R[ip]))
                part += x
            acc += W * part
        out[i] = acc * math.exp(-lnN[i])
    return out


@nb.njit(cache=True)
def _count_canon(n, vecs, start, cnt):
    Nv = n * n * n
    nn = n * n
    total = 0
    for i in range(Nv):
        a0 = i // nn; a1 = (i // n) % n; a2 = i % n
        for j in range(i + 1, Nv):
            b0 = j // nn; b1 = (j // n) % n; b2 = j % n
            g0 = a0 - b0; g1 = a1 - b1; g2 = a2 - b2
            nsq = g0 * g0 + g1 * g1 + g2 * g2
            key = nsq * 8 + ((g0 & 1) << 2) + ((g1 & 1) << 1) + (g2 & 1)
            s0 = a0 + b0; s1 = a1 + b1; s2 = a2 + b2
            for t in range(start[key], start[key + 1]):
                p0 = (s0 + vecs[t, 0]) >> 1; p1 = (s1 + vecs[t, 1]) >> 1; p2 = (s2 + vecs[t, 2]) >> 1
                if p0 < 0 or p0 >= n or p1 < 0 or p1 >= n or p2 < 0 or p2 >= n:
                    continue
                r0 = s0 - p0; r1 = s1 - p1; r2 = s2 - p2
                if r0 < 0 or r0 >= n or r1 < 0 or r1 >= n or r2 < 0 or r2 >= n:
                    continue
                ip = (p0 * n + p1) * n + p2
                iq = (r0 * n + r1) * n + r2
                if ip >= iq or i >= ip:
                    continue
                total += 1
    return total


# ====================================================================
# context
# ====================================================================

@dataclass
class CollisionContext:
    """Lattice collision tables for one grid.

    ``kernel_scale`` multiplies |v - v_*| in ``q_collision``; use
    ``temp**2`` for the temperature-scaled kernel B_T.
    """
    grid: VelocityGrid
    kernel_scale: float = 1.0

    def __post_init__(self):
        sh = self.grid.shells
        self.vecs, self.start, self.count = sh.vecs, sh.start, sh.count

    def wfac(self, scale: float) -> float:
        # h^3 (dv_*) * |g| h * 4 pi / #shell, the |g| and count applied per tuple
        h = self.grid.h
        return h ** 4 * scale * 4.0 * np.pi

    def n_canonical(self) -> int:
        return int(_count_canon(self.grid.n_per_axis, self.vecs, self.start, self.count))

    def check(self, arr, axis=-1):
        if np.shape(arr)[axis] != self.grid.n_nodes:
            raise GridMismatchError(
                f"array with {np.shape(arr)[axis]} nodes used with a grid of {self.grid.n_nodes}")


def scaled_tables(grid: VelocityGrid, params: EquilibriumParams):
    """(M_lambda, ln N_lambda) on the scaled grid."""
    r2 = grid.speed_sq
    return np.exp(log_M_scaled(params.lam, r2)), log_N_scaled(params.lam, r2)


def absolute_tables(grid: VelocityGrid, params: EquilibriumParams, drift=None):
    """(M, ln N) of M_{lambda,T}(v - u) in physical variables."""
    v = grid.nodes if drift is None else grid.nodes - np.asarray(drift, float)
    r2 = np.einsum("ij,ij->i", v, v) / params.temp
    return np.exp(log_M_scaled(params.lam, r2)), log_N_scaled(params.lam, r2)


# ====================================================================
# Q
# ====================================================================

def invariant_basis(grid: VelocityGrid) -> np.ndarray:
    v = grid.nodes
    return np.column_stack([np.ones(grid.n_nodes), v, grid.speed_sq])


def conservative_correction(grid: VelocityGrid, Q: np.ndarray) -> np.ndarray:
    """Least-squares projection onto {<Q,1> = <Q,v> = <Q,|v|^2> = 0}."""
    Phi = invariant_basis(grid)
    coef = np.linalg.solve(Phi.T @ Phi, Phi.T @ Q)
    return Q - Phi @ coef


def q_collision(ctx: CollisionContext, F, correct: bool = False, negative_tol: float = 1e-12):
    """Q(F, F) on the grid (Bose-Einstein, hard spheres)."""
    F = np.asarray(F, dtype=float)
    ctx.check(F)
    if not np.all(np.isfinite(F)):
        raise NumericalError("non-finite distribution passed to q_collision")
    fmax = float(np.max(np.abs(F))) if F.size else 0.0
    if np.min(F) < -negative_tol * fmax:
        raise ValidationError(f"distribution has negative values (min {np.min(F):.3e})")
    F = np.maximum(F, 0.0)
    Q = _q_canon(ctx.grid.n_per_axis, ctx.wfac(ctx.kernel_scale), F,
                 ctx.vecs, ctx.start, ctx.count)
    return conservative_correction(ctx.grid, Q) if correct else Q


# ====================================================================
# linearized operator
# ====================================================================

def _cache_dir():
    d = os.environ.get(CACHE_ENV)
    return d if d else None


def _matrix_key(grid, params, absolute, drift):
    payload = {"grid": grid.fingerprint(), "lam": repr(params.lam), "temp": repr(params.temp),
               "absolute": bool(absolute), "drift": None if drift is None else [repr(float(x)) for x in drift],
               "version": MATRIX_VERSION}
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:20], payload


def save_matrix(path, L: np.ndarray, header: dict):
    hdr = json.dumps(header, sort_keys=True).encode()
    tri = L[np.tril_indices(L.shape[0])]
    with open(path + ".tmp", "wb") as fh:
        fh.write(_MAGIC)
        fh.write(np.uint32(len(hdr)).tobytes())
        fh.write(hdr)
        fh.write(np.ascontiguousarray(tri, dtype="<f8").tobytes())
    os.replace(path + ".tmp", path)


def load_matrix(path):
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ValidationError(f"{path} is not a matrix cache file")
        ln = int(np.frombuffer(fh.read(4), dtype=np.uint32)[0])
        header = json.loads(fh.read(ln).decode())
        tri = np.frombuffer(fh.read(), dtype="<f8")
    nv = int(header["n_nodes"])
    L = np.zeros((nv, nv))
    r, c = np.tril_indices(nv)
    L[r, c] = tri
    L[c, r] = tri
    return L, header


@dataclass
class LinearOperatorMatrix:
    """Dense symmetric matrix of L (values -> values, uniform weights)."""
    matrix: np.ndarray
    grid: VelocityGrid
    params: EquilibriumParams
    lnN: np.ndarray
    M: np.ndarray
    absolute: bool = False
    drift: np.ndarray | None = None
    _eig: tuple | None = field(default=None, repr=False)

    @property
    def N(self):
        return np.exp(self.lnN)

    def __matmul__(self, f):
        return self.matrix @ f

    def kernel_vectors(self) -> np.ndarray:
        """The five analytic kernel elements N{1, v, |v|^2} (columns)."""
        v = self.grid.nodes if self.drift is None else self.grid.nodes - self.drift
        N = self.N
        return np.column_stack([N, v[:, 0] * N, v[:, 1] * N, v[:, 2] * N, np.sum(v * v, 1) * N])

    def eig(self):
        if self._eig is None:
            self._eig = np.linalg.eigh(self.matrix)
        return self._eig

    def symmetry_error(self) -> float:
        L = self.matrix
        return float(np.max(np.abs(L - L.T)) / np.max(np.abs(L)))

    def spectral_report(self) -> dict:
        w, _ = self.eig()
        top = float(w[-1])
        # gap: smallest eigenvalue clearly separated from the kernel cluster
        order = np.sort(w)
        k = 5
        gap = float(order[k])
        n_null = int(np.sum(order < gap / 100))
        return {"n_near_null": n_null, "spectral_gap": gap, "spectral_radius": top,
                "min_eigenvalue": float(order[0]), "null_eigenvalues": order[:k].tolist(),
                "psd_ok": bool(order[0] >= -1e-10 * top)}


def linearized_matrix(ctx: CollisionContext, params: EquilibriumParams, absolute: bool = False,
                      drift=None, use_cache: bool = True) -> LinearOperatorMatrix:
    """Dense linearized operator.

    Scaled (default): L~^{lambda,T} with kernel T^2|v - v_*| around M_lambda.
    ``absolute=True``: linearization of Q (kernel ``ctx.kernel_scale``)
    around M_{lambda,T}(v - drift) in physical variables.
    """
    grid = ctx.grid
    if absolute:
        M, lnN = absolute_tables(grid, params, drift)
        scale = ctx.kernel_scale
    else:
        M, lnN = scaled_tables(grid, params)
        scale = params.temp ** 2
    drift_arr = None if drift is None else np.asarray(drift, float)
    key, payload = _matrix_key(grid, params, absolute, drift)
    payload["kernel_scale"] = repr(float(scale))
    key = hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:20]
    cdir = _cache_dir() if use_cache else None
    path = os.path.join(cdir, f"L_{key}.bin") if cdir else None
    if path and os.path.exists(path):
        L, hdr = load_matrix(path)
        if hdr.get("fingerprint") == grid.fingerprint() and hdr.get("key") == key:
            return LinearOperatorMatrix(L, grid, params, lnN, M, absolute, drift_arr)
    L, worst = _lmat_canon(grid.n_per_axis, ctx.wfac(scale), lnN, ctx.vecs, ctx.start, ctx.count)
    if worst > 700:
        raise NumericalError("log-space weight exceeds overflow guard", {"max_log": worst})
    L = 0.5 * (L + L.T)
    if path:
        os.makedirs(cdir, exist_ok=True)
        save_matrix(path, L, {"fingerprint": grid.fingerprint(), "lam": params.lam, "temp": params.temp,
                              "version": MATRIX_VERSION, "n_nodes": grid.n_nodes, "key": key,
                              "absolute": absolute, "kernel_scale": scale})
    return LinearOperatorMatrix(L, grid, params, lnN, M, absolute, drift_arr)


def linearized_apply(ctx: CollisionContext, params: EquilibriumParams, f) -> np.ndarray:
    """Matrix-free L~ f; f of shape (Nv,) or (Nv, m)."""
    f = np.asarray(f, float)
    ctx.check(f, axis=0)
    M, lnN = scaled_tables(ctx.grid, params)
    u = (f.reshape(f.shape[0], -1) * np.exp(-lnN)[:, None])
    out = _lvec_canon(ctx.grid.n_per_axis, ctx.wfac(params.temp ** 2), lnN,
                      np.ascontiguousarray(u), ctx.vecs, ctx.start, ctx.count)
    return out.reshape(f.shape)


# ====================================================================
# nonlinear terms
# ====================================================================

def gamma2(ctx: CollisionContext, params: EquilibriumParams, g, h) -> np.ndarray:
    """Bilinear term Gamma~_2(g, h) from the four-line bracket Pi_2."""
    ctx.check(g); ctx.check(h)
    M, lnN = scaled_tables(ctx.grid, params)
    N = np.exp(lnN)
    z = np.zeros(ctx.grid.n_nodes)
    return _gamma_full(ctx.grid.n_per_axis, ctx.wfac(params.temp ** 2), M, lnN,
                       N * np.asarray(g, float), N * np.asarray(h, float), z, 2,
                       ctx.vecs, ctx.start, ctx.count)


def gamma3(ctx: CollisionContext, params: EquilibriumParams, g, h, rho) -> np.ndarray:
    """Trilinear term Gamma~_3(g, h, rho)."""
    ctx.check(g); ctx.check(h); ctx.check(rho)
    M, lnN = scaled_tables(ctx.grid, params)
    N = np.exp(lnN)
    return _gamma_full(ctx.grid.n_per_axis, ctx.wfac(params.temp ** 2), M, lnN,
                       N * np.asarray(g, float), N * np.asarray(h, float), N * np.asarray(rho, float), 3,
                       ctx.vecs, ctx.start, ctx.count)


def nonlinear_remainder(ctx: CollisionContext, params: EquilibriumParams, f, eps: float) -> np.ndarray:
    """Gamma~_2(f, f)/eps + Gamma~_3(f, f, f) in one canonical sweep.

    ``f`` has shape (Nv,) or (Nv, m) for m independent columns.
    """
    f = np.asarray(f, float)
    ctx.check(f, axis=0)
    M, lnN = scaled_tables(ctx.grid, params)
    G = np.ascontiguousarray(f.reshape(f.shape[0], -1) * np.exp(lnN)[:, None])
    out = _remainder_canon(ctx.grid.n_per_axis, ctx.wfac(params.temp ** 2), M, lnN, G,
                           1.0 / eps, ctx.vecs, ctx.start, ctx.count)
    return out.reshape(f.shape)


# ====================================================================
# norms and empirical bounds
# ====================================================================

def weighted_norm(grid: VelocityGrid, f, l: float = 0.5) -> float:
    """|f|_{L^2_l} with |f|^2_{L^2_l} = |f|^2 + | |v|^l f |^2."""
    f = np.asarray(f, float)
    r = np.sqrt(grid.speed_sq)
    return float(np.sqrt(grid.weight * np.sum(f * f * (1.0 + r ** (2 * l)))))


def l2_norm(grid: VelocityGrid, f) -> float:
    f = np.asarray(f, float)
    return float(np.sqrt(grid.weight * np.sum(f * f)))


def _random_smooth(rng, grid):
    v = grid.nodes
    basis = [np.ones(len(v)), v[:, 0], v[:, 1], v[:, 2], v[:, 0] * v[:, 1], v[:, 1] * v[:, 2],
             v[:, 0] * v[:, 2], v[:, 0] ** 2, v[:, 1] ** 2, v[:, 2] ** 2]
    c = rng.standard_normal(len(basis))
    return sum(ci * b for ci, b in zip(c, basis)) * np.exp(-grid.speed_sq / 4)


def empirical_bound_report(ctx: CollisionContext, params: EquilibriumParams, samples: int = 100,
                           seed: int = 0) -> dict:
    """Largest observed ratios of |<Gamma_2(g,h),f>| and |<Gamma_3(g,h,r),f>|
    to their model bounds, for random smooth inputs."""
    if samples < 50:
        raise ValidationError("empirical_bound_report needs samples >= 50")
    from .equilibrium import closed_form_constants
    pc = closed_form_constants(params)
    grid = ctx.grid
    rng = np.random.default_rng(seed)
    mu64 = np.exp(-grid.speed_sq / 128)
    r2s, r3s = [], []
    for _ in range(samples):
        g, h, f, rho = (_random_smooth(rng, grid) for _ in range(4))
        den2 = pc.C2_op * l2_norm(grid, g) * weighted_norm(grid, h) * weighted_norm(grid, f)
        den3 = pc.C3_op * l2_norm(grid, g) * weighted_norm(grid, h) * l2_norm(grid, mu64 * rho) \
            * weighted_norm(grid, f)
        if den2 == 0 or den3 == 0:
            continue
        r2s.append(abs(grid.inner(gamma2(ctx, params, g, h), f)) / den2)
        r3s.append(abs(grid.inner(gamma3(ctx, params, g, h, rho), f)) / den3)
    r2s, r3s = np.array(r2s), np.array(r3s)
    half = len(r2s) // 2
    out = {"samples": int(len(r2s)), "R2": float(r2s.max()), "R3": float(r3s.max()),
           "R2_half": float(r2s[:half].max()), "R3_half": float(r3s[:half].max())}
    out["R2_growth"] = out["R2"] / out["R2_half"] - 1
    out["R3_growth"] = out["R3"] / out["R3_half"] - 1
    out["finite"] = bool(np.isfinite(out["R2"]) and np.isfinite(out["R3"]))
    out["stable"] = bool(out["R2_growth"] < 0.2 and out["R3_growth"] < 0.2)
    return out
