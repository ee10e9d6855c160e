"""Kernel projection, macroscopic fields, energy/dissipation functionals and
the 13-moment diagnostics."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .equilibrium import EquilibriumParams, MomentTable, log_N_scaled, log_M_scaled, moments
from .errors import GridMismatchError, ValidationError
from .vgrid import VelocityGrid


# ------------------------------------------------------------ kernel basis

@dataclass
class KernelBasis:
    """Discrete kernel basis d_i = N{1, v1, v2, v3, |v|^2 - C~} and its
    orthonormalisation e_i under <f, g> = h^3 sum f g."""
    grid: VelocityGrid
    params: EquilibriumParams

    @cached_property
    def table(self) -> MomentTable:
        return moments(self.params, self.grid, check_resolution=False)

    @cached_property
    def N(self) -> np.ndarray:
        return np.exp(log_N_scaled(self.params.lam, self.grid.speed_sq))

    @cached_property
    def M(self) -> np.ndarray:
        return np.exp(log_M_scaled(self.params.lam, self.grid.speed_sq))

    @cached_property
    def d(self) -> np.ndarray:
        v, N = self.grid.nodes, self.N
        return np.column_stack([N, v[:, 0] * N, v[:, 1] * N, v[:, 2] * N,
                                (self.grid.speed_sq - self.table.C_tilde) * N])

    @cached_property
    def e(self) -> np.ndarray:
        # modified Gram-Schmidt in the discrete inner product
        w = self.grid.weight
        out = np.array(self.d, dtype=float)
        for k in range(5):
            for _ in range(2):
                for j in range(k):
                    out[:, k] -= w * (out[:, j] @ out[:, k]) * out[:, j]
            out[:, k] /= math.sqrt(w * out[:, k] @ out[:, k])
        return out

    def gram(self) -> np.ndarray:
        return self.grid.weight * self.e.T @ self.e

    def _check(self, f):
        if np.shape(f)[-1] != self.grid.n_nodes:
            raise GridMismatchError("distribution does not live on the basis grid")

    def project(self, f) -> np.ndarray:
        self._check(f)
        f = np.asarray(f, float)
        coef = self.grid.weight * f @ self.e
        return coef @ self.e.T

    def micro(self, f) -> np.ndarray:
        return np.asarray(f, float) - self.project(f)


def project_kernel(basis: KernelBasis, f) -> np.ndarray:
    return basis.project(f)


# ------------------------------------------------------------ macro fields

@dataclass
class MacroFields:
    """Coefficients of P f = (a + b.v + c|v|^2) N; arrays share the
    spatial shape (``b`` has a trailing axis of length 3)."""
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def to_hydro(self, table: MomentTable):
        """(rho, u, theta) with P f = (rho + u.v + theta(|v|^2/2 - K_lam)) N."""
        theta = 2 * self.c
        return self.a + table.K_lam * theta, self.b, theta

    @staticmethod
    def from_hydro(table: MomentTable, rho, u, theta) -> "MacroFields":
        theta = np.asarray(theta, float)
        return MacroFields(np.asarray(rho, float) - table.K_lam * theta, np.asarray(u, float), theta / 2)


def macro_extract(basis: KernelBasis, f) -> MacroFields:
    basis._check(f)
    f = np.asarray(f, float)
    t = basis.table
    w = basis.grid.weight
    N, r2, v = basis.N, basis.grid.speed_sq, basis.grid.nodes
    a = w * f @ (t.l1 * N - t.l2 * N * r2)
    b = w * f @ (t.l3 * N[:, None] * v)
    c = w * f @ (t.l4 * N * r2 - t.l2 * N)
    return MacroFields(a, b, c)


def macro_lift(basis: KernelBasis, fields: MacroFields) -> np.ndarray:
    v, N, r2 = basis.grid.nodes, basis.N, basis.grid.speed_sq
    a = np.asarray(fields.a)[..., None]
    c = np.asarray(fields.c)[..., None]
    return (a + np.asarray(fields.b) @ v.T + c * r2) * N


def hydro_lift(basis: KernelBasis, rho, u, theta) -> np.ndarray:
    return macro_lift(basis, MacroFields.from_hydro(basis.table, rho, u, theta))


def limit_moments(basis: KernelBasis, f):
    """Kinetic moments compared with the fluid limit:
    u = (3/m2)<f, vN>, theta = (1/C_A)<f, (|v|^2/2 - K_A)N>, plus the
    hydrodynamic rho and theta of P f."""
    t = basis.table
    w = basis.grid.weight
    N, r2, v = basis.N, basis.grid.speed_sq, basis.grid.nodes
    f = np.asarray(f, float)
    u = (3 / t.m2) * w * f @ (N[:, None] * v)
    theta_lim = w * f @ ((r2 / 2 - t.K_A) * N) / t.C_A
    rho, _, theta = macro_extract(basis, f).to_hydro(t)
    return {"u": u, "theta_limit": theta_lim, "rho": rho, "theta": theta}


# ------------------------------------------------------------ spatial calculus

def wavenumbers(shape, lengths):
    ks = []
    for n, L in zip(shape, lengths):
        ks.append(2 * np.pi * np.fft.fftfreq(n, d=L / n))
    return np.meshgrid(*ks, indexing="ij")


def spectral_derivative(field, axis: int, lengths, order: int = 1):
    """d^order/dx_axis^order on the periodic box; spatial axes lead."""
    field = np.asarray(field, float)
    d = len(lengths)
    shape = field.shape[:d]
    k = wavenumbers(shape, lengths)[axis]
    n = shape[axis]
    if order % 2 == 1 and n % 2 == 0:
        nyq = np.zeros(shape, bool)
        idx = [slice(None)] * d
        idx[axis] = n // 2
        nyq[tuple(idx)] = True
        k = np.where(nyq, 0.0, k)
    fh = np.fft.fftn(field, axes=tuple(range(d)))
    mult = (1j * k) ** order
    mult = mult.reshape(shape + (1,) * (field.ndim - d))
    return np.real(np.fft.ifftn(fh * mult, axes=tuple(range(d))))


def _multi_indices(d, N):
    import itertools
    out = []
    for tot in range(N + 1):
        for alpha in itertools.product(range(tot + 1), repeat=d):
            if sum(alpha) == tot:
                out.append(alpha)
    return out


def _sobolev_symbol(shape, lengths, N, min_order=0):
    k = wavenumbers(shape, lengths)
    sym = np.zeros(shape)
    for alpha in _multi_indices(len(shape), N):
        if sum(alpha) < min_order:
            continue
        term = np.ones(shape)
        for ax, a in enumerate(alpha):
            term = term * k[ax] ** (2 * a)
        sym += term
    return sym


def _check_order(shape, N):
    if N < 0 or any(N > n // 2 for n in shape):
        raise ValidationError(f"derivative order {N} exceeds the spectral resolution {shape}")


def _hn_sq(field, lengths, N, grid_weight, weight=None, min_order=0):
    d = len(lengths)
    shape = field.shape[:d]
    _check_order(shape, N)
    vol = float(np.prod(lengths))
    npts = int(np.prod(shape))
    fh = np.fft.fftn(field, axes=tuple(range(d)))
    sym = _sobolev_symbol(shape, lengths, N, min_order)
    amp = np.abs(fh) ** 2
    if weight is not None:
        amp = amp * weight
    vel = amp.reshape(shape + (-1,)).sum(-1) * grid_weight
    return float(vol / npts ** 2 * np.sum(sym * vel))


def energy_norm(field, N: int, grid: VelocityGrid, lengths) -> float:
    """||f||^2_{H^N_x L^2} on the periodic box (spatial axes first)."""
    return _hn_sq(np.asarray(field, float), lengths, N, grid.weight)


def calibrate_C0(basis: KernelBasis) -> dict:
    """Smallest C0 with C0 e^{-lam}(1-e^{-lam})^{-1/2}|grad A|^2 >= ||grad f1||^2_{L^2_{1/2}}.

    f1 = (a + b.v + c|v|^2)N, so the bound is the top eigenvalue of the
    weighted Gram matrix of {N, v N, |v|^2 N}.
    """
    g = basis.grid
    r = np.sqrt(g.speed_sq)
    wt = 1.0 + r
    v, N = g.nodes, basis.N
    Phi = np.column_stack([N, v[:, 0] * N, v[:, 1] * N, v[:, 2] * N, g.speed_sq * N])
    G = g.weight * (Phi * wt[:, None]).T @ Phi
    top = float(np.linalg.eigvalsh(G)[-1])
    lam = basis.params.lam
    scale = math.exp(-lam) * (-math.expm1(-lam)) ** -0.5
    return {"C0": top / scale, "gram_top": top, "scale": scale}


def dissipation(field, N: int, basis: KernelBasis, lengths, C0: float | None = None) -> float:
    """D_N = C0 e^{-lam}(1-e^{-lam})^{-1/2} |grad(a,b,c)|^2_{H^{N-1}} + ||f2||^2_{H^N L^2_{1/2}}."""
    field = np.asarray(field, float)
    d = len(lengths)
    if C0 is None:
        C0 = calibrate_C0(basis)["C0"]
    lam = basis.params.lam
    scale = math.exp(-lam) * (-math.expm1(-lam)) ** -0.5
    mf = macro_extract(basis, field)
    abc = np.concatenate([mf.a[..., None], mf.b, mf.c[..., None]], axis=-1)
    macro = _hn_sq(abc, lengths, N, 1.0, min_order=1) if N >= 1 else 0.0
    f2 = basis.micro(field)
    wt = 1.0 + np.sqrt(basis.grid.speed_sq)
    micro = _hn_sq(f2, lengths, N, basis.grid.weight, weight=wt)
    return C0 * scale * macro + micro


# ------------------------------------------------------------ 13 moments

@dataclass
class ThirteenMomentState:
    basis: KernelBasis

    @cached_property
    def E(self) -> np.ndarray:
        v, N, r2 = self.basis.grid.nodes, self.basis.N, self.basis.grid.speed_sq
        x, y, z = v.T
        return np.array([N, x * N, y * N, z * N, x * x * N, y * y * N, z * z * N,
                         x * y * N, y * z * N, z * x * N, r2 * x * N, r2 * y * N, r2 * z * N])

    @cached_property
    def gram(self) -> np.ndarray:
        return self.basis.grid.weight * self.E @ self.E.T

    @cached_property
    def gram_inverse(self) -> np.ndarray:
        return np.linalg.inv(self.gram)

    def det_formula(self, table: MomentTable | None = None) -> float:
        t = table or self.basis.table
        return 4 * t.m4 ** 5 * t.det0 * t.det2 ** 3 / 1660753125

    def gram_model(self, table: MomentTable | None = None) -> np.ndarray:
        """Block form of <E, E^T> for an isotropic weight."""
        t = table or self.basis.table
        G = np.zeros((13, 13))
        G[0, 0] = t.m0
        G[0, 4:7] = G[4:7, 0] = t.m2 / 3
        for i in range(3):
            G[1 + i, 1 + i] = t.m2 / 3
            G[1 + i, 10 + i] = G[10 + i, 1 + i] = t.m4 / 3
            G[10 + i, 10 + i] = t.m6 / 3
            G[7 + i, 7 + i] = t.m4 / 15
        A = np.full((3, 3), 1.0) + 2 * np.eye(3)
        G[4:7, 4:7] = t.m4 / 15 * A
        return G

    def inverse_formula(self, table: MomentTable | None = None) -> np.ndarray:
        """Closed-form inverse of the block Gram matrix.

        The couplings between 1 and v_i^2 rows, between distinct v_i^2
        rows, and between v and |v|^2 v rows all carry a minus sign.
        """
        t = table or self.basis.table
        d0, d2 = t.det0, t.det2
        Gi = np.zeros((13, 13))
        Gi[0, 0] = t.m4 / d0
        Gi[0, 4:7] = Gi[4:7, 0] = -t.m2 / d0
        a = (6 * t.m0 * t.m4 - 5 * t.m2 ** 2) / (t.m4 * d0)
        b = (5 * t.m2 ** 2 - 3 * t.m0 * t.m4) / (2 * t.m4 * d0)
        Gi[4:7, 4:7] = np.full((3, 3), b) + (a - b) * np.eye(3)
        for i in range(3):
            Gi[1 + i, 1 + i] = 3 * t.m6 / d2
            Gi[1 + i, 10 + i] = Gi[10 + i, 1 + i] = -3 * t.m4 / d2
            Gi[10 + i, 10 + i] = 3 * t.m2 / d2
            Gi[7 + i, 7 + i] = 15 / t.m4
        return Gi


def _x_vector(mf_t, mf_dot, lengths, eps, T):
    """X built from (a, b, c), their time derivatives and x-derivatives."""
    d = len(lengths)
    sq = math.sqrt(T)

    def dx(field, i):
        if i >= d:
            return np.zeros_like(field)
        return spectral_derivative(field, i, lengths)

    a, b, c = mf_t.a, mf_t.b, mf_t.c
    at, bt, ct = mf_dot.a, mf_dot.b, mf_dot.c
    X = [eps * at]
    for i in range(3):
        X.append(eps * bt[..., i] + sq * dx(a, i))
    for i in range(3):
        X.append(eps * ct + sq * dx(b[..., i], i))
    for i, j in ((0, 1), (1, 2), (2, 0)):
        X.append(sq * (dx(b[..., j], i) + dx(b[..., i], j)))
    for i in range(3):
        X.append(sq * dx(c, i))
    return np.stack(X, -1)


def macroscopic_residual(basis: KernelBasis, f0, f1, dt: float, eps: float, lengths,
                         Lmat=None, source0=None, source1=None) -> dict:
    """Residual of X = -eps d_t U + V + W + Xs and of the local
    conservation laws, at the midpoint of two snapshots ``f0``, ``f1``
    (spatial axes first, velocity last)."""
    f0 = np.asarray(f0, float)
    f1 = np.asarray(f1, float)
    if f0.shape != f1.shape:
        raise ValidationError("snapshots have different shapes")
    basis._check(f0)
    T = basis.params.temp
    t = basis.table
    g = basis.grid
    w = g.weight
    d = len(lengths)
    sq = math.sqrt(T)
    fm = 0.5 * (f0 + f1)
    fdot = (f1 - f0) / dt
    src = None
    if source0 is not None:
        src = 0.5 * (np.asarray(source0, float) + np.asarray(source1, float))

    tm = ThirteenMomentState(basis)
    Ginv = tm.gram_inverse
    E = tm.E
    f2 = basis.micro(fm)
    f2dot = basis.micro(fdot)

    def vgrad(h):
        out = np.zeros_like(h)
        for i in range(d):
            out += g.nodes[:, i] * spectral_derivative(h, i, lengths)
        return out

    X = _x_vector(macro_extract(basis, fm), macro_extract(basis, fdot), lengths, eps, T)
    rhs = -eps * f2dot - sq * vgrad(f2)
    if Lmat is not None:
        Lf2 = f2 @ np.asarray(Lmat).T
        rhs = rhs - Lf2 / eps
    if src is not None:
        rhs = rhs + eps * src
    Tcal = (w * rhs @ E.T) @ Ginv.T
    res = X - Tcal

    # local conservation laws
    N, r2, v = basis.N, g.speed_sq, g.nodes
    phi_a = t.l1 * N - t.l2 * N * r2
    phi_c = t.l4 * N * r2 - t.l2 * N
    mfm = macro_extract(basis, fm)
    mfd = macro_extract(basis, fdot)
    drive = -sq * vgrad(f2) + (eps * src if src is not None else 0.0)

    def dx(field, i):
        return spectral_derivative(field, i, lengths) if i < d else np.zeros_like(field)

    r_a = eps * mfd.a - w * drive @ phi_a
    r_b = np.stack([eps * mfd.b[..., i] + sq * dx(mfm.a, i) + sq * t.m4 / t.m2 * dx(mfm.c, i)
                    for i in range(3)], -1) - w * drive @ (t.l3 * N[:, None] * v)
    div_b = sum(dx(mfm.b[..., i], i) for i in range(3))
    r_c = eps * mfd.c + sq / 3 * div_b - w * drive @ phi_c
    return {"residual": res, "residual_norm": float(np.sqrt(np.mean(res ** 2))),
            "conservation": {"mass": float(np.max(np.abs(r_a))),
                             "momentum": float(np.max(np.abs(r_b))),
                             "energy": float(np.max(np.abs(r_c)))}}
