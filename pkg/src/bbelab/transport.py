"""Inverse fluxes L~^{-1}A, L~^{-1}B and the fluid transport coefficients."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .collision import CollisionContext, LinearOperatorMatrix, gamma2
from .equilibrium import MomentTable, moments
from .errors import SolverStagnationError, ValidationError
from .spectraldiag import KernelBasis, macro_lift, MacroFields, spectral_derivative

PAIRS = ((0, 0), (1, 1), (2, 2), (0, 1), (1, 2), (2, 0))


@dataclass
class FluxFunctions:
    """A_i = N(|v|^2/2 - K_A) v_i (rows 0..2) and B_ij = N(v_i v_j - |v|^2 delta_ij/3)
    for (i, j) in ``PAIRS`` (rows 0..5)."""
    A: np.ndarray
    B: np.ndarray
    table: MomentTable

    def stacked(self) -> np.ndarray:
        return np.vstack([self.A, self.B])

    def B_full(self, Bset=None) -> np.ndarray:
        """(3, 3, Nv) symmetric array built from the six stored pairs."""
        Bset = self.B if Bset is None else Bset
        out = np.zeros((3, 3, Bset.shape[1]))
        for k, (i, j) in enumerate(PAIRS):
            out[i, j] = out[j, i] = Bset[k]
        return out


def flux_functions(basis: KernelBasis) -> FluxFunctions:
    v, N, r2 = basis.grid.nodes, basis.N, basis.grid.speed_sq
    t = basis.table
    A = np.array([N * (r2 / 2 - t.K_A) * v[:, i] for i in range(3)])
    B = np.array([N * (v[:, i] * v[:, j] - (i == j) * r2 / 3) for i, j in PAIRS])
    return FluxFunctions(A, B, t)


# ------------------------------------------------------------ deflated CG

def _kernel_q(Lop: LinearOperatorMatrix) -> np.ndarray:
    q, _ = np.linalg.qr(Lop.kernel_vectors())
    return q


def deflated_cg(L: np.ndarray, rhs: np.ndarray, Q: np.ndarray, rtol: float = 1e-12,
                atol: float = 0.0, max_iter: int | None = None, plateau: int = 50):
    """Column-wise CG for L x = b on the orthogonal complement of span(Q).

    ``rhs`` has shape (n, m).  Returns (x, residual norms, iterations).
    """
    proj = lambda y: y - Q @ (Q.T @ y)
    b = proj(np.asarray(rhs, float))
    n, m = b.shape
    max_iter = max_iter or 4 * n
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rr = np.einsum("ij,ij->j", r, r)
    bnorm = np.sqrt(np.einsum("ij,ij->j", b, b))
    target = np.maximum(rtol * bnorm, atol)
    best = np.sqrt(rr)
    since = np.zeros(m, int)
    it = 0
    active = np.sqrt(rr) > target
    while np.any(active) and it < max_iter:
        it += 1
        Ap = proj(L @ p)
        pAp = np.einsum("ij,ij->j", p, Ap)
        alpha = np.where(active & (pAp > 0), rr / np.where(pAp > 0, pAp, 1.0), 0.0)
        x += alpha * p
        r -= alpha * Ap
        rr_new = np.einsum("ij,ij->j", r, r)
        beta = np.where(active, rr_new / np.where(rr > 0, rr, 1.0), 0.0)
        p = r + beta * p
        rr = rr_new
        res = np.sqrt(rr)
        improved = res < 0.5 * best
        best = np.where(improved, res, best)
        since = np.where(improved, 0, since + 1)
        active = res > target
        if np.any(active & (since >= plateau)):
            # recompute true residuals before declaring a plateau
            true = np.linalg.norm(b - proj(L @ x), axis=0)
            if np.any(true > target):
                raise SolverStagnationError("CG residual stalled above tolerance",
                                            spectral_gap=float("nan"), residual=float(true.max()))
            break
    x = proj(x)
    resid = np.linalg.norm(proj(L @ x) - b, axis=0)
    # slack for drift between the recursive and the true residual
    if np.any(resid > 10 * target):
        raise SolverStagnationError(f"CG stopped after {it} iterations above tolerance",
                                    spectral_gap=float("nan"), residual=float(resid.max()))
    return x, resid, it


@dataclass
class FluxInverse:
    A_hat: np.ndarray
    B_hat: np.ndarray
    flux: FluxFunctions
    residuals: np.ndarray
    iterations: int
    matrix: LinearOperatorMatrix = field(repr=False)

    @property
    def relative_residuals(self) -> np.ndarray:
        norms = np.linalg.norm(self.flux.stacked(), axis=1)
        return self.residuals / norms


def solve_flux_inverse(Lop: LinearOperatorMatrix, flux: FluxFunctions, rtol: float = 1e-12,
                       rhs=None) -> FluxInverse | np.ndarray:
    """Solve L~ X = F on ker^perp for the nine flux components.

    With ``rhs`` given (shape (n,) or (n, m)) the same deflated solver is
    applied to it and only the solution is returned.
    """
    Q = _kernel_q(Lop)
    if rhs is not None:
        r = np.asarray(rhs, float)
        x, _, _ = _solve_guarded(Lop, r.reshape(r.shape[0], -1), Q, rtol)
        return x.reshape(r.shape)
    F = flux.stacked().T
    x, res, it = _solve_guarded(Lop, F, Q, rtol)
    return FluxInverse(x[:, :3].T.copy(), x[:, 3:].T.copy(), flux, res, it, Lop)


def _solve_guarded(Lop, F, Q, rtol):
    try:
        return deflated_cg(Lop.matrix, F, Q, rtol=rtol)
    except SolverStagnationError as exc:
        gap = Lop.spectral_report()["spectral_gap"]
        raise SolverStagnationError(str(exc), spectral_gap=gap, residual=exc.residual) from exc


# ------------------------------------------------------------ coefficients

@dataclass
class TransportCoefficients:
    lam: float
    temp: float
    fingerprint: str
    nu: float
    kappa1: float
    kappa2: float
    mu: float
    kappa: float
    nu_trace: float
    isotropy_ratio: float
    offdiag_A: float
    residuals: list

    def as_dict(self) -> dict:
        return {"lambda": self.lam, "T": self.temp, "grid_fingerprint": self.fingerprint,
                "nu": self.nu, "kappa1": self.kappa1, "kappa2": self.kappa2, "mu": self.mu,
                "kappa": self.kappa, "nu_trace": self.nu_trace, "isotropy_ratio": self.isotropy_ratio,
                "offdiag_A": self.offdiag_A, "residuals": list(map(float, self.residuals))}


def coefficients(inv: FluxInverse, table: MomentTable | None = None) -> TransportCoefficients:
    """nu = <B^_12, B_12>, kappa1 = <A^_i, A_i>, kappa2 = <A^_i, v_i N>,
    mu = 3 T nu / m2, kappa = T kappa1 / C_A."""
    Lop = inv.matrix
    g = Lop.grid
    w = g.weight
    t = table or inv.flux.table
    N = Lop.N
    KA = w * inv.A_hat @ inv.flux.A.T
    kappa1 = float(np.trace(KA) / 3)
    kappa2 = float(np.mean([w * inv.A_hat[i] @ (g.nodes[:, i] * N) for i in range(3)]))
    Bh = inv.flux.B_full(inv.B_hat)
    Bf = inv.flux.B_full()
    nu = float(np.mean([w * Bh[i, j] @ Bf[i, j] for i, j in ((0, 1), (1, 2), (2, 0))]))
    nu_trace = float(w * np.einsum("ijn,ijn->", Bh, Bf) / 10)
    diag = float(np.mean([w * Bh[i, i] @ Bf[i, i] for i in range(3)]))
    T = Lop.params.temp
    off = float(np.max(np.abs(KA - np.diag(np.diag(KA)))))
    return TransportCoefficients(Lop.params.lam, T, g.fingerprint(), nu, kappa1, kappa2,
                                 3 * T * nu / t.m2, T * kappa1 / t.C_A, nu_trace,
                                 diag / (4 / 3 * nu), off, list(inv.residuals))


# ------------------------------------------------------------ radial form

def _shell_ids(grid):
    lat = 2 * grid.lattice - (grid.n_per_axis - 1)
    nsq = np.einsum("ij,ij->i", lat, lat)
    return nsq


def radial_form_check(inv: FluxInverse, n_random: int = 5, seed: int = 0,
                      threshold: float = 1e-8, n_bins: int = 64) -> dict:
    Lop = inv.matrix
    g = Lop.grid
    A, B = inv.flux.A, inv.flux.B
    shell = _shell_ids(g)

    def spread(F, Fh):
        thr = threshold * np.abs(F).max()
        worst = 0.0
        vals, wts, rad = [], [], []
        for k in range(F.shape[0]):
            m = np.abs(F[k]) > thr
            vals.append(Fh[k][m] / F[k][m])
            wts.append(F[k][m] ** 2)
            rad.append(shell[m])
        vals, wts, rad = map(np.concatenate, (vals, wts, rad))
        order = np.argsort(rad, kind="stable")
        vals, wts, rad = vals[order], wts[order], rad[order]
        cuts = np.flatnonzero(np.diff(rad)) + 1
        per_shell = []
        for seg_v in np.split(vals, cuts):
            s = float((seg_v.max() - seg_v.min()) / max(np.abs(seg_v).max(), 1e-300))
            per_shell.append(s)
            worst = max(worst, s)
        return worst, per_shell, vals, wts, np.sqrt(rad) * g.h / 2

    a_sp, a_shells, av, aw, ar = spread(A, inv.A_hat)
    b_sp, b_shells, bv, bw, br = spread(B, inv.B_hat)

    # binned profiles, weighted by F^2
    rmax = float(max(ar.max(), br.max()))
    edges = np.linspace(0, rmax * (1 + 1e-12), n_bins + 1)
    prof = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        row = [0.5 * (lo + hi)]
        for vals, wts, rad in ((av, aw, ar), (bv, bw, br)):
            m = (rad >= lo) & (rad < hi)
            if np.any(m) and wts[m].sum() > 0:
                mean = float(np.sum(wts[m] * vals[m]) / wts[m].sum())
                row += [mean, float(np.ptp(vals[m]) / max(abs(mean), 1e-300))]
            else:
                row += [float("nan"), float("nan")]
        prof.append(row)

    # rotation commutation with 90 degree axis rotations
    rng = np.random.default_rng(seed)
    rots = [((0, 2, 1), (1, 1, -1)), ((2, 1, 0), (-1, 1, 1)), ((1, 0, 2), (1, -1, 1))]
    rot_res = 0.0
    for perm, signs in rots:
        idx = g.symmetry_permutation(perm, signs)
        for _ in range(n_random):
            f = rng.standard_normal(g.n_nodes)
            lhs = Lop.matrix @ f[idx]
            rhs = (Lop.matrix @ f)[idx]
            rot_res = max(rot_res, float(np.linalg.norm(lhs - rhs) / np.linalg.norm(rhs)))

    Bh = inv.flux.B_full(inv.B_hat)
    trace = Bh[0, 0] + Bh[1, 1] + Bh[2, 2]
    mag = np.sqrt(np.einsum("ijn,ijn->n", Bh, Bh))
    m = mag > threshold * mag.max()
    trace_res = float(np.max(np.abs(trace[m]) / mag[m]))
    sym_res = float(np.max(np.abs(Bh - Bh.transpose(1, 0, 2))))
    return {"alpha_spread": a_sp, "beta_spread": b_sp, "alpha_shells": a_shells,
            "beta_shells": b_shells, "profile": prof, "rotation_residual": rot_res,
            "trace_residual": trace_res, "symmetry_residual": sym_res}


def write_radial_csv(path, report: dict):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["radius", "alpha", "alpha_spread", "beta", "beta_spread"])
        for row in report["profile"]:
            wr.writerow([f"{x:.17g}" for x in row])


# ------------------------------------------------------------ flux lemmas

def discrete_flux_constants(basis: KernelBasis) -> dict:
    """Quadrature versions of C_A, C_* and the rank-4 moments of
    mu~ = M(1+M)(1+2M) that enter the quadratic flux identities."""
    g = basis.grid
    w = g.weight
    t = basis.table
    r2 = g.speed_sq
    mt = basis.N ** 2 * (1 + 2 * basis.M)
    v = g.nodes
    s = r2 / 2 - t.K_A
    return {"C_A": float(w * np.sum(mt * s * s * r2) / 3),
            "C_star": float(w * np.sum(mt * s * r2) / 3),
            "a4": float(w * np.sum(mt * v[:, 0] ** 4)),
            "b4": float(w * np.sum(mt * v[:, 0] ** 2 * v[:, 1] ** 2))}


def _tensor4(a, b):
    d = np.eye(3)
    T = b * (np.einsum("ij,kl->ijkl", d, d) + np.einsum("ik,jl->ijkl", d, d)
             + np.einsum("il,jk->ijkl", d, d))
    for i in range(3):
        T[i, i, i, i] += a - 3 * b
    return T


def flux_lemmas(ctx: CollisionContext, inv: FluxInverse, basis: KernelBasis,
                k: float = 1.0, n_x: int = 16, seed: int = 0) -> dict:
    """Check the four flux identities on single-mode macro fields.

    Linear identities use g = (rho + u.v + theta(|v|^2/2 - K_lam))N with
    fields ~ sin(k x1) on a periodic x1-grid; the shear check uses the
    divergence-free mode u = (0, u2 sin kx, 0).  Quadratic identities use
    random constant (rho, u, theta).
    """
    t = basis.table
    g = basis.grid
    w = g.weight
    coef = coefficients(inv, t)
    L = 2 * np.pi / k
    x = np.arange(n_x) * L / n_x
    rng = np.random.default_rng(seed)
    out = {}

    def vgrad(field):
        return g.nodes[:, 0] * spectral_derivative(field, 0, (L,))

    # A-with-macro
    rho0, th0 = rng.standard_normal(2)
    rho = rho0 * np.sin(k * x)
    th = th0 * np.cos(k * x)
    u = np.zeros((n_x, 3))
    f = macro_lift(basis, MacroFields.from_hydro(t, rho, u, th))
    lhs = w * vgrad(f) @ inv.A_hat.T
    rhs = np.zeros((n_x, 3))
    rhs[:, 0] = coef.kappa1 * spectral_derivative(th, 0, (L,)) \
        + coef.kappa2 * spectral_derivative(rho + th, 0, (L,))
    out["A_macro"] = float(np.max(np.abs(lhs - rhs)) / np.max(np.abs(rhs)))

    # B-with-macro (shear mode)
    u2 = rng.standard_normal()
    u = np.zeros((n_x, 3))
    u[:, 1] = u2 * np.sin(k * x)
    f = macro_lift(basis, MacroFields.from_hydro(t, np.zeros(n_x), u, np.zeros(n_x)))
    lhs = w * vgrad(f) @ inv.B_hat.T
    du = np.stack([spectral_derivative(u[:, i], 0, (L,)) for i in range(3)], -1)
    grad = np.zeros((n_x, 3, 3))
    grad[:, 0, :] = du
    Tu = grad + grad.transpose(0, 2, 1) - 2 / 3 * np.einsum("xii->x", grad)[:, None, None] * np.eye(3)
    rhs = coef.nu * np.stack([Tu[:, i, j] for i, j in PAIRS], -1)
    out["B_macro"] = float(np.max(np.abs(lhs - rhs)) / np.max(np.abs(rhs)))

    # compressive mode diagnostic (cubic anisotropy shows up here)
    u = np.zeros((n_x, 3))
    u[:, 0] = u2 * np.sin(k * x)
    f = macro_lift(basis, MacroFields.from_hydro(t, np.zeros(n_x), u, np.zeros(n_x)))
    lhs = w * vgrad(f) @ inv.B_hat.T
    grad = np.zeros((n_x, 3, 3))
    grad[:, 0, 0] = spectral_derivative(u[:, 0], 0, (L,))
    Tu = grad + grad.transpose(0, 2, 1) - 2 / 3 * np.einsum("xii->x", grad)[:, None, None] * np.eye(3)
    rhs = coef.nu * np.stack([Tu[:, i, j] for i, j in PAIRS], -1)
    out["B_macro_compressive"] = float(np.max(np.abs(lhs - rhs)) / np.max(np.abs(rhs)))

    # quadratic identities
    dc = discrete_flux_constants(basis)
    T4 = _tensor4(dc["a4"], dc["b4"])
    ea, eb = 0.0, 0.0
    for _ in range(3):
        rho, th = rng.standard_normal(2)
        u = rng.standard_normal(3)
        gk = macro_lift(basis, MacroFields.from_hydro(t, np.array(rho), u, np.array(th)))
        G2 = gamma2(ctx, basis.params, gk, gk)
        lhsA = w * inv.A_hat @ G2
        rhsA = dc["C_A"] * th * u + dc["C_star"] * (rho + th) * u
        ea = max(ea, float(np.max(np.abs(lhsA - rhsA)) / np.max(np.abs(rhsA))))
        lhsB = w * inv.B_hat @ G2
        full = 0.5 * np.einsum("ijkl,k,l->ij", T4, u, u)
        full -= np.eye(3) * np.trace(full) / 3
        rhsB = np.array([full[i, j] for i, j in PAIRS])
        eb = max(eb, float(np.max(np.abs(lhsB - rhsB)) / np.max(np.abs(rhsB))))
    out["A_gamma"] = ea
    out["B_gamma"] = eb
    # gap between the quadrature constants and the closed forms
    out["C_star_hydro"] = t.C_star_hydro
    out["C_star_flux"] = t.C_star_flux
    out["C_star_quadrature"] = dc["C_star"]
    out["B_gamma_closed_form_factor"] = t.m2 / 3
    out["B_gamma_quadrature_factor"] = dc["b4"]
    return out
