"""Acceptance checks shared by the test suite and ``bbelab selftest``.

Each check returns a ``CheckResult``; ``tier="full"`` uses the reference
resolutions, ``tier="smoke"`` shrinks grids and horizons for a quick run.
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .collision import CollisionContext, gamma2, linearized_matrix, q_collision, scaled_tables
from .equilibrium import (EquilibriumParams, grid_moments, moment_oracle, closed_form_constants)
from .kinetic_solver import (SolverConfig, bi_temperature_datum, decay_rate, knudsen_sweep,
                             relax_homogeneous, relaxation_report, shear_datum)
from .nsf_ref import SpectralBox, integrate, initial_state, limit_compare
from .spectraldiag import KernelBasis, ThirteenMomentState
from .transport import (coefficients, flux_functions, flux_lemmas, radial_form_check,
                        solve_flux_inverse)
from .vgrid import build_grid


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} criterion {self.number}: {self.name} ({self.seconds:.1f} s)"


def _timed(number, name):
    def deco(fn):
        def run(tier="full"):
            t0 = time.time()
            passed, details = fn(tier)
            return CheckResult(number, name, bool(passed), details, time.time() - t0)
        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run
    return deco


@lru_cache(maxsize=None)
def _context(n, v_max, temp):
    return CollisionContext(build_grid(n, v_max), temp ** 2)


@lru_cache(maxsize=None)
def _operator(n, v_max, lam, temp):
    return linearized_matrix(_context(n, v_max, temp), EquilibriumParams(lam, temp))


@lru_cache(maxsize=None)
def _transport(n, v_max, lam, temp):
    params = EquilibriumParams(lam, temp)
    Lop = _operator(n, v_max, lam, temp)
    basis = KernelBasis(Lop.grid, params)
    inv = solve_flux_inverse(Lop, flux_functions(basis))
    return basis, inv, coefficients(inv, basis.table)


# ------------------------------------------------------------------ 1

@_timed(1, "13-moment Gram determinant and closed-form inverse")
def check_gram(tier="full"):
    n = 25 if tier == "full" else 13
    grid = build_grid(n, 10.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        basis = KernelBasis(grid, EquilibriumParams(1.0, 1.0))
        tm = ThirteenMomentState(basis)
        det = np.linalg.det(tm.gram)
        det_err = abs(det / tm.det_formula() - 1)
        Gi = tm.gram_inverse
        inv_err = float(np.max(np.abs(tm.inverse_formula() - Gi)) / np.max(np.abs(Gi)))
    return det_err <= 1e-8 and inv_err <= 1e-8, {"det_rel_err": det_err, "inverse_rel_err": inv_err}


# ------------------------------------------------------------------ 2

@_timed(2, "grid moments against the polylog series")
def check_moments(tier="full"):
    n = 33 if tier == "full" else 17
    grid = build_grid(n, 10.0)
    errs = {}
    for lam in (0.5, 1.0, 2.0):
        m = grid_moments(lam, grid)
        o = moment_oracle(lam)
        errs[lam] = max(abs(m[j] / o[2 * j] - 1) for j in range(4))
    return max(errs.values()) <= 1e-10, {"max_rel_err": errs}


# ------------------------------------------------------------------ 3

@_timed(3, "equilibrium annihilation and conservation")
def check_annihilation(tier="full"):
    params = EquilibriumParams(1.0, 1.0)
    sup, scale = {}, {}
    sizes = (9, 17) if tier == "full" else (5, 9)
    for n in sizes:
        ctx = _context(n, 8.0, 1.0)
        M, _ = scaled_tables(ctx.grid, params)
        Q = q_collision(ctx, M)
        sup[n] = float(np.max(np.abs(Q)))
        # response to an O(1) relative perturbation sets the round-off floor
        delta = 1e-3
        bump = q_collision(ctx, M * (1 + delta * np.cos(ctx.grid.nodes[:, 0])))
        scale[n] = float(np.max(np.abs(bump))) / delta
    ratio = sup[sizes[0]] / sup[sizes[1]] if sup[sizes[1]] > 0 else float("inf")
    floor = all(sup[n] <= 1e-12 * scale[n] for n in sizes)
    ctx = _context(sizes[1], 8.0, 1.0)
    rng = np.random.default_rng(1)
    F = rng.random(ctx.grid.n_nodes) * np.exp(-ctx.grid.speed_sq / 4)
    Q = q_collision(ctx, F, correct=True)
    v = ctx.grid.nodes
    psi = np.column_stack([np.ones(len(v)), v, ctx.grid.speed_sq])
    cons = float(np.max(np.abs(psi.T @ Q) / (np.abs(psi).T @ np.abs(Q))))
    passed = (ratio >= 4 or floor) and cons <= 1e-13
    return passed, {"sup_QMM": sup, "ratio": ratio, "at_roundoff_floor": floor,
                    "perturbed_scale": scale, "conservation_rel": cons}


# ------------------------------------------------------------------ 4

@_timed(4, "linearized operator symmetry, kernel and spectral gap")
def check_spectrum(tier="full"):
    n = 13 if tier == "full" else 9
    out, ok = {}, True
    for lam, T in ((0.5, 1.0), (1.0, 1.0), (1.0, 2.0)):
        Lop = _operator(n, 8.0, lam, T)
        rep = Lop.spectral_report()
        pc = closed_form_constants(EquilibriumParams(lam, T))
        lo, hi = pc.coercivity_lower / 100, 100 * pc.coercivity_upper
        sym = Lop.symmetry_error()
        good = sym <= 1e-12 and rep["n_near_null"] == 5 and lo <= rep["spectral_gap"] <= hi
        ok &= good
        out[f"{lam},{T}"] = {"symmetry": sym, "n_near_null": rep["n_near_null"],
                             "gap": rep["spectral_gap"], "bracket": [lo, hi], "ok": good}
    return ok, out


# ------------------------------------------------------------------ 5

@_timed(5, "Gamma_2 identity on kernel elements")
def check_gamma2(tier="full"):
    params = EquilibriumParams(1.0, 1.0)
    ctx = _context(9, 8.0, 1.0)
    Lop = _operator(9, 8.0, 1.0, 1.0)
    M, lnN = scaled_tables(ctx.grid, params)
    N = np.exp(lnN)
    K = Lop.kernel_vectors()
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(10 if tier == "full" else 3):
        g = K @ rng.standard_normal(5)
        lhs = gamma2(ctx, params, g, g)
        rhs = 0.5 * Lop.matrix @ ((1 + 2 * M) * g * g / N)
        worst = max(worst, float(np.max(np.abs(lhs - rhs)) / np.max(np.abs(rhs))))
    return worst <= 1e-10, {"max_rel_err": worst}


# ------------------------------------------------------------------ 6

@_timed(6, "transport solve and radial form")
def check_transport(tier="full"):
    n = 17 if tier == "full" else 9
    basis, inv, coef = _transport(n, 8.0, 1.0, 1.0)
    rep = radial_form_check(inv)
    res = float(inv.relative_residuals.max())
    k_ratio = abs(coef.kappa2) / coef.kappa1
    checks = {"residuals": res <= 1e-8, "kappa2_ratio": k_ratio <= 1e-8,
              "alpha_spread": rep["alpha_spread"] <= 1e-4, "beta_spread": rep["beta_spread"] <= 1e-4,
              "rotation": rep["rotation_residual"] <= 1e-10, "trace": rep["trace_residual"] <= 1e-10}
    return all(checks.values()), {"checks": checks, "max_rel_residual": res, "kappa2_over_kappa1": k_ratio,
                                  "alpha_spread": rep["alpha_spread"], "beta_spread": rep["beta_spread"],
                                  "rotation_residual": rep["rotation_residual"],
                                  "trace_residual": rep["trace_residual"], "coefficients": coef.as_dict()}


# ------------------------------------------------------------------ 7

@_timed(7, "flux identities on single-mode macro fields")
def check_flux_lemmas(tier="full"):
    n = 17 if tier == "full" else 9
    basis, inv, coef = _transport(n, 8.0, 1.0, 1.0)
    rep = flux_lemmas(_context(n, 8.0, 1.0), inv, basis)
    keys = ("A_macro", "B_macro", "A_gamma", "B_gamma")
    return all(rep[k] <= 1e-6 for k in keys), rep


# ------------------------------------------------------------------ 8

@_timed(8, "homogeneous relaxation to the Bose-Einstein state")
def check_relaxation(tier="full"):
    n = 17 if tier == "full" else 9
    cfg = SolverConfig(epsilon=1.0, formulation="absolute", n_per_axis=n, v_max=8.0 if n == 17 else 6.0,
                       dt=0.01, t_end=0.4)
    grid = cfg.grid()
    traj = relax_homogeneous(cfg, bi_temperature_datum(grid))
    rep = relaxation_report(traj, grid)
    ok = rep["min_entropy_increment"] >= -1e-12 and rep["invariant_drift"] <= 1e-10 \
        and rep["l1_to_lattice_fit"] <= 1e-5
    return ok, rep


# ------------------------------------------------------------------ 9

def run_limit_study(eps_list=(0.4, 0.2, 0.1), n_x=64, k=1.0, t_end=80.0, dt=2.0, amp=1e-2,
                    n_per_axis=9, v_max=8.0, lam=1.0, temp=1.0):
    params = EquilibriumParams(lam, temp)
    base = SolverConfig(epsilon=eps_list[0], params=params, n_per_axis=n_per_axis, v_max=v_max,
                        spatial={"n_x": n_x, "length": 2 * np.pi / k}, dt=dt, t_end=t_end,
                        integrator="etd", snapshot_stride=1)
    basis, inv, coef = _transport(n_per_axis, v_max, lam, temp)
    x = np.arange(n_x) * base.spatial["length"] / n_x
    f0, datum = shear_datum(basis, x, k, amp, amp)
    sweep = knudsen_sweep(base, eps_list, datum=f0, k=k)
    report = limit_compare(sweep.series, coef, basis.table.K_lam, datum)
    rates = {e: decay_rate(s, k) for e, s in sweep.series.items()}
    report["decay_rates"] = rates
    report["mu_k2"] = coef.mu * k * k
    report["failures"] = sweep.failures
    micro = [float(np.sqrt(np.mean(sweep.series[e].micro_norm ** 2))) for e in sorted(sweep.series, reverse=True)]
    report["micro_L2t"] = micro
    report["micro_ratios"] = [b / a for a, b in zip(micro, micro[1:])]
    return report, sweep, coef


@_timed(9, "hydrodynamic limit on the shear datum")
def check_limit(tier="full"):
    if tier == "full":
        rep, _, coef = run_limit_study()
    else:
        rep, _, coef = run_limit_study(n_x=16, t_end=20.0, dt=2.0)
    eps_min = min(rep["eps"])
    rate_err = abs(rep["decay_rates"][eps_min] / rep["mu_k2"] - 1)
    rep["rate_rel_err"] = rate_err
    ok = rep["pass"] and rate_err <= 0.05 and not rep["failures"]
    return ok, rep


# ------------------------------------------------------------------ 10

@_timed(10, "fluid reference against exact heat and shear modes")
def check_nsf_modes(tier="full"):
    basis, _, coef = _transport(9, 8.0, 1.0, 1.0)
    K_lam = basis.table.K_lam
    n_x, k = 64, 1.0
    L = 2 * np.pi / k
    box = SpectralBox((n_x,), (L,))
    x = np.arange(n_x) * L / n_x
    t_end = 1 / (coef.mu * k * k)
    times = np.linspace(0, t_end, 11)[1:]
    amp = 1e-2
    zero = np.zeros(n_x)
    # pure heat mode
    st = initial_state(box, -amp * np.sin(k * x), np.zeros((n_x, 3)), amp * np.sin(k * x),
                       coef.mu, coef.kappa, coef.temp, K_lam)
    err_h = max(float(np.max(np.abs(s.theta - amp * np.exp(-coef.kappa * k * k * t) * np.sin(k * x)))) / amp
                for s, t in zip(integrate(st, times, t_end / 50, box), times))
    u0 = np.zeros((n_x, 3))
    u0[:, 1] = amp * np.sin(k * x)
    st = initial_state(box, zero, u0, zero, coef.mu, coef.kappa, coef.temp, K_lam)
    err_s = max(float(np.max(np.abs(s.u[:, 1] - amp * np.exp(-coef.mu * k * k * t) * np.sin(k * x)))) / amp
                for s, t in zip(integrate(st, times, t_end / 50, box), times))
    return max(err_h, err_s) <= 1e-10, {"heat_rel_err": err_h, "shear_rel_err": err_s, "t_end": t_end}


ALL_CHECKS = (check_gram, check_moments, check_annihilation, check_spectrum, check_gamma2,
              check_transport, check_flux_lemmas, check_relaxation, check_limit, check_nsf_modes)


def run_all(tier="full", only=None):
    results = []
    for chk in ALL_CHECKS:
        if only and chk.__name__ not in only:
            continue
        results.append(chk(tier))
    return results


# ------------------------------------------------------------------ identities

def identity_suite(n: int = 9, v_max: float = 8.0, lam: float = 1.0, temp: float = 1.0) -> list:
    """Algebraic identities that hold exactly on the lattice, with tolerances.

    Rows are (name, value, tolerance, passed).
    """
    params = EquilibriumParams(lam, temp)
    ctx = _context(n, v_max, temp)
    Lop = _operator(n, v_max, lam, temp)
    grid = ctx.grid
    basis = KernelBasis(grid, params)
    t = basis.table
    M, lnN = scaled_tables(grid, params)
    N = np.exp(lnN)
    w = grid.weight
    rows = []

    def add(name, val, tol):
        rows.append((name, float(val), tol, bool(val <= tol)))

    rng = np.random.default_rng(0)
    K = Lop.kernel_vectors()
    worst = 0.0
    for _ in range(5):
        g = K @ rng.standard_normal(5)
        lhs = gamma2(ctx, params, g, g)
        rhs = 0.5 * Lop.matrix @ ((1 + 2 * M) * g * g / N)
        worst = max(worst, float(np.max(np.abs(lhs - rhs)) / np.max(np.abs(rhs))))
    add("gamma2_kernel_identity", worst, 1e-10)

    tm = ThirteenMomentState(basis)
    G = tm.gram_model()
    add("det_formula_block_model", abs(np.linalg.det(G) / tm.det_formula() - 1), 1e-8)
    Gi = np.linalg.inv(G)
    add("closed_form_inverse_block_model", np.max(np.abs(tm.inverse_formula() - Gi)) / np.max(np.abs(Gi)), 1e-8)

    add("kernel_basis_orthonormal", np.max(np.abs(basis.gram() - np.eye(5))), 1e-10)
    f = rng.standard_normal(grid.n_nodes) * N
    Pf = basis.project(f)
    add("projection_idempotent", np.max(np.abs(basis.project(Pf) - Pf)) / np.max(np.abs(Pf)), 1e-10)

    r2 = grid.speed_sq
    C_A_q = w * np.sum((r2 / 2 - t.K_A) ** 2 * N ** 2)
    add("moment_identity_C_A", abs(C_A_q / t.C_A - 1), 1e-12)
    add("moment_identity_K_A", abs(w * np.sum((r2 / 2 - t.K_A) * r2 * N ** 2)) / (w * np.sum(r2 ** 2 * N ** 2)), 1e-12)

    fl = flux_functions(basis)
    perp = np.max(np.abs(w * fl.stacked() @ basis.e)) / np.max(np.linalg.norm(fl.stacked(), axis=1) * np.sqrt(w))
    add("flux_orthogonal_to_kernel", perp, 1e-10)
    Bf = fl.B_full()
    add("flux_B_traceless", np.max(np.abs(Bf[0, 0] + Bf[1, 1] + Bf[2, 2])) / np.max(np.abs(Bf)), 1e-12)

    Q = q_collision(_context(n, v_max, 1.0), M)
    add("equilibrium_annihilation", np.max(np.abs(Q)) / np.max(M), 1e-12)
    add("operator_symmetry", Lop.symmetry_error(), 1e-12)
    add("operator_kernel", np.max(np.abs(Lop.matrix @ K)) / (np.max(np.abs(Lop.matrix)) * np.max(np.abs(K))), 1e-12)
    return rows
