"""Time integration of the scaled BBE equation: homogeneous relaxation and
the 1D-x periodic perturbation problem, plus the Knudsen sweep driver."""
from __future__ import annotations

import csv
import json
import logging
import math
import os
import warnings
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy import linalg

from .collision import (CollisionContext, LinearOperatorMatrix, absolute_tables, linearized_matrix,
                        nonlinear_remainder, q_collision, scaled_tables)
from .equilibrium import (EquilibriumParams, fit_equilibrium, fit_equilibrium_discrete)
from .errors import ConfigError, NumericalError, ValidationError, BbeError
from .spectraldiag import (KernelBasis, calibrate_C0, dissipation, energy_norm, hydro_lift,
                           limit_moments, macro_extract)
from .vgrid import VelocityGrid, build_grid

log = logging.getLogger(__name__)

STORE_VERSION = 1
FORMULATIONS = ("absolute", "perturbation")
INTEGRATORS = ("rk4", "imex", "etd")


@dataclass
class SolverConfig:
    epsilon: float = 1.0
    formulation: str = "perturbation"
    params: EquilibriumParams = field(default_factory=lambda: EquilibriumParams(1.0, 1.0))
    n_per_axis: int = 9
    v_max: float = 8.0
    spatial: dict | None = None          # None or {"n_x": int, "length": float}
    dt: float = 0.01
    t_end: float = 0.1
    integrator: str = "imex"
    conservative_correction: bool = True
    snapshot_stride: int = 1
    stability_margin: float = 0.5

    def validate(self):
        if not (0 < self.epsilon <= 1):
            raise ConfigError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if self.formulation not in FORMULATIONS:
            raise ConfigError(f"formulation must be one of {FORMULATIONS}, got {self.formulation!r}")
        if self.integrator not in INTEGRATORS:
            raise ConfigError(f"integrator must be one of {INTEGRATORS}, got {self.integrator!r}")
        if not (self.dt > 0) or not (self.t_end > 0):
            raise ConfigError("dt and t_end must be positive")
        if int(self.snapshot_stride) < 1:
            raise ConfigError("snapshot_stride must be >= 1")
        if self.spatial is not None:
            if self.formulation == "absolute":
                raise ConfigError("the absolute formulation is only available without spatial dependence")
            n_x = self.spatial.get("n_x")
            length = self.spatial.get("length")
            if not isinstance(n_x, int) or n_x < 4 or n_x % 2:
                raise ConfigError(f"spatial.n_x must be an even integer >= 4, got {n_x}")
            if not (length and length > 0):
                raise ConfigError(f"spatial.length must be positive, got {length}")
        return self

    def grid(self) -> VelocityGrid:
        return build_grid(self.n_per_axis, self.v_max)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["params"] = {"lambda": self.params.lam, "temp": self.params.temp}
        return d


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    fingerprint: str = ""

    def record(self, t, f, diag: dict):
        if self.times and not t > self.times[-1]:
            raise ValidationError("trajectory time stamps must increase")
        self.times.append(float(t))
        self.snapshots.append(np.array(f, copy=True))
        for k, v in diag.items():
            self.diagnostics.setdefault(k, []).append(v)

    def save(self, directory):
        os.makedirs(directory, exist_ok=True)
        header = {"version": STORE_VERSION, "config": self.config, "fingerprint": self.fingerprint,
                  "times": self.times, "shape": list(np.shape(self.snapshots[0])) if self.snapshots else []}
        with open(os.path.join(directory, "header.json"), "w") as fh:
            json.dump(header, fh, indent=1, default=float)
        np.save(os.path.join(directory, "snapshots.npy"), np.array(self.snapshots))
        scal = [k for k, v in self.diagnostics.items() if np.ndim(v[0]) == 0]
        with open(os.path.join(directory, "diagnostics.csv"), "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t"] + scal)
            for i, t in enumerate(self.times):
                wr.writerow([f"{t:.17g}"] + [f"{float(self.diagnostics[k][i]):.17g}" for k in scal])

    @staticmethod
    def load(directory) -> "Trajectory":
        with open(os.path.join(directory, "header.json")) as fh:
            header = json.load(fh)
        if header.get("version") != STORE_VERSION:
            raise ValidationError(f"unsupported trajectory store version {header.get('version')}")
        snaps = np.load(os.path.join(directory, "snapshots.npy"))
        tr = Trajectory(list(header["times"]), list(snaps), {}, header["config"], header["fingerprint"])
        with open(os.path.join(directory, "diagnostics.csv")) as fh:
            rows = list(csv.DictReader(fh))
        for k in (rows[0].keys() if rows else []):
            if k != "t":
                tr.diagnostics[k] = [float(r[k]) for r in rows]
        return tr


def _finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"non-finite values in {what}", {"what": what})


# ====================================================================
# homogeneous, absolute formulation
# ====================================================================

def invariants(grid: VelocityGrid, F) -> np.ndarray:
    v = grid.nodes
    w = grid.weight
    return np.array([w * F.sum(), *(w * F @ v), w * F @ (grid.speed_sq / 2)])


def quantum_entropy(grid: VelocityGrid, F) -> float:
    F = np.asarray(F, float)
    return float(grid.weight * np.sum((1 + F) * np.log1p(F) - F * np.log(np.where(F > 0, F, 1.0))))


def bi_temperature_datum(grid: VelocityGrid, lam: float = 1.0, t_par: float = 1.3, t_perp: float = 0.85):
    """Anisotropic Bose-Einstein profile with different temperatures along v1
    and across it."""
    v = grid.nodes
    y = v[:, 0] ** 2 / (2 * t_par) + (v[:, 1] ** 2 + v[:, 2] ** 2) / (2 * t_perp) + lam
    return 1.0 / np.expm1(y)


def relax_homogeneous(config: SolverConfig, F0, ctx: CollisionContext | None = None,
                      use_cache: bool = True) -> Trajectory:
    """Integrate dF/dt = Q(F)/eps^2 in the absolute formulation.

    Each step is linearly implicit around the equilibrium fitted to the
    (conserved) invariants: F <- F + N (I + dt/eps^2 L)^{-1} N^{-1} dt/eps^2 Q(F).
    Both N^{-1} Q and the symmetric solve stay orthogonal to the kernel,
    so mass, momentum and energy are preserved to round-off.
    """
    config.validate()
    if config.formulation != "absolute" or config.spatial is not None:
        raise ConfigError("relax_homogeneous needs the absolute formulation without spatial dependence")
    grid = config.grid()
    ctx = ctx or CollisionContext(grid)
    F = np.array(F0, dtype=float)
    ctx.check(F)
    inv0 = invariants(grid, F)
    fit = fit_equilibrium(inv0[0], inv0[1:4], inv0[4])
    Lop = linearized_matrix(ctx, fit.params, absolute=True, drift=fit.drift, use_cache=use_cache)
    N = Lop.N
    eps2 = config.epsilon ** 2
    h = config.dt / eps2
    chol = linalg.cho_factor(np.eye(grid.n_nodes) + h * Lop.matrix)
    traj = Trajectory(config=config.as_dict(), fingerprint=grid.fingerprint())
    Mmax = float(np.max(Lop.M))
    nsteps = int(round(config.t_end / config.dt))

    def diag(F):
        I = invariants(grid, F)
        return {"mass": I[0], "momentum_1": I[1], "momentum_2": I[2], "momentum_3": I[3],
                "energy": I[4], "entropy": quantum_entropy(grid, F), "positivity": float(F.min())}

    traj.record(0.0, F, diag(F))
    for step in range(1, nsteps + 1):
        Q = q_collision(ctx, F, correct=config.conservative_correction, negative_tol=1e-8)
        dF = N * linalg.cho_solve(chol, h * Q / N)
        F = F + dF
        _finite(F, "distribution")
        if F.min() < -1e-8 * Mmax:
            raise NumericalError("positivity lost in absolute mode", {"step": step, "min": float(F.min())})
        if F.min() < 0:
            F = _clip_tails(grid, F, inv0, Lop.M)
        if step % config.snapshot_stride == 0 or step == nsteps:
            traj.record(step * config.dt, F, diag(F))
    traj.fit = fit
    return traj


def _clip_tails(grid, F, target, M):
    """Zero round-off negatives in the far tails, then restore the
    invariants with a correction proportional to M(1+M){1, v, |v|^2}."""
    F = np.maximum(F, 0.0)
    v = grid.nodes
    psi = np.column_stack([np.ones(grid.n_nodes), v, grid.speed_sq / 2])
    shape = psi * (M * (1 + M))[:, None]
    G = grid.weight * psi.T @ shape
    return F + shape @ np.linalg.solve(G, target - invariants(grid, F))


def relaxation_report(traj: Trajectory, grid: VelocityGrid) -> dict:
    """Entropy monotonicity, invariant drift and distance to the lattice
    equilibrium with the same invariants."""
    S = np.array(traj.diagnostics["entropy"])
    dS = np.diff(S)
    inv = np.array([[traj.diagnostics[k][i] for k in ("mass", "momentum_1", "momentum_2", "momentum_3", "energy")]
                    for i in range(len(traj.times))])
    scale = np.array([inv[0, 0], inv[0, 0], inv[0, 0], inv[0, 0], inv[0, 4]])
    drift = float(np.max(np.abs(inv - inv[0]) / scale))
    dfit = fit_equilibrium_discrete(grid, inv[0], start=getattr(traj, "fit", None))
    F_end = traj.snapshots[-1]
    l1 = float(grid.weight * np.sum(np.abs(F_end - dfit.values)) / inv[0, 0])
    cfit = traj.fit if hasattr(traj, "fit") else fit_equilibrium(inv[0, 0], inv[0, 1:4], inv[0, 4])
    from .equilibrium import equilibrium_density
    Mc = equilibrium_density(cfit.params, grid.nodes - cfit.drift)
    l1c = float(grid.weight * np.sum(np.abs(F_end - Mc)) / inv[0, 0])
    return {"min_entropy_increment": float(dS.min()) if dS.size else 0.0,
            "invariant_drift": drift, "l1_to_lattice_fit": l1, "l1_to_continuum_fit": l1c,
            "lattice_fit": {"lambda": dfit.lam, "temp": dfit.temp, "drift": dfit.drift.tolist()},
            "continuum_fit": {"lambda": cfit.params.lam, "temp": cfit.params.temp}}


# ====================================================================
# perturbation formulation
# ====================================================================

class PerturbationSystem:
    """df/dt + (T^{1/2}/eps) v1 d_x f + L~ f/eps^2 = Gamma~_2(f,f)/eps + Gamma~_3(f,f,f)
    on a periodic x1-grid (or homogeneous), in the scaled variables."""

    def __init__(self, config: SolverConfig, ctx: CollisionContext | None = None,
                 Lop: LinearOperatorMatrix | None = None, use_cache: bool = True):
        config.validate()
        self.config = config
        self.grid = config.grid()
        self.params = config.params
        self.ctx = ctx or CollisionContext(self.grid, config.params.temp ** 2)
        self.Lop = Lop or linearized_matrix(self.ctx, self.params, use_cache=use_cache)
        self.L = self.Lop.matrix
        self.eps = config.epsilon
        self.sqT = math.sqrt(self.params.temp)
        self.v1 = self.grid.nodes[:, 0]
        sp = config.spatial
        if sp is None:
            self.n_x, self.length = 1, 1.0
            self.xi = np.zeros(1)
        else:
            self.n_x, self.length = int(sp["n_x"]), float(sp["length"])
            self.xi = 2 * np.pi * np.fft.rfftfreq(self.n_x, d=self.length / self.n_x)
            self.xi[-1] = 0.0 if self.n_x % 2 == 0 else self.xi[-1]   # Nyquist derivative is zero
        self._etd = {}
        self._chol = None
        self._radius = None

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.n_x) * self.length / self.n_x

    # ---- pieces of the right-hand side
    def transport(self, f):
        if self.config.spatial is None:
            return np.zeros_like(f)
        fh = np.fft.rfft(f, axis=0)
        d = np.fft.irfft(1j * self.xi[:, None] * fh, n=self.n_x, axis=0)
        return -(self.sqT / self.eps) * self.v1 * d

    def remainder(self, f):
        return nonlinear_remainder(self.ctx, self.params, np.ascontiguousarray(f.T), self.eps).T

    def rhs(self, f):
        return self.transport(f) - f @ self.L.T / self.eps ** 2 + self.remainder(f)

    def spectral_radius(self):
        if self._radius is None:
            self._radius = self.Lop.spectral_report()["spectral_radius"]
        return self._radius

    # ---- integrators
    def step_rk4(self, f, dt):
        k1 = self.rhs(f)
        k2 = self.rhs(f + 0.5 * dt * k1)
        k3 = self.rhs(f + 0.5 * dt * k2)
        k4 = self.rhs(f + dt * k3)
        return f + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

    def step_imex(self, f, dt):
        if self._chol is None or self._chol[0] != dt:
            self._chol = (dt, linalg.cho_factor(np.eye(self.grid.n_nodes) + dt / self.eps ** 2 * self.L))
        b = f + dt * (self.transport(f) + self.remainder(f))
        return linalg.cho_solve(self._chol[1], b.T).T

    def _etd_pair(self, m, dt):
        key = (m, dt)
        if key not in self._etd:
            n = self.grid.n_nodes
            if self.xi[m] == 0.0:
                lam, V = np.linalg.eigh(self.L / self.eps ** 2)
                lam = np.maximum(lam, 0.0)
                e = np.exp(-dt * lam)
                z = dt * lam
                phi = np.where(z > 1e-8, -np.expm1(-z) / np.where(lam > 0, lam, 1.0), dt * (1 - z / 2))
                E = (V * e) @ V.T
                P = (V * phi) @ V.T
            else:
                A = (1j * self.xi[m] * self.sqT / self.eps) * np.diag(self.v1) + self.L / self.eps ** 2
                E = linalg.expm(-dt * A)
                P = np.linalg.solve(A, np.eye(n) - E)
            self._etd[key] = (E, P)
        return self._etd[key]

    def step_etd(self, f, dt, tol=1e-14):
        """Exponential Euler: exact for the linear part, first order in the
        nonlinear remainder.  Fourier modes whose amplitude stays below
        ``tol`` times the largest mode are dropped."""
        fh = np.fft.rfft(f, axis=0)
        Rh = np.fft.rfft(self.remainder(f), axis=0)
        amp = np.maximum(np.abs(fh).max(1), np.abs(Rh).max(1))
        top = amp.max()
        out = np.zeros_like(fh)
        for m in range(fh.shape[0]):
            if top == 0 or amp[m] <= tol * top:
                continue
            E, P = self._etd_pair(m, dt)
            out[m] = E @ fh[m] + P @ Rh[m]
        return np.fft.irfft(out, n=self.n_x, axis=0)

    def step(self, f, dt):
        integ = self.config.integrator
        if integ == "rk4":
            lim = self.config.stability_margin * self.eps ** 2 / self.spectral_radius()
            if dt > lim:
                raise ConfigError(f"rk4 step dt={dt} exceeds the stability limit {lim:.3e}")
            return self.step_rk4(f, dt)
        if integ == "imex":
            return self.step_imex(f, dt)
        return self.step_etd(f, dt)

    # ---- driver
    def run(self, f0, diagnostics=True) -> Trajectory:
        cfg = self.config
        f = np.array(f0, dtype=float).reshape(self.n_x, self.grid.n_nodes)
        _finite(f, "initial datum")
        basis = KernelBasis(self.grid, self.params)
        M, lnN = scaled_tables(self.grid, self.params)
        N = np.exp(lnN)
        Mmax = float(M.max())
        C0 = calibrate_C0(basis)["C0"] if diagnostics and cfg.spatial is not None else None
        traj = Trajectory(config=cfg.as_dict(), fingerprint=self.grid.fingerprint())
        lengths = (self.length,)
        e0 = None

        def diag(f):
            d = {}
            w = self.grid.weight
            d["mass"] = float(w * np.mean(f @ N))
            d["energy_moment"] = float(w * np.mean(f @ (self.grid.speed_sq * N)))
            d["positivity"] = float(np.min(M + self.eps * N * f))
            d["micro_norm"] = float(np.sqrt(w * np.mean(np.sum(basis.micro(f) ** 2, -1)) * self.length))
            if diagnostics and cfg.spatial is not None:
                d["energy_H2"] = energy_norm(f, 2, self.grid, lengths)
                d["dissipation_H2"] = dissipation(f, 2, basis, lengths, C0)
            return d

        traj.record(0.0, f, diag(f))
        if "energy_H2" in traj.diagnostics:
            e0 = traj.diagnostics["energy_H2"][0]
        nsteps = int(round(cfg.t_end / cfg.dt))
        for step in range(1, nsteps + 1):
            f = self.step(f, cfg.dt)
            _finite(f, "distribution")
            if step % cfg.snapshot_stride == 0 or step == nsteps:
                d = diag(f)
                if e0 and d.get("energy_H2", 0) > 6 * e0:
                    warnings.warn(f"energy bound exceeded at t={step * cfg.dt:.3g}: "
                                  f"{d['energy_H2']:.3e} > 6 x {e0:.3e}", RuntimeWarning)
                traj.record(step * cfg.dt, f, d)
        return traj


def step(state, config: SolverConfig, system: PerturbationSystem | None = None, ctx=None):
    """Advance one step; ``state`` is F (absolute) or f (perturbation)."""
    config.validate()
    state = np.asarray(state, float)
    _finite(state, "state")
    if config.formulation == "absolute":
        grid = config.grid()
        ctx = ctx or CollisionContext(grid)
        Q = q_collision(ctx, state, correct=config.conservative_correction)
        # explicit rk2 on Q for a single step
        mid = state + 0.5 * config.dt / config.epsilon ** 2 * Q
        return state + config.dt / config.epsilon ** 2 * q_collision(ctx, mid, correct=config.conservative_correction)
    system = system or PerturbationSystem(config, ctx)
    shaped = state.reshape(system.n_x, -1)
    return system.step(shaped, config.dt).reshape(state.shape)


# ====================================================================
# scaling equivalence
# ====================================================================

def scaling_equivalence_test(params: EquilibriumParams, n_per_axis: int = 9, v_max: float = 6.0,
                             t_end: float = 0.1, n_x: int = 8, length: float = 2 * np.pi,
                             seed: int = 0) -> dict:
    """Integrate the linearized equation in physical variables at temperature
    T and the temperature-scaled equation from the rescaled datum, then
    compare A_{T^{1/2}} f(t) with f~(t).

    The physical grid is the T^{1/2}-dilation of the scaled one, so the
    rescaling maps nodes to nodes and no interpolation enters.
    """
    T = params.temp
    gs = build_grid(n_per_axis, v_max)
    gp = build_grid(n_per_axis, v_max * math.sqrt(T))
    Ls = linearized_matrix(CollisionContext(gs, T ** 2), params, use_cache=False).matrix
    Lp = linearized_matrix(CollisionContext(gp, 1.0), params, absolute=True, use_cache=False).matrix
    xi = 2 * np.pi * np.fft.rfftfreq(n_x, d=length / n_x)
    rng = np.random.default_rng(seed)
    # smooth datum: a few x-modes times Gaussian-weighted polynomials in v
    ws = gs.nodes
    datum_s = np.zeros((n_x, gs.n_nodes))
    x = np.arange(n_x) * length / n_x
    for kx in (0, 1, 2):
        c = rng.standard_normal(4)
        prof = (c[0] + c[1] * ws[:, 0] + c[2] * ws[:, 1] ** 2 + c[3] * ws[:, 2]) * np.exp(-gs.speed_sq / 4)
        datum_s += np.cos(kx * x + rng.uniform(0, 2 * np.pi))[:, None] * prof
    datum_p = datum_s.copy()        # f(T^{1/2} w) = f~(w) node by node

    def propagate(L, v1, f):
        fh = np.fft.rfft(f, axis=0)
        out = np.empty_like(fh)
        for m in range(len(xi)):
            A = 1j * xi[m] * np.diag(v1) + L
            out[m] = linalg.expm(-t_end * A) @ fh[m]
        return np.fft.irfft(out, n=n_x, axis=0)

    fs = propagate(Ls, math.sqrt(T) * gs.nodes[:, 0], datum_s)
    fp = propagate(Lp, gp.nodes[:, 0], datum_p)
    disc = float(np.max(np.abs(fs - fp)) / np.max(np.abs(fs)))
    return {"T": T, "t_end": t_end, "discrepancy": disc,
            "matrix_difference": float(np.max(np.abs(Ls - Lp)) / np.max(np.abs(Ls)))}


# ====================================================================
# Knudsen sweep
# ====================================================================

@dataclass
class MacroSeries:
    eps: float
    times: np.ndarray
    x: np.ndarray
    u: np.ndarray           # (nt, n_x, 3), Leray-projected
    theta_limit: np.ndarray  # (nt, n_x)
    rho: np.ndarray
    theta: np.ndarray
    micro_norm: np.ndarray
    lam: float
    temp: float
    fingerprint: str


def leray_1d(u):
    """Leray projection for fields (..., n_x, 3) depending on x1 only: the
    x1-component keeps its mean, transverse components are untouched."""
    u = np.array(u, dtype=float)
    u[..., 0] = np.mean(u[..., 0], axis=-1, keepdims=True)
    return u


def macro_series(traj: Trajectory, basis: KernelBasis, eps: float, x) -> MacroSeries:
    snaps = np.array(traj.snapshots)
    mom = limit_moments(basis, snaps)
    u = leray_1d(mom["u"])
    return MacroSeries(eps, np.array(traj.times), np.asarray(x), u, mom["theta_limit"], mom["rho"],
                       mom["theta"], np.array(traj.diagnostics["micro_norm"]), basis.params.lam,
                       basis.params.temp, basis.grid.fingerprint())


@dataclass
class SweepResult:
    series: dict
    failures: dict
    trajectories: dict


def shear_datum(basis: KernelBasis, x, k: float, amp_u: float = 1e-2, amp_theta: float = 1e-2):
    """u0 = (0, A sin kx, 0), theta0 = B cos kx, rho0 = -theta0."""
    n_x = len(x)
    u = np.zeros((n_x, 3))
    u[:, 1] = amp_u * np.sin(k * x)
    theta = amp_theta * np.cos(k * x)
    return hydro_lift(basis, -theta, u, theta), (-theta, u, theta)


def knudsen_sweep(base: SolverConfig, eps_list, datum=None, k: float = 1.0,
                  amp_u: float = 1e-2, amp_theta: float = 1e-2, keep_snapshots: bool = False) -> SweepResult:
    eps_list = [float(e) for e in eps_list]
    if any(not (0 < e <= 1) for e in eps_list) or any(a <= b for a, b in zip(eps_list, eps_list[1:])):
        raise ConfigError("eps_list must be strictly decreasing inside (0, 1]")
    if base.spatial is None:
        raise ConfigError("knudsen_sweep needs a torus configuration")
    grid = base.grid()
    basis = KernelBasis(grid, base.params)
    ctx = CollisionContext(grid, base.params.temp ** 2)
    Lop = linearized_matrix(ctx, base.params)
    x = np.arange(base.spatial["n_x"]) * base.spatial["length"] / base.spatial["n_x"]
    if datum is None:
        f0, _ = shear_datum(basis, x, k, amp_u, amp_theta)
    else:
        f0 = np.asarray(datum, float)
    series, failures, trajs = {}, {}, {}
    for eps in eps_list:
        cfg = SolverConfig(**{**{k_: getattr(base, k_) for k_ in base.__dataclass_fields__}, "epsilon": eps})
        try:
            system = PerturbationSystem(cfg, ctx, Lop)
            traj = system.run(f0)
            series[eps] = macro_series(traj, basis, eps, x)
            if keep_snapshots:
                trajs[eps] = traj
        except BbeError as exc:
            log.warning("sweep run eps=%g failed: %s", eps, exc)
            failures[eps] = f"{type(exc).__name__}: {exc}"
    return SweepResult(series, failures, trajs)


def decay_rate(series: MacroSeries, k: float, component: int = 1) -> float:
    """Exponential rate of the sin(kx) Fourier amplitude of u_component."""
    nx = len(series.x)
    L = series.x[1] * nx
    m = int(round(k * L / (2 * np.pi)))
    amp = np.abs(np.fft.rfft(series.u[:, :, component], axis=1)[:, m]) * 2 / nx
    t = series.times
    keep = amp > 0
    slope = np.polyfit(t[keep], np.log(amp[keep]), 1)[0]
    return float(-slope)
