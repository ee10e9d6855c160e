"""Bose-Einstein equilibria, their moments and derived constants."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, asdict

import numpy as np
from scipy import optimize, special

from .errors import CondensationError, ValidationError

LAMBDA_MIN = 1e-4
LAMBDA_MAX = 50.0
ZETA_32 = float(special.zeta(1.5))
ZETA_52 = float(special.zeta(2.5))
GAUSS3 = (2 * np.pi) ** 1.5
# Gaussian moment constants: int |v|^k exp(-|v|^2/2) dv = c_k (2 pi)^{3/2}
MAXWELL_C = {0: 1.0, 2: 3.0, 4: 15.0, 6: 105.0}


@dataclass(frozen=True)
class EquilibriumParams:
    lam: float
    temp: float = 1.0

    def __post_init__(self):
        lam, temp = float(self.lam), float(self.temp)
        if not np.isfinite(lam) or lam <= 0:
            raise ValidationError(f"lambda must be > 0 (got {lam}); lambda <= 0 is the condensation regime")
        if lam < LAMBDA_MIN or lam > LAMBDA_MAX:
            raise ValidationError(f"lambda={lam} outside the supported window [{LAMBDA_MIN}, {LAMBDA_MAX}]")
        if not np.isfinite(temp) or temp <= 0:
            raise ValidationError(f"temperature must be > 0 (got {temp})")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "temp", temp)


# ------------------------------------------------------------- log space

def _log_one_minus_exp(y):
    """log(1 - exp(-y)) for y > 0 without cancellation."""
    return np.log(-np.expm1(-y))


def log_M_scaled(lam: float, r2) -> np.ndarray:
    """ln M_lambda at |v|^2 = r2 (unit temperature)."""
    y = np.asarray(r2, dtype=float) / 2 + lam
    return -y - _log_one_minus_exp(y)


def log_N_scaled(lam: float, r2) -> np.ndarray:
    y = np.asarray(r2, dtype=float) / 2 + lam
    return -0.5 * y - _log_one_minus_exp(y)


def M_scaled(lam, r2):
    return np.exp(log_M_scaled(lam, r2))


def N_scaled(lam, r2):
    return np.exp(log_N_scaled(lam, r2))


def _speed_sq(v):
    v = np.asarray(v, dtype=float)
    return np.sum(v * v, axis=-1)


def equilibrium_density(params: EquilibriumParams, v) -> np.ndarray:
    """M_{lambda,T}(v) = 1/(exp(|v|^2/(2T) + lambda) - 1)."""
    return M_scaled(params.lam, _speed_sq(v) / params.temp)


def multiplier_density(params: EquilibriumParams, v) -> np.ndarray:
    """N_{lambda,T} = sqrt(M (1 + M))."""
    return N_scaled(params.lam, _speed_sq(v) / params.temp)


# ------------------------------------------------------------- polylog

def polylog_exp(s: float, lam: float) -> float:
    """Li_s(exp(-lam)) for lam > 0 and non-integer s."""
    if lam <= 0:
        raise ValidationError("polylog_exp needs lam > 0")
    if lam >= 0.5:
        z = math.exp(-lam)
        total, n, term = 0.0, 1, z
        zn = z
        while True:
            term = zn / n ** s
            total += term
            if term < 1e-18 * abs(total):
                return total
            n += 1
            zn *= z
    # expansion about z = 1, convergent for lam < 2 pi
    total = math.gamma(1 - s) * lam ** (s - 1)
    fact, powk = 1.0, 1.0
    for k in range(60):
        term = float(special.zeta(s - k)) * powk / fact
        total += term
        if k > 2 and abs(term) < 1e-18 * abs(total):
            break
        powk *= -lam
        fact *= k + 1
    return total


def moment_oracle(lam: float) -> dict:
    """Closed-form moments of N_lambda^2 from the polylog series."""
    return {k: MAXWELL_C[k] * GAUSS3 * polylog_exp((k + 1) / 2, lam) for k in (0, 2, 4, 6)}


# ------------------------------------------------------------- moments

@dataclass(frozen=True)
class MomentTable:
    lam: float
    m0: float
    m2: float
    m4: float
    m6: float
    source: str = "grid"
    grid_fingerprint: str = ""
    resolution_shift: float = float("nan")

    def __post_init__(self):
        ms = (self.m0, self.m2, self.m4, self.m6)
        if min(ms) <= 0:
            raise ValidationError("moments must be positive")
        if self.m0 * self.m4 - self.m2 ** 2 <= 0 or self.m2 * self.m6 - self.m4 ** 2 <= 0:
            raise ValidationError("moment table violates Cauchy-Schwarz")

    @property
    def resolved(self) -> bool:
        return not (self.resolution_shift > 1e-8)

    @property
    def det0(self):
        return self.m0 * self.m4 - self.m2 ** 2

    @property
    def det2(self):
        return self.m2 * self.m6 - self.m4 ** 2

    @property
    def C_tilde(self):
        return self.m2 / self.m0

    @property
    def l1(self):
        return self.m4 / self.det0

    @property
    def l2(self):
        return self.m2 / self.det0

    @property
    def l3(self):
        return 3.0 / self.m2

    @property
    def l4(self):
        return self.m0 / self.det0

    @property
    def K_A(self):
        return self.m4 / (2 * self.m2)

    @property
    def K_lam(self):
        return self.K_A - 1.0

    @property
    def C_A(self):
        return self.m4 / (4 * self.m2 ** 2) * self.det0

    @property
    def C_star_hydro(self):
        """(m2^2 - m0 m4)/(2 m2), the hydrodynamic form of the constant."""
        return (self.m2 ** 2 - self.m0 * self.m4) / (2 * self.m2)

    @property
    def C_star_flux(self):
        """(1/3) int (|v|^2/2 - K_A)|v|^2 M(1+M)(1+2M) dv in closed form.

        Integration by parts gives 5 m2/6 - m0 m4/(2 m2); this differs
        from ``C_star_hydro`` by m2/3.
        """
        return 5 * self.m2 / 6 - self.m0 * self.m4 / (2 * self.m2)

    def as_dict(self) -> dict:
        d = asdict(self)
        for k in ("C_tilde", "l1", "l2", "l3", "l4", "K_A", "K_lam", "C_A",
                  "C_star_hydro", "C_star_flux", "resolved"):
            d[k] = getattr(self, k)
        return d


def grid_moments(lam: float, grid) -> tuple:
    r2 = grid.speed_sq
    w = np.exp(2 * log_N_scaled(lam, r2))
    return tuple(grid.weight * float(np.sum(w * r2 ** j)) for j in range(4))


def moments(params: EquilibriumParams, grid, check_resolution: bool = True) -> MomentTable:
    """Quadrature moments m_k = int |v|^k N_lambda^2 dv on the scaled grid.

    With ``check_resolution`` the computation is repeated at half the
    spacing; a relative shift of m0 above 1e-8 is flagged with a warning
    and recorded in ``resolution_shift``.
    """
    m = grid_moments(params.lam, grid)
    shift = float("nan")
    if check_resolution:
        from .vgrid import build_grid
        fine = build_grid(2 * grid.n_per_axis - 1, grid.v_max)
        mf = grid_moments(params.lam, fine)
        shift = abs(mf[0] - m[0]) / abs(mf[0])
        if shift > 1e-8:
            warnings.warn(f"moment quadrature under-resolved: m0 shifts by {shift:.3e} "
                          f"when the grid spacing is halved", RuntimeWarning, stacklevel=2)
    return MomentTable(params.lam, *m, source="grid",
                       grid_fingerprint=grid.fingerprint(), resolution_shift=shift)


def oracle_table(lam: float) -> MomentTable:
    m = moment_oracle(lam)
    return MomentTable(lam, m[0], m[2], m[4], m[6], source="oracle", resolution_shift=0.0)


def asymptotic_check(lam: float, bracket=(1 / 50, 50)) -> dict:
    """Ratios of m_k to their small/large-lambda size estimates.

    Each ratio is normalised by the Maxwellian constant c_k (2 pi)^{3/2},
    so it tends to 1 as lambda grows.
    """
    if not (1e-3 <= lam < 50):
        raise ValidationError("asymptotic_check expects lambda in [1e-3, 50)")
    m = moment_oracle(lam)
    q = math.exp(-lam)
    scale0 = q * (-math.expm1(-lam)) ** -0.5
    ratios = {"m0": m[0] / (GAUSS3 * scale0)}
    for k in (2, 4, 6):
        ratios[f"m{k}"] = m[k] / (MAXWELL_C[k] * GAUSS3 * q)
    ok = all(bracket[0] <= r <= bracket[1] for r in ratios.values())
    return {"lambda": lam, "ratios": ratios, "bracket": list(bracket), "within_bracket": ok}


# ------------------------------------------------------------- temperature

def temperature_classification(M0: float, M2: float, mass: float = 1.0) -> dict:
    """Compare the kinetic temperature with the critical temperature.

    M0 = int F dv, M2 = int |v|^2 F dv; ``mass`` is the particle mass.
    """
    if M0 <= 0 or M2 <= 0 or mass <= 0:
        raise ValidationError("M0, M2 and mass must be positive")
    T_bar = mass * M2 / (3 * M0)
    T_c = mass * ZETA_52 / (2 * np.pi * ZETA_32) * (M0 / ZETA_32) ** (2 / 3)
    ratio = T_bar / T_c
    if abs(ratio - 1) <= 1e-9:
        label = "critical"
    else:
        label = "high" if ratio > 1 else "low"
    return {"T_bar": T_bar, "T_c": T_c, "ratio": ratio, "class": label}


# ------------------------------------------------------------- constants

@dataclass(frozen=True)
class ClosedFormConstants:
    lam: float
    temp: float
    C_star: float
    C_star_tilde: float
    K: float
    C1: float
    C2: float
    C3: float
    coercivity_lower: float
    coercivity_upper: float
    C2_op: float
    C3_op: float

    def as_dict(self):
        return asdict(self)


def closed_form_constants(params: EquilibriumParams, universal=None) -> ClosedFormConstants:
    """Closed-form constants; the unspecified universal constants default to 1.

    ``universal`` may override {"C0","C1","C2","C3","C_univ"} used in the
    coercivity bracket and K(lambda, T).
    """
    u = {"C0": 1.0, "C1": 1.0, "C2": 1.0, "C3": 1.0, "C_univ": 1.0}
    u.update(universal or {})
    lam, T = params.lam, params.temp
    q = math.exp(-lam)
    om = -math.expm1(-lam)
    C_star = q ** 2 * om ** 16.5 * min(T ** 1.5, T ** -1.5)
    C_star_t = q ** 2 * om ** 16.5 * min(T ** -3, 1.0)
    mx = max(T, T ** -2)
    K = u["C_univ"] * math.exp(2 * lam) * om ** -10.5 * mx
    C1 = math.exp(lam) * om ** -10.5 * mx * T ** 2
    C2 = math.exp(2 * lam) * om ** -10.5 * mx
    C3 = q * om ** -0.5 / T
    low = T ** 2 * u["C0"] * q * om ** 2.5 / u["C2"]
    up = T ** 2 * u["C3"] * u["C1"] * om ** -4 * q
    C2op = math.exp(-lam / 2) * om ** -3 * T ** 2
    C3op = q * om ** -3 * T ** 2
    return ClosedFormConstants(lam, T, C_star, C_star_t, K, C1, C2, C3, low, up, C2op, C3op)


def certified_bound(params: EquilibriumParams, N: int, norms, C_N=1.0, variant: str = "O") -> float:
    """Energy bound O_N ||f0||^2_{H^N} (variant "O") or P_N ||f0||^2_{H^N} ("P").

    ``norms[k]`` is ||f0||_{H^k_x L^2} for k = 0..N.  ``C_N`` is a number
    or a callable of N standing in for the unspecified universal constants.
    """
    if int(N) != N or N < 2:
        raise ValidationError("certified_bound needs integer N >= 2")
    norms = np.asarray(norms, dtype=float)
    if norms.size < N + 1:
        raise ValidationError(f"need norms for k = 0..{N}")
    if np.any(norms < 0) or np.any(np.diff(norms[:N + 1]) < 0):
        raise ValidationError("norms must be non-negative and non-decreasing in k")
    if variant not in ("O", "P"):
        raise ValidationError("variant must be 'O' or 'P'")
    pc = closed_form_constants(params)
    T = params.temp
    cn = C_N if callable(C_N) else (lambda n, c=float(C_N): c)
    tfac = T ** -1.5 if variant == "O" else 1.0
    base, outer = (12.0, 24.0) if variant == "O" else (6.0, 12.0)
    val = base
    for n in range(3, N + 1):
        c = cn(n)
        Q1 = c ** 2 * pc.C2 ** 2 * pc.C2_op ** 2 / pc.C1 + c * pc.C3 * pc.C2_op ** 2
        Q2 = 2 * c ** 2 * pc.C2 ** 2 * pc.C3_op ** 2 + c * pc.C3 * pc.C3_op ** 2
        s = val * tfac * norms[n - 1] ** 2
        Q3 = 2 * (Q1 + Q2 * s)
        val = outer * math.exp(Q3 * s)
    return val * norms[N] ** 2


# ------------------------------------------------------------- fitting

@dataclass(frozen=True)
class FitResult:
    params: EquilibriumParams
    drift: np.ndarray
    residual: float


def _log_phi(lam):
    return 2.5 * math.log(polylog_exp(1.5, lam)) - 1.5 * math.log(polylog_exp(2.5, lam))


def fit_equilibrium(mass: float, momentum, energy: float) -> FitResult:
    """Bose-Einstein equilibrium M_{lambda,T}(v - u) with the given
    mass, momentum and energy (energy = int |v|^2/2 F dv)."""
    momentum = np.asarray(momentum, dtype=float)
    if mass <= 0:
        raise ValidationError("mass must be positive")
    u = momentum / mass
    e_int = energy - 0.5 * mass * float(u @ u)
    if e_int <= 0:
        raise ValidationError("energy must exceed the kinetic energy of the drift")
    R = e_int / mass
    target = math.log(mass) - 1.5 * math.log(4 * np.pi * R / 3)
    phi0 = 2.5 * math.log(ZETA_32) - 1.5 * math.log(ZETA_52)
    if target >= phi0:
        raise CondensationError(
            "no Bose-Einstein equilibrium with lambda > 0 matches these invariants "
            f"(density ratio exp({target - phi0:.3e}) above the critical value)")
    g = lambda lam: _log_phi(lam) - target
    if g(LAMBDA_MIN) < 0:
        raise ValidationError("fitted lambda lies below the supported window (near condensation)")
    if g(LAMBDA_MAX) > 0:
        raise ValidationError("fitted lambda lies above the supported window (Maxwellian limit)")
    lam = optimize.brentq(g, LAMBDA_MIN, LAMBDA_MAX, xtol=1e-15, rtol=1e-15, maxiter=500)
    T = (2.0 / 3.0) * R * polylog_exp(1.5, lam) / polylog_exp(2.5, lam)
    fit_mass = (2 * np.pi * T) ** 1.5 * polylog_exp(1.5, lam)
    fit_e = 1.5 * T * fit_mass * polylog_exp(2.5, lam) / polylog_exp(1.5, lam)
    res = max(abs(fit_mass / mass - 1), abs(fit_e / e_int - 1))
    if res > 1e-10:
        raise ValidationError(f"equilibrium fit did not converge (residual {res:.2e})")
    return FitResult(EquilibriumParams(lam, T), u, res)


@dataclass(frozen=True)
class DiscreteFit:
    """Lattice equilibrium F = 1/(exp(a + b.v + c|v|^2) - 1) whose grid
    mass, momentum and energy equal prescribed values."""
    coeffs: np.ndarray
    values: np.ndarray
    residual: float
    iterations: int

    @property
    def temp(self) -> float:
        return 1.0 / (2.0 * self.coeffs[4])

    @property
    def drift(self) -> np.ndarray:
        return -self.coeffs[1:4] * self.temp

    @property
    def lam(self) -> float:
        u = self.drift
        return float(self.coeffs[0] - u @ u / (2 * self.temp))


def fit_equilibrium_discrete(grid, invariants, start: FitResult | None = None,
                             tol: float = 1e-14, max_iter: int = 50) -> DiscreteFit:
    """Newton solve for the lattice equilibrium with given grid invariants
    (h^3 sum of F times 1, v1, v2, v3, |v|^2/2)."""
    target = np.asarray(invariants, dtype=float)
    v = grid.nodes
    psi = np.column_stack([np.ones(grid.n_nodes), v, grid.speed_sq / 2])
    if start is None:
        start = fit_equilibrium(target[0], target[1:4], target[4])
    T, u = start.params.temp, start.drift
    x = np.array([start.params.lam + u @ u / (2 * T), *(-u / T), 1 / (2 * T)])
    basis = np.column_stack([np.ones(grid.n_nodes), v, grid.speed_sq])
    for it in range(1, max_iter + 1):
        y = basis @ x
        if np.min(y) <= 0:
            raise CondensationError("discrete equilibrium fit left the region exponent > 0")
        M = 1.0 / np.expm1(y)
        r = grid.weight * psi.T @ M - target
        rel = float(np.max(np.abs(r) / np.maximum(np.abs(target), abs(target[0]))))
        if rel < tol:
            return DiscreteFit(x, M, rel, it)
        J = -grid.weight * (psi * (M * (1 + M))[:, None]).T @ basis
        x = x - np.linalg.solve(J, r)
    raise ValidationError(f"discrete equilibrium fit did not converge (residual {rel:.2e})")
