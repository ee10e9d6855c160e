"""Pseudo-spectral incompressible Navier-Stokes-Fourier solver on a periodic
box and the comparison of kinetic moment series against it."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, GridMismatchError, ValidationError


@dataclass(frozen=True)
class NsfState:
    """u has shape grid + (3,), theta has the grid shape; rho = -theta."""
    u: np.ndarray
    theta: np.ndarray
    t: float
    mu: float
    kappa: float
    temp: float
    lengths: tuple

    @property
    def rho(self) -> np.ndarray:
        return -self.theta

    @property
    def shape(self):
        return self.theta.shape

    def kinetic_energy(self) -> float:
        cell = float(np.prod(self.lengths)) / self.theta.size
        return 0.5 * cell * float(np.sum(self.u ** 2))


class SpectralBox:
    """Wavenumbers, Leray projector and dealiasing mask for a periodic box."""

    def __init__(self, shape, lengths):
        if len(shape) != len(lengths) or not 1 <= len(shape) <= 3:
            raise ValidationError("shape and lengths must describe a 1-3 dimensional box")
        self.shape = tuple(int(n) for n in shape)
        self.lengths = tuple(float(L) for L in lengths)
        self.d = len(shape)
        ks = [2 * np.pi * np.fft.fftfreq(n, d=L / n) for n, L in zip(self.shape, self.lengths)]
        grids = np.meshgrid(*ks, indexing="ij")
        self.k = np.zeros(self.shape + (3,))
        for i in range(self.d):
            self.k[..., i] = grids[i]
        self.k2 = np.sum(self.k ** 2, -1)
        mask = np.ones(self.shape, bool)
        for i, n in enumerate(self.shape):
            kmax = np.abs(grids[i]).max()
            mask &= np.abs(grids[i]) <= (2 / 3) * kmax + 1e-12
        self.dealias = mask
        # odd derivatives drop the Nyquist mode
        self.kd = self.k.copy()
        for i, n in enumerate(self.shape):
            if n % 2 == 0:
                nyq = np.isclose(np.abs(grids[i]), np.pi * n / self.lengths[i])
                self.kd[..., i] = np.where(nyq, 0.0, self.kd[..., i])

    @property
    def axes(self):
        return tuple(range(self.d))

    def fft(self, a):
        return np.fft.fftn(a, axes=self.axes)

    def ifft(self, a):
        return np.real(np.fft.ifftn(a, axes=self.axes))

    def leray_hat(self, uh):
        k = self.kd
        k2 = np.sum(k ** 2, -1)
        safe = np.where(k2 > 0, k2, 1.0)
        div = np.sum(k * uh, -1)
        return uh - k * (div / safe)[..., None]

    def leray(self, u):
        uh = np.stack([self.fft(u[..., i]) for i in range(3)], -1)
        ph = self.leray_hat(uh)
        return np.stack([self.ifft(ph[..., i]) for i in range(3)], -1)

    def divergence(self, u):
        uh = np.stack([self.fft(u[..., i]) for i in range(3)], -1)
        return self.ifft(np.sum(1j * self.kd * uh, -1))


def initial_state(box: SpectralBox, rho0, u0, theta0, mu: float, kappa: float, temp: float,
                  K_lam: float) -> NsfState:
    """Well-prepared data of the fluid limit: u = P u0 and
    theta = (K_lam theta0 - rho0)/(K_lam + 1)."""
    u = box.leray(np.asarray(u0, float))
    theta = (K_lam * np.asarray(theta0, float) - np.asarray(rho0, float)) / (K_lam + 1)
    return NsfState(u, theta, 0.0, mu, kappa, temp, box.lengths)


def _nonlinear(box: SpectralBox, uh, th, sqT):
    """Dealiased -T^{1/2} P div(u x u) and -T^{1/2} u.grad theta in Fourier space."""
    uh = uh * box.dealias[..., None]
    th = th * box.dealias
    u = np.stack([box.ifft(uh[..., i]) for i in range(3)], -1)
    nu = np.zeros_like(uh)
    for i in range(3):
        for j in range(box.d):
            nu[..., i] += 1j * box.kd[..., j] * box.fft(u[..., j] * u[..., i])
    grad = [box.ifft(1j * box.kd[..., j] * th) for j in range(box.d)]
    adv = sum(u[..., j] * grad[j] for j in range(box.d))
    nu = -sqT * box.leray_hat(nu) * box.dealias[..., None]
    nt = -sqT * box.fft(adv) * box.dealias
    return nu, nt


def nsf_step(state: NsfState, dt: float, box: SpectralBox | None = None, cfl: float = 0.5) -> NsfState:
    """Integrating-factor RK4 step; the diffusive parts are exact."""
    box = box or SpectralBox(state.shape, state.lengths)
    sqT = math.sqrt(state.temp)
    dx = min(L / n for L, n in zip(box.lengths, box.shape))
    umax = float(np.max(np.abs(state.u))) if state.u.size else 0.0
    if dt <= 0 or sqT * umax * dt > cfl * dx:
        raise ConfigError(f"time step {dt} violates the advective CFL limit {cfl * dx / max(sqT * umax, 1e-300):.3e}")
    eu = np.exp(-state.mu * box.k2 * dt / 2)[..., None]
    et = np.exp(-state.kappa * box.k2 * dt / 2)
    uh = np.stack([box.fft(state.u[..., i]) for i in range(3)], -1)
    th = box.fft(state.theta)

    a1u, a1t = _nonlinear(box, uh, th, sqT)
    u2, t2 = eu * (uh + dt / 2 * a1u), et * (th + dt / 2 * a1t)
    a2u, a2t = _nonlinear(box, u2, t2, sqT)
    u3, t3 = eu * uh + dt / 2 * a2u, et * th + dt / 2 * a2t
    a3u, a3t = _nonlinear(box, u3, t3, sqT)
    u4, t4 = eu * eu * uh + dt * eu * a3u, et * et * th + dt * et * a3t
    a4u, a4t = _nonlinear(box, u4, t4, sqT)
    uh_new = eu * eu * uh + dt / 6 * (eu * eu * a1u + 2 * eu * (a2u + a3u) + a4u)
    th_new = et * et * th + dt / 6 * (et * et * a1t + 2 * et * (a2t + a3t) + a4t)
    uh_new = box.leray_hat(uh_new)
    u = np.stack([box.ifft(uh_new[..., i]) for i in range(3)], -1)
    return replace(state, u=u, theta=box.ifft(th_new), t=state.t + dt)


def integrate(state: NsfState, times, max_dt: float, box: SpectralBox | None = None):
    """States at the requested (increasing) times."""
    box = box or SpectralBox(state.shape, state.lengths)
    out = []
    for t in times:
        if t < state.t - 1e-14:
            raise ValidationError("times must be increasing")
        while state.t < t - 1e-14:
            dt = min(max_dt, t - state.t)
            state = nsf_step(state, dt, box)
        out.append(state)
    return out


# ------------------------------------------------------------ exact modes

def heat_mode(x, t, amp, k, kappa):
    return amp * math.exp(-kappa * k * k * t) * np.sin(k * x)


def shear_mode(x, t, amp, k, mu):
    return amp * math.exp(-mu * k * k * t) * np.sin(k * x)


def taylor_green(box: SpectralBox, amp: float = 1.0):
    if box.d < 2:
        raise ValidationError("Taylor-Green needs at least two dimensions")
    X = np.meshgrid(*[np.arange(n) * L / n for n, L in zip(box.shape, box.lengths)], indexing="ij")
    k1 = 2 * np.pi / box.lengths[0]
    k2 = 2 * np.pi / box.lengths[1]
    u = np.zeros(box.shape + (3,))
    u[..., 0] = amp * k2 * np.sin(k1 * X[0]) * np.cos(k2 * X[1])
    u[..., 1] = -amp * k1 * np.cos(k1 * X[0]) * np.sin(k2 * X[1])
    return u, k1 * k1 + k2 * k2


# ------------------------------------------------------------ comparator

def _l2x(field, cell):
    return float(np.sqrt(cell * np.sum(field ** 2)))


def limit_compare(series: dict, coeffs, K_lam: float, datum, max_dt: float | None = None,
                  ratio_max: float = 0.8) -> dict:
    """Compare kinetic moment series (one per eps) with the fluid solution
    started from the projected data.

    ``datum`` is (rho0, u0, theta0) on the kinetic x-grid; ``coeffs`` is a
    TransportCoefficients record or its dict form.
    """
    c = coeffs.as_dict() if hasattr(coeffs, "as_dict") else dict(coeffs)
    if not series:
        raise ValidationError("no kinetic series to compare")
    eps_sorted = sorted(series, reverse=True)
    ref = series[eps_sorted[0]]
    for e in eps_sorted:
        s = series[e]
        if not math.isclose(s.lam, c["lambda"], rel_tol=1e-12) or not math.isclose(s.temp, c["T"], rel_tol=1e-12):
            raise ValidationError("transport coefficients were computed for different (lambda, T)")
        if s.fingerprint != c["grid_fingerprint"]:
            raise GridMismatchError("transport coefficients come from a different velocity grid")
        if s.x.shape != ref.x.shape or not np.allclose(s.x, ref.x):
            raise ValidationError("kinetic series use different spatial grids")
    x = ref.x
    L = float(x[1] * len(x))
    box = SpectralBox((len(x),), (L,))
    rho0, u0, theta0 = datum
    st = initial_state(box, rho0, u0, theta0, c["mu"], c["kappa"], c["T"], K_lam)
    cell = L / len(x)
    e_u, e_t, bous = [], [], []
    for e in eps_sorted:
        s = series[e]
        dt = max_dt or (s.times[1] - s.times[0] if len(s.times) > 1 else 1.0)
        states = integrate(st, s.times, dt, box)
        e_u.append(max(_l2x(s.u[i] - states[i].u, cell) for i in range(len(s.times))))
        e_t.append(max(_l2x(s.theta_limit[i] - states[i].theta, cell) for i in range(len(s.times))))
        bous.append(max(_l2x(s.rho[i] + s.theta[i], cell) for i in range(len(s.times))))

    def ratios(v):
        return [b / a if a > 0 else float("inf") for a, b in zip(v, v[1:])]

    ru, rt = ratios(e_u), ratios(e_t)
    checks = {"e_u_decreasing": all(r < 1 for r in ru), "e_u_ratio": all(r <= ratio_max for r in ru),
              "e_theta_decreasing": all(r < 1 for r in rt), "e_theta_ratio": all(r <= ratio_max for r in rt),
              "boussinesq_decreasing": all(b < a for a, b in zip(bous, bous[1:]))}
    return {"eps": eps_sorted, "e_u": e_u, "e_theta": e_t, "ratios_u": ru, "ratios_theta": rt,
            "boussinesq": bous, "checks": checks, "pass": all(checks.values())}
