"""Closed-form cavity pointer trajectories and readout SNR.

The effective model in the frame rotating at ``omega_d`` is

    H = (delta + chi_bar + chi sz) a^dag a + (g sz + g_bar)(a + a^dag)
        + (A_r/2)(a e^{i phi} + a^dag e^{-i phi}),   delta = omega_r - omega_d,

with cavity loss ``kappa`` and qubit relaxation ``gamma``. The moments
``a = <a>``, ``b = <a sz>`` and ``s = <sz>`` obey a closed linear system
(:func:`moment_rhs`) whose solution from an empty cavity is evaluated in
closed form by :func:`analytic_trajectory`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.integrate import cumulative_trapezoid

from .couplings import DrivePlan, ReadoutCouplings

DEGENERATE_TOL = 1e-14


@dataclass(frozen=True)
class TrajectoryParams:
    rc: ReadoutCouplings
    plan: DrivePlan
    sigma_z0: float
    kappa: float
    t_grid: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t_grid, dtype=float)
        if t.ndim != 1 or t.size == 0 or t[0] != 0.0 or np.any(np.diff(t) < 0):
            raise ValueError("t_grid must be ascending and start at 0")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if not -1.0 <= self.sigma_z0 <= 1.0:
            raise ValueError("sigma_z0 must lie in [-1, 1]")
        object.__setattr__(self, "t_grid", t)


@dataclass
class Trajectory:
    times: np.ndarray
    a_of_t: np.ndarray
    label: str = ""
    a_sz_of_t: np.ndarray | None = None


@dataclass
class SnrCurve:
    times: np.ndarray
    snr: np.ndarray

    def at(self, t: float) -> float:
        return float(np.interp(t, self.times, self.snr))


def default_t_grid(kappa: float, t_max_kappa: float = 5.0, n: int = 2000) -> np.ndarray:
    return np.linspace(0.0, t_max_kappa / kappa, n)


def _rates(rc: ReadoutCouplings, plan: DrivePlan, kappa: float):
    delta = rc.omega_r - plan.omega_d
    D = rc.g_bar + 0.5 * plan.A_r * np.exp(-1j * plan.phi)
    lam = 1j * (rc.chi_bar - rc.chi) + 1j * delta + kappa / 2
    nu = 1j * (rc.chi_bar + rc.chi) + 1j * delta + kappa / 2
    return delta, D, lam, nu


def moment_matrix(rc: ReadoutCouplings, plan: DrivePlan, kappa: float) -> np.ndarray:
    """Generator of ``d/dt (a, b, s, 1)`` for the linear moment system."""
    delta, D, _, _ = _rates(rc, plan, kappa)
    g, chi, gam = rc.g_par, rc.chi, rc.gamma
    r = 1j * (rc.chi_bar + delta) + kappa / 2
    return np.array(
        [
            [-r, -1j * chi, -1j * g, -1j * D],
            [-(1j * chi + gam), -(r + gam), -1j * D, -1j * g],
            [0, 0, -gam, -gam],
            [0, 0, 0, 0],
        ],
        dtype=complex,
    )


def moment_rhs(rc: ReadoutCouplings, plan: DrivePlan, kappa: float, a, b, s):
    """Time derivatives ``(da, db, ds)`` of ``<a>``, ``<a sz>``, ``<sz>``."""
    M = moment_matrix(rc, plan, kappa)
    x = np.array([a, b, s, np.ones_like(a)])
    dx = np.tensordot(M, x, axes=1)
    return dx[0], dx[1], dx[2]


def _integrate_exact(p: TrajectoryParams):
    # Constant-coefficient linear system: x(t) = expm(M t) x(0), exact up to rounding.
    M = moment_matrix(p.rc, p.plan, p.kappa)
    x0 = np.array([0, 0, p.sigma_z0, 1], dtype=complex)
    xs = np.array([sla.expm(M * t) @ x0 for t in p.t_grid])
    return xs[:, 0], xs[:, 1]


def _phi(rate, t):
    """``(1 - exp(-rate t)) / rate`` with its ``rate -> 0`` limit."""
    if rate == 0:
        return t.astype(complex)
    return -np.expm1(-rate * t) / rate


def _closed_form(p: TrajectoryParams):
    rc, t, k = p.rc, p.t_grid, p.kappa
    _, D, lam, nu = _rates(rc, p.plan, k)
    g, chi, gam, s0 = rc.g_par, rc.chi, rc.gamma, p.sigma_z0
    for name, rate in (("lambda", lam), ("nu", nu)):
        if rate == 0:
            raise ZeroDivisionError(f"resonant denominator {name} vanishes")
    c = 1j * chi / (gam + 1j * chi) if (gam + 1j * chi) != 0 else 0.0
    decay = np.exp(-gam * t)
    # e^{-gam t} - e^{-lam t} = e^{-gam t} (1 - e^{-(lam - gam) t})
    cross = decay * _phi(lam - gam, t)
    alpha = -1j * ((D - g) * (1 + c) * _phi(lam, t) + (s0 + 1) * (g - c * D) * cross)
    beta = -1j * (s0 + 1) * (g + D) * decay * _phi(nu, t)
    a = ((gam + 1j * chi) * alpha + 1j * chi * beta) / (gam + 2j * chi)
    return a, beta - a


def analytic_trajectory(p: TrajectoryParams, label: str = "") -> Trajectory:
    """Cavity field ``<a(t)>`` from an empty cavity, in the ``omega_d`` frame.

    Uses the normal-mode closed form; when ``|gamma + 2 i chi| <= 1e-14`` (the
    recombination is singular) the linear moment system is propagated exactly
    with a matrix exponential instead.
    """
    rc = p.rc
    if abs(rc.gamma + 2j * rc.chi) <= DEGENERATE_TOL:
        a, b = _integrate_exact(p)
    else:
        a, b = _closed_form(p)
    a = np.asarray(a, dtype=complex)
    a[0] = 0.0
    return Trajectory(p.t_grid, a, label, np.asarray(b, dtype=complex))


def dispersive_trajectory(A_r, chi, kappa, sigma_z0, t_grid, label: str = "") -> Trajectory:
    """Dispersive readout: qubit undriven, cavity driven on resonance with phase 3 pi / 2."""
    t = np.asarray(t_grid, dtype=float)
    a = np.zeros(t.size, dtype=complex)
    for sigma in (1, -1):
        rate = 1j * sigma * chi + kappa / 2
        a += sigma * (sigma_z0 + sigma) * _phi(rate, t)
    return Trajectory(t, 0.25 * A_r * a, label)


def steady_state_pointer(rc: ReadoutCouplings, plan: DrivePlan, sigma_z: float) -> complex:
    """Long-time ``<a>`` for a frozen qubit polarization, neglecting qubit-cavity entanglement.

    With ``g_bar = chi_bar = 0``, ``omega_d = omega_r`` and ``phi = 3 pi / 2``
    this is ``(-i g sz + A_r/2) / (i chi sz + kappa/2)``.
    """
    if not rc.kappa > 0:
        raise ValueError("kappa must be positive")
    delta = rc.omega_r - plan.omega_d
    num = -1j * (rc.g_par * sigma_z + rc.g_bar + 0.5 * plan.A_r * np.exp(-1j * plan.phi))
    return complex(num / (1j * (rc.chi * sigma_z + rc.chi_bar + delta) + rc.kappa / 2))


def snr(traj_up: Trajectory, traj_down: Trajectory, kappa: float) -> SnrCurve:
    """``sqrt(2 kappa int_0^t |a_up - a_down|^2)`` by the trapezoid rule."""
    t = np.asarray(traj_up.times)
    if t.shape != np.shape(traj_down.times) or np.any(t != traj_down.times):
        raise ValueError("trajectories must share the same time grid")
    d2 = np.abs(np.asarray(traj_up.a_of_t) - np.asarray(traj_down.a_of_t)) ** 2
    integral = cumulative_trapezoid(2 * kappa * d2, t, initial=0.0)
    return SnrCurve(t, np.sqrt(integral))


def match_dispersive_amplitude(
    rc: ReadoutCouplings, plan: DrivePlan, chi_disp: float, kappa: float, sigma=(1.0, -1.0)
) -> float:
    """Cavity drive giving the dispersive protocol the same steady splitting as ``(rc, plan)``.

    ``sigma`` are the longitudinal polarizations of the two states; the
    dispersive protocol starts from the bare states (``sz = +-1``).
    """
    split = abs(steady_state_pointer(rc, plan, sigma[0]) - steady_state_pointer(rc, plan, sigma[1]))
    if split == 0:
        return 0.0
    per_unit = abs(0.5 / (1j * chi_disp + kappa / 2) - 0.5 / (-1j * chi_disp + kappa / 2))
    if per_unit == 0:
        raise ValueError("dispersive splitting vanishes for chi_disp = 0")
    return split / per_unit


def trajectory_pair(rc, plan, kappa, t_grid, sigma_up=1.0, sigma_down=-1.0):
    up = analytic_trajectory(TrajectoryParams(rc, plan, sigma_up, kappa, t_grid), "up")
    down = analytic_trajectory(TrajectoryParams(rc, plan, sigma_down, kappa, t_grid), "down")
    return up, down
