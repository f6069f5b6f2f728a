"""Longitudinal and dispersive couplings from quasi-energy derivatives.

For a cavity coupled through ``g_perp Q (a + a^dag)`` to a system driven at
amplitude ``A_q``, level ``j`` acquires

    g_par_j = g_perp * d(eps_j)/dA
    chi_j   = g_perp**2 * (d2(eps_j)/dA2 + (1/A) d(eps_j)/dA)

evaluated on the real amplitude axis. Below ``A_switch`` the ``(1/A)`` term is
replaced by its limit ``d2(eps_j)/dA2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .floquet import (
    EDGE_WEIGHT_TOL,
    ConvergenceError,
    FloquetConfig,
    FloquetSpectrum,
    default_config,
    default_step,
    track_branches,
)
from .models import SystemModel

DEFAULT_FD_STEP = 1e-4
RICHARDSON_RTOL = 1e-4


class CouplingError(RuntimeError):
    pass


class NearResonanceError(CouplingError):
    pass


@dataclass(frozen=True)
class LevelCouplings:
    levels: tuple
    g_par: np.ndarray
    chi: np.ndarray
    epsilon: np.ndarray
    A_q: float
    g_perp: float
    omega_d: float
    omega_q: float

    def of(self, level: int):
        """``(g_par, chi, epsilon)`` for one level."""
        b = self.levels.index(level)
        return float(self.g_par[b]), float(self.chi[b]), float(self.epsilon[b])


@dataclass(frozen=True)
class ReadoutCouplings:
    g_par: float
    g_bar: float
    chi: float
    chi_bar: float
    epsilon: float
    gamma: float
    g_perp: float
    kappa: float
    omega_d: float
    omega_r: float
    A_q: float = 0.0


@dataclass(frozen=True)
class DrivePlan:
    A_q: float
    A_r: float
    phi: float
    omega_d: float

    def __post_init__(self):
        if self.A_q < 0:
            raise ValueError("A_q must be non-negative (absorb the sign into the phase)")


# Central 5-point stencils.
_D1 = {-2: 1 / 12, -1: -8 / 12, 1: 8 / 12, 2: -1 / 12}
_D2 = {-2: -1 / 12, -1: 16 / 12, 0: -30 / 12, 1: 16 / 12, 2: -1 / 12}
# Offsets in units of h/2 needed for stencils at h and h/2.
STENCIL_OFFSETS = (-4, -2, -1, 0, 1, 2, 4)


def stencil_points(A_q: float, fd_step: float = DEFAULT_FD_STEP) -> np.ndarray:
    """Amplitudes needed by :func:`level_couplings` (negative ones folded by evenness)."""
    return np.abs(A_q + 0.5 * fd_step * np.array(STENCIL_OFFSETS, dtype=float))


def coupling_grid(A_q: float, fd_step: float = DEFAULT_FD_STEP, step: float = 0.01) -> np.ndarray:
    """Ascending grid from 0 that reaches ``A_q`` with spacing ``<= step`` and covers the stencil."""
    pts = stencil_points(A_q, fd_step)
    lo = pts.min()
    n = int(np.ceil(lo / step)) if lo > 0 else 0
    ramp = np.linspace(0.0, lo, n + 1) if n else np.array([0.0])
    grid = np.unique(np.concatenate([ramp, pts]))
    # Drop near-duplicates produced by the union.
    keep = np.concatenate([[True], np.diff(grid) > 1e-3 * fd_step])
    return grid[keep]


def _lookup(spec: FloquetSpectrum, A: float) -> int:
    d = np.abs(spec.amplitudes - abs(A))
    k = int(np.argmin(d))
    if d[k] > 1e-6 * (abs(A) + 1e-12) and d[k] > 1e-12:
        raise CouplingError(f"spectrum grid does not contain the stencil point A={abs(A):.12g}")
    return k


def _derivatives(spec: FloquetSpectrum, A_q: float, h: float):
    """First and second derivatives of every branch with a 5-point stencil of step ``h``."""
    d1 = np.zeros(len(spec.levels))
    d2 = np.zeros(len(spec.levels))
    # Antisymmetric pairs, so evenness gives an exact zero at A_q = 0.
    for s in (1, 2):
        lo = spec.quasi_energies[:, _lookup(spec, A_q - s * h)]
        d1 += _D1[s] * (spec.quasi_energies[:, _lookup(spec, A_q + s * h)] - lo)
    for s, c in _D2.items():
        d2 += c * spec.quasi_energies[:, _lookup(spec, A_q + s * h)]
    return d1 / h, d2 / h**2


def _richardson_check(name, coarse, fine, floor):
    bad = np.abs(coarse - fine) > RICHARDSON_RTOL * np.abs(fine) + floor
    if np.any(bad):
        i = int(np.argmax(bad))
        raise CouplingError(
            f"{name} not converged: stencil estimates {coarse[i]:.10g} vs {fine[i]:.10g}"
        )


def level_couplings(
    spectrum: FloquetSpectrum,
    g_perp: float,
    A_q: float,
    fd_step: float = DEFAULT_FD_STEP,
    A_switch: float | None = None,
    logical=(0, 1),
) -> LevelCouplings:
    """Per-level ``g_par`` and ``chi`` from a branch-tracked spectrum.

    The spectrum grid must contain :func:`stencil_points` for ``A_q``.
    Derivatives are taken at steps ``fd_step`` and ``fd_step/2``; the finer
    one is returned after checking both agree to 1e-4 relative.

    Raises:
        NearResonanceError: the logical quasi-energies are within
            ``10 * fd_step * max_slope`` of each other modulo one drive quantum.
        ConvergenceError: a stencil point's mode reaches the truncation edge.
        CouplingError: grid does not cover the stencil or derivatives disagree.
    """
    if A_q < 0:
        raise ValueError("A_q must be non-negative")
    A_switch = 10 * fd_step if A_switch is None else A_switch
    h = fd_step
    idx = [_lookup(spectrum, a) for a in stencil_points(A_q, h)]
    if spectrum.edge_weight[:, idx].max() > EDGE_WEIGHT_TOL:
        raise ConvergenceError(
            f"modes reach the outermost replicas at A_q={A_q:g}; increase n_rep"
        )

    d1c, d2c = _derivatives(spectrum, A_q, h)
    d1, d2 = _derivatives(spectrum, A_q, h / 2)
    k0 = _lookup(spectrum, A_q)
    eps = spectrum.quasi_energies[:, k0]

    # Rounding floor: Rayleigh-quotient energies carry ~eps*|E| of noise.
    noise = 1e3 * np.finfo(float).eps * max(1.0, np.abs(eps).max())
    _richardson_check("first derivative", d1c, d1, noise / h)
    _richardson_check("second derivative", d2c, d2, noise / h**2)

    if all(j in spectrum.levels for j in logical):
        b0, b1 = spectrum.branch(logical[0]), spectrum.branch(logical[1])
        omega = spectrum.config.omega_d
        gap = eps[b1] - eps[b0]
        dist = min(abs(gap - n * omega) for n in (-1, 0, 1))
        max_slope = max(np.abs(d1).max(), 1e-300)
        if dist < 10 * fd_step * max_slope or dist == 0.0:
            raise NearResonanceError(
                f"logical quasi-energies nearly degenerate (separation {dist:.3g}) at "
                f"omega_d={omega:g}: drive is too close to the qubit resonance"
            )

    curv = 2 * d2 if A_q < A_switch else d2 + d1 / A_q
    return LevelCouplings(
        levels=spectrum.levels,
        g_par=g_perp * d1,
        chi=g_perp**2 * curv,
        epsilon=eps.copy(),
        A_q=float(A_q),
        g_perp=float(g_perp),
        omega_d=spectrum.config.omega_d,
        omega_q=spectrum.model.omega_q,
    )


def compute_level_couplings(
    model: SystemModel,
    cfg: FloquetConfig,
    A_q: float,
    g_perp: float,
    fd_step: float = DEFAULT_FD_STEP,
    levels=(0, 1),
    step: float | None = None,
    **kw,
) -> LevelCouplings:
    """Track the spectrum up to ``A_q`` and extract :func:`level_couplings`."""
    step = default_step(model, cfg.omega_d) if step is None else step
    spec = track_branches(model, coupling_grid(A_q, fd_step, step), cfg, levels)
    return level_couplings(spec, g_perp, A_q, fd_step, logical=levels[:2], **kw)


def reduce_two_level(
    lc: LevelCouplings,
    g_perp: float,
    kappa: float,
    omega_d: float,
    omega_r: float,
    levels=(0, 1),
) -> ReadoutCouplings:
    """Logical two-level couplings and the Purcell rate ``kappa g^2 / (omega_q - omega_r)^2``."""
    g0, chi0, e0 = lc.of(levels[0])
    g1, chi1, e1 = lc.of(levels[1])
    return ReadoutCouplings(
        g_par=(g1 - g0) / 2,
        g_bar=(g1 + g0) / 2,
        chi=(chi1 - chi0) / 2,
        chi_bar=(chi1 + chi0) / 2,
        epsilon=(e1 - e0) / 2,
        gamma=purcell_rate(kappa, g_perp, lc.omega_q, omega_r),
        g_perp=g_perp,
        kappa=kappa,
        omega_d=omega_d,
        omega_r=omega_r,
        A_q=lc.A_q,
    )


def purcell_rate(kappa, g_perp, omega_q, omega_r):
    if omega_q == omega_r:
        raise NearResonanceError("Purcell rate diverges at omega_r = omega_q")
    return kappa * g_perp**2 / (omega_q - omega_r) ** 2


def small_drive_couplings(omega_q, omega_d, g_perp, A_q):
    """Two-level closed forms ``(g_par_0th, chi_0th)`` valid for small ``A_q``."""
    if np.isclose(omega_d, omega_q, rtol=1e-12, atol=0):
        raise NearResonanceError("small-drive couplings diverge at omega_d = omega_q")
    chi0 = 2 * g_perp**2 * omega_q / (omega_q**2 - omega_d**2)
    return chi0 * A_q / (2 * g_perp), chi0


def transmon_small_drive_reference(E_C, n01, g_perp, A_q, omega_q, omega_d, rwa=False):
    """Perturbative ``(g_par_0th, chi_0th)`` of a weakly anharmonic transmon.

    Uses ``|n12|^2 = 2 |n01|^2`` and second-order shifts of levels 0 and 1.
    With ``rwa`` the counter-rotating (``omega_q + omega_d``) terms are dropped.
    """
    d = omega_q - omega_d
    s = omega_q + omega_d
    poles = [d, d - E_C] + ([] if rwa else [s, s - E_C])
    if any(abs(x) < 1e-12 * max(1.0, omega_q) for x in poles):
        raise NearResonanceError("drive resonant with a transmon transition")
    n2 = abs(n01) ** 2
    if rwa:
        bracket = 1 / d - 1 / (d - E_C)
    else:
        bracket = 1 / d + 1 / s - 1 / (d - E_C) - 1 / (s - E_C)
    chi0 = g_perp**2 * n2 * bracket
    return chi0 * A_q / (2 * g_perp), chi0


def compensation_tone(rc: ReadoutCouplings, omega_r: float) -> DrivePlan:
    """Cavity tone cancelling the qubit-independent pointer motion."""
    return DrivePlan(A_q=rc.A_q, A_r=-2 * rc.g_bar, phi=0.0, omega_d=omega_r + rc.chi_bar)


def readout_couplings(
    model: SystemModel,
    omega_r: float,
    A_q: float,
    g_perp: float,
    kappa: float,
    n_rep: int | None = None,
    omega_d: float | None = None,
    fd_step: float = DEFAULT_FD_STEP,
    levels=(0, 1),
) -> ReadoutCouplings:
    """Couplings for a qubit driven at ``omega_d`` (default: the cavity frequency)."""
    omega_d = omega_r if omega_d is None else omega_d
    kw = {} if n_rep is None else {"n_rep": n_rep}
    cfg = default_config(model, omega_d, **kw)
    lc = compute_level_couplings(model, cfg, A_q, g_perp, fd_step, levels=levels)
    return reduce_two_level(lc, g_perp, kappa, omega_d, omega_r, levels=levels)
