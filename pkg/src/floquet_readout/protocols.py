"""Readout protocols assembled from the lower-level modules.

These helpers turn a device, a resonator and a drive choice into couplings,
drive plans, pointer trajectories and SNR values. Both the command-line
front end and the acceptance checks are built on them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cavity import (
    Trajectory,
    TrajectoryParams,
    analytic_trajectory,
    dispersive_trajectory,
    match_dispersive_amplitude,
    snr,
    trajectory_pair,
)
from .couplings import (
    DEFAULT_FD_STEP,
    CouplingError,
    DrivePlan,
    ReadoutCouplings,
    compensation_tone,
    level_couplings,
    purcell_rate,
    reduce_two_level,
    small_drive_couplings,
    stencil_points,
)
from .floquet import (
    FloquetError,
    default_config,
    default_step,
    ramp_grid,
    track_branches,
)
from .lindblad import SimConfig, simulate
from .models import SystemModel

# Phase of the cavity drive that makes dispersive pointers split along Re<a>.
DISPERSIVE_PHASE = 1.5 * math.pi


@dataclass(frozen=True)
class Readout:
    """Everything needed to draw the two pointer trajectories of one set-up."""

    model: SystemModel
    rc: ReadoutCouplings
    plan: DrivePlan
    sigma_up: float
    sigma_down: float

    @property
    def kappa(self) -> float:
        return self.rc.kappa


def scan_grid(A_values, fd_step: float, step: float) -> np.ndarray:
    """Tracking grid from 0 through every stencil needed for ``A_values``.

    Ramp points closer than ``fd_step / 4`` to a stencil point are dropped so
    that each stencil amplitude appears exactly once.
    """
    A_values = np.atleast_1d(np.asarray(A_values, dtype=float))
    stencils = np.unique(np.concatenate([stencil_points(a, fd_step) for a in A_values]))
    ramp = ramp_grid(float(stencils.max()), step)
    near = np.abs(ramp[:, None] - stencils[None, :]).min(axis=1) < 0.25 * fd_step
    ramp = ramp[~near | (ramp == 0.0)]
    grid = np.unique(np.concatenate([[0.0], ramp, stencils]))
    keep = np.concatenate([[True], np.diff(grid) > 1e-3 * fd_step])
    return grid[keep]


@dataclass(frozen=True)
class ScanPoint:
    """Couplings at one amplitude; ``rc`` is ``None`` when extraction was refused."""

    A_q: float
    rc: ReadoutCouplings | None
    reason: str = ""
    sigma_up: float = 1.0
    sigma_down: float = -1.0


def _dressed(spec, k: int, logical=(0, 1)):
    u0 = spec.mode_at_t0(logical[0], k)
    u1 = spec.mode_at_t0(logical[1], k)
    return tuple(float(abs(u1[j]) ** 2 - abs(u0[j]) ** 2) for j in (logical[1], logical[0]))


def coupling_scan(
    model: SystemModel,
    omega_r: float,
    A_values,
    g_perp: float,
    kappa: float,
    omega_d: float | None = None,
    fd_step: float = DEFAULT_FD_STEP,
    n_rep: int | None = None,
    levels=(0, 1),
) -> list[ScanPoint]:
    """Two-level couplings at each amplitude in ``A_values`` from one tracking run.

    Points are returned in input order. Where the extraction is refused the
    point carries ``rc=None`` and the error text. ``sigma_up``/``sigma_down``
    are the dressed polarizations of bare levels ``levels[1]``/``levels[0]``.
    """
    omega_d = omega_r if omega_d is None else omega_d
    kw = {} if n_rep is None else {"n_rep": n_rep}
    cfg = default_config(model, omega_d, **kw)
    A_values = [float(a) for a in A_values]
    try:
        spec = track_branches(
            model, scan_grid(A_values, fd_step, default_step(model, omega_d)), cfg, levels
        )
    except FloquetError as exc:
        return [ScanPoint(A, None, f"{type(exc).__name__}: {exc}") for A in A_values]
    out = []
    for A in A_values:
        try:
            lc = level_couplings(spec, g_perp, A, fd_step, logical=levels[:2])
            rc = reduce_two_level(lc, g_perp, kappa, omega_d, omega_r, levels[:2])
        except (FloquetError, CouplingError) as exc:
            out.append(ScanPoint(A, None, f"{type(exc).__name__}: {exc}"))
            continue
        up, down = _dressed(spec, spec.index_of(abs(A)), levels[:2])
        out.append(ScanPoint(A, rc, "", up, down))
    return out


def readout_from(model: SystemModel, point: ScanPoint, compensate=False, dressed=True) -> Readout:
    if point.rc is None:
        raise CouplingError(point.reason)
    rc = point.rc
    if compensate:
        plan = compensation_tone(rc, rc.omega_r)
    else:
        plan = DrivePlan(abs(point.A_q), 0.0, 0.0, rc.omega_d)
    if dressed:
        return Readout(model, rc, plan, point.sigma_up, point.sigma_down)
    return Readout(model, rc, plan, 1.0, -1.0)


def longitudinal_readout(
    model: SystemModel,
    omega_r: float,
    A_q: float,
    g_perp: float,
    kappa: float,
    compensate: bool = False,
    n_rep: int | None = None,
    fd_step: float = DEFAULT_FD_STEP,
    dressed: bool = True,
) -> Readout:
    """Qubit driven at the cavity frequency, optionally with the compensation tone.

    With ``dressed`` the initial polarizations are those of the bare states
    projected on the t = 0 Floquet modes at ``A_q``; otherwise they are +-1.
    """
    (point,) = coupling_scan(model, omega_r, [A_q], g_perp, kappa, fd_step=fd_step, n_rep=n_rep)
    return readout_from(model, point, compensate, dressed)


def analytic_pair(ro: Readout, t_grid):
    return trajectory_pair(ro.rc, ro.plan, ro.kappa, t_grid, ro.sigma_up, ro.sigma_down)


def dispersive_readout(model: SystemModel, omega_r: float, g_perp: float, kappa: float, A_r: float):
    """Undriven qubit, cavity driven on resonance; ``chi`` from the small-drive closed form."""
    _, chi0 = small_drive_couplings(model.omega_q, omega_r, g_perp, 0.0)
    rc = ReadoutCouplings(
        g_par=0.0,
        g_bar=0.0,
        chi=chi0,
        chi_bar=0.0,
        epsilon=0.5 * model.omega_q,
        gamma=purcell_rate(kappa, g_perp, model.omega_q, omega_r),
        g_perp=g_perp,
        kappa=kappa,
        omega_d=omega_r,
        omega_r=omega_r,
    )
    return Readout(model, rc, DrivePlan(0.0, A_r, DISPERSIVE_PHASE, omega_r), 1.0, -1.0)


def matched_dispersive(ro: Readout, omega_r_disp: float, g_perp: float) -> Readout:
    """Dispersive protocol whose long-time SNR growth equals that of ``ro``."""
    disp = dispersive_readout(ro.model, omega_r_disp, g_perp, ro.kappa, 0.0)
    A_r = match_dispersive_amplitude(
        ro.rc, ro.plan, disp.rc.chi, ro.kappa, (ro.sigma_up, ro.sigma_down)
    )
    return dispersive_readout(ro.model, omega_r_disp, g_perp, ro.kappa, A_r)


def dispersive_pair(ro: Readout, t_grid):
    up = dispersive_trajectory(ro.plan.A_r, ro.rc.chi, ro.kappa, 1.0, t_grid, "up")
    down = dispersive_trajectory(ro.plan.A_r, ro.rc.chi, ro.kappa, -1.0, t_grid, "down")
    return up, down


def analytic_snr_at(ro: Readout, t_star: float, n: int = 400) -> float:
    t = np.linspace(0.0, t_star, n)
    up, down = analytic_pair(ro, t)
    return float(snr(up, down, ro.kappa).snr[-1])


def oracle_pair(ro: Readout, t_grid, cfg: SimConfig | None = None, model: SystemModel | None = None):
    """Master-equation trajectories from bare levels 1 (up) and 0 (down).

    ``model`` overrides ``ro.model`` (e.g. a truncated copy).
    """
    model = ro.model if model is None else model
    r0, r1 = simulate(model, ro.rc.g_perp, ro.rc.omega_r, ro.kappa, ro.plan, [0, 1], t_grid, cfg)
    return r1, r0


def as_trajectory(res, label: str = "") -> Trajectory:
    return Trajectory(res.times, res.expect_a, label)


def com_to_differential(up: Trajectory, down: Trajectory) -> float:
    """Max center-of-mass amplitude over max half-splitting."""
    com = np.abs(np.asarray(up.a_of_t) + np.asarray(down.a_of_t)).max() / 2
    diff = np.abs(np.asarray(up.a_of_t) - np.asarray(down.a_of_t)).max() / 2
    return float(com / diff) if diff > 0 else math.inf


def steady_splitting(ro: Readout) -> float:
    from .cavity import steady_state_pointer

    return abs(
        steady_state_pointer(ro.rc, ro.plan, ro.sigma_up)
        - steady_state_pointer(ro.rc, ro.plan, ro.sigma_down)
    )


def single_trajectory(ro: Readout, sigma: float, t_grid) -> Trajectory:
    return analytic_trajectory(TrajectoryParams(ro.rc, ro.plan, sigma, ro.kappa, t_grid))
