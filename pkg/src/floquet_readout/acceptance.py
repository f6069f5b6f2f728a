"""Acceptance checks with pinned parameters.

Each ``criterion_*`` function runs one check and returns a
:class:`CriterionResult`; :func:`run_all` runs them in order. Oracle runs
shared between checks are cached for the lifetime of the process.
"""

from __future__ import annotations

import functools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .cavity import TrajectoryParams, analytic_trajectory, moment_rhs, snr
from .couplings import DrivePlan, purcell_rate, small_drive_couplings
from .floquet import (
    build_floquet_matrix,
    default_config,
    default_step,
    ramp_grid,
    replica_convergence,
)
from .lindblad import SimConfig, simulate
from .models import build_model
from .protocols import (
    analytic_pair,
    as_trajectory,
    com_to_differential,
    coupling_scan,
    longitudinal_readout,
    matched_dispersive,
    oracle_pair,
    readout_from,
    steady_splitting,
)

# Charge-qubit readout set-up in units of omega_q.
G_PERP = 1e-2
KAPPA = 2e-3
TRAJ_RATIOS = (1.1, 1.15, 1.5)
TRAJ_A_Q = 0.05
TRAJ_N_REP = 31
TRAJ_FOCK = 15

# Device drive points: omega_r/omega_q, A_q/omega_q, g_perp, kappa (model units),
# system levels kept in the oracle, oracle Fock dimension.
DEVICE_POINTS = {
    "flopping": (1.4, 0.2, 2e-2, 2e-3, 4, 8),
    "transmon": (0.77, 0.04, 2.7e-3, 5e-5, 4, 10),
    "fluxonium": (1.92, 0.6, 5e-3, 2.5e-4, 4, 10),
}


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float = 0.0
    values: dict = field(default_factory=dict)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] criterion {self.number}: {self.title} :: {self.detail} ({self.seconds:.1f} s)"


def _timed(number, title):
    def wrap(fn):
        @functools.wraps(fn)
        def run():
            t0 = time.perf_counter()
            passed, detail, values = fn()
            return CriterionResult(
                number, title, bool(passed), detail, time.perf_counter() - t0, values
            )

        run.number = number
        run.title = title
        return run

    return wrap


def _charge_qubit():
    return build_model("charge_qubit", omega_q=1.0)


@_timed(1, "small-drive dispersive shift matches the closed form")
def criterion_1():
    m = _charge_qubit()
    errs = {}
    for ratio in (0.5, 0.9, 1.1, 1.5):
        (pt,) = coupling_scan(m, ratio, [1e-4], G_PERP, KAPPA, n_rep=41)
        _, chi0 = small_drive_couplings(1.0, ratio, G_PERP, 1e-4)
        errs[ratio] = abs(pt.rc.chi - chi0) / abs(chi0) if pt.rc else math.inf
    worst = max(errs.values())
    detail = "max rel err %.2e (tol 1e-3)" % worst
    return worst <= 1e-3, detail, {"rel_err": errs}


@_timed(2, "|chi| at omega_r/omega_q = 1.1 is kappa/2 within 5%")
def criterion_2():
    m = _charge_qubit()
    (pt,) = coupling_scan(m, 1.1, [1e-4], G_PERP, KAPPA, n_rep=41)
    chi = abs(pt.rc.chi)
    rel = abs(chi - KAPPA / 2) / (KAPPA / 2)
    ok = rel <= 0.05 and abs(chi - 9.52e-4) <= 0.5e-6
    return ok, f"|chi| = {chi:.4e}, off kappa/2 by {100 * rel:.2f}% (tol 5%)", {"chi": chi}


@functools.lru_cache(maxsize=None)
def _trajectory_runs(ratio: float, t_max_kappa: float = 5.0, n_t: int = 501):
    m = _charge_qubit()
    ro = longitudinal_readout(m, ratio, TRAJ_A_Q, G_PERP, KAPPA, n_rep=TRAJ_N_REP)
    t = np.linspace(0.0, t_max_kappa / KAPPA, n_t)
    up, down = analytic_pair(ro, t)
    o_up, o_down = oracle_pair(ro, t, SimConfig(fock_dim=TRAJ_FOCK))
    return ro, up, down, o_up, o_down


@_timed(3, "analytic and master-equation trajectories agree within 5% of the splitting")
def criterion_3():
    devs = {}
    for ratio in TRAJ_RATIOS:
        ro, up, down, o_up, o_down = _trajectory_runs(ratio)
        split = steady_splitting(ro)
        d = max(
            np.abs(up.a_of_t - o_up.expect_a).max(), np.abs(down.a_of_t - o_down.expect_a).max()
        )
        devs[ratio] = d / split
    worst = max(devs.values())
    detail = ", ".join(f"{r}: {100 * v:.2f}%" for r, v in devs.items())
    return worst <= 0.05, f"max deviation / splitting {detail} (tol 5%)", {"deviation": devs}


MATCHED_RATIO = 1.5
DISPERSIVE_RATIO = 1.1


@_timed(4, "longitudinal SNR beats matched dispersive SNR at t = 0.5/kappa by 3.5-6.5x")
def criterion_4():
    m = _charge_qubit()
    t_star = 0.5 / KAPPA
    t = np.linspace(0.0, t_star, 401)
    ro = longitudinal_readout(m, MATCHED_RATIO, TRAJ_A_Q, G_PERP, KAPPA, n_rep=TRAJ_N_REP)
    disp = matched_dispersive(ro, DISPERSIVE_RATIO, G_PERP)

    def ratio(pair_long, pair_disp):
        s_long = snr(*pair_long, KAPPA).snr[-1]
        s_disp = snr(*pair_disp, KAPPA).snr[-1]
        return s_long / s_disp

    analytic = ratio(analytic_pair(ro, t), analytic_pair(disp, t))
    cfg = SimConfig(fock_dim=TRAJ_FOCK)
    o_long = [as_trajectory(r) for r in oracle_pair(ro, t, cfg)]
    o_disp = [as_trajectory(r) for r in oracle_pair(disp, t, cfg)]
    oracle = ratio(o_long, o_disp)
    ok = 3.5 <= analytic <= 6.5 and 3.5 <= oracle <= 6.5
    detail = f"analytic {analytic:.3f}, oracle {oracle:.3f} (band [3.5, 6.5])"
    return ok, detail, {"analytic": analytic, "oracle": oracle}


LZS_RATIO = 0.42
LZS_GRID = np.round(np.arange(0.0, 0.7001, 0.01), 10)


@_timed(5, "g_par and SNR collapse together near A_q = 0.5 at omega_r/omega_q = 0.42")
def criterion_5():
    m = _charge_qubit()
    pts = coupling_scan(m, LZS_RATIO, LZS_GRID, G_PERP, KAPPA)
    g = np.array([abs(p.rc.g_par) if p.rc else np.nan for p in pts])
    t = np.linspace(0.0, 0.5 / KAPPA, 401)
    s = np.full(len(pts), np.nan)
    for i, p in enumerate(pts):
        if p.rc is not None:
            s[i] = snr(*analytic_pair(readout_from(m, p), t), KAPPA).snr[-1]
    window = (LZS_GRID >= 0.40 - 1e-12) & (LZS_GRID <= 0.60 + 1e-12)
    idx = np.flatnonzero(window)
    i_g = idx[np.nanargmin(g[idx])]
    local = g[i_g] <= g[i_g - 1] and g[i_g] <= g[i_g + 1]
    g_ref = g[np.argmin(np.abs(LZS_GRID - 0.3))]
    depth = g_ref / g[i_g]
    # Local SNR minima; a second dip appears where the dressed polarization vanishes.
    dips = [i for i in idx if s[i] < s[i - 1] and s[i] < s[i + 1]]
    near = [i for i in dips if abs(i - i_g) <= 1]
    ok = local and depth >= 10 and bool(near)
    detail = (
        f"|g_par| min at A_q = {LZS_GRID[i_g]:.2f} ({depth:.1f}x below A_q = 0.3, need 10x); "
        f"SNR dips at {', '.join(f'{LZS_GRID[i]:.2f}' for i in dips)}"
    )
    return ok, detail, {"A_g": LZS_GRID[i_g], "A_snr_dips": LZS_GRID[dips], "depth": depth}


@_timed(6, "g_par, chi and Im<a_up> flip sign between omega_r/omega_q = 0.9 and 1.1")
def criterion_6():
    m = _charge_qubit()
    t = np.linspace(0.0, 5 / KAPPA, 501)
    out = {}
    for ratio in (0.9, 1.1):
        ro = longitudinal_readout(m, ratio, TRAJ_A_Q, G_PERP, KAPPA)
        up, _ = analytic_pair(ro, t)
        out[ratio] = (ro.rc.g_par, ro.rc.chi, float(np.imag(up.a_of_t[-1])))
    flips = [np.sign(a) == -np.sign(b) and a != 0 for a, b in zip(out[0.9], out[1.1])]
    detail = "g_par %.3e/%.3e, chi %.3e/%.3e, Im<a_up> %.3e/%.3e" % (
        out[0.9][0], out[1.1][0], out[0.9][1], out[1.1][1], out[0.9][2], out[1.1][2]
    )
    return all(flips), detail, {"values": out}


@_timed(7, "master-equation qubit decay matches the Purcell rate within 15%")
def criterion_7():
    m = _charge_qubit()
    omega_r = 1.1
    gamma = purcell_rate(KAPPA, G_PERP, m.omega_q, omega_r)
    period = 2 * math.pi / omega_r
    n_int = 200
    cycles = math.ceil(2 / gamma / period / n_int)
    t = np.arange(n_int + 1) * cycles * period
    plan = DrivePlan(0.0, 0.0, 0.0, omega_r)
    res = simulate(m, G_PERP, omega_r, KAPPA, plan, 1, t, SimConfig(fock_dim=6, method="map"))
    p1 = res.populations[:, 1]
    fit = -np.polyfit(t, np.log(p1), 1)[0]
    rel = (fit - gamma) / gamma
    detail = f"fitted {fit:.4e} vs {gamma:.4e} ({100 * rel:+.1f}%, tol 15%)"
    return abs(rel) <= 0.15, detail, {"fit": fit, "gamma": gamma}


@_timed(8, "device qubit frequencies")
def criterion_8():
    targets = {"transmon": (0.23, 0.015), "fluxonium": (0.15, 0.03), "flopping": (0.6, 0.02)}
    vals, oks = {}, []
    for dev, (ref, tol) in targets.items():
        w = build_model(dev).omega_q
        rel = (w - ref) / ref
        vals[dev] = w
        oks.append(abs(rel) <= tol)
    detail = ", ".join(
        f"{d} {vals[d]:.5f} ({'ok' if ok else 'out of band'}: {targets[d][0]} +- {100 * targets[d][1]:.1f}%)"
        for d, ok in zip(targets, oks)
    )
    return all(oks), detail, {"omega_q": vals}


def compensated_ratios(device: str, oracle: bool = True, t_max_kappa: float = 5.0):
    """Center-of-mass / differential pointer amplitude with the compensation tone.

    The analytic run uses the full device model; the oracle uses a truncated
    copy whose couplings (and therefore compensation tone) are recomputed.
    Also returns the uncompensated analytic ratio for reference.
    """
    ratio_r, ratio_a, g, kappa, levels, fock = DEVICE_POINTS[device]
    full = build_model(device)
    wq = full.omega_q
    t = np.linspace(0.0, t_max_kappa / kappa, 401)
    out = {}
    ro = longitudinal_readout(full, ratio_r * wq, ratio_a * wq, g, kappa, compensate=True)
    out["analytic"] = com_to_differential(*analytic_pair(ro, t))
    bare = longitudinal_readout(full, ratio_r * wq, ratio_a * wq, g, kappa, compensate=False)
    out["uncompensated"] = com_to_differential(*analytic_pair(bare, t))
    if oracle:
        small = full.truncated(levels) if levels < full.dim else full
        ro_s = longitudinal_readout(small, ratio_r * wq, ratio_a * wq, g, kappa, compensate=True)
        o_up, o_down = oracle_pair(ro_s, t, SimConfig(fock_dim=fock))
        out["oracle"] = com_to_differential(as_trajectory(o_up), as_trajectory(o_down))
        out["oracle_photons"] = float(max(o_up.photon_number.max(), o_down.photon_number.max()))
        out["oracle_top_fock"] = max(o_up.top_fock_population, o_down.top_fock_population)
    return out


@_timed(9, "compensation tone keeps the pointer center of mass below 5% of the splitting")
def criterion_9():
    vals, parts, ok = {}, [], True
    for dev in DEVICE_POINTS:
        r = compensated_ratios(dev)
        vals[dev] = r
        ok &= r["analytic"] < 0.05 and r["oracle"] < 0.05
        parts.append(
            f"{dev} analytic {r['analytic']:.3f} oracle {r['oracle']:.3f} "
            f"(uncompensated {r['uncompensated']:.2f})"
        )
    return ok, "; ".join(parts) + " (tol 0.05)", vals


def _ode_residual(ro, sigma, kappa, n=2001, t_max_kappa=5.0):
    """Max |da/dt - rhs| relative to max |rhs|, with a 4th-order central difference."""
    t = np.linspace(0.0, t_max_kappa / kappa, n)
    h = t[1]
    p = TrajectoryParams(ro.rc, ro.plan, sigma, kappa, t)
    tr = analytic_trajectory(p)
    a, b = tr.a_of_t, tr.a_sz_of_t
    s = sigma * np.exp(-ro.rc.gamma * t) + (np.exp(-ro.rc.gamma * t) - 1)
    da, db, _ = moment_rhs(ro.rc, ro.plan, kappa, a, b, s)
    fd_a = (a[:-4] - 8 * a[1:-3] + 8 * a[3:-1] - a[4:]) / (12 * h)
    fd_b = (b[:-4] - 8 * b[1:-3] + 8 * b[3:-1] - b[4:]) / (12 * h)
    scale = max(np.abs(da).max(), np.abs(db).max())
    return max(np.abs(fd_a - da[2:-2]).max(), np.abs(fd_b - db[2:-2]).max()) / scale


@_timed(10, "property suite")
def criterion_10():
    m = _charge_qubit()
    checks = {}

    # Oracle diagnostics on the trajectory runs.
    worst = {"trace": 0.0, "herm": 0.0, "min_eig": math.inf}
    for ratio in TRAJ_RATIOS:
        _, _, _, o_up, o_down = _trajectory_runs(ratio)
        for r in (o_up, o_down):
            worst["trace"] = max(worst["trace"], r.trace_error)
            worst["herm"] = max(worst["herm"], r.hermiticity_error)
            worst["min_eig"] = min(worst["min_eig"], r.min_eigenvalue)
    checks["oracle diagnostics"] = (
        worst["trace"] < 1e-8 and worst["herm"] < 1e-8 and worst["min_eig"] > -1e-8,
        "trace %.1e, hermiticity %.1e, min eig %.1e" % (worst["trace"], worst["herm"], worst["min_eig"]),
    )

    # Replica doubling along the scans used above.
    conv = {}
    cfg = default_config(m, LZS_RATIO)
    conv["charge_qubit"] = replica_convergence(m, ramp_grid(0.7, 0.01), cfg).max()
    for dev, (ratio_r, ratio_a, *_rest) in DEVICE_POINTS.items():
        d = build_model(dev)
        cfg = default_config(d, ratio_r * d.omega_q)

        grid = ramp_grid(ratio_a * d.omega_q, default_step(d, cfg.omega_d))
        conv[dev] = replica_convergence(d, grid, cfg, levels=(0, 1)).max()
    worst_conv = max(conv.values())
    checks["replica doubling"] = (
        worst_conv < 1e-6,
        "max rel change %.1e" % worst_conv,
    )

    # Finite-difference step halving.
    (a,) = coupling_scan(m, 1.1, [TRAJ_A_Q], G_PERP, KAPPA, fd_step=1e-4)
    (b,) = coupling_scan(m, 1.1, [TRAJ_A_Q], G_PERP, KAPPA, fd_step=5e-5)
    fd = max(
        abs(a.rc.g_par - b.rc.g_par) / abs(b.rc.g_par), abs(a.rc.chi - b.rc.chi) / abs(b.rc.chi)
    )
    checks["fd step halving"] = (fd < 1e-5, "max rel change %.1e" % fd)

    # Moment-equation residual of the closed-form trajectories.
    res = 0.0
    for ratio in TRAJ_RATIOS:
        ro = _trajectory_runs(ratio)[0]
        for sigma in (ro.sigma_up, ro.sigma_down):
            res = max(res, _ode_residual(ro, sigma, KAPPA))
    checks["ode residual"] = (res < 1e-8, "max rel residual %.1e" % res)

    # Quasi-energies even in the drive amplitude.
    even = 0.0
    for dev, omega in (("charge_qubit", 1.1), ("flopping", 0.8289), ("transmon", 0.1772)):
        d = build_model(dev) if dev != "transmon" else build_model(dev).truncated(6)
        c = default_config(d, omega, n_rep=15)
        for A in (0.03, 0.3):
            ep = np.linalg.eigvalsh(build_floquet_matrix(d, A, c))
            em = np.linalg.eigvalsh(build_floquet_matrix(d, -A, c))
            even = max(even, np.abs(ep - em).max())
    checks["evenness"] = (even < 1e-10, "max |eps(A) - eps(-A)| %.1e" % even)

    # SNR is non-decreasing.
    mono = True
    for ratio in TRAJ_RATIOS:
        _, up, down, o_up, o_down = _trajectory_runs(ratio)
        for curve in (snr(up, down, KAPPA), snr(as_trajectory(o_up), as_trajectory(o_down), KAPPA)):
            mono &= bool(np.all(np.diff(curve.snr) >= 0))
    checks["snr monotone"] = (mono, "ok" if mono else "decreasing segment found")

    ok = all(v[0] for v in checks.values())
    detail = "; ".join(f"{k}: {'ok' if v[0] else 'FAIL'} ({v[1]})" for k, v in checks.items())
    return ok, detail, {"checks": checks}


CRITERIA = [
    criterion_1,
    criterion_2,
    criterion_3,
    criterion_4,
    criterion_5,
    criterion_6,
    criterion_7,
    criterion_8,
    criterion_9,
    criterion_10,
]


def run_all(selected=None, echo=print):
    results = []
    for crit in CRITERIA:
        if selected and crit.number not in selected:
            continue
        res = crit()
        if echo:
            echo(res.line())
        results.append(res)
    return results
