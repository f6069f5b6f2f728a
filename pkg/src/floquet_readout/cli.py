"""Command-line front end: ``floquet-readout <command> --config FILE``.

Commands write CSV files into ``--out``. Floats are printed with 12
significant digits and rows follow the grid order of the configuration, so
identical inputs give byte-identical files regardless of ``--jobs``.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import config as config_mod
from .cavity import snr
from .couplings import NearResonanceError, small_drive_couplings, transmon_small_drive_reference
from .floquet import FloquetError, default_config, default_step, ramp_grid, track_branches
from .lindblad import SimConfig, SimulationError
from .models import BUILDERS, build_model
from .protocols import (
    analytic_pair,
    as_trajectory,
    com_to_differential,
    coupling_scan,
    matched_dispersive,
    oracle_pair,
    readout_from,
    steady_splitting,
)

log = logging.getLogger("floquet_readout")


def fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return f"{x + 0.0:.12g}"  # + 0.0 turns -0.0 into 0.0


def write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    log.info("wrote %s", path)
    return path


def _pool_map(fn, items, jobs: int):
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def _ratio_tag(r: float) -> str:
    return f"{r:.6g}".replace(".", "p")


# spectrum --------------------------------------------------------------------


def _spectrum_job(args):
    cfg, omega_d_ratio = args
    model = cfg.model()
    wq = model.omega_q
    A_ratios = cfg.spectrum_A_ratios if cfg.spectrum_A_ratios is not None else np.linspace(0, 1, 101)
    kw = {} if cfg.n_rep is None else {"n_rep": cfg.n_rep}
    fc = default_config(model, omega_d_ratio * wq, **kw)
    levels = tuple(range(model.dim)) if model.dim <= 4 else tuple(cfg.levels)
    grid = np.unique(np.concatenate([[0.0], np.abs(A_ratios) * wq]))
    fine = np.unique(np.concatenate([ramp_grid(grid[-1], default_step(model, fc.omega_d)), grid]))
    spec = track_branches(model, fine, fc, levels)
    rows = []
    for A in grid:
        k = spec.index_of(A)
        static = np.linalg.eigvalsh(model.hamiltonian() + A * model.charge_op)
        for b, j in enumerate(levels):
            row = [omega_d_ratio, A / wq, A, j, spec.quasi_energies[b, k], spec.weight_p0[b, k]]
            if cfg.static_reference:
                row.append(static[j])
            rows.append(row)
    return rows


def cmd_spectrum(cfg, out: Path, jobs=1, oracle="off"):
    ratios = cfg.omega_d_ratios if cfg.omega_d_ratios is not None else cfg.omega_r_ratios
    header = ["omega_d_over_omega_q", "A_over_omega_q", "A", "level", "quasi_energy", "weight_p0"]
    if cfg.static_reference:
        header.append("static_energy")
    chunks = _pool_map(_spectrum_job, [(cfg, r) for r in ratios], jobs)
    return [write_csv(out / f"{cfg.name}_spectrum.csv", header, [r for c in chunks for r in c])]


# couplings -------------------------------------------------------------------

COUPLING_HEADER = [
    "omega_r_over_omega_q",
    "omega_d_over_omega_q",
    "A_q_over_omega_q",
    "g_par",
    "g_bar",
    "chi",
    "chi_bar",
    "gamma",
    "epsilon",
    "sigma_up",
    "sigma_down",
    "g_par_ref",
    "chi_ref",
    "reason",
]


def _references(cfg, omega_d, A_q):
    """Small-drive closed forms for two-level and transmon models, else NaN."""
    model = cfg.model()
    try:
        if model.dim == 2:
            return small_drive_couplings(model.omega_q, omega_d, cfg.g_perp, A_q)
        if cfg.device == "transmon":
            E_C = model.params.get("E_C", cfg.model_params.get("E_C", 0.0077))
            n01 = abs(model.charge_op[0, 1])
            return transmon_small_drive_reference(E_C, n01, cfg.g_perp, A_q, model.omega_q, omega_d)
    except NearResonanceError:
        pass
    return math.nan, math.nan


def _couplings_job(args):
    cfg, r_ratio, d_ratio = args
    model = cfg.model()
    wq = model.omega_q
    omega_r = r_ratio * wq
    omega_d = omega_r if d_ratio is None else d_ratio * wq
    A_values = cfg.A_q_ratios * wq
    pts = coupling_scan(
        model, omega_r, A_values, cfg.g_perp, cfg.kappa, omega_d=omega_d,
        fd_step=cfg.fd_step, n_rep=cfg.n_rep, levels=cfg.levels,
    )
    rows = []
    for A, p in zip(A_values, pts):
        g_ref, chi_ref = _references(cfg, omega_d, A)
        head = [r_ratio, omega_d / wq, A / wq]
        if p.rc is None:
            rows.append(head + [math.nan] * 8 + [g_ref, chi_ref, p.reason])
            continue
        rc = p.rc
        rows.append(
            head
            + [rc.g_par, rc.g_bar, rc.chi, rc.chi_bar, rc.gamma, rc.epsilon, p.sigma_up, p.sigma_down]
            + [g_ref, chi_ref, ""]
        )
    return rows


def cmd_couplings(cfg, out: Path, jobs=1, oracle="off"):
    d_ratios = cfg.omega_d_ratios if cfg.omega_d_ratios is not None else [None]
    items = [(cfg, r, d) for r in cfg.omega_r_ratios for d in d_ratios]
    chunks = _pool_map(_couplings_job, items, jobs)
    return [write_csv(out / f"{cfg.name}_couplings.csv", COUPLING_HEADER, [r for c in chunks for r in c])]


# trajectory ------------------------------------------------------------------

TRAJ_HEADER = ["t", "re_a_up", "im_a_up", "re_a_down", "im_a_down", "snr"]
ORACLE_HEADER = [
    "oracle_re_a_up",
    "oracle_im_a_up",
    "oracle_re_a_down",
    "oracle_im_a_down",
    "oracle_snr",
    "trace_error",
    "nphoton_max",
]


def _readout(cfg, model, r_ratio, A_ratio):
    wq = cfg.omega_q
    (p,) = coupling_scan(
        model, r_ratio * wq, [A_ratio * wq], cfg.g_perp, cfg.kappa,
        fd_step=cfg.fd_step, n_rep=cfg.n_rep, levels=cfg.levels,
    )
    return readout_from(model, p, compensate=cfg.compensation)


def _oracle_columns(cfg, ro, t):
    model = cfg.oracle_model()
    if model is not cfg.model():
        ro = _readout(cfg, model, ro.rc.omega_r / cfg.omega_q, ro.plan.A_q / cfg.omega_q)
    up, down = oracle_pair(ro, t, SimConfig(fock_dim=cfg.fock_dim))
    s = snr(as_trajectory(up), as_trajectory(down), cfg.kappa).snr
    n_max = np.maximum(up.photon_number, down.photon_number)
    tr = max(up.trace_error, down.trace_error)
    cols = [up.expect_a.real, up.expect_a.imag, down.expect_a.real, down.expect_a.imag, s]
    return up, down, cols, tr, n_max


def _trajectory_job(args):
    cfg, r_ratio, with_oracle = args
    t = cfg.t_grid()
    ro = _readout(cfg, cfg.model(), r_ratio, float(cfg.A_q_ratios[0]))
    up, down = analytic_pair(ro, t)
    s = snr(up, down, cfg.kappa).snr
    cols = [t, up.a_of_t.real, up.a_of_t.imag, down.a_of_t.real, down.a_of_t.imag, s]
    split = steady_splitting(ro)
    summary = [
        r_ratio, float(cfg.A_q_ratios[0]), ro.rc.g_par, ro.rc.g_bar, ro.rc.chi, ro.rc.chi_bar,
        ro.plan.A_r, ro.plan.omega_d, split, com_to_differential(up, down),
    ]
    if with_oracle:
        try:
            o_up, o_down, ocols, tr, n_max = _oracle_columns(cfg, ro, t)
        except SimulationError as exc:
            log.warning("oracle failed at omega_r/omega_q=%g: %s", r_ratio, exc)
            ocols = [np.full(t.size, np.nan)] * 5
            tr, n_max = math.nan, np.full(t.size, np.nan)
            dev = com = math.nan
        else:
            dev = max(
                np.abs(up.a_of_t - o_up.expect_a).max(), np.abs(down.a_of_t - o_down.expect_a).max()
            ) / split
            com = com_to_differential(as_trajectory(o_up), as_trajectory(o_down))
        cols += ocols + [np.full(t.size, tr), n_max]
        summary += [dev, com]
    else:
        summary += [math.nan, math.nan]
    return list(zip(*cols)), summary


def cmd_trajectory(cfg, out: Path, jobs=1, oracle="off"):
    ratios = list(cfg.omega_r_ratios)
    want = [
        oracle == "on" or (oracle == "subset" and i in cfg.oracle_subset) for i in range(len(ratios))
    ]
    results = _pool_map(_trajectory_job, [(cfg, r, w) for r, w in zip(ratios, want)], jobs)
    paths = []
    for r, w, (rows, _) in zip(ratios, want, results):
        header = TRAJ_HEADER + (ORACLE_HEADER if w else [])
        paths.append(write_csv(out / f"{cfg.name}_trajectory_{_ratio_tag(r)}.csv", header, rows))
    summary_header = [
        "omega_r_over_omega_q", "A_q_over_omega_q", "g_par", "g_bar", "chi", "chi_bar",
        "A_r", "omega_d", "steady_splitting", "com_over_diff",
        "oracle_max_dev_over_splitting", "oracle_com_over_diff",
    ]
    paths.append(write_csv(out / f"{cfg.name}_trajectory_summary.csv", summary_header, [s for _, s in results]))
    if cfg.dispersive:
        paths.append(_dispersive_file(cfg, out))
    return paths


def _dispersive_file(cfg, out):
    match = cfg.dispersive_match_ratio
    if match is None:
        match = float(cfg.omega_r_ratios[-1])
    ro = _readout(cfg, cfg.model(), match, float(cfg.A_q_ratios[0]))
    disp = matched_dispersive(ro, cfg.dispersive_ratio * cfg.omega_q, cfg.g_perp)
    t = cfg.t_grid()
    up, down = analytic_pair(disp, t)
    s = snr(up, down, cfg.kappa).snr
    rows = zip(t, up.a_of_t.real, up.a_of_t.imag, down.a_of_t.real, down.a_of_t.imag, s)
    return write_csv(out / f"{cfg.name}_dispersive.csv", TRAJ_HEADER, rows)


# snr -------------------------------------------------------------------------

SNR_HEADER = [
    "protocol",
    "omega_r_over_omega_q",
    "A_q_over_omega_q",
    "A_r",
    "snr_analytic",
    "snr_oracle",
    "reason",
]


def _snr_job(args):
    cfg, r_ratio, oracle_idx = args
    model = cfg.model()
    wq = model.omega_q
    t_star = cfg.t_star_kappa / cfg.kappa
    t = np.linspace(0.0, t_star, 401)
    pts = coupling_scan(
        model, r_ratio * wq, cfg.A_q_ratios * wq, cfg.g_perp, cfg.kappa,
        fd_step=cfg.fd_step, n_rep=cfg.n_rep, levels=cfg.levels,
    )
    rows = []
    for i, (a_ratio, p) in enumerate(zip(cfg.A_q_ratios, pts)):
        if p.rc is None:
            rows.append(["longitudinal", r_ratio, a_ratio, math.nan, math.nan, math.nan, p.reason])
            continue
        ro = readout_from(model, p, compensate=cfg.compensation)
        s_an = snr(*analytic_pair(ro, t), cfg.kappa).snr[-1]
        s_or = math.nan
        if i in oracle_idx:
            try:
                _, _, ocols, _, _ = _oracle_columns(cfg, ro, t)
                s_or = ocols[4][-1]
            except SimulationError as exc:
                log.warning("oracle failed: %s", exc)
        rows.append(["longitudinal", r_ratio, a_ratio, ro.plan.A_r, s_an, s_or, ""])
    return rows


def cmd_snr(cfg, out: Path, jobs=1, oracle="off"):
    n_a = len(cfg.A_q_ratios)
    items = []
    for j, r in enumerate(cfg.omega_r_ratios):
        if oracle == "on":
            idx = set(range(n_a))
        elif oracle == "subset":
            # Subset indices count over the flattened (omega_r, A_q) grid.
            idx = {k - j * n_a for k in cfg.oracle_subset if j * n_a <= k < (j + 1) * n_a}
        else:
            idx = set()
        items.append((cfg, r, idx))
    chunks = _pool_map(_snr_job, items, jobs)
    rows = [r for c in chunks for r in c]
    if cfg.dispersive:
        match = cfg.dispersive_match_ratio or float(cfg.omega_r_ratios[-1])
        ro = _readout(cfg, cfg.model(), match, float(cfg.A_q_ratios[-1]))
        disp = matched_dispersive(ro, cfg.dispersive_ratio * cfg.omega_q, cfg.g_perp)
        t = np.linspace(0.0, cfg.t_star_kappa / cfg.kappa, 401)
        s = snr(*analytic_pair(disp, t), cfg.kappa).snr[-1]
        rows.append(["dispersive", cfg.dispersive_ratio, 0.0, disp.plan.A_r, s, math.nan, ""])
    return [write_csv(out / f"{cfg.name}_snr.csv", SNR_HEADER, rows)]


# models / validate -----------------------------------------------------------


def cmd_models(out: Path | None = None):
    rows = []
    for name in BUILDERS:
        m = build_model(name)
        e = m.energies - m.energies[0]
        rows.append([name, m.dim, m.omega_q, e[2] if m.dim > 2 else math.nan])
    header = ["device", "levels", "omega_q", "E2_minus_E0"]
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    if out is not None:
        write_csv(out / "models.csv", header, rows)
    return rows


def cmd_validate(selected=None) -> int:
    from .acceptance import run_all

    results = run_all(selected, echo=lambda s: print(s, flush=True))
    n_pass = sum(r.passed for r in results)
    print(f"{n_pass}/{len(results)} criteria passed")
    return 0 if n_pass == len(results) else 1


COMMANDS = {
    "spectrum": cmd_spectrum,
    "couplings": cmd_couplings,
    "trajectory": cmd_trajectory,
    "snr": cmd_snr,
}


def build_parser():
    p = argparse.ArgumentParser(prog="floquet-readout", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=[*COMMANDS, "validate", "models"])
    p.add_argument("--config", type=Path, help="run configuration (INI)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for grid points")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--oracle", choices=["off", "on", "subset"], default="off")
    p.add_argument("--criteria", type=str, default="", help="validate: comma list of criteria")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "validate":
        sel = {int(c) for c in args.criteria.split(",") if c.strip()} or None
        return cmd_validate(sel)
    if args.command == "models":
        cmd_models()
        return 0
    if args.config is None:
        print(f"{args.command} needs --config", file=sys.stderr)
        return 2
    try:
        cfg = config_mod.load(args.config)
        paths = COMMANDS[args.command](cfg, args.out, jobs=args.jobs, oracle=args.oracle)
    except (config_mod.ConfigError, FloquetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
