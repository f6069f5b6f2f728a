import csv
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from floquet_readout import cli
from floquet_readout.config import ConfigError, loads, parse_axis
from floquet_readout.couplings import stencil_points
from floquet_readout.models import build_model
from floquet_readout.protocols import (
    analytic_snr_at,
    com_to_differential,
    coupling_scan,
    dispersive_readout,
    longitudinal_readout,
    matched_dispersive,
    scan_grid,
    steady_splitting,
)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

BASE = """
[model]
device = charge_qubit

[resonator]
omega_r_over_omega_q = 1.1
g_perp_model_units = 1e-2
kappa_model_units = 2e-3
fock_dim = 6
"""


def read(path):
    with open(path) as fh:
        return list(csv.reader(fh))


# config ------------------------------------------------------------------------


def test_parse_axis_forms():
    assert parse_axis("0.3").tolist() == [0.3]
    assert parse_axis("0.9, 1.1").tolist() == [0.9, 1.1]
    assert np.allclose(parse_axis("linspace(0, 1, 5)"), [0, 0.25, 0.5, 0.75, 1])
    for bad in ("", "a, b", "linspace(0, 1, 0)"):
        with pytest.raises(ConfigError):
            parse_axis(bad)


def test_config_units():
    cfg = loads(BASE + "[drive]\nA_q_over_omega_q = 0.05\n[output]\nt_max_times_kappa = 2\nt_points = 3\n")
    assert cfg.g_perp == 1e-2 and cfg.kappa == 2e-3
    assert cfg.t_grid()[-1] == pytest.approx(2 / 2e-3)
    assert cfg.A_q_ratios.tolist() == [0.05]


def test_flopping_parameters_relative_to_omega_q():
    text = """
[model]
device = flopping
[resonator]
omega_r_over_omega_q = 1.4
g_perp_over_omega_q = 0.02
kappa_model_units = 2e-3
"""
    cfg = loads(text)
    assert cfg.g_perp == pytest.approx(0.02 * cfg.omega_q)


@pytest.mark.parametrize(
    "text, match",
    [
        ("[model]\ndevice = charge_qubit\n", "resonator"),
        (BASE.replace("charge_qubit", "squid"), "device"),
        (BASE + "[drive]\nA_q_over_omega_q = -0.1\n", "non-negative"),
        (BASE.replace("kappa_model_units = 2e-3", "kappa_model_units = 0"), "kappa"),
        (BASE.replace("fock_dim = 6", "fock_dim = 3"), "fock_dim"),
        (BASE.replace("g_perp_model_units = 1e-2", "g_perp_model_units = 1e-2\ng_perp_over_omega_q = 1e-2"), "only one"),
        (BASE.replace("device = charge_qubit", "device = charge_qubit\nE_C_over_E_J = 0.1"), "unknown key"),
        (BASE + "[drive]\ncompensation = maybe\n", "on/off"),
    ],
)
def test_config_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        loads(text)


def test_shipped_configs_load():
    files = sorted(CONFIGS.glob("*.ini"))
    assert len(files) >= 10
    from floquet_readout.config import load

    for f in files:
        cfg = load(f)
        assert cfg.figure


# protocols ---------------------------------------------------------------------


def test_scan_grid_contains_stencils_once():
    grid = scan_grid([0.05, 0.3], 1e-4, 0.01)
    for A in (0.05, 0.3):
        for p in stencil_points(A, 1e-4):
            assert np.sum(np.isclose(grid, p, rtol=0, atol=1e-12)) == 1
    assert grid[0] == 0 and np.all(np.diff(grid) > 0)


def test_scan_matches_single_point_readout():
    m = build_model("charge_qubit")
    pts = coupling_scan(m, 1.1, [0.05, 0.2], 1e-2, 2e-3)
    ro = longitudinal_readout(m, 1.1, 0.2, 1e-2, 2e-3)
    assert pts[1].rc.g_par == pytest.approx(ro.rc.g_par, rel=1e-8)
    assert pts[1].sigma_up == pytest.approx(ro.sigma_up)
    assert 0 < pts[0].sigma_up <= 1 and -1 <= pts[0].sigma_down < 0


def test_symmetric_qubit_center_of_mass():
    # a_pm = -+ i g / (+- i chi + kappa/2): steady center of mass over half-splitting is 2|chi|/kappa.
    m = build_model("charge_qubit")
    ro = longitudinal_readout(m, 1.1, 0.05, 1e-2, 2e-3, compensate=True, dressed=False)
    assert ro.plan.A_r == pytest.approx(0.0, abs=1e-12)
    from floquet_readout.cavity import steady_state_pointer

    up, down = (steady_state_pointer(ro.rc, ro.plan, s) for s in (1.0, -1.0))
    ratio = abs(up + down) / abs(up - down)
    assert ratio == pytest.approx(2 * abs(ro.rc.chi) / 2e-3, rel=1e-6)


def test_matched_dispersive_splitting():
    m = build_model("charge_qubit")
    ro = longitudinal_readout(m, 1.5, 0.05, 1e-2, 2e-3)
    disp = matched_dispersive(ro, 1.1, 1e-2)
    assert steady_splitting(disp) == pytest.approx(steady_splitting(ro), rel=1e-9)
    assert analytic_snr_at(disp, 0.5 / 2e-3) > 0


def test_dispersive_readout_plan():
    m = build_model("charge_qubit")
    ro = dispersive_readout(m, 1.1, 1e-2, 2e-3, 3e-3)
    assert ro.plan.A_q == 0 and ro.plan.phi == pytest.approx(1.5 * math.pi)
    assert ro.rc.chi == pytest.approx(2e-4 * 1 / (1 - 1.21))


# cli ---------------------------------------------------------------------------

SPECTRUM = BASE + """
[floquet]
n_rep = 15
A_over_omega_q = linspace(0, 0.2, 5)
static_reference = on
[output]
name = spec
"""

COUPLINGS = BASE.replace("1.1\n", "0.9, 1.0, 1.1\n") + """
[drive]
A_q_over_omega_q = 0, 0.05
[output]
name = cpl
"""

TRAJ = BASE + """
[drive]
A_q_over_omega_q = 0
[output]
name = tr
t_max_times_kappa = 0.5
t_points = 11
"""


def run(tmp_path, text, command, *extra):
    tmp_path.mkdir(parents=True, exist_ok=True)
    cfg = tmp_path / f"{command}.ini"
    cfg.write_text(text)
    out = tmp_path / "out"
    rc = cli.main([command, "--config", str(cfg), "--out", str(out), *extra])
    assert rc == 0
    return out


def test_spectrum_rows(tmp_path):
    out = run(tmp_path, SPECTRUM, "spectrum")
    rows = read(out / "spec_spectrum.csv")
    assert "static_energy" in rows[0]
    zero = [r for r in rows[1:] if float(r[rows[0].index("A")]) == 0.0]
    eps = sorted(float(r[rows[0].index("quasi_energy")]) for r in zero)
    assert eps == pytest.approx([-0.5, 0.5], abs=1e-9)


def test_couplings_reasons_and_nan(tmp_path):
    out = run(tmp_path, COUPLINGS, "couplings")
    rows = read(out / "cpl_couplings.csv")
    head, body = rows[0], rows[1:]
    assert len(body) == 6
    res = [r for r in body if float(r[head.index("omega_r_over_omega_q")]) == 1.0]
    assert all(r[head.index("g_par")] == "nan" and "Error" in r[head.index("reason")] for r in res)
    ok = [r for r in body if r not in res]
    assert all(r[head.index("reason")] == "" for r in ok)
    zero = [r for r in ok if float(r[head.index("A_q_over_omega_q")]) == 0.0]
    assert zero and all(float(r[head.index("g_par")]) == 0.0 for r in zero)


def test_trivial_trajectory_is_empty_cavity(tmp_path):
    out = run(tmp_path, TRAJ, "trajectory")
    files = sorted(out.glob("tr_trajectory_*.csv"))
    assert files
    rows = read(files[0])
    head = rows[0]
    body = rows[1:]
    assert len(body) == 11
    for col in ("re_a_up", "im_a_up", "re_a_down", "im_a_down"):
        assert all(float(r[head.index(col)]) == 0.0 for r in body)


def test_output_is_deterministic(tmp_path):
    a = run(tmp_path / "a", COUPLINGS, "couplings")
    b = run(tmp_path / "b", COUPLINGS, "couplings", "--jobs", "2")
    assert (a / "cpl_couplings.csv").read_bytes() == (b / "cpl_couplings.csv").read_bytes()


def test_fmt():
    assert cli.fmt(-0.0) == "0"
    assert cli.fmt(float("nan")) == "nan"
    assert cli.fmt(1 / 3) == "0.333333333333"
    assert cli.fmt(np.int64(3)) == "3"


def test_models_command(capsys):
    assert cli.main(["models"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("device,")
    assert {line.split(",")[0] for line in out[1:]} == {"charge_qubit", "flopping", "transmon", "fluxonium"}


def test_missing_config(capsys):
    assert cli.main(["spectrum"]) == 2


def test_bad_config_reports_error(tmp_path, capsys):
    p = tmp_path / "bad.ini"
    p.write_text("[model]\ndevice = nope\n[resonator]\n")
    assert cli.main(["spectrum", "--config", str(p)]) == 1
    assert "error" in capsys.readouterr().err


def test_validate_subset_exit_code():
    proc = subprocess.run(
        [sys.executable, "-m", "floquet_readout.cli", "validate", "--criteria", "1,2"],
        capture_output=True,
        text=True,
        timeout=600,
    )
    assert proc.returncode == 0, proc.stdout + proc.stderr
    assert proc.stdout.count("[PASS]") == 2
