import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from floquet_readout import cavity
from floquet_readout.cavity import (
    TrajectoryParams,
    analytic_trajectory,
    dispersive_trajectory,
    match_dispersive_amplitude,
    moment_rhs,
    snr,
    steady_state_pointer,
    trajectory_pair,
)
from floquet_readout.couplings import DrivePlan, ReadoutCouplings, small_drive_couplings

KAPPA = 2e-3
G = 1e-2


def couplings(ratio=1.1, A_q=0.05, gamma=0.0, g_bar=0.0, chi_bar=0.0):
    g, chi = small_drive_couplings(1.0, ratio, G, A_q)
    return ReadoutCouplings(g, g_bar, chi, chi_bar, 0.5, gamma, G, KAPPA, ratio, ratio, A_q)


def grid(t_max_kappa=5.0, n=2001):
    return np.linspace(0, t_max_kappa / KAPPA, n)


def _fd(y, t):
    """4th-order central difference on a uniform grid, interior points only."""
    h = t[1] - t[0]
    return (-y[4:] + 8 * y[3:-1] - 8 * y[1:-3] + y[:-4]) / (12 * h)


@settings(max_examples=10, deadline=None)
@given(
    st.floats(-1, 1),
    st.floats(0, 5e-5),
    st.floats(-1e-3, 1e-3),
    st.floats(-1e-3, 1e-3),
    st.floats(0, 2e-2),
    st.floats(0, 2 * np.pi),
)
def test_closed_form_solves_moment_system(s0, gamma, g_bar, chi_bar, A_r, phi):
    rc = couplings(gamma=gamma, g_bar=g_bar, chi_bar=chi_bar)
    plan = DrivePlan(0.05, A_r, phi, rc.omega_d)
    t = grid(3.0, 4001)
    tr = analytic_trajectory(TrajectoryParams(rc, plan, s0, KAPPA, t))
    s = -1 + (s0 + 1) * np.exp(-gamma * t)
    da, db, ds = moment_rhs(rc, plan, KAPPA, tr.a_of_t, tr.a_sz_of_t, s)
    scale = np.abs(da).max() + np.abs(_fd(tr.a_of_t, t)).max() + 1e-30
    assert np.abs(_fd(tr.a_of_t, t) - da[2:-2]).max() / scale < 1e-8
    assert np.abs(_fd(tr.a_sz_of_t, t) - db[2:-2]).max() / scale < 1e-8
    assert np.allclose(_fd(s, t), ds[2:-2], atol=1e-12 + 1e-6 * gamma)


def test_closed_form_matches_matrix_exponential():
    rc = couplings(gamma=2e-5, g_bar=3e-4, chi_bar=-1e-4)
    plan = DrivePlan(0.05, 1e-3, 0.3, rc.omega_d)
    p = TrajectoryParams(rc, plan, 0.4, KAPPA, grid(2.0, 41))
    a_cf, b_cf = cavity._closed_form(p)
    a_ex, b_ex = cavity._integrate_exact(p)
    assert np.allclose(a_cf, a_ex, atol=1e-10 * np.abs(a_ex).max())
    assert np.allclose(b_cf, b_ex, atol=1e-10 * np.abs(b_ex).max())


def test_degenerate_branch_uses_exact_propagation():
    rc = dataclasses.replace(couplings(), chi=0.0, gamma=0.0)
    plan = DrivePlan(0.05, 0.0, 0.0, rc.omega_d)
    t = grid(2.0, 101)
    tr = analytic_trajectory(TrajectoryParams(rc, plan, 1.0, KAPPA, t))
    # chi = 0: a driven damped oscillator, a = -i g (1 - e^{-kappa t/2}) / (kappa/2)
    expect = -1j * rc.g_par * -np.expm1(-KAPPA * t / 2) / (KAPPA / 2)
    assert np.allclose(tr.a_of_t, expect, atol=1e-12)


def test_steady_state_reached():
    rc = couplings()
    plan = DrivePlan(0.05, 0.0, 0.0, rc.omega_d)
    for s0 in (1.0, -1.0):
        tr = analytic_trajectory(TrajectoryParams(rc, plan, s0, KAPPA, grid(40.0, 401)))
        ss = steady_state_pointer(rc, plan, s0)
        assert abs(tr.a_of_t[-1] - ss) / abs(ss) < 1e-6


def test_snr_grows_with_steady_splitting():
    rc = couplings()
    plan = DrivePlan(0.05, 0.0, 0.0, rc.omega_d)
    t = grid(60.0, 6001)
    up, down = trajectory_pair(rc, plan, KAPPA, t)
    curve = snr(up, down, KAPPA)
    d = abs(steady_state_pointer(rc, plan, 1.0) - steady_state_pointer(rc, plan, -1.0))
    late = t > 40 / KAPPA
    slope = np.polyfit(t[late], curve.snr[late] ** 2, 1)[0]
    assert slope == pytest.approx(2 * KAPPA * d**2, rel=1e-6)


def test_snr_zero_for_identical_pointers():
    rc = couplings(A_q=0.0)
    plan = DrivePlan(0.0, 0.0, 0.0, rc.omega_d)
    up, down = trajectory_pair(rc, plan, KAPPA, grid())
    assert np.all(snr(up, down, KAPPA).snr == 0)


def test_snr_requires_common_grid():
    rc = couplings()
    plan = DrivePlan(0.05, 0.0, 0.0, rc.omega_d)
    up, _ = trajectory_pair(rc, plan, KAPPA, grid(n=11))
    _, down = trajectory_pair(rc, plan, KAPPA, grid(n=12))
    with pytest.raises(ValueError):
        snr(up, down, KAPPA)


def test_dispersive_short_time_limit():
    t = np.linspace(0, 1e-3 / KAPPA, 11)
    A_r, chi = 1e-2, -1e-3
    up = dispersive_trajectory(A_r, chi, KAPPA, 1.0, t)
    assert np.allclose(np.abs(up.a_of_t), A_r * t / 2, rtol=1e-3)


def test_dispersive_matches_general_form():
    chi = -9.5e-4
    A_r = 4e-3
    rc = dataclasses.replace(couplings(), g_par=0.0, chi=chi)
    plan = DrivePlan(0.0, A_r, 1.5 * np.pi, rc.omega_d)
    t = grid(5.0, 201)
    for s0 in (1.0, -1.0):
        gen = analytic_trajectory(TrajectoryParams(rc, plan, s0, KAPPA, t))
        disp = dispersive_trajectory(A_r, chi, KAPPA, s0, t)
        assert np.allclose(gen.a_of_t, disp.a_of_t, atol=1e-12 * np.abs(disp.a_of_t).max())


def test_detuning_sign_swaps_pointer():
    plan = lambda rc: DrivePlan(0.05, 0.0, 0.0, rc.omega_d)
    lo, hi = couplings(0.9), couplings(1.1)
    a_lo = steady_state_pointer(lo, plan(lo), 1.0)
    a_hi = steady_state_pointer(hi, plan(hi), 1.0)
    assert np.sign(a_lo.imag) == -np.sign(a_hi.imag)


def test_matched_dispersive_has_same_steady_splitting():
    rc = couplings(1.5)
    plan = DrivePlan(0.05, 0.0, 0.0, rc.omega_d)
    chi_d = small_drive_couplings(1.0, 1.1, G, 0.0)[1]
    A_r = match_dispersive_amplitude(rc, plan, chi_d, KAPPA)
    d_long = abs(steady_state_pointer(rc, plan, 1.0) - steady_state_pointer(rc, plan, -1.0))
    t = grid(60.0, 3001)
    up = dispersive_trajectory(A_r, chi_d, KAPPA, 1.0, t)
    down = dispersive_trajectory(A_r, chi_d, KAPPA, -1.0, t)
    assert abs(up.a_of_t[-1] - down.a_of_t[-1]) == pytest.approx(d_long, rel=1e-6)


@pytest.mark.parametrize(
    "kw",
    [
        dict(sigma_z0=1.5),
        dict(kappa=0.0),
        dict(t_grid=np.array([1.0, 2.0])),
        dict(t_grid=np.array([0.0, 2.0, 1.0])),
    ],
)
def test_trajectory_params_validation(kw):
    base = dict(rc=couplings(), plan=DrivePlan(0.05, 0, 0, 1.1), sigma_z0=1.0, kappa=KAPPA, t_grid=grid())
    base.update(kw)
    with pytest.raises(ValueError):
        TrajectoryParams(**base)
