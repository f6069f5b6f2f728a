import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from floquet_readout.floquet import (
    DimensionError,
    FloquetConfig,
    TrackingError,
    build_floquet_matrix,
    default_config,
    dressed_initial_polarization,
    eigenpairs,
    ramp_grid,
    replica_convergence,
    slope,
    spectrum_at,
    sparse_floquet_matrix,
    track_branches,
)
from floquet_readout.models import build_model


@pytest.fixture(scope="module")
def qubit():
    return build_model("charge_qubit")


def test_matrix_blocks_two_level(qubit):
    cfg = FloquetConfig(omega_d=0.7, n_rep=5)
    A = 0.3 - 0.2j
    F = build_floquet_matrix(qubit, A, cfg)
    # Explicit two-level form: blocks ordered by descending harmonic.
    n = cfg.n_blocks
    ref = np.zeros((2 * n, 2 * n), dtype=complex)
    sx = np.array([[0, 1], [1, 0]])
    for k, p in enumerate(range(5, -6, -1)):
        ref[2 * k : 2 * k + 2, 2 * k : 2 * k + 2] = np.diag([-0.5, 0.5]) + p * 0.7 * np.eye(2)
        if k + 1 < n:
            ref[2 * k : 2 * k + 2, 2 * k + 2 : 2 * k + 4] = np.conj(A) / 2 * sx
            ref[2 * k + 2 : 2 * k + 4, 2 * k : 2 * k + 2] = A / 2 * sx
    np.testing.assert_allclose(F, ref, atol=0)
    np.testing.assert_allclose(F, F.conj().T, atol=0)
    np.testing.assert_allclose(sparse_floquet_matrix(qubit, A, cfg).toarray(), F)


def test_zero_drive_spectrum_is_replicated_bare(qubit):
    cfg = FloquetConfig(omega_d=0.37, n_rep=6)
    ev = np.linalg.eigvalsh(build_floquet_matrix(qubit, 0.0, cfg))
    p = np.arange(-6, 7)
    ref = np.sort((qubit.energies[None, :] + 0.37 * p[:, None]).ravel())
    np.testing.assert_allclose(ev, ref, atol=1e-14)


def test_real_drive_gives_real_symmetric_matrix():
    m = build_model("flopping")
    F = build_floquet_matrix(m, 0.2, FloquetConfig(omega_d=0.8, n_rep=5))
    assert np.abs(F - F.T).max() < 1e-14


def test_dimension_guard(qubit):
    cfg = FloquetConfig(omega_d=1.0, n_rep=50, max_dim=100)
    with pytest.raises(DimensionError):
        build_floquet_matrix(qubit, 0.1, cfg)


def test_dimension_guard_env(qubit, monkeypatch):
    monkeypatch.setenv("FLOQUET_READOUT_MAX_DIM", "50")
    with pytest.raises(DimensionError):
        track_branches(qubit, [0.0, 0.1], FloquetConfig(omega_d=1.0, n_rep=30))


@pytest.mark.parametrize("n_rep, omega_d", [(4, 1.0), (10, 0.0), (10, -1.0)])
def test_config_validation(n_rep, omega_d):
    with pytest.raises(ValueError):
        FloquetConfig(omega_d=omega_d, n_rep=n_rep)


def test_replica_periodicity(qubit):
    cfg = FloquetConfig(omega_d=0.5, n_rep=41)
    ev = np.linalg.eigvalsh(build_floquet_matrix(qubit, 0.4, cfg))
    third = ev.size // 3
    central = ev[third : 2 * third]
    shifted = central + cfg.omega_d
    dist = np.abs(shifted[:, None] - ev[None, :]).min(axis=1)
    assert dist.max() < 1e-9


@settings(max_examples=15, deadline=None)
@given(st.floats(0.01, 1.5), st.sampled_from(["charge_qubit", "fluxonium"]))
def test_spectrum_even_in_amplitude(A, device):
    m = build_model(device) if device == "charge_qubit" else build_model(device).truncated(4)
    cfg = FloquetConfig(omega_d=0.77 * m.omega_q, n_rep=12)
    ep = np.linalg.eigvalsh(build_floquet_matrix(m, A * m.omega_q, cfg))
    em = np.linalg.eigvalsh(build_floquet_matrix(m, -A * m.omega_q, cfg))
    assert np.abs(ep - em).max() < 1e-10


@settings(max_examples=10, deadline=None)
@given(st.floats(0, 2 * np.pi))
def test_spectrum_depends_only_on_modulus(theta):
    qubit = build_model("charge_qubit")
    cfg = FloquetConfig(omega_d=0.6, n_rep=10)
    a = np.linalg.eigvalsh(build_floquet_matrix(qubit, 0.3, cfg))
    b = np.linalg.eigvalsh(build_floquet_matrix(qubit, 0.3 * np.exp(1j * theta), cfg))
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_complex_laplacian_identity(qubit):
    # 4 d^2/dA dA* equals eps'' + eps'/A on the real axis.
    cfg = FloquetConfig(omega_d=1.1, n_rep=20)
    A0, h = 0.2, 1e-3

    def eps(A):
        ev = np.linalg.eigvalsh(build_floquet_matrix(qubit, A, cfg))
        return ev[np.argmin(np.abs(ev - 0.5))]

    lap = (eps(A0 + h) + eps(A0 - h) + eps(A0 + 1j * h) + eps(A0 - 1j * h) - 4 * eps(A0)) / h**2
    d1 = (eps(A0 + h) - eps(A0 - h)) / (2 * h)
    d2 = (eps(A0 + h) - 2 * eps(A0) + eps(A0 - h)) / h**2
    assert lap == pytest.approx(d2 + d1 / A0, rel=1e-4)


def test_eigenpairs_orthonormal(qubit):
    cfg = FloquetConfig(omega_d=0.5, n_rep=15)
    ev, vecs = eigenpairs(qubit, 0.3, cfg)
    gram = vecs.conj().T @ vecs
    np.testing.assert_allclose(gram, np.eye(gram.shape[0]), atol=1e-10)


def test_zero_amplitude_branches_are_bare_levels():
    m = build_model("flopping")
    spec = track_branches(m, [0.0], default_config(m, 0.8))
    np.testing.assert_allclose(spec.quasi_energies[:, 0], m.energies, atol=1e-14)
    np.testing.assert_allclose(spec.weight_p0[:, 0], 1.0)


def test_perturbative_ac_stark_shift(qubit):
    # Second order: eps_+ = omega_q/2 + A^2 omega_q / (2 (omega_q^2 - omega_d^2)).
    cfg = FloquetConfig(omega_d=0.5, n_rep=41)
    spec = spectrum_at(qubit, 0.1, cfg, check_convergence=True)
    eps_plus = spec.quasi_energies[spec.branch(1), 0]
    assert eps_plus == pytest.approx(0.5 + 0.01 / (2 * 0.75), abs=1e-4)
    assert eps_plus == pytest.approx(0.50667, abs=1e-4)


def test_curvature_flips_across_resonance(qubit):
    grid = ramp_grid(0.05, 0.01)
    below = track_branches(qubit, grid, FloquetConfig(omega_d=0.9, n_rep=41))
    above = track_branches(qubit, grid, FloquetConfig(omega_d=1.1, n_rep=41))
    shift_below = below.quasi_energies[1, -1] - 0.5
    shift_above = above.quasi_energies[1, -1] - 0.5
    assert shift_below > 0 > shift_above


def test_modes_normalized_and_edge_free(qubit):
    spec = track_branches(qubit, ramp_grid(0.7, 0.01), FloquetConfig(omega_d=0.42, n_rep=41))
    norms = np.linalg.norm(spec.modes, axis=-1)
    np.testing.assert_allclose(norms, 1.0, atol=1e-10)
    assert spec.edge_weight.max() < 1e-6


def test_lzs_avoided_crossing(qubit):
    grid = ramp_grid(0.7, 0.01)
    spec = track_branches(qubit, grid, FloquetConfig(omega_d=0.42, n_rep=41))
    slopes = np.array([slope(spec, 1, k) for k in range(grid.size)])
    window = (grid > 0.4) & (grid < 0.6)
    # Slope passes through zero near A = 0.5.
    assert np.any(np.diff(np.sign(slopes[window])) != 0)
    k = np.argmin(np.abs(slopes[window]))
    assert abs(grid[window][k] - 0.5) < 0.03


def test_hellmann_feynman_slope_matches_fd(qubit):
    h = 1e-4
    spec = track_branches(qubit, [0.0, 0.1, 0.2 - h, 0.2, 0.2 + h], FloquetConfig(omega_d=1.1, n_rep=30))
    fd = (spec.quasi_energies[1, 4] - spec.quasi_energies[1, 2]) / (2 * h)
    assert slope(spec, 1, 3) == pytest.approx(fd, rel=1e-6)


def test_branch_continuity(qubit):
    grid = ramp_grid(0.7, 0.01)
    spec = track_branches(qubit, grid, FloquetConfig(omega_d=0.42, n_rep=41))
    # Hellmann-Feynman on the extended matrix: |d eps / dA| <= ||Q||_2.
    bound = np.linalg.norm(qubit.charge_op, 2)
    jumps = np.abs(np.diff(spec.quasi_energies, axis=1))
    assert np.all(jumps <= bound * np.diff(grid)[None, :] + 1e-12)


def test_flopping_same_sign_slopes():
    m = build_model("flopping")
    A = 0.2 * m.omega_q
    spec = spectrum_at(m, A, default_config(m, 1.4 * m.omega_q), levels=(0, 1))
    s0, s1 = slope(spec, 0, 0), slope(spec, 1, 0)
    assert np.sign(s0) == np.sign(s1) != 0


def test_tracking_error_on_coarse_grid(qubit):
    with pytest.raises(TrackingError) as info:
        track_branches(qubit, [0.0, 3.0], FloquetConfig(omega_d=0.42, n_rep=41), max_bisections=0)
    assert info.value.amplitude == pytest.approx(3.0)


def test_grid_validation(qubit):
    cfg = FloquetConfig(omega_d=1.0, n_rep=10)
    with pytest.raises(ValueError):
        track_branches(qubit, [0.1, 0.2], cfg)
    with pytest.raises(ValueError):
        track_branches(qubit, [0.0, 0.2, 0.1], cfg)


def test_replica_doubling_converged(qubit):
    rel = replica_convergence(qubit, ramp_grid(0.5, 0.02), FloquetConfig(omega_d=1.1, n_rep=41))
    assert rel.max() < 1e-6


def test_dressed_polarization(qubit):
    cfg = FloquetConfig(omega_d=1.1, n_rep=41)
    assert dressed_initial_polarization(qubit, 0.0, cfg, 1) == pytest.approx(1.0)
    assert dressed_initial_polarization(qubit, 0.0, cfg, 0) == pytest.approx(-1.0)
    up = dressed_initial_polarization(qubit, 0.05, cfg, 1)
    assert 0.5 < up < 1.0
