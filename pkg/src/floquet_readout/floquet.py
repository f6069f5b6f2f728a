"""Extended-space (Sambe) Floquet spectra of a driven :class:`SystemModel`.

The drive ``A cos(omega_d t) Q`` couples neighbouring harmonic blocks. Blocks are
ordered with the highest harmonic label first, so the block ``p`` sits on the
diagonal as ``H_sys + p omega_d``, the block above the diagonal is ``(A*/2) Q``
and the one below is ``(A/2) Q``.

Quasi-energies are followed along a real amplitude grid starting at ``A = 0``,
where the zero-replica mode of level ``j`` is the unit vector on harmonic 0 and
system state ``j``. Each later grid point inherits labels by maximal eigenvector
overlap.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spl

from .models import SystemModel

DEFAULT_MAX_DIM = 20000
OVERLAP_THRESHOLD = 0.5
MAX_BISECTIONS = 6
EDGE_WEIGHT_TOL = 1e-6
DENSE_DIM = 600

DEFAULT_N_REP = {"charge_qubit": 41, "flopping": 31, "fluxonium": 31, "transmon": 51}


class FloquetError(RuntimeError):
    """Base class for Floquet engine failures."""


class DimensionError(FloquetError):
    pass


class TrackingError(FloquetError):
    def __init__(self, amplitude: float, overlap: float):
        super().__init__(
            f"ambiguous branch assignment at A={amplitude:.6g} (best overlap {overlap:.3f}); "
            "refine the amplitude grid"
        )
        self.amplitude = amplitude
        self.overlap = overlap


class ConvergenceError(FloquetError):
    pass


def max_dim_from_env() -> int:
    return int(os.environ.get("FLOQUET_READOUT_MAX_DIM", DEFAULT_MAX_DIM))


@dataclass(frozen=True)
class FloquetConfig:
    omega_d: float
    n_rep: int = 41
    convergence_tol: float = 1e-6
    max_dim: int = field(default_factory=max_dim_from_env)

    def __post_init__(self):
        if not self.omega_d > 0:
            raise ValueError(f"omega_d must be positive, got {self.omega_d}")
        if self.n_rep < 5:
            raise ValueError(f"n_rep must be >= 5, got {self.n_rep}")

    @property
    def n_blocks(self) -> int:
        return 2 * self.n_rep + 1

    def block_labels(self) -> np.ndarray:
        """Harmonic label of each block, top to bottom."""
        return np.arange(self.n_rep, -self.n_rep - 1, -1)

    def doubled(self) -> FloquetConfig:
        return FloquetConfig(self.omega_d, 2 * self.n_rep, self.convergence_tol, self.max_dim)


def default_config(model: SystemModel, omega_d: float, **kw) -> FloquetConfig:
    kw.setdefault("n_rep", DEFAULT_N_REP.get(model.label, 41))
    return FloquetConfig(omega_d, **kw)


def _check_dim(model: SystemModel, cfg: FloquetConfig) -> int:
    dim = model.dim * cfg.n_blocks
    if dim > cfg.max_dim:
        raise DimensionError(
            f"Floquet matrix dimension {dim} exceeds the cap {cfg.max_dim} "
            "(raise FLOQUET_READOUT_MAX_DIM to allow it)"
        )
    return dim


def diagonal(model: SystemModel, cfg: FloquetConfig) -> np.ndarray:
    p = cfg.block_labels()
    return (model.energies[None, :] + cfg.omega_d * p[:, None]).ravel()


def build_floquet_matrix(model: SystemModel, A: complex, cfg: FloquetConfig) -> np.ndarray:
    """Dense truncated Floquet Hamiltonian, dimension ``model.dim * (2 n_rep + 1)``."""
    m = model.dim
    dim = _check_dim(model, cfg)
    h = np.diag(diagonal(model, cfg)).astype(complex)
    up = 0.5 * np.conj(A) * model.charge_op
    down = 0.5 * A * model.charge_op
    for k in range(cfg.n_blocks - 1):
        h[k * m:(k + 1) * m, (k + 1) * m:(k + 2) * m] = up
        h[(k + 1) * m:(k + 2) * m, k * m:(k + 1) * m] = down
    assert h.shape == (dim, dim)
    return h


def sparse_floquet_matrix(model: SystemModel, A: complex, cfg: FloquetConfig) -> sp.csc_matrix:
    """Same matrix as :func:`build_floquet_matrix` in sparse form."""
    _check_dim(model, cfg)
    nb = cfg.n_blocks
    q = sp.csr_matrix(model.charge_op)
    h = sp.diags(diagonal(model, cfg)).astype(complex)
    up = sp.kron(sp.eye(nb, k=1), 0.5 * np.conj(A) * q)
    down = sp.kron(sp.eye(nb, k=-1), 0.5 * A * q)
    return (h + up + down).tocsc()


def _apply(model: SystemModel, A: float, cfg: FloquetConfig, vecs: np.ndarray) -> np.ndarray:
    """H_F @ vecs without forming the matrix; ``vecs`` has shape (dim, k)."""
    m, nb = model.dim, cfg.n_blocks
    v = vecs.reshape(nb, m, -1)
    out = diagonal(model, cfg).reshape(nb, m, 1) * v
    q = model.charge_op
    out[:-1] += 0.5 * np.conj(A) * np.einsum("ab,kbc->kac", q, v[1:])
    out[1:] += 0.5 * A * np.einsum("ab,kbc->kac", q, v[:-1])
    return out.reshape(vecs.shape)


def _rayleigh(model, A, cfg, v):
    # Rayleigh quotients of localized vectors carry rounding of order eps * |E_j|
    # instead of eps * n_rep * omega_d from the full-matrix solvers.
    hv = _apply(model, A, cfg, v)
    return np.real(np.einsum("ik,ik->k", v.conj(), hv))


def eigenpairs(model: SystemModel, A: float, cfg: FloquetConfig, window=None):
    """All eigenpairs of the dense truncated Floquet matrix, optionally inside ``window``."""
    h = build_floquet_matrix(model, A, cfg)
    if window is None:
        w, v = sla.eigh(h)
    else:
        w, v = sla.eigh(h, subset_by_value=window)
    if v.shape[1]:
        w = _rayleigh(model, A, cfg, v)
    return w, v


def nearest_eigenpairs(model: SystemModel, A: float, cfg: FloquetConfig, targets, k: int = 6):
    """Eigenpairs closest to each target energy via sparse shift-invert Lanczos.

    Results from different targets are merged; duplicates (same eigenvalue and
    parallel vectors) are dropped.
    """
    h = sparse_floquet_matrix(model, A, cfg)
    k = min(k, h.shape[0] - 2)
    ws, vs = [], []
    for t in targets:
        # A tiny offset keeps the shifted matrix nonsingular when a target is exact.
        w, v = spl.eigsh(h, k=k, sigma=t + 1e-9 * max(1.0, abs(t)), which="LM", tol=0)
        ws.append(w)
        vs.append(v)
    w = np.concatenate(ws)
    v = np.concatenate(vs, axis=1)
    keep = []
    for i in np.argsort(w):
        dup = any(
            abs(w[i] - w[j]) < 1e-9 * max(1.0, abs(w[i])) and abs(np.vdot(v[:, j], v[:, i])) > 0.5
            for j in keep
        )
        if not dup:
            keep.append(i)
    w, v = w[keep], v[:, keep]
    return _rayleigh(model, A, cfg, v), v


@dataclass
class FloquetSpectrum:
    """Branch-tracked zero-replica quasi-energies along a real amplitude grid.

    Arrays are indexed ``[branch, grid point]``; ``levels`` maps branches to
    system levels. ``modes[b, k]`` is the extended-space eigenvector.
    """

    model: SystemModel
    config: FloquetConfig
    levels: tuple
    amplitudes: np.ndarray
    quasi_energies: np.ndarray
    modes: np.ndarray
    replica_index: np.ndarray
    weight_p0: np.ndarray
    edge_weight: np.ndarray
    overlaps: np.ndarray

    def index_of(self, A: float, rtol: float = 1e-12) -> int:
        d = np.abs(self.amplitudes - A)
        k = int(np.argmin(d))
        if d[k] > rtol * max(1.0, abs(A)):
            raise KeyError(f"amplitude {A!r} not on the spectrum grid")
        return k

    def branch(self, level: int) -> int:
        return self.levels.index(level)

    def energy(self, level: int, A: float) -> float:
        return float(self.quasi_energies[self.branch(level), self.index_of(A)])

    def mode_at_t0(self, level: int, k: int) -> np.ndarray:
        """System-space Floquet mode at t = 0: the sum over harmonic blocks."""
        m = self.model.dim
        return self.modes[self.branch(level), k].reshape(-1, m).sum(axis=0)

    def crossing_flags(self, threshold: float = 0.9) -> np.ndarray:
        return self.overlaps < threshold


def _mode_stats(v: np.ndarray, m: int, cfg: FloquetConfig):
    w = (np.abs(v.reshape(cfg.n_blocks, m, -1)) ** 2).sum(axis=1)
    labels = cfg.block_labels()
    dominant = labels[np.argmax(w, axis=0)]
    p0 = w[cfg.n_rep]
    edge = w[:2].sum(axis=0) + w[-2:].sum(axis=0)
    return dominant, p0, edge


def _initial_vectors(model: SystemModel, cfg: FloquetConfig, levels) -> np.ndarray:
    dim = model.dim * cfg.n_blocks
    v = np.zeros((dim, len(levels)), dtype=complex)
    for b, j in enumerate(levels):
        v[cfg.n_rep * model.dim + j, b] = 1.0
    return v


def _assign(prev_vecs, prev_eps, model, A, cfg):
    """Greedy overlap assignment of the eigenpairs at ``A`` to the previous branches."""
    if model.dim * cfg.n_blocks <= DENSE_DIM:
        lo = prev_eps.min() - cfg.omega_d
        hi = prev_eps.max() + cfg.omega_d
        w, v = eigenpairs(model, A, cfg, window=(lo, hi))
    else:
        w, v = nearest_eigenpairs(model, A, cfg, prev_eps)
    ov = np.abs(prev_vecs.conj().T @ v)
    nb = prev_vecs.shape[1]
    chosen = np.full(nb, -1)
    best = np.zeros(nb)
    work = ov.copy()
    for _ in range(nb):
        b, c = np.unravel_index(np.argmax(work), work.shape)
        chosen[b], best[b] = c, ov[b, c]
        work[b, :] = -1.0
        work[:, c] = -1.0
    vecs = v[:, chosen]
    # Parallel transport: make each new vector's overlap with its predecessor real positive.
    phase = np.einsum("ib,ib->b", prev_vecs.conj(), vecs)
    vecs = vecs * (np.abs(phase) / np.where(phase == 0, 1, phase))[None, :]
    return w[chosen], vecs, best


def track_branches(
    model: SystemModel,
    A_grid,
    cfg: FloquetConfig,
    levels=None,
    max_bisections: int = MAX_BISECTIONS,
) -> FloquetSpectrum:
    """Follow the zero-replica quasi-energy of each level along ``A_grid``.

    ``A_grid`` must be ascending and start at 0. When the best overlap in a
    step drops below 0.5 the step is bisected (up to ``max_bisections``
    times) before a :class:`TrackingError` is raised.
    """
    grid = np.asarray(A_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or grid[0] != 0.0:
        raise ValueError("A_grid must be a 1-D grid starting at 0")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("A_grid must be strictly ascending")
    levels = tuple(range(model.dim)) if levels is None else tuple(levels)
    m = model.dim
    _check_dim(model, cfg)

    vecs = _initial_vectors(model, cfg, levels)
    eps = model.energies[list(levels)].astype(float)
    K, L = grid.size, len(levels)
    out_eps = np.empty((L, K))
    out_modes = np.empty((L, K, vecs.shape[0]), dtype=complex)
    out_ov = np.ones((L, K))
    out_eps[:, 0] = eps
    out_modes[:, 0] = vecs.T

    for k in range(1, K):
        eps, vecs, ov = _step(model, cfg, grid[k - 1], grid[k], vecs, eps, max_bisections)
        out_eps[:, k] = eps
        out_modes[:, k] = vecs.T
        out_ov[:, k] = ov

    dom, p0, edge = _mode_stats(out_modes.reshape(L * K, -1).T, m, cfg)
    return FloquetSpectrum(
        model=model,
        config=cfg,
        levels=levels,
        amplitudes=grid,
        quasi_energies=out_eps,
        modes=out_modes,
        replica_index=dom.reshape(L, K),
        weight_p0=p0.reshape(L, K),
        edge_weight=edge.reshape(L, K),
        overlaps=out_ov,
    )


def _step(model, cfg, a0, a1, vecs, eps, depth):
    new_eps, new_vecs, ov = _assign(vecs, eps, model, a1, cfg)
    if ov.min() >= OVERLAP_THRESHOLD:
        return new_eps, new_vecs, ov
    if depth == 0:
        raise TrackingError(a1, float(ov.min()))
    mid = 0.5 * (a0 + a1)
    e_mid, v_mid, ov_mid = _step(model, cfg, a0, mid, vecs, eps, depth - 1)
    e1, v1, ov1 = _step(model, cfg, mid, a1, v_mid, e_mid, depth - 1)
    return e1, v1, np.minimum(ov_mid, ov1)


def default_step(model: SystemModel, omega_d: float) -> float:
    """Amplitude step small enough for overlap continuation in typical use.

    Only the couplings out of the lowest levels set the scale; highly excited
    (nearly degenerate) states of large models are irrelevant at small drive.
    """
    low = min(3, model.dim)
    qn = np.abs(model.charge_op[:low]).sum(axis=1).max()
    return 0.05 * min(omega_d, model.omega_q) / qn


def ramp_grid(A: float, step: float) -> np.ndarray:
    """Uniform grid from 0 to ``A`` inclusive with spacing at most ``step``."""
    if A <= 0:
        return np.array([0.0])
    n = max(1, int(np.ceil(A / step)))
    return np.linspace(0.0, A, n + 1)


def spectrum_at(
    model: SystemModel,
    A: float,
    cfg: FloquetConfig,
    levels=None,
    step: float | None = None,
    check_convergence: bool = False,
) -> FloquetSpectrum:
    """Tracked quasi-energies and modes at a single real amplitude ``A``.

    The returned spectrum holds only the ``A`` grid point. With
    ``check_convergence`` the calculation is repeated with twice the replica
    count and :class:`ConvergenceError` is raised when any quasi-energy moves
    by more than ``cfg.convergence_tol`` (relative to ``max(|eps|, omega_q)``).
    """
    A = abs(float(A))
    step = default_step(model, cfg.omega_d) if step is None else step
    spec = track_branches(model, ramp_grid(A, step), cfg, levels)
    if check_convergence:
        ref = track_branches(model, ramp_grid(A, step), cfg.doubled(), levels)
        _compare_convergence(spec.quasi_energies[:, -1], ref.quasi_energies[:, -1], model, cfg)
    return _slice(spec, -1)


def _compare_convergence(eps, eps_ref, model, cfg):
    scale = np.maximum(np.abs(eps_ref), model.omega_q)
    rel = np.abs(eps - eps_ref) / scale
    if rel.max() > cfg.convergence_tol:
        raise ConvergenceError(
            f"quasi-energies moved by {rel.max():.3g} (relative) when doubling n_rep={cfg.n_rep}"
        )
    return rel


def replica_convergence(model, A_grid, cfg, levels=None) -> np.ndarray:
    """Relative change of every tracked quasi-energy when ``n_rep`` is doubled."""
    a = track_branches(model, A_grid, cfg, levels)
    b = track_branches(model, A_grid, cfg.doubled(), levels)
    scale = np.maximum(np.abs(b.quasi_energies), model.omega_q)
    return np.abs(a.quasi_energies - b.quasi_energies) / scale


def _slice(spec: FloquetSpectrum, k: int) -> FloquetSpectrum:
    sl = slice(k, k + 1) if k != -1 else slice(-1, None)
    return FloquetSpectrum(
        model=spec.model,
        config=spec.config,
        levels=spec.levels,
        amplitudes=spec.amplitudes[sl].copy(),
        quasi_energies=spec.quasi_energies[:, sl].copy(),
        modes=spec.modes[:, sl].copy(),
        replica_index=spec.replica_index[:, sl].copy(),
        weight_p0=spec.weight_p0[:, sl].copy(),
        edge_weight=spec.edge_weight[:, sl].copy(),
        overlaps=spec.overlaps[:, sl].copy(),
    )


def slope(spec: FloquetSpectrum, level: int, k: int) -> float:
    """Exact d(eps)/dA from the mode (Hellmann-Feynman), for real ``A``."""
    model, cfg = spec.model, spec.config
    m = model.dim
    v = spec.modes[spec.branch(level), k].reshape(cfg.n_blocks, m)
    q = model.charge_op
    # dH/dA couples neighbouring blocks with Q/2 in both directions.
    s = np.einsum("ka,ab,kb->", v[:-1].conj(), q, v[1:])
    return float(np.real(s))


def dressed_initial_polarization(
    model: SystemModel,
    A: float,
    cfg: FloquetConfig,
    bare_state: int,
    logical=(0, 1),
    step: float | None = None,
) -> float:
    """``<j| sigma~_z |j>`` for bare level ``j``, using the t = 0 Floquet modes."""
    spec = spectrum_at(model, A, cfg, levels=logical, step=step)
    u0 = spec.mode_at_t0(logical[0], 0)
    u1 = spec.mode_at_t0(logical[1], 0)
    return float(abs(u1[bare_state]) ** 2 - abs(u0[bare_state]) ** 2)


def spectrum_rows(spec: FloquetSpectrum):
    """Rows ``(A, level, quasi_energy, replica_weight_p0)`` in grid-major order."""
    for k, A in enumerate(spec.amplitudes):
        for b, j in enumerate(spec.levels):
            yield A, j, spec.quasi_energies[b, k], spec.weight_p0[b, k]
