"""Master-equation reference for a driven system coupled to a lossy cavity.

The density matrix of system (``m`` levels) times cavity (``fock_dim`` Fock
states) is propagated with fixed-step RK4 under

    d(rho)/dt = -i [H(t), rho] + kappa (a rho a^dag - {a^dag a, rho} / 2).

In the frame rotating at ``omega_d`` (default)

    H(t) = H_sys + A_q cos(omega_d t) Q + g (a e^{-i omega_d t} + h.c.) Q
           + (omega_r - omega_d) a^dag a + (A_r / 2)(a e^{i phi} + a^dag e^{-i phi}).

In the lab frame the cavity term is ``omega_r a^dag a`` and the cavity drive
is ``A_r cos(omega_d t + phi)(a + a^dag)``; ``<a>`` is reported rotated into
the ``omega_d`` frame either way.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

from .couplings import DrivePlan
from .models import SystemModel

TRACE_TOL = 1e-8
PHOTON_GUARD = 0.8
# A saturated truncated cavity keeps <n> near 0.6 fock_dim, so the photon-number
# guard alone misses it; the top Fock level is watched too.
TOP_FOCK_GUARD = 1e-2


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    """Integrator settings.

    Attributes:
        fock_dim: Cavity Fock-space truncation.
        dt: Maximum RK4 step. ``None`` picks ``(2 pi / omega_max) / steps_per_cycle``.
        frame: ``"rotating"`` or ``"lab"``.
        drop_counter_rotating_cavity_drive: Keep only the co-rotating part of the
            cavity drive (in either frame).
        record_stride: Keep every ``record_stride``-th point of ``t_grid``.
        steps_per_cycle: Steps per period of the fastest frequency in the frame.
        psd_checks: Number of times at which the minimum eigenvalue of rho is checked.
        method: ``"step"`` integrates every interval directly; ``"map"`` builds the
            RK4 map of one record interval on a basis of matrices and reuses it
            (valid when intervals are whole drive periods); ``"auto"`` uses the
            map for small Hilbert spaces when it applies.
    """

    fock_dim: int = 30
    dt: float | None = None
    frame: str = "rotating"
    drop_counter_rotating_cavity_drive: bool = True
    record_stride: int = 1
    steps_per_cycle: int = 50
    psd_checks: int = 5
    method: str = "auto"

    def __post_init__(self):
        if self.fock_dim < 6:
            raise ValueError("fock_dim must be >= 6")
        if self.frame not in ("rotating", "lab"):
            raise ValueError(f"unknown frame {self.frame!r}")
        if self.steps_per_cycle < 50:
            raise ValueError("steps_per_cycle must be >= 50")
        if self.method not in ("auto", "step", "map"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")


@dataclass
class SimResult:
    times: np.ndarray
    expect_a: np.ndarray
    populations: np.ndarray
    photon_number: np.ndarray
    trace_error: float
    hermiticity_error: float
    min_eigenvalue: float
    dt: float
    initial: int
    top_fock_population: float = 0.0

    @property
    def expect_sigma_z(self) -> np.ndarray:
        """``P_1 - P_0`` of the two lowest system levels."""
        return self.populations[:, 1] - self.populations[:, 0]


@nb.njit(cache=True)
def _coefficients(t, w, A_q, g, D0, lab, counter):
    """Time-dependent coefficients ``(c, e, d)`` of ``Q``, ``Q a`` and ``a`` in the Hamiltonian.

    The Hermitian partners (``conj(e) Q a^dag``, ``conj(d) a^dag``) are implied.
    """
    c = A_q * np.cos(w * t)
    if lab:
        e = complex(g)
        d = D0 * np.exp(1j * w * t)
        if counter:
            d += np.conj(D0) * np.exp(-1j * w * t)
    else:
        e = g * np.exp(-1j * w * t)
        d = D0
        if counter:
            d += np.conj(D0) * np.exp(-2j * w * t)
    return c, e, d


@nb.njit(cache=True, fastmath=True)
def _lindblad_rhs(rho, hd, Q, c, e, d, kappa, sq, out, Y):
    """Lindblad right-hand side for one Hermitian ``rho`` viewed as ``(m, F, N)``.

    Uses the product structure of the Hamiltonian: ``Q`` acts on the system
    index only and the cavity operators are index shifts.
    """
    m, F, N = rho.shape
    ec = np.conj(e)
    dc = np.conj(d)
    for i in range(m):
        for f in range(F):
            for k in range(N):
                Y[i, f, k] = 0
            for j in range(m):
                q = Q[i, j]
                if q != 0:
                    for k in range(N):
                        Y[i, f, k] += q * rho[j, f, k]
    # out <- H_eff rho
    for i in range(m):
        for f in range(F):
            h = hd[i, f]
            for k in range(N):
                out[i, f, k] = h * rho[i, f, k] + c * Y[i, f, k]
            if f + 1 < F:
                a1 = e * sq[f]
                a2 = d * sq[f]
                for k in range(N):
                    out[i, f, k] += a1 * Y[i, f + 1, k] + a2 * rho[i, f + 1, k]
            if f > 0:
                a1 = ec * sq[f - 1]
                a2 = dc * sq[f - 1]
                for k in range(N):
                    out[i, f, k] += a1 * Y[i, f - 1, k] + a2 * rho[i, f - 1, k]
    X = out.reshape(N, N)
    R = rho.reshape(N, N)
    Z = Y.reshape(N, N)
    for r in range(N):
        for s in range(N):
            Z[r, s] = -1j * X[r, s] + 1j * np.conj(X[s, r])
    for i in range(m):
        for f in range(F - 1):
            r = i * F + f
            for j in range(m):
                for g in range(F - 1):
                    s = j * F + g
                    Z[r, s] += kappa * sq[f] * sq[g] * R[r + 1, s + 1]
    X[:, :] = Z


@nb.njit(cache=True, fastmath=True)
def _axpy(out, x, a, y):
    """``out = x + a * y`` elementwise on flat views."""
    o = out.ravel()
    xv = x.ravel()
    yv = y.ravel()
    for k in range(o.size):
        o[k] = xv[k] + a * yv[k]


@nb.njit(cache=True)
def _rk4_run(rho, t0, dt, n, hd, Q, sq, kappa, w, A_q, g, D0, lab, counter):
    """Advance a batch ``rho`` of shape ``(B, m, F, N)`` by ``n`` RK4 steps in place."""
    B = rho.shape[0]
    shp = rho.shape[1:]
    k = np.empty(shp, dtype=np.complex128)
    acc = np.empty(shp, dtype=np.complex128)
    tmp = np.empty(shp, dtype=np.complex128)
    Y = np.empty(shp, dtype=np.complex128)
    for step in range(n):
        t = t0 + step * dt
        c1, e1, d1 = _coefficients(t, w, A_q, g, D0, lab, counter)
        c2, e2, d2 = _coefficients(t + dt / 2, w, A_q, g, D0, lab, counter)
        c4, e4, d4 = _coefficients(t + dt, w, A_q, g, D0, lab, counter)
        for b in range(B):
            r = rho[b]
            _lindblad_rhs(r, hd, Q, c1, e1, d1, kappa, sq, k, Y)
            _axpy(acc, r, dt / 6, k)
            _axpy(tmp, r, dt / 2, k)
            _lindblad_rhs(tmp, hd, Q, c2, e2, d2, kappa, sq, k, Y)
            _axpy(acc, acc, dt / 3, k)
            _axpy(tmp, r, dt / 2, k)
            _lindblad_rhs(tmp, hd, Q, c2, e2, d2, kappa, sq, k, Y)
            _axpy(acc, acc, dt / 3, k)
            _axpy(tmp, r, dt, k)
            _lindblad_rhs(tmp, hd, Q, c4, e4, d4, kappa, sq, k, Y)
            _axpy(r, acc, dt / 6, k)


class _Operators:
    """Operators on system (x) cavity, system index outermost."""

    def __init__(self, model, g_perp, omega_r, kappa, plan, cfg):
        m, F = model.dim, cfg.fock_dim
        self.m, self.F, self.N = m, F, m * F
        q = np.array(model.charge_op)
        # Matrix elements at rounding level (e.g. parity-forbidden ones) are dropped.
        q[np.abs(q) < 1e-14 * np.abs(q).max()] = 0
        self.Q = q
        self.g = float(g_perp)
        self.omega_d = plan.omega_d
        self.kappa = kappa
        self.A_q = plan.A_q
        self.D0 = complex(0.5 * plan.A_r * np.exp(1j * plan.phi))
        self.lab = cfg.frame == "lab"
        self.counter = not cfg.drop_counter_rotating_cavity_drive
        w_cav = omega_r if self.lab else omega_r - plan.omega_d
        f = np.arange(F)
        self.hd = (model.energies[:, None] + (w_cav - 0.5j * kappa) * f[None, :]).astype(complex)
        self.sqrt_n = np.sqrt(np.arange(1, F, dtype=float))
        a = np.diag(self.sqrt_n, k=1).astype(complex)
        Is, If = np.eye(m), np.eye(F)
        self.a = np.kron(Is, a)
        self.n = np.kron(Is, np.diag(f.astype(float))).astype(complex)
        self._QI = np.kron(q, If)
        self._Qa = np.kron(q, a)
        self._A = np.kron(Is, a)

    def coefficients(self, t):
        return _coefficients(t, self.omega_d, self.A_q, self.g, self.D0, self.lab, self.counter)

    def h_eff(self, t):
        """Dense non-Hermitian ``H - i kappa/2 a^dag a`` at time ``t``."""
        c, e, d = self.coefficients(t)
        qa = e * self._Qa
        da = d * self._A
        return np.diag(self.hd.ravel()) + c * self._QI + qa + qa.conj().T + da + da.conj().T

    def jump(self, rho):
        """``a rho a^dag`` for a batch of density matrices, by index shifts."""
        B = rho.shape[0]
        m, F = self.m, self.F
        r = rho.reshape(B, m, F, m, F)
        out = np.zeros_like(r)
        w = self.sqrt_n[:, None] * self.sqrt_n[None, :]
        out[:, :, :-1, :, :-1] = r[:, :, 1:, :, 1:] * w[None, None, :, None, :]
        return out.reshape(rho.shape)

    def rhs_general(self, t, rho):
        """Dense right-hand side valid for any (not necessarily Hermitian) ``rho``."""
        h = self.h_eff(t)
        return -1j * (h @ rho - rho @ h.conj().T) + self.kappa * self.jump(rho)

    def advance(self, rho, t0, dt, n):
        """``n`` compiled RK4 steps on a Hermitian batch ``rho`` of shape ``(B, N, N)``."""
        r = np.ascontiguousarray(rho).reshape(rho.shape[0], self.m, self.F, self.N)
        _rk4_run(
            r, t0, dt, n, self.hd, self.Q, self.sqrt_n, self.kappa, self.omega_d,
            self.A_q, self.g, self.D0, self.lab, self.counter,
        )
        return r.reshape(rho.shape)


def max_frequency(model: SystemModel, omega_r: float, plan: DrivePlan, cfg: SimConfig) -> float:
    spread = float(model.energies[-1] - model.energies[0])
    if cfg.frame == "rotating":
        return spread + plan.omega_d + abs(omega_r - plan.omega_d)
    return spread + plan.omega_d + omega_r * (cfg.fock_dim - 1)


def auto_dt(model, omega_r, plan, cfg) -> float:
    cap = 2 * np.pi / max_frequency(model, omega_r, plan, cfg) / cfg.steps_per_cycle
    return cap if cfg.dt is None else min(cfg.dt, cap)


def _rk4(f, t, rho, dt):
    k1 = f(t, rho)
    k2 = f(t + dt / 2, rho + (dt / 2) * k1)
    k3 = f(t + dt / 2, rho + (dt / 2) * k2)
    k4 = f(t + dt, rho + dt * k3)
    return rho + (dt / 6) * (k1 + 2 * k2 + 2 * k3 + k4)


MAP_MAX_DIM = 20


def _interval_map(ops, span, n):
    """RK4 map over ``[0, span]`` in ``n`` steps, acting on row-major ``vec(rho)``.

    Repeated over whole drive periods, this reproduces stepwise RK4 with the
    same step up to rounding.
    """
    N = ops.N
    basis = np.eye(N * N, dtype=complex).reshape(N * N, N, N)
    dt = span / n
    for i in range(n):
        basis = _rk4(ops.rhs_general, i * dt, basis, dt)
    return basis.reshape(N * N, N * N).T


def _map_applies(t_grid, period, cfg, N):
    if cfg.method == "step" or t_grid.size < 3:
        return False
    spans = np.diff(t_grid)
    uniform = np.allclose(spans, spans[0], rtol=1e-12, atol=0)
    cycles = spans[0] / period
    whole = abs(cycles - round(cycles)) < 1e-9 * max(1.0, cycles) and round(cycles) >= 1
    if cfg.method == "map":
        if not (uniform and whole):
            raise ValueError("method='map' needs a uniform t_grid of whole drive periods")
        return True
    return uniform and whole and N <= MAP_MAX_DIM


def simulate(
    model: SystemModel,
    g_perp: float,
    omega_r: float,
    kappa: float,
    plan: DrivePlan,
    initial,
    t_grid,
    cfg: SimConfig | None = None,
):
    """Evolve ``|j> (x) |0>`` for each requested bare level ``j``.

    Each interval of ``t_grid`` is split into equal RK4 steps no longer than
    :func:`auto_dt`. Initial states are propagated together as a batch.

    Returns:
        A :class:`SimResult` when ``initial`` is an int, else a list of them.

    Raises:
        SimulationError: photon number exceeds ``0.8 * fock_dim``, the top Fock
            level holds more than 1e-2 of the population, or the trace drifts
            by more than 1e-8.
    """
    cfg = SimConfig() if cfg is None else cfg
    single = np.isscalar(initial)
    levels = [int(initial)] if single else [int(j) for j in initial]
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid[0] != 0.0 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be strictly ascending from 0")
    t_grid = t_grid[:: cfg.record_stride]

    ops = _Operators(model, g_perp, omega_r, kappa, plan, cfg)
    N, F, m, B = ops.N, ops.F, ops.m, len(levels)
    rho = np.zeros((B, N, N), dtype=complex)
    for b, j in enumerate(levels):
        rho[b, j * F, j * F] = 1.0

    dt_max = auto_dt(model, omega_r, plan, cfg)
    K = t_grid.size
    a_rec = np.zeros((B, K), dtype=complex)
    n_rec = np.zeros((B, K))
    top = np.zeros(B)
    pops = np.zeros((B, K, m))
    trace_err = herm_err = 0.0
    min_eig = np.inf
    check_at = set(np.linspace(0, K - 1, min(cfg.psd_checks, K)).round().astype(int))
    a_op, n_op = ops.a, ops.n
    guard = PHOTON_GUARD * F
    dt_used = dt_max

    def record(k, t, rho):
        nonlocal trace_err, herm_err, min_eig
        diag = np.real(np.einsum("bii->bi", rho))
        tr = diag.sum(axis=1)
        trace_err = max(trace_err, float(np.abs(tr - 1).max()))
        herm_err = max(herm_err, float(np.abs(rho - np.conj(np.swapaxes(rho, -1, -2))).max()))
        a = np.einsum("ij,bji->b", a_op, rho)
        if cfg.frame == "lab":
            a = a * np.exp(1j * plan.omega_d * t)
        a_rec[:, k] = a
        n_rec[:, k] = diag @ np.real(np.diag(n_op))
        pops[:, k] = diag.reshape(B, m, F).sum(axis=2)
        top[:] = np.maximum(top, diag.reshape(B, m, F)[:, :, -1].sum(axis=1))
        if k in check_at:
            for r in rho:
                herm = 0.5 * (r + r.conj().T)
                min_eig = min(min_eig, float(np.linalg.eigvalsh(herm)[0]))
        if n_rec[:, k].max() > guard:
            raise SimulationError(
                f"photon number {n_rec[:, k].max():.3g} exceeds {PHOTON_GUARD} * fock_dim at t={t:g}"
            )
        if top.max() > TOP_FOCK_GUARD:
            raise SimulationError(
                f"top Fock level holds {top.max():.3g} of the population at t={t:g}; raise fock_dim"
            )
        if trace_err > TRACE_TOL:
            raise SimulationError(f"trace drifted by {trace_err:.3g} at t={t:g}")

    record(0, 0.0, rho)
    if K > 1 and _map_applies(t_grid, 2 * np.pi / plan.omega_d, cfg, N):
        period = 2 * np.pi / plan.omega_d
        cycles = int(round((t_grid[1] - t_grid[0]) / period))
        n = max(1, int(np.ceil(period / dt_max - 1e-9)))
        dt_used = period / n
        M = np.linalg.matrix_power(_interval_map(ops, period, n), cycles)
        vec = rho.reshape(B, N * N).T
        for k in range(1, K):
            vec = M @ vec
            rho = vec.T.reshape(B, N, N)
            record(k, t_grid[k], rho)
    else:
        for k in range(1, K):
            span = t_grid[k] - t_grid[k - 1]
            n = max(1, int(np.ceil(span / dt_max - 1e-9)))
            dt_used = span / n
            t0 = t_grid[k - 1]
            rho = ops.advance(rho, t0, dt_used, n)
            record(k, t_grid[k], rho)

    results = [
        SimResult(
            times=t_grid,
            expect_a=a_rec[b],
            populations=pops[b],
            photon_number=n_rec[b],
            trace_error=trace_err,
            hermiticity_error=herm_err,
            min_eigenvalue=min_eig,
            dt=dt_used,
            initial=j,
            top_fock_population=float(top[b]),
        )
        for b, j in enumerate(levels)
    ]
    return results[0] if single else results


def sweep_snr_numeric(
    model, g_perp, omega_r, kappa, plans, cfg=None, t_star=None, n_points=200, levels=(0, 1)
):
    """Oracle SNR at ``t_star`` (default ``0.5 / kappa``) for each plan, in input order."""
    from .cavity import Trajectory, snr

    t_star = 0.5 / kappa if t_star is None else t_star
    t_grid = np.linspace(0.0, t_star, n_points)
    out = []
    for plan in plans:
        r0, r1 = simulate(model, g_perp, omega_r, kappa, plan, list(levels), t_grid, cfg)
        curve = snr(Trajectory(r1.times, r1.expect_a), Trajectory(r0.times, r0.expect_a), kappa)
        out.append(float(curve.snr[-1]))
    return np.array(out)
