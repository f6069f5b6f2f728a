"""Static device Hamiltonians diagonalized into their energy eigenbasis.

Every builder returns a :class:`SystemModel`: sorted energies plus the matrix
elements of the driven/coupled operator ``Q`` between eigenstates. Units are
whatever the parameters are given in (hbar = 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

CONVERGENCE_RTOL = 1e-9


class ModelError(ValueError):
    """Invalid parameters or unconverged basis cutoff."""


@dataclass(frozen=True)
class SystemModel:
    label: str
    energies: np.ndarray
    charge_op: np.ndarray
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        energies = np.asarray(self.energies, dtype=float)
        q = np.asarray(self.charge_op, dtype=complex)
        if energies.ndim != 1 or energies.size < 2:
            raise ModelError("need at least two levels")
        if q.shape != (energies.size, energies.size):
            raise ModelError(f"charge_op shape {q.shape} does not match {energies.size} levels")
        if np.any(np.diff(energies) < -1e-12 * max(1.0, np.abs(energies).max())):
            raise ModelError("energies must be sorted ascending")
        scale = max(np.abs(q).max(), 1e-300)
        if np.abs(q - q.conj().T).max() > 1e-12 * scale:
            raise ModelError("charge_op is not Hermitian")
        energies.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "energies", energies)
        object.__setattr__(self, "charge_op", q)

    @property
    def dim(self) -> int:
        return self.energies.size

    @property
    def omega_q(self) -> float:
        return float(self.energies[1] - self.energies[0])

    def hamiltonian(self) -> np.ndarray:
        return np.diag(self.energies).astype(complex)

    def truncated(self, m: int) -> SystemModel:
        """Keep only the lowest ``m`` levels."""
        if not 2 <= m <= self.dim:
            raise ModelError(f"cannot truncate {self.dim} levels to {m}")
        return SystemModel(
            label=self.label,
            energies=self.energies[:m].copy(),
            charge_op=self.charge_op[:m, :m].copy(),
            params={**self.params, "levels": m},
        )


@dataclass(frozen=True)
class ChargeQubitParams:
    omega_q: float = 1.0


@dataclass(frozen=True)
class FloppingParams:
    delta: float = 1.0
    eps0: float = 0.0
    t_sc: float = 1.0
    t_sf: float = 1.3


@dataclass(frozen=True)
class TransmonParams:
    E_C: float = 0.0077
    E_J: float = 1.0
    flux: float = 0.128
    n_max: int = 30
    levels: int = 25


@dataclass(frozen=True)
class FluxoniumParams:
    E_C: float = 0.25
    E_J: float = 1.0
    E_L: float = 0.25
    flux: float = 0.5
    basis_size: int = 120
    levels: int = 10


def fix_gauge(vecs: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude entry is real positive."""
    vecs = np.array(vecs, dtype=complex)
    # Rounding makes ties (symmetric states) resolve to the first index.
    idx = np.argmax(np.round(np.abs(vecs), 10), axis=0)
    piv = vecs[idx, np.arange(vecs.shape[1])]
    return vecs * (np.abs(piv) / piv)[None, :]


def _eigenbasis(h: np.ndarray, q: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    evals, evecs = sla.eigh(h)
    evals = evals[:m]
    evecs = fix_gauge(evecs[:, :m])
    q_eig = evecs.conj().T @ q @ evecs
    q_eig = 0.5 * (q_eig + q_eig.conj().T)
    return _order_degenerate(evals, q_eig)


def _order_degenerate(evals, q_eig):
    # Degenerate pairs ordered by descending |<0|Q|j>|.
    tol = 1e-10 * max(1.0, np.abs(evals).max())
    order = list(range(evals.size))
    j = 0
    while j < evals.size:
        k = j + 1
        while k < evals.size and evals[k] - evals[j] < tol:
            k += 1
        if k - j > 1:
            block = sorted(range(j, k), key=lambda i: -abs(q_eig[0, i]))
            order[j:k] = block
        j = k
    order = np.array(order)
    return evals[order], q_eig[np.ix_(order, order)]


def build_charge_qubit(omega_q: float) -> SystemModel:
    """Ideal two-level charge qubit, ``H = omega_q/2 sigma_z`` driven through ``sigma_x``."""
    if not omega_q > 0:
        raise ModelError(f"omega_q must be positive, got {omega_q}")
    q = np.array([[0, 1], [1, 0]], dtype=complex)
    return SystemModel(
        "charge_qubit",
        np.array([-omega_q / 2, omega_q / 2]),
        q,
        {"omega_q": omega_q},
    )


_SX = np.array([[0, 1], [1, 0]], dtype=complex)
_SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
_SZ = np.array([[1, 0], [0, -1]], dtype=complex)
_I2 = np.eye(2, dtype=complex)


def flopping_hamiltonian(p: FloppingParams) -> tuple[np.ndarray, np.ndarray]:
    """Product-basis ``(H, tau_z)`` ordered as {L-up, L-down, R-up, R-down}."""
    h = (
        0.5 * p.delta * np.kron(_I2, _SZ)
        + 0.5 * p.eps0 * np.kron(_SZ, _I2)
        + p.t_sc * np.kron(_SX, _I2)
        - p.t_sf * np.kron(_SY, _SY)
    )
    return h, np.kron(_SZ, _I2)


def build_flopping_mode(p: FloppingParams) -> SystemModel:
    """Single charge in a double dot with spin-orbit tunneling, driven on the detuning."""
    if not p.delta > 0:
        raise ModelError("Zeeman splitting must be positive")
    h, tau_z = flopping_hamiltonian(p)
    evals, q = _eigenbasis(h, tau_z, 4)
    return SystemModel("flopping", evals, q, vars(p).copy())


def transmon_ej_eff(E_J: float, flux: float) -> float:
    return E_J * abs(np.cos(np.pi * flux))


def _transmon_matrices(E_C, ej_eff, n_max):
    n = np.arange(-n_max, n_max + 1, dtype=float)
    h = np.diag(4.0 * E_C * n**2) - 0.5 * ej_eff * (np.eye(n.size, k=1) + np.eye(n.size, k=-1))
    return h, np.diag(n)


def _check_params_nonneg(**kw):
    for k, v in kw.items():
        if v < 0:
            raise ModelError(f"{k} must be non-negative, got {v}")


def build_transmon(p: TransmonParams, check_convergence: bool = True) -> SystemModel:
    """Flux-tunable transmon in the charge basis, ``Q = n``.

    The Josephson term enters as ``-E_J,eff cos(phi)`` with
    ``E_J,eff = E_J |cos(pi flux)|``; offset charge is zero.
    """
    _check_params_nonneg(E_C=p.E_C, E_J=p.E_J)
    if p.levels < 2 or p.levels > 2 * p.n_max + 1:
        raise ModelError(f"levels={p.levels} incompatible with n_max={p.n_max}")
    ej_eff = transmon_ej_eff(p.E_J, p.flux)
    evals, q = _eigenbasis(*_transmon_matrices(p.E_C, ej_eff, p.n_max), p.levels)
    if check_convergence:
        evals2, q2 = _eigenbasis(*_transmon_matrices(p.E_C, ej_eff, 2 * p.n_max), p.levels)
        _assert_converged("transmon n_max", evals, q, evals2, q2)
    return SystemModel("transmon", evals, q, vars(p).copy())


def _fluxonium_matrices(p: FluxoniumParams, size: int):
    omega_p = np.sqrt(8.0 * p.E_C * p.E_L)
    phi_zpf = (2.0 * p.E_C / p.E_L) ** 0.25
    n_zpf = (p.E_L / (32.0 * p.E_C)) ** 0.25
    b = np.diag(np.sqrt(np.arange(1, size)), k=1)
    phi = phi_zpf * (b + b.T)
    n_op = 1j * n_zpf * (b.T - b)
    x, v = sla.eigh(phi)
    cos_term = (v * np.cos(x - 2 * np.pi * p.flux)) @ v.T
    h = omega_p * np.diag(np.arange(size) + 0.5) - p.E_J * cos_term
    return h, n_op


def build_fluxonium(p: FluxoniumParams, check_convergence: bool = True) -> SystemModel:
    """Fluxonium in the harmonic-oscillator basis of its inductive/capacitive part, ``Q = n``.

    The cosine is evaluated by functional calculus on the truncated phase
    operator, so convergence is checked by doubling the basis.
    """
    _check_params_nonneg(E_C=p.E_C, E_J=p.E_J)
    if not (p.E_C > 0 and p.E_L > 0):
        raise ModelError("fluxonium needs E_C > 0 and E_L > 0")
    if p.levels < 2 or p.levels > p.basis_size:
        raise ModelError(f"levels={p.levels} incompatible with basis_size={p.basis_size}")
    evals, q = _eigenbasis(*_fluxonium_matrices(p, p.basis_size), p.levels)
    if check_convergence:
        evals2, q2 = _eigenbasis(*_fluxonium_matrices(p, 2 * p.basis_size), p.levels)
        _assert_converged("fluxonium basis_size", evals, q, evals2, q2)
    return SystemModel("fluxonium", evals, q, vars(p).copy())


def _assert_converged(what, e1, q1, e2, q2, rtol=CONVERGENCE_RTOL):
    gap1, gap2 = e1[1] - e1[0], e2[1] - e2[0]
    scale = max(np.abs(e2).max(), 1e-300)
    if abs(gap1 - gap2) > rtol * abs(gap2) or np.abs(e1 - e2).max() > rtol * scale:
        raise ModelError(f"{what} too small: energies not converged to {rtol:g}")
    n1, n2 = abs(q1[0, 1]), abs(q2[0, 1])
    if abs(n1 - n2) > rtol * max(n2, 1e-300):
        raise ModelError(f"{what} too small: |Q_01| not converged to {rtol:g}")


def transmon_asymptotics(E_C: float, E_J_eff: float, levels: int = 3) -> dict:
    """Large-``E_J/E_C`` closed forms for transmon energies and ``|n_{j,j+1}|``."""
    j = np.arange(levels)
    energies = (
        -E_J_eff
        + np.sqrt(8.0 * E_J_eff * E_C) * (j + 0.5)
        - E_C / 12.0 * (6 * j**2 + 6 * j + 3)
    )
    n_up = np.sqrt((j[:-1] + 1) / 2.0) * (E_J_eff / (8.0 * E_C)) ** 0.25
    return {"energies": energies, "n_adjacent": n_up}


BUILDERS = {
    "charge_qubit": (ChargeQubitParams, lambda p: build_charge_qubit(p.omega_q)),
    "flopping": (FloppingParams, build_flopping_mode),
    "transmon": (TransmonParams, build_transmon),
    "fluxonium": (FluxoniumParams, build_fluxonium),
}


def build_model(device: str, **params) -> SystemModel:
    """Build any supported device by name from keyword parameters."""
    try:
        cls, builder = BUILDERS[device]
    except KeyError:
        raise ModelError(f"unknown device {device!r}; choose from {sorted(BUILDERS)}") from None
    return builder(cls(**params))
