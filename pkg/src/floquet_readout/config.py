"""Run configuration files.

A configuration is an INI file with flat sections. Key names carry their
units: ``*_over_omega_q`` is relative to the qubit frequency, ``*_model_units``
is in the energy unit of the device (omega_q for the charge qubit, Delta for
the flopping mode, E_J for transmon and fluxonium), ``*_times_kappa`` is a
time in units of ``1/kappa``. Sweep axes accept a single value, a comma list
or ``linspace(start, stop, count)``.

Example::

    [recipe]
    figure = 2a

    [model]
    device = charge_qubit

    [resonator]
    omega_r_over_omega_q = 1.1, 1.15, 1.5
    g_perp_model_units = 1e-2
    kappa_model_units = 2e-3
    fock_dim = 15

    [drive]
    A_q_over_omega_q = 0.05
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .models import BUILDERS, SystemModel, build_model


class ConfigError(ValueError):
    pass


# Device parameter keys in the file -> builder keyword.
MODEL_KEYS = {
    "charge_qubit": {"omega_q_model_units": "omega_q"},
    "flopping": {
        "delta_model_units": "delta",
        "eps0_over_delta": "eps0",
        "t_sc_over_delta": "t_sc",
        "t_sf_over_delta": "t_sf",
    },
    "transmon": {
        "E_C_over_E_J": "E_C",
        "flux_over_flux_quantum": "flux",
        "n_max": "n_max",
        "levels": "levels",
    },
    "fluxonium": {
        "E_C_over_E_J": "E_C",
        "E_L_over_E_J": "E_L",
        "flux_over_flux_quantum": "flux",
        "basis_size": "basis_size",
        "levels": "levels",
    },
}
INT_PARAMS = {"n_max", "levels", "basis_size"}

_LINSPACE = re.compile(r"^linspace\(\s*([^,]+),\s*([^,]+),\s*(\d+)\s*\)$")


def parse_axis(text: str) -> np.ndarray:
    """``"0.1"``, ``"0.9, 1.1"`` or ``"linspace(0, 0.7, 71)"`` to a 1-D array."""
    text = text.strip()
    m = _LINSPACE.match(text)
    if m:
        n = int(m.group(3))
        if n < 1:
            raise ConfigError(f"empty grid {text!r}")
        return np.linspace(float(m.group(1)), float(m.group(2)), n)
    try:
        vals = np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError:
        raise ConfigError(f"cannot parse grid {text!r}") from None
    if vals.size == 0:
        raise ConfigError("grids must be nonempty")
    return vals


def _flag(text: str) -> bool:
    t = text.strip().lower()
    if t in ("on", "yes", "true", "1"):
        return True
    if t in ("off", "no", "false", "0"):
        return False
    raise ConfigError(f"expected on/off, got {text!r}")


def _scaled(sec, name: str, omega_q: float, default=None):
    """Read ``name_model_units`` or ``name_over_omega_q`` (exactly one allowed)."""
    keys = [k for k in (f"{name}_model_units", f"{name}_over_omega_q") if k in sec]
    if len(keys) > 1:
        raise ConfigError(f"give only one of {keys}")
    if not keys:
        if default is None:
            raise ConfigError(f"missing {name}_model_units or {name}_over_omega_q")
        return default
    v = float(sec[keys[0]])
    return v if keys[0].endswith("model_units") else v * omega_q


@dataclass
class RunConfig:
    """Parsed configuration. Frequencies and rates are in model units."""

    device: str
    model_params: dict
    omega_r_ratios: np.ndarray
    g_perp: float
    kappa: float
    fock_dim: int = 30
    A_q_ratios: np.ndarray = field(default_factory=lambda: np.array([0.0]))
    omega_d_ratios: np.ndarray | None = None
    compensation: bool = False
    dispersive: bool = False
    dispersive_ratio: float = 1.1
    dispersive_match_ratio: float | None = None
    n_rep: int | None = None
    fd_step: float = 1e-4
    spectrum_A_ratios: np.ndarray | None = None
    levels: tuple = (0, 1)
    static_reference: bool = False
    oracle_levels: int = 0
    oracle_subset: tuple = ()
    t_max_kappa: float = 5.0
    t_points: int = 501
    t_star_kappa: float = 0.5
    figure: str = ""
    name: str = "run"
    _model: SystemModel | None = field(default=None, repr=False, compare=False)

    def model(self) -> SystemModel:
        if self._model is None:
            self._model = build_model(self.device, **self.model_params)
        return self._model

    @property
    def omega_q(self) -> float:
        return self.model().omega_q

    def oracle_model(self) -> SystemModel:
        m = self.model()
        if self.oracle_levels and self.oracle_levels < m.dim:
            return m.truncated(self.oracle_levels)
        return m

    def t_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.t_max_kappa / self.kappa, self.t_points)


def load(path) -> RunConfig:
    text = Path(path).read_text()
    return loads(text)


def loads(text: str) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    cp.read_string(text)
    for sec in ("model", "resonator"):
        if not cp.has_section(sec):
            raise ConfigError(f"missing [{sec}] section")
    model_sec = cp["model"]
    device = model_sec.get("device", "").strip()
    if device not in BUILDERS:
        raise ConfigError(f"exactly one known device required, got {device!r}")
    params = {}
    for key, val in model_sec.items():
        if key == "device":
            continue
        try:
            kw = MODEL_KEYS[device][key]
        except KeyError:
            raise ConfigError(f"unknown key {key!r} for device {device}") from None
        params[kw] = int(val) if kw in INT_PARAMS else float(val)

    cfg = RunConfig(device=device, model_params=params, omega_r_ratios=np.array([1.0]), g_perp=0, kappa=1)
    wq = cfg.omega_q
    res = cp["resonator"]
    cfg.omega_r_ratios = parse_axis(res.get("omega_r_over_omega_q", "1.0"))
    cfg.g_perp = _scaled(res, "g_perp", wq)
    cfg.kappa = _scaled(res, "kappa", wq)
    cfg.fock_dim = res.getint("fock_dim", 30)

    drv = cp["drive"] if cp.has_section("drive") else {}
    cfg.A_q_ratios = parse_axis(drv.get("A_q_over_omega_q", "0"))
    if "omega_d_over_omega_q" in drv:
        cfg.omega_d_ratios = parse_axis(drv["omega_d_over_omega_q"])
    cfg.compensation = _flag(drv.get("compensation", "off"))
    cfg.dispersive = _flag(drv.get("dispersive", "off"))
    cfg.dispersive_ratio = float(drv.get("dispersive_omega_r_over_omega_q", 1.1))
    if "dispersive_match_omega_r_over_omega_q" in drv:
        cfg.dispersive_match_ratio = float(drv["dispersive_match_omega_r_over_omega_q"])

    if cp.has_section("floquet"):
        fl = cp["floquet"]
        if "n_rep" in fl:
            cfg.n_rep = fl.getint("n_rep")
        cfg.fd_step = float(fl.get("fd_step_model_units", cfg.fd_step))
        if "A_over_omega_q" in fl:
            cfg.spectrum_A_ratios = parse_axis(fl["A_over_omega_q"])
        if "levels" in fl:
            cfg.levels = tuple(int(v) for v in fl["levels"].split(","))
        cfg.static_reference = _flag(fl.get("static_reference", "off"))

    if cp.has_section("oracle"):
        orc = cp["oracle"]
        cfg.oracle_levels = orc.getint("levels", 0)
        if "subset" in orc:
            cfg.oracle_subset = tuple(int(v) for v in orc["subset"].split(",") if v.strip())

    if cp.has_section("output"):
        out = cp["output"]
        cfg.t_max_kappa = float(out.get("t_max_times_kappa", cfg.t_max_kappa))
        cfg.t_points = out.getint("t_points", cfg.t_points)
        cfg.t_star_kappa = float(out.get("t_star_times_kappa", cfg.t_star_kappa))
        cfg.name = out.get("name", cfg.name).strip()
    if cp.has_section("recipe"):
        cfg.figure = cp["recipe"].get("figure", "").strip()

    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    if np.any(cfg.omega_r_ratios <= 0):
        raise ConfigError("omega_r_over_omega_q must be positive")
    if cfg.omega_d_ratios is not None and np.any(cfg.omega_d_ratios <= 0):
        raise ConfigError("omega_d_over_omega_q must be positive")
    if not cfg.kappa > 0:
        raise ConfigError("kappa must be positive")
    if np.any(cfg.A_q_ratios < 0):
        raise ConfigError("A_q_over_omega_q must be non-negative")
    if cfg.t_points < 2 or not cfg.t_max_kappa > 0:
        raise ConfigError("need t_points >= 2 and t_max_times_kappa > 0")
    if cfg.fock_dim < 6:
        raise ConfigError("fock_dim must be >= 6")
