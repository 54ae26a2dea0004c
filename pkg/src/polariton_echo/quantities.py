"""Physical constants and the validated experiment configuration.

All quantities are stored in SI units (s, m, K, rad/s). Configuration files use
laboratory units (uK, nm, MHz, us); Rabi frequencies and detunings are written
as ordinary frequencies nu and converted to angular frequencies 2*pi*nu on load.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib


@dataclass(frozen=True)
class PhysicalConstants:
    boltzmann_constant: float = 1.380649e-23  # J/K, exact
    atomic_mass_unit: float = 1.66053906660e-27  # kg, CODATA 2018
    cesium_mass_amu: float = 132.905451931

    @property
    def cesium_mass(self) -> float:
        return self.cesium_mass_amu * self.atomic_mass_unit


CONSTANTS = PhysicalConstants()

TWO_PI = 2.0 * math.pi


class ConfigError(ValueError):
    """Raised when a configuration violates one or more invariants.

    ``errors`` holds every violation found, not only the first one.
    """

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class ExperimentConfig:
    """Every physical and numerical parameter of one run, in SI units.

    ``omega_r_override`` forces the effective Raman Rabi frequency; when None it is
    derived from the two single-photon legs. ``t_w`` set to None means "use the
    optimal wait for ``t_s``".
    """

    temperature: float = 40e-6
    lambda_signal: float = 852e-9
    lambda_coupling: float = 509e-9
    lambda_r3: float = 509e-9
    lambda_r4: float = 509e-9
    sign_signal: int = 1
    sign_coupling: int = -1
    sign_r3: int = -1
    sign_r4: int = 1
    omega3: float = TWO_PI * 21e6
    omega4: float = TWO_PI * 32e6
    delta: float = TWO_PI * 335e6
    omega_r_override: float | None = None
    # literature-scale placeholders, not measured values for this experiment
    tau_r1: float = 150e-6
    tau_r2: float = 180e-6
    t_s: float = 7e-6
    t_w: float | None = None
    n_atoms: int = 10_000
    n_shots: int = 1_000
    seed: int = 20241016
    # placeholders for the OD-loss model
    od0: float = 3.0
    tau_od: float = 15e-6


@dataclass(frozen=True)
class ValidatedConfig(ExperimentConfig):
    """An :class:`ExperimentConfig` that has passed :func:`validate`.

    Construction (including ``dataclasses.replace``) re-checks every invariant.
    """

    def __post_init__(self) -> None:
        errors = _violations(self)
        if errors:
            raise ConfigError(errors)


def cesium_config(**overrides: Any) -> ValidatedConfig:
    """The experimental parameters of the cesium setup, optionally overridden."""
    return validate(ExperimentConfig(**overrides))


def _violations(c: ExperimentConfig) -> list[str]:
    errors = []

    def positive(name: str) -> None:
        value = getattr(c, name)
        if not value > 0:
            errors.append(f"{name} must be positive ({name}={value!r})")

    positive("temperature")
    for name in ("lambda_signal", "lambda_coupling", "lambda_r3", "lambda_r4"):
        positive(name)
    for name in ("omega3", "omega4", "delta"):
        positive(name)
    for name in ("tau_r1", "tau_r2"):
        positive(name)
    positive("od0")
    positive("tau_od")
    if c.omega_r_override is not None and not c.omega_r_override > 0:
        errors.append(f"omega_r_override must be positive (omega_r_override={c.omega_r_override!r})")

    signs = ("sign_signal", "sign_coupling", "sign_r3", "sign_r4")
    bad_sign = False
    for name in signs:
        value = getattr(c, name)
        if value not in (1, -1):
            errors.append(f"{name} must be +1 or -1 ({name}={value!r})")
            bad_sign = True
    if not bad_sign:
        if c.sign_signal != -c.sign_coupling:
            errors.append(
                "signal and coupling beams must counter-propagate "
                f"(sign_signal={c.sign_signal}, sign_coupling={c.sign_coupling})"
            )
        if c.sign_r3 != -c.sign_r4:
            errors.append(f"rephasing beams must counter-propagate (sign_r3={c.sign_r3}, sign_r4={c.sign_r4})")
        if c.sign_r3 != c.sign_coupling:
            errors.append(
                "rephasing beam 3 must co-propagate with the coupling beam "
                f"(sign_r3={c.sign_r3}, sign_coupling={c.sign_coupling})"
            )

    if not c.t_s >= 0:
        errors.append(f"t_s must be non-negative (t_s={c.t_s!r})")
    if c.t_w is not None and not c.t_w >= 0:
        errors.append(f"t_w must be non-negative (t_w={c.t_w!r})")
    for name in ("n_atoms", "n_shots"):
        value = getattr(c, name)
        if not isinstance(value, int) or value < 1:
            errors.append(f"{name} must be an integer >= 1 ({name}={value!r})")
    if not isinstance(c.seed, int) or not 0 <= c.seed < 2**64:
        errors.append(f"seed must be a 64-bit unsigned integer (seed={c.seed!r})")
    return errors


def validate(config: ExperimentConfig) -> ValidatedConfig:
    """Check every invariant of ``config``.

    Returns the config as a :class:`ValidatedConfig` (unchanged if it already is
    one). Raises :class:`ConfigError` listing all violations otherwise.
    """
    if isinstance(config, ValidatedConfig):
        return config
    return ValidatedConfig(**dataclasses.asdict(config))


def sigma_v(config: ExperimentConfig, constants: PhysicalConstants = CONSTANTS) -> float:
    """One-dimensional Maxwell-Boltzmann velocity spread sqrt(kB T / m) in m/s."""
    config = validate(config)
    return math.sqrt(constants.boltzmann_constant * config.temperature / constants.cesium_mass)


# file layout: table -> key -> (field, unit); units convert by exact decimal division
_UNITS = {
    None: (lambda x: x, lambda x: x),
    "micro": (lambda x: float(x) / 1e6, lambda x: x * 1e6),
    "nano": (lambda x: float(x) / 1e9, lambda x: x * 1e9),
    "MHz": (lambda x: TWO_PI * (float(x) * 1e6), lambda x: x / TWO_PI / 1e6),
}
FILE_SCHEMA: dict[str, dict[str, tuple[str, str | None]]] = {
    "ensemble": {"temperature_uK": ("temperature", "micro")},
    "lasers": {
        "lambda_signal_nm": ("lambda_signal", "nano"),
        "lambda_coupling_nm": ("lambda_coupling", "nano"),
        "lambda_r3_nm": ("lambda_r3", "nano"),
        "lambda_r4_nm": ("lambda_r4", "nano"),
        "sign_signal": ("sign_signal", None),
        "sign_coupling": ("sign_coupling", None),
        "sign_r3": ("sign_r3", None),
        "sign_r4": ("sign_r4", None),
    },
    "rephasing": {
        "omega3_MHz": ("omega3", "MHz"),
        "omega4_MHz": ("omega4", "MHz"),
        "delta_MHz": ("delta", "MHz"),
        "omega_r_MHz": ("omega_r_override", "MHz"),
    },
    "lifetimes": {"tau_r1_us": ("tau_r1", "micro"), "tau_r2_us": ("tau_r2", "micro")},
    "storage": {"t_s_us": ("t_s", "micro"), "t_w_us": ("t_w", "micro")},
    "monte_carlo": {"n_atoms": ("n_atoms", None), "n_shots": ("n_shots", None), "seed": ("seed", None)},
    "od": {"od0": ("od0", None), "tau_od_us": ("tau_od", "micro")},
}


def to_si(unit: str | None, value):
    return _UNITS[unit][0](value)


def from_si(unit: str | None, value):
    return _UNITS[unit][1](value)


def config_from_mapping(data: dict[str, Any]) -> ValidatedConfig:
    """Build a config from parsed file contents (lab units). Unknown tables or keys are errors."""
    errors = []
    fields: dict[str, Any] = {}
    for table, entries in data.items():
        if table not in FILE_SCHEMA:
            errors.append(f"unknown table [{table}]")
            continue
        if not isinstance(entries, dict):
            errors.append(f"[{table}] must be a table")
            continue
        schema = FILE_SCHEMA[table]
        for key, value in entries.items():
            if key not in schema:
                errors.append(f"unknown key {key!r} in [{table}]")
                continue
            name, unit = schema[key]
            if unit is None:
                fields[name] = value
            elif isinstance(value, (int, float)) and not isinstance(value, bool):
                fields[name] = to_si(unit, value)
            else:
                errors.append(f"{table}.{key} must be a number ({key}={value!r})")
    if errors:
        raise ConfigError(errors)
    return validate(ExperimentConfig(**fields))


def load_config(path: str | Path) -> ValidatedConfig:
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    return config_from_mapping(data)


def config_to_mapping(config: ExperimentConfig) -> dict[str, dict[str, Any]]:
    """Inverse of :func:`config_from_mapping`; None-valued optional fields are omitted."""
    out: dict[str, dict[str, Any]] = {}
    for table, schema in FILE_SCHEMA.items():
        section = {}
        for key, (name, unit) in schema.items():
            value = getattr(config, name)
            if value is None:
                continue
            section[key] = from_si(unit, value)
        out[table] = section
    return out
