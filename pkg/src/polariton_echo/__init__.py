"""Motional dephasing of a stored Rydberg spin wave and its suppression by pi-wait-pi state mapping."""

from polariton_echo.quantities import (
    CONSTANTS,
    ConfigError,
    ExperimentConfig,
    PhysicalConstants,
    ValidatedConfig,
    load_config,
    cesium_config,
    sigma_v,
    validate,
)
from polariton_echo.phase import (
    DerivedGeometry,
    derive_geometry,
    effective_rabi,
    optimal_wait,
    phi1,
    phi2,
    residual_mismatch,
    wavevectors,
)

__version__ = "0.1.0"

__all__ = [
    "CONSTANTS",
    "ConfigError",
    "DerivedGeometry",
    "ExperimentConfig",
    "PhysicalConstants",
    "ValidatedConfig",
    "derive_geometry",
    "effective_rabi",
    "load_config",
    "optimal_wait",
    "cesium_config",
    "phi1",
    "phi2",
    "residual_mismatch",
    "sigma_v",
    "validate",
    "wavevectors",
]
