"""Closed-form phase algebra of the pi-wait-pi protocol.

Wavevectors are signed scalars along the trap axis. Phases are kept unwrapped;
nothing here reduces modulo 2*pi.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from polariton_echo.quantities import ConfigError, ExperimentConfig, sigma_v, validate


@dataclass(frozen=True)
class DerivedGeometry:
    k: float  # spin-wave wavevector, rad/m
    k_r: float  # two-photon rephasing wavevector, rad/m
    omega_r: float  # effective Raman Rabi frequency, rad/s
    sigma_v: float  # m/s

    @property
    def t_pi(self) -> float:
        return math.pi / self.omega_r

    @property
    def k_ratio(self) -> float:
        return self.k / self.k_r

    @property
    def motional_time(self) -> float:
        """1/e time of free motional dephasing, 1/(|k| sigma_v)."""
        return 1.0 / (abs(self.k) * self.sigma_v)

    @property
    def wait_width(self) -> float:
        """1/e half-width of the efficiency peak in the wait time, 1/(|k_r| sigma_v)."""
        return 1.0 / (abs(self.k_r) * self.sigma_v)

    def with_omega_r(self, omega_r: float) -> "DerivedGeometry":
        return DerivedGeometry(self.k, self.k_r, omega_r, self.sigma_v)

    def table(self) -> str:
        rows = [
            ("k", self.k, "rad/m"),
            ("k_r", self.k_r, "rad/m"),
            ("k/k_r", self.k_ratio, ""),
            ("omega_r", self.omega_r, "rad/s"),
            ("t_pi", self.t_pi, "s"),
            ("sigma_v", self.sigma_v, "m/s"),
            ("motional_1/e_time", self.motional_time, "s"),
            ("wait_1/e_halfwidth", self.wait_width, "s"),
        ]
        return "\n".join(f"{name} = {value:.9g} {unit}".rstrip() for name, value, unit in rows)


def effective_rabi(omega3: float, omega4: float, delta: float) -> float:
    """Two-photon Rabi frequency omega3*omega4/(2*delta) of a far-detuned Raman pair."""
    if delta == 0:
        raise ValueError("effective_rabi: detuning delta = 0 is a singularity")
    if abs(delta) < 5 * max(abs(omega3), abs(omega4)):
        warnings.warn(
            "intermediate-state detuning is not large compared with the single-photon "
            "Rabi frequencies; adiabatic elimination is questionable",
            stacklevel=2,
        )
    return omega3 * omega4 / (2.0 * delta)


def spin_wave_k(lambda_signal: float, sign_signal: int, lambda_coupling: float, sign_coupling: int) -> float:
    """Net wavevector of the two absorbed photons that write the spin wave."""
    return sign_signal * 2.0 * math.pi / lambda_signal + sign_coupling * 2.0 * math.pi / lambda_coupling


def raman_k(lambda_r3: float, sign_r3: int, lambda_r4: float, sign_r4: int) -> float:
    """Momentum transfer of absorbing from leg 3 and emitting into leg 4."""
    return sign_r3 * 2.0 * math.pi / lambda_r3 - sign_r4 * 2.0 * math.pi / lambda_r4


def wavevectors(config: ExperimentConfig) -> tuple[float, float]:
    """Signed (k, k_r) along the axis; raises ConfigError unless k/k_r > 0."""
    c = validate(config)
    k = spin_wave_k(c.lambda_signal, c.sign_signal, c.lambda_coupling, c.sign_coupling)
    k_r = raman_k(c.lambda_r3, c.sign_r3, c.lambda_r4, c.sign_r4)
    if k_r == 0 or not k / k_r > 0:
        raise ConfigError([f"protocol geometry invalid: k/k_r must be positive (k={k!r}, k_r={k_r!r})"])
    return k, k_r


def derive_geometry(config: ExperimentConfig) -> DerivedGeometry:
    c = validate(config)
    k, k_r = wavevectors(c)
    if c.omega_r_override is not None:
        omega_r = c.omega_r_override
    else:
        omega_r = effective_rabi(c.omega3, c.omega4, c.delta)
    return DerivedGeometry(k=k, k_r=k_r, omega_r=omega_r, sigma_v=sigma_v(c))


def optimal_wait(t_s, geometry: DerivedGeometry):
    """Wait k*t_s/k_r - pi/omega_r between the two pulses.

    A negative value means the protocol cannot rephase at this storage time;
    it is returned as-is and callers decide what to do with it.
    """
    return geometry.k_ratio * np.asarray(t_s, dtype=float)[()] - geometry.t_pi


def _warn_first_order(v, geometry: DerivedGeometry) -> None:
    if np.any(np.abs(geometry.k_r * np.asarray(v)) >= geometry.omega_r):
        warnings.warn("Doppler detuning k_r*v exceeds omega_r; first-order phases are unreliable", stacklevel=3)


def phi1(v, geometry: DerivedGeometry):
    """Phase written on the |r2> component by the first pi pulse."""
    _warn_first_order(v, geometry)
    v = np.asarray(v, dtype=float)[()]
    return -math.pi / 2 - geometry.k_r * v * math.pi / (2.0 * geometry.omega_r)


def phi2(v, t_w, geometry: DerivedGeometry):
    """Phase written on the |r1> component by the second pi pulse after a wait ``t_w``."""
    _warn_first_order(v, geometry)
    v = np.asarray(v, dtype=float)[()]
    t_pi = geometry.t_pi
    return -math.pi / 2 + geometry.k_r * v * t_pi / 2.0 + geometry.k_r * v * (t_w + t_pi)


def net_phase(v, t_w, geometry: DerivedGeometry):
    """phi1 + phi2 in closed form: k_r*v*(t_w + pi/omega_r) - pi."""
    v = np.asarray(v, dtype=float)[()]
    return geometry.k_r * v * (t_w + geometry.t_pi) - math.pi


def residual_mismatch(v, t_s, t_w, geometry: DerivedGeometry):
    """Required retrieval phase k*v*t_s minus the velocity-dependent phase the pulses created."""
    v = np.asarray(v, dtype=float)[()]
    return v * (geometry.k * t_s - geometry.k_r * (t_w + geometry.t_pi))
