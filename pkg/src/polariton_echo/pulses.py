"""Exact two-level dynamics of Doppler-detuned Raman pulses on {|r1>, |r2>}.

Within one pulse the rotating-frame Hamiltonian is

    H = delta/2 * sz + omega_r/2 * (cos(chi) sx + sin(chi) sy),

with delta = k_r*v the Doppler detuning and chi = -k_r*x(t_start) the recoil phase
of the rephasing field at the start of the pulse. Amplitudes between pulses are
kept in the frame where a free atom does not evolve; :func:`lab_pulse` converts a
rotating-frame propagator into that frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from polariton_echo.phase import DerivedGeometry, net_phase


@dataclass(frozen=True)
class AtomState:
    c1: complex
    c2: complex

    def as_array(self) -> np.ndarray:
        return np.array([self.c1, self.c2], dtype=complex)

    @property
    def norm2(self) -> float:
        return abs(self.c1) ** 2 + abs(self.c2) ** 2


@dataclass(frozen=True)
class TwoLevelPropagator:
    matrix: np.ndarray = field(repr=False)
    omega_r: float
    detuning: float
    duration: float
    spatial_phase: float

    def apply(self, state: AtomState) -> AtomState:
        c1, c2 = self.matrix @ state.as_array()
        return AtomState(complex(c1), complex(c2))

    @property
    def transfer_probability(self) -> float:
        return float(abs(self.matrix[1, 0]) ** 2)

    def unitarity_error(self) -> float:
        return float(np.max(np.abs(self.matrix.conj().T @ self.matrix - np.eye(2))))


def rabi_elements(omega_r, detuning, duration, spatial_phase=0.0):
    """Entries (u11, u12, u21, u22) of the rotating-frame propagator; broadcasts over arrays."""
    omega_r = np.asarray(omega_r, dtype=float)
    detuning = np.asarray(detuning, dtype=float)
    w = np.sqrt(omega_r**2 + detuning**2)
    half = 0.5 * w * duration
    cos = np.cos(half)
    # sin(half)/w with the w -> 0 limit taken explicitly
    sinc = 0.5 * duration * np.sinc(half / math.pi)
    eiphi = np.exp(1j * np.asarray(spatial_phase, dtype=float))
    u11 = cos - 1j * detuning * sinc
    u22 = cos + 1j * detuning * sinc
    u21 = -1j * omega_r * sinc * eiphi
    u12 = -1j * omega_r * sinc * np.conj(eiphi)
    return u11, u12, u21, u22


def pulse_propagator(omega_r: float, detuning: float, duration: float, spatial_phase: float = 0.0) -> TwoLevelPropagator:
    """Closed-form rectangular-pulse propagator exp(-i H duration)."""
    if duration < 0:
        raise ValueError(f"pulse duration must be non-negative (duration={duration!r})")
    u11, u12, u21, u22 = rabi_elements(omega_r, detuning, duration, spatial_phase)
    matrix = np.array([[u11, u12], [u21, u22]], dtype=complex)
    return TwoLevelPropagator(matrix, float(omega_r), float(detuning), float(duration), float(spatial_phase))


def transfer_probability(omega_r, detuning, duration):
    """(omega_r/W)^2 sin^2(W duration/2), W = sqrt(omega_r^2 + detuning^2)."""
    omega_r = np.asarray(omega_r, dtype=float)
    detuning = np.asarray(detuning, dtype=float)
    w2 = omega_r**2 + detuning**2
    return omega_r**2 / w2 * np.sin(0.5 * np.sqrt(w2) * duration) ** 2


def _hamiltonian(omega_r: float, detuning: float, spatial_phase: float) -> np.ndarray:
    off = 0.5 * omega_r * np.exp(1j * spatial_phase)
    return np.array([[0.5 * detuning, np.conj(off)], [off, -0.5 * detuning]], dtype=complex)


def ode_oracle(
    omega_r: float,
    detuning: float,
    duration: float,
    spatial_phase: float,
    initial: AtomState,
    step: float,
) -> AtomState:
    """Integrate the pulse Hamiltonian with classical fixed-step RK4.

    ``step`` is rounded down so that an integer number of steps covers
    ``duration`` exactly. Independent of :func:`pulse_propagator`.
    """
    if not step > 0:
        raise ValueError(f"step must be positive (step={step!r})")
    if duration == 0:
        return initial
    if step > duration / 100:
        raise ValueError(f"step must not exceed duration/100 (step={step!r}, duration={duration!r})")
    n = math.ceil(duration / step)
    h = duration / n
    m = -1j * _hamiltonian(omega_r, detuning, spatial_phase)
    y = initial.as_array()
    for _ in range(n):
        k1 = m @ y
        k2 = m @ (y + 0.5 * h * k1)
        k3 = m @ (y + 0.5 * h * k2)
        k4 = m @ (y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return AtomState(complex(y[0]), complex(y[1]))


def lab_pulse(omega_r, detuning, duration, t_start):
    """Pulse propagator in the non-evolving frame for an atom with Doppler shift ``detuning``.

    Returns (u11, u12, u21, u22). ``detuning`` and ``t_start`` broadcast.
    """
    detuning = np.asarray(detuning, dtype=float)
    chi = -detuning * t_start
    u11, u12, u21, u22 = rabi_elements(omega_r, detuning, duration, chi)
    front = np.exp(0.5j * detuning * duration)
    back = np.conj(front)
    return front * u11, front * u12, back * u21, back * u22


def sequence_amplitudes(v, t_w, geometry: DerivedGeometry, omega_r: float | None = None, t_start: float = 0.0):
    """Final (c1, c2) after pi - wait - pi for atoms starting in |r1> with velocities ``v``.

    Both pulses have the nominal pi duration of ``geometry``; ``omega_r`` lets the
    actual drive differ from the nominal one.
    """
    v = np.asarray(v, dtype=float)
    t_pi = geometry.t_pi
    drive = geometry.omega_r if omega_r is None else omega_r
    delta = geometry.k_r * v
    a11, _, a21, _ = lab_pulse(drive, delta, t_pi, t_start)
    b11, b12, b21, b22 = lab_pulse(drive, delta, t_pi, t_start + t_pi + t_w)
    c1 = b11 * a11 + b12 * a21
    c2 = b21 * a11 + b22 * a21
    return c1, c2


def ideal_sequence_amplitude(v, t_w, geometry: DerivedGeometry):
    """|r1> amplitude for perfect pulses that imprint exactly the first-order phases."""
    return np.exp(1j * net_phase(v, t_w, geometry))


def sequence_phase(v: float, t_s: float, t_w: float, geometry: DerivedGeometry) -> tuple[complex, float]:
    """Exact |r1> amplitude after the sequence and its unwrapped phase.

    The phase is placed on the branch nearest to the first-order prediction
    phi1 + phi2, so that the two can be subtracted directly.
    """
    if t_w < 0 or t_s < t_w + 2 * geometry.t_pi:
        raise ValueError(f"pulse sequence does not fit in storage time (t_s={t_s!r}, t_w={t_w!r})")
    c1, _ = sequence_amplitudes(v, t_w, geometry)
    c1 = complex(c1)
    reference = float(net_phase(v, t_w, geometry))
    phase = reference + math.atan2((c1 * np.exp(-1j * reference)).imag, (c1 * np.exp(-1j * reference)).real)
    return c1, phase
