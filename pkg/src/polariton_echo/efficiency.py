"""Retrieval efficiency of the stored spin wave.

Two independent routes: closed-form Gaussian averages over the thermal velocity
distribution, and Monte Carlo over explicit atomic velocities with exact pulse
dynamics. Radiative decay enters as a deterministic amplitude damping, and atom
loss from the readout region through an optical-depth model.
"""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from polariton_echo.phase import DerivedGeometry, derive_geometry, optimal_wait
from polariton_echo.pulses import ideal_sequence_amplitude, sequence_amplitudes, transfer_probability
from polariton_echo.quantities import ExperimentConfig, validate

GAUSS_HERMITE_NODES = 64
# atoms per vectorized block in the Monte Carlo loop
_BLOCK_SIZE = 1 << 20


class SequenceDoesNotFit(ValueError):
    """The pi - wait - pi sequence is longer than the storage time (or the wait is negative)."""


class CorrectionDiverges(ValueError):
    pass


@dataclass(frozen=True)
class EfficiencyPoint:
    control_value: float  # s; storage time or wait time
    efficiency: float
    std_error: float = 0.0

    def __post_init__(self):
        if self.std_error < 0:
            raise ValueError(f"std_error must be non-negative (std_error={self.std_error!r})")
        if self.efficiency < 0:
            raise ValueError(f"efficiency must be non-negative (efficiency={self.efficiency!r})")


@dataclass(frozen=True)
class EfficiencyCurve:
    points: tuple[EfficiencyPoint, ...]
    metadata: dict = field(default_factory=dict, compare=False)

    @classmethod
    def from_arrays(cls, control, efficiency, std_error=None, **metadata) -> "EfficiencyCurve":
        control = np.asarray(control, dtype=float)
        efficiency = np.asarray(efficiency, dtype=float)
        std_error = np.zeros_like(efficiency) if std_error is None else np.asarray(std_error, dtype=float)
        points = tuple(EfficiencyPoint(float(c), float(e), float(s)) for c, e, s in zip(control, efficiency, std_error))
        return cls(points, dict(metadata))

    @property
    def control(self) -> np.ndarray:
        return np.array([p.control_value for p in self.points])

    @property
    def efficiency(self) -> np.ndarray:
        return np.array([p.efficiency for p in self.points])

    @property
    def std_error(self) -> np.ndarray:
        return np.array([p.std_error for p in self.points])

    def __len__(self) -> int:
        return len(self.points)

    def to_csv(self, path: str | Path | None = None) -> str:
        """Serialize as ``control_us,efficiency,std_error`` with 9 significant digits."""
        buf = io.StringIO()
        buf.write("control_us,efficiency,std_error\n")
        for p in self.points:
            buf.write(f"{p.control_value * 1e6:.9g},{p.efficiency:.9g},{p.std_error:.9g}\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="\n") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path: str | Path) -> "EfficiencyCurve":
        data = np.genfromtxt(path, delimiter=",", names=True, ndmin=1)
        return cls.from_arrays(data["control_us"] * 1e-6, data["efficiency"], data["std_error"])


@dataclass(frozen=True)
class DecayBudget:
    time_in_r1: float
    time_in_r2: float

    def __post_init__(self):
        if self.time_in_r1 < 0 or self.time_in_r2 < 0:
            raise SequenceDoesNotFit(
                f"negative residence time (time_in_r1={self.time_in_r1!r}, time_in_r2={self.time_in_r2!r})"
            )

    @classmethod
    def for_protocol(cls, t_s: float, t_w: float, t_pi: float) -> "DecayBudget":
        # half of each pulse is charged to each level
        in_r2 = t_w + t_pi
        return cls(time_in_r1=t_s - in_r2, time_in_r2=in_r2)

    @classmethod
    def free(cls, t_s: float) -> "DecayBudget":
        return cls(time_in_r1=t_s, time_in_r2=0.0)


def decay_envelope(budget: DecayBudget, tau_r1: float, tau_r2: float) -> float:
    return math.exp(-budget.time_in_r1 / tau_r1 - budget.time_in_r2 / tau_r2)


def gaussian_average(f, sigma: float, n_nodes: int = GAUSS_HERMITE_NODES) -> float:
    """E[f(v)] for v ~ N(0, sigma^2) by Gauss-Hermite quadrature."""
    x, w = np.polynomial.hermite.hermgauss(n_nodes)
    return float(np.sum(w * f(math.sqrt(2.0) * sigma * x)) / math.sqrt(math.pi))


def pulse_fidelity(geometry: DerivedGeometry, n_nodes: int = GAUSS_HERMITE_NODES) -> float:
    """Thermally averaged transfer probability of one nominal pi pulse."""
    t_pi = geometry.t_pi
    return gaussian_average(
        lambda v: transfer_probability(geometry.omega_r, geometry.k_r * v, t_pi), geometry.sigma_v, n_nodes
    )


def analytic_free_decay(t_s, geometry: DerivedGeometry, tau_r1: float | None = None):
    """exp(-k^2 sigma_v^2 t_s^2), times exp(-t_s/tau_r1) when a lifetime is given."""
    t_s = np.asarray(t_s, dtype=float)
    if np.any(t_s < 0):
        raise ValueError("storage time must be non-negative")
    eta = np.exp(-((geometry.k * geometry.sigma_v * t_s) ** 2))
    if tau_r1 is not None:
        eta = eta * np.exp(-t_s / tau_r1)
    return eta[()]


def analytic_protocol(
    t_s: float,
    t_w: float,
    geometry: DerivedGeometry,
    tau_r1: float | None = None,
    tau_r2: float | None = None,
    ideal_pulses: bool = False,
) -> float:
    """First-order protocol efficiency.

    Gaussian motional factor in the residual phase slope, times the squared
    thermally averaged pi-pulse fidelity (skipped for ``ideal_pulses``), times the
    radiative decay envelope when both lifetimes are given.
    """
    t_pi = geometry.t_pi
    if t_w < 0 or t_s < t_w + 2 * t_pi:
        raise SequenceDoesNotFit(f"sequence does not fit (t_s={t_s!r}, t_w={t_w!r}, t_pi={t_pi!r})")
    slope = geometry.k * t_s - geometry.k_r * (t_w + t_pi)
    eta = math.exp(-((geometry.sigma_v * slope) ** 2))
    if not ideal_pulses:
        eta *= pulse_fidelity(geometry) ** 2
    if tau_r1 is not None and tau_r2 is not None:
        eta *= decay_envelope(DecayBudget.for_protocol(t_s, t_w, t_pi), tau_r1, tau_r2)
    return eta


def collective_efficiency(amplitudes: np.ndarray, required_phase: np.ndarray) -> np.ndarray:
    """|<c_j exp(-i phi_j)>_j|^2 along the last axis: overlap with the phase-matched W state."""
    overlap = np.mean(amplitudes * np.exp(-1j * required_phase), axis=-1)
    return np.minimum(overlap.real**2 + overlap.imag**2, 1.0)


class Mode(str, enum.Enum):
    FREE = "free"
    PROTOCOL = "protocol"


def shot_generator(seed: int, stream: int, shot: int) -> np.random.Generator:
    """Counter-based stream for one shot; independent of evaluation order."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(stream, shot))))


def sample_velocities(seed: int, stream: int, shots: Iterable[int], n_atoms: int, sigma: float) -> np.ndarray:
    return np.stack([shot_generator(seed, stream, s).normal(0.0, sigma, n_atoms) for s in shots])


def mc_efficiency(
    config: ExperimentConfig,
    mode: Mode | str,
    *,
    stream: int = 0,
    ideal_pulses: bool = False,
    decay: bool = True,
    zero_velocity: bool = False,
    geometry: DerivedGeometry | None = None,
) -> EfficiencyPoint:
    """Monte Carlo retrieval efficiency at ``config.t_s``.

    Each shot draws ``n_atoms`` velocities from N(0, sigma_v^2), evolves every atom
    through the storage sequence and takes the squared overlap with the W state
    phase-matched at the moment of retrieval. Returns the shot mean and its
    standard error. ``stream`` separates the random streams of different grid
    points sharing one seed. ``zero_velocity`` freezes every atom (test hook).
    """
    config = validate(config)
    mode = Mode(mode)
    geometry = derive_geometry(config) if geometry is None else geometry
    t_s = config.t_s
    if mode is Mode.PROTOCOL:
        t_w = float(optimal_wait(t_s, geometry)) if config.t_w is None else config.t_w
        if t_w < 0 or t_s < t_w + 2 * geometry.t_pi:
            raise SequenceDoesNotFit(f"sequence does not fit (t_s={t_s!r}, t_w={t_w!r}, t_pi={geometry.t_pi!r})")
        budget = DecayBudget.for_protocol(t_s, t_w, geometry.t_pi)
    else:
        t_w = None
        budget = DecayBudget.free(t_s)
    envelope = decay_envelope(budget, config.tau_r1, config.tau_r2) if decay else 1.0

    n_atoms, n_shots = config.n_atoms, config.n_shots
    block = max(1, _BLOCK_SIZE // n_atoms)
    per_shot = np.empty(n_shots)
    for start in range(0, n_shots, block):
        shots = range(start, min(start + block, n_shots))
        if zero_velocity:
            v = np.zeros((len(shots), n_atoms))
        else:
            v = sample_velocities(config.seed, stream, shots, n_atoms, geometry.sigma_v)
        if mode is Mode.FREE:
            amplitudes = np.ones_like(v, dtype=complex)
        elif ideal_pulses:
            amplitudes = ideal_sequence_amplitude(v, t_w, geometry)
        else:
            amplitudes, _ = sequence_amplitudes(v, t_w, geometry)
        per_shot[start : start + len(shots)] = collective_efficiency(amplitudes, geometry.k * v * t_s)
    per_shot *= envelope
    mean = float(np.mean(per_shot))
    std_error = float(np.std(per_shot, ddof=1) / math.sqrt(n_shots)) if n_shots > 1 else 0.0
    return EfficiencyPoint(t_s, mean, std_error)


class ReadoutMap(str, enum.Enum):
    SATURATING = "saturating"
    LINEAR = "linear"

    def __call__(self, od):
        od = np.asarray(od, dtype=float)
        if self is ReadoutMap.LINEAR:
            return od[()]
        return ((1.0 - np.exp(-od / 2.0)) ** 2)[()]


@dataclass(frozen=True)
class ODModel:
    od0: float
    tau_od: float
    readout_map: ReadoutMap = ReadoutMap.SATURATING

    def __post_init__(self):
        if not self.od0 > 0 or not self.tau_od > 0:
            raise ValueError(f"od0 and tau_od must be positive (od0={self.od0!r}, tau_od={self.tau_od!r})")
        object.__setattr__(self, "readout_map", ReadoutMap(self.readout_map))

    @classmethod
    def from_config(cls, config: ExperimentConfig, readout_map: ReadoutMap | str = ReadoutMap.SATURATING) -> "ODModel":
        return cls(config.od0, config.tau_od, ReadoutMap(readout_map))


def od(t_s, model: ODModel):
    """Gaussian optical-depth decay od0*exp(-(t_s/tau_od)^2)."""
    t_s = np.asarray(t_s, dtype=float)
    if np.any(t_s < 0):
        raise ValueError("storage time must be non-negative")
    return (model.od0 * np.exp(-((t_s / model.tau_od) ** 2)))[()]


def _loss_factor(t_s: float, model: ODModel) -> float:
    depth = float(od(t_s, model))
    if depth < 1e-6:
        raise CorrectionDiverges(f"optical depth {depth!r} at t_s={t_s!r} is too small to correct")
    return float(model.readout_map(depth) / model.readout_map(model.od0))


def od_correction(raw: EfficiencyPoint, model: ODModel) -> EfficiencyPoint:
    """Undo atom loss: scale by g(od0)/g(od(t_s)); the standard error scales alike."""
    factor = 1.0 / _loss_factor(raw.control_value, model)
    return EfficiencyPoint(raw.control_value, raw.efficiency * factor, raw.std_error * factor)


def apply_od_loss(point: EfficiencyPoint, model: ODModel) -> EfficiencyPoint:
    """Forward model of :func:`od_correction`: what a loss-free point looks like after atom loss."""
    factor = _loss_factor(point.control_value, model)
    return EfficiencyPoint(point.control_value, point.efficiency * factor, point.std_error * factor)


def check_bounds(values: Sequence[float], slack: float = 0.0) -> bool:
    """True if every non-NaN value lies in [0, 1 + slack]."""
    arr = np.asarray(values, dtype=float)
    finite = arr[~np.isnan(arr)]
    return bool(np.all((finite >= 0) & (finite <= 1 + slack)))
