import math
from pathlib import Path

import hypothesis
import numpy as np
import pytest

from polariton_echo import derive_geometry, cesium_config
from polariton_echo.phase import DerivedGeometry

hypothesis.settings.register_profile("default", deadline=None, max_examples=60)
hypothesis.settings.register_profile("fast", deadline=None, max_examples=10)
hypothesis.settings.load_profile("default")

TWO_PI = 2 * math.pi
CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"

_acceptance_lines: list[str] = []


@pytest.fixture
def acceptance_report():
    def report(number, name, passed, detail=""):
        _acceptance_lines.append(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {name}  {detail}".rstrip())
        print(_acceptance_lines[-1])
        return passed

    return report


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture
def cesium():
    """Cesium config with the quoted round Rabi frequency 2pi x 1 MHz."""
    return cesium_config(omega_r_override=TWO_PI * 1e6)


@pytest.fixture
def geometry(cesium):
    return derive_geometry(cesium)


@pytest.fixture
def mirrored(cesium):
    """Same setup with the axis reversed, so k and k_r come out positive."""
    import dataclasses

    return dataclasses.replace(cesium, sign_signal=-1, sign_coupling=1, sign_r3=1, sign_r4=-1)


@pytest.fixture
def mirrored_geometry(mirrored):
    return derive_geometry(mirrored)


def make_geometry(k=4.97e6, k_r=2.469e7, omega_r=TWO_PI * 1e6, sigma_v=0.05) -> DerivedGeometry:
    return DerivedGeometry(k, k_r, omega_r, sigma_v)


def rk4(f, y0, t0, t1, n):
    """Generic fixed-step RK4 for dy/dt = f(t, y)."""
    h = (t1 - t0) / n
    y = np.array(y0, dtype=complex)
    t = t0
    for _ in range(n):
        k1 = f(t, y)
        k2 = f(t + h / 2, y + h / 2 * k1)
        k3 = f(t + h / 2, y + h / 2 * k2)
        k4 = f(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return y
