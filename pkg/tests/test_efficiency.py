import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from polariton_echo.efficiency import (
    CorrectionDiverges,
    DecayBudget,
    EfficiencyCurve,
    EfficiencyPoint,
    ODModel,
    SequenceDoesNotFit,
    analytic_free_decay,
    analytic_protocol,
    apply_od_loss,
    collective_efficiency,
    decay_envelope,
    gaussian_average,
    mc_efficiency,
    od,
    od_correction,
    pulse_fidelity,
)
from polariton_echo.phase import derive_geometry, optimal_wait
from polariton_echo.pulses import transfer_probability

from conftest import TWO_PI


def small(config, **kw):
    return dataclasses.replace(config, n_atoms=kw.pop("n_atoms", 2000), n_shots=kw.pop("n_shots", 100), **kw)


# analytic routes


def test_free_decay_start(geometry):
    assert analytic_free_decay(0.0, geometry) == 1.0
    assert analytic_free_decay(0.0, geometry, tau_r1=150e-6) == 1.0


def test_free_decay_motional_time(geometry):
    assert geometry.motional_time == pytest.approx(4.02e-6, abs=0.01e-6)
    assert analytic_free_decay(geometry.motional_time, geometry) == pytest.approx(math.exp(-1), rel=1e-12)


def test_free_decay_against_quadrature(geometry):
    # independent route: |E[exp(i k v t)]|^2 by adaptive quadrature over the Maxwell-Boltzmann density
    s = geometry.sigma_v
    for t in (1e-6, 3e-6, 6e-6):
        def density(v):
            return math.exp(-(v**2) / (2 * s * s)) / math.sqrt(TWO_PI * s * s)

        re = integrate.quad(lambda v: density(v) * math.cos(geometry.k * v * t), -10 * s, 10 * s, limit=200)[0]
        assert analytic_free_decay(t, geometry) == pytest.approx(re**2, rel=1e-9)


def test_protocol_complete_rephasing(geometry):
    for t_s in (3e-6, 5e-6, 7e-6, 15e-6):
        t_w = optimal_wait(t_s, geometry)
        assert analytic_protocol(t_s, t_w, geometry, ideal_pulses=True) == pytest.approx(1.0, abs=1e-14)


def test_protocol_gaussian_in_wait(geometry):
    t_opt = optimal_wait(7e-6, geometry)
    w = geometry.wait_width
    assert w == pytest.approx(0.81e-6, abs=0.005e-6)
    for sign in (1, -1):
        value = analytic_protocol(7e-6, t_opt + sign * w, geometry, ideal_pulses=True)
        assert value == pytest.approx(math.exp(-1), rel=1e-10)


@pytest.mark.parametrize("t_s", [3e-6, 5e-6, 7e-6, 10e-6])
def test_protocol_argmax_at_optimal_wait(geometry, t_s):
    t_opt = float(optimal_wait(t_s, geometry))
    grid = np.linspace(max(0.0, t_opt - 1e-6), t_opt + 1e-6, 201)
    grid = grid[grid + 2 * geometry.t_pi <= t_s]
    values = [analytic_protocol(t_s, t, geometry, 150e-6, 180e-6) for t in grid]
    step = grid[1] - grid[0]
    assert abs(grid[int(np.argmax(values))] - t_opt) <= step


def test_protocol_sequence_must_fit(geometry):
    with pytest.raises(SequenceDoesNotFit):
        analytic_protocol(1.2e-6, 0.5e-6, geometry)
    with pytest.raises(SequenceDoesNotFit):
        analytic_protocol(7e-6, -1e-9, geometry)


def test_pulse_fidelity_against_quadrature(geometry):
    s = geometry.sigma_v

    def integrand(v):
        p = transfer_probability(geometry.omega_r, geometry.k_r * v, geometry.t_pi)
        return p * math.exp(-(v**2) / (2 * s * s)) / math.sqrt(TWO_PI * s * s)

    expected = integrate.quad(integrand, -12 * s, 12 * s, limit=200)[0]
    assert pulse_fidelity(geometry) == pytest.approx(expected, rel=1e-12)


def test_gaussian_average_moments():
    assert gaussian_average(lambda v: v**2, 0.3) == pytest.approx(0.09, rel=1e-13)
    assert gaussian_average(lambda v: v**4, 0.3) == pytest.approx(3 * 0.3**4, rel=1e-13)


# decay


def test_decay_envelope_examples():
    assert decay_envelope(DecayBudget.for_protocol(0.0, 0.0, 0.0), 150e-6, 180e-6) == 1.0
    budget = DecayBudget.for_protocol(7e-6, 0.909e-6, 0.5e-6)
    assert budget.time_in_r2 == pytest.approx(1.409e-6)
    assert budget.time_in_r1 == pytest.approx(5.591e-6)
    assert decay_envelope(budget, 150e-6, 180e-6) == pytest.approx(0.956, abs=5e-4)


@given(st.floats(min_value=2e-6, max_value=50e-6), st.floats(min_value=0.0, max_value=1.0))
def test_decay_equal_lifetimes_independent_of_split(t_s, frac):
    t_pi = 0.5e-6
    t_w = frac * (t_s - 2 * t_pi)
    budget = DecayBudget.for_protocol(t_s, t_w, t_pi)
    assert budget.time_in_r1 + budget.time_in_r2 == pytest.approx(t_s, rel=1e-12)
    assert decay_envelope(budget, 100e-6, 100e-6) == pytest.approx(math.exp(-t_s / 100e-6), rel=1e-12)


def test_negative_budget_rejected():
    with pytest.raises(SequenceDoesNotFit):
        DecayBudget.for_protocol(1e-6, 2e-6, 0.5e-6)


# Monte Carlo


def test_mc_frozen_atoms(cesium):
    for mode in ("free", "protocol"):
        p = mc_efficiency(small(cesium, n_shots=5), mode, zero_velocity=True, decay=False)
        assert p.efficiency == pytest.approx(1.0, abs=1e-12)
        assert p.std_error == pytest.approx(0.0, abs=1e-12)


def test_mc_decay_factor_is_deterministic(cesium):
    cfg = small(cesium, n_shots=3)
    with_decay = mc_efficiency(cfg, "free", zero_velocity=True)
    assert with_decay.efficiency == pytest.approx(math.exp(-cesium.t_s / cesium.tau_r1), rel=1e-12)


@pytest.mark.parametrize("t_s", [1e-6, 2e-6, 4e-6])
def test_mc_free_matches_analytic(cesium, geometry, t_s):
    cfg = dataclasses.replace(cesium, t_s=t_s)
    p = mc_efficiency(cfg, "free", decay=False)
    assert abs(p.efficiency - analytic_free_decay(t_s, geometry)) <= 3 * p.std_error


def test_mc_protocol_strong_drive_matches_analytic(cesium):
    cfg = small(cesium, omega_r_override=20 * TWO_PI * 1e6, n_atoms=4000, n_shots=200)
    g = derive_geometry(cfg)
    p = mc_efficiency(cfg, "protocol", decay=False)
    assert abs(p.efficiency - analytic_protocol(cfg.t_s, optimal_wait(cfg.t_s, g), g)) < 0.01


def test_mc_reproducible(cesium):
    cfg = small(cesium, n_atoms=500, n_shots=30)
    a = mc_efficiency(cfg, "protocol", stream=7)
    b = mc_efficiency(cfg, "protocol", stream=7)
    assert a == b
    c = mc_efficiency(cfg, "protocol", stream=8)
    assert c.efficiency != a.efficiency


def test_mc_independent_of_block_size(cesium, monkeypatch):
    import polariton_echo.efficiency as eff

    cfg = small(cesium, n_atoms=300, n_shots=40)
    reference = mc_efficiency(cfg, "protocol")
    monkeypatch.setattr(eff, "_BLOCK_SIZE", 300 * 7)
    assert mc_efficiency(cfg, "protocol") == reference


def test_mc_within_bounds(cesium):
    for t_w in (0.0, 0.5e-6, 0.909e-6, 2e-6):
        p = mc_efficiency(small(cesium, t_w=t_w), "protocol")
        assert 0.0 <= p.efficiency <= 1.0 + 3 * p.std_error


def test_mc_protocol_sequence_must_fit(cesium):
    with pytest.raises(SequenceDoesNotFit):
        mc_efficiency(small(cesium, t_s=1e-6), "protocol")


def test_global_phase_irrelevant():
    rng = np.random.default_rng(3)
    amps = np.exp(1j * rng.normal(size=(4, 1000))) * rng.uniform(0.5, 1.0, size=(4, 1000))
    phases = rng.normal(size=(4, 1000))
    a = collective_efficiency(amps, phases)
    b = collective_efficiency(amps * np.exp(-1j * math.pi), phases)
    np.testing.assert_allclose(a, b, atol=1e-14, rtol=0)


# optical depth


def test_od_examples():
    m = ODModel(3.0, 15e-6)
    assert od(0.0, m) == 3.0
    assert od(15e-6, m) == pytest.approx(3.0 / math.e, rel=1e-14)
    values = od(np.linspace(0, 40e-6, 50), m)
    assert np.all(np.diff(values) < 0)


def test_od_model_validation():
    with pytest.raises(ValueError):
        ODModel(0.0, 1e-6)


def test_od_correction_identity_at_start():
    m = ODModel(3.0, 15e-6)
    p = EfficiencyPoint(0.0, 0.4, 0.01)
    assert od_correction(p, m) == p


def test_linear_map_half_od_doubles():
    m = ODModel(2.0, 10e-6, "linear")
    t_half = 10e-6 * math.sqrt(math.log(2))
    p = od_correction(EfficiencyPoint(t_half, 0.2, 0.02), m)
    assert p.efficiency == pytest.approx(0.4, rel=1e-12)
    assert p.std_error == pytest.approx(0.04, rel=1e-12)


@pytest.mark.parametrize("readout", ["saturating", "linear"])
def test_od_round_trip(geometry, readout):
    m = ODModel(3.0, 15e-6, readout)
    for t in np.linspace(3e-6, 30e-6, 12):
        clean = EfficiencyPoint(t, analytic_protocol(t, optimal_wait(t, geometry), geometry, 150e-6, 180e-6), 1e-3)
        back = od_correction(apply_od_loss(clean, m), m)
        assert back.efficiency == pytest.approx(clean.efficiency, rel=1e-10)
        assert back.std_error == pytest.approx(clean.std_error, rel=1e-10)


def test_od_correction_diverges():
    m = ODModel(1.0, 1e-6)
    with pytest.raises(CorrectionDiverges):
        od_correction(EfficiencyPoint(10e-6, 0.1), m)


# serialization


def test_curve_csv_format(tmp_path):
    curve = EfficiencyCurve.from_arrays([0.0, 1.5e-6, 2e-6], [1.0, 0.123456789123, float("nan")], [0.0, 1e-4, float("nan")])
    text = curve.to_csv(tmp_path / "c.csv")
    assert text.splitlines()[0] == "control_us,efficiency,std_error"
    assert text.splitlines()[1:] == ["0,1,0", "1.5,0.123456789,0.0001", "2,nan,nan"]
    raw = (tmp_path / "c.csv").read_bytes()
    assert b"\r" not in raw and raw.endswith(b"\n")
    back = EfficiencyCurve.from_csv(tmp_path / "c.csv")
    assert back.control[1] == pytest.approx(1.5e-6)
    assert math.isnan(back.efficiency[2])
