import dataclasses
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from polariton_echo.quantities import (
    CONSTANTS,
    ConfigError,
    ExperimentConfig,
    ValidatedConfig,
    config_from_mapping,
    config_to_mapping,
    load_config,
    cesium_config,
    sigma_v,
    validate,
)

CONFIGS = __import__("pathlib").Path(__file__).parents[1] / "configs"


def test_constants_positive_and_consistent():
    assert CONSTANTS.boltzmann_constant > 0
    assert CONSTANTS.atomic_mass_unit > 0
    assert CONSTANTS.cesium_mass > 0
    assert CONSTANTS.cesium_mass / CONSTANTS.atomic_mass_unit == pytest.approx(132.905, rel=1e-4)


def test_default_config_is_valid():
    config = validate(ExperimentConfig())
    assert isinstance(config, ValidatedConfig)
    assert (config.sign_signal, config.sign_coupling, config.sign_r3, config.sign_r4) == (1, -1, -1, 1)
    assert config.lambda_signal == 852e-9 and config.lambda_coupling == 509e-9


def test_zero_temperature_rejected():
    with pytest.raises(ConfigError) as exc:
        validate(ExperimentConfig(temperature=0.0))
    assert any("temperature must be positive" in e and "0.0" in e for e in exc.value.errors)


def test_copropagating_rephasing_beams_rejected():
    with pytest.raises(ConfigError) as exc:
        validate(ExperimentConfig(sign_r3=1, sign_r4=1))
    assert any("rephasing beams must counter-propagate" in e for e in exc.value.errors)


def test_all_violations_reported():
    with pytest.raises(ConfigError) as exc:
        validate(ExperimentConfig(temperature=-1.0, lambda_signal=0.0, n_atoms=0, tau_r2=0.0, sign_signal=-1))
    fields = " ".join(exc.value.errors)
    for name in ("temperature", "lambda_signal", "n_atoms", "tau_r2", "counter-propagate"):
        assert name in fields
    assert len(exc.value.errors) >= 5


def test_validate_is_idempotent():
    once = validate(ExperimentConfig())
    assert validate(once) is once


def test_replace_revalidates():
    config = cesium_config()
    with pytest.raises(ConfigError):
        dataclasses.replace(config, temperature=-5.0)


def test_sigma_v_at_40_microkelvin():
    assert sigma_v(cesium_config()) == pytest.approx(0.0500, abs=2e-4)


def test_sigma_v_at_160_is_double():
    assert sigma_v(cesium_config(temperature=160e-6)) == pytest.approx(2 * sigma_v(cesium_config()), rel=1e-12)


@given(st.floats(min_value=1e-9, max_value=1e3))
def test_sigma_v_square_root_scaling(temperature):
    low = sigma_v(cesium_config(temperature=temperature))
    high = sigma_v(cesium_config(temperature=4 * temperature))
    assert high == pytest.approx(2 * low, rel=1e-12)


def test_shipped_config_matches_defaults():
    assert load_config(CONFIGS / "cesium.toml") == cesium_config()


def test_file_units_are_converted():
    config = config_from_mapping({"rephasing": {"omega_r_MHz": 1.0}, "storage": {"t_s_us": 2.79}})
    assert config.omega_r_override == pytest.approx(2 * math.pi * 1e6)
    assert config.t_s == pytest.approx(2.79e-6)


def test_unknown_keys_and_tables_are_errors():
    with pytest.raises(ConfigError) as exc:
        config_from_mapping({"ensemble": {"temprature_uK": 40}, "extras": {}})
    assert len(exc.value.errors) == 2


def test_mapping_round_trip():
    config = cesium_config(omega_r_override=2 * math.pi * 1.1e6, t_w=0.5e-6)
    again = config_from_mapping(config_to_mapping(config))
    for field in dataclasses.fields(config):
        a, b = getattr(config, field.name), getattr(again, field.name)
        assert a == pytest.approx(b, rel=1e-14), field.name
