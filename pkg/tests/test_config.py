import dataclasses
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surftrap import (coherence, cooling, detection, frequency_comb, heating_analysis, micromotion,
                      spin_motion, trap_model)
from surftrap.config import (SCHEMA, UNITS, ConfigError, format_quantity, parse_quantity,
                             validate_config, validate_mapping, with_overrides)
from surftrap.constants import IonConstants
from surftrap.recipes import figure_recipes, get_recipe

MODULE_TYPES = [spin_motion.PulseSpec, cooling.CoolingSchedule, cooling.CoolingMode, cooling.HeatingProcess,
                heating_analysis.SidebandProbe, detection.DetectionModel, coherence.DephasingModel,
                micromotion.RfTrapDynamics, micromotion.Beam, micromotion.Readout,
                micromotion.CompensationSearch, trap_model.TrapGeometry, trap_model.TrapDrive,
                frequency_comb.CombConfig, IonConstants]

# fields deliberately not exposed in config files
NOT_CONFIGURABLE = {
    "CoolingMode.label",  # display name only
    "RfTrapDynamics.charge",  # singly charged ion throughout
    "IonConstants.charge",
    "RfTrapDynamics._params",  # derived Mathieu parameters cache
}


def test_minimal_flop_fills_defaults():
    cfg = validate_config('experiment = "flop"\n')
    assert cfg.parameters["branch"] == "blue"
    assert cfg.parameters["omega0"] == pytest.approx(2 * math.pi * 150e3)
    assert cfg.parameters["t_max"] == pytest.approx(120e-6)
    assert cfg.seed == 0 and cfg.shots == 0
    assert set(cfg.parameters) == set(SCHEMA["flop"])


def test_negative_shots_names_field():
    with pytest.raises(ConfigError) as err:
        validate_config('experiment = "flop"\nshots = -5\n')
    assert err.value.issues[0].path == "shots"
    assert err.value.issues[0].line == 2


def test_unknown_parameter_suggests_nearest():
    text = 'experiment = "flop"\n\n[parameters]\nnbra = 0.5\n'
    with pytest.raises(ConfigError) as err:
        validate_config(text)
    issue = err.value.issues[0]
    assert issue.path == "parameters.nbra" and issue.line == 4
    assert "'nbar'" in issue.message


def test_unknown_experiment_and_top_level_key():
    with pytest.raises(ConfigError) as err:
        validate_config('experiment = "flip"\nsede = 3\n')
    text = str(err.value)
    assert "'flop'" in text and "'seed'" in text
    assert len(err.value.issues) == 2


def test_errors_are_aggregated_and_line_anchored():
    text = ('experiment = "flop"\n[parameters]\nomega0 = 150000\neta = 2.0\n'
            't_max = "120 parsec"\n')
    with pytest.raises(ConfigError) as err:
        validate_config(text)
    lines = {i.path: i.line for i in err.value.issues}
    assert lines == {"parameters.omega0": 3, "parameters.eta": 4, "parameters.t_max": 5}
    assert "explicit unit" in str(err.value)


def test_wrong_unit_kind():
    with pytest.raises(ValueError, match="not a time unit"):
        parse_quantity("3 MHz", "time")
    with pytest.raises(ValueError, match="did you mean"):
        parse_quantity("3 Mhz", "frequency")


def test_unit_conversions():
    assert parse_quantity("2.1 MHz", "frequency") == pytest.approx(2 * math.pi * 2.1e6)
    assert parse_quantity("0.8 /ms", "rate") == pytest.approx(800.0)
    assert parse_quantity("369.5 nm", "length") == pytest.approx(369.5e-9)
    assert parse_quantity("45 deg", "angle") == pytest.approx(math.pi / 4)


def test_toml_syntax_error_reports_line():
    with pytest.raises(ConfigError) as err:
        validate_config('experiment = "flop"\nseed = = 3\n')
    assert err.value.issues[0].line == 2


def test_sampled_experiments_need_shots():
    with pytest.raises(ConfigError):
        validate_mapping({"experiment": "ramsey", "shots": 0})


def test_fixed_rule_needs_duration():
    with pytest.raises(ConfigError, match="fixed_duration"):
        validate_mapping({"experiment": "cool_and_measure", "parameters": {"pulse_rule": "fixed"}})


def test_range_tables():
    cfg = validate_mapping({"experiment": "detection_fidelity",
                            "parameters": {"windows": {"start": "1 ms", "stop": "4 ms", "num": 4}}})
    assert cfg.parameters["windows"] == pytest.approx((1e-3, 2e-3, 3e-3, 4e-3))
    with pytest.raises(ConfigError):
        validate_mapping({"experiment": "detection_fidelity",
                          "parameters": {"windows": {"start": "1 ms", "num": 4}}})


def test_schema_closure():
    targets = {t for schema in SCHEMA.values() for p in schema.values() for t in p.targets}
    fields = {f"{c.__name__}.{f.name}" for c in MODULE_TYPES for f in dataclasses.fields(c)}
    assert fields - targets == NOT_CONFIGURABLE
    assert targets <= fields  # no stale target names


def test_schema_defaults_validate():
    for experiment in SCHEMA:
        validate_mapping({"experiment": experiment, "shots": 10})


def test_recipes_validate_and_round_trip():
    for name, cfg in figure_recipes():
        again = validate_config(cfg.to_toml())
        assert again == cfg, name
    with pytest.raises(ValueError, match="fig5c"):
        get_recipe("fig5x")


def test_overrides():
    cfg = with_overrides(get_recipe("fig5c"), seed=9, shots=40)
    assert (cfg.seed, cfg.shots) == (9, 40)
    assert cfg.parameters == get_recipe("fig5c").parameters


_finite = st.floats(min_value=1e-3, max_value=1e3, allow_nan=False)


@given(kind=st.sampled_from(sorted(UNITS)), value=_finite, data=st.data())
def test_quantity_round_trip(kind, value, data):
    unit = data.draw(st.sampled_from(sorted(UNITS[kind])))
    si = value * UNITS[kind][unit]
    assert parse_quantity(format_quantity(si, unit, kind), kind) == pytest.approx(si, rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(branch=st.sampled_from(["carrier", "red", "blue"]), nbar=st.floats(0, 20),
       omega_khz=_finite, points=st.integers(2, 500), seed=st.integers(0, 2**64 - 1),
       shots=st.integers(0, 10**6))
def test_config_text_round_trip(branch, nbar, omega_khz, points, seed, shots):
    cfg = validate_mapping({"experiment": "flop", "seed": seed, "shots": shots,
                            "parameters": {"branch": branch, "nbar": nbar, "omega0": f"{omega_khz!r} kHz",
                                           "points": points}})
    again = validate_config(cfg.to_toml())
    assert again == cfg
    assert again.snapshot() == cfg.snapshot()
