import json

import numpy as np
import pytest

from surftrap import __version__
from surftrap.cli import main
from surftrap.config import validate_config
from surftrap.recipes import get_recipe, recipe_names
from surftrap.runner import run


def _write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return str(p)


def _csv(path):
    return np.genfromtxt(path, delimiter=",", names=True)


def test_recipes_listing(capsys):
    assert main(["recipes"]) == 0
    out = capsys.readouterr().out
    for name in recipe_names():
        assert name in out


def test_schema_listing(capsys):
    assert main(["schema", "flop"]) == 0
    assert "omega0" in capsys.readouterr().out


def test_flop_red_from_ground_state_is_dark(tmp_path):
    cfg = _write(tmp_path, 'experiment = "flop"\n[parameters]\nbranch = "red"\nnbar = 0.0\n')
    assert main(["flop", "--config", cfg, "--out", str(tmp_path / "out")]) == 0
    data = _csv(tmp_path / "out" / "results.csv")
    assert np.all(data["p_bright"] == 0.0)


def test_heating_rate_defaults_recover_injected_rate(tmp_path):
    assert main(["heating_rate", "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "run.json").read_text())["summary"]
    assert summary["configured_rate_per_s"] == pytest.approx(800.0)
    assert abs(summary["rate_per_s"] - 800.0) < 3 * summary["rate_uncertainty_per_s"]
    assert summary["rate_per_s"] == pytest.approx(800.0, abs=100.0)


def test_run_record_contents(tmp_path):
    cfg = get_recipe("comb")
    record, _ = run(cfg, tmp_path)
    data = json.loads((tmp_path / "run.json").read_text())
    assert data["config"] == cfg.snapshot()
    assert data["version"] == __version__
    assert data["results"] == "results.csv"
    assert data["wall_clock_s"] >= 0
    # the embedded config reruns to the same table
    again = validate_config(cfg.to_toml())
    run(again, tmp_path / "again")
    assert (tmp_path / "again" / "results.csv").read_bytes() == (tmp_path / "results.csv").read_bytes()


def test_seed_override_changes_sampled_results(tmp_path):
    assert main(["run", "--recipe", "fig7c_ramsey", "--out", str(tmp_path / "a")]) == 0
    assert main(["run", "--recipe", "fig7c_ramsey", "--seed", "2", "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "results.csv").read_bytes() != (tmp_path / "b" / "results.csv").read_bytes()
    seed = json.loads((tmp_path / "b" / "run.json").read_text())["config"]["seed"]
    assert seed == 2


@pytest.mark.parametrize("recipe", ["fig4a", "fig5c", "fig6", "fig7c_echo", "micromotion_rf_phase"])
def test_rerun_is_byte_identical_across_workers(tmp_path, recipe):
    assert main(["run", "--recipe", recipe, "--workers", "1", "--out", str(tmp_path / "a")]) == 0
    assert main(["run", "--recipe", recipe, "--workers", "4", "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()


def test_config_errors_exit_2(tmp_path, capsys):
    bad = _write(tmp_path, 'experiment = "flop"\nshots = -1\n')
    assert main(["flop", "--config", bad]) == 2
    assert "shots" in capsys.readouterr().err
    assert main(["run", "--config", bad]) == 2
    assert main(["validate", bad]) == 2
    assert main(["run"]) == 2
    assert main(["run", "--recipe", "nope"]) == 2
    assert main(["ramsey", "--recipe", "fig5c"]) == 2
    assert main(["flop", "--workers", "0"]) == 2
    assert main(["flop", "--config", str(tmp_path / "missing.toml")]) == 2


def test_instability_exits_3(tmp_path):
    cfg = _write(tmp_path, 'experiment = "trap_characterize"\n[parameters]\nv_rf = "1500 V"\n')
    assert main(["trap_characterize", "--config", cfg, "--out", str(tmp_path / "o")]) == 3
    cfg = _write(tmp_path, 'experiment = "rf_phase_contrast"\n[parameters]\nrf_frequency = "5 MHz"\n', "b.toml")
    assert main(["rf_phase_contrast", "--config", cfg, "--out", str(tmp_path / "o")]) == 3


def test_other_module_failure_exits_1(tmp_path):
    cfg = _write(tmp_path, 'experiment = "heating_rate"\nshots = 0\n[parameters]\ndelays = ["1 ms", "1 ms"]\n')
    assert main(["heating_rate", "--config", cfg, "--out", str(tmp_path / "o")]) == 1


def test_validate_prints_resolved_config(tmp_path, capsys):
    cfg = _write(tmp_path, 'experiment = "comb_plan"\n')
    assert main(["validate", cfg]) == 0
    text = capsys.readouterr().out
    assert validate_config(text) == validate_config('experiment = "comb_plan"\n')
