"""Canned configs that regenerate the desk-scale analog of each figure panel.

Every recipe carries a fixed seed so its tables are reproducible.
"""

from __future__ import annotations

from .config import ExperimentConfig, validate_mapping

RECIPE_SEED = 1

_RECIPES: dict[str, dict] = {
    "fig4a": {
        "experiment": "micromotion_spectrum",
        "parameters": {"stray_fields": ["0 V/m", "2.5 V/m", "5 V/m", "10 V/m"],
                       "excitation_depths": [1e-3], "axis": "x", "field_axis": "x"},
    },
    "fig4b": {
        "experiment": "micromotion_spectrum",
        "parameters": {"mode": "required_depth", "stray_fields": ["1 V/m", "2 V/m", "5 V/m", "10 V/m", "20 V/m"],
                       "target_excess": 0.002, "settle_cycles": 1500, "average_cycles": 400},
    },
    "micromotion_rf_phase": {"experiment": "rf_phase_contrast", "parameters": {}},
    "micromotion_lineshape": {"experiment": "lineshape", "parameters": {}},
    "fig5a": {
        "experiment": "cool_and_measure", "shots": 500,
        "parameters": {"iterations": 0, "nbar_doppler": 4.5},
    },
    "fig5b": {
        "experiment": "cool_and_measure", "shots": 500,
        "parameters": {"iterations": 50, "nbar_doppler": 4.5},
    },
    "fig5c": {
        "experiment": "heating_rate", "shots": 500,
        "parameters": {"heating_rate": "0.8 /ms", "delays": {"start": "0 ms", "stop": "1 ms", "num": 6}},
    },
    "fig6": {
        "experiment": "detection_fidelity", "shots": 100_000,
        "parameters": {"threshold": 1.5, "windows": [f"{k / 10:g} ms" for k in range(1, 31)]},
    },
    "fig7a": {
        "experiment": "flop", "shots": 100,
        "parameters": {"branch": "carrier", "omega0": "5 kHz", "eta": 0.0, "t_max": "0.4 ms", "points": 81},
    },
    "fig7b": {
        "experiment": "ramsey", "shots": 25,
        "parameters": {"table": "fringes", "delays": ["0.1 s", "1 s", "2.4 s"], "n_phases": 16},
    },
    "fig7c_ramsey": {"experiment": "ramsey", "shots": 10, "parameters": {"n_phases": 10}},
    "fig7c_echo": {"experiment": "spin_echo", "shots": 10, "parameters": {"n_phases": 10}},
    "raman_echo": {
        "experiment": "spin_echo", "shots": 10,
        "parameters": {"sigma_dynamic": "2.2980250287968373 rad/s", "n_phases": 10},
    },
    "trap": {"experiment": "trap_characterize", "parameters": {}},
    "comb": {"experiment": "comb_plan", "parameters": {}},
}


def recipe_names() -> list[str]:
    return list(_RECIPES)


def get_recipe(name: str) -> ExperimentConfig:
    if name not in _RECIPES:
        import difflib

        hint = difflib.get_close_matches(name, _RECIPES, n=1)
        raise ValueError(f"unknown recipe {name!r}" + (f"; did you mean {hint[0]!r}?" if hint else ""))
    data = {"seed": RECIPE_SEED, "output_path": f"runs/{name}", **_RECIPES[name]}
    return validate_mapping(data)


def figure_recipes() -> list[tuple[str, ExperimentConfig]]:
    """All canned configs as ``(name, config)`` pairs."""
    return [(name, get_recipe(name)) for name in _RECIPES]
