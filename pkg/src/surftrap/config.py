"""Experiment configuration: a TOML file with explicit units.

A config names one experiment, the run-level settings and a ``[parameters]``
table.  Every physical quantity is written as a string carrying its unit,
for example ``trap_frequency = "2.1 MHz"``.  Frequencies given in Hz are
converted to angular frequency (rad/s); rates such as ``"0.8 /ms"`` and
photon count rates stay in events per second.

Validation collects every problem before failing, and each problem is
anchored to the line of the offending key.
"""

from __future__ import annotations

import difflib
import math
import re
from dataclasses import dataclass, field
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

TWO_PI = 2 * math.pi
SEED_MAX = 2**64 - 1

# unit -> factor to SI.  Angular frequencies are stored in rad/s, so Hz-like
# units carry the 2 pi.
UNITS: dict[str, dict[str, float]] = {
    "frequency": {"Hz": TWO_PI, "kHz": TWO_PI * 1e3, "MHz": TWO_PI * 1e6, "GHz": TWO_PI * 1e9,
                  "rad/s": 1.0, "krad/s": 1e3, "Mrad/s": 1e6},
    "rate": {"/s": 1.0, "/ms": 1e3, "/us": 1e6, "/µs": 1e6, "1/s": 1.0, "s^-1": 1.0,
             "Hz": 1.0, "kHz": 1e3, "MHz": 1e6},
    "time": {"s": 1.0, "ms": 1e-3, "us": 1e-6, "µs": 1e-6, "ns": 1e-9},
    "voltage": {"V": 1.0, "mV": 1e-3, "kV": 1e3},
    "field": {"V/m": 1.0, "mV/m": 1e-3, "V/cm": 1e2, "V/mm": 1e3},
    "length": {"m": 1.0, "mm": 1e-3, "um": 1e-6, "µm": 1e-6, "nm": 1e-9},
    "angle": {"rad": 1.0, "mrad": 1e-3, "deg": math.pi / 180},
    "mass": {"kg": 1.0, "u": 1.66053906660e-27, "amu": 1.66053906660e-27},
}
_QUANTITY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(\S.*?)\s*$")

EXPERIMENTS = ("flop", "cool_and_measure", "heating_rate", "detection_fidelity", "ramsey",
               "spin_echo", "micromotion_spectrum", "rf_phase_contrast", "lineshape",
               "trap_characterize", "comb_plan")
RUN_KEYS = ("experiment", "seed", "shots", "output_path", "parameters")


class ConfigError(ValueError):
    """Aggregated validation failure; ``issues`` holds every problem found."""

    def __init__(self, issues):
        issues = [i if isinstance(i, Issue) else Issue("<config>", str(i)) for i in issues]
        self.issues = sorted(issues, key=lambda i: (i.line is None, i.line or 0))
        super().__init__("\n".join(str(i) for i in self.issues))


@dataclass(frozen=True)
class Issue:
    path: str
    message: str
    line: int | None = None

    def __str__(self):
        where = f"line {self.line}: " if self.line else ""
        return f"{where}{self.path}: {self.message}"


def parse_quantity(text: str, kind: str) -> float:
    """``"2.1 MHz"`` -> SI value of ``kind``; raises ValueError with the
    accepted units when the unit is missing or wrong."""
    units = UNITS[kind]
    m = _QUANTITY.match(text)
    if not m:
        raise ValueError(f"expected '<number> <unit>' with unit in {sorted(units)}, got {text!r}")
    value, unit = float(m.group(1)), m.group(2)
    if unit not in units:
        hint = difflib.get_close_matches(unit, units, n=1)
        extra = f" (did you mean {hint[0]!r}?)" if hint else ""
        raise ValueError(f"unit {unit!r} is not a {kind} unit{extra}; use one of {sorted(units)}")
    return value * units[unit]


def format_quantity(value: float, unit: str, kind: str) -> str:
    return f"{value / UNITS[kind][unit]!r} {unit}"


@dataclass(frozen=True)
class Param:
    """One schema entry.

    ``kind`` is a unit kind from ``UNITS`` or one of ``float``, ``int``,
    ``bool``, ``choice``.  ``many`` parameters take a list of values or a
    ``{start, stop, num, spacing}`` table.  ``targets`` names the module
    fields the value feeds (used by the schema-closure check).
    """

    kind: str
    default: Any
    doc: str = ""
    minimum: float | None = None
    maximum: float | None = None
    exclusive_min: bool = False
    choices: tuple = ()
    many: bool = False
    optional: bool = False
    targets: tuple = ()

    def convert(self, raw):
        if self.many:
            return self._convert_many(raw)
        return self._convert_one(raw)

    def _convert_many(self, raw):
        if isinstance(raw, dict):
            unknown = set(raw) - {"start", "stop", "num", "spacing"}
            if unknown or not {"start", "stop", "num"} <= set(raw):
                raise ValueError("range table needs keys start, stop, num (and optional spacing)")
            start, stop = self._convert_one(raw["start"]), self._convert_one(raw["stop"])
            num = raw["num"]
            if not isinstance(num, int) or isinstance(num, bool) or num < 1:
                raise ValueError("range 'num' must be a positive integer")
            spacing = raw.get("spacing", "linear")
            if spacing == "linear":
                return tuple(start + (stop - start) * k / max(num - 1, 1) for k in range(num))
            if spacing == "log":
                if start <= 0 or stop <= 0:
                    raise ValueError("log spacing needs positive start and stop")
                r = math.log(stop / start)
                return tuple(start * math.exp(r * k / max(num - 1, 1)) for k in range(num))
            raise ValueError("spacing must be 'linear' or 'log'")
        if not isinstance(raw, list) or not raw:
            raise ValueError("expected a non-empty list or a {start, stop, num} table")
        return tuple(self._convert_one(r) for r in raw)

    def _convert_one(self, raw):
        k = self.kind
        if k == "bool":
            if not isinstance(raw, bool):
                raise ValueError(f"expected true or false, got {raw!r}")
            return raw
        if k == "choice":
            if raw not in self.choices:
                raise ValueError(f"expected one of {list(self.choices)}, got {raw!r}")
            return raw
        if k == "int":
            if not isinstance(raw, int) or isinstance(raw, bool):
                raise ValueError(f"expected an integer, got {raw!r}")
            value = raw
        elif k == "float":
            if isinstance(raw, bool) or not isinstance(raw, (int, float)):
                raise ValueError(f"expected a number, got {raw!r}")
            value = float(raw)
        else:
            if not isinstance(raw, str):
                raise ValueError(f"physical quantity needs an explicit unit, e.g. "
                                 f"\"{raw} {next(iter(UNITS[k]))}\"")
            value = parse_quantity(raw, k)
        if not math.isfinite(value):
            raise ValueError("value must be finite")
        if self.minimum is not None and (value < self.minimum or (self.exclusive_min and value == self.minimum)):
            op = ">" if self.exclusive_min else ">="
            raise ValueError(f"must be {op} {self.minimum:g}, got {value:g}")
        if self.maximum is not None and value > self.maximum:
            raise ValueError(f"must be <= {self.maximum:g}, got {value:g}")
        return value


def _p(kind, default, doc="", **kw):
    return Param(kind, default, doc, **kw)


_POS = dict(minimum=0.0, exclusive_min=True)
_NONNEG = dict(minimum=0.0)
_PROB = dict(minimum=0.0, maximum=1.0)

_FLOP = {
    "branch": _p("choice", "blue", "transition driven", choices=("carrier", "red", "blue"),
                 targets=("PulseSpec.branch",)),
    "nbar": _p("float", 0.0, "thermal mean phonon number", **_NONNEG),
    "omega0": _p("frequency", "150 kHz", "carrier Rabi frequency", **_POS, targets=("PulseSpec.omega0",)),
    "eta": _p("float", 0.1, "Lamb-Dicke parameter", minimum=0.0, maximum=0.99, targets=("PulseSpec.eta",)),
    "detuning": _p("frequency", "0 Hz", "drive detuning from the transition", targets=("PulseSpec.detuning",)),
    "phase": _p("angle", "0 rad", "drive phase (no effect from a dark start)", targets=("PulseSpec.phase",)),
    "full_lamb_dicke": _p("bool", False, "use full Laguerre matrix elements",
                          targets=("PulseSpec.full_lamb_dicke",)),
    "t_max": _p("time", "120 us", "longest pulse", **_POS, targets=("PulseSpec.duration",)),
    "points": _p("int", 61, "pulse durations from 0 to t_max", minimum=2),
    "contrast": _p("float", 1.0, "readout contrast", **_PROB),
}

_COOLING = {
    "nbar_doppler": _p("float", 4.5, "thermal nbar after Doppler cooling", **_NONNEG),
    "iterations": _p("int", 50, "sideband-cooling iterations", **_NONNEG,
                     targets=("CoolingSchedule.iterations",)),
    "pulse_rule": _p("choice", "pi_at_nbar", "red-pulse length rule",
                     choices=("pi_at_nbar", "pi_at_n1", "fixed"), targets=("CoolingSchedule.pulse_rule",)),
    "fixed_duration": _p("time", None, "pulse length for the fixed rule", **_NONNEG, optional=True,
                         targets=("CoolingSchedule.fixed_duration",)),
    "pump_time": _p("time", "20 us", "optical-pumping time per iteration", **_NONNEG,
                    targets=("CoolingSchedule.pump_time",)),
    "pump_reset_infidelity": _p("float", 0.0, "bright population left after pumping", **_PROB,
                                targets=("CoolingSchedule.pump_reset_infidelity",)),
    "count_per_mode": _p("bool", True, "each iteration pulses every mode",
                         targets=("CoolingSchedule.count_per_mode",)),
    "cool_second_mode": _p("bool", True, "also cool the lower radial mode", targets=("CoolingSchedule.modes",)),
    "heating_rate": _p("rate", "0.8 /ms", "motional heating rate", **_NONNEG,
                       targets=("HeatingProcess.rate", "CoolingSchedule.heating")),
    "heating_model": _p("choice", "birth_death", "heating dynamics",
                        choices=("birth_death", "nbar_increment"), targets=("HeatingProcess.model",)),
    "mode_frequency": _p("frequency", "2.1 MHz", "measured radial mode", **_POS,
                         targets=("CoolingMode.trap_frequency", "IonConstants.mode_frequency")),
    "second_mode_frequency": _p("frequency", "1.48 MHz", "other radial mode", **_POS,
                                targets=("CoolingMode.trap_frequency",)),
    "eta": _p("float", 0.1, "Lamb-Dicke parameter of the measured mode", minimum=0.0, maximum=0.99,
              exclusive_min=True, targets=("CoolingMode.eta", "SidebandProbe.eta")),
    "cooling_omega0": _p("frequency", "150 kHz", "Raman carrier Rabi frequency while cooling", **_POS,
                         targets=("CoolingMode.omega0",)),
    "probe_omega0": _p("frequency", "150 kHz", "Raman carrier Rabi frequency of the probe", **_POS,
                       targets=("SidebandProbe.omega0",)),
    "probe_t_max": _p("time", "120 us", "longest probe pulse", **_POS, targets=("SidebandProbe.t_max",)),
    "probe_points": _p("int", 61, "probe pulse durations", minimum=7, targets=("SidebandProbe.points",)),
    "probe_contrast": _p("float", 1.0, "probe readout contrast", **_PROB, targets=("SidebandProbe.contrast",)),
}

_HEATING = dict(_COOLING)
_HEATING["delays"] = _p("time", {"start": "0 ms", "stop": "1 ms", "num": 5}, "dark delays after cooling",
                        **_NONNEG, many=True)

_DETECTION = {
    "bright_rate": _p("rate", "11000 /s", "detected photon rate of a bright ion", **_POS,
                      targets=("DetectionModel.bright_rate",)),
    "background_rate": _p("rate", "47.5368 /s", "background photon rate", **_NONNEG,
                          targets=("DetectionModel.background_rate",)),
    "depump_tau": _p("time", "7.69865 ms", "mean time before a bright ion pumps dark", **_POS,
                     targets=("DetectionModel.depump_tau",)),
    "repump_tau": _p("time", "10 s", "mean time before a dark ion leaks bright", **_POS,
                     targets=("DetectionModel.repump_tau",)),
    "threshold": _p("float", 1.5, "photon-count threshold", **_NONNEG, targets=("DetectionModel.threshold",)),
    "windows": _p("time", {"start": "0.05 ms", "stop": "3 ms", "num": 24, "spacing": "log"},
                  "detection windows", **_POS, many=True),
}

_COHERENCE = {
    "sigma_static": _p("frequency", "1.1922470894581525 rad/s", "shot-to-shot detuning spread", **_NONNEG,
                       targets=("DephasingModel.sigma_static",)),
    "sigma_dynamic": _p("frequency", "1.723936500174028 rad/s", "Ornstein-Uhlenbeck detuning spread",
                        **_NONNEG, targets=("DephasingModel.sigma_dynamic",)),
    "tau_c": _p("time", "0.6 s", "noise correlation time", **_POS, targets=("DephasingModel.tau_c",)),
    "pulse_infidelity": _p("float", 0.0, "depolarizing error per pulse", **_PROB,
                           targets=("DephasingModel.pulse_infidelity",)),
    "delays": _p("time", {"start": "0.1 s", "stop": "3 s", "num": 30}, "free-evolution delays", **_POS,
                 many=True),
    "n_phases": _p("int", 10, "analysis phases per fringe", minimum=3),
    "weighted": _p("bool", False, "weight the T2 fit by the visibility errors"),
    "table": _p("choice", "visibility", "emit the visibility decay or the raw fringes",
                choices=("visibility", "fringes")),
}

_DYNAMICS = {
    "rf_frequency": _p("frequency", "27.8 MHz", "RF drive", **_POS, targets=("RfTrapDynamics.omega_rf",)),
    "secular_x": _p("frequency", "1.48 MHz", "secular frequency along x", **_POS,
                    targets=("RfTrapDynamics.secular_freqs",)),
    "secular_z": _p("frequency", "2.10 MHz", "secular frequency along z", **_POS,
                    targets=("RfTrapDynamics.secular_freqs",)),
    "damping": _p("frequency", "30 kHz", "laser-cooling velocity damping rate", **_NONNEG,
                  targets=("RfTrapDynamics.damping",)),
    "ion_mass": _p("mass", None, "ion mass (default: 171Yb+)", **_POS, optional=True,
                   targets=("RfTrapDynamics.mass", "IonConstants.mass")),
    "beam_angle": _p("angle", "45 deg", "cooling beam angle from x", targets=("Beam.angle",)),
    "beam_detuning": _p("frequency", "-9.8 MHz", "cooling beam detuning", targets=("Beam.detuning",)),
    "linewidth": _p("frequency", "19.6 MHz", "cooling transition linewidth", **_POS,
                    targets=("Beam.linewidth",)),
    "saturation": _p("float", 0.01, "saturation parameter", **_POS, targets=("Beam.saturation",)),
    "wavelength": _p("length", "369.5 nm", "cooling wavelength", **_POS, targets=("Beam.wavelength",)),
    "settle_cycles": _p("int", 1500, "RF cycles before averaging", **_NONNEG,
                        targets=("Readout.settle_cycles",)),
    "average_cycles": _p("int", 400, "RF cycles averaged", minimum=1, targets=("Readout.average_cycles",)),
}

_SPECTRUM = dict(_DYNAMICS)
_SPECTRUM.update({
    "stray_fields": _p("field", ["0 V/m", "2 V/m", "5 V/m", "10 V/m"], "residual fields at the RF null",
                       many=True, targets=("RfTrapDynamics.stray_field",)),
    "field_axis": _p("choice", "x", "direction of the residual field", choices=("x", "z")),
    "excitation_depths": _p("float", [1e-3], "fractional RF modulation depths", **_POS, many=True,
                            targets=("RfTrapDynamics.excitation",)),
    "axis": _p("choice", "x", "secular resonance probed", choices=("x", "z")),
    "span": _p("frequency", "150 kHz", "half-width of the excitation scan", **_POS),
    "points": _p("int", 41, "excitation frequencies", minimum=3),
    "mode": _p("choice", "spectra", "full spectra or depth needed for a fixed brightness change",
               choices=("spectra", "required_depth")),
    "target_excess": _p("float", 0.002, "brightness change the required depth must produce", **_POS),
    "compensate": _p("bool", False, "run a compensation search for the first stray field"),
    "search_span": _p("field", "20 V/m", "compensation grid half-width", **_POS,
                      targets=("CompensationSearch.span",)),
    "grid_points": _p("int", 9, "compensation grid points per axis", minimum=3,
                      targets=("CompensationSearch.grid_points",)),
    "tolerance": _p("field", "2 mV/m", "compensation field tolerance", **_POS,
                    targets=("CompensationSearch.tolerance",)),
    "rounds": _p("int", 4, "golden-section refinement rounds", minimum=1, targets=("CompensationSearch.rounds",)),
    "max_iterations": _p("int", 60, "golden-section iterations per round", minimum=1,
                         targets=("CompensationSearch.max_iterations",)),
    "objective": _p("choice", "excitation", "compensation signal", choices=("excitation", "rf_phase"),
                    targets=("CompensationSearch.objective",)),
    "search_beam_angle": _p("angle", None, "beam angle used by the search", optional=True,
                            targets=("CompensationSearch.beam_angle",)),
    "search_settle_cycles": _p("int", 300, "settling cycles per search evaluation", **_NONNEG,
                               targets=("CompensationSearch.readout",)),
    "search_average_cycles": _p("int", 300, "averaged cycles per search evaluation", minimum=1,
                                targets=("CompensationSearch.readout",)),
})

_CONTRAST = dict(_DYNAMICS)
_CONTRAST.update({
    "beam_angle": _p("angle", "0 deg", "beam angle from x", targets=("Beam.angle",)),
    "settle_cycles": _p("int", 300, "RF cycles before averaging", **_NONNEG, targets=("Readout.settle_cycles",)),
    "average_cycles": _p("int", 300, "RF cycles averaged", minimum=1, targets=("Readout.average_cycles",)),
    "stray_fields": _p("field", {"start": "0 V/m", "stop": "20 V/m", "num": 5}, "residual field magnitudes",
                       **_NONNEG, many=True, targets=("RfTrapDynamics.stray_field",)),
    "field_axes": _p("choice", ["x", "z"], "directions the field is applied along", choices=("x", "z"),
                     many=True),
})

_LINESHAPE = dict(_CONTRAST)
del _LINESHAPE["field_axes"]
_LINESHAPE.update({
    "beam_angle": _p("angle", "45 deg", "beam angle from x", targets=("Beam.angle",)),
    "stray_fields": _p("field", ["0 V/m", "30 V/m", "100 V/m"], "residual fields along field_axis", many=True,
                       targets=("RfTrapDynamics.stray_field",)),
    "field_axis": _p("choice", "x", "direction of the residual field", choices=("x", "z")),
    "detunings": _p("frequency", {"start": "-100 MHz", "stop": "100 MHz", "num": 201}, "probe laser detunings",
                    many=True),
})

_TRAP = {
    "rf_rail_inner_edge": _p("length", "70 um", "distance from centre to the RF rail inner edge", **_POS,
                             targets=("TrapGeometry.rf_rail_inner_edge",)),
    "rf_rail_width": _p("length", "60 um", "RF rail width", **_POS, targets=("TrapGeometry.rf_rail_width",)),
    "slot_width": _p("length", "100 um", "loading slot width", **_NONNEG, targets=("TrapGeometry.slot_width",)),
    "gap": _p("length", "5 um", "inter-electrode gap", **_NONNEG, targets=("TrapGeometry.gap",)),
    "outer_dc_width": _p("length", "200 um", "outer DC electrode width", **_POS,
                         targets=("TrapGeometry.outer_dc_width",)),
    "inner_left": _p("voltage", "0 V", "inner DC electrode, x < 0", targets=("TrapGeometry.dc_voltages",)),
    "inner_right": _p("voltage", "0 V", "inner DC electrode, x > 0", targets=("TrapGeometry.dc_voltages",)),
    "outer_left": _p("voltage", "0 V", "outer DC electrode, x < 0", targets=("TrapGeometry.dc_voltages",)),
    "outer_right": _p("voltage", "0 V", "outer DC electrode, x > 0", targets=("TrapGeometry.dc_voltages",)),
    "v_rf": _p("voltage", "220 V", "RF amplitude", **_POS, targets=("TrapDrive.v_rf",)),
    "rf_frequency": _p("frequency", "27.8 MHz", "RF drive", **_POS, targets=("TrapDrive.omega_rf",)),
    "ion_mass": _p("mass", None, "ion mass (default: 171Yb+)", **_POS, optional=True,
                   targets=("IonConstants.mass", "TrapDrive.ion")),
    "calibrate": _p("bool", True, "fit DC voltages to the target frequencies"),
    "target_low": _p("frequency", "1.48 MHz", "lower target radial frequency", **_POS),
    "target_high": _p("frequency", "2.10 MHz", "upper target radial frequency", **_POS),
    "map_x": _p("length", {"start": "-100 um", "stop": "100 um", "num": 21}, "field-map x grid", many=True),
    "map_z": _p("length", {"start": "40 um", "stop": "160 um", "num": 13}, "field-map z grid", **_POS,
                many=True),
}

_COMB = {
    "rep_rate": _p("frequency", "76 MHz", "comb repetition rate", **_POS, targets=("CombConfig.omega_rep",)),
    "harmonic": _p("int", 166, "comb harmonic bridging the splitting", minimum=1,
                   targets=("CombConfig.harmonic_n",)),
    "aom_offset": _p("frequency", "0 Hz", "AOM difference frequency to evaluate",
                     targets=("CombConfig.delta_aom",)),
    "hyperfine": _p("frequency", "12.642812118 GHz", "qubit splitting", **_POS, targets=("CombConfig.delta_hf",)),
    "optical_detuning": _p("frequency", "-395 GHz", "single-photon detuning",
                           targets=("CombConfig.optical_detuning",)),
    "trap_frequency": _p("frequency", "2.1 MHz", "motional mode addressed", **_NONNEG),
}

SCHEMA: dict[str, dict[str, Param]] = {
    "flop": _FLOP,
    "cool_and_measure": _COOLING,
    "heating_rate": _HEATING,
    "detection_fidelity": _DETECTION,
    "ramsey": _COHERENCE,
    "spin_echo": _COHERENCE,
    "micromotion_spectrum": _SPECTRUM,
    "rf_phase_contrast": _CONTRAST,
    "lineshape": _LINESHAPE,
    "trap_characterize": _TRAP,
    "comb_plan": _COMB,
}

# experiments with no exact (shot-free) mode
SAMPLED = ("detection_fidelity", "ramsey", "spin_echo")

DEFAULT_SHOTS = {
    "flop": 0, "cool_and_measure": 500, "heating_rate": 500, "detection_fidelity": 100_000,
    "ramsey": 10, "spin_echo": 10, "micromotion_spectrum": 0, "rf_phase_contrast": 0,
    "lineshape": 0, "trap_characterize": 0, "comb_plan": 0,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated run description; ``parameters`` holds SI values and
    ``raw`` the parameters exactly as written (defaults included)."""

    experiment: str
    parameters: dict
    seed: int = 0
    shots: int = 0
    output_path: str = ""
    raw: dict = field(default_factory=dict, compare=False)

    def snapshot(self) -> dict:
        return {"experiment": self.experiment, "seed": self.seed, "shots": self.shots,
                "output_path": self.output_path, "parameters": dict(self.raw)}

    def to_toml(self) -> str:
        lines = [f"experiment = {_toml_value(self.experiment)}", f"seed = {self.seed}",
                 f"shots = {self.shots}", f"output_path = {_toml_value(self.output_path)}", "",
                 "[parameters]"]
        lines += [f"{k} = {_toml_value(v)}" for k, v in self.raw.items() if v is not None]
        return "\n".join(lines) + "\n"


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    if isinstance(v, dict):
        return "{" + ", ".join(f"{k} = {_toml_value(x)}" for k, x in v.items()) + "}"
    raise TypeError(f"cannot write {type(v).__name__} to TOML")


_HEADER = re.compile(r"^\s*\[\s*([A-Za-z0-9_.\"-]+)\s*\]")
_KEY = re.compile(r"^\s*([A-Za-z0-9_\"-]+)\s*=")


def _line_index(text: str) -> dict[str, int]:
    """Map ``key`` / ``parameters.key`` to the line it is written on."""
    index, table = {}, ""
    for n, line in enumerate(text.splitlines(), start=1):
        if h := _HEADER.match(line):
            table = h.group(1).strip('"')
            index.setdefault(table, n)
        elif k := _KEY.match(line):
            key = k.group(1).strip('"')
            index.setdefault(f"{table}.{key}" if table else key, n)
    return index


def _suggest(key, valid) -> str:
    hint = difflib.get_close_matches(key, list(valid), n=1, cutoff=0.5)
    return f"; did you mean {hint[0]!r}?" if hint else f"; valid keys: {', '.join(sorted(valid))}"


def validate_mapping(data: dict, lines: dict[str, int] | None = None) -> ExperimentConfig:
    """Validate an already-parsed mapping; see ``validate_config``."""
    lines = lines or {}
    issues: list[Issue] = []

    def fail(path, message):
        issues.append(Issue(path, message, lines.get(path)))

    for key in data:
        if key not in RUN_KEYS:
            fail(key, "unknown key" + _suggest(key, RUN_KEYS))

    experiment = data.get("experiment")
    if experiment is None:
        fail("experiment", "missing required key")
    elif experiment not in SCHEMA:
        fail("experiment", f"unknown experiment {experiment!r}" + _suggest(str(experiment), EXPERIMENTS))
        experiment = None

    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed <= SEED_MAX:
        fail("seed", f"must be an integer in [0, 2^64 - 1], got {seed!r}")
    shots = data.get("shots", DEFAULT_SHOTS.get(experiment, 0))
    if isinstance(shots, bool) or not isinstance(shots, int) or shots < 0:
        fail("shots", f"must be a non-negative integer, got {shots!r}")
    elif shots == 0 and experiment in SAMPLED:
        fail("shots", f"{experiment} is a Monte-Carlo experiment and needs shots >= 1")
    output_path = data.get("output_path", f"runs/{experiment or 'run'}")
    if not isinstance(output_path, str) or not output_path:
        fail("output_path", "must be a non-empty string")

    params = data.get("parameters", {})
    if not isinstance(params, dict):
        fail("parameters", "must be a table")
        params = {}

    values, raw = {}, {}
    if experiment is not None:
        schema = SCHEMA[experiment]
        for key in params:
            if key not in schema:
                fail(f"parameters.{key}", f"unknown parameter for {experiment}" + _suggest(key, schema))
        for name, spec in schema.items():
            given = params.get(name, spec.default)
            raw[name] = given
            if given is None and spec.optional:
                values[name] = None
                continue
            try:
                values[name] = spec.convert(given)
            except ValueError as exc:
                fail(f"parameters.{name}", str(exc))
        if experiment in ("cool_and_measure", "heating_rate") and not issues:
            if values["pulse_rule"] == "fixed" and values["fixed_duration"] is None:
                fail("parameters.fixed_duration", "required when pulse_rule is 'fixed'")

    if issues:
        raise ConfigError(issues)
    return ExperimentConfig(experiment, values, seed, shots, output_path, raw)


def validate_config(text: str) -> ExperimentConfig:
    """Parse TOML text into an ExperimentConfig, filling defaults.

    Raises ConfigError listing every problem with its line number.
    """
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        line = int(m.group(1)) if m else max(len(text.splitlines()), 1)
        raise ConfigError([Issue("<toml>", str(exc), line)]) from None
    return validate_mapping(data, _line_index(text))


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return validate_config(fh.read())


def with_overrides(config: ExperimentConfig, seed: int | None = None, shots: int | None = None,
                   output_path: str | None = None) -> ExperimentConfig:
    data = config.snapshot()
    if seed is not None:
        data["seed"] = seed
    if shots is not None:
        data["shots"] = shots
    if output_path is not None:
        data["output_path"] = output_path
    return validate_mapping(data)
