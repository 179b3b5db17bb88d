"""Dispatch validated configs to the physics modules and persist results.

Each experiment function returns a ``ResultTable``: column names, rows and a
summary dictionary.  ``run`` writes the table to ``results.csv`` and a
``run.json`` record holding the resolved config, the package version, the
wall-clock time and the summary.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from . import __version__, constants
from . import coherence as coh
from . import detection as det
from . import frequency_comb as comb
from . import micromotion as mm
from . import trap_model as tm
from .config import ExperimentConfig
from .constants import IonConstants
from .cooling import CoolingMode, CoolingSchedule, HeatingProcess, doppler_cool, heat, sideband_cool
from .fitting import FitError, binomial_estimate
from .heating_analysis import (
    NoMaximumError,
    SidebandProbe,
    electric_field_psd,
    extract_first_maximum,
    fit_heating_rate,
    heating_points,
    measure_nbar,
)
from .rng import block_generator
from .spin_motion import PulseSpec, flop_curve, thermal_distribution

HZ = 1 / constants.TWO_PI


class RunError(RuntimeError):
    """A module error raised while running an experiment, with context."""

    def __init__(self, experiment: str, exc: Exception):
        self.experiment = experiment
        self.cause = exc
        super().__init__(f"{experiment}: {type(exc).__name__}: {exc}")


@dataclass
class ResultTable:
    columns: tuple[str, ...]
    rows: list
    summary: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        k = self.columns.index(name)
        return np.array([r[k] for r in self.rows])


@dataclass(frozen=True)
class RunRecord:
    config: dict
    version: str
    wall_clock_s: float
    started_utc: str
    results: str
    summary: dict

    def to_json(self) -> str:
        return json.dumps({"config": self.config, "version": self.version,
                           "wall_clock_s": self.wall_clock_s, "started_utc": self.started_utc,
                           "results": self.results, "summary": self.summary},
                          indent=2, default=_jsonable)


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


# ---------------------------------------------------------------------------
# spin-motion experiments

def _flop(cfg: ExperimentConfig, workers: int) -> ResultTable:
    p = cfg.parameters
    pulse = PulseSpec(p["branch"], p["omega0"], p["eta"], 0.0, p["phase"], p["detuning"], p["full_lamb_dicke"])
    t = np.linspace(0.0, p["t_max"], p["points"])
    prob = np.clip(flop_curve(thermal_distribution(p["nbar"]), pulse, t, p["contrast"]), 0.0, 1.0)
    if cfg.shots:
        k = block_generator(cfg.seed, "flop").binomial(cfg.shots, prob)
        prob, se = binomial_estimate(k, cfg.shots)
    else:
        se = np.zeros_like(prob)
    summary = {}
    try:
        peak = extract_first_maximum(prob, se if cfg.shots else None, t)
        summary = {"first_maximum": peak.value, "first_maximum_time_s": peak.time}
    except NoMaximumError:
        summary = {"first_maximum": None, "first_maximum_time_s": None}
    return ResultTable(("time_s", "p_bright", "p_bright_se"), list(zip(t, prob, se)), summary)


def _schedule(p) -> CoolingSchedule:
    hi = CoolingMode(p["mode_frequency"], p["eta"], p["cooling_omega0"], "measured")
    modes = (hi,)
    if p["cool_second_mode"]:
        w_lo = p["second_mode_frequency"]
        # eta scales as 1/sqrt(mode frequency)
        modes += (CoolingMode(w_lo, p["eta"] * math.sqrt(hi.trap_frequency / w_lo), p["cooling_omega0"], "second"),)
    heating = HeatingProcess(p["heating_rate"], p["heating_model"]) if p["heating_rate"] > 0 else None
    return CoolingSchedule(p["iterations"], modes, p["pulse_rule"], p["fixed_duration"],
                           p["pump_reset_infidelity"], p["count_per_mode"], p["pump_time"], heating)


def _probe(p) -> SidebandProbe:
    return SidebandProbe(p["probe_omega0"], p["eta"], p["probe_t_max"], p["probe_points"], p["probe_contrast"])


def _cooled(p):
    result = sideband_cool(doppler_cool(p["nbar_doppler"]), _schedule(p))
    return result.measured, result


def _cool_and_measure(cfg: ExperimentConfig, workers: int) -> ResultTable:
    p = cfg.parameters
    dist, result = _cooled(p)
    rng = block_generator(cfg.seed, "cool_and_measure") if cfg.shots else None
    scan = measure_nbar(dist, _probe(p), cfg.shots, rng)
    zeros = np.zeros_like(scan.times)
    red_se = scan.red_se if scan.red_se is not None else zeros
    blue_se = scan.blue_se if scan.blue_se is not None else zeros
    summary = {"nbar_estimate": scan.estimate.nbar, "nbar_uncertainty": scan.estimate.uncertainty,
               "nbar_true": dist.mean, "a_red": scan.amplitudes.a_red, "a_blue": scan.amplitudes.a_blue,
               "cooling_duration_s": result.duration}
    return ResultTable(("time_s", "red", "red_se", "blue", "blue_se"),
                       list(zip(scan.times, scan.red, red_se, scan.blue, blue_se)), summary)


def _heating_rate(cfg: ExperimentConfig, workers: int) -> ResultTable:
    p = cfg.parameters
    start, _ = _cooled(p)
    process = HeatingProcess(p["heating_rate"], p["heating_model"])
    rng = block_generator(cfg.seed, "heating_rate") if cfg.shots else None
    points = heating_points(start, process, p["delays"], _probe(p), cfg.shots, rng)
    fit = fit_heating_rate(points)
    s_e, w_s_e = electric_field_psd(fit.rate, IonConstants(mode_frequency=p["mode_frequency"]))
    rows = [(d, n, s, fit.intercept + fit.rate * d, heat(start, d, process).mean) for d, n, s in points]
    summary = {"rate_per_s": fit.rate, "rate_uncertainty_per_s": fit.rate_uncertainty,
               "intercept": fit.intercept, "intercept_uncertainty": fit.intercept_uncertainty,
               "configured_rate_per_s": p["heating_rate"], "field_noise_psd_v2_m2_hz": s_e,
               "omega_times_psd_v2_m2": w_s_e}
    return ResultTable(("delay_s", "nbar", "nbar_se", "nbar_fit", "nbar_true"), rows, summary)


# ---------------------------------------------------------------------------
# detection and coherence

def _detection(cfg: ExperimentConfig, workers: int) -> ResultTable:
    p = cfg.parameters
    model = det.DetectionModel(p["bright_rate"], p["background_rate"], p["depump_tau"], p["repump_tau"],
                               p["threshold"])
    windows = np.array(p["windows"])
    mc = det.fidelity_curve(model, windows, cfg.shots, cfg.seed, workers)
    eb, ed = det.analytic_curve(model, windows)
    rows = list(zip(windows, mc.err_bright, mc.err_bright_se, mc.err_dark, mc.err_dark_se,
                    mc.avg_fidelity, mc.avg_fidelity_se, eb, ed, 1 - (eb + ed) / 2))
    w_opt, err_opt = det.optimal_window(model)
    k = int(np.argmax(mc.avg_fidelity))
    summary = {"best_window_s": windows[k], "best_avg_fidelity": mc.avg_fidelity[k],
               "best_avg_fidelity_se": mc.avg_fidelity_se[k],
               "analytic_optimal_window_s": w_opt, "analytic_optimal_fidelity": 1 - err_opt}
    cols = ("window_s", "err_bright", "err_bright_se", "err_dark", "err_dark_se", "avg_fidelity",
            "avg_fidelity_se", "err_bright_analytic", "err_dark_analytic", "avg_fidelity_analytic")
    return ResultTable(cols, rows, summary)


def _dephasing(p) -> coh.DephasingModel:
    return coh.DephasingModel(p["sigma_static"], p["sigma_dynamic"], p["tau_c"], p["pulse_infidelity"])


def _coherence(echo: bool):
    def run(cfg: ExperimentConfig, workers: int) -> ResultTable:
        p = cfg.parameters
        model = _dephasing(p)
        delays = np.array(p["delays"])
        if p["table"] == "fringes":
            phases = np.linspace(0, 2 * np.pi, p["n_phases"], endpoint=False)
            fn = coh.spin_echo_fringe if echo else coh.ramsey_fringe
            rows, summary = [], {"visibility": []}
            for d in delays:
                f = fn(float(d), phases, model, cfg.shots, cfg.seed, workers=workers)
                rows += list(zip(np.full(phases.size, d), f.phases, f.p1, f.se))
                summary["visibility"].append(f.visibility())
            return ResultTable(("delay_s", "phase_rad", "p1", "se"), rows, summary)
        scan = coh.coherence_scan(model, echo, delays, p["n_phases"], cfg.shots, cfg.seed, workers,
                                  p["weighted"])
        r = scan.result
        model_vis = coh.expected_visibility(delays, model, echo)
        summary = {"t2_s": r.t2, "t2_uncertainty_s": r.t2_uncertainty, "amplitude": r.amplitude,
                   "amplitude_uncertainty": r.amplitude_uncertainty,
                   "experiments_per_point": p["n_phases"] * cfg.shots}
        return ResultTable(("delay_s", "visibility", "se", "visibility_model"),
                           list(zip(delays, r.visibilities, r.errors, model_vis)), summary)

    return run


# ---------------------------------------------------------------------------
# micromotion

def _dynamics(p, field=(0.0, 0.0), excitation=(0.0, 0.0)) -> mm.RfTrapDynamics:
    kw = {} if p["ion_mass"] is None else {"mass": p["ion_mass"]}
    return mm.RfTrapDynamics(p["rf_frequency"], (p["secular_x"], p["secular_z"]), tuple(field),
                             tuple(excitation), p["damping"], **kw)


def _beam(p) -> mm.Beam:
    return mm.Beam(p["beam_angle"], p["beam_detuning"], p["linewidth"], p["saturation"], p["wavelength"])


def _along(axis: str, value: float) -> tuple[float, float]:
    return (value, 0.0) if axis == "x" else (0.0, value)


# Deeper RF modulation starts to pump the secular motion parametrically.
MAX_MODULATION = 1e-2


def _required_depth(p, dyn, beam, readout, axis, workers):
    """Modulation depth whose resonant brightness change equals
    ``target_excess`` of the baseline; the change grows as depth squared.
    Returns ``(nan, excess at the cap)`` when the cap is not enough."""
    w = dyn.resonance(axis)

    def excess(log_eps):
        d = replace(dyn, excitation=(math.exp(log_eps), w))
        s = mm.excitation_spectrum(d, [w], beam, readout, workers)
        return (s.brightness[0] - s.baseline) / s.baseline

    target = p["target_excess"]
    cap = math.log(MAX_MODULATION)
    e0 = excess(math.log(mm.DEFAULT_MODULATION))
    if e0 <= 0:
        return math.inf, 0.0
    guess = math.log(mm.DEFAULT_MODULATION * math.sqrt(target / e0))
    lo, hi = guess - 0.5, min(guess + 0.5, cap)
    if hi <= lo or excess(hi) < target:
        return math.nan, excess(cap)
    log_eps = brentq(lambda x: excess(x) - target, lo, hi, xtol=1e-6)
    return math.exp(log_eps), excess(log_eps)


def _micromotion_spectrum(cfg: ExperimentConfig, workers: int) -> ResultTable:
    p = cfg.parameters
    beam = _beam(p)
    readout = mm.Readout(p["settle_cycles"], p["average_cycles"])
    axis = 0 if p["axis"] == "x" else 1
    summary = {"spectra": []}
    if p["mode"] == "required_depth":
        rows = []
        for e in p["stray_fields"]:
            dyn = _dynamics(p, _along(p["field_axis"], e))
            eps, got = _required_depth(p, dyn, beam, readout, axis, workers) if e != 0 else (math.inf, 0.0)
            rows.append((e, eps, got))
        table = ResultTable(("stray_field_v_per_m", "required_depth", "brightness_excess"), rows, summary)
    else:
        rows = []
        for e in p["stray_fields"]:
            for eps in p["excitation_depths"]:
                dyn = _dynamics(p, _along(p["field_axis"], e))
                freqs = mm.resonance_grid(dyn, axis, p["span"], p["points"])
                dyn = replace(dyn, excitation=(eps, float(freqs[0])))
                spec = mm.excitation_spectrum(dyn, freqs, beam, readout, workers)
                detuning = (freqs - dyn.omega_rf) * HZ
                rows += [(e, eps, d, b / spec.baseline, b) for d, b in zip(detuning, spec.brightness)]
                summary["spectra"].append({"stray_field_v_per_m": e, "excitation_depth": eps,
                                           "baseline": spec.baseline, "peak_height": spec.peak_height,
                                           "peak_metric": spec.peak_metric})
        table = ResultTable(("stray_field_v_per_m", "excitation_depth", "excitation_detuning_hz",
                             "brightness_norm", "brightness"), rows, summary)
    if p["compensate"]:
        e = p["stray_fields"][0]
        dyn = _dynamics(p, _along(p["field_axis"], e), (p["excitation_depths"][0], 0.0))
        search = mm.CompensationSearch(p["search_span"], p["grid_points"], p["tolerance"], p["rounds"],
                                       p["max_iterations"], p["objective"], p["search_beam_angle"],
                                       mm.Readout(p["search_settle_cycles"], p["search_average_cycles"]))
        res = mm.compensate(dyn, search)
        summary["compensation"] = {"stray_field_v_per_m": list(dyn.stray_field),
                                   "applied_v_per_m": res.compensation, "residual_v_per_m": res.residual,
                                   "evaluations": res.evaluations, "converged": res.converged}
    return table


def _rf_phase_contrast(cfg: ExperimentConfig, workers: int) -> ResultTable:
    p = cfg.parameters
    dyn = _dynamics(p)
    beam = _beam(p)
    readout = mm.Readout(p["settle_cycles"], p["average_cycles"])
    labels = [(ax, e) for ax in p["field_axes"] for e in p["stray_fields"]]
    fields = np.array([_along(ax, e) for ax, e in labels]).T
    c = mm.rf_contrast_scan(dyn, fields, beam, readout, workers)
    return ResultTable(("field_axis", "stray_field_v_per_m", "contrast"),
                       [(ax, e, v) for (ax, e), v in zip(labels, c)], {"beam_angle_rad": beam.angle})


def _lineshape(cfg: ExperimentConfig, workers: int) -> ResultTable:
    p = cfg.parameters
    beam = _beam(p)
    readout = mm.Readout(p["settle_cycles"], p["average_cycles"])
    det_grid = np.array(p["detunings"])
    rows, widths = [], []
    for e in p["stray_fields"]:
        shape = mm.broadened_lineshape(_dynamics(p, _along(p["field_axis"], e)), det_grid, beam, readout)
        rows += [(e, d * HZ, r / beam.peak_rate) for d, r in zip(det_grid, shape.scatter_rates)]
        try:
            widths.append(shape.fwhm() * HZ)
        except ValueError:
            widths.append(None)
    return ResultTable(("stray_field_v_per_m", "detuning_hz", "rate_norm"), rows, {"fwhm_hz": widths})


# ---------------------------------------------------------------------------
# trap model and comb

def _trap(cfg: ExperimentConfig, workers: int) -> ResultTable:
    p = cfg.parameters
    geom = tm.TrapGeometry(p["rf_rail_inner_edge"], p["rf_rail_width"], p["slot_width"], p["gap"],
                           p["outer_dc_width"], {k: p[k] for k in tm.DC_NAMES})
    ion = IonConstants() if p["ion_mass"] is None else IonConstants(mass=p["ion_mass"])
    drive = tm.TrapDrive(p["v_rf"], p["rf_frequency"], ion)
    rf = tm.secular_frequencies(geom, drive)
    summary = {"height_m": rf.height, "rf_only_frequencies_hz": rf.frequencies_hz,
               "mathieu_q": rf.mathieu_q, "depth_ev": tm.trap_depth(geom, drive)}
    if p["calibrate"]:
        cal = tm.calibrate_dc(geom, drive, (p["target_low"], p["target_high"]))
        geom = cal.geometry
        summary["calibration_relative_error"] = cal.relative_error
    axes = tm.dc_axes_rotation(geom, drive)
    summary.update({"dc_voltages_v": dict(geom.dc_voltages), "frequencies_hz": axes.frequencies * HZ,
                    "axis_angle_rad": axes.angle, "dc_field_at_null_v_per_m": axes.dc_field_at_null})
    grid = tm.field_map(geom, drive, p["map_x"], p["map_z"])
    return ResultTable(("x_m", "z_m", "e_x_v_per_m", "e_z_v_per_m", "phi_ps_ev"),
                       [tuple(r) for r in grid], summary)


def _comb(cfg: ExperimentConfig, workers: int) -> ResultTable:
    p = cfg.parameters
    config = comb.CombConfig(p["rep_rate"], p["aom_offset"], p["harmonic"], p["hyperfine"], p["optical_detuning"])
    w = p["trap_frequency"]
    rows = [("configured", p["aom_offset"] * HZ, comb.raman_resonance(config) * HZ)]
    for branch in ("carrier", "red", "blue"):
        tuned = comb.tuned(config, w, branch)
        rows.append((branch, tuned.delta_aom * HZ, comb.raman_resonance(tuned) * HZ))
    summary = {"n_omega_rep_hz": config.harmonic_n * config.omega_rep * HZ,
               "resonance_sensitivity": comb.resonance_sensitivity(config)}
    return ResultTable(("transition", "aom_difference_hz", "two_photon_detuning_hz"), rows, summary)


EXPERIMENT_FUNCTIONS = {
    "flop": _flop,
    "cool_and_measure": _cool_and_measure,
    "heating_rate": _heating_rate,
    "detection_fidelity": _detection,
    "ramsey": _coherence(echo=False),
    "spin_echo": _coherence(echo=True),
    "micromotion_spectrum": _micromotion_spectrum,
    "rf_phase_contrast": _rf_phase_contrast,
    "lineshape": _lineshape,
    "trap_characterize": _trap,
    "comb_plan": _comb,
}


def execute(config: ExperimentConfig, workers: int = 1) -> ResultTable:
    """Run the experiment in memory.  Module errors are re-raised as
    RunError naming the experiment."""
    try:
        return EXPERIMENT_FUNCTIONS[config.experiment](config, workers)
    except (ValueError, RuntimeError, ArithmeticError, FitError) as exc:
        raise RunError(config.experiment, exc) from exc


def _cell(v) -> str:
    if isinstance(v, str):
        return v
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    return "%.17g" % float(v)


def write_csv(table: ResultTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.columns)
        for row in table.rows:
            w.writerow([_cell(v) for v in row])


def run(config: ExperimentConfig, out_dir=None, workers: int = 1) -> tuple[RunRecord, ResultTable]:
    """Run ``config`` and write ``results.csv`` and ``run.json`` into
    ``out_dir`` (default: the config's output_path)."""
    out = Path(out_dir if out_dir is not None else config.output_path)
    started = datetime.now(timezone.utc).isoformat(timespec="seconds")
    t0 = time.perf_counter()
    table = execute(config, workers)
    elapsed = time.perf_counter() - t0
    out.mkdir(parents=True, exist_ok=True)
    write_csv(table, out / "results.csv")
    record = RunRecord(config.snapshot(), __version__, elapsed, started, "results.csv", table.summary)
    (out / "run.json").write_text(record.to_json() + "\n", encoding="utf-8")
    return record, table
