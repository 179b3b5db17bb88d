"""Gapless-plane model of a symmetric multi-rail surface trap.

Electrodes are infinitely long strips (along y) in the z = 0 plane, with
everything outside the listed strips grounded.  A strip spanning
``[x1, x2]`` at potential V contributes

    phi(x, z) = (V / pi) * Im[log(w - x1) - log(w - x2)],   w = x + i z,

so fields and their derivatives follow from the complex derivative.
Inter-electrode gaps are absorbed by moving each electrode edge to the
middle of its gap.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares, minimize_scalar

from . import constants
from .constants import IonConstants

UM = 1e-6
HESSIAN_STEP = 1e-7  # m
Q_STABILITY_LIMIT = 0.9
ADIABATIC_WARNING = 0.1


class NoMinimumError(ValueError):
    """No RF null above the surface."""


class SaddleNotFoundError(ValueError):
    """The pseudopotential has no escape barrier along the symmetry axis."""


class TrapInstabilityError(ValueError):
    """Mathieu q outside the stable region, or a non-confining direction."""


class PseudopotentialWarning(UserWarning):
    """Secular frequency is not small compared with the RF drive."""


DC_NAMES = ("inner_left", "inner_right", "outer_left", "outer_right")


@dataclass(frozen=True)
class TrapGeometry:
    """Symmetric six-rail layout: split inner DC electrodes beside the
    loading slot, two RF rails, and outer DC electrodes (per side, lumped)."""

    rf_rail_inner_edge: float = 70 * UM
    rf_rail_width: float = 60 * UM
    slot_width: float = 100 * UM
    gap: float = 5 * UM
    outer_dc_width: float = 200 * UM
    dc_voltages: dict = field(default_factory=lambda: dict.fromkeys(DC_NAMES, 0.0))

    def __post_init__(self):
        if min(self.rf_rail_inner_edge, self.rf_rail_width, self.slot_width, self.outer_dc_width) <= 0:
            raise ValueError("widths must be > 0")
        if self.gap < 0:
            raise ValueError("gap must be >= 0")
        if self.slot_width / 2 >= self.rf_rail_inner_edge - self.gap / 2:
            raise ValueError("slot overlaps the RF rails")
        unknown = set(self.dc_voltages) - set(DC_NAMES)
        if unknown:
            raise ValueError(f"unknown DC electrodes {sorted(unknown)}")
        object.__setattr__(self, "dc_voltages", {k: float(self.dc_voltages.get(k, 0.0)) for k in DC_NAMES})

    def rf_strips(self) -> list[tuple[float, float]]:
        lo = self.rf_rail_inner_edge - self.gap / 2
        hi = self.rf_rail_inner_edge + self.rf_rail_width + self.gap / 2
        return [(-hi, -lo), (lo, hi)]

    def dc_strips(self) -> dict[str, tuple[float, float]]:
        rf_lo = self.rf_rail_inner_edge - self.gap / 2
        rf_hi = self.rf_rail_inner_edge + self.rf_rail_width + self.gap / 2
        s = self.slot_width / 2
        return {
            "inner_left": (-rf_lo, -s),
            "inner_right": (s, rf_lo),
            "outer_left": (-rf_hi - self.outer_dc_width, -rf_hi),
            "outer_right": (rf_hi, rf_hi + self.outer_dc_width),
        }

    def scaled(self, s: float) -> "TrapGeometry":
        return TrapGeometry(self.rf_rail_inner_edge * s, self.rf_rail_width * s, self.slot_width * s,
                            self.gap * s, self.outer_dc_width * s, dict(self.dc_voltages))

    def with_dc(self, **voltages) -> "TrapGeometry":
        v = dict(self.dc_voltages)
        v.update(voltages)
        return TrapGeometry(self.rf_rail_inner_edge, self.rf_rail_width, self.slot_width, self.gap,
                            self.outer_dc_width, v)


@dataclass(frozen=True)
class TrapDrive:
    v_rf: float = 220.0  # V amplitude
    omega_rf: float = constants.TWO_PI * 27.8e6
    ion: IonConstants = IonConstants()

    def __post_init__(self):
        if not self.v_rf > 0:
            raise ValueError("v_rf must be > 0")
        if not self.omega_rf > 0:
            raise ValueError("omega_rf must be > 0")


def _split(point):
    p = np.asarray(point, float)
    if p.shape[-1] != 2:
        raise ValueError("points must have (x, z) as the last axis")
    return p[..., 0], p[..., 1]


def strip_potential(edges, voltage: float, point) -> np.ndarray:
    """Potential (V) of one strip held at ``voltage`` in a grounded plane."""
    x, z = _split(point)
    x1, x2 = edges
    return voltage / math.pi * (np.arctan((x2 - x) / z) - np.arctan((x1 - x) / z))


def strip_field(edges, voltage: float, point) -> np.ndarray:
    """Electric field (V/m) of one strip, shape ``(..., 2)`` as (E_x, E_z)."""
    x, z = _split(point)
    if np.any(z <= 0):
        raise ValueError("points must lie above the electrode plane (z > 0)")
    w = x + 1j * z
    x1, x2 = edges
    # E = -grad(phi) with phi = Im G, G = (V/pi) ln((w - x2) / (w - x1))
    dF = voltage / math.pi * (1 / (w - x1) - 1 / (w - x2))
    return np.stack([dF.imag, dF.real], axis=-1)


def strip_field_jacobian(edges, voltage: float, point) -> np.ndarray:
    """Analytic Jacobian ``dE_i/dx_j`` of :func:`strip_field`, shape (..., 2, 2)."""
    x, z = _split(point)
    w = x + 1j * z
    x1, x2 = edges
    d2F = voltage / math.pi * (-1 / (w - x1) ** 2 + 1 / (w - x2) ** 2)
    j = np.empty(np.shape(x) + (2, 2))
    j[..., 0, 0] = d2F.imag
    j[..., 0, 1] = d2F.real
    j[..., 1, 0] = d2F.real
    j[..., 1, 1] = -d2F.imag
    return j


def rf_field(geom: TrapGeometry, drive: TrapDrive, point) -> np.ndarray:
    return sum(strip_field(e, drive.v_rf, point) for e in geom.rf_strips())


def dc_field(geom: TrapGeometry, point) -> np.ndarray:
    return sum(strip_field(e, geom.dc_voltages[k], point) for k, e in geom.dc_strips().items())


def dc_potential(geom: TrapGeometry, point) -> np.ndarray:
    return sum(strip_potential(e, geom.dc_voltages[k], point) for k, e in geom.dc_strips().items())


def pseudopotential(geom: TrapGeometry, drive: TrapDrive, point) -> np.ndarray:
    """``Q^2 |E_RF|^2 / (4 m W^2)`` in joules."""
    e = rf_field(geom, drive, point)
    ion = drive.ion
    return ion.charge**2 * np.sum(e**2, axis=-1) / (4 * ion.mass * drive.omega_rf**2)


def total_potential(geom: TrapGeometry, drive: TrapDrive, point) -> np.ndarray:
    """Pseudopotential plus DC potential energy, in joules."""
    return pseudopotential(geom, drive, point) + drive.ion.charge * dc_potential(geom, point)


def rf_null_height(geom: TrapGeometry, drive: TrapDrive = TrapDrive(), tol: float = 1e-9) -> float:
    """Height of the RF null on the symmetry axis (m)."""
    scale = geom.rf_strips()[1][1]
    zs = np.geomspace(1e-3 * scale, 20 * scale, 400)
    ez = rf_field(geom, drive, np.stack([np.zeros_like(zs), zs], axis=-1))[:, 1]
    # |E| also vanishes far away; the null is where E_z changes sign
    flips = np.nonzero(np.sign(ez[:-1]) * np.sign(ez[1:]) < 0)[0]
    if flips.size == 0:
        raise NoMinimumError("RF field has no interior minimum on the symmetry axis")
    k = int(flips[0])
    lo, hi = zs[k], zs[k + 1]
    res = minimize_scalar(lambda z: float(np.sum(rf_field(geom, drive, [0.0, z]) ** 2)),
                          bounds=(lo, hi), method="bounded", options={"xatol": tol * 1e-2})
    return float(res.x)


def hessian(fn, point, step: float = HESSIAN_STEP) -> np.ndarray:
    """Central-difference Hessian of a scalar function of (x, z)."""
    p = np.asarray(point, float)
    h = np.zeros((2, 2))
    e = np.eye(2) * step
    f0 = fn(p)
    for i in range(2):
        h[i, i] = (fn(p + e[i]) - 2 * f0 + fn(p - e[i])) / step**2
        for j in range(i + 1, 2):
            h[i, j] = h[j, i] = (fn(p + e[i] + e[j]) - fn(p + e[i] - e[j])
                                 - fn(p - e[i] + e[j]) + fn(p - e[i] - e[j])) / (4 * step**2)
    return h


@dataclass(frozen=True)
class SecularResult:
    frequencies: np.ndarray  # rad/s, per principal axis (ascending)
    axes: np.ndarray  # columns are principal directions in (x, z)
    mathieu_q: np.ndarray
    height: float  # m

    @property
    def frequencies_hz(self) -> np.ndarray:
        return self.frequencies / constants.TWO_PI


def _check_q(q, drive, freqs):
    if np.any(np.abs(q) >= Q_STABILITY_LIMIT):
        raise TrapInstabilityError(f"Mathieu q={np.max(np.abs(q)):.3f} >= {Q_STABILITY_LIMIT}")
    ratio = float(np.max(freqs)) / drive.omega_rf
    if ratio > ADIABATIC_WARNING:
        warnings.warn(f"secular/RF frequency ratio {ratio:.3f} exceeds {ADIABATIC_WARNING}",
                      PseudopotentialWarning, stacklevel=3)


def secular_frequencies(geom: TrapGeometry, drive: TrapDrive = TrapDrive(),
                        include_dc: bool = False) -> SecularResult:
    """Radial secular frequencies from the Hessian of the (pseudo)potential
    at the RF null.  Mathieu q per axis is ``2 sqrt(2) w_ps / W`` with
    ``w_ps`` the RF-only frequency along that axis."""
    z0 = rf_null_height(geom, drive)
    null = np.array([0.0, z0])
    m = drive.ion.mass
    h_ps = hessian(lambda p: float(pseudopotential(geom, drive, p)), null)
    h = h_ps + (hessian(lambda p: float(drive.ion.charge * dc_potential(geom, p)), null) if include_dc else 0)
    evals, evecs = np.linalg.eigh(h)
    if np.any(evals <= 0):
        raise TrapInstabilityError("potential is not confining at the RF null")
    freqs = np.sqrt(evals / m)
    w_ps = np.sqrt(np.clip(np.einsum("ij,jk,ki->i", evecs.T, h_ps, evecs), 0, None) / m)
    q = 2 * math.sqrt(2) * w_ps / drive.omega_rf
    _check_q(q, drive, freqs)
    return SecularResult(freqs, evecs, q, z0)


def trap_depth(geom: TrapGeometry, drive: TrapDrive = TrapDrive()) -> float:
    """Escape barrier (eV) of the pseudopotential along the symmetry axis
    above the null."""
    z0 = rf_null_height(geom, drive)
    zs = z0 * np.geomspace(1.0001, 50, 2000)
    phi = pseudopotential(geom, drive, np.stack([np.zeros_like(zs), zs], axis=-1))
    k = int(np.argmax(phi))
    if k == 0 or k == zs.size - 1:
        raise SaddleNotFoundError("no escape saddle above the RF null")
    res = minimize_scalar(lambda z: -float(pseudopotential(geom, drive, [0.0, z])),
                          bounds=(zs[k - 1], zs[k + 1]), method="bounded", options={"xatol": 1e-12})
    barrier = -res.fun - float(pseudopotential(geom, drive, [0.0, z0]))
    return barrier / constants.ELEMENTARY_CHARGE


@dataclass(frozen=True)
class AxesResult:
    angle: float  # rad, principal axis closest to x, in (-pi/4, pi/4]
    frequencies: np.ndarray  # rad/s, ascending
    axes: np.ndarray
    splitting: float  # rad/s
    dc_field_at_null: np.ndarray  # V/m


def dc_axes_rotation(geom: TrapGeometry, drive: TrapDrive = TrapDrive()) -> AxesResult:
    """Principal axes of the total (pseudopotential + DC) Hessian at the RF null."""
    z0 = rf_null_height(geom, drive)
    null = np.array([0.0, z0])
    h = hessian(lambda p: float(total_potential(geom, drive, p)), null)
    evals, evecs = np.linalg.eigh(h)
    if np.any(evals <= 0):
        raise TrapInstabilityError("DC configuration anti-traps a radial direction")
    scale = abs(h[0, 0]) + abs(h[1, 1])
    if abs(h[0, 1]) <= 1e-9 * scale:
        angle = 0.0  # aligned, or degenerate (RF only): take the symmetry axes
    elif abs(h[0, 0] - h[1, 1]) <= 1e-12 * scale:
        angle = math.copysign(math.pi / 4, h[0, 1])
    else:
        angle = 0.5 * math.atan(2 * h[0, 1] / (h[0, 0] - h[1, 1]))
    freqs = np.sqrt(evals / drive.ion.mass)
    return AxesResult(angle, freqs, evecs, float(freqs[1] - freqs[0]), dc_field(geom, null))


@dataclass(frozen=True)
class DcCalibration:
    geometry: TrapGeometry
    frequencies: np.ndarray  # rad/s, ascending
    relative_error: np.ndarray


def calibrate_dc(geom: TrapGeometry, drive: TrapDrive = TrapDrive(),
                 targets=(constants.TWO_PI * 1.48e6, constants.TWO_PI * 2.10e6)) -> DcCalibration:
    """Least-squares choice of symmetric inner and outer DC voltages that
    splits the radial pair towards ``targets`` while keeping the DC field at
    the RF null zero.

    In this two-dimensional model the DC curvature is traceless, so the sum
    of the squared radial frequencies is fixed by the RF alone; the best
    split balances the relative errors of the two modes.
    """
    z0 = rf_null_height(geom, drive)
    null = np.array([0.0, z0])
    targets = np.sort(np.asarray(targets, float))
    strips = geom.dc_strips()
    e_in = strip_field(strips["inner_left"], 1.0, null)[1] + strip_field(strips["inner_right"], 1.0, null)[1]
    e_out = strip_field(strips["outer_left"], 1.0, null)[1] + strip_field(strips["outer_right"], 1.0, null)[1]

    def configured(v_in):
        v_out = -v_in * e_in / e_out  # zero E_z at the null
        return geom.with_dc(inner_left=v_in, inner_right=v_in, outer_left=v_out, outer_right=v_out)

    def residual(p):
        g = configured(p[0])
        h = hessian(lambda pt: float(total_potential(g, drive, pt)), null)
        ev = np.linalg.eigvalsh(h)
        w = np.sqrt(np.clip(ev, 0, None) / drive.ion.mass)
        return w / targets - 1

    sol = least_squares(residual, x0=[0.0], x_scale=[1.0], diff_step=[1e-3])
    # one-sided residual landscape; also try the opposite sign of the split
    alt = least_squares(residual, x0=[-sol.x[0] if sol.x[0] else 1.0], diff_step=[1e-3])
    best = sol if sol.cost <= alt.cost else alt
    g = configured(float(best.x[0]))
    res = dc_axes_rotation(g, drive)
    return DcCalibration(g, res.frequencies, res.frequencies / targets - 1)


def field_map(geom: TrapGeometry, drive: TrapDrive, xs, zs) -> np.ndarray:
    """Rows ``(x, z, E_x, E_z, Phi_ps)`` on the grid, RF amplitude field and
    pseudopotential in eV."""
    gx, gz = np.meshgrid(np.asarray(xs, float), np.asarray(zs, float), indexing="ij")
    pts = np.stack([gx.ravel(), gz.ravel()], axis=-1)
    e = rf_field(geom, drive, pts)
    phi = pseudopotential(geom, drive, pts) / constants.ELEMENTARY_CHARGE
    return np.column_stack([pts, e, phi])
