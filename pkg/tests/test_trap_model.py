import math
import warnings

import numpy as np
import pytest
from scipy import ndimage

from surftrap.trap_model import (UM, PseudopotentialWarning, TrapDrive, TrapGeometry, TrapInstabilityError,
                                 calibrate_dc, dc_axes_rotation, dc_field, dc_potential, field_map,
                                 hessian, pseudopotential, rf_field, rf_null_height, secular_frequencies,
                                 strip_field, strip_field_jacobian, strip_potential, trap_depth)

GEOM = TrapGeometry()
DRIVE = TrapDrive()
STRIP = (20 * UM, 80 * UM)
POINTS = np.array([[0.0, 50 * UM], [35 * UM, 12 * UM], [-120 * UM, 200 * UM], [60 * UM, 3 * UM]])


def _fd_field(edges, p, h=1e-10):
    dx = np.array([h, 0.0])
    dz = np.array([0.0, h])
    phi = lambda q: float(strip_potential(edges, 1.0, q))
    return -np.array([(phi(p + dx) - phi(p - dx)) / (2 * h), (phi(p + dz) - phi(p - dz)) / (2 * h)])


def test_field_points_away_from_positive_strip():
    ex, ez = strip_field(STRIP, 1.0, [50 * UM, 10 * UM])
    assert ez > 0 and abs(ex) < 1e-9 * ez
    assert strip_field(STRIP, 1.0, [0.0, 10 * UM])[0] < 0


def test_far_field_decay():
    e1 = np.linalg.norm(strip_field(STRIP, 1.0, [0.0, 1e-2]))
    e2 = np.linalg.norm(strip_field(STRIP, 1.0, [0.0, 2e-2]))
    assert e1 / e2 == pytest.approx(4.0, rel=0.01)


def test_symmetric_pair_has_no_axial_x_field():
    zs = np.linspace(5, 400, 50) * UM
    pts = np.stack([np.zeros_like(zs), zs], axis=-1)
    e = strip_field((-80 * UM, -20 * UM), 3.0, pts) + strip_field((20 * UM, 80 * UM), 3.0, pts)
    assert np.max(np.abs(e[:, 0])) <= 1e-12 * np.max(np.abs(e[:, 1]))


@pytest.mark.parametrize("p", POINTS)
def test_field_is_gradient_of_potential(p):
    np.testing.assert_allclose(strip_field(STRIP, 1.0, p), _fd_field(STRIP, p), rtol=1e-6,
                               atol=1e-6 * np.linalg.norm(strip_field(STRIP, 1.0, p)))


@pytest.mark.parametrize("p", POINTS)
def test_jacobian_and_laplace(p):
    jac = strip_field_jacobian(STRIP, 1.0, p)
    h = 1e-10
    fd = np.column_stack([(strip_field(STRIP, 1.0, p + d) - strip_field(STRIP, 1.0, p - d)) / (2 * h)
                          for d in (np.array([h, 0.0]), np.array([0.0, h]))])
    scale = np.abs(jac).max()
    np.testing.assert_allclose(jac, fd, atol=1e-6 * scale)
    # div E = 0 above the plane, both analytically and by differences
    assert abs(np.trace(jac)) <= 1e-6 * scale
    assert abs(np.trace(fd)) <= 1e-6 * scale


def test_potential_boundary_values():
    assert float(strip_potential(STRIP, 2.0, [50 * UM, 1e-12])) == pytest.approx(2.0, rel=1e-6)
    assert float(strip_potential(STRIP, 2.0, [150 * UM, 1e-12])) == pytest.approx(0.0, abs=1e-6)


def test_superposition():
    g = GEOM.with_dc(inner_left=1.0, outer_right=-2.0)
    e = dc_field(g, POINTS)
    parts = strip_field(g.dc_strips()["inner_left"], 1.0, POINTS) + strip_field(g.dc_strips()["outer_right"], -2.0, POINTS)
    np.testing.assert_allclose(e, parts, rtol=1e-12)
    np.testing.assert_allclose(rf_field(GEOM, TrapDrive(v_rf=440.0), POINTS), 2 * rf_field(GEOM, DRIVE, POINTS))


def test_paper_geometry_height():
    z0 = rf_null_height(GEOM, DRIVE)
    assert 60 * UM <= z0 <= 105 * UM
    assert z0 == pytest.approx(80 * UM, rel=0.3)


def test_two_rail_height_identity():
    g = TrapGeometry(gap=0.0)
    a, b = g.rf_strips()[1]
    assert rf_null_height(g, DRIVE) == pytest.approx(math.sqrt(a * b), rel=1e-3)


def test_scale_invariance():
    g2 = GEOM.scaled(2.0).with_dc(inner_left=1.0, inner_right=1.0)
    g1 = GEOM.with_dc(inner_left=1.0, inner_right=1.0)
    z1 = rf_null_height(g1, DRIVE)
    assert rf_null_height(g2, DRIVE) == pytest.approx(2 * z1, rel=1e-6)
    c1 = hessian(lambda p: float(dc_potential(g1, p)), [0.0, z1])
    c2 = hessian(lambda p: float(dc_potential(g2, p)), [0.0, 2 * z1], step=2e-7)
    np.testing.assert_allclose(c2, c1 / 4, rtol=1e-4, atol=1e-4 * np.abs(c1).max())
    # pseudopotential frequencies go as |grad E| ~ V / s^2
    f1 = secular_frequencies(GEOM, DRIVE).frequencies
    f2 = secular_frequencies(GEOM.scaled(2.0), DRIVE).frequencies
    np.testing.assert_allclose(f2, f1 / 4, rtol=1e-4)


def test_paper_radial_frequencies():
    res = secular_frequencies(GEOM, DRIVE)
    mean = res.frequencies_hz.mean()
    assert 1.2e6 <= mean <= 2.6e6
    assert 1.48e6 * 0.7 <= mean <= 2.10e6 * 1.3
    assert np.all(np.abs(res.mathieu_q) < 0.9)


def test_frequencies_linear_in_rf_voltage():
    f1 = secular_frequencies(GEOM, TrapDrive(v_rf=150.0)).frequencies
    f2 = secular_frequencies(GEOM, TrapDrive(v_rf=300.0)).frequencies
    np.testing.assert_allclose(f2, 2 * f1, rtol=1e-4)


def test_hessian_against_analytic_jacobian():
    z0 = rf_null_height(GEOM, DRIVE)
    null = np.array([0.0, z0])
    jac = sum(strip_field_jacobian(e, DRIVE.v_rf, null) for e in GEOM.rf_strips())
    ion = DRIVE.ion
    c = ion.charge**2 / (4 * ion.mass * DRIVE.omega_rf**2)
    analytic = 2 * c * jac.T @ jac  # the field itself vanishes at the null
    numeric = hessian(lambda p: float(pseudopotential(GEOM, DRIVE, p)), null)
    np.testing.assert_allclose(np.linalg.eigvalsh(numeric), np.linalg.eigvalsh(analytic), rtol=1e-4)


def test_stability_limit_and_warning():
    with pytest.raises(TrapInstabilityError):
        secular_frequencies(GEOM, TrapDrive(v_rf=1500.0))
    with pytest.warns(PseudopotentialWarning):
        secular_frequencies(GEOM, TrapDrive(v_rf=400.0))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        secular_frequencies(GEOM, DRIVE)


def test_trap_depth_paper_order_of_magnitude():
    depth = trap_depth(GEOM, DRIVE)
    assert 0.086 / 2 <= depth <= 0.086 * 2


def test_depth_scales_with_voltage_squared():
    assert trap_depth(GEOM, TrapDrive(v_rf=440.0)) == pytest.approx(4 * trap_depth(GEOM, DRIVE), rel=1e-6)


def test_depth_against_dense_grid():
    ev = 1.602176634e-19
    z0 = rf_null_height(GEOM, DRIVE)
    xs = np.linspace(-300, 300, 601) * UM
    zs = np.linspace(20, 600, 581) * UM
    gx, gz = np.meshgrid(xs, zs, indexing="ij")
    phi = (pseudopotential(GEOM, DRIVE, np.stack([gx, gz], axis=-1))
           - float(pseudopotential(GEOM, DRIVE, [0.0, z0]))) / ev
    seed = (int(np.argmin(np.abs(xs))), int(np.argmin(np.abs(zs - z0))))

    def escapes(energy):
        labels, _ = ndimage.label(phi < energy)
        own = labels[seed]
        return own > 0 and np.any(labels[:, -1] == own)

    lo, hi = 0.0, float(phi.max())
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        lo, hi = (lo, mid) if escapes(mid) else (mid, hi)
    assert hi == pytest.approx(trap_depth(GEOM, DRIVE), rel=0.02)


def test_no_dc_means_symmetry_axes():
    assert dc_axes_rotation(GEOM, DRIVE).angle == 0.0


def test_asymmetric_dc_rotates_axes():
    a = dc_axes_rotation(GEOM.with_dc(inner_left=2.0, inner_right=-2.0), DRIVE).angle
    b = dc_axes_rotation(GEOM.with_dc(inner_left=-2.0, inner_right=2.0), DRIVE).angle
    assert abs(a) > 1e-3
    assert b == pytest.approx(-a, rel=1e-6)


def test_dc_calibration_hits_measured_pair():
    cal = calibrate_dc(GEOM, DRIVE)
    assert np.all(np.abs(cal.relative_error) < 0.05)
    z0 = rf_null_height(GEOM, DRIVE)
    e = dc_field(cal.geometry, [0.0, z0])
    assert abs(e[1]) < 1e-6 * max(abs(v) for v in cal.geometry.dc_voltages.values())


def test_field_map_rows():
    rows = field_map(GEOM, DRIVE, [0.0, 10 * UM], [50 * UM, 90 * UM, 150 * UM])
    assert rows.shape == (6, 5)
    np.testing.assert_allclose(rows[:, 2:4], rf_field(GEOM, DRIVE, rows[:, :2]))


def test_geometry_validation():
    with pytest.raises(ValueError):
        TrapGeometry(slot_width=200 * UM)
    with pytest.raises(ValueError):
        TrapGeometry(dc_voltages={"middle": 1.0})
    with pytest.raises(ValueError):
        TrapDrive(v_rf=0.0)
    with pytest.raises(ValueError):
        strip_field(STRIP, 1.0, [0.0, -1e-6])
