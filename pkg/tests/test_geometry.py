import math

import numpy as np
import pytest

from cutcavity.geometry import (
    CircleArc,
    CutCellShape,
    GeometryError,
    MeshRequirementError,
    RectCellShape,
    SingularFaceError,
    StraightSegment,
    arc_slope_sq_mean_x,
    arc_slope_sq_mean_y,
    cell_geometry,
    face_curve_derivatives,
    slice_height,
    slice_width,
)

from conftest import bisect_root, oracle_average, oracle_integral

R = 0.5  # unit-diameter cavity circle


def right_cut_cell(x0, x1, y0, y1):
    arc = CircleArc(0.0, 0.0, R, (x0, y0), (x1, y1))
    return CutCellShape(x0, x1, y0, y1, arc, "right")


def test_slice_width_rectangle_constant():
    cell = RectCellShape(0.1, 0.15, -0.2, -0.175)
    for y in (-0.2, -0.19, -0.175):
        assert slice_width(cell, y) == pytest.approx(0.05, rel=1e-15)


def test_slice_width_row_sums_to_diameter_at_lid():
    # A row of cells spanning the lid tiles the full diameter.
    widths = [0.1] * 10
    assert sum(widths) == pytest.approx(1.0)
    cell = RectCellShape(-0.5, 0.5, -0.05, 0.0)
    assert slice_width(cell, -0.01) == pytest.approx(1.0)


def test_slice_width_cut_cell_closed_form_vs_bisection():
    # Cut cell bounded right by the circle, left wall at x=0.45.
    y0 = float(-math.sqrt(R * R - 0.45**2))
    cell = right_cut_cell(0.45, 0.5, y0, 0.0)
    w = slice_width(cell, -0.1)
    expected = math.sqrt(0.25 - 0.01) - 0.45
    assert w == pytest.approx(expected, rel=1e-14)
    # Independent oracle: bisection intersection of the circle with y=-0.1.
    xe = bisect_root(lambda x: x * x + 0.01 - 0.25, 0.45, 0.5)
    assert w == pytest.approx(xe - 0.45, abs=1e-13)


def test_slice_width_out_of_range_raises():
    cell = RectCellShape(0.0, 0.1, -0.1, 0.0)
    with pytest.raises(GeometryError):
        slice_width(cell, 0.2)


def test_cell_geometry_rectangle():
    g = cell_geometry(RectCellShape(0.0, 0.05, 0.0, 0.025))
    assert g.vol == pytest.approx(0.00125, rel=1e-15)
    assert g.wx == pytest.approx(0.05, rel=1e-15)
    assert g.wy == pytest.approx(0.025, rel=1e-15)
    assert g.dwdy0 == 0.0 and g.dhdx0 == 0.0


def test_cell_geometry_cut_cell_vs_quadrature():
    # Single cut cell of the D=1 circle with grid corners near x in [0.4,0.45].
    x0, x1 = 0.4, 0.45
    y0 = -math.sqrt(R * R - x0 * x0)
    y1 = -math.sqrt(R * R - x1 * x1)
    cell = right_cut_cell(x0, x1, y0, y1)
    g = cell_geometry(cell)
    vol_oracle = oracle_integral(lambda y: math.sqrt(R * R - y * y) - x0, y0, y1)
    assert g.vol == pytest.approx(vol_oracle, abs=1e-12)
    # Mean size identities.
    assert g.wx * g.dy == pytest.approx(g.vol, rel=1e-15)
    assert g.wy * g.dx == pytest.approx(g.vol, rel=1e-15)
    # Both integration orders agree (second order computed via x-slices).
    vol_x = oracle_integral(lambda x: y1 + math.sqrt(R * R - x * x), x0, x1)
    assert g.vol == pytest.approx(vol_x, abs=1e-12)


def test_cell_geometry_slice_width_derivative():
    x0, x1 = 0.4, 0.45
    y0 = -math.sqrt(R * R - x0 * x0)
    y1 = -math.sqrt(R * R - x1 * x1)
    g = cell_geometry(right_cut_cell(x0, x1, y0, y1))
    ym = 0.5 * (y0 + y1)
    h = 1e-6
    cell = right_cut_cell(x0, x1, y0, y1)
    fd = (slice_width(cell, ym + h) - slice_width(cell, ym - h)) / (2 * h)
    assert g.dwdy0 == pytest.approx(fd, abs=1e-7)
    xm = 0.5 * (x0 + x1)
    fd_h = (slice_height(cell, xm + h) - slice_height(cell, xm - h)) / (2 * h)
    assert g.dhdx0 == pytest.approx(fd_h, abs=1e-7)


def test_face_curve_derivatives_straight_vertical():
    seg = StraightSegment((0.3, -0.2), (0.3, -0.1))
    d = face_curve_derivatives(seg)
    assert d.dxdy == 0.0 and d.d2xdy2 == 0.0 and d.d3xdy3 == 0.0


def test_face_curve_derivatives_circle_closed_form():
    # Face midpoint at y=-0.3 (x=0.4) on the D=1 circle.
    arc = CircleArc(0.0, 0.0, R, (0.4, -0.3), (math.sqrt(0.25 - 0.0625), -0.25))
    d = face_curve_derivatives(arc, y0=-0.35, y1=-0.25, x0=0.35, x1=0.45)
    assert d.dxdy == pytest.approx(0.75, rel=1e-14)
    assert d.d2xdy2 == pytest.approx(-3.90625, rel=1e-14)
    assert d.d3xdy3 == pytest.approx(-3 * R * R * (-0.3) / 0.4**5, rel=1e-14)


def test_face_curve_derivatives_equator_symmetry():
    arc = CircleArc(0.0, 0.0, R, (0.5, 0.0), (0.5, 0.0))
    d = face_curve_derivatives(arc, y0=-0.05, y1=0.05, x0=0.49, x1=0.5)
    assert d.dxdy == pytest.approx(0.0, abs=1e-15)
    assert d.d2xdy2 == pytest.approx(-1.0 / R, rel=1e-14)


def test_face_curve_derivatives_match_finite_differences():
    arc = CircleArc(0.0, 0.0, R, (0.4, -0.3), (math.sqrt(0.25 - 0.0625), -0.25))
    y0, y1 = -0.3, -0.25
    d = face_curve_derivatives(arc, y0=y0, y1=y1)
    ym = 0.5 * (y0 + y1)
    xf = lambda y: float(arc.x_at_y(y))
    h = 1e-5
    fd1 = (xf(ym + h) - xf(ym - h)) / (2 * h)
    assert d.dxdy == pytest.approx(fd1, abs=5 * h * h)
    h = 1e-3  # larger step: higher differences are cancellation-limited
    fd2 = (xf(ym + h) - 2 * xf(ym) + xf(ym - h)) / h**2
    fd3 = (xf(ym + 2 * h) - 2 * xf(ym + h) + 2 * xf(ym - h) - xf(ym - 2 * h)) / (2 * h**3)
    assert d.d2xdy2 == pytest.approx(fd2, rel=1e-5)
    assert d.d3xdy3 == pytest.approx(fd3, rel=1e-3)


def test_face_curve_derivatives_tangency_raises():
    # Face mid-height numerically at the circle bottom: x -> 0 there and the
    # y-parametrized slope is unbounded.
    y1 = -0.5 + 2e-16
    x1 = math.sqrt(max(0.25 - y1 * y1, 0.0))
    arc = CircleArc(0.0, 0.0, R, (0.0, -0.5), (x1, y1))
    with pytest.raises(SingularFaceError):
        face_curve_derivatives(arc, y0=-0.5, y1=y1)


def test_monotonicity_violation_raises():
    # Arc spanning across the circle bottom: x not monotone in y.
    arc = CircleArc.__new__(CircleArc)
    object.__setattr__(arc, "cx", 0.0)
    object.__setattr__(arc, "cy", 0.0)
    object.__setattr__(arc, "radius", R)
    object.__setattr__(arc, "p0", (-0.2, -math.sqrt(0.25 - 0.04)))
    object.__setattr__(arc, "p1", (0.2, -math.sqrt(0.25 - 0.04)))
    cell = CutCellShape.__new__(CutCellShape)
    for k, v in dict(x0=-0.2, x1=0.2, y0=-0.5, y1=-math.sqrt(0.25 - 0.04), arc=arc, side="right").items():
        object.__setattr__(cell, k, v)
    with pytest.raises(MeshRequirementError):
        cell_geometry(cell)


def test_slice_width_continuity():
    x0, x1 = 0.35, 0.4
    y0 = -math.sqrt(R * R - x0 * x0)
    y1 = -math.sqrt(R * R - x1 * x1)
    cell = right_cut_cell(x0, x1, y0, y1)
    ys = np.linspace(y0, y1, 1001)
    w = slice_width(cell, ys)
    jumps = np.abs(np.diff(w))
    assert np.max(jumps) < 1e-2 * max(abs(float(np.max(w))), 1.0)
    # refined: jumps shrink linearly with sampling (continuity)
    ys2 = np.linspace(y0, y1, 2001)
    jumps2 = np.abs(np.diff(slice_width(cell, ys2)))
    assert np.max(jumps2) < 0.75 * np.max(jumps)


def test_stored_volume_matches_slice_quadrature():
    x0, x1 = 0.15, 0.2
    y0 = -math.sqrt(R * R - x0 * x0)
    y1 = -math.sqrt(R * R - x1 * x1)
    cell = right_cut_cell(x0, x1, y0, y1)
    g = cell_geometry(cell)
    vol_q = oracle_integral(lambda y: slice_width(cell, y), y0, y1)
    assert abs(vol_q - g.vol) < 1e-11 * g.vol


def test_arc_slope_sq_means_vs_quadrature():
    arc = CircleArc(0.0, 0.0, R, (0.3, -0.4), (0.4, -0.3))
    m_y = arc_slope_sq_mean_y(arc, -0.4, -0.3)
    oracle = oracle_average(lambda y: (y / math.sqrt(R * R - y * y)) ** 2, -0.4, -0.3)
    assert m_y == pytest.approx(oracle, rel=1e-12)
    m_x = arc_slope_sq_mean_x(arc, 0.3, 0.4)
    oracle_x = oracle_average(lambda x: (x / math.sqrt(R * R - x * x)) ** 2, 0.3, 0.4)
    assert m_x == pytest.approx(oracle_x, rel=1e-12)
