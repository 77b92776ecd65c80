"""Exact geometry for cut-Cartesian cells bounded by circular arcs.

Conventions used throughout the package:

* A cut cell is the fluid part of an axis-aligned box ``[x0, x1] x [y0, y1]``
  whose outer corner region is removed by a single circular arc.  The arc
  always joins two opposite corners of the box, so every horizontal slice of
  the cell spans ``[x_w(Y), x_e(Y)]`` and every vertical slice spans
  ``[y_s(X), y_n(X)]`` with monotone limits (a mesh requirement).
* ``side`` says which lateral box face the arc replaces: ``"right"`` means
  the arc forms the east boundary (fluid lies west of it), ``"left"`` the
  west boundary.  In both cases the arc also forms the south boundary (the
  slice width vanishes at ``y0``).
* All per-cell constants (volume, mean sizes, slice-width derivatives) have
  closed forms for circular arcs and are computed once, exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GeometryError",
    "MeshRequirementError",
    "SingularFaceError",
    "CircleArc",
    "StraightSegment",
    "CutCellShape",
    "RectCellShape",
    "GeomConstants",
    "slice_width",
    "cell_geometry",
    "face_curve_derivatives",
    "gauss_average",
]


class GeometryError(Exception):
    """Base class for geometry failures."""


class MeshRequirementError(GeometryError):
    """A face violates smoothness/monotonicity mesh requirements."""


class SingularFaceError(GeometryError):
    """Curve derivative requested at a coordinate tangency."""


# 24-point Gauss-Legendre rule; used for the handful of per-face constants
# without a convenient antiderivative (they are analytic on the face).
_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


def gauss_average(fn, a: float, b: float) -> float:
    """Average of fn over [a, b] by fixed-order Gauss-Legendre quadrature."""
    if b <= a:
        raise GeometryError(f"empty interval [{a}, {b}]")
    x = 0.5 * (b - a) * _GL_X + 0.5 * (a + b)
    return 0.5 * float(np.dot(_GL_W, fn(x)))


def _int_circle_x(r: float, t0: float, t1: float) -> float:
    """Integral of sqrt(r^2 - t^2) dt from t0 to t1 (|t| <= r)."""

    def anti(t: float) -> float:
        t = min(max(t, -r), r)
        return 0.5 * (t * math.sqrt(max(r * r - t * t, 0.0)) + r * r * math.asin(t / r))

    return anti(t1) - anti(t0)


def _theta_minus_sin(theta: float) -> float:
    """theta - sin(theta), cancellation-free for small angles."""
    if theta >= 0.1:
        return theta - math.sin(theta)
    t2 = theta * theta
    # theta^3/6 * (1 - t2/20 + t2^2/840 - t2^3/60480)
    return theta * t2 / 6.0 * (1.0 - t2 / 20.0 + t2 * t2 / 840.0 - t2 * t2 * t2 / 60480.0)


def _int_slope_sq(r: float, t0: float, t1: float) -> float:
    """Integral of t^2 / (r^2 - t^2) dt, i.e. of the squared arc slope."""

    def anti(t: float) -> float:
        return r * math.atanh(t / r) - t

    return anti(t1) - anti(t0)


@dataclass(frozen=True)
class CircleArc:
    """Monotone piece of a circle, fluid on the concave side.

    The piece must stay within one quadrant relative to the circle center so
    that both coordinates are monotone along it (mesh requirement 2) and the
    curvature is continuous (requirement 1).
    """

    cx: float
    cy: float
    radius: float
    p0: tuple[float, float]  # endpoint with the smaller y
    p1: tuple[float, float]  # endpoint with the larger y
    kind: str = field(default="circular-arc", init=False)

    def __post_init__(self):
        if self.radius <= 0.0:
            raise GeometryError("arc radius must be positive")
        if self.p1[1] < self.p0[1]:
            raise GeometryError("arc endpoints must be ordered by y")
        for p in (self.p0, self.p1):
            d = math.hypot(p[0] - self.cx, p[1] - self.cy)
            if abs(d - self.radius) > 1e-9 * self.radius:
                raise GeometryError(f"endpoint {p} not on circle (|d-R|={d - self.radius:.2e})")

    @property
    def sign_x(self) -> float:
        """Branch sign: x - cx = sign_x * sqrt(R^2 - (y-cy)^2)."""
        sx0 = self.p0[0] - self.cx
        sx1 = self.p1[0] - self.cx
        s = sx0 if abs(sx0) > abs(sx1) else sx1
        return 1.0 if s >= 0.0 else -1.0

    @property
    def sign_y(self) -> float:
        """Branch sign: y - cy = sign_y * sqrt(R^2 - (x-cx)^2)."""
        sy0 = self.p0[1] - self.cy
        sy1 = self.p1[1] - self.cy
        s = sy0 if abs(sy0) > abs(sy1) else sy1
        return 1.0 if s >= 0.0 else -1.0

    def x_at_y(self, y):
        u = np.asarray(y, dtype=float) - self.cy
        return self.cx + self.sign_x * np.sqrt(np.maximum(self.radius**2 - u * u, 0.0))

    def y_at_x(self, x):
        u = np.asarray(x, dtype=float) - self.cx
        return self.cy + self.sign_y * np.sqrt(np.maximum(self.radius**2 - u * u, 0.0))

    def dxdy(self, y: float) -> float:
        x = float(self.x_at_y(y))
        if abs(x - self.cx) < 1e-13 * self.radius:
            raise SingularFaceError("dx/dy singular: point on a vertical-tangency of the circle")
        return -(y - self.cy) / (x - self.cx)

    def dydx(self, x: float) -> float:
        y = float(self.y_at_x(x))
        if abs(y - self.cy) < 1e-13 * self.radius:
            raise SingularFaceError("dy/dx singular: point on a horizontal-tangency of the circle")
        return -(x - self.cx) / (y - self.cy)

    def curvature(self, _s: float = 0.0) -> float:
        return 1.0 / self.radius


@dataclass(frozen=True)
class StraightSegment:
    """Straight boundary piece (e.g. the cavity lid or a chamfer)."""

    p0: tuple[float, float]
    p1: tuple[float, float]
    kind: str = field(default="straight-segment", init=False)

    def dxdy(self, _y: float) -> float:
        dy = self.p1[1] - self.p0[1]
        if dy == 0.0:
            raise SingularFaceError("dx/dy undefined on a horizontal segment")
        return (self.p1[0] - self.p0[0]) / dy

    def dydx(self, _x: float) -> float:
        dx = self.p1[0] - self.p0[0]
        if dx == 0.0:
            raise SingularFaceError("dy/dx undefined on a vertical segment")
        return (self.p1[1] - self.p0[1]) / dx

    def curvature(self, _s: float = 0.0) -> float:
        return 0.0


@dataclass(frozen=True)
class RectCellShape:
    x0: float
    x1: float
    y0: float
    y1: float


@dataclass(frozen=True)
class CutCellShape:
    """Three-faced cut cell: a box with one corner region cut off by an arc.

    ``side="right"``: arc from the SW corner to the NE corner, fluid west of
    it; straight faces are the west face and the north face.
    ``side="left"``: arc from the SE corner to the NW corner, fluid east of
    it; straight faces are the east face and the north face.
    """

    x0: float
    x1: float
    y0: float
    y1: float
    arc: CircleArc
    side: str  # "right" | "left"

    def __post_init__(self):
        if self.side not in ("right", "left"):
            raise GeometryError(f"unknown cut side {self.side!r}")
        lo = (self.x0, self.y0) if self.side == "right" else (self.x1, self.y0)
        hi = (self.x1, self.y1) if self.side == "right" else (self.x0, self.y1)
        tol = 1e-9 * max(self.x1 - self.x0, self.y1 - self.y0, 1.0)
        if (
            abs(self.arc.p0[0] - lo[0]) > tol
            or abs(self.arc.p0[1] - lo[1]) > tol
            or abs(self.arc.p1[0] - hi[0]) > tol
            or abs(self.arc.p1[1] - hi[1]) > tol
        ):
            raise GeometryError("arc endpoints do not join the expected box corners")

    # Horizontal slice limits x_w(Y), x_e(Y).
    def x_west(self, y):
        if self.side == "right":
            return np.broadcast_to(self.x0, np.shape(y)).astype(float) if np.ndim(y) else self.x0
        return self.arc.x_at_y(y)

    def x_east(self, y):
        if self.side == "right":
            return self.arc.x_at_y(y)
        return np.broadcast_to(self.x1, np.shape(y)).astype(float) if np.ndim(y) else self.x1

    # Vertical slice limits y_s(X), y_n(X).
    def y_south(self, x):
        return self.arc.y_at_x(x)

    def y_north(self, x):
        return np.broadcast_to(self.y1, np.shape(x)).astype(float) if np.ndim(x) else self.y1


CellShape = RectCellShape | CutCellShape


def slice_width(cell: CellShape, y) -> float | np.ndarray:
    """Horizontal slice width x_e(Y) - x_w(Y) of a cell at height Y.

    Raises GeometryError if Y lies outside the cell's y-range.
    """
    ymin, ymax = cell.y0, cell.y1
    ya = np.asarray(y, dtype=float)
    eps = 1e-12 * max(ymax - ymin, 1.0)
    if np.any(ya < ymin - eps) or np.any(ya > ymax + eps):
        raise GeometryError(f"slice height {y} outside cell range [{ymin}, {ymax}]")
    if isinstance(cell, RectCellShape):
        w = np.broadcast_to(cell.x1 - cell.x0, ya.shape).astype(float)
    else:
        w = np.asarray(cell.x_east(ya), dtype=float) - np.asarray(cell.x_west(ya), dtype=float)
    w = np.maximum(w, 0.0)
    return float(w) if np.ndim(y) == 0 else w


def slice_height(cell: CellShape, x) -> float | np.ndarray:
    """Vertical slice height y_n(X) - y_s(X) of a cell at abscissa X."""
    xmin, xmax = cell.x0, cell.x1
    xa = np.asarray(x, dtype=float)
    eps = 1e-12 * max(xmax - xmin, 1.0)
    if np.any(xa < xmin - eps) or np.any(xa > xmax + eps):
        raise GeometryError(f"slice abscissa {x} outside cell range [{xmin}, {xmax}]")
    if isinstance(cell, RectCellShape):
        h = np.broadcast_to(cell.y1 - cell.y0, xa.shape).astype(float)
    else:
        h = np.asarray(cell.y_north(xa), dtype=float) - np.asarray(cell.y_south(xa), dtype=float)
    h = np.maximum(h, 0.0)
    return float(h) if np.ndim(x) == 0 else h


@dataclass(frozen=True)
class GeomConstants:
    """Per-cell geometric constants, computed once at mesh build.

    dx, dy   : overall cell extents
    vol      : cell area (both integration orders agree to round-off)
    wx, wy   : mean extents vol/dy and vol/dx
    dwdy0    : d(slice width)/dy at the cell's mid-height (0 for rectangles)
    dhdx0    : d(slice height)/dx at the cell's mid-abscissa (0 for rectangles)
    """

    dx: float
    dy: float
    vol: float
    wx: float
    wy: float
    dwdy0: float
    dhdx0: float


def _monotone_check(arc: CircleArc, y0: float, y1: float) -> None:
    # Both coordinates monotone along the arc <=> the piece stays within one
    # quadrant of its circle.  A single monotone branch must reproduce both
    # endpoints; an arc crossing a tangency cannot.
    tol = 1e-9 * arc.radius
    for p in (arc.p0, arc.p1):
        if abs(float(arc.x_at_y(p[1])) - p[0]) > tol or abs(float(arc.y_at_x(p[0])) - p[1]) > tol:
            raise MeshRequirementError(
                "arc is not a single monotone branch (crosses a coordinate tangency)"
            )
    ys = np.linspace(y0, y1, 33)[1:-1]
    u = ys - arc.cy
    x = arc.x_at_y(ys) - arc.cx
    slopes = -u / np.where(np.abs(x) > 0, x, np.nan)
    if slopes.size and (np.nanmax(slopes) > 0.0) and (np.nanmin(slopes) < 0.0):
        raise MeshRequirementError("arc slope changes sign: face coordinate not monotone")


def cell_geometry(cell: CellShape) -> GeomConstants:
    """All geometric constants of a cell, by closed-form integration."""
    dx = cell.x1 - cell.x0
    dy = cell.y1 - cell.y0
    if dx <= 0.0 or dy <= 0.0:
        raise GeometryError("degenerate cell box")
    if isinstance(cell, RectCellShape):
        vol = dx * dy
        return GeomConstants(dx, dy, vol, dx, dy, 0.0, 0.0)

    arc = cell.arc
    _monotone_check(arc, cell.y0, cell.y1)
    r = arc.radius
    # Stable closed form: the arc joins two opposite box corners, so the
    # fluid part is half the box plus the circular segment beyond the chord.
    # Both slice orderings reduce to this same expression; the naive
    # antiderivative difference loses up to ~1e-12 relative on twin cells.
    chord = math.hypot(dx, dy)
    theta = 2.0 * math.asin(min(chord / (2.0 * r), 1.0))
    vol = 0.5 * dx * dy + 0.5 * r * r * _theta_minus_sin(theta)
    if vol <= 0.0:
        raise GeometryError("cut cell has non-positive volume")

    ymid = 0.5 * (cell.y0 + cell.y1)
    xmid = 0.5 * (cell.x0 + cell.x1)
    u = ymid - arc.cy
    qx = arc.x_at_y(ymid) - arc.cx  # signed sqrt term
    dxady = -u / qx  # d(arc x)/dy at mid-height
    # Slice width w(y) = x_e - x_w; arc contributes with +/- depending on side.
    dwdy0 = dxady if cell.side == "right" else -dxady
    v = xmid - arc.cx
    qy = arc.y_at_x(xmid) - arc.cy
    dyadx = -v / qy
    dhdx0 = -dyadx  # h(x) = y1 - y_arc(x)

    return GeomConstants(dx, dy, vol, vol / dy, vol / dx, dwdy0, dhdx0)


@dataclass(frozen=True)
class FaceCurveDerivatives:
    """Midpoint derivatives of a boundary face in both parametrizations.

    y-parametrization values (dxdy, d2xdy2, d3xdy3) are taken at the face's
    mid-height; x-parametrization values at the mid-abscissa.  sigma_y is the
    sign of dx/dy on the face (orientation of x along increasing y), sigma_x
    the sign of dy/dx.
    """

    dxdy: float
    d2xdy2: float
    d3xdy3: float
    dydx: float
    d2ydx2: float
    d3ydx3: float
    sigma_y: float
    sigma_x: float


def face_curve_derivatives(curve, y0: float | None = None, y1: float | None = None,
                           x0: float | None = None, x1: float | None = None) -> FaceCurveDerivatives:
    """Exact midpoint curve derivatives of a boundary face.

    For a straight face all higher derivatives vanish; a vertical segment has
    dx/dy = 0 with sigma arbitrary (0).  For circle arcs the closed forms
    dx/dy = -(y-cy)/(x-cx), d2x/dy2 = -R^2/(x-cx)^3, d3x/dy3 =
    -3R^2(y-cy)/(x-cx)^5 are used (and mirrored for the x-parametrization).
    """
    if isinstance(curve, StraightSegment):
        dx = curve.p1[0] - curve.p0[0]
        dy = curve.p1[1] - curve.p0[1]
        dxdy = 0.0 if dy == 0.0 else dx / dy
        dydx = 0.0 if dx == 0.0 else dy / dx
        return FaceCurveDerivatives(dxdy, 0.0, 0.0, dydx, 0.0, 0.0,
                                    math.copysign(1.0, dxdy) if dxdy else 0.0,
                                    math.copysign(1.0, dydx) if dydx else 0.0)
    if not isinstance(curve, CircleArc):
        raise GeometryError(f"unsupported curve {curve!r}")

    arc = curve
    if y0 is None or y1 is None:
        y0, y1 = arc.p0[1], arc.p1[1]
    if x0 is None or x1 is None:
        x0, x1 = sorted((arc.p0[0], arc.p1[0]))
    r = arc.radius

    ymid = 0.5 * (y0 + y1)
    u = ymid - arc.cy
    xr = float(arc.x_at_y(ymid)) - arc.cx
    if abs(xr) < 1e-7 * r:
        raise SingularFaceError("face mid-height lies on a vertical tangency of the circle")
    dxdy = -u / xr
    d2xdy2 = -r * r / xr**3
    d3xdy3 = -3.0 * r * r * u / xr**5

    xmid = 0.5 * (x0 + x1)
    v = xmid - arc.cx
    yr = float(arc.y_at_x(xmid)) - arc.cy
    if abs(yr) < 1e-7 * r:
        raise SingularFaceError("face mid-abscissa lies on a horizontal tangency of the circle")
    dydx = -v / yr
    d2ydx2 = -r * r / yr**3
    d3ydx3 = -3.0 * r * r * v / yr**5

    sigma_y = math.copysign(1.0, float(arc.x_at_y(y1)) - float(arc.x_at_y(y0)))
    sigma_x = math.copysign(1.0, float(arc.y_at_x(x1)) - float(arc.y_at_x(x0)))
    return FaceCurveDerivatives(dxdy, d2xdy2, d3xdy3, dydx, d2ydx2, d3ydx3, sigma_y, sigma_x)


def arc_slope_sq_mean_y(arc: CircleArc, y0: float, y1: float) -> float:
    """Mean of (dx/dy)^2 over [y0, y1] along the arc, in closed form."""
    return _int_slope_sq(arc.radius, y0 - arc.cy, y1 - arc.cy) / (y1 - y0)


def arc_slope_sq_mean_x(arc: CircleArc, x0: float, x1: float) -> float:
    """Mean of (dy/dx)^2 over [x0, x1] along the arc, in closed form."""
    return _int_slope_sq(arc.radius, x0 - arc.cx, x1 - arc.cx) / (x1 - x0)
