"""Reconstruction of face quantities from cell averages.

Everything the scheme knows about a field lives in four face arrays plus the
cell averages:

* ``vy``  sliding averages along vertical-role faces (d(.)/dy weighting),
* ``hx``  sliding averages along horizontal-role faces,
* ``gv``  sliding averages of the x-partial along vertical-role faces,
* ``gh``  sliding averages of the y-partial along horizontal-role faces.

Interior faces relate these to the two adjacent cell averages through
constant coefficients plus a small residual built from lagged first-order
derivative estimates (the product-average identity supplies the residual's
quadratic corrections).  Boundary faces close with second-order compact end
relations; the twin interface gets the summed end relation, and the twin
cells' curved faces convert between parametrizations instead (the only
orientation where their geometry is regular).

Line systems are tridiagonal but interior rows are diagonal, so the
vectorized engine computes interior faces in one shot and sweeps the few
boundary closures afterwards; ``sliding_average_line_solve`` and
``derivative_sliding_line_solve`` expose the equivalent per-line tridiagonal
path used by the tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import gauss_average, slice_height, slice_width
from .mesh import (
    CutCellMesh,
    H_ARC_S,
    H_INT,
    H_LID,
    ND_INTERIOR,
    ND_LID,
    ND_LID_CORNER,
    ND_POLE,
    ND_WALL_H,
    V_ARC_E,
    V_ARC_W,
    V_INT,
)
from .solver import TriDiagonalSystem, solve_tridiagonal

__all__ = [
    "pkp_product_average",
    "total_derivative_mid",
    "total_derivative_central",
    "node_from_faces",
    "node_boundary_compact",
    "chain_rule_convert",
    "solitary_convert",
    "solitary_derivative",
    "FieldBC",
    "Estimates",
    "FieldRecon",
    "Reconstructor",
    "sliding_average_line_solve",
    "derivative_sliding_line_solve",
]


# ---------------------------------------------------------------------------
# primitive operators
# ---------------------------------------------------------------------------

def pkp_product_average(phi_bar: float, psi_bar: float, dphi0: float,
                        dpsi0: float, delta: float):
    """Average of a product from averages of the factors.

    mean(phi*psi) = mean(phi)*mean(psi) + delta^2/12 * phi'(mid)*psi'(mid),
    dropping the fourth-order remainder.  Exact for linear factors.
    """
    if np.any(np.asarray(delta) <= 0.0):
        raise ValueError("interval length must be positive")
    return phi_bar * psi_bar + (delta * delta) / 12.0 * dphi0 * dpsi0


def total_derivative_mid(dy_f: float, phi_f: float | None = None,
                         dy_s: float | None = None, phi_s: float | None = None,
                         dy_n: float | None = None, phi_n: float | None = None) -> float:
    """First-order mid-face total derivative from neighbor-face averages.

    Uses both neighbors when available, otherwise the one-sided variant with
    the face's own average.  Raises on a missing required neighbor.
    """
    has_s = dy_s is not None and phi_s is not None
    has_n = dy_n is not None and phi_n is not None
    if has_s and has_n:
        return 2.0 * (phi_n - phi_s) / (2.0 * dy_f + dy_s + dy_n)
    if has_n:
        if phi_f is None:
            raise ValueError("one-sided variant needs the face's own average")
        return 2.0 * (phi_n - phi_f) / (dy_f + dy_n)
    if has_s:
        if phi_f is None:
            raise ValueError("one-sided variant needs the face's own average")
        return 2.0 * (phi_f - phi_s) / (dy_f + dy_s)
    raise ValueError("no neighbor averages supplied")


def total_derivative_central(phi_s: float, phi_n: float, dy_f: float) -> float:
    """Central difference of the face-end values over the face extent."""
    if dy_f == 0.0:
        raise ZeroDivisionError("degenerate face extent")
    return (phi_n - phi_s) / dy_f


def node_from_faces(w_left: float, phi_left: float, w_right: float, phi_right: float) -> float:
    """Nodal value between two coplanar faces (cross-weighted average)."""
    return (w_right * phi_left + w_left * phi_right) / (w_left + w_right)


def node_boundary_compact(phi_face: float, phi_partner_node: float) -> float:
    """Second-order boundary-node value from the terminating face average."""
    return 2.0 * phi_face - phi_partner_node


def chain_rule_convert(*, total_dy: float | None = None, par_dx: float | None = None,
                       par_dy: float | None = None, total_dx: float | None = None,
                       slope_dxdy: float | None = None) -> float:
    """Convert between total and partial face derivatives via the face slope.

    Supplying (par_dy, par_dx, slope_dxdy) returns the total y-derivative;
    (total_dx, slope_dxdy) returns the total y-derivative; (total_dy,
    slope_dxdy) returns the total x-derivative (requires a nonzero slope).
    """
    if par_dy is not None and par_dx is not None and slope_dxdy is not None:
        return par_dy + par_dx * slope_dxdy
    if total_dx is not None and slope_dxdy is not None:
        return total_dx * slope_dxdy
    if total_dy is not None and slope_dxdy is not None:
        if slope_dxdy == 0.0:
            raise ZeroDivisionError("cannot divide by a zero face slope")
        return total_dy / slope_dxdy
    raise ValueError("unsupported conversion combination")


def solitary_convert(phi_bar_y: float, dy_f: float, dx_f: float, d2xdy2_0: float,
                     dphi_dy_0: float, sigma_y: float = -1.0) -> float:
    """Sliding average w.r.t. x from the one w.r.t. y on a curved face.

    sigma_y is the sign of dx/dy along the face (+1 when x grows with y).
    With zero curvature the map is the identity, bit for bit.
    """
    if dx_f == 0.0:
        raise ZeroDivisionError("degenerate face x-extent")
    corr = sigma_y * (dy_f / dx_f) * (dy_f * dy_f / 12.0) * d2xdy2_0 * dphi_dy_0
    return phi_bar_y + corr


def solitary_derivative(g_x_bar_y: float, phi_bar_y: float, dy_f: float, dx_f: float,
                        slope_s: float, slope_n: float, phi_node_s: float,
                        phi_node_n: float, slope_sq_mean: float, slope_mid: float,
                        d2xdy2_0: float, d3xdy3_0: float, dg_dy_0: float,
                        dphi_dy_0: float, sigma_y: float = -1.0) -> float:
    """Sliding average of the y-partial along a curved face, from x-partials.

    Implements the integration-by-parts identity with product-average
    closures; ``slope_*`` are dx/dy at the face ends, ``slope_sq_mean`` is
    the exact mean of (dx/dy)^2 along the face, and sigma_y the orientation
    sign of dx/dy (the derivation's integral direction flips with it).
    """
    if dx_f == 0.0:
        raise ZeroDivisionError("degenerate face x-extent")
    bnd = phi_node_n * slope_n - phi_node_s * slope_s
    bnd_avg = phi_bar_y * (slope_n - slope_s)
    val = (bnd - bnd_avg
           - (dy_f**3 / 12.0) * dphi_dy_0 * d3xdy3_0
           - dy_f * g_x_bar_y * slope_sq_mean
           - (dy_f**3 / 6.0) * dg_dy_0 * slope_mid * d2xdy2_0)
    return sigma_y * val / dx_f


# ---------------------------------------------------------------------------
# boundary conditions per field
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FieldBC:
    """How a field behaves on the boundary faces.

    dirichlet=True: boundary sliding averages are data (no-slip walls and
    the moving lid); nodal values on walls are wall_value, on the lid
    lid_value, with wall precedence at the lid corners.
    dirichlet=False (pressure): boundary faces are reconstructed through the
    compact end closures and the curved-face conversions.
    """

    dirichlet: bool
    wall_value: float = 0.0
    lid_value: float = 0.0

    @staticmethod
    def velocity_u(U: float) -> "FieldBC":
        return FieldBC(True, 0.0, U)

    @staticmethod
    def velocity_v() -> "FieldBC":
        return FieldBC(True, 0.0, 0.0)

    @staticmethod
    def pressure() -> "FieldBC":
        return FieldBC(False)


@dataclass
class Estimates:
    """Lagged first-order derivative estimates feeding the residual terms."""

    dphif_v: np.ndarray  # d(phi_f)/dy at vertical-role faces
    dphif_h: np.ndarray  # d(phi_f)/dx at horizontal-role faces
    dsl_y: np.ndarray    # d(x-slice average)/dy per cell
    dsl_x: np.ndarray    # d(y-slice average)/dx per cell
    dg_v: np.ndarray     # d((dphi/dx)_f)/dy at vertical-role faces
    dg_h: np.ndarray     # d((dphi/dy)_f)/dx at horizontal-role faces

    @staticmethod
    def zeros(mesh: CutCellMesh) -> "Estimates":
        nv, nh, nc = len(mesh.v_row), len(mesh.h_col), mesh.n_cells
        return Estimates(np.zeros(nv), np.zeros(nh), np.zeros(nc),
                         np.zeros(nc), np.zeros(nv), np.zeros(nh))


@dataclass
class FieldRecon:
    vy: np.ndarray
    hx: np.ndarray
    gv: np.ndarray
    gh: np.ndarray
    nodes: np.ndarray
    est: Estimates


# ---------------------------------------------------------------------------
# precomputed coefficient tables
# ---------------------------------------------------------------------------

DV_REG, DV_LIRR, DV_RIRR, DV_TWIN, DV_ARC_W, DV_ARC_E = 0, 1, 2, 3, 4, 5
DH_REG, DH_SIRR, DH_ARC_S, DH_LID, DH_CORNER = 0, 1, 2, 3, 4


class ReconTables:
    """Geometry-only constants of every face relation, built once per mesh."""

    def __init__(self, mesh: CutCellMesh):
        self.mesh = mesh
        self._build_v(mesh)
        self._build_h(mesh)
        self._build_twin(mesh)
        self._build_corner(mesh)

    # -- vertical-role faces (row systems) ------------------------------
    def _build_v(self, m: CutCellMesh) -> None:
        nv = len(m.v_row)
        wx = m.cell_wx
        dw = m.cell_dwdy0
        self.sv_B = np.ones(nv)
        self.sv_D = np.zeros(nv)
        self.sv_E = np.zeros(nv)
        self.sv_rl = np.zeros(nv)
        self.sv_rr = np.zeros(nv)
        self.sv_rf = np.zeros(nv)
        self.sv_bc = np.zeros(nv)  # compact-closure residual coefficient

        self.dv_type = np.zeros(nv, dtype=np.int8)
        self.dv_B = np.ones(nv)
        self.dv_F = np.zeros(nv)
        self.dv_D = np.zeros(nv)
        self.dv_E = np.zeros(nv)
        self.dv_A = np.zeros(nv)
        self.dv_C = np.zeros(nv)
        self.dv_rf = np.zeros(nv)
        self.dv_rl = np.zeros(nv)
        self.dv_rr = np.zeros(nv)
        self.dv_rg = np.zeros(nv)
        self.dv_rgp = np.zeros(nv)
        self.dv_rgn = np.zeros(nv)

        for s in range(nv):
            dy = float(m.v_dyf[s])
            k12 = dy * dy / 12.0
            kind = int(m.v_kind[s])
            if kind == V_INT:
                L, R = int(m.v_cl[s]), int(m.v_cr[s])
                wl, wr = float(wx[L]), float(wx[R])
                dwl, dwr = float(dw[L]), float(dw[R])
                self.sv_B[s] = wl + wr
                self.sv_D[s] = wr
                self.sv_E[s] = wl
                self.sv_rl[s] = k12 * (dwr - (wr / wl) * dwl)
                self.sv_rr[s] = k12 * (dwl - (wl / wr) * dwr)
                self.sv_rf[s] = -k12 * (dwl + dwr)

                lcut = m.cut_sign[L] != 0
                rcut = m.cut_sign[R] != 0
                if int(m.v_row[s]) == 0:
                    self._set_twin_iface_v(m, s)
                elif not lcut and not rcut:
                    dxl, dxr = float(m.cell_dx[L]), float(m.cell_dx[R])
                    self.dv_type[s] = DV_REG
                    self.dv_B[s] = 1.0
                    self.dv_F[s] = 2.0 * (dxr - dxl) / (dxl * dxr)
                    self.dv_D[s] = -2.0 * dxr / (dxl * (dxl + dxr))
                    self.dv_E[s] = 2.0 * dxl / (dxr * (dxl + dxr))
                elif lcut:
                    # irregular west cell, rectangular east cell
                    shape = m.cell_shape[L]
                    dxr = float(m.cell_dx[R])
                    y0, y1 = float(m.ys[m.v_row[s]]), float(m.ys[m.v_row[s] + 1])
                    avg_inv = gauss_average(lambda y: 1.0 / (slice_width(shape, y) + dxr), y0, y1)
                    w0 = float(m.cell_w_mid[L])
                    B = wl
                    F = 2.0 * (1.0 - wl / wr)
                    D = -2.0 * dxr * avg_inv
                    E = -D - F
                    self.dv_type[s] = DV_LIRR
                    self.dv_B[s], self.dv_F[s], self.dv_D[s], self.dv_E[s] = B, F, D, E
                    self.dv_rf[s] = k12 * dwl * (-2.0 / wr)
                    self.dv_rl[s] = k12 * dwl * (2.0 * dxr / (w0 + dxr) ** 2 - D / B)
                    self.dv_rr[s] = k12 * dwl * (2.0 / wr) * (w0 * (w0 + 2.0 * dxr) / (w0 + dxr) ** 2)
                    self.dv_rg[s] = -k12 * dwl
                else:
                    # irregular east cell, rectangular west cell
                    shape = m.cell_shape[R]
                    dxl = float(m.cell_dx[L])
                    y0, y1 = float(m.ys[m.v_row[s]]), float(m.ys[m.v_row[s] + 1])
                    avg_inv = gauss_average(lambda y: 1.0 / (slice_width(shape, y) + dxl), y0, y1)
                    w0 = float(m.cell_w_mid[R])
                    B = wr
                    F = 2.0 * (wr / wl - 1.0)
                    E = 2.0 * dxl * avg_inv
                    D = -E - F
                    self.dv_type[s] = DV_RIRR
                    self.dv_B[s], self.dv_F[s], self.dv_D[s], self.dv_E[s] = B, F, D, E
                    self.dv_rf[s] = k12 * dwr * (2.0 / wl)
                    self.dv_rr[s] = k12 * dwr * (-2.0 * dxl / (w0 + dxl) ** 2 - E / B)
                    self.dv_rl[s] = k12 * dwr * (-2.0 / wl) * (w0 * (w0 + 2.0 * dxl) / (w0 + dxl) ** 2)
                    self.dv_rg[s] = -k12 * dwr
            elif kind == V_ARC_W:
                R = int(m.v_cr[s])
                self.sv_bc[s] = -dy * dy / (6.0 * float(wx[R])) * float(dw[R])
                self.dv_type[s] = DV_ARC_W
                self.dv_B[s] = 2.0 * float(wx[R])
                self.dv_C[s] = float(wx[R])
                self.dv_F[s] = -6.0
                self.dv_E[s] = 6.0
                self.dv_rr[s] = -k12 * float(dw[R]) * 6.0 / float(wx[R])
                self.dv_rg[s] = -k12 * float(dw[R]) * 2.0
                self.dv_rgn[s] = -k12 * float(dw[R])
            else:  # V_ARC_E
                L = int(m.v_cl[s])
                self.sv_bc[s] = -dy * dy / (6.0 * float(wx[L])) * float(dw[L])
                self.dv_type[s] = DV_ARC_E
                self.dv_B[s] = 2.0 * float(wx[L])
                self.dv_A[s] = float(wx[L])
                self.dv_F[s] = 6.0
                self.dv_D[s] = -6.0
                self.dv_rl[s] = k12 * float(dw[L]) * 6.0 / float(wx[L])
                self.dv_rg[s] = -k12 * float(dw[L]) * 2.0
                self.dv_rgp[s] = -k12 * float(dw[L])

    def _set_twin_iface_v(self, m: CutCellMesh, s: int) -> None:
        L, R = int(m.v_cl[s]), int(m.v_cr[s])
        wl, wr = float(m.cell_wx[L]), float(m.cell_wx[R])
        dwl, dwr = float(m.cell_dwdy0[L]), float(m.cell_dwdy0[R])
        dy = float(m.v_dyf[s])
        k12 = dy * dy / 12.0
        self.dv_type[s] = DV_TWIN
        self.dv_A[s] = wl
        self.dv_B[s] = 2.0 * (wl + wr)
        self.dv_C[s] = wr
        self.dv_D[s] = -6.0
        self.dv_E[s] = 6.0
        self.dv_F[s] = 0.0
        self.dv_rl[s] = k12 * dwl * 6.0 / wl
        self.dv_rr[s] = -k12 * dwr * 6.0 / wr
        self.dv_rg[s] = -k12 * 2.0 * (dwl + dwr)
        self.dv_rgp[s] = -k12 * dwl
        self.dv_rgn[s] = -k12 * dwr

    # -- horizontal-role faces (column systems) --------------------------
    def _build_h(self, m: CutCellMesh) -> None:
        nh = len(m.h_col)
        wy = m.cell_wy
        dh = m.cell_dhdx0
        self.sh_B = np.ones(nh)
        self.sh_D = np.zeros(nh)  # couples the south cell
        self.sh_E = np.zeros(nh)  # couples the north cell
        self.sh_rs = np.zeros(nh)
        self.sh_rn = np.zeros(nh)
        self.sh_rf = np.zeros(nh)
        self.sh_bc = np.zeros(nh)

        self.dh_type = np.zeros(nh, dtype=np.int8)
        self.dh_B = np.ones(nh)
        self.dh_F = np.zeros(nh)
        self.dh_D = np.zeros(nh)  # couples the south cell
        self.dh_E = np.zeros(nh)
        self.dh_A = np.zeros(nh)  # couples the slot below
        self.dh_C = np.zeros(nh)  # couples the slot above
        self.dh_rf = np.zeros(nh)
        self.dh_rs = np.zeros(nh)
        self.dh_rn = np.zeros(nh)
        self.dh_rg = np.zeros(nh)
        self.dh_rgp = np.zeros(nh)
        self.dh_rgn = np.zeros(nh)

        for s in range(nh):
            dx = float(m.h_dxf[s])
            k12 = dx * dx / 12.0
            kind = int(m.h_kind[s])
            q = int(m.h_col[s])
            ncq = int(m.h_ptr[q + 1] - m.h_ptr[q]) - 1  # cells in the column
            if kind == H_INT:
                S, Nc = int(m.h_cs[s]), int(m.h_cn[s])
                ws, wn = float(wy[S]), float(wy[Nc])
                dhs, dhn = float(dh[S]), float(dh[Nc])
                self.sh_B[s] = ws + wn
                self.sh_D[s] = wn
                self.sh_E[s] = ws
                self.sh_rs[s] = k12 * (dhn - (wn / ws) * dhs)
                self.sh_rn[s] = k12 * (dhs - (ws / wn) * dhn)
                self.sh_rf[s] = -k12 * (dhs + dhn)

                if m.cut_sign[S] != 0:
                    shape = m.cell_shape[S]
                    dyn = float(m.cell_dy[Nc])
                    x0, x1 = float(m.xs[q]), float(m.xs[q + 1])
                    avg_inv = gauss_average(lambda x: 1.0 / (slice_height(shape, x) + dyn), x0, x1)
                    h0 = float(m.cell_h_mid[S])
                    B = ws
                    F = 2.0 * (1.0 - ws / wn)
                    D = -2.0 * dyn * avg_inv
                    E = -D - F
                    self.dh_type[s] = DH_SIRR
                    self.dh_B[s], self.dh_F[s], self.dh_D[s], self.dh_E[s] = B, F, D, E
                    self.dh_rf[s] = k12 * dhs * (-2.0 / wn)
                    self.dh_rs[s] = k12 * dhs * (2.0 * dyn / (h0 + dyn) ** 2 - D / B)
                    self.dh_rn[s] = k12 * dhs * (2.0 / wn) * (h0 * (h0 + 2.0 * dyn) / (h0 + dyn) ** 2)
                    self.dh_rg[s] = -k12 * dhs
                else:
                    dys, dyn = float(m.cell_dy[S]), float(m.cell_dy[Nc])
                    self.dh_type[s] = DH_REG
                    self.dh_B[s] = 1.0
                    self.dh_F[s] = 2.0 * (dyn - dys) / (dys * dyn)
                    self.dh_D[s] = -2.0 * dyn / (dys * (dys + dyn))
                    self.dh_E[s] = 2.0 * dys / (dyn * (dys + dyn))
            elif kind == H_ARC_S:
                Nc = int(m.h_cn[s])
                self.sh_bc[s] = -dx * dx / (6.0 * float(wy[Nc])) * float(dh[Nc])
                self.dh_type[s] = DH_CORNER if ncq == 1 else DH_ARC_S
                self.dh_B[s] = 2.0 * float(wy[Nc])
                self.dh_C[s] = float(wy[Nc])
                self.dh_F[s] = -6.0
                self.dh_E[s] = 6.0
                self.dh_rn[s] = -k12 * float(dh[Nc]) * 6.0 / float(wy[Nc])
                self.dh_rg[s] = -k12 * float(dh[Nc]) * 2.0
                self.dh_rgn[s] = -k12 * float(dh[Nc])
            else:  # H_LID
                S = int(m.h_cs[s])
                self.sh_bc[s] = -dx * dx / (6.0 * float(wy[S])) * float(dh[S])
                self.dh_type[s] = DH_CORNER if ncq == 1 else DH_LID
                self.dh_B[s] = 2.0 * float(wy[S])
                self.dh_A[s] = float(wy[S])
                self.dh_F[s] = 6.0
                self.dh_D[s] = -6.0
                self.dh_rs[s] = k12 * float(dh[S]) * 6.0 / float(wy[S])
                self.dh_rg[s] = -k12 * float(dh[S]) * 2.0
                self.dh_rgp[s] = -k12 * float(dh[S])

    # -- twin curved-face conversion constants ---------------------------
    def _build_twin(self, m: CutCellMesh) -> None:
        from .geometry import arc_slope_sq_mean_x

        self.twin_cells = [cid for cid in range(m.n_cells)
                           if int(m.cell_kind[cid]) == 3]
        self.twin_conv = {}
        for cid in self.twin_cells:
            sh = m.cell_shape[cid]
            d = m.arc_deriv[cid]
            t_w, t_e = m.arc_slope_ends_x[cid]  # dy/dx at west/east face ends
            t2mean = arc_slope_sq_mean_x(sh.arc, sh.x0, sh.x1)
            if m.cut_sign[cid] > 0:  # right twin: west end is the pole
                n_w, n_e = int(m.c_pinch_bot[cid]), int(m.c_pinch_lat[cid])
            else:
                n_w, n_e = int(m.c_pinch_lat[cid]), int(m.c_pinch_bot[cid])
            self.twin_conv[cid] = dict(
                dx=float(m.cell_dx[cid]), dy=float(m.cell_dy[cid]),
                t_w=float(t_w), t_e=float(t_e), t2mean=float(t2mean),
                t0=d.dydx, t20=d.d2ydx2, t30=d.d3ydx3, sigma=d.sigma_x,
                n_w=n_w, n_e=n_e,
                vslot=int(m.arc_v[cid]), hslot=int(m.arc_h[cid]),
            )

    # -- solitary-corner conversion constants ----------------------------
    def _build_corner(self, m: CutCellMesh) -> None:
        self.corner_cells = [cid for cid in range(m.n_cells)
                             if int(m.cell_kind[cid]) == 2]
        self.corner_conv = {}
        for cid in self.corner_cells:
            d = m.arc_deriv[cid]
            self.corner_conv[cid] = dict(
                dx=float(m.cell_dx[cid]), dy=float(m.cell_dy[cid]),
                d2=d.d2xdy2, sigma=d.sigma_y,
                vslot=int(m.arc_v[cid]), hslot=int(m.arc_h[cid]),
            )


def get_tables(mesh: CutCellMesh) -> ReconTables:
    tab = getattr(mesh, "_recon_tables", None)
    if tab is None:
        tab = ReconTables(mesh)
        mesh._recon_tables = tab
    return tab


# ---------------------------------------------------------------------------
# the full-mesh engine
# ---------------------------------------------------------------------------

class Reconstructor:
    def __init__(self, mesh: CutCellMesh):
        self.m = mesh
        self.t = get_tables(mesh)
        m = mesh
        self.v_int = np.where(m.v_kind == V_INT)[0]
        self.h_int = np.where(m.h_kind == H_INT)[0]
        self.nd_inner = np.where((m.node_kind == ND_INTERIOR) | (m.node_kind == ND_LID))[0]
        self.nd_wall = np.where((m.node_kind == ND_WALL_H) | (m.node_kind == ND_LID_CORNER))[0]
        self.nd_pole = np.where(m.node_kind == ND_POLE)[0]
        self.nd_lid = np.where((m.node_kind == ND_LID) | (m.node_kind == ND_LID_CORNER))[0]
        self.nd_circle = np.where((m.node_kind == ND_WALL_H) | (m.node_kind == ND_POLE))[0]
        # column count per hslot's column, for corner detection
        self.h_ncol = (m.h_ptr[m.h_col + 1] - m.h_ptr[m.h_col]) - 1

    # -- sliding averages -------------------------------------------------
    def sliding(self, cells: np.ndarray, bc: FieldBC, est: Estimates):
        m, t = self.m, self.t
        vy = np.empty(len(m.v_row))
        hx = np.empty(len(m.h_col))

        vi = self.v_int
        L, R = m.v_cl[vi], m.v_cr[vi]
        rlag = (t.sv_rl[vi] * est.dsl_y[L] + t.sv_rr[vi] * est.dsl_y[R]
                + t.sv_rf[vi] * est.dphif_v[vi])
        vy[vi] = (t.sv_D[vi] * cells[L] + t.sv_E[vi] * cells[R] + rlag) / t.sv_B[vi]

        if bc.dirichlet:
            arc = m.v_kind != V_INT
            vy[arc] = bc.wall_value
        else:
            for s in np.where(m.v_kind == V_ARC_W)[0]:
                Rc = int(m.v_cr[s])
                vy[s] = 2.0 * cells[Rc] + t.sv_bc[s] * est.dsl_y[Rc] - vy[s + 1]
            for s in np.where(m.v_kind == V_ARC_E)[0]:
                Lc = int(m.v_cl[s])
                vy[s] = 2.0 * cells[Lc] + t.sv_bc[s] * est.dsl_y[Lc] - vy[s - 1]

        hi = self.h_int
        S, Nc = m.h_cs[hi], m.h_cn[hi]
        rlag = (t.sh_rs[hi] * est.dsl_x[S] + t.sh_rn[hi] * est.dsl_x[Nc]
                + t.sh_rf[hi] * est.dphif_h[hi])
        hx[hi] = (t.sh_D[hi] * cells[S] + t.sh_E[hi] * cells[Nc] + rlag) / t.sh_B[hi]

        if bc.dirichlet:
            hx[m.h_kind == H_ARC_S] = bc.wall_value
            hx[m.h_kind == H_LID] = bc.lid_value
        else:
            corner = {c["hslot"] for c in t.corner_conv.values()}
            for s in np.where(m.h_kind == H_ARC_S)[0]:
                Nc2 = int(m.h_cn[s])
                if int(s) in corner:
                    cid = int(m.h_cut[s])
                    cc = t.corner_conv[cid]
                    vs = cc["vslot"]
                    hx[s] = solitary_convert(vy[vs], cc["dy"], cc["dx"], cc["d2"],
                                             est.dphif_v[vs], cc["sigma"])
                else:
                    hx[s] = 2.0 * cells[Nc2] + t.sh_bc[s] * est.dsl_x[Nc2] - hx[s + 1]
            for s in np.where(m.h_kind == H_LID)[0]:
                Sc = int(m.h_cs[s])
                hx[s] = 2.0 * cells[Sc] + t.sh_bc[s] * est.dsl_x[Sc] - hx[s - 1]
        return vy, hx

    # -- nodal values ------------------------------------------------------
    def nodes(self, hx: np.ndarray, vy: np.ndarray, bc: FieldBC) -> np.ndarray:
        m = self.m
        nd = np.empty(len(m.node_x))
        i = self.nd_inner
        wW = m.h_dxf[m.n_hw[i]]
        wE = m.h_dxf[m.n_he[i]]
        nd[i] = (wE * hx[m.n_hw[i]] + wW * hx[m.n_he[i]]) / (wW + wE)
        if bc.dirichlet:
            nd[self.nd_circle] = bc.wall_value
            lid = self.nd_lid
            nd[lid] = bc.lid_value
            corners = np.where(m.node_kind == ND_LID_CORNER)[0]
            nd[corners] = bc.wall_value  # wall precedence at the corners
        else:
            for n in self.nd_wall:
                nd[n] = node_boundary_compact(hx[int(m.n_cface[n])], nd[int(m.n_partner[n])])
            for n in self.nd_pole:
                nd[n] = node_boundary_compact(vy[int(m.n_cface[n])], nd[int(m.n_partner[n])])
        return nd

    # -- derivative sliding averages ---------------------------------------
    def derivs(self, cells: np.ndarray, vy: np.ndarray, hx: np.ndarray,
               bc: FieldBC, est: Estimates, nodes: np.ndarray):
        m, t = self.m, self.t
        gv = np.empty(len(m.v_row))
        gh = np.empty(len(m.h_col))

        # columns first: interior, then boundary closures bottom-up/top-down
        hi = self.h_int
        S, Nc = m.h_cs[hi], m.h_cn[hi]
        rlag = (t.dh_rf[hi] * est.dphif_h[hi] + t.dh_rs[hi] * est.dsl_x[S]
                + t.dh_rn[hi] * est.dsl_x[Nc] + t.dh_rg[hi] * est.dg_h[hi])
        gh[hi] = (t.dh_F[hi] * hx[hi] + t.dh_D[hi] * cells[S] + t.dh_E[hi] * cells[Nc]
                  + rlag) / t.dh_B[hi]

        for s in np.where(m.h_kind == H_ARC_S)[0]:
            if t.dh_type[s] == DH_CORNER:
                continue
            Nc2 = int(m.h_cn[s])
            rl = (t.dh_rn[s] * est.dsl_x[Nc2] + t.dh_rg[s] * est.dg_h[s]
                  + t.dh_rgn[s] * est.dg_h[s + 1])
            gh[s] = (t.dh_F[s] * hx[s] + t.dh_E[s] * cells[Nc2] + rl
                     - t.dh_C[s] * gh[s + 1]) / t.dh_B[s]
        for s in np.where(m.h_kind == H_LID)[0]:
            if t.dh_type[s] == DH_CORNER:
                continue
            Sc = int(m.h_cs[s])
            rl = (t.dh_rs[s] * est.dsl_x[Sc] + t.dh_rg[s] * est.dg_h[s]
                  + t.dh_rgp[s] * est.dg_h[s - 1])
            gh[s] = (t.dh_F[s] * hx[s] + t.dh_D[s] * cells[Sc] + rl
                     - t.dh_A[s] * gh[s - 1]) / t.dh_B[s]
        # corner columns: coupled 2x2 end relations
        for cid, cc in t.corner_conv.items():
            sa, sl = cc["hslot"], cc["hslot"] + 1
            w = t.dh_B[sa] / 2.0
            rl_a = (t.dh_rn[sa] * est.dsl_x[cid] + t.dh_rg[sa] * est.dg_h[sa]
                    + t.dh_rgn[sa] * est.dg_h[sl])
            rhs_a = t.dh_F[sa] * hx[sa] + t.dh_E[sa] * cells[cid] + rl_a
            rl_l = (t.dh_rs[sl] * est.dsl_x[cid] + t.dh_rg[sl] * est.dg_h[sl]
                    + t.dh_rgp[sl] * est.dg_h[sa])
            rhs_l = t.dh_F[sl] * hx[sl] + t.dh_D[sl] * cells[cid] + rl_l
            gh[sa] = (2.0 * rhs_a - rhs_l) / (3.0 * w)
            gh[sl] = (2.0 * rhs_l - rhs_a) / (3.0 * w)

        # twin curved faces: convert the column result to the row role
        for cid, cc in t.twin_conv.items():
            gv[cc["vslot"]] = self._twin_convert(cc, gh, hx, nodes, est)

        # rows: interior (includes the twin interface), then ends
        vi = self.v_int
        L, R = m.v_cl[vi], m.v_cr[vi]
        rlag = (t.dv_rf[vi] * est.dphif_v[vi] + t.dv_rl[vi] * est.dsl_y[L]
                + t.dv_rr[vi] * est.dsl_y[R] + t.dv_rg[vi] * est.dg_v[vi])
        num = (t.dv_F[vi] * vy[vi] + t.dv_D[vi] * cells[L] + t.dv_E[vi] * cells[R] + rlag)
        gv_int = num / t.dv_B[vi]
        gv[vi] = gv_int
        # twin interface needs the neighboring curved-face values
        tw = vi[t.dv_type[vi] == DV_TWIN]
        for s in tw:
            rlag_s = (t.dv_rf[s] * est.dphif_v[s] + t.dv_rl[s] * est.dsl_y[int(m.v_cl[s])]
                      + t.dv_rr[s] * est.dsl_y[int(m.v_cr[s])] + t.dv_rg[s] * est.dg_v[s]
                      + t.dv_rgp[s] * est.dg_v[s - 1] + t.dv_rgn[s] * est.dg_v[s + 1])
            gv[s] = (t.dv_D[s] * cells[int(m.v_cl[s])] + t.dv_E[s] * cells[int(m.v_cr[s])]
                     + rlag_s - t.dv_A[s] * gv[s - 1] - t.dv_C[s] * gv[s + 1]) / t.dv_B[s]

        twin_slots = {cc["vslot"] for cc in t.twin_conv.values()}
        for s in np.where(m.v_kind == V_ARC_W)[0]:
            if int(s) in twin_slots:
                continue
            Rc = int(m.v_cr[s])
            rl = (t.dv_rr[s] * est.dsl_y[Rc] + t.dv_rg[s] * est.dg_v[s]
                  + t.dv_rgn[s] * est.dg_v[s + 1])
            gv[s] = (t.dv_F[s] * vy[s] + t.dv_E[s] * cells[Rc] + rl
                     - t.dv_C[s] * gv[s + 1]) / t.dv_B[s]
        for s in np.where(m.v_kind == V_ARC_E)[0]:
            if int(s) in twin_slots:
                continue
            Lc = int(m.v_cl[s])
            rl = (t.dv_rl[s] * est.dsl_y[Lc] + t.dv_rg[s] * est.dg_v[s]
                  + t.dv_rgp[s] * est.dg_v[s - 1])
            gv[s] = (t.dv_F[s] * vy[s] + t.dv_D[s] * cells[Lc] + rl
                     - t.dv_A[s] * gv[s - 1]) / t.dv_B[s]
        return gv, gh

    def _twin_convert(self, cc: dict, gh: np.ndarray, hx: np.ndarray,
                      nodes: np.ndarray, est: Estimates) -> float:
        """x-partial sliding average on a twin curved face, from y-partials.

        The mirror of the curved-face identity: regular at the circle bottom
        because dy/dx stays bounded there.
        """
        hs = cc["hslot"]
        dx, dy = cc["dx"], cc["dy"]
        bnd = nodes[cc["n_e"]] * cc["t_e"] - nodes[cc["n_w"]] * cc["t_w"]
        bnd_avg = hx[hs] * (cc["t_e"] - cc["t_w"])
        val = (bnd - bnd_avg
               - (dx**3 / 12.0) * est.dphif_h[hs] * cc["t30"]
               - dx * gh[hs] * cc["t2mean"]
               - (dx**3 / 6.0) * est.dg_h[hs] * cc["t0"] * cc["t20"])
        return cc["sigma"] * val / dy

    # -- estimates for the next pass ---------------------------------------
    def estimates(self, vy: np.ndarray, hx: np.ndarray, gv: np.ndarray,
                  gh: np.ndarray, nodes: np.ndarray) -> Estimates:
        m = self.m
        est = Estimates.zeros(m)

        vi = self.v_int
        est.dphif_v[vi] = (nodes[m.v_ntop[vi]] - nodes[m.v_nbot[vi]]) / m.v_dyf[vi]
        hi_all = np.where(m.h_kind != H_ARC_S)[0]
        est.dphif_h[hi_all] = (nodes[m.h_neast[hi_all]] - nodes[m.h_nwest[hi_all]]) / m.h_dxf[hi_all]

        # cell slice-average derivatives
        rect = m.cut_sign == 0
        cidx = np.arange(m.n_cells)
        est.dsl_y[rect] = (hx[m.c_hn[rect]] - hx[m.c_hs[rect]]) / m.cell_dy[rect]
        est.dsl_x[rect] = (vy[m.c_ve[rect]] - vy[m.c_vw[rect]]) / m.cell_dx[rect]
        cut = cidx[~rect]
        est.dsl_y[cut] = (hx[m.c_hn[cut]] - nodes[m.c_pinch_bot[cut]]) / m.cell_dy[cut]
        right = cidx[m.cut_sign > 0]
        left = cidx[m.cut_sign < 0]
        est.dsl_x[right] = (nodes[m.c_pinch_lat[right]] - vy[m.c_vw[right]]) / m.cell_dx[right]
        est.dsl_x[left] = (vy[m.c_ve[left]] - nodes[m.c_pinch_lat[left]]) / m.cell_dx[left]

        # face-value derivatives along the boundary chains
        self._chain_estimates(est.dphif_v, vy, axis="y")
        self._chain_estimates(est.dphif_h, hx, axis="x")
        self._chain_estimates(est.dg_v, gv, axis="y")
        self._chain_estimates(est.dg_h, gh, axis="x")

        # derivative-of-derivative estimates at straight faces
        self._stacked_estimates_v(est.dg_v, gv)
        self._stacked_estimates_h(est.dg_h, gh)
        return est

    def _chain_estimates(self, out: np.ndarray, vals: np.ndarray, axis: str) -> None:
        m = self.m
        for cid in m.chain:
            if axis == "y":
                slot = int(m.arc_v[cid])
                up, dn = int(m.chain_y_up[cid]), int(m.chain_y_dn[cid])
                ext = m.v_dyf
                sl = lambda c: int(m.arc_v[c])
            else:
                slot = int(m.arc_h[cid])
                up, dn = int(m.chain_next[cid]), int(m.chain_prev[cid])
                ext = m.h_dxf
                sl = lambda c: int(m.arc_h[c])
            df = float(ext[slot])
            if up >= 0 and dn >= 0:
                su, sd = sl(up), sl(dn)
                out[slot] = 2.0 * (vals[su] - vals[sd]) / (2.0 * df + ext[sd] + ext[su])
            elif up >= 0:
                su = sl(up)
                out[slot] = 2.0 * (vals[su] - vals[slot]) / (df + ext[su])
            elif dn >= 0:
                sd = sl(dn)
                out[slot] = 2.0 * (vals[slot] - vals[sd]) / (df + ext[sd])

    def _stacked_estimates_v(self, out: np.ndarray, gv: np.ndarray) -> None:
        m = self.m
        vi = self.v_int
        up, dn = m.v_up[vi], m.v_dn[vi]
        both = (up >= 0) & (dn >= 0)
        s = vi[both]
        out[s] = 2.0 * (gv[up[both]] - gv[dn[both]]) / (
            2.0 * m.v_dyf[s] + m.v_dyf[dn[both]] + m.v_dyf[up[both]])
        only_up = (up >= 0) & (dn < 0)
        s = vi[only_up]
        out[s] = 2.0 * (gv[up[only_up]] - gv[s]) / (m.v_dyf[s] + m.v_dyf[up[only_up]])
        only_dn = (dn >= 0) & (up < 0)
        s = vi[only_dn]
        out[s] = 2.0 * (gv[s] - gv[dn[only_dn]]) / (m.v_dyf[s] + m.v_dyf[dn[only_dn]])

    def _stacked_estimates_h(self, out: np.ndarray, gh: np.ndarray) -> None:
        m = self.m
        hi = np.where(m.h_kind != H_ARC_S)[0]
        le, ri = m.h_le[hi], m.h_ri[hi]
        both = (le >= 0) & (ri >= 0)
        s = hi[both]
        out[s] = 2.0 * (gh[ri[both]] - gh[le[both]]) / (
            2.0 * m.h_dxf[s] + m.h_dxf[le[both]] + m.h_dxf[ri[both]])
        only_r = (ri >= 0) & (le < 0)
        s = hi[only_r]
        out[s] = 2.0 * (gh[ri[only_r]] - gh[s]) / (m.h_dxf[s] + m.h_dxf[ri[only_r]])
        only_l = (le >= 0) & (ri < 0)
        s = hi[only_l]
        out[s] = 2.0 * (gh[s] - gh[le[only_l]]) / (m.h_dxf[s] + m.h_dxf[le[only_l]])

    # -- one full pass -------------------------------------------------------
    def full(self, cells: np.ndarray, bc: FieldBC, est: Estimates | None = None,
             passes: int = 1) -> FieldRecon:
        est = est or Estimates.zeros(self.m)
        for _ in range(max(passes, 1)):
            vy, hx = self.sliding(cells, bc, est)
            nodes = self.nodes(hx, vy, bc)
            gv, gh = self.derivs(cells, vy, hx, bc, est, nodes)
            est = self.estimates(vy, hx, gv, gh, nodes)
        return FieldRecon(vy, hx, gv, gh, nodes, est)


# ---------------------------------------------------------------------------
# per-line reference solvers (tridiagonal path)
# ---------------------------------------------------------------------------

def _row_slots(mesh: CutCellMesh, r: int) -> np.ndarray:
    return np.arange(mesh.v_ptr[r], mesh.v_ptr[r + 1])

def _col_slots(mesh: CutCellMesh, q: int) -> np.ndarray:
    return np.arange(mesh.h_ptr[q], mesh.h_ptr[q + 1])


def sliding_average_line_solve(mesh: CutCellMesh, orientation: str, index: int,
                               cells: np.ndarray, bc: FieldBC,
                               est: Estimates | None = None,
                               closures: dict[int, float] | None = None) -> np.ndarray:
    """Solve one row (orientation 'row') or column ('col') sliding system.

    Returns the sliding averages on every face of the line, boundary faces
    included.  ``closures`` maps slot ids to externally supplied values
    (Dirichlet data or curved-face conversions), overriding the compact end
    relations there.
    """
    t = get_tables(mesh)
    est = est or Estimates.zeros(mesh)
    closures = dict(closures or {})
    if orientation == "row":
        slots = _row_slots(mesh, index)
        kind, cl, cr = mesh.v_kind, mesh.v_cl, mesh.v_cr
        B, D, E = t.sv_B, t.sv_D, t.sv_E
        rl, rr, rf, bcc = t.sv_rl, t.sv_rr, t.sv_rf, t.sv_bc
        dsl, dphif = est.dsl_y, est.dphif_v
        arc_lo, arc_hi = V_ARC_W, V_ARC_E
        if bc.dirichlet:
            for s in slots[[0, -1]]:
                closures.setdefault(int(s), bc.wall_value)
    else:
        slots = _col_slots(mesh, index)
        kind, cl, cr = mesh.h_kind, mesh.h_cs, mesh.h_cn
        B, D, E = t.sh_B, t.sh_D, t.sh_E
        rl, rr, rf, bcc = t.sh_rs, t.sh_rn, t.sh_rf, t.sh_bc
        dsl, dphif = est.dsl_x, est.dphif_h
        arc_lo, arc_hi = H_ARC_S, H_LID
        if bc.dirichlet:
            closures.setdefault(int(slots[0]), bc.wall_value)
            closures.setdefault(int(slots[-1]), bc.lid_value)

    n = len(slots)
    lo = np.zeros(n)
    di = np.zeros(n)
    up = np.zeros(n)
    rhs = np.zeros(n)
    for i, s in enumerate(slots):
        s = int(s)
        if s in closures:
            di[i] = 1.0
            rhs[i] = closures[s]
        elif kind[s] == arc_lo:
            di[i], up[i] = 1.0, 1.0
            rhs[i] = 2.0 * cells[int(cr[s])] + bcc[s] * dsl[int(cr[s])]
        elif kind[s] == arc_hi:
            lo[i], di[i] = 1.0, 1.0
            rhs[i] = 2.0 * cells[int(cl[s])] + bcc[s] * dsl[int(cl[s])]
        else:
            di[i] = B[s]
            L, R = int(cl[s]), int(cr[s])
            rhs[i] = (D[s] * cells[L] + E[s] * cells[R]
                      + rl[s] * dsl[L] + rr[s] * dsl[R] + rf[s] * dphif[s])
    sys = TriDiagonalSystem(lo, di, up, rhs)
    x = solve_tridiagonal(sys)
    res = sys.residual_inf(x)
    scale = max(float(np.max(np.abs(rhs))), 1e-300)
    if res > 1e-12 * scale:
        raise ArithmeticError(f"line solve residual {res} too large")
    return x


def derivative_sliding_line_solve(mesh: CutCellMesh, orientation: str, index: int,
                                  cells: np.ndarray, face_sliding: np.ndarray,
                                  est: Estimates | None = None,
                                  closures: dict[int, float] | None = None) -> np.ndarray:
    """Solve one derivative-sliding-average line system (tridiagonal path).

    ``face_sliding`` holds the already-solved sliding averages on the line's
    slots (the known source term).  ``closures`` supplies curved-face values
    closed elsewhere (twin faces) and overrides those rows.
    """
    t = get_tables(mesh)
    est = est or Estimates.zeros(mesh)
    closures = dict(closures or {})
    if orientation == "row":
        slots = _row_slots(mesh, index)
        cl, cr = mesh.v_cl, mesh.v_cr
        typ = t.dv_type
        A, B, C, D, E, F = t.dv_A, t.dv_B, t.dv_C, t.dv_D, t.dv_E, t.dv_F
        rfc, rlc, rrc, rgc, rgp, rgn = t.dv_rf, t.dv_rl, t.dv_rr, t.dv_rg, t.dv_rgp, t.dv_rgn
        dsl, dphif, dg = est.dsl_y, est.dphif_v, est.dg_v
        t_end_lo, t_end_hi = DV_ARC_W, DV_ARC_E
    else:
        slots = _col_slots(mesh, index)
        cl, cr = mesh.h_cs, mesh.h_cn
        typ = t.dh_type
        A, B, C, D, E, F = t.dh_A, t.dh_B, t.dh_C, t.dh_D, t.dh_E, t.dh_F
        rfc, rlc, rrc, rgc, rgp, rgn = t.dh_rf, t.dh_rs, t.dh_rn, t.dh_rg, t.dh_rgp, t.dh_rgn
        dsl, dphif, dg = est.dsl_x, est.dphif_h, est.dg_h
        t_end_lo, t_end_hi = DH_ARC_S, DH_LID

    n = len(slots)
    lo = np.zeros(n)
    di = np.zeros(n)
    up = np.zeros(n)
    rhs = np.zeros(n)
    for i, s in enumerate(slots):
        s = int(s)
        if s in closures:
            di[i] = 1.0
            rhs[i] = closures[s]
            continue
        ty = int(typ[s])
        if ty in (t_end_lo,) or (orientation == "col" and ty == DH_CORNER and i == 0):
            di[i], up[i] = B[s], C[s]
            R = int(cr[s])
            rhs[i] = (F[s] * face_sliding[i] + E[s] * cells[R]
                      + rrc[s] * dsl[R] + rgc[s] * dg[s] + rgn[s] * dg[s + 1])
        elif ty in (t_end_hi,) or (orientation == "col" and ty == DH_CORNER):
            lo[i], di[i] = A[s], B[s]
            L = int(cl[s])
            rhs[i] = (F[s] * face_sliding[i] + D[s] * cells[L]
                      + rlc[s] * dsl[L] + rgc[s] * dg[s] + rgp[s] * dg[s - 1])
        elif orientation == "row" and ty == DV_TWIN:
            lo[i], di[i], up[i] = A[s], B[s], C[s]
            L, R = int(cl[s]), int(cr[s])
            rhs[i] = (D[s] * cells[L] + E[s] * cells[R]
                      + rlc[s] * dsl[L] + rrc[s] * dsl[R]
                      + rfc[s] * dphif[s] + rgc[s] * dg[s]
                      + rgp[s] * dg[s - 1] + rgn[s] * dg[s + 1])
        else:
            di[i] = B[s]
            L, R = int(cl[s]), int(cr[s])
            rhs[i] = (F[s] * face_sliding[i] + D[s] * cells[L] + E[s] * cells[R]
                      + rfc[s] * dphif[s] + rlc[s] * dsl[L] + rrc[s] * dsl[R]
                      + rgc[s] * dg[s])
    sys = TriDiagonalSystem(lo, di, up, rhs)
    x = solve_tridiagonal(sys)
    res = sys.residual_inf(x)
    scale = max(float(np.max(np.abs(rhs))), 1e-300)
    if res > 1e-12 * scale:
        raise ArithmeticError(f"derivative line solve residual {res} too large")
    return x
