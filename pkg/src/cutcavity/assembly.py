"""Discrete momentum systems, face-velocity interpolation, pressure system.

Linearization strategy: the implicit operator couples each cell to its face
neighbors through the constant sliding/derivative transfers (frozen face
mass fluxes multiply the central transported-velocity interpolation; viscous
terms use the constant part of the gradient transfers).  Everything the
implicit operator cannot represent (the residual corrections, boundary data,
curved-face conversions) is deferred: re-evaluated each outer iteration from
the full reconstruction and moved to the right-hand side.  At a fixed point
the discrete equations therefore hold with the complete reconstruction.

Face velocities follow the collocated momentum-interpolation construction:
the face equation inherits the line-system transfers, replaces the two cell
pressure gradients with the face pressure-gradient sliding average, and is
time-augmented, which supplies the pressure equation and keeps the face
fluxes divergence-free after each pressure solve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .config import CaseConfig
from .mesh import CutCellMesh, H_INT, V_INT
from .pkp import Estimates, FieldBC, FieldRecon, Reconstructor, get_tables
from .solver import LinearSolveSpec, solve_sparse

__all__ = ["AssemblyError", "CaseConfig", "FieldState", "CavitySolver"]


class AssemblyError(Exception):
    pass


@dataclass
class FieldState:
    """Converged (or in-progress) discrete state of a case."""

    mesh: CutCellMesh
    config: CaseConfig
    u: np.ndarray
    v: np.ndarray
    p: np.ndarray
    uy: np.ndarray   # face-normal u on vertical-role slots
    vx: np.ndarray   # face-normal v on horizontal-role slots
    recon_u: FieldRecon
    recon_v: FieldRecon
    recon_p: FieldRecon


class CavitySolver:
    """One case: holds state, assembles and advances the coupled system."""

    def __init__(self, config: CaseConfig, mesh: CutCellMesh):
        self.cfg = config
        self.m = mesh
        self.rec = Reconstructor(mesh)
        self.t = get_tables(mesh)
        self.nu = config.nu
        self.dt = config.dt
        self.bc_u = FieldBC.velocity_u(config.U)
        self.bc_v = FieldBC.velocity_v()
        self.bc_p = FieldBC.pressure()

        m = mesh
        nc = m.n_cells
        self.u = np.zeros(nc)
        self.v = np.zeros(nc)
        self.p = np.zeros(nc)
        self.u_n = np.zeros(nc)
        self.v_n = np.zeros(nc)
        self.uy = np.zeros(len(m.v_row))
        self.vx = np.zeros(len(m.h_col))
        self.uy_n = np.zeros(len(m.v_row))
        self.vx_n = np.zeros(len(m.h_col))
        self.est_u = Estimates.zeros(m)
        self.est_v = Estimates.zeros(m)
        self.est_p = Estimates.zeros(m)
        self._ru = None
        self._rv = None
        self._rp = None

        self._build_static()
        self._pin_cell = self._find_pin_cell()
        self._visc_diag = self._viscous_diag()
        if np.any(self._visc_diag <= 0.0):
            raise AssemblyError("non-positive viscous diagonal")

    # ------------------------------------------------------------------
    def _find_pin_cell(self) -> int:
        # cell containing the fluid centroid (0, -4R/(3*pi))
        yc = -4.0 * self.m.R / (3.0 * math.pi)
        m = self.m
        best, bd = 0, np.inf
        for cid in range(m.n_cells):
            d = abs(m.cell_cx[cid]) + abs(m.cell_cy[cid] - yc)
            if d < bd:
                best, bd = cid, d
        return best

    def _build_static(self) -> None:
        """Constant transfer tables and the sparse matrix fill patterns."""
        m, t = self.m, self.t
        nv, nh = len(m.v_row), len(m.h_col)

        # transported-velocity interpolation weights (sliding transfers)
        self.aL_v = np.zeros(nv)
        self.aR_v = np.zeros(nv)
        vi = m.v_kind == V_INT
        self.aL_v[vi] = t.sv_D[vi] / t.sv_B[vi]
        self.aR_v[vi] = t.sv_E[vi] / t.sv_B[vi]
        self.aS_h = np.zeros(nh)
        self.aN_h = np.zeros(nh)
        hi = m.h_kind == H_INT
        self.aS_h[hi] = t.sh_D[hi] / t.sh_B[hi]
        self.aN_h[hi] = t.sh_E[hi] / t.sh_B[hi]

        # gradient transfers (constant part of the derivative relations)
        self.gL_v = np.zeros(nv)
        self.gR_v = np.zeros(nv)
        self.gL_v[vi] = (t.dv_F[vi] * self.aL_v[vi] + t.dv_D[vi]) / t.dv_B[vi]
        self.gR_v[vi] = (t.dv_F[vi] * self.aR_v[vi] + t.dv_E[vi]) / t.dv_B[vi]
        self.gS_h = np.zeros(nh)
        self.gN_h = np.zeros(nh)
        self.gS_h[hi] = (t.dh_F[hi] * self.aS_h[hi] + t.dh_D[hi]) / t.dh_B[hi]
        self.gN_h[hi] = (t.dh_F[hi] * self.aN_h[hi] + t.dh_E[hi]) / t.dh_B[hi]
        # single-sided wall-gradient transfers (diagonal damping)
        from .mesh import V_ARC_E, V_ARC_W, H_ARC_S, H_LID
        from .pkp import DV_TWIN
        for s in np.where(m.v_kind == V_ARC_W)[0]:
            self.gR_v[s] = 6.0 / t.dv_B[s]
        for s in np.where(m.v_kind == V_ARC_E)[0]:
            self.gL_v[s] = -6.0 / t.dv_B[s]
        for s in np.where(m.h_kind == H_ARC_S)[0]:
            self.gN_h[s] = 6.0 / t.dh_B[s]
        for s in np.where(m.h_kind == H_LID)[0]:
            self.gS_h[s] = -6.0 / t.dh_B[s]
        for cc in self.t.twin_conv.values():
            self.gL_v[cc["vslot"]] = 0.0
            self.gR_v[cc["vslot"]] = 0.0

        # Wall-gradient rows: the compact closures couple the wall gradient to
        # the adjacent interior face's gradient; substitute that face's cell
        # transfer so the whole closure is implicit (three cells per wall
        # face contribution).  Twin curved faces stay deferred: their cells
        # are slaved by the huge south-face viscous diagonal anyway.
        from .mesh import V_ARC_E, V_ARC_W, H_ARC_S, H_LID

        twin_vslots = {cc["vslot"] for cc in t.twin_conv.values()}
        self.wall_v = []   # (slot, cell, east_of_cell, coef_c, n1, coef_n1, n2, coef_n2)
        for s in np.where(m.v_kind != V_INT)[0]:
            if int(s) in twin_vslots:
                continue
            s = int(s)
            if m.v_kind[s] == V_ARC_W:
                c = int(m.v_cr[s])
                nxt = s + 1
                g_c = 6.0 / t.dv_B[s]
                f = -t.dv_C[s] / t.dv_B[s]
            else:
                c = int(m.v_cl[s])
                nxt = s - 1
                g_c = -6.0 / t.dv_B[s]
                f = -t.dv_A[s] / t.dv_B[s]
            if m.v_kind[nxt] == V_INT:
                n1, n2 = int(m.v_cl[nxt]), int(m.v_cr[nxt])
                gn1, gn2 = f * self.gL_v[nxt], f * self.gR_v[nxt]
            else:  # row of two cut cells only (never happens off the twin row)
                n1 = n2 = c
                gn1 = gn2 = 0.0
            g_c += gn1 if n1 == c else 0.0
            g_c += gn2 if n2 == c else 0.0
            east = m.v_cl[s] >= 0
            self.wall_v.append((s, c, east, g_c,
                                n1, 0.0 if n1 == c else gn1,
                                n2, 0.0 if n2 == c else gn2))

        self.wall_h = []
        for s in np.where(m.h_kind != H_INT)[0]:
            s = int(s)
            corner = t.dh_type[s] == 4  # DH_CORNER
            if m.h_kind[s] == H_ARC_S:
                c = int(m.h_cn[s])
                nxt = s + 1
                g_c = (6.0 / t.dh_B[s]) if not corner else (6.0 / (t.dh_B[s] / 2.0))
                f = -t.dh_C[s] / t.dh_B[s]
            else:  # lid
                c = int(m.h_cs[s])
                nxt = s - 1
                g_c = (-6.0 / t.dh_B[s]) if not corner else (-6.0 / (t.dh_B[s] / 2.0))
                f = -t.dh_A[s] / t.dh_B[s]
            if not corner and m.h_kind[nxt] == H_INT:
                n1, n2 = int(m.h_cs[nxt]), int(m.h_cn[nxt])
                gn1, gn2 = f * self.gS_h[nxt], f * self.gN_h[nxt]
            else:
                n1 = n2 = c
                gn1 = gn2 = 0.0
            g_c += gn1 if n1 == c else 0.0
            g_c += gn2 if n2 == c else 0.0
            north = m.h_cs[s] >= 0
            self.wall_h.append((s, c, north, g_c,
                                n1, 0.0 if n1 == c else gn1,
                                n2, 0.0 if n2 == c else gn2))

        rows, cols = [], []
        self.vslots_int = np.where(vi)[0]
        self.hslots_int = np.where(hi)[0]
        for s in self.vslots_int:
            L, R = int(m.v_cl[s]), int(m.v_cr[s])
            rows += [L, L, R, R]
            cols += [L, R, L, R]
        for s in self.hslots_int:
            S, Nc = int(m.h_cs[s]), int(m.h_cn[s])
            rows += [S, S, Nc, Nc]
            cols += [S, Nc, S, Nc]
        for (s, c, _e, _gc, n1, _g1, n2, _g2) in self.wall_v:
            rows += [c, c, c]
            cols += [c, n1, n2]
        for (s, c, _e, _gc, n1, _g1, n2, _g2) in self.wall_h:
            rows += [c, c, c]
            cols += [c, n1, n2]
        nc = m.n_cells
        rows += list(range(nc))
        cols += list(range(nc))
        self._coo_rows = np.asarray(rows)
        self._coo_cols = np.asarray(cols)

        # pressure matrix pattern
        prow, pcol = [], []
        for s in self.vslots_int:
            L, R = int(m.v_cl[s]), int(m.v_cr[s])
            prow += [L, L, R, R]
            pcol += [L, R, L, R]
        for s in self.hslots_int:
            S, Nc = int(m.h_cs[s]), int(m.h_cn[s])
            prow += [S, S, Nc, Nc]
            pcol += [S, Nc, S, Nc]
        self._pcoo_rows = np.asarray(prow)
        self._pcoo_cols = np.asarray(pcol)

    # ------------------------------------------------------------------
    def _steady_matrix(self) -> sp.csr_matrix:
        """Convective (frozen mass flux) + viscous implicit operator.

        Row c approximates the flux divergence sensitivity: for the east face
        the flux is +[Fm*u_f - nu*g_f]/wx, for the west face the negative,
        with u_f and g_f replaced by their constant cell transfers.
        """
        m, nu = self.m, self.nu
        data = []

        # Implicit transported velocity: upwind (positive coefficients); the
        # deferred correction restores the central sliding transfer at the
        # fixed point, so the converged scheme is unchanged.
        vi = self.vslots_int
        L, R = m.v_cl[vi], m.v_cr[vi]
        up = np.maximum(self.uy[vi], 0.0)   # upstream = L
        dn = np.minimum(self.uy[vi], 0.0)   # upstream = R
        tL = up - nu * self.gL_v[vi]
        tR = dn - nu * self.gR_v[vi]
        data.append(np.column_stack([
            tL / m.cell_wx[L], tR / m.cell_wx[L],
            -tL / m.cell_wx[R], -tR / m.cell_wx[R],
        ]).ravel())

        hi = self.hslots_int
        S, Nc = m.h_cs[hi], m.h_cn[hi]
        upg = np.maximum(self.vx[hi], 0.0)
        dng = np.minimum(self.vx[hi], 0.0)
        tS = upg - nu * self.gS_h[hi]
        tN = dng - nu * self.gN_h[hi]
        data.append(np.column_stack([
            tS / m.cell_wy[S], tN / m.cell_wy[S],
            -tS / m.cell_wy[Nc], -tN / m.cell_wy[Nc],
        ]).ravel())

        # wall faces: implicit one-sided gradient closures (mass flux is zero);
        # the flux is -nu*g on an east/north face, +nu*g on a west/south face
        wall_data = []
        for (s, c, east, gc, n1, g1, n2, g2) in self.wall_v:
            sgn = 1.0 if east else -1.0
            scale = sgn * (-nu) / m.cell_wx[c]
            wall_data += [scale * gc, scale * g1, scale * g2]
        for (s, c, north, gc, n1, g1, n2, g2) in self.wall_h:
            sgn = 1.0 if north else -1.0
            scale = sgn * (-nu) / m.cell_wy[c]
            wall_data += [scale * gc, scale * g1, scale * g2]
        data.append(np.asarray(wall_data))

        data.append(np.zeros(m.n_cells))  # diagonal placeholder
        vals = np.concatenate(data)
        return sp.coo_matrix((vals, (self._coo_rows, self._coo_cols)),
                             shape=(m.n_cells, m.n_cells)).tocsr()

    def _viscous_diag(self) -> np.ndarray:
        """Diagonal of the viscous-only implicit operator (constant)."""
        saved_uy, saved_vx = self.uy, self.vx
        self.uy = np.zeros_like(saved_uy)
        self.vx = np.zeros_like(saved_vx)
        try:
            d = self._steady_matrix().diagonal()
        finally:
            self.uy, self.vx = saved_uy, saved_vx
        return d

    def _div_scaled(self, uy_int: np.ndarray, vx_int: np.ndarray) -> np.ndarray:
        """Volume-scaled divergence (outward-positive) from interior fluxes."""
        m = self.m
        vi, hi = self.vslots_int, self.hslots_int
        div = np.zeros(m.n_cells)
        np.add.at(div, m.v_cl[vi], m.v_dyf[vi] * uy_int)    # east face of L
        np.add.at(div, m.v_cr[vi], -m.v_dyf[vi] * uy_int)   # west face of R
        np.add.at(div, m.h_cs[hi], m.h_dxf[hi] * vx_int)    # north face of S
        np.add.at(div, m.h_cn[hi], -m.h_dxf[hi] * vx_int)   # south face of N
        return div

    def _flux_sum(self, rec: FieldRecon) -> np.ndarray:
        """Exact flux divergence of one momentum component from recon."""
        m, nu = self.m, self.nu
        Fm, Gm = self.uy, self.vx
        cv_e, cv_w = m.c_ve, m.c_vw
        ch_n, ch_s = m.c_hn, m.c_hs
        conv = ((Fm[cv_e] * rec.vy[cv_e] - Fm[cv_w] * rec.vy[cv_w]) / m.cell_wx
                + (Gm[ch_n] * rec.hx[ch_n] - Gm[ch_s] * rec.hx[ch_s]) / m.cell_wy)
        visc = ((rec.gv[cv_e] - rec.gv[cv_w]) / m.cell_wx
                + (rec.gh[ch_n] - rec.gh[ch_s]) / m.cell_wy)
        return conv - nu * visc

    def _grad_p_cells(self) -> tuple[np.ndarray, np.ndarray]:
        rp = self._rp
        m = self.m
        gx = (rp.vy[m.c_ve] - rp.vy[m.c_vw]) / m.cell_wx
        gy = (rp.hx[m.c_hn] - rp.hx[m.c_hs]) / m.cell_wy
        return gx, gy

    # ------------------------------------------------------------------
    def iterate(self) -> float:
        """One outer iteration: reconstruct, momentum, faces, pressure, correct.

        Returns the pre-solve continuity imbalance max_c |div * vol| of the
        predicted face velocities.
        """
        m, t, cfg = self.m, self.t, self.cfg
        self._ru = self.rec.full(self.u, self.bc_u, self.est_u)
        self._rv = self.rec.full(self.v, self.bc_v, self.est_v)
        self._rp = self.rec.full(self.p, self.bc_p, self.est_p)
        self.est_u = self._ru.est
        self.est_v = self._rv.est
        self.est_p = self._rp.est

        gpx, gpy = self._grad_p_cells()
        A = self._steady_matrix()
        diag = A.diagonal()
        if np.any(diag + 1.0 / self.dt <= 0.0):
            raise AssemblyError("non-positive momentum diagonal")
        M = A + sp.identity(m.n_cells, format="csr") / self.dt

        rhs_u = self.u_n / self.dt + A @ self.u - self._flux_sum(self._ru) - gpx
        rhs_v = self.v_n / self.dt + A @ self.v - self._flux_sum(self._rv) - gpy
        lu = spla.splu(M.tocsc())
        u_star = lu.solve(rhs_u)
        v_star = lu.solve(rhs_v)

        # interpolation weights: the steady diagonal, floored by a fraction of
        # the (always positive) viscous diagonal so transient convective
        # imbalances cannot flip its sign; inactive at steady state
        a_cell = np.maximum(diag, 0.2 * self._visc_diag)
        u_ss = ((1.0 / self.dt + a_cell) * u_star - self.u_n / self.dt + gpx) / a_cell
        v_ss = ((1.0 / self.dt + a_cell) * v_star - self.v_n / self.dt + gpy) / a_cell

        # face prediction and pressure coefficients on interior slots
        vi, hi = self.vslots_int, self.hslots_int
        L, R = m.v_cl[vi], m.v_cr[vi]
        S, Nc = m.h_cs[hi], m.h_cn[hi]

        rlag_u = (t.sv_rl[vi] * self.est_u.dsl_y[L] + t.sv_rr[vi] * self.est_u.dsl_y[R]
                  + t.sv_rf[vi] * self.est_u.dphif_v[vi])
        rlag_v = (t.sh_rs[hi] * self.est_v.dsl_x[S] + t.sh_rn[hi] * self.est_v.dsl_x[Nc]
                  + t.sh_rf[hi] * self.est_v.dphif_h[hi])

        invA_f = self.aL_v[vi] / a_cell[L] + self.aR_v[vi] / a_cell[R]
        A_f = 1.0 / invA_f
        At_f = A_f + 1.0 / self.dt
        R_f = (A_f * (self.aL_v[vi] * u_ss[L] + self.aR_v[vi] * u_ss[R]
                      + rlag_u / t.sv_B[vi])
               + self.uy_n[vi] / self.dt) / At_f

        invA_g = self.aS_h[hi] / a_cell[S] + self.aN_h[hi] / a_cell[Nc]
        A_g = 1.0 / invA_g
        At_g = A_g + 1.0 / self.dt
        R_g = (A_g * (self.aS_h[hi] * v_ss[S] + self.aN_h[hi] * v_ss[Nc]
                      + rlag_v / t.sh_B[hi])
               + self.vx_n[hi] / self.dt) / At_g

        # lagged part of the face pressure gradients (deferred correction)
        lag_pv = self._rp.gv[vi] - (self.gL_v[vi] * self.p[L] + self.gR_v[vi] * self.p[R])
        lag_ph = self._rp.gh[hi] - (self.gS_h[hi] * self.p[S] + self.gN_h[hi] * self.p[Nc])

        # predicted face velocities with the old pressure (mass imbalance)
        uy_pred = -self._rp.gv[vi] / At_f + R_f
        vx_pred = -self._rp.gh[hi] / At_g + R_g
        res_cont = float(np.max(np.abs(self._div_scaled(uy_pred, vx_pred))))

        # pressure system: div of the new face velocities = 0, volume-scaled.
        # Face contributions to the divergence rows: +/-(dy/At)*(gL,gR) on the
        # left: matrix entries; R and lag parts go to the right-hand side.
        cv = m.v_dyf[vi] / At_f
        chh = m.h_dxf[hi] / At_g
        pdata = np.concatenate([
            np.column_stack([
                cv * self.gL_v[vi], cv * self.gR_v[vi],       # row L (east face)
                -cv * self.gL_v[vi], -cv * self.gR_v[vi],     # row R (west face)
            ]).ravel(),
            np.column_stack([
                chh * self.gS_h[hi], chh * self.gN_h[hi],     # row S (north face)
                -chh * self.gS_h[hi], -chh * self.gN_h[hi],   # row N (south face)
            ]).ravel(),
        ])
        P = sp.coo_matrix((pdata, (self._pcoo_rows, self._pcoo_cols)),
                          shape=(m.n_cells, m.n_cells)).tocsr()
        rhs = self._div_scaled(R_f - lag_pv / At_f, R_g - lag_ph / At_g)

        ssum = float(np.sum(rhs))
        if abs(ssum) > 1e-10 * max(float(np.sum(np.abs(rhs))), 1e-300):
            raise AssemblyError(f"incompatible pressure right-hand side (sum {ssum:.3e})")
        rhs -= ssum * m.cell_vol / float(np.sum(m.cell_vol))
        pin = self._pin_cell
        P = P.tolil()
        P.rows[pin] = [pin]
        P.data[pin] = [1.0]
        P = P.tocsr()
        rhs[pin] = 0.0
        p_sol = solve_sparse(P, rhs, LinearSolveSpec(tolerance=cfg.lin_tol * 1e3))

        # face velocities from the solved pressure: divergence-free fluxes
        self.uy[vi] = -(self.gL_v[vi] * p_sol[L] + self.gR_v[vi] * p_sol[R]
                        + lag_pv) / At_f + R_f
        self.vx[hi] = -(self.gS_h[hi] * p_sol[S] + self.gN_h[hi] * p_sol[Nc]
                        + lag_ph) / At_g + R_g

        # relaxed cell-pressure update and velocity correction; the delta
        # sliding averages close with the compact end relations on boundary
        # faces (the curvature corrections vanish at the fixed point)
        dp = cfg.alpha_p * (p_sol - self.p)
        dpy = np.zeros(len(m.v_row))
        dpy[vi] = (t.sv_D[vi] * dp[L] + t.sv_E[vi] * dp[R]) / t.sv_B[vi]
        from .mesh import V_ARC_E, V_ARC_W, H_ARC_S, H_LID
        aw = np.where(m.v_kind == V_ARC_W)[0]
        dpy[aw] = 2.0 * dp[m.v_cr[aw]] - dpy[aw + 1]
        ae = np.where(m.v_kind == V_ARC_E)[0]
        dpy[ae] = 2.0 * dp[m.v_cl[ae]] - dpy[ae - 1]
        dph = np.zeros(len(m.h_col))
        dph[hi] = (t.sh_D[hi] * dp[S] + t.sh_E[hi] * dp[Nc]) / t.sh_B[hi]
        asl = np.where(m.h_kind == H_ARC_S)[0]
        dph[asl] = 2.0 * dp[m.h_cn[asl]] - dph[asl + 1]
        lid = np.where(m.h_kind == H_LID)[0]
        dph[lid] = 2.0 * dp[m.h_cs[lid]] - dph[lid - 1]
        onecell = asl[m.h_ptr[m.h_col[asl] + 1] - m.h_ptr[m.h_col[asl]] == 2]
        dph[onecell] = dp[m.h_cn[onecell]]
        dph[onecell + 1] = dp[m.h_cn[onecell]]
        dgx = (dpy[m.c_ve] - dpy[m.c_vw]) / m.cell_wx
        dgy = (dph[m.c_hn] - dph[m.c_hs]) / m.cell_wy
        self.u = u_star - dgx / (a_cell + 1.0 / self.dt)
        self.v = v_star - dgy / (a_cell + 1.0 / self.dt)
        self.p = self.p + dp
        return res_cont

    def advance_time(self) -> tuple[float, float]:
        du = float(np.max(np.abs(self.u - self.u_n)))
        dv = float(np.max(np.abs(self.v - self.v_n)))
        self.u_n = self.u.copy()
        self.v_n = self.v.copy()
        self.uy_n = self.uy.copy()
        self.vx_n = self.vx.copy()
        return du, dv

    # ------------------------------------------------------------------
    def continuity_residual(self) -> float:
        """Max volume-scaled divergence of the current face velocities."""
        m = self.m
        vi, hi = self.vslots_int, self.hslots_int
        div = np.zeros(m.n_cells)
        np.add.at(div, m.v_cr[vi], m.v_dyf[vi] * self.uy[vi])
        np.add.at(div, m.v_cl[vi], -m.v_dyf[vi] * self.uy[vi])
        np.add.at(div, m.h_cn[hi], m.h_dxf[hi] * self.vx[hi])
        np.add.at(div, m.h_cs[hi], -m.h_dxf[hi] * self.vx[hi])
        return float(np.max(np.abs(div)))

    def fields(self) -> FieldState:
        return FieldState(self.m, self.cfg, self.u.copy(), self.v.copy(),
                          self.p.copy(), self.uy.copy(), self.vx.copy(),
                          self._ru, self._rv, self._rp)
