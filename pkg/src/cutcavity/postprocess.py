"""Benchmark quantities: probe-line profiles, error norms and observed
orders, stream function, vortex metrics, and file writers.

Error conventions follow the benchmark methodology: errors are arithmetic
means of absolute deviations at shared locations, and the observed order
between two densities is ln(E1/E2)/ln(N2/N1).  Reference values come from a
fine self-reference run restricted to shared grid lines: coarse faces and
marked cells tile exactly into fine ones, so the reference face/cell
averages are exact extent-weighted aggregates, keeping the comparison
Richardson-consistent.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import FieldState
from .mesh import CutCellMesh, marked_cells, probe_horizontal_slots, probe_vertical_slots

__all__ = [
    "ProbeSet",
    "VortexMetrics",
    "extract_profiles",
    "compute_error_and_order",
    "stream_function",
    "vortex_metrics",
    "marked_cell_table",
    "reference_errors",
    "profiles_csv",
    "field_csv",
    "metrics_text",
]


@dataclass
class ProbeSet:
    """Slots on the two probe grid lines plus the marked cells."""

    vertical_slots: list[int]
    horizontal_slots: list[int]
    cells_a: list[int]
    cells_b: list[int]
    cells_irregular: list[int]

    @staticmethod
    def build(mesh: CutCellMesh) -> "ProbeSet":
        mk = marked_cells(mesh)
        return ProbeSet(probe_vertical_slots(mesh), probe_horizontal_slots(mesh),
                        mk["A"], mk["B"], mk["irregular"])


@dataclass
class VortexMetrics:
    psi_min: float          # psi_min / (D*U)
    eye_x: float            # x/D
    eye_y: float            # y/D
    theta1: float | None    # degrees from the downstream lid corner
    theta2: float | None

    def as_text(self) -> str:
        out = [f"psi_min_over_DU = {self.psi_min:.6f}",
               f"eye_x_over_D = {self.eye_x:.6f}",
               f"eye_y_over_D = {self.eye_y:.6f}"]
        if self.theta1 is not None:
            out.append(f"theta1_deg = {self.theta1:.3f}")
        if self.theta2 is not None:
            out.append(f"theta2_deg = {self.theta2:.3f}")
        return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# profiles
# ---------------------------------------------------------------------------

def extract_profiles(state: FieldState, probes: ProbeSet | None = None):
    """Face-averaged velocities and gradients along the two probe lines.

    Returns (vertical_records, horizontal_records); each record is
    (coordinate, u, v, dudx, dudy, dvdx, dvdy).  On the vertical line the
    values are y-sliding averages on its faces; dudy/dvdy there are exact
    face-end differences of the nodal reconstruction.  Wall endpoints are
    included with the no-slip values and the adjacent curved-face gradient
    averages.
    """
    m = state.mesh
    probes = probes or ProbeSet.build(m)
    ru, rv = state.recon_u, state.recon_v

    vrec = []
    s0 = probes.vertical_slots[0]
    r0 = int(m.v_row[s0])
    # wall endpoint: no-slip values; gradients from the boundary face right
    # below the line's first face (the lower junction cut cell's arc)
    cell2 = m.cell_id(r0 - 1, m.n_u)
    arc2 = int(m.arc_v[cell2])
    yb = float(m.ys[r0])
    vrec.append((yb, 0.0, 0.0, float(ru.gv[arc2]), float(_dy_nodal(m, ru, s0)),
                 float(rv.gv[arc2]), float(_dy_nodal(m, rv, s0))))
    for s in probes.vertical_slots:
        r = int(m.v_row[s])
        yc = 0.5 * float(m.ys[r] + m.ys[r + 1])
        vrec.append((yc, float(ru.vy[s]), float(rv.vy[s]), float(ru.gv[s]),
                     float(_dy_nodal(m, ru, s)), float(rv.gv[s]), float(_dy_nodal(m, rv, s))))

    hrec = []
    sl = probes.horizontal_slots[0]
    xw = float(m.xs[m.h_col[sl]])
    arc2h = int(m.arc_h[m.cell_id(int(m.M) - 1, m.n_u)])
    hrec.append((xw, 0.0, 0.0, float(_dx_nodal(m, ru, sl)), float(ru.gh[arc2h]),
                 float(_dx_nodal(m, rv, sl)), float(rv.gh[arc2h])))
    for s in probes.horizontal_slots:
        q = int(m.h_col[s])
        xc = 0.5 * float(m.xs[q] + m.xs[q + 1])
        hrec.append((xc, float(ru.hx[s]), float(rv.hx[s]), float(_dx_nodal(m, ru, s)),
                     float(ru.gh[s]), float(_dx_nodal(m, rv, s)), float(rv.gh[s])))
    se = probes.horizontal_slots[-1]
    xe = float(m.xs[m.h_col[se] + 1])
    arc4h = int(m.arc_h[m.cell_id(int(m.M) - 1, m.N - m.n_u - 1)])
    hrec.append((xe, 0.0, 0.0, float(_dx_nodal(m, ru, se)), float(ru.gh[arc4h]),
                 float(_dx_nodal(m, rv, se)), float(rv.gh[arc4h])))
    return vrec, hrec


def _dy_nodal(m: CutCellMesh, rec, s: int) -> float:
    # exact mean of the y-partial along a straight vertical face
    if m.v_kind[s] != 0:
        return float("nan")
    return (rec.nodes[m.v_ntop[s]] - rec.nodes[m.v_nbot[s]]) / float(m.v_dyf[s])


def _dx_nodal(m: CutCellMesh, rec, s: int) -> float:
    if m.h_kind[s] == 1:
        return float("nan")
    return (rec.nodes[m.h_neast[s]] - rec.nodes[m.h_nwest[s]]) / float(m.h_dxf[s])


# ---------------------------------------------------------------------------
# error and observed order
# ---------------------------------------------------------------------------

def compute_error_and_order(e_coarse: float, n_coarse: int,
                            e_fine: float, n_fine: int) -> float | str:
    """Observed order ln(E1/E2)/ln(N2/N1); 'exact' for machine-zero errors."""
    if n_fine <= n_coarse:
        raise ValueError("n_fine must exceed n_coarse")
    if e_coarse < 0 or e_fine < 0:
        raise ValueError("errors must be non-negative")
    if e_coarse < 1e-14 or e_fine < 1e-14:
        return "exact"
    return math.log(e_coarse / e_fine) / math.log(n_fine / n_coarse)


# ---------------------------------------------------------------------------
# self-reference comparison (shared grid-line restriction)
# ---------------------------------------------------------------------------

def _containment_cells(coarse: CutCellMesh, fine: CutCellMesh, cells: list[int]):
    """For each coarse cell, the fine cells tiling it (exact, by bounding box)."""
    out = []
    fx0 = fine.xs[fine.cell_q]
    fx1 = fine.xs[fine.cell_q + 1]
    fy0 = fine.ys[fine.cell_r]
    fy1 = fine.ys[fine.cell_r + 1]
    tol = 1e-9 * coarse.D
    for cid in cells:
        x0, x1 = float(coarse.xs[coarse.cell_q[cid]]), float(coarse.xs[coarse.cell_q[cid] + 1])
        y0, y1 = float(coarse.ys[coarse.cell_r[cid]]), float(coarse.ys[coarse.cell_r[cid] + 1])
        inside = np.where((fx0 >= x0 - tol) & (fx1 <= x1 + tol)
                          & (fy0 >= y0 - tol) & (fy1 <= y1 + tol))[0]
        vol = float(np.sum(fine.cell_vol[inside]))
        if abs(vol - float(coarse.cell_vol[cid])) > 1e-9 * float(coarse.cell_vol[cid]):
            raise ValueError(
                f"reference cells do not tile coarse cell {cid}: {vol} vs {coarse.cell_vol[cid]}"
            )
        out.append(inside)
    return out


def reference_cell_values(coarse: CutCellMesh, fine_state: FieldState,
                          cells: list[int], which: str) -> np.ndarray:
    """Volume-weighted aggregates of the fine solution over coarse cells."""
    groups = _containment_cells(coarse, fine_state.mesh, cells)
    vals = fine_state.u if which == "u" else fine_state.v
    out = np.empty(len(cells))
    for i, g in enumerate(groups):
        out[i] = float(np.sum(vals[g] * fine_state.mesh.cell_vol[g])
                       / np.sum(fine_state.mesh.cell_vol[g]))
    return out


def _slot_group_v(coarse: CutCellMesh, fine: CutCellMesh,
                  cslots: list[int], fslots: list[int]):
    """Fine probe v-slots tiling each coarse probe v-slot (same grid line)."""
    out = []
    fy0 = np.array([float(fine.ys[fine.v_row[s]]) for s in fslots])
    fy1 = np.array([float(fine.ys[fine.v_row[s] + 1]) for s in fslots])
    tol = 1e-9 * coarse.D
    for s in cslots:
        y0 = float(coarse.ys[coarse.v_row[s]])
        y1 = float(coarse.ys[coarse.v_row[s] + 1])
        g = [fslots[i] for i in np.where((fy0 >= y0 - tol) & (fy1 <= y1 + tol))[0]]
        ext = sum(float(fine.v_dyf[t]) for t in g)
        if abs(ext - (y1 - y0)) > 1e-9 * (y1 - y0):
            raise ValueError("reference faces do not tile the coarse probe face")
        out.append(g)
    return out


def _slot_group_h(coarse: CutCellMesh, fine: CutCellMesh,
                  cslots: list[int], fslots: list[int]):
    out = []
    fx0 = np.array([float(fine.xs[fine.h_col[s]]) for s in fslots])
    fx1 = np.array([float(fine.xs[fine.h_col[s] + 1]) for s in fslots])
    tol = 1e-9 * coarse.D
    for s in cslots:
        x0 = float(coarse.xs[coarse.h_col[s]])
        x1 = float(coarse.xs[coarse.h_col[s] + 1])
        g = [fslots[i] for i in np.where((fx0 >= x0 - tol) & (fx1 <= x1 + tol))[0]]
        ext = sum(float(fine.h_dxf[t]) for t in g)
        if abs(ext - (x1 - x0)) > 1e-9 * (x1 - x0):
            raise ValueError("reference faces do not tile the coarse probe face")
        out.append(g)
    return out


PROFILE_VARS = ("u_y", "v_y", "u_x", "v_x", "dudx_y", "dvdx_y", "dudy_x", "dvdy_x")
CELL_VARS = ("uA", "vA", "uB", "vB", "u14", "v14")


def reference_errors(state: FieldState, ref: FieldState) -> dict[str, float]:
    """Mean absolute errors of the benchmark variables vs a fine reference.

    Face metrics: sliding averages (and gradient sliding averages) on the
    probe-line faces, compared with the extent-weighted aggregate of the
    reference reconstruction over each coarse face.  Cell metrics: marked
    cell-averaged velocities vs volume-weighted reference aggregates.
    """
    m, fm = state.mesh, ref.mesh
    pb, fpb = ProbeSet.build(m), ProbeSet.build(fm)
    gv = _slot_group_v(m, fm, pb.vertical_slots, fpb.vertical_slots)
    gh = _slot_group_h(m, fm, pb.horizontal_slots, fpb.horizontal_slots)

    def vref(arr_ref, groups, ext):
        return np.array([sum(arr_ref[t] * ext[t] for t in g) / sum(ext[t] for t in g)
                         for g in groups])

    out: dict[str, float] = {}
    vs = pb.vertical_slots
    hs = pb.horizontal_slots
    pairs = [
        ("u_y", state.recon_u.vy[vs], vref(ref.recon_u.vy, gv, fm.v_dyf)),
        ("v_y", state.recon_v.vy[vs], vref(ref.recon_v.vy, gv, fm.v_dyf)),
        ("u_x", state.recon_u.hx[hs], vref(ref.recon_u.hx, gh, fm.h_dxf)),
        ("v_x", state.recon_v.hx[hs], vref(ref.recon_v.hx, gh, fm.h_dxf)),
        ("dudx_y", state.recon_u.gv[vs], vref(ref.recon_u.gv, gv, fm.v_dyf)),
        ("dvdx_y", state.recon_v.gv[vs], vref(ref.recon_v.gv, gv, fm.v_dyf)),
        ("dudy_x", state.recon_u.gh[hs], vref(ref.recon_u.gh, gh, fm.h_dxf)),
        ("dvdy_x", state.recon_v.gh[hs], vref(ref.recon_v.gh, gh, fm.h_dxf)),
    ]
    for name, mine, refv in pairs:
        out[name] = float(np.mean(np.abs(np.asarray(mine) - refv)))
    for name, cells in (("A", pb.cells_a), ("B", pb.cells_b), ("14", pb.cells_irregular)):
        for comp in ("u", "v"):
            mine = (state.u if comp == "u" else state.v)[cells]
            refv = reference_cell_values(m, ref, cells, comp)
            out[f"{comp}{name}"] = float(np.mean(np.abs(mine - refv)))
    return out


# ---------------------------------------------------------------------------
# stream function and vortex metrics
# ---------------------------------------------------------------------------

def stream_function(state: FieldState, check_tol: float | None = None) -> np.ndarray:
    """Stream function on mesh nodes by path integration of face fluxes.

    psi = 0 on the whole boundary; crossing a vertical face eastward adds
    uy*dy, crossing a horizontal face northward subtracts vx*dx.  Row-first
    and column-first sweeps must agree within the continuity residual; the
    returned array uses the row-first values.
    """
    psi_r = _psi_sweep(state, row_first=True)
    psi_c = _psi_sweep(state, row_first=False)
    diff = float(np.nanmax(np.abs(psi_r - psi_c)))
    if check_tol is not None and diff > check_tol:
        raise ValueError(f"stream function path dependence {diff:.3e} exceeds {check_tol:.3e}")
    state._psi_path_diff = diff
    return psi_r


def _psi_sweep(state: FieldState, row_first: bool) -> np.ndarray:
    m = state.mesh
    nn = len(m.node_x)
    psi = np.full(nn, np.nan)
    # boundary nodes: psi = 0
    for n in range(nn):
        if m.node_kind[n] != 0 and m.node_kind[n] != 3:
            psi[n] = 0.0
        elif m.node_kind[n] == 3:
            psi[n] = 0.0  # lid nodes (v=0 along the lid keeps psi constant)
    # interior nodes: integrate from the lid downward through horizontal
    # faces (subtract vx*dx going north->south means adding when stepping
    # down), column by column; or integrate along rows through vertical
    # faces from the west wall.
    if row_first:
        for r in range(m.n_rows):
            for s in range(int(m.v_ptr[r]), int(m.v_ptr[r + 1])):
                if m.v_kind[s] != 0:
                    continue
                nb, nt = int(m.v_nbot[s]), int(m.v_ntop[s])
                if np.isnan(psi[nt]) and not np.isnan(psi[nb]):
                    psi[nt] = psi[nb] + float(m.v_dyf[s] * state.uy[s])
        # psi on vertical-face endpoints covers every interior node except
        # any remaining are filled through horizontal faces
        for q in range(m.n_cols):
            for s in range(int(m.h_ptr[q]), int(m.h_ptr[q + 1])):
                if m.h_kind[s] == 1:
                    continue
                nw, ne = int(m.h_nwest[s]), int(m.h_neast[s])
                if np.isnan(psi[ne]) and not np.isnan(psi[nw]):
                    psi[ne] = psi[nw] - float(m.h_dxf[s] * state.vx[s])
                elif np.isnan(psi[nw]) and not np.isnan(psi[ne]):
                    psi[nw] = psi[ne] + float(m.h_dxf[s] * state.vx[s])
    else:
        for q in range(m.n_cols):
            for s in range(int(m.h_ptr[q]), int(m.h_ptr[q + 1])):
                if m.h_kind[s] == 1:
                    continue
                nw, ne = int(m.h_nwest[s]), int(m.h_neast[s])
                if np.isnan(psi[ne]) and not np.isnan(psi[nw]):
                    psi[ne] = psi[nw] - float(m.h_dxf[s] * state.vx[s])
        for r in range(m.n_rows):
            for s in range(int(m.v_ptr[r]), int(m.v_ptr[r + 1])):
                if m.v_kind[s] != 0:
                    continue
                nb, nt = int(m.v_nbot[s]), int(m.v_ntop[s])
                if np.isnan(psi[nt]) and not np.isnan(psi[nb]):
                    psi[nt] = psi[nb] + float(m.v_dyf[s] * state.uy[s])
                elif np.isnan(psi[nb]) and not np.isnan(psi[nt]):
                    psi[nb] = psi[nt] - float(m.v_dyf[s] * state.uy[s])
    return psi


def vortex_metrics(state: FieldState, psi: np.ndarray | None = None) -> VortexMetrics:
    """Minimum of the stream function (vortex eye) and detachment angles.

    The eye is refined by a bi-quadratic fit over the 3x3 node neighborhood
    of the discrete minimum (interior uniform region).  Detachment angles
    are where the dividing streamline psi=0 of the counter-rotating pocket
    meets the circular wall, measured as polar angle from the downstream
    (positive-x) lid corner along the arc.
    """
    m = state.mesh
    cfg = state.config
    DU = cfg.D * (cfg.U if cfg.U != 0 else 1.0)
    if psi is None:
        psi = stream_function(state)

    interior = np.where(m.node_kind == 0)[0]
    imin = interior[int(np.argmin(psi[interior]))]
    x0, y0 = float(m.node_x[imin]), float(m.node_y[imin])

    # bi-quadratic refinement on the 3x3 node neighborhood of the minimum
    rev = {v: k for k, v in m.node_index.items()}
    qx0, ry0 = rev[int(imin)]
    pts = []
    for i in (-1, 0, 1):
        for j in (-1, 0, 1):
            n = m.node_index.get((qx0 + i, ry0 + j))
            if n is None or np.isnan(psi[n]):
                pts = None
                break
            pts.append((float(m.node_x[n]) - x0, float(m.node_y[n]) - y0, float(psi[n])))
        if pts is None:
            break
    hx = m.c / m.M
    hy = m.c / m.n_u
    px, py, pmin = x0, y0, float(psi[imin])
    if pts:
        A = np.array([[1, x, y, x * x, x * y, y * y] for (x, y, _z) in pts])
        b = np.array([z for (_x, _y, z) in pts])
        coef, *_ = np.linalg.lstsq(A, b, rcond=None)
        c0, cx, cy, cxx, cxy, cyy = coef
        Hm = np.array([[2 * cxx, cxy], [cxy, 2 * cyy]])
        g = np.array([cx, cy])
        try:
            d = np.linalg.solve(Hm, -g)
            if np.all(np.abs(d) < max(hx, hy)):
                px, py = x0 + d[0], y0 + d[1]
                pmin = float(c0 + cx * d[0] + cy * d[1] + cxx * d[0] ** 2
                             + cxy * d[0] * d[1] + cyy * d[1] ** 2)
        except np.linalg.LinAlgError:
            pass

    th1, th2 = _detachment_angles(state, psi)
    return VortexMetrics(pmin / DU, px / cfg.D, py / cfg.D, th1, th2)


def _detachment_angles(state: FieldState, psi: np.ndarray):
    """Angular span where the near-wall ring has counter-sign circulation.

    The ring samples psi at each cut cell's inner box corner (the fluid
    corner opposite its curved face) ordered along the wall; zero crossings
    bounding the largest positive pocket are interpolated in arc angle.
    """
    m = state.mesh
    ring = []
    for cid in m.chain:
        r, q = int(m.cell_r[cid]), int(m.cell_q[cid])
        qx = q if m.cut_sign[cid] > 0 else q + 1  # NW corner / NE corner
        node = m.node_index.get((qx, r + 1))
        if node is None or np.isnan(psi[node]):
            continue
        x, y = float(m.node_x[node]), float(m.node_y[node])
        ang = math.degrees(math.atan2(-y, x))
        ring.append((ang, float(psi[node])))
    ring.sort()
    if not ring:
        return None, None
    angs = np.array([a for a, _ in ring])
    vals = np.array([v for _, v in ring])
    pos = vals > 0.0
    if not np.any(pos):
        return None, None
    # largest contiguous positive pocket
    runs = []
    start = None
    for i, flag in enumerate(pos):
        if flag and start is None:
            start = i
        if (not flag or i == len(pos) - 1) and start is not None:
            end = i if flag else i - 1
            runs.append((start, end))
            start = None
    s, e = max(runs, key=lambda se: se[1] - se[0])
    # interpolate the zero crossings in angle
    def cross(i0, i1):
        a0, v0 = angs[i0], vals[i0]
        a1, v1 = angs[i1], vals[i1]
        if v1 == v0:
            return a0
        return a0 + (a1 - a0) * (0.0 - v0) / (v1 - v0)

    th1 = cross(s - 1, s) if s > 0 else angs[s]
    th2 = cross(e, e + 1) if e < len(vals) - 1 else angs[e]
    return float(th1), float(th2)


# ---------------------------------------------------------------------------
# tables and writers
# ---------------------------------------------------------------------------

def marked_cell_table(state: FieldState) -> str:
    m = state.mesh
    pb = ProbeSet.build(m)
    buf = io.StringIO()
    buf.write("group,index,cell_id,row,col,xc,yc,u_over_U,v_over_U\n")
    uref = state.config.U if state.config.U != 0 else 1.0
    for group, cells in (("A", pb.cells_a), ("B", pb.cells_b), ("irregular", pb.cells_irregular)):
        for i, cid in enumerate(cells, start=1):
            buf.write(f"{group},{i},{cid},{m.cell_r[cid]},{m.cell_q[cid]},"
                      f"{m.cell_cx[cid]:.8g},{m.cell_cy[cid]:.8g},"
                      f"{state.u[cid] / uref:.8g},{state.v[cid] / uref:.8g}\n")
    return buf.getvalue()


def profiles_csv(records) -> str:
    buf = io.StringIO()
    buf.write("x_or_y,u,v,dudx,dudy,dvdx,dvdy\n")
    for rec in records:
        buf.write(",".join(f"{x:.10g}" for x in rec) + "\n")
    return buf.getvalue()


def field_csv(state: FieldState) -> str:
    m = state.mesh
    from .mesh import CellKind

    buf = io.StringIO()
    buf.write("x,y,kind,u,v,p\n")
    for cid in range(m.n_cells):
        buf.write(f"{m.cell_cx[cid]:.10g},{m.cell_cy[cid]:.10g},"
                  f"{CellKind(int(m.cell_kind[cid])).name},"
                  f"{state.u[cid]:.10g},{state.v[cid]:.10g},{state.p[cid]:.10g}\n")
    return buf.getvalue()


def metrics_text(state: FieldState, metrics: VortexMetrics) -> str:
    extra = [f"continuity_residual = {_cont_res(state):.6e}",
             f"psi_path_difference = {getattr(state, '_psi_path_diff', float('nan')):.6e}"]
    return metrics.as_text() + "\n".join(extra) + "\n"


def _cont_res(state: FieldState) -> float:
    m = state.mesh
    from .mesh import V_INT, H_INT

    vi = np.where(m.v_kind == V_INT)[0]
    hi = np.where(m.h_kind == H_INT)[0]
    div = np.zeros(m.n_cells)
    np.add.at(div, m.v_cl[vi], m.v_dyf[vi] * state.uy[vi])
    np.add.at(div, m.v_cr[vi], -m.v_dyf[vi] * state.uy[vi])
    np.add.at(div, m.h_cs[hi], m.h_dxf[hi] * state.vx[hi])
    np.add.at(div, m.h_cn[hi], -m.h_dxf[hi] * state.vx[hi])
    return float(np.max(np.abs(div)))
