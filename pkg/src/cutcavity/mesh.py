"""Cut-Cartesian-cell mesh of the lid-driven semicircular cavity.

Mesh family (density parameter N = number of cells along the lid):

* circle of radius R = D/2 centered at the origin, fluid in y < 0;
* dividing line y = -c with c = D*sqrt(2)/4 (the 45-degree level of the arc);
* below the dividing line the mesh is uniform in x (2M inner columns of
  width c/M); each inner column line x_i demands the horizontal line
  y = -sqrt(R^2 - x_i^2) through its circle intersection;
* above it the mesh is uniform in y (n_u rows of height c/n_u); each row
  line demands the vertical lines x = +-sqrt(R^2 - y_j^2);
* with M + n_u = N/2 every requirement closes finitely: the lid carries
  exactly N cells, the vertical centerline N/2.

The result is logically banded: every cell is addressed by (row, column),
each row is a contiguous run of cells ending in two cut cells, and each
column is a contiguous stack whose bottom cell is cut.  A cut cell's curved
face plays two roles: it terminates its row (west or east) and its column
(south); the face registry resolves both inherited indices to the same face.

Identities follow the half-index convention stored as integer doubled
indices: grid lines get even doubled coordinates (2*ix, 2*iy), cells odd
pairs, faces mixed pairs.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .geometry import (
    CircleArc,
    CutCellShape,
    GeomConstants,
    MeshRequirementError,
    RectCellShape,
    cell_geometry,
    face_curve_derivatives,
    gauss_average,
    slice_width,
)

__all__ = [
    "CellKind",
    "CutCellMesh",
    "MeshBuildError",
    "MeshReport",
    "build_semicircle_mesh",
    "classify_cell",
    "validate_mesh",
    "validate_faces",
    "mesh_report_csv",
]

# vslot kinds
V_INT, V_ARC_W, V_ARC_E = 0, 1, 2
# hslot kinds
H_INT, H_ARC_S, H_LID = 0, 1, 2
# node kinds
ND_INTERIOR, ND_WALL_H, ND_POLE, ND_LID, ND_LID_CORNER = 0, 1, 2, 3, 4


class MeshBuildError(Exception):
    pass


class CellKind(IntEnum):
    RECTANGULAR = 0
    CUT_BOUNDARY = 1
    SOLITARY = 2
    TWIN = 3


@dataclass
class MeshReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def text(self) -> str:
        if self.ok:
            return "mesh OK: no violations\n"
        return "".join(f"VIOLATION: {v}\n" for v in self.violations)


@dataclass
class FaceHandle:
    """Canonical face object; arc faces carry both a v-slot and an h-slot."""

    kind: str  # "v" | "h" | "arc"
    vslot: int = -1
    hslot: int = -1
    cell: int = -1  # owning cut cell for arc faces


class CutCellMesh:
    """Immutable-after-build container; plain numpy arrays throughout."""

    def __init__(self):
        # populated by build_semicircle_mesh
        pass

    # ---- convenience -------------------------------------------------
    @property
    def n_cells(self) -> int:
        return len(self.cell_kind)

    def cell_id(self, r: int, q: int) -> int:
        if not (0 <= r < self.n_rows):
            raise IndexError(f"row {r} out of range")
        if not (self.qlo[r] <= q <= self.qhi[r]):
            raise IndexError(f"column {q} has no cell in row {r}")
        return int(self.row_ptr[r] + (q - self.qlo[r]))

    def vslot_id(self, r: int, k: int) -> int:
        return int(self.v_ptr[r] + k)

    def hslot_id(self, q: int, m: int) -> int:
        return int(self.h_ptr[q] + m)

    def face_by_index2(self, ij2: tuple[int, int]) -> FaceHandle:
        return self._face_registry[ij2]

    def total_volume(self) -> float:
        return float(np.sum(self.cell_vol))


def _build_lines(D: float, N: int):
    if N % 2 != 0:
        raise MeshBuildError(f"N must be even, got {N}")
    if N < 8:
        raise MeshBuildError(f"N must be at least 8 to resolve twin and solitary cells, got {N}")
    R = 0.5 * D
    c = R * math.cos(math.pi / 4.0)
    half = N // 2
    M = (N + 2) // 4
    n_u = half - M
    if M < 2 or n_u < 2:
        raise MeshBuildError(f"N={N} too small to resolve twin cells (M={M}, n_u={n_u})")

    # inner vertical lines, exact at -c, 0, +c
    xs_inner = [c * (i - M) / M for i in range(2 * M + 1)]
    xs_inner[0], xs_inner[M], xs_inner[2 * M] = -c, 0.0, c
    # upper horizontal lines, exact at -c and 0
    ys_upper = [-c * (n_u - k) / n_u for k in range(n_u + 1)]
    ys_upper[0], ys_upper[-1] = -c, 0.0
    # demanded lines: snap the closing intersections exactly
    a = [math.sqrt(max(R * R - y * y, 0.0)) for y in ys_upper]  # a[k] pairs ys_upper[k]
    b = [-math.sqrt(max(R * R - x * x, 0.0)) for x in xs_inner[M:]]  # b[i] pairs x_i
    # outer demanded verticals are +-a at ys_upper[1..n_u-1] = a[1..n_u-1]
    xs = [-R] + [-a[k] for k in range(n_u - 1, 0, -1)] + xs_inner + [a[k] for k in range(1, n_u)] + [R]
    ys = [-R] + b[1:M] + [-c] + ys_upper[1:]
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if not (np.all(np.diff(xs) > 0.0) and np.all(np.diff(ys) > 0.0)):
        raise MeshBuildError("degenerate or non-monotone grid line set (sliver cells?)")
    # snap rule: merge lines closer than 1e-12 of the local spacing
    if np.min(np.diff(xs)) < 1e-12 * (2 * R) or np.min(np.diff(ys)) < 1e-12 * (2 * R):
        raise MeshBuildError("grid lines collide: cells too thin to keep (snapping unsupported here)")
    return R, c, M, n_u, xs, ys


def build_semicircle_mesh(D: float, N: int) -> CutCellMesh:
    """Build, classify, and freeze the semicircular-cavity mesh for density N."""
    R, c, M, n_u, xs, ys = _build_lines(D, N)
    half = N // 2
    n_rows = M + n_u
    n_cols = N
    assert len(xs) == n_cols + 1 and len(ys) == n_rows + 1

    m = CutCellMesh()
    m.D, m.R, m.c, m.M, m.n_u, m.N = D, R, c, M, n_u, N
    m.dividing_y = -c
    m.xs, m.ys = xs, ys
    m.n_rows, m.n_cols = n_rows, n_cols

    qlo = np.empty(n_rows, dtype=int)
    qhi = np.empty(n_rows, dtype=int)
    for r in range(n_rows):
        if r < M:
            qlo[r] = n_u + M - r - 1
            qhi[r] = n_u + M + r
        else:
            k = r - M
            qlo[r] = n_u - 1 - k
            qhi[r] = N - n_u + k
    m.qlo, m.qhi = qlo, qhi

    rlo = np.empty(n_cols, dtype=int)
    for q in range(n_cols):
        if q < n_u:
            rlo[q] = M + n_u - 1 - q
        elif q < n_u + 2 * M:
            iq = q - (n_u + M)
            rlo[q] = iq if iq >= 0 else -iq - 1
        else:
            rlo[q] = M + n_u - 1 - (N - 1 - q)
    m.rlo = rlo

    ncell_row = qhi - qlo + 1
    row_ptr = np.zeros(n_rows + 1, dtype=int)
    row_ptr[1:] = np.cumsum(ncell_row)
    m.row_ptr = row_ptr
    nc = int(row_ptr[-1])

    arrs = {k: np.zeros(nc) for k in
            ("cell_dx", "cell_dy", "cell_vol", "cell_wx", "cell_wy",
             "cell_dwdy0", "cell_dhdx0", "cell_cx", "cell_cy",
             "cell_w_mid", "cell_h_mid")}
    cell_kind = np.zeros(nc, dtype=np.int8)
    cell_r = np.zeros(nc, dtype=int)
    cell_q = np.zeros(nc, dtype=int)
    cut_sign = np.zeros(nc, dtype=np.int8)  # -1 arc west, +1 arc east
    shapes: list = [None] * nc

    for r in range(n_rows):
        y0, y1 = float(ys[r]), float(ys[r + 1])
        for q in range(qlo[r], qhi[r] + 1):
            cid = int(row_ptr[r] + (q - qlo[r]))
            x0, x1 = float(xs[q]), float(xs[q + 1])
            cell_r[cid], cell_q[cid] = r, q
            if q == qlo[r]:
                arc = CircleArc(0.0, 0.0, R, (x1, y0), (x0, y1))
                shape = CutCellShape(x0, x1, y0, y1, arc, "left")
                cut_sign[cid] = -1
            elif q == qhi[r]:
                arc = CircleArc(0.0, 0.0, R, (x0, y0), (x1, y1))
                shape = CutCellShape(x0, x1, y0, y1, arc, "right")
                cut_sign[cid] = +1
            else:
                shape = RectCellShape(x0, x1, y0, y1)
            shapes[cid] = shape
            g = cell_geometry(shape)
            arrs["cell_dx"][cid] = g.dx
            arrs["cell_dy"][cid] = g.dy
            arrs["cell_vol"][cid] = g.vol
            arrs["cell_wx"][cid] = g.wx
            arrs["cell_wy"][cid] = g.wy
            arrs["cell_dwdy0"][cid] = g.dwdy0
            arrs["cell_dhdx0"][cid] = g.dhdx0
            if cut_sign[cid] != 0:
                ymid, xmid = 0.5 * (y0 + y1), 0.5 * (x0 + x1)
                arrs["cell_w_mid"][cid] = slice_width(shape, ymid)
                hmid = shape.y_north(xmid) - shape.y_south(xmid)
                arrs["cell_h_mid"][cid] = float(hmid)
                # fluid centroid, closed forms via circle moments
                arrs["cell_cx"][cid], arrs["cell_cy"][cid] = _cut_centroid(shape, g)
            else:
                arrs["cell_w_mid"][cid] = g.dx
                arrs["cell_h_mid"][cid] = g.dy
                arrs["cell_cx"][cid] = 0.5 * (x0 + x1)
                arrs["cell_cy"][cid] = 0.5 * (y0 + y1)

    for k, v in arrs.items():
        setattr(m, k, v)
    m.cell_r, m.cell_q, m.cut_sign = cell_r, cell_q, cut_sign
    m.cell_shape = shapes

    # classification
    top = n_rows - 1
    for cid in range(nc):
        r, q = cell_r[cid], cell_q[cid]
        if cut_sign[cid] == 0:
            cell_kind[cid] = CellKind.RECTANGULAR
        elif r == 0:
            cell_kind[cid] = CellKind.TWIN
        elif r == top and (q == 0 or q == n_cols - 1):
            cell_kind[cid] = CellKind.SOLITARY
        else:
            cell_kind[cid] = CellKind.CUT_BOUNDARY
    m.cell_kind = cell_kind

    _build_slots(m)
    _build_nodes(m)
    _build_chains(m)
    _build_registry(m)

    # area closure guard: half-disc area to near machine precision
    area = math.pi * R * R / 2.0
    if abs(m.total_volume() - area) > 1e-10 * area:
        raise MeshBuildError(
            f"fluid area {m.total_volume()!r} deviates from pi*D^2/8 = {area!r}"
        )
    return m


def _cut_centroid(shape: CutCellShape, g: GeomConstants) -> tuple[float, float]:
    r = shape.arc.radius
    y0, y1 = shape.y0, shape.y1

    def int_sqrt(t0, t1):  # integral of sqrt(r^2-t^2)
        f = lambda t: 0.5 * (t * math.sqrt(max(r * r - t * t, 0.0)) + r * r * math.asin(max(-1.0, min(1.0, t / r))))
        return f(t1) - f(t0)

    def int_sq(t0, t1):  # integral of (r^2 - t^2)
        f = lambda t: r * r * t - t**3 / 3.0
        return f(t1) - f(t0)

    def int_t_sqrt(t0, t1):  # integral of t*sqrt(r^2-t^2)
        f = lambda t: -((r * r - t * t) ** 1.5) / 3.0
        return f(t1) - f(t0)

    if shape.side == "right":
        # Mx = int 0.5*(xe^2 - xw^2) dy with xe = sqrt(r^2-y^2), xw = x0
        mx = 0.5 * (int_sq(y0, y1) - shape.x0**2 * (y1 - y0))
        # My = int y*(xe - xw) dy
        my = int_t_sqrt(y0, y1) - shape.x0 * 0.5 * (y1**2 - y0**2)
    else:
        mx = 0.5 * (shape.x1**2 * (y1 - y0) - int_sq(y0, y1))
        my = shape.x1 * 0.5 * (y1**2 - y0**2) + int_t_sqrt(y0, y1)
    return mx / g.vol, my / g.vol


def _build_slots(m: CutCellMesh) -> None:
    n_rows, n_cols = m.n_rows, m.n_cols
    ncell_row = m.qhi - m.qlo + 1
    v_ptr = np.zeros(n_rows + 1, dtype=int)
    v_ptr[1:] = np.cumsum(ncell_row + 1)
    m.v_ptr = v_ptr
    nv = int(v_ptr[-1])

    v_row = np.zeros(nv, dtype=int)
    v_pos = np.zeros(nv, dtype=int)
    v_cl = np.full(nv, -1, dtype=int)
    v_cr = np.full(nv, -1, dtype=int)
    v_kind = np.zeros(nv, dtype=np.int8)
    v_x = np.full(nv, np.nan)
    v_dyf = np.zeros(nv)
    v_cut = np.full(nv, -1, dtype=int)

    for r in range(n_rows):
        ncr = int(ncell_row[r])
        hgt = float(m.ys[r + 1] - m.ys[r])
        for k in range(ncr + 1):
            s = int(v_ptr[r] + k)
            v_row[s], v_pos[s] = r, k
            v_dyf[s] = hgt
            if k == 0:
                v_kind[s] = V_ARC_W
                cid = m.cell_id(r, int(m.qlo[r]))
                v_cr[s] = cid
                v_cut[s] = cid
            elif k == ncr:
                v_kind[s] = V_ARC_E
                cid = m.cell_id(r, int(m.qhi[r]))
                v_cl[s] = cid
                v_cut[s] = cid
            else:
                v_kind[s] = V_INT
                v_cl[s] = m.cell_id(r, int(m.qlo[r]) + k - 1)
                v_cr[s] = m.cell_id(r, int(m.qlo[r]) + k)
                v_x[s] = float(m.xs[m.qlo[r] + k])
    m.v_row, m.v_pos, m.v_cl, m.v_cr = v_row, v_pos, v_cl, v_cr
    m.v_kind, m.v_x, m.v_dyf, m.v_cut = v_kind, v_x, v_dyf, v_cut

    ncell_col = (n_rows - 1) - m.rlo + 1
    h_ptr = np.zeros(n_cols + 1, dtype=int)
    h_ptr[1:] = np.cumsum(ncell_col + 1)
    m.h_ptr = h_ptr
    nh = int(h_ptr[-1])

    h_col = np.zeros(nh, dtype=int)
    h_pos = np.zeros(nh, dtype=int)
    h_cs = np.full(nh, -1, dtype=int)
    h_cn = np.full(nh, -1, dtype=int)
    h_kind = np.zeros(nh, dtype=np.int8)
    h_y = np.full(nh, np.nan)
    h_dxf = np.zeros(nh)
    h_cut = np.full(nh, -1, dtype=int)

    for q in range(n_cols):
        ncq = int(ncell_col[q])
        wid = float(m.xs[q + 1] - m.xs[q])
        for j in range(ncq + 1):
            s = int(h_ptr[q] + j)
            h_col[s], h_pos[s] = q, j
            h_dxf[s] = wid
            if j == 0:
                h_kind[s] = H_ARC_S
                cid = m.cell_id(int(m.rlo[q]), q)
                h_cn[s] = cid
                h_cut[s] = cid
            elif j == ncq:
                h_kind[s] = H_LID
                h_cs[s] = m.cell_id(n_rows - 1, q)
                h_y[s] = 0.0
            else:
                h_kind[s] = H_INT
                h_cs[s] = m.cell_id(int(m.rlo[q]) + j - 1, q)
                h_cn[s] = m.cell_id(int(m.rlo[q]) + j, q)
                h_y[s] = float(m.ys[m.rlo[q] + j])
    m.h_col, m.h_pos = h_col, h_pos
    m.h_cs, m.h_cn = h_cs, h_cn
    m.h_kind, m.h_y, m.h_dxf, m.h_cut = h_kind, h_y, h_dxf, h_cut

    # per-cell slot handles: west/east vslot, south/north hslot
    nc = m.n_cells
    c_vw = np.zeros(nc, dtype=int)
    c_ve = np.zeros(nc, dtype=int)
    c_hs = np.zeros(nc, dtype=int)
    c_hn = np.zeros(nc, dtype=int)
    for cid in range(nc):
        r, q = int(m.cell_r[cid]), int(m.cell_q[cid])
        k = q - int(m.qlo[r])
        c_vw[cid] = m.vslot_id(r, k)
        c_ve[cid] = m.vslot_id(r, k + 1)
        j = r - int(m.rlo[q])
        c_hs[cid] = m.hslot_id(q, j)
        c_hn[cid] = m.hslot_id(q, j + 1)
    m.c_vw, m.c_ve, m.c_hs, m.c_hn = c_vw, c_ve, c_hs, c_hn

    # arc face slot pairing (per cut cell)
    arc_v = np.full(nc, -1, dtype=int)
    arc_h = np.full(nc, -1, dtype=int)
    for cid in range(nc):
        if m.cut_sign[cid] == 0:
            continue
        arc_v[cid] = c_vw[cid] if m.cut_sign[cid] < 0 else c_ve[cid]
        arc_h[cid] = c_hs[cid]
    m.arc_v, m.arc_h = arc_v, arc_h

    # face-curve midpoint derivative bundles per cut cell
    m.arc_deriv = [None] * nc
    m.arc_slope_ends_y = np.zeros((nc, 2))  # dx/dy at (y0, y1) face ends
    m.arc_slope_ends_x = np.zeros((nc, 2))  # dy/dx at (x0, x1) face ends
    for cid in range(nc):
        if m.cut_sign[cid] == 0:
            continue
        sh = m.cell_shape[cid]
        d = face_curve_derivatives(sh.arc, y0=sh.y0, y1=sh.y1, x0=sh.x0, x1=sh.x1)
        m.arc_deriv[cid] = d
        for i, ye in enumerate((sh.y0, sh.y1)):
            x_e = float(sh.arc.x_at_y(ye))
            m.arc_slope_ends_y[cid, i] = math.inf if abs(x_e) < 1e-300 else -(ye) / x_e
        for i, xe in enumerate((sh.x0, sh.x1)):
            y_e = float(sh.arc.y_at_x(xe))
            m.arc_slope_ends_x[cid, i] = math.inf if abs(y_e) < 1e-300 else -(xe) / y_e

    # up/down vertical-slot neighbors (same grid line, adjacent row; arc slot
    # fallback when the line terminates on the boundary there); slots are
    # keyed by integer (line index, row), never by float coordinates
    v_dn = np.full(nv, -1, dtype=int)
    v_up = np.full(nv, -1, dtype=int)
    vslot_by_line = {}
    for s in range(nv):
        if v_kind[s] == V_INT:
            r = int(v_row[s])
            vslot_by_line[(int(m.qlo[r] + v_pos[s]), r)] = s

    for s in range(nv):
        if v_kind[s] != V_INT:
            continue
        r = int(v_row[s])
        qx = int(m.qlo[r] + v_pos[s])
        if r > 0:
            t = vslot_by_line.get((qx, r - 1), -1)
            if t < 0:
                # the line terminates on the boundary below: the neighbor is
                # the arc slot ending row r-1 if its extent touches this line
                if qx == m.qlo[r - 1]:
                    t = m.vslot_id(r - 1, 0)
                elif qx == m.qhi[r - 1] + 1:
                    t = m.vslot_id(r - 1, int(m.qhi[r - 1] - m.qlo[r - 1]) + 1)
            v_dn[s] = t
        if r < n_rows - 1:
            v_up[s] = vslot_by_line.get((qx, r + 1), -1)
    m.v_dn, m.v_up = v_dn, v_up

    h_le = np.full(nh, -1, dtype=int)
    h_ri = np.full(nh, -1, dtype=int)
    hslot_by_line = {}
    for s in range(nh):
        if h_kind[s] != H_ARC_S:
            q = int(h_col[s])
            hslot_by_line[(int(m.rlo[q] + h_pos[s]), q)] = s

    for s in range(nh):
        if h_kind[s] == H_ARC_S:
            continue
        q = int(h_col[s])
        ry = int(m.rlo[q] + h_pos[s])
        if q > 0:
            t = hslot_by_line.get((ry, q - 1), -1)
            if t < 0 and ry == m.rlo[q - 1]:
                t = m.hslot_id(q - 1, 0)
            h_le[s] = t
        if q < n_cols - 1:
            t = hslot_by_line.get((ry, q + 1), -1)
            if t < 0 and ry == m.rlo[q + 1]:
                t = m.hslot_id(q + 1, 0)
            h_ri[s] = t
    m.h_le, m.h_ri = h_le, h_ri


def _build_nodes(m: CutCellMesh) -> None:
    """Grid nodes and the per-node evaluation programs.

    Interior (and lid) nodes take the width-weighted average of the two
    flanking horizontal faces; boundary nodes use the second-order compact
    end relation along the grid line that terminates there.
    """
    n_rows, n_cols = m.n_rows, m.n_cols
    node_ix: dict[tuple[int, int], int] = {}
    xs, ys = m.xs, m.ys

    def key(qx: int, ry: int) -> tuple[int, int]:
        return (qx, ry)

    nodes_x: list[float] = []
    nodes_y: list[float] = []

    def nid(qx: int, ry: int) -> int:
        k = key(qx, ry)
        if k not in node_ix:
            node_ix[k] = len(nodes_x)
            nodes_x.append(float(xs[qx]))
            nodes_y.append(float(ys[ry]))
        return node_ix[k]

    # enumerate nodes as cell box corners, skipping the cut-away corner of
    # cut cells (it lies outside the fluid)
    for cid in range(m.n_cells):
        r, q = int(m.cell_r[cid]), int(m.cell_q[cid])
        sgn = int(m.cut_sign[cid])
        for dq in (0, 1):
            for dr in (0, 1):
                if sgn > 0 and (dq, dr) == (1, 0):
                    continue
                if sgn < 0 and (dq, dr) == (0, 0):
                    continue
                nid(q + dq, r + dr)
    m.node_x = np.asarray(nodes_x)
    m.node_y = np.asarray(nodes_y)
    m.node_index = node_ix
    nn = len(nodes_x)

    node_kind = np.full(nn, -1, dtype=np.int8)
    n_hw = np.full(nn, -1, dtype=int)  # interior: west flanking hslot
    n_he = np.full(nn, -1, dtype=int)
    n_cface = np.full(nn, -1, dtype=int)  # compact: face slot (h or v)
    n_partner = np.full(nn, -1, dtype=int)

    hslot_at: dict[tuple[int, int], int] = {}
    for s in range(len(m.h_col)):
        if m.h_kind[s] == H_ARC_S:
            continue
        q = int(m.h_col[s])
        j = int(m.h_pos[s])
        ry = int(m.rlo[q] + j)
        hslot_at[(q, ry)] = s

    vslot_at: dict[tuple[int, int], int] = {}
    for s in range(len(m.v_row)):
        if m.v_kind[s] != V_INT:
            continue
        r = int(m.v_row[s])
        qx = int(m.qlo[r] + m.v_pos[s])
        vslot_at[(qx, r)] = s

    R = m.R
    for (qx, ry), i in node_ix.items():
        x, y = float(xs[qx]), float(ys[ry])
        on_circle = abs(math.hypot(x, y) - R) < 1e-9 * m.D
        on_lid = abs(y) < 1e-14 * m.D
        west = hslot_at.get((qx - 1, ry), -1)
        east = hslot_at.get((qx, ry), -1)
        if on_lid and on_circle:
            node_kind[i] = ND_LID_CORNER
            if east >= 0:
                n_cface[i] = east
                n_partner[i] = node_ix[(qx + 1, ry)]
            else:
                n_cface[i] = west
                n_partner[i] = node_ix[(qx - 1, ry)]
        elif on_circle:
            if east >= 0 or west >= 0:
                node_kind[i] = ND_WALL_H
                if east >= 0:
                    n_cface[i] = east
                    n_partner[i] = node_ix[(qx + 1, ry)]
                else:
                    n_cface[i] = west
                    n_partner[i] = node_ix[(qx - 1, ry)]
            else:
                # circle bottom: only the twin interface line reaches it
                node_kind[i] = ND_POLE
                n_cface[i] = vslot_at[(qx, ry)]  # twin interface vslot (row 0)
                n_partner[i] = node_ix[(qx, ry + 1)]
        elif on_lid:
            node_kind[i] = ND_LID
            n_hw[i], n_he[i] = west, east
        else:
            node_kind[i] = ND_INTERIOR
            n_hw[i], n_he[i] = west, east
            if west < 0 or east < 0:
                raise MeshBuildError(f"interior node at ({x}, {y}) lacks flanking faces")
    m.node_kind = node_kind
    m.n_hw, m.n_he, m.n_cface, m.n_partner = n_hw, n_he, n_cface, n_partner

    # endpoint nodes of straight slots
    nv = len(m.v_row)
    v_nbot = np.full(nv, -1, dtype=int)
    v_ntop = np.full(nv, -1, dtype=int)
    for s in range(nv):
        if m.v_kind[s] != V_INT:
            continue
        r = int(m.v_row[s])
        qx = int(m.qlo[r] + m.v_pos[s])
        v_nbot[s] = node_ix[(qx, r)]
        v_ntop[s] = node_ix[(qx, r + 1)]
    m.v_nbot, m.v_ntop = v_nbot, v_ntop

    nh = len(m.h_col)
    h_nwest = np.full(nh, -1, dtype=int)
    h_neast = np.full(nh, -1, dtype=int)
    for s in range(nh):
        if m.h_kind[s] == H_ARC_S:
            continue
        q = int(m.h_col[s])
        ry = int(m.rlo[q] + m.h_pos[s])
        h_nwest[s] = node_ix[(q, ry)]
        h_neast[s] = node_ix[(q + 1, ry)]
    m.h_nwest, m.h_neast = h_nwest, h_neast

    # cut-cell pinch nodes: bottom (slice-width zero) and lateral
    nc = m.n_cells
    c_pinch_bot = np.full(nc, -1, dtype=int)
    c_pinch_lat = np.full(nc, -1, dtype=int)
    for cid in range(nc):
        sgn = int(m.cut_sign[cid])
        if sgn == 0:
            continue
        r, q = int(m.cell_r[cid]), int(m.cell_q[cid])
        if sgn > 0:  # arc SW -> NE
            c_pinch_bot[cid] = node_ix[(q, r)]
            c_pinch_lat[cid] = node_ix[(q + 1, r + 1)]
        else:  # arc SE -> NW
            c_pinch_bot[cid] = node_ix[(q + 1, r)]
            c_pinch_lat[cid] = node_ix[(q, r + 1)]
    m.c_pinch_bot, m.c_pinch_lat = c_pinch_bot, c_pinch_lat


def _build_chains(m: CutCellMesh) -> None:
    """Boundary chain of cut cells ordered by x (corner to corner)."""
    left = [m.cell_id(r, int(m.qlo[r])) for r in range(m.n_rows - 1, -1, -1)]
    right = [m.cell_id(r, int(m.qhi[r])) for r in range(m.n_rows)]
    chain = left + right
    m.chain = np.asarray(chain, dtype=int)
    pos = {cid: i for i, cid in enumerate(chain)}
    m.chain_pos = pos
    nc = m.n_cells
    m.chain_prev = np.full(nc, -1, dtype=int)
    m.chain_next = np.full(nc, -1, dtype=int)
    for i, cid in enumerate(chain):
        if i > 0:
            m.chain_prev[cid] = chain[i - 1]
        if i < len(chain) - 1:
            m.chain_next[cid] = chain[i + 1]
    # same-side vertical chains: below/above neighbor along the boundary
    m.chain_y_dn = np.full(nc, -1, dtype=int)
    m.chain_y_up = np.full(nc, -1, dtype=int)
    for i, cid in enumerate(left):
        if i > 0:
            m.chain_y_up[cid] = left[i - 1]
        if i < len(left) - 1:
            m.chain_y_dn[cid] = left[i + 1]
    for i, cid in enumerate(right):
        if i > 0:
            m.chain_y_dn[cid] = right[i - 1]
        if i < len(right) - 1:
            m.chain_y_up[cid] = right[i + 1]


def _build_registry(m: CutCellMesh) -> None:
    reg: dict[tuple[int, int], FaceHandle] = {}
    for s in range(len(m.v_row)):
        if m.v_kind[s] != V_INT:
            continue
        r = int(m.v_row[s])
        qx = int(m.qlo[r] + m.v_pos[s])
        reg[(2 * qx, 2 * r + 1)] = FaceHandle("v", vslot=s)
    for s in range(len(m.h_col)):
        if m.h_kind[s] == H_ARC_S:
            continue
        q = int(m.h_col[s])
        ry = int(m.rlo[q] + m.h_pos[s])
        reg[(2 * q + 1, 2 * ry)] = FaceHandle("h", hslot=s)
    for cid in range(m.n_cells):
        sgn = int(m.cut_sign[cid])
        if sgn == 0:
            continue
        r, q = int(m.cell_r[cid]), int(m.cell_q[cid])
        h = FaceHandle("arc", vslot=int(m.arc_v[cid]), hslot=int(m.arc_h[cid]), cell=cid)
        # inherited vertical-face index (the cut-off east/west face) and the
        # cut-off south face index
        qx = q + 1 if sgn > 0 else q
        reg[(2 * qx, 2 * r + 1)] = h
        reg[(2 * q + 1, 2 * r)] = h
    m._face_registry = reg
    m.cell_index2 = {(2 * int(m.cell_q[c]) + 1, 2 * int(m.cell_r[c]) + 1): c for c in range(m.n_cells)}


def classify_cell(mesh: CutCellMesh, cell: int | tuple[int, int]) -> CellKind:
    cid = mesh.cell_id(*cell) if isinstance(cell, tuple) else int(cell)
    return CellKind(int(mesh.cell_kind[cid]))


def validate_faces(faces, xlines, ylines, tol: float = 1e-9) -> list[str]:
    """Check explicit boundary faces against the three mesh requirements.

    ``faces`` is an iterable of (curve, (x_lo, x_hi), (y_lo, y_hi)) records.
    Returns a violation message list (empty when valid).
    """
    out: list[str] = []
    xl = np.asarray(sorted(xlines), dtype=float)
    yl = np.asarray(sorted(ylines), dtype=float)

    def on_lines(v, lines):
        return bool(np.any(np.abs(lines - v) <= tol))

    for n, (curve, (x0, x1), (y0, y1)) in enumerate(faces):
        # smoothness: curvature continuous along the piece
        try:
            ks = [curve.curvature(s) for s in np.linspace(0.0, 1.0, 9)]
            if max(ks) - min(ks) > 1e-9 * (abs(max(ks)) + 1.0):
                out.append(f"face {n}: curvature discontinuity along face")
        except Exception as e:  # pragma: no cover - defensive
            out.append(f"face {n}: curvature evaluation failed ({e})")
        # monotonicity of both coordinates
        if isinstance(curve, CircleArc):
            ys = np.linspace(y0, y1, 65)
            xs_s = np.asarray(curve.x_at_y(ys))
            dx = np.diff(xs_s)
            if np.any(dx > tol) and np.any(dx < -tol):
                out.append(f"face {n}: x-coordinate not monotonic along face")
            xs2 = np.linspace(x0, x1, 65)
            ys_s = np.asarray(curve.y_at_x(xs2))
            dy = np.diff(ys_s)
            if np.any(dy > tol) and np.any(dy < -tol):
                out.append(f"face {n}: y-coordinate not monotonic along face")
            ends = [(float(curve.x_at_y(y0)), y0), (float(curve.x_at_y(y1)), y1)]
        else:
            ends = [curve.p0, curve.p1]
        # two grid lines through each end
        for (ex, ey) in ends:
            if not on_lines(ex, xl):
                out.append(f"face {n}: no vertical grid line at end ({ex:.6g}, {ey:.6g})")
            if not on_lines(ey, yl):
                out.append(f"face {n}: no horizontal grid line at end ({ex:.6g}, {ey:.6g})")
    return out


def validate_mesh(mesh: CutCellMesh) -> MeshReport:
    """Mesh-wide validation of the three requirements plus denominators."""
    rep = MeshReport()
    faces = []
    for cid in range(mesh.n_cells):
        if mesh.cut_sign[cid] == 0:
            continue
        sh = mesh.cell_shape[cid]
        faces.append((sh.arc, (sh.x0, sh.x1), (sh.y0, sh.y1)))
    rep.violations += validate_faces(faces, mesh.xs, mesh.ys, tol=1e-9 * mesh.D)

    if np.any(mesh.v_dyf <= 0.0):
        rep.violations.append("non-positive vertical-face sliding denominator")
    if np.any(mesh.h_dxf <= 0.0):
        rep.violations.append("non-positive horizontal-face sliding denominator")

    area = math.pi * mesh.R**2 / 2.0
    if abs(mesh.total_volume() - area) > 1e-10 * area:
        rep.violations.append("total fluid area deviates from the half-disc area")
    return rep


def mesh_report_csv(mesh: CutCellMesh) -> str:
    buf = io.StringIO()
    buf.write("cell_id,row,col,kind,dx,dy,vol,mean_dx,mean_dy\n")
    for cid in range(mesh.n_cells):
        buf.write(
            f"{cid},{mesh.cell_r[cid]},{mesh.cell_q[cid]},"
            f"{CellKind(int(mesh.cell_kind[cid])).name},"
            f"{mesh.cell_dx[cid]:.17g},{mesh.cell_dy[cid]:.17g},"
            f"{mesh.cell_vol[cid]:.17g},{mesh.cell_wx[cid]:.17g},{mesh.cell_wy[cid]:.17g}\n"
        )
    return buf.getvalue()


# ---- probe/marked-cell metadata ---------------------------------------

def probe_vertical_slots(mesh: CutCellMesh) -> list[int]:
    """v-slots on the line x = -c, bottom to top."""
    out = []
    for r in range(mesh.M, mesh.n_rows):
        k = (mesh.n_u + 0) - int(mesh.qlo[r])  # slot at x index n_u (line -c)
        out.append(mesh.vslot_id(r, k))
        assert abs(float(mesh.v_x[out[-1]]) - (-mesh.c)) < 1e-12 * mesh.D
    return out


def probe_horizontal_slots(mesh: CutCellMesh) -> list[int]:
    """h-slots on the line y = -c, left to right."""
    out = []
    for q in range(mesh.n_u, mesh.n_u + 2 * mesh.M):
        j = mesh.M - int(mesh.rlo[q])  # boundary between rows M-1 and M
        out.append(mesh.hslot_id(q, j))
        assert abs(float(mesh.h_y[out[-1]]) - (-mesh.c)) < 1e-12 * mesh.D
    return out


def marked_cells(mesh: CutCellMesh) -> dict[str, list[int]]:
    """Cells A (along x=-c), B (along y=-c) and irregular cells 1-4."""
    n_u, M, N = mesh.n_u, mesh.M, mesh.N
    a = [mesh.cell_id(r, n_u) for r in range(M, mesh.n_rows)]
    b = [mesh.cell_id(M, q) for q in range(n_u, n_u + 2 * M)]
    c14 = [
        mesh.cell_id(M, n_u - 1),      # 1: upper cut cell at the left 45-deg point
        mesh.cell_id(M - 1, n_u),      # 2: lower cut cell at the left 45-deg point
        mesh.cell_id(M, N - n_u),      # 3: upper cut cell at the right 45-deg point
        mesh.cell_id(M - 1, N - n_u - 1),  # 4: lower cut cell at the right point
    ]
    return {"A": a, "B": b, "irregular": c14}
