import math

import numpy as np
import pytest

from cutcavity.geometry import CircleArc, StraightSegment
from cutcavity.mesh import (
    CellKind,
    MeshBuildError,
    build_semicircle_mesh,
    classify_cell,
    marked_cells,
    mesh_report_csv,
    probe_horizontal_slots,
    probe_vertical_slots,
    validate_faces,
    validate_mesh,
)


def test_build_rejects_bad_n():
    with pytest.raises(MeshBuildError):
        build_semicircle_mesh(1.0, 21)
    with pytest.raises(MeshBuildError):
        build_semicircle_mesh(1.0, 6)


def test_dividing_line_is_grid_line(mesh20):
    c = math.cos(math.pi / 4.0) / 2.0
    assert np.any(np.abs(mesh20.ys - (-c)) < 1e-15)
    assert np.any(np.abs(mesh20.xs - (-c)) < 1e-15)
    assert np.any(np.abs(mesh20.xs - c) < 1e-15)
    assert mesh20.dividing_y == pytest.approx(-c, rel=1e-15)


@pytest.mark.parametrize("n", [8, 20, 40, 60, 80])
def test_total_area_is_half_disc(n):
    mesh = build_semicircle_mesh(1.0, n)
    assert mesh.total_volume() == pytest.approx(math.pi / 8.0, rel=1e-10)


def test_lid_and_centerline_counts(mesh20):
    # N cells along the lid, N/2 along the vertical centerline.
    top = mesh20.n_rows - 1
    assert mesh20.qhi[top] - mesh20.qlo[top] + 1 == 20
    mid = np.where(np.abs(mesh20.xs) < 1e-15)[0][0]
    crossed = [r for r in range(mesh20.n_rows) if mesh20.qlo[r] <= mid <= mesh20.qhi[r] + 0]
    assert len(crossed) == 10


def test_twin_pair_at_bottom(mesh20):
    kinds = [classify_cell(mesh20, (0, q)) for q in range(mesh20.qlo[0], mesh20.qhi[0] + 1)]
    assert kinds == [CellKind.TWIN, CellKind.TWIN]


def test_twin_height_scaling():
    mesh = build_semicircle_mesh(1.0, 40)
    twin = mesh.cell_id(0, mesh.qhi[0])
    dx = mesh.cell_dx[twin]
    assert mesh.cell_dy[twin] < 4.0 * dx * dx / 1.0


def test_classification_examples(mesh20):
    top = mesh20.n_rows - 1
    # interior rectangular cell
    assert classify_cell(mesh20, (top, mesh20.n_cols // 2)) == CellKind.RECTANGULAR
    # lid-corner cut cells lack y-neighbors on both sides
    assert classify_cell(mesh20, (top, 0)) == CellKind.SOLITARY
    assert classify_cell(mesh20, (top, mesh20.n_cols - 1)) == CellKind.SOLITARY
    # generic boundary cut cell
    assert classify_cell(mesh20, (2, mesh20.qlo[2])) == CellKind.CUT_BOUNDARY


@pytest.mark.parametrize("n", [8, 12, 20, 40])
def test_special_cell_counts_constant(n):
    mesh = build_semicircle_mesh(1.0, n)
    kinds = np.asarray(mesh.cell_kind)
    assert np.sum(kinds == CellKind.TWIN) == 2
    assert np.sum(kinds == CellKind.SOLITARY) == 2
    # every cut cell has exactly 3 faces, i.e. one arc slot pair
    ncut = np.sum(mesh.cut_sign != 0)
    assert ncut == 2 * mesh.n_rows == mesh.n_cols


def test_face_adjacency_symmetry(mesh20):
    m = mesh20
    for cid in range(m.n_cells):
        for slot, cells in ((m.c_vw[cid], (m.v_cl, m.v_cr)), (m.c_ve[cid], (m.v_cl, m.v_cr))):
            assert cid in (cells[0][slot], cells[1][slot])
        for slot, cells in ((m.c_hs[cid], (m.h_cs, m.h_cn)), (m.c_hn[cid], (m.h_cs, m.h_cn))):
            assert cid in (cells[0][slot], cells[1][slot])


def test_index_inheritance(mesh20):
    m = mesh20
    for cid in range(m.n_cells):
        if m.cut_sign[cid] == 0:
            continue
        r, q = int(m.cell_r[cid]), int(m.cell_q[cid])
        qx = q + 1 if m.cut_sign[cid] > 0 else q
        f1 = m.face_by_index2((2 * qx, 2 * r + 1))
        f2 = m.face_by_index2((2 * q + 1, 2 * r))
        assert f1 is f2
        assert f1.kind == "arc" and f1.cell == cid


def test_validate_mesh_clean(mesh20):
    rep = validate_mesh(mesh20)
    assert rep.ok, rep.text()
    assert "OK" in rep.text()


def test_validate_faces_flags_nonmonotone():
    # circular face crossing the circle bottom: y(x) not monotone
    r = 0.5
    arc = CircleArc.__new__(CircleArc)
    object.__setattr__(arc, "cx", 0.0)
    object.__setattr__(arc, "cy", 0.0)
    object.__setattr__(arc, "radius", r)
    object.__setattr__(arc, "p0", (-0.2, -math.sqrt(r * r - 0.04)))
    object.__setattr__(arc, "p1", (0.2, -math.sqrt(r * r - 0.04)))
    faces = [(arc, (-0.2, 0.2), (-0.5, -math.sqrt(r * r - 0.04)))]
    out = validate_faces(faces, [-0.2, 0.2], [-0.5, -math.sqrt(r * r - 0.04)])
    assert any("not monotonic" in v for v in out)


def test_validate_faces_flags_missing_grid_line():
    seg = StraightSegment((0.0, 0.0), (0.1, 0.0))
    out = validate_faces([(seg, (0.0, 0.1), (0.0, 0.0))], [0.0], [0.0])
    assert any("no vertical grid line" in v for v in out)


def test_positive_sliding_denominators(mesh20):
    assert np.all(mesh20.v_dyf > 0)
    assert np.all(mesh20.h_dxf > 0)


def test_probe_lines(mesh20):
    vs = probe_vertical_slots(mesh20)
    assert len(vs) == mesh20.n_u
    hs = probe_horizontal_slots(mesh20)
    assert len(hs) == 2 * mesh20.M


def test_marked_cells(mesh20):
    mk = marked_cells(mesh20)
    assert len(mk["A"]) == mesh20.n_u
    assert len(mk["B"]) == 2 * mesh20.M
    assert len(mk["irregular"]) == 4
    for cid in mk["irregular"]:
        assert mesh20.cut_sign[cid] != 0


def test_report_csv(mesh20):
    csv = mesh_report_csv(mesh20)
    lines = csv.strip().split("\n")
    assert lines[0].startswith("cell_id,")
    assert len(lines) == mesh20.n_cells + 1


def test_column_row_consistency(mesh20):
    # each column's bottom cell is the cut cell ending its row
    m = mesh20
    for q in range(m.n_cols):
        r = int(m.rlo[q])
        cid = m.cell_id(r, q)
        assert m.cut_sign[cid] != 0
        assert q in (m.qlo[r], m.qhi[r])


def test_node_programs(mesh20):
    m = mesh20
    kinds = np.asarray(m.node_kind)
    assert np.all(kinds >= 0)
    # interior nodes have both flanking faces
    inner = kinds == 0
    assert np.all(m.n_hw[inner] >= 0) and np.all(m.n_he[inner] >= 0)
    # one pole node at the circle bottom
    poles = np.where(kinds == 2)[0]
    assert len(poles) == 1
    assert m.node_y[poles[0]] == pytest.approx(-0.5)
