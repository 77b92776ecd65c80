"""Cut-Cartesian-cell finite-volume solver for the lid-driven semicircular
cavity, with exact curved-boundary geometry and a benchmark harness."""

from .config import CaseConfig
from .geometry import CircleArc, CutCellShape, GeomConstants, RectCellShape, StraightSegment
from .mesh import CellKind, CutCellMesh, build_semicircle_mesh, validate_mesh
from .pkp import FieldBC, Reconstructor, pkp_product_average
from .solver import march_to_steady

__all__ = [
    "CaseConfig",
    "CellKind",
    "CircleArc",
    "CutCellMesh",
    "CutCellShape",
    "FieldBC",
    "GeomConstants",
    "RectCellShape",
    "Reconstructor",
    "StraightSegment",
    "build_semicircle_mesh",
    "march_to_steady",
    "pkp_product_average",
    "validate_mesh",
]
