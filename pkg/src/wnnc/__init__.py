"""Oriented normals for unoriented point clouds via winding-number iterations."""
from .geometry import CloudError, DegenerateCloudError, PointCloud, denormalize_normals, normalize_cloud
from .metrics import NormalAccuracyReport, angular_error
from .operators import DENSE, TREECODE, OperatorBackend, apply_A, apply_AT, apply_G, evaluate_field
from .solver import SolverParams, SolveResult, solve

__all__ = [
    "CloudError", "DegenerateCloudError", "PointCloud", "normalize_cloud", "denormalize_normals",
    "NormalAccuracyReport", "angular_error",
    "OperatorBackend", "DENSE", "TREECODE", "apply_A", "apply_AT", "apply_G", "evaluate_field",
    "SolverParams", "SolveResult", "solve",
]
__version__ = "0.1.0"
