"""Landau-de Gennes line-defect solver and post-processing on planar domains."""
from . import checks, defect, field, minimizer, psi, tensor_algebra
from .defect import DefectReport, analyze_defect, locate_defect, scaling_fit
from .errors import (CircleOutside, DegenerateFit, DegenerateTop, EvenWinding, InvalidInput,
                     LdgError, MultipleDefects, NoDefect, NonFinite, PerpendicularPair,
                     SnapshotMismatch, SolverDiverged, StalledStep, TooCoarse)
from .field import (BoundaryData, DomainMask, GridSpec, TensorField, apply_boundary,
                    initial_field, make_disk_domain)
from .minimizer import SolveConfig, SolveResult, continuation_sweep, solve
from .psi import PsiReport, analyze_psi, recover_psi, solve_neumann_poisson

__version__ = "0.1.0"

__all__ = [
    "checks", "defect", "field", "minimizer", "psi", "tensor_algebra",
    "DefectReport", "analyze_defect", "locate_defect", "scaling_fit",
    "CircleOutside", "DegenerateFit", "DegenerateTop", "EvenWinding", "InvalidInput", "LdgError",
    "MultipleDefects", "NoDefect", "NonFinite", "PerpendicularPair", "SnapshotMismatch",
    "SolverDiverged", "StalledStep", "TooCoarse",
    "BoundaryData", "DomainMask", "GridSpec", "TensorField", "apply_boundary", "initial_field",
    "make_disk_domain",
    "SolveConfig", "SolveResult", "continuation_sweep", "solve",
    "PsiReport", "analyze_psi", "recover_psi", "solve_neumann_poisson",
]
