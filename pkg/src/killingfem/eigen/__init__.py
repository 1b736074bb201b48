"""Generalized symmetric eigensolvers: sparse shift-invert Lanczos and a dense oracle."""

from .cholesky import NotPositiveDefiniteError, SparseCholesky
from .dense import dense_solve, symmetric_eigh
from .lanczos import InternalSolverError, SolverConfig, solve_smallest
from .ordering import amd_order
from .spectrum import Spectrum, ZeroEigenspace, relative_gaps, residual_norms, zero_eigenspace

__all__ = [
    "InternalSolverError", "NotPositiveDefiniteError", "SolverConfig", "SparseCholesky", "Spectrum",
    "ZeroEigenspace", "amd_order", "dense_solve", "relative_gaps", "residual_norms", "solve_smallest",
    "symmetric_eigh", "zero_eigenspace",
]
