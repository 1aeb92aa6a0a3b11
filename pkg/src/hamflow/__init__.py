"""Spectral Galerkin tools for time-periodic Hamiltonian systems ``J z_t - N z_xx = grad H``."""

from .errors import HamflowError
from .hamiltonians import LinearForcedModel, PinchedModel, SaturatingModel, audit_conditions, grad_eval, residual
from .homotopy import ContinuationSchedule, ContinuationTrace, Mode, apriori_monitor, brouwer_degree, run_homotopy
from .index import MatrixField, gap_radius, nullity, relative_index, spectral_flow
from .reduction import build_window, outer_fixed_point, reduced_map, solve_reduced
from .spectral import (
    Boundary,
    DomainSpec,
    ModeSet,
    SpectralField,
    SpectralTransform,
    assemble_truncated_L,
    enumerate_modes,
    mode_eigenvalues,
    solve_linear,
)

__version__ = "0.1.0"

__all__ = [
    "HamflowError", "LinearForcedModel", "PinchedModel", "SaturatingModel", "audit_conditions", "grad_eval",
    "residual", "ContinuationSchedule", "ContinuationTrace", "Mode", "apriori_monitor", "brouwer_degree",
    "run_homotopy", "MatrixField", "gap_radius", "nullity", "relative_index", "spectral_flow", "build_window",
    "outer_fixed_point", "reduced_map", "solve_reduced", "Boundary", "DomainSpec", "ModeSet", "SpectralField",
    "SpectralTransform", "assemble_truncated_L", "enumerate_modes", "mode_eigenvalues", "solve_linear",
]
