"""Signal reconstruction from moments: shift models and piecewise D-finite functions."""

from .convdual import KernelSpec, dual_coefficients, fourier_generalized_moments, \
    generalized_poly_moments
from .dfinite import DifferentialOperator, PiecewiseDFiniteModel, reconstruct
from .errors import MomrecError
from .moments import MomentSequence
from .prony import estimate_order, solve_fourier_shifts, solve_prony, solve_prony_confluent

__version__ = "0.1.0"

__all__ = [
    "DifferentialOperator", "KernelSpec", "MomentSequence", "MomrecError",
    "PiecewiseDFiniteModel", "dual_coefficients", "estimate_order",
    "fourier_generalized_moments", "generalized_poly_moments", "reconstruct",
    "solve_fourier_shifts", "solve_prony", "solve_prony_confluent",
]
