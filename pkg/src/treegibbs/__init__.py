"""Translation-invariant Gibbs measures on the binary Cayley tree.

Positive solutions of the nonlinear integral equation f = H f, where
``(L f)(t) = int int K(t, u, v) f(u) f(v) du dv`` and ``H f = L f / (L f)(0)``.
For kernels of the separable form ``psi1(t) phi1 + psi2(t) phi2`` the
problem reduces to a cubic in one variable (:mod:`treegibbs.reduction`);
:mod:`treegibbs.operators` solves the discretized equation directly and
serves as the oracle.
"""
from .expr import evaluate, evaluate_array, parse, to_source
from .kernel import (DegenerateKernel, GeneralKernel, ModelParams, build_degenerate,
                     build_general, validate_positive)
from .operators import (GridFunction, apply_H, apply_L, eigen_check, iterate_H,
                        multistart_solve)
from .quadrature import QuadratureRule, gauss_legendre
from .reduction import (CubicPolynomial, QuadraticSystem, build_cubic, classify,
                        compute_coefficients, fixed_points_of_L, h_fixed_point_from_L,
                        positive_roots, reconstruct_plane_point)

__version__ = "0.1.0"

__all__ = [
    "CubicPolynomial", "DegenerateKernel", "GeneralKernel", "GridFunction", "ModelParams",
    "QuadraticSystem", "QuadratureRule", "apply_H", "apply_L", "build_cubic",
    "build_degenerate", "build_general", "classify", "compute_coefficients", "eigen_check",
    "evaluate", "evaluate_array", "fixed_points_of_L", "gauss_legendre",
    "h_fixed_point_from_L", "iterate_H", "multistart_solve", "parse", "positive_roots",
    "reconstruct_plane_point", "to_source", "validate_positive",
]
