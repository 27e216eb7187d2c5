"""Reference kernels covering every classification case.

Kernels of the classical separable form ``psi1(t) phi1(u) + psi2(t)
phi2(v)`` always reduce to a cubic with exactly one positive root: both
plane equations share the factor ``int f``.  To reach the other cases the
catalog uses bivariate ``phi`` built from three fixed positive shapes::

    psi1 = exp(-6 t)           psi2 = exp(6 t - 6)
    phi  = p exp(-6 (u+v)) + q exp(6 (u+v) - 12) + r exp(6 v - 6 u - 6)

The map (p, q, r) -> (A11, A12, A22) is linear, so any reachable set of
target coefficients is hit by solving a 3x3 system; non-negative weights
keep every component positive.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernel import DegenerateKernel, build_degenerate
from .quadrature import QuadratureRule, gauss_legendre
from .reduction import compute_coefficients

PSI1 = "exp(-6*t)"
PSI2 = "exp(6*t - 6)"
PHI_SHAPES = ("exp(-6*(u + v))", "exp(6*(u + v) - 12)", "exp(6*v - 6*u - 6)")


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    expected_case: str
    kernel: DegenerateKernel
    components: tuple[str, str, str, str]


def _moment_matrix(rule: QuadratureRule) -> np.ndarray:
    cols = []
    for shape in PHI_SHAPES:
        qs = compute_coefficients(build_degenerate(PSI1, PSI2, shape, shape), rule)
        cols.append([qs.A11, qs.A12, qs.A22])
    return np.array(cols).T


def phi_expression(weights, placeholder: int | None = None) -> str:
    """Weighted sum of the phi shapes; slot ``placeholder`` gets ``$theta``."""
    terms = []
    for i, (w, shape) in enumerate(zip(weights, PHI_SHAPES)):
        coef = "$theta" if i == placeholder else repr(float(w))
        terms.append(f"{coef}*{shape}")
    return " + ".join(terms)


def steer_weights(A, B, rule: QuadratureRule | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Shape weights for phi1 and phi2 hitting coefficient targets A and B."""
    M = _moment_matrix(rule or gauss_legendre(64))
    p = np.linalg.solve(M, np.asarray(A, dtype=float))
    q = np.linalg.solve(M, np.asarray(B, dtype=float))
    if np.any(p < 0) or np.any(q < 0):
        raise ValueError(f"targets not reachable with non-negative weights: {p}, {q}")
    return p, q


def steer(A, B, rule: QuadratureRule | None = None) -> tuple[str, str, str, str]:
    p, q = steer_weights(A, B, rule)
    return (PSI1, PSI2, phi_expression(p), phi_expression(q))


def targets_for_cubic(mu, A11: float, A12: float, s: float = 1.0):
    """Coefficients whose cubic is P3(s x) for P3 given by ``mu``.

    A11 and A12 are free; the remaining four follow from
    mu0 = B11, mu1 = B12 - A11, mu2 = B22 - A12, mu3 = A22.
    """
    m0, m1, m2, m3 = mu[0] * s ** 3, mu[1] * s ** 2, mu[2] * s, mu[3]
    return (A11, A12, m3), (m0, m1 + A11, m2 + A12)


# name, case, cubic (mu0, mu1, mu2, mu3), free A11, free A12, root scale s
_STEERED = (
    ("monotone", "T41-i", (1.0, 0.0, 3.0, 1.0), 2.5, 1.25, 1.5),
    ("crit-negative", "T41-ii", (1.0, 3.0, 1.0, 1.0), 1.0, 2.0, 1.5),
    ("hump-below-axis", "T41-iv", (1.0, -4.0, 4.0, 3.0), 12.5, 4.0, 1.5),
    ("dip-above-axis", "T41-v", (1.0, -4.2, 5.3, 0.9), 6.25, 1.6, 1.0),
    # (x - 1/2)^2 (x - 2)
    ("double-at-max", "T42-i", (1.0, -3.0, 2.25, 0.5), 8.0, 2.0, 1.5),
    # (x - 1/2) (x - 2)^2
    ("double-at-min", "T42-ii", (1.0, -4.5, 6.0, 2.0), 12.5, 2.5, 1.5),
    # (x - 1/2) (x - 3/2) (x - 3)
    ("three-roots", "FALLBACK-3ROOTS", (1.0, -5.0, 6.75, 2.25), 16.0, 4.0, 1.5),
)


def catalog(rule: QuadratureRule | None = None) -> list[CatalogEntry]:
    """Classical kernels plus one steered kernel per reachable case."""
    entries = []
    for name, case, comps in (("constant", "T41-iii", ("1", "1", "1", "1")),
                              ("classical-affine", "T41-iii", ("1", "t", "1", "v")),
                              ("classical-exp", "T41-ii", ("exp(t)", "1 + t^2", "exp(-u)", "1 + v"))):
        entries.append(CatalogEntry(name, case, build_degenerate(*comps), comps))
    for name, case, mu, a11, a12, s in _STEERED:
        comps = steer(*targets_for_cubic(mu, a11, a12, s), rule)
        entries.append(CatalogEntry(name, case, build_degenerate(*comps), comps))
    return entries


def boundary_family(rule: QuadratureRule | None = None) -> tuple[dict, float]:
    """Degenerate kernel config whose phi2 carries ``$theta``, and the boundary value.

    At theta = theta_star the cubic has a double root at its local minimum
    (case T42-ii).  Below it there are three positive roots, above it one.
    """
    mu, a11, a12, s = next((e[2], e[3], e[4], e[5]) for e in _STEERED if e[1] == "T42-ii")
    p, q = steer_weights(*targets_for_cubic(mu, a11, a12, s), rule)
    config = {"degenerate": {"psi1": PSI1, "psi2": PSI2, "phi1": phi_expression(p),
                             "phi2": phi_expression(q, placeholder=0)}}
    return config, float(q[0])
