"""Exact reduction of the rank-two fixed-point problem to a cubic.

For ``K(t,u,v) = psi1(t) phi1(u,v) + psi2(t) phi2(u,v)`` every positive
fixed point of ``L f = f`` has the form ``f = c1 psi1 + c2 psi2`` where
``(c1, c2)`` is a positive fixed point of the plane quadratic map

    c1 = A11 c1^2 + A12 c1 c2 + A22 c2^2
    c2 = B11 c1^2 + B12 c1 c2 + B22 c2^2.

Writing ``lam = c1 / c2`` turns this into the cubic

    P3(lam) = B11 lam^3 + (B12 - A11) lam^2 + (B22 - A12) lam - A22,

whose positive roots are classified by the sign pattern of P3 at its
critical points.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .kernel import DegenerateKernel, KernelError, validate_positive
from .quadrature import QuadratureRule, gauss_legendre, tensor_sum

ZERO_TOL = 1e-9
"""|P3(crit)| <= ZERO_TOL * max|mu_i| counts as a double root."""

CASES = ("T41-i", "T41-ii", "T41-iii", "T41-iv", "T41-v", "T42-i", "T42-ii",
         "FALLBACK-3ROOTS", "FALLBACK-NUMERIC")


class ReductionError(ValueError):
    pass


class InconsistentRootError(ReductionError):
    pass


@dataclass(frozen=True)
class QuadraticSystem:
    A11: float
    A12: float
    A22: float
    B11: float
    B12: float
    B22: float
    quad_order: int = 0

    def as_tuple(self) -> tuple[float, ...]:
        return (self.A11, self.A12, self.A22, self.B11, self.B12, self.B22)

    def apply(self, c1: float, c2: float) -> tuple[float, float]:
        return (self.A11 * c1 * c1 + self.A12 * c1 * c2 + self.A22 * c2 * c2,
                self.B11 * c1 * c1 + self.B12 * c1 * c2 + self.B22 * c2 * c2)

    def defect(self, c1: float, c2: float) -> float:
        p1, p2 = self.apply(c1, c2)
        return max(abs(p1 - c1), abs(p2 - c2))


@dataclass(frozen=True)
class CubicPolynomial:
    """P3(x) = mu0 x^3 + mu1 x^2 + mu2 x - mu3."""

    mu0: float
    mu1: float
    mu2: float
    mu3: float

    def __call__(self, x: float) -> float:
        return ((self.mu0 * x + self.mu1) * x + self.mu2) * x - self.mu3

    def derivative(self, x: float) -> float:
        return (3.0 * self.mu0 * x + 2.0 * self.mu1) * x + self.mu2

    @property
    def scale(self) -> float:
        return max(abs(self.mu0), abs(self.mu1), abs(self.mu2), abs(self.mu3))

    @property
    def D(self) -> float:
        return self.mu1 * self.mu1 - 3.0 * self.mu0 * self.mu2

    def critical_points(self) -> tuple[float, float] | None:
        """Roots of P3', smaller first, or None when D <= 0."""
        D = self.D
        if D <= 0:
            return None
        s = math.sqrt(D)
        # cancellation-free pair: one root from the quadratic formula,
        # the other from the product of roots mu2 / (3 mu0)
        q = -(self.mu1 + math.copysign(s, self.mu1))
        r1 = q / (3.0 * self.mu0)
        r2 = self.mu2 / q if q != 0.0 else -r1
        return (min(r1, r2), max(r1, r2))


@dataclass(frozen=True)
class ClassificationReport:
    D: float
    crit_alpha: float | None
    crit_beta: float | None
    p3_at_alpha: float | None
    p3_at_beta: float | None
    matched_case: str
    predicted_count: int

    def to_dict(self) -> dict:
        return {"D": self.D, "crit_alpha": self.crit_alpha, "crit_beta": self.crit_beta,
                "p3_at_alpha": self.p3_at_alpha, "p3_at_beta": self.p3_at_beta,
                "matched_case": self.matched_case, "predicted_count": self.predicted_count}


@dataclass(frozen=True)
class CubicRoot:
    value: float
    multiplicity: int = 1


@dataclass(frozen=True)
class PlaneFixedPoint:
    lam: float
    c1: float
    c2: float
    residual: float
    multiplicity: int = 1


def compute_coefficients(k: DegenerateKernel, rule: QuadratureRule | None = None,
                         check_positive: bool = True) -> QuadraticSystem:
    """Integrals of the plane quadratic map obtained from f = c1 psi1 + c2 psi2.

    Components must be non-negative on the probe grid and all six
    integrals strictly positive; isolated zeros such as psi2 = t at t = 0
    are accepted (use :func:`validate_positive` for the strict check).

    A-coefficients weight by phi1, B-coefficients by phi2::

        A11 = int phi1(u,v) psi1(u) psi1(v)
        A12 = int phi1(u,v) (psi1(u) psi2(v) + psi2(u) psi1(v))
        A22 = int phi1(u,v) psi2(u) psi2(v)
    """
    rule = rule or gauss_legendre(64)
    if check_positive:
        report = validate_positive(k)
        for c in report.components:
            if c.error or not c.finite or c.minimum < 0:
                raise KernelError(f"component {c.name} is not positive (min {c.minimum!r} "
                                  f"at {c.at})" + (f": {c.error}" if c.error else ""))
    x = rule.nodes
    p1, p2 = k.psi(x)
    U, V = np.meshgrid(x, x, indexing="ij")
    f1, f2 = k.phi(U, V)
    s11 = np.outer(p1, p1)
    s12 = np.outer(p1, p2) + np.outer(p2, p1)
    s22 = np.outer(p2, p2)
    coeffs = [tensor_sum(phi * s, rule) for phi in (f1, f2) for s in (s11, s12, s22)]
    if not all(math.isfinite(c) for c in coeffs):
        raise ReductionError("non-finite coefficient integral")
    if check_positive and not all(c > 0 for c in coeffs):
        raise ReductionError(f"coefficients must be positive, got {coeffs}")
    return QuadraticSystem(*coeffs, quad_order=rule.order)


def build_cubic(qs: QuadraticSystem) -> CubicPolynomial:
    return CubicPolynomial(mu0=qs.B11, mu1=qs.B12 - qs.A11, mu2=qs.B22 - qs.A12, mu3=qs.A22)


def classify(c: CubicPolynomial, zero_tol: float = ZERO_TOL) -> ClassificationReport:
    """Match the sign pattern of P3 at its critical points to a case.

    Near-zero values at a critical point are tested first, so boundary
    instances land in the two-root cases rather than in a neighbouring
    one-root case.
    """
    if not (c.mu0 > 0 and c.mu3 > 0):
        raise ReductionError("classification requires mu0 > 0 and mu3 > 0")
    D = c.D
    crit = c.critical_points()
    if crit is None:
        return ClassificationReport(D, None, None, None, None, "T41-i", 1)
    a, b = crit
    pa, pb = c(a), c(b)
    ztol = zero_tol * c.scale

    def report(case: str, count: int) -> ClassificationReport:
        return ClassificationReport(D, a, b, pa, pb, case, count)

    if b <= 0:
        return report("T41-ii", 1)
    if a <= 0:
        return report("T41-iii", 1)
    a_zero, b_zero = abs(pa) <= ztol, abs(pb) <= ztol
    if a_zero and not b_zero and pb < 0:
        return report("T42-i", 2)
    if b_zero and not a_zero and pa > 0:
        return report("T42-ii", 2)
    if a_zero or b_zero:
        return report("FALLBACK-NUMERIC", 1)
    if pa < 0:
        return report("T41-iv", 1)
    if pb > 0:
        return report("T41-v", 1)
    return report("FALLBACK-3ROOTS", 3)


def _bisect(c: CubicPolynomial, lo: float, hi: float, ftol: float) -> float:
    """Root of c in [lo, hi] given a strict sign change, then Newton polish."""
    flo = c(lo)
    x = None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        fm = c(mid)
        if abs(fm) <= ftol:
            x = mid
            break
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo <= 4 * np.finfo(float).eps * max(abs(lo), abs(hi)):
            break
    if x is None:
        x = 0.5 * (lo + hi)
    for _ in range(3):
        d = c.derivative(x)
        if d == 0.0:
            break
        step = c(x) / d
        nx = x - step
        if not lo <= nx <= hi or abs(c(nx)) >= abs(c(x)):
            break
        x = nx
    return _nearest_float_root(c, x, lo, hi)


def _exact_value(c: CubicPolynomial, x: float) -> Fraction:
    X = Fraction(x)
    return ((Fraction(c.mu0) * X + Fraction(c.mu1)) * X + Fraction(c.mu2)) * X - Fraction(c.mu3)


def _nearest_float_root(c: CubicPolynomial, x: float, lo: float, hi: float,
                        span: int = 8) -> float:
    """Among the floats within ``span`` ulps of x inside [lo, hi], the one with
    the smallest exact |P3|.  Float evaluation near a root is dominated by
    rounding and cannot rank neighbouring floats reliably."""
    cands = [x]
    for direction in (-math.inf, math.inf):
        y = x
        for _ in range(span):
            y = math.nextafter(y, direction)
            if not lo <= y <= hi:
                break
            cands.append(y)
    return min(cands, key=lambda y: (abs(_exact_value(c, y)), y))


def positive_roots(c: CubicPolynomial, tol: float = 1e-10,
                   report: ClassificationReport | None = None) -> list[CubicRoot]:
    """Positive roots of P3 in increasing order.

    The half-line is cut at 0, the positive critical points and a Cauchy
    bound; every piece is monotone so a strict sign change holds exactly
    one simple root.  Critical points where P3 vanishes to within the
    classification tolerance are returned once with multiplicity 2.
    Bisection stops once |P3| <= 1e-3 * tol * max|mu_i| or the bracket
    collapses, then Newton and an exact comparison of neighbouring floats
    pick the float nearest the true root.  |P3(root)| <= tol * max|mu_i|
    therefore holds unless even that float misses it, which happens only
    when |P3'(root)| * ulp(root) exceeds the bound (roots far from 1).
    """
    report = report or classify(c)
    bound = 1.0 + (abs(c.mu1) + abs(c.mu2) + abs(c.mu3)) / c.mu0
    ztol = ZERO_TOL * c.scale
    cuts = [0.0]
    zero_crit = []
    if report.crit_alpha is not None:
        for x in (report.crit_alpha, report.crit_beta):
            if x > 0:
                cuts.append(x)
                if abs(c(x)) <= ztol:
                    zero_crit.append(x)
    cuts.append(bound)
    roots = [CubicRoot(x, 2) for x in zero_crit]
    if len(zero_crit) == 2:
        # D barely positive: both critical points sit on one triple root
        roots = [CubicRoot(0.5 * (zero_crit[0] + zero_crit[1]), 3)]
    for lo, hi in zip(cuts, cuts[1:]):
        if lo in zero_crit or hi in zero_crit:
            continue
        flo, fhi = c(lo), c(hi)
        if flo == 0.0 and lo > 0:
            roots.append(CubicRoot(lo))
        elif (flo < 0) != (fhi < 0) and fhi != 0.0:
            roots.append(CubicRoot(_bisect(c, lo, hi, 1e-3 * tol * c.scale)))
    roots.sort(key=lambda r: r.value)
    return roots


def reconstruct_plane_point(qs: QuadraticSystem, lam: float,
                            multiplicity: int = 1) -> PlaneFixedPoint:
    """(c1, c2) = (lam c2, c2) with c2 = lam / Q(lam), Q = A11 lam^2 + A12 lam + A22.

    One Newton step on the planar system is taken if the defect is above
    tolerance; a defect that survives it, or a ratio c1/c2 drifting away
    from ``lam``, means ``lam`` was not a root.
    """
    if not lam > 0:
        raise InconsistentRootError(f"lambda must be positive, got {lam!r}")
    q = (qs.A11 * lam + qs.A12) * lam + qs.A22
    c2 = lam / q
    c1 = lam * c2

    def limit(a: float, b: float) -> float:
        return 1e-10 * (1.0 + abs(a) + abs(b))

    res = qs.defect(c1, c2)
    if res > limit(c1, c2):
        p1, p2 = qs.apply(c1, c2)
        J = np.array([[2 * qs.A11 * c1 + qs.A12 * c2 - 1.0, qs.A12 * c1 + 2 * qs.A22 * c2],
                      [2 * qs.B11 * c1 + qs.B12 * c2, qs.B12 * c1 + 2 * qs.B22 * c2 - 1.0]])
        try:
            d1, d2 = np.linalg.solve(J, [c1 - p1, c2 - p2])
        except np.linalg.LinAlgError:
            d1 = d2 = 0.0
        c1, c2 = c1 + float(d1), c2 + float(d2)
        res = qs.defect(c1, c2)
        if (res > limit(c1, c2) or c2 <= 0
                or abs(c1 / c2 - lam) > 1e-10 * lam):
            raise InconsistentRootError(
                f"lambda={lam!r} does not give a plane fixed point (defect {res:.3e})")
    return PlaneFixedPoint(lam, c1, c2, res, multiplicity)


@dataclass(frozen=True)
class SpanFunction:
    """f(t) = (c1 psi1(t) + c2 psi2(t)) / divisor for the psi components of ``kernel``."""

    kernel: DegenerateKernel
    c1: float
    c2: float
    divisor: float = 1.0

    def __call__(self, t):
        p1, p2 = self.kernel.psi(t)
        out = (self.c1 * p1 + self.c2 * p2) / self.divisor
        return float(out) if np.ndim(out) == 0 else out

    def describe(self) -> str:
        k = self.kernel.describe()
        text = f"{self.c1!r}*({k['psi1']}) + {self.c2!r}*({k['psi2']})"
        return text if self.divisor == 1.0 else f"({text}) / {self.divisor!r}"


@dataclass(frozen=True)
class LFixedPoint:
    point: PlaneFixedPoint
    function: SpanFunction


def fixed_points_of_L(k: DegenerateKernel, rule: QuadratureRule | None = None,
                      tol: float = 1e-10) -> list[LFixedPoint]:
    """All positive fixed points of L, one per distinct positive cubic root."""
    rule = rule or gauss_legendre(64)
    qs = compute_coefficients(k, rule)
    cubic = build_cubic(qs)
    out = []
    for root in positive_roots(cubic, tol):
        pt = reconstruct_plane_point(qs, root.value, root.multiplicity)
        out.append(LFixedPoint(pt, SpanFunction(k, pt.c1, pt.c2)))
    return out


def h_fixed_point_from_L(entry: "LFixedPoint | SpanFunction") -> SpanFunction:
    """Rescale an L-fixed point so that its value at t = 0 is exactly 1."""
    f = entry.function if isinstance(entry, LFixedPoint) else entry
    f0 = f(0.0)
    if not f0 > 0:
        raise ReductionError(f"fixed point has non-positive value {f0!r} at t=0")
    return SpanFunction(f.kernel, f.c1, f.c2, f.divisor * f0)
