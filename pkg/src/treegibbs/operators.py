"""Discretized L and H operators and a multistart fixed-point solver.

A grid function lives on the nodes of a Gauss-Legendre rule.  Kernels are
tabulated once per (kernel, rule) as a tensor ``T[i, j, k] = K(t_i, u_j,
v_k)`` whose row ``i = 0`` is the exact ``t = 0`` row and rows ``1..n``
are the quadrature nodes, so

    (L f)(t_i) = sum_jk w_j w_k T[i, j, k] f_j f_k
    (H f)(t_i) = (L f)(t_i) / (L f)(0).

This path never touches the coefficient integrals of the reduction
module and therefore serves as an independent check of it.
"""
from __future__ import annotations

import functools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .kernel import DegenerateKernel, Kernel
from .quadrature import QuadratureRule, gauss_legendre

log = logging.getLogger(__name__)


class OperatorError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Strictly positive values on the nodes of ``rule``.

    ``at_zero`` is the value at t = 0 when it is known (it is exactly 1 for
    every output of :func:`apply_H`), otherwise None.
    """

    rule: QuadratureRule
    values: np.ndarray
    at_zero: float | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.rule.order,):
            raise OperatorError(f"expected {self.rule.order} values, got shape {values.shape}")
        if not np.all(np.isfinite(values)) or not np.all(values > 0):
            raise OperatorError("grid function values must be finite and strictly positive")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def scaled(self, c: float) -> "GridFunction":
        z = None if self.at_zero is None else c * self.at_zero
        return GridFunction(self.rule, c * self.values, z)

    def distance(self, other: "GridFunction") -> float:
        return float(np.max(np.abs(self.values - other.values)))

    @classmethod
    def from_callable(cls, f, rule: QuadratureRule) -> "GridFunction":
        return cls(rule, np.asarray(f(rule.nodes), dtype=float), float(f(0.0)))

    @classmethod
    def constant(cls, c: float, rule: QuadratureRule) -> "GridFunction":
        return cls(rule, np.full(rule.order, float(c)), float(c))


@dataclass(frozen=True, eq=False)
class Discretization:
    kernel: Kernel
    rule: QuadratureRule
    tensor: np.ndarray  # shape (n + 1, n * n), row 0 is t = 0

    def apply_L(self, values: np.ndarray) -> np.ndarray:
        """(L f) at t = 0 followed by the n grid nodes."""
        g = self.rule.weights * values
        return self.tensor @ np.outer(g, g).ravel()

    def apply_H(self, values: np.ndarray) -> np.ndarray:
        lf = self.apply_L(values)
        if not lf[0] > 0:
            raise OperatorError(f"(Lf)(0) = {lf[0]!r} is not positive")
        return lf[1:] / lf[0]


@functools.lru_cache(maxsize=16)
def discretize(kernel: Kernel, rule: QuadratureRule) -> Discretization:
    n = rule.order
    t = np.concatenate([[0.0], rule.nodes])
    x = rule.nodes
    tensor = kernel.tabulate(t[:, None, None], x[None, :, None], x[None, None, :])
    tensor = np.ascontiguousarray(np.broadcast_to(tensor, (n + 1, n, n))).reshape(n + 1, n * n)
    tensor.setflags(write=False)
    return Discretization(kernel, rule, tensor)


def apply_L(kernel: Kernel, f: GridFunction) -> GridFunction:
    lf = discretize(kernel, f.rule).apply_L(f.values)
    return GridFunction(f.rule, lf[1:], float(lf[0]))


def apply_H(kernel: Kernel, f: GridFunction) -> GridFunction:
    return GridFunction(f.rule, discretize(kernel, f.rule).apply_H(f.values), 1.0)


@dataclass(frozen=True)
class EigenCheck:
    lam: float
    defect_sup: float


def eigen_check(kernel: Kernel, f: GridFunction) -> EigenCheck:
    """lam = (Lf)(0) and sup_i |(Lf)(t_i) - lam f(t_i) / f(0)|."""
    if f.at_zero is None:
        raise OperatorError("grid function has no value at t = 0; normalize it with apply_H")
    lf = discretize(kernel, f.rule).apply_L(f.values)
    lam = float(lf[0])
    defect = float(np.max(np.abs(lf[1:] - lam * f.values / f.at_zero)))
    return EigenCheck(lam, defect)


@dataclass(frozen=True)
class SolveResult:
    solution: GridFunction
    iterations: int
    residual_sup: float
    converged: bool
    eigenvalue_lambda: float
    eigen_defect: float
    method: str = "picard"
    start_index: int | None = None
    seeded: bool = False


def _relax(x: np.ndarray, hx: np.ndarray, damping: float) -> np.ndarray:
    return hx if damping == 1.0 else (1.0 - damping) * x + damping * hx


def iterate_H(kernel: Kernel, f0: GridFunction, tol: float = 1e-10, max_iter: int = 10000,
              damping: float = 1.0, method: str = "picard", depth: int = 5,
              polish: int = 0) -> SolveResult:
    """Iterate f <- Hf until sup|Hf - f| <= tol.

    ``method="picard"`` is the plain (optionally damped) iteration.
    ``method="anderson"`` mixes the last ``depth`` iterates; it also
    converges to fixed points that repel the plain iteration.  The first
    update is always a full H step, so every iterate equals 1 at t = 0.
    After convergence up to ``polish`` further steps are taken and the
    iterate with the smallest residual is kept.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not 0.0 < damping <= 1.0:
        raise ValueError("damping must be in (0, 1]")
    if method not in ("picard", "anderson"):
        raise ValueError(f"unknown method {method!r}")
    disc = discretize(kernel, f0.rule)
    x = f0.values
    hx = disc.apply_H(x)
    x = hx
    hx = disc.apply_H(x)
    res = float(np.max(np.abs(hx - x)))
    iterations = 1
    best = (res, x)
    dF: list[np.ndarray] = []
    dG: list[np.ndarray] = []
    prev: tuple[np.ndarray, np.ndarray] | None = None
    extra = 0
    reached = res <= tol
    while iterations < max_iter and (not reached or extra < polish):
        if reached:
            extra += 1
        r = hx - x
        if method == "anderson":
            if prev is not None:
                dF.append(r - prev[0])
                dG.append(hx - prev[1])
                if len(dF) > depth:
                    dF.pop(0)
                    dG.pop(0)
            prev = (r, hx)
            nx = _relax(x, hx, damping)
            if dF:
                F = np.column_stack(dF)
                G = np.column_stack(dG)
                gamma, *_ = np.linalg.lstsq(F, r, rcond=None)
                mixed = nx - (G - (1.0 - damping) * F) @ gamma
                if np.all(mixed > 0) and np.all(np.isfinite(mixed)):
                    nx = mixed
                else:
                    dF.clear()
                    dG.clear()
                    prev = None
        else:
            nx = _relax(x, hx, damping)
        x = nx
        hx = disc.apply_H(x)
        res = float(np.max(np.abs(hx - x)))
        iterations += 1
        if res < best[0]:
            best = (res, x)
        reached = reached or res <= tol
        if not math.isfinite(res):
            break
    if best[0] <= tol:
        res, x = best
    converged = res <= tol
    sol = GridFunction(f0.rule, x, 1.0)
    eig = eigen_check(kernel, sol)
    return SolveResult(sol, iterations, res, converged, eig.lam, eig.defect_sup, method)


@dataclass
class Cluster:
    members: list[SolveResult] = field(default_factory=list)

    @property
    def anchor(self) -> SolveResult:
        return self.members[0]

    @property
    def representative(self) -> SolveResult:
        return min(self.members, key=lambda r: (r.residual_sup, r.start_index))


@dataclass(frozen=True)
class MultistartResult:
    solutions: tuple[SolveResult, ...]
    cluster_sizes: tuple[int, ...]
    runs: tuple[SolveResult, ...]

    @property
    def failed(self) -> tuple[SolveResult, ...]:
        return tuple(r for r in self.runs if not r.converged)

    def __len__(self) -> int:
        return len(self.solutions)


def random_start(rule: QuadratureRule, seed: int, index: int) -> GridFunction:
    """Node values log-uniform in [0.1, 10] from the stream (seed, index)."""
    rng = np.random.default_rng([seed, index])
    return GridFunction(rule, np.exp(rng.uniform(math.log(0.1), math.log(10.0), rule.order)))


def analytic_seeds(kernel: DegenerateKernel, rule: QuadratureRule) -> list[GridFunction]:
    """H-normalized fixed points predicted by the cubic reduction, on the grid."""
    from .reduction import fixed_points_of_L, h_fixed_point_from_L

    out = []
    for entry in fixed_points_of_L(kernel, rule):
        g = h_fixed_point_from_L(entry)
        out.append(GridFunction(rule, g(rule.nodes), g(0.0)))
    return out


def cluster_results(results: list[SolveResult], eps: float) -> list[Cluster]:
    """Greedy clustering in start order; joins the first cluster whose anchor is within eps."""
    clusters: list[Cluster] = []
    for r in results:
        for c in clusters:
            if c.anchor.solution.distance(r.solution) <= eps:
                c.members.append(r)
                break
        else:
            clusters.append(Cluster([r]))
    return clusters


def multistart_solve(kernel: Kernel, rule: QuadratureRule | None = None, n_starts: int = 16,
                     seed: int = 0, tol: float = 1e-10, max_iter: int = 10000,
                     cluster_eps: float = 1e-4, damping: float = 1.0,
                     seeds: list[GridFunction] | None = None, perturbations: int = 2,
                     perturb_scale: float = 1e-3, polish: int = 50,
                     workers: int = 1) -> MultistartResult:
    """Find the distinct fixed points of H reachable from many starts.

    Random starts use the plain iteration.  For degenerate kernels the
    analytic solutions (or ``seeds`` when given) are perturbed
    multiplicatively and iterated with Anderson mixing, which also reaches
    fixed points that repel the plain iteration.  Converged runs are
    clustered by sup-norm distance; non-converged runs are kept in
    ``runs`` only.  Output does not depend on ``workers``.
    """
    if n_starts < 1:
        raise ValueError("n_starts must be at least 1")
    rule = rule or gauss_legendre(64)
    if seeds is None and isinstance(kernel, DegenerateKernel):
        try:
            seeds = analytic_seeds(kernel, rule)
        except ValueError as exc:
            log.warning("no analytic seeds: %s", exc)
            seeds = []
    seeds = seeds or []

    jobs = [(i, random_start(rule, seed, i), "picard", False) for i in range(n_starts)]
    index = n_starts
    for s in seeds:
        for _ in range(perturbations):
            rng = np.random.default_rng([seed, index])
            noise = np.exp(perturb_scale * rng.standard_normal(rule.order))
            jobs.append((index, GridFunction(rule, s.values * noise), "anderson", True))
            index += 1

    def run(job) -> SolveResult:
        i, f0, method, seeded = job
        r = iterate_H(kernel, f0, tol=tol, max_iter=max_iter, damping=damping,
                      method=method, polish=polish)
        return SolveResult(**{**r.__dict__, "start_index": i, "seeded": seeded})

    discretize(kernel, rule)  # build the tensor once before fanning out
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            runs = list(pool.map(run, jobs))
    else:
        runs = [run(j) for j in jobs]

    clusters = cluster_results([r for r in runs if r.converged], cluster_eps)
    clusters.sort(key=lambda c: float(c.representative.solution.values[0]))
    return MultistartResult(tuple(c.representative for c in clusters),
                            tuple(len(c.members) for c in clusters), tuple(runs))
