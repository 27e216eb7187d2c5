"""Interaction kernels K(t, u, v) on [0, 1]^3.

Two families are supported:

* :class:`GeneralKernel`, the exponential of the four-interaction
  Hamiltonian terms,
  ``K = exp(J3 b xi1(t,u,v) + J b xi2(u,v) + J1 b (xi3(t,u) + xi3(t,v)) + alpha b (u+v))``;
* :class:`DegenerateKernel`, ``K = psi1(t) phi1(u, v) + psi2(t) phi2(u, v)``.
  In the classical form ``phi1`` depends on ``u`` only and ``phi2`` on ``v``
  only; both may use either variable here.

The first argument ``t`` is always the output variable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .expr import Expr, ExpressionError, evaluate_array, free_variables, parse, to_source


class KernelError(ValueError):
    pass


class RangeError(KernelError):
    """A kernel value overflowed or otherwise left the finite range."""


def _as_expr(e: "Expr | str") -> Expr:
    return parse(e) if isinstance(e, str) else e


def _require_vars(name: str, ast: Expr, allowed: set[str]) -> None:
    extra = free_variables(ast) - allowed
    if extra:
        raise KernelError(f"{name} may only use {sorted(allowed)}, found {sorted(extra)}")


@dataclass(frozen=True)
class ModelParams:
    J: float = 0.0
    J1: float = 0.0
    J3: float = 0.0
    alpha_field: float = 0.0
    beta: float = 1.0

    def __post_init__(self):
        for name in ("J", "J1", "J3", "alpha_field", "beta"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise KernelError(f"{name} must be a number, got {value!r}")
            if not math.isfinite(value):
                raise KernelError(f"{name} must be finite, got {value!r}")
        if self.beta <= 0:
            raise KernelError(f"beta must be positive, got {self.beta!r}")


@dataclass(frozen=True)
class GeneralKernel:
    params: ModelParams
    xi1: Expr
    xi2: Expr
    xi3: Expr

    def exponent(self, t, u, v) -> np.ndarray:
        p = self.params
        b = p.beta
        try:
            x1 = evaluate_array(self.xi1, {"t": t, "u": u, "v": v})
            x2 = evaluate_array(self.xi2, {"u": u, "v": v})
            x3 = (evaluate_array(self.xi3, {"t": t, "u": u})
                  + evaluate_array(self.xi3, {"t": t, "u": v}))
        except ExpressionError as exc:
            raise RangeError(f"kernel component failed to evaluate: {exc}") from exc
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        return p.J3 * b * x1 + p.J * b * x2 + p.J1 * b * x3 + p.alpha_field * b * (u + v)

    def tabulate(self, t, u, v) -> np.ndarray:
        """K on broadcast arrays; raises :class:`RangeError` on any non-finite value."""
        with np.errstate(over="ignore", invalid="ignore"):
            values = np.exp(self.exponent(t, u, v))
        return _finite_or_raise(values, t, u, v)

    def __call__(self, t: float, u: float, v: float) -> float:
        return float(self.tabulate(t, u, v))

    def describe(self) -> dict:
        p = self.params
        return {"J": p.J, "J1": p.J1, "J3": p.J3, "alpha": p.alpha_field, "beta": p.beta,
                "xi1": to_source(self.xi1), "xi2": to_source(self.xi2),
                "xi3": to_source(self.xi3)}


@dataclass(frozen=True)
class DegenerateKernel:
    psi1: Expr
    psi2: Expr
    phi1: Expr
    phi2: Expr

    def components(self) -> dict[str, Expr]:
        return {"psi1": self.psi1, "psi2": self.psi2, "phi1": self.phi1, "phi2": self.phi2}

    @property
    def classical(self) -> bool:
        """True when phi1 depends on u alone and phi2 on v alone."""
        return free_variables(self.phi1) <= {"u"} and free_variables(self.phi2) <= {"v"}

    def psi(self, t) -> tuple[np.ndarray, np.ndarray]:
        t = np.asarray(t, dtype=float)
        return (np.broadcast_to(evaluate_array(self.psi1, {"t": t}), t.shape),
                np.broadcast_to(evaluate_array(self.psi2, {"t": t}), t.shape))

    def phi(self, u, v) -> tuple[np.ndarray, np.ndarray]:
        shape = np.broadcast_shapes(np.shape(u), np.shape(v))
        b = {"u": u, "v": v}
        return (np.broadcast_to(evaluate_array(self.phi1, b), shape),
                np.broadcast_to(evaluate_array(self.phi2, b), shape))

    def tabulate(self, t, u, v) -> np.ndarray:
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                values = (evaluate_array(self.psi1, {"t": t})
                          * evaluate_array(self.phi1, {"u": u, "v": v})
                          + evaluate_array(self.psi2, {"t": t})
                          * evaluate_array(self.phi2, {"u": u, "v": v}))
        except ExpressionError as exc:
            raise RangeError(f"kernel component failed to evaluate: {exc}") from exc
        return _finite_or_raise(values, t, u, v)

    def __call__(self, t: float, u: float, v: float) -> float:
        return float(self.tabulate(t, u, v))

    def describe(self) -> dict:
        return {name: to_source(e) for name, e in self.components().items()}


Kernel = Union[GeneralKernel, DegenerateKernel]


def _finite_or_raise(values, t, u, v) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    bad = ~np.isfinite(values)
    if np.any(bad):
        idx = tuple(np.argwhere(bad)[0]) if values.ndim else ()
        point = tuple(float(np.broadcast_to(a, values.shape)[idx]) for a in (t, u, v))
        raise RangeError(f"kernel value is not finite at (t, u, v) = {point}")
    return values


def build_general(params: ModelParams, xi1: "Expr | str", xi2: "Expr | str",
                  xi3: "Expr | str", probe_count: int = 5) -> GeneralKernel:
    xi1, xi2, xi3 = _as_expr(xi1), _as_expr(xi2), _as_expr(xi3)
    _require_vars("xi1", xi1, {"t", "u", "v"})
    _require_vars("xi2", xi2, {"u", "v"})
    _require_vars("xi3", xi3, {"t", "u"})
    k = GeneralKernel(params, xi1, xi2, xi3)
    g = np.linspace(0.0, 1.0, probe_count)
    k.tabulate(g[:, None, None], g[None, :, None], g[None, None, :])
    return k


def build_degenerate(psi1: "Expr | str", psi2: "Expr | str", phi1: "Expr | str",
                     phi2: "Expr | str") -> DegenerateKernel:
    k = DegenerateKernel(_as_expr(psi1), _as_expr(psi2), _as_expr(phi1), _as_expr(phi2))
    _require_vars("psi1", k.psi1, {"t"})
    _require_vars("psi2", k.psi2, {"t"})
    _require_vars("phi1", k.phi1, {"u", "v"})
    _require_vars("phi2", k.phi2, {"u", "v"})
    return k


def eval_general(k: GeneralKernel, t: float, u: float, v: float) -> float:
    return k(t, u, v)


def eval_degenerate(k: DegenerateKernel, t: float, u: float, v: float) -> float:
    return k(t, u, v)


@dataclass(frozen=True)
class ComponentCheck:
    name: str
    minimum: float
    at: tuple[float, ...]
    finite: bool
    error: str | None = None

    @property
    def passed(self) -> bool:
        return self.error is None and self.finite and self.minimum > 0.0


@dataclass(frozen=True)
class PositivityReport:
    probe_count: int
    components: tuple[ComponentCheck, ...] = field(default_factory=tuple)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.components)

    @property
    def minimum(self) -> float:
        return min(c.minimum for c in self.components)

    @property
    def worst(self) -> ComponentCheck:
        failing = [c for c in self.components if not c.passed]
        return failing[0] if failing else min(self.components, key=lambda c: c.minimum)


def validate_positive(k: DegenerateKernel, probe_count: int = 65) -> PositivityReport:
    """Probe each component on a uniform grid of [0, 1] (or [0, 1]^2 for phi).

    The grid check is a heuristic for strict positivity on the whole
    interval; it cannot see a dip between probes.
    """
    if probe_count < 2:
        raise ValueError("probe_count must be at least 2")
    g = np.linspace(0.0, 1.0, probe_count)
    U, V = np.meshgrid(g, g, indexing="ij")
    checks = []
    for name, ast in k.components().items():
        if name.startswith("psi"):
            points: tuple[np.ndarray, ...] = (g,)
            bindings = {"t": g}
        else:
            points = (U, V)
            bindings = {"u": U, "v": V}
        try:
            values = np.broadcast_to(evaluate_array(ast, bindings), points[0].shape)
        except ExpressionError as exc:
            checks.append(ComponentCheck(name, -math.inf, (), False, str(exc)))
            continue
        idx = np.unravel_index(np.argmin(values), values.shape)
        at = tuple(float(p[idx]) for p in points)
        checks.append(ComponentCheck(name, float(values[idx]), at,
                                     bool(np.all(np.isfinite(values)))))
    return PositivityReport(probe_count, tuple(checks))
