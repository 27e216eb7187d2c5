"""Command line interface: classify, solve, sweep and verify.

All subcommands read one JSON config::

    {
      "kernel": {"degenerate": {"psi1": "1", "psi2": "t", "phi1": "1", "phi2": "v"}},
      "numerics": {"quad_order": 64, "tol": 1e-10, "n_starts": 16, "seed": 0},
      "sweep": {"parameter": "$theta", "from": 0.0, "to": 1.0, "steps": 11}
    }

or with ``"general": {"J": ..., "J1": ..., "J3": ..., "alpha": ..., "beta": ...,
"xi1": ..., "xi2": ..., "xi3": ...}`` as the kernel.  Exit codes: 0 success,
2 config error, 3 numeric failure, 4 verification failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .expr import ExpressionError, ParseError, free_variables, parse
from .kernel import (DegenerateKernel, Kernel, KernelError, ModelParams, build_degenerate,
                     build_general, validate_positive)
from .operators import GridFunction, MultistartResult, OperatorError, multistart_solve
from .quadrature import MAX_ORDER, QuadratureError, gauss_legendre
from .reduction import (QuadraticSystem, ReductionError, SpanFunction, build_cubic, classify,
                        compute_coefficients, h_fixed_point_from_L, positive_roots,
                        reconstruct_plane_point)

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERIFY = 0, 2, 3, 4
PLACEHOLDER = "$theta"
MATCH_TOL = 1e-6
GENERAL_SCALARS = ("J", "J1", "J3", "alpha", "beta")
GENERAL_EXPRS = ("xi1", "xi2", "xi3")
DEGENERATE_EXPRS = ("psi1", "psi2", "phi1", "phi2")
CSV_COLUMNS = ("parameter", "case", "predicted_count", "oracle_count",
               "root1", "root2", "root3", "agreement", "transition")

NUMERIC_ERRORS = (KernelError, ExpressionError, ReductionError, OperatorError,
                  QuadratureError, FloatingPointError, OverflowError)


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass(frozen=True)
class Numerics:
    quad_order: int = 64
    tol: float = 1e-10
    max_iter: int = 10000
    n_starts: int = 16
    seed: int = 0
    cluster_eps: float = 1e-4
    damping: float = 1.0


@dataclass(frozen=True)
class Sweep:
    parameter: str
    start: float
    stop: float
    steps: int

    def values(self) -> list[float]:
        return [float(x) for x in np.linspace(self.start, self.stop, self.steps)]


@dataclass(frozen=True)
class RunConfig:
    kind: str  # "general" or "degenerate"
    kernel: dict[str, Any]
    numerics: Numerics = field(default_factory=Numerics)
    sweep: Sweep | None = None

    def resolved(self) -> dict:
        out = {"kernel": {self.kind: dict(self.kernel)}, "numerics": asdict(self.numerics)}
        if self.sweep is not None:
            s = self.sweep
            out["sweep"] = {"parameter": s.parameter, "from": s.start, "to": s.stop,
                            "steps": s.steps}
        return out


# --- config parsing ---------------------------------------------------------

def _obj(value, path: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(path, "expected an object")
    return value


def _no_extra(obj: dict, allowed, path: str) -> None:
    extra = sorted(set(obj) - set(allowed))
    if extra:
        raise ConfigError(f"{path}.{extra[0]}", "unknown field")


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(path, "must be finite")
    return float(value)


def _integer(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"expected an integer, got {value!r}")
    return value


def _text(value, path: str) -> str:
    if not isinstance(value, str) or not value.strip():
        raise ConfigError(path, "expected a non-empty expression string")
    return value


def parse_config(data: Any) -> RunConfig:
    """Validate a decoded JSON document; every failure names its field."""
    root = _obj(data, "config")
    _no_extra(root, ("kernel", "numerics", "sweep"), "config")
    if "kernel" not in root:
        raise ConfigError("kernel", "missing")
    kernel = _obj(root["kernel"], "kernel")
    kinds = [k for k in ("general", "degenerate") if k in kernel]
    _no_extra(kernel, ("general", "degenerate"), "kernel")
    if len(kinds) != 1:
        raise ConfigError("kernel", "exactly one of 'general' or 'degenerate' is required")
    kind = kinds[0]
    section = _obj(kernel[kind], f"kernel.{kind}")
    if kind == "general":
        _no_extra(section, GENERAL_SCALARS + GENERAL_EXPRS, "kernel.general")
        fields: dict[str, Any] = {}
        for name in GENERAL_SCALARS:
            default = 1.0 if name == "beta" else 0.0
            fields[name] = _number(section.get(name, default), f"kernel.general.{name}")
        if fields["beta"] <= 0:
            raise ConfigError("kernel.general.beta", "must be positive")
        for name in GENERAL_EXPRS:
            fields[name] = _text(section.get(name, "0"), f"kernel.general.{name}")
    else:
        _no_extra(section, DEGENERATE_EXPRS, "kernel.degenerate")
        fields = {}
        for name in DEGENERATE_EXPRS:
            if name not in section:
                raise ConfigError(f"kernel.degenerate.{name}", "missing")
            fields[name] = _text(section[name], f"kernel.degenerate.{name}")

    num = _obj(root.get("numerics", {}), "numerics")
    _no_extra(num, Numerics.__dataclass_fields__, "numerics")
    d = Numerics()
    numerics = Numerics(
        quad_order=_integer(num.get("quad_order", d.quad_order), "numerics.quad_order"),
        tol=_number(num.get("tol", d.tol), "numerics.tol"),
        max_iter=_integer(num.get("max_iter", d.max_iter), "numerics.max_iter"),
        n_starts=_integer(num.get("n_starts", d.n_starts), "numerics.n_starts"),
        seed=_integer(num.get("seed", d.seed), "numerics.seed"),
        cluster_eps=_number(num.get("cluster_eps", d.cluster_eps), "numerics.cluster_eps"),
        damping=_number(num.get("damping", d.damping), "numerics.damping"),
    )
    _check_numerics(numerics)

    sweep = None
    if "sweep" in root:
        s = _obj(root["sweep"], "sweep")
        _no_extra(s, ("parameter", "from", "to", "steps"), "sweep")
        for key in ("parameter", "from", "to", "steps"):
            if key not in s:
                raise ConfigError(f"sweep.{key}", "missing")
        param = s["parameter"]
        if not isinstance(param, str):
            raise ConfigError("sweep.parameter", "expected a string")
        sweep = Sweep(param, _number(s["from"], "sweep.from"), _number(s["to"], "sweep.to"),
                      _integer(s["steps"], "sweep.steps"))
        if sweep.steps < 2:
            raise ConfigError("sweep.steps", "must be at least 2")
        _check_sweep_target(kind, fields, sweep)
    else:
        for name, value in fields.items():
            if isinstance(value, str) and PLACEHOLDER in value:
                raise ConfigError(f"kernel.{kind}.{name}",
                                  f"{PLACEHOLDER} is only allowed together with a sweep")
    cfg = RunConfig(kind, fields, numerics, sweep)
    _check_expressions(cfg)
    return cfg


def _check_numerics(n: Numerics) -> None:
    if not 1 <= n.quad_order <= MAX_ORDER:
        raise ConfigError("numerics.quad_order", f"must be in [1, {MAX_ORDER}]")
    if n.tol <= 0:
        raise ConfigError("numerics.tol", "must be positive")
    if n.max_iter < 1:
        raise ConfigError("numerics.max_iter", "must be at least 1")
    if n.n_starts < 1:
        raise ConfigError("numerics.n_starts", "must be at least 1")
    if n.seed < 0:
        raise ConfigError("numerics.seed", "must be non-negative")
    if n.cluster_eps <= 0:
        raise ConfigError("numerics.cluster_eps", "must be positive")
    if not 0 < n.damping <= 1:
        raise ConfigError("numerics.damping", "must be in (0, 1]")


def _scalar_name(path: str) -> str:
    """'J3' and 'kernel.general.J3' both name the coupling J3."""
    prefix = "kernel.general."
    return path[len(prefix):] if path.startswith(prefix) else path


def _check_sweep_target(kind: str, fields: dict, sweep: Sweep) -> None:
    if sweep.parameter == PLACEHOLDER:
        count = sum(v.count(PLACEHOLDER) for v in fields.values() if isinstance(v, str))
        if count != 1:
            raise ConfigError("sweep.parameter",
                              f"{PLACEHOLDER} must occur exactly once in the kernel, found {count}")
        return
    name = _scalar_name(sweep.parameter)
    if kind != "general" or name not in GENERAL_SCALARS:
        raise ConfigError("sweep.parameter", f"unknown parameter path {sweep.parameter!r}")
    if name == "beta" and min(sweep.start, sweep.stop) <= 0:
        raise ConfigError("sweep.from", "beta must stay positive over the sweep")


def _check_expressions(cfg: RunConfig) -> None:
    """Parse every expression once so syntax errors surface as config errors."""
    probe = None if cfg.sweep is None else cfg.sweep.start
    for name, value in cfg.kernel.items():
        if not isinstance(value, str):
            continue
        text = value.replace(PLACEHOLDER, f"({probe!r})") if probe is not None else value
        try:
            _parse_field(cfg.kind, name, text)
        except ParseError as exc:
            raise ConfigError(f"kernel.{cfg.kind}.{name}", str(exc)) from None
        except KernelError as exc:
            raise ConfigError(f"kernel.{cfg.kind}.{name}", str(exc)) from None


def _parse_field(kind: str, name: str, text: str):
    ast = parse(text)
    allowed = {"xi1": {"t", "u", "v"}, "xi2": {"u", "v"}, "xi3": {"t", "u"},
               "psi1": {"t"}, "psi2": {"t"}, "phi1": {"u", "v"}, "phi2": {"u", "v"}}[name]
    extra = free_variables(ast) - allowed
    if extra:
        raise KernelError(f"may only use {sorted(allowed)}, found {sorted(extra)}")
    return ast


def load_config(path: "str | Path", quad_order: int | None = None, seed: int | None = None,
                tol: float | None = None) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc}") from None
    return with_overrides(parse_config(data), quad_order=quad_order, seed=seed, tol=tol)


def with_overrides(cfg: RunConfig, **overrides) -> RunConfig:
    changes = {k: v for k, v in overrides.items() if v is not None}
    if not changes:
        return cfg
    numerics = replace(cfg.numerics, **changes)
    _check_numerics(numerics)
    return replace(cfg, numerics=numerics)


# --- kernel construction ----------------------------------------------------

def build_kernel(cfg: RunConfig, theta: float | None = None) -> Kernel:
    """Kernel for ``cfg``; ``theta`` is the current sweep value, if any."""
    fields = dict(cfg.kernel)
    if theta is not None and cfg.sweep is not None:
        if cfg.sweep.parameter == PLACEHOLDER:
            fields = {k: v.replace(PLACEHOLDER, f"({float(theta)!r})") if isinstance(v, str) else v
                      for k, v in fields.items()}
        else:
            fields[_scalar_name(cfg.sweep.parameter)] = float(theta)
    if cfg.kind == "degenerate":
        return build_degenerate(*(fields[n] for n in DEGENERATE_EXPRS))
    params = ModelParams(J=fields["J"], J1=fields["J1"], J3=fields["J3"],
                         alpha_field=fields["alpha"], beta=fields["beta"])
    return build_general(params, fields["xi1"], fields["xi2"], fields["xi3"])


def _oracle(cfg: RunConfig, kernel: Kernel) -> MultistartResult:
    n = cfg.numerics
    return multistart_solve(kernel, gauss_legendre(n.quad_order), n_starts=n.n_starts,
                            seed=n.seed, tol=n.tol, max_iter=n.max_iter,
                            cluster_eps=n.cluster_eps, damping=n.damping)


def _require_degenerate(cfg: RunConfig, what: str) -> None:
    if cfg.kind != "degenerate":
        raise ConfigError("kernel", f"{what} requires a degenerate kernel")


# --- subcommands ------------------------------------------------------------

def _analysis(kernel: DegenerateKernel, order: int, tol: float):
    qs = compute_coefficients(kernel, gauss_legendre(order))
    cubic = build_cubic(qs)
    report = classify(cubic)
    roots = positive_roots(cubic, tol, report)
    return qs, cubic, report, roots


def run_classify(cfg: RunConfig) -> dict:
    _require_degenerate(cfg, "classify")
    kernel = build_kernel(cfg)
    qs, cubic, report, roots = _analysis(kernel, cfg.numerics.quad_order, cfg.numerics.tol)
    pos = validate_positive(kernel)
    return {
        "config": cfg.resolved(),
        "coefficients": {k: v for k, v in asdict(qs).items()},
        "cubic": asdict(cubic),
        "classification": report.to_dict(),
        "roots": [{"value": r.value, "multiplicity": r.multiplicity} for r in roots],
        "positivity": {"passed": pos.passed, "minimum": pos.minimum,
                       "component": pos.worst.name, "at": list(pos.worst.at)},
    }


def _oracle_dict(m: MultistartResult) -> dict:
    return {
        "n_runs": len(m.runs),
        "n_failed": len(m.failed),
        "solutions": [{
            "values": [float(x) for x in s.solution.values],
            "iterations": s.iterations,
            "residual_sup": s.residual_sup,
            "eigenvalue_lambda": s.eigenvalue_lambda,
            "eigen_defect": s.eigen_defect,
            "method": s.method,
            "seeded": s.seeded,
            "start_index": s.start_index,
            "cluster_size": size,
        } for s, size in zip(m.solutions, m.cluster_sizes)],
    }


def _match(analytic: list[GridFunction], m: MultistartResult) -> list[dict]:
    out = []
    for i, g in enumerate(analytic):
        if not m.solutions:
            out.append({"analytic": i, "oracle": None, "sup_distance": None})
            continue
        dists = [g.distance(s.solution) for s in m.solutions]
        j = int(np.argmin(dists))
        out.append({"analytic": i, "oracle": j, "sup_distance": dists[j]})
    return out


def run_solve(cfg: RunConfig) -> dict:
    kernel = build_kernel(cfg)
    rule = gauss_legendre(cfg.numerics.quad_order)
    out: dict[str, Any] = {"config": cfg.resolved(),
                           "nodes": [float(x) for x in rule.nodes]}
    if cfg.kind == "general":
        m = _oracle(cfg, kernel)
        out.update(analytic=None, oracle=_oracle_dict(m), matching=None, agreement=None)
        return out
    qs, cubic, report, roots = _analysis(kernel, cfg.numerics.quad_order, cfg.numerics.tol)
    analytic, grids = [], []
    for r in roots:
        pt = reconstruct_plane_point(qs, r.value, r.multiplicity)
        f = SpanFunction(kernel, pt.c1, pt.c2)
        g = h_fixed_point_from_L(f)
        grid = GridFunction(rule, g(rule.nodes), g(0.0))
        grids.append(grid)
        analytic.append({"lambda": pt.lam, "c1": pt.c1, "c2": pt.c2,
                         "multiplicity": pt.multiplicity, "plane_residual": pt.residual,
                         "L_fixed_point": f.describe(), "H_fixed_point": g.describe(),
                         "eigenvalue": 1.0 / f(0.0),
                         "values": [float(x) for x in grid.values]})
    m = multistart_solve(kernel, rule, n_starts=cfg.numerics.n_starts, seed=cfg.numerics.seed,
                         tol=cfg.numerics.tol, max_iter=cfg.numerics.max_iter,
                         cluster_eps=cfg.numerics.cluster_eps, damping=cfg.numerics.damping,
                         seeds=grids)
    matching = _match(grids, m)
    agreement = (len(m.solutions) == len(grids)
                 and all(x["sup_distance"] is not None and x["sup_distance"] <= MATCH_TOL
                         for x in matching))
    out.update(classification=report.to_dict(), analytic=analytic, oracle=_oracle_dict(m),
               matching=matching, agreement=agreement)
    return out


@dataclass(frozen=True)
class SweepRow:
    parameter: float
    matched_case: str | None
    predicted_count: int | None
    oracle_count: int
    roots: tuple[float, ...]
    agreement: bool | None
    transition: bool = False


def run_sweep(cfg: RunConfig) -> list[SweepRow]:
    if cfg.sweep is None:
        raise ConfigError("sweep", "missing")
    rows = []
    for value in cfg.sweep.values():
        kernel = build_kernel(cfg, value)
        m = _oracle(cfg, kernel)
        if cfg.kind == "degenerate":
            _, _, report, roots = _analysis(kernel, cfg.numerics.quad_order, cfg.numerics.tol)
            rows.append(SweepRow(value, report.matched_case, report.predicted_count,
                                 len(m.solutions), tuple(r.value for r in roots),
                                 report.predicted_count == len(m.solutions)))
        else:
            rows.append(SweepRow(value, None, None, len(m.solutions), (), None))
    flagged = []
    for i, row in enumerate(rows):
        key = row.predicted_count if row.predicted_count is not None else row.oracle_count
        prev = None if i == 0 else (rows[i - 1].predicted_count
                                    if rows[i - 1].predicted_count is not None
                                    else rows[i - 1].oracle_count)
        flagged.append(replace(row, transition=i > 0 and key != prev))
    return flagged


def _cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def sweep_csv(rows: list[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        roots = list(r.roots) + [None] * (3 - len(r.roots))
        w.writerow([_cell(x) for x in (r.parameter, r.matched_case, r.predicted_count,
                                       r.oracle_count, *roots[:3], r.agreement, r.transition)])
    return buf.getvalue()


def sweep_json(rows: list[SweepRow]) -> list[dict]:
    return [dict(zip(CSV_COLUMNS, (r.parameter, r.matched_case, r.predicted_count,
                                   r.oracle_count, *(list(r.roots) + [None] * 3)[:3],
                                   r.agreement, r.transition))) for r in rows]


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str


def run_verify(cfg: RunConfig,
               coefficient_hook: Callable[[QuadraticSystem], QuadraticSystem] | None = None
               ) -> list[Check]:
    """Invariant audit of one degenerate kernel.

    ``coefficient_hook`` replaces the coefficients used to measure the
    plane-map defects (fault injection for tests).
    """
    _require_degenerate(cfg, "verify")
    n = cfg.numerics
    kernel = build_kernel(cfg)
    rule = gauss_legendre(n.quad_order)
    qs, cubic, report, roots = _analysis(kernel, n.quad_order, n.tol)
    checks = [Check("coefficient positivity", all(c > 0 for c in qs.as_tuple()),
                    "min coefficient %r" % min(qs.as_tuple()))]

    if report.matched_case == "FALLBACK-NUMERIC":
        checks.append(Check("case/count consistency", True,
                            f"{report.matched_case}: {len(roots)} root(s) found numerically"))
    else:
        checks.append(Check("case/count consistency", len(roots) == report.predicted_count,
                            f"{report.matched_case} predicts {report.predicted_count}, "
                            f"found {len(roots)}"))

    audit = coefficient_hook(qs) if coefficient_hook else qs
    points, grids, worst = [], [], 0.0
    ok = True
    for r in roots:
        pt = reconstruct_plane_point(qs, r.value, r.multiplicity)
        points.append(pt)
        d = audit.defect(pt.c1, pt.c2)
        worst = max(worst, d)
        ok = ok and d <= 1e-10 * (1 + abs(pt.c1) + abs(pt.c2))
        g = h_fixed_point_from_L(SpanFunction(kernel, pt.c1, pt.c2))
        grids.append(GridFunction(rule, g(rule.nodes), g(0.0)))
    checks.append(Check("reconstruction defects", ok, f"max defect {worst:.3e}"))

    m = multistart_solve(kernel, rule, n_starts=n.n_starts, seed=n.seed, tol=n.tol,
                         max_iter=n.max_iter, cluster_eps=n.cluster_eps, damping=n.damping,
                         seeds=grids)
    matching = _match(grids, m)
    dist = [x["sup_distance"] for x in matching]
    agree = len(m.solutions) == len(roots) and all(d is not None and d <= MATCH_TOL for d in dist)
    checks.append(Check("oracle agreement", agree,
                        f"{len(roots)} analytic vs {len(m.solutions)} oracle, "
                        f"max distance {max((d for d in dist if d is not None), default=0.0):.3e}"))
    eig = max((s.eigen_defect for s in m.solutions), default=0.0)
    checks.append(Check("eigen defects", bool(m.solutions) and eig <= 10 * n.tol,
                        f"max defect {eig:.3e} (limit {10 * n.tol:.1e})"))
    return checks


# --- entry point ------------------------------------------------------------

def dumps(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _emit(text: str, output: str | None) -> None:
    if output:
        Path(output).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="treegibbs",
                                description="Translation-invariant Gibbs measures on the "
                                            "binary Cayley tree via a degenerate-kernel reduction")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_text in (("classify", "classify the cubic of a degenerate kernel"),
                            ("solve", "analytic and oracle fixed points"),
                            ("sweep", "one-parameter sweep to CSV"),
                            ("verify", "invariant audit")):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True, help="JSON config file")
        sp.add_argument("--output", help="output file (default stdout)")
        sp.add_argument("--format", choices=("json", "csv"),
                        default="csv" if name == "sweep" else "json")
        sp.add_argument("--quad-order", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--tol", type=float)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, quad_order=args.quad_order, seed=args.seed, tol=args.tol)
        if args.format == "csv" and args.command != "sweep":
            raise ConfigError("--format", "csv output is only available for sweep")
        if args.command == "classify":
            _emit(dumps(run_classify(cfg)), args.output)
        elif args.command == "solve":
            _emit(dumps(run_solve(cfg)), args.output)
        elif args.command == "sweep":
            rows = run_sweep(cfg)
            _emit(sweep_csv(rows) if args.format == "csv" else dumps(sweep_json(rows)),
                  args.output)
        else:
            checks = run_verify(cfg)
            lines = [f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}" for c in checks]
            _emit("\n".join(lines) + "\n", args.output)
            if not all(c.passed for c in checks):
                return EXIT_VERIFY
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
