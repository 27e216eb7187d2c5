"""Small arithmetic expression language for kernel component functions.

Expressions are written in the variables ``t``, ``u`` and ``v`` with the
operators ``+ - * / ^``, the functions ``exp log sqrt sin cos abs`` and the
constants ``pi`` and ``e``.  ``^`` binds tightest and is right associative,
then unary minus, then ``* /``, then ``+ -``::

    >>> ast = parse("exp(2*t*u*v)")
    >>> evaluate(ast, {"t": 0.5, "u": 1.0, "v": 1.0})
    2.718281828459045

Parsing produces an immutable tree; evaluation is pure.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

VARIABLES = frozenset({"t", "u", "v"})
CONSTANTS = {"pi": math.pi, "e": math.e}
FUNCTIONS = ("exp", "log", "sqrt", "sin", "cos", "abs")


class ExpressionError(ValueError):
    """Base class for parse and evaluation failures."""

    def __init__(self, message: str, offset: int | None = None):
        self.message = message
        self.offset = offset
        where = f" at offset {offset}" if offset is not None else ""
        super().__init__(f"{message}{where}")


class ParseError(ExpressionError):
    pass


class UnknownIdentifierError(ParseError):
    def __init__(self, name: str, offset: int):
        self.name = name
        super().__init__(f"unknown identifier {name!r}", offset)


class EvaluationError(ExpressionError):
    pass


class DomainError(EvaluationError):
    pass


class MissingBindingError(EvaluationError):
    def __init__(self, name: str, offset: int):
        self.name = name
        super().__init__(f"no binding for variable {name!r}", offset)


# --- tree -------------------------------------------------------------------

@dataclass(frozen=True)
class Literal:
    value: float
    offset: int = 0


@dataclass(frozen=True)
class Variable:
    name: str
    offset: int = 0


@dataclass(frozen=True)
class Constant:
    name: str
    offset: int = 0


@dataclass(frozen=True)
class Neg:
    operand: "Expr"
    offset: int = 0


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"
    offset: int = 0


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"
    offset: int = 0


Expr = Union[Literal, Variable, Constant, Neg, BinOp, Call]


# --- lexer ------------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str  # "num", "name", "op" or "end"
    text: str
    offset: int  # byte offset into the UTF-8 source


def _tokenize(source: str) -> list[_Token]:
    tokens = []
    pos = 0
    byte_pos = 0
    while pos < len(source):
        m = _TOKEN.match(source, pos)
        if m is None:
            raise ParseError(f"unexpected character {source[pos]!r}", byte_pos)
        text = m.group()
        if m.lastgroup != "ws":
            tokens.append(_Token(m.lastgroup, text, byte_pos))
        pos = m.end()
        byte_pos += len(text.encode("utf-8"))
    tokens.append(_Token("end", "", byte_pos))
    return tokens


# --- parser -----------------------------------------------------------------

class _Parser:
    def __init__(self, source: str):
        self.tokens = _tokenize(source)
        self.i = 0

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> _Token:
        if self.tok.text != text or self.tok.kind != "op":
            raise ParseError(f"expected {text!r}, found {self._describe(self.tok)}",
                             self.tok.offset)
        return self.advance()

    @staticmethod
    def _describe(tok: _Token) -> str:
        return "end of input" if tok.kind == "end" else repr(tok.text)

    def parse(self) -> Expr:
        node = self.sum()
        if self.tok.kind != "end":
            raise ParseError(f"unexpected {self._describe(self.tok)}", self.tok.offset)
        return node

    def sum(self) -> Expr:
        node = self.product()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.advance()
            node = BinOp(op.text, node, self.product(), op.offset)
        return node

    def product(self) -> Expr:
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.advance()
            node = BinOp(op.text, node, self.unary(), op.offset)
        return node

    def unary(self) -> Expr:
        if self.tok.kind == "op" and self.tok.text == "-":
            op = self.advance()
            return Neg(self.unary(), op.offset)
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            op = self.advance()
            # right operand at unary level: 2^-1 and 2^3^2 = 2^(3^2)
            return BinOp("^", base, self.unary(), op.offset)
        return base

    def atom(self) -> Expr:
        tok = self.tok
        if tok.kind == "num":
            self.advance()
            value = float(tok.text)
            if not math.isfinite(value):
                raise ParseError(f"numeric literal {tok.text!r} out of range", tok.offset)
            return Literal(value, tok.offset)
        if tok.kind == "name":
            self.advance()
            name = tok.text
            if name in FUNCTIONS:
                self.expect("(")
                arg = self.sum()
                self.expect(")")
                return Call(name, arg, tok.offset)
            if name in VARIABLES:
                return Variable(name, tok.offset)
            if name in CONSTANTS:
                return Constant(name, tok.offset)
            raise UnknownIdentifierError(name, tok.offset)
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            node = self.sum()
            self.expect(")")
            return node
        raise ParseError(f"unexpected {self._describe(tok)}", tok.offset)


def parse(source: str) -> Expr:
    """Parse ``source`` into an expression tree.

    Raises :class:`ParseError` (with a byte offset) on malformed input and
    :class:`UnknownIdentifierError` for names outside the language.
    """
    if not source or not source.strip():
        raise ParseError("empty expression", 0)
    return _Parser(source).parse()


def free_variables(ast: Expr) -> frozenset[str]:
    if isinstance(ast, Variable):
        return frozenset({ast.name})
    if isinstance(ast, Neg):
        return free_variables(ast.operand)
    if isinstance(ast, Call):
        return free_variables(ast.arg)
    if isinstance(ast, BinOp):
        return free_variables(ast.left) | free_variables(ast.right)
    return frozenset()


# --- pretty printer ---------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}
_NEG_PREC = 3
_ATOM_PREC = 5


def _prec(ast: Expr) -> int:
    if isinstance(ast, BinOp):
        return _PREC[ast.op]
    if isinstance(ast, Neg):
        return _NEG_PREC
    return _ATOM_PREC


def to_source(ast: Expr) -> str:
    """Canonical text for ``ast``; ``parse(to_source(a))`` rebuilds ``a`` up to offsets."""
    if isinstance(ast, Literal):
        return repr(ast.value)
    if isinstance(ast, (Variable, Constant)):
        return ast.name
    if isinstance(ast, Call):
        return f"{ast.func}({to_source(ast.arg)})"
    if isinstance(ast, Neg):
        inner = to_source(ast.operand)
        return f"-{inner}" if _prec(ast.operand) >= _NEG_PREC else f"-({inner})"
    p = _PREC[ast.op]
    left, right = to_source(ast.left), to_source(ast.right)
    if ast.op == "^":
        if _prec(ast.left) <= p:
            left = f"({left})"
        if _prec(ast.right) < _NEG_PREC:
            right = f"({right})"
        return f"{left}^{right}"
    if _prec(ast.left) < p:
        left = f"({left})"
    if _prec(ast.right) <= p:
        right = f"({right})"
    return f"{left} {ast.op} {right}"


# --- scalar evaluation ------------------------------------------------------

def _check(value: float, node: Expr, what: str) -> float:
    if not math.isfinite(value):
        raise DomainError(f"{what} produced a non-finite value", node.offset)
    return value


def _power(base: float, exponent: float, node: Expr) -> float:
    if base < 0.0 and not float(exponent).is_integer():
        raise DomainError("negative base raised to a non-integer power", node.offset)
    if base == 0.0 and exponent < 0.0:
        raise DomainError("zero raised to a negative power", node.offset)
    try:
        return _check(math.pow(base, exponent), node, "'^'")
    except OverflowError:
        raise DomainError("'^' overflowed", node.offset) from None


_SCALAR_FUNCS = {
    "exp": math.exp,
    "log": math.log,
    "sqrt": math.sqrt,
    "sin": math.sin,
    "cos": math.cos,
    "abs": abs,
}


def evaluate(ast: Expr, bindings: Mapping[str, float]) -> float:
    """Evaluate ``ast`` in IEEE double precision, operands left to right."""
    if isinstance(ast, Literal):
        return ast.value
    if isinstance(ast, Variable):
        try:
            return float(bindings[ast.name])
        except KeyError:
            raise MissingBindingError(ast.name, ast.offset) from None
    if isinstance(ast, Constant):
        return CONSTANTS[ast.name]
    if isinstance(ast, Neg):
        return -evaluate(ast.operand, bindings)
    if isinstance(ast, Call):
        x = evaluate(ast.arg, bindings)
        if ast.func == "log" and x <= 0.0:
            raise DomainError(f"log of non-positive argument {x!r}", ast.offset)
        if ast.func == "sqrt" and x < 0.0:
            raise DomainError(f"sqrt of negative argument {x!r}", ast.offset)
        try:
            return _check(_SCALAR_FUNCS[ast.func](x), ast, ast.func)
        except OverflowError:
            raise DomainError(f"{ast.func} overflowed", ast.offset) from None
    a = evaluate(ast.left, bindings)
    b = evaluate(ast.right, bindings)
    if ast.op == "+":
        return _check(a + b, ast, "'+'")
    if ast.op == "-":
        return _check(a - b, ast, "'-'")
    if ast.op == "*":
        return _check(a * b, ast, "'*'")
    if ast.op == "/":
        if b == 0.0:
            raise DomainError("division by zero", ast.offset)
        return _check(a / b, ast, "'/'")
    return _power(a, b, ast)


# --- array evaluation -------------------------------------------------------

_ARRAY_FUNCS = {
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "sin": np.sin,
    "cos": np.cos,
    "abs": np.abs,
}


def _check_array(value: np.ndarray, node: Expr, what: str) -> np.ndarray:
    if not np.all(np.isfinite(value)):
        raise DomainError(f"{what} produced a non-finite value", node.offset)
    return value


def evaluate_array(ast: Expr, bindings: Mapping[str, "np.ndarray | float"]) -> np.ndarray:
    """Vectorized counterpart of :func:`evaluate` over broadcastable arrays.

    Raises the same error types as the scalar evaluator if any element is
    outside the domain.
    """
    with np.errstate(all="ignore"):
        return np.asarray(_eval_array(ast, bindings), dtype=float)


def _eval_array(ast: Expr, bindings):
    if isinstance(ast, Literal):
        return np.float64(ast.value)
    if isinstance(ast, Variable):
        try:
            return np.asarray(bindings[ast.name], dtype=float)
        except KeyError:
            raise MissingBindingError(ast.name, ast.offset) from None
    if isinstance(ast, Constant):
        return np.float64(CONSTANTS[ast.name])
    if isinstance(ast, Neg):
        return -_eval_array(ast.operand, bindings)
    if isinstance(ast, Call):
        x = _eval_array(ast.arg, bindings)
        if ast.func == "log" and np.any(x <= 0.0):
            raise DomainError("log of non-positive argument", ast.offset)
        if ast.func == "sqrt" and np.any(x < 0.0):
            raise DomainError("sqrt of negative argument", ast.offset)
        return _check_array(_ARRAY_FUNCS[ast.func](x), ast, ast.func)
    a = _eval_array(ast.left, bindings)
    b = _eval_array(ast.right, bindings)
    if ast.op == "+":
        return _check_array(a + b, ast, "'+'")
    if ast.op == "-":
        return _check_array(a - b, ast, "'-'")
    if ast.op == "*":
        return _check_array(a * b, ast, "'*'")
    if ast.op == "/":
        if np.any(b == 0.0):
            raise DomainError("division by zero", ast.offset)
        return _check_array(a / b, ast, "'/'")
    a, b = np.broadcast_arrays(a, b)
    if np.any((a < 0.0) & (b != np.floor(b))):
        raise DomainError("negative base raised to a non-integer power", ast.offset)
    if np.any((a == 0.0) & (b < 0.0)):
        raise DomainError("zero raised to a negative power", ast.offset)
    return _check_array(np.power(a, b), ast, "'^'")
