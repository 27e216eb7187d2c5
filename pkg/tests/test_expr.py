import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from treegibbs.expr import (BinOp, Call, Constant, DomainError, Literal, MissingBindingError,
                            Neg, ParseError, UnknownIdentifierError, Variable, evaluate,
                            evaluate_array, free_variables, parse, to_source)


def strip(ast):
    """Same tree with all offsets zeroed, for structural comparison."""
    if isinstance(ast, Literal):
        return Literal(ast.value)
    if isinstance(ast, Variable):
        return Variable(ast.name)
    if isinstance(ast, Constant):
        return Constant(ast.name)
    if isinstance(ast, Neg):
        return Neg(strip(ast.operand))
    if isinstance(ast, Call):
        return Call(ast.func, strip(ast.arg))
    return BinOp(ast.op, strip(ast.left), strip(ast.right))


class TestParse:
    def test_single_variable(self):
        assert strip(parse("t")) == Variable("t")

    def test_exp_product(self):
        expected = Call("exp", BinOp("*", BinOp("*", BinOp("*", Literal(2.0), Variable("t")),
                                                 Variable("u")), Variable("v")))
        assert strip(parse("exp(2*t*u*v)")) == expected

    def test_syntax_error_offset(self):
        with pytest.raises(ParseError) as info:
            parse("1 + + 2")
        assert info.value.offset == 4

    def test_unknown_identifier(self):
        with pytest.raises(UnknownIdentifierError) as info:
            parse("t + x")
        assert info.value.name == "x"
        assert info.value.offset == 4

    @pytest.mark.parametrize("src", ["", "   ", "(", "t +", "exp t", "2 3", "exp()", "1..2",
                                     "t $ u", "(t", "t)", "log(t, u)"])
    def test_malformed(self, src):
        with pytest.raises(ParseError):
            parse(src)

    def test_offsets_are_bytes(self):
        with pytest.raises(ParseError) as info:
            parse("t + é")  # two-byte character
        assert info.value.offset == 4
        with pytest.raises(ParseError) as info:
            parse("é")
        assert info.value.offset == 0

    def test_function_name_is_not_a_variable(self):
        with pytest.raises(ParseError):
            parse("exp + 1")

    @pytest.mark.parametrize("src, value", [
        ("2^3^2", 512.0),
        ("-2^2", -4.0),
        ("2^-1", 0.5),
        ("1 - 2 - 3", -4.0),
        ("8 / 4 / 2", 1.0),
        ("2 + 3 * 4", 14.0),
        ("(2 + 3) * 4", 20.0),
        ("-(1 + 2)", -3.0),
        ("--3", 3.0),
        ("2 * -3", -6.0),
        ("1.5e2 + .5", 150.5),
        ("pi", math.pi),
        ("e", math.e),
        ("abs(-2)", 2.0),
    ])
    def test_precedence(self, src, value):
        assert evaluate(parse(src), {}) == value


class TestEvaluate:
    def test_dyadic_sum(self):
        assert evaluate(parse("t+u"), {"t": 0.25, "u": 0.5}) == 0.75

    def test_exp_zero(self):
        assert evaluate(parse("exp(0)"), {}) == 1.0

    def test_log_zero(self):
        with pytest.raises(DomainError) as info:
            evaluate(parse("1 + log(t)"), {"t": 0.0})
        assert info.value.offset == 4

    @pytest.mark.parametrize("src, t", [("sqrt(t)", -1.0), ("1/t", 0.0), ("t^0.5", -4.0),
                                        ("t^-1", 0.0), ("exp(t)", 1000.0), ("log(t)", -1.0)])
    def test_domain_errors(self, src, t):
        with pytest.raises(DomainError):
            evaluate(parse(src), {"t": t})
        with pytest.raises(DomainError):
            evaluate_array(parse(src), {"t": np.array([0.5, t])})

    def test_missing_binding(self):
        with pytest.raises(MissingBindingError) as info:
            evaluate(parse("t * u"), {"t": 1.0})
        assert info.value.name == "u"
        assert info.value.offset == 4

    def test_negative_base_integer_power(self):
        assert evaluate(parse("t^3"), {"t": -2.0}) == -8.0

    def test_array_matches_scalar(self):
        ast = parse("exp(-6*(u + v)) + sqrt(u) * cos(v) - abs(u - v)^2 / (1 + v)")
        u = np.linspace(0, 1, 7)
        U, V = np.meshgrid(u, u, indexing="ij")
        arr = evaluate_array(ast, {"u": U, "v": V})
        for i in range(7):
            for j in range(7):
                assert arr[i, j] == evaluate(ast, {"u": U[i, j], "v": V[i, j]})

    def test_array_constant_broadcasts(self):
        out = evaluate_array(parse("2"), {"t": np.zeros(3)})
        assert np.broadcast_to(out, (3,)).tolist() == [2.0, 2.0, 2.0]


class TestFreeVariables:
    @pytest.mark.parametrize("src, expected", [("1.5", set()), ("t*u", {"t", "u"}),
                                               ("t+t", {"t"}), ("exp(-v) + pi", {"v"})])
    def test_sets(self, src, expected):
        assert free_variables(parse(src)) == expected


# --- round trip ---------------------------------------------------------------

literals = st.floats(min_value=0.0, max_value=1e6, allow_nan=False,
                     allow_infinity=False).map(Literal)
leaves = st.one_of(literals, st.sampled_from("tuv").map(Variable),
                   st.sampled_from(["pi", "e"]).map(Constant))


def _extend(children):
    return st.one_of(
        children.map(Neg),
        st.tuples(st.sampled_from("+-*/^"), children, children).map(lambda x: BinOp(*x)),
        st.tuples(st.sampled_from(["exp", "log", "sqrt", "sin", "cos", "abs"]),
                  children).map(lambda x: Call(*x)),
    )


trees = st.recursive(leaves, _extend, max_leaves=12)


@settings(max_examples=300, deadline=None)
@given(trees)
def test_round_trip(ast):
    text = to_source(ast)
    again = parse(text)
    assert strip(again) == ast
    assert to_source(again) == text


@settings(max_examples=200, deadline=None)
@given(trees, st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_evaluate_total(ast, t, u, v):
    """Evaluation returns a finite float or a structured error, never anything else."""
    try:
        value = evaluate(ast, {"t": t, "u": u, "v": v})
    except DomainError:
        return
    assert isinstance(value, float) and math.isfinite(value)
