from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from liestruct.expr import (
    BinOp,
    Call,
    ExprSyntaxError,
    Neg,
    Num,
    Pow,
    UnknownIdentifierError,
    Var,
    parse_expr,
    to_string,
    variables,
)


def test_product_node():
    assert parse_expr("x1*x1") == BinOp("*", Var("x1"), Var("x1"))


def test_incomplete_expression_offset():
    with pytest.raises(ExprSyntaxError) as info:
        parse_expr("x1+")
    assert info.value.offset == 3
    assert info.value.expected


def test_function_composition():
    e = parse_expr("exp(-1/x1)*sin(1/x1)")
    assert isinstance(e, BinOp) and e.op == "*"
    assert isinstance(e.left, Call) and e.left.func == "exp"
    assert isinstance(e.right, Call) and e.right.func == "sin"


def test_precedence():
    # ^ binds tighter than unary minus, which binds tighter than * and /
    assert parse_expr("-x1^2") == Neg(Pow(Var("x1"), 2))
    assert parse_expr("1+2*x1") == BinOp("+", Num(Fraction(1)), BinOp("*", Num(Fraction(2)), Var("x1")))
    assert parse_expr("x1-y1-y2") == BinOp("-", BinOp("-", Var("x1"), Var("y1")), Var("y2"))
    assert parse_expr("x1/y1/y2") == BinOp("/", BinOp("/", Var("x1"), Var("y1")), Var("y2"))


def test_negative_exponent():
    assert parse_expr("x1^(-2)") == Pow(Var("x1"), -2)


def test_exact_literals():
    assert parse_expr("0.1") == Num(Fraction(1, 10))
    assert parse_expr("1e-3") == Num(Fraction(1, 1000))


@pytest.mark.parametrize("text", ["z1", "foo(x1)", "x", "tan(x1)"])
def test_unknown_identifier(text):
    with pytest.raises(UnknownIdentifierError):
        parse_expr(text)


@pytest.mark.parametrize("text", ["", "   ", "(x1", "x1)", "x1^0.5", "*x1", "exp x1"])
def test_syntax_errors(text):
    with pytest.raises(ExprSyntaxError):
        parse_expr(text)


def test_variables():
    assert variables(parse_expr("x1*exp(y2)+3")) == {"x1", "y2"}


_leaf = st.one_of(
    st.sampled_from(["x1", "x2", "y1"]).map(Var),
    # parsed literals are non-negative decimals
    st.integers(0, 10**5).map(lambda m: Num(Fraction(m, 100))),
)


def _extend(children):
    return st.one_of(
        st.tuples(st.sampled_from("+-*/"), children, children).map(lambda t: BinOp(*t)),
        children.map(Neg),
        st.tuples(children, st.integers(-3, 3)).map(lambda t: Pow(*t)),
        st.tuples(st.sampled_from(["exp", "log", "sin", "cos", "sqrt"]), children).map(lambda t: Call(*t)),
    )


@settings(max_examples=300, deadline=None)
@given(st.recursive(_leaf, _extend, max_leaves=12))
def test_print_parse_round_trip(e):
    assert parse_expr(to_string(e)) == e
