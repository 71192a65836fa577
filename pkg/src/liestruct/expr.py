"""Expression language for smooth coefficient fields.

Grammar (EBNF)::

    expr     = term { ("+" | "-") term } ;
    term     = unary { ("*" | "/") unary } ;
    unary    = "-" unary | "+" unary | power ;
    power    = atom [ "^" exponent ] ;
    exponent = [ "-" ] INTEGER | "(" [ "-" ] INTEGER ")" ;
    atom     = NUMBER | VARIABLE | FUNC "(" expr ")" | "(" expr ")" ;
    VARIABLE = ( "x" | "y" ) DIGIT { DIGIT } ;
    FUNC     = "exp" | "log" | "sin" | "cos" | "sqrt" ;
    NUMBER   = DIGIT { DIGIT } [ "." { DIGIT } ] [ ("e" | "E") [ "+" | "-" ] DIGIT { DIGIT } ] ;

Corner coordinates are ``x1..xk`` and free coordinates ``y1..y(n-k)``.
Only integer exponents are accepted; write fractional powers through
``exp``/``log``.  Numeric literals are stored exactly as fractions.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

FUNCTIONS = ("exp", "log", "sin", "cos", "sqrt")

_VAR_RE = re.compile(r"[xy][1-9][0-9]*\Z")


class ExprSyntaxError(ValueError):
    """Raised on malformed expression text."""

    def __init__(self, message: str, offset: int, expected: frozenset[str] = frozenset()):
        self.offset = offset
        self.expected = frozenset(expected)
        detail = f" (expected one of: {', '.join(sorted(self.expected))})" if expected else ""
        super().__init__(f"{message} at offset {offset}{detail}")


class UnknownIdentifierError(ExprSyntaxError):
    """Raised when an identifier is neither a coordinate nor a known function."""

    def __init__(self, name: str, offset: int):
        self.name = name
        super().__init__(f"unknown identifier {name!r}", offset)


@dataclass(frozen=True)
class Num:
    value: Fraction


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * /
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: int


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


Expr = Union[Num, Var, Neg, BinOp, Pow, Call]


# ---------------------------------------------------------------- tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Tok:
    kind: str  # num, ident, op, end
    text: str
    offset: int


def _tokenize(text: str) -> list[_Tok]:
    out = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos)
        if m.lastgroup != "ws":
            out.append(_Tok(m.lastgroup, m.group(), pos))
        pos = m.end()
    out.append(_Tok("end", "", len(text)))
    return out


_TERM_START = frozenset({"number", "variable", "function", "(", "-", "+"})


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def advance(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect_op(self, op: str) -> _Tok:
        if self.tok.kind == "op" and self.tok.text == op:
            return self.advance()
        raise ExprSyntaxError(f"unexpected {self._describe()}", self.tok.offset, frozenset({op}))

    def _describe(self) -> str:
        return "end of input" if self.tok.kind == "end" else repr(self.tok.text)

    def parse(self) -> Expr:
        e = self.expr()
        if self.tok.kind != "end":
            raise ExprSyntaxError(
                f"unexpected {self._describe()}", self.tok.offset, frozenset({"+", "-", "*", "/", "^", "end"})
            )
        return e

    def expr(self) -> Expr:
        left = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.advance().text
            left = BinOp(op, left, self.term())
        return left

    def term(self) -> Expr:
        left = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.advance().text
            left = BinOp(op, left, self.unary())
        return left

    def unary(self) -> Expr:
        if self.tok.kind == "op" and self.tok.text == "-":
            self.advance()
            return Neg(self.unary())
        if self.tok.kind == "op" and self.tok.text == "+":
            self.advance()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            self.advance()
            return Pow(base, self.exponent())
        return base

    def exponent(self) -> int:
        paren = self.tok.kind == "op" and self.tok.text == "("
        if paren:
            self.advance()
        sign = 1
        if self.tok.kind == "op" and self.tok.text == "-":
            self.advance()
            sign = -1
        t = self.tok
        if t.kind != "num" or not t.text.isdigit():
            raise ExprSyntaxError(f"non-integer exponent {self._describe()}", t.offset, frozenset({"integer"}))
        self.advance()
        if paren:
            self.expect_op(")")
        return sign * int(t.text)

    def atom(self) -> Expr:
        t = self.tok
        if t.kind == "num":
            self.advance()
            return Num(Fraction(t.text))
        if t.kind == "ident":
            self.advance()
            if t.text in FUNCTIONS:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return Call(t.text, arg)
            if _VAR_RE.match(t.text):
                return Var(t.text)
            raise UnknownIdentifierError(t.text, t.offset)
        if t.kind == "op" and t.text == "(":
            self.advance()
            e = self.expr()
            self.expect_op(")")
            return e
        raise ExprSyntaxError(f"unexpected {self._describe()}", t.offset, _TERM_START)


def parse_expr(text: str) -> Expr:
    """Parse ``text`` into an expression tree.

    Raises :class:`ExprSyntaxError` (with ``offset`` and ``expected``) on
    malformed input and :class:`UnknownIdentifierError` on unknown names.
    """
    if not text or not text.strip():
        raise ExprSyntaxError("empty expression", 0, _TERM_START)
    return _Parser(text).parse()


def as_expr(obj: "Expr | str | int | float | Fraction") -> Expr:
    """Coerce strings and numbers into expressions."""
    if isinstance(obj, (Num, Var, Neg, BinOp, Pow, Call)):
        return obj
    if isinstance(obj, str):
        return parse_expr(obj)
    if isinstance(obj, (int, Fraction)):
        v = Fraction(obj)
    elif isinstance(obj, float):
        v = Fraction(obj)
    else:
        raise TypeError(f"cannot convert {type(obj).__name__} to an expression")
    return Neg(Num(-v)) if v < 0 else Num(v)


# ----------------------------------------------------------------- printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}
_UNARY_PREC = 3
_POW_PREC = 4
_ATOM_PREC = 5


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return _UNARY_PREC
    if isinstance(e, Pow):
        return _POW_PREC
    return _ATOM_PREC


def _is_decimal(v: Fraction) -> bool:
    d = v.denominator
    for p in (2, 5):
        while d % p == 0:
            d //= p
    return d == 1


def _num_text(v: Fraction) -> str:
    if v.denominator == 1:
        return str(v.numerator) if v >= 0 else f"(-{-v.numerator})"
    if v < 0:
        return f"(-{_num_text(-v)})"
    if _is_decimal(v):
        k = 0
        while (v * 10**k).denominator != 1:
            k += 1
        digits = str((v * 10**k).numerator).rjust(k + 1, "0")
        return f"{digits[:-k]}.{digits[-k:]}"
    return f"({v.numerator}/{v.denominator})"


def _wrap(e: Expr, min_prec: int) -> str:
    s = to_string(e)
    return f"({s})" if _prec(e) < min_prec else s


def to_string(e: Expr) -> str:
    """Render ``e`` with minimal parentheses; ``parse_expr`` inverts this."""
    if isinstance(e, Num):
        return _num_text(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return "-" + _wrap(e.arg, _UNARY_PREC)
    if isinstance(e, Pow):
        exp = str(e.exponent) if e.exponent >= 0 else f"({e.exponent})"
        return _wrap(e.base, _ATOM_PREC) + "^" + exp
    if isinstance(e, Call):
        return f"{e.func}({to_string(e.arg)})"
    if isinstance(e, BinOp):
        p = _PREC[e.op]
        # left-associative: the right operand needs strictly higher precedence
        return f"{_wrap(e.left, p)}{e.op}{_wrap(e.right, p + 1)}"
    raise TypeError(f"not an expression: {e!r}")


def variables(e: Expr) -> set[str]:
    """Names of all coordinates appearing in ``e``."""
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Num):
        return set()
    if isinstance(e, (Neg, Call)):
        return variables(e.arg)
    if isinstance(e, Pow):
        return variables(e.base)
    return variables(e.left) | variables(e.right)


def is_constant(e: Expr) -> bool:
    return not variables(e)


# Small builders used when assembling derived fields programmatically.

def add(a: Expr, b: Expr) -> Expr:
    return BinOp("+", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    return BinOp("*", a, b)
