"""Parsing, evaluation and symbolic differentiation of scalar expressions.

The grammar is closed.  Variables ``s`` and ``t``, the constant ``pi``, the
functions ``sin cos tan exp ln sqrt abs neg`` and the operators ``+ - * / ^``
with the usual precedence: ``^`` binds tighter than unary minus, unary minus
tighter than ``*`` and ``/``, those tighter than ``+`` and ``-``.  ``^``
associates to the right, the other binary operators to the left.  Function
application always requires parentheses.  Angles are in radians.

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := '-' factor | power
    power  := atom ('^' factor)?
    atom   := NUMBER | 'pi' | 's' | 't' | NAME '(' expr ')' | '(' expr ')'

Parsed expressions are immutable and safe to evaluate concurrently.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "Expression",
    "ExpressionError",
    "ExprSyntaxError",
    "UnknownIdentifierError",
    "ExprDomainError",
    "NonDifferentiableError",
    "parse",
    "differentiate",
    "as_expression",
]

FUNCTIONS = ("sin", "cos", "tan", "exp", "ln", "sqrt", "abs", "neg")
VARIABLES = ("s", "t")


class ExpressionError(Exception):
    """Base class for everything raised by this module."""


class ExprSyntaxError(ExpressionError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class UnknownIdentifierError(ExprSyntaxError):
    pass


class ExprDomainError(ExpressionError):
    """Evaluation left the real domain (division by zero, ln of a
    non-positive value, sqrt of a negative value, non-finite result)."""


class NonDifferentiableError(ExpressionError):
    pass


# ---------------------------------------------------------------------------
# AST nodes

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Pi:
    pass


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class Bin:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    fn: str
    arg: "Node"


Node = Union[Num, Var, Pi, Neg, Bin, Call]


# ---------------------------------------------------------------------------
# Tokenizer

_NUMBER_RE = re.compile(r"(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")
_OPERATORS = "+-*/^()"


@dataclass(frozen=True)
class _Token:
    kind: str  # 'num' | 'ident' | operator char | 'end'
    text: str
    pos: int


def _tokenize(source: str) -> list[_Token]:
    tokens: list[_Token] = []
    i = 0
    n = len(source)
    while i < n:
        ch = source[i]
        if ch.isspace():
            i += 1
            continue
        if ch in _OPERATORS:
            tokens.append(_Token(ch, ch, i))
            i += 1
            continue
        m = _NUMBER_RE.match(source, i)
        if m:
            tokens.append(_Token("num", m.group(0), i))
            i = m.end()
            continue
        m = _IDENT_RE.match(source, i)
        if m:
            tokens.append(_Token("ident", m.group(0), i))
            i = m.end()
            continue
        raise ExprSyntaxError(f"unexpected character {ch!r}", i)
    tokens.append(_Token("end", "", n))
    return tokens


# ---------------------------------------------------------------------------
# Parser (recursive descent)

class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, kind: str) -> _Token:
        tok = self.peek()
        if tok.kind != kind:
            raise ExprSyntaxError(f"expected {kind!r}", tok.pos)
        return self.advance()

    def parse(self) -> Node:
        node = self.expr()
        tok = self.peek()
        if tok.kind != "end":
            raise ExprSyntaxError(f"unexpected {tok.text!r}", tok.pos)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek().kind in ("+", "-"):
            op = self.advance().kind
            node = Bin(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.peek().kind in ("*", "/"):
            op = self.advance().kind
            node = Bin(op, node, self.factor())
        return node

    def factor(self) -> Node:
        if self.peek().kind == "-":
            self.advance()
            return Neg(self.factor())
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.peek().kind == "^":
            self.advance()
            return Bin("^", base, self.factor())
        return base

    def atom(self) -> Node:
        tok = self.peek()
        if tok.kind == "num":
            self.advance()
            return Num(float(tok.text))
        if tok.kind == "ident":
            self.advance()
            name = tok.text
            if name == "pi":
                return Pi()
            if name in VARIABLES:
                return Var(name)
            if name in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Neg(arg) if name == "neg" else Call(name, arg)
            raise UnknownIdentifierError(f"unknown identifier {name!r}", tok.pos)
        if tok.kind == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        raise ExprSyntaxError("expected a value", tok.pos)


# ---------------------------------------------------------------------------
# Scalar evaluation

def _eval(node: Node, s: float, t: float) -> float:
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Pi):
        return math.pi
    if isinstance(node, Var):
        return s if node.name == "s" else t
    if isinstance(node, Neg):
        return -_eval(node.arg, s, t)
    if isinstance(node, Bin):
        a = _eval(node.left, s, t)
        b = _eval(node.right, s, t)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if node.op == "/":
            if b == 0.0:
                raise ExprDomainError(f"division by zero at (s={s!r}, t={t!r})")
            return a / b
        try:
            return math.pow(a, b)
        except (ValueError, OverflowError) as exc:
            raise ExprDomainError(f"{a!r} ^ {b!r} is undefined") from exc
    # Call
    x = _eval(node.arg, s, t)
    fn = node.fn
    if fn == "sin":
        return math.sin(x)
    if fn == "cos":
        return math.cos(x)
    if fn == "tan":
        return math.tan(x)
    if fn == "exp":
        try:
            return math.exp(x)
        except OverflowError as exc:
            raise ExprDomainError(f"exp overflow at argument {x!r}") from exc
    if fn == "ln":
        if x <= 0.0:
            raise ExprDomainError(f"ln of non-positive value {x!r}")
        return math.log(x)
    if fn == "sqrt":
        if x < 0.0:
            raise ExprDomainError(f"sqrt of negative value {x!r}")
        return math.sqrt(x)
    # abs
    return abs(x)


def _eval_array(node: Node, S: np.ndarray, T: np.ndarray, shape) -> np.ndarray:
    if isinstance(node, Num):
        return np.full(shape, node.value)
    if isinstance(node, Pi):
        return np.full(shape, math.pi)
    if isinstance(node, Var):
        src = S if node.name == "s" else T
        return np.broadcast_to(src, shape).astype(float, copy=True)
    if isinstance(node, Neg):
        return -_eval_array(node.arg, S, T, shape)
    if isinstance(node, Bin):
        a = _eval_array(node.left, S, T, shape)
        b = _eval_array(node.right, S, T, shape)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if node.op == "/":
            return a / b
        return np.power(a, b)
    x = _eval_array(node.arg, S, T, shape)
    fn = node.fn
    if fn == "sin":
        return np.sin(x)
    if fn == "cos":
        return np.cos(x)
    if fn == "tan":
        return np.tan(x)
    if fn == "exp":
        return np.exp(x)
    if fn == "ln":
        return np.log(x)
    if fn == "sqrt":
        return np.sqrt(x)
    return np.abs(x)


# ---------------------------------------------------------------------------
# Symbolic differentiation with light constant folding

def _is_const(node: Node) -> bool:
    if isinstance(node, (Num, Pi)):
        return True
    if isinstance(node, Var):
        return False
    if isinstance(node, Neg):
        return _is_const(node.arg)
    if isinstance(node, Bin):
        return _is_const(node.left) and _is_const(node.right)
    return _is_const(node.arg)


def _num(node: Node):
    return node.value if isinstance(node, Num) else None


def _add(a: Node, b: Node) -> Node:
    if _num(a) == 0.0:
        return b
    if _num(b) == 0.0:
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value + b.value)
    return Bin("+", a, b)


def _sub(a: Node, b: Node) -> Node:
    if _num(b) == 0.0:
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value - b.value)
    if _num(a) == 0.0:
        return _neg(b)
    return Bin("-", a, b)


def _mul(a: Node, b: Node) -> Node:
    if _num(a) == 0.0 or _num(b) == 0.0:
        return Num(0.0)
    if _num(a) == 1.0:
        return b
    if _num(b) == 1.0:
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value * b.value)
    return Bin("*", a, b)


def _div(a: Node, b: Node) -> Node:
    if _num(a) == 0.0:
        return Num(0.0)
    if _num(b) == 1.0:
        return a
    return Bin("/", a, b)


def _neg(a: Node) -> Node:
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _pow(a: Node, b: Node) -> Node:
    if _num(b) == 1.0:
        return a
    if _num(b) == 0.0:
        return Num(1.0)
    return Bin("^", a, b)


def _diff(node: Node, var: str) -> Node:
    if isinstance(node, (Num, Pi)):
        return Num(0.0)
    if isinstance(node, Var):
        return Num(1.0) if node.name == var else Num(0.0)
    if isinstance(node, Neg):
        return _neg(_diff(node.arg, var))
    if isinstance(node, Bin):
        u, v = node.left, node.right
        du, dv = _diff(u, var), _diff(v, var)
        if node.op == "+":
            return _add(du, dv)
        if node.op == "-":
            return _sub(du, dv)
        if node.op == "*":
            return _add(_mul(du, v), _mul(u, dv))
        if node.op == "/":
            return _div(_sub(_mul(du, v), _mul(u, dv)), _pow(v, Num(2.0)))
        # power rule when the exponent holds no variable, general rule otherwise
        if _is_const(v):
            return _mul(_mul(v, _pow(u, _sub(v, Num(1.0)))), du)
        return _mul(
            _pow(u, v),
            _add(_mul(dv, Call("ln", u)), _mul(v, _div(du, u))),
        )
    # Call
    u = node.arg
    du = _diff(u, var)
    fn = node.fn
    if fn == "sin":
        return _mul(Call("cos", u), du)
    if fn == "cos":
        return _neg(_mul(Call("sin", u), du))
    if fn == "tan":
        return _div(du, _pow(Call("cos", u), Num(2.0)))
    if fn == "exp":
        return _mul(Call("exp", u), du)
    if fn == "ln":
        return _div(du, u)
    if fn == "sqrt":
        return _div(du, _mul(Num(2.0), Call("sqrt", u)))
    raise NonDifferentiableError(f"{fn} is not differentiable symbolically")


# ---------------------------------------------------------------------------
# Printing (precedence-aware, re-parses to an equivalent tree)

_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


def _prec(node: Node) -> int:
    if isinstance(node, Bin):
        if node.op in "+-":
            return _PREC_ADD
        if node.op in "*/":
            return _PREC_MUL
        return _PREC_POW
    if isinstance(node, Neg):
        return _PREC_NEG
    return _PREC_ATOM


def _wrap(text: str, need: bool) -> str:
    return f"({text})" if need else text


def _print(node: Node) -> str:
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Pi):
        return "pi"
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return "-" + _wrap(_print(node.arg), _prec(node.arg) < _PREC_NEG)
    if isinstance(node, Call):
        return f"{node.fn}({_print(node.arg)})"
    own = _prec(node)
    if node.op == "^":
        # right-associative: parenthesize equal precedence on the left
        left = _wrap(_print(node.left), _prec(node.left) <= own)
        right = _wrap(_print(node.right), _prec(node.right) < _PREC_NEG)
        return f"{left}^{right}"
    left = _wrap(_print(node.left), _prec(node.left) < own)
    right = _wrap(_print(node.right), _prec(node.right) <= own)
    return f"{left} {node.op} {right}"


def _references(node: Node, var: str) -> bool:
    if isinstance(node, Var):
        return node.name == var
    if isinstance(node, Neg):
        return _references(node.arg, var)
    if isinstance(node, Bin):
        return _references(node.left, var) or _references(node.right, var)
    if isinstance(node, Call):
        return _references(node.arg, var)
    return False


# ---------------------------------------------------------------------------
# Public wrapper

class Expression:
    """An immutable parsed expression in the variables ``s`` and ``t``."""

    __slots__ = ("root",)

    def __init__(self, root: Node):
        self.root = root

    @staticmethod
    def parse(source: str) -> "Expression":
        if not source or not source.strip():
            raise ExprSyntaxError("empty expression", 0)
        return Expression(_Parser(source).parse())

    def eval(self, s: float = 0.0, t: float = 0.0) -> float:
        value = _eval(self.root, float(s), float(t))
        if not math.isfinite(value):
            raise ExprDomainError(f"non-finite value at (s={s!r}, t={t!r})")
        return value

    def eval_array(self, s, t) -> np.ndarray:
        S = np.asarray(s, dtype=float)
        T = np.asarray(t, dtype=float)
        shape = np.broadcast_shapes(S.shape, T.shape)
        with np.errstate(all="ignore"):
            out = _eval_array(self.root, S, T, shape)
        out = np.asarray(out, dtype=float)
        if not np.all(np.isfinite(out)):
            bad = np.argwhere(~np.isfinite(out))
            loc = tuple(bad[0]) if bad.size else ()
            raise ExprDomainError(f"non-finite value on grid at index {loc}")
        return out

    def diff(self, var: str) -> "Expression":
        if var not in VARIABLES:
            raise ValueError(f"variable must be one of {VARIABLES}, got {var!r}")
        return Expression(_diff(self.root, var))

    def references(self, var: str) -> bool:
        return _references(self.root, var)

    def is_constant(self) -> bool:
        return not any(_references(self.root, v) for v in VARIABLES)

    def __str__(self) -> str:
        return _print(self.root)

    def __repr__(self) -> str:
        return f"Expression({_print(self.root)!r})"

    def __eq__(self, other) -> bool:
        return isinstance(other, Expression) and self.root == other.root

    def __hash__(self) -> int:
        return hash(self.root)


def parse(source: str) -> Expression:
    return Expression.parse(source)


def differentiate(expression: Expression, var: str) -> Expression:
    return expression.diff(var)


def as_expression(value) -> Expression:
    """Accept an Expression or source text and return an Expression."""
    if isinstance(value, Expression):
        return value
    if isinstance(value, str):
        return Expression.parse(value)
    raise TypeError(f"expected Expression or str, got {type(value).__name__}")
