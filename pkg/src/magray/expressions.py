"""Tiny closed expression language for scene coefficient fields.

Expressions are functions of the spatial variables ``x`` and ``y`` built from
real literals, the imaginary unit ``i``, the binary operators ``+ - * / ^``,
unary minus, and the functions ``sin cos exp log sqrt tanh``.  Precedence from
tightest to loosest is ``^``, unary minus, ``* /``, ``+ -``; ``^`` associates to
the right, so ``-x^2`` is ``-(x^2)`` and an exponent cannot itself start with a
unary minus without parentheses (``x^(-2)``).

The AST is a small family of frozen dataclasses supporting structural equality,
which makes the round-trip law ``parse(format_expr(parse(s))) == parse(s)``
testable directly.  Trees also support symbolic differentiation in ``x`` or
``y`` (used for metric derivatives, curvature and twists) and compile to
vectorized numpy callables.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import ExprSyntaxError, UnknownIdentifier

__all__ = [
    "Expr", "Num", "Imag", "Var", "Neg", "Bin", "Call",
    "parse", "format_expr", "diff", "compile_expr", "evaluate",
    "const", "expr_is_zero", "as_expr", "FUNCTIONS",
]

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt", "tanh")
_VARIABLES = ("x", "y")


class _Node:
    """Shared operator sugar so programmatic tree building stays readable."""

    __slots__ = ()

    def __add__(self, other):
        return _fold_add(self, as_expr(other))

    def __radd__(self, other):
        return _fold_add(as_expr(other), self)

    def __sub__(self, other):
        return _fold_sub(self, as_expr(other))

    def __rsub__(self, other):
        return _fold_sub(as_expr(other), self)

    def __mul__(self, other):
        return _fold_mul(self, as_expr(other))

    def __rmul__(self, other):
        return _fold_mul(as_expr(other), self)

    def __truediv__(self, other):
        return _fold_div(self, as_expr(other))

    def __rtruediv__(self, other):
        return _fold_div(as_expr(other), self)

    def __neg__(self):
        return _fold_neg(self)

    def __pow__(self, other):
        return Bin("^", self, as_expr(other))


@dataclass(frozen=True)
class Num(_Node):
    value: float


@dataclass(frozen=True)
class Imag(_Node):
    """The literal ``i``."""


@dataclass(frozen=True)
class Var(_Node):
    name: str


@dataclass(frozen=True)
class Neg(_Node):
    operand: "Expr"


@dataclass(frozen=True)
class Bin(_Node):
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call(_Node):
    func: str
    arg: "Expr"


Expr = Union[Num, Imag, Var, Neg, Bin, Call]

ZERO = Num(0.0)
ONE = Num(1.0)


def const(v) -> Expr:
    """Literal node for a real or complex constant (built without folding,
    since the folders call back into const for constant arithmetic)."""
    v = complex(v)
    if v.imag == 0.0:
        return Num(float(v.real))
    mag = abs(v.imag)
    imag_part = Imag() if mag == 1.0 else Bin("*", Num(mag), Imag())
    if v.real == 0.0:
        return imag_part if v.imag > 0 else Neg(imag_part)
    op = "+" if v.imag > 0 else "-"
    return Bin(op, Num(float(v.real)), imag_part)


def as_expr(v) -> Expr:
    if isinstance(v, _Node):
        return v
    return const(v)


# ---------------------------------------------------------------------------
# folding constructors (used by programmatic building and diff, NOT the parser:
# the parser must return the literal tree so round-trip equality is exact)

def _num_val(e):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Imag):
        return 1j
    return None


def _fold_add(a, b):
    va, vb = _num_val(a), _num_val(b)
    if va == 0:
        return b
    if vb == 0:
        return a
    if va is not None and vb is not None:
        return const(va + vb)
    return Bin("+", a, b)


def _fold_sub(a, b):
    vb = _num_val(b)
    if vb == 0:
        return a
    va = _num_val(a)
    if va is not None and vb is not None:
        return const(va - vb)
    if va == 0:
        return _fold_neg(b)
    return Bin("-", a, b)


def _fold_mul(a, b):
    va, vb = _num_val(a), _num_val(b)
    if va == 0 or vb == 0:
        return ZERO
    if va == 1:
        return b
    if vb == 1:
        return a
    if va is not None and vb is not None:
        return const(va * vb)
    return Bin("*", a, b)


def _fold_div(a, b):
    va, vb = _num_val(a), _num_val(b)
    if va == 0:
        return ZERO
    if vb == 1:
        return a
    if va is not None and vb is not None and vb != 0:
        return const(va / vb)
    return Bin("/", a, b)


def _fold_neg(a):
    v = _num_val(a)
    if isinstance(a, Num):
        return Num(-a.value)
    if v == 0:
        return ZERO
    if isinstance(a, Neg):
        return a.operand
    return Neg(a)


def expr_is_zero(e: Expr) -> bool:
    """Structurally-zero test (after folding, programmatic zeros are Num(0))."""
    return isinstance(e, Num) and e.value == 0.0


# ---------------------------------------------------------------------------
# lexer / parser

_TOKEN_NAMES = {
    "+": "'+'", "-": "'-'", "*": "'*'", "/": "'/'", "^": "'^'",
    "(": "'('", ")": "')'",
}


def _lex(src: str):
    """Yield (kind, value, offset) triples; kinds: num, name, op, end."""
    i, n = 0, len(src)
    while i < n:
        c = src[i]
        if c.isspace():
            i += 1
            continue
        if c.isdigit() or (c == "." and i + 1 < n and src[i + 1].isdigit()):
            j = i
            while j < n and src[j].isdigit():
                j += 1
            if j < n and src[j] == ".":
                j += 1
                while j < n and src[j].isdigit():
                    j += 1
            if j < n and src[j] in "eE":
                k = j + 1
                if k < n and src[k] in "+-":
                    k += 1
                if k < n and src[k].isdigit():
                    j = k
                    while j < n and src[j].isdigit():
                        j += 1
            yield ("num", src[i:j], i)
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            yield ("name", src[i:j], i)
            i = j
            continue
        if c in "+-*/^()":
            yield ("op", c, i)
            i += 1
            continue
        raise ExprSyntaxError(f"unexpected character {c!r}", i,
                              ("number", "identifier", "operator"))
    yield ("end", "", n)


class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.tokens = list(_lex(src))
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, symbol):
        kind, val, off = self.peek()
        if kind == "op" and val == symbol:
            return self.advance()
        raise ExprSyntaxError(f"got {val!r}" if val else "unexpected end of input",
                              off, (_TOKEN_NAMES[symbol],))

    # expr := term (('+'|'-') term)*
    def parse_expr(self):
        node = self.parse_term()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.advance()
                node = Bin(val, node, self.parse_term())
            else:
                return node

    # term := unary (('*'|'/') unary)*
    def parse_term(self):
        node = self.parse_unary()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "*/":
                self.advance()
                node = Bin(val, node, self.parse_unary())
            else:
                return node

    # unary := '-' unary | power
    def parse_unary(self):
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.advance()
            return Neg(self.parse_unary())
        return self.parse_power()

    # power := atom ('^' power)?   (right associative, exponent cannot be unary)
    def parse_power(self):
        base = self.parse_atom()
        kind, val, _ = self.peek()
        if kind == "op" and val == "^":
            self.advance()
            return Bin("^", base, self.parse_power())
        return base

    def parse_atom(self):
        kind, val, off = self.peek()
        if kind == "num":
            self.advance()
            return Num(float(val))
        if kind == "name":
            self.advance()
            if val in _VARIABLES:
                return Var(val)
            if val == "i":
                return Imag()
            if val in FUNCTIONS:
                self.expect_op("(")
                arg = self.parse_expr()
                self.expect_op(")")
                return Call(val, arg)
            raise UnknownIdentifier(val, off)
        if kind == "op" and val == "(":
            self.advance()
            node = self.parse_expr()
            self.expect_op(")")
            return node
        raise ExprSyntaxError(f"got {val!r}" if val else "unexpected end of input",
                              off, ("number", "identifier", "'('", "'-'"))


def parse(src: str) -> Expr:
    """Parse expression text into an AST; structural equality is semantic here."""
    p = _Parser(src)
    node = p.parse_expr()
    kind, val, off = p.peek()
    if kind != "end":
        raise ExprSyntaxError(f"trailing input {val!r}", off, ("end of input",))
    return node


# ---------------------------------------------------------------------------
# printing

# precedence levels: sum=1, product=2, unary=3, power=4, atom=5
def _fmt(e: Expr, ctx: int) -> str:
    if isinstance(e, Num):
        s = repr(e.value)
        # repr always carries sign for negatives; wrap so '-' stays unary-parsable
        return s if e.value >= 0 else f"({s})"
    if isinstance(e, Imag):
        return "i"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({_fmt(e.arg, 1)})"
    if isinstance(e, Neg):
        inner = "-" + _fmt(e.operand, 3)
        return inner if ctx <= 3 else f"({inner})"
    if isinstance(e, Bin):
        if e.op in "+-":
            mine = 1
            s = f"{_fmt(e.left, 1)} {e.op} {_fmt(e.right, 2)}"
        elif e.op in "*/":
            mine = 2
            s = f"{_fmt(e.left, 2)}{e.op}{_fmt(e.right, 3)}"
        else:  # '^' right associative; exponent must be power-level or tighter
            mine = 4
            s = f"{_fmt(e.left, 5)}^{_fmt(e.right, 4)}"
        return s if ctx <= mine else f"({s})"
    raise TypeError(f"not an expression node: {e!r}")


def format_expr(e: Expr) -> str:
    """Minimal-parentheses text form; ``parse(format_expr(t)) == t``."""
    return _fmt(e, 1)


# ---------------------------------------------------------------------------
# differentiation

def diff(e: Expr, var: str) -> Expr:
    """Symbolic ∂/∂var with light constant folding."""
    if var not in _VARIABLES:
        raise ValueError(f"can only differentiate in x or y, not {var!r}")
    if isinstance(e, (Num, Imag)):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == var else ZERO
    if isinstance(e, Neg):
        return _fold_neg(diff(e.operand, var))
    if isinstance(e, Call):
        da = diff(e.arg, var)
        a = e.arg
        if e.func == "sin":
            outer = Call("cos", a)
        elif e.func == "cos":
            outer = _fold_neg(Call("sin", a))
        elif e.func == "exp":
            outer = e
        elif e.func == "log":
            return _fold_div(da, a)
        elif e.func == "sqrt":
            return _fold_div(da, _fold_mul(Num(2.0), e))
        elif e.func == "tanh":
            outer = _fold_sub(ONE, _fold_mul(e, e))
        else:  # pragma: no cover - lexer rejects other names
            raise ValueError(e.func)
        return _fold_mul(outer, da)
    if isinstance(e, Bin):
        u, v = e.left, e.right
        du, dv = diff(u, var), diff(v, var)
        if e.op == "+":
            return _fold_add(du, dv)
        if e.op == "-":
            return _fold_sub(du, dv)
        if e.op == "*":
            return _fold_add(_fold_mul(du, v), _fold_mul(u, dv))
        if e.op == "/":
            num = _fold_sub(_fold_mul(du, v), _fold_mul(u, dv))
            return _fold_div(num, _fold_mul(v, v))
        # power: general u^v -> u^v * (dv*log(u) + v*du/u)
        if _num_val(v) is not None and dv is ZERO:
            # common path u^c: c*u^(c-1)*du
            c = _num_val(v)
            return _fold_mul(_fold_mul(v, Bin("^", u, const(c - 1))), du)
        term = _fold_add(_fold_mul(dv, Call("log", u)),
                         _fold_mul(v, _fold_div(du, u)))
        return _fold_mul(e, term)
    raise TypeError(f"not an expression node: {e!r}")


# ---------------------------------------------------------------------------
# evaluation

def _has_imag(e: Expr) -> bool:
    if isinstance(e, Imag):
        return True
    if isinstance(e, Neg):
        return _has_imag(e.operand)
    if isinstance(e, Call):
        return _has_imag(e.arg)
    if isinstance(e, Bin):
        return _has_imag(e.left) or _has_imag(e.right)
    return False


_FN = {name: getattr(np, name) for name in FUNCTIONS}


def compile_expr(e: Expr, force_complex: bool = False) -> Callable:
    """Compile to ``f(x, y) -> ndarray`` with numpy broadcasting.

    Trees without the literal ``i`` evaluate in float64 (the hot path: metric and
    magnetic intensity inside the ODE right-hand side); others in complex128.
    """
    def build(node):
        if isinstance(node, Num):
            v = node.value
            return lambda x, y: v
        if isinstance(node, Imag):
            return lambda x, y: 1j
        if isinstance(node, Var):
            if node.name == "x":
                return lambda x, y: x
            return lambda x, y: y
        if isinstance(node, Neg):
            f = build(node.operand)
            return lambda x, y: -f(x, y)
        if isinstance(node, Call):
            f = build(node.arg)
            g = _FN[node.func]
            return lambda x, y: g(f(x, y))
        if isinstance(node, Bin):
            fl, fr = build(node.left), build(node.right)
            op = node.op
            if op == "+":
                return lambda x, y: fl(x, y) + fr(x, y)
            if op == "-":
                return lambda x, y: fl(x, y) - fr(x, y)
            if op == "*":
                return lambda x, y: fl(x, y) * fr(x, y)
            if op == "/":
                return lambda x, y: fl(x, y) / fr(x, y)
            return lambda x, y: fl(x, y) ** fr(x, y)
        raise TypeError(f"not an expression node: {node!r}")

    f = build(e)
    complex_out = force_complex or _has_imag(e)
    dtype = np.complex128 if complex_out else np.float64

    def evaluator(x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        out = f(x, y)
        return np.broadcast_to(np.asarray(out, dtype=dtype),
                               np.broadcast_shapes(x.shape, y.shape)).copy()

    return evaluator


def evaluate(e: Expr, x, y):
    """One-shot evaluation (compiles on the fly; fine outside inner loops)."""
    return compile_expr(e)(x, y)
