"""Tiny expression language for real scalar fields f(x, xi) on phase space.

Grammar (whitespace insignificant)::

    sum    := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?          # right-associative, binds above unary '-'
    atom   := NUMBER | 'pi' | 'x' | 'xi' | FUNC '(' sum (',' sum)* ')' | '(' sum ')'

Functions: sin, cos, tan, tanh, exp, log, sqrt, abs, atan2(a, b).
Values are IEEE doubles; domain violations raise :class:`DomainError`
rather than producing silent NaN.

Parsed trees are immutable; evaluation and differentiation are reentrant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError, ExprSyntaxError, UnknownIdentifierError

__all__ = [
    "Expr", "Num", "Var", "Neg", "Bin", "Call",
    "parse", "pretty", "evaluate", "grad", "scalar_fn", "array_fn",
]


# --- abstract syntax tree ---------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str  # 'x' or 'xi'


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class Bin:
    op: str  # one of + - * / ^
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    fn: str
    args: tuple


Expr = Num | Var | Neg | Bin | Call

_FUNCS = {"sin": 1, "cos": 1, "tan": 1, "tanh": 1, "exp": 1, "log": 1,
          "sqrt": 1, "abs": 1, "atan2": 2}
_CONSTS = {"pi": math.pi}
_VARS = ("x", "xi")


# --- tokenizer ---------------------------------------------------------------

_OPS = set("+-*/^(),")


def _tokenize(text):
    """Return a list of (kind, value, offset) with kinds num/ident/op/end."""
    tokens = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c in _OPS:
            tokens.append(("op", c, i))
            i += 1
            continue
        if c.isdigit() or c == ".":
            j = i
            while j < n and (text[j].isdigit() or text[j] == "."):
                j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    j = k
                    while j < n and text[j].isdigit():
                        j += 1
            lit = text[i:j]
            try:
                value = float(lit)
            except ValueError:
                raise ExprSyntaxError(i, f"malformed number {lit!r}") from None
            tokens.append(("num", value, i))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(("ident", text[i:j], i))
            i = j
            continue
        raise ExprSyntaxError(i, f"unexpected character {c!r}")
    tokens.append(("end", None, n))
    return tokens


# --- recursive-descent parser ------------------------------------------------

class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, op):
        kind, value, offset = self.peek()
        if kind == "op" and value == op:
            return self.advance()
        raise ExprSyntaxError(offset, f"expected {op!r}")

    def sum(self):
        node = self.term()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "+-":
                self.advance()
                node = Bin(value, node, self.term())
            else:
                return node

    def term(self):
        node = self.unary()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "*/":
                self.advance()
                node = Bin(value, node, self.unary())
            else:
                return node

    def unary(self):
        kind, value, _ = self.peek()
        if kind == "op" and value == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self):
        node = self.atom()
        kind, value, _ = self.peek()
        if kind == "op" and value == "^":
            self.advance()
            # exponent at unary level: x^-2 parses, ^ is right-associative
            return Bin("^", node, self.unary())
        return node

    def atom(self):
        kind, value, offset = self.advance()
        if kind == "num":
            return Num(value)
        if kind == "ident":
            if value in _VARS:
                return Var(value)
            if value in _CONSTS:
                return Num(_CONSTS[value])
            if value in _FUNCS:
                self.expect_op("(")
                args = [self.sum()]
                while True:
                    k, v, o = self.peek()
                    if k == "op" and v == ",":
                        self.advance()
                        args.append(self.sum())
                    else:
                        break
                self.expect_op(")")
                if len(args) != _FUNCS[value]:
                    raise ExprSyntaxError(
                        offset,
                        f"{value} expects {_FUNCS[value]} argument(s), got {len(args)}")
                return Call(value, tuple(args))
            raise UnknownIdentifierError(offset, f"unknown identifier {value!r}")
        if kind == "op" and value == "(":
            node = self.sum()
            self.expect_op(")")
            return node
        shown = "end of input" if kind == "end" else repr(value)
        raise ExprSyntaxError(offset, f"expected a value, found {shown}")


def parse(text):
    """Parse expression text into an AST.

    Raises :class:`ExprSyntaxError` (with 0-based offset) on malformed input
    and :class:`UnknownIdentifierError` on unknown names.
    """
    parser = _Parser(_tokenize(text))
    node = parser.sum()
    kind, value, offset = parser.peek()
    if kind != "end":
        raise ExprSyntaxError(offset, f"unexpected trailing input {value!r}")
    return node


# --- pretty printer ----------------------------------------------------------

# precedence levels used when deciding where parentheses are required
_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4, "atom": 5}


def _prec(e):
    if isinstance(e, Bin):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return _PREC["neg"]
    return _PREC["atom"]


def _fmt_num(v):
    if isinstance(v, float) and v.is_integer() and abs(v) < 1e16:
        return str(int(v))
    return repr(float(v))


def pretty(e):
    """Render an AST back to canonical text; ``pretty(parse(pretty(e)))``
    is a fixed point."""
    if isinstance(e, Num):
        if e.value < 0:
            return "-" + _fmt_num(-e.value)
        return _fmt_num(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        inner = pretty(e.arg)
        if _prec(e.arg) < _PREC["neg"]:
            inner = f"({inner})"
        return "-" + inner
    if isinstance(e, Call):
        return f"{e.fn}({', '.join(pretty(a) for a in e.args)})"
    if isinstance(e, Bin):
        lp, rp = _prec(e.left), _prec(e.right)
        p = _PREC[e.op]
        left = pretty(e.left)
        right = pretty(e.right)
        if e.op in "+-":
            if lp < p:
                left = f"({left})"
            # left-associative: parenthesize any same-precedence right operand
            # so the printed tree reparses to the identical AST
            if rp <= p:
                right = f"({right})"
            return f"{left} {e.op} {right}"
        if e.op in "*/":
            if lp < p:
                left = f"({left})"
            if rp <= p:
                right = f"({right})"
            return f"{left}{e.op}{right}"
        # '^' binds above unary minus and is right-associative
        if lp <= p:
            left = f"({left})"
        if rp < _PREC["neg"]:
            right = f"({right})"
        return f"{left}^{right}"
    raise TypeError(f"not an Expr: {e!r}")


# --- evaluation --------------------------------------------------------------

def evaluate(e, x, xi):
    """Evaluate the expression at a point, with precise domain errors."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return x if e.name == "x" else xi
    if isinstance(e, Neg):
        return -evaluate(e.arg, x, xi)
    if isinstance(e, Bin):
        a = evaluate(e.left, x, xi)
        b = evaluate(e.right, x, xi)
        try:
            if e.op == "+":
                return a + b
            if e.op == "-":
                return a - b
            if e.op == "*":
                return a * b
            if e.op == "/":
                if b == 0.0:
                    raise DomainError(f"division by zero in {pretty(e)}")
                return a / b
            r = a ** b
            if isinstance(r, complex):
                raise DomainError(f"non-real power in {pretty(e)}")
            return r
        except OverflowError:
            raise DomainError(f"overflow in {pretty(e)}") from None
        except ZeroDivisionError:
            raise DomainError(f"division by zero in {pretty(e)}") from None
        except ValueError:
            raise DomainError(f"domain violation in {pretty(e)}") from None
    if isinstance(e, Call):
        args = [evaluate(a, x, xi) for a in e.args]
        try:
            return _SCALAR_FUNCS[e.fn](*args)
        except (ValueError, OverflowError, ZeroDivisionError):
            raise DomainError(
                f"{e.fn}({', '.join(_fmt_num(a) for a in args)}) is undefined") from None
    raise TypeError(f"not an Expr: {e!r}")


def _checked_log(v):
    if v <= 0.0:
        raise ValueError("log of non-positive")
    return math.log(v)


def _checked_sqrt(v):
    if v < 0.0:
        raise ValueError("sqrt of negative")
    return math.sqrt(v)


_SCALAR_FUNCS = {
    "sin": math.sin, "cos": math.cos, "tan": math.tan, "tanh": math.tanh,
    "exp": math.exp, "log": _checked_log, "sqrt": _checked_sqrt,
    "abs": abs, "atan2": math.atan2,
}

_ARRAY_FUNCS = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "tanh": np.tanh,
    "exp": np.exp, "log": np.log, "sqrt": np.sqrt,
    "abs": np.abs, "atan2": np.arctan2,
}


def _emit(e):
    """Emit python source for the expression (fully parenthesized)."""
    if isinstance(e, Num):
        return f"({e.value!r})"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{_emit(e.arg)})"
    if isinstance(e, Bin):
        op = "**" if e.op == "^" else e.op
        return f"({_emit(e.left)}{op}{_emit(e.right)})"
    if isinstance(e, Call):
        return f"_f_{e.fn}({', '.join(_emit(a) for a in e.args)})"
    raise TypeError(f"not an Expr: {e!r}")


@lru_cache(maxsize=None)
def scalar_fn(e):
    """Compile to a fast scalar callable ``f(x, xi) -> float``.

    Domain violations raise :class:`DomainError`.
    """
    ns = {f"_f_{k}": v for k, v in _SCALAR_FUNCS.items()}
    raw = eval(compile(f"lambda x, xi: {_emit(e)}", "<expr>", "eval"), ns)
    text = pretty(e)

    def fn(x, xi):
        try:
            v = raw(x, xi)
        except (ValueError, ZeroDivisionError, OverflowError) as err:
            raise DomainError(f"cannot evaluate {text!r}: {err}") from None
        if isinstance(v, complex):
            raise DomainError(f"non-real value of {text!r}")
        return v

    return fn


@lru_cache(maxsize=None)
def array_fn(e):
    """Compile to a vectorized callable over numpy arrays.

    The result is checked for NaN/Inf; any non-finite entry raises
    :class:`DomainError`.
    """
    ns = {f"_f_{k}": v for k, v in _ARRAY_FUNCS.items()}
    raw = eval(compile(f"lambda x, xi: {_emit(e)}", "<expr>", "eval"), ns)
    text = pretty(e)

    def fn(x, xi):
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        with np.errstate(all="ignore"):
            v = raw(x, xi)
        v = np.asarray(v, dtype=float)
        if v.shape != np.broadcast_shapes(x.shape, xi.shape):
            v = np.broadcast_to(v, np.broadcast_shapes(x.shape, xi.shape)).copy()
        if not np.all(np.isfinite(v)):
            raise DomainError(f"non-finite value of {text!r}")
        return v

    return fn


# --- numerical gradient ------------------------------------------------------

_EPS_CBRT = float(np.finfo(float).eps) ** (1.0 / 3.0)  # ~ 6.06e-6


def _diff(fn, x, xi, which, step):
    if which == 0:
        d1 = (fn(x + step, xi) - fn(x - step, xi)) / (2.0 * step)
        d2 = (fn(x + step / 2, xi) - fn(x - step / 2, xi)) / step
    else:
        d1 = (fn(x, xi + step) - fn(x, xi - step)) / (2.0 * step)
        d2 = (fn(x, xi + step / 2) - fn(x, xi - step / 2)) / step
    return (4.0 * d2 - d1) / 3.0  # one Richardson level


def grad(e, x, xi, scale=1.0):
    """Central-difference gradient ``(df/dx, df/dxi)`` at a point.

    Step per variable is ``scale * max(1, |v|) * eps**(1/3)`` with one
    Richardson extrapolation level; relative accuracy around 1e-8 on
    smooth inputs.  Constants and bare variables short-circuit exactly.
    """
    if isinstance(e, Num):
        return 0.0, 0.0
    if isinstance(e, Var):
        return (1.0, 0.0) if e.name == "x" else (0.0, 1.0)
    fn = scalar_fn(e)
    hx = scale * max(1.0, abs(x)) * _EPS_CBRT
    hxi = scale * max(1.0, abs(xi)) * _EPS_CBRT
    gx = _diff(fn, x, xi, 0, hx) if depends_on(e, "x") else 0.0
    gxi = _diff(fn, x, xi, 1, hxi) if depends_on(e, "xi") else 0.0
    return gx, gxi


def grad_arrays(e, x, xi, scale=1.0):
    """Vectorized :func:`grad` over numpy arrays of points."""
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    shape = np.broadcast_shapes(x.shape, xi.shape)
    if isinstance(e, Num):
        return np.zeros(shape), np.zeros(shape)
    if isinstance(e, Var):
        ones, zeros = np.ones(shape), np.zeros(shape)
        return (ones, zeros) if e.name == "x" else (zeros, ones)
    fn = array_fn(e)
    if depends_on(e, "x"):
        hx = scale * np.maximum(1.0, np.abs(x)) * _EPS_CBRT
        d1 = (fn(x + hx, xi) - fn(x - hx, xi)) / (2.0 * hx)
        d2 = (fn(x + hx / 2, xi) - fn(x - hx / 2, xi)) / hx
        gx = np.broadcast_to((4.0 * d2 - d1) / 3.0, shape)
    else:
        gx = np.zeros(shape)
    if depends_on(e, "xi"):
        hxi = scale * np.maximum(1.0, np.abs(xi)) * _EPS_CBRT
        d1 = (fn(x, xi + hxi) - fn(x, xi - hxi)) / (2.0 * hxi)
        d2 = (fn(x, xi + hxi / 2) - fn(x, xi - hxi / 2)) / hxi
        gxi = np.broadcast_to((4.0 * d2 - d1) / 3.0, shape)
    else:
        gxi = np.zeros(shape)
    return gx, gxi


def depends_on(e, name):
    """True if the variable ``name`` occurs in the expression."""
    if isinstance(e, Var):
        return e.name == name
    if isinstance(e, Neg):
        return depends_on(e.arg, name)
    if isinstance(e, Bin):
        return depends_on(e.left, name) or depends_on(e.right, name)
    if isinstance(e, Call):
        return any(depends_on(a, name) for a in e.args)
    return False
