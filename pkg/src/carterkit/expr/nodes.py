"""Immutable expression trees.

Every Hamiltonian, separable piece and constant of motion in the toolkit is an
``Expr``.  Nodes are frozen dataclasses, so structural equality and hashing come
for free.  Arithmetic operators are overloaded for building trees in code::

    >>> x, y = symbols("x y")
    >>> str(x**2 + 3*y)
    'x^2+3*y'
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Union

FUNCTIONS = ("sin", "cos", "tan", "sqrt", "exp", "log", "abs")
BINARY_OPS = ("+", "-", "*", "/", "^")

Number = Union[int, float]


class Expr:
    """Base class of all expression nodes."""

    __slots__ = ()

    def __add__(self, other):
        return BinOp("+", self, as_expr(other))

    def __radd__(self, other):
        return BinOp("+", as_expr(other), self)

    def __sub__(self, other):
        return BinOp("-", self, as_expr(other))

    def __rsub__(self, other):
        return BinOp("-", as_expr(other), self)

    def __mul__(self, other):
        return BinOp("*", self, as_expr(other))

    def __rmul__(self, other):
        return BinOp("*", as_expr(other), self)

    def __truediv__(self, other):
        return BinOp("/", self, as_expr(other))

    def __rtruediv__(self, other):
        return BinOp("/", as_expr(other), self)

    def __pow__(self, other):
        return BinOp("^", self, as_expr(other))

    def __rpow__(self, other):
        return BinOp("^", as_expr(other), self)

    def __neg__(self):
        return Neg(self)

    def __str__(self) -> str:
        return to_string(self)


@dataclass(frozen=True, repr=False)
class Const(Expr):
    """A non-negative finite literal.  Negative numbers are ``Neg(Const(...))``."""

    value: float

    def __post_init__(self):
        v = float(self.value)
        if not math.isfinite(v) or v < 0:
            raise ValueError(f"Const must be finite and non-negative, got {self.value!r}")
        object.__setattr__(self, "value", v + 0.0)  # folds -0.0

    def __repr__(self):
        return f"Const({self.value!r})"


@dataclass(frozen=True, repr=False)
class Sym(Expr):
    name: str

    def __repr__(self):
        return f"Sym({self.name!r})"


@dataclass(frozen=True, repr=False)
class Neg(Expr):
    arg: Expr

    def __repr__(self):
        return f"Neg({self.arg!r})"


@dataclass(frozen=True, repr=False)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    def __post_init__(self):
        if self.op not in BINARY_OPS:
            raise ValueError(f"unknown binary operator {self.op!r}")

    def __repr__(self):
        return f"BinOp({self.op!r}, {self.left!r}, {self.right!r})"


@dataclass(frozen=True, repr=False)
class Call(Expr):
    func: str
    arg: Expr

    def __post_init__(self):
        if self.func not in FUNCTIONS:
            raise ValueError(f"unknown function {self.func!r}")

    def __repr__(self):
        return f"Call({self.func!r}, {self.arg!r})"


def const(value: Number) -> Expr:
    """Literal for any finite real; negatives become ``Neg(Const(|v|))``."""
    value = float(value)
    if value < 0:
        return Neg(Const(-value))
    return Const(value)


def as_expr(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, float)):
        return const(value)
    raise TypeError(f"cannot convert {type(value).__name__} to Expr")


def symbols(names: str) -> tuple[Sym, ...]:
    return tuple(Sym(n) for n in names.split())


def call(func: str, arg) -> Call:
    return Call(func, as_expr(arg))


def children(e: Expr) -> tuple[Expr, ...]:
    if isinstance(e, BinOp):
        return (e.left, e.right)
    if isinstance(e, (Neg, Call)):
        return (e.arg,)
    return ()


def free_vars(e: Expr) -> frozenset[str]:
    """Names of all symbols occurring in ``e``."""
    out: set[str] = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if isinstance(node, Sym):
            out.add(node.name)
        else:
            stack.extend(children(node))
    return frozenset(out)


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace symbols by expressions (simultaneously, no re-substitution)."""
    if not mapping:
        return e
    if isinstance(e, Sym):
        return mapping.get(e.name, e)
    if isinstance(e, Const):
        return e
    if isinstance(e, Neg):
        return Neg(substitute(e.arg, mapping))
    if isinstance(e, Call):
        return Call(e.func, substitute(e.arg, mapping))
    return BinOp(e.op, substitute(e.left, mapping), substitute(e.right, mapping))


def add_all(terms: Iterable[Expr]) -> Expr:
    """Left-nested sum of a non-empty sequence."""
    it = iter(terms)
    try:
        acc = next(it)
    except StopIteration:
        return Const(0.0)
    for t in it:
        acc = BinOp("+", acc, t)
    return acc


def node_count(e: Expr) -> int:
    return 1 + sum(node_count(c) for c in children(e))


# --- printing -------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 3}
_UNARY = 4
_ATOM = 5


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return _UNARY
    return _ATOM


def _fmt_number(v: float) -> str:
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def to_string(e: Expr) -> str:
    """Grammar-conformant text; ``parse(to_string(e)) == e`` for every tree."""
    if isinstance(e, Const):
        return _fmt_number(e.value)
    if isinstance(e, Sym):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({to_string(e.arg)})"
    if isinstance(e, Neg):
        return "-" + _wrap(e.arg, _UNARY)
    p = _PREC[e.op]
    if e.op == "^":
        # right-associative; the base must be a unary or an atom
        return _wrap(e.left, _UNARY) + "^" + _wrap(e.right, p)
    return _wrap(e.left, p) + e.op + _wrap(e.right, p + 1)


def _wrap(e: Expr, min_prec: int) -> str:
    s = to_string(e)
    return s if _prec(e) >= min_prec else f"({s})"
