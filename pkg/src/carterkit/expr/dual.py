"""Tagged dual numbers for forward-mode differentiation.

A ``Dual`` carries a value and the derivative along one seeded direction.  The
``tag`` identifies the perturbation; values and derivatives may themselves be
``Dual`` numbers with lower tags, which gives nested (higher-order) derivatives
without perturbation confusion.  Combining two numbers lifts to the larger tag
and treats anything else as a constant at that level.
"""

from __future__ import annotations

import itertools
import math

_tags = itertools.count(1)


def new_tag() -> int:
    return next(_tags)


class Dual:
    __slots__ = ("value", "deriv", "tag")

    def __init__(self, value, deriv=0.0, tag: int = 0):
        self.value = value
        self.deriv = deriv
        self.tag = tag

    @classmethod
    def variable(cls, value, tag: int | None = None) -> "Dual":
        return cls(value, 1.0, new_tag() if tag is None else tag)

    def __repr__(self):
        return f"Dual({self.value!r}, {self.deriv!r}, tag={self.tag})"

    # arithmetic -----------------------------------------------------------

    def __add__(self, other):
        t, a, da, b, db = _lift(self, other)
        return Dual(a + b, da + db, t)

    __radd__ = __add__

    def __sub__(self, other):
        t, a, da, b, db = _lift(self, other)
        return Dual(a - b, da - db, t)

    def __rsub__(self, other):
        t, b, db, a, da = _lift(self, other)
        return Dual(a - b, da - db, t)

    def __mul__(self, other):
        t, a, da, b, db = _lift(self, other)
        return Dual(a * b, a * db + da * b, t)

    __rmul__ = __mul__

    def __truediv__(self, other):
        t, a, da, b, db = _lift(self, other)
        q = a / b
        return Dual(q, (da - q * db) / b, t)

    def __rtruediv__(self, other):
        t, b, db, a, da = _lift(self, other)
        q = a / b
        return Dual(q, (da - q * db) / b, t)

    def __neg__(self):
        return Dual(-self.value, -self.deriv, self.tag)

    def __pos__(self):
        return self

    # comparisons act on the primal value (used for pivoting and branching)
    def __lt__(self, other):
        return primal(self) < primal(other)

    def __le__(self, other):
        return primal(self) <= primal(other)

    def __gt__(self, other):
        return primal(self) > primal(other)

    def __ge__(self, other):
        return primal(self) >= primal(other)

    def __abs__(self):
        return dabs(self)

    def __float__(self):
        return float(primal(self))


def _lift(x, y):
    tx = x.tag if isinstance(x, Dual) else 0
    ty = y.tag if isinstance(y, Dual) else 0
    t = max(tx, ty)
    if tx == t:
        a, da = x.value, x.deriv
    else:
        a, da = x, 0.0
    if ty == t:
        b, db = y.value, y.deriv
    else:
        b, db = y, 0.0
    return t, a, da, b, db


def primal(x) -> float:
    while isinstance(x, Dual):
        x = x.value
    return x


def tangent(x, tag: int):
    """Derivative component of ``x`` along perturbation ``tag`` (0 if absent)."""
    if isinstance(x, Dual) and x.tag == tag:
        return x.deriv
    if isinstance(x, Dual) and x.tag > tag:
        # a newer perturbation sits on top; strip it
        return tangent(x.value, tag)
    return 0.0


def strip(x, tag: int):
    """Value of ``x`` with the perturbation ``tag`` removed."""
    if isinstance(x, Dual):
        if x.tag == tag:
            return x.value
        if x.tag > tag:
            return Dual(strip(x.value, tag), strip(x.deriv, tag), x.tag)
    return x


# elementary functions, generic over float and Dual -----------------------

def dsin(x):
    if isinstance(x, Dual):
        return Dual(dsin(x.value), dcos(x.value) * x.deriv, x.tag)
    return math.sin(x)


def dcos(x):
    if isinstance(x, Dual):
        return Dual(dcos(x.value), -dsin(x.value) * x.deriv, x.tag)
    return math.cos(x)


def dtan(x):
    if isinstance(x, Dual):
        c = dcos(x.value)
        return Dual(dtan(x.value), x.deriv / (c * c), x.tag)
    return math.tan(x)


def dexp(x):
    if isinstance(x, Dual):
        e = dexp(x.value)
        return Dual(e, e * x.deriv, x.tag)
    return math.exp(x)


def dlog(x):
    if isinstance(x, Dual):
        return Dual(dlog(x.value), x.deriv / x.value, x.tag)
    return math.log(x)


def dsqrt(x):
    if isinstance(x, Dual):
        s = dsqrt(x.value)
        return Dual(s, x.deriv / (2.0 * s), x.tag)
    return math.sqrt(x)


def dabs(x):
    if isinstance(x, Dual):
        v = primal(x.value)
        sign = 1.0 if v > 0 else (-1.0 if v < 0 else 0.0)
        return Dual(dabs(x.value), sign * x.deriv, x.tag)
    return abs(x)


def ipow(x, k: int):
    """``x**k`` for integer ``k`` by repeated multiplication (square-and-multiply)."""
    if k < 0:
        return 1.0 / ipow(x, -k)
    result = 1.0
    base = x
    while k:
        if k & 1:
            result = base * result
        k >>= 1
        if k:
            base = base * base
    return result


def rpow(x, y):
    """Real power with a non-integer exponent; ``x`` must be non-negative."""
    if isinstance(x, Dual) or isinstance(y, Dual):
        return dexp(y * dlog(x))
    return math.pow(x, y)


FUNCTION_TABLE = {
    "sin": dsin,
    "cos": dcos,
    "tan": dtan,
    "exp": dexp,
    "log": dlog,
    "sqrt": dsqrt,
    "abs": dabs,
}

DualNumber = Dual
