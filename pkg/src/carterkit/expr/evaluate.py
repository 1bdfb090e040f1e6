"""Tree-walking evaluation over floats or dual numbers."""

from __future__ import annotations

import math
from typing import Mapping, Sequence

from ..errors import DomainError, UnboundSymbolError
from .dual import FUNCTION_TABLE, Dual, ipow, new_tag, primal, rpow, tangent
from .nodes import BinOp, Call, Const, Expr, Neg, Sym, free_vars

Environment = Mapping[str, float]

_INT_TOL = 1e-12


def integer_exponent(value: float) -> int | None:
    k = round(value)
    if abs(k - value) < _INT_TOL:
        return int(k)
    return None


def evaluate(e: Expr, env: Mapping) -> float:
    """Value of ``e`` with symbols bound by ``env``.

    Environment values may be floats or ``Dual`` numbers; the result has the
    matching type.  Raises UnboundSymbolError for a missing binding and
    DomainError (carrying the failing subexpression) when an operation leaves
    the real domain.
    """
    return _eval(e, env)


def _eval(e: Expr, env):
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Sym):
        try:
            return env[e.name]
        except KeyError:
            raise UnboundSymbolError(e.name) from None
    if isinstance(e, Neg):
        return -_eval(e.arg, env)
    if isinstance(e, Call):
        return _call(e, _eval(e.arg, env))
    a = _eval(e.left, env)
    b = _eval(e.right, env)
    op = e.op
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        if primal(b) == 0.0:
            raise DomainError("division by zero", e)
        return a / b
    return _power(e, a, b)


def _power(e: BinOp, a, b):
    av = primal(a)
    k = integer_exponent(primal(b)) if not isinstance(b, Dual) else None
    if k is not None:
        if av == 0.0 and k < 0:
            raise DomainError("division by zero", e)
        if isinstance(a, Dual):
            return ipow(a, k)
        try:
            return a ** k
        except OverflowError:
            raise DomainError("overflow", e) from None
    if av < 0.0:
        raise DomainError("non-integer power of a negative base", e)
    if av == 0.0:
        if primal(b) <= 0.0:
            raise DomainError("zero to a non-positive power", e)
        if isinstance(a, Dual) or isinstance(b, Dual):
            raise DomainError("derivative of a fractional power at zero", e)
        return 0.0
    try:
        return rpow(a, b)
    except OverflowError:
        raise DomainError("overflow", e) from None


def _call(e: Call, x):
    v = primal(x)
    f = e.func
    if f == "sqrt":
        if v < 0.0:
            raise DomainError("sqrt of a negative number", e)
        if v == 0.0 and isinstance(x, Dual):
            raise DomainError("derivative of sqrt at zero", e)
    elif f == "log" and v <= 0.0:
        raise DomainError("log of a non-positive number", e)
    try:
        return FUNCTION_TABLE[f](x)
    except (OverflowError, ValueError, ZeroDivisionError) as exc:
        raise DomainError(f"{f} failed ({exc})", e) from None


def partial(e: Expr, var: str, env: Environment) -> float:
    """∂e/∂var at ``env`` by one forward dual pass seeded on ``var``."""
    if var not in env:
        if var not in free_vars(e):
            return 0.0
        raise UnboundSymbolError(var)
    tag = new_tag()
    denv = dict(env)
    denv[var] = Dual(env[var], 1.0, tag)
    d = tangent(_eval(e, denv), tag)
    return float(d)


def gradient(e: Expr, variables: Sequence[str], env: Environment) -> list[float]:
    """Vector of partials of ``e`` over ``variables``, one dual pass each."""
    return [partial(e, v, env) for v in variables]


def is_finite(x) -> bool:
    return math.isfinite(primal(x))
