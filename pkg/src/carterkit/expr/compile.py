"""Straight-line code generation for value-and-gradient evaluation.

The tree-walking evaluator with ``Dual`` numbers needs one pass per variable.
For hot loops (orbit integration, Monte-Carlo bracket checks) a ``Kernel``
emits Python source that propagates the whole tangent vector at once, with
structurally equal subtrees computed only once.  Numerically it is the same
forward-mode chain rule; tests pin it against ``partial``.
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Mapping, Sequence

from ..errors import DomainError, UnboundSymbolError
from .evaluate import evaluate, integer_exponent
from .nodes import BinOp, Call, Const, Expr, Neg, Sym, free_vars


def _rpow(a, b):
    if a < 0.0:
        raise ValueError("non-integer power of a negative base")
    return math.pow(a, b)


def _times(a: str, b: str) -> str:
    if a == "1.0":
        return b
    if b == "1.0":
        return a
    return f"{a} * {b}"


def _sign(a):
    return 1.0 if a > 0 else (-1.0 if a < 0 else 0.0)


_NAMESPACE = {
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "exp": math.exp,
    "log": math.log,
    "sqrt": math.sqrt,
    "fabs": math.fabs,
    "_rpow": _rpow,
    "_sign": _sign,
}


class _Emitter:
    def __init__(self, inputs: Sequence[str], wrt: Sequence[str], constants: Mapping[str, float]):
        self.inputs = {name: f"a{i}" for i, name in enumerate(inputs)}
        self.wrt = list(wrt)
        self.constants = dict(constants)
        self.lines: list[str] = []
        self.memo: dict[Expr, tuple[str, list[str | None]]] = {}
        self.n = 0

    def tmp(self, code: str) -> str:
        name = f"t{self.n}"
        self.n += 1
        self.lines.append(f"    {name} = {code}")
        return name

    def visit(self, e: Expr):
        hit = self.memo.get(e)
        if hit is not None:
            return hit
        out = self._visit(e)
        self.memo[e] = out
        return out

    def _zero(self):
        return [None] * len(self.wrt)

    def _visit(self, e: Expr):
        if isinstance(e, Const):
            return repr(e.value), self._zero()
        if isinstance(e, Sym):
            if e.name in self.constants:
                return repr(float(self.constants[e.name])), self._zero()
            if e.name not in self.inputs:
                raise UnboundSymbolError(e.name)
            d = ["1.0" if w == e.name else None for w in self.wrt]
            return self.inputs[e.name], d
        if isinstance(e, Neg):
            v, d = self.visit(e.arg)
            return self.tmp(f"-{v}"), [None if x is None else self.tmp(f"-{x}") for x in d]
        if isinstance(e, Call):
            return self._call(e)
        return self._binop(e)

    def _binop(self, e: BinOp):
        a, da = self.visit(e.left)
        b, db = self.visit(e.right)
        op = e.op
        if op in "+-":
            v = self.tmp(f"{a} {op} {b}")
            d = []
            for x, y in zip(da, db):
                if x is None and y is None:
                    d.append(None)
                elif y is None:
                    d.append(x)
                elif x is None:
                    d.append(y if op == "+" else self.tmp(f"-{y}"))
                else:
                    d.append(self.tmp(f"{x} {op} {y}"))
            return v, d
        if op == "*":
            v = self.tmp(f"{a} * {b}")
            d = []
            for x, y in zip(da, db):
                terms = []
                if y is not None:
                    terms.append(_times(a, y))
                if x is not None:
                    terms.append(_times(x, b))
                d.append(self.tmp(" + ".join(terms)) if terms else None)
            return v, d
        if op == "/":
            v = self.tmp(f"{a} / {b}")
            d = []
            for x, y in zip(da, db):
                if x is None and y is None:
                    d.append(None)
                elif y is None:
                    d.append(self.tmp(f"{x} / {b}"))
                elif x is None:
                    d.append(self.tmp(f"-{v} * {y} / {b}"))
                else:
                    d.append(self.tmp(f"({x} - {v} * {y}) / {b}"))
            return v, d
        # power
        k = integer_exponent(e.right.value) if isinstance(e.right, Const) else None
        if k is not None:
            if k == 0:
                return "1.0", self._zero()
            v = self.tmp(f"{a} ** {k}")
            if all(x is None for x in da):
                return v, self._zero()
            if k == 1:
                coef = "1.0"
            elif k == 2:
                coef = self.tmp(f"2 * {a}")
            else:
                coef = self.tmp(f"{k} * {a} ** {k - 1}")
            return v, [None if x is None else self.tmp(_times(coef, x)) for x in da]
        v = self.tmp(f"_rpow({a}, {b})")
        d = []
        for x, y in zip(da, db):
            terms = []
            if x is not None:
                terms.append(f"{b} * {x} / {a}")
            if y is not None:
                terms.append(f"log({a}) * {y}")
            d.append(self.tmp(f"{v} * ({' + '.join(terms)})") if terms else None)
        return v, d

    def _call(self, e: Call):
        a, da = self.visit(e.arg)
        f = e.func
        if f == "abs":
            v = self.tmp(f"fabs({a})")
            coef = None if all(x is None for x in da) else self.tmp(f"_sign({a})")
        else:
            v = self.tmp(f"{f}({a})")
            if all(x is None for x in da):
                coef = None
            elif f == "sin":
                coef = self.tmp(f"cos({a})")
            elif f == "cos":
                coef = self.tmp(f"-sin({a})")
            elif f == "tan":
                coef = self.tmp(f"1.0 / cos({a}) ** 2")
            elif f == "exp":
                coef = v
            elif f == "log":
                coef = self.tmp(f"1.0 / {a}")
            else:  # sqrt
                coef = self.tmp(f"0.5 / {v}")
        return v, [None if x is None else self.tmp(_times(coef, x)) for x in da]


class Kernel:
    """Compiled evaluator of ``expr`` over positional ``inputs``.

    ``value(*args)`` returns the value; ``grad(*args)`` returns
    ``(value, (d/d wrt[0], ...))``.  Symbols listed in ``constants`` are baked
    in as literals.
    """

    def __init__(self, expr: Expr, inputs: Sequence[str], wrt: Sequence[str] = (),
                 constants: Mapping[str, float] | None = None):
        self.expr = expr
        self.inputs = tuple(inputs)
        self.wrt = tuple(wrt)
        self.constants = dict(constants or {})
        missing = free_vars(expr) - set(self.inputs) - set(self.constants)
        if missing:
            raise UnboundSymbolError(sorted(missing)[0])
        args = ", ".join(f"a{i}" for i in range(len(self.inputs)))

        em = _Emitter(self.inputs, (), self.constants)
        v, _ = em.visit(expr)
        src = f"def value({args}):\n" + "\n".join(em.lines + [f"    return {v}"]) + "\n"

        em = _Emitter(self.inputs, self.wrt, self.constants)
        v, d = em.visit(expr)
        grads = ", ".join("0.0" if x is None else x for x in d)
        tail = "," if len(d) == 1 else ""
        src += f"def grad({args}):\n" + "\n".join(em.lines + [f"    return {v}, ({grads}{tail})"]) + "\n"

        ns = dict(_NAMESPACE)
        exec(compile(src, f"<kernel {expr}>", "exec"), ns)
        self._value = ns["value"]
        self._grad = ns["grad"]
        self.source = src

    def value(self, *args) -> float:
        try:
            return self._value(*args)
        except (ValueError, ZeroDivisionError, OverflowError) as exc:
            raise self._locate(args, exc) from None

    def grad(self, *args):
        try:
            return self._grad(*args)
        except (ValueError, ZeroDivisionError, OverflowError) as exc:
            raise self._locate(args, exc) from None

    def _locate(self, args, exc) -> DomainError:
        env = dict(self.constants)
        env.update(zip(self.inputs, args))
        try:
            evaluate(self.expr, env)
        except DomainError as err:
            return err
        return DomainError(f"derivative evaluation failed ({exc})", self.expr)


@lru_cache(maxsize=4096)
def _cached(expr: Expr, inputs: tuple, wrt: tuple, constants: tuple) -> Kernel:
    return Kernel(expr, inputs, wrt, dict(constants))


def kernel(expr: Expr, inputs: Sequence[str], wrt: Sequence[str] = (),
           constants: Mapping[str, float] | None = None) -> Kernel:
    """Memoised ``Kernel`` constructor."""
    consts = tuple(sorted((k, float(v)) for k, v in (constants or {}).items()))
    return _cached(expr, tuple(inputs), tuple(wrt), consts)
