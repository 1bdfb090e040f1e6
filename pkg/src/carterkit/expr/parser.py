"""Recursive-descent parser for the expression grammar.

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := unary ('^' factor)?
    unary  := '-' unary | atom
    atom   := number | symbol | func '(' expr ')' | '(' expr ')'

Note that unary minus binds tighter than ``^``: ``-x^2`` is ``(-x)^2``.
"""

from __future__ import annotations

import re
from typing import NamedTuple

from ..errors import ParseError, UnknownFunctionError
from .nodes import FUNCTIONS, BinOp, Call, Const, Expr, Neg, Sym

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


class Token(NamedTuple):
    kind: str  # number | name | op | end
    text: str
    offset: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", _byte_offset(text, pos), text)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(Token(kind, m.group(), pos))
        pos = m.end()
    tokens.append(Token("end", "", len(text)))
    return tokens


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def error(self, message: str, tok: Token | None = None, cls=ParseError):
        tok = tok or self.tok
        return cls(message, _byte_offset(self.text, tok.offset), self.text)

    def accept(self, *ops: str) -> Token | None:
        if self.tok.kind == "op" and self.tok.text in ops:
            tok = self.tok
            self.i += 1
            return tok
        return None

    def expect(self, op: str) -> None:
        if self.accept(op) is None:
            found = self.tok.text or "end of input"
            raise self.error(f"expected {op!r}, found {found!r}")

    def parse(self) -> Expr:
        e = self.expr()
        if self.tok.kind != "end":
            raise self.error(f"unexpected {self.tok.text!r}")
        return e

    def expr(self) -> Expr:
        e = self.term()
        while (tok := self.accept("+", "-")) is not None:
            e = BinOp(tok.text, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.factor()
        while (tok := self.accept("*", "/")) is not None:
            e = BinOp(tok.text, e, self.factor())
        return e

    def factor(self) -> Expr:
        base = self.unary()
        if self.accept("^") is not None:
            return BinOp("^", base, self.factor())
        return base

    def unary(self) -> Expr:
        if self.accept("-") is not None:
            return Neg(self.unary())
        return self.atom()

    def atom(self) -> Expr:
        tok = self.tok
        if tok.kind == "number":
            self.i += 1
            return Const(float(tok.text))
        if tok.kind == "name":
            self.i += 1
            nxt = self.tok
            if nxt.kind == "op" and nxt.text == "(":
                if tok.text not in FUNCTIONS:
                    raise self.error(f"unknown function {tok.text!r}", tok, UnknownFunctionError)
                self.i += 1
                arg = self.expr()
                self.expect(")")
                return Call(tok.text, arg)
            if tok.text in FUNCTIONS:
                raise self.error(f"function {tok.text!r} needs an argument list", nxt)
            return Sym(tok.text)
        if self.accept("(") is not None:
            e = self.expr()
            self.expect(")")
            return e
        found = tok.text or "end of input"
        raise self.error(f"unexpected {found!r}")


def parse(text: str) -> Expr:
    """Parse ``text`` into an expression tree.

    Raises ParseError (with a byte offset) on malformed input and
    UnknownFunctionError for calls to anything outside the supported set.
    """
    return _Parser(text).parse()
