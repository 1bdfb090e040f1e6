"""Expression trees: parsing, printing, evaluation and forward-mode derivatives."""

from .compile import Kernel, kernel
from .dual import Dual, DualNumber, new_tag, primal, tangent
from .evaluate import Environment, evaluate, gradient, partial
from .nodes import (
    FUNCTIONS,
    BinOp,
    Call,
    Const,
    Expr,
    Neg,
    Sym,
    add_all,
    as_expr,
    call,
    children,
    const,
    free_vars,
    node_count,
    substitute,
    symbols,
    to_string,
)
from .parser import parse, tokenize

__all__ = [
    "FUNCTIONS", "BinOp", "Call", "Const", "Dual", "DualNumber", "Environment", "Expr",
    "Kernel", "Neg", "Sym", "add_all", "as_expr", "call", "children", "const", "evaluate",
    "free_vars", "gradient", "kernel", "new_tag", "node_count", "parse", "partial",
    "primal", "substitute", "symbols", "tangent", "to_string", "tokenize",
]
