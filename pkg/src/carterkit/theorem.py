"""Construction of Carter-like constants from a separable structure.

Given H = ½ ΣHᵢ / ΣUᵢ with every (Uᵢ, Hᵢ) confined to its own coordinate
block, each

    κᵢ = 2 Uᵢ H − Hᵢ = Σ_{j≠i} (Uᵢ Hⱼ − Uⱼ Hᵢ) / ΣUⱼ

Poisson-commutes with H.  The constants sum to zero, so only #blocks − 1 of
them are independent.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

from .errors import PreconditionError
from .expr import BinOp, Const, Expr, add_all, evaluate, substitute
from .system_model import Chart, Pair, SeparableStructure, validate_separability


@dataclass(frozen=True)
class CarterConstant:
    index: int  # 1-based block index the constant is built for
    quotient: Expr
    product: Expr
    structure: SeparableStructure
    name: str = ""

    @property
    def expr(self) -> Expr:
        """Canonical (product) form."""
        return self.product


def _pieces(s: SeparableStructure) -> tuple[list[Expr], list[Expr]]:
    us = [substitute(pr.U, s.folded) for pr in s.pairs]
    hs = [substitute(pr.H, s.folded) for pr in s.pairs]
    return us, hs


def assemble(us: Sequence[Expr], hs: Sequence[Expr]) -> Expr:
    return BinOp("/", BinOp("*", Const(0.5), add_all(hs)), add_all(us))


def assemble_hamiltonian(s: SeparableStructure) -> Expr:
    """½ (H₁ + … + Hₙ) / (U₁ + … + Uₙ), with folded integrals substituted."""
    us, hs = _pieces(s)
    return assemble(us, hs)


def quotient_form(us: Sequence[Expr], hs: Sequence[Expr], i: int) -> Expr:
    """κ for 0-based block ``i`` written as one quotient.

    For two blocks this is (U₁H₂ − U₂H₁)/(U₁+U₂).
    """
    others = [j for j in range(len(us)) if j != i]
    gain = add_all(BinOp("*", us[i], hs[j]) for j in others)
    loss = add_all(BinOp("*", us[j], hs[i]) for j in others)
    return BinOp("/", BinOp("-", gain, loss), add_all(us))


def product_form(u: Expr, h: Expr, hamiltonian: Expr) -> Expr:
    """2·U·H − Hᵢ."""
    return BinOp("-", BinOp("*", BinOp("*", Const(2.0), u), hamiltonian), h)


def _name(s: SeparableStructure, k: int, i: int) -> str:
    if k < len(s.names):
        return s.names[k]
    return f"kappa{i + 1}"


def carter_constants(s: SeparableStructure, include_redundant: bool = False,
                     hamiltonian: Expr | None = None) -> list[CarterConstant]:
    """Constants of a full or partial split.

    A full split over n blocks yields κ₁ … κ_{n−1}; ``include_redundant`` adds
    κₙ (which makes the set sum to zero).  A partial split yields the single
    constant of its first block.  ``hamiltonian`` overrides the H used in the
    product form, e.g. when a constant of motion plays the role of H.
    """
    if len(s.pairs) < 2:
        raise PreconditionError(f"need at least 2 blocks, got {len(s.pairs)}")
    us, hs = _pieces(s)
    h = hamiltonian if hamiltonian is not None else assemble(us, hs)
    if s.kind == "partial":
        indices: Iterable[int] = [0]
    elif include_redundant:
        indices = range(len(us))
    else:
        indices = range(len(us) - 1)
    out = []
    for k, i in enumerate(indices):
        out.append(CarterConstant(i + 1, quotient_form(us, hs, i), product_form(us[i], hs[i], h), s,
                                  _name(s, k, i)))
    return out


def nested_constants(s: SeparableStructure, inner: SeparableStructure | None = None,
                     chart: Chart | None = None) -> list[CarterConstant]:
    """Apply a partial split again inside the constant it produced.

    The first block's constant K of ``s`` is built as usual.  ``inner`` (by
    default ``s.nested``) must split only coordinates of the second block of
    ``s``; K then plays the role of H for the inner split, and the inner
    constant is 2·U·K − Hᵢ.  Returns [K, inner constants...].
    """
    if inner is not None:
        s = replace(s, nested=inner)
    if s.nested is None:
        raise PreconditionError("no nested structure given")
    if chart is not None:
        bad = [v for v in validate_separability(s, chart) if v.containment.startswith("nested")]
        if bad:
            raise PreconditionError("; ".join(str(v) for v in bad))
    return _chain(s, None)


def _chain(s: SeparableStructure, hamiltonian: Expr | None) -> list[CarterConstant]:
    ks = carter_constants(replace(s, nested=None), hamiltonian=hamiltonian)
    if s.nested is None:
        return ks
    if len(s.pairs) != 2:
        raise PreconditionError("nesting needs a two-block outer split")
    parent = set(s.pairs[1].block)
    used = {b for pr in s.nested.pairs for b in pr.block}
    if not used <= parent:
        raise PreconditionError(
            f"nested split references coordinate(s) {sorted(b + 1 for b in used - parent)} "
            f"outside the parent block {sorted(b + 1 for b in parent)}")
    inner = replace(s.nested, folded={**s.folded, **s.nested.folded})
    return [ks[0]] + _chain(inner, ks[0].quotient)


def all_constants(s: SeparableStructure) -> list[CarterConstant]:
    """Constants of ``s`` followed by those of any nested splits."""
    return _chain(s, None)


def sum_identity_residual(constants: Sequence[CarterConstant],
                          samples: Iterable[Mapping[str, float]]) -> float:
    """max over samples of |Σ κᵢ| for a complete set of full-split constants."""
    if len(constants) < 2:
        raise PreconditionError("sum identity needs the constants of at least two blocks")
    s = constants[0].structure
    if s.kind != "full" or len(constants) != len(s.pairs):
        raise PreconditionError("sum identity needs all n constants of one full split")
    worst = 0.0
    for env in samples:
        worst = max(worst, abs(sum(evaluate(c.product, env) for c in constants)))
    return worst


def hamiltonian_reconstruction_residual(s: SeparableStructure,
                                        samples: Iterable[Mapping[str, float]]) -> float:
    """max |2·(ΣUᵢ)·H − ΣHᵢ| with H assembled from ``s``."""
    us, hs = _pieces(s)
    h = assemble(us, hs)
    expr = BinOp("-", BinOp("*", BinOp("*", Const(2.0), add_all(us)), h), add_all(hs))
    return max((abs(evaluate(expr, env)) for env in samples), default=0.0)


def as_pairs(us: Sequence[Expr], hs: Sequence[Expr]) -> tuple[Pair, ...]:
    return tuple(Pair(u, h, (i,)) for i, (u, h) in enumerate(zip(us, hs)))
