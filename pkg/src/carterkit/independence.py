"""Functional independence of conserved quantities via sampled gradient rank."""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np

from .bracket import bracket_from_gradients
from .errors import DomainError, SamplerStarvation, SingularJacobianError, TransformError
from .expr import Expr, kernel
from .geometry import transport_jacobian
from .system_model import Chart, PhaseState, Sampler

# A function given in the sampling chart, or in another chart of the same system.
Function = Union[Expr, tuple[Expr, Chart]]

DEFAULT_REL_TOL = 1e-8
MODAL_FRACTION = 0.95


def _split(f: Function, chart: Chart) -> tuple[Expr, Chart]:
    if isinstance(f, tuple):
        return f
    return f, chart


def gradient_matrix(fs: Sequence[Function], state: PhaseState, chart: Chart,
                    params: Mapping[str, float] | None = None) -> np.ndarray:
    """Rows are phase-space gradients ∇fᵢ at ``state`` (coordinates of ``chart``).

    A function living in another chart is differentiated there at the
    transported state and pulled back with the transport Jacobian.
    """
    n = chart.n
    rows = []
    cache: dict[int, tuple[PhaseState, np.ndarray]] = {}
    for f in fs:
        expr, src = _split(f, chart)
        if src is chart:
            at, jac = state, None
        else:
            hit = cache.get(id(src))
            if hit is None:
                hit = transport_jacobian(state, chart, src, params)
                cache[id(src)] = hit
            at, jac = hit
        _, g = kernel(expr, src.phase_symbols, src.phase_symbols, params).grad(*at.q, *at.p)
        g = np.asarray(g, dtype=float)
        rows.append(g if jac is None else g @ jac)
    return np.array(rows).reshape(len(fs), 2 * n)


def pivoted_rank(G: np.ndarray, rel_tol: float = DEFAULT_REL_TOL) -> tuple[int, list[float]]:
    """Rank of the row space by modified Gram-Schmidt with row pivoting.

    Rows are normalised first.  At each step the remaining row with the
    largest residual norm becomes the pivot; it is accepted while its norm is
    at least ``rel_tol`` times the first pivot.  Returns (rank, all pivot
    magnitudes in selection order).
    """
    R = np.array(G, dtype=float, copy=True)
    norms = np.linalg.norm(R, axis=1)
    nz = norms > 0
    R[nz] /= norms[nz, None]
    remaining = list(range(len(R)))
    pivots: list[float] = []
    rank = 0
    first = None
    while remaining:
        res = [float(np.linalg.norm(R[i])) for i in remaining]
        k = int(np.argmax(res))
        i = remaining.pop(k)
        mag = res[k]
        pivots.append(mag)
        if first is None:
            first = mag
        if mag == 0.0 or mag < rel_tol * first:
            continue
        rank += 1
        u = R[i] / mag
        for j in remaining:
            R[j] -= (R[j] @ u) * u
    return rank, pivots


@dataclass
class RankReport:
    names: tuple[str, ...]
    ranks: list[int]
    modal: int
    off_modal: int
    pivots: list[list[float]]
    skipped: int = 0
    pairwise_brackets: dict[str, float] = field(default_factory=dict)

    @property
    def samples(self) -> int:
        return len(self.ranks)

    @property
    def modal_fraction(self) -> float:
        return 1.0 - self.off_modal / self.samples if self.samples else 0.0

    @property
    def independent(self) -> int:
        """Verdict: the number of functionally independent functions."""
        return self.modal

    @property
    def all_independent(self) -> bool:
        return self.modal == len(self.names) and self.modal_fraction >= MODAL_FRACTION

    def min_gap(self) -> float:
        """Smallest ratio between the last accepted pivot and the first rejected one."""
        gaps = []
        for r, piv in zip(self.ranks, self.pivots):
            if 0 < r < len(piv) and piv[r] > 0:
                gaps.append(piv[r - 1] / piv[r])
        return min(gaps) if gaps else float("inf")


def functional_rank(fs: Sequence[Function], chart: Chart, n_samples: int,
                    rel_tol: float = DEFAULT_REL_TOL,
                    params: Mapping[str, float] | None = None,
                    rng: np.random.Generator | None = None,
                    names: Sequence[str] | None = None,
                    pairwise: bool = False) -> RankReport:
    """Gradient rank of ``fs`` at admissible samples of ``chart``.

    Samples whose image in another chart has no admissible preimage are
    redrawn and counted in ``skipped``.  With ``pairwise`` the report also
    carries max |{fᵢ, fⱼ}| over samples as a diagnostic.
    """
    if n_samples < 10:
        raise ValueError("n_samples must be >= 10")
    names = tuple(names) if names is not None else tuple(f"f{i + 1}" for i in range(len(fs)))
    sampler = Sampler(chart, params, rng)
    ranks: list[int] = []
    pivots: list[list[float]] = []
    skipped = 0
    brackets = {f"{a},{b}": 0.0 for a, b in itertools.combinations(names, 2)} if pairwise else {}
    while len(ranks) < n_samples:
        st = sampler.sample()
        try:
            G = gradient_matrix(fs, st, chart, params)
        except (TransformError, SingularJacobianError, DomainError):
            skipped += 1
            if skipped > 10 * n_samples:
                raise SamplerStarvation(f"too many untransportable samples in chart {chart.name!r}")
            continue
        r, piv = pivoted_rank(G, rel_tol)
        ranks.append(r)
        pivots.append(piv)
        if pairwise:
            for (i, a), (j, b) in itertools.combinations(enumerate(names), 2):
                v = abs(bracket_from_gradients(G[i], G[j], chart.n))
                brackets[f"{a},{b}"] = max(brackets[f"{a},{b}"], float(v))
    counts = Counter(ranks)
    modal = max(counts, key=lambda r: (counts[r], r))
    return RankReport(names, ranks, modal, n_samples - counts[modal], pivots, skipped, brackets)
