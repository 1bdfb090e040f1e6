"""Canonical point transformations between charts.

Every chart stores only its forward map to the reference Cartesian chart.
Coordinates go through q_cart = F(q); momenta transform with the inverse
transpose of J = ∂F/∂q, which keeps the transformation canonical.  The inverse
map is found by damped Newton iteration.

All routines here are generic over ``float`` and ``Dual`` entries, so the
derivative of a whole chart-to-chart transport can be taken with nested
forward-mode passes (see ``transport_jacobian``).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import DomainError, SamplerStarvation, SingularJacobianError, TransformError
from .expr import Dual, Expr, evaluate, kernel, new_tag, primal, tangent
from .system_model import DET_TOL, Chart, PhaseState, Sampler, SystemDefinition

CARTESIAN = "cartesian"
NEWTON_TOL = 1e-12
NEWTON_MAXITER = 50


# --- small dense linear algebra (n ≤ 6, generic entries) -------------------

def gauss_solve(A: Sequence[Sequence], b: Sequence) -> tuple[list, object]:
    """Solve A x = b by Gaussian elimination with partial pivoting.

    Returns (x, det A).  Pivots are chosen on primal magnitudes so the routine
    also works for matrices of dual numbers.
    """
    n = len(A)
    M = [list(row) + [b[i]] for i, row in enumerate(A)]
    det = 1.0
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(primal(M[r][col])))
        if primal(M[piv][col]) == 0.0:
            return [math.nan] * n, 0.0
        if piv != col:
            M[col], M[piv] = M[piv], M[col]
            det = -det
        pv = M[col][col]
        det = det * pv
        for r in range(col + 1, n):
            f = M[r][col] / pv
            if primal(f) != 0.0:
                for c in range(col, n + 1):
                    M[r][c] = M[r][c] - f * M[col][c]
    x = [0.0] * n
    for r in range(n - 1, -1, -1):
        acc = M[r][n]
        for c in range(r + 1, n):
            acc = acc - M[r][c] * x[c]
        x[r] = acc / M[r][r]
    return x, det


def transpose(A):
    return [list(col) for col in zip(*A)]


def matvec(A, x):
    out = []
    for row in A:
        acc = 0.0
        for a, b in zip(row, x):
            acc = acc + a * b
        out.append(acc)
    return out


# --- forward map and Jacobian ---------------------------------------------

def forward_point(chart: Chart, q: Sequence) -> list:
    if all(isinstance(v, float) for v in q):
        return [kernel(f, chart.coords).value(*q) for f in chart.to_cartesian]
    env = dict(zip(chart.coords, q))
    return [evaluate(f, env) for f in chart.to_cartesian]


def chart_jacobian(chart: Chart, q: Sequence) -> list[list]:
    """J[a][b] = ∂x_a/∂q_b.  Entries are duals when ``q`` carries duals."""
    if all(isinstance(v, float) for v in q):
        rows = []
        for f in chart.to_cartesian:
            _, g = kernel(f, chart.coords, chart.coords).grad(*q)
            rows.append(list(g))
        return rows
    cols = []
    for b in range(chart.n):
        tag = new_tag()
        env = {c: (Dual(v, 1.0, tag) if i == b else v) for i, (c, v) in enumerate(zip(chart.coords, q))}
        cols.append([tangent(evaluate(f, env), tag) for f in chart.to_cartesian])
    return transpose(cols)


def _to_cartesian(chart: Chart, q: Sequence, p: Sequence):
    x = forward_point(chart, q)
    J = chart_jacobian(chart, q)
    p_cart, det = gauss_solve(transpose(J), p)
    if not abs(primal(det)) > DET_TOL:
        raise SingularJacobianError(f"chart {chart.name!r}: |det J| = {abs(primal(det)):.3g} at q={_fmt(q)}")
    return x, p_cart


def _fmt(q) -> str:
    return "(" + ", ".join(f"{primal(v):.6g}" for v in q) + ")"


def pushforward(state: PhaseState, chart: Chart) -> PhaseState:
    """Map a chart state to the reference Cartesian chart (p_cart = J⁻ᵀ p)."""
    x, p = _to_cartesian(chart, [float(v) for v in state.q], [float(v) for v in state.p])
    return PhaseState(CARTESIAN, tuple(x), tuple(p))


# --- inverse map ----------------------------------------------------------

class _Inverter:
    """Damped Newton solver for F(q) = x with a fixed bank of start points."""

    def __init__(self, chart: Chart, params: Mapping[str, float] | None, n_seeds: int = 12):
        self.chart = chart
        self.params = dict(params or {})
        lo_hi = [chart.range_of(c) for c in chart.coords]
        centre = [0.5 * (lo + hi) for lo, hi in lo_hi]
        seeds = [centre] if chart.admissible(centre, self.params, 0.0) else []
        try:
            sampler = Sampler(chart, self.params, np.random.default_rng(12345), margin=0.0)
            seeds += [list(s.q) for s in sampler.samples(n_seeds)]
        except SamplerStarvation:
            pass
        self.seeds = seeds

    def residual(self, q, x):
        try:
            fx = forward_point(self.chart, q)
        except DomainError:
            return None
        return [a - b for a, b in zip(fx, x)]

    def newton(self, x: Sequence[float], q0: Sequence[float]) -> list[float] | None:
        q = [float(v) for v in q0]
        r = self.residual(q, x)
        if r is None:
            return None
        scale = 1.0 + max(abs(v) for v in x)
        norm = max(abs(v) for v in r)
        polished = False
        for _ in range(NEWTON_MAXITER):
            if norm <= NEWTON_TOL * scale:
                if polished:
                    return q
                polished = True
            try:
                J = chart_jacobian(self.chart, q)
            except DomainError:
                return None
            step, det = gauss_solve(J, r)
            if det == 0.0 or not all(math.isfinite(s) for s in step):
                return q if polished else None
            lam = 1.0
            while lam > 1e-6:
                trial = [a - lam * s for a, s in zip(q, step)]
                rt = self.residual(trial, x)
                if rt is not None:
                    nt = max(abs(v) for v in rt)
                    if nt < norm or (polished and nt <= norm):
                        break
                lam *= 0.5
            else:
                return q if polished else None
            q, r, norm = trial, rt, nt
        return q if norm <= NEWTON_TOL * scale else None

    def solve(self, x: Sequence[float], hint: Sequence[float] | None = None) -> list[float]:
        starts = ([list(hint)] if hint is not None else []) + self.seeds
        for q0 in starts:
            q = self.newton(x, q0)
            if q is not None and self.chart.admissible(q, self.params, 0.0):
                return q
        raise TransformError(f"no admissible preimage in chart {self.chart.name!r} for x={_fmt(x)}")


_inverters: dict[int, tuple[Chart, _Inverter]] = {}


def _inverter(chart: Chart, params: Mapping[str, float] | None) -> _Inverter:
    key = id(chart)
    hit = _inverters.get(key)
    if hit is None or hit[0] is not chart or hit[1].params != dict(params or {}):
        hit = (chart, _Inverter(chart, params))
        _inverters[key] = hit
    return hit[1]


def from_cartesian(cart: PhaseState, chart: Chart, params: Mapping[str, float] | None = None,
                   hint: Sequence[float] | None = None) -> PhaseState:
    """Inverse of ``pushforward``: q = F⁻¹(x) by Newton, p = Jᵀ p_cart."""
    q = _inverter(chart, params).solve(cart.q, hint)
    J = chart_jacobian(chart, q)
    p = matvec(transpose(J), cart.p)
    return PhaseState(chart.name, tuple(q), tuple(p))


def transport(state: PhaseState, source: Chart, target: Chart,
              params: Mapping[str, float] | None = None,
              hint: Sequence[float] | None = None) -> PhaseState:
    """Move a state between charts through the Cartesian reference."""
    if source is target:
        return state
    return from_cartesian(pushforward(state, source), target, params, hint)


def transport_jacobian(state: PhaseState, source: Chart, target: Chart,
                       params: Mapping[str, float] | None = None,
                       root: Sequence[float] | None = None) -> tuple[PhaseState, np.ndarray]:
    """Target state and ∂(q', p')/∂(q, p), a 2n×2n matrix, via nested duals.

    The target coordinates come from Newton; their tangent is recovered by one
    extra Newton step in dual arithmetic from the converged root, which is
    exact to first order.
    """
    n = source.n
    if source is target:
        return state, np.eye(2 * n)
    end = transport(state, source, target, params, hint=root)
    q_star = list(end.q)
    z0 = list(state.q) + list(state.p)
    cols = []
    for k in range(2 * n):
        tag = new_tag()
        z = [Dual(v, 1.0, tag) if i == k else v for i, v in enumerate(z0)]
        x, p_cart = _to_cartesian(source, z[:n], z[n:])
        fx = forward_point(target, q_star)
        resid = [a - b for a, b in zip(fx, x)]
        delta, _ = gauss_solve(chart_jacobian(target, q_star), resid)
        q_new = [a - d for a, d in zip(q_star, delta)]
        p_new = matvec(transpose(chart_jacobian(target, q_new)), p_cart)
        cols.append([float(primal(tangent(v, tag))) for v in q_new + p_new])
    return end, np.array(cols).T


def pullback_hamiltonian_value(H_cart: Expr, chart: Chart, state: PhaseState,
                               params: Mapping[str, float] | None = None,
                               cart_chart: Chart | None = None) -> float:
    """Value of a Cartesian-chart Hamiltonian at the pushed-forward state."""
    cs = pushforward(state, chart)
    if cart_chart is not None:
        env = cart_chart.env(PhaseState(cart_chart.name, cs.q, cs.p), params)
    else:
        names = [f"x{i + 1}" for i in range(chart.n)]
        env = dict(params or {})
        env.update(zip(names, cs.q))
        env.update(zip([f"p_{v}" for v in names], cs.p))
    return evaluate(H_cart, env)


@dataclass
class ChartResidual:
    pair: tuple[str, str]
    residual: float
    samples: int
    skipped: int
    tol: float

    @property
    def passed(self) -> bool:
        return self.samples > 0 and self.residual <= self.tol


def verify_chart_equivalence(sysdef: SystemDefinition, n_samples: int, tol: float,
                             rng: np.random.Generator | None = None) -> list[ChartResidual]:
    """max |H_A(s) − H_B(T_{A→B}(s))| for every ordered-once presentation pair.

    States whose image has no admissible preimage in B, or which hit a
    singular Jacobian, are skipped and counted.
    """
    pres = sysdef.presentations
    if len(pres) < 2:
        raise ValueError("chart equivalence needs at least two presentations")
    rng = rng if rng is not None else np.random.default_rng(42)
    params = sysdef.parameters
    out = []
    for a, b in itertools.combinations(pres, 2):
        sampler = Sampler(a.chart, params, rng)
        ka = kernel(a.hamiltonian, a.chart.phase_symbols, (), params)
        kb = kernel(b.hamiltonian, b.chart.phase_symbols, (), params)
        worst, used, skipped = 0.0, 0, 0
        attempts = 0
        while used < n_samples:
            attempts += 1
            if attempts > 20 * n_samples:
                break
            s = sampler.sample()
            try:
                t = transport(s, a.chart, b.chart, params)
                if not b.chart.admissible(t.q, params):
                    raise TransformError("image outside target domain margin")
                hb = kb.value(*t.q, *t.p)
            except (TransformError, SingularJacobianError, DomainError):
                skipped += 1
                continue
            ha = ka.value(*s.q, *s.p)
            worst = max(worst, abs(ha - hb))
            used += 1
        out.append(ChartResidual((a.chart.name, b.chart.name), worst, used, skipped, tol))
    return out
