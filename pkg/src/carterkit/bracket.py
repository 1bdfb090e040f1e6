"""Numerical Poisson brackets and Monte-Carlo conservation checks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .expr import Expr, kernel
from .system_model import Chart, PhaseState, Sampler


@dataclass
class BracketReport:
    names: tuple[str, str]
    samples: int
    max_abs: float
    mean_abs: float
    worst_state: PhaseState | None
    scale: float
    tol: float
    passed: bool

    @property
    def threshold(self) -> float:
        return self.tol * (1.0 + self.scale)


def phase_gradient(f: Expr, state: PhaseState, chart: Chart,
                   params: Mapping[str, float] | None = None) -> tuple[float, tuple[float, ...]]:
    """Value of ``f`` and its gradient over (q¹..qⁿ, p₁..pₙ)."""
    k = kernel(f, chart.phase_symbols, chart.phase_symbols, params)
    return k.grad(*state.q, *state.p)


def bracket_from_gradients(gf, gg, n: int) -> float:
    """Σᵢ ∂f/∂qⁱ ∂g/∂pᵢ − ∂f/∂pᵢ ∂g/∂qⁱ from stacked (q, p) gradients."""
    total = 0.0
    for i in range(n):
        total += gf[i] * gg[n + i] - gf[n + i] * gg[i]
    return total


def poisson_bracket(f: Expr, g: Expr, state: PhaseState, chart: Chart,
                    params: Mapping[str, float] | None = None) -> float:
    _, gf = phase_gradient(f, state, chart, params)
    _, gg = phase_gradient(g, state, chart, params)
    return bracket_from_gradients(gf, gg, chart.n)


def conservation_check(K: Expr, H: Expr, chart: Chart, n_samples: int, tol: float,
                       params: Mapping[str, float] | None = None,
                       rng: np.random.Generator | None = None,
                       names: tuple[str, str] = ("K", "H")) -> BracketReport:
    """Sample {K, H} over admissible states.

    Passes iff max |{K, H}| ≤ tol · (1 + median ‖∇K‖‖∇H‖), i.e. the residual
    is judged against the scale at which cancellation happens.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    sampler = Sampler(chart, params, rng)
    states = sampler.samples(n_samples)  # SamplerStarvation propagates
    kk = kernel(K, chart.phase_symbols, chart.phase_symbols, params)
    kh = kernel(H, chart.phase_symbols, chart.phase_symbols, params)
    residuals = np.empty(n_samples)
    scales = np.empty(n_samples)
    for s, st in enumerate(states):
        _, gk = kk.grad(*st.q, *st.p)
        _, gh = kh.grad(*st.q, *st.p)
        residuals[s] = abs(bracket_from_gradients(gk, gh, chart.n))
        scales[s] = float(np.linalg.norm(gk) * np.linalg.norm(gh))
    worst = int(np.argmax(residuals))
    scale = float(np.median(scales))
    max_abs = float(residuals[worst])
    return BracketReport(names, n_samples, max_abs, float(residuals.mean()), states[worst],
                         scale, tol, max_abs <= tol * (1.0 + scale))
