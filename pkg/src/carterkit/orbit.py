"""Fixed-step integration of Hamilton's equations with invariant monitoring."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DomainError, IntegrationError
from .expr import Expr, kernel
from .system_model import DOMAIN_MARGIN, Chart, PhaseState

METHODS = ("rk4", "implicit_midpoint")
MIDPOINT_TOL = 1e-13
MIDPOINT_MAXITER = 100


def hamilton_rhs(H: Expr, state: PhaseState, chart: Chart,
                 params: Mapping[str, float] | None = None) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """(dq/dt, dp/dt) = (∂H/∂p, −∂H/∂q)."""
    n = chart.n
    _, g = kernel(H, chart.phase_symbols, chart.phase_symbols, params).grad(*state.q, *state.p)
    return tuple(g[n:]), tuple(-v for v in g[:n])


@dataclass
class Trajectory:
    chart: str
    coords: tuple[str, ...]
    momenta: tuple[str, ...]
    dt: float
    method: str
    states: np.ndarray  # (len, 2n): q then p
    invariant_names: tuple[str, ...] = ()
    invariant_values: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    status: str = "ok"

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(len(self.states))

    @property
    def steps(self) -> int:
        return len(self.states) - 1

    @property
    def drift(self) -> np.ndarray:
        """K(t_k) − K(t_0) for every invariant, shape (len, m)."""
        return self.invariant_values - self.invariant_values[:1]

    def max_abs_drift(self) -> dict[str, float]:
        d = np.abs(self.drift).max(axis=0) if len(self.states) else []
        return {name: float(v) for name, v in zip(self.invariant_names, d)}

    def max_rel_drift(self) -> dict[str, float]:
        """max |K(t) − K(0)| / |K(0)|; absolute drift when K(0) = 0."""
        out = {}
        for j, name in enumerate(self.invariant_names):
            k0 = abs(float(self.invariant_values[0, j]))
            worst = float(np.abs(self.drift[:, j]).max())
            out[name] = worst / k0 if k0 > 0 else worst
        return out

    def state(self, k: int) -> PhaseState:
        n = len(self.coords)
        row = self.states[k]
        return PhaseState(self.chart, tuple(row[:n]), tuple(row[n:]))

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        buf.write(",".join(("t",) + self.coords + self.momenta + self.invariant_names) + "\n")
        for k, (t, row) in enumerate(zip(self.times, self.states)):
            vals = [t, *row]
            if self.invariant_names:
                vals.extend(self.invariant_values[k])
            buf.write(",".join("%.17g" % v for v in vals) + "\n")
        if self.status != "ok":
            buf.write(f"# {self.status}\n")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


class _Flow:
    def __init__(self, H: Expr, chart: Chart, params: Mapping[str, float] | None):
        self.n = chart.n
        self._grad = kernel(H, chart.phase_symbols, chart.phase_symbols, params).grad

    def __call__(self, z: list[float]) -> list[float]:
        _, g = self._grad(*z)
        n = self.n
        return list(g[n:]) + [-v for v in g[:n]]


def _rk4(f: _Flow, z: list[float], dt: float) -> list[float]:
    k1 = f(z)
    k2 = f([a + 0.5 * dt * b for a, b in zip(z, k1)])
    k3 = f([a + 0.5 * dt * b for a, b in zip(z, k2)])
    k4 = f([a + dt * b for a, b in zip(z, k3)])
    return [a + dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4) for a, b1, b2, b3, b4 in zip(z, k1, k2, k3, k4)]


def _midpoint(f: _Flow, z: list[float], dt: float) -> list[float]:
    """z' = 2Y − z with Y = z + (dt/2) f(Y), solved by fixed-point iteration."""
    h = 0.5 * dt
    y = [a + h * b for a, b in zip(z, f(z))]
    for _ in range(MIDPOINT_MAXITER):
        y_new = [a + h * b for a, b in zip(z, f(y))]
        err = max(abs(a - b) for a, b in zip(y_new, y))
        y = y_new
        if not math.isfinite(err):
            raise FloatingPointError("non-finite midpoint stage")
        if err <= MIDPOINT_TOL * (1.0 + max(abs(a) for a in y)):
            return [2.0 * a - b for a, b in zip(y, z)]
    raise ArithmeticError("midpoint stage did not converge")


def integrate(H: Expr, s0: PhaseState, chart: Chart, dt: float, steps: int,
              method: str = "implicit_midpoint",
              invariants: Mapping[str, Expr] | Sequence[Expr] = (),
              params: Mapping[str, float] | None = None,
              margin: float = DOMAIN_MARGIN) -> Trajectory:
    """Integrate from ``s0`` for ``steps`` steps of size ``dt``.

    Raises ``IntegrationError`` (with the partial trajectory attached) if a
    state leaves the chart domain by less than ``margin``, becomes
    non-finite, or the midpoint stage fails to converge.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    if not dt > 0:
        raise ValueError("dt must be positive")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if not isinstance(invariants, Mapping):
        invariants = {f"I{j + 1}": e for j, e in enumerate(invariants)}
    names = tuple(invariants)
    syms = chart.phase_symbols
    inv_k = [kernel(e, syms, (), params).value for e in invariants.values()]
    con_k = [kernel(c, chart.coords, (), params).value for c in chart.domain]
    f = _Flow(H, chart, params)
    step = _rk4 if method == "rk4" else _midpoint
    n = chart.n

    states = [list(s0.q) + list(s0.p)]
    values = []

    def finish(status: str) -> Trajectory:
        inv = np.array(values, dtype=float).reshape(len(values), len(names))
        return Trajectory(chart.name, chart.coords, chart.momenta, dt, method,
                          np.array(states[:len(values)], dtype=float), names, inv, status)

    def record(z: list[float], k: int) -> None:
        try:
            values.append([g(*z) for g in inv_k])
        except DomainError as exc:
            raise IntegrationError(f"step {k}: invariant evaluation failed ({exc})", k, "domain",
                                   finish(f"aborted at step {k}: domain")) from None

    if any(c(*s0.q) <= margin for c in con_k):
        raise IntegrationError("initial state is not admissible", 0, "domain", None)
    record(states[0], 0)
    z = states[0]
    for k in range(1, steps + 1):
        reason = None
        try:
            z = step(f, z, dt)
        except DomainError:
            reason = "domain"
        except FloatingPointError:
            reason = "nonfinite"
        except ArithmeticError:
            reason = "nonconvergence" if method == "implicit_midpoint" else "nonfinite"
        if reason is None:
            if not all(math.isfinite(v) for v in z):
                reason = "nonfinite"
            else:
                try:
                    if any(c(*z[:n]) <= margin for c in con_k):
                        reason = "domain"
                except DomainError:
                    reason = "domain"
        if reason is not None:
            raise IntegrationError(f"orbit aborted at step {k}: {reason}", k, reason,
                                   finish(f"aborted at step {k}: {reason}"))
        states.append(z)
        record(z, k)
    return finish("ok")
