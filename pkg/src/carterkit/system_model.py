"""Phase-space states, charts, separable structures and system definitions.

System files are JSON (see ``SYSTEM_SCHEMA``).  Block indices in files are
1-based coordinate positions; in memory they are 0-based.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, NamedTuple, Sequence

import jsonschema
import numpy as np

from .errors import (
    DomainError,
    ExprError,
    InvariantError,
    ParseError,
    SamplerStarvation,
    SchemaError,
)
from .expr import Expr, Sym, evaluate, free_vars, gradient, parse

MAX_DIM = 6
DOMAIN_MARGIN = 1e-3
MOMENTUM_RANGE = (-2.0, 2.0)
DEFAULT_COORD_RANGE = (-2.0, 2.0)
DET_TOL = 1e-10


@dataclass(frozen=True)
class PhaseState:
    chart: str
    q: tuple[float, ...]
    p: tuple[float, ...]

    def __post_init__(self):
        q = tuple(float(v) for v in self.q)
        p = tuple(float(v) for v in self.p)
        if len(q) != len(p):
            raise ValueError(f"len(q)={len(q)} != len(p)={len(p)}")
        if not 1 <= len(q) <= MAX_DIM:
            raise ValueError(f"dimension {len(q)} outside 1..{MAX_DIM}")
        if not all(math.isfinite(v) for v in q + p):
            raise ValueError("phase state has non-finite components")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @property
    def n(self) -> int:
        return len(self.q)

    def as_array(self) -> np.ndarray:
        return np.array(self.q + self.p)


@dataclass(frozen=True)
class Chart:
    name: str
    coords: tuple[str, ...]
    momenta: tuple[str, ...]
    to_cartesian: tuple[Expr, ...]
    domain: tuple[Expr, ...] = ()
    sample_ranges: Mapping[str, tuple[float, float]] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.coords)

    @property
    def phase_symbols(self) -> tuple[str, ...]:
        return self.coords + self.momenta

    def env(self, state: PhaseState, params: Mapping[str, float] | None = None) -> dict[str, float]:
        env = dict(params or {})
        env.update(zip(self.coords, state.q))
        env.update(zip(self.momenta, state.p))
        return env

    def constraint_values(self, q: Sequence[float], params: Mapping[str, float] | None = None) -> list[float]:
        env = dict(params or {})
        env.update(zip(self.coords, q))
        return [evaluate(c, env) for c in self.domain]

    def admissible(self, q: Sequence[float], params: Mapping[str, float] | None = None,
                   margin: float = DOMAIN_MARGIN) -> bool:
        try:
            return all(v > margin for v in self.constraint_values(q, params))
        except DomainError:
            return False

    def range_of(self, sym: str) -> tuple[float, float]:
        if sym in self.sample_ranges:
            return self.sample_ranges[sym]
        return MOMENTUM_RANGE if sym in self.momenta else DEFAULT_COORD_RANGE

    def jacobian(self, q: Sequence[float]) -> np.ndarray:
        """∂(cartesian)/∂(chart coordinates) at ``q``."""
        env = dict(zip(self.coords, q))
        return np.array([gradient(f, self.coords, env) for f in self.to_cartesian])


@dataclass(frozen=True)
class Pair:
    U: Expr
    H: Expr
    block: tuple[int, ...]  # 0-based coordinate indices


@dataclass(frozen=True)
class SeparableStructure:
    """Claimed decomposition H = ½ ΣHᵢ / ΣUᵢ.

    ``folded`` maps placeholder symbols to first integrals that appear inside
    several Hᵢ and are treated like parameters while checking block purity;
    they are substituted back when constants are built.  ``nested`` is a
    further split of the constant produced for the first block, over the
    coordinates of the second block.
    """

    kind: str  # "full" | "partial"
    pairs: tuple[Pair, ...]
    folded: Mapping[str, Expr] = field(default_factory=dict)
    nested: "SeparableStructure | None" = None
    names: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in ("full", "partial"):
            raise ValueError(f"unknown structure kind {self.kind!r}")

    @property
    def blocks(self) -> list[tuple[int, ...]]:
        return [pr.block for pr in self.pairs]


@dataclass(frozen=True)
class Presentation:
    chart: Chart
    hamiltonian: Expr
    separable: SeparableStructure | None = None
    displayed: str | None = None
    convention_note: str | None = None


@dataclass(frozen=True)
class DeclaredConstant:
    name: str
    chart: Chart
    expr: Expr
    note: str | None = None


@dataclass
class SystemDefinition:
    name: str
    parameters: dict[str, float]
    charts: dict[str, Chart]
    presentations: list[Presentation]
    declared_constants: list[DeclaredConstant] = field(default_factory=list)
    extras: dict[str, Any] = field(default_factory=dict)

    def presentation(self, chart_name: str) -> Presentation:
        for pres in self.presentations:
            if pres.chart.name == chart_name:
                return pres
        raise KeyError(f"no presentation in chart {chart_name!r}")

    def with_parameters(self, overrides: Mapping[str, float]) -> "SystemDefinition":
        unknown = set(overrides) - set(self.parameters)
        if unknown:
            raise SchemaError(f"unknown parameter(s): {', '.join(sorted(unknown))}")
        params = dict(self.parameters)
        params.update({k: float(v) for k, v in overrides.items()})
        return SystemDefinition(self.name, params, self.charts, self.presentations,
                                self.declared_constants, self.extras)


@dataclass
class VerificationReport:
    system: str
    seed: int
    brackets: dict[str, float] = field(default_factory=dict)
    drifts: dict[str, float] = field(default_factory=dict)
    rank: dict[str, Any] = field(default_factory=dict)
    chart_residuals: dict[str, float] = field(default_factory=dict)
    stages: dict[str, Any] = field(default_factory=dict)
    passed: bool = False


class Violation(NamedTuple):
    pair: int  # 1-based
    symbol: str
    containment: str  # "U" | "H" | "blocks" | "nested"

    def __str__(self):
        if self.containment in ("U", "H"):
            return f"pair {self.pair}: {self.containment} mentions {self.symbol!r} outside its block"
        return f"pair {self.pair}: {self.containment}: {self.symbol}"


def validate_separability(s: SeparableStructure, chart: Chart) -> list[Violation]:
    """Free-variable containment check of every (U, H) pair against its block.

    Symbols that are not chart coordinates or momenta count as parameters and
    are always allowed; so are folded-integral placeholders.
    """
    out: list[Violation] = []
    n = chart.n
    seen: list[int] = []
    for i, pr in enumerate(s.pairs, start=1):
        for b in pr.block:
            if not 0 <= b < n:
                out.append(Violation(i, f"coordinate index {b + 1} out of range", "blocks"))
        seen.extend(pr.block)
        if s.kind == "full" and len(pr.block) != 1:
            out.append(Violation(i, "full split needs singleton blocks", "blocks"))
    if sorted(seen) != list(range(n)):
        out.append(Violation(0, "blocks do not partition the coordinates", "blocks"))
    if s.kind == "partial" and len(s.pairs) != 2:
        out.append(Violation(0, "partial split needs exactly two pairs", "blocks"))
    if out:
        return out

    chart_syms = set(chart.phase_symbols)
    for i, pr in enumerate(s.pairs, start=1):
        own_q = {chart.coords[b] for b in pr.block}
        own_p = {chart.momenta[b] for b in pr.block}
        for sym in sorted((free_vars(pr.U) & chart_syms) - own_q):
            out.append(Violation(i, sym, "U"))
        for sym in sorted((free_vars(pr.H) & chart_syms) - own_q - own_p):
            out.append(Violation(i, sym, "H"))

    if s.nested is not None:
        parent = set(s.pairs[1].block) if len(s.pairs) > 1 else set()
        inner = {b for pr in s.nested.pairs for b in pr.block}
        for b in sorted(inner - parent):
            out.append(Violation(2, f"nested split uses coordinate {chart.coords[b]!r} outside the parent block", "nested"))
        if not inner - parent:
            out.extend(_validate_nested(s.nested, chart, sorted(parent)))
    return out


def _validate_nested(s: SeparableStructure, chart: Chart, parent: list[int]) -> list[Violation]:
    sub_coords = tuple(chart.coords[b] for b in parent)
    sub = Chart(chart.name, sub_coords, tuple(chart.momenta[b] for b in parent),
                tuple(Sym(c) for c in sub_coords))
    index = {b: k for k, b in enumerate(parent)}
    remapped = SeparableStructure(
        s.kind,
        tuple(Pair(pr.U, pr.H, tuple(index[b] for b in pr.block)) for pr in s.pairs),
        s.folded, s.nested, s.names,
    )
    outside = set(chart.phase_symbols) - set(sub.phase_symbols)
    out = []
    for v in validate_separability(remapped, sub):
        out.append(v._replace(containment=f"nested {v.containment}"))
    for i, pr in enumerate(s.pairs, start=1):
        for sym in sorted((free_vars(pr.U) | free_vars(pr.H)) & outside):
            out.append(Violation(i, sym, "nested H"))
    return out


# --- sampling -------------------------------------------------------------

class Sampler:
    """Rejection sampler over a chart's admissible region.

    Coordinates are uniform on their declared sample ranges, momenta uniform
    on [-2, 2] unless overridden; states within ``margin`` of a domain
    constraint boundary are rejected.
    """

    def __init__(self, chart: Chart, params: Mapping[str, float] | None = None,
                 rng: np.random.Generator | None = None, margin: float = DOMAIN_MARGIN,
                 max_tries: int = 10_000):
        self.chart = chart
        self.params = dict(params or {})
        self.rng = rng if rng is not None else np.random.default_rng(42)
        self.margin = margin
        self.max_tries = max_tries
        self._q_lo, self._q_hi = np.array([chart.range_of(c) for c in chart.coords]).T
        self._p_lo, self._p_hi = np.array([chart.range_of(m) for m in chart.momenta]).T

    def sample(self) -> PhaseState:
        for _ in range(self.max_tries):
            q = self.rng.uniform(self._q_lo, self._q_hi)
            p = self.rng.uniform(self._p_lo, self._p_hi)
            if self.chart.admissible(q, self.params, self.margin):
                return PhaseState(self.chart.name, tuple(q), tuple(p))
        raise SamplerStarvation(
            f"no admissible state in chart {self.chart.name!r} after {self.max_tries} draws")

    def samples(self, n: int) -> list[PhaseState]:
        return [self.sample() for _ in range(n)]


# --- loading --------------------------------------------------------------

_EXPR = {"type": "string"}
_PAIRS = {
    "type": "array",
    "minItems": 1,
    "items": {
        "type": "object",
        "required": ["U", "H", "block"],
        "properties": {
            "U": _EXPR,
            "H": _EXPR,
            "block": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1}},
        },
    },
}
_SEPARABLE = {
    "type": "object",
    "required": ["kind", "pairs"],
    "properties": {
        "kind": {"enum": ["full", "partial"]},
        "pairs": _PAIRS,
        "folded": {"type": "object", "additionalProperties": _EXPR},
        "names": {"type": "array", "items": {"type": "string"}},
        "nested": {"$ref": "#/$defs/separable"},
    },
}

SYSTEM_SCHEMA = {
    "$defs": {"separable": _SEPARABLE},
    "type": "object",
    "required": ["name", "parameters", "charts", "presentations"],
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "parameters": {"type": "object", "additionalProperties": {"type": "number"}},
        "charts": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["name", "coords", "momenta", "to_cartesian"],
                "properties": {
                    "name": {"type": "string"},
                    "coords": {"type": "array", "minItems": 1, "maxItems": MAX_DIM, "items": {"type": "string"}},
                    "momenta": {"type": "array", "minItems": 1, "maxItems": MAX_DIM, "items": {"type": "string"}},
                    "to_cartesian": {"type": "array", "items": _EXPR},
                    "domain": {"type": "array", "items": _EXPR},
                    "sample_ranges": {
                        "type": "object",
                        "additionalProperties": {
                            "type": "array", "minItems": 2, "maxItems": 2, "items": {"type": "number"},
                        },
                    },
                },
            },
        },
        "presentations": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["chart", "hamiltonian"],
                "properties": {
                    "chart": {"type": "string"},
                    "hamiltonian": _EXPR,
                    "displayed": _EXPR,
                    "convention_note": {"type": "string"},
                    "separable": {"$ref": "#/$defs/separable"},
                },
            },
        },
        "declared_constants": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "chart", "expr"],
                "properties": {
                    "name": {"type": "string"},
                    "chart": {"type": "string"},
                    "expr": _EXPR,
                    "note": {"type": "string"},
                },
            },
        },
    },
}

_SYM_RE = r"^[A-Za-z_][A-Za-z0-9_]*$"


def _parse_at(text: str, where: str) -> Expr:
    try:
        return parse(text)
    except ParseError as exc:
        raise type(exc)(f"{where}: {exc.args[0].rsplit(' at offset', 1)[0]}", exc.offset, text) from None


def load_system(path: str | Path, check_numeric: bool = True, strict: bool = True) -> SystemDefinition:
    """Read, schema-check, parse and invariant-check a system file.

    With ``strict=False`` separability violations and sampled numeric checks
    are left to the caller (``validate_separability``).
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from None
    return system_from_dict(data, check_numeric=check_numeric, strict=strict)


def system_from_dict(data: Mapping[str, Any], check_numeric: bool = True, strict: bool = True) -> SystemDefinition:
    try:
        jsonschema.validate(data, SYSTEM_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(x) for x in exc.absolute_path) or "<root>"
        raise SchemaError(f"schema violation at {where}: {exc.message}") from None

    params = {k: float(v) for k, v in data["parameters"].items()}
    charts: dict[str, Chart] = {}
    for ci, c in enumerate(data["charts"]):
        charts[c["name"]] = _build_chart(c, ci, params)

    presentations = []
    for pi, p in enumerate(data["presentations"]):
        where = f"presentations[{pi}]"
        chart = charts.get(p["chart"])
        if chart is None:
            raise SchemaError(f"{where}: unknown chart {p['chart']!r}")
        h = _parse_at(p["hamiltonian"], f"{where}.hamiltonian")
        _check_symbols(h, set(chart.phase_symbols) | set(params), f"{where}.hamiltonian")
        sep = None
        if "separable" in p:
            sep = structure_from_dict(p["separable"], chart, f"{where}.separable")
            allowed = set(chart.phase_symbols) | set(params)
            _check_structure_symbols(sep, allowed, f"{where}.separable")
            violations = validate_separability(sep, chart) if strict else []
            if violations:
                raise InvariantError(f"{where}.separable: " + "; ".join(str(v) for v in violations))
        if "displayed" in p:
            _parse_at(p["displayed"], f"{where}.displayed")
        presentations.append(Presentation(chart, h, sep, p.get("displayed"), p.get("convention_note")))

    declared = []
    for di, d in enumerate(data.get("declared_constants", [])):
        where = f"declared_constants[{di}]"
        chart = charts.get(d["chart"])
        if chart is None:
            raise SchemaError(f"{where}: unknown chart {d['chart']!r}")
        e = _parse_at(d["expr"], f"{where}.expr")
        _check_symbols(e, set(chart.phase_symbols) | set(params), f"{where}.expr")
        declared.append(DeclaredConstant(d["name"], chart, e, d.get("note")))

    known = {"name", "parameters", "charts", "presentations", "declared_constants"}
    extras = {k: v for k, v in data.items() if k not in known}
    sysdef = SystemDefinition(data["name"], params, charts, presentations, declared, extras)
    if check_numeric and strict:
        check_numeric_invariants(sysdef)
    return sysdef


def _build_chart(c: Mapping[str, Any], ci: int, params: Mapping[str, float]) -> Chart:
    where = f"charts[{ci}]"
    coords, momenta = tuple(c["coords"]), tuple(c["momenta"])
    if len(coords) != len(momenta):
        raise SchemaError(f"{where}: {len(coords)} coords but {len(momenta)} momenta")
    if len(c["to_cartesian"]) != len(coords):
        raise SchemaError(f"{where}: to_cartesian must have {len(coords)} entries")
    names = coords + momenta
    bad = [s for s in names if not re.match(_SYM_RE, s)]
    if bad or len(set(names)) != len(names):
        raise SchemaError(f"{where}: coordinate/momentum symbols must be distinct identifiers")
    if set(names) & set(params):
        raise SchemaError(f"{where}: chart symbols collide with parameter names")
    fwd = tuple(_parse_at(t, f"{where}.to_cartesian[{i}]") for i, t in enumerate(c["to_cartesian"]))
    for i, f in enumerate(fwd):
        extra = free_vars(f) - set(coords)
        if extra:
            raise InvariantError(f"{where}.to_cartesian[{i}] uses non-coordinate symbol(s) {sorted(extra)}")
    dom = tuple(_parse_at(t, f"{where}.domain[{i}]") for i, t in enumerate(c.get("domain", [])))
    for i, f in enumerate(dom):
        extra = free_vars(f) - set(coords) - set(params)
        if extra:
            raise InvariantError(f"{where}.domain[{i}] uses unknown symbol(s) {sorted(extra)}")
    ranges = {}
    for sym, (lo, hi) in c.get("sample_ranges", {}).items():
        if sym not in names:
            raise SchemaError(f"{where}.sample_ranges: {sym!r} is not a chart symbol")
        if not lo < hi:
            raise SchemaError(f"{where}.sample_ranges[{sym}]: empty interval")
        ranges[sym] = (float(lo), float(hi))
    return Chart(c["name"], coords, momenta, fwd, dom, ranges)


def structure_from_dict(d: Mapping[str, Any], chart: Chart, where: str = "separable") -> SeparableStructure:
    pairs = []
    for i, pr in enumerate(d["pairs"]):
        block = tuple(b - 1 for b in pr["block"])
        if any(b >= chart.n for b in block):
            raise SchemaError(f"{where}.pairs[{i}].block: index outside 1..{chart.n}")
        pairs.append(Pair(_parse_at(pr["U"], f"{where}.pairs[{i}].U"),
                          _parse_at(pr["H"], f"{where}.pairs[{i}].H"), block))
    folded = {k: _parse_at(v, f"{where}.folded.{k}") for k, v in d.get("folded", {}).items()}
    nested = None
    if "nested" in d:
        nested = structure_from_dict(d["nested"], chart, f"{where}.nested")
    return SeparableStructure(d["kind"], tuple(pairs), folded, nested, tuple(d.get("names", ())))


def _check_symbols(e: Expr, allowed: set[str], where: str) -> None:
    extra = free_vars(e) - allowed
    if extra:
        raise InvariantError(f"{where}: unknown symbol(s) {sorted(extra)}")


def _check_structure_symbols(s: SeparableStructure, allowed: set[str], where: str) -> None:
    for name, e in s.folded.items():
        if name in allowed:
            raise SchemaError(f"{where}.folded: {name!r} shadows a chart symbol or parameter")
        _check_symbols(e, allowed, f"{where}.folded.{name}")
    inner = allowed | set(s.folded)
    for i, pr in enumerate(s.pairs):
        _check_symbols(pr.U, inner, f"{where}.pairs[{i}].U")
        _check_symbols(pr.H, inner, f"{where}.pairs[{i}].H")
    if s.nested is not None:
        _check_structure_symbols(s.nested, inner, f"{where}.nested")


def check_numeric_invariants(sysdef: SystemDefinition, n_samples: int = 20, seed: int = 0) -> None:
    """Sampled checks: invertible chart Jacobians and non-vanishing ΣUᵢ."""
    rng = np.random.default_rng(seed)
    for chart in sysdef.charts.values():
        for st in Sampler(chart, sysdef.parameters, rng).samples(n_samples):
            det = float(np.linalg.det(chart.jacobian(st.q)))
            if not abs(det) > DET_TOL:
                raise InvariantError(f"chart {chart.name!r}: singular Jacobian at q={st.q}")
    for pres in sysdef.presentations:
        s = pres.separable
        if s is None:
            continue
        for st in Sampler(pres.chart, sysdef.parameters, rng).samples(n_samples):
            env = pres.chart.env(st, sysdef.parameters)
            try:
                total = sum(evaluate(pr.U, env) for pr in s.pairs)
            except ExprError as exc:
                raise InvariantError(f"{pres.chart.name}: U evaluation failed ({exc})") from None
            if total == 0.0:
                raise InvariantError(f"{pres.chart.name}: sum of U vanishes at q={st.q}")
