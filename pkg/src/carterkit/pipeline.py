"""End-to-end verification of a system definition.

Stages run in a fixed order and all draw from one seeded generator, so a
given (system, config) pair always produces the same report.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from .bracket import conservation_check
from .errors import CarterError, IntegrationError, InvariantError
from .expr import Expr, kernel, parse, substitute, to_string
from .geometry import verify_chart_equivalence
from .independence import DEFAULT_REL_TOL, MODAL_FRACTION, functional_rank
from .orbit import integrate
from .system_model import (
    Chart,
    PhaseState,
    Presentation,
    Sampler,
    SystemDefinition,
    VerificationReport,
    structure_from_dict,
    validate_separability,
)
from .theorem import all_constants, assemble_hamiltonian, carter_constants

RANK_MIN_SAMPLES = 100


@dataclass(frozen=True)
class Tolerances:
    bracket: float = 1e-9
    chart: float = 1e-10
    form: float = 1e-10
    reproduction: float = 1e-9
    reconstruction: float = 1e-10
    rank_rel: float = DEFAULT_REL_TOL
    drift: float = 1e-5


@dataclass(frozen=True)
class OrbitConfig:
    dt: float
    steps: int
    method: str = "implicit_midpoint"
    chart: str | None = None
    q: tuple[float, ...] | None = None
    p: tuple[float, ...] | None = None


@dataclass
class NamedConstant:
    name: str
    expr: Expr
    chart: Chart
    source: str  # "derived" | "declared"
    quotient: Expr | None = None


def _relative(a: float, b: float) -> float:
    return abs(a - b) / (1.0 + abs(b))


def constants_of(sysdef: SystemDefinition) -> tuple[list[NamedConstant], list[tuple[NamedConstant, NamedConstant]]]:
    """Derived constants of every presentation, then declared constants.

    A declared constant whose name matches a derived one is not listed twice;
    the pair is returned separately so the two can be compared.
    """
    out: list[NamedConstant] = []
    taken: dict[str, NamedConstant] = {}
    for pres in sysdef.presentations:
        if pres.separable is None:
            continue
        for c in all_constants(pres.separable):
            name = c.name if c.name not in taken else f"{c.name}_{pres.chart.name}"
            nc = NamedConstant(name, c.product, pres.chart, "derived", c.quotient)
            taken[name] = nc
            out.append(nc)
    twins = []
    for d in sysdef.declared_constants:
        nc = NamedConstant(d.name, d.expr, d.chart, "declared")
        if d.name in taken:
            twins.append((taken[d.name], nc))
        else:
            taken[d.name] = nc
            out.append(nc)
    return out, twins


def _presentation_for(sysdef: SystemDefinition, chart: Chart) -> Presentation:
    try:
        return sysdef.presentation(chart.name)
    except KeyError:
        raise InvariantError(f"no Hamiltonian presentation in chart {chart.name!r}") from None


# --- stages ---------------------------------------------------------------

def stage_separability(sysdef: SystemDefinition, rng, tol: Tolerances, n_samples: int = 100) -> dict:
    out: dict[str, Any] = {"presentations": [], "passed": True}
    for pres in sysdef.presentations:
        entry: dict[str, Any] = {"chart": pres.chart.name}
        if pres.separable is None:
            entry["structure"] = None
            out["presentations"].append(entry)
            continue
        violations = validate_separability(pres.separable, pres.chart)
        entry["structure"] = pres.separable.kind
        entry["violations"] = [str(v) for v in violations]
        if not violations:
            assembled = assemble_hamiltonian(pres.separable)
            ka = kernel(assembled, pres.chart.phase_symbols, (), sysdef.parameters)
            kh = kernel(pres.hamiltonian, pres.chart.phase_symbols, (), sysdef.parameters)
            worst = 0.0
            for s in Sampler(pres.chart, sysdef.parameters, rng).samples(n_samples):
                z = s.q + s.p
                worst = max(worst, _relative(ka.value(*z), kh.value(*z)))
            entry["reconstruction"] = worst
            entry["passed"] = worst <= tol.reconstruction
        else:
            entry["passed"] = False
        out["passed"] = out["passed"] and entry["passed"]
        out["presentations"].append(entry)
    return out


def stage_constants(sysdef: SystemDefinition, rng, tol: Tolerances, n_samples: int) -> list[dict]:
    consts, twins = constants_of(sysdef)
    rows = []
    for c in consts:
        pres = _presentation_for(sysdef, c.chart)
        rep = conservation_check(c.expr, pres.hamiltonian, c.chart, n_samples, tol.bracket,
                                 sysdef.parameters, rng, (c.name, "H"))
        row: dict[str, Any] = {
            "name": c.name,
            "chart": c.chart.name,
            "source": c.source,
            "expr": to_string(c.expr),
            "max_bracket": rep.max_abs,
            "bracket_scale": rep.scale,
            "passed": rep.passed,
        }
        if c.quotient is not None:
            row["quotient"] = to_string(c.quotient)
            kq = kernel(c.quotient, c.chart.phase_symbols, (), sysdef.parameters)
            kp = kernel(c.expr, c.chart.phase_symbols, (), sysdef.parameters)
            worst = 0.0
            for s in Sampler(c.chart, sysdef.parameters, rng).samples(n_samples):
                z = s.q + s.p
                worst = max(worst, _relative(kp.value(*z), kq.value(*z)))
            row["form_residual"] = worst
            row["passed"] = row["passed"] and worst <= tol.form
        rows.append(row)
    for derived, declared in twins:
        worst = _match_up_to_sign(derived.expr, derived.chart, declared.expr, sysdef.parameters, rng, n_samples)
        rows.append({
            "name": f"{declared.name} (declared)",
            "chart": declared.chart.name,
            "source": "declared",
            "expr": to_string(declared.expr),
            "matches": derived.name,
            "agreement": worst,
            "passed": worst <= tol.reproduction,
        })
    return rows


def _match_up_to_sign(a: Expr, chart: Chart, b: Expr, params, rng, n: int, sign: int | None = None) -> float:
    """max relative |a − s·b| with s = ``sign`` or the better of ±1."""
    ka = kernel(a, chart.phase_symbols, (), params)
    kb = kernel(b, chart.phase_symbols, (), params)
    worst = {1: 0.0, -1: 0.0}
    for s in Sampler(chart, params, rng).samples(n):
        z = s.q + s.p
        va, vb = ka.value(*z), kb.value(*z)
        for sg in worst:
            worst[sg] = max(worst[sg], _relative(va, sg * vb))
    return worst[sign] if sign is not None else min(worst.values())


def stage_reproduction(sysdef: SystemDefinition, rng, tol: Tolerances, n_samples: int) -> list[dict]:
    """Compare the engine against the reference forms stored with an entry.

    ``pieces``: constant built from the displayed pieces vs the displayed
    expression.  ``target``: the catalog constant vs the displayed expression
    (or its corrected form when the displayed one is not consistent).
    """
    forms = sysdef.extras.get("reference_forms", [])
    if not forms:
        return []
    consts, _ = constants_of(sysdef)
    by_name = {c.name: c for c in consts}
    rows = []
    params = sysdef.parameters
    for ref in forms:
        chart = sysdef.charts[ref["chart"]]
        folded = {k: parse(v) for k, v in ref.get("folded", {}).items()}
        displayed = substitute(parse(ref["expr"]), folded)
        sign = int(ref.get("sign", 1))
        row: dict[str, Any] = {"name": ref["name"], "chart": chart.name, "sign": sign,
                               "engine_consistent": bool(ref.get("engine_consistent", True))}
        ok = True
        if "pieces" in ref:
            s = structure_from_dict({**ref["pieces"], "folded": ref.get("folded", {})}, chart)
            built = carter_constants(s)[0].quotient
            row["pieces_residual"] = _match_up_to_sign(built, chart, displayed, params, rng, n_samples, sign)
            ok = ok and row["pieces_residual"] <= tol.reproduction
        target_name = ref.get("compare_to", ref["name"])
        target = by_name.get(target_name)
        if target is not None:
            text = ref["corrected"] if "corrected" in ref else ref["expr"]
            expected = substitute(parse(text), folded)
            if target.chart is chart:
                row["compared_to"] = target_name
                row["residual"] = _match_up_to_sign(target.expr, chart, expected, params, rng, n_samples, sign)
                ok = ok and row["residual"] <= tol.reproduction
        row["passed"] = ok
        rows.append(row)
    return rows


def stage_chart_equivalence(sysdef: SystemDefinition, rng, tol: Tolerances, n_samples: int) -> list[dict]:
    if len(sysdef.presentations) < 2:
        return []
    res = verify_chart_equivalence(sysdef, n_samples, tol.chart, rng)
    return [{"pair": list(r.pair), "residual": r.residual, "samples": r.samples,
             "skipped": r.skipped, "passed": r.passed} for r in res]


def rank_functions(sysdef: SystemDefinition) -> tuple[Chart, list[str], list[tuple[Expr, Chart]], int | None]:
    """Functions entering the rank test, the chart they are sampled in, and
    the expected modal rank when the entry states one."""
    expected = sysdef.extras.get("expected", {})
    chart_name = sysdef.extras.get("rank_chart", sysdef.presentations[0].chart.name)
    chart = sysdef.charts[chart_name]
    consts, _ = constants_of(sysdef)
    by_name = {c.name: c for c in consts}
    names = list(expected.get("rank_set", ["H"] + [c.name for c in consts]))
    fs = []
    for name in names:
        if name == "H":
            fs.append((_presentation_for(sysdef, chart).hamiltonian, chart))
        elif name in by_name:
            fs.append((by_name[name].expr, by_name[name].chart))
        else:
            raise InvariantError(f"rank set names unknown constant {name!r}")
    return chart, names, fs, expected.get("modal_rank")


def stage_rank(sysdef: SystemDefinition, rng, tol: Tolerances, n_samples: int) -> dict:
    chart, names, fs, expected = rank_functions(sysdef)
    rep = functional_rank(fs, chart, max(n_samples, RANK_MIN_SAMPLES), tol.rank_rel, sysdef.parameters,
                          rng, names, pairwise=True)
    target = expected if expected is not None else len(names)
    return {
        "chart": chart.name,
        "functions": names,
        "modal": rep.modal,
        "expected": target,
        "samples": rep.samples,
        "per_sample_offmodal": rep.off_modal,
        "pairwise_brackets": rep.pairwise_brackets,
        "passed": rep.modal == target and rep.modal_fraction >= MODAL_FRACTION,
    }


def orbit_config(sysdef: SystemDefinition, override: OrbitConfig | None = None) -> OrbitConfig | None:
    base = sysdef.extras.get("orbit")
    if base is None and override is None:
        return None
    base = base or {}
    cfg = OrbitConfig(float(base.get("dt", 1e-3)), int(base.get("steps", 1000)),
                      base.get("method", "implicit_midpoint"), base.get("chart"),
                      tuple(base["q"]) if "q" in base else None,
                      tuple(base["p"]) if "p" in base else None)
    if override is not None:
        cfg = OrbitConfig(override.dt, override.steps, override.method,
                          override.chart or cfg.chart, override.q or cfg.q, override.p or cfg.p)
    return cfg


def orbit_invariants(sysdef: SystemDefinition, chart: Chart) -> dict[str, Expr]:
    inv = {"H": _presentation_for(sysdef, chart).hamiltonian}
    consts, _ = constants_of(sysdef)
    for c in consts:
        if c.chart is chart:
            inv[c.name] = c.expr
    return inv


def run_orbit(sysdef: SystemDefinition, cfg: OrbitConfig, rng=None):
    chart = sysdef.charts[cfg.chart] if cfg.chart else sysdef.presentations[0].chart
    if cfg.q is not None and (len(cfg.q) != chart.n or len(cfg.p or ()) != chart.n):
        raise ValueError(f"initial state needs {chart.n} coordinates and {chart.n} momenta")
    if cfg.q is None or cfg.p is None:
        s0 = Sampler(chart, sysdef.parameters, rng).sample()
    else:
        s0 = PhaseState(chart.name, cfg.q, cfg.p)
    H = _presentation_for(sysdef, chart).hamiltonian
    return integrate(H, s0, chart, cfg.dt, cfg.steps, cfg.method, orbit_invariants(sysdef, chart),
                     sysdef.parameters)


def stage_orbit(sysdef: SystemDefinition, rng, tol: Tolerances, cfg: OrbitConfig) -> dict:
    out: dict[str, Any] = {"method": cfg.method, "dt": cfg.dt, "steps": cfg.steps}
    try:
        tr = run_orbit(sysdef, cfg, rng)
    except IntegrationError as exc:
        out.update({"status": f"aborted at step {exc.step}: {exc.reason}", "max_rel_drift": {}, "passed": False})
        return out
    drift = tr.max_rel_drift()
    out.update({"chart": tr.chart, "status": "ok", "max_rel_drift": drift,
                "passed": all(v <= tol.drift for v in drift.values())})
    return out


def verify_system(sysdef: SystemDefinition, seed: int = 42, n_samples: int = 1000,
                  tol: Tolerances = Tolerances(), orbit: OrbitConfig | None = None,
                  run_orbit_stage: bool = True) -> VerificationReport:
    """Run every stage; a stage that raises is recorded as failed with its error."""
    rng = np.random.default_rng(seed)
    report = VerificationReport(sysdef.name, seed)
    stages: dict[str, Any] = {}

    def guarded(name, fn, *args):
        try:
            stages[name] = fn(sysdef, rng, tol, *args)
        except CarterError as exc:
            stages[name] = {"passed": False, "error": f"{type(exc).__name__}: {exc}"}

    guarded("separability", stage_separability)
    guarded("constants", stage_constants, n_samples)
    if sysdef.extras.get("reference_forms"):
        guarded("reproduction", stage_reproduction, n_samples)
    guarded("chart_equivalence", stage_chart_equivalence, n_samples)
    guarded("rank", stage_rank, n_samples)
    cfg = orbit_config(sysdef, orbit) if run_orbit_stage else None
    if cfg is not None:
        guarded("orbit", stage_orbit, cfg)

    report.stages = stages
    report.brackets = {r["name"]: r["max_bracket"] for r in _rows(stages.get("constants")) if "max_bracket" in r}
    report.chart_residuals = {"->".join(r["pair"]): r["residual"] for r in _rows(stages.get("chart_equivalence"))}
    if isinstance(stages.get("rank"), dict):
        report.rank = stages["rank"]
    if isinstance(stages.get("orbit"), dict):
        report.drifts = dict(stages["orbit"].get("max_rel_drift", {}))
    report.passed = all(_stage_passed(v) for v in stages.values())
    return report


def _rows(stage) -> list[dict]:
    return stage if isinstance(stage, list) else []


def _stage_passed(stage) -> bool:
    if isinstance(stage, list):
        return all(r.get("passed", True) for r in stage)
    return bool(stage.get("passed", False))


def report_json(report: VerificationReport) -> dict:
    """Report in the stable CLI layout."""
    return {"system": report.system, "stages": report.stages, "pass": report.passed, "seed": report.seed}

