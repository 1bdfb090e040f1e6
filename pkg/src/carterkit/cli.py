"""Command-line front end.

Exit codes: 0 pass, 1 verification failure, 2 input or usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import catalog
from .errors import CarterError, IntegrationError, PreconditionError
from .expr import to_string
from .pipeline import OrbitConfig, Tolerances, orbit_config, report_json, run_orbit, verify_system
from .system_model import SystemDefinition, load_system, validate_separability
from .theorem import all_constants

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    """Bad command-line input; reported with exit code 2."""


def _key_values(text: str, what: str) -> dict[str, str]:
    out = {}
    for item in filter(None, text.split(",")):
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise InputError(f"{what}: expected key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def parse_params(items: Sequence[str]) -> dict[str, float]:
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep:
            raise InputError(f"--param expects sym=value, got {item!r}")
        try:
            out[key.strip()] = float(value)
        except ValueError:
            raise InputError(f"--param {key}: {value!r} is not a number") from None
    return out


def parse_orbit(text: str | None) -> OrbitConfig | None:
    if text is None:
        return None
    kv = _key_values(text, "--orbit")
    unknown = set(kv) - {"dt", "steps", "method"}
    if unknown:
        raise InputError(f"--orbit: unknown key(s) {sorted(unknown)}")
    try:
        dt = float(kv.get("dt", "1e-3"))
        steps = int(float(kv.get("steps", "1000")))
    except ValueError as exc:
        raise InputError(f"--orbit: {exc}") from None
    if not dt > 0 or steps < 1:
        raise InputError("--orbit: need dt > 0 and steps >= 1")
    method = kv.get("method", "implicit_midpoint")
    if method not in ("rk4", "implicit_midpoint"):
        raise InputError(f"--orbit: unknown method {method!r}")
    return OrbitConfig(dt, steps, method)


def _floats(text: str | None, what: str) -> tuple[float, ...] | None:
    if text is None:
        return None
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise InputError(f"{what}: expected comma-separated numbers") from None


def load_source(args, strict: bool = True) -> SystemDefinition:
    params = parse_params(args.param or [])
    pieces = getattr(args, "piece", None) or []
    if args.catalog:
        if args.catalog not in catalog.ENTRIES:
            raise InputError(f"unknown catalog entry {args.catalog!r}")
        if pieces:
            if args.catalog != "generic2dof":
                raise InputError("--piece only applies to the generic2dof template")
            spec = catalog.generic_pieces(_key_values(",".join(pieces), "--piece"))
            return catalog.generic2dof(**spec, parameters=params)
        return catalog.load(args.catalog, params)
    path = Path(args.file)
    if not path.is_file():
        raise InputError(f"no such file: {path}")
    sysdef = load_system(path, strict=strict)
    return sysdef.with_parameters(params) if params else sysdef


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# --- subcommands ----------------------------------------------------------

def cmd_validate(args) -> int:
    sysdef = load_source(args, strict=False)
    failed = False
    for pres in sysdef.presentations:
        if pres.separable is None:
            print(f"{pres.chart.name}: no separable structure declared")
            continue
        violations = validate_separability(pres.separable, pres.chart)
        if violations:
            failed = True
            print(f"{pres.chart.name}: FAIL")
            for v in violations:
                print(f"  {v}")
        else:
            print(f"{pres.chart.name}: ok ({pres.separable.kind} split, {len(pres.separable.pairs)} blocks)")
    return EXIT_FAIL if failed else EXIT_OK


def cmd_constants(args) -> int:
    sysdef = load_source(args, strict=False)
    records = []
    lines = []
    status = EXIT_OK
    for pres in sysdef.presentations:
        s = pres.separable
        if s is None:
            continue
        violations = validate_separability(s, pres.chart)
        if violations:
            lines.append(f"[{pres.chart.name}] not separable: " + "; ".join(map(str, violations)))
            status = EXIT_FAIL
            continue
        if len(s.pairs) < 2:
            lines.append(f"[{pres.chart.name}] no nontrivial constants (n−1 = 0)")
            continue
        try:
            consts = all_constants(s)
        except PreconditionError as exc:
            lines.append(f"[{pres.chart.name}] {exc}")
            status = EXIT_FAIL
            continue
        for c in consts:
            product, quotient = to_string(c.product), to_string(c.quotient)
            records.append({"chart": pres.chart.name, "name": c.name, "product": product, "quotient": quotient})
            lines.append(f"[{pres.chart.name}] {c.name}")
            lines.append(f"  product:  {product}")
            lines.append(f"  quotient: {quotient}")
    if not records and not lines:
        lines.append("no separable presentation declared")
    if args.format == "json":
        _emit(json.dumps(records, indent=2) + "\n", args.out)
    else:
        _emit("\n".join(lines) + "\n", args.out)
    return status


def _tolerances(args) -> Tolerances:
    tol = Tolerances()
    if args.tol is not None:
        if not args.tol > 0:
            raise InputError("--tol must be positive")
        tol = replace(tol, bracket=args.tol)
    return tol


def cmd_verify(args) -> int:
    sysdef = load_source(args, strict=False)
    if args.samples < 1:
        raise InputError("--samples must be >= 1")
    report = verify_system(sysdef, args.seed, args.samples, _tolerances(args), parse_orbit(args.orbit),
                           run_orbit_stage=not args.no_orbit)
    _emit(json.dumps(report_json(report), indent=2) + "\n", args.out)
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_orbit(args) -> int:
    sysdef = load_source(args)
    override = parse_orbit(args.orbit)
    q, p = _floats(args.q, "--q"), _floats(args.p, "--p")
    if args.chart and args.chart not in sysdef.charts:
        raise InputError(f"unknown chart {args.chart!r}")
    if (q is None) != (p is None):
        raise InputError("--q and --p must be given together")
    cfg = orbit_config(sysdef, override) or OrbitConfig(1e-3, 1000)
    if args.chart and args.chart != cfg.chart:
        cfg = replace(cfg, chart=args.chart, q=q, p=p)
    elif q is not None:
        cfg = replace(cfg, q=q, p=p)
    try:
        tr = run_orbit(sysdef, cfg, np.random.default_rng(args.seed))
    except IntegrationError as exc:
        if exc.trajectory is not None:
            _emit(exc.trajectory.to_csv(), args.out)
        print(f"orbit aborted at step {exc.step}: {exc.reason}", file=sys.stderr)
        return EXIT_FAIL
    _emit(tr.to_csv(), args.out)
    return EXIT_OK


def cmd_catalog(args) -> int:
    if args.action == "list":
        for e in catalog.list_catalog():
            print(f"{e.name:12s} n={e.dimension}  charts: {', '.join(e.presentations)}  {e.description}")
        return EXIT_OK
    if not args.name:
        raise InputError("catalog export needs an entry name")
    if args.name not in catalog.ENTRIES:
        raise InputError(f"unknown catalog entry {args.name!r}")
    target = Path(args.out) if args.out else Path(f"{args.name}.json")
    catalog.export(args.name, target)
    print(target)
    return EXIT_OK


# --- argument parsing -----------------------------------------------------

def _source(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--catalog", metavar="NAME", help="built-in system")
    g.add_argument("--file", metavar="PATH", help="system definition JSON")
    p.add_argument("--param", action="append", metavar="SYM=VALUE", help="override a parameter (repeatable)")
    p.add_argument("--piece", action="append", metavar="NAME=EXPR",
                   help="generic2dof template piece: U_r, U_mu, H_r or H_mu (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="carterkit", description="Carter-like constants of motion: "
                                     "construction and numerical verification.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check the separable structure of every presentation")
    _source(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("constants", help="print the constants in product and quotient form")
    _source(p)
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--out", metavar="PATH")
    p.set_defaults(func=cmd_constants)

    p = sub.add_parser("verify", help="run the full verification pipeline, print a JSON report")
    _source(p)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--tol", type=float, default=None, help="bracket tolerance (relative)")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--orbit", metavar="dt=..,steps=..,method=..")
    p.add_argument("--no-orbit", action="store_true", help="skip the drift orbit")
    p.add_argument("--format", choices=("json",), default="json")
    p.add_argument("--out", metavar="PATH")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("orbit", help="integrate one orbit and write a CSV trajectory")
    _source(p)
    p.add_argument("--orbit", metavar="dt=..,steps=..,method=..")
    p.add_argument("--chart", help="chart of the initial state")
    p.add_argument("--q", metavar="Q1,Q2,..")
    p.add_argument("--p", metavar="P1,P2,..")
    p.add_argument("--seed", type=int, default=42, help="seed for a sampled initial state")
    p.add_argument("--format", choices=("csv",), default="csv")
    p.add_argument("--out", metavar="PATH")
    p.set_defaults(func=cmd_orbit)

    p = sub.add_parser("catalog", help="list or export built-in systems")
    p.add_argument("action", choices=("list", "export"))
    p.add_argument("name", nargs="?")
    p.add_argument("--out", metavar="PATH")
    p.set_defaults(func=cmd_catalog)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, CarterError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
