"""Built-in system definitions.

Each entry is a system JSON file under ``data/``; ``load`` parses it and
``export`` writes an editable copy.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

from ..errors import SchemaError
from ..pipeline import OrbitConfig, Tolerances, verify_system
from ..system_model import SystemDefinition, VerificationReport, system_from_dict

ENTRIES = ("example1", "example2", "example3", "evans", "generic2dof")


@dataclass(frozen=True)
class EntrySummary:
    name: str
    description: str
    dimension: int
    presentations: tuple[str, ...]


@lru_cache(maxsize=None)
def _raw(name: str) -> str:
    if name not in ENTRIES:
        raise KeyError(f"unknown catalog entry {name!r}; available: {', '.join(ENTRIES)}")
    return resources.files(__package__).joinpath("data", f"{name}.json").read_text()


def raw(name: str) -> dict[str, Any]:
    """A fresh copy of the entry's JSON document."""
    return json.loads(_raw(name))


def list_catalog() -> list[EntrySummary]:
    out = []
    for name in ENTRIES:
        d = raw(name)
        out.append(EntrySummary(name, d.get("description", ""), len(d["charts"][0]["coords"]),
                                tuple(p["chart"] for p in d["presentations"])))
    return out


def load(name: str, params: Mapping[str, float] | None = None) -> SystemDefinition:
    sysdef = system_from_dict(raw(name))
    return sysdef.with_parameters(params) if params else sysdef


def export(name: str, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(_raw(name))
    return path


def generic2dof(U_r: str = "1", U_mu: str = "0", H_r: str = "p_r^2", H_mu: str = "p_mu^2",
                parameters: Mapping[str, float] | None = None) -> SystemDefinition:
    """Instantiate the two-block template with custom pieces.

    U_r, H_r may use r, p_r; U_mu, H_mu may use mu, p_mu; any other symbol
    must be listed in ``parameters``.
    """
    d = raw("generic2dof")
    d["parameters"] = {k: float(v) for k, v in (parameters or {}).items()}
    pres = d["presentations"][0]
    pres["hamiltonian"] = f"({H_r} + {H_mu})/(2*({U_r} + {U_mu}))"
    pres["separable"]["pairs"] = [
        {"U": U_r, "H": H_r, "block": [1]},
        {"U": U_mu, "H": H_mu, "block": [2]},
    ]
    return system_from_dict(d)


def generic_pieces(spec: Mapping[str, str]) -> dict[str, str]:
    """Validate a {piece name: expression} mapping for ``generic2dof``."""
    allowed = {"U_r", "U_mu", "H_r", "H_mu"}
    unknown = set(spec) - allowed
    if unknown:
        raise SchemaError(f"unknown template piece(s) {sorted(unknown)}; expected {sorted(allowed)}")
    return dict(spec)


def run_entry(name: str | SystemDefinition, tolerances: Tolerances = Tolerances(), seed: int = 42,
              n_samples: int = 1000, orbit: OrbitConfig | None = None,
              params: Mapping[str, float] | None = None) -> VerificationReport:
    """Full verification of a catalog entry (or an already loaded system)."""
    sysdef = load(name, params) if isinstance(name, str) else name
    return verify_system(sysdef, seed, n_samples, tolerances, orbit)


def expected(name: str) -> dict[str, Any]:
    return copy.deepcopy(raw(name).get("expected", {}))
