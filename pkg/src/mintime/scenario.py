"""Scenario configuration: parsing, validation and resolved tolerances."""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .fields import ControlSystem
from .grid import TargetSet, UniformGrid
from .systems import UnknownSystemError, registry_lookup

STAGES = ("hormander", "symplectic", "solve", "crosscheck", "char", "petrov", "extremal",
          "lipschitz", "refinement", "holder")
NEEDS_SOLVE = {"crosscheck", "char", "petrov", "lipschitz"}

# None means "scale with the grid": resolved against h at load time
DEFAULT_TOLERANCES: dict[str, Any] = {
    "tol_converge": 1e-9,
    "max_sweeps": 5000,
    "c_min": 0.05,
    "n_controls": 48,
    "dt_max_cells": 4.0,
    "eps_char_h": 5.0,
    "band_width_h": 6.0,
    "r_L_h": 3.0,
    "eps_H": 1e-8,
    "dt": 1e-3,
    "gamma": 1.4,
    "r_cells": 2.0,
    "gap_tol": 1e-5,
    "restarts": 12,
    "hormander_depth": 6,
    "tol_gram": 1e-6,
}

ASSERTIONS = ("converged", "char_empty", "char_in_slab", "crosscheck_gap_h", "petrov_positive",
              "petrov_decreasing", "refinement_fraction", "flagged_in_slab",
              "extremal_status", "hormander_full_rank")


class ConfigError(ValueError):
    """Invalid scenario configuration (CLI exit code 2)."""


@dataclass
class Scenario:
    name: str
    system: ControlSystem
    system_spec: Any
    grid: UniformGrid
    target: TargetSet
    taus: list[float]
    tolerances: dict[str, Any]
    seed: int
    stages: list[str]
    raw: dict
    extremals: list[dict] = field(default_factory=list)
    petrov_regions: list[dict] = field(default_factory=list)
    refinement: dict = field(default_factory=dict)
    holder: dict = field(default_factory=dict)
    symplectic: dict = field(default_factory=dict)
    hormander: dict = field(default_factory=dict)
    assertions: list[dict] = field(default_factory=list)

    @property
    def digest(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:12]

    @property
    def dirname(self) -> str:
        return f"{self.name}-{self.digest}"

    def resolved(self) -> dict:
        """Tolerances with grid-relative entries turned into absolute values."""
        t = dict(self.tolerances)
        h = self.grid.h
        t["h"] = h
        t["eps_char"] = t["eps_char_h"] * h
        t["band_width"] = t["band_width_h"] * h
        t["r_L"] = t["r_L_h"] * h
        return t

    def echo(self) -> dict:
        return {"name": self.name, "system": self.system_spec, "grid": self.grid.to_json(),
                "target": self.target.to_json(), "taus": self.taus, "seed": self.seed,
                "stages": self.stages, "tolerances": self.resolved(), "digest": self.digest}


def _need(d: Mapping, key: str, where: str = "config"):
    if key not in d:
        raise ConfigError(f"{where}: missing required key {key!r}")
    return d[key]


def _num_list(v, n: int, what: str) -> list[float]:
    if not isinstance(v, (list, tuple)) or len(v) != n:
        raise ConfigError(f"{what} must be a list of {n} numbers")
    try:
        return [float(x) for x in v]
    except (TypeError, ValueError):
        raise ConfigError(f"{what} must contain numbers") from None


def parse_scenario(raw: Mapping, seed: int | None = None) -> Scenario:
    if not isinstance(raw, Mapping):
        raise ConfigError("config must be a JSON object")
    raw = json.loads(json.dumps(raw))
    name = str(_need(raw, "name"))
    if not re.fullmatch(r"[A-Za-z0-9_.-]+", name):
        raise ConfigError(f"scenario name {name!r} must match [A-Za-z0-9_.-]+")

    sys_spec = _need(raw, "system")
    try:
        if isinstance(sys_spec, str):
            system = registry_lookup(sys_spec)
        elif isinstance(sys_spec, Mapping):
            system = ControlSystem.from_spec(sys_spec)
        else:
            raise ConfigError("system must be a registry key or an inline field list")
    except UnknownSystemError as exc:
        raise ConfigError(str(exc)) from None
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad inline system: {exc}") from None
    n = system.n

    dom = _need(raw, "domain")
    lo = _num_list(_need(dom, "lo", "domain"), n, "domain.lo")
    hi = _num_list(_need(dom, "hi", "domain"), n, "domain.hi")
    if any(b <= a for a, b in zip(lo, hi)):
        raise ConfigError("domain must have hi > lo on every axis")
    if "h" in raw:
        h = raw["h"]
        if not isinstance(h, (int, float)) or h <= 0:
            raise ConfigError(f"h must be a positive number, got {h!r}")
        cells = round((hi[0] - lo[0]) / h) + 1
        if abs((cells - 1) * h - (hi[0] - lo[0])) > 1e-9 * max(1.0, hi[0] - lo[0]):
            raise ConfigError("h does not divide the domain width")
    else:
        cells = _need(raw, "cells")
    if not isinstance(cells, int) or cells < 3:
        raise ConfigError(f"cells must be an integer >= 3, got {cells!r}")
    try:
        grid = UniformGrid.from_box(lo, hi, cells)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    try:
        target = TargetSet(dict(_need(raw, "target")))
        target.mask(grid)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"bad target: {exc}") from None

    taus = raw.get("taus", [])
    if not isinstance(taus, list) or any(not isinstance(t, (int, float)) or t <= 0 for t in taus):
        raise ConfigError("taus must be a list of positive numbers")

    tol = dict(DEFAULT_TOLERANCES)
    over = raw.get("tolerances", {})
    unknown = set(over) - set(tol)
    if unknown:
        raise ConfigError(f"unknown tolerance keys {sorted(unknown)}; known: {sorted(tol)}")
    for k, v in over.items():
        if not isinstance(v, (int, float)) or isinstance(v, bool) or v <= 0:
            raise ConfigError(f"tolerance {k} must be a positive number")
        tol[k] = type(DEFAULT_TOLERANCES[k])(v)
    if tol["gamma"] <= 1:
        raise ConfigError("gamma must exceed 1")

    stages = raw.get("stages", ["solve"])
    bad = [s for s in stages if s not in STAGES]
    if bad:
        raise ConfigError(f"unknown stages {bad}; known: {list(STAGES)}")
    if len(set(stages)) != len(stages):
        raise ConfigError("stages must not repeat")
    wanted = set(stages)
    if wanted & NEEDS_SOLVE:
        wanted.add("solve")
    if any(s in wanted for s in ("char", "petrov")) and not taus:
        raise ConfigError("char/petrov stages need a nonempty taus list")
    ordered = [s for s in STAGES if s in wanted]

    assertions = raw.get("assertions", [])
    for a in assertions:
        if not isinstance(a, Mapping) or a.get("check") not in ASSERTIONS:
            raise ConfigError(f"unknown assertion {a!r}; known checks: {list(ASSERTIONS)}")

    s = raw.get("seed", 0) if seed is None else seed
    if not isinstance(s, int) or s < 0:
        raise ConfigError("seed must be a nonnegative integer")
    if seed is not None:
        raw["seed"] = seed

    return Scenario(name, system, sys_spec, grid, target, [float(t) for t in taus], tol, s,
                    ordered, raw, raw.get("extremals", []), raw.get("petrov_regions", []),
                    raw.get("refinement", {}), raw.get("holder", {}), raw.get("symplectic", {}),
                    raw.get("hormander", {}), assertions)


def load_scenario(path: str | Path, seed: int | None = None) -> Scenario:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return parse_scenario(raw, seed)
