"""Uniform grids, target sets and value fields."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .fields import poly_eval


@dataclass(frozen=True)
class UniformGrid:
    """Cell-centred isotropic grid: node ``idx`` sits at ``origin + h * idx``."""

    origin: tuple[float, ...]
    h: float
    shape: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        if len(self.origin) != len(self.shape):
            raise ValueError("origin and shape must have the same length")
        if self.n not in (2, 3):
            raise ValueError(f"only n = 2 or 3 is supported, got {self.n}")
        if not self.h > 0:
            raise ValueError(f"spacing must be positive, got {self.h}")
        if min(self.shape) < 1:
            raise ValueError("cells_per_axis must be positive")

    @classmethod
    def from_box(cls, lo: Sequence[float], hi: Sequence[float], cells: int | Sequence[int]
                 ) -> UniformGrid:
        """Grid with ``cells`` nodes along the first axis spanning ``[lo, hi]``.

        The spacing is fixed by the first axis; other axes get as many nodes
        as fit, which must reproduce ``hi`` exactly (isotropic grids only).
        """
        lo = np.asarray(lo, float)
        hi = np.asarray(hi, float)
        if np.any(hi <= lo):
            raise ValueError("box must have hi > lo on every axis")
        if np.isscalar(cells):
            h = (hi[0] - lo[0]) / (int(cells) - 1)
            counts = np.rint((hi - lo) / h).astype(int) + 1
            if not np.allclose(lo + h * (counts - 1), hi, atol=1e-9 * max(1.0, h)):
                raise ValueError("anisotropic grid: box extents are not multiples of h")
        else:
            counts = np.asarray(cells, int)
            hs = (hi - lo) / (counts - 1)
            if not np.allclose(hs, hs[0], rtol=1e-9):
                raise ValueError(f"anisotropic spacing {hs.tolist()} rejected")
            h = float(hs[0])
        return cls(tuple(lo), float(h), tuple(int(c) for c in counts))

    @property
    def n(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.origin)

    @property
    def hi(self) -> np.ndarray:
        return self.lo + self.h * (np.asarray(self.shape) - 1)

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))

    def axes(self) -> list[np.ndarray]:
        return [o + self.h * np.arange(s) for o, s in zip(self.origin, self.shape)]

    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``(n, *shape)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"))

    def point(self, idx) -> np.ndarray:
        return self.lo + self.h * np.asarray(idx, float)

    def nearest_index(self, x) -> tuple[int, ...]:
        k = np.rint((np.asarray(x, float) - self.lo) / self.h).astype(int)
        return tuple(int(v) for v in np.clip(k, 0, np.asarray(self.shape) - 1))

    def refine(self, factor: int = 2) -> UniformGrid:
        """Same box, spacing ``h / factor``; coarse nodes are a subset."""
        return UniformGrid(self.origin, self.h / factor,
                           tuple((s - 1) * factor + 1 for s in self.shape))

    def to_json(self) -> dict:
        return {"origin": list(self.origin), "h": self.h, "cells_per_axis": list(self.shape)}

    @classmethod
    def from_json(cls, d: Mapping) -> UniformGrid:
        return cls(tuple(d["origin"]), float(d["h"]), tuple(d["cells_per_axis"]))


@dataclass(frozen=True)
class TargetSet:
    """Closed target described by a small JSON-able dictionary.

    Kinds: ``ball`` (center, radius), ``box`` (lo, hi), ``ball_complement``
    (center, radius), ``union`` (parts), ``sublevel`` (poly: monomial list,
    the set ``g(x) <= 0``).
    """

    description: Mapping[str, Any]

    KINDS = ("ball", "box", "ball_complement", "union", "sublevel")

    def __post_init__(self):
        kind = self.description.get("kind")
        if kind not in self.KINDS:
            raise ValueError(f"unknown target kind {kind!r}; expected one of {self.KINDS}")
        if kind == "union":
            for part in self.description["parts"]:
                TargetSet(part)
        if kind in ("ball", "ball_complement") and float(self.description["radius"]) < 0:
            raise ValueError("radius must be nonnegative")

    @classmethod
    def ball(cls, center, radius) -> TargetSet:
        return cls({"kind": "ball", "center": [float(c) for c in center], "radius": float(radius)})

    @classmethod
    def ball_complement(cls, center, radius) -> TargetSet:
        return cls({"kind": "ball_complement", "center": [float(c) for c in center],
                    "radius": float(radius)})

    @classmethod
    def box(cls, lo, hi) -> TargetSet:
        return cls({"kind": "box", "lo": [float(c) for c in lo], "hi": [float(c) for c in hi]})

    @classmethod
    def union(cls, parts: Sequence[TargetSet]) -> TargetSet:
        return cls({"kind": "union", "parts": [dict(p.description) for p in parts]})

    def indicator(self, pts: np.ndarray, slack: float = 0.0) -> np.ndarray:
        d = self.description
        kind = d["kind"]
        if kind == "ball":
            c = np.asarray(d["center"], float).reshape((-1,) + (1,) * (pts.ndim - 1))
            return np.sqrt(((pts - c) ** 2).sum(0)) <= d["radius"] + slack
        if kind == "ball_complement":
            c = np.asarray(d["center"], float).reshape((-1,) + (1,) * (pts.ndim - 1))
            return np.sqrt(((pts - c) ** 2).sum(0)) >= d["radius"] - slack
        if kind == "box":
            lo = np.asarray(d["lo"], float).reshape((-1,) + (1,) * (pts.ndim - 1))
            hi = np.asarray(d["hi"], float).reshape((-1,) + (1,) * (pts.ndim - 1))
            return np.all((pts >= lo - slack) & (pts <= hi + slack), axis=0)
        if kind == "union":
            out = np.zeros(pts.shape[1:], bool)
            for part in d["parts"]:
                out |= TargetSet(part).indicator(pts, slack)
            return out
        poly = {tuple(m["powers"]): Fraction(str(m["coeff"])) for m in d["poly"]}
        return poly_eval(poly, pts) <= slack

    def mask(self, grid: UniformGrid) -> np.ndarray:
        """Boolean mask of grid nodes in the target.

        A ``ball`` always claims its nearest node, so point-like targets
        (radius below the spacing) stay nonempty.
        """
        m = self.indicator(grid.coords(), slack=1e-12)
        if self.description["kind"] == "ball":
            c = np.asarray(self.description["center"], float)
            if np.all(c >= grid.lo - 0.5 * grid.h) and np.all(c <= grid.hi + 0.5 * grid.h):
                m[grid.nearest_index(c)] = True
        if not m.any():
            raise ValueError(f"target {dict(self.description)} is empty on this grid")
        return m

    def to_json(self) -> dict:
        return json.loads(json.dumps(self.description))


@dataclass
class ValueField:
    """Minimum time values on a grid (``T = 0`` on target nodes)."""

    grid: UniformGrid
    values: np.ndarray
    target: np.ndarray
    converged: bool
    iterations: int
    residual: float
    scheme: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self._interp = None

    @property
    def horizon(self) -> float:
        """Largest value reached by the solver (nodes still at the sentinel excluded)."""
        sentinel = self.meta.get("sentinel", np.inf)
        reached = self.values[self.values < 0.5 * sentinel]
        return float(reached.max()) if reached.size else 0.0

    def at(self, x) -> np.ndarray | float:
        """Multilinear interpolation at points ``x`` of shape ``(n,)`` or ``(k, n)``."""
        if self._interp is None:
            self._interp = RegularGridInterpolator(
                self.grid.axes(), self.values, bounds_error=False, fill_value=np.nan)
        x = np.asarray(x, float)
        out = self._interp(np.atleast_2d(x))
        return float(out[0]) if x.ndim == 1 else out

    def interior_mask(self, margin: int = 1) -> np.ndarray:
        """Nodes at least ``margin`` nodes away from the domain boundary."""
        m = np.zeros(self.grid.shape, bool)
        sl = tuple(slice(margin, s - margin) for s in self.grid.shape)
        m[sl] = True
        return m

    def to_csv(self, path: str | Path) -> None:
        path = Path(path)
        pts = self.grid.coords().reshape(self.grid.n, -1).T
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i + 1}" for i in range(self.grid.n)] + ["T"])
            for p, t in zip(pts, self.values.ravel()):
                w.writerow([f"{v:.10g}" for v in p] + [f"{t:.12g}"])

    def sidecar(self, target_desc=None, opts=None) -> dict:
        return {"grid": self.grid.to_json(), "target": target_desc, "opts": opts or {},
                "iterations": self.iterations, "residual": self.residual,
                "converged": self.converged, "scheme": self.scheme,
                "sentinel": self.meta.get("sentinel")}

    def save(self, stem: str | Path, target_desc=None, opts=None) -> tuple[Path, Path]:
        stem = Path(stem)
        csv_path = stem.with_suffix(".csv")
        json_path = stem.with_suffix(".json")
        self.to_csv(csv_path)
        json_path.write_text(json.dumps(self.sidecar(target_desc, opts), indent=2))
        return csv_path, json_path

    @classmethod
    def load(cls, stem: str | Path) -> ValueField:
        stem = Path(stem)
        meta = json.loads(stem.with_suffix(".json").read_text())
        grid = UniformGrid.from_json(meta["grid"])
        data = np.loadtxt(stem.with_suffix(".csv"), delimiter=",", skiprows=1)
        values = data[:, -1].reshape(grid.shape)
        return cls(grid, values, values == 0.0, bool(meta["converged"]),
                   int(meta["iterations"]), float(meta["residual"]), meta.get("scheme", ""),
                   {"sentinel": meta["sentinel"]} if meta.get("sentinel") is not None else {})
