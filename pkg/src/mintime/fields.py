"""Polynomial vector fields on R^n with exact rational coefficients.

A component polynomial is a mapping ``exponents -> Fraction``; zero
coefficients are dropped on construction so that two fields compare equal
exactly when they are equal as fields.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Iterable, Mapping, Sequence

import numpy as np

Monomial = tuple[int, ...]
Poly = dict[Monomial, Fraction]


class DimensionError(ValueError):
    pass


def _canon(poly: Mapping[Monomial, object], n: int) -> Poly:
    out: Poly = {}
    for mono, c in poly.items():
        mono = tuple(int(e) for e in mono)
        if len(mono) != n:
            raise DimensionError(f"monomial {mono} has length {len(mono)}, expected {n}")
        if any(e < 0 for e in mono):
            raise ValueError(f"negative exponent in {mono}")
        c = Fraction(c)
        if c:
            out[mono] = out.get(mono, Fraction(0)) + c
            if not out[mono]:
                del out[mono]
    return out


def poly_add(a: Poly, b: Poly, sign: int = 1) -> Poly:
    out = dict(a)
    for mono, c in b.items():
        v = out.get(mono, Fraction(0)) + sign * c
        if v:
            out[mono] = v
        else:
            out.pop(mono, None)
    return out


def poly_mul(a: Poly, b: Poly) -> Poly:
    out: Poly = {}
    for (ma, ca), (mb, cb) in product(a.items(), b.items()):
        mono = tuple(i + j for i, j in zip(ma, mb))
        v = out.get(mono, Fraction(0)) + ca * cb
        if v:
            out[mono] = v
        else:
            out.pop(mono, None)
    return out


def poly_diff(a: Poly, j: int) -> Poly:
    out: Poly = {}
    for mono, c in a.items():
        e = mono[j]
        if e == 0:
            continue
        m = list(mono)
        m[j] = e - 1
        out[tuple(m)] = c * e
    return out


def poly_eval(a: Poly, x: np.ndarray) -> np.ndarray:
    """Evaluate at ``x`` of shape ``(n, ...)``; returns shape ``x.shape[1:]``."""
    out = np.zeros(x.shape[1:], dtype=float)
    for mono, c in a.items():
        term = np.full(x.shape[1:], float(c))
        for j, e in enumerate(mono):
            if e:
                term = term * x[j] ** e
        out = out + term
    return out


@dataclass(frozen=True, eq=False)
class PolyVectorField:
    """Vector field ``sum_i P_i(x) d/dx_i`` with polynomial components."""

    n: int
    components: tuple[Poly, ...]
    name: str = field(default="", compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("dimension must be positive")
        if len(self.components) != self.n:
            raise DimensionError(
                f"{len(self.components)} components for dimension {self.n}")
        object.__setattr__(
            self, "components", tuple(_canon(c, self.n) for c in self.components))

    # structural identity == mathematical identity (canonical form)
    def _key(self):
        return (self.n, tuple(tuple(sorted(c.items())) for c in self.components))

    def __eq__(self, other):
        if not isinstance(other, PolyVectorField):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def __neg__(self) -> PolyVectorField:
        return PolyVectorField(
            self.n, tuple({m: -c for m, c in comp.items()} for comp in self.components))

    def __add__(self, other: PolyVectorField) -> PolyVectorField:
        _check_same(self, other)
        return PolyVectorField(
            self.n, tuple(poly_add(a, b) for a, b in zip(self.components, other.components)))

    def __sub__(self, other: PolyVectorField) -> PolyVectorField:
        _check_same(self, other)
        return PolyVectorField(
            self.n,
            tuple(poly_add(a, b, -1) for a, b in zip(self.components, other.components)))

    def is_zero(self) -> bool:
        return all(not c for c in self.components)

    def degree(self) -> int:
        return max((sum(m) for c in self.components for m in c), default=0)

    def __repr__(self):
        label = f" {self.name}" if self.name else ""
        return f"<PolyVectorField{label} n={self.n}: {self.pretty()}>"

    def pretty(self) -> str:
        parts = []
        for i, comp in enumerate(self.components):
            if comp:
                parts.append(f"({_poly_str(comp)})d{i + 1}")
        return " + ".join(parts) if parts else "0"

    # -- construction helpers ----------------------------------------------
    @classmethod
    def zero(cls, n: int) -> PolyVectorField:
        return cls(n, tuple({} for _ in range(n)))

    @classmethod
    def coordinate(cls, n: int, i: int) -> PolyVectorField:
        """The constant field d/dx_{i+1}."""
        comps = [{} for _ in range(n)]
        comps[i] = {(0,) * n: Fraction(1)}
        return cls(n, tuple(comps))

    @classmethod
    def from_terms(cls, n: int, terms: Sequence[Iterable[tuple[object, Sequence[int]]]],
                   name: str = "") -> PolyVectorField:
        """Build from per-component lists of ``(coeff, powers)`` pairs."""
        comps = []
        for comp in terms:
            poly: dict = {}
            for coeff, powers in comp:
                mono = tuple(int(e) for e in powers)
                poly[mono] = poly.get(mono, Fraction(0)) + Fraction(coeff)
            comps.append(poly)
        return cls(n, tuple(comps), name=name)

    @classmethod
    def from_spec(cls, spec: Sequence[Sequence[Mapping]], name: str = "") -> PolyVectorField:
        """Parse the inline scenario format.

        ``spec`` is a list with one entry per component, each a list of
        monomials ``{"coeff": "p/q", "powers": [e1, ..., en]}``.
        """
        n = len(spec)
        terms = [[(Fraction(str(m["coeff"])), m["powers"]) for m in comp] for comp in spec]
        return cls.from_terms(n, terms, name=name)

    def to_spec(self) -> list[list[dict]]:
        return [
            [{"coeff": str(c), "powers": list(m)} for m, c in sorted(comp.items())]
            for comp in self.components
        ]


def _poly_str(p: Poly) -> str:
    terms = []
    for mono, c in sorted(p.items()):
        vars_ = "*".join(
            f"x{j + 1}" + (f"^{e}" if e > 1 else "") for j, e in enumerate(mono) if e)
        if not vars_:
            terms.append(str(c))
        elif c == 1:
            terms.append(vars_)
        elif c == -1:
            terms.append("-" + vars_)
        else:
            terms.append(f"{c}*{vars_}")
    return " + ".join(terms)


def _check_same(f: PolyVectorField, g: PolyVectorField) -> None:
    if f.n != g.n:
        raise DimensionError(f"fields of dimension {f.n} and {g.n}")


def _as_points(field_: PolyVectorField, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[0] != field_.n:
        raise DimensionError(f"point of shape {x.shape} for a field on R^{field_.n}")
    return x


def eval_field(field_: PolyVectorField, x) -> np.ndarray:
    """Evaluate the field at ``x`` (shape ``(n,)`` or ``(n, ...)``)."""
    x = _as_points(field_, x)
    return np.stack([poly_eval(c, x) for c in field_.components])


def jacobian_field(field_: PolyVectorField) -> list[list[Poly]]:
    """Symbolic Jacobian: entry ``[i][j]`` is d(component i)/dx_j."""
    return [[poly_diff(c, j) for j in range(field_.n)] for c in field_.components]


def eval_jacobian(field_: PolyVectorField, x) -> np.ndarray:
    """Jacobian at ``x``; shape ``(n, n)`` for a single point."""
    x = _as_points(field_, x)
    jac = jacobian_field(field_)
    return np.array([[poly_eval(d, x) for d in row] for row in jac])


def lie_bracket(f: PolyVectorField, g: PolyVectorField) -> PolyVectorField:
    """Commutator ``[f, g] = Dg f - Df g``, exact."""
    _check_same(f, g)
    n = f.n
    comps = []
    for i in range(n):
        acc: Poly = {}
        for j in range(n):
            acc = poly_add(acc, poly_mul(poly_diff(g.components[i], j), f.components[j]))
            acc = poly_add(acc, poly_mul(poly_diff(f.components[i], j), g.components[j]), -1)
        comps.append(acc)
    return PolyVectorField(n, tuple(comps))


@dataclass(frozen=True)
class ControlSystem:
    """Driftless system ``y' = sum_i f_i(y) u_i`` with ``|u| <= 1``."""

    fields: tuple[PolyVectorField, ...]
    name: str = ""

    def __post_init__(self):
        fs = tuple(self.fields)
        if not fs:
            raise ValueError("a control system needs at least one field")
        n = fs[0].n
        for f in fs:
            if f.n != n:
                raise DimensionError("all fields must share the state dimension")
        object.__setattr__(self, "fields", fs)

    @property
    def n(self) -> int:
        return self.fields[0].n

    @property
    def m(self) -> int:
        return len(self.fields)

    def frame(self, x) -> np.ndarray:
        """Matrix with rows ``f_i(x)``; shape ``(m, n, ...)``."""
        return np.stack([eval_field(f, x) for f in self.fields])

    def velocity(self, x, u) -> np.ndarray:
        """``f(x) u`` for a single state and control."""
        return np.asarray(u, dtype=float) @ self.frame(x)

    def frame_jacobians(self, x) -> np.ndarray:
        """Stack of Jacobians, shape ``(m, n, n)``."""
        return np.stack([eval_jacobian(f, x) for f in self.fields])

    def to_spec(self) -> dict:
        return {"name": self.name, "fields": [f.to_spec() for f in self.fields]}

    @classmethod
    def from_spec(cls, spec: Mapping) -> ControlSystem:
        fields_ = tuple(PolyVectorField.from_spec(f) for f in spec["fields"])
        return cls(fields_, name=spec.get("name", "inline"))


@dataclass(frozen=True)
class HormanderReport:
    point: tuple[float, ...]
    rank: int
    step: int | None  # None: rank n not reached within max_depth
    basis: list[tuple[str, tuple[float, ...]]]
    max_depth: int

    @property
    def full_rank(self) -> bool:
        return self.step is not None

    def to_json(self) -> dict:
        return {
            "point": list(self.point),
            "rank": self.rank,
            "step": self.step if self.step is not None else "not reached at max_depth",
            "max_depth": self.max_depth,
            "basis": [{"word": w, "value": list(v)} for w, v in self.basis],
        }


def bracket_words(system: ControlSystem, max_depth: int) -> list[list[tuple[str, PolyVectorField]]]:
    """Left-normed bracket words ``[f_i1,[f_i2,[...,f_ik]]]`` grouped by depth.

    Symbolically zero fields are pruned, as are repeats up to sign.
    """
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    gens = [(f"f{i + 1}", f) for i, f in enumerate(system.fields)]
    seen: set[PolyVectorField] = set()
    levels: list[list[tuple[str, PolyVectorField]]] = []
    current = []
    for w, f in gens:
        if not f.is_zero() and f not in seen:
            seen.update((f, -f))
            current.append((w, f))
    levels.append(current)
    for _ in range(1, max_depth):
        nxt = []
        for wg, g in gens:
            for wv, v in levels[-1]:
                b = lie_bracket(g, v)
                if b.is_zero() or b in seen:
                    continue
                seen.update((b, -b))
                nxt.append((f"[{wg},{wv}]", b))
        levels.append(nxt)
        if not nxt:
            break
    return levels


def numerical_rank(vectors: np.ndarray, tol: float) -> int:
    if vectors.size == 0:
        return 0
    s = np.linalg.svd(np.atleast_2d(vectors), compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s >= tol * s[0]))


def hormander_rank(system: ControlSystem, x, max_depth: int = 6,
                   tol: float = 1e-9) -> HormanderReport:
    """Rank of the bracket-generated frame at ``x`` and the step reaching ``n``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (system.n,):
        raise DimensionError(f"point of shape {x.shape} for a system on R^{system.n}")
    levels = bracket_words(system, max_depth)
    basis: list[tuple[str, tuple[float, ...]]] = []
    vals: list[np.ndarray] = []
    rank = 0
    step = None
    for depth, level in enumerate(levels, start=1):
        for word, f in level:
            v = eval_field(f, x)
            trial = numerical_rank(np.array(vals + [v]), tol)
            if trial > rank:
                vals.append(v)
                basis.append((word, tuple(float(t) for t in v)))
                rank = trial
        if rank == system.n and step is None:
            step = depth
            break
    return HormanderReport(tuple(float(t) for t in x), rank, step, basis, max_depth)
