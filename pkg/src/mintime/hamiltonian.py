"""Symbols, the Hamiltonian and the characteristic set on T*R^n.

With ``f_i(x, p) = f_i(x) . p`` the Hamiltonian is
``H(x, p) = |(f_1(x, p), ..., f_m(x, p))|`` and the characteristic set is the
common zero set of the symbols with ``p != 0``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .fields import ControlSystem, DimensionError, eval_field, lie_bracket

TOL_CHAR = 1e-8
TOL_GRAM = 1e-6


class CharacteristicPointError(ValueError):
    """Raised where ``H = 0`` and the maximizing control is not unique."""


class NotInCharError(ValueError):
    pass


@dataclass(frozen=True)
class CotangentPoint:
    x: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        p = np.asarray(self.p, dtype=float)
        if x.shape != p.shape or x.ndim != 1:
            raise DimensionError(f"x {x.shape} and p {p.shape} must be matching vectors")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "p", p)

    @property
    def n(self) -> int:
        return self.x.size

    def scaled(self, lam: float) -> CotangentPoint:
        return CotangentPoint(self.x, lam * self.p)


def as_cotangent(rho) -> CotangentPoint:
    if isinstance(rho, CotangentPoint):
        return rho
    x, p = rho
    return CotangentPoint(x, p)


def _check(system: ControlSystem, rho: CotangentPoint) -> None:
    if rho.n != system.n:
        raise DimensionError(f"cotangent point in R^{rho.n} for a system on R^{system.n}")


def symbols(system: ControlSystem, rho) -> np.ndarray:
    rho = as_cotangent(rho)
    _check(system, rho)
    return system.frame(rho.x) @ rho.p


def hamiltonian(system: ControlSystem, rho) -> float:
    return float(np.linalg.norm(symbols(system, rho)))


def optimal_control(system: ControlSystem, rho) -> np.ndarray:
    """Maximizer of ``f(x)u . p`` over the closed unit ball."""
    s = symbols(system, rho)
    h = float(np.linalg.norm(s))
    if h == 0.0:
        raise CharacteristicPointError("characteristic point, maximizer not unique")
    return s / h


def char_residual(system: ControlSystem, rho) -> float:
    rho = as_cotangent(rho)
    norm = np.linalg.norm(rho.p)
    if norm == 0.0:
        raise ValueError("zero covector")
    return hamiltonian(system, rho)


def constraint_jacobian(system: ControlSystem, rho) -> np.ndarray:
    """``D Phi`` for ``Phi(x, p) = (f_i(x) . p)_i``; shape ``(m, 2n)``."""
    rho = as_cotangent(rho)
    _check(system, rho)
    jacs = system.frame_jacobians(rho.x)  # (m, n, n)
    dx = np.einsum("ikj,k->ij", jacs, rho.p)  # d/dx_j of f_i(x).p
    return np.hstack([dx, system.frame(rho.x)])


def _kernel(a: np.ndarray, tol: float) -> tuple[int, np.ndarray]:
    u, s, vt = np.linalg.svd(a)
    rank = int(np.sum(s > tol * max(s[0], 1.0))) if s.size else 0
    return rank, vt[rank:]


def char_tangent_basis(system: ControlSystem, rho, tol_char: float = TOL_CHAR,
                       tol_rank: float = 1e-10) -> tuple[bool, np.ndarray]:
    """Orthonormal basis (rows, length ``2n``) of ``ker D Phi`` at ``rho``.

    ``clean`` is True when ``D Phi`` has full rank ``m``.
    """
    rho = as_cotangent(rho)
    res = char_residual(system, rho.scaled(1.0 / np.linalg.norm(rho.p)))
    if res >= tol_char:
        raise NotInCharError(f"point not in Char (H = {res:.3e} >= {tol_char:g})")
    rank, basis = _kernel(constraint_jacobian(system, rho), tol_rank)
    return rank == system.m, basis


def symplectic_form(v: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``sigma(v, w) = dp . dx' - dp' . dx`` for stacked ``(dx, dp)`` rows."""
    n = v.shape[-1] // 2
    return v[..., n:] @ w[..., :n].T - v[..., :n] @ w[..., n:].T


@dataclass(frozen=True)
class SymplecticReport:
    x: tuple[float, ...]
    p: tuple[float, ...]
    clean: bool
    tangent_dim: int
    gram_sv: tuple[float, ...]
    verdict: str  # symplectic | degenerate | not_clean | not_in_char

    def to_json(self) -> dict:
        return {"x": list(self.x), "p": list(self.p), "clean": self.clean,
                "tangent_dim": self.tangent_dim, "gram_sv": list(self.gram_sv),
                "verdict": self.verdict}


def symplectic_test(system: ControlSystem, rho, tol: float = TOL_GRAM,
                    tol_char: float = TOL_CHAR) -> SymplecticReport:
    """Is the restriction of sigma to ``T_rho Char`` nondegenerate?

    The covector is normalized first, so the verdict is invariant under
    ``p -> lam p``.  ``tol`` is relative to the largest Gram singular value.
    """
    rho = as_cotangent(rho)
    x, p = tuple(rho.x.tolist()), tuple(rho.p.tolist())
    norm = np.linalg.norm(rho.p)
    if norm == 0.0:
        return SymplecticReport(x, p, False, 0, (), "not_in_char")
    unit = rho.scaled(1.0 / norm)
    try:
        clean, basis = char_tangent_basis(system, unit, tol_char=tol_char)
    except NotInCharError:
        return SymplecticReport(x, p, False, 0, (), "not_in_char")
    gram = symplectic_form(basis, basis)
    sv = np.linalg.svd(gram, compute_uv=False) if gram.size else np.zeros(0)
    sv_t = tuple(float(s) for s in sv)
    if not clean:
        return SymplecticReport(x, p, False, basis.shape[0], sv_t, "not_clean")
    ok = sv.size > 0 and sv[-1] > tol * sv[0]
    return SymplecticReport(x, p, True, basis.shape[0], sv_t,
                            "symplectic" if ok else "degenerate")


@lru_cache(maxsize=64)
def _brackets(system: ControlSystem):
    fs = system.fields
    return {(i, j): lie_bracket(fs[i], fs[j])
            for i in range(len(fs)) for j in range(i + 1, len(fs))}


@lru_cache(maxsize=64)
def _second_brackets(system: ControlSystem):
    fs = system.fields
    return {(j, i, k): lie_bracket(fs[j], b) for (i, k), b in _brackets(system).items()
            for j in range(len(fs))}


def poisson_bracket_matrix(system: ControlSystem, rho) -> np.ndarray:
    """``B_ij = [f_i, f_j](x) . p``; antisymmetric ``(m, m)``."""
    rho = as_cotangent(rho)
    _check(system, rho)
    m = system.m
    b = np.zeros((m, m))
    for (i, j), f in _brackets(system).items():
        v = float(eval_field(f, rho.x) @ rho.p)
        b[i, j] = v
        b[j, i] = -v
    return b


def second_order_brackets(system: ControlSystem, rho) -> np.ndarray:
    """Rows indexed by pairs ``i < k``; entry ``j`` is ``[f_j, [f_i, f_k]](x) . p``."""
    rho = as_cotangent(rho)
    _check(system, rho)
    m = system.m
    sec = _second_brackets(system)
    pairs = sorted(_brackets(system))
    out = np.zeros((len(pairs), m))
    for r, (i, k) in enumerate(pairs):
        for j in range(m):
            out[r, j] = float(eval_field(sec[(j, i, k)], rho.x) @ rho.p)
    return out
