"""Numba-compiled evaluators generated from exact polynomial systems.

``compiled(system)`` emits straight-line Python for ``f_i(x)`` and
``D f_i(x)`` and jit-compiles it, so that ODE integration does not pay the
per-call overhead of the dictionary polynomials.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from numba import njit

from .fields import ControlSystem, Poly, jacobian_field


def _expr(poly: Poly) -> str:
    if not poly:
        return "0.0"
    terms = []
    for mono, c in sorted(poly.items()):
        factors = [repr(float(c))]
        for j, e in enumerate(mono):
            if e == 1:
                factors.append(f"x[{j}]")
            elif e > 1:
                factors.append(f"x[{j}]**{e}")
        terms.append("*".join(factors))
    return " + ".join(terms)


@lru_cache(maxsize=32)
def compiled(system: ControlSystem):
    """Jitted ``frame_jac(x, F, J)`` filling ``F[i, k] = f_i^k(x)`` and ``J[i, k, j] = d_j f_i^k``."""
    lines = ["def frame_jac(x, F, J):"]
    for i, f in enumerate(system.fields):
        jac = jacobian_field(f)
        for k, comp in enumerate(f.components):
            lines.append(f"    F[{i}, {k}] = {_expr(comp)}")
            for j in range(system.n):
                lines.append(f"    J[{i}, {k}, {j}] = {_expr(jac[k][j])}")
    ns: dict = {}
    exec("\n".join(lines), ns)  # noqa: S102 - source generated from exact polynomials
    return njit(ns["frame_jac"])


@njit
def _rhs(fj, y, p, u, F, J, dy, dp):
    fj(y, F, J)
    m, n = F.shape
    for k in range(n):
        s = 0.0
        for i in range(m):
            s += F[i, k] * u[i]
        dy[k] = s
    for j in range(n):
        s = 0.0
        for i in range(m):
            for k in range(n):
                s += u[i] * J[i, k, j] * p[k]
        dp[j] = -s


@njit
def _normal_control(fj, y, p, F, J, u):
    fj(y, F, J)
    m, n = F.shape
    h2 = 0.0
    for i in range(m):
        s = 0.0
        for k in range(n):
            s += F[i, k] * p[k]
        u[i] = s
        h2 += s * s
    h = math.sqrt(h2)
    if h > 0.0:
        for i in range(m):
            u[i] /= h
    return h


@njit
def normal_path(fj, y0, p0, dt, nsteps, eps_h, m, Y, P, U, H):
    """RK4 on the normal flow, ``u = symbols / H`` at every stage.

    Fills ``nsteps + 1`` samples; returns the number written (fewer when
    ``H`` drops below ``eps_h``).
    """
    n = y0.shape[0]
    F = np.empty((m, n))
    J = np.empty((m, n, n))
    u = np.empty(m)
    ky = np.empty((4, n))
    kp = np.empty((4, n))
    y = y0.copy()
    p = p0.copy()
    ys = np.empty(n)
    ps = np.empty(n)
    for step in range(nsteps + 1):
        h = _normal_control(fj, y, p, F, J, u)
        Y[step] = y
        P[step] = p
        U[step] = u
        H[step] = h
        if h < eps_h:
            return step + 1 if step == 0 else -(step + 1)
        if step == nsteps:
            break
        for s in range(4):
            c = 0.0 if s == 0 else (0.5 if s < 3 else 1.0)
            for k in range(n):
                ys[k] = y[k] + (c * dt * ky[s - 1, k] if s > 0 else 0.0)
                ps[k] = p[k] + (c * dt * kp[s - 1, k] if s > 0 else 0.0)
            hs = _normal_control(fj, ys, ps, F, J, u)
            if hs < eps_h:
                return -(step + 1)
            _rhs(fj, ys, ps, u, F, J, ky[s], kp[s])
        for k in range(n):
            y[k] += dt / 6.0 * (ky[0, k] + 2 * ky[1, k] + 2 * ky[2, k] + ky[3, k])
            p[k] += dt / 6.0 * (kp[0, k] + 2 * kp[1, k] + 2 * kp[2, k] + kp[3, k])
    return nsteps + 1


@njit
def normal_endpoint(fj, y0, p0, t, nsteps, m):
    """Endpoint of the normal flow after time ``t`` (NaN if ``H`` vanishes)."""
    n = y0.shape[0]
    F = np.empty((m, n))
    J = np.empty((m, n, n))
    u = np.empty(m)
    ky = np.empty((4, n))
    kp = np.empty((4, n))
    y = y0.copy()
    p = p0.copy()
    ys = np.empty(n)
    ps = np.empty(n)
    dt = t / nsteps
    for _ in range(nsteps):
        for s in range(4):
            c = 0.0 if s == 0 else (0.5 if s < 3 else 1.0)
            for k in range(n):
                ys[k] = y[k] + (c * dt * ky[s - 1, k] if s > 0 else 0.0)
                ps[k] = p[k] + (c * dt * kp[s - 1, k] if s > 0 else 0.0)
            if _normal_control(fj, ys, ps, F, J, u) < 1e-12:
                y[:] = np.nan
                return y
            _rhs(fj, ys, ps, u, F, J, ky[s], kp[s])
        for k in range(n):
            y[k] += dt / 6.0 * (ky[0, k] + 2 * ky[1, k] + 2 * ky[2, k] + ky[3, k])
            p[k] += dt / 6.0 * (kp[0, k] + 2 * kp[1, k] + 2 * kp[2, k] + kp[3, k])
    return y


@njit
def controlled_step(fj, y, p, u, dt, m):
    """One RK4 step of ``rho' = sum_j u_j H_{f_j}(rho)`` with ``u`` frozen."""
    n = y.shape[0]
    F = np.empty((m, n))
    J = np.empty((m, n, n))
    ky = np.empty((4, n))
    kp = np.empty((4, n))
    ys = np.empty(n)
    ps = np.empty(n)
    for s in range(4):
        c = 0.0 if s == 0 else (0.5 if s < 3 else 1.0)
        for k in range(n):
            ys[k] = y[k] + (c * dt * ky[s - 1, k] if s > 0 else 0.0)
            ps[k] = p[k] + (c * dt * kp[s - 1, k] if s > 0 else 0.0)
        _rhs(fj, ys, ps, u, F, J, ky[s], kp[s])
    yn = y + dt / 6.0 * (ky[0] + 2 * ky[1] + 2 * ky[2] + ky[3])
    pn = p + dt / 6.0 * (kp[0] + 2 * kp[1] + 2 * kp[2] + kp[3])
    return yn, pn
