"""Trajectories, normal and singular extremals, and shooting for the CC distance."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.optimize import minimize

from . import _compiled as C
from .fields import ControlSystem
from .grid import TargetSet
from .hamiltonian import (char_tangent_basis, NotInCharError, poisson_bracket_matrix,
                          second_order_brackets)

log = logging.getLogger(__name__)

EPS_H = 1e-8
REPROJECT_EVERY = 50
REPROJECT_TOL = 1e-12
TRIVIAL_KERNEL = "trivial kernel: symplectic point"


class ControlBoundError(ValueError):
    pass


def _frame_jac(system: ControlSystem, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    F = np.empty((system.m, system.n))
    J = np.empty((system.m, system.n, system.n))
    C.compiled(system)(np.ascontiguousarray(x, float), F, J)
    return F, J


# --------------------------------------------------------------------------
# plain trajectories
# --------------------------------------------------------------------------

@dataclass
class Trajectory:
    t: np.ndarray
    y: np.ndarray
    hit_time: float | None = None


def _inside(target, y: np.ndarray) -> bool:
    if isinstance(target, TargetSet):
        return bool(target.indicator(y.reshape(-1, 1), slack=0.0)[0])
    return bool(target(y))


def integrate_trajectory(system: ControlSystem, x0, control, duration: float, dt: float,
                         target: TargetSet | Callable | None = None) -> Trajectory:
    """Classical RK4 for ``y' = f(y) u(t)``.

    ``control`` is a constant vector or a callable ``t -> u``.  With a target,
    integration stops at the first sample inside it and the crossing time is
    refined by bisection on the last step.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    ctrl = control if callable(control) else (lambda t, _u=np.asarray(control, float): _u)

    def u_at(t):
        u = np.asarray(ctrl(t), float)
        if u.shape != (system.m,):
            raise ValueError(f"control must have shape ({system.m},)")
        if np.linalg.norm(u) > 1 + 1e-12:
            raise ControlBoundError(f"|u({t:g})| = {np.linalg.norm(u):.6g} exceeds 1")
        return u

    def vel(t, y):
        return _frame_jac(system, y)[0].T @ u_at(t)

    def step(t, y, h):
        k1 = vel(t, y)
        k2 = vel(t + h / 2, y + h / 2 * k1)
        k3 = vel(t + h / 2, y + h / 2 * k2)
        k4 = vel(t + h, y + h * k3)
        return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

    y = np.asarray(x0, float).copy()
    nsteps = int(np.ceil(duration / dt - 1e-9))
    ts, ys = [0.0], [y.copy()]
    if target is not None and _inside(target, y):
        return Trajectory(np.array(ts), np.array(ys), 0.0)
    t = 0.0
    for _ in range(nsteps):
        h = min(dt, duration - t)
        yn = step(t, y, h)
        if target is not None and _inside(target, yn):
            lo, hi = 0.0, h
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if _inside(target, step(t, y, mid)):
                    hi = mid
                else:
                    lo = mid
            ts.append(t + hi)
            ys.append(step(t, y, hi))
            return Trajectory(np.array(ts), np.array(ys), t + hi)
        t += h
        y = yn
        ts.append(t)
        ys.append(y.copy())
    return Trajectory(np.array(ts), np.array(ys), None)


# --------------------------------------------------------------------------
# extremals
# --------------------------------------------------------------------------

@dataclass
class Extremal:
    t: np.ndarray
    y: np.ndarray
    p: np.ndarray
    u: np.ndarray
    H: np.ndarray
    kind: str  # normal | singular
    status: str = "completed"  # completed | aborted
    reason: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def H0(self) -> float:
        return float(self.H[0])

    @property
    def max_H_drift(self) -> float:
        return float(np.max(np.abs(self.H - self.H[0]))) if len(self.H) else 0.0

    @property
    def completed(self) -> bool:
        return self.status == "completed"

    def header(self) -> dict:
        return {"kind": self.kind, "status": self.status, "reason": self.reason,
                "H0": self.H0, "max_H_drift": self.max_H_drift, "samples": len(self.t),
                "meta": self.meta}

    def to_csv(self, path: str | Path) -> Path:
        """CSV ``t, y.., p.., u.., H`` plus a JSON header next to it."""
        path = Path(path)
        n, m = self.y.shape[1], self.u.shape[1]
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"y{i + 1}" for i in range(n)] + [f"p{i + 1}" for i in range(n)]
                       + [f"u{i + 1}" for i in range(m)] + ["H"])
            for row in zip(self.t, self.y, self.p, self.u, self.H):
                w.writerow([f"{row[0]:.10g}"] + [f"{v:.15g}" for v in np.concatenate(row[1:4])]
                           + [f"{row[4]:.15g}"])
        path.with_suffix(".json").write_text(json.dumps(self.header(), indent=2))
        return path


def conservation_residual(ext: Extremal) -> float:
    if not ext.completed:
        raise ValueError(f"extremal not completed ({ext.reason})")
    return ext.max_H_drift


def _nsteps(duration: float, dt: float) -> int:
    if dt <= 0 or duration < 0:
        raise ValueError("need dt > 0 and duration >= 0")
    k = int(round(duration / dt))
    if abs(k * dt - duration) > 1e-9 * max(1.0, duration):
        raise ValueError("duration must be a multiple of dt")
    return k


def integrate_normal_extremal(system: ControlSystem, x0, p0, duration: float,
                              dt: float = 1e-3, eps_h: float = EPS_H) -> Extremal:
    """RK4 on ``y' = f(y)u, p' = -(D(f u))^T p`` with ``u = symbols / H``."""
    x0 = np.asarray(x0, float)
    p0 = np.asarray(p0, float)
    if x0.shape != (system.n,) or p0.shape != (system.n,):
        raise ValueError("x0 and p0 must be vectors in R^n")
    h0 = float(np.linalg.norm(_frame_jac(system, x0)[0] @ p0))
    if h0 <= eps_h:
        raise ValueError(f"characteristic initial data (H = {h0:.3e})")
    k = _nsteps(duration, dt)
    Y = np.empty((k + 1, system.n))
    P = np.empty_like(Y)
    U = np.empty((k + 1, system.m))
    H = np.empty(k + 1)
    count = C.normal_path(C.compiled(system), x0, p0, float(dt), k, eps_h, system.m, Y, P, U, H)
    status, reason = "completed", ""
    if count < 0:
        count = -count
        status, reason = "aborted", "H fell below eps_H (approaching Char)"
    t = dt * np.arange(count)
    return Extremal(t, Y[:count], P[:count], U[:count], H[:count], "normal", status, reason,
                    {"dt": dt, "eps_H": eps_h})


def normal_drifts(system: ControlSystem, x0s: np.ndarray, p0s: np.ndarray, duration: float,
                  dt: float) -> np.ndarray:
    """``max_t |H - H0|`` for a batch of normal extremals (NaN when aborted)."""
    out = np.empty(len(x0s))
    for i, (x0, p0) in enumerate(zip(x0s, p0s)):
        e = integrate_normal_extremal(system, x0, p0, duration, dt)
        out[i] = e.max_H_drift if e.completed else np.nan
    return out


def _unit_kernel(a: np.ndarray, tol: float) -> np.ndarray:
    """Orthonormal rows spanning the numerical kernel of ``a`` (``(r, m)``)."""
    m = a.shape[1]
    if a.size == 0 or np.max(np.abs(a)) <= tol:
        return np.eye(m)
    _, s, vt = np.linalg.svd(a)
    rank = int(np.sum(s > tol))
    return vt[rank:]


def _orient(u: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(np.abs(u) > 1e-12)
    return -u if nz.size and u[nz[0]] < 0 else u


def singular_control(system: ControlSystem, y, p, prev: np.ndarray | None = None,
                     tol: float = 1e-8) -> np.ndarray | None:
    """Unit control keeping every symbol at zero, or None when none exists.

    First-order condition: ``u`` in the kernel of ``B_ij = [f_i, f_j] . p``.
    Where ``B`` vanishes, ``u`` must also annihilate the second-order rows
    ``[f_j, [f_i, f_k]] . p``.
    """
    rho = (np.asarray(y, float), np.asarray(p, float))
    scale = max(1.0, float(np.linalg.norm(p)))
    B = poisson_bracket_matrix(system, rho)
    if np.max(np.abs(B)) > tol * scale:
        ker = _unit_kernel(B, tol * scale)
    else:
        ker = _unit_kernel(second_order_brackets(system, rho), tol * scale)
    if ker.shape[0] == 0:
        return None
    if prev is not None:
        u = ker.T @ (ker @ prev)
        nu = np.linalg.norm(u)
        if nu > 1e-12:
            return u / nu
    return _orient(ker[0] / np.linalg.norm(ker[0]))


def _reproject(system: ControlSystem, y: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Newton steps in ``p`` on ``Phi(y, p) = f(y) p = 0`` (linear, so one usually suffices)."""
    A = _frame_jac(system, y)[0]
    for _ in range(3):
        r = A @ p
        if np.linalg.norm(r) <= REPROJECT_TOL:
            break
        p = p - np.linalg.lstsq(A, r, rcond=None)[0]
    return p


def integrate_singular_extremal(system: ControlSystem, rho0, duration: float,
                                dt: float = 1e-3, eps_h: float = EPS_H) -> Extremal:
    """Broken-Hamiltonian arc inside Char with controls from the bracket kernels."""
    y0, p0 = (np.asarray(v, float) for v in rho0)
    norm = np.linalg.norm(p0)
    if norm == 0:
        raise ValueError("zero covector")
    p0 = p0 / norm
    k = _nsteps(duration, dt)
    try:
        clean, _ = char_tangent_basis(system, (y0, p0), tol_char=eps_h)
    except NotInCharError as exc:
        raise ValueError(f"initial point not in Char: {exc}") from None

    ts, ys, ps, us, hs = [], [], [], [], []

    def done(status, reason):
        m = system.m
        u_arr = np.array(us) if us else np.zeros((0, m))
        return Extremal(np.array(ts), np.array(ys).reshape(-1, system.n),
                        np.array(ps).reshape(-1, system.n), u_arr.reshape(-1, m),
                        np.array(hs), "singular", status, reason, {"dt": dt, "eps_H": eps_h})

    y, p = y0.copy(), p0.copy()
    if not clean:
        ts.append(0.0), ys.append(y), ps.append(p), us.append(np.zeros(system.m))
        hs.append(float(np.linalg.norm(_frame_jac(system, y)[0] @ p)))
        return done("aborted", "non-clean constraint Jacobian")
    fj = C.compiled(system)
    prev = None
    for i in range(k + 1):
        u = singular_control(system, y, p, prev)
        h = float(np.linalg.norm(_frame_jac(system, y)[0] @ p))
        if u is None:
            ts.append(i * dt), ys.append(y), ps.append(p), us.append(np.zeros(system.m))
            hs.append(h)
            return done("aborted", TRIVIAL_KERNEL)
        ts.append(i * dt), ys.append(y), ps.append(p), us.append(u), hs.append(h)
        if h >= eps_h:
            return done("aborted", f"left Char (H = {h:.3e})")
        if i == k:
            break
        y, p = C.controlled_step(fj, y, p, u, float(dt), system.m)
        if (i + 1) % REPROJECT_EVERY == 0:
            p = _reproject(system, y, p)
        prev = u
    return done("completed", "")


# --------------------------------------------------------------------------
# shooting
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ShootingOptions:
    restarts: int = 12
    seed: int = 0
    gap_tol: float = 1e-5
    t_max: float | None = None
    steps: int = 200
    max_iter: int = 2000

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class ShootingResult:
    start: tuple[float, ...]
    goal: tuple[float, ...]
    best_p0: tuple[float, ...]
    time: float
    endpoint_gap: float
    restarts_used: int
    success: bool
    candidates: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        d = asdict(self)
        d["candidates"] = self.candidates
        return d


def _sphere_seeds(n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    if n == 2:
        a = 2 * np.pi * (np.arange(count) + rng.random()) / count
        return np.column_stack([np.cos(a), np.sin(a)])
    k = np.arange(count) + 0.5
    z = 1 - 2 * k / count
    r = np.sqrt(1 - z * z)
    phi = np.pi * (1 + 5 ** 0.5) * k + 2 * np.pi * rng.random()
    base = np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    return base if n == 3 else rng.standard_normal((count, n))


def shoot_cc_distance(system: ControlSystem, start, goal,
                      opts: ShootingOptions | None = None) -> ShootingResult:
    """Multi-start Nelder-Mead on ``|y(t; start, p0) - goal|`` over ``(p0, t)``.

    ``p0`` is parametrized by an unnormalized vector ``q`` with
    ``p0 = q / H(start, q)``; among runs meeting ``gap_tol`` the shortest
    time wins.
    """
    opts = opts or ShootingOptions()
    start = np.asarray(start, float)
    goal = np.asarray(goal, float)
    if np.allclose(start, goal):
        raise ValueError("start and goal coincide")
    fj = C.compiled(system)
    F0 = _frame_jac(system, start)[0]
    dist = float(np.linalg.norm(goal - start))
    t_max = opts.t_max or 10.0 * max(dist, 0.1)
    rng = np.random.default_rng(opts.seed)

    def p_of(q):
        h = np.linalg.norm(F0 @ q)
        return None if h < 1e-9 * max(1.0, np.linalg.norm(q)) else q / h

    def gap(z):
        q, t = z[:-1], z[-1]
        p0 = p_of(q)
        if p0 is None or not 0 < t <= t_max:
            return 1e3 + abs(t)
        end = C.normal_endpoint(fj, start, p0, t, opts.steps, system.m)
        g = float(np.linalg.norm(end - goal))
        return g if np.isfinite(g) else 1e3

    seeds = _sphere_seeds(system.n, opts.restarts, rng)
    cands = []
    for q in seeds:
        # best initial time along this seed direction from a coarse scan
        ts = np.linspace(0.1, 1.0, 10) * min(t_max, 3 * dist + 0.5)
        t0 = ts[int(np.argmin([gap(np.append(q, t)) for t in ts]))]
        res = minimize(gap, np.append(q, t0), method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": opts.max_iter,
                                "adaptive": True})
        p0 = p_of(res.x[:-1])
        if p0 is None:
            continue
        cands.append({"p0": p0.tolist(), "time": float(res.x[-1]), "gap": float(res.fun)})
    ok = [c for c in cands if c["gap"] <= opts.gap_tol]
    pool = ok or cands
    if not pool:
        raise RuntimeError("shooting produced no admissible candidate")
    best = min(pool, key=lambda c: (c["time"], c["gap"])) if ok else min(pool, key=lambda c: c["gap"])
    return ShootingResult(tuple(start.tolist()), tuple(goal.tolist()), tuple(best["p0"]),
                          best["time"], best["gap"], len(seeds), bool(ok), cands)
