"""Lipschitz quotients, refinement studies and Hölder fits of value fields."""
from __future__ import annotations

import csv
import itertools
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .eikonal import SolverOptions, solve_min_time
from .fields import ControlSystem
from .grid import TargetSet, UniformGrid, ValueField

log = logging.getLogger(__name__)

GAMMA = 1.4


@dataclass
class LipschitzField:
    grid: UniformGrid
    values: np.ndarray  # NaN on omitted cells
    r: float

    def to_csv(self, path: str | Path) -> None:
        pts = self.grid.coords().reshape(self.grid.n, -1).T
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i + 1}" for i in range(self.grid.n)] + ["L"])
            for p, v in zip(pts, self.values.ravel()):
                if np.isfinite(v):
                    w.writerow([f"{c:.10g}" for c in p] + [f"{v:.10g}"])


def _ball_offsets(n: int, radius_cells: float) -> list[tuple[int, ...]]:
    k = int(np.floor(radius_cells + 1e-9))
    out = []
    for off in itertools.product(range(-k, k + 1), repeat=n):
        d2 = sum(o * o for o in off)
        if 0 < d2 <= radius_cells ** 2 + 1e-9:
            out.append(off)
    return out


def _shifted(a: np.ndarray, off) -> tuple[tuple[slice, ...], tuple[slice, ...]]:
    src, dst = [], []
    for o, s in zip(off, a.shape):
        if o >= 0:
            src.append(slice(o, s))
            dst.append(slice(0, s - o))
        else:
            src.append(slice(0, s + o))
            dst.append(slice(-o, s))
    return tuple(src), tuple(dst)


def target_interior(target: np.ndarray) -> np.ndarray:
    """Target nodes whose face neighbours (inside the domain) are all in the target."""
    st = ndimage.generate_binary_structure(target.ndim, 1)
    return ndimage.binary_erosion(target, structure=st, border_value=1)


def lipschitz_field(vf: ValueField, r: float) -> LipschitzField:
    """``L(x) = max |T(y) - T(x)| / |y - x|`` over grid nodes with ``|y - x| <= r``."""
    h = vf.grid.h
    if r < 2 * h - 1e-12:
        raise ValueError(f"r = {r} below 2h = {2 * h}")
    v = np.where(vf.values < 0.5 * vf.meta.get("sentinel", np.inf), vf.values, np.nan)
    out = np.zeros(v.shape)
    for off in _ball_offsets(vf.grid.n, r / h):
        src, dst = _shifted(v, off)
        q = np.abs(v[src] - v[dst]) / (h * np.sqrt(sum(o * o for o in off)))
        # fmax ignores NaN neighbours (unreached nodes)
        out[dst] = np.fmax(out[dst], q)
    out[np.isnan(v)] = np.nan
    out[target_interior(vf.target)] = np.nan
    return LipschitzField(vf.grid, out, float(r))


@dataclass
class RefinementReport:
    grids: list[UniformGrid]
    r_cells: float
    gamma: float
    growth: list[np.ndarray]  # L_{k+1} / L_k on the coarse grid
    flagged: np.ndarray  # coarse-grid mask, growth >= gamma at both steps
    considered: np.ndarray  # coarse cells where all quotients are defined
    step_fractions: list[float]  # per-step flagged fractions, step k on grid k
    fraction: float
    flagged_points: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"h": [g.h for g in self.grids], "r_cells": self.r_cells,
                "gamma": self.gamma, "fraction": self.fraction,
                "step_fractions": self.step_fractions,
                "n_flagged": int(self.flagged.sum()), "n_considered": int(self.considered.sum()),
                "flagged_points": self.flagged_points.tolist(), "meta": self.meta}

    def flagged_at(self, gamma: float) -> np.ndarray:
        """Flag set for another threshold (same quotients)."""
        return self.considered & (self.growth[0] >= gamma) & (self.growth[1] >= gamma)


def _sub(a: np.ndarray, factor: int) -> np.ndarray:
    return a[tuple(slice(None, None, factor) for _ in range(a.ndim))]


def _considered(vf: ValueField, L: np.ndarray, margin: int) -> np.ndarray:
    ok = np.isfinite(L) & (L > 0) & ~vf.target
    return ok & vf.interior_mask(margin)


def refinement_study(system: ControlSystem, target: TargetSet | np.ndarray,
                     base_grid: UniformGrid, r_cells: float = 2.0, gamma: float = GAMMA,
                     opts: SolverOptions | None = None, margin: int = 2,
                     fields: list[ValueField] | None = None) -> RefinementReport:
    """Solve on ``h, h/2, h/4`` and flag coarse cells where ``L`` keeps growing.

    The quotient radius is ``r_cells`` grid spacings on every level, so a
    Lipschitz function keeps bounded quotients while a Hölder singularity
    ``T ~ d^a`` grows by about ``2^(1-a)`` per halving.
    """
    if gamma <= 1:
        raise ValueError("gamma must exceed 1")
    grids = [base_grid, base_grid.refine(2), base_grid.refine(4)]
    if fields is None:
        fields = []
        for g in grids:
            vf = solve_min_time(system, target, g, opts)
            if not vf.converged:
                raise RuntimeError(f"solve on h = {g.h:g} did not converge")
            fields.append(vf)
    Ls = [lipschitz_field(vf, r_cells * vf.grid.h).values for vf in fields]
    # everything on the coarse grid
    Lc = [Ls[0], _sub(Ls[1], 2), _sub(Ls[2], 4)]
    with np.errstate(divide="ignore", invalid="ignore"):
        growth = [Lc[1] / Lc[0], Lc[2] / Lc[1]]
    considered = (_considered(fields[0], Lc[0], margin)
                  & np.isfinite(Lc[1]) & np.isfinite(Lc[2]) & (Lc[1] > 0))
    flagged = considered & (growth[0] >= gamma) & (growth[1] >= gamma)

    # per-step fractions: step k measured on grid k
    fracs = []
    for k in range(2):
        fine = Ls[k + 1][tuple(slice(None, None, 2) for _ in range(base_grid.n))]
        with np.errstate(divide="ignore", invalid="ignore"):
            g_k = fine / Ls[k]
        cons = _considered(fields[k], Ls[k], margin * 2 ** k) & np.isfinite(fine)
        fracs.append(float((cons & (g_k >= gamma)).sum() / max(cons.sum(), 1)))

    pts = base_grid.lo + base_grid.h * np.argwhere(flagged)
    return RefinementReport(grids, r_cells, gamma, growth, flagged, considered, fracs,
                            float(flagged.sum() / max(considered.sum(), 1)), pts,
                            {"iterations": [vf.iterations for vf in fields]})


def derivative_consistency(coarse: ValueField, fine: ValueField, cells: np.ndarray,
                           rel_tol: float = 0.1) -> float:
    """Share of coarse ``cells`` whose centred gradient agrees between ``h`` and ``h/2``.

    Agreement means ``|D_h T - D_{h/2} T| <= rel_tol * |D_{h/2} T|``.
    """
    n = coarse.grid.n
    ok = 0
    total = 0
    for idx in cells:
        idx = tuple(int(i) for i in idx)
        fidx = tuple(2 * i for i in idx)
        gc = np.empty(n)
        gf = np.empty(n)
        valid = True
        for a in range(n):
            e = np.zeros(n, int)
            e[a] = 1
            try:
                gc[a] = (coarse.values[tuple(np.add(idx, e))]
                         - coarse.values[tuple(np.subtract(idx, e))]) / (2 * coarse.grid.h)
                gf[a] = (fine.values[tuple(np.add(fidx, e))]
                         - fine.values[tuple(np.subtract(fidx, e))]) / (2 * fine.grid.h)
            except IndexError:
                valid = False
            if min(np.subtract(idx, e)) < 0 or min(np.subtract(fidx, e)) < 0:
                valid = False
        if not valid:
            continue
        total += 1
        ok += np.linalg.norm(gc - gf) <= rel_tol * np.linalg.norm(gf)
    return ok / total if total else float("nan")


@dataclass
class HolderFit:
    center: tuple[float, ...]
    directions: list[tuple[float, ...]]
    alphas: list[float]
    coeffs: list[float]
    residuals: list[float]
    alpha: float  # smallest direction-wise exponent
    c1: float
    c2: float
    samples: list[list[tuple[float, float]]]
    cc_balls: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"center": list(self.center), "directions": [list(d) for d in self.directions],
                "alphas": self.alphas, "coeffs": self.coeffs, "residuals": self.residuals,
                "alpha": self.alpha, "C1": self.c1, "C2": self.c2,
                "samples": [[list(p) for p in s] for s in self.samples],
                "cc_balls": self.cc_balls}


def holder_fit(vf: ValueField, center, directions, r_min: float | None = None,
               r_max: float | None = None, n_samples: int = 16,
               cc_radii=()) -> HolderFit:
    """Log-log fits of ``T(center + s e)`` against ``s`` along each direction.

    ``vf`` must hold the distance to ``center`` (a point-like target there).
    Radii below ``5h`` are excluded; ``r_max`` defaults to the largest radius
    keeping a 3-cell margin from the domain edge in every direction.
    """
    center = np.asarray(center, float)
    g = vf.grid
    lo = max(5 * g.h, r_min or 0.0)
    dirs = [np.asarray(d, float) / np.linalg.norm(d) for d in directions]
    alphas, coeffs, resid, samples, all_s, all_t = [], [], [], [], [], []
    for e in dirs:
        with np.errstate(divide="ignore"):
            room = np.where(e > 1e-12, (g.hi - 3 * g.h - center) / e,
                            np.where(e < -1e-12, (g.lo + 3 * g.h - center) / e, np.inf))
        hi = min(float(room.min()), r_max if r_max is not None else np.inf)
        if not hi > 2 * lo:
            raise ValueError(f"insufficient radii along {e.tolist()}: [{lo:.3g}, {hi:.3g}]")
        s = np.geomspace(lo, hi, n_samples)
        t = np.asarray(vf.at(center + s[:, None] * e))
        if np.any(~np.isfinite(t)) or np.any(t <= 0):
            raise ValueError("value field undefined along probe")
        A = np.column_stack([np.log(s), np.ones_like(s)])
        coef, res, *_ = np.linalg.lstsq(A, np.log(t), rcond=None)
        alphas.append(float(coef[0]))
        coeffs.append(float(np.exp(coef[1])))
        resid.append(float(np.sqrt(res[0] / len(s))) if res.size else 0.0)
        samples.append(list(zip(s.tolist(), t.tolist())))
        all_s.append(s)
        all_t.append(t)
    alpha = float(min(alphas))
    s_all, t_all = np.concatenate(all_s), np.concatenate(all_t)
    c1 = float((t_all / s_all).min())
    c2 = float((t_all / s_all ** alpha).max())
    balls = {}
    for R in cc_radii:
        m = vf.values <= R
        interior = ndimage.binary_erosion(m)
        touches = any(np.take(m, [0, -1], axis=a).any() for a in range(g.n))
        balls[str(R)] = {"cells": int(m.sum()), "interior_cells": int(interior.sum()),
                         "bounded_in_domain": not touches}
    return HolderFit(tuple(center.tolist()), [tuple(d.tolist()) for d in dirs], alphas,
                     coeffs, resid, alpha, c1, c2, samples, balls)
