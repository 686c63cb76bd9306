"""Boundaries of reachable sets, discrete normal cones, characteristic points.

Proximal normals are realized as nearest-point directions: if ``z`` lies
outside a closed set ``C`` and ``x`` is its nearest point in ``C``, then
``(z - x) / |z - x|`` is a proximal normal to ``C`` at ``x``.  The nearest
points are taken on a piecewise-linear reconstruction of ``C``'s boundary
(the level set of the value field, or of a lightly smoothed indicator when
only a mask is given), which removes the staircase bias of cell centres.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree
from skimage import measure

from .eikonal import reachable_mask
from .fields import ControlSystem
from .grid import UniformGrid, ValueField

DEDUP_DEG = 5.0


@dataclass
class NormalFan:
    index: tuple[int, ...]
    point: np.ndarray
    normals: np.ndarray  # (k, n) unit rows
    weights: np.ndarray  # (k,)
    source: str = "proximal"

    def __len__(self):
        return len(self.normals)

    @property
    def principal(self) -> np.ndarray:
        """Weighted mean direction (zero vector for an empty or balanced fan)."""
        if not len(self):
            return np.zeros_like(self.point)
        v = self.weights @ self.normals
        nv = np.linalg.norm(v)
        return v / nv if nv > 1e-12 else np.zeros_like(v)


@dataclass(frozen=True)
class CharRecord:
    x: tuple[float, ...]
    eta: tuple[float, ...]
    tau: float
    residual: float
    index: tuple[int, ...] = ()

    def to_json(self) -> dict:
        return {"x": list(self.x), "eta": list(self.eta), "tau": self.tau,
                "residual": self.residual, "index": list(self.index)}


@dataclass
class PetrovReport:
    mu: float
    argmin_point: tuple[float, ...]
    argmin_normal: tuple[float, ...]
    n_points: int
    tau: float
    region: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"mu": self.mu, "argmin_point": list(self.argmin_point),
                "argmin_normal": list(self.argmin_normal), "n_points": self.n_points,
                "tau": self.tau, "region": self.region}


def _unit_grid(mask: np.ndarray) -> UniformGrid:
    return UniformGrid((0.0,) * mask.ndim, 1.0, mask.shape)


def _faces_out(mask: np.ndarray) -> np.ndarray:
    """Mask cells with at least one in-domain face neighbour outside the mask."""
    out = np.zeros_like(mask)
    for ax in range(mask.ndim):
        for shift in (1, -1):
            nb = np.roll(mask, shift, axis=ax)
            edge = [slice(None)] * mask.ndim
            edge[ax] = 0 if shift == 1 else -1
            nb[tuple(edge)] = True  # no exterior neighbour beyond the domain
            out |= mask & ~nb
    return out


def extract_boundary(mask: np.ndarray) -> np.ndarray:
    """Indices ``(k, n)`` of boundary cells, in lexicographic order."""
    mask = np.asarray(mask, bool)
    if not mask.any():
        raise ValueError("empty mask has no boundary")
    if mask.all():
        raise ValueError("full mask has no boundary")
    return np.argwhere(_faces_out(mask))


# --------------------------------------------------------------------------
# piecewise-linear boundary reconstruction and nearest points
# --------------------------------------------------------------------------

def _level_function(mask: np.ndarray, values, level) -> np.ndarray:
    if values is not None:
        phi = np.asarray(values, float) - level
        # sentinel values far above the level would distort nothing, but keep
        # the function consistent with the mask (phi <= 0 exactly on the mask)
        phi = np.where(mask, np.minimum(phi, 0.0), np.maximum(phi, 1e-12))
        return phi
    # signed cell distance, zero halfway between inside and outside centres
    out = ndimage.distance_transform_edt(~mask)
    inn = ndimage.distance_transform_edt(mask)
    return np.where(mask, 0.5 - inn, out - 0.5)


def _surface(phi: np.ndarray, grid: UniformGrid):
    """Segments (2-D) or triangles (3-D) of the zero level, physical coordinates."""
    lo, h = grid.lo, grid.h
    if grid.n == 2:
        segs = []
        for c in measure.find_contours(phi, 0.0):
            pts = lo + h * c
            if len(pts) >= 2:
                segs.append(np.stack([pts[:-1], pts[1:]], axis=1))
        if not segs:
            return np.zeros((0, 2, 2))
        s = np.concatenate(segs)
        return s[np.linalg.norm(s[:, 1] - s[:, 0], axis=1) > 1e-14 * h]
    if phi.min() >= 0 or phi.max() <= 0:
        return np.zeros((0, 3, 3))
    verts, faces, _, _ = measure.marching_cubes(phi, 0.0)
    tri = lo + h * verts[faces]
    area = np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
    return tri[area > 1e-14 * h * h]


def _closest_on_segments(p, a, b):
    ab = b - a
    t = np.einsum("ij,ij->i", p - a, ab) / np.einsum("ij,ij->i", ab, ab)
    return a + np.clip(t, 0.0, 1.0)[:, None] * ab


def _closest_on_triangles(p, a, b, c):
    """Vectorized closest point on triangles (Voronoi-region method)."""
    ab, ac, ap = b - a, c - a, p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    with np.errstate(divide="ignore", invalid="ignore"):
        denom = 1.0 / (va + vb + vc)
        out = a + ab * (vb * denom)[:, None] + ac * (vc * denom)[:, None]
        # edge regions
        w_ab = d1 / (d1 - d3)
        e_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
        out = np.where(e_ab[:, None], a + w_ab[:, None] * ab, out)
        w_ac = d2 / (d2 - d6)
        e_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
        out = np.where(e_ac[:, None], a + w_ac[:, None] * ac, out)
        w_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        e_bc = (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0)
        out = np.where(e_bc[:, None], b + w_bc[:, None] * (c - b), out)
    # vertex regions
    out = np.where(((d1 <= 0) & (d2 <= 0))[:, None], a, out)
    out = np.where(((d3 >= 0) & (d4 <= d3))[:, None], b, out)
    out = np.where(((d6 >= 0) & (d5 <= d6))[:, None], c, out)
    return out


def nearest_surface_points(queries: np.ndarray, prims: np.ndarray, k: int = 12) -> np.ndarray:
    """Nearest point on a segment/triangle soup for every query point."""
    if len(prims) == 0:
        raise ValueError("no boundary surface to project on")
    k = min(k, len(prims))
    tree = cKDTree(prims.mean(axis=1))
    _, cand = tree.query(queries, k=k)
    cand = np.asarray(cand).reshape(len(queries), k)
    best = np.empty_like(queries)
    best_d = np.full(len(queries), np.inf)
    for j in range(k):
        pr = prims[cand[:, j]]
        if prims.shape[1] == 2:
            cp = _closest_on_segments(queries, pr[:, 0], pr[:, 1])
        else:
            cp = _closest_on_triangles(queries, pr[:, 0], pr[:, 1], pr[:, 2])
        d = np.linalg.norm(queries - cp, axis=1)
        better = d < best_d
        best[better] = cp[better]
        best_d[better] = d[better]
    return best


def _dedup(dirs: np.ndarray, weights: np.ndarray, deg: float) -> tuple[np.ndarray, np.ndarray]:
    if len(dirs) == 0:
        return dirs, weights
    cos_tol = np.cos(np.radians(deg))
    order = np.lexsort((np.arange(len(dirs)), -weights))
    keep: list[np.ndarray] = []
    w: list[float] = []
    for i in order:
        d = dirs[i]
        for j, kd in enumerate(keep):
            if d @ kd >= cos_tol:
                w[j] += weights[i]
                break
        else:
            keep.append(d)
            w.append(float(weights[i]))
    return np.array(keep), np.array(w)


def proximal_normal_fan(mask: np.ndarray, grid: UniformGrid | None = None,
                        band_width: float | None = None, values=None, level=None,
                        dedup_deg: float = DEDUP_DEG) -> list[NormalFan]:
    """Nearest-point normal fans at every boundary cell of ``mask``.

    ``values``/``level`` optionally supply a function with ``mask = values <= level``
    whose level set is used as the sub-cell boundary.
    """
    mask = np.asarray(mask, bool)
    grid = grid or _unit_grid(mask)
    band_width = 6 * grid.h if band_width is None else band_width
    if band_width < 2 * grid.h - 1e-12:
        raise ValueError("band_width must be at least 2h")
    bidx = extract_boundary(mask)
    bpts = grid.lo + grid.h * bidx

    prims = _surface(_level_function(mask, values, level), grid)
    dist = ndimage.distance_transform_edt(~mask, sampling=grid.h)
    zidx = np.argwhere((~mask) & (dist <= band_width + 1e-12))
    dirs_by_cell: dict[int, list[np.ndarray]] = {}
    if len(zidx) and len(prims):
        z = grid.lo + grid.h * zidx
        feet = nearest_surface_points(z, prims)
        d = z - feet
        nrm = np.linalg.norm(d, axis=1)
        ok = nrm > 1e-9 * grid.h
        z, feet, d, nrm = z[ok], feet[ok], d[ok], nrm[ok]
        units = d / nrm[:, None]
        _, owner = cKDTree(bpts).query(feet)
        for o, u in zip(owner, units):
            dirs_by_cell.setdefault(int(o), []).append(u)

    fans = []
    for i, (idx, pt) in enumerate(zip(bidx, bpts)):
        dirs = np.array(dirs_by_cell.get(i, np.zeros((0, grid.n))))
        dirs = dirs.reshape(-1, grid.n)
        nd, w = _dedup(dirs, np.ones(len(dirs)), dedup_deg)
        fans.append(NormalFan(tuple(int(t) for t in idx), pt, nd.reshape(-1, grid.n), w))
    return fans


def limiting_normal_fan(fans: list[NormalFan], r_l: float,
                        dedup_deg: float = DEDUP_DEG) -> list[NormalFan]:
    """Union of the proximal fans at boundary points within ``r_l``.

    A point's own proximal directions are kept verbatim, so proximal fans
    are always contained in the limiting fan.
    """
    if r_l < 0:
        raise ValueError("r_L must be nonnegative")
    if not fans:
        return []
    pts = np.array([f.point for f in fans])
    n = pts.shape[1]
    out = []
    for i, nb in enumerate(cKDTree(pts).query_ball_point(pts, r_l + 1e-12)):
        f = fans[i]
        others = [j for j in sorted(nb) if j != i and len(fans[j])]
        keep = list(f.normals)
        w = [float(x) for x in f.weights]
        if others:
            all_d = np.concatenate([fans[j].normals for j in others])
            all_w = np.concatenate([fans[j].weights for j in others])
            cos_tol = np.cos(np.radians(dedup_deg))
            for k in np.lexsort((np.arange(len(all_d)), -all_w)):
                d = all_d[k]
                if not any(d @ kd >= cos_tol for kd in keep):
                    keep.append(d)
                    w.append(float(all_w[k]))
        out.append(NormalFan(f.index, f.point, np.array(keep).reshape(-1, n),
                             np.array(w), source="limiting"))
    return out


# --------------------------------------------------------------------------
# characteristic points and Petrov margins
# --------------------------------------------------------------------------

def _fan_hamiltonians(system: ControlSystem, fan: NormalFan) -> np.ndarray:
    if not len(fan):
        return np.zeros(0)
    frame = system.frame(fan.point)  # (m, n)
    return np.linalg.norm(fan.normals @ frame.T, axis=1)


def reachable_fans(vf: ValueField, tau: float, band_width: float | None = None,
                   r_l: float | None = None) -> list[NormalFan]:
    """Limiting fans along the boundary of ``R(tau)``, lexicographic by cell."""
    horizon = vf.horizon
    if not 0.0 < tau < horizon:
        raise ValueError(f"tau = {tau} must lie strictly between 0 and {horizon:.6g}")
    h = vf.grid.h
    mask = reachable_mask(vf, tau)
    prox = proximal_normal_fan(mask, vf.grid, band_width=band_width,
                               values=vf.values, level=tau)
    return limiting_normal_fan(prox, 3 * h if r_l is None else r_l)


def detect_characteristic_points(system: ControlSystem, vf: ValueField, tau: float,
                                 eps_char: float | None = None,
                                 band_width: float | None = None,
                                 r_l: float | None = None) -> list[CharRecord]:
    """Boundary cells of ``R(tau)`` carrying a limiting normal with ``H < eps_char``."""
    if not vf.converged:
        raise ValueError("value field did not converge")
    eps = 5 * vf.grid.h if eps_char is None else eps_char
    recs = []
    for fan in reachable_fans(vf, tau, band_width, r_l):
        hs = _fan_hamiltonians(system, fan)
        for eta, hv in zip(fan.normals, hs):
            if hv < eps:
                recs.append(CharRecord(tuple(float(c) for c in fan.point),
                                       tuple(float(c) for c in eta), float(tau),
                                       float(hv), fan.index))
    return recs


Region = Callable[[np.ndarray], np.ndarray]


def slab_region(axis: int, halfwidth: float, complement: bool = False) -> Region:
    """``|x_axis| <= halfwidth`` (or ``>= halfwidth`` with ``complement``)."""
    def region(pts):
        inside = np.abs(pts[:, axis]) <= halfwidth
        return ~inside if complement else inside
    region.description = {"kind": "slab", "axis": axis, "halfwidth": halfwidth,
                          "complement": complement}
    return region


def petrov_margin(system: ControlSystem, vf: ValueField, tau: float,
                  region: Region | np.ndarray | None = None,
                  band_width: float | None = None, r_l: float | None = None) -> PetrovReport:
    """Worst ``H(x, eta)`` over boundary cells in ``region`` and their limiting normals.

    ``region`` is a predicate on ``(k, n)`` point arrays, a boolean grid mask,
    or None for the whole boundary.
    """
    fans = reachable_fans(vf, tau, band_width, r_l)
    pts = np.array([f.point for f in fans])
    if region is None:
        sel = np.ones(len(fans), bool)
        desc = {"kind": "all"}
    elif callable(region):
        sel = np.asarray(region(pts), bool)
        desc = getattr(region, "description", {"kind": "predicate"})
    else:
        region = np.asarray(region, bool)
        sel = region[tuple(np.array([f.index for f in fans]).T)]
        desc = {"kind": "mask", "cells": int(region.sum())}
    best = (np.inf, None, None)
    count = 0
    for f, s in zip(fans, sel):
        if not s or not len(f):
            continue
        count += 1
        hs = _fan_hamiltonians(system, f)
        k = int(np.argmin(hs))
        if hs[k] < best[0]:
            best = (float(hs[k]), f.point, f.normals[k])
    if best[1] is None:
        raise ValueError("region misses the boundary of R(tau)")
    return PetrovReport(best[0], tuple(map(float, best[1])), tuple(map(float, best[2])),
                        count, float(tau), desc)


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------

def encode_mask(mask: np.ndarray) -> dict:
    """Run-length encoding ``[[start, length], ...]`` of the C-order flat indices."""
    flat = np.asarray(mask, bool).ravel()
    d = np.diff(np.concatenate([[0], flat.astype(np.int8), [0]]))
    starts = np.flatnonzero(d == 1)
    ends = np.flatnonzero(d == -1)
    return {"shape": list(mask.shape),
            "runs": [[int(a), int(b - a)] for a, b in zip(starts, ends)]}


def decode_mask(d: dict) -> np.ndarray:
    flat = np.zeros(int(np.prod(d["shape"])), bool)
    for a, length in d["runs"]:
        flat[a:a + length] = True
    return flat.reshape(d["shape"])
