"""Grid solvers for the minimum time function.

``solve_min_time`` runs Lax-Friedrichs fast sweeping on ``H(x, grad v) = 1``;
``solve_semilagrangian`` is an independent dynamic-programming discretization
used to cross-check it.  Both start from a large sentinel off the target and
only ever decrease values.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy.ndimage import maximum_filter

from . import _kernels as K
from .fields import ControlSystem, hormander_rank
from .grid import TargetSet, UniformGrid, ValueField

log = logging.getLogger(__name__)


class NonConvergenceError(RuntimeError):
    def __init__(self, msg, field: ValueField):
        super().__init__(msg)
        self.field = field


@dataclass(frozen=True)
class SolverOptions:
    tol_converge: float = 1e-9
    max_sweeps: int = 5000
    c_min: float = 0.05
    n_controls: int = 48
    dt_max_cells: float = 4.0  # semi-Lagrangian step cap, in units of h
    check_hormander: bool = True
    raise_on_nonconvergence: bool = False

    def to_json(self) -> dict:
        return asdict(self)


def frame_on_grid(system: ControlSystem, grid: UniformGrid) -> np.ndarray:
    """``f_i(x)`` at every node, shape ``(m, n, *shape)``."""
    if system.n != grid.n:
        raise ValueError(f"system on R^{system.n} but grid in R^{grid.n}")
    return np.ascontiguousarray(system.frame(grid.coords()))


def lf_viscosity(frame: np.ndarray, c_min: float) -> np.ndarray:
    """Per-axis coefficients ``c_j >= max |dH/dp_j|`` over each node's 3^n block.

    ``|dH/dp_j| <= (sum_i f_ij^2)^(1/2)`` by Cauchy-Schwarz.
    """
    col = np.sqrt((frame ** 2).sum(axis=0))
    out = np.stack([maximum_filter(c, size=3, mode="nearest") for c in col])
    return np.ascontiguousarray(np.maximum(out, c_min))


def _warn_hormander(system: ControlSystem, grid: UniformGrid, samples: int = 25) -> None:
    rng = np.random.default_rng(0)
    pts = grid.lo + rng.random((samples, grid.n)) * (grid.hi - grid.lo)
    bad = [p for p in pts if not hormander_rank(system, p, max_depth=6).full_rank]
    if bad:
        warnings.warn(f"bracket rank < {grid.n} at {len(bad)}/{samples} sampled nodes",
                      RuntimeWarning, stacklevel=3)


def _prepare(system, target, grid, opts):
    mask = target.mask(grid) if isinstance(target, TargetSet) else np.asarray(target, bool)
    if mask.shape != grid.shape:
        raise ValueError("target mask does not match the grid")
    if not mask.any():
        raise ValueError("empty target")
    if min(grid.shape) < 3:
        raise ValueError("need at least 3 nodes per axis")
    if opts.check_hormander:
        _warn_hormander(system, grid)
    sentinel = 10.0 * grid.diameter / opts.c_min
    v = np.full(grid.shape, sentinel)
    v[mask] = 0.0
    return mask, v, sentinel


def _iterate(round_fn, v, args, opts, grid, mask, scheme, sentinel):
    change = math.inf
    it = 0
    while it < opts.max_sweeps:
        change = round_fn(v, *args)
        it += 1
        if change < opts.tol_converge:
            break
    converged = change < opts.tol_converge
    vf = ValueField(grid, v, mask, converged, it, float(change), scheme,
                    {"opts": opts.to_json(), "sentinel": sentinel})
    if not converged:
        msg = f"{scheme}: no convergence after {it} rounds (last update {change:.3e})"
        log.warning(msg)
        if opts.raise_on_nonconvergence:
            raise NonConvergenceError(msg, vf)
    return vf


def solve_min_time(system: ControlSystem, target, grid: UniformGrid,
                   opts: SolverOptions | None = None) -> ValueField:
    """Lax-Friedrichs fast sweeping for the minimum time function."""
    opts = opts or SolverOptions()
    mask, v, sentinel = _prepare(system, target, grid, opts)
    frame = frame_on_grid(system, grid)
    alpha = lf_viscosity(frame, opts.c_min)
    fn = K.lf_round_2d if grid.n == 2 else K.lf_round_3d
    return _iterate(fn, v, (mask, frame, alpha, grid.h), opts, grid, mask,
                    "lax-friedrichs", sentinel)


def control_directions(m: int, count: int) -> np.ndarray:
    """Quasi-uniform unit vectors in R^m."""
    if count < 8:
        raise ValueError(f"n_controls = {count} is too coarse (need >= 8)")
    if m == 1:
        return np.array([[1.0], [-1.0]])
    if m == 2:
        a = 2 * np.pi * np.arange(count) / count
        return np.column_stack([np.cos(a), np.sin(a)])
    if m == 3:  # Fibonacci lattice
        k = np.arange(count) + 0.5
        z = 1 - 2 * k / count
        r = np.sqrt(1 - z * z)
        phi = np.pi * (1 + 5 ** 0.5) * k
        return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    # higher m: normalized Gaussian samples with a fixed seed
    g = np.random.default_rng(12345).standard_normal((count, m))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def solve_semilagrangian(system: ControlSystem, target, grid: UniformGrid,
                         opts: SolverOptions | None = None) -> ValueField:
    """Value iteration ``T(x) = min_u {d + T(x + d f(x)u)}`` with multilinear interpolation.

    The local step ``d`` moves the foot point one cell (capped at
    ``dt_max_cells * h`` where the speed is small).
    """
    opts = opts or SolverOptions()
    controls = np.ascontiguousarray(control_directions(system.m, opts.n_controls))
    mask, v, sentinel = _prepare(system, target, grid, opts)
    frame = frame_on_grid(system, grid)
    fn = K.sl_round_2d if grid.n == 2 else K.sl_round_3d
    return _iterate(fn, v, (mask, frame, controls, grid.h, opts.dt_max_cells * grid.h),
                    opts, grid, mask, "semi-lagrangian", sentinel)


def reachable_mask(vf: ValueField, tau: float) -> np.ndarray:
    """Nodes of ``R(tau) = {T <= tau}``."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    return (vf.values <= tau) | vf.target
