"""Compiled sweep kernels (2-D and 3-D) for the two eikonal schemes.

Arrays follow the grid's ``ij`` indexing. ``frame`` has shape
``(m, n, *shape)`` and holds ``f_i(x)`` at every node.
"""
import math

from numba import njit


# --------------------------------------------------------------------------
# Lax-Friedrichs sweeping
# --------------------------------------------------------------------------

@njit(cache=True)
def _lf_update_2d(v, frame, alpha, i, j, inv2h, h):
    m = frame.shape[0]
    vm0 = v[i - 1, j]
    vp0 = v[i + 1, j]
    vm1 = v[i, j - 1]
    vp1 = v[i, j + 1]
    p0 = (vp0 - vm0) * inv2h
    p1 = (vp1 - vm1) * inv2h
    hs = 0.0
    for k in range(m):
        s = frame[k, 0, i, j] * p0 + frame[k, 1, i, j] * p1
        hs += s * s
    a0 = alpha[0, i, j]
    a1 = alpha[1, i, j]
    num = 1.0 - math.sqrt(hs) + (a0 * (vp0 + vm0) + a1 * (vp1 + vm1)) * inv2h
    return num * h / (a0 + a1)


@njit(cache=True)
def _extrapolate_2d(v, fixed):
    nx, ny = v.shape
    change = 0.0
    for j in range(ny):
        for i, i1, i2 in ((0, 1, 2), (nx - 1, nx - 2, nx - 3)):
            if fixed[i, j]:
                continue
            c = max(2.0 * v[i1, j] - v[i2, j], v[i2, j])
            if c < v[i, j]:
                change = max(change, v[i, j] - c)
                v[i, j] = c
    for i in range(nx):
        for j, j1, j2 in ((0, 1, 2), (ny - 1, ny - 2, ny - 3)):
            if fixed[i, j]:
                continue
            c = max(2.0 * v[i, j1] - v[i, j2], v[i, j2])
            if c < v[i, j]:
                change = max(change, v[i, j] - c)
                v[i, j] = c
    return change


@njit(cache=True)
def lf_round_2d(v, fixed, frame, alpha, h):
    """One round of the four Gauss-Seidel orderings; returns the largest decrease."""
    nx, ny = v.shape
    inv2h = 0.5 / h
    change = 0.0
    for sx in (1, -1):
        for sy in (1, -1):
            for ii in range(1, nx - 1):
                i = ii if sx > 0 else nx - 1 - ii
                for jj in range(1, ny - 1):
                    j = jj if sy > 0 else ny - 1 - jj
                    if fixed[i, j]:
                        continue
                    vn = _lf_update_2d(v, frame, alpha, i, j, inv2h, h)
                    if vn < 0.0:
                        vn = 0.0
                    if vn < v[i, j]:
                        d = v[i, j] - vn
                        if d > change:
                            change = d
                        v[i, j] = vn
            c = _extrapolate_2d(v, fixed)
            if c > change:
                change = c
    return change


@njit(cache=True)
def _lf_update_3d(v, frame, alpha, i, j, k, inv2h, h):
    m = frame.shape[0]
    vm0 = v[i - 1, j, k]
    vp0 = v[i + 1, j, k]
    vm1 = v[i, j - 1, k]
    vp1 = v[i, j + 1, k]
    vm2 = v[i, j, k - 1]
    vp2 = v[i, j, k + 1]
    p0 = (vp0 - vm0) * inv2h
    p1 = (vp1 - vm1) * inv2h
    p2 = (vp2 - vm2) * inv2h
    hs = 0.0
    for c in range(m):
        s = (frame[c, 0, i, j, k] * p0 + frame[c, 1, i, j, k] * p1
             + frame[c, 2, i, j, k] * p2)
        hs += s * s
    a0 = alpha[0, i, j, k]
    a1 = alpha[1, i, j, k]
    a2 = alpha[2, i, j, k]
    num = (1.0 - math.sqrt(hs)
           + (a0 * (vp0 + vm0) + a1 * (vp1 + vm1) + a2 * (vp2 + vm2)) * inv2h)
    return num * h / (a0 + a1 + a2)


@njit(cache=True)
def _extrapolate_3d(v, fixed):
    nx, ny, nz = v.shape
    change = 0.0
    for j in range(ny):
        for k in range(nz):
            for i, i1, i2 in ((0, 1, 2), (nx - 1, nx - 2, nx - 3)):
                if not fixed[i, j, k]:
                    c = max(2.0 * v[i1, j, k] - v[i2, j, k], v[i2, j, k])
                    if c < v[i, j, k]:
                        change = max(change, v[i, j, k] - c)
                        v[i, j, k] = c
    for i in range(nx):
        for k in range(nz):
            for j, j1, j2 in ((0, 1, 2), (ny - 1, ny - 2, ny - 3)):
                if not fixed[i, j, k]:
                    c = max(2.0 * v[i, j1, k] - v[i, j2, k], v[i, j2, k])
                    if c < v[i, j, k]:
                        change = max(change, v[i, j, k] - c)
                        v[i, j, k] = c
    for i in range(nx):
        for j in range(ny):
            for k, k1, k2 in ((0, 1, 2), (nz - 1, nz - 2, nz - 3)):
                if not fixed[i, j, k]:
                    c = max(2.0 * v[i, j, k1] - v[i, j, k2], v[i, j, k2])
                    if c < v[i, j, k]:
                        change = max(change, v[i, j, k] - c)
                        v[i, j, k] = c
    return change


@njit(cache=True)
def lf_round_3d(v, fixed, frame, alpha, h):
    nx, ny, nz = v.shape
    inv2h = 0.5 / h
    change = 0.0
    for sx in (1, -1):
        for sy in (1, -1):
            for sz in (1, -1):
                for ii in range(1, nx - 1):
                    i = ii if sx > 0 else nx - 1 - ii
                    for jj in range(1, ny - 1):
                        j = jj if sy > 0 else ny - 1 - jj
                        for kk in range(1, nz - 1):
                            k = kk if sz > 0 else nz - 1 - kk
                            if fixed[i, j, k]:
                                continue
                            vn = _lf_update_3d(v, frame, alpha, i, j, k, inv2h, h)
                            if vn < 0.0:
                                vn = 0.0
                            if vn < v[i, j, k]:
                                d = v[i, j, k] - vn
                                if d > change:
                                    change = d
                                v[i, j, k] = vn
                c = _extrapolate_3d(v, fixed)
                if c > change:
                    change = c
    return change


# --------------------------------------------------------------------------
# semi-Lagrangian value iteration
# --------------------------------------------------------------------------

@njit(cache=True)
def _interp_2d(v, fx, fy):
    nx, ny = v.shape
    i0 = int(math.floor(fx))
    j0 = int(math.floor(fy))
    if i0 < 0:
        i0 = 0
    elif i0 > nx - 2:
        i0 = nx - 2
    if j0 < 0:
        j0 = 0
    elif j0 > ny - 2:
        j0 = ny - 2
    tx = fx - i0
    ty = fy - j0
    return ((1 - tx) * ((1 - ty) * v[i0, j0] + ty * v[i0, j0 + 1])
            + tx * ((1 - ty) * v[i0 + 1, j0] + ty * v[i0 + 1, j0 + 1]))


@njit(cache=True)
def _sl_update_2d(v, frame, controls, i, j, h, dt_max):
    nx, ny = v.shape
    m = frame.shape[0]
    best = v[i, j]
    for c in range(controls.shape[0]):
        vx = 0.0
        vy = 0.0
        for q in range(m):
            vx += controls[c, q] * frame[q, 0, i, j]
            vy += controls[c, q] * frame[q, 1, i, j]
        speed = math.sqrt(vx * vx + vy * vy)
        if speed < 1e-12:
            continue
        dt = h / speed
        if dt > dt_max:
            dt = dt_max
        fx = i + dt * vx / h
        fy = j + dt * vy / h
        if fx < 0.0 or fx > nx - 1 or fy < 0.0 or fy > ny - 1:
            continue
        val = dt + _interp_2d(v, fx, fy)
        if val < best:
            best = val
    return best


@njit(cache=True)
def sl_round_2d(v, fixed, frame, controls, h, dt_max):
    nx, ny = v.shape
    change = 0.0
    for sx in (1, -1):
        for sy in (1, -1):
            for ii in range(nx):
                i = ii if sx > 0 else nx - 1 - ii
                for jj in range(ny):
                    j = jj if sy > 0 else ny - 1 - jj
                    if fixed[i, j]:
                        continue
                    vn = _sl_update_2d(v, frame, controls, i, j, h, dt_max)
                    if vn < v[i, j]:
                        d = v[i, j] - vn
                        if d > change:
                            change = d
                        v[i, j] = vn
    return change


@njit(cache=True)
def _interp_3d(v, fx, fy, fz):
    nx, ny, nz = v.shape
    i0 = min(max(int(math.floor(fx)), 0), nx - 2)
    j0 = min(max(int(math.floor(fy)), 0), ny - 2)
    k0 = min(max(int(math.floor(fz)), 0), nz - 2)
    tx = fx - i0
    ty = fy - j0
    tz = fz - k0
    c00 = (1 - tz) * v[i0, j0, k0] + tz * v[i0, j0, k0 + 1]
    c01 = (1 - tz) * v[i0, j0 + 1, k0] + tz * v[i0, j0 + 1, k0 + 1]
    c10 = (1 - tz) * v[i0 + 1, j0, k0] + tz * v[i0 + 1, j0, k0 + 1]
    c11 = (1 - tz) * v[i0 + 1, j0 + 1, k0] + tz * v[i0 + 1, j0 + 1, k0 + 1]
    return (1 - tx) * ((1 - ty) * c00 + ty * c01) + tx * ((1 - ty) * c10 + ty * c11)


@njit(cache=True)
def _sl_update_3d(v, frame, controls, i, j, k, h, dt_max):
    nx, ny, nz = v.shape
    m = frame.shape[0]
    best = v[i, j, k]
    for c in range(controls.shape[0]):
        vx = 0.0
        vy = 0.0
        vz = 0.0
        for q in range(m):
            u = controls[c, q]
            vx += u * frame[q, 0, i, j, k]
            vy += u * frame[q, 1, i, j, k]
            vz += u * frame[q, 2, i, j, k]
        speed = math.sqrt(vx * vx + vy * vy + vz * vz)
        if speed < 1e-12:
            continue
        dt = h / speed
        if dt > dt_max:
            dt = dt_max
        fx = i + dt * vx / h
        fy = j + dt * vy / h
        fz = k + dt * vz / h
        if (fx < 0.0 or fx > nx - 1 or fy < 0.0 or fy > ny - 1
                or fz < 0.0 or fz > nz - 1):
            continue
        val = dt + _interp_3d(v, fx, fy, fz)
        if val < best:
            best = val
    return best


@njit(cache=True)
def sl_round_3d(v, fixed, frame, controls, h, dt_max):
    nx, ny, nz = v.shape
    change = 0.0
    for sx in (1, -1):
        for sy in (1, -1):
            for sz in (1, -1):
                for ii in range(nx):
                    i = ii if sx > 0 else nx - 1 - ii
                    for jj in range(ny):
                        j = jj if sy > 0 else ny - 1 - jj
                        for kk in range(nz):
                            k = kk if sz > 0 else nz - 1 - kk
                            if fixed[i, j, k]:
                                continue
                            vn = _sl_update_3d(v, frame, controls, i, j, k, h, dt_max)
                            if vn < v[i, j, k]:
                                d = v[i, j, k] - vn
                                if d > change:
                                    change = d
                                v[i, j, k] = vn
    return change
