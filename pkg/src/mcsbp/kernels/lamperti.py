"""Per-path kernels: exact-in-law column increments, Euler time-change stepping
of the Lamperti equation, and the smallest-solution hitting time."""
import math

import numpy as np

from .._accel import njit
from .rng import normal_ppf, poisson, stable_scale, stable_std, stream_key, uniform

ABSORBED = 0
EXPLODED = 1
HORIZON = 2


@njit
def column_increment(j, da, p, key, ctr, out):
    """Increment of column process ``j`` over local time ``da`` into ``out``.

    Draw order is fixed (Gaussian, stable, atoms in declaration order) so every
    backend consumes the stream identically. Returns the advanced counter.
    """
    drift, gauss, st_alpha, st_scale, atom_col, atom_rate, atom_vec, atom_small = p
    d = out.shape[0]
    for i in range(d):
        out[i] = drift[i, j] * da
    if da <= 0.0:
        return ctr
    if gauss[j] > 0.0:
        out[j] += math.sqrt(gauss[j] * da) * normal_ppf(uniform(key, ctr))
        ctr += 1
    if st_alpha[j] > 0.0:
        x, ctr = stable_std(st_alpha[j], key, ctr)
        out[j] += stable_scale(st_alpha[j], st_scale[j], da) * x
    for m in range(atom_col.shape[0]):
        if atom_col[m] != j:
            continue
        mu = atom_rate[m] * da
        n, ctr = poisson(mu, key, ctr)
        for i in range(d):
            out[i] += (n - atom_small[m] * mu) * atom_vec[m, i]
    return ctr


@njit
def spalf_columns(p, d, grid_step, n_steps, seed, path):
    """Increments of every column on a uniform local-time grid.

    ``inc[k, i, j]`` is the increment of coordinate ``i`` of column ``j`` over
    ``[k h, (k+1) h]``.
    """
    inc = np.zeros((n_steps, d, d))
    buf = np.empty(d)
    for j in range(d):
        key = stream_key(seed, path, j)
        ctr = 0
        for k in range(n_steps):
            ctr = column_increment(j, grid_step, p, key, ctr, buf)
            for i in range(d):
                inc[k, i, j] = buf[i]
    return inc


@njit
def lamperti_chunk(paths, seed, z0, p, killable, dt, n_steps, z_floor, explode):
    """Run independent paths; per path return status, end time, final state
    and trapezoid clocks.

    This is the hot loop, so the column increment is written out inline (same
    draws in the same order as :func:`column_increment`); passing the
    parameter arrays through a call per step costs several times the draws.
    """
    drift, gauss, st_alpha, st_scale, atom_col, atom_rate, atom_vec, atom_small = p
    n = paths.shape[0]
    d = z0.shape[0]
    n_atoms = atom_col.shape[0]
    status = np.full(n, HORIZON, dtype=np.int8)
    t_end = np.full(n, n_steps * dt)
    z_final = np.zeros((n, d))
    clocks = np.zeros((n, d))
    keys = np.empty(d, dtype=np.uint64)
    ctrs = np.zeros(d, dtype=np.int64)
    z = np.empty(d)
    v = np.empty(d)
    clk = np.empty(d)
    inc = np.empty(d)
    alive = False
    for j in range(d):
        if z0[j] > 0.0:
            alive = True
    for q in range(n):
        if not alive:
            status[q] = ABSORBED
            t_end[q] = 0.0
            continue
        for j in range(d):
            keys[j] = stream_key(seed, paths[q], j)
            ctrs[j] = 0
            z[j] = z0[j]
            clk[j] = 0.0
        for k in range(n_steps):
            for i in range(d):
                v[i] = z[i]
            for j in range(d):
                da = z[j] * dt
                if da <= 0.0:
                    continue
                key = keys[j]
                ctr = ctrs[j]
                for i in range(d):
                    inc[i] = drift[i, j] * da
                if gauss[j] > 0.0:
                    inc[j] += math.sqrt(gauss[j] * da) * normal_ppf(uniform(key, ctr))
                    ctr += 1
                if st_alpha[j] > 0.0:
                    x, ctr = stable_std(st_alpha[j], key, ctr)
                    inc[j] += stable_scale(st_alpha[j], st_scale[j], da) * x
                for m in range(n_atoms):
                    if atom_col[m] != j:
                        continue
                    mu = atom_rate[m] * da
                    cnt, ctr = poisson(mu, key, ctr)
                    for i in range(d):
                        inc[i] += (cnt - atom_small[m] * mu) * atom_vec[m, i]
                ctrs[j] = ctr
                for i in range(d):
                    v[i] += inc[i]
            zero = True
            big = False
            for i in range(d):
                if v[i] <= 0.0 or (killable[i] and v[i] <= z_floor):
                    v[i] = 0.0
                clk[i] += 0.5 * (z[i] + v[i]) * dt
                z[i] = v[i]
                if z[i] > 0.0:
                    zero = False
                if z[i] > explode:
                    big = True
            if zero:
                status[q] = ABSORBED
                t_end[q] = (k + 1) * dt
                break
            if big:
                status[q] = EXPLODED
                t_end[q] = (k + 1) * dt
                break
        for i in range(d):
            z_final[q, i] = z[i]
            clocks[q, i] = clk[i]
    return status, t_end, z_final, clocks


@njit
def lamperti_record(path, seed, z0, p, killable, dt, n_steps, z_floor, explode):
    """Single path with full history.

    Returns ``(status, n_rec, zs, clocks, knots, field)`` where ``zs[k]`` is the
    state after ``k`` steps, ``clocks`` the trapezoid integrals, ``knots[k, j]``
    the left-point local time fed to column ``j`` and ``field[k, i, j]`` the
    cumulative column-``j`` increment of coordinate ``i`` at that knot.
    """
    d = z0.shape[0]
    zs = np.zeros((n_steps + 1, d))
    clocks = np.zeros((n_steps + 1, d))
    knots = np.zeros((n_steps + 1, d))
    field = np.zeros((n_steps + 1, d, d))
    keys = np.empty(d, dtype=np.uint64)
    ctrs = np.zeros(d, dtype=np.int64)
    inc = np.empty(d)
    z = z0.copy()
    for j in range(d):
        keys[j] = stream_key(seed, path, j)
    zs[0] = z
    alive = False
    for j in range(d):
        if z[j] > 0.0:
            alive = True
    if not alive:
        return ABSORBED, 1, zs[:1], clocks[:1], knots[:1], field[:1]
    status = HORIZON
    k = 0
    while k < n_steps:
        v = z.copy()
        for j in range(d):
            da = z[j] * dt
            knots[k + 1, j] = knots[k, j] + da
            for i in range(d):
                field[k + 1, i, j] = field[k, i, j]
            if da > 0.0:
                ctrs[j] = column_increment(j, da, p, keys[j], ctrs[j], inc)
                for i in range(d):
                    v[i] += inc[i]
                    field[k + 1, i, j] += inc[i]
        zero = True
        big = False
        for i in range(d):
            if v[i] <= 0.0 or (killable[i] and v[i] <= z_floor):
                v[i] = 0.0
            clocks[k + 1, i] = clocks[k, i] + 0.5 * (z[i] + v[i]) * dt
            if v[i] > 0.0:
                zero = False
            if v[i] > explode:
                big = True
        z = v
        zs[k + 1] = z
        k += 1
        if zero:
            status = ABSORBED
            break
        if big:
            status = EXPLODED
            break
    m = k + 1
    return status, m, zs[:m], clocks[:m], knots[:m], field[:m]


@njit
def smallest_solution(knots, field, r, level_tol):
    """Componentwise-least grid solution of ``r_i + sum_j x^{ij}(s_j) <= tol``.

    ``knots[k, j]`` are the local times of column ``j`` and ``field[k, i, j]``
    its cumulative values there. Monotone fixed-point sweep from ``s = 0``.
    Returns ``(idx, converged)``; a censored coordinate has ``idx == -1``.
    """
    n1 = knots.shape[0]
    d = r.shape[0]
    idx = np.zeros(d, dtype=np.int64)
    changed = True
    while changed:
        changed = False
        for i in range(d):
            base = r[i]
            for j in range(d):
                if j != i:
                    base += field[idx[j], i, j]
            k = idx[i]
            while k < n1 and base + field[k, i, i] > level_tol:
                k += 1
            if k == n1:
                idx[i] = -1
                return idx, False
            if k != idx[i]:
                idx[i] = k
                changed = True
    return idx, True
