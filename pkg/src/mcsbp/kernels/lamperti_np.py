"""Vectorised numpy fallback for :func:`lamperti.lamperti_chunk`.

Lanes are paths. Each lane keeps its own stream counters and consumes draws in
the same order as the scalar kernel, so both backends sample the same law from
the same streams (bitwise agreement up to libm rounding differences).
"""
import math

import numpy as np

from .lamperti import ABSORBED, EXPLODED, HORIZON
from .rng import (POISSON_INVERSION_MAX, normal_ppf_array, stable_std_array, stream_keys,
                  uniform_array)


def _draw(keys, ctrs, lanes, col):
    u = uniform_array(keys[lanes, col], ctrs[lanes, col])
    ctrs[lanes, col] += 1
    return u


def poisson_lanes(mu, keys, ctrs, lanes, col):
    """Poisson counts for ``lanes`` with means ``mu`` (same algorithm as the scalar kernel)."""
    out = np.zeros(mu.shape[0])
    small = (mu > 0.0) & (mu < POISSON_INVERSION_MAX)
    if small.any():
        sl = lanes[small]
        m = mu[small]
        u = _draw(keys, ctrs, sl, col)
        k = np.zeros(m.shape[0])
        pk = np.exp(-m)
        cdf = pk.copy()
        todo = (u > cdf) & (k < 1000)
        while todo.any():
            k[todo] += 1.0
            pk[todo] *= m[todo] / k[todo]
            cdf[todo] += pk[todo]
            todo = (u > cdf) & (k < 1000)
        out[small] = k
    large = mu >= POISSON_INVERSION_MAX
    if large.any():
        pos = np.nonzero(large)[0]
        m = mu[pos]
        slam = np.sqrt(m)
        loglam = np.log(m)
        b = 0.931 + 2.53 * slam
        a = -0.059 + 0.02483 * b
        inv_alpha = 1.1239 + 1.1328 / (b - 3.4)
        vr = 0.9277 - 3.6224 / (b - 2.0)
        result = np.full(pos.shape[0], -1.0)
        pending = np.arange(pos.shape[0])
        while pending.size:
            ln = lanes[pos[pending]]
            uu = uniform_array(keys[ln, col], ctrs[ln, col]) - 0.5
            vv = uniform_array(keys[ln, col], ctrs[ln, col] + 1)
            ctrs[ln, col] += 2
            us = 0.5 - np.abs(uu)
            with np.errstate(divide="ignore", invalid="ignore"):
                k = np.floor((2.0 * a[pending] / us + b[pending]) * uu + m[pending] + 0.43)
                quick = (us >= 0.07) & (vv <= vr[pending])
                reject = (k < 0.0) | ((us < 0.013) & (vv > us))
                lg = np.array([math.lgamma(x + 1.0) if x >= 0 else 0.0 for x in k])
                slow = (np.log(vv) + np.log(inv_alpha[pending])
                        - np.log(a[pending] / (us * us) + b[pending])
                        <= -m[pending] + k * loglam[pending] - lg)
            accept = quick | (~reject & slow)
            result[pending[accept]] = k[accept]
            pending = pending[~accept]
        out[pos] = result
    return out


def column_increment_lanes(j, da, p, keys, ctrs, lanes):
    """Increments of column ``j`` for every lane; ``da`` must be > 0 on all lanes."""
    drift, gauss, st_alpha, st_scale, atom_col, atom_rate, atom_vec, atom_small = p
    inc = da[:, None] * drift[:, j][None, :]
    if gauss[j] > 0.0:
        u = _draw(keys, ctrs, lanes, j)
        inc[:, j] += np.sqrt(gauss[j] * da) * normal_ppf_array(u)
    if st_alpha[j] > 0.0:
        u1 = uniform_array(keys[lanes, j], ctrs[lanes, j])
        u2 = uniform_array(keys[lanes, j], ctrs[lanes, j] + 1)
        ctrs[lanes, j] += 2
        alpha = st_alpha[j]
        scale = (st_scale[j] * da * abs(math.cos(0.5 * math.pi * alpha))) ** (1.0 / alpha)
        inc[:, j] += scale * stable_std_array(alpha, u1, u2)
    for m in range(atom_col.shape[0]):
        if atom_col[m] != j:
            continue
        mu = atom_rate[m] * da
        n = poisson_lanes(mu, keys, ctrs, lanes, j)
        inc += (n - atom_small[m] * mu)[:, None] * atom_vec[m][None, :]
    return inc


def lamperti_chunk_np(paths, seed, z0, p, killable, dt, n_steps, z_floor, explode):
    paths = np.asarray(paths, dtype=np.int64)
    n = paths.shape[0]
    d = z0.shape[0]
    status = np.full(n, HORIZON, dtype=np.int8)
    t_end = np.full(n, n_steps * dt)
    clocks = np.zeros((n, d))
    z = np.tile(np.asarray(z0, dtype=np.float64), (n, 1))
    keys = np.stack([stream_keys(seed, paths, j) for j in range(d)], axis=1)
    ctrs = np.zeros((n, d), dtype=np.int64)
    if not np.any(z0 > 0.0):
        status[:] = ABSORBED
        t_end[:] = 0.0
        return status, t_end, z, clocks
    active = np.arange(n)
    for k in range(n_steps):
        if active.size == 0:
            break
        za = z[active]
        v = za.copy()
        for j in range(d):
            da = za[:, j] * dt
            pos = np.nonzero(da > 0.0)[0]
            if pos.size:
                v[pos] += column_increment_lanes(j, da[pos], p, keys, ctrs, active[pos])
        kill = (v <= 0.0) | (killable[None, :] & (v <= z_floor))
        v[kill] = 0.0
        clocks[active] += 0.5 * (za + v) * dt
        z[active] = v
        zero = ~np.any(v > 0.0, axis=1)
        big = np.any(v > explode, axis=1) & ~zero
        status[active[zero]] = ABSORBED
        status[active[big]] = EXPLODED
        t_end[active[zero | big]] = (k + 1) * dt
        active = active[~(zero | big)]
    return status, t_end, z, clocks
