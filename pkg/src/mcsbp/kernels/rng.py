"""Counter-based random streams.

Every stream is identified by a 64-bit key derived from ``(seed, path, column)``
and draw ``n`` of a stream is ``mix(key + (n + 1) * GOLDEN)``, the SplitMix64
output function. Draws therefore depend only on the key and the counter, never
on scheduling, so any partition of paths across workers gives the same numbers.

Three implementations of the mixer give identical bits: a numba one on uint64,
a pure-Python one on masked ints (used when numba is disabled), and a
vectorised numpy one for the array fallback.
"""
import math

import numpy as np

from .._accel import USE_NUMBA, njit

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
M1 = 0xBF58476D1CE4E5B9
M2 = 0x94D049BB133111EB
PATH_MULT = 0xD1B54A32D192ED03
TWO_M53 = 2.0 ** -53

if USE_NUMBA:
    _G = np.uint64(GOLDEN)
    _M1 = np.uint64(M1)
    _M2 = np.uint64(M2)
    _PM = np.uint64(PATH_MULT)
    _S30 = np.uint64(30)
    _S27 = np.uint64(27)
    _S31 = np.uint64(31)
    _S11 = np.uint64(11)
    _ONE = np.uint64(1)

    @njit
    def mix(z):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
        return z ^ (z >> _S31)

    @njit
    def stream_key(seed, path, column):
        k = mix(np.uint64(seed) + _G)
        k = mix(k ^ (np.uint64(path) * _PM))
        return mix(k + (np.uint64(column) + _ONE) * _G)

    @njit
    def uniform(key, ctr):
        z = mix(key + (np.uint64(ctr) + _ONE) * _G)
        return (float(z >> _S11) + 0.5) * TWO_M53

else:

    def mix(z):
        z = ((z ^ (z >> 30)) * M1) & MASK
        z = ((z ^ (z >> 27)) * M2) & MASK
        return z ^ (z >> 31)

    def stream_key(seed, path, column):
        k = mix((int(seed) + GOLDEN) & MASK)
        k = mix(k ^ ((int(path) * PATH_MULT) & MASK))
        return mix((k + (int(column) + 1) * GOLDEN) & MASK)

    def uniform(key, ctr):
        z = mix((int(key) + (int(ctr) + 1) * GOLDEN) & MASK)
        return (float(z >> 11) + 0.5) * TWO_M53


def mix_array(z):
    z = np.asarray(z, dtype=np.uint64)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(M2)
    return z ^ (z >> np.uint64(31))


def stream_keys(seed, paths, column):
    """Vectorised :func:`stream_key` over an array of path indices."""
    paths = np.asarray(paths, dtype=np.uint64)
    k = mix_array(np.full(paths.shape, (int(seed) + GOLDEN) & MASK, dtype=np.uint64))
    k = mix_array(k ^ (paths * np.uint64(PATH_MULT)))
    return mix_array(k + np.uint64(((int(column) + 1) * GOLDEN) & MASK))


def uniform_array(keys, ctrs):
    ctrs = np.asarray(ctrs).astype(np.uint64)
    z = mix_array(keys + (ctrs + np.uint64(1)) * np.uint64(GOLDEN))
    return ((z >> np.uint64(11)).astype(np.float64) + 0.5) * TWO_M53


# Wichura AS241 (PPND16) coefficients
_A = (3.3871328727963666080e0, 1.3314166789178437745e2, 1.9715909503065514427e3,
      1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
      3.3430575583588128105e4, 2.5090809287301226727e3)
_B = (1.0, 4.2313330701600911252e1, 6.8718700749205790830e2, 5.3941960214247511077e3,
      2.1213794301586595867e4, 3.9307895800092710610e4, 2.8729085735721942674e4,
      5.2264952788528545610e3)
_C = (1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
      3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
      2.27238449892691845833e-2, 7.74545014278341407640e-4)
_D = (1.0, 2.05319162663775882187e0, 1.67638483018380384940e0, 6.89767334985100004550e-1,
      1.48103976427480074590e-1, 1.51986665636164571966e-2, 5.47593808499534494600e-4,
      1.05075007164441684324e-9)
_E = (6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
      2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
      2.71155556874348757815e-5, 2.01033439929228813265e-7)
_F = (1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1, 1.48753612908506148525e-2,
      7.86869131145613259100e-4, 1.84631831751005468180e-5, 1.42151175831644588870e-7,
      2.04426310338993978564e-15)


@njit
def _poly(c, x):
    acc = c[7]
    for k in range(6, -1, -1):
        acc = acc * x + c[k]
    return acc


@njit
def normal_ppf(u):
    """Inverse standard normal CDF on (0, 1)."""
    q = u - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        return q * _poly(_A, r) / _poly(_B, r)
    r = u if q < 0.0 else 1.0 - u
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r -= 1.6
        val = _poly(_C, r) / _poly(_D, r)
    else:
        r -= 5.0
        val = _poly(_E, r) / _poly(_F, r)
    return -val if q < 0.0 else val


def normal_ppf_array(u):
    u = np.asarray(u, dtype=np.float64)
    q = u - 0.5
    out = np.empty_like(u)
    central = np.abs(q) <= 0.425
    if central.any():
        qc = q[central]
        r = 0.180625 - qc * qc
        out[central] = qc * _poly_arr(_A, r) / _poly_arr(_B, r)
    tail = ~central
    if tail.any():
        qt = q[tail]
        r = np.where(qt < 0.0, u[tail], 1.0 - u[tail])
        r = np.sqrt(-np.log(r))
        near = r <= 5.0
        val = np.empty_like(r)
        rn = r[near] - 1.6
        val[near] = _poly_arr(_C, rn) / _poly_arr(_D, rn)
        rf = r[~near] - 5.0
        val[~near] = _poly_arr(_E, rf) / _poly_arr(_F, rf)
        out[tail] = np.where(qt < 0.0, -val, val)
    return out


def _poly_arr(c, x):
    acc = np.full_like(x, c[7])
    for k in range(6, -1, -1):
        acc = acc * x + c[k]
    return acc


@njit
def stable_std(alpha, key, ctr):
    """Totally skewed (beta = 1) alpha-stable variate, unit scale, 1 < alpha < 2.

    Chambers-Mallows-Stuck; consumes two draws. Returns ``(x, ctr)``.
    """
    v = math.pi * (uniform(key, ctr) - 0.5)
    w = -math.log(uniform(key, ctr + 1))
    t = math.tan(0.5 * math.pi * alpha)
    b = math.atan(t) / alpha
    s = (1.0 + t * t) ** (0.5 / alpha)
    x = (s * math.sin(alpha * (v + b)) / math.cos(v) ** (1.0 / alpha)
         * (math.cos(v - alpha * (v + b)) / w) ** ((1.0 - alpha) / alpha))
    return x, ctr + 2


def stable_std_array(alpha, u1, u2):
    v = np.pi * (u1 - 0.5)
    w = -np.log(u2)
    t = math.tan(0.5 * math.pi * alpha)
    b = math.atan(t) / alpha
    s = (1.0 + t * t) ** (0.5 / alpha)
    return (s * np.sin(alpha * (v + b)) / np.cos(v) ** (1.0 / alpha)
            * (np.cos(v - alpha * (v + b)) / w) ** ((1.0 - alpha) / alpha))


@njit
def stable_scale(alpha, c, da):
    # unit-scale variate times this has Laplace exponent c * da * lambda**alpha
    return (c * da * abs(math.cos(0.5 * math.pi * alpha))) ** (1.0 / alpha)


POISSON_INVERSION_MAX = 10.0


@njit
def poisson(mu, key, ctr):
    """Poisson(mu) variate; returns ``(count, ctr)`` with count as float.

    Inversion (one draw) below ``POISSON_INVERSION_MAX``, otherwise Hormann's
    transformed rejection (PTRS), two draws per attempt.
    """
    if mu <= 0.0:
        return 0.0, ctr
    if mu < POISSON_INVERSION_MAX:
        u = uniform(key, ctr)
        ctr += 1
        k = 0
        pk = math.exp(-mu)
        cdf = pk
        while u > cdf and k < 1000:
            k += 1
            pk *= mu / k
            cdf += pk
        return float(k), ctr
    slam = math.sqrt(mu)
    loglam = math.log(mu)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    inv_alpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)
    while True:
        uu = uniform(key, ctr) - 0.5
        vv = uniform(key, ctr + 1)
        ctr += 2
        us = 0.5 - abs(uu)
        k = math.floor((2.0 * a / us + b) * uu + mu + 0.43)
        if us >= 0.07 and vv <= vr:
            return k, ctr
        if k < 0.0 or (us < 0.013 and vv > us):
            continue
        if (math.log(vv) + math.log(inv_alpha) - math.log(a / (us * us) + b)
                <= -mu + k * loglam - math.lgamma(k + 1.0)):
            return k, ctr
