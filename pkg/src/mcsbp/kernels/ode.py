"""Dormand-Prince 5(4) integration of du/dt = -phi(u).

The integrator steps exactly onto every requested output time, so no
interpolation error enters the reported values.
"""
import math

import numpy as np

from .._accel import njit
from .phi import phi_into

OK = 0
BLOWUP = 1
MAX_STEPS = 2
STEP_UNDERFLOW = 3

# Butcher tableau
C2, C3, C4, C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
A21 = 1.0 / 5.0
A31, A32 = 3.0 / 40.0, 9.0 / 40.0
A41, A42, A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
A51, A52, A53, A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
A61, A62, A63, A64, A65 = (9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0,
                           49.0 / 176.0, -5103.0 / 18656.0)
B1, B3, B4, B5, B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
E1, E3, E4, E5, E6, E7 = (71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0,
                          -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0)


@njit
def _rhs(y, p, out):
    phi_into(y, p, out)
    for i in range(y.shape[0]):
        out[i] = -out[i]


@njit
def _initial_step(y, f, p, rtol, atol, span):
    d = y.shape[0]
    d0 = 0.0
    d1 = 0.0
    for i in range(d):
        sc = atol + rtol * abs(y[i])
        d0 = max(d0, abs(y[i]) / sc)
        d1 = max(d1, abs(f[i]) / sc)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    h0 = min(h0, span)
    y1 = np.empty(d)
    for i in range(d):
        y1[i] = y[i] + h0 * f[i]
    f1 = np.empty(d)
    _rhs(y1, p, f1)
    d2 = 0.0
    for i in range(d):
        sc = atol + rtol * abs(y[i])
        d2 = max(d2, abs(f1[i] - f[i]) / sc)
    d2 /= h0
    m = max(d1, d2)
    if m <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / m) ** 0.2
    return min(100.0 * h0, h1, span)


@njit
def dp54_grid(y0, times, p, rtol, atol, blowup, max_steps):
    """Integrate from ``times[0]`` through every entry of ``times``.

    Returns ``(values, status, n_steps)``; rows of ``values`` past a failure
    are left as NaN.
    """
    d = y0.shape[0]
    n = times.shape[0]
    out = np.full((n, d), np.nan)
    y = y0.copy()
    out[0] = y
    if n == 1 or times[n - 1] == times[0]:
        for idx in range(1, n):
            out[idx] = y
        return out, OK, 0
    k1 = np.empty(d)
    k2 = np.empty(d)
    k3 = np.empty(d)
    k4 = np.empty(d)
    k5 = np.empty(d)
    k6 = np.empty(d)
    k7 = np.empty(d)
    ys = np.empty(d)
    y5 = np.empty(d)
    _rhs(y, p, k1)
    t = times[0]
    h = _initial_step(y, k1, p, rtol, atol, times[n - 1] - times[0])
    steps = 0
    for idx in range(1, n):
        target = times[idx]
        while t < target:
            if steps >= max_steps:
                return out, MAX_STEPS, steps
            remaining = target - t
            clipped = h >= remaining
            hs = remaining if clipped else h
            for i in range(d):
                ys[i] = y[i] + hs * A21 * k1[i]
            _rhs(ys, p, k2)
            for i in range(d):
                ys[i] = y[i] + hs * (A31 * k1[i] + A32 * k2[i])
            _rhs(ys, p, k3)
            for i in range(d):
                ys[i] = y[i] + hs * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
            _rhs(ys, p, k4)
            for i in range(d):
                ys[i] = y[i] + hs * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
            _rhs(ys, p, k5)
            for i in range(d):
                ys[i] = y[i] + hs * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i]
                                     + A64 * k4[i] + A65 * k5[i])
            _rhs(ys, p, k6)
            for i in range(d):
                y5[i] = y[i] + hs * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i]
                                     + B5 * k5[i] + B6 * k6[i])
            _rhs(y5, p, k7)
            err = 0.0
            for i in range(d):
                e = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i]
                          + E6 * k6[i] + E7 * k7[i])
                sc = atol + rtol * max(abs(y[i]), abs(y5[i]))
                q = abs(e) / sc
                if not q < 1e300:
                    # NaN or overflow in a stage (overshoot past lambda = 0): reject
                    q = 1e10
                err = max(err, q)
            steps += 1
            if err <= 1.0:
                t = target if clipped else t + hs
                for i in range(d):
                    y[i] = y5[i]
                    k1[i] = k7[i]
                    if abs(y[i]) > blowup:
                        out[idx] = y
                        return out, BLOWUP, steps
                fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
                if not clipped or fac < 1.0:
                    h = hs * fac
            else:
                h = hs * max(0.2, 0.9 * err ** -0.2)
                if h <= 1e-15 * max(1.0, abs(t)):
                    return out, STEP_UNDERFLOW, steps
        out[idx] = y
    return out, OK, steps
