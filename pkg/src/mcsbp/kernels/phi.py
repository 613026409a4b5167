"""Laplace exponent of a parametric branching mechanism.

A mechanism is flattened into the tuple ``p``::

    (drift, gauss, st_alpha, st_scale, atom_col, atom_rate, atom_vec, atom_small)

``drift[i, j]`` is the drift of the (i, j) coordinate process, ``gauss[j]`` and
``st_*[j]`` act on the diagonal of column ``j`` (``st_alpha[j] == 0`` means no
stable part), and each atom ``m`` belongs to column ``atom_col[m]``.
``atom_small[m]`` is 1.0 when the atom is compensated (Euclidean norm < 1).
"""
import math

import numpy as np

from .._accel import njit


@njit
def jump_term(y, small):
    # e^{-y} - 1 + y*small, with a series near 0 to avoid cancellation
    if small > 0.0:
        if y < 1e-4:
            return y * y * (0.5 - y * (1.0 / 6.0 - y / 24.0))
        return math.expm1(-y) + y
    return math.expm1(-y)


@njit
def jump_term_deriv(y, small):
    # derivative of jump_term in y
    if small > 0.0:
        return -math.expm1(-y)
    return -math.exp(-y)


@njit
def phi_into(lam, p, out):
    drift, gauss, st_alpha, st_scale, atom_col, atom_rate, atom_vec, atom_small = p
    d = lam.shape[0]
    for j in range(d):
        acc = 0.0
        for i in range(d):
            acc -= drift[i, j] * lam[i]
        acc += 0.5 * gauss[j] * lam[j] * lam[j]
        if st_alpha[j] > 0.0 and lam[j] > 0.0:
            acc += st_scale[j] * lam[j] ** st_alpha[j]
        out[j] = acc
    for m in range(atom_col.shape[0]):
        y = 0.0
        for i in range(d):
            y += lam[i] * atom_vec[m, i]
        out[atom_col[m]] += atom_rate[m] * jump_term(y, atom_small[m])


@njit
def jacobian_into(lam, p, jac):
    """``jac[j, i] = d phi_j / d lambda_i``."""
    drift, gauss, st_alpha, st_scale, atom_col, atom_rate, atom_vec, atom_small = p
    d = lam.shape[0]
    for j in range(d):
        for i in range(d):
            jac[j, i] = -drift[i, j]
        jac[j, j] += gauss[j] * lam[j]
        if st_alpha[j] > 0.0 and lam[j] > 0.0:
            jac[j, j] += st_scale[j] * st_alpha[j] * lam[j] ** (st_alpha[j] - 1.0)
    for m in range(atom_col.shape[0]):
        y = 0.0
        for i in range(d):
            y += lam[i] * atom_vec[m, i]
        g = atom_rate[m] * jump_term_deriv(y, atom_small[m])
        j = atom_col[m]
        for i in range(d):
            jac[j, i] += g * atom_vec[m, i]


@njit
def phi_rows(lams, p, out):
    """Evaluate phi at every row of ``lams``."""
    for k in range(lams.shape[0]):
        phi_into(lams[k], p, out[k])


def phi(lam, p):
    lam = np.ascontiguousarray(lam, dtype=np.float64)
    out = np.empty_like(lam)
    phi_into(lam, p, out)
    return out


def phi_batch(lams, p):
    lams = np.ascontiguousarray(lams, dtype=np.float64)
    out = np.empty_like(lams)
    phi_rows(lams, p, out)
    return out


def jacobian(lam, p):
    lam = np.ascontiguousarray(lam, dtype=np.float64)
    jac = np.empty((lam.shape[0], lam.shape[0]))
    jacobian_into(lam, p, jac)
    return jac
