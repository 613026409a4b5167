"""Extinction analysis: Grey flags, the root ``phi(0)`` and the full report."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate

from .mechanism import (BranchingMechanism, criticality, eval_phi, eval_phi_tilde,
                        find_Dphi_witness, is_irreducible, mean_matrix, perron_root,
                        phi_jacobian)

log = logging.getLogger(__name__)

ROOT_TOL = 1e-10
GREY_LADDER_DOUBLINGS = 40


class SubordinatorError(ValueError):
    """The diagonal exponent never turns positive: ``X^{i,i}`` is a subordinator."""


class RootError(RuntimeError):
    pass


def _diag_positive_point(mech, i):
    for k in range(-10, 61):
        s = 2.0 ** k
        if eval_phi_tilde(mech, i, s) > 0.0:
            return s
    return None


def _diag_largest_root(mech, i):
    slope0 = -mean_matrix(mech)[i, i]
    hi = _diag_positive_point(mech, i)
    if hi is None:
        raise SubordinatorError(f"diagonal component {i} is a subordinator")
    if slope0 >= 0.0:
        return 0.0, hi
    lo = hi
    while eval_phi_tilde(mech, i, lo) > 0.0 and lo > 1e-300:
        lo *= 0.5
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if eval_phi_tilde(mech, i, mid) > 0.0:
            hi = mid
        else:
            lo = mid
    return hi, hi


def grey_quadrature(mech: BranchingMechanism, i: int, doublings: int = GREY_LADDER_DOUBLINGS):
    """Numerical look at ``int^inf ds / phi_ii(s)``.

    Integrates over ``[s*, s* 2**doublings]`` after ``s = s* e^x``, split at the
    midpoint in ``x``. For growth like ``s**p`` the far half is ``e^{(1-p) L/2}``
    times the near half, so a far/near ratio under 1/2 reads as convergent.
    Returns ``(near, far, converges)``.
    """
    root, first_pos = _diag_largest_root(mech, i)
    start = 2.0 * root if root > 0.0 else first_pos
    length = doublings * math.log(2.0)

    def integrand(x):
        s = start * math.exp(x)
        return s / eval_phi_tilde(mech, i, s)

    near, _ = integrate.quad(integrand, 0.0, 0.5 * length, limit=200)
    far, _ = integrate.quad(integrand, 0.5 * length, length, limit=200)
    return near, far, far < 0.5 * near


def grey_condition(mech: BranchingMechanism, i: int, corroborate: bool = False) -> bool:
    """Grey's condition ``int^inf ds / phi_ii(s) < inf`` for type ``i``.

    For the parametric families the diagonal exponent is superlinear exactly when
    a Gaussian or stable part is present (drift and finite atoms grow at most
    linearly), which decides the flag. With ``corroborate`` the quadrature check
    is run and logged; it never overrides the analytic verdict.
    """
    if not 0 <= i < mech.d:
        raise IndexError(f"type index {i} out of range for d={mech.d}")
    if _diag_positive_point(mech, i) is None:
        raise SubordinatorError(f"diagonal component {i} is a subordinator")
    flag = mech.columns[i].diffusive
    if corroborate:
        near, far, numeric = grey_quadrature(mech, i)
        level = logging.INFO if numeric == flag else logging.WARNING
        log.log(level, "Grey type %d: analytic=%s quadrature near=%.4g far=%.4g -> %s",
                i, flag, near, far, numeric)
    return flag


def phi_zero(mech: BranchingMechanism, witness=None, tol: float = ROOT_TOL) -> np.ndarray:
    """The root ``phi(0)`` of ``phi(lam) = 0``: zero unless supercritical, else
    the strictly positive root, by damped Newton from inside ``D_phi``."""
    rho = perron_root(mean_matrix(mech))
    if criticality(rho) != "supercritical":
        return np.zeros(mech.d)
    if witness is None:
        witness = find_Dphi_witness(mech)
    if witness is None:
        raise RootError("no point of D_phi found; cannot locate phi(0)")
    witness = np.asarray(witness, dtype=np.float64)
    attempts = []
    for factor in (1.0, 2.0, 0.75, 4.0, 0.5, 16.0, 0.25, 64.0):
        start = factor * witness
        root, res, ok = _newton(mech, start, tol)
        attempts.append((factor, res))
        if ok and np.all(root > 1e-9 * max(1.0, float(np.max(root)))):
            return root
    raise RootError(f"Newton did not reach a positive root; attempts (factor, residual): "
                    f"{attempts}")


def _newton(mech, x, tol, max_iter=200):
    x = np.array(x, dtype=np.float64)
    fx = eval_phi(mech, x)
    res = float(np.max(np.abs(fx)))
    for _ in range(max_iter):
        if res <= tol:
            return x, res, True
        jac = phi_jacobian(mech, x)
        try:
            step = np.linalg.solve(jac, fx)
        except np.linalg.LinAlgError:
            return x, res, False
        theta = 1.0
        while theta > 1e-12:
            trial = x - theta * step
            if np.all(trial >= 0.0):
                ft = eval_phi(mech, trial)
                rt = float(np.max(np.abs(ft)))
                if rt < res:
                    break
            theta *= 0.5
        else:
            return x, res, False
        x, fx, res = trial, ft, rt
    return x, res, res <= tol


@dataclass
class ExtinctionReport:
    d: int
    r: np.ndarray
    grey_flags: tuple
    rho: float
    criticality: str
    phi_zero: Optional[np.ndarray]
    extinction_mode: str
    irreducible: bool
    witness: Optional[np.ndarray]
    mechanism_digest: str
    warnings: list = field(default_factory=list)

    def prob_extinction(self, r=None) -> Optional[float]:
        """``P_r(lim Z = 0) = exp(-<r, phi(0)>)``."""
        if self.phi_zero is None:
            return None
        r = self.r if r is None else np.asarray(r, dtype=np.float64)
        return float(math.exp(-float(np.dot(r, self.phi_zero))))

    def q(self, r=None) -> Optional[float]:
        """Probability of extinction at a finite time."""
        r = self.r if r is None else np.asarray(r, dtype=np.float64)
        if not np.any(r > 0):
            return 1.0
        p = self.prob_extinction(r)
        if p is None or self.extinction_mode == "inapplicable":
            return None
        return p if self.extinction_mode == "finite_time" else 0.0

    def q_bar(self, r=None) -> Optional[float]:
        """Probability of extinguishment at infinity without ever hitting 0."""
        r = self.r if r is None else np.asarray(r, dtype=np.float64)
        if not np.any(r > 0):
            return 0.0
        p = self.prob_extinction(r)
        if p is None or self.extinction_mode == "inapplicable":
            return None
        return 0.0 if self.extinction_mode == "finite_time" else p

    @property
    def k_limit(self):
        """``lim_s u_s(inf)``, equal to ``phi(0)``."""
        return self.phi_zero

    def to_dict(self) -> dict:
        def arr(x):
            return None if x is None else [float(v) for v in x]

        return {
            "d": self.d,
            "r": arr(self.r),
            "grey_flags": list(self.grey_flags),
            "rho": self.rho,
            "criticality": self.criticality,
            "phi_zero": arr(self.phi_zero),
            "extinction_mode": self.extinction_mode,
            "prob_extinction": self.prob_extinction(),
            "q_r": self.q(),
            "q_bar_r": self.q_bar(),
            "irreducible": self.irreducible,
            "witness": arr(self.witness),
            "mechanism_digest": self.mechanism_digest,
            "warnings": list(self.warnings),
        }

    def to_json(self, **extra) -> str:
        doc = self.to_dict()
        doc.update(extra)
        return json.dumps(doc, indent=2)

    def render(self) -> str:
        def fmt(x):
            return "n/a" if x is None else f"{x:.6g}"

        lines = []
        for w in self.warnings:
            lines.append(f"WARNING: {w}")
        lines += [
            f"types            {self.d}",
            f"Perron root rho  {self.rho:.6g} ({self.criticality})",
            "Grey flags       " + ", ".join(
                "n/a" if g is None else str(bool(g)).lower() for g in self.grey_flags),
            "phi(0)           " + ("n/a" if self.phi_zero is None else
                                   "[" + ", ".join(f"{v:.6g}" for v in self.phi_zero) + "]"),
            f"extinction mode  {self.extinction_mode}",
            "r                [" + ", ".join(f"{v:.6g}" for v in self.r) + "]",
            f"P(ext)           {fmt(self.prob_extinction())}",
            f"q_r              {fmt(self.q())}",
            f"q_bar_r          {fmt(self.q_bar())}",
        ]
        return "\n".join(lines)


def extinction_report(mech: BranchingMechanism, r) -> ExtinctionReport:
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (mech.d,) or np.any(r < 0) or not np.all(np.isfinite(r)):
        raise ValueError(f"r must be a nonnegative vector of length {mech.d}")
    warns = []
    m = mean_matrix(mech)
    irreducible = is_irreducible(m)
    if not irreducible:
        warns.append("mean matrix is reducible; the extinction criteria assume irreducibility")
    import warnings as _w
    with _w.catch_warnings():
        _w.simplefilter("ignore")
        rho = perron_root(m)
    crit = criticality(rho)
    cp = mech.compound_poisson_offdiag()
    if cp:
        warns.append("off-diagonal compound Poisson components "
                     + ", ".join(f"X^{{{i},{j}}}" for i, j in cp)
                     + ": outside the hypotheses of the Grey classification")
    witness = find_Dphi_witness(mech)
    if witness is None:
        warns.append("D_phi nonempty could not be verified on the diagonal ladder")
    flags = []
    for i in range(mech.d):
        try:
            flags.append(grey_condition(mech, i))
        except SubordinatorError:
            flags.append(None)
    root = None
    if witness is not None and irreducible:
        root = phi_zero(mech, witness)
    if root is None or cp or any(f is None for f in flags):
        mode = "inapplicable"
    elif all(flags):
        mode = "finite_time"
    else:
        mode = "at_infinity"
    return ExtinctionReport(mech.d, r, tuple(flags), rho, crit, root, mode, irreducible,
                            witness, mech.digest, warns)
