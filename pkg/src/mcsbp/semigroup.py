"""Laplace-exponent semigroup ``u_t(lam)`` and the diagonal comparison solution.

``u_t(lam)`` solves ``du/dt = -phi(u)``, ``u_0 = lam``. Beyond plain trajectories
this module estimates ``u_t(inf)`` along the diagonal ray and builds the scalar
comparison ``v_t`` that dominates ``u_t`` on the diagonal when every diagonal
exponent satisfies Grey's integral condition.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .kernels import ode as _ode
from .kernels import phi as _phi
from .mechanism import BranchingMechanism, _check_lambda, mean_matrix

log = logging.getLogger(__name__)

DIVERGENCE_THRESHOLD = 1e12
STABILIZATION_TOL = 1e-8


class SolverError(RuntimeError):
    def __init__(self, message, status=None, steps=None, time=None):
        super().__init__(message)
        self.status = status
        self.steps = steps
        self.time = time


class BlowUpError(SolverError):
    pass


class DichotomyError(RuntimeError):
    """Coordinates of ``u_t(inf)`` disagree on finiteness."""


@dataclass(frozen=True)
class SemigroupSolution:
    lambda0: np.ndarray
    times: np.ndarray
    values: np.ndarray
    tolerance: float
    steps: int = 0

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]

    def to_csv(self, path, extra=None):
        write_trajectory_csv(path, self.times, self.values, extra=extra)


def write_trajectory_csv(path, times, values, prefix="u", extra=None):
    """CSV ``t,u1,...,ud`` with 17 significant digits; ``extra`` maps column
    name -> per-time values appended on the right."""
    values = np.atleast_2d(values)
    extra = extra or {}
    header = ["t"] + [f"{prefix}{i + 1}" for i in range(values.shape[1])] + list(extra)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k, t in enumerate(times):
            row = [t, *values[k], *(col[k] for col in extra.values())]
            w.writerow([f"{x:.17g}" for x in row])


def _grid(horizon, times, n_points):
    if times is None:
        if horizon is None or not horizon >= 0.0:
            raise ValueError("need a nonnegative horizon or an explicit time grid")
        times = np.linspace(0.0, float(horizon), n_points)
    times = np.asarray(times, dtype=np.float64)
    if times.ndim != 1 or times.size == 0 or times[0] != 0.0 or np.any(np.diff(times) < 0):
        raise ValueError("time grid must start at 0 and be nondecreasing")
    return times


def solve_u(mech: BranchingMechanism, lam, horizon=None, tol: float = 1e-8, *, times=None,
            n_points: int = 101, blowup: float = DIVERGENCE_THRESHOLD,
            max_steps: int = 2_000_000) -> SemigroupSolution:
    """Integrate ``du/dt = -phi(u)`` from ``u_0 = lam`` onto a time grid.

    Dormand-Prince 5(4) with mixed absolute/relative local error ``tol``; the
    integrator lands on each grid time exactly.

    Raises
    ------
    BlowUpError
        a coordinate exceeded ``blowup``.
    SolverError
        step-size underflow or step budget exhausted.
    """
    lam = _check_lambda(mech, lam)
    times = _grid(horizon, times, n_points)
    values, status, steps = _ode.dp54_grid(lam.copy(), times, mech.params, tol, tol,
                                           blowup, max_steps)
    if status == _ode.BLOWUP:
        bad = int(np.argmax(np.isnan(values[:, 0]))) if np.isnan(values[:, 0]).any() else -1
        raise BlowUpError(f"u exceeded {blowup:g} before t={times[bad]:g}",
                          status, steps, float(times[bad]))
    if status != _ode.OK:
        reason = {_ode.MAX_STEPS: "step budget exhausted",
                  _ode.STEP_UNDERFLOW: "step size underflow"}[status]
        raise SolverError(f"ODE solver failed: {reason} after {steps} steps", status, steps)
    return SemigroupSolution(lam, times, values, tol, steps)


def semigroup_residual(mech, lam, s, t, tol=1e-8, relative: bool = False) -> float:
    """``max |u_{t+s}(lam) - u_t(u_s(lam))|`` from independent solves.

    With ``relative`` each coordinate is divided by ``max(1, |u_{t+s}|)``, the
    same mixed absolute/relative scale the solver's tolerance refers to.
    """
    if s < 0 or t < 0:
        raise ValueError("s and t must be >= 0")
    direct = solve_u(mech, lam, times=[0.0, s + t], tol=tol).final
    mid = solve_u(mech, lam, times=[0.0, s], tol=tol).final
    composed = solve_u(mech, np.maximum(mid, 0.0), times=[0.0, t], tol=tol).final
    diff = np.abs(direct - composed)
    if relative:
        diff = diff / np.maximum(1.0, np.abs(direct))
    return float(np.max(diff))


@dataclass(frozen=True)
class AtInfinity:
    """Diagonal-ray estimate of ``u_t(inf)``.

    ``finite`` is the common verdict; ``value`` holds the extrapolated limit
    when finite. ``ladder`` has one row ``u_t(2**k 1)`` per rung explored.
    """

    t: float
    finite: bool
    value: Optional[np.ndarray]
    verdicts: tuple
    ladder: np.ndarray

    @property
    def verdict(self) -> str:
        return "finite" if self.finite else "diverges"


def u_at_infinity(mech, t, ladder_max: int = 60, *, tol: float = 1e-11,
                  threshold: float = DIVERGENCE_THRESHOLD,
                  stabilization: float = STABILIZATION_TOL) -> AtInfinity:
    """Classify ``u_t(inf)`` per coordinate from ``u_t(2**k 1)``, ``k = 0..ladder_max``.

    A coordinate is finite once successive rungs agree to ``stabilization``
    (relative) and divergent once it exceeds ``threshold``. Coordinates still
    open at the top of the ladder (or when the solve gets too stiff to continue)
    are decided by the ratio of successive differences (geometric decay ->
    finite, extrapolated).
    """
    if not t > 0:
        raise ValueError("t must be > 0")
    d = mech.d
    verdict = [None] * d
    value = np.full(d, np.nan)
    rows = []
    for k in range(ladder_max + 1):
        s = 2.0 ** k
        try:
            row = solve_u(mech, s * np.ones(d), times=[0.0, t], tol=tol, blowup=1e300).final
        except BlowUpError:
            row = np.full(d, np.inf)
        except SolverError:
            # too stiff this high up: decide open coordinates from the rungs so far
            if len(rows) < 3:
                raise
            break
        rows.append(row)
        for i in range(d):
            if verdict[i] is not None:
                continue
            if row[i] > threshold:
                verdict[i] = "diverges"
            elif k > 0 and abs(row[i] - rows[-2][i]) <= stabilization * abs(row[i]):
                verdict[i] = "finite"
                value[i] = row[i]
        if all(v is not None for v in verdict):
            break
    ladder = np.array(rows)
    for i in range(d):
        if verdict[i] is not None:
            continue
        col = ladder[:, i]
        d1 = col[-2] - col[-3]
        d2 = col[-1] - col[-2]
        ratio = d2 / d1 if d1 != 0 else math.inf
        if 0.0 <= ratio < 0.9:
            verdict[i] = "finite"
            value[i] = col[-1] + d2 * ratio / (1.0 - ratio)
        else:
            verdict[i] = "diverges"
    if len(set(verdict)) != 1:
        raise DichotomyError(f"u_t(inf) at t={t}: coordinates disagree {verdict}")
    finite = verdict[0] == "finite"
    return AtInfinity(float(t), finite, value if finite else None, tuple(verdict), ladder)


# ---------------------------------------------------------------------------
# diagonal comparison


def _pair_matrix(mech, x):
    """``P[k, l] = phi_l(x e_k)``."""
    lams = x * np.eye(mech.d)
    return _phi.phi_batch(lams, mech.params)


def comparison_rate(mech, x: float) -> float:
    """``f(x) = min_i phi_ii(x) + (d - 1) * sum_{k != l} phi_kl(x)``."""
    p = _pair_matrix(mech, x)
    diag = np.diag(p)
    offsum = p.sum() - diag.sum()
    return float(diag.min() + (mech.d - 1) * offsum)


def _largest_root(g: Callable[[float], float], slope0: float) -> float:
    """Largest root of a convex ``g`` with ``g(0) = 0`` that eventually turns positive."""
    if slope0 >= 0.0:
        return 0.0
    hi = None
    for k in range(-10, 61):
        if g(2.0 ** k) > 0.0:
            hi = 2.0 ** k
            break
    if hi is None:
        raise ValueError("comparison rate never turns positive on the ladder")
    lo = hi
    while g(lo) >= 0.0:
        lo *= 0.5
        if lo < 1e-300:
            return 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if g(mid) > 0.0:
            hi = mid
        else:
            lo = mid
    return hi


@dataclass
class ComparisonSolution:
    """Scalar solution ``v_t = F^{-1}(F(lam) - t)`` with ``F(x) = int_delta^x ds / f(s)``."""

    mech: BranchingMechanism
    s0: float
    delta: float
    lambda1: float
    times: np.ndarray = field(default_factory=lambda: np.zeros(1))
    values: np.ndarray = field(default_factory=lambda: np.zeros(1))

    def f(self, x):
        return comparison_rate(self.mech, x)

    def F(self, x: float) -> float:
        if not x > self.s0:
            raise ValueError("F is defined on (s0, inf)")
        val, _ = integrate.quad(lambda s: 1.0 / self.f(s), self.delta, x, epsabs=1e-13,
                                epsrel=1e-12, limit=200)
        return val

    def F_infinity(self) -> float:
        val, _ = integrate.quad(lambda s: 1.0 / self.f(s), self.delta, np.inf, epsabs=1e-13,
                                epsrel=1e-12, limit=400)
        return val

    def F_inv(self, y: float, guess: Optional[float] = None) -> float:
        """Safeguarded Newton on ``F(x) = y`` (``F' = 1/f``), bracket ``(s0, hi]``."""
        lo, hi = self.s0, max(self.lambda1, self.delta)
        while self.F(hi) < y:
            lo = hi
            hi *= 2.0
        x = guess if guess is not None and lo < guess <= hi else hi
        for _ in range(200):
            r = self.F(x) - y
            if abs(r) <= 1e-13 * max(1.0, abs(y)):
                return x
            if r > 0:
                hi = x
            else:
                lo = x
            step = x - r * self.f(x)
            if not lo < step < hi:
                step = 0.5 * (lo + hi) if lo > self.s0 else self.s0 + 0.5 * (hi - self.s0)
            if abs(step - x) <= 1e-15 * x:
                return step
            x = step
        return x

    def v(self, t: float, guess: Optional[float] = None) -> float:
        if t == 0.0:
            return self.lambda1
        return self.F_inv(self.F(self.lambda1) - t, guess)


def comparison_solution(mech: BranchingMechanism, lam, horizon=None, *, times=None,
                        n_points: int = 41) -> ComparisonSolution:
    """Build ``v`` on the diagonal ``lam = lam_1 * 1`` (requires every Grey
    condition and ``lam_1 > s0``)."""
    from .extinction import grey_condition

    lam = _check_lambda(mech, lam)
    if not np.all(lam == lam[0]) or lam[0] <= 0.0:
        raise ValueError("lambda must lie on the diagonal, away from 0")
    d = mech.d
    if not all(grey_condition(mech, i) for i in range(d)):
        raise ValueError("comparison solution needs Grey's condition on every diagonal exponent")
    m = mean_matrix(mech)
    off = m.sum() - np.trace(m)
    roots = []
    for i in range(d):
        def g(x, i=i):
            p = _pair_matrix(mech, x)
            return p[i, i] + (d - 1) * (p.sum() - np.trace(p))
        roots.append(_largest_root(g, -m[i, i] - (d - 1) * off))
    s0 = max(roots)
    f0 = comparison_rate(mech, s0)
    if abs(f0) > 1e-8 * max(1.0, s0):
        raise ValueError(f"comparison rate at its largest root is {f0:g}, not 0")
    probe = s0 + np.geomspace(1e-3, 1e3, 25) * max(1.0, s0)
    fp = np.array([comparison_rate(mech, x) for x in probe])
    if np.any(np.diff(fp) <= 0):
        raise ValueError("comparison rate is not increasing beyond s0")
    if lam[0] <= s0:
        raise ValueError(f"lambda_1={lam[0]} must exceed s0={s0}")
    times = _grid(horizon, times, n_points)
    sol = ComparisonSolution(mech, s0, s0 + 1.0, float(lam[0]))
    vals = np.empty(times.size)
    guess = None
    for k, t in enumerate(times):
        vals[k] = sol.v(float(t), guess)
        guess = vals[k]
    sol.times = times
    sol.values = vals
    return sol


def domination_margin(mech, lam, times, tol=1e-8) -> float:
    """``max_{t,i} (u_t^(i)(lam) - v_t(lam))``; nonpositive when v dominates."""
    times = _grid(None, times, 0)
    u = solve_u(mech, lam, times=times, tol=tol).values
    v = comparison_solution(mech, lam, times=times).values
    return float(np.max(u - v[:, None]))


def verify_domination(mech, lam, times, tol: float = 1e-6) -> bool:
    """``u_t(lam) <= v_t(lam) + tol`` on every grid time and coordinate."""
    gap = domination_margin(mech, lam, times)
    log.info("domination: max(u - v) = %.3e (tolerance %.1e)", gap, tol)
    return gap <= tol
