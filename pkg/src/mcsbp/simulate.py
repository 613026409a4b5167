"""Monte Carlo engine: additive Lévy field paths, Lamperti integration,
first hitting times and extinction estimates.

Every path draws from counter-based streams keyed by ``(seed, path, column)``,
so a path's randomness does not depend on which worker runs it or in which
order. Aggregate statistics are integer counts, hence identical for any
number of workers.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _accel
from .kernels import lamperti as _lk
from .kernels.lamperti_np import lamperti_chunk_np
from .mechanism import BranchingMechanism

log = logging.getLogger(__name__)

Z_FLOOR = 1e-9
EXPLODE = 1e12
CHUNK = 256
Z95 = 1.959963984540054

ABSORBED, EXPLODED, HORIZON = _lk.ABSORBED, _lk.EXPLODED, _lk.HORIZON


def _check_r(mech, r):
    r = np.asarray(r, dtype=np.float64).reshape(-1)
    if r.shape != (mech.d,):
        raise ValueError(f"r has length {r.size}, expected {mech.d}")
    if np.any(r < 0) or not np.all(np.isfinite(r)):
        raise ValueError("r must be finite and nonnegative")
    return r


def _n_steps(horizon, step):
    if not (step > 0 and horizon > 0):
        raise ValueError("step and horizon must be positive")
    return int(math.ceil(horizon / step - 1e-9))


@dataclass
class SpaLFPath:
    """A sampled additive Lévy field on a uniform local-time grid.

    ``increments[k, i, j]`` is the increment of ``X^{i,j}`` over
    ``[k h, (k+1) h]``.
    """

    grid_step: float
    increments: np.ndarray
    seed: int
    path: int = 0

    @property
    def d(self) -> int:
        return self.increments.shape[1]

    @property
    def horizon(self) -> float:
        return self.increments.shape[0] * self.grid_step

    @property
    def knots(self) -> np.ndarray:
        n = self.increments.shape[0]
        grid = np.arange(n + 1) * self.grid_step
        return np.repeat(grid[:, None], self.d, axis=1)

    @property
    def cumulative(self) -> np.ndarray:
        out = np.zeros((self.increments.shape[0] + 1, self.d, self.d))
        np.cumsum(self.increments, axis=0, out=out[1:])
        return out

    @classmethod
    def from_cumulative(cls, cumulative, grid_step=1.0, seed=0):
        """Wrap a given cumulative field (first row must be zero)."""
        cumulative = np.asarray(cumulative, dtype=np.float64)
        if np.any(cumulative[0] != 0.0):
            raise ValueError("cumulative paths must start at 0")
        return cls(grid_step, np.diff(cumulative, axis=0), seed)

    # hitting_time reads these two
    @property
    def field(self):
        return self.cumulative


def sample_spalf(mech: BranchingMechanism, grid_step: float, horizon: float, seed: int,
                 path: int = 0) -> SpaLFPath:
    """Sample every column of the field on ``[0, horizon]`` with step ``grid_step``."""
    n = _n_steps(horizon, grid_step)
    inc = _lk.spalf_columns(mech.params, mech.d, float(grid_step), n, np.uint64(seed),
                            np.int64(path))
    return SpaLFPath(float(grid_step), np.asarray(inc), int(seed), int(path))


@dataclass
class MCSBPPath:
    """One Lamperti trajectory with its clocks and the field it consumed.

    ``knots[k, j]`` is the left-point local time handed to column ``j`` after
    ``k`` steps and ``field[k, i, j]`` the cumulative column increment there.
    """

    time_step: float
    times: np.ndarray
    z_values: np.ndarray
    clocks: np.ndarray
    status: int
    knots: np.ndarray
    field: np.ndarray
    seed: int
    path: int = 0

    @property
    def d(self) -> int:
        return self.z_values.shape[1]

    @property
    def absorbed_at(self) -> Optional[float]:
        return float(self.times[-1]) if self.status == ABSORBED else None

    @property
    def exploded(self) -> bool:
        return self.status == EXPLODED

    @property
    def near_extinct(self) -> bool:
        return self.status == HORIZON and float(np.max(self.z_values[-1])) < Z_FLOOR

    def to_csv(self, target) -> None:
        """Write ``t,z1..zd,a1..ad`` rows."""
        d = self.d
        with open(target, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"z{i + 1}" for i in range(d)] + [f"a{i + 1}" for i in range(d)])
            for k in range(self.times.shape[0]):
                w.writerow([f"{self.times[k]:.17g}"]
                           + [f"{v:.17g}" for v in self.z_values[k]]
                           + [f"{v:.17g}" for v in self.clocks[k]])


def simulate_mcsbp(mech: BranchingMechanism, r, time_step: float, horizon: float, seed: int,
                   path: int = 0, z_floor: float = Z_FLOOR) -> MCSBPPath:
    """Integrate the Lamperti equation from ``Z_0 = r`` by Euler time change."""
    r = _check_r(mech, r)
    n = _n_steps(horizon, time_step)
    status, m, zs, clocks, knots, fld = _lk.lamperti_record(
        np.int64(path), np.uint64(seed), r, mech.params, mech.killable, float(time_step), n,
        float(z_floor), EXPLODE)
    times = np.arange(m) * float(time_step)
    return MCSBPPath(float(time_step), times, np.asarray(zs), np.asarray(clocks), int(status),
                     np.asarray(knots), np.asarray(fld), int(seed), int(path))


@dataclass
class HittingTime:
    """Smallest grid solution of the hitting system.

    ``t_r`` holds NaN for censored coordinates; ``index`` the knot indices
    (``-1`` when censored).
    """

    t_r: np.ndarray
    index: np.ndarray
    converged: bool


def hitting_time(path, r, level_tol: float = 0.0) -> HittingTime:
    """First hitting time ``T_r`` of the field carried by ``path``.

    ``path`` is a :class:`SpaLFPath` or :class:`MCSBPPath`. The result is the
    componentwise-least ``s`` on the knots with
    ``r_i + sum_j x^{ij}(s_j) <= level_tol`` for every ``i``.
    """
    r = np.asarray(r, dtype=np.float64).reshape(-1)
    knots = np.ascontiguousarray(path.knots)
    fld = np.ascontiguousarray(path.field)
    if r.shape != (knots.shape[1],) or np.any(r < 0):
        raise ValueError("r must be a nonnegative vector matching the field dimension")
    idx, ok = _lk.smallest_solution(knots, fld, r, float(level_tol))
    idx = np.asarray(idx)
    if not ok:
        return HittingTime(np.full(r.shape, np.nan), np.full(r.shape, -1), False)
    t = np.array([knots[idx[i], i] for i in range(r.size)])
    return HittingTime(t, idx, True)


def verify_T_equals_integral(mech: BranchingMechanism, r, n_paths: int, time_step: float,
                             horizon: float, seed: int, level_tol: float = Z_FLOOR) -> dict:
    """Compare the terminal clocks ``a_inf`` with ``T_r`` on the same increments.

    Only paths that die out inside the horizon (absorbed, or every coordinate
    below the floor at the horizon) enter the statistics.
    """
    r = _check_r(mech, r)
    diffs = []
    for q in range(n_paths):
        p = simulate_mcsbp(mech, r, time_step, horizon, seed, path=q)
        if not (p.status == ABSORBED or p.near_extinct):
            continue
        ht = hitting_time(p, r, level_tol)
        if not ht.converged:
            continue
        diffs.append(float(np.max(np.abs(p.clocks[-1] - ht.t_r))))
    diffs = np.asarray(diffs)
    return {
        "n_paths": n_paths,
        "n_used": int(diffs.size),
        "max_abs": float(diffs.max()) if diffs.size else 0.0,
        "mean_abs": float(diffs.mean()) if diffs.size else 0.0,
        "time_step": time_step,
        "seed": seed,
    }


def _workers(workers):
    if workers is None:
        env = os.environ.get("MCSBP_THREADS")
        workers = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(workers))


def _run_chunks(mech, r, n_paths, time_step, n_steps, seed, workers, z_floor):
    """Run all paths in fixed chunks; results come back in path order."""
    kernel = _lk.lamperti_chunk if _accel.USE_NUMBA else lamperti_chunk_np
    p, kill = mech.params, mech.killable
    bounds = [(s, min(s + CHUNK, n_paths)) for s in range(0, n_paths, CHUNK)]

    def job(b):
        paths = np.arange(b[0], b[1], dtype=np.int64)
        return kernel(paths, np.uint64(seed), r, p, kill, float(time_step), n_steps,
                      float(z_floor), EXPLODE)

    workers = min(_workers(workers), max(1, len(bounds)))
    if workers == 1:
        parts = [job(b) for b in bounds]
    else:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(job, bounds))
    status = np.concatenate([np.asarray(x[0]) for x in parts])
    t_end = np.concatenate([np.asarray(x[1]) for x in parts])
    z = np.concatenate([np.asarray(x[2]) for x in parts])
    clocks = np.concatenate([np.asarray(x[3]) for x in parts])
    return status, t_end, z, clocks


def wald_interval(k: int, n: int):
    p = k / n
    half = Z95 * math.sqrt(max(p * (1.0 - p), 0.0) / n)
    return p, max(0.0, p - half), min(1.0, p + half)


def _sig6(x):
    return float(f"{x:.6g}")


@dataclass
class ExtinctionEstimate:
    """Counts and Wald intervals from :func:`mc_extinction`.

    ``estimate`` is the absorbed fraction (finite-time extinction);
    ``estimate_lim`` adds paths that are below the floor at the horizon.
    ``censored_fraction`` counts paths alive at the horizon and not near-extinct.
    """

    n: int
    absorbed: int
    near_extinct: int
    exploded: int
    censored: int
    seed: int
    dt: float
    horizon: float
    z_floor: float
    mechanism_digest: str
    extra: dict = field(default_factory=dict)

    @property
    def estimate(self):
        return self.absorbed / self.n

    @property
    def ci(self):
        return wald_interval(self.absorbed, self.n)[1:]

    @property
    def estimate_lim(self):
        return (self.absorbed + self.near_extinct) / self.n

    @property
    def ci_lim(self):
        return wald_interval(self.absorbed + self.near_extinct, self.n)[1:]

    @property
    def stderr(self):
        p = self.estimate
        return math.sqrt(p * (1 - p) / self.n)

    @property
    def censored_fraction(self):
        return self.censored / self.n

    def to_dict(self) -> dict:
        lo, hi = self.ci
        lo2, hi2 = self.ci_lim
        doc = {
            "estimate": _sig6(self.estimate),
            "ci_low": _sig6(lo),
            "ci_high": _sig6(hi),
            "n": self.n,
            "censored_fraction": _sig6(self.censored_fraction),
            "seed": self.seed,
            "dt": self.dt,
            "estimate_lim": _sig6(self.estimate_lim),
            "ci_lim_low": _sig6(lo2),
            "ci_lim_high": _sig6(hi2),
            "counts": {"absorbed": self.absorbed, "near_extinct": self.near_extinct,
                       "exploded": self.exploded, "censored": self.censored},
            "horizon": self.horizon,
            "z_floor": self.z_floor,
            "explode_threshold": EXPLODE,
            "mechanism_digest": self.mechanism_digest,
        }
        doc.update(self.extra)
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def mc_extinction(mech: BranchingMechanism, r, n_paths: int, time_step: float = 1e-3,
                  horizon: float = 50.0, seed: int = 0, workers=None,
                  z_floor: float = Z_FLOOR) -> ExtinctionEstimate:
    """Estimate extinction probabilities from ``n_paths`` Lamperti paths."""
    if n_paths < 100:
        raise ValueError("n_paths must be at least 100")
    r = _check_r(mech, r)
    n_steps = _n_steps(horizon, time_step)
    status, _, z, _ = _run_chunks(mech, r, n_paths, time_step, n_steps, seed, workers, z_floor)
    absorbed = int(np.sum(status == ABSORBED))
    exploded = int(np.sum(status == EXPLODED))
    alive = status == HORIZON
    near = int(np.sum(alive & (np.max(z, axis=1) < z_floor)))
    censored = int(np.sum(alive)) - near
    return ExtinctionEstimate(n_paths, absorbed, near, exploded, censored, int(seed),
                              float(time_step), float(horizon), float(z_floor), mech.digest,
                              {"backend": _accel.BACKEND})


def terminal_states(mech: BranchingMechanism, r, n_paths: int, time_step: float, t: float,
                    seed: int, workers=None, z_floor: float = Z_FLOOR):
    """``Z_t`` for ``n_paths`` paths, with exploded paths set to ``inf``."""
    r = _check_r(mech, r)
    status, _, z, _ = _run_chunks(mech, r, n_paths, time_step, _n_steps(t, time_step), seed,
                                  workers, z_floor)
    z = z.copy()
    z[status == EXPLODED] = np.inf
    return z


def mc_laplace(mech: BranchingMechanism, r, lam, t: float, n_paths: int,
               time_step: float = 1e-3, seed: int = 0, workers=None):
    """Monte Carlo ``E_r exp(-<lam, Z_t>)`` with its standard error."""
    z = terminal_states(mech, r, n_paths, time_step, t, seed, workers)
    lam = np.asarray(lam, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        x = np.exp(-np.where(np.isinf(z), np.inf, z) @ lam)
    x = np.nan_to_num(x, nan=0.0)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(n_paths))
