"""Parametric branching mechanisms.

Column ``j`` of a mechanism is a spectrally positive d-dimensional Lévy process
``X^(j) = (X^{1,j}, ..., X^{d,j})`` described by a drift vector, a Gaussian
coefficient and an optional one-sided stable part (both acting on coordinate
``j`` only) and a finite family of jump atoms. Its Laplace exponent is

    phi_j(lam) = -sum_i a[i, j] lam_i + q_j lam_j**2 / 2 + c_j lam_j**alpha_j
                 + sum_atoms rate * (exp(-<lam, x>) - 1 + <lam, x> 1{|x| < 1})

so that ``E exp(-<lam, X^(j)_t>) = exp(t phi_j(lam))``. The drift field holds the
compensated drift ``a[i, j]``: atoms with Euclidean norm below one are
compensated, larger ones are not.

Indices are 0-based throughout.
"""
from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .kernels import phi as _phi

ZERO_TOL = 1e-12


class MechanismError(ValueError):
    """Invalid mechanism parameters. ``line`` is set when parsed from a file."""

    def __init__(self, message, line=None):
        self.line = line
        self.bare_message = message
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ReducibleWarning(UserWarning):
    """The mean matrix is not irreducible; the Perron root may not be simple."""


@dataclass(frozen=True)
class JumpAtom:
    rate: float
    vector: tuple

    def __post_init__(self):
        object.__setattr__(self, "rate", float(self.rate))
        object.__setattr__(self, "vector", tuple(float(x) for x in self.vector))
        if not (self.rate > 0.0 and math.isfinite(self.rate)):
            raise MechanismError(f"jump rate must be positive and finite, got {self.rate}")
        if any(not math.isfinite(x) or x < 0.0 for x in self.vector):
            raise MechanismError(f"jump vector must be nonnegative, got {list(self.vector)}")
        if not any(x > 0.0 for x in self.vector):
            raise MechanismError("jump vector must be nonzero")

    @property
    def norm(self) -> float:
        return math.sqrt(sum(x * x for x in self.vector))

    @property
    def compensated(self) -> bool:
        return self.norm < 1.0


@dataclass(frozen=True)
class StableComponent:
    """One-sided stable part with exponent ``scale * lam**alpha``, 1 < alpha < 2."""

    alpha: float
    scale: float

    def __post_init__(self):
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "scale", float(self.scale))
        if not 1.0 < self.alpha < 2.0:
            raise MechanismError(f"stable index must lie in (1, 2), got {self.alpha}")
        if not (self.scale > 0.0 and math.isfinite(self.scale)):
            raise MechanismError(f"stable scale must be positive, got {self.scale}")


@dataclass(frozen=True)
class LevyColumn:
    drift: tuple
    gaussian: float = 0.0
    stable: Optional[StableComponent] = None
    jumps: tuple = ()
    killing: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "drift", tuple(float(x) for x in self.drift))
        object.__setattr__(self, "gaussian", float(self.gaussian))
        object.__setattr__(self, "jumps", tuple(self.jumps))
        if any(not math.isfinite(x) for x in self.drift):
            raise MechanismError("drift entries must be finite")
        if not (self.gaussian >= 0.0 and math.isfinite(self.gaussian)):
            raise MechanismError(f"gaussian coefficient must be >= 0, got {self.gaussian}")
        if self.killing != 0.0:
            raise MechanismError("killing rate must be 0 (conservative processes only)")
        for atom in self.jumps:
            if len(atom.vector) != len(self.drift):
                raise MechanismError(
                    f"jump vector has length {len(atom.vector)}, expected {len(self.drift)}")

    @property
    def diffusive(self) -> bool:
        """True when the diagonal coordinate has a Gaussian or stable part."""
        return self.gaussian > 0.0 or self.stable is not None

    def compensator(self, i: int) -> float:
        """Drift removed from coordinate ``i`` by the compensated atoms."""
        return sum(a.rate * a.vector[i] for a in self.jumps if a.compensated)


@dataclass(frozen=True)
class BranchingMechanism:
    columns: tuple
    neutral_base: Optional[LevyColumn] = field(default=None, compare=False)

    def __post_init__(self):
        cols = tuple(self.columns)
        object.__setattr__(self, "columns", cols)
        d = len(cols)
        if d < 1:
            raise MechanismError("a mechanism needs at least one column")
        for j, col in enumerate(cols):
            if len(col.drift) != d:
                raise MechanismError(f"column {j}: drift has length {len(col.drift)}, expected {d}")
            for i in range(d):
                if i == j:
                    continue
                # X^{i,j} must be a subordinator: nonnegative drift net of compensation
                net = col.drift[i] - col.compensator(i)
                if net < -ZERO_TOL * max(1.0, abs(col.drift[i])):
                    raise MechanismError(
                        f"column {j}: off-diagonal drift a[{i},{j}]={col.drift[i]} must be >= "
                        f"{col.compensator(i)} (essentially nonnegative, net of compensation)")

    @property
    def d(self) -> int:
        return len(self.columns)

    @cached_property
    def params(self):
        """Flat array tuple consumed by the kernels."""
        d = self.d
        drift = np.array([[self.columns[j].drift[i] for j in range(d)] for i in range(d)])
        gauss = np.array([c.gaussian for c in self.columns])
        st_alpha = np.array([c.stable.alpha if c.stable else 0.0 for c in self.columns])
        st_scale = np.array([c.stable.scale if c.stable else 0.0 for c in self.columns])
        cols, rates, vecs, small = [], [], [], []
        for j, c in enumerate(self.columns):
            for a in c.jumps:
                cols.append(j)
                rates.append(a.rate)
                vecs.append(a.vector)
                small.append(1.0 if a.compensated else 0.0)
        return (
            np.ascontiguousarray(drift),
            gauss,
            st_alpha,
            st_scale,
            np.array(cols, dtype=np.int64),
            np.array(rates, dtype=np.float64),
            np.array(vecs, dtype=np.float64).reshape(len(cols), d),
            np.array(small, dtype=np.float64),
        )

    @cached_property
    def killable(self) -> np.ndarray:
        return np.array([c.diffusive for c in self.columns])

    def to_dict(self) -> dict:
        out = {"d": self.d, "columns": []}
        for c in self.columns:
            out["columns"].append({
                "drift": list(c.drift),
                "gaussian": c.gaussian,
                "stable": None if c.stable is None else {"alpha": c.stable.alpha,
                                                          "scale": c.stable.scale},
                "jumps": [{"rate": a.rate, "vector": list(a.vector)} for a in c.jumps],
            })
        return out

    @cached_property
    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def compound_poisson_offdiag(self) -> list:
        """Pairs ``(i, j)``, ``i != j``, where ``X^{i,j}`` is compound Poisson.

        That is: no drift net of compensation, but atoms charging coordinate i.
        """
        pairs = []
        for j, col in enumerate(self.columns):
            for i in range(self.d):
                if i == j:
                    continue
                charged = any(a.vector[i] > 0.0 for a in col.jumps)
                net = col.drift[i] - col.compensator(i)
                if charged and net <= ZERO_TOL * max(1.0, abs(col.drift[i])):
                    pairs.append((i, j))
        return pairs


def _check_lambda(mech, lam):
    lam = np.asarray(lam, dtype=np.float64)
    if lam.shape != (mech.d,):
        raise ValueError(f"lambda must have shape ({mech.d},), got {lam.shape}")
    if np.any(lam < 0.0) or not np.all(np.isfinite(lam)):
        raise ValueError("lambda must be finite and componentwise nonnegative")
    return lam


def _check_index(mech, i):
    if not 0 <= i < mech.d:
        raise IndexError(f"type index {i} out of range for d={mech.d}")


def eval_phi(mech: BranchingMechanism, lam) -> np.ndarray:
    """``(phi_1(lam), ..., phi_d(lam))`` for ``lam >= 0``."""
    return _phi.phi(_check_lambda(mech, lam), mech.params)


def phi_jacobian(mech: BranchingMechanism, lam) -> np.ndarray:
    """``J[j, i] = d phi_j / d lam_i``."""
    return _phi.jacobian(_check_lambda(mech, lam), mech.params)


def eval_phi_tilde(mech: BranchingMechanism, i: int, s: float) -> float:
    """Exponent of the diagonal process ``X^{i,i}``: ``phi_i(s e_i)``."""
    return eval_phi_offdiag(mech, i, i, s)


def eval_phi_offdiag(mech: BranchingMechanism, i: int, j: int, s: float) -> float:
    """Exponent of ``X^{i,j}``: ``phi_j(s e_i)``."""
    _check_index(mech, i)
    _check_index(mech, j)
    if not s >= 0.0:
        raise ValueError(f"s must be >= 0, got {s}")
    lam = np.zeros(mech.d)
    lam[i] = s
    return float(_phi.phi(lam, mech.params)[j])


def mean_matrix(mech: BranchingMechanism) -> np.ndarray:
    """``M[i, j] = E X^{i,j}_1``.

    The drift ``a[i, j]`` already carries the compensator of the small atoms,
    so those contribute nothing further; atoms with norm >= 1 add
    ``rate * x_i``. Gaussian and stable parts are centred.
    """
    d = mech.d
    m = np.empty((d, d))
    for j, col in enumerate(mech.columns):
        for i in range(d):
            m[i, j] = col.drift[i] + sum(a.rate * a.vector[i] for a in col.jumps
                                         if not a.compensated)
    return m


def is_irreducible(m) -> bool:
    """Strong connectivity of the graph with an edge i -> j when ``m[i, j] != 0``."""
    m = np.asarray(m)
    d = m.shape[0]
    if d == 1:
        return True
    adj = (m != 0.0)
    np.fill_diagonal(adj, False)

    def reach(a):
        seen = {0}
        stack = [0]
        while stack:
            k = stack.pop()
            for nxt in np.nonzero(a[k])[0]:
                if nxt not in seen:
                    seen.add(int(nxt))
                    stack.append(int(nxt))
        return len(seen) == d

    return reach(adj) and reach(adj.T)


def perron_root(m, tol: float = 1e-14, max_iter: int = 100_000) -> float:
    """Perron-Frobenius root of an essentially nonnegative matrix.

    Power iteration on ``M + sI >= 0`` with Collatz-Wielandt bounds as the stopping
    rule. Reducible input emits :class:`ReducibleWarning` and is handled by a
    dense eigenvalue solve instead.
    """
    m = np.asarray(m, dtype=np.float64)
    d = m.shape[0]
    if d == 1:
        return float(m[0, 0])
    off = m.copy()
    np.fill_diagonal(off, 0.0)
    if np.any(off < 0.0):
        raise ValueError("matrix is not essentially nonnegative")
    if not is_irreducible(m):
        warnings.warn("mean matrix is reducible; Perron root need not be simple",
                      ReducibleWarning, stacklevel=2)
        # Collatz-Wielandt bounds only bracket the root for irreducible input
        return float(np.max(np.linalg.eigvals(m).real))
    scale = max(1.0, float(np.max(np.abs(m))))
    shift = max(0.0, -float(np.min(np.diag(m)))) + scale
    a = m + shift * np.eye(d)
    x = np.ones(d)
    lo, hi = -np.inf, np.inf
    for _ in range(max_iter):
        y = a @ x
        pos = x > 0.0
        ratios = y[pos] / x[pos]
        lo, hi = ratios.min(), ratios.max()
        x = y / np.linalg.norm(y)
        if hi - lo <= tol * max(1.0, abs(hi)):
            break
    return float(0.5 * (lo + hi) - shift)


def criticality(rho: float, tol: float = 1e-12) -> str:
    if rho > tol:
        return "supercritical"
    if rho < -tol:
        return "subcritical"
    return "critical"


def find_Dphi_witness(mech: BranchingMechanism, kmin: int = -10, kmax: int = 60):
    """First ``s 1`` on the ladder ``s = 2**k`` with every ``phi_j(s 1) > 0``.

    Returns ``None`` when the ladder has no witness (nonemptiness unverified, not
    refuted).
    """
    ones = np.ones(mech.d)
    for k in range(kmin, kmax + 1):
        s = 2.0 ** k
        with np.errstate(over="raise", invalid="raise"):
            try:
                val = _phi.phi(s * ones, mech.params)
            except FloatingPointError:
                break
        if not np.all(np.isfinite(val)):
            break
        if np.all(val > 0.0):
            return s * ones
    return None


def make_neutral(d: int, base: LevyColumn, transfer: float = 0.0) -> BranchingMechanism:
    """d-type mechanism whose column sums all have the law of ``base``.

    ``base`` is a single-type column (1-vectors). Its drift and atoms are split
    evenly over the d rows; Gaussian and stable parts stay on the diagonal.
    ``transfer >= 0`` moves that much extra drift from the diagonal to each
    off-diagonal row, which keeps column sums unchanged and lets drift-free
    bases (critical ones, say) produce irreducible mechanisms.
    """
    if len(base.drift) != 1:
        raise MechanismError("neutral base must be a single-type column")
    if d < 1:
        raise MechanismError("d must be >= 1")
    if transfer < 0.0:
        raise MechanismError("transfer must be >= 0")
    if d == 1:
        return BranchingMechanism((base,), neutral_base=base)
    a = base.drift[0]
    atoms = []
    correction = 0.0
    for atom in base.jumps:
        x = atom.vector[0]
        split = JumpAtom(atom.rate, (x / d,) * d)
        # keep the column-sum exponent equal to the base one when the
        # compensation indicator changes with the norm
        correction += atom.rate * x * ((1.0 if split.compensated else 0.0)
                                       - (1.0 if atom.compensated else 0.0))
        atoms.append(split)
    share = (a + correction) / d
    columns = []
    for j in range(d):
        drift = [share + transfer] * d
        drift[j] = share - (d - 1) * transfer
        columns.append(LevyColumn(tuple(drift), base.gaussian, base.stable, tuple(atoms)))
    return BranchingMechanism(tuple(columns), neutral_base=base)


def neutral_exponent(base: LevyColumn, s: float) -> float:
    """Single-type exponent of ``base`` at ``s``."""
    return eval_phi(BranchingMechanism((base,)), np.array([s]))[0]


def column(drift: Sequence[float], gaussian=0.0, stable=None, jumps=()) -> LevyColumn:
    """Convenience constructor: ``stable`` may be an ``(alpha, scale)`` pair and
    ``jumps`` a list of ``(rate, vector)`` pairs."""
    if stable is not None and not isinstance(stable, StableComponent):
        stable = StableComponent(*stable)
    atoms = tuple(a if isinstance(a, JumpAtom) else JumpAtom(*a) for a in jumps)
    return LevyColumn(tuple(drift), gaussian, stable, atoms)
