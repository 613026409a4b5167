import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from mcsbp import (BranchingMechanism, SpaLFPath, column, hitting_time, make_neutral,
                   mc_extinction, mc_laplace, sample_spalf, simulate_mcsbp, solve_u,
                   verify_T_equals_integral)
from mcsbp.kernels import lamperti
from mcsbp.kernels.lamperti_np import lamperti_chunk_np
from mcsbp.simulate import ABSORBED, Z_FLOOR, terminal_states


def feller(a=1.0, q=2.0):
    return BranchingMechanism((column([a], gaussian=q),))


def drift_mech(a):
    a = np.asarray(a, dtype=float)
    return BranchingMechanism(tuple(column(a[:, j]) for j in range(a.shape[0])))


# --- field sampling ---------------------------------------------------------

def test_drift_only_field_is_deterministic():
    m = drift_mech([[-1.0, 0.5], [0.25, -2.0]])
    path = sample_spalf(m, 0.01, 1.0, seed=4)
    np.testing.assert_allclose(path.increments, np.broadcast_to(m.params[0] * 0.01,
                                                                 path.increments.shape))
    assert np.all(path.cumulative[0] == 0.0)


def test_gaussian_increment_variance():
    path = sample_spalf(BranchingMechanism((column([0.0], gaussian=2.0),)), 1e-3, 100.0, 1)
    x = path.increments[:, 0, 0]
    n = x.size
    assert n == 100_000
    lo, hi = stats.chi2.ppf([1e-4, 1 - 1e-4], n - 1)
    s2 = x.var(ddof=1)
    assert (n - 1) * s2 / hi <= 2e-3 <= (n - 1) * s2 / lo
    assert abs(s2 / 2e-3 - 1) < 0.05


def test_atom_counts_are_poisson():
    m = BranchingMechanism((column([1.0, 0.0], gaussian=1.0), column([0.0, -1.0],
                                                                   jumps=[(1.0, [0.0, 1.0])])))
    # |x| = 1 is not compensated, so the diagonal path is (Poisson count) - t
    path = sample_spalf(m, 1.0, 1e4, 2)
    total = path.cumulative[-1, 1, 1] + 1e4  # undo the drift of -1 per unit time
    assert abs(total - 1e4) < 4 * math.sqrt(1e4)


@given(st.integers(0, 2**32 - 1))
def test_offdiagonal_paths_nondecreasing(seed):
    m = BranchingMechanism((
        column([0.2, 0.7, 0.4], gaussian=1.0, jumps=[(3.0, [0.0, 0.2, 0.1])]),
        column([0.1, -0.5, 0.0], stable=(1.4, 1.0), jumps=[(1.0, [1.5, 0.0, 2.0])]),
        column([0.0, 0.3, 0.1], jumps=[(5.0, [0.0, 0.05, 0.3])])))
    path = sample_spalf(m, 0.05, 5.0, seed)
    inc = path.increments
    for i in range(3):
        for j in range(3):
            if i != j:
                assert np.all(inc[:, i, j] >= -1e-15)


def test_from_cumulative_requires_zero_start():
    with pytest.raises(ValueError):
        SpaLFPath.from_cumulative(np.ones((3, 1, 1)))


# --- Lamperti integration ---------------------------------------------------

def test_zero_start_is_absorbed():
    p = simulate_mcsbp(feller(), [0.0], 1e-3, 1.0, 0)
    assert p.absorbed_at == 0.0
    assert np.all(p.z_values == 0.0)


def test_drift_decay():
    p = simulate_mcsbp(drift_mech([[-1.0]]), [1.0], 1e-3, 2.0, 0)
    np.testing.assert_allclose(p.z_values[:, 0], np.exp(-p.times), atol=2e-3)


def test_matrix_exponential_oracle():
    from scipy.linalg import expm

    a = np.array([[-1.0, 0.5], [0.5, -1.0]])
    p = simulate_mcsbp(drift_mech(a), [1.0, 0.0], 1e-3, 2.0, 0)
    for k in (500, 1000, 2000):
        np.testing.assert_allclose(p.z_values[k], expm(p.times[k] * a) @ [1.0, 0.0], atol=2e-3)


@given(st.integers(0, 10_000))
def test_path_invariants(seed):
    m = BranchingMechanism((column([0.2, 0.3], gaussian=1.0), column([0.1, -0.2],
                                                                   stable=(1.5, 0.5))))
    p = simulate_mcsbp(m, [0.3, 0.2], 1e-2, 5.0, seed)
    assert np.all(p.z_values >= 0.0)
    assert np.all(np.diff(p.clocks, axis=0) >= 0.0)
    assert np.all(np.diff(p.knots, axis=0) >= 0.0)
    if p.absorbed_at is not None:
        assert np.all(p.z_values[-1] == 0.0)
        assert np.all(p.z_values[:-1].max(axis=1) > 0.0)


def test_path_csv(tmp_path):
    p = simulate_mcsbp(drift_mech([[-1.0, 0.5], [0.5, -1.0]]), [1.0, 0.0], 0.1, 0.3, 0)
    p.to_csv(tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "t,z1,z2,a1,a2"
    assert len(lines) == 5


# --- hitting times ----------------------------------------------------------

def field_from_lines(slopes, n, h=1.0):
    t = np.arange(n + 1) * h
    return SpaLFPath.from_cumulative(t[:, None, None] * np.asarray(slopes)[None], h)


def test_hitting_time_zero_start():
    ht = hitting_time(field_from_lines([[-1.0]], 10), [0.0])
    assert ht.converged and ht.t_r[0] == 0.0


def test_hitting_time_linear():
    ht = hitting_time(field_from_lines([[-1.0]], 40, 0.05), [1.0])
    assert ht.t_r[0] == pytest.approx(1.0)


def test_hitting_time_coupled():
    ht = hitting_time(field_from_lines([[-1.0, 0.5], [0.5, -1.0]], 60, 0.05), [1.0, 1.0])
    np.testing.assert_allclose(ht.t_r, [2.0, 2.0])


def test_hitting_time_censored():
    ht = hitting_time(field_from_lines([[-1.0]], 10, 0.05), [1.0])
    assert not ht.converged and np.isnan(ht.t_r[0]) and ht.index[0] == -1


def brute_force(cum, r):
    n1 = cum.shape[0]
    sols = []
    for a in range(n1):
        for b in range(n1):
            idx = (a, b)
            ok = all(r[i] + sum(cum[idx[j], i, j] for j in range(2)) <= 0.0 for i in range(2))
            if ok:
                sols.append(idx)
    return sols


@st.composite
def discrete_fields(draw):
    n = draw(st.integers(2, 19))
    steps = st.integers(-4, 2).map(lambda k: k / 4.0)
    pos = st.integers(0, 2).map(lambda k: k / 4.0)
    inc = np.zeros((n, 2, 2))
    for k in range(n):
        for i in range(2):
            for j in range(2):
                inc[k, i, j] = draw(steps if i == j else pos)
    r = [draw(st.integers(0, 8)) / 4.0 for _ in range(2)]
    cum = np.zeros((n + 1, 2, 2))
    cum[1:] = np.cumsum(inc, axis=0)
    return cum, np.array(r)


@given(discrete_fields())
def test_hitting_time_matches_brute_force(case):
    cum, r = case
    ht = hitting_time(SpaLFPath.from_cumulative(cum), r)
    sols = brute_force(cum, r)
    if not sols:
        assert not ht.converged
        return
    assert ht.converged
    assert tuple(ht.index) in sols
    for s in sols:
        assert ht.index[0] <= s[0] and ht.index[1] <= s[1]


def test_T_equals_integral_drift():
    res = verify_T_equals_integral(drift_mech([[-1.0]]), [1.0], 3, 1e-3, 30.0, 0)
    assert res["n_used"] == 3
    assert res["max_abs"] <= 10 * 1e-3


def test_T_equals_integral_halves_with_step():
    errs = [verify_T_equals_integral(feller(), [1.0], 40, dt, 20.0, 0)["mean_abs"]
            for dt in (2e-3, 1e-3)]
    assert errs[0] <= 10 * 2e-3 and errs[1] <= 10 * 1e-3
    assert errs[1] <= 0.6 * errs[0]


def test_T_equals_integral_zero_start():
    res = verify_T_equals_integral(feller(), [0.0], 3, 1e-3, 1.0, 0)
    assert res["n_used"] == 3 and res["max_abs"] == 0.0


# --- Monte Carlo ------------------------------------------------------------

def test_mc_zero_start_is_certain():
    est = mc_extinction(feller(), [0.0], 100, 1e-3, 1.0, 0)
    assert est.estimate == 1.0 and est.ci == (1.0, 1.0)


def test_mc_needs_enough_paths():
    with pytest.raises(ValueError):
        mc_extinction(feller(), [1.0], 10)


def test_mc_critical_feller_long_horizon():
    # P(Z_t = 0) = exp(-1/t) for phi = lam^2
    est = mc_extinction(feller(a=0.0), [1.0], 1000, 1e-3, 100.0, 3)
    assert est.estimate >= 0.98 - 3 * est.stderr


def test_mc_feller_small():
    est = mc_extinction(feller(), [1.0], 4000, 1e-3, 30.0, 11)
    assert abs(est.estimate - math.exp(-1)) <= 3 * est.stderr + 0.01


def test_statistics_independent_of_workers():
    m = BranchingMechanism((column([0.5, 0.25], gaussian=2.0), column([0.25, 0.5], gaussian=2.0)))
    docs = {w: mc_extinction(m, [0.5, 0.5], 700, 2e-3, 10.0, 5, workers=w).to_json()
            for w in (1, 3, 8)}
    assert docs[1] == docs[3] == docs[8]
    assert json.loads(docs[1])["seed"] == 5


def test_backends_agree():
    m = BranchingMechanism((
        column([0.5, 0.2], gaussian=1.0, jumps=[(2.0, [0.3, 0.05]), (0.5, [2.0, 0.0])]),
        column([0.1, 0.3], stable=(1.5, 1.0), jumps=[(2000.0, [0.0, 1e-4])])))
    paths = np.arange(40, dtype=np.int64)
    z0 = np.array([1.0, 0.5])
    args = (np.uint64(3), z0, m.params, m.killable, 1e-2, 1000, Z_FLOOR, 1e12)
    a = lamperti.lamperti_chunk(paths, *args)
    b = lamperti_chunk_np(paths, *args)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])
    fine = a[0] != 1
    np.testing.assert_allclose(a[2][fine], b[2][fine], rtol=1e-12, atol=1e-300)
    np.testing.assert_allclose(a[3][fine], b[3][fine], rtol=1e-12)


def test_record_kernel_matches_chunk_kernel():
    m = BranchingMechanism((column([0.5, 0.2], gaussian=1.0), column([0.1, 0.3], stable=(1.5, 1.0))))
    for q in range(5):
        p = simulate_mcsbp(m, [1.0, 0.5], 1e-2, 5.0, 9, path=q)
        st_, _, z, clocks = lamperti.lamperti_chunk(np.array([q]), np.uint64(9), np.array([1.0, 0.5]),
                                                    m.params, m.killable, 1e-2, 500, Z_FLOOR, 1e12)
        assert p.status == st_[0]
        np.testing.assert_allclose(p.z_values[-1], z[0], rtol=1e-12)
        np.testing.assert_allclose(p.clocks[-1], clocks[0], rtol=1e-12)


@pytest.mark.parametrize("mech,r,lam,t", [
    (feller(), [1.0], [2.0], 1.0),
    (BranchingMechanism((column([0.5, 0.3], stable=(1.5, 1.0)),
                         column([0.2, 0.4], stable=(1.5, 1.0)))), [0.5, 1.0], [1.0, 2.0], 0.5),
    (BranchingMechanism((column([0.2, 0.1], gaussian=1.0, jumps=[(1.0, [1.0, 0.5])]),
                         column([0.3, -0.5], jumps=[(2.0, [0.0, 1.5])]))), [1.0, 1.0], [0.5, 0.5],
     1.0),
])
def test_laplace_identity(mech, r, lam, t):
    est, err = mc_laplace(mech, r, lam, t, 20_000, 1e-3, seed=1)
    exact = math.exp(-np.dot(r, solve_u(mech, lam, times=[0.0, t], tol=1e-10).final))
    assert abs(est - exact) <= 4 * err + 0.005


def test_neutral_sum_matches_single_type():
    base = column([1.0], gaussian=2.0)
    neutral = make_neutral(2, base, transfer=0.25)
    t, n = 1.0, 20_000
    zsum = terminal_states(neutral, [0.5, 0.5], n, 1e-3, t, 7).sum(axis=1)
    single = terminal_states(BranchingMechanism((base,)), [1.0], n, 1e-3, t, 8)[:, 0]
    # phi = lam^2 - lam from r = 1: E Z_t = e^t, Var Z_t = 2 e^t (e^t - 1)
    mean, var = math.e, 2 * math.e * (math.e - 1)
    for x in (zsum, single):
        assert abs(x.mean() - mean) < 4 * math.sqrt(var / n)
        assert abs(x.var() / var - 1) < 0.1
