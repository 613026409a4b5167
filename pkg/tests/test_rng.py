import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import special, stats

from mcsbp.kernels import rng

SPLITMIX_MASK = (1 << 64) - 1


def splitmix_reference(z):
    # textbook SplitMix64 finaliser on Python ints
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & SPLITMIX_MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & SPLITMIX_MASK
    return z ^ (z >> 31)


def key_reference(seed, path, column):
    g = 0x9E3779B97F4A7C15
    k = splitmix_reference((seed + g) & SPLITMIX_MASK)
    k = splitmix_reference(k ^ ((path * 0xD1B54A32D192ED03) & SPLITMIX_MASK))
    return splitmix_reference((k + (column + 1) * g) & SPLITMIX_MASK)


def uniform_reference(key, ctr):
    z = splitmix_reference((key + (ctr + 1) * 0x9E3779B97F4A7C15) & SPLITMIX_MASK)
    return ((z >> 11) + 0.5) * 2.0 ** -53


@given(st.integers(0, 2**63 - 1), st.integers(0, 10**9), st.integers(0, 7),
       st.integers(0, 10**6))
def test_scalar_and_array_streams_match_reference(seed, path, column, ctr):
    key = int(rng.stream_key(np.uint64(seed), np.int64(path), np.int64(column)))
    assert key == key_reference(seed, path, column)
    u = float(rng.uniform(np.uint64(key), np.int64(ctr)))
    assert u == uniform_reference(key, ctr)
    keys = rng.stream_keys(seed, np.array([path], dtype=np.int64), column)
    assert int(keys[0]) == key
    assert rng.uniform_array(keys, np.array([ctr]))[0] == u


def test_uniforms_are_open_interval_and_uniform():
    keys = np.full(200_000, rng.stream_keys(11, np.array([3]), 0)[0], dtype=np.uint64)
    u = rng.uniform_array(keys, np.arange(keys.size))
    assert u.min() > 0.0 and u.max() < 1.0
    assert stats.kstest(u, "uniform").pvalue > 1e-3


@given(st.floats(1e-300, 1 - 1e-16))
def test_normal_ppf_matches_scipy(u):
    x = rng.normal_ppf(u)
    ref = special.ndtri(u)
    assert abs(x - ref) <= 1e-13 * max(1.0, abs(ref))


def test_normal_ppf_array_equals_scalar():
    u = np.linspace(1e-12, 1 - 1e-12, 1001)
    scalar = np.array([rng.normal_ppf(v) for v in u])
    np.testing.assert_array_equal(rng.normal_ppf_array(u), scalar)


@pytest.mark.parametrize("alpha", [1.2, 1.5, 1.8])
def test_stable_laplace_transform(alpha):
    # unit-scale variate times stable_scale(alpha, c, da) has E e^{-lam X} = e^{c da lam^alpha}
    n = 200_000
    key = rng.stream_keys(5, np.array([1]), 0)
    keys = np.repeat(key, n)
    u1 = rng.uniform_array(keys, 2 * np.arange(n))
    u2 = rng.uniform_array(keys, 2 * np.arange(n) + 1)
    c, da, lam = 0.7, 0.3, 0.8
    x = rng.stable_scale(alpha, c, da) * rng.stable_std_array(alpha, u1, u2)
    vals = np.exp(-lam * x)
    est = vals.mean()
    err = vals.std() / math.sqrt(n)
    assert abs(est - math.exp(c * da * lam**alpha)) < 5 * err


def test_stable_scalar_equals_array():
    key = rng.stream_keys(2, np.array([4]), 1)
    ks = np.uint64(key[0])
    xs = [rng.stable_std(1.5, ks, 2 * k)[0] for k in range(50)]
    keys = np.repeat(key, 50)
    arr = rng.stable_std_array(1.5, rng.uniform_array(keys, 2 * np.arange(50)),
                               rng.uniform_array(keys, 2 * np.arange(50) + 1))
    np.testing.assert_allclose(xs, arr, rtol=1e-13)


@pytest.mark.parametrize("mu", [0.01, 0.7, 4.0, 9.9, 10.0, 37.5, 1000.0])
def test_poisson_moments(mu):
    key = np.uint64(rng.stream_keys(9, np.array([0]), 0)[0])
    ctr = 0
    draws = np.empty(20_000)
    for k in range(draws.size):
        draws[k], ctr = rng.poisson(mu, key, ctr)
    assert np.all(draws == np.floor(draws)) and draws.min() >= 0
    sem = math.sqrt(mu / draws.size)
    assert abs(draws.mean() - mu) < 5 * sem
    # relative sd of the sample variance is about sqrt(2/n + 1/(n mu))
    assert abs(draws.var() / mu - 1.0) < 5 * math.sqrt((2 + 1 / mu) / draws.size)


def test_poisson_pmf_small_mean():
    key = np.uint64(rng.stream_keys(1, np.array([0]), 0)[0])
    ctr = 0
    draws = np.empty(50_000, dtype=int)
    for k in range(draws.size):
        v, ctr = rng.poisson(2.0, key, ctr)
        draws[k] = int(v)
    counts = np.bincount(draws, minlength=12)[:8]
    expected = stats.poisson.pmf(np.arange(8), 2.0) * draws.size
    chi2 = ((counts - expected) ** 2 / expected).sum()
    assert chi2 < stats.chi2.ppf(0.999, 7)
