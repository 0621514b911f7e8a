"""The numba and numpy kernel variants must agree on the same inputs."""
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sievebayes import kernels
from sievebayes._accel import HAVE_NUMBA

needs_numba = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")


@needs_numba
@settings(max_examples=50, deadline=None)
@given(k=st.integers(1, 600), seed=st.integers(0, 10**6))
def test_bin_index(k, seed):
    x = np.random.default_rng(seed).random(300)
    x = np.concatenate([x, np.arange(k + 1) / k])
    assert np.array_equal(kernels.bin_index_np(x, k), kernels.bin_index_nb(x, k))


@needs_numba
@settings(max_examples=50, deadline=None)
@given(k=st.integers(1, 600), seed=st.integers(0, 10**6))
def test_polygon_stencil(k, seed):
    x = np.random.default_rng(seed).random(300)
    x = np.concatenate([x, (np.arange(k) + 0.5) / k, [0.0, 1.0]])
    a, b = kernels.polygon_stencil_np(x, k), kernels.polygon_stencil_nb(x, k)
    # index pairs may differ where a coefficient is zero; compare the stencil action
    w = np.random.default_rng(seed + 1).random(k + 1)
    va = a[2] * w[a[0]] + a[3] * w[a[1]]
    vb = b[2] * w[b[0]] + b[3] * w[b[1]]
    assert np.allclose(va, vb, rtol=1e-13, atol=1e-12)


@needs_numba
@settings(max_examples=50, deadline=None)
@given(v=st.lists(st.floats(-10, 10), min_size=1, max_size=60))
def test_project_simplex(v):
    v = np.asarray(v)
    a, b = kernels.project_simplex_np(v), kernels.project_simplex_nb(v)
    assert np.allclose(a, b, atol=1e-12)
    assert abs(a.sum() - 1.0) <= 1e-12 and np.all(a >= 0)


@needs_numba
@settings(max_examples=20, deadline=None)
@given(k=st.integers(1, 5), m=st.integers(1, 40), n=st.integers(1, 60), seed=st.integers(0, 10**6))
def test_gauss_mix_kernels(k, m, n, seed):
    rng = np.random.default_rng(seed)
    theta = rng.normal(size=(m, k))
    w = rng.dirichlet(np.ones(k), size=m)
    sigma = rng.uniform(0.2, 2.0, size=m)
    x = rng.normal(size=n)
    a = kernels.gauss_mix_loglik_np(theta, np.log(w), sigma, x)
    b = kernels.gauss_mix_loglik_nb(theta, np.log(w), sigma, x)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-10)
    om = rng.dirichlet(np.ones(m))
    a = kernels.gauss_mix_average_np(theta, w, sigma, om, x)
    b = kernels.gauss_mix_average_nb(theta, w, sigma, om, x)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-15)


def _simplex_state(k, m, seed):
    """Dual L1 LP of a random instance in the kernel's tableau form."""
    rng = np.random.default_rng(seed)
    BD = rng.random((k, m))
    f = rng.random(m)
    big = 1.0 + BD.sum(axis=1).max()
    n_col = m + 1 + k
    T = np.zeros((k, n_col))
    T[:, :m] = BD
    T[:, m] = 1.0
    T[:, m + 1:] = np.eye(k)
    d = np.zeros(n_col)
    d[:m] = -f
    d[m] = -1.0
    lo = np.concatenate([np.full(m, -1.0), [-big], np.zeros(k)])
    hi = np.concatenate([np.full(m, 1.0), [big], np.full(k, np.inf)])
    basis = np.arange(m + 1, n_col, dtype=np.int64)
    is_basic = np.zeros(n_col, dtype=np.bool_)
    is_basic[basis] = True
    at_upper = np.zeros(n_col, dtype=np.bool_)
    xb = BD.sum(axis=1) + big
    return [T, d, lo, hi, basis, is_basic, at_upper, xb]


@needs_numba
@pytest.mark.parametrize("bland", [False, True])
@pytest.mark.parametrize("seed", range(5))
def test_bounded_simplex(seed, bland):
    s_np = _simplex_state(4, 30, seed)
    s_nb = [a.copy() for a in s_np]
    r_np = kernels.bounded_simplex_np(*s_np, 10_000, 1e-10, bland)
    r_nb = kernels.bounded_simplex_nb(*s_nb, 10_000, 1e-10, bland)
    assert r_np[0] == r_nb[0] == kernels.LP_OPTIMAL
    assert r_np[1] == r_nb[1]
    assert np.array_equal(s_np[4], s_nb[4])
    assert np.allclose(s_np[1], s_nb[1], atol=1e-10)


def test_env_var_selects_numpy_backend():
    env = dict(os.environ, SIEVEBAYES_DISABLE_NUMBA="1")
    code = ("from sievebayes import kernels; from sievebayes._accel import backend;"
            "print(backend(), kernels.bin_index is kernels.bin_index_np)")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True).stdout.split()
    assert out == ["numpy", "True"]


def test_public_names_bound_to_selected_backend():
    from sievebayes._accel import USE_NUMBA
    suffix = "_nb" if USE_NUMBA else "_np"
    for name in ("bin_index", "polygon_stencil", "project_simplex", "gauss_mix_loglik",
                 "gauss_mix_average", "bounded_simplex"):
        assert getattr(kernels, name) is getattr(kernels, name + suffix)
