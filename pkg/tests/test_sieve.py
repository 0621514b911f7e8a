import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

import sievebayes.sieve as sieve
from sievebayes.basis import BinPartition, l1_rule
from sievebayes.core import integrate, stream
from sievebayes.densities import catalog_lookup, sample_iid
from sievebayes.errors import DegenerateMarginalError, DomainError, PreconditionError
from sievebayes.sieve import (DirichletSpec, ModelSizePrior, SievePrior, histogram_log_marginal,
                              kl_ball_prior_mass, l1_risk_study, mc_log_marginal, posterior,
                              sample_prior_density)


# ---------------------------------------------------------------------------
# brute-force oracle: integrate likelihood x Dirichlet density over a simplex grid
# ---------------------------------------------------------------------------

def simplex_grid(k, N):
    """Cell centroids and cell areas of a regular triangulation of the simplex."""
    if k == 1:
        return np.ones((1, 1)), np.ones(1)
    if k == 2:
        t = (np.arange(N) + 0.5) / N
        return np.column_stack([t, 1 - t]), np.full(N, 1.0 / N)
    pts = []
    for i in range(N):
        for j in range(N - i):
            pts.append(((i + 1 / 3) / N, (j + 1 / 3) / N))
            if i + j < N - 1:
                pts.append(((i + 2 / 3) / N, (j + 2 / 3) / N))
    p = np.asarray(pts)
    w = np.column_stack([p, 1 - p.sum(axis=1)])
    return w, np.full(len(w), 0.5 / N ** 2)


def brute_force(data, k_max, m0, rate, N=600):
    post, means = [], []
    for k in range(1, k_max + 1):
        W, area = simplex_grid(k, N)
        alpha = np.full(k, m0 / k)
        if k == 1:
            dens = np.ones(1)
        else:
            dens = np.exp((alpha - 1) @ np.log(W).T - (np.sum([math.lgamma(a) for a in alpha])
                                                      - math.lgamma(m0)))
        counts = BinPartition(k).counts(data)
        lik = np.exp(np.log(k * W) @ counts)
        mass = area * dens * lik
        marg = mass.sum()
        post.append(math.exp(-rate * k) * marg)
        means.append(mass @ W / marg)
    post = np.asarray(post)
    return post / post.sum(), means


@pytest.mark.parametrize("seed", range(6))
def test_histogram_posterior_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 6))
    data = rng.random(n)
    # m0 = 3 keeps every alpha_{j,k} >= 1, so the Dirichlet densities are
    # bounded and the centroid rule converges at O(h^2)
    prior = SievePrior(ModelSizePrior("geometric", 0.7, 3), DirichletSpec(3.0))
    res = posterior(data, prior, "histogram")
    bp, bm = brute_force(data, 3, 3.0, 0.7)
    assert np.max(np.abs(res.k_posterior - bp)) <= 1e-3
    for a, b in zip(res.mean_weights, bm):
        assert np.max(np.abs(a - b)) <= 1e-3


# ---------------------------------------------------------------------------
# model-size prior and Dirichlet specification
# ---------------------------------------------------------------------------

def test_model_size_prior_normalized():
    for kind in ("geometric", "superexp"):
        p = ModelSizePrior(kind, 0.8, 40)
        assert abs(p.probs().sum() - 1.0) <= 1e-12
        assert np.all(np.diff(p.probs()) < 0)


def test_default_truncation_bound():
    assert ModelSizePrior().truncation_bound() < 1e-20


def test_model_size_prior_errors():
    with pytest.raises(DomainError):
        ModelSizePrior("poisson")
    with pytest.raises(DomainError):
        ModelSizePrior(rate=0.0)
    with pytest.raises(DomainError):
        ModelSizePrior(k_max=0)
    with pytest.raises(DomainError):
        DirichletSpec(m0=0.0)


def test_k_frequencies_match_rho():
    p = ModelSizePrior("geometric", 1.0, 30)
    draws = p.sample(stream(11), size=20_000)
    freq = np.bincount(draws, minlength=31)[1:] / draws.size
    se = np.sqrt(p.probs() * (1 - p.probs()) / draws.size)
    assert np.all(np.abs(freq - p.probs()) <= 4 * se + 1e-12)


def test_alphas():
    assert DirichletSpec(1.0).alphas(4).tolist() == [0.25] * 4
    spec = DirichletSpec(2.0, base_cdf=lambda x: x ** 2)
    a = spec.alphas(2)
    assert a.sum() == pytest.approx(2.0) and a[0] == pytest.approx(0.5)


@settings(max_examples=25, deadline=None)
@given(m0=st.floats(0.01, 50), k=st.integers(1, 64))
def test_alphas_positive_and_sum_to_m0(m0, k):
    a = DirichletSpec(m0).alphas(k)
    assert np.all(a > 0) and abs(a.sum() - m0) <= 1e-12 * max(1, m0)


def test_k_max_one_gives_uniform():
    prior = SievePrior(ModelSizePrior(k_max=1))
    for kind in ("histogram", "polygon", "bernstein"):
        k, w, dens = sample_prior_density(prior, kind, stream(0))
        assert k == 1 and w.tolist() == [1.0]
        assert np.allclose(dens(np.linspace(0, 1, 9)), 1.0)
    res = posterior([0.2, 0.9], prior, "histogram")
    assert res.k_posterior.tolist() == [1.0]
    assert np.allclose(res.bayes_density(np.linspace(0, 1, 9)), 1.0)


# ---------------------------------------------------------------------------
# marginals
# ---------------------------------------------------------------------------

def test_log_marginal_examples():
    assert histogram_log_marginal(1, [0.1, 0.3, 0.9]) == pytest.approx(0.0, abs=1e-14)
    assert histogram_log_marginal(2, [0.1, 0.2], DirichletSpec(2.0)) == pytest.approx(
        math.log(4 / 3), abs=1e-14)
    for k in (1, 2, 9):
        assert histogram_log_marginal(k, []) == 0.0


def test_mc_marginal_agrees_with_conjugate():
    data = np.array([0.1, 0.15, 0.4, 0.8, 0.82])
    spec = DirichletSpec(1.0)
    for k in (2, 4):
        est = mc_log_marginal("histogram", k, data, spec, draws=200_000, rng=stream(k))
        exact = histogram_log_marginal(k, data, spec)
        assert abs(est.log_marginal - exact) <= 3 * est.stderr


def test_mc_marginal_empty_and_polygon_symmetry():
    assert mc_log_marginal("polygon", 3, [], draws=100).log_marginal == 0.0
    # p_w(1/2) = 4 (w1 + w2) / 4 = 1 for every w when k = 2
    est = mc_log_marginal("polygon", 2, [0.5], draws=1000, rng=stream(0))
    assert est.log_marginal == pytest.approx(0.0, abs=1e-12)


def test_mc_marginal_precondition_and_degenerate(monkeypatch):
    with pytest.raises(PreconditionError):
        mc_log_marginal("histogram", 2, [0.5], draws=99)
    monkeypatch.setattr(sieve, "sample_dirichlet",
                        lambda a, rng, size=None: np.tile([1.0, 0.0], (size, 1)))
    with pytest.raises(DegenerateMarginalError):
        mc_log_marginal("histogram", 2, [0.9], draws=100, rng=stream(0))


# ---------------------------------------------------------------------------
# posterior
# ---------------------------------------------------------------------------

def test_conjugate_mean_weights():
    prior = SievePrior(ModelSizePrior(k_max=2), DirichletSpec(2.0))
    res = posterior([0.1, 0.3], prior, "histogram")
    assert np.allclose(res.mean_weights[1], [0.75, 0.25], atol=1e-15)


def test_flat_rho_posterior_over_k():
    # rho is flat over {1, 2} up to 1e-12; marginals are 1 and 4/3
    prior = SievePrior(ModelSizePrior("geometric", 1e-12, 2), DirichletSpec(2.0))
    res = posterior([0.1, 0.3], prior, "histogram")
    assert np.allclose(res.k_posterior, [3 / 7, 4 / 7], atol=1e-9)
    assert res.map_k == 2


def test_map_k_ties_break_to_smallest():
    res = sieve.PosteriorSummary("histogram", np.array([1, 2, 3]), np.array([0.4, 0.4, 0.2]),
                                 [], np.zeros(3), None)
    assert res.map_k == 1


def test_empty_data_rejected():
    with pytest.raises(PreconditionError):
        posterior([], SievePrior(), "histogram")
    with pytest.raises(DomainError):
        posterior([0.5, 1.2], SievePrior(), "histogram")


@pytest.mark.parametrize("kind", ["histogram", "polygon", "bernstein"])
def test_bayes_density_is_a_density(kind):
    f0 = catalog_lookup("quartic_c3")
    x = sample_iid(f0, 60, stream(1))
    prior = SievePrior(ModelSizePrior(k_max=12))
    res = posterior(x, prior, kind, stream(2), draws=500)
    assert abs(res.k_posterior.sum() - 1.0) <= 1e-12
    dens = res.bayes_density
    rule = l1_rule(kind, 1, extra=dens.breakpoints(), sub_panels=64)
    assert abs(integrate(dens, rule) - 1.0) <= 1e-8
    assert np.all(dens(np.linspace(0, 1, 1001)) >= 0)
    if kind != "histogram":
        assert "ess" in res.diagnostics and "low_ess_k" in res.diagnostics


def test_posterior_deterministic_given_stream():
    x = sample_iid(catalog_lookup("quartic_c3"), 30, stream(5))
    prior = SievePrior(ModelSizePrior(k_max=6))
    a = posterior(x, prior, "polygon", stream(9), draws=300)
    b = posterior(x, prior, "polygon", stream(9), draws=300)
    assert np.array_equal(a.k_posterior, b.k_posterior)


def test_posterior_calibrated_on_prior_data():
    prior = SievePrior(ModelSizePrior("geometric", 0.5, 6), DirichletSpec(1.0))
    rho = prior.size.probs()
    rng = stream(21)
    post_true, prior_true = [], []
    for _ in range(300):
        k, w, _ = sample_prior_density(prior, "histogram", rng)
        j = rng.choice(k, size=40, p=w)
        x = (j + rng.random(40)) / k
        res = posterior(x, prior, "histogram")
        post_true.append(res.k_posterior[k - 1])
        prior_true.append(rho[k - 1])
    assert np.mean(post_true) >= np.mean(prior_true)


# ---------------------------------------------------------------------------
# studies
# ---------------------------------------------------------------------------

def test_risk_study_uniform_fast_contraction():
    res = l1_risk_study(catalog_lookup("uniform"), SievePrior(ModelSizePrior(k_max=32)),
                        "histogram", n_list=(100, 200, 400, 800, 1600), reps=10, seed=1)
    assert np.all(np.diff(res.estimate) < 0)
    assert res.fit.slope <= -0.4


def test_risk_study_preconditions():
    f0 = catalog_lookup("uniform")
    with pytest.raises(PreconditionError):
        l1_risk_study(f0, reps=0)
    with pytest.raises(PreconditionError):
        l1_risk_study(f0, n_list=(200, 100), reps=10)


def test_risk_study_reproducible_and_thread_independent():
    f0 = catalog_lookup("holder(1)")
    prior = SievePrior(ModelSizePrior(k_max=16))
    a = l1_risk_study(f0, prior, n_list=(50, 100), reps=10, seed=3, threads=1)
    b = l1_risk_study(f0, prior, n_list=(50, 100), reps=10, seed=3, threads=3)
    assert np.array_equal(a.estimate, b.estimate)


def test_kl_ball_mass():
    f0 = catalog_lookup("uniform")
    prior = SievePrior(ModelSizePrior(k_max=8))
    eps = np.array([2.0, 0.5, 0.2, 0.05, 0.001])
    mass = kl_ball_prior_mass(f0, eps, prior, draws=300, rng=stream(4))
    assert mass[0] > 0
    assert np.all(np.diff(mass) <= 0)
    assert kl_ball_prior_mass(f0, 2.0, prior, draws=100, rng=stream(4)) > 0
    with pytest.raises(DomainError):
        kl_ball_prior_mass(f0, 0.0, prior)
