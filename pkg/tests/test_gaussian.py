import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special, stats

from sievebayes.core import QuadratureRule, integrate, stream
from sievebayes.densities import TargetDensity, catalog_lookup, sample_iid
from sievebayes.errors import DomainError, PreconditionError, SolverError, StudyError
from sievebayes.gaussian import (GaussianMixture, GaussianSievePrior, KLObjective,
                                 contraction_study, default_location_grid, fit_model,
                                 kl_of_mixture, kl_project_weights, mixture_eval, posterior,
                                 sample_prior)


def normal_target(var):
    s = math.sqrt(var)
    return TargetDensity(name=f"N(0,{var:g})",
                         pdf=lambda x: stats.norm.pdf(np.asarray(x, dtype=float), scale=s),
                         cdf=lambda x: stats.norm.cdf(np.asarray(x, dtype=float), scale=s),
                         support=(-math.inf, math.inf), beta=math.inf, seminorm=math.nan,
                         holder_const=math.nan, min_value=0.0, reciprocal_integrable=False,
                         ppf=lambda u: s * special.ndtri(u))


# ---------------------------------------------------------------------------
# mixtures and prior
# ---------------------------------------------------------------------------

def test_mixture_values():
    assert mixture_eval(GaussianMixture([0.0], [1.0], 1.0), 0.0)[0] == pytest.approx(
        0.3989423, abs=1e-7)
    gm = GaussianMixture([-1.0, 1.0], [0.5, 0.5], 1.0)
    assert gm(0.0)[0] == pytest.approx(0.2419707, abs=1e-7)
    x = np.linspace(-4, 4, 33)
    assert np.allclose(GaussianMixture([0.3, 2.0], [1.0, 0.0], 0.7)(x),
                       stats.norm.pdf(x, 0.3, 0.7), atol=1e-15)


def test_mixture_errors():
    with pytest.raises(DomainError):
        GaussianMixture([0.0], [1.0], 0.0)
    with pytest.raises(DomainError):
        GaussianMixture([0.0, 1.0], [0.7, 0.7], 1.0)
    with pytest.raises(DomainError):
        GaussianSievePrior(delta=2.5)
    with pytest.raises(DomainError):
        GaussianSievePrior(b=0.0)


def test_prior_draws_are_densities():
    rule = QuadratureRule(panel_count=8000, scheme="gauss", a=-20.0, b=20.0, order=4)
    rng = stream(0)
    checked = 0
    for _ in range(60):
        gm = sample_prior(GaussianSievePrior(), rng)
        if gm.sigma < 0.05 or np.max(np.abs(gm.locations)) > 20 - 10 * gm.sigma:
            continue
        assert abs(integrate(gm, rule) - 1.0) <= 1e-8
        checked += 1
    assert checked >= 40


def test_prior_component_laws():
    prior = GaussianSievePrior(b=0.5, delta=1.5, nu=3.0, lam=2.0)
    rng = stream(1)
    th = prior.sample_locations(rng, 20_000)
    loc_law = stats.gennorm(1.5, scale=0.5 ** (-1 / 1.5))
    assert stats.kstest(th, loc_law.cdf).pvalue > 0.001
    assert np.allclose(prior.location_logpdf(th[:50]), loc_law.logpdf(th[:50]), atol=1e-12)
    s = prior.sample_sigma(rng, 20_000)
    assert stats.kstest(s, stats.invgamma(3.0, scale=2.0).cdf).pvalue > 0.001
    assert abs(np.exp(prior.log_rho()).sum() - 1) <= 1e-12


# ---------------------------------------------------------------------------
# posterior
# ---------------------------------------------------------------------------

def brute_force_log_marginal_k1(prior, x):
    """Grid integral over (theta, log sigma) of likelihood x prior for k = 1."""
    th = np.linspace(-8, 8, 1601)
    ls = np.linspace(math.log(0.05), math.log(20), 1201)
    s = np.exp(ls)
    T, S = np.meshgrid(th, s, indexing="ij")
    ll = np.zeros_like(T)
    for xi in x:
        ll += stats.norm.logpdf(xi, T, S)
    lp = prior.location_logpdf(T) + prior.sigma_logpdf(S) + np.log(S)
    v = ll + lp
    top = v.max()
    return float(top + math.log(np.exp(v - top).sum() * (th[1] - th[0]) * (ls[1] - ls[0])))


def test_k1_marginal_matches_grid_integral():
    prior = GaussianSievePrior(k_max=1)
    x = sample_iid(catalog_lookup("normal"), 25, stream(2))
    fit = fit_model(prior, 1, x, 4000, stream(3))
    assert abs(fit.log_marginal - brute_force_log_marginal_k1(prior, x)) <= 0.05


def test_posterior_prefers_small_k_for_normal_data():
    x = sample_iid(catalog_lookup("normal"), 150, stream(4))
    res = posterior(x, GaussianSievePrior(), 1000, stream(5))
    assert res.map_k <= 2
    assert abs(res.k_posterior.sum() - 1) <= 1e-12


def test_no_data_gives_prior():
    prior = GaussianSievePrior(k_max=3)
    res = posterior([], prior, 2000, stream(6))
    assert np.allclose(res.k_posterior, np.exp(prior.log_rho()), atol=1e-14)
    # prior predictive versus a direct Monte-Carlo average of prior draws
    rng = stream(7)
    grid = np.array([-1.0, 0.0, 1.5])
    direct = np.mean([sample_prior(prior, rng)(grid) for _ in range(20_000)], axis=0)
    assert np.allclose(res.predictive(grid), direct, rtol=0.05)


def test_posterior_reproducible_and_preconditions():
    x = sample_iid(catalog_lookup("normal"), 20, stream(8))
    a = posterior(x, GaussianSievePrior(k_max=2), 500, stream(9))
    b = posterior(x, GaussianSievePrior(k_max=2), 500, stream(9))
    assert np.array_equal(a.k_posterior, b.k_posterior)
    assert a.status in ("ok", "unreliable")
    with pytest.raises(PreconditionError):
        posterior(x, draws=100)
    with pytest.raises(DomainError):
        posterior([0.0, np.nan])


# ---------------------------------------------------------------------------
# KL projection
# ---------------------------------------------------------------------------

def test_single_point_grid_exact():
    res = kl_project_weights(catalog_lookup("normal"), 1.0, location_grid=[0.0])
    assert res.weights.tolist() == [1.0]
    assert res.kl <= 1e-10


def test_projection_beats_single_component():
    sigma = 0.5
    f0 = normal_target(1 + sigma ** 2)
    res = kl_project_weights(f0, sigma, location_grid=np.arange(-6, 6.001, sigma / 2))
    single = kl_of_mixture(f0, GaussianMixture([0.0], [1.0], sigma))[0]
    assert res.kl <= 1e-3 * single


def test_kl_nonincreasing_as_sigma_halves():
    f0 = catalog_lookup("normal_mixture")
    kls = [kl_project_weights(f0, s).kl for s in (1.0, 0.5, 0.25)]
    assert kls[1] <= kls[0] + 1e-10 and kls[2] <= kls[1] + 1e-10


def test_projection_bounds_and_history():
    f0 = catalog_lookup("normal_mixture")
    res = kl_project_weights(f0, 0.5)
    obj = KLObjective(f0, 0.5, default_location_grid(0.5))
    k = obj.grid.size
    assert res.kl <= obj.value(np.full(k, 1 / k))
    assert np.all(np.diff(res.history) <= 1e-12)
    assert abs(res.weights.sum() - 1) <= 1e-12 and np.all(res.weights >= 0)
    assert res.bound <= 1e-10 + 1e-8 * res.kl


def test_projection_cap_raises():
    with pytest.raises(SolverError) as exc:
        kl_project_weights(catalog_lookup("normal_mixture"), 0.25, iterations=1)
    assert "gradient_norm" in exc.value.certificate


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_kl_gradient_matches_finite_differences(seed):
    f0 = catalog_lookup("normal_mixture")
    obj = KLObjective(f0, 0.5, np.linspace(-3, 3, 9))
    w = np.random.default_rng(seed).dirichlet(np.ones(9))
    g = obj.gradient(w)
    h = 1e-6
    fd = np.array([(obj.value(w + h * e) - obj.value(w - h * e)) / (2 * h) for e in np.eye(9)])
    assert np.max(np.abs(fd - g)) <= 1e-5


def test_location_grid():
    g = default_location_grid(1.0)
    assert g[0] == -4.0 and g[-1] == 4.0 and np.allclose(np.diff(g), 0.5)
    g = default_location_grid(0.0625)
    assert g[-1] <= 8.0 and np.allclose(np.diff(g), 0.03125)
    with pytest.raises(DomainError):
        default_location_grid(0.0)


# ---------------------------------------------------------------------------
# contraction study
# ---------------------------------------------------------------------------

def test_contraction_preconditions():
    f0 = catalog_lookup("normal")
    with pytest.raises(StudyError):
        contraction_study(f0, n_list=(50,), reps=10)
    with pytest.raises(PreconditionError):
        contraction_study(f0, n_list=(20, 40), reps=5)
    with pytest.raises(PreconditionError):
        contraction_study(f0, n_list=(100, 1000), reps=10)


def test_contraction_reproducible():
    f0 = catalog_lookup("normal")
    prior = GaussianSievePrior(k_max=2)
    a = contraction_study(f0, (10, 40), reps=10, seed=4, threads=1, prior=prior, draws=500)
    b = contraction_study(f0, (10, 40), reps=10, seed=4, threads=2, prior=prior, draws=500)
    assert np.array_equal(a.estimate, b.estimate)
    assert a.fit.slope == b.fit.slope
