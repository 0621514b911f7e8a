import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate as sp_integrate, stats

from sievebayes.core import QuadratureRule, integrate, stream
from sievebayes.densities import (CATALOG_NAMES, catalog_lookup, floor_beta,
                                  holder_seminorm_estimate, sample_iid)
from sievebayes.errors import DomainError, SamplerError, UnknownDensityError

UNIT = ["uniform", "quartic_c3", "holder(0.5)", "holder(1)", "lipschitz_tent", "smooth_bump"]
ALL = UNIT + ["normal", "normal_mixture"]


def _rule(f0):
    a, b = f0.quad_domain()
    if f0.on_unit_interval:
        # holder(beta) has a cusp at 1/2 and the tent a kink there; panels are
        # graded geometrically toward the cusp
        d = 0.5 * 2.0 ** -np.arange(0, 50)
        return QuadratureRule.piecewise(np.concatenate([[0.0, 0.5, 1.0], 0.5 - d, 0.5 + d]),
                                        order=8, sub_panels=4)
    return QuadratureRule(panel_count=4096, scheme="gauss", a=a, b=b, order=4)


@pytest.mark.parametrize("name", ALL)
def test_integrates_to_one(name):
    f0 = catalog_lookup(name)
    assert abs(integrate(f0, _rule(f0)) - 1.0) <= 1e-8


@pytest.mark.parametrize("name", ALL)
def test_cdf_invariants(name):
    f0 = catalog_lookup(name)
    lo, hi = f0.quad_domain()
    x = np.linspace(lo, hi, 4001)
    F = f0.cdf(x)
    assert np.all(np.diff(F) >= -1e-15)
    assert abs(f0.cdf(np.array([hi]))[0] - 1.0) <= 1e-10
    assert np.all(f0(x) >= 0)
    if f0.min_value > 0:
        assert np.all(f0(x) >= f0.min_value - 1e-12)


@pytest.mark.parametrize("name", ALL)
def test_cdf_derivative_matches_pdf(name):
    f0 = catalog_lookup(name)
    lo, hi = f0.quad_domain()
    # interior points away from the cusp at 1/2 of the holder family
    x = np.linspace(lo, hi, 97)[1:-1]
    x = x[np.abs(x - 0.5) > 0.02] if f0.on_unit_interval else x
    h = 1e-6
    fd = (f0.cdf(x + h) - f0.cdf(x - h)) / (2 * h)
    assert np.max(np.abs(fd - f0(x))) <= 1e-5


def test_uniform():
    f0 = catalog_lookup("uniform")
    x = np.linspace(0, 1, 11)
    assert np.all(f0(x) == 1.0)
    assert np.array_equal(f0.cdf(x), x)


def test_quartic_values():
    f0 = catalog_lookup("quartic_c3")
    assert f0(np.array([0.0]))[0] == pytest.approx(17 / 15, abs=1e-15)
    assert f0(np.array([1.0]))[0] == pytest.approx(0.8, abs=1e-15)
    assert f0.cdf(np.array([0.5]))[0] == pytest.approx(0.5 ** 5 / 5 - 0.5 ** 4 / 3 + 17 / 30,
                                                       abs=1e-15)
    assert f0.cdf(np.array([0.5]))[0] == pytest.approx(0.5520833, abs=1e-7)
    assert f0.beta == 3.0 and f0.bc_flags == (True, True)
    assert f0.f3_interval == (0.2, 0.4)
    x = np.linspace(0.2, 0.4, 101)
    assert np.all(np.abs(f0.d2(x)) >= 0.9 * 1.12)


def test_holder_family():
    f0 = catalog_lookup("holder(0.5)")
    assert f0.min_value > 0
    assert catalog_lookup("holder", beta=0.5).name == f0.name
    assert catalog_lookup("holder:0.5").name == f0.name
    with pytest.raises(DomainError):
        catalog_lookup("holder(1.5)")
    with pytest.raises(DomainError):
        catalog_lookup("holder(0)")


def test_unknown_name():
    with pytest.raises(UnknownDensityError):
        catalog_lookup("cauchy")
    assert "quartic_c3" in CATALOG_NAMES


def test_sample_empty():
    assert sample_iid(catalog_lookup("quartic_c3"), 0, stream(0)).size == 0
    with pytest.raises(DomainError):
        sample_iid(catalog_lookup("uniform"), -1, stream(0))


def test_uniform_sample_ks():
    n = 20_000
    x = sample_iid(catalog_lookup("uniform"), n, stream(1))
    assert stats.kstest(x, "uniform").statistic < 1.63 / math.sqrt(n)


@pytest.mark.parametrize("name", ["quartic_c3", "holder(0.5)", "lipschitz_tent", "normal_mixture"])
def test_sample_ks(name):
    f0 = catalog_lookup(name)
    n = 20_000
    x = sample_iid(f0, n, stream(2))
    assert stats.kstest(x, f0.cdf).statistic < 1.63 / math.sqrt(n)


def test_quartic_sample_mean():
    f0 = catalog_lookup("quartic_c3")
    mean, _ = sp_integrate.quad(lambda t: t * f0(np.array([t]))[0], 0, 1)
    x = sample_iid(f0, 50_000, stream(3))
    assert abs(x.mean() - mean) <= 4 * x.std() / math.sqrt(x.size)


def test_sampler_is_function_of_uniforms():
    f0 = catalog_lookup("quartic_c3")
    u = stream(4).random(50)
    assert np.array_equal(sample_iid(f0, 50, stream(4)), f0.inverse_cdf(u))
    assert np.max(np.abs(f0.cdf(f0.inverse_cdf(u)) - u)) <= 1e-12


def test_nonmonotone_cdf_raises():
    f0 = catalog_lookup("uniform")
    bad = type(f0)(name="bad", pdf=f0.pdf, cdf=lambda x: np.sin(6 * np.asarray(x)),
                   support=(0.0, 1.0), beta=1.0, seminorm=0.0, holder_const=1.0, min_value=0.0)
    with pytest.raises(SamplerError):
        sample_iid(bad, 10, stream(0))


def test_seminorm_estimates():
    assert holder_seminorm_estimate(catalog_lookup("uniform"), beta=0.7) == 0.0
    f0 = catalog_lookup("holder(0.5)")
    est = holder_seminorm_estimate(f0, np.linspace(0, 1, 4001))
    assert abs(est - f0.seminorm) <= 0.05 * f0.seminorm
    assert est <= 1.05 * f0.holder_const
    q = catalog_lookup("quartic_c3")
    # [f]_3 = sup |f'''| = sup |24x - 8| on [0, 1], attained at x = 1
    est = holder_seminorm_estimate(q, np.linspace(0, 1, 4001))
    assert est == pytest.approx(16.0, rel=0.01)
    assert est <= 1.05 * q.holder_const


@settings(max_examples=30, deadline=None)
@given(beta=st.floats(0.05, 1.0))
def test_holder_family_normalized_and_positive(beta):
    f0 = catalog_lookup("holder", beta=beta)
    assert abs(integrate(f0, _rule(f0)) - 1.0) <= 1e-8
    assert f0.min_value > 0
    assert abs(f0.cdf(np.array([1.0]))[0] - 1.0) <= 1e-12


def test_floor_beta():
    assert floor_beta(3.0) == 2 and floor_beta(0.5) == 0 and floor_beta(1.0) == 0
