import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from oracles import numeric_kl
from seqdamage.errors import DataError, ModelError, ModelIncompleteError
from seqdamage.graph import build_model
from seqdamage.models import (
    DistributionRegistry,
    GaussianModel,
    GeometricPrior,
    SensorDensities,
    active_set_log_density,
    fit_gaussian,
    gaussian_pair_for_kl,
    kl_divergence,
    log_density,
    nonempty_subsets,
    parse_subset_key,
    prior_mass,
    subset_key,
)
from seqdamage.topologies import chain4_config


def N1(mu, var):
    return GaussianModel([mu], [[var]])


def test_gaussian_validation():
    with pytest.raises(ModelError):
        GaussianModel([0.0, 0.0], [[1.0]])
    with pytest.raises(ModelError):
        GaussianModel([0.0, 0.0], [[1.0, 0.5], [0.4, 1.0]])
    with pytest.raises(ModelError):
        GaussianModel([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])
    g = GaussianModel.from_dict({"mean": [1.0, 2.0], "cov": [[2.0, 0.3], [0.3, 1.0]]})
    assert GaussianModel.from_dict(g.to_dict()).to_dict() == g.to_dict()


def test_fit_constant_samples_gives_ridge():
    g = fit_gaussian(np.tile([2.0, -1.0], (10, 1)))
    assert np.allclose(g.mean, [2.0, -1.0])
    assert np.allclose(g.cov, 1e-12 * np.eye(2))
    g = fit_gaussian(np.tile([2.0], (10, 1)), ridge=0.5)
    assert np.allclose(g.cov, [[0.5]])


def test_fit_standard_normal_moments():
    g = fit_gaussian(np.random.default_rng(0).standard_normal(100_000))
    assert abs(g.mean[0]) < 0.02
    assert abs(g.cov[0, 0] - 1) < 0.02


def test_fit_independent_coordinates():
    n = 20_000
    g = fit_gaussian(np.random.default_rng(1).standard_normal((n, 2)))
    assert abs(g.cov[0, 1]) < 3 / math.sqrt(n)


def test_fit_needs_enough_samples():
    with pytest.raises(DataError):
        fit_gaussian(np.zeros((2, 2)))
    with pytest.raises(DataError):
        fit_gaussian(np.zeros((5, 1)), ridge=-1.0)


def test_log_density_values():
    assert log_density(N1(0, 1), 0.0) == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-12)
    assert log_density(N1(0, 1), 3.0) == pytest.approx(stats.norm.logpdf(3.0), abs=1e-12)
    assert log_density(N1(0, 1), 3.0) == pytest.approx(-5.4189, abs=1e-4)
    std2 = GaussianModel([0, 0], np.eye(2))
    assert log_density(std2, [0, 0]) == pytest.approx(-math.log(2 * math.pi), abs=1e-12)
    batch = log_density(std2, np.zeros((3, 2)))
    assert batch.shape == (3,)
    with pytest.raises(DataError):
        log_density(std2, [0.0, 0.0, 0.0])


def test_log_density_matches_scipy_2d():
    m = GaussianModel([1.0, -0.5], [[2.0, 0.6], [0.6, 0.5]])
    x = np.random.default_rng(2).standard_normal((20, 2))
    ref = stats.multivariate_normal(m.mean, m.cov).logpdf(x)
    assert np.allclose(log_density(m, x), ref, atol=1e-12)


def test_density_integrates_to_one():
    m = N1(0.3, 1.7)
    val, _ = integrate.quad(lambda x: math.exp(log_density(m, x)), -40, 40)
    assert val == pytest.approx(1.0, abs=1e-4)
    m2 = GaussianModel([0.2, -0.1], [[1.0, 0.3], [0.3, 0.8]])
    val2, _ = integrate.dblquad(lambda y, x: math.exp(log_density(m2, [x, y])), -9, 9, -9, 9, epsabs=1e-8)
    assert val2 == pytest.approx(1.0, abs=1e-4)


def test_kl_examples():
    assert kl_divergence(N1(0, 1), N1(0, 1)) == 0.0
    assert kl_divergence(N1(1, 1), N1(0, 1)) == pytest.approx(0.5, abs=1e-12)
    assert kl_divergence(N1(0, 2), N1(0, 1)) == pytest.approx(0.5 * (2 - 1 + math.log(0.5)), abs=1e-12)
    assert kl_divergence(N1(0, 2), N1(0, 1)) == pytest.approx(0.1534, abs=1e-4)
    assert kl_divergence(N1(0, 1), N1(0, 2)) == pytest.approx(0.0966, abs=1e-4)
    with pytest.raises(ModelError):
        kl_divergence(N1(0, 1), GaussianModel([0, 0], np.eye(2)))


def test_kl_matches_quadrature_on_grid():
    mus = [-1.5, 0.0, 0.7, 2.0, 3.1]
    sds = [0.4, 0.8, 1.3, 2.2]
    for mu in mus:
        for sd in sds:
            closed = kl_divergence(N1(mu, sd**2), N1(0.2, 1.1**2))
            assert closed == pytest.approx(numeric_kl(mu, sd, 0.2, 1.1), abs=1e-6)


@settings(max_examples=50, deadline=None)
@given(
    mu=st.floats(-3, 3),
    a=st.floats(0.2, 2.0),
    b=st.floats(-0.9, 0.9),
    mu2=st.floats(-3, 3),
)
def test_kl_nonnegative(mu, a, b, mu2):
    f = GaussianModel([mu, 0.0], [[a, b * math.sqrt(a)], [b * math.sqrt(a), 1.0]])
    g = GaussianModel([mu2, 0.5], np.eye(2))
    assert kl_divergence(f, g) >= 0.0
    assert kl_divergence(f, f) < 1e-12


def test_geometric_prior():
    with pytest.raises(ModelError):
        GeometricPrior(0.0)
    with pytest.raises(ModelError):
        GeometricPrior(1.0)
    p = GeometricPrior(0.1)
    assert prior_mass(p, 1, 5) == pytest.approx(0.1)
    assert prior_mass(p, 3, 3) == pytest.approx(0.081)
    assert prior_mass(p, 6, 5) == pytest.approx(0.9**5)
    with pytest.raises(ModelError):
        prior_mass(p, 0, 5)
    with pytest.raises(ModelError):
        prior_mass(p, 7, 5)
    assert math.exp(p.log_mass(2, 3)) == pytest.approx(0.09 + 0.081)
    assert math.exp(p.log_mass(4)) == pytest.approx(0.9**3)


@pytest.mark.parametrize("N", [0, 1, 7, 100, 10_000])
@pytest.mark.parametrize("rho", [0.001, 0.05, 0.5])
def test_prior_mass_sums_to_one(N, rho):
    p = GeometricPrior(rho)
    total = math.fsum(prior_mass(p, n, N) for n in range(1, N + 2))
    assert abs(total - 1.0) < 1e-12


def test_subset_keys():
    assert subset_key({3, 1}) == "1,3"
    assert parse_subset_key("1,3") == frozenset({1, 3})
    assert len(list(nonempty_subsets((1, 2, 3)))) == 7
    with pytest.raises(ModelError):
        parse_subset_key("1,x")


def test_active_set_density_on_chain4():
    model = build_model(chain4_config())
    reg = model.registry
    d = reg[1]
    x = np.array([0.4])
    assert active_set_log_density(reg, 1, set(), x) == pytest.approx(log_density(d.pre, x))
    assert active_set_log_density(reg, 1, {1, 2}, x) == pytest.approx(log_density(d.post[frozenset({1, 2})], x))
    assert reg.active_set_log_density(1, {1}, x) == pytest.approx(log_density(d.post[frozenset({1})], x))


def test_missing_subset_is_named():
    sd = SensorDensities((1, 3), N1(0, 1), {frozenset({1}): N1(1, 1), frozenset({3}): N1(1, 1)})
    reg = DistributionRegistry({2: sd})
    assert reg.missing() == [(2, frozenset({1, 3}))]
    with pytest.raises(ModelIncompleteError, match=r"sensor 2, subset \{1,3\}"):
        reg.validate()
    with pytest.raises(ModelIncompleteError):
        active_set_log_density(reg, 2, {1, 3}, [0.0])


@pytest.mark.parametrize("kl,ratio", [(0.5, 1.0), (6.27, 1.0), (6.27, 0.5), (4.44, 0.5), (2.0, 1.5)])
def test_pair_for_kl(kl, ratio):
    g, f = gaussian_pair_for_kl(kl, ratio)
    assert kl_divergence(f, g) == pytest.approx(kl, rel=1e-10)
    assert f.cov[0, 0] == pytest.approx(ratio**2)
