import math

import numpy as np
import pytest
from scipy.integrate import quad

from dynlagrange.errors import DomainError, MarketError
from dynlagrange.market import MarketModel, kernel_arrays, path_rng, sample_kernel_paths


def test_theta(market):
    assert market.theta == pytest.approx([0.12])
    assert market.theta_norm == pytest.approx(0.12)
    assert market.kernel_drift == pytest.approx(0.05 + 0.0072)


@pytest.mark.parametrize("kw", [
    dict(r=0.05, mu=[0.1, 0.1], sigma=[[0.3]], T=1.0),
    dict(r=0.05, mu=[0.1, 0.1], sigma=[[0.3, 0.3], [0.3, 0.3]], T=1.0),
    dict(r=0.05, mu=[0.05], sigma=[[0.3]], T=1.0),
    dict(r=0.05, mu=[0.1], sigma=[[0.3]], T=0.0),
    dict(r=0.05, mu=[float("nan")], sigma=[[0.3]], T=1.0),
])
def test_invalid_markets_rejected(kw):
    with pytest.raises(MarketError):
        MarketModel(**kw)


def test_dict_round_trip(market):
    again = MarketModel.from_dict(market.to_dict())
    assert again.to_dict() == market.to_dict()


def test_kernel_density_and_cdf(market):
    total, _ = quad(lambda z: market.z_pdf(2.0, z), 0, np.inf, limit=200)
    assert total == pytest.approx(1.0, abs=1e-9)
    mean, _ = quad(lambda z: z * market.z_pdf(2.0, z), 0, np.inf, limit=200)
    assert mean == pytest.approx(market.kernel_mean(2.0, 10.0), rel=1e-8)
    part, _ = quad(lambda z: market.z_pdf(2.0, z), 0, 0.7)
    assert market.z_cdf(2.0, 0.7) == pytest.approx(part, rel=1e-8)
    assert market.z_cdf(2.0, 0.0) == 0.0 and market.z_pdf(2.0, -1.0) == 0.0


def test_kernel_mean_and_domain(market):
    assert market.kernel_mean(0, 10) == pytest.approx(math.exp(-0.5))
    with pytest.raises(DomainError):
        market.kernel_mean(5, 2)
    with pytest.raises(DomainError):
        market.z_pdf(10.0, 1.0)


def test_sampled_kernel_moments(market):
    times = np.linspace(0, 10, 11)
    xi, dW = kernel_arrays(market, times, 20000, seed=3)
    assert xi.shape == (20000, 11) and dW.shape == (20000, 10, 1)
    assert np.all(xi[:, 0] == 1.0)
    se = xi[:, -1].std() / math.sqrt(xi.shape[0])
    assert abs(xi[:, -1].mean() - math.exp(-0.5)) < 4 * se
    assert abs(dW.var() - 1.0) < 0.05


def test_streams_do_not_depend_on_batching(market):
    times = np.linspace(0, 10, 6)
    xi_all, _ = kernel_arrays(market, times, 8, seed=9)
    xi_tail, _ = kernel_arrays(market, times, 3, seed=9, first_path=5)
    np.testing.assert_array_equal(xi_all[5:], xi_tail)
    a = path_rng(9, 2).standard_normal(4)
    b = path_rng(9, 2).standard_normal(4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, path_rng(9, 3).standard_normal(4))


def test_sample_paths(market):
    paths = sample_kernel_paths(market, np.linspace(0, 10, 5), 4, seed=1)
    assert [p.path_id for p in paths] == [0, 1, 2, 3]
    assert paths[2].brownian_increments.shape == (4, 1)
    np.testing.assert_allclose(
        paths[2].xi, market.xi_from_increments(paths[2].times, paths[2].brownian_increments))


def test_bad_time_grid(market):
    with pytest.raises(ValueError):
        kernel_arrays(market, [0.0, 2.0, 1.0], 2, seed=0)
    with pytest.raises(ValueError):
        kernel_arrays(market, [0.0, 20.0], 2, seed=0)
