import math

import numpy as np
import pytest

from oracles import brute_cokurtosis, brute_coskewness, direct_cov, direct_gm
from vixfolio.estimators import (
    arithmetic_mean,
    cokurtosis_matrix,
    coskewness_matrix,
    covariance,
    estimate,
    geometric_mean,
    portfolio_kurtosis,
    portfolio_skewness,
)


def col(*v):
    return np.array(v, dtype=float)[:, None]


def test_arithmetic_mean_examples():
    assert arithmetic_mean(col(0.1, 0.3))[0] == pytest.approx(0.2, abs=1e-16)
    np.testing.assert_array_equal(arithmetic_mean(np.zeros((4, 3))), np.zeros(3))
    np.testing.assert_allclose(arithmetic_mean([[0.01, 0.02], [0.03, 0.06]]), [0.02, 0.04], atol=1e-16)


def test_geometric_mean_examples():
    assert geometric_mean(col(0.1, 0.1))[0] == pytest.approx(0.1, abs=1e-15)
    assert geometric_mean(col(1.0, -0.5))[0] == pytest.approx(0.0, abs=1e-15)
    # frozen calculator value of sqrt(1.1 * 1.3) - 1
    assert geometric_mean(col(0.1, 0.3))[0] == pytest.approx(0.19582607431014, abs=1e-12)


def test_geometric_mean_matches_product_form(rng):
    r = rng.uniform(-0.3, 0.3, size=(50, 4))
    np.testing.assert_allclose(geometric_mean(r), [direct_gm(r[:, i]) for i in range(4)], rtol=1e-12)


def test_geometric_mean_total_loss():
    with pytest.raises(ValueError):
        geometric_mean(col(0.1, -1.0))


def test_covariance_hand_value():
    w = np.array([[0.1, 0.1], [0.3, 0.3]])
    np.testing.assert_allclose(covariance(w, arithmetic_mean(w)), np.full((2, 2), 0.02), atol=1e-16)


def test_covariance_constant_and_symmetry(rng):
    np.testing.assert_array_equal(covariance(np.full((5, 3), 0.01), np.full(3, 0.01)), np.zeros((3, 3)))
    w = rng.standard_normal((30, 4))
    s = covariance(w, w.mean(axis=0))
    assert np.array_equal(s, s.T)


@pytest.mark.parametrize("denominator, offset", [("paper", 1), ("uniform", 0)])
def test_covariance_matches_double_loop(rng, denominator, offset):
    w = rng.standard_normal((12, 3))
    mu = geometric_mean(w * 0.1)
    np.testing.assert_allclose(covariance(w, mu, denominator), direct_cov(w, mu, 12 - offset), atol=1e-14)


def test_coskewness_examples(rng):
    w = col(0.1, 0.3)
    assert coskewness_matrix(w, arithmetic_mean(w))[0, 0] == pytest.approx(0.0, abs=1e-18)
    r = rng.standard_normal((5, 2))
    mu = r.mean(axis=0)
    s = coskewness_matrix(r, mu)
    np.testing.assert_allclose(s, brute_coskewness(r, mu), atol=1e-14)
    n = 2
    for i in range(n):
        for j in range(n):
            for l in range(n):
                assert s[i, j * n + l] == pytest.approx(s[j, i * n + l], abs=1e-15)
                assert s[i, j * n + l] == pytest.approx(s[l, j * n + i], abs=1e-15)


def test_cokurtosis_examples(rng):
    w = col(0.1, 0.3)
    assert cokurtosis_matrix(w, arithmetic_mean(w))[0, 0] == pytest.approx(1e-4, abs=1e-18)
    assert not np.any(cokurtosis_matrix(np.full((4, 2), 0.2), np.full(2, 0.2)))
    r = rng.standard_normal((5, 2))
    mu = r.mean(axis=0)
    np.testing.assert_allclose(cokurtosis_matrix(r, mu), brute_cokurtosis(r, mu), atol=1e-14)


def test_estimate_bundle():
    w = np.array([[0.01, 0.02], [0.03, -0.01]])
    est = estimate(w, "AM")
    np.testing.assert_array_equal(est.mu, arithmetic_mean(w))
    assert est.rm3 is None and est.rm4 is None
    est = estimate(w, "GM", with_tensors=True)
    assert est.rm3.shape == (2, 4) and est.rm4.shape == (2, 8)
    with pytest.raises(ValueError):
        estimate(w[:1])
    with pytest.raises(ValueError):
        estimate(w, "XX")


def test_gm_below_am_on_positive_window(rng):
    w = rng.uniform(0, 0.1, size=(90, 8))
    assert np.all(estimate(w, "GM").mu <= estimate(w, "AM").mu + 1e-12)


def test_covariance_is_psd(rng):
    for _ in range(20):
        w = rng.standard_normal((int(rng.integers(2, 10)), 6))
        assert np.linalg.eigvalsh(covariance(w, w.mean(axis=0))).min() >= -1e-10


def test_portfolio_moment_conventions(rng):
    r = rng.standard_normal((40, 3))
    x = np.array([0.3, 0.5, -0.2])
    est = estimate(r, "AM", with_tensors=True, denominator="uniform")
    p = r @ x
    d = p - p.mean()
    assert portfolio_skewness(x, est) == pytest.approx(np.mean(d**3) / np.mean(d**2) ** 1.5, rel=1e-10)
    raw = np.mean(d**4) / np.mean(d**2) ** 2
    assert portfolio_kurtosis(x, est, "raw") == pytest.approx(raw, rel=1e-10)
    assert portfolio_kurtosis(x, est, "excess") == pytest.approx(raw - 3.0, rel=1e-10)
    # the default covariance divides by M - 1, which rescales sigma^3 accordingly
    est_p = estimate(r, "AM", with_tensors=True)
    scale = (39 / 40) ** 1.5
    assert portfolio_skewness(x, est_p) == pytest.approx(portfolio_skewness(x, est) * scale, rel=1e-10)
    assert math.isfinite(portfolio_kurtosis(x, est_p))
