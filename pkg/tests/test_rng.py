import numpy as np
import pytest
from scipy import stats

from intersectfair.rng import SEED_ENV, RngStream, default_seed, log_gamma_variates, sample_beta


def test_stream_reproducible_and_distinct():
    a = RngStream(7, 3).generator().random(5)
    b = RngStream(7, 3).generator().random(5)
    c = RngStream(7, 4).generator().random(5)
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_stream_range_checks():
    with pytest.raises(ValueError):
        RngStream(-1)
    with pytest.raises(ValueError):
        RngStream(0, 2**64)
    RngStream(2**64 - 1, 2**64 - 1).generator()


def test_child_paths_distinct():
    root = RngStream(11)
    assert root.child(1, 2) == root.child(1, 2)
    assert root.child(1, 2) != root.child(2, 1)


def test_default_seed_env(monkeypatch):
    monkeypatch.setenv(SEED_ENV, "42")
    assert default_seed(0) == 42
    monkeypatch.delenv(SEED_ENV)
    assert default_seed(5) == 5


def test_beta_uniform_mean():
    x = sample_beta(RngStream(1), 1.0, 1.0, size=100_000)
    assert abs(x.mean() - 0.5) < 0.005


def test_beta_moments():
    a, b = 5.0, 15.0
    x = sample_beta(RngStream(2), a, b, size=100_000)
    var = a * b / ((a + b) ** 2 * (a + b + 1))
    assert abs(x.mean() - 0.25) < 0.005
    assert abs(x.var() - var) < 0.1 * var


def test_beta_ks():
    x = sample_beta(RngStream(3), 2.0, 2.0, size=100_000)
    assert stats.kstest(x, stats.beta(2, 2).cdf).statistic < 0.01


def test_beta_small_shapes_stay_inside():
    x = sample_beta(RngStream(4), 1e-3, 1e-3, size=20_000)
    assert (x > 0).all() and (x < 1).all()
    assert abs(x.mean() - 0.5) < 0.02


def test_gamma_small_shape_mean():
    g = np.exp(log_gamma_variates(RngStream(5).generator(), np.full(200_000, 0.3)))
    assert abs(g.mean() - 0.3) < 0.01


def test_gamma_rejects_bad_shape():
    with pytest.raises(ValueError):
        log_gamma_variates(RngStream(0).generator(), [0.0])
