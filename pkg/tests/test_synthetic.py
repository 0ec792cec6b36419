import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nucate.synthetic import (SyntheticConfig, calibrate_omega, mn_noise_scale, sample_dataset,
                              true_surfaces)


def test_shapes_and_columns():
    ds, orc = sample_dataset(SyntheticConfig(seed=0), 300)
    assert ds.x.shape == (300, 25) and set(np.unique(ds.a)) <= {0, 1}
    assert np.array_equal(ds.y, np.where(ds.a == 1, ds.y1, ds.y0))
    assert np.array_equal(orc.tau, np.sum(ds.x[:, 10:15] ** 2, axis=1))
    assert np.allclose(orc.ey0, np.sum(ds.x[:, :10] ** 2, axis=1), rtol=1e-14)


def test_same_seed_same_data():
    a, _ = sample_dataset(SyntheticConfig(seed=5), 50)
    b, _ = sample_dataset(SyntheticConfig(seed=5), 50)
    c, _ = sample_dataset(SyntheticConfig(seed=6), 50)
    assert np.array_equal(a.y, b.y) and not np.array_equal(a.x, c.x)


def test_noise_models_share_design():
    an, _ = sample_dataset(SyntheticConfig(seed=2, noise="AN"), 100)
    mn, _ = sample_dataset(SyntheticConfig(seed=2, noise="MN"), 100)
    assert np.array_equal(an.x, mn.x) and np.array_equal(an.a, mn.a)


def test_omega_matches_chi_square_median():
    # median of chi2_5 / 5
    ds, orc = sample_dataset(SyntheticConfig(seed=11), 200_000)
    assert abs(orc.omega - 0.870311) < 0.01
    assert np.mean(orc.mu > 0.5) == pytest.approx(0.5, abs=1e-4)
    assert abs(ds.a.mean() - orc.mu.mean()) < 3 * np.sqrt(0.25 / ds.n)


def test_mn_scale_matches_population_value():
    # sd(E[Y1]) = sqrt(30), sd(E[Y0]) = sqrt(20)
    _, orc = sample_dataset(SyntheticConfig(seed=4, noise="MN"), 200_000)
    assert abs(orc.noise_scale - 2 / (np.sqrt(30) + np.sqrt(20))) < 0.002
    assert abs(2 / (np.sqrt(30) + np.sqrt(20)) - 0.2010) < 1e-4


def test_an_noise_is_unit():
    ds, orc = sample_dataset(SyntheticConfig(seed=1), 100_000)
    assert abs(np.std(ds.y0 - orc.ey0) - 1.0) < 0.01


@settings(max_examples=20, deadline=None)
@given(xi=st.floats(0.1, 10), seed=st.integers(0, 100))
def test_propensity_monotone_in_confounder_score(xi, seed):
    cfg = SyntheticConfig(xi_sel=xi, seed=seed)
    x = np.random.default_rng(seed).normal(size=(50, 25))
    orc = true_surfaces(cfg, x, calibrate_omega(cfg, x))
    score = np.sum(x[:, :5] ** 2, axis=1)
    order = np.argsort(score)
    assert np.all(np.diff(orc.mu[order]) >= 0)
    assert np.all((orc.mu >= 0) & (orc.mu <= 1))


def test_fixed_omega_is_respected():
    _, orc = sample_dataset(SyntheticConfig(seed=0), 20, omega=1.5)
    assert orc.omega == 1.5


def test_invalid_configs():
    with pytest.raises(ValueError):
        SyntheticConfig(noise="XX")
    with pytest.raises(ValueError):
        SyntheticConfig(d=10)
    with pytest.raises(ValueError):
        true_surfaces(SyntheticConfig(), np.zeros((2, 25)), None)
    with pytest.raises(ValueError):
        mn_noise_scale(np.ones(3), np.ones(3))
