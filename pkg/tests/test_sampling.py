"""sampler: truncated-normal law, scene specs, drop positions."""
import numpy as np
import pytest

from granulab.errors import ConfigError, DegenerateTruncation, TableTooSmall
from granulab.sampling import (
    GenerationConfig,
    TruncNormalParams,
    sample_drop_positions,
    sample_scene_spec,
    sample_trunc_normal,
)
from granulab.seeds import derive_seed, splitmix64


# --- quadrature oracle (independent of scipy's rational approximations) -----

def trunc_cdf_grid(a, b, mu, sigma, n_grid=40001):
    """Analytic truncated-normal CDF on a grid via trapezoidal integration."""
    xs = np.linspace(a, b, n_grid)
    z = (xs - mu) / sigma
    density = np.exp(-0.5 * z * z)
    cum = np.concatenate([[0.0], np.cumsum((density[1:] + density[:-1]) * 0.5 * np.diff(xs))])
    return xs, cum / cum[-1]


def trunc_mean_quadrature(a, b, mu, sigma, n_grid=200001):
    xs = np.linspace(a, b, n_grid)
    z = (xs - mu) / sigma
    density = np.exp(-0.5 * z * z)
    dx = xs[1] - xs[0]
    return float(np.trapezoid(xs * density, dx=dx) / np.trapezoid(density, dx=dx))


def ks_statistic(samples, a, b, mu, sigma):
    xs, cdf = trunc_cdf_grid(a, b, mu, sigma)
    s = np.sort(samples)
    f = np.interp(s, xs, cdf)
    n = len(s)
    upper = np.abs(f - np.arange(1, n + 1) / n).max()
    lower = np.abs(f - np.arange(0, n) / n).max()
    return max(upper, lower)


def _rng(seed=0):
    return np.random.Generator(np.random.PCG64(seed))


# --- sample_trunc_normal ------------------------------------------------------

def test_bounds_respected_at_table_extremes():
    params = TruncNormalParams(a=0.1, b=20.0, mu=10.5, sigma=7.2)
    x = sample_trunc_normal(params, 50000, _rng(1))
    assert x.min() >= 0.1 and x.max() <= 20.0


def test_vanishing_sigma_concentrates_at_mu():
    params = TruncNormalParams(a=0.1, b=20.0, mu=10.0, sigma=1e-9)
    x = sample_trunc_normal(params, 10000, _rng(2))
    assert np.all(np.abs(x - 10.0) < 1e-6)


def test_ks_against_quadrature_cdf():
    params = TruncNormalParams(a=0.1, b=20.0, mu=10.5, sigma=7.2)
    x = sample_trunc_normal(params, 10000, _rng(3))
    assert ks_statistic(x, 0.1, 20.0, 10.5, 7.2) < 0.02


def test_truncated_mean_matches_quadrature():
    params = TruncNormalParams(a=0.1, b=20.0, mu=10.5, sigma=7.2)
    n = 100000
    x = sample_trunc_normal(params, n, _rng(4))
    analytic = trunc_mean_quadrature(0.1, 20.0, 10.5, 7.2)
    se = x.std() / np.sqrt(n)
    assert abs(x.mean() - analytic) < 3 * se


def test_degenerate_truncation_raises():
    params = TruncNormalParams(a=0.1, b=20.0, mu=1000.0, sigma=1.0)
    with pytest.raises(DegenerateTruncation):
        sample_trunc_normal(params, 10, _rng(5))


def test_param_validation():
    with pytest.raises(ConfigError):
        TruncNormalParams(a=5.0, b=1.0, mu=3.0, sigma=1.0)
    with pytest.raises(ConfigError):
        TruncNormalParams(a=1.0, b=5.0, mu=3.0, sigma=0.0)
    params = TruncNormalParams(a=0.1, b=20.0, mu=10.0, sigma=1.0)
    with pytest.raises(ConfigError):
        sample_trunc_normal(params, 0, _rng(0))


# --- sample_scene_spec --------------------------------------------------------

def test_spec_ranges_over_many_scenes():
    cfg = GenerationConfig()
    for scene_id in range(200):
        spec = sample_scene_spec(cfg, scene_id, master_seed=99)
        assert 6.0 <= spec.params.mu <= 12.0
        assert 6.0 <= spec.params.sigma <= 8.0
        assert 700 <= spec.count <= 1000
        assert spec.count == len(spec.sizes) == len(spec.drop_positions)
        assert spec.sizes.min() >= 0.1 and spec.sizes.max() <= 20.0
        assert spec.shape_type in cfg.shape_types


def test_spec_determinism():
    cfg = GenerationConfig()
    a = sample_scene_spec(cfg, 5, master_seed=123)
    b = sample_scene_spec(cfg, 5, master_seed=123)
    assert a == b  # bit-identical, including arrays


def test_distinct_scene_ids_differ():
    cfg = GenerationConfig()
    a = sample_scene_spec(cfg, 0, master_seed=123)
    b = sample_scene_spec(cfg, 1, master_seed=123)
    assert not np.array_equal(a.sizes[: min(a.count, b.count)], b.sizes[: min(a.count, b.count)])
    assert a.seed != b.seed


def test_retry_attempt_changes_stream():
    cfg = GenerationConfig()
    a = sample_scene_spec(cfg, 0, master_seed=123, attempt=0)
    b = sample_scene_spec(cfg, 0, master_seed=123, attempt=1)
    assert a.seed != b.seed


def test_derived_seed_collisions_sparse():
    seen = {derive_seed(123, sid, att) for sid in range(2000) for att in range(3)}
    assert len(seen) == 6000
    assert splitmix64(0) != splitmix64(1)


# --- sample_drop_positions ------------------------------------------------------

def test_margins_match_table_and_max_size():
    pos = sample_drop_positions(500, table_size=300.0, max_size=20.0, rng=_rng(6))
    assert np.abs(pos[:, 0]).max() <= 140.0
    assert np.abs(pos[:, 1]).max() <= 140.0


def test_single_drop_height():
    pos = sample_drop_positions(1, table_size=300.0, max_size=20.0, rng=_rng(7))
    assert pos.shape == (1, 3)
    assert pos[0, 2] >= 10.0


def test_layering_and_distinctness():
    pos = sample_drop_positions(1000, table_size=300.0, max_size=20.0, rng=_rng(8))
    zs = np.unique(pos[:, 2])
    assert np.all(np.diff(zs) >= 20.0 - 1e-12)
    # no two initial centers closer than 1e-9
    from scipy.spatial import cKDTree

    tree = cKDTree(pos)
    dists, _ = tree.query(pos, k=2)
    assert dists[:, 1].min() > 1e-9


def test_table_too_small():
    with pytest.raises(TableTooSmall):
        sample_drop_positions(3, table_size=10.0, max_size=20.0, rng=_rng(9))


def test_generation_config_validation():
    with pytest.raises(ConfigError):
        GenerationConfig(mu_range=(12.0, 6.0))
    with pytest.raises(ConfigError):
        GenerationConfig(table_size=-1.0)
    with pytest.raises(ConfigError):
        GenerationConfig(shape_types=())
