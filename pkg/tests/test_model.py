"""Sampling determinism, distribution properties, parameter invariants."""

import dataclasses
import math

import numpy as np
import pytest
from scipy import stats as sps

import eddymlmc.model as model
from eddymlmc.model import (
    ConfigurationError,
    ModelParams,
    ParameterDistributions,
    ParamSample,
    apply_sample,
    default_params,
    draw_sample,
    draw_samples,
    nominal_params,
)

DISTS = ParameterDistributions()
FIXED = ModelParams(r0=0.1, r1=0.5, r2=0.8)
SEED = 913


def test_splitmix64_known_vectors():
    # first outputs of SplitMix64 seeded with 0, from the reference code
    out = model._mix64(
        np.array([0], dtype=np.uint64) + model._GAMMA_J
    )
    assert out[0] == 0xE220A8397B1DCDAF
    assert out[1] == 0x6E789E6AA1B965F4
    assert out[2] == 0x06C45D188009454F


def test_draw_is_reproducible():
    a = draw_sample(DISTS, SEED, 7)
    b = draw_sample(DISTS, SEED, 7)
    assert a == b
    assert a.sample_index == 7 and a.master_seed == SEED


def test_distinct_indices_differ():
    a = draw_sample(DISTS, SEED, 0)
    b = draw_sample(DISTS, SEED, 1)
    assert (a.r1, a.i0, a.mu3) != (b.r1, b.i0, b.mu3)


def test_batch_matches_scalar_draws():
    r1, i0, mu3 = draw_samples(DISTS, SEED, np.arange(50))
    for k in (0, 13, 49):
        s = draw_sample(DISTS, SEED, k)
        assert (s.r1, s.i0, s.mu3) == (r1[k], i0[k], mu3[k])


def test_draws_stay_inside_supports():
    r1, i0, mu3 = draw_samples(DISTS, SEED, np.arange(100_000))
    assert r1.min() >= 0.4 and r1.max() <= 0.6
    assert i0.min() >= 90.0 and i0.max() <= 110.0
    assert mu3.min() >= 600.0 and mu3.max() <= 1400.0


def test_midpoint_stream_gives_nominal(monkeypatch):
    monkeypatch.setattr(
        model, "_uniform_streams", lambda seed, idx: np.full((1, 3), 0.5)
    )
    s = draw_sample(DISTS, SEED, 0)
    assert (s.r1, s.i0, s.mu3) == (0.5, 100.0, 1000.0)


def test_empirical_means_converge():
    m = 100_000
    r1, i0, mu3 = draw_samples(DISTS, SEED, np.arange(m))
    for values, nominal, hw in (
        (r1, 0.5, 0.1), (i0, 100.0, 10.0), (mu3, 1000.0, 400.0)
    ):
        tol = 1.1 * hw / math.sqrt(3 * m)
        assert abs(values.mean() - nominal) <= tol


def test_uniformity_kolmogorov_smirnov():
    r1, i0, mu3 = draw_samples(DISTS, SEED, np.arange(10_000))
    for values, lo, hi in (
        (r1, 0.4, 0.6), (i0, 90.0, 110.0), (mu3, 600.0, 1400.0)
    ):
        u = (values - lo) / (hi - lo)
        assert sps.kstest(u, "uniform").statistic <= 0.02


def test_independence_across_indices_and_parameters():
    m = 100_000
    r1a, i0a, mu3a = draw_samples(DISTS, SEED, np.arange(m))
    r1b, _, _ = draw_samples(DISTS, SEED, np.arange(m, 2 * m))
    assert abs(np.corrcoef(r1a, r1b)[0, 1]) <= 0.05
    assert abs(np.corrcoef(r1a[:-1], r1a[1:])[0, 1]) <= 0.05
    assert abs(np.corrcoef(r1a, i0a)[0, 1]) <= 0.05
    assert abs(np.corrcoef(i0a, mu3a)[0, 1]) <= 0.05


def test_nominal_params_defaults():
    p = nominal_params(DISTS, FIXED)
    assert (p.r1, p.i0, p.mu3) == (0.5, 100.0, 1000.0)


def test_apply_sample_overrides_random_fields_only():
    s = ParamSample(r1=0.42, i0=95.0, mu3=700.0, sample_index=3,
                    master_seed=SEED)
    p = apply_sample(FIXED, s)
    assert (p.r1, p.i0, p.mu3) == (0.42, 95.0, 700.0)
    assert (p.r0, p.r2, p.sigma, p.omega) == (
        FIXED.r0, FIXED.r2, FIXED.sigma, FIXED.omega)


def test_apply_midpoint_equals_nominal():
    s = ParamSample(r1=0.5, i0=100.0, mu3=1000.0, sample_index=0,
                    master_seed=SEED)
    assert apply_sample(FIXED, s) == nominal_params(DISTS, FIXED)


def test_apply_sample_rechecks_invariants():
    bad = ParamSample(r1=0.05, i0=100.0, mu3=1000.0, sample_index=0,
                      master_seed=SEED)  # r1 <= r0
    with pytest.raises(ConfigurationError):
        apply_sample(FIXED, bad)


def test_model_params_invariants():
    with pytest.raises(ConfigurationError):
        ModelParams(r0=0.5, r1=0.1, r2=0.8)
    with pytest.raises(ConfigurationError):
        ModelParams(r0=0.1, r1=0.5, r2=0.8, mu3=0.5)
    with pytest.raises(ConfigurationError):
        ModelParams(r0=0.1, r1=0.5, r2=0.8, sigma=-1.0)
    with pytest.raises(ConfigurationError):
        ModelParams(r0=0.1, r1=0.5, r2=0.8, omega=0.0)
    with pytest.raises(ConfigurationError):
        ModelParams(r0=0.1, r1=0.5, r2=0.8, mu1=2.0)


def test_distribution_invariants():
    with pytest.raises(ConfigurationError):
        ParameterDistributions(mu3_nominal=100.0, mu3_halfwidth=400.0)
    with pytest.raises(ConfigurationError):
        ParameterDistributions(r1_halfwidth=-0.1)
    wide = ParameterDistributions(r1_nominal=0.5, r1_halfwidth=0.45)
    with pytest.raises(ConfigurationError):
        wide.check_compatible(FIXED)
    DISTS.check_compatible(FIXED)


def test_source_density_and_skin_depth():
    p = default_params()
    assert p.source_density == pytest.approx(100.0 / (math.pi * 0.01))
    delta = math.sqrt(2.0 / (p.omega * model.MU0 * p.mu3 * p.sigma))
    assert p.skin_depth == pytest.approx(delta)
    assert dataclasses.replace(p, sigma=0.0).skin_depth == math.inf
