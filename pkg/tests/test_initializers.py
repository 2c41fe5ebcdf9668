"""Initializer limits, Monte-Carlo variance targets, and determinism."""

import math

import numpy as np
import pytest
from scipy import stats

from cvnn.ctensor import CTensor
from cvnn.errors import ConfigError
from cvnn.initializers import (
    FanPair,
    InitializerSpec,
    from_name,
    glorot_limit_complex,
    glorot_limit_real,
    real_equivalent_spec,
    sample_for_layer,
    sample_weights,
)
from cvnn.rng import rng_for

N_DRAWS = 1_000_000


def draw(scheme, fans, scale=1.0, seed=0, n=N_DRAWS):
    spec = InitializerSpec(scheme=scheme, scale=scale, seed=seed)
    out = sample_weights(spec, (n,), fans, rng_for(seed, 1, 0))
    return out.array if isinstance(out, CTensor) else out


class TestLimits:
    def test_limit_128_64(self):
        # sqrt(3)/sqrt(192) is exactly 1/8
        assert glorot_limit_complex(FanPair(128, 64)) == pytest.approx(0.125)

    def test_limit_256_50(self):
        assert abs(glorot_limit_complex(FanPair(256, 50)) - 0.09903) < 2e-5

    def test_limit_minimal_fans(self):
        assert abs(glorot_limit_complex(FanPair(1, 1)) - 1.22474) < 1e-5

    def test_real_limit_is_sqrt2_larger(self):
        for fans in (FanPair(128, 64), FanPair(3, 5), FanPair(256, 50)):
            assert glorot_limit_real(fans) == pytest.approx(
                math.sqrt(2) * glorot_limit_complex(fans)
            )

    def test_real_limit_256_50(self):
        assert abs(glorot_limit_real(FanPair(256, 50)) - 0.14003) < 1e-5

    def test_fans_must_be_positive(self):
        with pytest.raises(ConfigError):
            FanPair(0, 4)


class TestVarianceTargets:
    def test_glorot_uniform_total_variance(self):
        fans = FanPair(128, 64)
        w = draw("glorot_uniform", fans)
        target = 2.0 / fans.total
        var = w.real.var() + w.imag.var()
        assert abs(var - target) / target < 0.02

    def test_glorot_components_balanced(self):
        w = draw("glorot_uniform", FanPair(128, 64), seed=1)
        assert abs(w.real.var() - w.imag.var()) / w.real.var() < 0.02

    def test_glorot_normal_total_variance(self):
        fans = FanPair(20, 30)
        w = draw("glorot_normal", fans, seed=2)
        target = 2.0 / fans.total
        assert abs(w.real.var() + w.imag.var() - target) / target < 0.02

    def test_he_variance(self):
        fans = FanPair(64, 8)
        for scheme in ("he_uniform", "he_normal"):
            w = draw(scheme, fans, seed=3)
            target = 2.0 / fans.fan_in
            assert abs(w.real.var() + w.imag.var() - target) / target < 0.02

    def test_rayleigh_power_and_mean(self):
        fans = FanPair(10, 10)
        w = draw("rayleigh_polar", fans, seed=4)
        power = np.mean(np.abs(w) ** 2)
        assert abs(power - 0.1) / 0.1 < 0.02
        stderr = np.sqrt(0.1 / len(w))
        assert abs(np.mean(w)) < 3 * stderr

    def test_alt_tradeoff_component_ratio(self):
        fans = FanPair(16, 64)
        w = draw("glorot_uniform_alt_tradeoff", fans, seed=5)
        ratio = w.real.var() / w.imag.var()
        assert abs(ratio - fans.fan_out / fans.fan_in) / (fans.fan_out / fans.fan_in) < 0.03

    def test_scale_moves_variance_quadratically(self):
        fans = FanPair(32, 32)
        base = draw("glorot_uniform", fans, seed=6, n=200_000)
        boosted = draw("glorot_uniform", fans, scale=math.sqrt(2), seed=6, n=200_000)
        ratio = (boosted.real.var() + boosted.imag.var()) / (base.real.var() + base.imag.var())
        assert abs(ratio - 2.0) < 0.05

    def test_zero_scale_rejected(self):
        with pytest.raises(ConfigError):
            InitializerSpec(scheme="glorot_uniform", scale=0.0)

    def test_means_are_centered(self):
        fans = FanPair(24, 40)
        for scheme in ("glorot_uniform", "glorot_normal", "he_uniform",
                       "he_normal", "rayleigh_polar", "glorot_uniform_alt_tradeoff"):
            w = draw(scheme, fans, seed=7, n=N_DRAWS)
            for comp in (w.real, w.imag):
                stderr = comp.std() / math.sqrt(comp.size)
                assert abs(comp.mean()) < 4 * max(stderr, 1e-12), scheme

    def test_rayleigh_phases_uniform(self):
        w = draw("rayleigh_polar", FanPair(12, 20), seed=8, n=100_000)
        phases = np.angle(w) % (2 * np.pi)
        stat = stats.kstest(phases / (2 * np.pi), "uniform").statistic
        # 1% critical value of the one-sample KS statistic
        assert stat < 1.628 / math.sqrt(len(phases))


class TestDeterminismAndNames:
    def test_identical_keys_identical_tensors(self):
        spec = InitializerSpec(scheme="glorot_normal", scale=1.0, seed=42)
        a = sample_for_layer(spec, (7, 5), FanPair(5, 7), seed=42, layer_index=3)
        b = sample_for_layer(spec, (7, 5), FanPair(5, 7), seed=42, layer_index=3)
        assert np.array_equal(a.array, b.array)

    def test_different_layer_index_differs(self):
        spec = InitializerSpec(scheme="glorot_normal", seed=42)
        a = sample_for_layer(spec, (7, 5), FanPair(5, 7), seed=42, layer_index=0)
        b = sample_for_layer(spec, (7, 5), FanPair(5, 7), seed=42, layer_index=1)
        assert not np.array_equal(a.array, b.array)

    def test_config_names_resolve(self):
        for name, scheme in (
            ("ComplexGlorotUniform", "glorot_uniform"),
            ("ComplexGlorotNormal", "glorot_normal"),
            ("ComplexHeUniform", "he_uniform"),
            ("ComplexHeNormal", "he_normal"),
            ("ComplexRayleighPolar", "rayleigh_polar"),
            ("ComplexGlorotUniformAlt", "glorot_uniform_alt_tradeoff"),
        ):
            assert from_name(name).scheme == scheme

    def test_unknown_scheme_rejected(self):
        with pytest.raises(ConfigError):
            InitializerSpec(scheme="magic")


class TestRealEquivalent:
    def test_uniform_limit_scales_by_sqrt2(self):
        spec = real_equivalent_spec(InitializerSpec(scheme="glorot_uniform"))
        assert spec.scheme == "real_glorot_uniform"
        fans = FanPair(128, 64)
        w = sample_weights(spec, (400_000,), fans, rng_for(0, 1, 0))
        target = 2.0 / fans.total
        assert abs(w.var() - target) / target < 0.02
        assert np.abs(w).max() <= glorot_limit_real(fans)

    def test_double_application_rejected(self):
        spec = real_equivalent_spec(InitializerSpec(scheme="glorot_uniform"))
        with pytest.raises(ConfigError):
            real_equivalent_spec(spec)

    def test_rayleigh_has_no_real_equivalent(self):
        with pytest.raises(ConfigError):
            real_equivalent_spec(InitializerSpec(scheme="rayleigh_polar"))
