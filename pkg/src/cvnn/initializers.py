"""Complex-aware random weight initialization.

A complex weight carries its variance in two components, so limits derived
for real networks must shrink by ``sqrt(2)`` per component to keep the total
variance at the classic fan-based targets:

* Glorot family: total variance ``2 / (fan_in + fan_out)``,
* He family: total variance ``2 / fan_in``,

split equally between the real and imaginary parts (He is an extrapolation
of the same split).  ``rayleigh_polar`` reaches the Glorot target from the
polar side: modulus Rayleigh-distributed, phase uniform, zero mean.  The
``alt_tradeoff`` scheme splits unevenly instead: ``Var[Re] = 1/(2 fan_in)``,
``Var[Im] = 1/(2 fan_out)``.

The ``scale`` knob multiplies the per-component limit or standard deviation,
so variances move with ``scale**2``; the scale-perturbation experiment uses
``sqrt(2)`` and ``1/2`` against the baseline 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ctensor import CTensor
from .errors import ConfigError
from .rng import rng_for, WEIGHTS

COMPLEX_SCHEMES = (
    "glorot_uniform",
    "glorot_normal",
    "he_uniform",
    "he_normal",
    "rayleigh_polar",
    "glorot_uniform_alt_tradeoff",
)
REAL_SCHEMES = tuple(f"real_{s}" for s in COMPLEX_SCHEMES if s != "rayleigh_polar")

# config-file names, matching the established complex-layer naming convention
SCHEME_NAMES = {
    "ComplexGlorotUniform": "glorot_uniform",
    "ComplexGlorotNormal": "glorot_normal",
    "ComplexHeUniform": "he_uniform",
    "ComplexHeNormal": "he_normal",
    "ComplexRayleighPolar": "rayleigh_polar",
    "ComplexGlorotUniformAlt": "glorot_uniform_alt_tradeoff",
}


@dataclass(frozen=True)
class FanPair:
    fan_in: int
    fan_out: int

    def __post_init__(self):
        if self.fan_in < 1 or self.fan_out < 1:
            raise ConfigError(f"fans must be >= 1, got ({self.fan_in}, {self.fan_out})")

    @property
    def total(self) -> int:
        return self.fan_in + self.fan_out


@dataclass(frozen=True)
class InitializerSpec:
    scheme: str = "glorot_uniform"
    scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.scheme not in COMPLEX_SCHEMES + REAL_SCHEMES:
            raise ConfigError(f"unknown initializer scheme {self.scheme!r}")
        if not self.scale > 0:
            raise ConfigError(f"scale must be positive, got {self.scale}")

    @property
    def is_real(self) -> bool:
        return self.scheme.startswith("real_")


def from_name(name: str, scale: float = 1.0, seed: int = 0) -> InitializerSpec:
    scheme = SCHEME_NAMES.get(name, name)
    return InitializerSpec(scheme=scheme, scale=scale, seed=seed)


def glorot_limit_complex(fans: FanPair) -> float:
    """Per-component uniform limit ``sqrt(3) / sqrt(fan_in + fan_out)``.

    Uniform on ``[-L, L]`` has variance ``L**2 / 3``; with this limit each
    component contributes ``1 / (fan_in + fan_out)`` and the complex total is
    the Glorot target ``2 / (fan_in + fan_out)``.  The real-valued limit is
    exactly ``sqrt(2)`` times larger.
    """
    return math.sqrt(3.0) / math.sqrt(fans.total)


def glorot_limit_real(fans: FanPair) -> float:
    """Uniform limit ``sqrt(6) / sqrt(fan_in + fan_out)`` for real weights."""
    return math.sqrt(6.0) / math.sqrt(fans.total)


def sample_weights(spec: InitializerSpec, shape, fans: FanPair, rng: np.random.Generator):
    """Draw a weight tensor; complex schemes return a CTensor, real ones an ndarray."""
    shape = tuple(int(s) for s in shape)
    if any(s < 1 for s in shape) or not shape:
        raise ConfigError(f"weight shape must be nonempty and positive, got {shape}")
    s = spec.scale
    scheme = spec.scheme

    if scheme == "glorot_uniform":
        lim = s * glorot_limit_complex(fans)
        return CTensor(rng.uniform(-lim, lim, shape) + 1j * rng.uniform(-lim, lim, shape))
    if scheme == "glorot_normal":
        sd = s / math.sqrt(fans.total)
        return CTensor(rng.normal(0.0, sd, shape) + 1j * rng.normal(0.0, sd, shape))
    if scheme == "he_uniform":
        lim = s * math.sqrt(3.0 / fans.fan_in)
        return CTensor(rng.uniform(-lim, lim, shape) + 1j * rng.uniform(-lim, lim, shape))
    if scheme == "he_normal":
        sd = s / math.sqrt(fans.fan_in)
        return CTensor(rng.normal(0.0, sd, shape) + 1j * rng.normal(0.0, sd, shape))
    if scheme == "rayleigh_polar":
        sigma = s / math.sqrt(fans.total)
        rho = rng.rayleigh(sigma, shape)
        phase = rng.uniform(0.0, 2.0 * math.pi, shape)
        return CTensor(rho * np.exp(1j * phase))
    if scheme == "glorot_uniform_alt_tradeoff":
        lim_re = s * math.sqrt(3.0 / (2.0 * fans.fan_in))
        lim_im = s * math.sqrt(3.0 / (2.0 * fans.fan_out))
        return CTensor(rng.uniform(-lim_re, lim_re, shape) + 1j * rng.uniform(-lim_im, lim_im, shape))

    # real-valued counterparts: one component at the full variance target
    if scheme == "real_glorot_uniform":
        lim = s * glorot_limit_real(fans)
        return rng.uniform(-lim, lim, shape)
    if scheme == "real_glorot_normal":
        sd = s * math.sqrt(2.0 / fans.total)
        return rng.normal(0.0, sd, shape)
    if scheme == "real_he_uniform":
        lim = s * math.sqrt(6.0 / fans.fan_in)
        return rng.uniform(-lim, lim, shape)
    if scheme == "real_he_normal":
        sd = s * math.sqrt(2.0 / fans.fan_in)
        return rng.normal(0.0, sd, shape)
    if scheme == "real_glorot_uniform_alt_tradeoff":
        var = 1.0 / (2.0 * fans.fan_in) + 1.0 / (2.0 * fans.fan_out)
        lim = s * math.sqrt(3.0 * var)
        return rng.uniform(-lim, lim, shape)
    raise ConfigError(f"unknown initializer scheme {scheme!r}")


def sample_for_layer(spec: InitializerSpec, shape, fans: FanPair, seed: int, layer_index: int):
    """Deterministic per-layer draw; the stream key is (seed, WEIGHTS, layer)."""
    return sample_weights(spec, shape, fans, rng_for(seed, WEIGHTS, layer_index))


def real_equivalent_spec(spec: InitializerSpec) -> InitializerSpec:
    """The spec a real-valued layer must use for a fair model comparison."""
    if spec.is_real:
        raise ConfigError(f"{spec.scheme!r} is already a real scheme")
    if spec.scheme == "rayleigh_polar":
        raise ConfigError("rayleigh_polar has no real-valued equivalent")
    return InitializerSpec(scheme=f"real_{spec.scheme}", scale=spec.scale, seed=spec.seed)
