"""Complex activation functions, dispatchable by name.

Two lifting patterns cover most entries: split activations apply a real
nonlinearity to the real and imaginary parts independently, polar activations
apply one to the modulus while keeping the phase.  On top of those come the
complex ReLU family and the complex-to-real output heads (softmax variants)
used as the last layer of classifiers.

Every activation knows three things: how to evaluate itself on a complex
array, its local derivative pair ``(d sigma/dz, d sigma/dz~)`` (or a joint
vector-Jacobian product for the class-coupled heads), and how to behave in a
real-valued network so complex models can be mirrored by real ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .ctensor import CTensor
from .errors import ConfigError

SELU_LAMBDA = ad.SELU_LAMBDA
SELU_ALPHA = ad.SELU_ALPHA


# ---------------------------------------------------------------------------
# spec / lookup
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ActivationSpec:
    """Name plus optional real parameters (e.g. the modrelu radius)."""

    name: str
    params: dict = field(default_factory=dict)


def resolve(spec) -> "Activation":
    """Instantiate an activation from a spec, a name, or pass one through."""
    if isinstance(spec, Activation):
        return spec
    if isinstance(spec, str):
        spec = ActivationSpec(spec)
    factory = ACT_DISPATCHER.get(spec.name)
    if factory is None:
        raise ConfigError(f"unknown activation {spec.name!r}")
    return factory(**spec.params)


# ---------------------------------------------------------------------------
# generic liftings (module-level, array in / array out)
# ---------------------------------------------------------------------------

def type_a(sigma_re, sigma_im, z: CTensor) -> CTensor:
    """Apply real functions to the real and imaginary parts independently."""
    arr = z.array
    return CTensor(sigma_re(arr.real) + 1j * sigma_im(arr.imag), dtype=z.dtype)


def type_b(sigma_r, sigma_phi, z: CTensor) -> CTensor:
    """Apply real functions to the modulus and phase; ``arg(0)`` is 0."""
    arr = z.array
    rho = np.abs(arr)
    theta = np.where(arr == 0, 0.0, np.angle(arr))
    out = sigma_r(rho) * np.exp(1j * sigma_phi(theta))
    return CTensor(out, dtype=z.dtype)


def _softmax(m: np.ndarray) -> np.ndarray:
    shifted = m - m.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _softmax_vjp(p: np.ndarray, g: np.ndarray) -> np.ndarray:
    # J^T g with J_ij = p_i (delta_ij - p_j)
    return p * (g - (g * p).sum(axis=-1, keepdims=True))


# ---------------------------------------------------------------------------
# activation objects
# ---------------------------------------------------------------------------

class Activation:
    """Base interface; elementwise unless ``is_head`` is set."""

    name = "?"
    is_head = False
    has_real = False

    def __call__(self, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def wirtinger_partials(self, z: np.ndarray):
        """Elementwise ``(d sigma/dz, d sigma/dz~)`` at ``z``."""
        raise NotImplementedError

    def scalar_apply(self, v):
        """Apply to a tape Var / Dual scalar via registered primitives."""
        raise NotImplementedError

    def apply_real(self, x: np.ndarray) -> np.ndarray:
        raise ConfigError(f"activation {self.name!r} has no real-valued counterpart")

    def deriv_real(self, x: np.ndarray) -> np.ndarray:
        raise ConfigError(f"activation {self.name!r} has no real-valued counterpart")

    def __repr__(self):
        return f"{type(self).__name__}()"


class Linear(Activation):
    name = "linear"
    has_real = True

    def __call__(self, z):
        return z

    def wirtinger_partials(self, z):
        return np.ones_like(z), np.zeros_like(z)

    def scalar_apply(self, v):
        return v

    def apply_real(self, x):
        return x

    def deriv_real(self, x):
        return np.ones_like(x)


def _relu(x):
    return np.maximum(x, 0.0)


def _relu_deriv(x):
    # slope 1 at the kink (right-sided limit)
    return np.where(x >= 0.0, 1.0, 0.0)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _sigmoid_deriv(x):
    s = _sigmoid(x)
    return s * (1.0 - s)


def _tanh_deriv(x):
    t = np.tanh(x)
    return 1.0 - t * t


def _selu(x):
    return SELU_LAMBDA * np.where(x > 0, x, SELU_ALPHA * (np.exp(np.minimum(x, 0.0)) - 1.0))


def _selu_deriv(x):
    return SELU_LAMBDA * np.where(x > 0, 1.0, SELU_ALPHA * np.exp(np.minimum(x, 0.0)))


_REAL_FNS = {
    "relu": (_relu, _relu_deriv, ad.relu),
    "sigmoid": (_sigmoid, _sigmoid_deriv, ad.sigmoid),
    "tanh": (np.tanh, _tanh_deriv, ad.tanh),
    "selu": (_selu, _selu_deriv, ad.selu),
}


class TypeA(Activation):
    """Split lifting: the same real nonlinearity on each part."""

    has_real = True

    def __init__(self, fn_name: str, act_name: str):
        self.fn, self.deriv, self._scalar_fn = _REAL_FNS[fn_name]
        self.name = act_name

    def __call__(self, z):
        return self.fn(z.real) + 1j * self.fn(z.imag)

    def wirtinger_partials(self, z):
        fr, fi = self.deriv(z.real), self.deriv(z.imag)
        return (fr + fi) / 2 + 0j, (fr - fi) / 2 + 0j

    def scalar_apply(self, v):
        return self._scalar_fn(ad.re(v)) + self._scalar_fn(ad.im(v)) * 1j

    def apply_real(self, x):
        return self.fn(x)

    def deriv_real(self, x):
        return self.deriv(x)

    def __repr__(self):
        return f"TypeA({self.name!r})"


class TypeB(Activation):
    """Polar lifting with the phase kept linear."""

    def __init__(self, fn_name: str, act_name: str):
        self.fn, self.deriv, self._scalar_fn = _REAL_FNS[fn_name]
        self.name = act_name

    def __call__(self, z):
        rho = np.abs(z)
        phase = np.where(rho == 0, 1.0 + 0j, z / np.where(rho == 0, 1.0, rho))
        return self.fn(rho) * phase

    def wirtinger_partials(self, z):
        rho = np.abs(z)
        safe = np.where(rho == 0, 1.0, rho)
        fp, f = self.deriv(rho), self.fn(rho)
        gz = (fp + f / safe) / 2 + 0j
        gzb = (z / safe) ** 2 * (fp - f / safe) / 2
        at0 = rho == 0
        if np.any(at0):
            gz = np.where(at0, self.deriv(np.zeros_like(rho)) + 0j, gz)
            gzb = np.where(at0, 0j, gzb)
        return gz, gzb

    def scalar_apply(self, v):
        return self._scalar_fn(ad.absval(v)) * ad.exp(ad.arg(v) * 1j)

    def __repr__(self):
        return f"TypeB({self.name!r})"


class ZRelu(Activation):
    """Identity on the open first quadrant, zero elsewhere (boundary included)."""

    name = "zrelu"

    def __call__(self, z):
        theta = np.angle(z)
        mask = (theta > 0) & (theta < np.pi / 2)
        return np.where(mask, z, 0j)

    def wirtinger_partials(self, z):
        theta = np.angle(z)
        mask = (theta > 0) & (theta < np.pi / 2)
        one = mask.astype(np.complex128)
        return one, np.zeros_like(one)

    def scalar_apply(self, v):
        theta = np.angle(complex(v.value if isinstance(v, ad.Var) else v.primal))
        return v * (1.0 if 0 < theta < np.pi / 2 else 0.0)


class ModRelu(Activation):
    """Radial ReLU: kills everything within radius ``-b``, keeps the phase."""

    def __init__(self, b: float = -1.0):
        self.b = float(b)
        self.name = "modrelu"

    def __call__(self, z):
        rho = np.abs(z)
        safe = np.where(rho == 0, 1.0, rho)
        return np.where(rho + self.b >= 0, _relu(rho + self.b) * z / safe, 0j)

    def wirtinger_partials(self, z):
        rho = np.abs(z)
        safe = np.where(rho == 0, 1.0, rho)
        active = (rho + self.b >= 0) & (rho > 0)
        gz = np.where(active, 1 + self.b / (2 * safe) + 0j, 0j)
        gzb = np.where(active, -self.b * (z / safe) ** 2 / (2 * safe), 0j)
        return gz, gzb

    def scalar_apply(self, v):
        value = complex(v.value if isinstance(v, ad.Var) else v.primal)
        if value == 0:
            return v * 0.0
        rho = ad.absval(v)
        return ad.relu(rho + self.b) * v / rho

    def __repr__(self):
        return f"ModRelu(b={self.b})"


class Cardioid(Activation):
    """Phase-dependent attenuation ``(1 + cos(arg z)) z / 2``."""

    name = "complex_cardioid"

    def __call__(self, z):
        theta = np.where(z == 0, 0.0, np.angle(z))
        return (1 + np.cos(theta)) * z / 2

    def wirtinger_partials(self, z):
        theta = np.where(z == 0, 0.0, np.angle(z))
        gz = (1 + np.cos(theta)) / 2 + 0.25j * np.sin(theta)
        phase2 = np.where(z == 0, 1.0 + 0j, (z / np.where(np.abs(z) == 0, 1.0, np.abs(z))) ** 2)
        gzb = -0.25j * np.sin(theta) * phase2
        return gz, gzb

    def scalar_apply(self, v):
        th = ad.arg(v)
        cos_th = (ad.exp(th * 1j) + ad.exp(th * -1j)) * 0.5
        return (cos_th + 1.0) * v * 0.5


class CastToReal(Activation):
    name = "cast_to_real"
    has_real = True

    def __call__(self, z):
        return z.real + 0j

    def wirtinger_partials(self, z):
        half = np.full_like(z, 0.5)
        return half, half

    def scalar_apply(self, v):
        return ad.re(v)

    def apply_real(self, x):
        return x

    def deriv_real(self, x):
        return np.ones_like(x)


class AbsOutput(Activation):
    name = "convert_to_real_with_abs"
    has_real = True

    def __call__(self, z):
        return np.abs(z) + 0j

    def wirtinger_partials(self, z):
        rho = np.abs(z)
        safe = np.where(rho == 0, 1.0, rho)
        gz = np.where(rho == 0, 0j, np.conj(z) / (2 * safe))
        gzb = np.where(rho == 0, 0j, z / (2 * safe))
        return gz, gzb

    def scalar_apply(self, v):
        return ad.absval(v)

    def apply_real(self, x):
        return np.abs(x)

    def deriv_real(self, x):
        return np.sign(x)


class SigmoidReal(Activation):
    """Logistic of the summed parts; a scalar-valued squashing head."""

    name = "sigmoid_real"
    has_real = True

    def __call__(self, z):
        return _sigmoid(z.real + z.imag) + 0j

    def wirtinger_partials(self, z):
        sp = _sigmoid_deriv(z.real + z.imag)
        return sp * (1 - 1j) / 2, sp * (1 + 1j) / 2

    def scalar_apply(self, v):
        return ad.sigmoid(ad.re(v) + ad.im(v))

    def apply_real(self, x):
        return _sigmoid(x)

    def deriv_real(self, x):
        return _sigmoid_deriv(x)


class SoftmaxHead(Activation):
    """Softmax over a real reduction of the class axis.

    ``reduction`` picks the real image of each logit: its modulus (the
    "modulo softmax" used by the experiment models), the mean of the parts,
    their product, or the mean of modulus and phase.
    """

    is_head = True

    def __init__(self, reduction: str, act_name: str):
        self.reduction = reduction
        self.name = act_name
        self.has_real = reduction == "abs"

    def _reduce(self, z):
        if self.reduction == "abs":
            return np.abs(z)
        if self.reduction == "avg":
            return (z.real + z.imag) / 2
        if self.reduction == "mult":
            return z.real * z.imag
        rho = np.abs(z)
        theta = np.where(z == 0, 0.0, np.angle(z))
        return (rho + theta) / 2

    def _reduce_partials(self, z):
        """Wirtinger pair of the reduction map."""
        if self.reduction == "abs":
            rho = np.abs(z)
            safe = np.where(rho == 0, 1.0, rho)
            return (np.where(rho == 0, 0j, np.conj(z) / (2 * safe)),
                    np.where(rho == 0, 0j, z / (2 * safe)))
        if self.reduction == "avg":
            return (np.full_like(z, (1 - 1j) / 4), np.full_like(z, (1 + 1j) / 4))
        if self.reduction == "mult":
            return ((z.imag - 1j * z.real) / 2 + 0j, (z.imag + 1j * z.real) / 2 + 0j)
        rho = np.abs(z)
        safe = np.where(rho == 0, 1.0, rho)
        m2 = safe * safe
        gz = np.conj(z) / (2 * safe) - 0.5j * np.conj(z) / m2
        gzb = z / (2 * safe) + 0.5j * z / m2
        zero = rho == 0
        return np.where(zero, 0j, gz / 2), np.where(zero, 0j, gzb / 2)

    def __call__(self, z):
        return _softmax(self._reduce(z)) + 0j

    def head_vjp(self, z, p, g_a, g_b):
        """Pull an adjoint pair on the probabilities back to the logits."""
        g_m_a = _softmax_vjp(p, g_a)
        g_m_b = _softmax_vjp(p, g_b)
        uz, uzb = self._reduce_partials(z)
        a = g_m_a * uz + g_m_b * np.conj(uzb)
        b = g_m_a * uzb + g_m_b * np.conj(uz)
        return a, b

    def apply_real(self, x):
        if not self.has_real:
            return super().apply_real(x)
        return _softmax(np.abs(x))

    def head_vjp_real(self, x, p, g):
        g_m = _softmax_vjp(p, g)
        return g_m * np.sign(x)


class CartSoftmax(Activation):
    """Separate softmax on each part; pairs with the two-part cross-entropy."""

    name = "cart_softmax"
    is_head = True
    has_real = True

    def __call__(self, z):
        return _softmax(z.real) + 1j * _softmax(z.imag)

    def head_vjp(self, z, p, g_a, g_b):
        g_re = (g_a + g_b).real  # df/d Re(out); imaginary residue is zero for real losses
        g_im = (1j * (g_a - g_b)).real
        gx = _softmax_vjp(p.real, g_re)
        gy = _softmax_vjp(p.imag, g_im)
        return (gx - 1j * gy) / 2, (gx + 1j * gy) / 2

    def apply_real(self, x):
        return _softmax(x)

    def head_vjp_real(self, x, p, g):
        return _softmax_vjp(p, g)


ACT_DISPATCHER = {
    "linear": Linear,
    # complex input, real output
    "cast_to_real": CastToReal,
    "convert_to_real_with_abs": AbsOutput,
    "sigmoid_real": SigmoidReal,
    "softmax_real_with_abs": lambda: SoftmaxHead("abs", "softmax_real_with_abs"),
    "softmax_real_with_avg": lambda: SoftmaxHead("avg", "softmax_real_with_avg"),
    "softmax_real_with_mult": lambda: SoftmaxHead("mult", "softmax_real_with_mult"),
    "softmax_real_with_polar": lambda: SoftmaxHead("polar", "softmax_real_with_polar"),
    "cart_softmax": CartSoftmax,
    # split (cartesian) liftings
    "cart_sigmoid": lambda: TypeA("sigmoid", "cart_sigmoid"),
    "cart_relu": lambda: TypeA("relu", "cart_relu"),
    "cart_tanh": lambda: TypeA("tanh", "cart_tanh"),
    "cart_selu": lambda: TypeA("selu", "cart_selu"),
    "crelu": lambda: TypeA("relu", "crelu"),
    # polar liftings
    "pol_tanh": lambda: TypeB("tanh", "pol_tanh"),
    "pol_sigmoid": lambda: TypeB("sigmoid", "pol_sigmoid"),
    # ReLU family
    "modrelu": ModRelu,
    "zrelu": ZRelu,
    "complex_cardioid": Cardioid,
}
