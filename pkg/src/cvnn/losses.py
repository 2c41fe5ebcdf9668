"""Real-valued losses over complex predictions.

Classification uses the two-part average cross-entropy (``ace``): the usual
categorical cross-entropy evaluated on the real and the imaginary part of the
prediction separately, then averaged.  For pipelines whose output head is
already real, ``cce_real`` is the plain categorical cross-entropy and the two
coincide.  Regression uses the quadratic ``0.5 * sum |y - d|^2``.

Probabilities are clamped to ``[1e-7, 1 - 1e-7]`` before the logarithm.
Each loss also exposes its exact derivative as a conjugate pair so the
training path can seed backpropagation without numerical differentiation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError

CLAMP_LO = 1e-7
CLAMP_HI = 1.0 - 1e-7

LOSS_KINDS = ("ace", "weighted_ace", "masked_ace", "complex_quadratic", "cce_real")


@dataclass(frozen=True)
class LossSpec:
    kind: str = "cce_real"
    class_weights: tuple | None = None
    ignore_label: int | None = None

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ConfigError(f"unknown loss kind {self.kind!r}")


def _as_array(x):
    return x.array if hasattr(x, "array") else np.asarray(x)


def _clamp(p):
    return np.clip(p, CLAMP_LO, CLAMP_HI)


def _clamp_mask(p):
    return ((p > CLAMP_LO) & (p < CLAMP_HI)).astype(np.float64)


def _check_classes(y, d):
    if y.shape != d.shape:
        raise DimensionError(f"prediction shape {y.shape} does not match targets {d.shape}")


def _sample_weights(d, labels, spec):
    """Per-sample weight and keep-mask from class weights / ignore label."""
    n = d.shape[0]
    w = np.ones(n)
    keep = np.ones(n, dtype=bool)
    if spec is not None and spec.class_weights is not None:
        cw = np.asarray(spec.class_weights, dtype=np.float64)
        if cw.shape[0] != d.shape[1]:
            raise DimensionError(
                f"class_weights length {cw.shape[0]} does not match class count {d.shape[1]}"
            )
        w = cw[labels]
    if spec is not None and spec.ignore_label is not None:
        keep = labels != spec.ignore_label
    return w, keep


def _cce_parts(p, d, w, keep):
    """Weighted categorical cross-entropy and its d/dp, masked mean."""
    denom = max(int(keep.sum()), 1)
    factor = (w * keep)[:, None] / denom
    value = float(-(factor * d * np.log(_clamp(p))).sum())
    grad = -factor * d / _clamp(p) * _clamp_mask(p)
    return value, grad


def cce_real(y, d, spec: LossSpec | None = None):
    """Categorical cross-entropy on a real (or real-valued complex) prediction."""
    y, d = _as_array(y), _as_array(d)
    _check_classes(y, d)
    labels = d.argmax(axis=-1)
    w, keep = _sample_weights(d, labels, spec)
    value, _ = _cce_parts(y.real, d, w, keep)
    return value


def ace(y, d, spec: LossSpec | None = None):
    """Two-part average cross-entropy of a complex prediction."""
    y, d = _as_array(y), _as_array(d)
    _check_classes(y, d)
    labels = d.argmax(axis=-1)
    w, keep = _sample_weights(d, labels, spec)
    v_re, _ = _cce_parts(y.real, d, w, keep)
    v_im, _ = _cce_parts(y.imag, d, w, keep)
    return 0.5 * (v_re + v_im)


def weighted_masked_ace(y, d, spec: LossSpec):
    """``ace`` with class weights and/or an ignored label applied."""
    return ace(y, d, spec)


def complex_quadratic(y, d):
    """``0.5 * sum |y - d|^2`` over every element (no batch averaging)."""
    y, d = _as_array(y), _as_array(d)
    if y.shape != d.shape:
        raise DimensionError(f"prediction shape {y.shape} does not match targets {d.shape}")
    e = y - d
    return float(0.5 * np.sum(e.real**2 + e.imag**2))


def loss_value(spec: LossSpec, y, d):
    if spec.kind == "complex_quadratic":
        return complex_quadratic(y, d)
    if spec.kind == "cce_real":
        return cce_real(y, d, spec)
    return ace(y, d, spec)


def loss_pair(spec: LossSpec, y, d):
    """Loss value plus its adjoint pair ``(dL/dy, dL/dy~)`` on the prediction."""
    y, d = _as_array(y), _as_array(d)
    if spec.kind == "complex_quadratic":
        e = y - d
        return complex_quadratic(y, d), np.conj(e) / 2, e / 2
    _check_classes(y, d)
    labels = d.argmax(axis=-1)
    w, keep = _sample_weights(d, labels, spec)
    if spec.kind == "cce_real":
        value, gx = _cce_parts(y.real, d, w, keep)
        return value, gx / 2 + 0j, gx / 2 + 0j
    v_re, gx = _cce_parts(y.real, d, w, keep)
    v_im, gy = _cce_parts(y.imag, d, w, keep)
    gx, gy = gx / 2, gy / 2  # the two branches enter with weight 1/2 each
    return 0.5 * (v_re + v_im), (gx - 1j * gy) / 2, (gx + 1j * gy) / 2


def loss_grad_real(spec: LossSpec, y, d):
    """Loss value plus plain ``dL/dy`` for a real-valued prediction.

    In a real pipeline the two-part average degenerates, so every
    cross-entropy kind reduces to the plain categorical cross-entropy.
    """
    y, d = _as_array(y), _as_array(d)
    if spec.kind == "complex_quadratic":
        e = y - d
        return float(0.5 * np.sum(e * e)), e
    _check_classes(y, d)
    labels = d.argmax(axis=-1)
    w, keep = _sample_weights(d, labels, spec)
    return _cce_parts(y, d, w, keep)


def loss_and_head_gradient(spec: LossSpec, pre, post, d, head, real_mode: bool = False):
    """Loss value and ``dL/dV`` at the last layer's pre-activation.

    Used by the layered analytic recursion.  Class-coupled heads are folded
    into the loss via explicit softmax Jacobians; elementwise activations are
    handled through their local derivative pair.
    """
    d = _as_array(d)
    if getattr(head, "is_head", False):
        labels = d.argmax(axis=-1)
        w, keep = _sample_weights(d, labels, spec)
        if head.name == "cart_softmax" and not real_mode:
            value = loss_value(spec, post, d)
            p_re, p_im = post.real, post.imag
            _, gp_re = _cce_parts(p_re, d, w, keep)
            gx = np.einsum("bi,bij->bj", gp_re, _softmax_jacobian(p_re))
            if spec.kind == "cce_real":
                gy = np.zeros_like(gx)
            else:
                _, gp_im = _cce_parts(p_im, d, w, keep)
                gx = 0.5 * gx
                gy = 0.5 * np.einsum("bi,bij->bj", gp_im, _softmax_jacobian(p_im))
            return value, (gx - 1j * gy) / 2
        if real_mode:
            value, gp = _cce_parts(post, d, w, keep)
            g_m = np.einsum("bi,bij->bj", gp, _softmax_jacobian(post))
            if head.name == "cart_softmax":
                return value, g_m
            return value, g_m * np.sign(pre)
        value = loss_value(spec, post, d)
        p = post.real
        _, gp = _cce_parts(p, d, w, keep)
        if spec.kind != "cce_real":
            gp = gp / 2  # the all-zero imaginary branch sits at the clamp floor
        g_m = np.einsum("bi,bij->bj", gp, _softmax_jacobian(p))
        uz, _ = head._reduce_partials(pre)
        return value, g_m * uz

    if real_mode:
        value, g = loss_grad_real(spec, post, d)
        return value, g * head.deriv_real(pre)
    value, a, _ = loss_pair(spec, post, d)
    gz, gzb = head.wirtinger_partials(pre)
    return value, a * gz + np.conj(a) * np.conj(gzb)


def _softmax_jacobian(p):
    """Per-sample Jacobian ``J_ij = p_i (delta_ij - p_j)`` of the softmax."""
    eye = np.eye(p.shape[-1])
    return p[..., :, None] * (eye - p[..., None, :])
