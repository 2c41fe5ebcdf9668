"""Network layers with forward semantics and closed-form backward passes.

Layers operate on numpy arrays (batch leading) and carry their own trainable
state.  In complex mode the backward pass propagates the conjugate adjoint
pair ``(dL/dz, dL/dz~)`` through every op and parameter gradients are
returned in the optimizer convention ``2 * dL/dw~``; in real mode a single
real adjoint flows and gradients are plain ``dL/dw``.

Module-level functions mirror the layer kernels on single (unbatched)
:class:`~cvnn.ctensor.CTensor` values for direct use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import activations as acts
from . import initializers as inits
from .ctensor import CTensor, correlate2d_batched
from .errors import ConfigError, DegenerateBatchError, DimensionError, IntegrityError

BN_RIDGE = 1e-5


def _resolve_init(initializer) -> inits.InitializerSpec:
    if isinstance(initializer, inits.InitializerSpec):
        return initializer
    if isinstance(initializer, str):
        return inits.from_name(initializer)
    raise ConfigError(f"cannot interpret initializer {initializer!r}")


class Layer:
    """Common interface; concrete layers override what they support."""

    trainable = False
    emits_argmax = False
    consumes_argmax = False

    def build(self, input_shape, mode, np_dtype, seed, index):
        """Shape inference plus parameter allocation; returns the output shape."""
        raise NotImplementedError

    def forward(self, x, training=False):
        raise NotImplementedError

    def backward(self, ga, gb):
        raise NotImplementedError

    def backward_real(self, g):
        raise NotImplementedError

    def parameters(self):
        return []

    def gradients(self):
        return []

    def real_equivalent(self, multiplier):
        raise ConfigError(f"{type(self).__name__} has no real-valued counterpart")

    def config(self):
        raise NotImplementedError


class ComplexDense(Layer):
    """Fully-connected layer ``activation(x @ w.T + bias)``."""

    trainable = True

    def __init__(self, units, activation="linear", initializer="ComplexGlorotUniform"):
        if units < 1:
            raise ConfigError(f"units must be >= 1, got {units}")
        self.units = int(units)
        self.activation = acts.resolve(activation)
        self.init_spec = _resolve_init(initializer)
        self.weights = None
        self.bias = None

    def build(self, input_shape, mode, np_dtype, seed, index):
        if len(input_shape) != 1:
            raise DimensionError(f"dense layer expects flat input, got shape {input_shape}")
        fan_in = int(input_shape[0])
        fans = inits.FanPair(fan_in, self.units)
        if mode == "real" and not self.init_spec.is_real:
            raise ConfigError("real-mode dense layer needs a real initializer spec")
        w = inits.sample_for_layer(self.init_spec, (self.units, fan_in), fans, seed, index)
        self.weights = (w.array if isinstance(w, CTensor) else w).astype(np_dtype)
        self.bias = np.zeros(self.units, dtype=np_dtype)
        return (self.units,)

    def forward(self, x, training=False):
        v = x @ self.weights.T + self.bias
        act = self.activation
        out = act.apply_real(v) if not np.iscomplexobj(v) else act(v)
        if training:
            self._x, self._v = x, v
            self._p = out if act.is_head else None
        return out

    def backward(self, ga, gb):
        act = self.activation
        if act.is_head:
            av, bv = act.head_vjp(self._v, self._p, ga, gb)
        else:
            gz, gzb = act.wirtinger_partials(self._v)
            av = ga * gz + gb * np.conj(gzb)
            bv = ga * gzb + gb * np.conj(gz)
        self.grad_weights = 2 * (bv.T @ np.conj(self._x))
        self.grad_bias = 2 * bv.sum(axis=0)
        return av @ self.weights, bv @ np.conj(self.weights)

    def backward_real(self, g):
        act = self.activation
        gv = act.head_vjp_real(self._v, self._p, g) if act.is_head else g * act.deriv_real(self._v)
        self.grad_weights = gv.T @ self._x
        self.grad_bias = gv.sum(axis=0)
        return gv @ self.weights

    def parameters(self):
        return [self.weights, self.bias]

    def gradients(self):
        return [self.grad_weights, self.grad_bias]

    def real_equivalent(self, multiplier):
        units = max(1, round(self.units * multiplier))
        spec = self.init_spec if self.init_spec.is_real else inits.real_equivalent_spec(self.init_spec)
        if not self.activation.has_real:
            raise ConfigError(f"activation {self.activation.name!r} has no real-valued counterpart")
        return ComplexDense(units, self.activation.name, spec)

    def config(self):
        return {
            "type": "ComplexDense",
            "units": self.units,
            "activation": self.activation.name,
            "activation_params": getattr(self.activation, "b", None),
            "initializer": self.init_spec.scheme,
            "init_scale": self.init_spec.scale,
        }

    def __repr__(self):
        return f"ComplexDense(units={self.units}, activation={self.activation.name!r})"


class ComplexFlatten(Layer):
    def build(self, input_shape, mode, np_dtype, seed, index):
        self._in = tuple(input_shape)
        return (int(np.prod(input_shape)),)

    def forward(self, x, training=False):
        return x.reshape(x.shape[0], -1)

    def backward(self, ga, gb):
        return ga.reshape((-1,) + self._in), gb.reshape((-1,) + self._in)

    def backward_real(self, g):
        return g.reshape((-1,) + self._in)

    def real_equivalent(self, multiplier):
        return ComplexFlatten()

    def config(self):
        return {"type": "ComplexFlatten"}


class ComplexDropout(Layer):
    """Joint dropout: one Bernoulli mask per complex element, parts coincide."""

    def __init__(self, rate):
        if not 0.0 <= rate < 1.0:
            raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = float(rate)
        self._rng = None

    def build(self, input_shape, mode, np_dtype, seed, index):
        return tuple(input_shape)

    def forward(self, x, training=False):
        if not training or self.rate == 0.0:
            return x
        if self._rng is None:
            raise ConfigError("dropout used in training mode without an attached rng")
        keep = self._rng.random(x.shape) >= self.rate
        self._mask = keep / (1.0 - self.rate)
        return x * self._mask

    def backward(self, ga, gb):
        if self.rate == 0.0:
            return ga, gb
        return ga * self._mask, gb * self._mask

    def backward_real(self, g):
        return g if self.rate == 0.0 else g * self._mask

    def real_equivalent(self, multiplier):
        return ComplexDropout(self.rate)

    def config(self):
        return {"type": "ComplexDropout", "rate": self.rate}


@dataclass
class ArgmaxMap:
    """Flat spatial indices (``row * W + col``) of pooled maxima."""

    indices: np.ndarray  # B x H' x W' x C, int64
    source_hw: tuple

    def __post_init__(self):
        h, w = self.source_hw
        if self.indices.size and (self.indices.min() < 0 or self.indices.max() >= h * w):
            raise IntegrityError("argmax indices outside the source extent")


def _pool_windows(x, window, stride):
    ph, pw = window
    sh, sw = stride
    if ph > x.shape[1] or pw > x.shape[2]:
        raise DimensionError(f"pool window {window} larger than input {x.shape[1:3]}")
    views = np.lib.stride_tricks.sliding_window_view(x, (ph, pw), axis=(1, 2))
    return views[:, ::sh, ::sw]  # B x H' x W' x C x ph x pw


def _max_pool_forward(x, window, stride):
    views = _pool_windows(x, window, stride)
    b, ho, wo, c, ph, pw = views.shape
    flatw = views.reshape(b, ho, wo, c, ph * pw)
    # first maximal modulus wins: scanning order matches ascending source index
    winner = np.abs(flatw).argmax(axis=-1)
    out = np.take_along_axis(flatw, winner[..., None], axis=-1)[..., 0]
    sh, sw = stride
    u, v = winner // pw, winner % pw
    rows = np.arange(ho)[None, :, None, None] * sh + u
    cols = np.arange(wo)[None, None, :, None] * sw + v
    idx = rows * x.shape[2] + cols
    return out, ArgmaxMap(idx.astype(np.int64), (x.shape[1], x.shape[2]))


def _scatter_by_argmax(g, amap, out_hw):
    b, ho, wo, c = g.shape
    h, w = out_hw
    flat = np.zeros((b, h * w, c), dtype=g.dtype)
    bi = np.arange(b)[:, None, None, None]
    ci = np.arange(c)[None, None, None, :]
    np.add.at(flat, (bi, amap.indices, ci), g)
    return flat.reshape(b, h, w, c)


class ComplexMaxPooling2D(Layer):
    """Window maximum by modulus; ties go to the lowest flat index."""

    def __init__(self, pool_size=(2, 2), strides=None, with_argmax=False):
        self.window = tuple(pool_size)
        self.stride = tuple(strides) if strides is not None else self.window
        self.with_argmax = with_argmax
        self.emits_argmax = with_argmax

    def build(self, input_shape, mode, np_dtype, seed, index):
        h, w, c = input_shape
        self._in_hw = (h, w)
        ho = (h - self.window[0]) // self.stride[0] + 1
        wo = (w - self.window[1]) // self.stride[1] + 1
        return (ho, wo, c)

    def forward(self, x, training=False):
        out, amap = _max_pool_forward(x, self.window, self.stride)
        if training:
            self._amap, self._hw = amap, (x.shape[1], x.shape[2])
        if self.with_argmax:
            return out, amap
        return out

    def backward(self, ga, gb):
        return (
            _scatter_by_argmax(ga, self._amap, self._hw),
            _scatter_by_argmax(gb, self._amap, self._hw),
        )

    def backward_real(self, g):
        return _scatter_by_argmax(g, self._amap, self._hw)

    def config(self):
        return {
            "type": "ComplexMaxPooling2D",
            "pool_size": list(self.window),
            "strides": list(self.stride),
            "with_argmax": self.with_argmax,
        }


AVG_MODES = ("avg_arithmetic", "avg_circular", "avg_circular_norm")


def _unit(z):
    rho = np.abs(z)
    return np.where(rho == 0, 0j, z / np.where(rho == 0, 1.0, rho))


class ComplexAvgPooling2D(Layer):
    """Window mean: plain complex mean, circular (phase) mean, or circular
    mean re-scaled by the mean modulus."""

    def __init__(self, pool_size=(2, 2), strides=None, mode="avg_arithmetic"):
        if mode not in AVG_MODES:
            raise ConfigError(f"unknown average pooling mode {mode!r}")
        self.window = tuple(pool_size)
        self.stride = tuple(strides) if strides is not None else self.window
        self.mode = mode

    def build(self, input_shape, mode, np_dtype, seed, index):
        h, w, c = input_shape
        ho = (h - self.window[0]) // self.stride[0] + 1
        wo = (w - self.window[1]) // self.stride[1] + 1
        return (ho, wo, c)

    def forward(self, x, training=False):
        views = _pool_windows(x, self.window, self.stride)
        if training:
            self._x_shape, self._views = x.shape, views
        if self.mode == "avg_arithmetic":
            return views.mean(axis=(-2, -1))
        nz = views != 0
        n_nz = np.maximum(nz.sum(axis=(-2, -1)), 1)
        circ = (_unit(views).sum(axis=(-2, -1))) / n_nz
        if self.mode == "avg_circular":
            return circ
        mean_mod = np.abs(views).mean(axis=(-2, -1))
        return mean_mod * _unit(circ)

    # backward distributes through the window; each mode chains its own
    # elementwise partials (derived from |z| and z/|z|)
    def backward(self, ga, gb):
        views = self._views
        b, h, w, c = self._x_shape
        ph, pw = self.window
        n_all = ph * pw
        if self.mode == "avg_arithmetic":
            da = np.broadcast_to((ga / n_all)[..., None, None], views.shape)
            db = np.broadcast_to((gb / n_all)[..., None, None], views.shape)
            return self._scatter(da, db)
        nz = views != 0
        n_nz = np.maximum(nz.sum(axis=(-2, -1)), 1)[..., None, None]
        rho = np.abs(views)
        safe = np.where(rho == 0, 1.0, rho)
        # unit-normalization partials per element
        uz = 1.0 / (2 * safe)
        uzb = -(views**2) / (2 * safe**3)
        if self.mode == "avg_circular":
            a_up = ga[..., None, None] / n_nz
            b_up = gb[..., None, None] / n_nz
            da = np.where(nz, a_up * uz + b_up * np.conj(uzb), 0j)
            db = np.where(nz, a_up * uzb + b_up * np.conj(uz), 0j)
            return self._scatter(da, db)
        # circular_norm: out = mean|z| * unit(circmean)
        m = _unit(views).sum(axis=(-2, -1)) / n_nz[..., 0, 0]
        mean_mod = rho.mean(axis=(-2, -1))
        wdir = _unit(m)
        # pair on the scalar factors
        a_m = ga * mean_mod
        b_m = gb * mean_mod
        rho_m = np.abs(m)
        safe_m = np.where(rho_m == 0, 1.0, rho_m)
        wz = 1.0 / (2 * safe_m)
        wzb = -(m**2) / (2 * safe_m**3)
        a_circ = np.where(rho_m == 0, 0j, a_m * wz + b_m * np.conj(wzb))[..., None, None] / n_nz
        b_circ = np.where(rho_m == 0, 0j, a_m * wzb + b_m * np.conj(wz))[..., None, None] / n_nz
        da = np.where(nz, a_circ * uz + b_circ * np.conj(uzb), 0j)
        db = np.where(nz, a_circ * uzb + b_circ * np.conj(uz), 0j)
        # modulus-mean factor: adjoint pair on mean|z|, then d|z| partials
        a_mod = (ga * wdir)[..., None, None] / n_all
        b_mod = (gb * np.conj(wdir))[..., None, None] / n_all
        mz = np.where(rho == 0, 0j, np.conj(views) / (2 * safe))
        mzb = np.where(rho == 0, 0j, views / (2 * safe))
        da = da + a_mod * mz + b_mod * np.conj(mzb)
        db = db + a_mod * mzb + b_mod * np.conj(mz)
        return self._scatter(da, db)

    def backward_real(self, g):
        if self.mode != "avg_arithmetic":
            raise ConfigError("only arithmetic average pooling has a real counterpart")
        views = self._views
        da = np.broadcast_to((g / (self.window[0] * self.window[1]))[..., None, None], views.shape)
        return self._scatter_one(da)

    def _scatter(self, da, db):
        return self._scatter_one(da), self._scatter_one(db)

    def _scatter_one(self, d):
        b, h, w, c = self._x_shape
        out = np.zeros((b, h, w, c), dtype=d.dtype)
        sh, sw = self.stride
        ph, pw = self.window
        _, ho, wo = d.shape[0], d.shape[1], d.shape[2]
        for u in range(ph):
            for v in range(pw):
                out[:, u : u + ho * sh : sh, v : v + wo * sw : sw] += d[..., u, v]
        return out

    def real_equivalent(self, multiplier):
        if self.mode != "avg_arithmetic":
            raise ConfigError(f"{self.mode!r} pooling has no real-valued counterpart")
        return ComplexAvgPooling2D(self.window, self.stride, self.mode)

    def config(self):
        return {
            "type": "ComplexAvgPooling2D",
            "pool_size": list(self.window),
            "strides": list(self.stride),
            "mode": self.mode,
        }


def _bilinear_axis_map(n_in, n_out):
    """Half-pixel-center source indices and weights (corners not aligned)."""
    scale = n_in / n_out
    src = (np.arange(n_out) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, n_in - 1.0)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_in - 1)
    w1 = src - i0
    return i0, i1, w1


class ComplexUpSampling2D(Layer):
    """Nearest or bilinear enlargement, interpolating parts independently."""

    def __init__(self, factor=(2, 2), mode="nearest"):
        if isinstance(factor, int):
            factor = (factor, factor)
        if factor[0] < 1 or factor[1] < 1:
            raise ConfigError(f"upsampling factor must be >= 1, got {factor}")
        if mode not in ("nearest", "bilinear"):
            raise ConfigError(f"unknown upsampling mode {mode!r}")
        self.factor = tuple(int(f) for f in factor)
        self.mode = mode

    def build(self, input_shape, mode, np_dtype, seed, index):
        h, w, c = input_shape
        self._in_hw = (h, w)
        return (h * self.factor[0], w * self.factor[1], c)

    def forward(self, x, training=False):
        fh, fw = self.factor
        if training:
            self._in_hw = (x.shape[1], x.shape[2])
        if self.mode == "nearest":
            return x.repeat(fh, axis=1).repeat(fw, axis=2)
        h, w = x.shape[1], x.shape[2]
        r0, r1, rw = _bilinear_axis_map(h, h * fh)
        c0, c1, cw = _bilinear_axis_map(w, w * fw)
        rows = x[:, r0] * (1 - rw)[None, :, None, None] + x[:, r1] * rw[None, :, None, None]
        out = rows[:, :, c0] * (1 - cw)[None, None, :, None] + rows[:, :, c1] * cw[None, None, :, None]
        return out

    def _adjoint(self, g):
        fh, fw = self.factor
        h, w = self._in_hw
        if self.mode == "nearest":
            b, ho, wo, c = g.shape
            return g.reshape(b, h, fh, w, fw, c).sum(axis=(2, 4))
        r0, r1, rw = _bilinear_axis_map(h, h * fh)
        c0, c1, cw = _bilinear_axis_map(w, w * fw)
        mid = np.zeros((g.shape[0], h * fh, w, g.shape[3]), dtype=g.dtype)
        np.add.at(mid, (slice(None), slice(None), c0), g * (1 - cw)[None, None, :, None])
        np.add.at(mid, (slice(None), slice(None), c1), g * cw[None, None, :, None])
        out = np.zeros((g.shape[0], h, w, g.shape[3]), dtype=g.dtype)
        np.add.at(out, (slice(None), r0), mid * (1 - rw)[None, :, None, None])
        np.add.at(out, (slice(None), r1), mid * rw[None, :, None, None])
        return out

    def backward(self, ga, gb):
        return self._adjoint(ga), self._adjoint(gb)

    def backward_real(self, g):
        return self._adjoint(g)

    def real_equivalent(self, multiplier):
        return ComplexUpSampling2D(self.factor, self.mode)

    def config(self):
        return {"type": "ComplexUpSampling2D", "factor": list(self.factor), "mode": self.mode}


class ComplexConv2D(Layer):
    """2-D cross-correlation over channels-last images."""

    trainable = True

    def __init__(self, filters, kernel_size, strides=(1, 1), padding="valid",
                 activation="linear", initializer="ComplexGlorotUniform"):
        if isinstance(kernel_size, int):
            kernel_size = (kernel_size, kernel_size)
        if isinstance(strides, int):
            strides = (strides, strides)
        if padding not in ("valid", "same"):
            raise ConfigError(f"unknown padding {padding!r}")
        self.filters = int(filters)
        self.kernel_size = tuple(kernel_size)
        self.stride = tuple(strides)
        self.padding = padding
        self.activation = acts.resolve(activation)
        self.init_spec = _resolve_init(initializer)
        self.weights = None
        self.bias = None

    def _pad_amounts(self):
        kh, kw = self.kernel_size
        if self.padding == "valid":
            return (0, 0), (0, 0)
        ph, pw = kh - 1, kw - 1
        return (ph // 2, ph - ph // 2), (pw // 2, pw - pw // 2)

    def build(self, input_shape, mode, np_dtype, seed, index):
        h, w, cin = input_shape
        kh, kw = self.kernel_size
        fans = inits.FanPair(kh * kw * cin, kh * kw * self.filters)
        if mode == "real" and not self.init_spec.is_real:
            raise ConfigError("real-mode conv layer needs a real initializer spec")
        k = inits.sample_for_layer(self.init_spec, (kh, kw, cin, self.filters), fans, seed, index)
        self.weights = (k.array if isinstance(k, CTensor) else k).astype(np_dtype)
        self.bias = np.zeros(self.filters, dtype=np_dtype)
        (pt, pb), (pl, pr) = self._pad_amounts()
        hp, wp = h + pt + pb, w + pl + pr
        if kh > hp or kw > wp:
            raise DimensionError(f"kernel {self.kernel_size} larger than padded input {(hp, wp)}")
        ho = (hp - kh) // self.stride[0] + 1
        wo = (wp - kw) // self.stride[1] + 1
        return (ho, wo, self.filters)

    def forward(self, x, training=False):
        (pt, pb), (pl, pr) = self._pad_amounts()
        xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0))) if self.padding == "same" else x
        v = correlate2d_batched(xp, self.weights, self.stride) + self.bias
        act = self.activation
        out = act.apply_real(v) if not np.iscomplexobj(v) else act(v)
        if training:
            self._xp, self._v = xp, v
            self._p = out if act.is_head else None
        return out

    def _offset_slices(self, u, v, ho, wo):
        sh, sw = self.stride
        return slice(u, u + ho * sh, sh), slice(v, v + wo * sw, sw)

    def backward(self, ga, gb):
        act = self.activation
        if act.is_head:
            av, bv = act.head_vjp(self._v, self._p, ga, gb)
        else:
            gz, gzb = act.wirtinger_partials(self._v)
            av = ga * gz + gb * np.conj(gzb)
            bv = ga * gzb + gb * np.conj(gz)
        kh, kw = self.kernel_size
        ho, wo = av.shape[1], av.shape[2]
        d_k = np.zeros_like(self.weights)
        d_xa = np.zeros_like(self._xp)
        d_xb = np.zeros_like(self._xp)
        for u in range(kh):
            for v in range(kw):
                rs, cs = self._offset_slices(u, v, ho, wo)
                xs = self._xp[:, rs, cs]
                d_k[u, v] = np.einsum("bpqc,bpqo->co", np.conj(xs), bv)
                d_xa[:, rs, cs] += np.einsum("bpqo,co->bpqc", av, self.weights[u, v])
                d_xb[:, rs, cs] += np.einsum("bpqo,co->bpqc", bv, np.conj(self.weights[u, v]))
        self.grad_weights = 2 * d_k
        self.grad_bias = 2 * bv.sum(axis=(0, 1, 2))
        (pt, pb), (pl, pr) = self._pad_amounts()
        if self.padding == "same":
            sl = (slice(None), slice(pt, d_xa.shape[1] - pb or None), slice(pl, d_xa.shape[2] - pr or None))
            return d_xa[sl], d_xb[sl]
        return d_xa, d_xb

    def backward_real(self, g):
        act = self.activation
        gv = act.head_vjp_real(self._v, self._p, g) if act.is_head else g * act.deriv_real(self._v)
        kh, kw = self.kernel_size
        ho, wo = gv.shape[1], gv.shape[2]
        d_k = np.zeros_like(self.weights)
        d_x = np.zeros_like(self._xp)
        for u in range(kh):
            for v in range(kw):
                rs, cs = self._offset_slices(u, v, ho, wo)
                d_k[u, v] = np.einsum("bpqc,bpqo->co", self._xp[:, rs, cs], gv)
                d_x[:, rs, cs] += np.einsum("bpqo,co->bpqc", gv, self.weights[u, v])
        self.grad_weights = d_k
        self.grad_bias = gv.sum(axis=(0, 1, 2))
        (pt, pb), (pl, pr) = self._pad_amounts()
        if self.padding == "same":
            sl = (slice(None), slice(pt, d_x.shape[1] - pb or None), slice(pl, d_x.shape[2] - pr or None))
            return d_x[sl]
        return d_x

    def parameters(self):
        return [self.weights, self.bias]

    def gradients(self):
        return [self.grad_weights, self.grad_bias]

    def real_equivalent(self, multiplier):
        filters = max(1, round(self.filters * multiplier))
        spec = self.init_spec if self.init_spec.is_real else inits.real_equivalent_spec(self.init_spec)
        if not self.activation.has_real:
            raise ConfigError(f"activation {self.activation.name!r} has no real-valued counterpart")
        return ComplexConv2D(filters, self.kernel_size, self.stride, self.padding,
                             self.activation.name, spec)

    def config(self):
        return {
            "type": "ComplexConv2D",
            "filters": self.filters,
            "kernel_size": list(self.kernel_size),
            "strides": list(self.stride),
            "padding": self.padding,
            "activation": self.activation.name,
            "initializer": self.init_spec.scheme,
            "init_scale": self.init_spec.scale,
        }


class ComplexConv2DTranspose(Layer):
    """Stride-aware scatter of kernel copies; the adjoint of ``conv2d``."""

    trainable = True

    def __init__(self, filters, kernel_size, strides=(1, 1),
                 activation="linear", initializer="ComplexGlorotUniform"):
        if isinstance(kernel_size, int):
            kernel_size = (kernel_size, kernel_size)
        if isinstance(strides, int):
            strides = (strides, strides)
        self.filters = int(filters)
        self.kernel_size = tuple(kernel_size)
        self.stride = tuple(strides)
        self.activation = acts.resolve(activation)
        self.init_spec = _resolve_init(initializer)
        self.weights = None
        self.bias = None

    def build(self, input_shape, mode, np_dtype, seed, index):
        h, w, cin = input_shape
        kh, kw = self.kernel_size
        fans = inits.FanPair(kh * kw * cin, kh * kw * self.filters)
        if mode == "real" and not self.init_spec.is_real:
            raise ConfigError("real-mode transposed conv needs a real initializer spec")
        k = inits.sample_for_layer(self.init_spec, (kh, kw, self.filters, cin), fans, seed, index)
        self.weights = (k.array if isinstance(k, CTensor) else k).astype(np_dtype)
        self.bias = np.zeros(self.filters, dtype=np_dtype)
        ho = (h - 1) * self.stride[0] + kh
        wo = (w - 1) * self.stride[1] + kw
        return (ho, wo, self.filters)

    def forward(self, x, training=False):
        v = transpose_scatter(x, self.weights, self.stride) + self.bias
        act = self.activation
        out = act.apply_real(v) if not np.iscomplexobj(v) else act(v)
        if training:
            self._x, self._v = x, v
            self._p = out if act.is_head else None
        return out

    def backward(self, ga, gb):
        act = self.activation
        if act.is_head:
            av, bv = act.head_vjp(self._v, self._p, ga, gb)
        else:
            gz, gzb = act.wirtinger_partials(self._v)
            av = ga * gz + gb * np.conj(gzb)
            bv = ga * gzb + gb * np.conj(gz)
        kh, kw = self.kernel_size
        sh, sw = self.stride
        hin, win = self._x.shape[1], self._x.shape[2]
        d_k = np.zeros_like(self.weights)
        d_xa = np.zeros_like(self._x)
        d_xb = np.zeros_like(self._x)
        for u in range(kh):
            for v in range(kw):
                rs = slice(u, u + hin * sh, sh)
                cs = slice(v, v + win * sw, sw)
                d_k[u, v] = np.einsum("bijc,bijo->co", bv[:, rs, cs], np.conj(self._x))
                d_xa += np.einsum("bijc,co->bijo", av[:, rs, cs], self.weights[u, v])
                d_xb += np.einsum("bijc,co->bijo", bv[:, rs, cs], np.conj(self.weights[u, v]))
        self.grad_weights = 2 * d_k
        self.grad_bias = 2 * bv.sum(axis=(0, 1, 2))
        return d_xa, d_xb

    def backward_real(self, g):
        act = self.activation
        gv = act.head_vjp_real(self._v, self._p, g) if act.is_head else g * act.deriv_real(self._v)
        kh, kw = self.kernel_size
        sh, sw = self.stride
        hin, win = self._x.shape[1], self._x.shape[2]
        d_k = np.zeros_like(self.weights)
        d_x = np.zeros_like(self._x)
        for u in range(kh):
            for v in range(kw):
                rs = slice(u, u + hin * sh, sh)
                cs = slice(v, v + win * sw, sw)
                d_k[u, v] = np.einsum("bijc,bijo->co", gv[:, rs, cs], self._x)
                d_x += np.einsum("bijc,co->bijo", gv[:, rs, cs], self.weights[u, v])
        self.grad_weights = d_k
        self.grad_bias = gv.sum(axis=(0, 1, 2))
        return d_x

    def parameters(self):
        return [self.weights, self.bias]

    def gradients(self):
        return [self.grad_weights, self.grad_bias]

    def config(self):
        return {
            "type": "ComplexConv2DTranspose",
            "filters": self.filters,
            "kernel_size": list(self.kernel_size),
            "strides": list(self.stride),
            "activation": self.activation.name,
            "initializer": self.init_spec.scheme,
            "init_scale": self.init_spec.scale,
        }


def transpose_scatter(x, k, stride):
    """Core of the transposed convolution: place a kernel copy per pixel."""
    b, h, w, cin = x.shape
    kh, kw, cout, _ = k.shape
    sh, sw = stride
    out = np.zeros((b, (h - 1) * sh + kh, (w - 1) * sw + kw, cout), dtype=np.result_type(x, k))
    for u in range(kh):
        for v in range(kw):
            out[:, u : u + h * sh : sh, v : v + w * sw : sw] += np.einsum("bijo,co->bijc", x, k[u, v])
    return out


class ComplexUnPooling2D(Layer):
    """Scatter values back to recorded argmax locations, zeros elsewhere."""

    consumes_argmax = True

    def __init__(self, output_shape=None, upsampling_factor=None):
        if (output_shape is None) == (upsampling_factor is None):
            raise ConfigError("give exactly one of output_shape / upsampling_factor")
        if upsampling_factor is not None and isinstance(upsampling_factor, int):
            upsampling_factor = (upsampling_factor, upsampling_factor)
        self.output_hw = tuple(output_shape) if output_shape is not None else None
        self.factor = tuple(upsampling_factor) if upsampling_factor is not None else None

    def build(self, input_shape, mode, np_dtype, seed, index):
        h, w, c = input_shape
        hw = self.output_hw if self.output_hw is not None else (h * self.factor[0], w * self.factor[1])
        self._out_hw = hw
        return (hw[0], hw[1], c)

    def forward(self, x, training=False):
        values, amap = x
        hw = self.output_hw if self.output_hw is not None else (
            values.shape[1] * self.factor[0], values.shape[2] * self.factor[1])
        self._out_hw = hw
        if training:
            self._amap = amap
        return scatter_unpool(values, amap, hw)

    def backward(self, ga, gb):
        return _gather_by_argmax(ga, self._amap), _gather_by_argmax(gb, self._amap)

    def backward_real(self, g):
        return _gather_by_argmax(g, self._amap)

    def config(self):
        return {
            "type": "ComplexUnPooling2D",
            "output_shape": list(self.output_hw) if self.output_hw else None,
            "upsampling_factor": list(self.factor) if self.factor else None,
        }


def scatter_unpool(values, amap, out_hw):
    """Zeros of the target extent with ``values`` placed at the map's indices."""
    b, ho, wo, c = values.shape
    h, w = out_hw
    idx = amap.indices
    if idx.shape != values.shape:
        raise DimensionError(f"argmax map shape {idx.shape} does not match values {values.shape}")
    if idx.min() < 0 or idx.max() >= h * w:
        raise IntegrityError("argmax index outside the requested output extent")
    counts = np.zeros((b, h * w, c), dtype=np.int64)
    bi = np.arange(b)[:, None, None, None]
    ci = np.arange(c)[None, None, None, :]
    np.add.at(counts, (bi, idx, ci), 1)
    if counts.max() > 1:
        raise IntegrityError("duplicate indices in the argmax map")
    flat = np.zeros((b, h * w, c), dtype=values.dtype)
    flat[bi, idx, ci] = values
    return flat.reshape(b, h, w, c)


def _gather_by_argmax(g, amap):
    b, h, w, c = g.shape
    flat = g.reshape(b, h * w, c)
    bi = np.arange(b)[:, None, None, None]
    ci = np.arange(c)[None, None, None, :]
    return flat[bi, amap.indices, ci]


def _invsqrt_2x2(sig):
    """Closed-form inverse square root of symmetric PD 2x2 matrices (F,2,2)."""
    m11, m12, m22 = sig[:, 0, 0], sig[:, 0, 1], sig[:, 1, 1]
    s = np.sqrt(m11 * m22 - m12 * m12)
    t = np.sqrt(m11 + m22 + 2 * s)
    d = s * t
    out = np.empty_like(sig)
    out[:, 0, 0] = (m22 + s) / d
    out[:, 1, 1] = (m11 + s) / d
    out[:, 0, 1] = -m12 / d
    out[:, 1, 0] = -m12 / d
    return out


def _invsqrt_2x2_backward(sig, g_r):
    """Pull a gradient on ``invsqrt(sig)`` back to symmetric ``sig``."""
    m11, m12, m22 = sig[:, 0, 0], sig[:, 0, 1], sig[:, 1, 1]
    s = np.sqrt(m11 * m22 - m12 * m12)
    t = np.sqrt(m11 + m22 + 2 * s)
    d = s * t
    ds = np.stack([m22 / (2 * s), -m12 / s, m11 / (2 * s)])          # d s /d(m11,m12,m22)
    dtau = np.stack([np.ones_like(s), np.zeros_like(s), np.ones_like(s)])
    dt = (dtau + 2 * ds) / (2 * t)
    dd = ds * t + s * dt
    d2 = d * d
    # entry partials by quotient rule
    d_r11 = ((np.stack([np.zeros_like(s), np.zeros_like(s), np.ones_like(s)]) + ds) * d
             - (m22 + s) * dd) / d2
    d_r22 = ((np.stack([np.ones_like(s), np.zeros_like(s), np.zeros_like(s)]) + ds) * d
             - (m11 + s) * dd) / d2
    d_r12 = (-np.stack([np.zeros_like(s), np.ones_like(s), np.zeros_like(s)]) * d
             + m12 * dd) / d2
    g11, g22 = g_r[:, 0, 0], g_r[:, 1, 1]
    g12 = g_r[:, 0, 1] + g_r[:, 1, 0]
    comps = g11 * d_r11 + g22 * d_r22 + g12 * d_r12  # (3, F)
    out = np.empty_like(g_r)
    out[:, 0, 0] = comps[0]
    out[:, 1, 1] = comps[2]
    out[:, 0, 1] = comps[1] / 2
    out[:, 1, 0] = comps[1] / 2
    return out


class ComplexBatchNormalization(Layer):
    """Whitening normalization of each complex feature as an R^2 vector.

    Per feature the batch mean and 2x2 covariance (real/imag blocks) are
    estimated, the centered data is multiplied by the covariance's inverse
    square root, then shifted and scaled by the trainable pair (gamma, beta).
    Moving statistics updated as ``m * old + (1 - m) * new`` replace the
    batch estimates at inference.  Defaults: moving mean 0, moving covariance
    I/sqrt(2), gamma I/sqrt(2), beta 0, momentum 0.99.
    """

    trainable = True

    def __init__(self, momentum=0.99):
        if not 0.0 <= momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {momentum}")
        self.momentum = float(momentum)

    def build(self, input_shape, mode, np_dtype, seed, index):
        if mode == "real":
            raise ConfigError("batch normalization has no real-valued counterpart here")
        f = int(input_shape[-1])
        self.features = f
        eye = np.broadcast_to(np.eye(2), (f, 2, 2)).copy()
        self.moving_mean = np.zeros((f, 2))
        self.moving_cov = eye / np.sqrt(2.0)
        self.gamma = eye / np.sqrt(2.0)
        self.beta = np.zeros((f, 2))
        return tuple(input_shape)

    def _split(self, x):
        lead = x.shape[:-1]
        flat = x.reshape(-1, self.features)
        return np.stack([flat.real, flat.imag], axis=-1), lead

    def forward(self, x, training=False):
        v, lead = self._split(x)
        n = v.shape[0]
        if training:
            if n < 2:
                raise DegenerateBatchError(f"batch of {n} cannot estimate a covariance")
            mu = v.mean(axis=0)
            c = v - mu
            sig = np.einsum("nfi,nfj->fij", c, c) / n
            sig = sig + BN_RIDGE * np.eye(2)
            r = _invsqrt_2x2(sig)
            self.moving_mean = self.momentum * self.moving_mean + (1 - self.momentum) * mu
            self.moving_cov = self.momentum * self.moving_cov + (1 - self.momentum) * sig
            self._c, self._sig, self._r, self._n = c, sig, r, n
        else:
            mu = self.moving_mean
            c = v - mu
            r = _invsqrt_2x2(self.moving_cov)
            self._r = r
        y = np.einsum("fij,nfj->nfi", r, c)
        o = np.einsum("fij,nfj->nfi", self.gamma, y) + self.beta
        if training:
            self._y = y
        out = (o[..., 0] + 1j * o[..., 1]).reshape(*lead, self.features)
        return out

    def backward(self, ga, gb):
        lead = ga.shape[:-1]
        ga2 = ga.reshape(-1, self.features)
        gb2 = gb.reshape(-1, self.features)
        g = np.stack([ga2 + gb2, 1j * (ga2 - gb2)], axis=-1)  # dL/d(o1,o2)
        self.grad_beta = g.sum(axis=0).real
        self.grad_gamma = np.einsum("nfi,nfj->fij", g, self._y).real
        h = np.einsum("fji,nfj->nfi", self.gamma, g)  # gamma^T g
        g_r = np.einsum("nfi,nfj->fij", h, self._c)
        gc = np.einsum("fji,nfj->nfi", self._r, h)    # r^T h
        s_mat = _invsqrt_2x2_backward(self._sig, g_r)
        gc = gc + (2.0 / self._n) * np.einsum("fij,nfj->nfi", s_mat, self._c)
        gv = gc - gc.mean(axis=0)
        out_a = (gv[..., 0] - 1j * gv[..., 1]) / 2
        out_b = (gv[..., 0] + 1j * gv[..., 1]) / 2
        return out_a.reshape(*lead, self.features), out_b.reshape(*lead, self.features)

    def parameters(self):
        return [self.gamma, self.beta]

    def gradients(self):
        return [self.grad_gamma, self.grad_beta]

    def config(self):
        return {"type": "ComplexBatchNormalization", "momentum": self.momentum}


LAYER_DISPATCHER = {
    "ComplexDense": ComplexDense,
    "ComplexConv2D": ComplexConv2D,
    "ComplexFlatten": ComplexFlatten,
    "ComplexDropout": ComplexDropout,
    "ComplexMaxPooling2D": ComplexMaxPooling2D,
    "ComplexAvgPooling2D": ComplexAvgPooling2D,
    "ComplexUpSampling2D": ComplexUpSampling2D,
    "ComplexConv2DTranspose": ComplexConv2DTranspose,
    "ComplexUnPooling2D": ComplexUnPooling2D,
    "ComplexBatchNormalization": ComplexBatchNormalization,
}


def layer_from_config(cfg: dict) -> Layer:
    cfg = dict(cfg)
    kind = cfg.pop("type", None)
    cls = LAYER_DISPATCHER.get(kind)
    if cls is None:
        raise ConfigError(f"unknown layer type {kind!r}")
    cfg.pop("activation_params", None)
    init_scale = cfg.pop("init_scale", None)
    if "initializer" in cfg and init_scale is not None:
        cfg["initializer"] = inits.from_name(cfg["initializer"], scale=init_scale)
    try:
        return cls(**cfg)
    except TypeError as exc:
        raise ConfigError(f"bad arguments for layer {kind}: {exc}") from None


def get_real_equivalent(model, output_multiplier: float = 1.0):
    """Mirror a model with real arithmetic, hidden widths scaled.

    The class-count (final dense) width is kept; every other trainable width
    is multiplied and rounded (min 1).  A flat complex input of n features
    becomes 2n real features; image inputs double their channels.
    Initializer specs are swapped for their real counterparts.
    """
    from .train import Model

    in_shape = model.input_shape
    if len(in_shape) == 1:
        new_input = (2 * in_shape[0],)
    else:
        new_input = (*in_shape[:-1], 2 * in_shape[-1])
    dense_idx = [i for i, l in enumerate(model.layers) if isinstance(l, ComplexDense)]
    last_dense = dense_idx[-1] if dense_idx else -1
    new_layers = []
    for i, layer in enumerate(model.layers):
        mult = 1.0 if i == last_dense else output_multiplier
        new_layers.append(layer.real_equivalent(mult))
    return Model(
        new_layers,
        loss=model.loss_spec,
        input_shape=new_input,
        dtype="real",
        seed=model.seed,
        precision=model.precision,
    )


# ---------------------------------------------------------------------------
# unbatched CTensor op surface
# ---------------------------------------------------------------------------

def _to_bhwc(x: CTensor):
    arr = x.array
    if arr.ndim == 2:
        return arr[None, :, :, None], "hw"
    if arr.ndim == 3:
        return arr[None], "hwc"
    raise DimensionError(f"expected H x W or H x W x C input, got shape {arr.shape}")


def _from_bhwc(arr, kind, dtype):
    out = arr[0, :, :, 0] if kind == "hw" else arr[0]
    return CTensor(out, dtype=dtype)


def dropout_forward(x: CTensor, rate: float, training: bool, rng) -> CTensor:
    """One Bernoulli mask per complex element; inactive outside training."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    keep = rng.random(x.shape) >= rate
    return CTensor(x.array * keep / (1.0 - rate), dtype=x.dtype)


def max_pool2d(x: CTensor, window, stride=None, with_argmax: bool = False):
    """Greatest-modulus pooling; optionally also the maxed locations."""
    arr, kind = _to_bhwc(x)
    stride = tuple(stride) if stride is not None else tuple(window)
    if window[0] > arr.shape[1] or window[1] > arr.shape[2]:
        raise DimensionError(f"pool window {window} larger than input {arr.shape[1:3]}")
    out, amap = _max_pool_forward(arr, tuple(window), stride)
    pooled = _from_bhwc(out, kind, x.dtype)
    if with_argmax:
        return pooled, amap
    return pooled


def avg_pool2d(x: CTensor, window, stride=None, mode: str = "avg_arithmetic") -> CTensor:
    layer = ComplexAvgPooling2D(tuple(window), stride, mode)
    arr, kind = _to_bhwc(x)
    layer.build(arr.shape[1:], "complex", arr.dtype, 0, 0)
    return _from_bhwc(layer.forward(arr), kind, x.dtype)


def upsample2d(x: CTensor, factor, mode: str = "nearest") -> CTensor:
    layer = ComplexUpSampling2D(factor, mode)
    arr, kind = _to_bhwc(x)
    layer.build(arr.shape[1:], "complex", arr.dtype, 0, 0)
    return _from_bhwc(layer.forward(arr), kind, x.dtype)


def conv2d_transpose(x: CTensor, kernels: CTensor, stride=(1, 1)) -> CTensor:
    """Transposed convolution of ``H x W x Cin`` by ``kh x kw x Cout x Cin``."""
    arr = x.array
    if arr.ndim != 3 or kernels.array.ndim != 4:
        raise DimensionError("conv2d_transpose expects H x W x Cin input and 4-D kernels")
    if arr.shape[2] != kernels.shape[3]:
        raise DimensionError(
            f"channel mismatch: input {arr.shape[2]}, kernels expect {kernels.shape[3]}"
        )
    out = transpose_scatter(arr[None], kernels.array, tuple(stride))[0]
    return CTensor(out, dtype=np.result_type(x.dtype, kernels.dtype))


def unpool2d(values: CTensor, argmax: ArgmaxMap, output_shape=None, upsampling_factor=None) -> CTensor:
    if (output_shape is None) == (upsampling_factor is None):
        raise ConfigError("give exactly one of output_shape / upsampling_factor")
    arr, kind = _to_bhwc(values)
    if upsampling_factor is not None:
        if isinstance(upsampling_factor, int):
            upsampling_factor = (upsampling_factor, upsampling_factor)
        hw = (arr.shape[1] * upsampling_factor[0], arr.shape[2] * upsampling_factor[1])
    else:
        hw = tuple(output_shape)
    idx = argmax.indices
    if idx.ndim == 2 and kind == "hw":
        idx = idx[None, :, :, None]
    elif idx.ndim == 3 and kind == "hwc":
        idx = idx[None]
    if idx.shape != arr.shape:
        raise DimensionError(f"argmax map shape {argmax.indices.shape} does not match values")
    out = scatter_unpool(arr, ArgmaxMap(idx, argmax.source_hw), hw)
    return _from_bhwc(out, kind, values.dtype)


def batchnorm_forward(state: ComplexBatchNormalization, x: CTensor, training: bool) -> CTensor:
    """Run the normalization layer on a ``batch x features`` tensor."""
    if getattr(state, "features", None) is None:
        state.build(x.shape[1:], "complex", x.array.dtype, 0, 0)
    return CTensor(state.forward(x.array, training=training), dtype=x.dtype)
