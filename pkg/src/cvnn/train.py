"""Sequential model container, SGD training loop, and run statistics.

A :class:`Model` owns an ordered layer list, a loss, and an arithmetic mode
(``complex`` or ``real``).  Training is plain mini-batch SGD: complex
parameters move against ``2 dL/dw~`` (the steepest-ascent direction of a real
loss over complex weights), real parameters against ``dL/dw``; the factor 2
lives in the gradient, not the learning rate.

Everything is deterministic given the seeds: weight draws, dropout masks and
shuffles all derive from named counter-based streams.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .ctensor import CTensor
from .errors import ConfigError, DimensionError, DivergenceError, IntegrityError
from .layers import ComplexDropout, Layer, layer_from_config
from .losses import LossSpec, loss_grad_real, loss_pair, loss_value
from .rng import rng_for

DIVERGENCE_LIMIT = 1e6


@dataclass
class SGDConfig:
    learning_rate: float = 0.01
    batch_size: int = 100
    epochs: int = 1

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epochs >= 0")


@dataclass
class History:
    train_loss: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    val_acc: list = field(default_factory=list)
    test_loss: float | None = None
    test_acc: float | None = None
    diverged: bool = False

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True)

    def to_csv(self) -> str:
        lines = ["epoch,train_loss,train_acc,val_loss,val_acc"]
        for i in range(len(self.train_loss)):
            lines.append(
                f"{i},{self.train_loss[i]!r},{self.train_acc[i]!r},"
                f"{self.val_loss[i]!r},{self.val_acc[i]!r}"
            )
        return "\n".join(lines) + "\n"


class Model:
    """Ordered layer stack plus loss, arithmetic mode, and seed."""

    def __init__(self, layers, loss="cce_real", input_shape=(1,), dtype="complex",
                 seed=0, precision="f64"):
        if dtype not in ("complex", "real"):
            raise ConfigError(f"model dtype must be 'complex' or 'real', got {dtype!r}")
        if precision not in ("f64", "f32"):
            raise ConfigError(f"precision must be 'f64' or 'f32', got {precision!r}")
        self.layers: list[Layer] = list(layers)
        self.loss_spec = loss if isinstance(loss, LossSpec) else LossSpec(kind=loss)
        self.input_shape = tuple(int(s) for s in input_shape)
        self.dtype = dtype
        self.seed = int(seed)
        self.precision = precision
        self.output_shape = None
        self._built = False

    @property
    def np_dtype(self):
        if self.dtype == "complex":
            return np.complex128 if self.precision == "f64" else np.complex64
        return np.float64 if self.precision == "f64" else np.float32

    def build(self):
        if self._built:
            return self
        shape = self.input_shape
        for i, layer in enumerate(self.layers):
            shape = layer.build(shape, self.dtype, self.np_dtype, self.seed, i)
        self.output_shape = shape
        last = self.layers[-1]
        act = getattr(last, "activation", None)
        if self.loss_spec.kind == "cce_real" and self.dtype == "complex":
            real_out = act is not None and (act.is_head and act.name != "cart_softmax"
                                            or act.name in ("cast_to_real", "convert_to_real_with_abs",
                                                            "sigmoid_real"))
            if not real_out:
                raise ConfigError(
                    "cce_real needs a real-valued output activation on the last layer"
                )
        for i, layer in enumerate(self.layers):
            if isinstance(layer, ComplexDropout):
                layer._rng = rng_for(self.seed, rngmod.DROPOUT, i)
        self._built = True
        return self

    def _coerce_input(self, x):
        arr = x.array if isinstance(x, CTensor) else np.asarray(x)
        if self.dtype == "real":
            if np.iscomplexobj(arr):
                raise DimensionError("real-mode model expects a real input array")
            return arr.astype(np.float64 if self.precision == "f64" else np.float32, copy=False)
        return arr.astype(self.np_dtype, copy=False)

    def forward(self, x, training: bool = False):
        self.build()
        arr = self._coerce_input(x)
        argmax_stack = []
        for layer in self.layers:
            if layer.consumes_argmax:
                if not argmax_stack:
                    raise ConfigError("un-pooling layer without a preceding argmax pooling layer")
                arr = layer.forward((arr, argmax_stack.pop()), training)
            else:
                out = layer.forward(arr, training)
                if layer.emits_argmax:
                    arr, amap = out
                    argmax_stack.append(amap)
                else:
                    arr = out
        return arr

    def predict(self, x) -> CTensor:
        out = self.forward(x, training=False)
        if self.dtype == "real":
            return CTensor(out + 0j, real_only=True)
        return CTensor(out)

    def loss_and_grads(self, x, targets):
        """One forward/backward sweep; leaves gradients on the layers."""
        y = self.forward(x, training=True)
        d = targets.array if isinstance(targets, CTensor) else np.asarray(targets)
        if self.dtype == "real":
            value, g = loss_grad_real(self.loss_spec, y, d.real if np.iscomplexobj(d) else d)
            for layer in reversed(self.layers):
                g = layer.backward_real(g)
        else:
            value, ga, gb = loss_pair(self.loss_spec, y, d)
            for layer in reversed(self.layers):
                ga, gb = layer.backward(ga, gb)
        return value

    def evaluate_loss(self, x, targets) -> float:
        y = self.forward(x, training=False)
        d = targets.array if isinstance(targets, CTensor) else np.asarray(targets)
        if self.dtype == "real":
            d = d.real if np.iscomplexobj(d) else d
        return loss_value(self.loss_spec, y, d)

    def get_real_equivalent(self, output_multiplier: float = 1.0) -> "Model":
        from .layers import get_real_equivalent

        return get_real_equivalent(self, output_multiplier)

    def config(self) -> dict:
        return {
            "input_shape": list(self.input_shape),
            "dtype": self.dtype,
            "precision": self.precision,
            "seed": self.seed,
            "loss": {
                "kind": self.loss_spec.kind,
                "class_weights": list(self.loss_spec.class_weights)
                if self.loss_spec.class_weights
                else None,
                "ignore_label": self.loss_spec.ignore_label,
            },
            "layers": [layer.config() for layer in self.layers],
        }


def model_from_config(cfg: dict) -> Model:
    for key in ("input_shape", "layers"):
        if key not in cfg:
            raise ConfigError(f"model.{key} is missing")
    loss_cfg = cfg.get("loss", "cce_real")
    if isinstance(loss_cfg, dict):
        loss = LossSpec(
            kind=loss_cfg.get("kind", "cce_real"),
            class_weights=tuple(loss_cfg["class_weights"]) if loss_cfg.get("class_weights") else None,
            ignore_label=loss_cfg.get("ignore_label"),
        )
    else:
        loss = LossSpec(kind=loss_cfg)
    layers = [layer_from_config(lc) for lc in cfg["layers"]]
    return Model(
        layers,
        loss=loss,
        input_shape=cfg["input_shape"],
        dtype=cfg.get("dtype", "complex"),
        seed=cfg.get("seed", 0),
        precision=cfg.get("precision", "f64"),
    )


def one_hot(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    out = np.zeros((labels.shape[0], n_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def sgd_step(model: Model, batch, targets, learning_rate: float,
             context: str = "") -> float:
    """One gradient step; raises :class:`DivergenceError` on a runaway loss."""
    value = model.loss_and_grads(batch, targets)
    if not np.isfinite(value) or abs(value) > DIVERGENCE_LIMIT:
        raise DivergenceError(f"loss {value} diverged{' at ' + context if context else ''}")
    for layer in model.layers:
        if layer.trainable:
            for param, grad in zip(layer.parameters(), layer.gradients()):
                param -= learning_rate * grad.astype(param.dtype, copy=False)
    return value


def evaluate(model: Model, x, labels) -> tuple[float, float]:
    """Mean loss and argmax accuracy of the real output vector."""
    model.build()
    labels = np.asarray(labels)
    n_classes = model.output_shape[-1]
    d = one_hot(labels, n_classes)
    y = model.forward(x, training=False)
    value = loss_value(model.loss_spec, y, d)
    pred = np.argmax(y.real if np.iscomplexobj(y) else y, axis=-1)
    return float(value), float(np.mean(pred == labels))


def _metrics(model: Model, x, targets) -> tuple[float, float]:
    if model.loss_spec.kind == "complex_quadratic":
        return model.evaluate_loss(x, targets), float("nan")
    return evaluate(model, x, targets)


def fit(model: Model, data: dict, cfg: SGDConfig) -> History:
    """Epoch loop over shuffled mini-batches with per-epoch metrics.

    ``data`` maps split names to ``(x, targets)`` pairs; ``train`` is
    mandatory, ``val`` and ``test`` optional.  Classification losses take
    integer labels as targets (one-hot encoded internally), the quadratic
    regression loss takes raw target tensors.  On divergence the history
    collected so far is returned with ``diverged`` set.
    """
    model.build()
    x_train, y_train = data["train"]
    n = x_train.shape[0]
    regression = model.loss_spec.kind == "complex_quadratic"
    d_train = y_train if regression else one_hot(y_train, model.output_shape[-1])
    shuffle_rng = rng_for(model.seed, rngmod.SHUFFLE)
    history = History()
    try:
        for epoch in range(cfg.epochs):
            perm = shuffle_rng.permutation(n)
            for start in range(0, n, cfg.batch_size):
                idx = perm[start : start + cfg.batch_size]
                sgd_step(model, x_train[idx], d_train[idx], cfg.learning_rate,
                         context=f"epoch {epoch}, batch {start // cfg.batch_size}")
            loss, acc = _metrics(model, x_train, y_train)
            history.train_loss.append(loss)
            history.train_acc.append(acc)
            if "val" in data:
                vloss, vacc = _metrics(model, *data["val"])
                history.val_loss.append(vloss)
                history.val_acc.append(vacc)
            else:
                history.val_loss.append(float("nan"))
                history.val_acc.append(float("nan"))
    except DivergenceError:
        history.diverged = True
        return history
    if "test" in data:
        history.test_loss, history.test_acc = _metrics(model, *data["test"])
    return history


def five_number_summary(values) -> dict:
    """Median, quartiles, and Tukey whiskers clipped to the data range."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    q1, med, q3 = (float(np.percentile(v, p)) for p in (25, 50, 75))
    iqr = q3 - q1
    lo = float(v[v >= q1 - 1.5 * iqr].min())
    hi = float(v[v <= q3 + 1.5 * iqr].max())
    return {"median": med, "q1": q1, "q3": q3, "whisker_lo": lo, "whisker_hi": hi}


def run_seed(base_seed: int, run_index: int) -> int:
    return int(rng_for(base_seed, rngmod.RUN, run_index).integers(0, 2**62))


def run_repeated(run_fn, n_runs: int, base_seed: int = 0):
    """Repeat ``run_fn(seed, run_index)`` with independent seeds.

    Returns ``(per_run, summary)``: the per-run metric dicts (diverged runs
    carry ``{"diverged": True}``) and a five-number summary per metric over
    the runs that finished.
    """
    if n_runs < 1:
        raise ConfigError(f"n_runs must be >= 1, got {n_runs}")
    per_run = []
    for r in range(n_runs):
        seed = run_seed(base_seed, r)
        try:
            metrics = dict(run_fn(seed, r))
        except DivergenceError as exc:
            metrics = {"diverged": True, "error": str(exc)}
        metrics.setdefault("diverged", False)
        metrics["seed"] = seed
        per_run.append(metrics)
    summary = {}
    keys = {k for m in per_run if not m["diverged"] for k in m if isinstance(m[k], float)}
    for key in sorted(keys):
        vals = [m[key] for m in per_run if not m["diverged"] and key in m]
        if vals:
            summary[key] = five_number_summary(vals)
    return per_run, summary


# ---------------------------------------------------------------------------
# model container serialization
# ---------------------------------------------------------------------------

MODEL_MAGIC = b"CVNM"
MODEL_VERSION = 1


def save_model(model: Model, path) -> None:
    """Versioned binary: a JSON layer description plus raw parameter bytes."""
    model.build()
    header = json.dumps(model.config(), sort_keys=True).encode()
    buf = io.BytesIO()
    buf.write(MODEL_MAGIC)
    buf.write(struct.pack("<HI", MODEL_VERSION, len(header)))
    buf.write(header)
    for layer in model.layers:
        for param in layer.parameters():
            arr = np.ascontiguousarray(param)
            if np.iscomplexobj(arr):
                flat = np.empty(arr.size * 2, dtype="<f8")
                flat[0::2] = arr.real.reshape(-1)
                flat[1::2] = arr.imag.reshape(-1)
            else:
                flat = arr.astype("<f8").reshape(-1)
            buf.write(struct.pack("<BI", 1 if np.iscomplexobj(arr) else 0, arr.size))
            buf.write(flat.tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_model(path) -> Model:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MODEL_MAGIC:
        raise IntegrityError(f"{path} is not a model container")
    version, hlen = struct.unpack_from("<HI", raw, 4)
    if version != MODEL_VERSION:
        raise IntegrityError(f"unsupported model container version {version}")
    off = 10
    cfg = json.loads(raw[off : off + hlen].decode())
    off += hlen
    model = model_from_config(cfg)
    model.build()
    for layer in model.layers:
        for param in layer.parameters():
            tag, size = struct.unpack_from("<BI", raw, off)
            off += 5
            if size != param.size:
                raise IntegrityError("parameter size mismatch in model container")
            count = size * 2 if tag == 1 else size
            flat = np.frombuffer(raw, dtype="<f8", count=count, offset=off)
            off += count * 8
            if tag == 1:
                values = (flat[0::2] + 1j * flat[1::2]).reshape(param.shape)
            else:
                values = flat.reshape(param.shape)
            param[...] = values.astype(param.dtype)
    return model
