"""Differentiation machinery for complex scalars.

Derivatives are tracked as conjugate pairs ``(df/dz, df/dz~)`` with

    df/dz  = (df/dx - i df/dy) / 2
    df/dz~ = (df/dx + i df/dy) / 2

so non-holomorphic functions (``abs``, ``conj``, part extraction, the
activation zoo) differentiate cleanly; holomorphic primitives are the special
case ``df/dz~ = 0``.  Three independent routes are provided:

* forward mode over :class:`Dual` numbers seeded along a unit direction,
* reverse mode over a recorded :class:`Tape` of local partial pairs,
* :func:`finite_difference_gradient` as a derivative-free cross-check,

plus :func:`mlp_analytic_gradients`, a layered closed-form recursion for pure
dense stacks that serves as a fourth, structurally different route.

For a real-valued output the gradient handed to optimizers is
``2 * df/dz~ = df/dx + i df/dy`` (steepest ascent in the complex plane).
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, UnsupportedArchitectureError, UnsupportedOpError

SELU_LAMBDA = 1.0507009873554804934193349852946
SELU_ALPHA = 1.6732632423543772848170429916717


# ---------------------------------------------------------------------------
# scalar primitive registry (shared by forward and reverse mode)
# ---------------------------------------------------------------------------

def _p_conj(z):
    return complex(z).conjugate(), (0j, 1 + 0j)


def _p_abs(z):
    m = abs(z)
    if m == 0.0:
        return 0j, (0j, 0j)
    return complex(m), (z.conjugate() / (2 * m), z / (2 * m))


def _p_arg(z):
    if z == 0:
        return 0j, (0j, 0j)
    m2 = abs(z) ** 2
    return complex(cmath.phase(z)), (-0.5j * z.conjugate() / m2, 0.5j * z / m2)


def _p_exp(z):
    v = cmath.exp(z)
    return v, (v, 0j)


def _p_log(z):
    return cmath.log(z), (1 / z, 0j)


def _p_re(z):
    return complex(z.real), (0.5 + 0j, 0.5 + 0j)


def _p_im(z):
    return complex(z.imag), (-0.5j, 0.5j)


def _p_relu(z):
    # Active on Re(z) >= 0, with the right-sided derivative at the kink so
    # the slope at exactly zero is 1.
    if z.real > 0:
        return complex(z), (1 + 0j, 0j)
    if z.real == 0:
        return 0j, (1 + 0j, 0j)
    return 0j, (0j, 0j)


def _p_sigmoid(z):
    s = 1 / (1 + cmath.exp(-z))
    return s, (s * (1 - s), 0j)


def _p_tanh(z):
    t = cmath.tanh(z)
    return t, (1 - t * t, 0j)


def _p_selu(z):
    if z.real > 0:
        return SELU_LAMBDA * z, (SELU_LAMBDA + 0j, 0j)
    e = cmath.exp(z)
    return SELU_LAMBDA * SELU_ALPHA * (e - 1), (SELU_LAMBDA * SELU_ALPHA * e, 0j)


PRIMITIVES = {
    "conj": _p_conj,
    "abs": _p_abs,
    "arg": _p_arg,
    "exp": _p_exp,
    "log": _p_log,
    "re": _p_re,
    "im": _p_im,
    "relu": _p_relu,
    "sigmoid": _p_sigmoid,
    "tanh": _p_tanh,
    "selu": _p_selu,
}


# ---------------------------------------------------------------------------
# forward mode
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Epsilon:
    """Unit direction along which a forward-mode derivative is taken."""

    direction: complex = 1 + 0j

    def __post_init__(self):
        if abs(abs(self.direction) - 1.0) > 1e-12:
            raise ContractError(f"epsilon direction must have unit modulus, got {self.direction}")


EPS_REAL = Epsilon(1 + 0j)
EPS_IMAG = Epsilon(1j)


class Dual:
    """Complex dual number ``primal + tangent * eps`` with ``eps**2 == 0``.

    Products drop the ``tangent*tangent`` term exactly, so dual arithmetic
    carries first-order information with no truncation error.
    """

    __slots__ = ("primal", "tangent")

    def __init__(self, primal, tangent=0j):
        self.primal = complex(primal)
        self.tangent = complex(tangent)

    @staticmethod
    def _lift(x):
        if isinstance(x, Dual):
            return x
        if isinstance(x, (int, float, complex)):
            return Dual(x)
        raise UnsupportedOpError(f"cannot mix Dual with {type(x).__name__}")

    def __add__(self, other):
        o = Dual._lift(other)
        return Dual(self.primal + o.primal, self.tangent + o.tangent)

    __radd__ = __add__

    def __sub__(self, other):
        o = Dual._lift(other)
        return Dual(self.primal - o.primal, self.tangent - o.tangent)

    def __rsub__(self, other):
        o = Dual._lift(other)
        return Dual(o.primal - self.primal, o.tangent - self.tangent)

    def __mul__(self, other):
        o = Dual._lift(other)
        return Dual(self.primal * o.primal, self.primal * o.tangent + self.tangent * o.primal)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = Dual._lift(other)
        inv = 1 / o.primal
        return Dual(self.primal * inv, (self.tangent * o.primal - self.primal * o.tangent) * inv * inv)

    def __rtruediv__(self, other):
        return Dual._lift(other).__truediv__(self)

    def __neg__(self):
        return Dual(-self.primal, -self.tangent)

    def __repr__(self):
        return f"Dual({self.primal}, {self.tangent})"


# ---------------------------------------------------------------------------
# reverse mode
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AdjointPair:
    """Accumulated ``(df/dz, df/dz~)`` of the output w.r.t. one node."""

    d_z: complex
    d_zbar: complex


@dataclass
class TapeNode:
    op: str
    value: complex
    parents: tuple
    partials: tuple  # one (d/dparent, d/dparent~) pair per parent


class Tape:
    """Append-only record of scalar operations; parents precede children."""

    def __init__(self):
        self.nodes: list[TapeNode] = []

    def var(self, value) -> "Var":
        """Create a leaf variable."""
        return self._emit("leaf", complex(value), (), ())

    def _emit(self, op, value, parents, partials) -> "Var":
        self.nodes.append(TapeNode(op, value, parents, partials))
        return Var(self, len(self.nodes) - 1)

    def leaf_ids(self):
        return [i for i, n in enumerate(self.nodes) if n.op == "leaf"]


class Var:
    """Handle to one tape node, with operator overloads that record onto it."""

    __slots__ = ("tape", "idx")

    def __init__(self, tape: Tape, idx: int):
        self.tape = tape
        self.idx = idx

    @property
    def value(self) -> complex:
        return self.tape.nodes[self.idx].value

    def _emit(self, op, value, parents, partials):
        return self.tape._emit(op, value, parents, partials)

    @staticmethod
    def _const(x):
        if isinstance(x, (int, float, complex)):
            return complex(x)
        raise UnsupportedOpError(f"cannot mix Var with {type(x).__name__}")

    def __add__(self, other):
        if isinstance(other, Var):
            return self._emit("add", self.value + other.value,
                              (self.idx, other.idx), ((1 + 0j, 0j), (1 + 0j, 0j)))
        c = Var._const(other)
        return self._emit("add_const", self.value + c, (self.idx,), ((1 + 0j, 0j),))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Var):
            return self._emit("sub", self.value - other.value,
                              (self.idx, other.idx), ((1 + 0j, 0j), (-1 + 0j, 0j)))
        c = Var._const(other)
        return self._emit("add_const", self.value - c, (self.idx,), ((1 + 0j, 0j),))

    def __rsub__(self, other):
        c = Var._const(other)
        return self._emit("rsub_const", c - self.value, (self.idx,), ((-1 + 0j, 0j),))

    def __mul__(self, other):
        if isinstance(other, Var):
            return self._emit("mul", self.value * other.value,
                              (self.idx, other.idx), ((other.value, 0j), (self.value, 0j)))
        c = Var._const(other)
        return self._emit("scale", self.value * c, (self.idx,), ((c, 0j),))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Var):
            b = other.value
            return self._emit("div", self.value / b, (self.idx, other.idx),
                              ((1 / b, 0j), (-self.value / (b * b), 0j)))
        c = Var._const(other)
        return self._emit("scale", self.value / c, (self.idx,), ((1 / c, 0j),))

    def __rtruediv__(self, other):
        c = Var._const(other)
        v = self.value
        return self._emit("rdiv_const", c / v, (self.idx,), ((-c / (v * v), 0j),))

    def __neg__(self):
        return self._emit("neg", -self.value, (self.idx,), ((-1 + 0j, 0j),))


def apply_primitive(name: str, x):
    """Apply a registered unary primitive to a Var, Dual, or plain scalar."""
    fn = PRIMITIVES.get(name)
    if fn is None:
        raise UnsupportedOpError(f"primitive {name!r} is not registered")
    if isinstance(x, Var):
        value, partials = fn(x.value)
        return x._emit(name, value, (x.idx,), (partials,))
    if isinstance(x, Dual):
        value, (gz, gzb) = fn(x.primal)
        return Dual(value, gz * x.tangent + gzb * x.tangent.conjugate())
    value, _ = fn(complex(x))
    return value


def conj(x):
    return apply_primitive("conj", x)


def absval(x):
    return apply_primitive("abs", x)


def arg(x):
    return apply_primitive("arg", x)


def exp(x):
    return apply_primitive("exp", x)


def log(x):
    return apply_primitive("log", x)


def re(x):
    return apply_primitive("re", x)


def im(x):
    return apply_primitive("im", x)


def relu(x):
    return apply_primitive("relu", x)


def sigmoid(x):
    return apply_primitive("sigmoid", x)


def tanh(x):
    return apply_primitive("tanh", x)


def selu(x):
    return apply_primitive("selu", x)


def _threshold(x, t, kind):
    """max/min of a (near-real) scalar against a real threshold.

    At the kink the active-branch derivative 1 is kept, matching the
    right-sided convention of ``relu``.
    """
    t = float(t)

    def fn(z):
        keep = z.real > t if kind == "max" else z.real < t
        if keep or z.real == t:
            return complex(z) if keep else complex(t), (1 + 0j, 0j)
        return complex(t), (0j, 0j)

    if isinstance(x, Var):
        value, partials = fn(x.value)
        return x._emit(f"{kind}_threshold", value, (x.idx,), (partials,))
    if isinstance(x, Dual):
        value, (gz, gzb) = fn(x.primal)
        return Dual(value, gz * x.tangent + gzb * x.tangent.conjugate())
    return fn(complex(x))[0]


def max_with_threshold(x, t):
    """``x`` where ``Re(x) >= t``, else the threshold ``t``."""
    return _threshold(x, t, "max")


def min_with_threshold(x, t):
    return _threshold(x, t, "min")


def clamp(x, lo, hi):
    return min_with_threshold(max_with_threshold(x, lo), hi)


def forward_derivative(f, point, wrt_index: int, epsilon: Epsilon = EPS_REAL):
    """Evaluate ``f`` and its directional derivative at ``point``.

    The variable at ``wrt_index`` is seeded with tangent ``epsilon.direction``;
    the returned pair is ``(f(point), D f along epsilon)``.
    """
    duals = [Dual(p) for p in point]
    duals[wrt_index] = Dual(point[wrt_index], epsilon.direction)
    out = f(*duals)
    if not isinstance(out, Dual):
        raise UnsupportedOpError("function did not return a Dual; use the registered primitives")
    return out.primal, out.tangent


def reverse_gradient(tape: Tape, output):
    """Propagate conjugate adjoint pairs from ``output`` back to every node.

    Returns ``(pairs, wirtinger)`` where ``pairs`` maps node id to its
    :class:`AdjointPair` and ``wirtinger`` maps each leaf id to
    ``2 * df/dz~``, the gradient used to train complex parameters.  The
    output value must be real (``|Im| < 1e-9``): losses are real by contract.
    """
    out_idx = output.idx if isinstance(output, Var) else int(output)
    nodes = tape.nodes
    if abs(nodes[out_idx].value.imag) > 1e-9:
        raise ContractError(
            f"output is not real-valued: {nodes[out_idx].value}; gradients are defined for real losses"
        )
    d_z = np.zeros(out_idx + 1, dtype=np.complex128)
    d_zbar = np.zeros(out_idx + 1, dtype=np.complex128)
    d_z[out_idx] = 1.0
    for i in range(out_idx, -1, -1):
        a, b = d_z[i], d_zbar[i]
        if a == 0 and b == 0:
            continue
        node = nodes[i]
        for parent, (gz, gzb) in zip(node.parents, node.partials):
            d_z[parent] += a * gz + b * gzb.conjugate()
            d_zbar[parent] += a * gzb + b * gz.conjugate()
    pairs = {i: AdjointPair(complex(d_z[i]), complex(d_zbar[i])) for i in range(out_idx + 1)}
    wirtinger = {i: 2 * complex(d_zbar[i]) for i in tape.leaf_ids() if i <= out_idx}
    return pairs, wirtinger


def real_axis_partial(pair: AdjointPair) -> complex:
    """Derivative along the real axis, ``df/dx = df/dz + df/dz~``.

    This is the meaningful per-leaf derivative when a leaf is a real
    variable embedded in the complex tape.
    """
    return pair.d_z + pair.d_zbar


def _cc_gradient(tape: Tape, output) -> dict:
    """Gradient convention for complex-valued outputs, kept internal.

    Computes ``conj(df/dz + dfbar/dz) = 2 d Re(f)/dz~`` per leaf.  Only the
    real-output special case is public API; this exists to pin the general
    formula with a test vector.
    """
    out_idx = output.idx if isinstance(output, Var) else int(output)
    nodes = tape.nodes
    d_z = np.zeros(out_idx + 1, dtype=np.complex128)
    d_zbar = np.zeros(out_idx + 1, dtype=np.complex128)
    d_z[out_idx] = 1.0
    for i in range(out_idx, -1, -1):
        a, b = d_z[i], d_zbar[i]
        if a == 0 and b == 0:
            continue
        node = nodes[i]
        for parent, (gz, gzb) in zip(node.parents, node.partials):
            d_z[parent] += a * gz + b * gzb.conjugate()
            d_zbar[parent] += a * gzb + b * gz.conjugate()
    # dfbar/dz = conj(df/dz~)
    return {
        i: (d_z[i] + d_zbar[i].conjugate()).conjugate()
        for i in tape.leaf_ids()
        if i <= out_idx
    }


def finite_difference_gradient(f, point, h: float = 1e-6):
    """Central-difference gradient ``df/dx + i df/dy`` of a real-valued ``f``.

    ``f`` is a black box evaluated at ``point`` shifted by ``+-h`` along the
    real and imaginary axes of each coordinate.
    """
    point = [complex(p) for p in point]
    grad = []
    for k in range(len(point)):
        def shifted(delta, k=k):
            q = list(point)
            q[k] = q[k] + delta
            return f(q)

        gx = (shifted(h) - shifted(-h)) / (2 * h)
        gy = (shifted(1j * h) - shifted(-1j * h)) / (2 * h)
        grad.append(complex(gx) + 1j * complex(gy))
    return grad


# ---------------------------------------------------------------------------
# layered analytic recursion for dense stacks
# ---------------------------------------------------------------------------

def mlp_analytic_gradients(model, batch, targets):
    """Closed-form gradients of a pure dense stack, layer by layer.

    Walks the network backwards carrying ``dL/dV`` per layer: the top value
    comes from the loss (plus output head), interior layers apply the
    activation pair ``(dX/dV, dX/dV~)`` and the weight matrix.  Complex mode
    returns ``2 * conj(dL/dw)`` per parameter, matching the convention of
    :func:`reverse_gradient`; real mode runs the delta recursion
    ``delta = (W.T delta') * sigma'(V)`` and returns plain real gradients.

    Serves as an independent oracle for the tape-based routes; anything but
    dense layers is rejected.
    """
    from .layers import ComplexDense
    from .losses import loss_and_head_gradient

    for layer in model.layers:
        if not isinstance(layer, ComplexDense):
            raise UnsupportedArchitectureError(
                f"analytic recursion only supports dense stacks, found {type(layer).__name__}"
            )

    x = batch.array if hasattr(batch, "array") else np.asarray(batch)
    if model.dtype == "real":
        x = np.asarray(x.real, dtype=np.float64)
    pre, post = [], [x]
    for layer in model.layers:
        v = post[-1] @ layer.weights.T + layer.bias
        pre.append(v)
        post.append(layer.activation.apply_real(v) if model.dtype == "real" else layer.activation(v))

    last = model.layers[-1]
    _, d_v = loss_and_head_gradient(
        model.loss_spec, pre[-1], post[-1], targets,
        head=last.activation, real_mode=(model.dtype == "real"),
    )

    grads = []
    for li in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[li]
        g_w = np.einsum("bi,bj->ij", d_v, post[li])
        g_b = d_v.sum(axis=0)
        if li > 0:
            d_x = d_v @ layer.weights
            below = model.layers[li - 1]
            if model.dtype == "real":
                d_v = d_x * below.activation.deriv_real(pre[li - 1])
            else:
                gz, gzb = below.activation.wirtinger_partials(pre[li - 1])
                d_v = d_x * gz + np.conj(d_x) * np.conj(gzb)
        if model.dtype == "real":
            grads.append((g_w, g_b))
        else:
            grads.append((2 * np.conj(g_w), 2 * np.conj(g_b)))
    grads.reverse()
    return grads
