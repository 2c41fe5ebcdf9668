"""Dense n-dimensional complex tensors and the numerical kernels built on them.

A :class:`CTensor` is an immutable-by-convention wrapper around a contiguous,
row-major complex numpy array.  ``complex128`` is the default element type;
``complex64`` is accepted for experiment-speed work.  All operations return
new tensors; nothing mutates its inputs.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, SingularityError

COMPLEX_DTYPES = (np.complex64, np.complex128)


class CTensor:
    """N-dimensional complex tensor with row-major layout.

    Parameters
    ----------
    data : array_like
        Nested sequence, scalar, or numpy array; cast to a complex dtype.
    dtype : numpy dtype, optional
        ``complex128`` (default) or ``complex64``.
    real_only : bool, optional
        Marks a tensor whose imaginary part is identically zero (used by
        real-equivalent models).  Enforced at construction.
    """

    __slots__ = ("array", "real_only")

    def __init__(self, data, dtype=np.complex128, real_only: bool = False):
        dtype = np.dtype(dtype)
        if dtype not in (np.dtype(np.complex64), np.dtype(np.complex128)):
            raise DimensionError(f"unsupported dtype {dtype}; use complex64 or complex128")
        arr = np.ascontiguousarray(data, dtype=dtype)
        if real_only and arr.size and np.any(arr.imag != 0.0):
            raise DimensionError("real_only tensor has nonzero imaginary part")
        self.array = arr
        self.real_only = real_only

    # -- construction helpers ------------------------------------------------

    @classmethod
    def from_array(cls, arr, real_only: bool = False) -> "CTensor":
        arr = np.asarray(arr)
        dtype = np.complex64 if arr.dtype in (np.float32, np.complex64) else np.complex128
        return cls(arr, dtype=dtype, real_only=real_only)

    @classmethod
    def zeros(cls, shape, dtype=np.complex128) -> "CTensor":
        return cls(np.zeros(shape, dtype=dtype))

    # -- metadata ------------------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.array.shape

    @property
    def dtype(self):
        return self.array.dtype

    @property
    def flat(self) -> np.ndarray:
        """Row-major flat view of the data."""
        return self.array.reshape(-1)

    def to_array(self) -> np.ndarray:
        return self.array

    def __repr__(self):
        return f"CTensor(shape={self.shape}, dtype={self.array.dtype}, real_only={self.real_only})"

    def __eq__(self, other):
        if not isinstance(other, CTensor):
            return NotImplemented
        return self.shape == other.shape and bool(np.all(self.array == other.array))

    # -- operator sugar (thin wrappers over the module-level functions) -------

    def __add__(self, other):
        return elementwise("add", self, other)

    def __sub__(self, other):
        return elementwise("sub", self, other)

    def __mul__(self, other):
        return elementwise("mul", self, other)

    def __truediv__(self, other):
        return elementwise("div", self, other)

    def __neg__(self):
        return elementwise("neg", self)

    def conj(self) -> "CTensor":
        return elementwise("conj", self)


def _coerce_pair(a: CTensor, b):
    """Validate the operand pair of a binary elementwise op.

    Returns the right operand as an ndarray (scalar or matching-shape array).
    """
    if isinstance(b, CTensor):
        if b.shape != a.shape:
            raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
        return b.array
    if np.ndim(b) == 0:
        return np.asarray(b, dtype=a.dtype)[()]
    raise DimensionError("second operand must be a CTensor of equal shape or a scalar")


def elementwise(op: str, a: CTensor, b=None) -> CTensor:
    """Elementwise complex arithmetic.

    ``op`` is one of ``add, sub, mul, div, conj, neg, exp, scale``.  Binary
    ops accept a second tensor of equal shape or a scalar; ``scale`` requires
    a scalar.  Division by an exact zero raises :class:`SingularityError`
    naming the first offending flat index.
    """
    if op in ("conj", "neg", "exp"):
        if b is not None:
            raise DimensionError(f"{op} is unary")
        if op == "conj":
            return CTensor(np.conj(a.array), dtype=a.dtype, real_only=a.real_only)
        if op == "neg":
            return CTensor(-a.array, dtype=a.dtype, real_only=a.real_only)
        return CTensor(np.exp(a.array), dtype=a.dtype)

    if op == "scale":
        if b is None or np.ndim(b) != 0:
            raise DimensionError("scale requires a scalar operand")
        return CTensor(a.array * np.asarray(b, dtype=a.dtype)[()], dtype=a.dtype)

    rhs = _coerce_pair(a, b)
    if op == "add":
        return CTensor(a.array + rhs, dtype=a.dtype)
    if op == "sub":
        return CTensor(a.array - rhs, dtype=a.dtype)
    if op == "mul":
        return CTensor(a.array * rhs, dtype=a.dtype)
    if op == "div":
        zero = rhs == 0.0
        if np.any(zero):
            idx = int(np.argmax(np.ravel(zero)))
            raise SingularityError(f"division by zero at flat index {idx}")
        return CTensor(a.array / rhs, dtype=a.dtype)
    raise DimensionError(f"unknown elementwise op {op!r}")


def modulus_arg(a: CTensor) -> tuple[CTensor, CTensor]:
    """Split into per-element ``(|z|, arg z)``.

    The phase lies in ``(-pi, pi]`` and ``arg(0)`` is defined as 0 so the
    decomposition is total.
    """
    mod = np.abs(a.array)
    arg = np.angle(a.array)
    arg = np.where(a.array == 0.0, 0.0, arg)
    # atan2 can land on -pi for negative-real inputs with a signed zero; fold
    # it onto pi so the range contract holds.
    arg = np.where(arg == -np.pi, np.pi, arg)
    real_dtype = np.float32 if a.dtype == np.complex64 else np.float64
    return (
        CTensor(mod.astype(real_dtype), dtype=a.dtype, real_only=True),
        CTensor(arg.astype(real_dtype), dtype=a.dtype, real_only=True),
    )


def matmul(a: CTensor, b: CTensor) -> CTensor:
    """Complex matrix product of a ``m x k`` by a ``k x n`` tensor."""
    if len(a.shape) != 2 or len(b.shape) != 2:
        raise DimensionError("matmul expects rank-2 tensors")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"inner dimensions disagree: {a.shape} x {b.shape}")
    return CTensor(a.array @ b.array, dtype=np.result_type(a.dtype, b.dtype))


def _pad_same(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """Zero-pad so that stride-1 correlation preserves the spatial extent."""
    ph, pw = kh - 1, kw - 1
    top, left = ph // 2, pw // 2
    return np.pad(x, ((top, ph - top), (left, pw - left), (0, 0)))


def conv2d(
    x: CTensor,
    kernels: CTensor,
    stride: tuple[int, int] = (1, 1),
    padding: str = "valid",
) -> CTensor:
    """2-D complex cross-correlation (no kernel flip).

    ``x`` is ``H x W x Cin``; ``kernels`` is ``kh x kw x Cin x Cout``.
    ``valid`` output extent is ``floor((H - kh)/sh) + 1``; ``same`` zero-pads
    so stride-1 output matches the input extent.
    """
    if len(x.shape) != 3 or len(kernels.shape) != 4:
        raise DimensionError("conv2d expects H x W x Cin input and kh x kw x Cin x Cout kernels")
    if x.shape[2] != kernels.shape[2]:
        raise DimensionError(f"channel mismatch: input {x.shape[2]}, kernels {kernels.shape[2]}")
    if padding not in ("valid", "same"):
        raise DimensionError(f"unknown padding {padding!r}")
    sh, sw = stride
    if sh < 1 or sw < 1:
        raise DimensionError("stride must be >= 1")
    kh, kw = kernels.shape[:2]
    arr = x.array
    if padding == "same":
        arr = _pad_same(arr, kh, kw)
    if kh > arr.shape[0] or kw > arr.shape[1]:
        raise DimensionError(
            f"kernel {kh}x{kw} larger than (padded) input {arr.shape[0]}x{arr.shape[1]}"
        )
    out = correlate2d_batched(arr[None], kernels.array, (sh, sw))[0]
    return CTensor(out, dtype=np.result_type(x.dtype, kernels.dtype))


def correlate2d_batched(x: np.ndarray, k: np.ndarray, stride: tuple[int, int]) -> np.ndarray:
    """Strided cross-correlation of ``B x H x W x Cin`` with ``kh x kw x Cin x Cout``.

    Shared kernel for :func:`conv2d` and the convolutional layer; no padding
    is applied here.
    """
    sh, sw = stride
    kh, kw = k.shape[:2]
    windows = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(1, 2))
    windows = windows[:, ::sh, ::sw]  # B x H' x W' x Cin x kh x kw
    return np.tensordot(windows, k, axes=[(3, 4, 5), (2, 0, 1)])
