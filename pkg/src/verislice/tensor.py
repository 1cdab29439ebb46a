"""Dense tensor containers and layer kernels in real and fixed-point arithmetic.

Two container types share one set of kernels:

* ``FloatTensor`` holds float64 values and is the reference arithmetic.
* ``FieldTensor`` holds int64 values at a power-of-two scale: the
  represented value is ``data / 2**scale_bits``.

Fixed-point dot-product kernels (conv2d, linear) accumulate products at
scale ``2f`` in int64, add the bias (stored at scale ``2f``), and rescale
back to ``f`` with round-half-away-from-zero division.  Every value and
accumulator must stay below magnitude 2**62; kernels raise
``FixedPointOverflowError`` before any int64 wraparound can occur.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import FixedPointOverflowError, ShapeError

# Magnitude bound for fixed-point data and accumulators.  Staying below
# 2**62 leaves a factor-of-two margin to the int64 limit, so bound-checked
# accumulations can never wrap.
MAGNITUDE_LIMIT = 1 << 62


def _check_shape(shape) -> tuple[int, ...]:
    dims = tuple(int(d) for d in shape)
    if len(dims) == 0 or any(d <= 0 for d in dims):
        raise ShapeError(f"shape must have positive dimensions, got {shape!r}")
    return dims


@dataclass(frozen=True, eq=False)
class FloatTensor:
    """Dense real-valued tensor, row-major, immutable after construction."""

    shape: tuple[int, ...]
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        shape = _check_shape(self.shape)
        arr = np.ascontiguousarray(self.data, dtype=np.float64).reshape(shape)
        if not np.all(np.isfinite(arr)):
            raise ShapeError("FloatTensor values must be finite")
        arr.flags.writeable = False
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "data", arr)

    @classmethod
    def of(cls, values, shape=None) -> "FloatTensor":
        arr = np.asarray(values, dtype=np.float64)
        if shape is None:
            shape = arr.shape if arr.shape else (1,)
        return cls(tuple(shape), arr.reshape(tuple(shape)))

    @property
    def size(self) -> int:
        return int(self.data.size)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, FloatTensor)
            and self.shape == other.shape
            and np.array_equal(self.data, other.data)
        )

    def __repr__(self) -> str:
        return f"FloatTensor(shape={self.shape})"


@dataclass(frozen=True, eq=False)
class FieldTensor:
    """Dense fixed-point tensor: value = data / 2**scale_bits, int64 storage."""

    shape: tuple[int, ...]
    data: np.ndarray = field(repr=False)
    scale_bits: int = 0

    def __post_init__(self):
        shape = _check_shape(self.shape)
        if self.scale_bits < 0:
            raise ShapeError("scale_bits must be non-negative")
        arr = np.ascontiguousarray(self.data, dtype=np.int64).reshape(shape)
        if arr.size and int(np.abs(arr).max()) >= MAGNITUDE_LIMIT:
            raise FixedPointOverflowError(
                "FieldTensor element magnitude reaches 2**62"
            )
        arr.flags.writeable = False
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "scale_bits", int(self.scale_bits))

    @classmethod
    def of(cls, values, scale_bits: int, shape=None) -> "FieldTensor":
        arr = np.asarray(values, dtype=np.int64)
        if shape is None:
            shape = arr.shape if arr.shape else (1,)
        return cls(tuple(shape), arr.reshape(tuple(shape)), scale_bits)

    @property
    def size(self) -> int:
        return int(self.data.size)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, FieldTensor)
            and self.shape == other.shape
            and self.scale_bits == other.scale_bits
            and np.array_equal(self.data, other.data)
        )

    def __repr__(self) -> str:
        return f"FieldTensor(shape={self.shape}, scale_bits={self.scale_bits})"


Tensor = FloatTensor | FieldTensor


# ---------------------------------------------------------------------------
# rounding helpers
# ---------------------------------------------------------------------------


def round_half_away(values: np.ndarray) -> np.ndarray:
    """Round floats to the nearest integer, halves away from zero."""
    v = np.asarray(values, dtype=np.float64)
    return np.where(v >= 0.0, np.floor(v + 0.5), np.ceil(v - 0.5))


def rshift_round_half_away(acc: np.ndarray, bits: int) -> np.ndarray:
    """Divide int64 values by 2**bits, rounding halves away from zero.

    Callers must ensure |acc| + 2**(bits-1) stays below int64 range; all
    kernel accumulators are bound-checked below 2**62 first.
    """
    if bits == 0:
        return acc
    half = np.int64(1) << np.int64(bits - 1)
    mag = (np.abs(acc) + half) >> np.int64(bits)
    return np.where(acc < 0, -mag, mag)


def _where_label(layer: str | None) -> str:
    return f" in layer {layer!r}" if layer else ""


def _check_accumulator_bound(
    max_abs_in: float, sum_abs_w: np.ndarray, abs_bias: np.ndarray, layer: str | None
):
    # Conservative per-output bound on |sum x_i w_i + b|.  Computed in
    # float64 so it cannot wrap; any true overflow is necessarily caught,
    # at the cost of rejecting some inputs that would only come close.
    bound = max_abs_in * sum_abs_w.astype(np.float64) + abs_bias.astype(np.float64)
    if float(bound.max(initial=0.0)) >= float(MAGNITUDE_LIMIT):
        raise FixedPointOverflowError(
            f"fixed-point accumulator would reach 2**62{_where_label(layer)}"
        )


def _same_kind(*tensors) -> type:
    kinds = {type(t) for t in tensors}
    if len(kinds) != 1:
        raise ShapeError(
            "mixed tensor kinds: " + ", ".join(sorted(k.__name__ for k in kinds))
        )
    return kinds.pop()


def _check_dot_scales(x: FieldTensor, w: FieldTensor, b: FieldTensor, layer):
    if w.scale_bits != x.scale_bits:
        raise ShapeError(
            f"weight scale {w.scale_bits} != input scale {x.scale_bits}"
            f"{_where_label(layer)}"
        )
    if b.scale_bits != 2 * x.scale_bits:
        raise ShapeError(
            f"bias scale {b.scale_bits} != 2*{x.scale_bits}{_where_label(layer)}"
        )


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1, layer: str | None = None) -> Tensor:
    """Valid (no padding) 2-D convolution: [C,H,W] x [O,C,k,k] -> [O,H',W'].

    H' = (H - k) // stride + 1 and likewise for W'.
    """
    kind = _same_kind(x, w, b)
    if stride < 1:
        raise ShapeError(f"stride must be positive{_where_label(layer)}")
    if len(x.shape) != 3 or len(w.shape) != 4 or len(b.shape) != 1:
        raise ShapeError(f"conv2d expects x[C,H,W], w[O,C,k,k], b[O]{_where_label(layer)}")
    c, h, wd = x.shape
    o, cw, kh, kw = w.shape
    if kh != kw:
        raise ShapeError(f"square kernels only, got {kh}x{kw}{_where_label(layer)}")
    if cw != c:
        raise ShapeError(
            f"input has {c} channels, weights expect {cw}{_where_label(layer)}"
        )
    if b.shape != (o,):
        raise ShapeError(f"bias length {b.shape[0]} != {o} outputs{_where_label(layer)}")
    if h < kh or wd < kw:
        raise ShapeError(
            f"spatial dims {h}x{wd} smaller than kernel {kh}{_where_label(layer)}"
        )

    windows = np.lib.stride_tricks.sliding_window_view(x.data, (kh, kw), axis=(1, 2))
    windows = windows[:, ::stride, ::stride]  # [C, H', W', k, k]

    if kind is FloatTensor:
        acc = np.tensordot(w.data, windows, axes=([1, 2, 3], [0, 3, 4]))
        out = acc + b.data[:, None, None]
        return FloatTensor(out.shape, out)

    _check_dot_scales(x, w, b, layer)
    max_abs_in = float(np.abs(x.data).max(initial=0))
    sum_abs_w = np.abs(w.data).sum(axis=(1, 2, 3))
    _check_accumulator_bound(max_abs_in, sum_abs_w, np.abs(b.data), layer)
    acc = np.tensordot(w.data, windows, axes=([1, 2, 3], [0, 3, 4]))
    acc = acc + b.data[:, None, None]
    out = rshift_round_half_away(acc, x.scale_bits)
    return FieldTensor(out.shape, out, x.scale_bits)


def linear(x: Tensor, w: Tensor, b: Tensor, layer: str | None = None) -> Tensor:
    """Affine map y = W x + b.  Inputs of rank > 1 are flattened row-major."""
    kind = _same_kind(x, w, b)
    if len(w.shape) != 2 or len(b.shape) != 1:
        raise ShapeError(f"linear expects w[m,n], b[m]{_where_label(layer)}")
    m, n = w.shape
    if x.size != n:
        raise ShapeError(
            f"input has {x.size} features, weights expect {n}{_where_label(layer)}"
        )
    if b.shape != (m,):
        raise ShapeError(f"bias length {b.shape[0]} != {m} outputs{_where_label(layer)}")
    flat = x.data.reshape(n)

    if kind is FloatTensor:
        out = w.data @ flat + b.data
        return FloatTensor((m,), out)

    _check_dot_scales(x, w, b, layer)
    max_abs_in = float(np.abs(flat).max(initial=0))
    sum_abs_w = np.abs(w.data).sum(axis=1)
    _check_accumulator_bound(max_abs_in, sum_abs_w, np.abs(b.data), layer)
    acc = w.data @ flat + b.data
    out = rshift_round_half_away(acc, x.scale_bits)
    return FieldTensor((m,), out, x.scale_bits)


def relu(x: Tensor) -> Tensor:
    """Elementwise max(0, x); exact in both arithmetics."""
    if isinstance(x, FloatTensor):
        return FloatTensor(x.shape, np.maximum(x.data, 0.0))
    return FieldTensor(x.shape, np.maximum(x.data, 0), x.scale_bits)


def maxpool2d(x: Tensor, window: int = 2, layer: str | None = None) -> Tensor:
    """Non-overlapping window max over [C,H,W]; H and W must divide evenly."""
    if len(x.shape) != 3:
        raise ShapeError(f"maxpool2d expects [C,H,W]{_where_label(layer)}")
    if window < 1:
        raise ShapeError(f"window must be positive{_where_label(layer)}")
    c, h, w = x.shape
    if h % window or w % window:
        raise ShapeError(
            f"spatial dims {h}x{w} not divisible by window {window}{_where_label(layer)}"
        )
    pooled = x.data.reshape(c, h // window, window, w // window, window).max(axis=(2, 4))
    if isinstance(x, FloatTensor):
        return FloatTensor(pooled.shape, pooled)
    return FieldTensor(pooled.shape, pooled, x.scale_bits)


def flatten(x: Tensor) -> Tensor:
    """Row-major reshape to rank 1; exact in both arithmetics."""
    if isinstance(x, FloatTensor):
        return FloatTensor((x.size,), x.data.reshape(x.size))
    return FieldTensor((x.size,), x.data.reshape(x.size), x.scale_bits)


def softmax(logits: FloatTensor) -> FloatTensor:
    """Stabilized softmax over a rank-1 real tensor; outputs sum to 1."""
    if not isinstance(logits, FloatTensor):
        raise ShapeError("softmax is defined on FloatTensor logits only")
    if len(logits.shape) != 1:
        raise ShapeError("softmax expects a rank-1 tensor")
    z = logits.data - logits.data.max()
    e = np.exp(z)
    return FloatTensor(logits.shape, e / e.sum())


def argmax(t: Tensor) -> int:
    """Index of the maximum element; ties break to the smallest index."""
    if t.size == 0:
        raise ShapeError("argmax of an empty tensor")
    return int(np.argmax(t.data.reshape(t.size)))


# ---------------------------------------------------------------------------
# canonical bytes and digests
# ---------------------------------------------------------------------------


def field_tensor_block(t: FieldTensor) -> bytes:
    """Canonical binary block: u32 rank, u32 dims..., int64 LE values."""
    head = np.array([len(t.shape), *t.shape], dtype="<u4").tobytes()
    return head + t.data.astype("<i8").tobytes()


def read_field_tensor_block(buf: bytes, offset: int, scale_bits: int) -> tuple[FieldTensor, int]:
    """Inverse of ``field_tensor_block``; returns (tensor, next offset)."""
    (rank,) = np.frombuffer(buf, dtype="<u4", count=1, offset=offset)
    offset += 4
    dims = np.frombuffer(buf, dtype="<u4", count=int(rank), offset=offset)
    offset += 4 * int(rank)
    n = int(np.prod(dims, dtype=np.int64)) if rank else 0
    values = np.frombuffer(buf, dtype="<i8", count=n, offset=offset)
    offset += 8 * n
    return FieldTensor(tuple(int(d) for d in dims), values.astype(np.int64), scale_bits), offset


def tensor_digest(t: FieldTensor) -> str:
    """SHA-256 (lowercase hex) over scale_bits plus the canonical block."""
    import hashlib

    h = hashlib.sha256()
    h.update(b"FT1")
    h.update(np.array([t.scale_bits], dtype="<u4").tobytes())
    h.update(field_tensor_block(t))
    return h.hexdigest()
