"""Forward operators with apply / VJP / JVP and a finite-difference probe.

Every operator maps flat ``float64`` vectors of length ``input_dim`` to flat
vectors of length ``output_dim``. Grid-structured operators (blur,
downsample) carry a ``shape`` and reshape internally.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

__all__ = [
    "ForwardOperator",
    "IdentityOp",
    "MatrixOp",
    "MaskOp",
    "BlurOp",
    "DownsampleOp",
    "MagnitudeOp",
    "HdrClipOp",
    "SquareOp",
    "BlurSaturateOp",
    "CountingOperator",
    "OperatorSpec",
    "build_operator",
    "gaussian_kernel",
    "as_matrix",
]


def _vec(x, n: int, what: str = "input") -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        x = x.reshape(-1)
    if x.size != n:
        raise ValueError(f"{what} has length {x.size}, expected {n}")
    return x


class ForwardOperator:
    """Base class; subclasses implement ``_apply``, ``_vjp`` and ``_jvp``."""

    input_dim: int
    output_dim: int
    has_exact_jvp = True
    linear = False
    default_eta = 1e-3

    def apply(self, x) -> np.ndarray:
        return self._apply(_vec(x, self.input_dim))

    def vjp(self, x, r) -> np.ndarray:
        """``J(x)^T r``."""
        return self._vjp(_vec(x, self.input_dim), _vec(r, self.output_dim, "cotangent"))

    def jvp(self, x, g) -> np.ndarray:
        """``J(x) g``; operators without a forward-mode derivative use the probe."""
        x = _vec(x, self.input_dim)
        g = _vec(g, self.input_dim, "tangent")
        if not self.has_exact_jvp:
            eta = self.default_eta
            return self.fd_probe(x, g, eta) / eta
        return self._jvp(x, g)

    def fd_probe(self, x, g, eta: float, ax=None) -> np.ndarray:
        """Forward difference ``A(x + eta g) - A(x)``, not divided by ``eta``.

        ``ax`` may carry a cached ``A(x)``.
        """
        if not eta > 0:
            raise ValueError("eta must be positive")
        x = _vec(x, self.input_dim)
        g = _vec(g, self.input_dim, "tangent")
        if ax is None:
            ax = self._apply(x)
        return self._apply(x + eta * g) - ax

    def __call__(self, x) -> np.ndarray:
        return self.apply(x)

    def _jvp(self, x, g):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.input_dim} -> {self.output_dim})"


class IdentityOp(ForwardOperator):
    linear = True

    def __init__(self, n: int):
        self.input_dim = self.output_dim = int(n)

    def _apply(self, x):
        return x.copy()

    def _vjp(self, x, r):
        return r.copy()

    def _jvp(self, x, g):
        return g.copy()


class MatrixOp(ForwardOperator):
    """Dense linear operator ``x -> H x``."""

    linear = True

    def __init__(self, H):
        H = np.asarray(H, dtype=float)
        if H.ndim != 2 or H.size == 0:
            raise ValueError("H must be a non-empty matrix")
        self.H = H
        self.output_dim, self.input_dim = H.shape

    def _apply(self, x):
        return self.H @ x

    def _vjp(self, x, r):
        return self.H.T @ r

    def _jvp(self, x, g):
        return self.H @ g


class MaskOp(ForwardOperator):
    """Keeps the coordinates listed in ``keep`` (ascending)."""

    linear = True

    def __init__(self, n: int, keep):
        keep = np.asarray(keep)
        if keep.dtype == bool:
            raise ValueError("keep lists indices; use MaskOp.from_bitmap for boolean masks")
        keep = np.unique(keep.astype(np.int64))
        if keep.size == 0:
            raise ValueError("mask keeps no coordinates")
        if keep[0] < 0 or keep[-1] >= n:
            raise ValueError("mask index out of range")
        self.input_dim = int(n)
        self.output_dim = int(keep.size)
        self.keep = keep

    @classmethod
    def from_bitmap(cls, bitmap) -> "MaskOp":
        bitmap = np.asarray(bitmap).reshape(-1)
        return cls(bitmap.size, np.flatnonzero(bitmap != 0))

    def _apply(self, x):
        return x[self.keep]

    def _vjp(self, x, r):
        out = np.zeros(self.input_dim)
        out[self.keep] = r
        return out

    def _jvp(self, x, g):
        return g[self.keep]


def gaussian_kernel(width: float, taps: int, ndim: int = 1) -> np.ndarray:
    """Normalized sampled Gaussian with ``taps`` points per axis (odd)."""
    if taps < 1 or taps % 2 == 0:
        raise ValueError("taps must be a positive odd integer")
    if not width > 0:
        raise ValueError("width must be positive")
    t = np.arange(taps) - taps // 2
    k1 = np.exp(-0.5 * (t / width) ** 2)
    k = k1
    for _ in range(ndim - 1):
        k = np.multiply.outer(k, k1)
    return k / k.sum()


def _circular_filter(arr, kernel, sign):
    # out[i] = sum_j kernel[j] * arr[i + sign*(j - c)] per axis, wrapped;
    # sign=-1 is convolution, sign=+1 its adjoint (correlation)
    out = np.zeros_like(arr)
    centre = tuple(s // 2 for s in kernel.shape)
    for idx in np.ndindex(*kernel.shape):
        w = kernel[idx]
        if w == 0.0:
            continue
        shift = tuple(sign * (c - j) for j, c in zip(idx, centre))
        out += w * np.roll(arr, shift, axis=tuple(range(arr.ndim)))
    return out


class BlurOp(ForwardOperator):
    """Circular convolution with a centred kernel on a 1-D or 2-D grid."""

    linear = True

    def __init__(self, shape, kernel):
        shape = (int(shape),) if np.isscalar(shape) else tuple(int(s) for s in shape)
        kernel = np.asarray(kernel, dtype=float)
        if kernel.ndim != len(shape):
            raise ValueError("kernel rank must match grid rank")
        if any(k > s for k, s in zip(kernel.shape, shape)):
            raise ValueError("kernel larger than grid")
        if kernel.size == 0 or not np.all(np.isfinite(kernel)):
            raise ValueError("kernel must be non-empty and finite")
        self.shape = shape
        self.kernel = kernel
        self.input_dim = self.output_dim = int(np.prod(shape))

    def _apply(self, x):
        return _circular_filter(x.reshape(self.shape), self.kernel, -1).reshape(-1)

    def _vjp(self, x, r):
        return _circular_filter(r.reshape(self.shape), self.kernel, 1).reshape(-1)

    def _jvp(self, x, g):
        return self._apply(g)


class DownsampleOp(ForwardOperator):
    """Block averaging by an integer factor along every grid axis."""

    linear = True

    def __init__(self, shape, factor: int):
        shape = (int(shape),) if np.isscalar(shape) else tuple(int(s) for s in shape)
        if int(factor) != factor or factor < 1:
            raise ValueError("downsample factor must be a positive integer")
        factor = int(factor)
        if any(s % factor for s in shape):
            raise ValueError(f"grid {shape} not divisible by factor {factor}")
        self.shape = shape
        self.factor = factor
        self.out_shape = tuple(s // factor for s in shape)
        self.input_dim = int(np.prod(shape))
        self.output_dim = int(np.prod(self.out_shape))

    def _blocks(self, x):
        f = self.factor
        split = []
        for s in self.out_shape:
            split += [s, f]
        return x.reshape(split)

    def _apply(self, x):
        axes = tuple(range(1, 2 * len(self.shape), 2))
        return self._blocks(x.reshape(self.shape)).mean(axis=axes).reshape(-1)

    def _vjp(self, x, r):
        scale = 1.0 / self.factor ** len(self.shape)
        out = r.reshape(self.out_shape) * scale
        for axis in range(len(self.shape)):
            out = np.repeat(out, self.factor, axis=axis)
        return out.reshape(-1)

    def _jvp(self, x, g):
        return self._apply(g)


class MagnitudeOp(ForwardOperator):
    """``x -> |H x|`` for complex ``H`` stored as ``[Re H; Im H]`` (2m x n).

    The subgradient at a zero magnitude is taken as zero.
    """

    def __init__(self, stacked):
        stacked = np.asarray(stacked, dtype=float)
        if stacked.ndim != 2 or stacked.shape[0] % 2 or stacked.size == 0:
            raise ValueError("stacked transform must have an even, non-zero row count")
        m = stacked.shape[0] // 2
        self.re, self.im = stacked[:m], stacked[m:]
        self.output_dim, self.input_dim = m, stacked.shape[1]

    def _parts(self, x):
        a, b = self.re @ x, self.im @ x
        mag = np.hypot(a, b)
        safe = np.where(mag > 0, mag, 1.0)
        ca = np.where(mag > 0, a / safe, 0.0)
        cb = np.where(mag > 0, b / safe, 0.0)
        return mag, ca, cb

    def _apply(self, x):
        return np.hypot(self.re @ x, self.im @ x)

    def _vjp(self, x, r):
        _, ca, cb = self._parts(x)
        return self.re.T @ (ca * r) + self.im.T @ (cb * r)

    def _jvp(self, x, g):
        _, ca, cb = self._parts(x)
        return ca * (self.re @ g) + cb * (self.im @ g)


class HdrClipOp(ForwardOperator):
    """``x -> clip(gain * x, lo, hi)``; slope is ``gain`` on the closed interval."""

    def __init__(self, n: int, gain: float = 2.0, lo: float = -1.0, hi: float = 1.0):
        if not lo < hi:
            raise ValueError("need lo < hi")
        if gain == 0:
            raise ValueError("gain must be non-zero")
        self.input_dim = self.output_dim = int(n)
        self.gain, self.lo, self.hi = float(gain), float(lo), float(hi)

    def _slope(self, x):
        kx = self.gain * x
        return np.where((kx >= self.lo) & (kx <= self.hi), self.gain, 0.0)

    def _apply(self, x):
        return np.clip(self.gain * x, self.lo, self.hi)

    def _vjp(self, x, r):
        return self._slope(x) * r

    def _jvp(self, x, g):
        return self._slope(x) * g


class SquareOp(ForwardOperator):
    """Elementwise square; a smooth nonlinear test operator."""

    def __init__(self, n: int):
        self.input_dim = self.output_dim = int(n)

    def _apply(self, x):
        return x * x

    def _vjp(self, x, r):
        return 2.0 * x * r

    def _jvp(self, x, g):
        return 2.0 * x * g


class BlurSaturateOp(ForwardOperator):
    """``x -> tanh(gain * blur(x))``; exposes no forward-mode derivative."""

    has_exact_jvp = False

    def __init__(self, shape, kernel, gain: float = 3.0):
        self.blur = BlurOp(shape, kernel)
        self.gain = float(gain)
        self.input_dim = self.output_dim = self.blur.input_dim

    def _apply(self, x):
        return np.tanh(self.gain * self.blur._apply(x))

    def _vjp(self, x, r):
        t = np.tanh(self.gain * self.blur._apply(x))
        return self.blur._vjp(x, self.gain * (1.0 - t * t) * r)


class CountingOperator(ForwardOperator):
    """Wraps an operator and counts apply / VJP / JVP / probe calls.

    A probe is one extra forward evaluation at the perturbed point; it is
    counted under ``probe`` and not under ``apply``.
    """

    def __init__(self, op: ForwardOperator):
        self.op = op
        self.input_dim, self.output_dim = op.input_dim, op.output_dim
        self.has_exact_jvp = op.has_exact_jvp
        self.linear = op.linear
        self.default_eta = op.default_eta
        self.counts = {"apply": 0, "vjp": 0, "jvp": 0, "probe": 0}

    def reset(self):
        for k in self.counts:
            self.counts[k] = 0

    def apply(self, x):
        self.counts["apply"] += 1
        return self.op.apply(x)

    def vjp(self, x, r):
        self.counts["vjp"] += 1
        return self.op.vjp(x, r)

    def jvp(self, x, g):
        self.counts["jvp"] += 1
        return self.op.jvp(x, g)

    def fd_probe(self, x, g, eta, ax=None):
        self.counts["probe"] += 1
        if ax is None:
            self.counts["apply"] += 1
        return self.op.fd_probe(x, g, eta, ax=ax)


def as_matrix(op: ForwardOperator) -> np.ndarray:
    """Dense matrix of a linear operator, assembled column by column."""
    if not op.linear:
        raise ValueError(f"{op!r} is not linear")
    n = op.input_dim
    zero = np.zeros(n)
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        cols.append(op.jvp(zero, e))
    return np.stack(cols, axis=1)


KINDS = ("identity", "mask", "blur", "downsample", "magnitude", "hdr_clip",
         "blur_then_saturate", "square", "matrix")


@dataclass
class OperatorSpec:
    """Declarative description of a built-in operator.

    ``params`` by kind: ``mask`` takes ``keep`` or ``bitmap``; ``blur`` and
    ``blur_then_saturate`` take ``kernel`` (or ``width`` and ``taps``) and an
    optional ``shape``; ``downsample`` takes ``factor`` and optional ``shape``;
    ``magnitude`` and ``matrix`` take ``matrix``; ``hdr_clip`` takes ``gain``,
    ``lo``, ``hi``; ``blur_then_saturate`` also takes ``gain``.
    """

    kind: str
    input_dim: int
    params: dict[str, Any] = field(default_factory=dict)


def build_operator(spec: OperatorSpec) -> ForwardOperator:
    p = spec.params
    n = int(spec.input_dim)
    if n < 1:
        raise ValueError("input_dim must be positive")
    shape = tuple(p.get("shape", (n,)))
    if int(np.prod(shape)) != n:
        raise ValueError(f"shape {shape} inconsistent with input_dim {n}")

    def kernel():
        if "kernel" in p:
            return np.asarray(p["kernel"], dtype=float)
        return gaussian_kernel(float(p.get("width", 1.5)), int(p.get("taps", 9)), len(shape))

    kind = spec.kind
    if kind == "identity":
        op = IdentityOp(n)
    elif kind == "mask":
        if "bitmap" in p:
            op = MaskOp.from_bitmap(p["bitmap"])
            if op.input_dim != n:
                raise ValueError("bitmap size inconsistent with input_dim")
        else:
            op = MaskOp(n, p["keep"])
    elif kind == "blur":
        op = BlurOp(shape, kernel())
    elif kind == "downsample":
        op = DownsampleOp(shape, p.get("factor", 2))
    elif kind == "magnitude":
        op = MagnitudeOp(p["matrix"])
    elif kind == "hdr_clip":
        op = HdrClipOp(n, p.get("gain", 2.0), p.get("lo", -1.0), p.get("hi", 1.0))
    elif kind == "blur_then_saturate":
        op = BlurSaturateOp(shape, kernel(), p.get("gain", 3.0))
    elif kind == "square":
        op = SquareOp(n)
    elif kind == "matrix":
        op = MatrixOp(p["matrix"])
    else:
        raise ValueError(f"unknown operator kind {kind!r}; expected one of {KINDS}")
    if op.input_dim != n:
        raise ValueError(f"{kind} operator has input_dim {op.input_dim}, declared {n}")
    return op
