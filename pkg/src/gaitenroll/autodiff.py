"""Reverse-mode automatic differentiation over dense float64 arrays.

The op set is closed and sized exactly to the enrollment model: add (equal
shapes, or a row-broadcast bias), mul (elementwise or by a python scalar),
matmul (optionally against the transpose of the second operand), relu,
row-wise softmax, layer norm, reshape, concat, mean over all elements, and
binary cross-entropy on logits. Every op checks its result for NaN/Inf and
raises NumericError instead of propagating.

Graphs are built eagerly and single-threaded; Tensor values are never
mutated by ops, so finished tensors are safe to share for reading.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .errors import NumericError

_Vjp = Callable[[np.ndarray], np.ndarray]


def _check_finite(arr: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values produced by op '{op}'")


class Tensor:
    """A dense float64 array node in the computation graph."""

    __slots__ = ("data", "requires_grad", "_edges")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        _check_finite(arr, "tensor")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self._edges: tuple[tuple[Tensor, _Vjp], ...] = ()

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise NumericError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __mul__(self, other) -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other) -> "Tensor":
        return mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)


def _result(data: np.ndarray, op: str, edges: Sequence[tuple[Tensor, _Vjp]]) -> Tensor:
    _check_finite(data, op)
    out = Tensor.__new__(Tensor)
    out.data = data
    kept = tuple((p, fn) for p, fn in edges if p.requires_grad)
    out.requires_grad = bool(kept)
    out._edges = kept
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; also accepts a 1-D b broadcast over the rows of a 2-D a."""
    if a.shape == b.shape:
        return _result(a.data + b.data, "add", [(a, lambda g: g), (b, lambda g: g)])
    if a.data.ndim == 2 and b.data.ndim == 1 and a.shape[1] == b.shape[0]:
        return _result(
            a.data + b.data,
            "add",
            [(a, lambda g: g), (b, lambda g: g.sum(axis=0))],
        )
    raise NumericError(f"add: incompatible shapes {a.shape} and {b.shape}")


def mul(a: Tensor, b) -> Tensor:
    """Elementwise product with an equal-shape tensor or a python scalar."""
    if isinstance(b, Tensor):
        if a.shape != b.shape:
            raise NumericError(f"mul: incompatible shapes {a.shape} and {b.shape}")
        return _result(
            a.data * b.data,
            "mul",
            [(a, lambda g: g * b.data), (b, lambda g: g * a.data)],
        )
    c = float(b)
    return _result(a.data * c, "mul", [(a, lambda g: g * c)])


def matmul(a: Tensor, b: Tensor, transpose_b: bool = False) -> Tensor:
    """2-D matrix product a @ b, or a @ b.T when transpose_b is set."""
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise NumericError(f"matmul: operands must be 2-D, got {a.shape} and {b.shape}")
    if transpose_b:
        if a.shape[1] != b.shape[1]:
            raise NumericError(f"matmul: incompatible shapes {a.shape} and {b.shape}.T")
        return _result(
            a.data @ b.data.T,
            "matmul",
            [(a, lambda g: g @ b.data), (b, lambda g: g.T @ a.data)],
        )
    if a.shape[1] != b.shape[0]:
        raise NumericError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    return _result(
        a.data @ b.data,
        "matmul",
        [(a, lambda g: g @ b.data.T), (b, lambda g: a.data.T @ g)],
    )


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0.0
    return _result(np.where(mask, x.data, 0.0), "relu", [(x, lambda g: g * mask)])


def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax of a 2-D tensor, stabilized by per-row max subtraction."""
    if x.data.ndim != 2:
        raise NumericError(f"softmax_rows: expected 2-D input, got {x.shape}")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=1, keepdims=True)

    def vjp(g: np.ndarray) -> np.ndarray:
        return p * (g - (g * p).sum(axis=1, keepdims=True))

    return _result(p, "softmax_rows", [(x, vjp)])


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each row of a 2-D tensor to zero mean / unit variance, then affine.

    The epsilon sits inside the square root: (x - mean) / sqrt(var + eps).
    """
    if x.data.ndim != 2:
        raise NumericError(f"layer_norm: expected 2-D input, got {x.shape}")
    d = x.shape[1]
    if d < 2:
        raise NumericError("layer_norm: per-vector dimension must be >= 2")
    if gain.shape != (d,) or bias.shape != (d,):
        raise NumericError(
            f"layer_norm: gain/bias must have shape ({d},), got {gain.shape}/{bias.shape}"
        )
    mu = x.data.mean(axis=1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv

    def vjp_x(g: np.ndarray) -> np.ndarray:
        gx = g * gain.data
        return (inv / d) * (
            d * gx - gx.sum(axis=1, keepdims=True) - xhat * (gx * xhat).sum(axis=1, keepdims=True)
        )

    return _result(
        xhat * gain.data + bias.data,
        "layer_norm",
        [
            (x, vjp_x),
            (gain, lambda g: (g * xhat).sum(axis=0)),
            (bias, lambda g: g.sum(axis=0)),
        ],
    )


def multi_head_attention(q: Tensor, k: Tensor, v: Tensor, n_heads: int) -> Tensor:
    """Fused softmax(q k^T / sqrt(dh)) v over n_heads column slices.

    One graph node covering the per-head split, scaled dot-product scores,
    row softmax, and value mixing; the backward pass is the hand-derived
    adjoint of that composition (checked against finite differences in the
    test suite). q, k, v are (T, d_model) with d_model divisible by n_heads.
    """
    if q.data.ndim != 2 or q.shape != k.shape or q.shape != v.shape:
        raise NumericError(
            f"multi_head_attention: q/k/v must share a 2-D shape, got "
            f"{q.shape}/{k.shape}/{v.shape}"
        )
    t, dm = q.shape
    if n_heads < 1 or dm % n_heads != 0:
        raise NumericError(f"multi_head_attention: {n_heads} heads do not divide width {dm}")
    dh = dm // n_heads
    scale = 1.0 / math.sqrt(dh)
    qh = q.data.reshape(t, n_heads, dh)
    kh = k.data.reshape(t, n_heads, dh)
    vh = v.data.reshape(t, n_heads, dh)
    scores = np.einsum("ihd,jhd->hij", qh, kh) * scale
    scores -= scores.max(axis=2, keepdims=True)
    e = np.exp(scores)
    w = e / e.sum(axis=2, keepdims=True)
    out = np.einsum("hij,jhd->ihd", w, vh).reshape(t, dm)

    memo: dict[int, tuple] = {}

    def shared(g: np.ndarray):
        found = memo.get(id(g))
        if found is not None and found[0] is g:
            return found[1]
        gh = g.reshape(t, n_heads, dh)
        grad_w = np.einsum("ihd,jhd->hij", gh, vh)
        grad_scores = w * (grad_w - (w * grad_w).sum(axis=2, keepdims=True))
        gq = scale * np.einsum("hij,jhd->ihd", grad_scores, kh).reshape(t, dm)
        gk = scale * np.einsum("hij,ihd->jhd", grad_scores, qh).reshape(t, dm)
        gv = np.einsum("hij,ihd->jhd", w, gh).reshape(t, dm)
        memo.clear()
        memo[id(g)] = (g, (gq, gk, gv))
        return gq, gk, gv

    return _result(
        out,
        "multi_head_attention",
        [
            (q, lambda g: shared(g)[0]),
            (k, lambda g: shared(g)[1]),
            (v, lambda g: shared(g)[2]),
        ],
    )


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    old = x.shape
    return _result(
        x.data.reshape(shape), "reshape", [(x, lambda g: g.reshape(old))]
    )


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Concatenate tensors along an axis."""
    if not parts:
        raise NumericError("concat: empty input")
    data = np.concatenate([p.data for p in parts], axis=axis)
    edges = []
    offset = 0
    for p in parts:
        lo, hi = offset, offset + p.shape[axis]
        sl = tuple(
            slice(lo, hi) if ax == (axis % data.ndim) else slice(None)
            for ax in range(data.ndim)
        )
        edges.append((p, lambda g, sl=sl: g[sl]))
        offset = hi
    return _result(data, "concat", edges)


def mean_all(x: Tensor) -> Tensor:
    """Mean over all elements, as a scalar tensor."""
    n = x.size
    if n == 0:
        raise NumericError("mean_all: empty tensor")
    shape = x.shape
    return _result(
        np.asarray(x.data.mean()),
        "mean_all",
        [(x, lambda g: np.full(shape, float(g) / n))],
    )


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def bce_with_logits(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Per-element binary cross-entropy, numerically stable.

    loss = max(z, 0) - z*y + log(1 + exp(-|z|)); targets are 0/1 constants.
    """
    y = np.asarray(targets, dtype=np.float64)
    if y.shape != logits.shape:
        raise NumericError(f"bce_with_logits: targets shape {y.shape} != logits {logits.shape}")
    z = logits.data
    loss = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))

    def vjp(g: np.ndarray) -> np.ndarray:
        return g * (_sigmoid(z) - y)

    return _result(loss, "bce_with_logits", [(logits, vjp)])


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node._edges:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(output: Tensor) -> dict[int, np.ndarray]:
    """Gradients of a scalar output w.r.t. every reachable grad-tracked tensor.

    Returns a map keyed by id(tensor). The graph itself is left untouched, so
    repeated calls are independent.
    """
    if output.size != 1:
        raise NumericError(f"backward: output must be scalar, got shape {output.shape}")
    grads: dict[int, np.ndarray] = {id(output): np.ones_like(output.data)}
    for node in reversed(_topo_order(output)):
        g = grads.get(id(node))
        if g is None:
            continue
        for parent, vjp in node._edges:
            contrib = vjp(g)
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + contrib
            else:
                grads[key] = contrib
    return grads


def gradients(output: Tensor, params: Sequence[Tensor]) -> list[np.ndarray]:
    """Gradient of a scalar output for each param; zeros for unused params."""
    grads = backward(output)
    out = []
    for p in params:
        g = grads.get(id(p))
        if g is None:
            g = np.zeros_like(p.data)
        else:
            _check_finite(g, "backward")
        out.append(g)
    return out
