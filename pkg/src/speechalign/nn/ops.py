"""Primitive differentiable ops over rank-2 tensors.

Forward math for the hot ops (softmax, layer norm, attention, token
matching) lives in `speechalign.backend`; everything here is the taping
layer plus the cheap ops numpy already does well. Broadcasting is limited
to one pattern: a (1, c) tensor combines with an (r, c) tensor row-wise
(bias adds, gain multiplies).

Gradient conventions: |x| has subgradient 0 at x == 0; the token-matching
max routes gradient to the lowest-index argmax frame on ties.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erf

from speechalign import backend
from speechalign.errors import ShapeError
from speechalign.nn.tensor import Tensor

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _binary_shapes(a: Tensor, b: Tensor, op: str) -> bool:
    """Validate elementwise shapes; returns True when b broadcasts over rows."""
    if a.shape == b.shape:
        return False
    if b.rows == 1 and b.cols == a.cols:
        return True
    raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} are incompatible")


def add(a: Tensor, b: Tensor) -> Tensor:
    broadcast = _binary_shapes(a, b, "add")

    def bwd(g):
        return g, g.sum(axis=0, keepdims=True) if broadcast else g

    return Tensor(a.data + b.data, op="add", parents=(a, b), backward=bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    broadcast = _binary_shapes(a, b, "sub")

    def bwd(g):
        return g, -g.sum(axis=0, keepdims=True) if broadcast else -g

    return Tensor(a.data - b.data, op="sub", parents=(a, b), backward=bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    broadcast = _binary_shapes(a, b, "mul")

    def bwd(g):
        ga = g * b.data
        gb = g * a.data
        return ga, gb.sum(axis=0, keepdims=True) if broadcast else gb

    return Tensor(a.data * b.data, op="mul", parents=(a, b), backward=bwd)


def scale(a: Tensor, s: float) -> Tensor:
    return Tensor(a.data * s, op="scale", parents=(a,), backward=lambda g: (g * s,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.rows:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")

    def bwd(g):
        return g @ b.data.T, a.data.T @ g

    return Tensor(a.data @ b.data, op="matmul", parents=(a, b), backward=bwd)


def transpose(a: Tensor) -> Tensor:
    return Tensor(
        np.ascontiguousarray(a.data.T),
        op="transpose",
        parents=(a,),
        backward=lambda g: (np.ascontiguousarray(g.T),),
    )


def abs_(a: Tensor) -> Tensor:
    def bwd(g):
        return (g * np.sign(a.data),)

    return Tensor(np.abs(a.data), op="abs", parents=(a,), backward=bwd)


def gelu(a: Tensor) -> Tensor:
    """Exact (erf-based) GELU."""
    x = a.data
    cdf = 0.5 * (1.0 + erf(x / _SQRT2))
    out = x * cdf

    def bwd(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
        return (g * (cdf + x * pdf).astype(x.dtype),)

    return Tensor(out.astype(x.dtype), op="gelu", parents=(a,), backward=bwd)


def sum_all(a: Tensor) -> Tensor:
    def bwd(g):
        return (np.full_like(a.data, g[0, 0]),)

    return Tensor(a.data.sum().reshape(1, 1), op="sum", parents=(a,), backward=bwd)


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size

    def bwd(g):
        return (np.full_like(a.data, g[0, 0] / n),)

    return Tensor(a.data.mean().reshape(1, 1), op="mean", parents=(a,), backward=bwd)


def concat_rows(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.cols:
        raise ShapeError(f"concat_rows: {a.shape} vs {b.shape}")
    na = a.rows

    def bwd(g):
        return g[:na], g[na:]

    return Tensor(
        np.concatenate([a.data, b.data], axis=0), op="concat_rows", parents=(a, b), backward=bwd
    )


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    if not (0 <= start < stop <= a.rows):
        raise ShapeError(f"slice_rows[{start}:{stop}] on {a.shape}")

    def bwd(g):
        full = np.zeros_like(a.data)
        full[start:stop] = g
        return (full,)

    return Tensor(a.data[start:stop].copy(), op="slice_rows", parents=(a,), backward=bwd)


def embed(table: Tensor, ids: np.ndarray) -> Tensor:
    ids = np.asarray(ids, dtype=np.intp)
    if ids.ndim != 1:
        raise ShapeError(f"embed: ids must be 1-D, got {ids.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.rows):
        raise ShapeError(f"embed: id out of range for table with {table.rows} rows")

    def bwd(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        return (gt,)

    return Tensor(table.data[ids].copy(), op="embed", parents=(table,), backward=bwd)


def softmax_rows(a: Tensor) -> Tensor:
    y = backend.softmax_rows_fwd(a.data)

    def bwd(g):
        return (backend.softmax_rows_bwd(y, np.ascontiguousarray(g)),)

    return Tensor(y, op="softmax_rows", parents=(a,), backward=bwd)


def layer_norm_rows(a: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-row standardization to mean 0 / variance 1 (population), pre-affine."""
    y, inv_std = backend.layernorm_rows_fwd(a.data, eps)

    def bwd(g):
        return (backend.layernorm_rows_bwd(y, inv_std, np.ascontiguousarray(g)),)

    return Tensor(y, op="layer_norm_rows", parents=(a,), backward=bwd)


def attention(q: Tensor, k: Tensor, v: Tensor, heads: int) -> Tensor:
    """Bidirectional scaled dot-product attention, all heads in one op."""
    if q.cols != k.cols or k.shape != v.shape:
        raise ShapeError(f"attention: q {q.shape}, k {k.shape}, v {v.shape}")
    if q.cols % heads != 0:
        raise ShapeError(f"attention: width {q.cols} not divisible by {heads} heads")
    sc = 1.0 / math.sqrt(q.cols // heads)
    out, weights = backend.attention_fwd(q.data, k.data, v.data, heads, sc)

    def bwd(g):
        return backend.attention_bwd(
            q.data, k.data, v.data, weights, np.ascontiguousarray(g), heads, sc
        )

    return Tensor(out, op="attention", parents=(q, k, v), backward=bwd)


def masked_cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean cross-entropy of integer targets under row softmax of logits."""
    ids = np.asarray(targets, dtype=np.intp)
    if ids.ndim != 1 or ids.shape[0] != logits.rows:
        raise ShapeError(f"cross_entropy: {ids.shape} targets for {logits.shape} logits")
    if ids.size == 0:
        raise ShapeError("cross_entropy: no target positions")
    x = logits.data
    m = x.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(x - m).sum(axis=1))
    picked = x[np.arange(ids.size), ids]
    loss = (lse - picked).mean()

    def bwd(g):
        p = backend.softmax_rows_fwd(x)
        p[np.arange(ids.size), ids] -= 1.0
        return (p * (g[0, 0] / ids.size),)

    return Tensor(
        np.asarray(loss, dtype=x.dtype).reshape(1, 1),
        op="cross_entropy",
        parents=(logits,),
        backward=bwd,
    )


def sigmoid_bce(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean binary cross-entropy with logits; targets are 0/1 constants."""
    y = np.asarray(targets)
    if y.shape != logits.shape:
        raise ShapeError(f"sigmoid_bce: targets {y.shape} vs logits {logits.shape}")
    z = logits.data
    # softplus(-z) + (1 - y) * z, with softplus(x) = max(x, 0) + log1p(exp(-|x|))
    sp = np.maximum(-z, 0.0) + np.log1p(np.exp(-np.abs(z)))
    loss = (sp + (1.0 - y) * z).mean()
    n = z.size

    def bwd(g):
        sig = 1.0 / (1.0 + np.exp(-z))
        return (((sig - y) * (g[0, 0] / n)).astype(z.dtype),)

    return Tensor(
        np.asarray(loss, dtype=z.dtype).reshape(1, 1),
        op="sigmoid_bce",
        parents=(logits,),
        backward=bwd,
    )


def token_alignment(s: Tensor, t: Tensor, idf: np.ndarray, floor: float = 1e-12) -> Tensor:
    """Negative idf-weighted mean of per-token best cosine against frames."""
    if s.cols != t.cols:
        raise ShapeError(f"token_alignment: frame width {s.cols} != token width {t.cols}")
    w = np.ascontiguousarray(idf, dtype=s.data.dtype).reshape(-1)
    if w.shape[0] != t.rows:
        raise ShapeError(f"token_alignment: {w.shape[0]} idf weights for {t.rows} tokens")
    loss, best, _ = backend.token_match_fwd(s.data, t.data, w, floor)

    def bwd(g):
        return backend.token_match_bwd(s.data, t.data, w, best, floor, float(g[0, 0]))

    return Tensor(
        np.asarray(loss, dtype=s.data.dtype).reshape(1, 1),
        op="token_alignment",
        parents=(s, t),
        backward=bwd,
    )
