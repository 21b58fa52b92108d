"""Pure numpy implementations of the hot kernels.

Same signatures as the compiled backend (`_ckernels`); this module is the
fallback selected at import when the extension is not built. All functions
preserve the input dtype (float32 or float64) and are deterministic.
"""

import numpy as np

NAME = "py"


def softmax_rows_fwd(x: np.ndarray) -> np.ndarray:
    m = x.max(axis=1, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=1, keepdims=True)


def softmax_rows_bwd(y: np.ndarray, gy: np.ndarray) -> np.ndarray:
    # dx = y * (gy - sum(gy * y, row))
    dot = (gy * y).sum(axis=1, keepdims=True)
    return y * (gy - dot)


def layernorm_rows_fwd(x: np.ndarray, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-row standardization (pre-affine). Returns (y, inv_std (rows,))."""
    mu = x.mean(axis=1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + np.asarray(eps, dtype=x.dtype))
    y = (x - mu) * inv_std
    return y, inv_std[:, 0]


def layernorm_rows_bwd(y: np.ndarray, inv_std: np.ndarray, gy: np.ndarray) -> np.ndarray:
    # dx = inv_std * (gy - mean(gy) - y * mean(gy * y)), per row
    d = y.shape[1]
    m1 = gy.sum(axis=1, keepdims=True) / d
    m2 = (gy * y).sum(axis=1, keepdims=True) / d
    return inv_std[:, None] * (gy - m1 - y * m2)


def attention_fwd(
    q: np.ndarray, k: np.ndarray, v: np.ndarray, heads: int, scale: float
) -> tuple[np.ndarray, np.ndarray]:
    """Bidirectional multi-head attention on (T, heads*dh) matrices.

    Returns (out (Tq, heads*dh), weights (heads, Tq, Tk)) with
    weights[h] = softmax(q_h k_h^T * scale).
    """
    tq, width = q.shape
    tk = k.shape[0]
    dh = width // heads
    qh = q.reshape(tq, heads, dh).transpose(1, 0, 2)
    kh = k.reshape(tk, heads, dh).transpose(1, 0, 2)
    vh = v.reshape(tk, heads, dh).transpose(1, 0, 2)
    scores = np.einsum("hid,hjd->hij", qh, kh) * np.asarray(scale, dtype=q.dtype)
    m = scores.max(axis=2, keepdims=True)
    w = np.exp(scores - m)
    w /= w.sum(axis=2, keepdims=True)
    out = np.einsum("hij,hjd->hid", w, vh)
    return np.ascontiguousarray(out.transpose(1, 0, 2).reshape(tq, width)), w


def attention_bwd(
    q: np.ndarray,
    k: np.ndarray,
    v: np.ndarray,
    weights: np.ndarray,
    gout: np.ndarray,
    heads: int,
    scale: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    tq, width = q.shape
    tk = k.shape[0]
    dh = width // heads
    qh = q.reshape(tq, heads, dh).transpose(1, 0, 2)
    kh = k.reshape(tk, heads, dh).transpose(1, 0, 2)
    vh = v.reshape(tk, heads, dh).transpose(1, 0, 2)
    gh = gout.reshape(tq, heads, dh).transpose(1, 0, 2)
    gv = np.einsum("hij,hid->hjd", weights, gh)
    gw = np.einsum("hid,hjd->hij", gh, vh)
    # softmax backward over the key axis
    dot = (gw * weights).sum(axis=2, keepdims=True)
    gs = weights * (gw - dot)
    s = np.asarray(scale, dtype=q.dtype)
    gq = np.einsum("hij,hjd->hid", gs, kh) * s
    gk = np.einsum("hij,hid->hjd", gs, qh) * s
    gq2 = np.ascontiguousarray(gq.transpose(1, 0, 2).reshape(tq, width))
    gk2 = np.ascontiguousarray(gk.transpose(1, 0, 2).reshape(tk, width))
    gv2 = np.ascontiguousarray(gv.transpose(1, 0, 2).reshape(tk, width))
    return gq2, gk2, gv2


def token_match_fwd(
    s: np.ndarray, t: np.ndarray, idf: np.ndarray, floor: float
) -> tuple[float, np.ndarray, np.ndarray]:
    """idf-weighted greedy cosine matching of token rows t to frame rows s.

    Returns (loss, best (m,) argmax frame per token, cos (m,) best cosine).
    loss = -(sum_j idf_j * max_i cossim(s_i, t_j)) / sum_j idf_j with the
    cosine denominator floored at `floor`. Ties go to the lowest frame index
    (argmax keeps the first maximum).
    """
    sn = np.sqrt((s * s).sum(axis=1))
    tn = np.sqrt((t * t).sum(axis=1))
    denom = np.maximum(np.outer(sn, tn), np.asarray(floor, dtype=s.dtype))
    cos = (s @ t.T) / denom
    best = cos.argmax(axis=0)
    cos_best = cos[best, np.arange(t.shape[0])]
    w = idf.sum()
    loss = -float((idf * cos_best).sum() / w)
    return loss, best.astype(np.int64), cos_best


def token_match_bwd(
    s: np.ndarray,
    t: np.ndarray,
    idf: np.ndarray,
    best: np.ndarray,
    floor: float,
    gloss: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Gradient flows only through each token's argmax frame."""
    gs = np.zeros_like(s)
    gt = np.zeros_like(t)
    w = float(idf.sum())
    sn = np.sqrt((s * s).sum(axis=1))
    tn = np.sqrt((t * t).sum(axis=1))
    for j in range(t.shape[0]):
        i = int(best[j])
        coeff = -gloss * float(idf[j]) / w
        si, tj = s[i], t[j]
        prod = sn[i] * tn[j]
        if prod >= floor:
            c = float(si @ tj) / prod
            gs[i] += coeff * (tj / prod - c * si / (sn[i] * sn[i]))
            gt[j] += coeff * (si / prod - c * tj / (tn[j] * tn[j]))
        else:
            gs[i] += coeff * (tj / floor)
            gt[j] += coeff * (si / floor)
    return gs, gt
