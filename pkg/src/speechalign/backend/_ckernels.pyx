# Compiled twins of pykernels.py. Same signatures, same math, fused loops.

import numpy as np

cimport cython
cimport numpy as cnp
from libc.math cimport exp, sqrt

cnp.import_array()

NAME = "c"

ctypedef fused floating:
    float
    double


def softmax_rows_fwd(floating[:, :] x):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], i, j
    cdef floating m, s
    y_arr = np.empty((n, d), dtype=np.asarray(x).dtype)
    cdef floating[:, :] y = y_arr
    for i in range(n):
        m = x[i, 0]
        for j in range(1, d):
            if x[i, j] > m:
                m = x[i, j]
        s = 0
        for j in range(d):
            y[i, j] = exp(x[i, j] - m)
            s += y[i, j]
        for j in range(d):
            y[i, j] /= s
    return y_arr


def softmax_rows_bwd(floating[:, :] y, floating[:, :] gy):
    cdef Py_ssize_t n = y.shape[0], d = y.shape[1], i, j
    cdef floating dot
    gx_arr = np.empty((n, d), dtype=np.asarray(y).dtype)
    cdef floating[:, :] gx = gx_arr
    for i in range(n):
        dot = 0
        for j in range(d):
            dot += gy[i, j] * y[i, j]
        for j in range(d):
            gx[i, j] = y[i, j] * (gy[i, j] - dot)
    return gx_arr


def layernorm_rows_fwd(floating[:, :] x, double eps):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], i, j
    cdef floating mu, var, dev
    dtype = np.asarray(x).dtype
    y_arr = np.empty((n, d), dtype=dtype)
    inv_arr = np.empty(n, dtype=dtype)
    cdef floating[:, :] y = y_arr
    cdef floating[:] inv = inv_arr
    for i in range(n):
        mu = 0
        for j in range(d):
            mu += x[i, j]
        mu /= d
        var = 0
        for j in range(d):
            dev = x[i, j] - mu
            var += dev * dev
        var /= d
        inv[i] = <floating>(1.0 / sqrt(var + eps))
        for j in range(d):
            y[i, j] = (x[i, j] - mu) * inv[i]
    return y_arr, inv_arr


def layernorm_rows_bwd(floating[:, :] y, floating[:] inv_std, floating[:, :] gy):
    cdef Py_ssize_t n = y.shape[0], d = y.shape[1], i, j
    cdef floating m1, m2
    gx_arr = np.empty((n, d), dtype=np.asarray(y).dtype)
    cdef floating[:, :] gx = gx_arr
    for i in range(n):
        m1 = 0
        m2 = 0
        for j in range(d):
            m1 += gy[i, j]
            m2 += gy[i, j] * y[i, j]
        m1 /= d
        m2 /= d
        for j in range(d):
            gx[i, j] = inv_std[i] * (gy[i, j] - m1 - y[i, j] * m2)
    return gx_arr


def attention_fwd(floating[:, :] q, floating[:, :] k, floating[:, :] v,
                  Py_ssize_t heads, double scale):
    cdef Py_ssize_t tq = q.shape[0], tk = k.shape[0], width = q.shape[1]
    cdef Py_ssize_t dh = width // heads
    cdef Py_ssize_t h, i, j, c, off
    cdef floating s, m
    dtype = np.asarray(q).dtype
    out_arr = np.zeros((tq, width), dtype=dtype)
    w_arr = np.empty((heads, tq, tk), dtype=dtype)
    cdef floating[:, :] out = out_arr
    cdef floating[:, :, :] w = w_arr
    for h in range(heads):
        off = h * dh
        for i in range(tq):
            for j in range(tk):
                s = 0
                for c in range(dh):
                    s += q[i, off + c] * k[j, off + c]
                w[h, i, j] = <floating>(s * scale)
            m = w[h, i, 0]
            for j in range(1, tk):
                if w[h, i, j] > m:
                    m = w[h, i, j]
            s = 0
            for j in range(tk):
                w[h, i, j] = exp(w[h, i, j] - m)
                s += w[h, i, j]
            for j in range(tk):
                w[h, i, j] /= s
            for c in range(dh):
                s = 0
                for j in range(tk):
                    s += w[h, i, j] * v[j, off + c]
                out[i, off + c] = s
    return out_arr, w_arr


def attention_bwd(floating[:, :] q, floating[:, :] k, floating[:, :] v,
                  floating[:, :, :] weights, floating[:, :] gout,
                  Py_ssize_t heads, double scale):
    cdef Py_ssize_t tq = q.shape[0], tk = k.shape[0], width = q.shape[1]
    cdef Py_ssize_t dh = width // heads
    cdef Py_ssize_t h, i, j, c, off
    cdef floating dot, g
    dtype = np.asarray(q).dtype
    gq_arr = np.zeros((tq, width), dtype=dtype)
    gk_arr = np.zeros((tk, width), dtype=dtype)
    gv_arr = np.zeros((tk, width), dtype=dtype)
    gw_arr = np.empty(tk, dtype=dtype)
    cdef floating[:, :] gq = gq_arr
    cdef floating[:, :] gk = gk_arr
    cdef floating[:, :] gv = gv_arr
    cdef floating[:] gw = gw_arr
    for h in range(heads):
        off = h * dh
        for i in range(tq):
            # gw[j] = gout_h[i] . v_h[j]; gv accumulates weights * gout
            for j in range(tk):
                dot = 0
                for c in range(dh):
                    dot += gout[i, off + c] * v[j, off + c]
                gw[j] = dot
                for c in range(dh):
                    gv[j, off + c] += weights[h, i, j] * gout[i, off + c]
            dot = 0
            for j in range(tk):
                dot += gw[j] * weights[h, i, j]
            for j in range(tk):
                g = <floating>(weights[h, i, j] * (gw[j] - dot) * scale)
                for c in range(dh):
                    gq[i, off + c] += g * k[j, off + c]
                    gk[j, off + c] += g * q[i, off + c]
    return gq_arr, gk_arr, gv_arr


def token_match_fwd(floating[:, :] s, floating[:, :] t, floating[:] idf,
                    double floor):
    cdef Py_ssize_t n = s.shape[0], m = t.shape[0], d = s.shape[1], i, j, c
    cdef double acc, prod, cval, best_val, wsum, loss
    cdef Py_ssize_t best_i
    dtype = np.asarray(s).dtype
    sn_arr = np.empty(n, dtype=np.float64)
    cdef double[:] sn = sn_arr
    best_arr = np.empty(m, dtype=np.int64)
    cos_arr = np.empty(m, dtype=dtype)
    cdef cnp.int64_t[:] best = best_arr
    cdef floating[:] cosb = cos_arr
    cdef double tn
    for i in range(n):
        acc = 0
        for c in range(d):
            acc += <double>s[i, c] * <double>s[i, c]
        sn[i] = sqrt(acc)
    wsum = 0
    loss = 0
    for j in range(m):
        acc = 0
        for c in range(d):
            acc += <double>t[j, c] * <double>t[j, c]
        tn = sqrt(acc)
        best_i = 0
        best_val = 0
        for i in range(n):
            acc = 0
            for c in range(d):
                acc += <double>s[i, c] * <double>t[j, c]
            prod = sn[i] * tn
            if prod < floor:
                prod = floor
            cval = acc / prod
            if i == 0 or cval > best_val:
                best_val = cval
                best_i = i
        best[j] = best_i
        cosb[j] = <floating>best_val
        wsum += <double>idf[j]
        loss += <double>idf[j] * best_val
    return -loss / wsum, best_arr, cos_arr


def token_match_bwd(floating[:, :] s, floating[:, :] t, floating[:] idf,
                    cnp.int64_t[:] best, double floor, double gloss):
    cdef Py_ssize_t n = s.shape[0], m = t.shape[0], d = s.shape[1], i, j, c
    cdef double wsum, coeff, dot, sn, tn, prod, cval
    dtype = np.asarray(s).dtype
    gs_arr = np.zeros((n, d), dtype=dtype)
    gt_arr = np.zeros((m, d), dtype=dtype)
    cdef floating[:, :] gs = gs_arr
    cdef floating[:, :] gt = gt_arr
    wsum = 0
    for j in range(m):
        wsum += <double>idf[j]
    for j in range(m):
        i = best[j]
        coeff = -gloss * <double>idf[j] / wsum
        dot = 0
        sn = 0
        tn = 0
        for c in range(d):
            dot += <double>s[i, c] * <double>t[j, c]
            sn += <double>s[i, c] * <double>s[i, c]
            tn += <double>t[j, c] * <double>t[j, c]
        sn = sqrt(sn)
        tn = sqrt(tn)
        prod = sn * tn
        if prod >= floor:
            cval = dot / prod
            for c in range(d):
                gs[i, c] += <floating>(coeff * (t[j, c] / prod - cval * s[i, c] / (sn * sn)))
                gt[j, c] += <floating>(coeff * (s[i, c] / prod - cval * t[j, c] / (tn * tn)))
        else:
            for c in range(d):
                gs[i, c] += <floating>(coeff * t[j, c] / floor)
                gt[j, c] += <floating>(coeff * s[i, c] / floor)
    return gs_arr, gt_arr
