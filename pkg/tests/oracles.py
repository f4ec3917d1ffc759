"""Naive reference implementations used as independent oracles.

Everything here is written with scalar Python loops or dense numpy so it shares
no code path with the package under test.
"""
import math
from fractions import Fraction

import numpy as np


def dense_matmul(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            out[i, j] = math.fsum(a[i, k] * b[k, j] for k in range(a.shape[1]))
    return out


def softmax_row(row):
    top = max(row)
    ex = [math.exp(x - top) for x in row]
    s = math.fsum(ex)
    return [x / s for x in ex]


def self_attention_loops(e):
    e = np.asarray(e, dtype=float)
    n, d = e.shape
    a = []
    for i in range(n):
        scores = [math.fsum(e[i, k] * e[j, k] for k in range(d)) / math.sqrt(d) for j in range(n)]
        a.append(softmax_row(scores))
    z = [[math.fsum(a[i][j] * e[j, c] for j in range(n)) for c in range(d)] for i in range(n)]
    return np.array(z), np.array(a)


def linear_attention_loops(e):
    e = np.asarray(e, dtype=float)
    n, d = e.shape
    a = []
    for p in range(d):
        scores = [math.fsum(e[r, p] * e[r, q] for r in range(n)) / math.sqrt(d) for q in range(d)]
        a.append(softmax_row(scores))
    z = [[math.fsum(e[i, p] * a[p][c] for p in range(d)) for c in range(d)] for i in range(n)]
    return np.array(z), np.array(a)


def external_attention_loops(e, m_k, m_v):
    e, m_k, m_v = (np.asarray(x, dtype=float) for x in (e, m_k, m_v))
    n, d = e.shape
    alpha = m_k.shape[0]
    a = []
    for i in range(n):
        scores = [math.fsum(e[i, k] * m_k[j, k] for k in range(d)) / math.sqrt(d) for j in range(alpha)]
        norm = math.sqrt(math.fsum(s * s for s in scores))
        a.append([s / norm if norm > 0 else 0.0 for s in scores])
    z = [[math.fsum(a[i][j] * m_v[j, c] for j in range(alpha)) for c in range(d)] for i in range(n)]
    return np.array(z), np.array(a)


def rank_by_sort(scores, target):
    """Position of ``target`` after sorting by (-score, index)."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return order.index(target) + 1


def mask_count_exact(t, gamma):
    """min(floor(gamma * t), t - 1) with gamma read as the decimal it was written as."""
    g = Fraction(str(gamma))
    return min(math.floor(g * t), t - 1)


def enumerate_params(hyper, m, n, max_len):
    """Count scalars by listing every tensor the full model should own."""
    d = hyper.d
    d1 = hyper.d1 or d
    dh = d // hyper.beta
    uses_ea = hyper.variant in ("EA-GPS", "GPS_OPT", "GPS_RPE", "GPS_OMA")
    uses_attention = uses_ea or hyper.variant in ("GPS_SA", "GPS_LA")
    prompt_table = hyper.variant not in ("GPS_OPT", "GPS_Basic")
    template = hyper.variant in ("EA-GPS", "GPS_RPE", "GPS_OEA", "GPS_SA", "GPS_LA")
    tensors = [(m, d), (n, d), (2 * d, m), (1, m)]
    if uses_ea:
        tensors += [(hyper.alpha, dh)] * (2 * hyper.beta)
    if uses_attention:
        tensors += [(d, d), (1, d), (1, d)]
    if prompt_table:
        tensors += [(max_len, d1), (d1, d), (1, d)]
    if template:
        tensors += [(2 * d, d), (1, d), (1, d)]
    return sum(r * c for r, c in tensors)
