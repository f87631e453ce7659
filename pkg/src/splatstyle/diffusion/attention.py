"""Scaled dot-product attention and its neighboring-view variant."""

from __future__ import annotations

import numpy as np

from ..errors import DimensionMismatch


def softmax(x, axis=-1):
    x = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(x)
    return e / np.sum(e, axis=axis, keepdims=True)


def attention(q, k, v):
    """softmax(q k^T / sqrt(d)) v for (n, d) queries and (m, d) keys."""
    if q.shape[-1] != k.shape[-1] or k.shape[0] != v.shape[0]:
        raise DimensionMismatch(f"q {q.shape}, k {k.shape}, v {v.shape}")
    scores = q @ k.T / np.sqrt(q.shape[-1])
    return softmax(scores) @ v


def nv_attention(queries, keys, values):
    """Every view attends over the keys/values of the whole group.

    ``queries``, ``keys`` and ``values`` are per-view sequences of (n_i, d)
    arrays. The concatenated key/value set is shared by all views.
    """
    if not (len(queries) == len(keys) == len(values)) or len(queries) == 0:
        raise DimensionMismatch("need one query, key and value set per view")
    dims = {a.shape[-1] for a in (*queries, *keys)}
    if len(dims) != 1:
        raise DimensionMismatch(f"views disagree on token dimension: {sorted(dims)}")
    k_nv = np.concatenate(keys, axis=0)
    v_nv = np.concatenate(values, axis=0)
    return [attention(q, k_nv, v_nv) for q in queries]
