"""Pure-Python/numpy implementations of the hot kernels.

Mirrors the interface of the compiled extension `_cykernels`; used as the
fallback backend when the extension is unavailable.
"""

import numpy as np

FNV_OFFSET_BASIS = 14695981039346656037
FNV_PRIME = 1099511628211
_MASK64 = (1 << 64) - 1


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash of a byte string."""
    h = FNV_OFFSET_BASIS
    for byte in data:
        h = ((h ^ byte) * FNV_PRIME) & _MASK64
    return h


def hash_buckets(tokens, n_buckets):
    """FNV-1a hash each byte-string token into a bucket index in [0, n_buckets)."""
    out = np.empty(len(tokens), dtype=np.int64)
    for i, tok in enumerate(tokens):
        out[i] = fnv1a64(tok) % n_buckets
    return out


def bag_mean_forward(weights, indices, offsets):
    """Per-group mean of weight rows.

    Group g averages weights[indices[offsets[g]:offsets[g+1]]]; every group
    must be non-empty.
    """
    counts = np.diff(offsets).astype(np.float64)
    # reduceat misbehaves on empty slices, so reject them up front
    if counts.shape[0] == 0 or np.any(counts <= 0):
        raise ValueError("empty group in bag_mean_forward")
    gathered = weights[indices]
    sums = np.add.reduceat(gathered, offsets[:-1], axis=0)
    return sums / counts[:, None]


def bag_mean_backward(grad_out, indices, offsets, n_rows):
    """Scatter-accumulate group gradients back to the weight rows."""
    counts = np.diff(offsets).astype(np.float64)
    scaled = grad_out / counts[:, None]
    group_of = np.repeat(np.arange(offsets.shape[0] - 1), np.diff(offsets))
    grad_w = np.zeros((n_rows, grad_out.shape[1]), dtype=np.float64)
    np.add.at(grad_w, indices, scaled[group_of])
    return grad_w


def topk_indices(scores, k):
    """Indices of the k largest scores, ordered by (score desc, index asc)."""
    m = scores.shape[0]
    k = min(k, m)
    if k <= 0:
        return np.empty(0, dtype=np.int64)
    if k < m:
        part = np.argpartition(-scores, k - 1)[:k]
        threshold = scores[part].min()
        cand = np.flatnonzero(scores >= threshold)
    else:
        cand = np.arange(m)
    order = np.lexsort((cand, -scores[cand]))
    return cand[order][:k].astype(np.int64)
