"""Pure-numpy kernel implementations (fallback when the extension is absent)."""

from __future__ import annotations

import numpy as np


def chunk_mask(
    n_rows: int,
    n_cols: int,
    chunk: int,
    left: int,
    rc: int,
    factor: int = 1,
    row_offset: int = 0,
    col_offset: int = 0,
) -> np.ndarray:
    """Boolean visibility mask for chunked attention at a given rate.

    Row u stands for base position (row_offset+u)*factor (first frame of its
    block); column v for base positions up to ((col_offset+v+1)*factor)-1
    (last frame of its block, the conservative choice). left < 0 means
    unlimited left context.
    """
    rows = (np.arange(row_offset, row_offset + n_rows, dtype=np.int64)) * factor
    cols = (np.arange(col_offset, col_offset + n_cols, dtype=np.int64) + 1) * factor - 1
    cs = (rows // chunk) * chunk
    hi = cs + chunk + rc
    if left < 0:
        lo = np.zeros_like(cs)
    else:
        lo = np.maximum(cs - left, 0)
    return (cols[None, :] >= lo[:, None]) & (cols[None, :] < hi[:, None])


def masked_softmax(scores: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Row softmax over visible cells only; masked cells get exactly 0.

    scores: [H, Lq, Lk] float32/float64. mask: [Lq, Lk] bool, shared across
    heads. Raises if any row has no visible cell (weights would be undefined).
    """
    if scores.ndim != 3:
        raise ValueError("scores must be [heads, queries, keys]")
    if mask.shape != scores.shape[1:]:
        raise ValueError("mask shape must match scores[1:]")
    mask = mask.astype(bool, copy=False)
    if not mask.any(axis=1).all():
        raise ValueError("attention row with no visible key")
    shifted = np.where(mask[None, :, :], scores, -np.inf)
    shifted = shifted - shifted.max(axis=-1, keepdims=True)
    w = np.exp(shifted)
    w /= w.sum(axis=-1, keepdims=True)
    return w
