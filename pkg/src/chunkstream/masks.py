"""Chunked attention visibility with bounded left context and lookahead.

Positions are grouped into fixed chunks. A query at position t may attend to
keys from max(0, chunk_start(t) - left_context) up to (exclusive)
chunk_end(t) + right_context: everything in its own chunk, a bounded history,
and a bounded window beyond the chunk boundary. right_context = 0 recovers
plain chunked causal masking; left_context = FULL removes the history bound.

Masks also exist at downsampled rates. A downsampled row u stands for the
first base-rate frame of its block (u*factor) and a column v for the last
frame of its block ((v+1)*factor - 1): the conservative pairing, so a
downsampled cell is visible only if the base-rate rule admits the whole
key block from the earliest query frame it represents.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels

FULL = None  # left_context sentinel: unlimited history


@dataclass(frozen=True)
class MaskSpec:
    """Mask geometry: chunk size, left-context bound, right-context lookahead.

    All values are in frames at the rate the mask is built for (base rate
    50 Hz in the encoder). left_context=FULL (None) means unlimited.
    """

    chunk_size: int
    left_context: int | None
    right_context: int

    def __post_init__(self) -> None:
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be >= 1")
        if self.left_context is not None and self.left_context < 0:
            raise ValueError("left_context must be >= 0 or FULL")
        if self.right_context < 0:
            raise ValueError("right_context must be >= 0")


def chunk_start(t: int, chunk_size: int) -> int:
    if t < 0:
        raise ValueError("position must be >= 0")
    return (t // chunk_size) * chunk_size


def chunk_end(t: int, chunk_size: int) -> int:
    """First position after t's chunk."""
    return chunk_start(t, chunk_size) + chunk_size


def visible(t: int, s: int, spec: MaskSpec) -> bool:
    """May a query at position t attend to the key at position s?"""
    if t < 0 or s < 0:
        raise ValueError("positions must be >= 0")
    cs = chunk_start(t, spec.chunk_size)
    if spec.left_context is None:
        lo = 0
    else:
        lo = max(0, cs - spec.left_context)
    hi = cs + spec.chunk_size + spec.right_context
    return lo <= s < hi


def build_mask(
    n_queries: int,
    n_keys: int,
    spec: MaskSpec,
    *,
    row_offset: int = 0,
    col_offset: int = 0,
) -> np.ndarray:
    """Base-rate visibility mask, True = attend.

    Row i is the query at absolute position row_offset+i, column j the key at
    col_offset+j; the offsets let a window that starts mid-stream keep
    absolute chunk alignment.
    """
    _check_sizes(n_queries, n_keys, row_offset, col_offset)
    left = -1 if spec.left_context is None else spec.left_context
    return _kernels.chunk_mask(
        n_queries, n_keys, spec.chunk_size, left, spec.right_context,
        1, row_offset, col_offset,
    )


def downsample_mask(
    spec: MaskSpec,
    factor: int,
    n_queries: int,
    n_keys: int,
    *,
    row_offset: int = 0,
    col_offset: int = 0,
) -> np.ndarray:
    """Visibility mask between blocks of `factor` base-rate frames.

    Cell (u, v) is True iff the base-rate rule allows query frame u*factor to
    see key frame (v+1)*factor - 1. Offsets are in downsampled blocks.
    """
    if factor < 1:
        raise ValueError("factor must be >= 1")
    _check_sizes(n_queries, n_keys, row_offset, col_offset)
    left = -1 if spec.left_context is None else spec.left_context
    return _kernels.chunk_mask(
        n_queries, n_keys, spec.chunk_size, left, spec.right_context,
        factor, row_offset, col_offset,
    )


def _check_sizes(n_queries: int, n_keys: int, row_offset: int, col_offset: int) -> None:
    if n_queries < 0 or n_keys < 0:
        raise ValueError("mask dimensions must be non-negative")
    if row_offset < 0 or col_offset < 0:
        raise ValueError("offsets must be non-negative")


def format_mask(mask: np.ndarray) -> str:
    """Rows of 0/1 characters, one line per query."""
    return "\n".join("".join("1" if v else "0" for v in row) for row in np.asarray(mask))
