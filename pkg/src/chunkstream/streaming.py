"""Incremental chunked inference with deadline-driven emission.

Frames arrive as 100 Hz features in arbitrary-sized pushes. The stream pairs
them into 50 Hz encoder frames (holding an odd trailing feature until its
pair arrives), and emits encoder frame t as soon as frames_received reaches
emission_deadline(t) = chunk_end(t) + right_context. Each emission recomputes
the chunk over exactly the clipped window encoder_forward uses, so streamed
and offline outputs are equal regardless of how pushes are split. Consumed
history is trimmed to the window bound, keeping retained state constant for
finite left context.
"""

from __future__ import annotations

import numpy as np

from .encoder import (
    EncoderParams,
    pool_pairs,
    run_stacks,
    validate_engine_spec,
    window_start,
)
from .masks import MaskSpec, chunk_end


def emission_deadline(t: int, spec: MaskSpec) -> int:
    """Encoder frames that must have arrived before frame t may emit.

    Equal to chunk_end(t) + right_context; the added algorithmic latency of
    frame t is (deadline - t - 1) frames of 20 ms.
    """
    return chunk_end(t, spec.chunk_size) + spec.right_context


def added_latency_s(t: int, spec: MaskSpec) -> float:
    return (emission_deadline(t, spec) - t - 1) * 0.02


class StreamState:
    """Single-writer stream; distinct streams share read-only parameters."""

    def __init__(self, params: EncoderParams, spec: MaskSpec) -> None:
        validate_engine_spec(spec, params.config)
        self.params = params
        self.spec = spec
        self.next_emit = 0
        self._feat_carry = np.empty((0, params.config.feature_dim), dtype=np.float64)
        self._h50 = np.empty((0, params.config.dims[0]), dtype=params.dtype)
        self._h50_base = 0  # absolute index of _h50[0]
        self._closed = False

    @property
    def frames_received(self) -> int:
        """50 Hz encoder frames buffered or already emitted."""
        return self._h50_base + self._h50.shape[0]

    @property
    def retained_frames(self) -> int:
        return self._h50.shape[0]

    @property
    def closed(self) -> bool:
        return self._closed

    def push(self, new_frames: np.ndarray) -> np.ndarray:
        if self._closed:
            raise RuntimeError("push after finalize")
        new = np.asarray(new_frames, dtype=np.float64)
        feat_dim = self.params.config.feature_dim
        if new.size == 0:
            return self._empty_emission()
        if new.ndim != 2 or new.shape[1] != feat_dim:
            raise ValueError(f"features must be [n, {feat_dim}]")
        if not np.isfinite(new).all():
            raise ValueError("features must be finite")
        buf = np.concatenate([self._feat_carry, new])
        pairs = buf.shape[0] // 2
        if pairs:
            paired = buf[: 2 * pairs].reshape(pairs, 2 * feat_dim)
            paired = paired.astype(self.params.dtype, copy=False)
            h = np.tanh(paired @ self.params.subsample_w)
            self._h50 = np.concatenate([self._h50, h])
        self._feat_carry = buf[2 * pairs :]
        return self._drain(final=False)

    def finalize(self) -> np.ndarray:
        if self._closed:
            raise RuntimeError("double finalize")
        self._closed = True
        self._feat_carry = self._feat_carry[:0]  # unpaired trailing frame drops
        return self._drain(final=True)

    def _empty_emission(self) -> np.ndarray:
        return np.empty((0, self.params.config.out_dim), dtype=self.params.dtype)

    def _drain(self, final: bool) -> np.ndarray:
        spec = self.spec
        chunk = spec.chunk_size
        total = self.frames_received
        emitted = []
        while self.next_emit < total:
            cs = self.next_emit
            deadline = cs + chunk + spec.right_context
            if not final and deadline > total:
                break
            top = min(total, deadline)
            ce = min(cs + chunk, total)
            w0 = window_start(cs, spec, self.params.config)
            x = self._h50[w0 - self._h50_base : top - self._h50_base]
            h = run_stacks(x, w0, spec, self.params)
            emitted.append(h[cs - w0 : ce - w0])
            self.next_emit = ce
        if spec.left_context is not None:
            keep_from = window_start(self.next_emit, spec, self.params.config)
            if keep_from > self._h50_base:
                self._h50 = self._h50[keep_from - self._h50_base :]
                self._h50_base = keep_from
        if not emitted:
            return self._empty_emission()
        return np.concatenate(emitted)


def open_stream(params: EncoderParams, spec: MaskSpec) -> StreamState:
    """Fresh stream: empty caches, next_emit = 0."""
    return StreamState(params, spec)


def push(state: StreamState, new_frames: np.ndarray) -> np.ndarray:
    """Append 100 Hz feature frames; returns newly emitted 50 Hz frames."""
    return state.push(new_frames)


def finalize(state: StreamState) -> np.ndarray:
    """Flush pending frames with the sequence end as a hard boundary."""
    return state.finalize()


def simulate_stream(
    features: np.ndarray,
    spec: MaskSpec,
    params: EncoderParams,
    *,
    block_frames: int = 50,
    final_pool: bool = True,
) -> np.ndarray:
    """Push a whole utterance through a stream in fixed-size feature blocks.

    block_frames=50 mimics 500 ms arrivals. Returns the concatenated
    emissions, pooled to 25 Hz unless final_pool=False.
    """
    if block_frames < 1:
        raise ValueError("block_frames must be >= 1")
    state = open_stream(params, spec)
    feats = np.asarray(features)
    parts = []
    for i in range(0, feats.shape[0], block_frames):
        parts.append(state.push(feats[i : i + block_frames]))
    parts.append(state.finalize())
    out = np.concatenate(parts)
    return pool_pairs(out) if final_pool else out
