"""Greedy stub decoder: seeded projection to 32 classes, duplicate collapse.

Stands in for a real token decoder so transcript-level agreement between
streamed and offline passes can be measured. Tokens are argmax class ids per
25 Hz output frame; adjacent repeats collapse to one token whose offset is
the run start in 20 ms units.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .encoder import pool_pairs
from .schedule import SplitMix64

VOCAB_SIZE = 32
_PROJECTION_SEED = 0x5EEDDEC0DE


@lru_cache(maxsize=8)
def decode_projection(hidden_dim: int) -> np.ndarray:
    """Fixed seeded projection [hidden_dim, 32]; same for every process."""
    rng = SplitMix64(_PROJECTION_SEED + hidden_dim)
    return rng.uniform_array(hidden_dim * VOCAB_SIZE, -1.0, 1.0).reshape(
        hidden_dim, VOCAB_SIZE
    )


@dataclass
class StubTranscript:
    tokens: list[int] = field(default_factory=list)
    offsets: list[int] = field(default_factory=list)  # 20 ms units

    def __len__(self) -> int:
        return len(self.tokens)


def frame_tokens(hidden: np.ndarray) -> np.ndarray:
    """Per-frame argmax class ids, before duplicate collapse."""
    h = np.asarray(hidden, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] == 0:
        raise ValueError("hidden must be a non-empty [T, D] matrix")
    return np.argmax(h @ decode_projection(h.shape[1]), axis=1)


def decode_stub(hidden: np.ndarray) -> StubTranscript:
    """Greedy transcript of a 25 Hz hidden sequence."""
    ids = frame_tokens(hidden)
    transcript = StubTranscript()
    last = None
    for i, tok in enumerate(ids):
        tok = int(tok)
        if tok != last:
            transcript.tokens.append(tok)
            transcript.offsets.append(2 * i)  # 25 Hz frame = two 20 ms units
            last = tok
    return transcript


class StreamingDecoder:
    """Incremental twin of decode_stub over 50 Hz emissions.

    Pools emitted frame pairs to 25 Hz (holding an odd frame until its pair
    arrives; a trailing unpaired frame is dropped, matching the offline
    pool), decodes, and collapses across push boundaries. Feeding it every
    emission yields exactly decode_stub of the pooled offline sequence.
    """

    def __init__(self) -> None:
        self.transcript = StubTranscript()
        self._carry: np.ndarray | None = None
        self._last: int | None = None
        self._frames25 = 0

    def push50(self, frames50: np.ndarray) -> list[int]:
        x = np.asarray(frames50, dtype=np.float64)
        if x.size == 0:
            return []
        if self._carry is not None:
            x = np.concatenate([self._carry[None, :], x])
            self._carry = None
        if x.shape[0] % 2:
            self._carry = x[-1]
            x = x[:-1]
        if x.shape[0] == 0:
            return []
        pooled = pool_pairs(x)
        new_tokens: list[int] = []
        for i, tok in enumerate(frame_tokens(pooled)):
            tok = int(tok)
            if tok != self._last:
                new_tokens.append(tok)
                self.transcript.tokens.append(tok)
                self.transcript.offsets.append(2 * (self._frames25 + i))
                self._last = tok
        self._frames25 += pooled.shape[0]
        return new_tokens
