"""Deterministic mask-setting schedules and the shared splitmix64 generator.

Every component that needs randomness (parameter init, schedules, synthetic
test data) draws from the same 64-bit generator so that a seed pins the whole
artifact. The generator is splitmix64: a Weyl sequence with increment
0x9E3779B97F4A7C15 followed by a two-round xor-shift-multiply output mix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_MASK64 = (1 << 64) - 1


def prng_next(state: int) -> tuple[int, int]:
    """Advance the generator one step.

    Returns (value, next_state). Pure on ints so callers can thread state
    explicitly; SplitMix64 wraps this for convenience.
    """
    if not 0 <= state <= _MASK64:
        raise ValueError("state must be an unsigned 64-bit integer")
    state = (state + GOLDEN) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    z = z ^ (z >> 31)
    return z, state


class SplitMix64:
    """Stateful wrapper around prng_next."""

    def __init__(self, seed: int) -> None:
        self._state = seed & _MASK64

    @property
    def state(self) -> int:
        return self._state

    def next_u64(self) -> int:
        value, self._state = prng_next(self._state)
        return value

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        # Top 53 bits give a dyadic rational in [0, 1).
        u = self.next_u64() >> 11
        return lo + (hi - lo) * (u * 2.0**-53)

    def choice(self, seq):
        if len(seq) == 0:
            raise ValueError("choice from empty sequence")
        return seq[self.next_u64() % len(seq)]

    def uniform_array(self, n: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        """Vectorized uniform draws, bit-identical to n calls of uniform()."""
        if n < 0:
            raise ValueError("n must be non-negative")
        if n == 0:
            return np.empty(0, dtype=np.float64)
        # States after steps 1..n; uint64 arithmetic wraps like the scalar path.
        steps = np.arange(1, n + 1, dtype=np.uint64)
        z = np.uint64(self._state) + np.uint64(GOLDEN) * steps
        self._state = int(z[-1])
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        z = z ^ (z >> np.uint64(31))
        u = (z >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return lo + (hi - lo) * u


@dataclass(frozen=True)
class ScheduleEntry:
    batch: int
    chunk: int
    rc: int


@dataclass(frozen=True)
class Schedule:
    seed: int
    chunk_set: tuple[int, ...]
    rc_set: tuple[int, ...]
    entries: tuple[ScheduleEntry, ...]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def sample_schedule(
    seed: int,
    n_batches: int,
    rc_set: tuple[int, ...] | list[int],
    chunk_set: tuple[int, ...] | list[int],
) -> Schedule:
    """Draw one (chunk, rc) setting per batch.

    Per batch the chunk size is drawn first, then the right-context, each by
    indexing the sorted candidate set with a fresh 64-bit value mod set size.
    The same (seed, sets, n) always yields the same schedule.
    """
    if n_batches < 1:
        raise ValueError("n_batches must be >= 1")
    chunks = tuple(sorted(set(int(c) for c in chunk_set)))
    rcs = tuple(sorted(set(int(r) for r in rc_set)))
    if not chunks or not rcs:
        raise ValueError("candidate sets must be non-empty")
    if any(c < 1 for c in chunks):
        raise ValueError("chunk sizes must be >= 1")
    if any(r < 0 for r in rcs):
        raise ValueError("right-context values must be >= 0")
    rng = SplitMix64(seed)
    entries = []
    for b in range(n_batches):
        chunk = rng.choice(chunks)
        rc = rng.choice(rcs)
        entries.append(ScheduleEntry(batch=b, chunk=chunk, rc=rc))
    return Schedule(seed=seed, chunk_set=chunks, rc_set=rcs, entries=tuple(entries))


def fixed_schedule(chunk: int, rc: int, n_batches: int) -> Schedule:
    """Constant schedule for evaluation runs (no randomness consumed)."""
    if n_batches < 1:
        raise ValueError("n_batches must be >= 1")
    if chunk < 1:
        raise ValueError("chunk must be >= 1")
    if rc < 0:
        raise ValueError("rc must be >= 0")
    entries = tuple(ScheduleEntry(batch=b, chunk=chunk, rc=rc) for b in range(n_batches))
    return Schedule(seed=0, chunk_set=(chunk,), rc_set=(rc,), entries=entries)
