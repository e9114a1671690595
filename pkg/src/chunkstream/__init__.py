"""Streaming chunked-attention speech encoder with serving and benchmarking."""

__version__ = "0.1.0"

from .masks import FULL, MaskSpec, build_mask, downsample_mask, visible
from .schedule import Schedule, ScheduleEntry, SplitMix64, fixed_schedule, prng_next, sample_schedule

__all__ = [
    "FULL",
    "MaskSpec",
    "build_mask",
    "downsample_mask",
    "visible",
    "Schedule",
    "ScheduleEntry",
    "SplitMix64",
    "fixed_schedule",
    "prng_next",
    "sample_schedule",
    "__version__",
]
