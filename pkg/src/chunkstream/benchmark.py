"""Latency/throughput measurement: records, reports, synthetic testsets.

Inference time for RTFX is server-reported busy time summed over sessions
(not wall clock), so throughput grows with concurrency the way a shared
server's does. Latency percentiles use nearest-rank.
"""

from __future__ import annotations

import asyncio
import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .features import read_zsf, write_zsf
from .schedule import SplitMix64

REPORT_FIELDS = (
    "concurrency",
    "rc_frames",
    "chunk_frames",
    "latency_mean_s",
    "latency_p50_s",
    "latency_p95_s",
    "total_audio_s",
    "total_inference_s",
    "rtfx",
)


@dataclass
class LatencyRecord:
    """Timestamps from one monotonic clock; busy_s echoes the server's
    reported compute time for the session."""

    call_id: str
    last_chunk_sent_at: float
    final_result_at: float
    busy_s: float = 0.0

    @property
    def latency_s(self) -> float:
        return final_chunk_latency(self)


@dataclass
class CallError:
    call_id: str
    message: str


def rtfx(total_audio_s: float, total_inference_s: float) -> float:
    """Testset duration divided by inference time; > 1 is faster than real time."""
    if total_audio_s <= 0:
        raise ValueError("total_audio_s must be > 0")
    if total_inference_s <= 0:
        raise ValueError("total_inference_s must be > 0")
    return total_audio_s / total_inference_s


def final_chunk_latency(record: LatencyRecord) -> float:
    """Seconds from last audio chunk sent to final transcript received."""
    diff = record.final_result_at - record.last_chunk_sent_at
    if diff < 0:
        raise ValueError(
            "final_result_at precedes last_chunk_sent_at; timestamps must "
            "come from one monotonic clock"
        )
    return diff


def percentile_nearest_rank(values, pct: float) -> float:
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest value."""
    if not values:
        raise ValueError("no values")
    if not 0 < pct <= 100:
        raise ValueError("pct must be in (0, 100]")
    ordered = sorted(values)
    rank = max(1, math.ceil(pct / 100.0 * len(ordered)))
    return ordered[rank - 1]


@dataclass
class BenchReport:
    concurrency: int
    rc_frames: int
    chunk_frames: int
    latency_mean_s: float
    latency_p50_s: float
    latency_p95_s: float
    total_audio_s: float
    total_inference_s: float
    rtfx: float

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in REPORT_FIELDS}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=REPORT_FIELDS, lineterminator="\n")
        writer.writeheader()
        writer.writerow(self.to_dict())
        return buf.getvalue()


def build_report(
    *,
    concurrency: int,
    rc: int,
    chunk: int,
    records: list[LatencyRecord],
    total_audio_s: float,
) -> BenchReport:
    if not records:
        raise ValueError("no completed calls to report")
    latencies = [final_chunk_latency(r) for r in records]
    total_inference_s = sum(r.busy_s for r in records)
    return BenchReport(
        concurrency=concurrency,
        rc_frames=rc,
        chunk_frames=chunk,
        latency_mean_s=sum(latencies) / len(latencies),
        latency_p50_s=percentile_nearest_rank(latencies, 50),
        latency_p95_s=percentile_nearest_rank(latencies, 95),
        total_audio_s=total_audio_s,
        total_inference_s=total_inference_s,
        rtfx=rtfx(total_audio_s, total_inference_s),
    )


def write_report(report: BenchReport, json_path) -> tuple[Path, Path]:
    """Emit JSON and a sibling .csv with identical columns."""
    json_path = Path(json_path)
    json_path.write_text(report.to_json() + "\n", encoding="utf-8")
    csv_path = json_path.with_suffix(".csv")
    csv_path.write_text(report.to_csv(), encoding="utf-8")
    return json_path, csv_path


SMOOTH_WINDOW = 9


def synth_testset(seed: int, n_calls: int, mean_duration_s: float, out_dir) -> list[Path]:
    """Deterministic pseudo-speech feature files, durations mean +- 20%.

    Band-limited noise: uniform noise smoothed by a moving average along
    time, written as ZSF1 (float32). Bytes depend only on the arguments.
    """
    if n_calls < 1:
        raise ValueError("n_calls must be >= 1")
    if mean_duration_s <= 0:
        raise ValueError("mean_duration_s must be > 0")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = SplitMix64(seed)
    paths = []
    for i in range(n_calls):
        duration = mean_duration_s * (1.0 + 0.4 * (rng.uniform() - 0.5))
        n_frames = max(2, round(duration * 100))
        white = rng.uniform_array(
            (n_frames + SMOOTH_WINDOW - 1) * 80, -1.0, 1.0
        ).reshape(n_frames + SMOOTH_WINDOW - 1, 80)
        csum = np.cumsum(white, axis=0)
        smooth = np.empty((n_frames, 80))
        smooth[0] = csum[SMOOTH_WINDOW - 1] / SMOOTH_WINDOW
        smooth[1:] = (csum[SMOOTH_WINDOW:] - csum[:-SMOOTH_WINDOW]) / SMOOTH_WINDOW
        feats = (smooth * math.sqrt(SMOOTH_WINDOW)).astype(np.float32)
        path = out / f"call_{i:04d}.zsf"
        write_zsf(path, feats)
        paths.append(path)
    return paths


def testset_duration_s(path) -> float:
    """Audio-equivalent seconds of one feature file (100 Hz frames)."""
    return read_zsf(path).shape[0] / 100.0


async def run_concurrent(
    server: str,
    n_clients: int,
    rc: int,
    chunk: int,
    testset,
    *,
    left: int | None = 128,
    input_kind: str = "features",
    pace_s: float = 0.5,
    timeout_s: float = 30.0,
) -> tuple[BenchReport, list[LatencyRecord], list[CallError]]:
    """Stream every testset file against the server, at most n_clients at once.

    Returns the aggregated report plus one LatencyRecord per completed call
    and one CallError per failed call (completeness: every launched call
    lands in exactly one of the two lists).
    """
    from .client import client_stream  # deferred: client imports LatencyRecord

    if n_clients < 1:
        raise ValueError("n_clients must be >= 1")
    paths = sorted(Path(p) for p in testset)
    if not paths:
        raise ValueError("testset is empty")
    gate = asyncio.Semaphore(n_clients)
    records: list[LatencyRecord] = []
    errors: list[CallError] = []

    async def one_call(path: Path) -> None:
        call_id = path.stem
        async with gate:
            try:
                _, record = await client_stream(
                    path,
                    server,
                    chunk=chunk,
                    rc=rc,
                    left=left,
                    input_kind=input_kind,
                    pace_s=pace_s,
                    timeout_s=timeout_s,
                    call_id=call_id,
                )
                records.append(record)
            except Exception as exc:
                errors.append(CallError(call_id, f"{type(exc).__name__}: {exc}"))

    await asyncio.gather(*(one_call(p) for p in paths))
    records.sort(key=lambda r: r.call_id)
    errors.sort(key=lambda e: e.call_id)
    total_audio_s = sum(testset_duration_s(p) for p in paths)
    report = build_report(
        concurrency=n_clients,
        rc=rc,
        chunk=chunk,
        records=records,
        total_audio_s=total_audio_s,
    )
    return report, records, errors
