"""Headless streaming client with real-time pacing.

Streams one call's audio (pcm) or features (ZSF1) in 500 ms messages on an
absolute schedule (send i happens at t0 + i * pace, so scheduling jitter does
not accumulate), then sends end and waits for the final transcript.
last_chunk_sent_at is captured right after the final audio message, matching
the final-chunk latency definition.
"""

from __future__ import annotations

import asyncio
import time
from pathlib import Path

from .benchmark import LatencyRecord
from .decoder import StubTranscript
from .features import encode_zsf, read_zsf
from .protocol import (
    ProtocolError,
    make_end,
    make_start,
    parse_server_message,
)

PCM_BYTES_PER_SECOND = 32000  # 16 kHz mono s16le
FEATURE_FRAMES_PER_SECOND = 100


class SessionError(RuntimeError):
    """Server reported an error or the session broke mid-call."""


def _load_blocks(path: Path, input_kind: str, pace_s: float) -> list[bytes]:
    if input_kind == "features":
        feats = read_zsf(path)
        step = max(1, round(FEATURE_FRAMES_PER_SECOND * pace_s))
        return [
            encode_zsf(feats[i : i + step])
            for i in range(0, feats.shape[0], step)
        ]
    data = path.read_bytes()
    step = max(2, round(PCM_BYTES_PER_SECOND * pace_s))
    step -= step % 2
    return [data[i : i + step] for i in range(0, len(data), step)]


async def client_stream(
    file,
    server: str,
    *,
    chunk: int = 32,
    rc: int = 64,
    left: int | None = 128,
    input_kind: str = "features",
    pace_s: float = 0.5,
    timeout_s: float = 30.0,
    call_id: str | None = None,
) -> tuple[StubTranscript, LatencyRecord]:
    """Stream one file; returns (transcript, latency record).

    The final message's tokens become the transcript (the wire carries token
    ids only, so offsets stay empty client-side). Raises SessionError on
    server-reported errors, disconnects, or timeout; no LatencyRecord is
    produced in that case.
    """
    from websockets.asyncio.client import connect
    from websockets.exceptions import ConnectionClosed

    path = Path(file)
    call = call_id if call_id is not None else path.stem
    blocks = _load_blocks(path, input_kind, pace_s)
    uri = server if "://" in server else f"ws://{server}"

    async with connect(uri, open_timeout=timeout_s, close_timeout=5) as ws:
        await ws.send(make_start(chunk, rc, left, input_kind))
        t0 = time.perf_counter()
        for i, block in enumerate(blocks):
            target = t0 + i * pace_s
            delay = target - time.perf_counter()
            if delay > 0:
                await asyncio.sleep(delay)
            await ws.send(block)
        last_chunk_sent_at = time.perf_counter()
        await ws.send(make_end())

        busy_s = 0.0
        while True:
            try:
                raw = await asyncio.wait_for(ws.recv(), timeout=timeout_s)
            except (asyncio.TimeoutError, TimeoutError) as exc:
                raise SessionError(f"call {call}: timed out waiting for final") from exc
            except ConnectionClosed as exc:
                raise SessionError(f"call {call}: connection closed before final") from exc
            try:
                msg = parse_server_message(raw)
            except ProtocolError as exc:
                raise SessionError(f"call {call}: bad server message: {exc}") from exc
            if msg["type"] == "error":
                raise SessionError(f"call {call}: server error: {msg['message']}")
            busy_s = float(msg["busy_s"])
            if msg["type"] == "final":
                final_result_at = time.perf_counter()
                transcript = StubTranscript(tokens=[int(t) for t in msg["tokens"]])
                record = LatencyRecord(
                    call_id=call,
                    last_chunk_sent_at=last_chunk_sent_at,
                    final_result_at=final_result_at,
                    busy_s=busy_s,
                )
                return transcript, record
