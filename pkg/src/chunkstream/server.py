"""Websocket streaming service: one session per connection.

Sessions follow the protocol in `protocol`: a start control message, binary
audio (pcm) or feature (ZSF1) frames, then an end control message. Pushes
run in a thread pool so the event loop keeps serving other sessions, but a
session's own messages are processed strictly in arrival order. Partials are
sent only when new tokens appear. busy_s accumulates this session's compute
time (push + finalize spans), which the bench layer sums for throughput
accounting.
"""

from __future__ import annotations

import asyncio
import logging
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .decoder import StreamingDecoder
from .encoder import EncoderParams
from .features import NUM_MELS, StreamingFeaturizer, decode_zsf, pcm16_to_float
from .masks import MaskSpec
from .protocol import (
    ProtocolError,
    SessionConfig,
    make_error,
    make_final,
    make_partial,
    parse_control,
    parse_start,
)
from .streaming import StreamState

log = logging.getLogger("chunkstream.serve")

MAX_MESSAGE_BYTES = 1 << 20
SILENCE_RMS = 1e-3


class SpeechServer:
    """Shared read-only parameters; per-session engines."""

    def __init__(
        self,
        params: EncoderParams,
        default_spec: MaskSpec,
        *,
        max_sessions: int = 64,
        default_input: str = "pcm",
        silence_endpoint_s: float | None = None,
    ) -> None:
        self.params = params
        self.default_spec = default_spec
        self.max_sessions = max_sessions
        self.default_input = default_input
        self.silence_endpoint_s = silence_endpoint_s
        self._active = 0
        self._session_seq = 0
        self._executor = ThreadPoolExecutor(max_workers=4, thread_name_prefix="push")

    def _defaults(self, session_id: str) -> SessionConfig:
        return SessionConfig(
            chunk=self.default_spec.chunk_size,
            rc=self.default_spec.right_context,
            left=self.default_spec.left_context,
            input_kind=self.default_input,
            session_id=session_id,
        )

    async def handle_session(self, connection) -> None:
        self._session_seq += 1
        sid = f"s{self._session_seq:05d}"
        if self._active >= self.max_sessions:
            await self._send_safe(connection, make_error("server at max sessions"))
            await connection.close()
            return
        self._active += 1
        audio_s = 0.0
        busy = 0.0
        tokens = 0
        try:
            audio_s, busy, tokens = await self._run_session(connection, sid)
        except ProtocolError as exc:
            await self._send_safe(connection, make_error(str(exc)))
            await connection.close()
        except Exception:
            # A single broken session must never take the server down.
            log.exception("session=%s crashed", sid)
            await self._send_safe(connection, make_error("internal error"))
            await connection.close()
        finally:
            self._active -= 1
            log.info(
                "session=%s audio_s=%.2f busy_s=%.4f tokens=%d",
                sid, audio_s, busy, tokens,
            )

    async def _run_session(self, connection, sid: str) -> tuple[float, float, int]:
        loop = asyncio.get_running_loop()
        first = await connection.recv()
        cfg = parse_start(first, self._defaults(sid))
        engine = StreamState(self.params, cfg.mask_spec())
        decoder = StreamingDecoder()
        featurizer = StreamingFeaturizer() if cfg.input_kind == "pcm" else None
        audio_s = 0.0
        busy = 0.0
        silence_run = 0.0

        def push_block(feats: np.ndarray) -> tuple[list[int], float]:
            t0 = time.perf_counter()
            emitted = engine.push(feats)
            new = decoder.push50(emitted)
            return new, time.perf_counter() - t0

        def finish() -> tuple[list[int], float]:
            t0 = time.perf_counter()
            emitted = engine.finalize()
            decoder.push50(emitted)
            return list(decoder.transcript.tokens), time.perf_counter() - t0

        async def send_final() -> int:
            nonlocal busy
            all_tokens, dt = await loop.run_in_executor(self._executor, finish)
            busy += dt
            await connection.send(make_final(all_tokens, busy))
            await connection.close()
            return len(all_tokens)

        async for message in connection:
            if isinstance(message, (bytes, bytearray)):
                if featurizer is not None:
                    samples = pcm16_to_float(bytes(message))
                    audio_s += samples.shape[0] / 16000.0
                    if self.silence_endpoint_s is not None:
                        rms = float(np.sqrt(np.mean(samples**2))) if samples.size else 0.0
                        silence_run = 0.0 if rms > SILENCE_RMS else (
                            silence_run + samples.shape[0] / 16000.0
                        )
                    feats = featurizer.push(samples)
                else:
                    try:
                        feats = decode_zsf(bytes(message))
                    except ValueError as exc:
                        raise ProtocolError(f"bad feature block: {exc}") from exc
                    if feats.shape[1] != NUM_MELS:
                        raise ProtocolError(f"feature blocks must have {NUM_MELS} dims")
                    audio_s += feats.shape[0] / 100.0
                if feats.size:
                    new_tokens, dt = await loop.run_in_executor(
                        self._executor, push_block, feats
                    )
                    busy += dt
                    if new_tokens:
                        await connection.send(make_partial(new_tokens, busy))
                if (
                    self.silence_endpoint_s is not None
                    and silence_run >= self.silence_endpoint_s
                ):
                    return audio_s, busy, await send_final()
            else:
                msg = parse_control(message)
                if msg["type"] == "end":
                    return audio_s, busy, await send_final()
                raise ProtocolError(f"unexpected control message {msg['type']!r}")
        # Client vanished without an end message; nothing to flush safely.
        return audio_s, busy, len(decoder.transcript.tokens)

    async def _send_safe(self, connection, payload: str) -> None:
        try:
            await connection.send(payload)
        except Exception:
            pass

    async def serve(self, host: str = "127.0.0.1", port: int = 8763):
        """Start listening; returns the websockets server object."""
        from websockets.asyncio.server import serve as ws_serve

        return await ws_serve(
            self.handle_session, host, port, max_size=MAX_MESSAGE_BYTES
        )


async def run_server(server: SpeechServer, host: str, port: int) -> None:
    """Serve until cancelled."""
    ws_server = await server.serve(host, port)
    log.info("listening on ws://%s:%d", host, port)
    try:
        await asyncio.Future()
    finally:
        ws_server.close()
        await ws_server.wait_closed()
