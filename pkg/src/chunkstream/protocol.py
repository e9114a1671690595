"""Wire protocol: JSON text control frames, binary audio/feature frames.

Client -> server:
    {"type": "start", "chunk": 32, "rc": 64, "left": 128, "input": "pcm"}
    binary frames: 16 kHz mono s16le PCM (pcm mode) or ZSF1 blocks
    (features mode)
    {"type": "end"}
Server -> client:
    {"type": "partial", "tokens": [...], "busy_s": x}
    {"type": "final", "tokens": [...], "busy_s": x}
    {"type": "error", "message": "..."}

One session per connection. `left` may be an integer or "full"; omitted
start fields fall back to the server's configured defaults.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .masks import FULL, MaskSpec

SUPPORTED_CHUNKS = (16, 32, 64)
SUPPORTED_RC = (0, 32, 64, 96, 128, 256)
INPUT_KINDS = ("pcm", "features")
MAX_CONTROL_BYTES = 65536


class ProtocolError(Exception):
    """Malformed or out-of-contract message."""


@dataclass(frozen=True)
class SessionConfig:
    chunk: int
    rc: int
    left: int | None  # None = unlimited
    input_kind: str
    session_id: str

    def mask_spec(self) -> MaskSpec:
        return MaskSpec(self.chunk, self.left, self.rc)


def parse_control(raw) -> dict:
    """Decode one JSON control object; raises ProtocolError on anything else."""
    if isinstance(raw, (bytes, bytearray)):
        raise ProtocolError("control messages must be text frames")
    if not isinstance(raw, str):
        raise ProtocolError("control message must be a string")
    if len(raw) > MAX_CONTROL_BYTES:
        raise ProtocolError("control message too large")
    try:
        msg = json.loads(raw)
    except (json.JSONDecodeError, ValueError) as exc:
        raise ProtocolError(f"invalid JSON: {exc}") from exc
    if not isinstance(msg, dict):
        raise ProtocolError("control message must be a JSON object")
    mtype = msg.get("type")
    if not isinstance(mtype, str):
        raise ProtocolError("control message missing string 'type'")
    return msg


def _parse_left(value):
    if value is None or (isinstance(value, str) and value.lower() == "full"):
        return FULL
    if isinstance(value, bool) or not isinstance(value, int):
        raise ProtocolError("'left' must be a non-negative integer or \"full\"")
    if value < 0:
        raise ProtocolError("'left' must be >= 0")
    return value


def parse_start(raw, defaults: SessionConfig) -> SessionConfig:
    """Validate a start message, filling omitted fields from server defaults."""
    msg = parse_control(raw)
    if msg["type"] != "start":
        raise ProtocolError(f"expected start message, got type={msg['type']!r}")
    unknown = set(msg) - {"type", "chunk", "rc", "left", "input"}
    if unknown:
        raise ProtocolError(f"unknown start fields: {sorted(unknown)}")

    chunk = msg.get("chunk", defaults.chunk)
    if isinstance(chunk, bool) or not isinstance(chunk, int) or chunk not in SUPPORTED_CHUNKS:
        raise ProtocolError(f"'chunk' must be one of {list(SUPPORTED_CHUNKS)}")
    rc = msg.get("rc", defaults.rc)
    if isinstance(rc, bool) or not isinstance(rc, int) or rc not in SUPPORTED_RC:
        raise ProtocolError(f"'rc' must be one of {list(SUPPORTED_RC)}")
    left = _parse_left(msg["left"]) if "left" in msg else defaults.left
    input_kind = msg.get("input", defaults.input_kind)
    if input_kind not in INPUT_KINDS:
        raise ProtocolError(f"'input' must be one of {list(INPUT_KINDS)}")
    return SessionConfig(
        chunk=chunk, rc=rc, left=left, input_kind=input_kind,
        session_id=defaults.session_id,
    )


def make_partial(tokens: list[int], busy_s: float) -> str:
    return json.dumps({"type": "partial", "tokens": list(tokens), "busy_s": busy_s})


def make_final(tokens: list[int], busy_s: float) -> str:
    return json.dumps({"type": "final", "tokens": list(tokens), "busy_s": busy_s})


def make_error(message: str) -> str:
    return json.dumps({"type": "error", "message": message})


def make_start(chunk: int, rc: int, left, input_kind: str) -> str:
    return json.dumps(
        {
            "type": "start",
            "chunk": chunk,
            "rc": rc,
            "left": "full" if left is None else left,
            "input": input_kind,
        }
    )


def make_end() -> str:
    return json.dumps({"type": "end"})


def parse_server_message(raw) -> dict:
    """Client-side validation of partial/final/error messages."""
    msg = parse_control(raw)
    mtype = msg["type"]
    if mtype == "error":
        if not isinstance(msg.get("message"), str):
            raise ProtocolError("error message missing 'message'")
        return msg
    if mtype not in ("partial", "final"):
        raise ProtocolError(f"unexpected server message type {mtype!r}")
    tokens = msg.get("tokens")
    if not isinstance(tokens, list) or not all(isinstance(t, int) for t in tokens):
        raise ProtocolError("'tokens' must be a list of integers")
    if not isinstance(msg.get("busy_s"), (int, float)):
        raise ProtocolError("'busy_s' must be a number")
    return msg
