"""Decoder, protocol, config, and live websocket session tests.

Server tests run a real websockets server on an ephemeral port inside
asyncio.run, one event loop per test. The model is the default config, which
is small enough that whole sessions finish in well under a second.
"""

import asyncio
import json

import numpy as np
import pytest

from chunkstream.config import (
    format_model_config,
    load_model_config,
    parse_model_config,
    save_model_config,
)
from chunkstream.decoder import (
    VOCAB_SIZE,
    StreamingDecoder,
    decode_projection,
    decode_stub,
    frame_tokens,
)
from chunkstream.encoder import EncoderConfig, init_encoder_params, pool_pairs
from chunkstream.features import encode_zsf
from chunkstream.masks import FULL, MaskSpec
from chunkstream.protocol import (
    ProtocolError,
    SessionConfig,
    make_end,
    make_error,
    make_final,
    make_partial,
    make_start,
    parse_control,
    parse_server_message,
    parse_start,
)
from chunkstream.server import SpeechServer
from chunkstream.streaming import simulate_stream

# ---------------------------------------------------------------------------
# decoder


def test_projection_shape_and_determinism():
    p1 = decode_projection(24)
    p2 = decode_projection(24)
    assert p1.shape == (24, VOCAB_SIZE)
    np.testing.assert_array_equal(p1, p2)
    assert not np.array_equal(decode_projection(16)[:16, :], p1[:16, :])


def test_frame_tokens_rejects_bad_input():
    with pytest.raises(ValueError):
        frame_tokens(np.zeros((0, 8)))
    with pytest.raises(ValueError):
        frame_tokens(np.zeros(8))


def test_decode_stub_collapses_runs():
    rng = np.random.default_rng(1)
    base = rng.normal(size=(4, 24))
    order = [0, 0, 1, 2, 2, 2, 0, 3]
    hidden = base[order]
    ids = [int(t) for t in frame_tokens(hidden)]

    expected_tokens, expected_offsets = [], []
    for i, tok in enumerate(ids):
        if not expected_tokens or tok != expected_tokens[-1]:
            expected_tokens.append(tok)
            expected_offsets.append(2 * i)  # run starts, 20 ms units at 25 Hz

    out = decode_stub(hidden)
    assert out.tokens == expected_tokens
    assert out.offsets == expected_offsets
    assert len(out.tokens) < len(order)  # repeats really collapsed


def test_decode_stub_deterministic():
    rng = np.random.default_rng(0)
    hidden = rng.normal(size=(40, 24))
    a = decode_stub(hidden)
    b = decode_stub(hidden.copy())
    assert a.tokens == b.tokens and a.offsets == b.offsets


@pytest.mark.parametrize("pieces", [[101], [50, 51], [1] * 101, [7, 13, 81], [100, 1]])
def test_streaming_decoder_matches_offline(pieces):
    assert sum(pieces) == 101
    rng = np.random.default_rng(3)
    h50 = rng.normal(size=(101, 24))
    offline = decode_stub(pool_pairs(h50))

    dec = StreamingDecoder()
    emitted = []
    start = 0
    for n in pieces:
        emitted.extend(dec.push50(h50[start : start + n]))
        start += n
    assert emitted == offline.tokens
    assert dec.transcript.tokens == offline.tokens
    assert dec.transcript.offsets == offline.offsets


def test_streaming_decoder_empty_push():
    dec = StreamingDecoder()
    assert dec.push50(np.zeros((0, 24))) == []
    assert dec.transcript.tokens == []


# ---------------------------------------------------------------------------
# protocol

DEFAULTS = SessionConfig(chunk=32, rc=64, left=128, input_kind="pcm", session_id="s0")


def test_parse_control_rejects_binary_and_garbage():
    for bad in [b"\x00\x01", "not json", "[1,2]", '"str"', "{}", '{"type": 3}']:
        with pytest.raises(ProtocolError):
            parse_control(bad)
    with pytest.raises(ProtocolError):
        parse_control("x" * 70000)


def test_parse_start_full_message():
    raw = make_start(16, 96, FULL, "features")
    cfg = parse_start(raw, DEFAULTS)
    assert cfg == SessionConfig(16, 96, FULL, "features", "s0")
    assert cfg.mask_spec() == MaskSpec(16, FULL, 96)


def test_parse_start_defaults_fill_in():
    cfg = parse_start('{"type": "start"}', DEFAULTS)
    assert (cfg.chunk, cfg.rc, cfg.left, cfg.input_kind) == (32, 64, 128, "pcm")


@pytest.mark.parametrize(
    "raw",
    [
        '{"type": "start", "chunk": 17}',
        '{"type": "start", "chunk": true}',
        '{"type": "start", "chunk": "32"}',
        '{"type": "start", "rc": 1}',
        '{"type": "start", "rc": null}',
        '{"type": "start", "left": -1}',
        '{"type": "start", "left": false}',
        '{"type": "start", "left": 1.5}',
        '{"type": "start", "input": "wav"}',
        '{"type": "start", "bogus": 1}',
        '{"type": "end"}',
    ],
)
def test_parse_start_rejections(raw):
    with pytest.raises(ProtocolError):
        parse_start(raw, DEFAULTS)


def test_parse_start_left_forms():
    assert parse_start('{"type": "start", "left": "full"}', DEFAULTS).left is FULL
    assert parse_start('{"type": "start", "left": 0}', DEFAULTS).left == 0


def test_server_messages_round_trip():
    p = parse_server_message(make_partial([1, 2], 0.25))
    assert p == {"type": "partial", "tokens": [1, 2], "busy_s": 0.25}
    f = parse_server_message(make_final([], 1.0))
    assert f["type"] == "final" and f["tokens"] == []
    e = parse_server_message(make_error("boom"))
    assert e == {"type": "error", "message": "boom"}
    assert json.loads(make_end()) == {"type": "end"}


@pytest.mark.parametrize(
    "raw",
    [
        '{"type": "partial", "tokens": "abc", "busy_s": 0}',
        '{"type": "partial", "tokens": [1, "x"], "busy_s": 0}',
        '{"type": "partial", "tokens": [1]}',
        '{"type": "final", "tokens": [1], "busy_s": "x"}',
        '{"type": "error"}',
        '{"type": "start"}',
    ],
)
def test_parse_server_message_rejections(raw):
    with pytest.raises(ProtocolError):
        parse_server_message(raw)


# ---------------------------------------------------------------------------
# model config


def test_config_round_trip():
    config = EncoderConfig(dims=(4, 6), factors=(1, 2), num_layers=2, seed=99)
    spec = MaskSpec(16, 64, 32)
    text = format_model_config(config, spec)
    config2, spec2 = parse_model_config(text)
    assert config2 == config
    assert spec2 == spec


def test_config_round_trip_full_left():
    text = format_model_config(EncoderConfig(), MaskSpec(32, FULL, 0))
    _, spec = parse_model_config(text)
    assert spec.left_context is FULL


def test_config_defaults_when_sparse():
    config, spec = parse_model_config("seed = 7\n")
    assert config.seed == 7
    assert config.dims == EncoderConfig().dims
    assert spec == MaskSpec(32, 128, 64)


def test_config_rejects_unknown_and_duplicate_keys():
    with pytest.raises(ValueError, match="line 1"):
        parse_model_config("bogus = 1\n")
    with pytest.raises(ValueError, match="duplicate"):
        parse_model_config("seed = 1\nseed = 2\n")
    with pytest.raises(ValueError):
        parse_model_config("seed\n")


def test_config_file_round_trip(tmp_path):
    path = tmp_path / "model.cfg"
    config = EncoderConfig(seed=5)
    spec = MaskSpec(64, FULL, 128)
    save_model_config(path, config, spec)
    config2, spec2 = load_model_config(path)
    assert (config2, spec2) == (config, spec)


# ---------------------------------------------------------------------------
# live sessions

CFG = EncoderConfig()
PARAMS = init_encoder_params(CFG, dtype=np.float64)
SPEC = MaskSpec(32, 128, 64)


def run_live(server, client_fn):
    """Serve on an ephemeral port and run client_fn(port) to completion."""

    async def main():
        ws_server = await server.serve("127.0.0.1", 0)
        port = ws_server.sockets[0].getsockname()[1]
        try:
            return await client_fn(port)
        finally:
            ws_server.close()
            await ws_server.wait_closed()

    return asyncio.run(main())


def make_features(seed: int, n_frames: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.uniform(-1.0, 1.0, size=(n_frames, 80)).astype(np.float32)


async def ws_connect(port):
    from websockets.asyncio.client import connect

    return await connect(f"ws://127.0.0.1:{port}", close_timeout=2)


def collect_session(port_msgs):
    partials, final = [], None
    for msg in port_msgs:
        if msg["type"] == "partial":
            partials.append(msg)
        elif msg["type"] == "final":
            final = msg
    return partials, final


async def drive_session(port, start_msg, blocks, *, stop_early=False):
    """Send start, blocks, end; collect every server message until close."""
    ws = await ws_connect(port)
    msgs = []
    try:
        await ws.send(start_msg)
        for block in blocks:
            await ws.send(block)
        if not stop_early:
            await ws.send(make_end())
        while True:
            try:
                raw = await asyncio.wait_for(ws.recv(), timeout=10)
            except Exception:
                break
            msgs.append(parse_server_message(raw))
            if msgs[-1]["type"] in ("final", "error"):
                break
    finally:
        await ws.close()
    return msgs


def test_session_no_audio_gives_empty_final():
    server = SpeechServer(PARAMS, SPEC)
    msgs = run_live(
        server,
        lambda port: drive_session(port, make_start(32, 0, 128, "features"), []),
    )
    partials, final = collect_session(msgs)
    assert partials == []
    assert final is not None
    assert final["tokens"] == []


def test_features_session_matches_offline():
    feats = make_features(11, 700)
    blocks = [encode_zsf(feats[i : i + 100]) for i in range(0, 700, 100)]
    server = SpeechServer(PARAMS, SPEC)
    msgs = run_live(
        server,
        lambda port: drive_session(port, make_start(32, 64, 128, "features"), blocks),
    )
    partials, final = collect_session(msgs)
    assert partials, "a 7 s utterance must produce at least one partial"

    offline = decode_stub(simulate_stream(feats.astype(np.float64), SPEC, PARAMS))
    assert final["tokens"] == offline.tokens

    # partials carry only the new tokens; their concatenation is a prefix of
    # the final transcript, the remainder arriving with the finalize flush
    streamed = [t for p in partials for t in p["tokens"]]
    assert streamed == final["tokens"][: len(streamed)]


def test_busy_s_monotone_nondecreasing():
    feats = make_features(12, 600)
    blocks = [encode_zsf(feats[i : i + 50]) for i in range(0, 600, 50)]
    server = SpeechServer(PARAMS, SPEC)
    msgs = run_live(
        server,
        lambda port: drive_session(port, make_start(32, 0, 128, "features"), blocks),
    )
    busys = [m["busy_s"] for m in msgs]
    assert busys, "expected at least the final message"
    assert all(b2 >= b1 for b1, b2 in zip(busys, busys[1:]))
    assert busys[-1] > 0.0


def test_large_rc_defers_all_output():
    # rc=256 needs chunk_end + 256 50 Hz frames before the first emission;
    # 2 s of audio (200 feature frames -> 100 encoder frames) never reaches it
    feats = make_features(13, 200)
    blocks = [encode_zsf(feats[i : i + 50]) for i in range(0, 200, 50)]
    server = SpeechServer(PARAMS, SPEC)
    msgs = run_live(
        server,
        lambda port: drive_session(port, make_start(32, 256, 128, "features"), blocks),
    )
    partials, final = collect_session(msgs)
    assert partials == []
    assert final is not None
    offline = decode_stub(
        simulate_stream(feats.astype(np.float64), MaskSpec(32, 128, 256), PARAMS)
    )
    assert final["tokens"] == offline.tokens


def test_pcm_session_produces_tokens():
    rng = np.random.default_rng(14)
    samples = (rng.uniform(-0.3, 0.3, size=48000) * 32767).astype(np.int16)
    pcm = samples.tobytes()
    blocks = [pcm[i : i + 16000] for i in range(0, len(pcm), 16000)]
    server = SpeechServer(PARAMS, SPEC)
    msgs = run_live(
        server,
        lambda port: drive_session(port, make_start(32, 0, 128, "pcm"), blocks),
    )
    partials, final = collect_session(msgs)
    assert final is not None and final["tokens"]
    assert partials, "3 s of pcm with rc=0 must yield at least one partial"


def test_malformed_first_message_gets_error_and_close():
    server = SpeechServer(PARAMS, SPEC)

    async def client(port):
        ws = await ws_connect(port)
        await ws.send('{"type": "start", "chunk": 7}')
        raw = await asyncio.wait_for(ws.recv(), timeout=10)
        msg = parse_server_message(raw)
        # connection must be closed by the server afterwards
        with pytest.raises(Exception):
            await asyncio.wait_for(ws.recv(), timeout=10)
        return msg

    msg = run_live(server, client)
    assert msg["type"] == "error"


def test_binary_before_start_gets_error():
    server = SpeechServer(PARAMS, SPEC)

    async def client(port):
        ws = await ws_connect(port)
        await ws.send(b"\x00" * 64)
        raw = await asyncio.wait_for(ws.recv(), timeout=10)
        return parse_server_message(raw)

    msg = run_live(server, client)
    assert msg["type"] == "error"


def test_bad_feature_block_gets_error():
    server = SpeechServer(PARAMS, SPEC)

    async def client(port):
        ws = await ws_connect(port)
        await ws.send(make_start(32, 0, 128, "features"))
        await ws.send(b"JUNKJUNKJUNK")
        raw = await asyncio.wait_for(ws.recv(), timeout=10)
        return parse_server_message(raw)

    msg = run_live(server, client)
    assert msg["type"] == "error"


def test_max_sessions_rejects_surplus():
    server = SpeechServer(PARAMS, SPEC, max_sessions=1)

    async def client(port):
        ws1 = await ws_connect(port)
        await ws1.send(make_start(32, 64, 128, "features"))
        # second connection while the first is still open; the server
        # rejects at accept time, before any client message
        ws2 = await ws_connect(port)
        raw = await asyncio.wait_for(ws2.recv(), timeout=10)
        msg = parse_server_message(raw)
        await ws1.close()
        await ws2.close()
        return msg

    msg = run_live(server, client)
    assert msg["type"] == "error"
    assert "max sessions" in msg["message"]


def test_concurrent_sessions_match_solo_runs():
    inputs = [make_features(20 + i, 400 + 60 * i) for i in range(3)]
    specs = [(32, 0), (32, 64), (64, 32)]

    def solo(feats, chunk, rc):
        spec = MaskSpec(chunk, 128, rc)
        return decode_stub(simulate_stream(feats.astype(np.float64), spec, PARAMS)).tokens

    expected = [solo(f, c, r) for f, (c, r) in zip(inputs, specs)]

    server = SpeechServer(PARAMS, SPEC)

    async def client(port):
        async def one(feats, chunk, rc):
            blocks = [encode_zsf(feats[i : i + 37]) for i in range(0, len(feats), 37)]
            msgs = await drive_session(port, make_start(chunk, rc, 128, "features"), blocks)
            _, final = collect_session(msgs)
            return final["tokens"]

        return await asyncio.gather(
            *(one(f, c, r) for f, (c, r) in zip(inputs, specs))
        )

    got = run_live(server, client)
    assert list(got) == expected
