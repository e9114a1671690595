"""Command line entry points.

    chunkstream mask dump --chunk 32 --left 128 --rc 64 --len 96
    chunkstream sched dump --seed 11 --n 100 --rc 0,64,128,256 --chunk 16,32,64
    chunkstream simulate --features f.zsf --chunk 32 --left 128 --rc 64 --out h.zsf
    chunkstream synth --seed 7 --n 10 --mean-duration 60 --out testset/
    chunkstream serve --port 8763 --model model.cfg --max-sessions 64
    chunkstream bench --server 127.0.0.1:8763 --concurrency 10 --rc 64 \
        --chunk 32 --testset testset/ --out report.json

CHUNKSTREAM_PORT and CHUNKSTREAM_MODEL override serve's defaults when the
flags are not given.
"""

from __future__ import annotations

import argparse
import asyncio
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .benchmark import run_concurrent, synth_testset, write_report
from .config import load_model_config
from .encoder import EncoderConfig, init_encoder_params
from .masks import FULL, MaskSpec, build_mask, format_mask
from .protocol import SUPPORTED_RC
from .schedule import sample_schedule
from .server import SpeechServer, run_server
from .streaming import simulate_stream

ENV_PORT = "CHUNKSTREAM_PORT"
ENV_MODEL = "CHUNKSTREAM_MODEL"
DEFAULT_SPEC = MaskSpec(32, 128, 64)


def _parse_left(value: str):
    if value.lower() == "full":
        return FULL
    return int(value)


def _int_list(value: str) -> list[int]:
    return [int(v) for v in value.split(",") if v.strip()]


def _load_model(path: str | None):
    if path:
        return load_model_config(path)
    return EncoderConfig(), DEFAULT_SPEC


def cmd_mask_dump(args) -> int:
    spec = MaskSpec(args.chunk, _parse_left(args.left), args.rc)
    print(format_mask(build_mask(args.len, args.len, spec)))
    return 0


def cmd_sched_dump(args) -> int:
    sched = sample_schedule(args.seed, args.n, rc_set=_int_list(args.rc),
                            chunk_set=_int_list(args.chunk))
    print("batch,chunk,rc")
    for entry in sched:
        print(f"{entry.batch},{entry.chunk},{entry.rc}")
    return 0


def cmd_simulate(args) -> int:
    from .features import read_zsf, write_zsf

    config, _ = _load_model(args.model)
    params = init_encoder_params(config)
    spec = MaskSpec(args.chunk, _parse_left(args.left), args.rc)
    feats = read_zsf(args.features)
    hidden = simulate_stream(feats, spec, params)
    write_zsf(args.out, hidden.astype(np.float32))
    print(f"wrote {hidden.shape[0]} frames x {hidden.shape[1]} dims to {args.out}")
    return 0


def cmd_synth(args) -> int:
    paths = synth_testset(args.seed, args.n, args.mean_duration, args.out)
    print(f"wrote {len(paths)} calls to {args.out}")
    return 0


def cmd_serve(args) -> int:
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s")
    port = args.port if args.port is not None else int(os.environ.get(ENV_PORT, "8763"))
    model = args.model if args.model is not None else os.environ.get(ENV_MODEL)
    config, spec = _load_model(model)
    params = init_encoder_params(config)
    server = SpeechServer(
        params,
        spec,
        max_sessions=args.max_sessions,
        silence_endpoint_s=0.8 if args.silence_endpoint else None,
    )
    try:
        asyncio.run(run_server(server, args.host, port))
    except KeyboardInterrupt:
        pass
    return 0


def cmd_bench(args) -> int:
    testset_dir = Path(args.testset)
    paths = sorted(testset_dir.glob("*.zsf"))
    if not paths:
        print(f"no .zsf files in {testset_dir}", file=sys.stderr)
        return 1
    report, records, errors = asyncio.run(
        run_concurrent(
            args.server,
            args.concurrency,
            args.rc,
            args.chunk,
            paths,
            left=_parse_left(args.left),
            timeout_s=args.timeout,
        )
    )
    json_path, csv_path = write_report(report, args.out)
    print(report.to_json())
    print(f"wrote {json_path} and {csv_path}")
    if errors:
        for err in errors:
            print(f"call {err.call_id} failed: {err.message}", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chunkstream")
    sub = parser.add_subparsers(dest="command", required=True)

    mask = sub.add_parser("mask", help="mask inspection")
    mask_sub = mask.add_subparsers(dest="mask_command", required=True)
    dump = mask_sub.add_parser("dump", help="print a mask as 0/1 rows")
    dump.add_argument("--chunk", type=int, required=True)
    dump.add_argument("--left", type=str, required=True, help="frames or 'full'")
    dump.add_argument("--rc", type=int, required=True)
    dump.add_argument("--len", type=int, required=True)
    dump.set_defaults(func=cmd_mask_dump)

    sched = sub.add_parser("sched", help="schedule sampling")
    sched_sub = sched.add_subparsers(dest="sched_command", required=True)
    sdump = sched_sub.add_parser("dump", help="emit batch,chunk,rc CSV")
    sdump.add_argument("--seed", type=int, required=True)
    sdump.add_argument("--n", type=int, required=True)
    sdump.add_argument("--rc", type=str, default="0,64,128,256")
    sdump.add_argument("--chunk", type=str, default="16,32,64")
    sdump.set_defaults(func=cmd_sched_dump)

    sim = sub.add_parser("simulate", help="streamed inference over a feature file")
    sim.add_argument("--features", required=True)
    sim.add_argument("--chunk", type=int, default=32)
    sim.add_argument("--left", type=str, default="128")
    sim.add_argument("--rc", type=int, default=0, choices=sorted(SUPPORTED_RC))
    sim.add_argument("--out", required=True)
    sim.add_argument("--model", default=None, help="model config file")
    sim.set_defaults(func=cmd_simulate)

    synth = sub.add_parser("synth", help="write a synthetic feature testset")
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--n", type=int, required=True)
    synth.add_argument("--mean-duration", type=float, default=60.0)
    synth.add_argument("--out", required=True)
    synth.set_defaults(func=cmd_synth)

    serve = sub.add_parser("serve", help="run the websocket server")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=None,
                       help=f"default 8763, or ${ENV_PORT}")
    serve.add_argument("--model", default=None,
                       help=f"model config file, or ${ENV_MODEL}")
    serve.add_argument("--max-sessions", type=int, default=64)
    serve.add_argument("--silence-endpoint", action="store_true",
                       help="finalize after 0.8 s of near-silence (pcm mode)")
    serve.set_defaults(func=cmd_serve)

    bench = sub.add_parser("bench", help="concurrent latency/throughput run")
    bench.add_argument("--server", required=True, help="HOST:PORT")
    bench.add_argument("--concurrency", type=int, required=True)
    bench.add_argument("--rc", type=int, required=True)
    bench.add_argument("--chunk", type=int, required=True)
    bench.add_argument("--testset", required=True, help="directory of .zsf files")
    bench.add_argument("--out", required=True, help="report JSON path")
    bench.add_argument("--left", type=str, default="128")
    bench.add_argument("--timeout", type=float, default=30.0)
    bench.set_defaults(func=cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
