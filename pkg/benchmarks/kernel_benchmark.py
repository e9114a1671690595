"""Compare kernel backends: pure numpy vs the compiled extension.

Times the two hot kernels in isolation and one end-to-end encoder pass with
each backend selected. Run from a checkout with the package installed:

    python3 benchmarks/kernel_benchmark.py --repeats 5
"""

import argparse
import time

import numpy as np

from chunkstream import _kernels
from chunkstream.encoder import EncoderConfig, encoder_forward, init_encoder_params
from chunkstream.masks import MaskSpec


def best_of(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_chunk_mask(repeats: int) -> float:
    return best_of(
        lambda: _kernels.chunk_mask(2048, 2048, 32, 128, 64), repeats
    )


def bench_masked_softmax(repeats: int) -> float:
    rng = np.random.default_rng(0)
    scores = rng.normal(size=(2, 1024, 1024))
    mask = _kernels.chunk_mask(1024, 1024, 32, 128, 64)
    return best_of(lambda: _kernels.masked_softmax(scores, mask), repeats)


def bench_encoder(repeats: int) -> float:
    params = init_encoder_params(EncoderConfig())
    rng = np.random.default_rng(1)
    feats = rng.uniform(-1.0, 1.0, size=(1000, 80))
    spec = MaskSpec(32, 128, 64)
    return best_of(lambda: encoder_forward(feats, spec, params), repeats)


BENCHES = [
    ("chunk_mask 2048x2048", bench_chunk_mask),
    ("masked_softmax 2x1024x1024", bench_masked_softmax),
    ("encoder_forward 10s audio", bench_encoder),
]


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5, help="best-of-N timing")
    args = parser.parse_args()

    backends = _kernels.available_backends()
    print(f"backends: {', '.join(backends)}")
    if len(backends) == 1:
        print("compiled extension not built; timing the python backend only")

    results = {}
    for name in backends:
        _kernels.set_backend(name)
        for label, fn in BENCHES:
            results[(name, label)] = fn(args.repeats)
    _kernels.set_backend(backends[0])

    both = "python" in backends and "cython" in backends
    width = max(len(label) for label, _ in BENCHES)
    header = f"{'kernel':<{width}}  " + "".join(f"{b:>12}" for b in backends)
    if both:
        header += f"{'py/cy':>9}"  # >1 means the extension is faster
    print(header)
    for label, _ in BENCHES:
        row = f"{label:<{width}}  "
        for b in backends:
            row += f"{results[(b, label)] * 1e3:>10.2f}ms"
        if both:
            ratio = results[("python", label)] / results[("cython", label)]
            row += f"{ratio:>8.2f}x"
        print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
