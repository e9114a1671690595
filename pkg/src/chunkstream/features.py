"""Log mel-filterbank features at 100 Hz, plus the ZSF1 container format.

16 kHz mono audio -> 80-dim log-mel frames, 25 ms window, 10 ms hop. The
incremental featurizer produces bit-identical frames to the offline path so
a streamed session and an offline rerun agree exactly.

ZSF1 files hold a feature (or hidden) matrix: magic "ZSF1", u32 T, u32 F
(little-endian), then T*F row-major float32 values.
"""

from __future__ import annotations

import struct

import numpy as np

SAMPLE_RATE = 16000
WINDOW_SAMPLES = 400  # 25 ms
HOP_SAMPLES = 160  # 10 ms
NUM_MELS = 80
FFT_SIZE = 512
LOG_FLOOR = 1e-10

ZSF_MAGIC = b"ZSF1"
_ZSF_HEADER = struct.Struct("<4sII")


def _hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def _mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(
    n_mels: int = NUM_MELS,
    n_fft: int = FFT_SIZE,
    sample_rate: int = SAMPLE_RATE,
) -> np.ndarray:
    """Triangular mel filters, [n_mels, n_fft//2 + 1]."""
    n_bins = n_fft // 2 + 1
    mel_pts = np.linspace(_hz_to_mel(0.0), _hz_to_mel(sample_rate / 2.0), n_mels + 2)
    hz_pts = _mel_to_hz(mel_pts)
    bin_freqs = np.arange(n_bins) * (sample_rate / n_fft)
    fb = np.zeros((n_mels, n_bins), dtype=np.float64)
    for m in range(n_mels):
        lo, mid, hi = hz_pts[m], hz_pts[m + 1], hz_pts[m + 2]
        up = (bin_freqs - lo) / (mid - lo)
        down = (hi - bin_freqs) / (hi - mid)
        fb[m] = np.maximum(0.0, np.minimum(up, down))
    return fb


_WINDOW = np.hamming(WINDOW_SAMPLES).astype(np.float64)
_FILTERBANK = mel_filterbank()


def _as_float_samples(samples: np.ndarray) -> np.ndarray:
    arr = np.asarray(samples)
    if arr.ndim != 1:
        raise ValueError("audio must be 1-D mono")
    if arr.dtype == np.int16:
        return arr.astype(np.float64) / 32768.0
    arr = arr.astype(np.float64)
    if arr.size and not np.isfinite(arr).all():
        raise ValueError("audio contains non-finite samples")
    return arr


def _frames_to_features(frames: np.ndarray) -> np.ndarray:
    # frames: [n, WINDOW_SAMPLES] float64
    spec = np.fft.rfft(frames * _WINDOW[None, :], n=FFT_SIZE, axis=1)
    power = (spec.real**2 + spec.imag**2)
    mel = power @ _FILTERBANK.T
    return np.log(mel + LOG_FLOOR).astype(np.float32)


def extract_features(samples: np.ndarray, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """80-dim log-mel features at 100 Hz, [T, 80] float32.

    T = floor((N - 400) / 160) + 1 for N input samples; deterministic for
    identical input.
    """
    if sample_rate != SAMPLE_RATE:
        raise ValueError(f"sample rate must be {SAMPLE_RATE}, got {sample_rate}")
    audio = _as_float_samples(samples)
    n = audio.shape[0]
    if n < WINDOW_SAMPLES:
        raise ValueError("audio shorter than one 25 ms window")
    n_frames = (n - WINDOW_SAMPLES) // HOP_SAMPLES + 1
    idx = np.arange(WINDOW_SAMPLES)[None, :] + HOP_SAMPLES * np.arange(n_frames)[:, None]
    return _frames_to_features(audio[idx])


class StreamingFeaturizer:
    """Incremental featurizer emitting the same frames as extract_features.

    Frame i covers samples [160*i, 160*i + 400); a frame is emitted as soon
    as its window is complete. Trailing samples shorter than a window are
    dropped, matching the offline frame count.
    """

    def __init__(self) -> None:
        self._buffer = np.empty(0, dtype=np.float64)
        self._frames_emitted = 0

    @property
    def frames_emitted(self) -> int:
        return self._frames_emitted

    def push(self, samples: np.ndarray) -> np.ndarray:
        chunk = _as_float_samples(samples)
        self._buffer = np.concatenate([self._buffer, chunk])
        n = self._buffer.shape[0]
        if n < WINDOW_SAMPLES:
            return np.empty((0, NUM_MELS), dtype=np.float32)
        n_ready = (n - WINDOW_SAMPLES) // HOP_SAMPLES + 1
        if n_ready <= 0:
            return np.empty((0, NUM_MELS), dtype=np.float32)
        idx = np.arange(WINDOW_SAMPLES)[None, :] + HOP_SAMPLES * np.arange(n_ready)[:, None]
        feats = _frames_to_features(self._buffer[idx])
        self._frames_emitted += n_ready
        self._buffer = self._buffer[n_ready * HOP_SAMPLES:]
        return feats

    def push_pcm(self, data: bytes) -> np.ndarray:
        return self.push(pcm16_to_float(data))


def pcm16_to_float(data: bytes) -> np.ndarray:
    """Little-endian signed 16-bit mono PCM -> float64 in [-1, 1)."""
    if len(data) % 2 != 0:
        raise ValueError("PCM byte length must be even")
    return np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0


def float_to_pcm16(samples: np.ndarray) -> bytes:
    clipped = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 32767.0 / 32768.0)
    return (clipped * 32768.0).astype("<i2").tobytes()


def encode_zsf(frames: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(frames, dtype="<f4")
    if arr.ndim != 2:
        raise ValueError("frames must be a 2-D matrix")
    t, f = arr.shape
    return _ZSF_HEADER.pack(ZSF_MAGIC, t, f) + arr.tobytes()


def decode_zsf(data: bytes) -> np.ndarray:
    if len(data) < _ZSF_HEADER.size:
        raise ValueError("truncated header")
    magic, t, f = _ZSF_HEADER.unpack_from(data)
    if magic != ZSF_MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    body = data[_ZSF_HEADER.size:]
    expected = t * f * 4
    if len(body) != expected:
        raise ValueError(f"payload is {len(body)} bytes, header implies {expected}")
    return np.frombuffer(body, dtype="<f4").reshape(t, f).copy()


def write_zsf(path, frames: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_zsf(frames))


def read_zsf(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_zsf(fh.read())
