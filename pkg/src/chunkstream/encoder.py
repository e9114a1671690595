"""Multi-rate chunked-attention encoder with per-block weight sharing.

100 Hz features are subsampled to a 50 Hz base rate, then run through six
stacks at downsample factors [1, 2, 4, 8, 4, 2] (50/25/12.5/6.25/12.5/25 Hz).
Between stacks the time axis is mean-pooled down and repeat-upsampled back,
and the channel dim is truncated or zero-padded to the next stack's width.
Inside each block one multi-head module computes masked attention weights
that are reused three times: a gated nonlinear-attention application and two
self-attention applications, interleaved with feed-forward maps and a
depthwise 3-tap convolution that never crosses a chunk's start.

Lookahead discipline: a frame's value may depend on at most right_context
frames beyond its chunk end. Because attention applications chain (a visible
key was itself computed with lookahead), a single full-sequence pass would
compound lookahead far past that bound, so `encoder_forward` evaluates each
chunk over its clipped window [window_start(c), chunk_end(c) + rc) with
absolute-position masks and keeps only that chunk's rows. The streaming
engine runs the identical computation when the deadline arrives, which makes
offline and streamed outputs equal to the last bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .features import NUM_MELS
from .masks import MaskSpec, downsample_mask
from .schedule import SplitMix64

INIT_SCALE = 0.1


@dataclass(frozen=True)
class EncoderConfig:
    dims: tuple[int, ...] = (8, 12, 16, 24, 16, 12)
    factors: tuple[int, ...] = (1, 2, 4, 8, 4, 2)
    num_layers: int = 1
    num_heads: int = 2
    attention_dim: int = 8
    feature_dim: int = NUM_MELS
    seed: int = 1234

    def __post_init__(self) -> None:
        if len(self.dims) != len(self.factors) or not self.dims:
            raise ValueError("dims and factors must be equally sized and non-empty")
        if any(d < 1 for d in self.dims):
            raise ValueError("stack dims must be positive")
        if any(f < 1 for f in self.factors):
            raise ValueError("downsample factors must be positive")
        mid = len(self.factors) // 2
        if max(self.factors) != self.factors[mid]:
            raise ValueError("the middle stack must have the largest downsample factor")
        if self.num_layers < 1 or self.num_heads < 1 or self.attention_dim < 1:
            raise ValueError("num_layers, num_heads, attention_dim must be positive")
        if any(d % self.num_heads for d in self.dims):
            raise ValueError("every stack dim must be divisible by num_heads")
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be positive")

    @property
    def out_dim(self) -> int:
        return max(self.dims)

    @property
    def factor_lcm(self) -> int:
        return math.lcm(*self.factors)


@dataclass
class AttentionParams:
    """Projections for one weight-computing attention module."""

    wq: np.ndarray  # [E, H*d]
    wk: np.ndarray  # [E, H*d]
    wv: np.ndarray  # [E, E]
    wo: np.ndarray  # [E, E]
    num_heads: int
    attention_dim: int


@dataclass
class BlockParams:
    attn: AttentionParams
    nla_gate: np.ndarray  # [E, E]
    nla_value: np.ndarray  # [E, E]
    sa2_value: np.ndarray  # [E, E]
    sa2_out: np.ndarray  # [E, E]
    ff1_w1: np.ndarray  # [E, 2E]
    ff1_w2: np.ndarray  # [2E, E]
    ff2_w1: np.ndarray  # [E, 2E]
    ff2_w2: np.ndarray  # [2E, E]
    conv_kernel: np.ndarray  # [3, E], taps (t-2, t-1, t)


@dataclass
class EncoderParams:
    config: EncoderConfig
    subsample_w: np.ndarray  # [2*feature_dim, dims[0]]
    stacks: list[list[BlockParams]] = field(default_factory=list)
    dtype: np.dtype = np.dtype(np.float64)


def init_encoder_params(config: EncoderConfig, dtype=np.float64) -> EncoderParams:
    """Seeded uniform(-0.1, 0.1) weights, drawn in a fixed documented order.

    Order: subsample map, then per stack, per block: wq, wk, wv, wo,
    nla_gate, nla_value, sa2_value, sa2_out, ff1_w1, ff1_w2, ff2_w1, ff2_w2,
    conv_kernel. Changing the order would silently change every fixture.
    """
    rng = SplitMix64(config.seed)
    dt = np.dtype(dtype)
    if dt not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError("dtype must be float32 or float64")

    def draw(*shape: int) -> np.ndarray:
        n = int(np.prod(shape))
        return rng.uniform_array(n, -INIT_SCALE, INIT_SCALE).reshape(shape).astype(dt)

    params = EncoderParams(
        config=config,
        subsample_w=draw(2 * config.feature_dim, config.dims[0]),
        dtype=dt,
    )
    h, d = config.num_heads, config.attention_dim
    for dim in config.dims:
        blocks = []
        for _ in range(config.num_layers):
            blocks.append(
                BlockParams(
                    attn=AttentionParams(
                        wq=draw(dim, h * d),
                        wk=draw(dim, h * d),
                        wv=draw(dim, dim),
                        wo=draw(dim, dim),
                        num_heads=h,
                        attention_dim=d,
                    ),
                    nla_gate=draw(dim, dim),
                    nla_value=draw(dim, dim),
                    sa2_value=draw(dim, dim),
                    sa2_out=draw(dim, dim),
                    ff1_w1=draw(dim, 2 * dim),
                    ff1_w2=draw(2 * dim, dim),
                    ff2_w1=draw(dim, 2 * dim),
                    ff2_w2=draw(2 * dim, dim),
                    conv_kernel=draw(3, dim),
                )
            )
        params.stacks.append(blocks)
    return params


def fit_dim(x: np.ndarray, target_dim: int) -> np.ndarray:
    """Truncate columns to target_dim, or right-pad with zero columns."""
    if target_dim <= 0:
        raise ValueError("target_dim must be positive")
    cur = x.shape[1]
    if cur == target_dim:
        return x
    if cur > target_dim:
        return x[:, :target_dim]
    out = np.zeros((x.shape[0], target_dim), dtype=x.dtype)
    out[:, :cur] = x
    return out


def subsample(features: np.ndarray, params: EncoderParams) -> np.ndarray:
    """100 Hz features -> 50 Hz hidden frames via a strided pairwise map.

    Output frame j = tanh([features[2j]; features[2j+1]] @ W); length
    floor(T/2). Odd trailing frames are dropped.
    """
    feats = np.asarray(features)
    if feats.ndim != 2 or feats.shape[1] != params.config.feature_dim:
        raise ValueError(f"features must be [T, {params.config.feature_dim}]")
    if feats.shape[0] < 2:
        raise ValueError("need at least 2 frames to subsample")
    t2 = feats.shape[0] // 2
    x = feats[: 2 * t2].astype(params.dtype, copy=False)
    paired = x.reshape(t2, 2 * params.config.feature_dim)
    return np.tanh(paired @ params.subsample_w)


def _split_heads(x: np.ndarray, num_heads: int) -> np.ndarray:
    # [L, H*d] -> [H, L, d]
    L, hd = x.shape
    return x.reshape(L, num_heads, hd // num_heads).transpose(1, 0, 2)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    # [H, L, d] -> [L, H*d]
    h, L, d = x.shape
    return x.transpose(1, 0, 2).reshape(L, h * d)


def attention_weights(y: np.ndarray, params: AttentionParams, mask: np.ndarray) -> np.ndarray:
    """Masked softmax(QK^T / sqrt(d)) per head, [H, L, L]."""
    if mask.shape != (y.shape[0], y.shape[0]):
        raise ValueError("mask dims must match sequence length")
    q = _split_heads(y @ params.wq, params.num_heads)
    k = _split_heads(y @ params.wk, params.num_heads)
    scores = q @ k.transpose(0, 2, 1) / math.sqrt(params.attention_dim)
    return _kernels.masked_softmax(np.ascontiguousarray(scores), mask)


def apply_attention(weights: np.ndarray, value: np.ndarray) -> np.ndarray:
    """Combine per-head weights with a [L, E] value map; returns [L, E]."""
    h = weights.shape[0]
    v = _split_heads(value, h)
    return _merge_heads(weights @ v)


@dataclass
class AttentionCache:
    y: np.ndarray
    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    weights: np.ndarray
    ctx: np.ndarray
    mask: np.ndarray
    params: AttentionParams


@dataclass
class AttentionGrads:
    d_y: np.ndarray
    d_wq: np.ndarray
    d_wk: np.ndarray
    d_wv: np.ndarray
    d_wo: np.ndarray


def attention_forward(
    y: np.ndarray, params: AttentionParams, mask: np.ndarray
) -> tuple[np.ndarray, np.ndarray, AttentionCache]:
    """masked_attention plus the cache needed for the analytic backward."""
    y = np.asarray(y)
    if y.ndim != 2 or y.shape[1] != params.wq.shape[0]:
        raise ValueError("input dim does not match projection dim")
    if np.isnan(y).any():
        raise ValueError("NaN in attention input")
    if mask.shape != (y.shape[0], y.shape[0]):
        raise ValueError("mask dims must match sequence length")
    h = params.num_heads
    q = _split_heads(y @ params.wq, h)
    k = _split_heads(y @ params.wk, h)
    v = _split_heads(y @ params.wv, h)
    scores = q @ k.transpose(0, 2, 1) / math.sqrt(params.attention_dim)
    weights = _kernels.masked_softmax(np.ascontiguousarray(scores), mask)
    ctx = _merge_heads(weights @ v)
    out = ctx @ params.wo
    return out, weights, AttentionCache(y, q, k, v, weights, ctx, mask, params)


def masked_attention(
    y: np.ndarray, params: AttentionParams, mask: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Multi-head attention over visible cells; returns (output, weights).

    Weights are [H, L, L] with masked cells exactly 0 and visible rows
    summing to 1; they are what the encoder blocks share across their three
    attention applications.
    """
    out, weights, _ = attention_forward(y, params, mask)
    return out, weights


def attention_backward(upstream: np.ndarray, cache: AttentionCache) -> AttentionGrads:
    """Analytic gradients for attention_forward.

    Masked cells never enter the softmax normalization, so their score
    gradient is exactly zero and nothing flows to invisible positions.
    """
    if cache is None:
        raise ValueError("missing forward cache")
    upstream = np.asarray(upstream)
    if upstream.shape != (cache.y.shape[0], cache.params.wo.shape[1]):
        raise ValueError("upstream gradient shape mismatch")
    p = cache.params
    h = p.num_heads
    scale = 1.0 / math.sqrt(p.attention_dim)

    d_wo = cache.ctx.T @ upstream
    d_ctx = _split_heads(upstream @ p.wo.T, h)  # [H, L, dv]
    d_weights = d_ctx @ cache.v.transpose(0, 2, 1)  # [H, L, L]
    d_v = cache.weights.transpose(0, 2, 1) @ d_ctx
    # Softmax backward row-wise; weights are 0 at masked cells, so d_scores
    # vanishes there without any explicit masking.
    w = cache.weights
    d_scores = w * (d_weights - (d_weights * w).sum(axis=-1, keepdims=True))
    d_q = d_scores @ cache.k * scale
    d_k = d_scores.transpose(0, 2, 1) @ cache.q * scale
    d_wq = cache.y.T @ _merge_heads(d_q)
    d_wk = cache.y.T @ _merge_heads(d_k)
    d_wv = cache.y.T @ _merge_heads(d_v)
    d_y = (
        _merge_heads(d_q) @ p.wq.T
        + _merge_heads(d_k) @ p.wk.T
        + _merge_heads(d_v) @ p.wv.T
    )
    return AttentionGrads(d_y, d_wq, d_wk, d_wv, d_wo)


def downsample_time(x: np.ndarray, factor: int) -> np.ndarray:
    """Non-overlapping mean pooling along time; a partial tail group is
    averaged over the frames it has."""
    if factor == 1:
        return x
    L = x.shape[0]
    full = L // factor
    n = -(-L // factor)
    out = np.empty((n, x.shape[1]), dtype=x.dtype)
    if full:
        out[:full] = x[: full * factor].reshape(full, factor, -1).mean(axis=1)
    if n > full:
        out[full] = x[full * factor:].mean(axis=0)
    return out


def upsample_time(x: np.ndarray, factor: int, length: int) -> np.ndarray:
    """Nearest-neighbor (repeat) upsampling, trimmed to `length` frames."""
    if factor == 1:
        return x[:length]
    return np.repeat(x, factor, axis=0)[:length]


def chunk_conv(
    x: np.ndarray, kernel: np.ndarray, chunk_blocks: int, block_offset: int
) -> np.ndarray:
    """Depthwise 3-tap map over (t-2, t-1, t) that never crosses a chunk
    start; out-of-chunk or out-of-window taps contribute zero."""
    L = x.shape[0]
    out = x * kernel[2]
    idx = np.arange(L, dtype=np.int64) + block_offset
    chunk_first = (idx // chunk_blocks) * chunk_blocks
    for tap, shift in ((1, 1), (0, 2)):
        shifted = np.zeros_like(x)
        shifted[shift:] = x[:-shift]
        valid = (idx - shift) >= chunk_first
        out += np.where(valid[:, None], shifted * kernel[tap], 0)
    return out


def _ff(x: np.ndarray, w1: np.ndarray, w2: np.ndarray) -> np.ndarray:
    return np.tanh(x @ w1) @ w2


def _block_forward(
    x: np.ndarray,
    bp: BlockParams,
    mask: np.ndarray,
    chunk_blocks: int,
    block_offset: int,
) -> np.ndarray:
    """One encoder block. The attention weights are computed once and reused
    by the gated nonlinear application and both self-attention applications."""
    x = x + _ff(x, bp.ff1_w1, bp.ff1_w2)
    weights = attention_weights(x, bp.attn, mask)
    gate = np.tanh(x @ bp.nla_gate)
    x = x + gate * apply_attention(weights, x @ bp.nla_value)
    x = x + apply_attention(weights, x @ bp.attn.wv) @ bp.attn.wo
    x = x + chunk_conv(x, bp.conv_kernel, chunk_blocks, block_offset)
    x = x + _ff(x, bp.ff2_w1, bp.ff2_w2)
    x = x + apply_attention(weights, x @ bp.sa2_value) @ bp.sa2_out
    return x


def run_stacks(
    h50: np.ndarray, abs_start: int, spec: MaskSpec, params: EncoderParams
) -> np.ndarray:
    """Run every stack over a 50 Hz window whose first frame sits at absolute
    position abs_start (must be a multiple of lcm(factors) so pooling groups
    and chunk boundaries keep their absolute phase)."""
    cfg = params.config
    if abs_start % cfg.factor_lcm:
        raise ValueError("window start must align to the factor lcm")
    length = h50.shape[0]
    h = h50
    for dim, factor, blocks in zip(cfg.dims, cfg.factors, params.stacks):
        h = fit_dim(h, dim)
        xs = downsample_time(h, factor)
        block_offset = abs_start // factor
        chunk_blocks = spec.chunk_size // factor
        n = xs.shape[0]
        mask = downsample_mask(
            spec, factor, n, n, row_offset=block_offset, col_offset=block_offset
        )
        for bp in blocks:
            xs = _block_forward(xs, bp, mask, chunk_blocks, block_offset)
        h = upsample_time(xs, factor, length)
    return fit_dim(h, cfg.out_dim)


def window_start(chunk_first: int, spec: MaskSpec, config: EncoderConfig) -> int:
    """Leftmost 50 Hz frame evaluated for the chunk starting at chunk_first.

    Unlimited left context pins it at 0; otherwise the left-context bound is
    rounded down to the factor lcm so every stack stays phase-aligned. The
    streaming engine retains exactly this window, so offline and streamed
    evaluation see identical inputs.
    """
    if spec.left_context is None:
        return 0
    lcm = config.factor_lcm
    return max(0, ((chunk_first - spec.left_context) // lcm) * lcm)


def pool_pairs(x: np.ndarray) -> np.ndarray:
    """Final factor-2 mean pool; an odd trailing frame is dropped."""
    n = x.shape[0] // 2
    return (x[: 2 * n : 2] + x[1 : 2 * n : 2]) / 2


def validate_engine_spec(spec: MaskSpec, config: EncoderConfig) -> None:
    if spec.chunk_size % config.factor_lcm:
        raise ValueError(
            f"chunk_size must be a multiple of lcm(factors)={config.factor_lcm}; "
            f"got {spec.chunk_size}"
        )


def encoder_forward(
    features: np.ndarray,
    spec: MaskSpec,
    params: EncoderParams,
    *,
    final_pool: bool = True,
) -> np.ndarray:
    """Full encoder pass with per-chunk clipped-window evaluation.

    Each chunk c is computed over [window_start(c), chunk_end(c) + rc),
    clipped to the sequence, and only c's rows are kept; this bounds every
    frame's lookahead at right_context even though attention applications
    chain. Returns [floor(floor(T/2)/2), max(dims)] at 25 Hz by default, or
    the 50 Hz sequence with final_pool=False.
    """
    validate_engine_spec(spec, params.config)
    feats = np.asarray(features)
    if feats.ndim != 2:
        raise ValueError("features must be [T, F]")
    if not np.isfinite(feats).all():
        raise ValueError("features must be finite")
    h50 = subsample(feats, params)
    t2 = h50.shape[0]
    chunk = spec.chunk_size
    out = np.empty((t2, params.config.out_dim), dtype=params.dtype)
    for cs in range(0, t2, chunk):
        ce = min(cs + chunk, t2)
        top = min(t2, cs + chunk + spec.right_context)
        w0 = window_start(cs, spec, params.config)
        h = run_stacks(h50[w0:top], w0, spec, params)
        out[cs:ce] = h[cs - w0 : ce - w0]
    return pool_pairs(out) if final_pool else out
