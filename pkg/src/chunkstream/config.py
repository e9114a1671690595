"""Key = value model config files.

Example:

    # toy model
    dims = 8,12,16,24,16,12
    factors = 1,2,4,8,4,2
    num_layers = 1
    heads = 2
    attention_dim = 8
    feature_dim = 80
    seed = 1234
    chunk = 32
    left = 128
    rc = 64

`left` accepts "full" for unlimited history. chunk/left/rc are the serving
defaults a session may override in its start message.
"""

from __future__ import annotations

from .encoder import EncoderConfig
from .masks import FULL, MaskSpec

_KEYS = {
    "dims", "factors", "num_layers", "heads", "attention_dim",
    "feature_dim", "seed", "chunk", "left", "rc",
}


def _parse_int_tuple(value: str) -> tuple[int, ...]:
    return tuple(int(v.strip()) for v in value.split(",") if v.strip())


def parse_model_config(text: str) -> tuple[EncoderConfig, MaskSpec]:
    """Parse config text into the encoder config and default mask spec."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValueError(f"line {lineno}: expected key = value")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key not in _KEYS:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        if key in raw:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value.strip()

    defaults = EncoderConfig()
    try:
        config = EncoderConfig(
            dims=_parse_int_tuple(raw["dims"]) if "dims" in raw else defaults.dims,
            factors=_parse_int_tuple(raw["factors"]) if "factors" in raw else defaults.factors,
            num_layers=int(raw.get("num_layers", defaults.num_layers)),
            num_heads=int(raw.get("heads", defaults.num_heads)),
            attention_dim=int(raw.get("attention_dim", defaults.attention_dim)),
            feature_dim=int(raw.get("feature_dim", defaults.feature_dim)),
            seed=int(raw.get("seed", defaults.seed)),
        )
        left_raw = raw.get("left", "128")
        left = FULL if left_raw.lower() == "full" else int(left_raw)
        spec = MaskSpec(
            chunk_size=int(raw.get("chunk", 32)),
            left_context=left,
            right_context=int(raw.get("rc", 64)),
        )
    except ValueError:
        raise
    except Exception as exc:  # int() etc. on malformed values
        raise ValueError(f"malformed config value: {exc}") from exc
    return config, spec


def format_model_config(config: EncoderConfig, spec: MaskSpec) -> str:
    left = "full" if spec.left_context is None else str(spec.left_context)
    return "\n".join(
        [
            f"dims = {','.join(map(str, config.dims))}",
            f"factors = {','.join(map(str, config.factors))}",
            f"num_layers = {config.num_layers}",
            f"heads = {config.num_heads}",
            f"attention_dim = {config.attention_dim}",
            f"feature_dim = {config.feature_dim}",
            f"seed = {config.seed}",
            f"chunk = {spec.chunk_size}",
            f"left = {left}",
            f"rc = {spec.right_context}",
            "",
        ]
    )


def load_model_config(path) -> tuple[EncoderConfig, MaskSpec]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_model_config(fh.read())


def save_model_config(path, config: EncoderConfig, spec: MaskSpec) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_model_config(config, spec))
