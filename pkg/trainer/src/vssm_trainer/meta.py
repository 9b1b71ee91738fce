"""Model geometry shared with the engine, parsed from its config JSON."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class ModelMeta:
    """Dimensions and streaming geometry for one engine configuration."""

    d_model: int
    n_heads: int
    n_layers: int
    sink_blocks: int
    window_blocks: int
    chunk_size: int
    horizon: int
    vocab_size: int | None = None
    io_dim: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.d_model <= 0 or self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be a positive multiple of n_heads")
        if (self.d_model // self.n_heads) % 2 != 0:
            raise ValueError("head width must be even")
        if min(self.n_layers, self.window_blocks, self.chunk_size, self.horizon) <= 0:
            raise ValueError("n_layers, window_blocks, chunk_size, horizon must be positive")
        if self.sink_blocks < 0:
            raise ValueError("sink_blocks must be >= 0")
        if self.vocab_size is not None and self.io_dim is not None:
            raise ValueError("vocab_size and io_dim are mutually exclusive")

    @property
    def d_head(self):
        return self.d_model // self.n_heads

    @property
    def window_span(self):
        return self.window_blocks * self.chunk_size


def meta_from_dict(doc):
    known = {f for f in ModelMeta.__dataclass_fields__}
    extra = set(doc) - known
    if extra:
        raise ValueError(f"unknown config keys: {sorted(extra)}")
    return ModelMeta(**doc)


def load_meta(path):
    return meta_from_dict(json.loads(Path(path).read_text()))


def meta_to_dict(meta):
    return {
        "d_model": meta.d_model,
        "n_heads": meta.n_heads,
        "n_layers": meta.n_layers,
        "sink_blocks": meta.sink_blocks,
        "window_blocks": meta.window_blocks,
        "chunk_size": meta.chunk_size,
        "horizon": meta.horizon,
        "vocab_size": meta.vocab_size,
        "io_dim": meta.io_dim,
        "seed": meta.seed,
    }


def canonical_shapes(meta):
    """Ordered (name, shape) list of every weight tensor the engine expects."""
    d = meta.d_model
    out = []
    if meta.vocab_size is not None:
        out.append(("embed.weight", (meta.vocab_size, d)))
    if meta.io_dim is not None:
        out.append(("in_proj.weight", (meta.io_dim, d)))
    for i in range(meta.n_layers):
        p = f"layer{i}."
        out += [
            (p + "norm1.gain", (d,)),
            (p + "attn.wq", (d, d)),
            (p + "attn.wk", (d, d)),
            (p + "attn.wv", (d, d)),
            (p + "attn.wo", (d, d)),
            (p + "gates.w_alpha", (d, d)),
            (p + "gates.w_beta", (d, d)),
            (p + "gates.A", (d,)),
            (p + "gates.B", (d,)),
            (p + "outgate.wg", (d, d)),
            (p + "outgate.bias", (d,)),
            (p + "outgate.rms_gain", (d,)),
            (p + "router.w", (d,)),
            (p + "router.b", (d,)),
            (p + "norm2.gain", (d,)),
            (p + "ffn.w1", (d, 4 * d)),
            (p + "ffn.w2", (4 * d, d)),
        ]
    out.append(("final_norm.gain", (d,)))
    if meta.vocab_size is not None:
        out.append(("head.weight", (d, meta.vocab_size)))
    if meta.io_dim is not None:
        out.append(("out_proj.weight", (d, meta.io_dim)))
    return out
