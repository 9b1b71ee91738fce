"""Versioned binary snapshots of engine state.

Layout (all integers little-endian):

    bytes 0..3   magic "VSSM"
    bytes 4..7   format version, u32 (currently 1)
    bytes 8..11  section count, u32
    sections     u16 name length, name (utf-8),
                 u64 payload length, payload bytes

One section named "meta" holds JSON: the model config, engine flags and
counters, per-layer cache membership (block indices for sink and window),
and the shape of every tensor section. Tensor sections are raw little-endian
float32. Weights are not part of a snapshot; they travel in the interchange
files and must be supplied at load time with a matching config.
"""

import json
import struct

import numpy as np

from .cache import BlockEntry
from .config import ModelConfig
from .kernels import ContractViolation
from .model import Engine
from .weights import WeightsBundle

MAGIC = b"VSSM"
VERSION = 1


def _sections_for(engine: Engine):
    meta = {
        "config": engine.config.to_dict(),
        "flags": {
            "use_global": engine.use_global,
            "force_gamma_zero": engine.force_gamma_zero,
            "unbounded_window": engine.unbounded_window,
        },
        "chunks_consumed": engine.state.chunks_consumed,
        "memory_updates": engine.memory_updates,
        "peak_cached_tokens": engine.peak_cached_tokens,
        "comparisons_per_chunk": engine.comparisons_per_chunk,
        "layers": [],
        "tensors": {},
    }
    tensors: dict[str, np.ndarray] = {}
    for li, ls in enumerate(engine.state.layers):
        meta["layers"].append(
            {
                "next_block_index": ls.cache.next_block_index,
                "sink": [b.block_index for b in ls.cache.sink],
                "window": [b.block_index for b in ls.cache.window],
                "updates_applied": ls.memory.updates_applied,
            }
        )
        tensors[f"layer{li}.mem"] = ls.memory.m
        for group, blocks in (("sink", ls.cache.sink), ("win", ls.cache.window)):
            for bi, entry in enumerate(blocks):
                for field in ("k", "v", "alpha", "beta"):
                    tensors[f"layer{li}.{group}{bi}.{field}"] = getattr(entry, field)
    meta["tensors"] = {name: list(a.shape) for name, a in tensors.items()}
    return meta, tensors


def save_engine_state(engine: Engine, path):
    meta, tensors = _sections_for(engine)
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", 1 + len(tensors))]

    def put(name: str, payload: bytes):
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<Q", len(payload)))
        parts.append(payload)

    put("meta", json.dumps(meta, sort_keys=True).encode("utf-8"))
    for name, arr in tensors.items():
        put(name, np.ascontiguousarray(arr, dtype="<f4").tobytes())
    with open(path, "wb") as f:
        f.write(b"".join(parts))


def _read_exact(f, n, what):
    data = f.read(n)
    if len(data) != n:
        raise ContractViolation(f"snapshot: truncated while reading {what}")
    return data


def load_engine_state(path, weights: WeightsBundle) -> Engine:
    """Rebuild an engine from a snapshot; weights must match the config."""
    with open(path, "rb") as f:
        if _read_exact(f, 4, "magic") != MAGIC:
            raise ContractViolation("snapshot: bad magic, not a state snapshot")
        (version,) = struct.unpack("<I", _read_exact(f, 4, "version"))
        if version != VERSION:
            raise ContractViolation(f"snapshot: unsupported version {version}")
        (count,) = struct.unpack("<I", _read_exact(f, 4, "section count"))
        sections: dict[str, bytes] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read_exact(f, 2, "section name"))
            name = _read_exact(f, name_len, "section name").decode("utf-8")
            (size,) = struct.unpack("<Q", _read_exact(f, 8, "section size"))
            sections[name] = _read_exact(f, size, f"section {name}")
    if "meta" not in sections:
        raise ContractViolation("snapshot: missing meta section")
    meta = json.loads(sections["meta"].decode("utf-8"))
    config = ModelConfig.from_dict(meta["config"])
    if config != weights.config:
        raise ContractViolation("snapshot: config does not match the supplied weights")

    def tensor(name):
        if name not in sections:
            raise ContractViolation(f"snapshot: missing tensor section {name!r}")
        shape = tuple(meta["tensors"][name])
        arr = np.frombuffer(sections[name], dtype="<f4")
        if arr.size != int(np.prod(shape)):
            raise ContractViolation(f"snapshot: tensor {name!r} has wrong size")
        return arr.reshape(shape).copy()

    flags = meta["flags"]
    engine = Engine(
        weights,
        use_global=flags["use_global"],
        force_gamma_zero=flags["force_gamma_zero"],
        unbounded_window=flags["unbounded_window"],
    )
    engine.state.chunks_consumed = int(meta["chunks_consumed"])
    engine.memory_updates = int(meta["memory_updates"])
    engine.peak_cached_tokens = int(meta["peak_cached_tokens"])
    engine.comparisons_per_chunk = [int(x) for x in meta["comparisons_per_chunk"]]
    for li, (ls, layer_meta) in enumerate(zip(engine.state.layers, meta["layers"])):
        ls.memory.m = tensor(f"layer{li}.mem")
        ls.memory.updates_applied = int(layer_meta["updates_applied"])
        ls.cache.next_block_index = int(layer_meta["next_block_index"])
        for group, indices, target in (
            ("sink", layer_meta["sink"], ls.cache.sink),
            ("win", layer_meta["window"], ls.cache.window),
        ):
            for bi, block_index in enumerate(indices):
                target.append(
                    BlockEntry(
                        block_index=int(block_index),
                        k=tensor(f"layer{li}.{group}{bi}.k"),
                        v=tensor(f"layer{li}.{group}{bi}.v"),
                        alpha=tensor(f"layer{li}.{group}{bi}.alpha"),
                        beta=tensor(f"layer{li}.{group}{bi}.beta"),
                    )
                )
    return engine
