"""Flat tensor interchange files: a JSON manifest plus one raw binary blob.

The manifest lists tensors in blob order; the blob is their contiguous
little-endian float32 bytes. Readers in other languages only need JSON
and a byte slice, which is the point.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .config import ModelConfig
from .kernels import ContractViolation
from .weights import WeightsBundle

DTYPE_TAG = "f32"
_WIRE_DTYPE = np.dtype("<f4")


def write_tensors(directory, basename, tensors):
    """Write named float32 tensors under directory as basename.json/.bin.

    Returns the manifest path. Tensor order in the manifest follows dict
    order, offsets are contiguous.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    chunks = []
    offset = 0
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        if arr.dtype != np.float32:
            raise ContractViolation(
                f"interchange tensor {name!r} must be f32, got {arr.dtype}"
            )
        raw = np.ascontiguousarray(arr, dtype=_WIRE_DTYPE).tobytes()
        entries.append(
            {
                "name": name,
                "dtype": DTYPE_TAG,
                "shape": list(arr.shape),
                "byte_offset": offset,
            }
        )
        chunks.append(raw)
        offset += len(raw)

    blob_name = f"{basename}.bin"
    (directory / blob_name).write_bytes(b"".join(chunks))
    manifest_path = directory / f"{basename}.json"
    manifest_path.write_text(
        json.dumps({"blob": blob_name, "tensors": entries}, indent=1) + "\n"
    )
    return manifest_path


def read_tensors(manifest_path):
    """Read a manifest written by write_tensors. Returns name -> float32 array."""
    manifest_path = Path(manifest_path)
    try:
        doc = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ContractViolation(f"unreadable manifest {manifest_path}: {exc}") from exc
    if not isinstance(doc, dict) or "blob" not in doc or "tensors" not in doc:
        raise ContractViolation(f"manifest {manifest_path} missing blob/tensors keys")

    blob_path = manifest_path.parent / doc["blob"]
    try:
        blob = blob_path.read_bytes()
    except OSError as exc:
        raise ContractViolation(f"unreadable blob {blob_path}: {exc}") from exc

    out = {}
    for entry in doc["tensors"]:
        name = entry.get("name")
        if entry.get("dtype") != DTYPE_TAG:
            raise ContractViolation(
                f"tensor {name!r} has unsupported dtype {entry.get('dtype')!r}"
            )
        shape = tuple(int(s) for s in entry["shape"])
        offset = int(entry["byte_offset"])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = count * _WIRE_DTYPE.itemsize
        if offset < 0 or offset + nbytes > len(blob):
            raise ContractViolation(
                f"tensor {name!r} spans [{offset}, {offset + nbytes}) but "
                f"blob has {len(blob)} bytes"
            )
        flat = np.frombuffer(blob, dtype=_WIRE_DTYPE, count=count, offset=offset)
        out[name] = flat.reshape(shape).astype(np.float32)
    return out


def write_weights(bundle, directory, basename="weights"):
    """Write a WeightsBundle's arrays in canonical order. Returns the manifest path."""
    return write_tensors(directory, basename, bundle.arrays)


def read_weights(manifest_path, config):
    """Read weights for config; validates the exact canonical name set and shapes."""
    if not isinstance(config, ModelConfig):
        raise ContractViolation("read_weights needs a ModelConfig")
    return WeightsBundle(config, read_tensors(manifest_path))
