"""Reader/writer for the manifest+blob tensor files the engine consumes.

Independent implementation against the documented format (docs/formats.md
in the engine repo): a JSON manifest listing {name, dtype:"f32", shape,
byte_offset} entries plus one contiguous little-endian float32 blob.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

DTYPE_TAG = "f32"
_WIRE = np.dtype("<f4")


class FormatError(ValueError):
    pass


def _to_f32_array(name, value):
    try:
        import torch

        if isinstance(value, torch.Tensor):
            value = value.detach().cpu().numpy()
    except ImportError:
        pass
    arr = np.asarray(value)
    if arr.dtype != np.float32:
        arr = arr.astype(np.float32)
    if not np.isfinite(arr).all():
        raise FormatError(f"tensor {name!r} has non-finite entries")
    return arr


def write_tensors(directory, basename, tensors):
    """Write name -> tensor (numpy or torch) as basename.json/.bin; returns manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    chunks = []
    offset = 0
    for name, value in tensors.items():
        arr = _to_f32_array(name, value)
        raw = np.ascontiguousarray(arr, dtype=_WIRE).tobytes()
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
    (directory / f"{basename}.bin").write_bytes(b"".join(chunks))
    manifest = directory / f"{basename}.json"
    manifest.write_text(
        json.dumps({"blob": f"{basename}.bin", "tensors": entries}, indent=1) + "\n"
    )
    return manifest


def read_tensors(manifest_path):
    """Read a manifest+blob pair back into {name: float32 ndarray}."""
    manifest_path = Path(manifest_path)
    try:
        doc = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"unreadable manifest {manifest_path}: {exc}") from exc
    if not isinstance(doc, dict) or "blob" not in doc or "tensors" not in doc:
        raise FormatError(f"manifest {manifest_path} lacks blob/tensors keys")
    try:
        blob = (manifest_path.parent / doc["blob"]).read_bytes()
    except OSError as exc:
        raise FormatError(f"unreadable blob for {manifest_path}: {exc}") from exc

    out = {}
    for entry in doc["tensors"]:
        name = entry.get("name")
        if entry.get("dtype") != DTYPE_TAG:
            raise FormatError(f"tensor {name!r}: unsupported dtype {entry.get('dtype')!r}")
        shape = tuple(int(s) for s in entry["shape"])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        offset = int(entry["byte_offset"])
        end = offset + count * _WIRE.itemsize
        if offset < 0 or end > len(blob):
            raise FormatError(
                f"tensor {name!r} spans [{offset}, {end}) outside blob of {len(blob)} bytes"
            )
        out[name] = (
            np.frombuffer(blob, dtype=_WIRE, count=count, offset=offset)
            .reshape(shape)
            .astype(np.float32)
        )
    return out
