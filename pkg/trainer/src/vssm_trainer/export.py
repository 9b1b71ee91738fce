"""Weight export to the manifest+blob format the engine loads."""

from __future__ import annotations

import numpy as np
import torch

from .interchange import FormatError, read_tensors, write_tensors
from .meta import canonical_shapes


def export_weights(params, meta, directory, basename="weights"):
    """Write params as float32 interchange files; returns the manifest path.

    Tensors are emitted in canonical order regardless of dict order, so a
    re-export of the same values is byte-identical. Every canonical name
    must be present with its exact shape.
    """
    expected = canonical_shapes(meta)
    missing = [name for name, _ in expected if name not in params]
    if missing:
        raise FormatError(f"export: missing canonical name {missing[0]!r}")
    extra = set(params) - {name for name, _ in expected}
    if extra:
        raise FormatError(f"export: unexpected name {sorted(extra)[0]!r}")
    ordered = {}
    for name, shape in expected:
        value = params[name]
        if isinstance(value, torch.Tensor):
            value = value.detach().cpu().numpy()
        arr = np.asarray(value, dtype=np.float32)
        if arr.shape != shape:
            raise FormatError(f"export: {name} has shape {arr.shape}, expected {shape}")
        ordered[name] = arr
    return write_tensors(directory, basename, ordered)


def import_weights(manifest_path, meta=None):
    """Read an interchange manifest into {name: float32 array}.

    With meta given, the name set and shapes are validated against the
    canonical layout.
    """
    arrays = read_tensors(manifest_path)
    if meta is not None:
        expected = canonical_shapes(meta)
        missing = [name for name, _ in expected if name not in arrays]
        if missing:
            raise FormatError(f"import: missing canonical name {missing[0]!r}")
        for name, shape in expected:
            if arrays[name].shape != shape:
                raise FormatError(
                    f"import: {name} has shape {arrays[name].shape}, expected {shape}"
                )
    return arrays
