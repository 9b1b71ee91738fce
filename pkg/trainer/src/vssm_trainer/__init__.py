"""Autodiff mirror of the streaming engine: gradient checks, toy training,
and weight export through the shared interchange format."""

from .data import FILLER_BASE, N_VALUES, NEEDLE_TOKEN, QUERY_TOKEN, VALUE_BASE, make_batch
from .export import export_weights, import_weights
from .forward import (
    embed,
    forward_stream,
    init_params,
    logits,
    params_from_arrays,
    reference_forward,
)
from .gradcheck import OP_NAMES, directional_gradcheck, finite_diff_gradcheck
from .interchange import DTYPE_TAG, FormatError, read_tensors, write_tensors
from .meta import ModelMeta, canonical_shapes, load_meta, meta_from_dict, meta_to_dict
from .train import (
    TrainConfig,
    TrainResult,
    ablation_config,
    evaluate,
    train_toy,
    write_curves_csv,
)

__all__ = [
    "DTYPE_TAG",
    "FILLER_BASE",
    "FormatError",
    "ModelMeta",
    "N_VALUES",
    "NEEDLE_TOKEN",
    "OP_NAMES",
    "QUERY_TOKEN",
    "TrainConfig",
    "TrainResult",
    "VALUE_BASE",
    "ablation_config",
    "canonical_shapes",
    "directional_gradcheck",
    "embed",
    "evaluate",
    "export_weights",
    "finite_diff_gradcheck",
    "forward_stream",
    "import_weights",
    "init_params",
    "load_meta",
    "logits",
    "make_batch",
    "meta_from_dict",
    "meta_to_dict",
    "params_from_arrays",
    "read_tensors",
    "reference_forward",
    "train_toy",
    "write_curves_csv",
    "write_tensors",
]
