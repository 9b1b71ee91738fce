"""Streaming sequence engine with a rolling attention window and a
delta-rule compressed memory, blended by a position-aware gate."""

from .bench import bench_latency, build_report, run_equiv_check
from .checkpoint import load_engine_state, save_engine_state
from .config import ModelConfig
from .diffusion import (
    NoiseSchedule,
    chunked_ar_sample,
    forward_noise,
    make_schedule,
    refinement_levels,
)
from .interchange import read_tensors, read_weights, write_tensors, write_weights
from .kernels import ContractViolation
from .model import (
    Engine,
    batch_replay_oracle,
    embed_tokens,
    output_logits,
    project_in,
    project_out,
    streaming_run,
    switch_context,
)
from .needle import NeedleTask, gen_needle_task, gen_tasks, run_recall_eval
from .weights import WeightsBundle, canonical_names, init_weights

__all__ = [
    "ContractViolation",
    "Engine",
    "ModelConfig",
    "NeedleTask",
    "NoiseSchedule",
    "WeightsBundle",
    "batch_replay_oracle",
    "bench_latency",
    "build_report",
    "canonical_names",
    "chunked_ar_sample",
    "embed_tokens",
    "forward_noise",
    "gen_needle_task",
    "gen_tasks",
    "init_weights",
    "load_engine_state",
    "make_schedule",
    "output_logits",
    "project_in",
    "project_out",
    "read_tensors",
    "read_weights",
    "refinement_levels",
    "run_equiv_check",
    "run_recall_eval",
    "save_engine_state",
    "streaming_run",
    "switch_context",
    "write_tensors",
    "write_weights",
]
