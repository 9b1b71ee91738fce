"""Latency/footprint measurement and the streaming-equivalence self-check."""

from __future__ import annotations

import gc
import json
import subprocess
import time
from pathlib import Path

import numpy as np

from .kernels import ContractViolation
from .model import Engine, batch_replay_oracle, streaming_run

EQUIV_TOLERANCE = 1e-5


def _input_chunks(config, n_chunks, seed, stream):
    """Seeded standard-normal chunks on an input stream disjoint from weight init."""
    rng = np.random.default_rng([seed, stream])
    return [
        rng.standard_normal((config.chunk_size, config.d_model)).astype(np.float32)
        for _ in range(n_chunks)
    ]


def bench_latency(weights, lengths, warmup_chunks=20, seed=0, repeats=1, oracle=False):
    """Per-chunk wall time stats for each total length, warm-up discarded.

    oracle=True times the full-causal reference (unbounded cache, no
    memory) instead of the hybrid engine. Returns one dict per length:
    {"mean_ns", "p95_ns", "peak_tokens", "updates"}.
    """
    config = weights.config
    if list(lengths) != sorted(lengths):
        raise ContractViolation("lengths must be ascending")
    if repeats < 1:
        raise ContractViolation("repeats must be positive")

    rows = []
    for length in lengths:
        if length % config.chunk_size != 0:
            raise ContractViolation(
                f"length {length} is not a multiple of chunk_size {config.chunk_size}"
            )
        n_chunks = length // config.chunk_size
        if n_chunks <= warmup_chunks:
            raise ContractViolation(
                f"length {length} gives {n_chunks} chunks, need more than "
                f"{warmup_chunks} warm-up chunks"
            )
        chunks = _input_chunks(config, n_chunks, seed, stream=1)

        samples = []
        engine = None
        gc_was_enabled = gc.isenabled()
        gc.disable()
        try:
            for _ in range(repeats):
                if oracle:
                    engine = Engine(weights, use_global=False, unbounded_window=True)
                else:
                    engine = Engine(weights)
                for x in chunks:
                    t0 = time.perf_counter_ns()
                    engine.process_chunk(x)
                    samples.append(time.perf_counter_ns() - t0)
                del samples[len(samples) - n_chunks : len(samples) - n_chunks + warmup_chunks]
        finally:
            if gc_was_enabled:
                gc.enable()

        rows.append(
            {
                "mean_ns": float(np.mean(samples)),
                "p95_ns": float(np.percentile(samples, 95)),
                "peak_tokens": engine.peak_cached_tokens,
                "updates": engine.memory_updates,
            }
        )
    return rows


def git_describe():
    """Repo state of the installed sources, or "unknown" outside a checkout."""
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=10,
        )
    except (OSError, subprocess.TimeoutExpired):
        return "unknown"
    if out.returncode != 0:
        return "unknown"
    return out.stdout.strip() or "unknown"


def build_report(config, lengths, hybrid_rows, oracle_rows):
    report = {
        "config": config.to_dict(),
        "git_describe": git_describe(),
        "lengths": list(lengths),
        "hybrid": hybrid_rows,
        "oracle": oracle_rows,
    }
    json.dumps(report)  # fail fast if anything non-serializable slipped in
    return report


def run_equiv_check(config, n_chunks=32, seed=0, tolerance=EQUIV_TOLERANCE):
    """Streaming vs replay over n_chunks, plus a short-sequence oracle check.

    The oracle comparison runs on a prefix short enough that nothing is
    evicted, where the hybrid engine must match full causal attention.
    Returns max diffs and a pass flag; deterministic given seed.
    """
    from .weights import init_weights

    if n_chunks < 1:
        raise ContractViolation("n_chunks must be positive")
    weights = init_weights(config)
    chunks = _input_chunks(config, n_chunks, seed, stream=1)

    streamed, _ = streaming_run(weights, chunks)
    replayed = batch_replay_oracle(weights, chunks)
    stream_replay = max(
        float(np.max(np.abs(s.astype(np.float64) - r.astype(np.float64))))
        for s, r in zip(streamed, replayed)
    )

    capacity = config.sink_blocks + (config.window_blocks or 0)
    short = chunks[: max(1, min(n_chunks, capacity))]
    hybrid_out, _ = streaming_run(weights, short)
    oracle_out, _ = streaming_run(
        weights, short, use_global=False, unbounded_window=True
    )
    oracle_diff = max(
        float(np.max(np.abs(h.astype(np.float64) - o.astype(np.float64))))
        for h, o in zip(hybrid_out, oracle_out)
    )

    return {
        "max_stream_replay_diff": stream_replay,
        "max_oracle_diff": oracle_diff,
        "tolerance": tolerance,
        "pass": bool(stream_replay <= tolerance and oracle_diff <= tolerance),
    }
