"""Toy needle-recall training for the hybrid stack.

The task is deliberately small: learn to answer, at the final query
position, which value token followed the needle flag planted earlier in
the sequence. Distances beyond the attention window force the answer
through the compressed memory path, which is the behavior the training
exists to demonstrate. The ablation trains and evaluates the identical
architecture with the memory blend gate pinned to zero, so any accuracy
gap at long distance is attributable to the global path.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np
import torch

from .data import FILLER_BASE, eval_rng, make_batch, step_rng
from .forward import embed, forward_stream, init_params, logits
from .meta import ModelMeta


@dataclass(frozen=True)
class TrainConfig:
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    sink_blocks: int = 1
    window_blocks: int = 8
    chunk_size: int = 4
    seq_length: int = 144
    vocab_size: int = 64
    distances: tuple = (16, 64, 128)
    lr: float = 3e-4
    steps: int = 5000
    batch_size: int = 8
    eval_count: int = 400
    eval_distance: int | None = None
    eval_every: int = 500
    seed: int = 0
    window_only: bool = False

    def __post_init__(self):
        for name in ("steps",):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("batch_size", "eval_count", "eval_every", "seq_length", "lr"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.seq_length % self.chunk_size != 0:
            raise ValueError("seq_length must be a multiple of chunk_size")
        if self.vocab_size <= FILLER_BASE:
            raise ValueError(f"vocab_size must exceed {FILLER_BASE}")
        if not self.distances:
            raise ValueError("distances must be non-empty")
        span = self.window_blocks * self.chunk_size
        if max(self.distances) <= span:
            raise ValueError(
                f"distances must include a value beyond the window span {span}"
            )
        if any(d < 2 or d >= self.seq_length for d in self.distances):
            raise ValueError("each distance must lie in [2, seq_length)")

    @property
    def window_span(self):
        return self.window_blocks * self.chunk_size

    @property
    def n_chunks(self):
        return self.seq_length // self.chunk_size

    @property
    def meta(self):
        return ModelMeta(
            d_model=self.d_model,
            n_heads=self.n_heads,
            n_layers=self.n_layers,
            sink_blocks=self.sink_blocks,
            window_blocks=self.window_blocks,
            chunk_size=self.chunk_size,
            horizon=self.n_chunks,
            vocab_size=self.vocab_size,
            seed=self.seed,
        )

    def resolved_eval_distance(self):
        return self.eval_distance if self.eval_distance is not None else max(self.distances)


@dataclass
class TrainResult:
    params: dict
    curves: list = field(default_factory=list)  # rows: (step, loss, eval_acc | None)
    final_acc: float = 0.0
    config: TrainConfig | None = None


def _query_logits(params, meta, tokens, window_only):
    """Forward a (B, T) token batch; returns logits at the final position."""
    x = embed(params, torch.from_numpy(tokens))
    chunks = list(torch.split(x, meta.chunk_size, dim=1))
    outs = forward_stream(params, meta, chunks, window_only=window_only)
    return logits(params, outs[-1][:, -1, :])


def evaluate(params, config, tokens, answers):
    """Argmax accuracy at the query position over a fixed task set."""
    meta = config.meta
    correct = 0
    with torch.no_grad():
        for start in range(0, tokens.shape[0], 64):
            tb = tokens[start : start + 64]
            ab = answers[start : start + 64]
            out = _query_logits(params, meta, tb, config.window_only)
            correct += int((out.argmax(dim=-1).numpy() == ab).sum())
    return correct / tokens.shape[0]


def train_toy(config):
    """Train from scratch; returns TrainResult(params, curves, final_acc).

    Deterministic for a fixed config: parameters initialize from the config
    seed, every batch comes from a counter-keyed generator, and compute is
    pinned to one thread so reduction order (and therefore the loss
    trajectory and final accuracy) reproduces exactly.
    """
    torch.set_num_threads(1)
    meta = config.meta
    params = init_params(meta, requires_grad=True)
    trainable = list(params.values())
    opt = torch.optim.Adam(trainable, lr=config.lr)

    eval_tokens, eval_answers = make_batch(
        eval_rng(config.seed),
        config.vocab_size,
        config.seq_length,
        [config.resolved_eval_distance()],
        config.eval_count,
    )

    curves = []
    for step in range(config.steps):
        tokens, answers = make_batch(
            step_rng(config.seed, step),
            config.vocab_size,
            config.seq_length,
            config.distances,
            config.batch_size,
        )
        out = _query_logits(params, meta, tokens, config.window_only)
        loss = torch.nn.functional.cross_entropy(out, torch.from_numpy(answers))
        if not math.isfinite(loss.item()):
            raise RuntimeError(
                f"training diverged: non-finite loss {loss.item()} at step {step} "
                f"(lr={config.lr}, seed={config.seed})"
            )
        opt.zero_grad()
        loss.backward()
        torch.nn.utils.clip_grad_norm_(trainable, 1.0)
        opt.step()
        acc = None
        if (step + 1) % config.eval_every == 0 or step + 1 == config.steps:
            acc = evaluate(params, config, eval_tokens, eval_answers)
        curves.append((step + 1, float(loss.item()), acc))

    final_acc = evaluate(params, config, eval_tokens, eval_answers)
    if config.steps == 0:
        curves.append((0, float("nan"), final_acc))
    return TrainResult(params=params, curves=curves, final_acc=final_acc, config=config)


def write_curves_csv(curves, path):
    """Persist (step, loss, eval_acc) rows; eval_acc blank when absent."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss", "eval_acc"])
        for step, loss, acc in curves:
            writer.writerow([step, f"{loss:.6f}", "" if acc is None else f"{acc:.4f}"])
    return path


def ablation_config(config):
    """The same run with the memory path silenced."""
    return replace(config, window_only=True)
