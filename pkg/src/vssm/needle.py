"""Synthetic key-value recall tasks and a greedy evaluation loop.

Token layout: id 0 marks the query slot, id 1 marks the needle, ids
[2, 18) are the sixteen possible planted values, everything from 18 up
is filler. The needle marker sits `distance` tokens before the query
(which is always the last token) and the planted value immediately
follows the marker, so distance must be at least 2 to keep the value
from colliding with the query slot.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import ContractViolation
from .model import Engine, embed_tokens, output_logits

QUERY_TOKEN = 0
NEEDLE_TOKEN = 1
VALUE_BASE = 2
N_VALUES = 16
FILLER_BASE = VALUE_BASE + N_VALUES


@dataclass(frozen=True)
class NeedleTask:
    sequence: np.ndarray
    needle_position: int
    query_position: int
    answer: int

    @property
    def distance(self):
        return self.query_position - self.needle_position


def gen_needle_task(vocab, length, distance, seed):
    """One seeded task: filler everywhere except marker, value, query."""
    if vocab <= FILLER_BASE:
        raise ContractViolation(
            f"vocab must exceed {FILLER_BASE} to leave room for filler, got {vocab}"
        )
    if length < 4:
        raise ContractViolation(f"length must be at least 4, got {length}")
    if not 2 <= distance < length:
        raise ContractViolation(
            f"distance must lie in [2, length), got {distance} for length {length}"
        )
    rng = np.random.default_rng(seed)
    sequence = rng.integers(FILLER_BASE, vocab, size=length, dtype=np.int64)
    query_position = length - 1
    needle_position = query_position - distance
    value = int(rng.integers(VALUE_BASE, FILLER_BASE))
    sequence[needle_position] = NEEDLE_TOKEN
    sequence[needle_position + 1] = value
    sequence[query_position] = QUERY_TOKEN
    return NeedleTask(
        sequence=sequence,
        needle_position=needle_position,
        query_position=query_position,
        answer=value,
    )


def gen_tasks(vocab, length, distances, count, seed):
    """count tasks cycling through distances, each task on its own subseed."""
    distances = list(distances)
    if not distances:
        raise ContractViolation("distances must be non-empty")
    seeds = np.random.SeedSequence(seed).spawn(count)
    return [
        gen_needle_task(vocab, length, distances[i % len(distances)], seeds[i])
        for i in range(count)
    ]


def run_recall_eval(weights, tasks, window_only=False):
    """Greedy argmax at the query position, bucketed by needle distance.

    window_only evaluates the ablation with the memory gate forced to 0.
    Returns {"overall", "by_distance", "count"}.
    """
    config = weights.config
    if config.vocab_size is None:
        raise ContractViolation("recall eval needs a vocab_size model")
    if not tasks:
        raise ContractViolation("no tasks given")

    hits = {}
    totals = {}
    for task in tasks:
        seq = task.sequence
        if seq.max() >= config.vocab_size or seq.min() < 0:
            raise ContractViolation(
                f"task tokens exceed model vocab {config.vocab_size}"
            )
        if len(seq) % config.chunk_size != 0:
            raise ContractViolation(
                f"task length {len(seq)} is not a multiple of "
                f"chunk_size {config.chunk_size}"
            )
        engine = Engine(weights, force_gamma_zero=window_only)
        x = embed_tokens(weights, seq)
        n_chunks = len(seq) // config.chunk_size
        h_last = None
        for t in range(n_chunks):
            h_last = engine.process_chunk(
                x[t * config.chunk_size : (t + 1) * config.chunk_size]
            )
        logits = output_logits(weights, h_last)
        pred = int(np.argmax(logits[task.query_position % config.chunk_size]))

        d = task.distance
        totals[d] = totals.get(d, 0) + 1
        hits[d] = hits.get(d, 0) + (pred == task.answer)

    by_distance = {d: hits[d] / totals[d] for d in sorted(totals)}
    overall = sum(hits.values()) / sum(totals.values())
    return {"overall": overall, "by_distance": by_distance, "count": len(tasks)}
