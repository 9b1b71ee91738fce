"""Needle-recall task batches.

Token layout (shared with the engine's recall harness): id 0 is the query
marker and always sits at the last position; id 1 flags the needle; the
value token, drawn from [2, 18), immediately follows the flag; everything
else is filler from [18, vocab). The model answers by emitting the value
token at the query position. `distance` is query position minus flag
position, so the flag lands at length - 1 - distance.
"""

from __future__ import annotations

import numpy as np

QUERY_TOKEN = 0
NEEDLE_TOKEN = 1
VALUE_BASE = 2
N_VALUES = 16
FILLER_BASE = VALUE_BASE + N_VALUES


def make_batch(rng, vocab, length, distances, count):
    """(tokens (count, length) int64, answers (count,) int64).

    Each row draws its distance uniformly from `distances`.
    """
    if vocab <= FILLER_BASE:
        raise ValueError(f"vocab must exceed {FILLER_BASE}, got {vocab}")
    distances = np.asarray(distances, dtype=np.int64)
    if ((distances < 2) | (distances >= length)).any():
        raise ValueError(f"distances must lie in [2, {length}), got {distances}")
    tokens = rng.integers(FILLER_BASE, vocab, size=(count, length), dtype=np.int64)
    chosen = rng.choice(distances, size=count)
    answers = rng.integers(VALUE_BASE, FILLER_BASE, size=count, dtype=np.int64)
    rows = np.arange(count)
    flag_pos = length - 1 - chosen
    tokens[rows, flag_pos] = NEEDLE_TOKEN
    tokens[rows, flag_pos + 1] = answers
    tokens[:, length - 1] = QUERY_TOKEN
    return tokens, answers


def step_rng(seed, step):
    """Independent generator for one training step."""
    return np.random.default_rng([seed, 17, step])


def eval_rng(seed):
    """Generator for the fixed evaluation set."""
    return np.random.default_rng([seed, 23])
