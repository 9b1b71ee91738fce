"""Toy chunked autoregressive sampler driven by the streaming engine.

The schedule is the usual variance-preserving one: betas rise linearly,
alpha_bar is the running product of (1 - beta), and a noised sample is
sqrt(alpha_bar) * x0 + sqrt(1 - alpha_bar) * eps.

Sampling walks chunk by chunk. Each chunk starts as Gaussian noise and gets
`steps` x0-prediction passes at noise levels ascending uniformly in
alpha_bar (0.25, 0.5, 0.75, 0.9999 at the default four steps): the engine
predicts a clean chunk, which is re-noised to the next, cleaner level. All
refinement passes run against a frozen cache view; only the final prediction
is committed, so caches and memory advance exactly once per chunk no matter
how many refinement passes run. With untrained weights the output is
structured noise; the point is the plumbing, not the samples.
"""

from dataclasses import dataclass

import numpy as np

from .kernels import ContractViolation
from .model import Engine, project_in, project_out
from .weights import WeightsBundle

ALPHA_BAR_CEILING = 0.9999


@dataclass(frozen=True)
class NoiseSchedule:
    steps: int
    betas: np.ndarray  # (steps,) float64
    alpha_bar: np.ndarray  # (steps,) float64, cumulative product of 1 - beta


def make_schedule(
    steps: int, beta_start: float = 1e-4, beta_end: float = 0.02
) -> NoiseSchedule:
    if steps < 1:
        raise ContractViolation("make_schedule: steps must be >= 1")
    if not (0.0 < beta_start < 1.0 and 0.0 < beta_end < 1.0):
        raise ContractViolation("make_schedule: betas must lie in (0, 1)")
    betas = np.linspace(beta_start, beta_end, steps, dtype=np.float64)
    return NoiseSchedule(steps=steps, betas=betas, alpha_bar=np.cumprod(1.0 - betas))


def forward_noise(
    x0: np.ndarray, t: int, eps: np.ndarray, schedule: NoiseSchedule
) -> np.ndarray:
    """Noise a clean sample to schedule step t."""
    if not (0 <= t < schedule.steps):
        raise ContractViolation(f"forward_noise: step {t} outside [0, {schedule.steps})")
    x0 = np.asarray(x0, dtype=np.float32)
    eps = np.asarray(eps, dtype=np.float32)
    if x0.shape != eps.shape:
        raise ContractViolation("forward_noise: x0 and eps shapes differ")
    ab = float(schedule.alpha_bar[t])
    out = np.sqrt(ab) * x0.astype(np.float64) + np.sqrt(1.0 - ab) * eps.astype(np.float64)
    return out.astype(np.float32)


def refinement_levels(steps: int) -> np.ndarray:
    """alpha_bar levels visited noisiest-first, uniform with a clean ceiling."""
    if steps < 1:
        raise ContractViolation("refinement_levels: steps must be >= 1")
    levels = (np.arange(1, steps + 1, dtype=np.float64)) / float(steps)
    levels[-1] = min(levels[-1], ALPHA_BAR_CEILING)
    return levels


def chunked_ar_sample(
    weights: WeightsBundle, n_chunks: int, steps: int = 4, seed: int = 0
):
    """Generate n_chunks chunks autoregressively; returns (sequence, engine).

    The sequence is (n_chunks * chunk_size, io_dim) float32 and is a pure
    function of (weights, n_chunks, steps, seed).
    """
    cfg = weights.config
    if cfg.io_dim is None:
        raise ContractViolation("chunked_ar_sample: config has no io_dim")
    if n_chunks < 1:
        raise ContractViolation("chunked_ar_sample: n_chunks must be >= 1")
    levels = refinement_levels(steps)
    rng = np.random.default_rng(seed)
    engine = Engine(weights)
    shape = (cfg.chunk_size, cfg.io_dim)
    committed = []
    for _ in range(n_chunks):
        x = rng.standard_normal(shape).astype(np.float32)
        x0_hat = x
        for i, _level in enumerate(levels):
            h = engine.process_chunk(project_in(weights, x), commit=False)
            x0_hat = project_out(weights, h)
            if i + 1 < len(levels):
                ab_next = float(levels[i + 1])
                eps = rng.standard_normal(shape).astype(np.float32)
                x = (
                    np.sqrt(ab_next) * x0_hat.astype(np.float64)
                    + np.sqrt(1.0 - ab_next) * eps.astype(np.float64)
                ).astype(np.float32)
        engine.process_chunk(project_in(weights, x0_hat), commit=True)
        committed.append(x0_hat)
    return np.concatenate(committed, axis=0), engine
