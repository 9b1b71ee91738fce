"""Position-aware routing between local attention and the global memory.

The blend weight depends on how deep into the stream the current chunk sits:
gamma = sigmoid(w * log(rho) + b) with rho the clamped fraction of the
horizon consumed. Early in the stream log(rho) is very negative, so a
default-initialized router (w=1, b=0) all but silences the global path and
ramps it in as evictions accumulate; at the horizon gamma settles at
sigmoid(b). w and b are per-dimension, so routing can differ per channel.
"""

from dataclasses import dataclass

import numpy as np

from .kernels import ContractViolation, sigmoid


@dataclass(frozen=True)
class RouterParams:
    w: np.ndarray
    b: np.ndarray
    horizon: int

    def __post_init__(self):
        if self.w.shape != self.b.shape or self.w.ndim != 1:
            raise ContractViolation("RouterParams: w and b must be equal-length vectors")
        if self.horizon < 1:
            raise ContractViolation("RouterParams: horizon must be >= 1")


def position_ratio(t: int, horizon: int) -> float:
    """(t + 1) / horizon for chunk index t, clamped to 1 past the horizon."""
    if t < 0:
        raise ContractViolation(f"position_ratio: chunk index {t} is negative")
    if horizon < 1:
        raise ContractViolation(f"position_ratio: horizon {horizon} must be >= 1")
    return min(float(t + 1) / float(horizon), 1.0)


def memory_gate(ratio: float, params: RouterParams) -> np.ndarray:
    """Per-dimension blend weight gamma in (0, 1) for one chunk."""
    if not (0.0 < ratio <= 1.0):
        raise ContractViolation(f"memory_gate: ratio {ratio} outside (0, 1]")
    z = params.w.astype(np.float64) * np.log(ratio) + params.b.astype(np.float64)
    return sigmoid(z.astype(np.float32))


def fuse(h_local: np.ndarray, h_global: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """h_local + gamma * h_global, gamma broadcast over rows."""
    if h_local.shape != h_global.shape or gamma.shape != (h_local.shape[-1],):
        raise ContractViolation(
            f"fuse: shapes disagree: {h_local.shape} {h_global.shape} {gamma.shape}"
        )
    out = h_local.astype(np.float64) + gamma.astype(np.float64) * h_global.astype(
        np.float64
    )
    return out.astype(np.float32)
