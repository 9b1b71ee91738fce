"""Compressed global memory: a per-head associative state updated by a

gated delta rule. Each head h keeps a d_head x d_head matrix M_h whose rows
are indexed by key dimensions. For one evicted-block summary (k, v, alpha,
beta), sliced per head:

    khat   = k / max(|k|, 1e-8)
    v_pred = khat^T M          (what the memory already believes about khat)
    v_new  = beta * (v - v_pred)
    M'     = diag(exp(alpha)) M + khat v_new^T

Only the unpredicted component of v is written, scaled by the injection gate;
exp(alpha) < 1 decays every row, so the state stays bounded under arbitrary
input streams. Retrieval reads r = q^T M with the pre-rotation query, then
normalizes and gates the result.
"""

from dataclasses import dataclass

import numpy as np

from .cache import BlockEntry
from .kernels import ContractViolation, linear, rmsnorm, sigmoid, softplus, swish


@dataclass(frozen=True)
class GateParams:
    """Decay/injection gate parameters.

    alpha(h) = -exp(a_log) * softplus(h @ w_alpha + b_bias)  (strictly < 0)
    beta(h)  = sigmoid(h @ w_beta)                           (in (0, 1))
    """

    w_alpha: np.ndarray
    w_beta: np.ndarray
    a_log: np.ndarray
    b_bias: np.ndarray


@dataclass(frozen=True)
class OutputGateParams:
    w_g: np.ndarray
    bias_g: np.ndarray
    rms_gain: np.ndarray


@dataclass
class EvictedSummary:
    """Mean over one evicted block's tokens, length d_model each."""

    k: np.ndarray
    v: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray


class MemoryState:
    """Per-head memory matrices plus an update counter."""

    def __init__(self, m: np.ndarray, updates_applied: int = 0):
        if m.ndim != 3 or m.shape[1] != m.shape[2]:
            raise ContractViolation(f"MemoryState: m must be (H, dh, dh), got {m.shape}")
        self.m = np.asarray(m, dtype=np.float32)
        self.updates_applied = updates_applied

    @classmethod
    def zeros(cls, n_heads: int, d_head: int) -> "MemoryState":
        return cls(np.zeros((n_heads, d_head, d_head), dtype=np.float32))

    @property
    def n_heads(self) -> int:
        return self.m.shape[0]

    @property
    def d_head(self) -> int:
        return self.m.shape[1]

    @property
    def d_model(self) -> int:
        return self.n_heads * self.d_head

    def copy(self) -> "MemoryState":
        return MemoryState(self.m.copy(), self.updates_applied)

    def zero_(self):
        self.m[:] = 0.0
        self.updates_applied = 0


def compute_gates(h_in: np.ndarray, params: GateParams):
    """Per-token decay and injection gates, both (C, d_model)."""
    alpha = -np.exp(params.a_log.astype(np.float64)) * softplus(
        linear(h_in, params.w_alpha, params.b_bias)
    ).astype(np.float64)
    beta = sigmoid(linear(h_in, params.w_beta))
    return alpha.astype(np.float32), beta


def summarize_evicted(entry: BlockEntry) -> EvictedSummary:
    """Mean-pool an evicted block into one token-like summary."""
    return EvictedSummary(
        k=entry.k.astype(np.float64).mean(axis=0).astype(np.float32),
        v=entry.v.astype(np.float64).mean(axis=0).astype(np.float32),
        alpha=entry.alpha.astype(np.float64).mean(axis=0).astype(np.float32),
        beta=entry.beta.astype(np.float64).mean(axis=0).astype(np.float32),
    )


def _per_head(state: MemoryState, vec: np.ndarray, name: str) -> np.ndarray:
    vec = np.asarray(vec, dtype=np.float32)
    if vec.shape != (state.d_model,):
        raise ContractViolation(
            f"update_memory: {name} has shape {vec.shape}, expected ({state.d_model},)"
        )
    return vec.reshape(state.n_heads, state.d_head).astype(np.float64)


def update_memory(state: MemoryState, summary: EvictedSummary):
    """Apply one evicted-block summary to the memory, in place."""
    k = _per_head(state, summary.k, "k")
    v = _per_head(state, summary.v, "v")
    alpha = _per_head(state, summary.alpha, "alpha")
    beta = _per_head(state, summary.beta, "beta")
    norms = np.maximum(np.linalg.norm(k, axis=1, keepdims=True), 1e-8)
    khat = k / norms
    m = state.m.astype(np.float64)
    v_pred = np.einsum("hd,hde->he", khat, m)
    v_new = beta * (v - v_pred)
    m = np.exp(alpha)[:, :, None] * m + khat[:, :, None] * v_new[:, None, :]
    if not np.isfinite(m).all():
        raise ContractViolation("update_memory: state became non-finite")
    state.m = m.astype(np.float32)
    state.updates_applied += 1


def readout(state: MemoryState, q: np.ndarray) -> np.ndarray:
    """Raw associative readout r = q^T M per head, (n, d_model)."""
    q = np.asarray(q, dtype=np.float32)
    if q.ndim != 2 or q.shape[1] != state.d_model:
        raise ContractViolation(
            f"readout: q has shape {q.shape}, expected (n, {state.d_model})"
        )
    qh = q.reshape(q.shape[0], state.n_heads, state.d_head).astype(np.float64)
    r = np.einsum("nhd,hde->nhe", qh, state.m.astype(np.float64))
    return r.reshape(q.shape[0], state.d_model).astype(np.float32)


def retrieve(
    state: MemoryState,
    q_pre: np.ndarray,
    h_in: np.ndarray,
    params: OutputGateParams,
) -> np.ndarray:
    """Gated memory readout for one chunk.

    Uses the pre-rotation queries; the output gate is a linear function of
    the block input, and the readout is RMS-normalized before gating.
    """
    r = readout(state, q_pre)
    u = rmsnorm(r, params.rms_gain, eps=1e-6)
    g = linear(h_in, params.w_g, params.bias_g)
    prod = (g.astype(np.float64) * u.astype(np.float64)).astype(np.float32)
    return swish(prod)
