"""Windowed causal attention over the rolling cache.

Queries see every cached token (sink and window blocks) plus the tokens of
their own chunk up to and including themselves; the mask is purely a
comparison of absolute positions, which covers both rules at once because
cached tokens always precede the current chunk. Scores are scaled by
1/sqrt(d_head), softmax runs in float64, and the output projection is applied
to the concatenated heads before any fusion with the global-memory readout.
"""

from dataclasses import dataclass

import numpy as np

from .kernels import ContractViolation, linear, rope_rotate


@dataclass(frozen=True)
class AttentionWeightsSet:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    n_heads: int

    def __post_init__(self):
        d = self.wq.shape[0]
        for name in ("wq", "wk", "wv", "wo"):
            w = getattr(self, name)
            if w.shape != (d, d):
                raise ContractViolation(f"attention weights: {name} must be ({d},{d})")
        if self.n_heads < 1 or d % self.n_heads != 0:
            raise ContractViolation(
                f"attention weights: {self.n_heads} heads do not divide width {d}"
            )
        if self.d_head % 2 != 0:
            raise ContractViolation(
                f"attention weights: head width {self.d_head} must be even for rotation"
            )

    @property
    def d_model(self) -> int:
        return self.wq.shape[0]

    @property
    def d_head(self) -> int:
        return self.wq.shape[0] // self.n_heads


def split_heads(x: np.ndarray, n_heads: int) -> np.ndarray:
    """(n, D) -> (H, n, D/H); head h owns columns [h*dh, (h+1)*dh)."""
    n, d = x.shape
    dh = d // n_heads
    return np.ascontiguousarray(x.reshape(n, n_heads, dh).transpose(1, 0, 2))


def merge_heads(x: np.ndarray) -> np.ndarray:
    """(H, n, dh) -> (n, H*dh), inverse of split_heads."""
    h, n, dh = x.shape
    return np.ascontiguousarray(x.transpose(1, 0, 2).reshape(n, h * dh))


@dataclass(frozen=True)
class ProjectedChunk:
    q_rot: np.ndarray  # (C, D) rotated queries, for attention
    k_rot: np.ndarray  # (C, D) rotated keys, what the cache stores
    v: np.ndarray  # (C, D)
    q_pre: np.ndarray  # (C, D) pre-rotation queries, for the global memory


def project_qkv(
    x: np.ndarray,
    weights: AttentionWeightsSet,
    positions: np.ndarray,
    rope_base: float = 10000.0,
) -> ProjectedChunk:
    """QKV projections; rotation happens per head at absolute positions."""
    q_pre = linear(x, weights.wq)
    k_pre = linear(x, weights.wk)
    v = linear(x, weights.wv)
    pos = np.asarray(positions)
    if pos.shape != (x.shape[0],):
        raise ContractViolation(
            f"project_qkv: positions shape {pos.shape} != ({x.shape[0]},)"
        )

    def rotate(mat):
        heads = split_heads(mat, weights.n_heads)
        return merge_heads(rope_rotate(heads, pos, base=rope_base))

    return ProjectedChunk(q_rot=rotate(q_pre), k_rot=rotate(k_pre), v=v, q_pre=q_pre)


def _attend(q, q_positions, k, v, k_positions, weights, op_name):
    if k.shape[0] == 0:
        raise ContractViolation(f"{op_name}: empty visible set")
    if k.shape != v.shape or k.shape[1] != weights.d_model:
        raise ContractViolation(f"{op_name}: k/v shapes disagree: {k.shape} {v.shape}")
    qh = split_heads(np.asarray(q, dtype=np.float32), weights.n_heads).astype(np.float64)
    kh = split_heads(np.asarray(k, dtype=np.float32), weights.n_heads).astype(np.float64)
    vh = split_heads(np.asarray(v, dtype=np.float32), weights.n_heads).astype(np.float64)
    scale = 1.0 / np.sqrt(weights.d_head)
    scores = np.einsum("hqd,hkd->hqk", qh, kh) * scale
    visible = np.asarray(k_positions)[None, :] <= np.asarray(q_positions)[:, None]
    if not visible.any(axis=1).all():
        raise ContractViolation(f"{op_name}: a query has no visible token")
    scores = np.where(visible[None, :, :], scores, -np.inf)
    scores -= scores.max(axis=-1, keepdims=True)
    weights_hqk = np.exp(scores)
    weights_hqk /= weights_hqk.sum(axis=-1, keepdims=True)
    mixed = np.einsum("hqk,hkd->hqd", weights_hqk, vh)
    return linear(merge_heads(mixed).astype(np.float32), weights.wo)


def window_attention(
    q_rot: np.ndarray,
    q_positions: np.ndarray,
    k: np.ndarray,
    v: np.ndarray,
    k_positions: np.ndarray,
    weights: AttentionWeightsSet,
) -> np.ndarray:
    """Attention of one chunk's queries over the gathered visible set."""
    return _attend(q_rot, q_positions, k, v, k_positions, weights, "window_attention")


def full_causal_attention(
    q_rot: np.ndarray,
    k: np.ndarray,
    v: np.ndarray,
    positions: np.ndarray,
    weights: AttentionWeightsSet,
) -> np.ndarray:
    """Reference path: every token attends to the whole causal prefix."""
    return _attend(q_rot, positions, k, v, positions, weights, "full_causal_attention")
