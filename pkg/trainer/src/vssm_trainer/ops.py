"""Differentiable torch mirrors of the engine's block-level operations.

Every function here is a pure tensor-in/tensor-out map that autograd can
differentiate, computing in whatever dtype the inputs carry (float32 for
training, float64 for gradient checks and the parity reference). Shapes
follow the engine's flat layout: model-width vectors of size D split into
n_heads contiguous slices of width d_head = D / n_heads.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F

ROPE_BASE = 10000.0
RMS_EPS = 1e-6
KEY_NORM_FLOOR = 1e-8


def rmsnorm(x, gain, eps=RMS_EPS):
    ms = (x * x).mean(dim=-1, keepdim=True)
    return x / torch.sqrt(ms + eps) * gain


def swish(x):
    return x * torch.sigmoid(x)


def rope(x, positions, base=ROPE_BASE):
    """Rotary embedding over the last axis; pairs (2i, 2i+1) rotate together.

    x: (..., n, d) with d even; positions: (n,) absolute indices.
    """
    d = x.shape[-1]
    half = d // 2
    inv_freq = base ** (
        -2.0 * torch.arange(half, dtype=torch.float64, device=x.device) / d
    )
    ang = positions.to(torch.float64)[..., None] * inv_freq
    c = torch.cos(ang).to(x.dtype)
    s = torch.sin(ang).to(x.dtype)
    even = x[..., 0::2]
    odd = x[..., 1::2]
    out = torch.stack((even * c - odd * s, even * s + odd * c), dim=-1)
    return out.reshape(*out.shape[:-2], d)


def split_heads(x, n_heads):
    """(..., n, D) -> (..., H, n, dh); head h owns columns [h*dh, (h+1)*dh)."""
    *lead, n, d = x.shape
    return x.reshape(*lead, n, n_heads, d // n_heads).transpose(-3, -2)


def merge_heads(x):
    """(..., H, n, dh) -> (..., n, H*dh)."""
    *lead, h, n, dh = x.shape
    return x.transpose(-3, -2).reshape(*lead, n, h * dh)


def attend(q_rot, q_positions, k, v, k_positions, wo, n_heads):
    """Causal attention of q over the visible set, then output projection.

    q_rot: (..., nq, D); k, v: (..., nk, D); positions are 1-D integer
    tensors. Visibility is k_position <= q_position.
    """
    d_head = q_rot.shape[-1] // n_heads
    qh = split_heads(q_rot, n_heads)
    kh = split_heads(k, n_heads)
    vh = split_heads(v, n_heads)
    scores = qh @ kh.transpose(-1, -2) * (1.0 / math.sqrt(d_head))
    visible = k_positions[None, :] <= q_positions[:, None]
    scores = scores.masked_fill(~visible, float("-inf"))
    scores = scores - scores.max(dim=-1, keepdim=True).values
    w = torch.exp(scores)
    w = w / w.sum(dim=-1, keepdim=True)
    return merge_heads(w @ vh) @ wo


def compute_gates(h_in, w_alpha, w_beta, a_log, b_bias):
    """Decay gate alpha < 0 and injection gate beta in (0, 1), both (..., D)."""
    alpha = -torch.exp(a_log) * F.softplus(h_in @ w_alpha + b_bias)
    beta = torch.sigmoid(h_in @ w_beta)
    return alpha, beta


def memory_gate(rho, w, b):
    """Per-dimension blend weight gamma = sigmoid(w * log(rho) + b)."""
    if not torch.is_tensor(rho):
        rho = torch.tensor(float(rho), dtype=w.dtype, device=w.device)
    return torch.sigmoid(w * torch.log(rho) + b)


def fuse(h_local, h_global, gamma):
    return h_local + gamma * h_global


def _heads_flat(vec, n_heads):
    """(..., D) -> (..., H, dh)."""
    *lead, d = vec.shape
    return vec.reshape(*lead, n_heads, d // n_heads)


def update_memory(m, k, v, alpha, beta):
    """One gated delta-rule step on the per-head memory.

    m: (..., H, dh, dh) with rows indexed by key dimensions; k, v, alpha,
    beta: flat (..., D) summaries. Returns the new memory.
    """
    n_heads = m.shape[-3]
    kh = _heads_flat(k, n_heads)
    vh = _heads_flat(v, n_heads)
    ah = _heads_flat(alpha, n_heads)
    bh = _heads_flat(beta, n_heads)
    norms = torch.clamp(kh.norm(dim=-1, keepdim=True), min=KEY_NORM_FLOOR)
    khat = kh / norms
    v_pred = (khat.unsqueeze(-2) @ m).squeeze(-2)
    v_new = bh * (vh - v_pred)
    return torch.exp(ah).unsqueeze(-1) * m + khat.unsqueeze(-1) * v_new.unsqueeze(-2)


def readout(m, q):
    """Associative read r = q^T M per head: (..., n, D) query -> (..., n, D)."""
    n_heads = m.shape[-3]
    qh = split_heads(q, n_heads)
    r = qh @ m
    return merge_heads(r)


def retrieve(m, q_pre, h_in, w_g, bias_g, rms_gain):
    """Gated memory readout: swish((h_in @ w_g + bias_g) * rmsnorm(q^T M))."""
    g = h_in @ w_g + bias_g
    return retrieve_gated(m, q_pre, g, rms_gain)


def retrieve_gated(m, q_pre, g, rms_gain):
    u = rmsnorm(readout(m, q_pre), rms_gain)
    return swish(g * u)


def ffn(h_mid, norm2_gain, w1, w2):
    return swish(rmsnorm(h_mid, norm2_gain) @ w1) @ w2


def block_forward(
    h_in,
    memory,
    cache_k,
    cache_v,
    cache_positions,
    positions,
    rho,
    n_heads,
    norm1_gain,
    wq,
    wk,
    wv,
    wo,
    w_alpha,
    w_beta,
    a_log,
    b_bias,
    wg,
    bias_g,
    rms_gain,
    router_w,
    router_b,
    norm2_gain,
    ffn_w1,
    ffn_w2,
):
    """One residual block over a frozen cache view (no eviction, no fold).

    h_in: (n, D) chunk at absolute `positions`; cache_k/cache_v hold the
    already-visible tokens at `cache_positions`. The chunk's own keys are
    appended to the visible set. Returns h_out (n, D).
    """
    xn = rmsnorm(h_in, norm1_gain)
    q_pre = xn @ wq
    k_pre = xn @ wk
    v = xn @ wv
    q_rot = merge_heads(rope(split_heads(q_pre, n_heads), positions))
    k_rot = merge_heads(rope(split_heads(k_pre, n_heads), positions))
    h_global = retrieve(memory, q_pre, xn, wg, bias_g, rms_gain)
    k_vis = torch.cat([cache_k, k_rot], dim=-2)
    v_vis = torch.cat([cache_v, v], dim=-2)
    pos_vis = torch.cat([cache_positions, positions])
    h_local = attend(q_rot, positions, k_vis, v_vis, pos_vis, wo, n_heads)
    gamma = memory_gate(rho, router_w, router_b)
    h_mid = h_in + fuse(h_local, h_global, gamma)
    return h_mid + ffn(h_mid, norm2_gain, ffn_w1, ffn_w2)
