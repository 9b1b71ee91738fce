"""Streaming forward passes over the block stack.

Two paths share the same cache/eviction schedule:

- `forward_stream`: batched, fully differentiable, single dtype. This is
  what training uses; gradients flow through the rolling window, the
  eviction summaries, and the delta-rule memory recurrence.
- `reference_forward`: unbatched float64 with explicit float32 rounding at
  every operation boundary, matching the engine's storage convention so the
  two implementations agree to float32 resolution on identical inputs.

The cache discipline: the first `sink_blocks` chunks are pinned forever;
later chunks enter a FIFO window of `window_blocks`. Appending happens
before attention (a chunk sees itself), and whatever the append evicts is
mean-pooled and folded into the memory only after the block finishes, so
the memory a chunk reads covers exactly the blocks evicted strictly
before it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from . import ops
from .meta import ModelMeta, canonical_shapes

PROJ_STD = 0.02
A_LOG_INIT = -3.0


def init_params(meta, *, a_log_init=A_LOG_INIT, dtype=torch.float32, requires_grad=False):
    """Fresh parameter dict with the canonical names and shapes.

    Matrices draw from N(0, 0.02^2) with one generator seeded by meta.seed;
    vectors start neutral (gains and router slope at one, biases and gate
    offsets at zero), except the decay magnitude `gates.A`, which starts at
    `a_log_init` so the memory begins in a slow-decay regime that keeps
    long-range traces alive for the optimizer to find.
    """
    rng = np.random.default_rng(meta.seed)
    params = {}
    for name, shape in canonical_shapes(meta):
        if len(shape) == 2:
            arr = rng.normal(0.0, PROJ_STD, size=shape).astype(np.float32)
        elif name.endswith((".gain", ".rms_gain", "router.w")):
            arr = np.ones(shape, dtype=np.float32)
        elif name.endswith("gates.A"):
            arr = np.full(shape, a_log_init, dtype=np.float32)
        else:
            arr = np.zeros(shape, dtype=np.float32)
        t = torch.from_numpy(arr).to(dtype)
        t.requires_grad_(requires_grad)
        params[name] = t
    return params


def params_from_arrays(arrays, dtype=torch.float32):
    """Interchange arrays -> torch parameter dict (values copied)."""
    return {k: torch.from_numpy(np.ascontiguousarray(v)).to(dtype) for k, v in arrays.items()}


@dataclass
class _Block:
    index: int
    k: torch.Tensor
    v: torch.Tensor
    positions: torch.Tensor
    summary: tuple | None = None  # (k, v, alpha, beta) means, set for window blocks


@dataclass
class _LayerState:
    sink: list = field(default_factory=list)
    window: list = field(default_factory=list)
    memory: torch.Tensor | None = None


def _append_block(state, meta, block):
    """FIFO append honoring the sink; returns evicted blocks."""
    if block.index < meta.sink_blocks:
        state.sink.append(block)
        return []
    state.window.append(block)
    evicted = []
    while len(state.window) > meta.window_blocks:
        evicted.append(state.window.pop(0))
    return evicted


def _visible(state):
    blocks = state.sink + state.window
    k = torch.cat([b.k for b in blocks], dim=-2)
    v = torch.cat([b.v for b in blocks], dim=-2)
    pos = torch.cat([b.positions for b in blocks])
    return k, v, pos


def _position_ratio(t, horizon):
    return min(float(t + 1) / float(horizon), 1.0)


def forward_stream(params, meta, chunks, *, window_only=False):
    """Run chunks (each (B, C, D) or (C, D)) through the stack.

    Returns the final layer's output per chunk, same shape as the inputs.
    With window_only=True the memory path is skipped entirely, which equals
    forcing the blend gate gamma to zero.
    """
    chunks = list(chunks)
    if not chunks:
        return []
    sample = chunks[0]
    dtype = sample.dtype
    d = meta.d_model
    heads = meta.n_heads
    lead = sample.shape[:-2]

    layer_p = []
    for i in range(meta.n_layers):
        p = {k[len(f"layer{i}.") :]: v for k, v in params.items() if k.startswith(f"layer{i}.")}
        mats = [p["attn.wq"], p["attn.wk"], p["attn.wv"]]
        if not window_only:
            mats += [p["gates.w_alpha"], p["gates.w_beta"], p["outgate.wg"]]
        p["_cat"] = torch.cat(mats, dim=1)
        layer_p.append(p)

    states = [_LayerState() for _ in range(meta.n_layers)]
    if not window_only:
        zeros = torch.zeros(*lead, heads, meta.d_head, meta.d_head, dtype=dtype)
        for s in states:
            s.memory = zeros.clone()

    outputs = []
    for t, x in enumerate(chunks):
        c = x.shape[-2]
        positions = torch.arange(t * meta.chunk_size, t * meta.chunk_size + c)
        rho = _position_ratio(t, meta.horizon)
        h = x
        for p, s in zip(layer_p, states):
            xn = ops.rmsnorm(h, p["norm1.gain"])
            proj = xn @ p["_cat"]
            q_pre, k_pre, v = proj[..., :d], proj[..., d : 2 * d], proj[..., 2 * d : 3 * d]
            q_rot = ops.merge_heads(ops.rope(ops.split_heads(q_pre, heads), positions))
            k_rot = ops.merge_heads(ops.rope(ops.split_heads(k_pre, heads), positions))
            if window_only:
                summary = None
                h_global = None
            else:
                a_lin = proj[..., 3 * d : 4 * d] + p["gates.B"]
                alpha = -torch.exp(p["gates.A"]) * torch.nn.functional.softplus(a_lin)
                beta = torch.sigmoid(proj[..., 4 * d : 5 * d])
                g = proj[..., 5 * d :] + p["outgate.bias"]
                h_global = ops.retrieve_gated(s.memory, q_pre, g, p["outgate.rms_gain"])
                summary = (
                    k_rot.mean(dim=-2),
                    v.mean(dim=-2),
                    alpha.mean(dim=-2),
                    beta.mean(dim=-2),
                )
            evicted = _append_block(
                s, meta, _Block(index=t, k=k_rot, v=v, positions=positions, summary=summary)
            )
            k_vis, v_vis, pos_vis = _visible(s)
            h_local = ops.attend(q_rot, positions, k_vis, v_vis, pos_vis, p["attn.wo"], heads)
            if window_only:
                h_mid = h + h_local
            else:
                gamma = ops.memory_gate(rho, p["router.w"], p["router.b"])
                h_mid = h + ops.fuse(h_local, h_global, gamma)
            h = h_mid + ops.ffn(h_mid, p["norm2.gain"], p["ffn.w1"], p["ffn.w2"])
            if not window_only:
                for entry in evicted:
                    s.memory = ops.update_memory(s.memory, *entry.summary)
        outputs.append(h)
    return outputs


def embed(params, tokens):
    """Token ids (B, T) -> embedding rows (B, T, D)."""
    return params["embed.weight"][tokens]


def logits(params, h):
    """Final norm then vocabulary projection."""
    return ops.rmsnorm(h, params["final_norm.gain"]) @ params["head.weight"]


# --- float32-faithful reference ------------------------------------------


def _q(x):
    """Round to float32 and come back: one storage boundary of the engine."""
    return x.to(torch.float32).to(torch.float64)


def reference_forward(weights, meta, chunks, *, window_only=False):
    """Unbatched mirror of the engine with float32 rounding at op boundaries.

    weights: {name: float32 array} as read from an interchange manifest.
    chunks: iterable of (C, D) float arrays. Returns one list per chunk of
    every layer's output, as float32 arrays in layer order.
    """
    meta = meta if isinstance(meta, ModelMeta) else ModelMeta(**meta)
    expected = dict(canonical_shapes(meta))
    for name, shape in expected.items():
        if name not in weights:
            raise ValueError(f"weights: missing canonical name {name!r}")
        if tuple(weights[name].shape) != shape:
            raise ValueError(
                f"weights: {name} has shape {tuple(weights[name].shape)}, expected {shape}"
            )
    extra = set(weights) - set(expected)
    if extra:
        raise ValueError(f"weights: unexpected name {sorted(extra)[0]!r}")

    p64 = {k: torch.from_numpy(np.asarray(v)).to(torch.float64) for k, v in weights.items()}
    d = meta.d_model
    heads = meta.n_heads
    states = [_LayerState() for _ in range(meta.n_layers)]
    for s in states:
        s.memory = torch.zeros(heads, meta.d_head, meta.d_head, dtype=torch.float64)

    all_outputs = []
    for t, x in enumerate(chunks):
        x = torch.from_numpy(np.asarray(x, dtype=np.float32)).to(torch.float64)
        if x.shape != (meta.chunk_size, d):
            raise ValueError(f"chunk {t} has shape {tuple(x.shape)}")
        positions = torch.arange(t * meta.chunk_size, (t + 1) * meta.chunk_size)
        rho = _position_ratio(t, meta.horizon)
        h = x
        per_layer = []
        for i, s in enumerate(states):
            lp = f"layer{i}."
            h = _reference_block(p64, lp, s, meta, h, positions, t, rho, window_only)
            per_layer.append(h.to(torch.float32).numpy())
        all_outputs.append(per_layer)
    return all_outputs


def _reference_block(p, lp, s, meta, h_in, positions, t, rho, window_only):
    heads = meta.n_heads
    xn = _q(ops.rmsnorm(h_in, p[lp + "norm1.gain"]))
    q_pre = _q(xn @ p[lp + "attn.wq"])
    k_pre = _q(xn @ p[lp + "attn.wk"])
    v = _q(xn @ p[lp + "attn.wv"])
    q_rot = _q(ops.merge_heads(ops.rope(ops.split_heads(q_pre, heads), positions)))
    k_rot = _q(ops.merge_heads(ops.rope(ops.split_heads(k_pre, heads), positions)))

    a_lin = _q(xn @ p[lp + "gates.w_alpha"] + p[lp + "gates.B"])
    alpha = _q(-torch.exp(p[lp + "gates.A"]) * _q(torch.nn.functional.softplus(a_lin)))
    beta = _q(torch.sigmoid(_q(xn @ p[lp + "gates.w_beta"])))

    if not window_only:
        r = _q(ops.readout(s.memory, q_pre))
        u = _q(ops.rmsnorm(r, p[lp + "outgate.rms_gain"]))
        g = _q(xn @ p[lp + "outgate.wg"] + p[lp + "outgate.bias"])
        h_global = _q(ops.swish(_q(g * u)))

    summary = (
        _q(k_rot.mean(dim=0)),
        _q(v.mean(dim=0)),
        _q(alpha.mean(dim=0)),
        _q(beta.mean(dim=0)),
    )
    evicted = _append_block(
        s, meta, _Block(index=t, k=k_rot, v=v, positions=positions, summary=summary)
    )
    k_vis, v_vis, pos_vis = _visible(s)

    qh = ops.split_heads(q_rot, heads)
    kh = ops.split_heads(k_vis, heads)
    vh = ops.split_heads(v_vis, heads)
    scores = qh @ kh.transpose(-1, -2) * (1.0 / np.sqrt(meta.d_head))
    visible = pos_vis[None, :] <= positions[:, None]
    scores = scores.masked_fill(~visible, float("-inf"))
    scores = scores - scores.max(dim=-1, keepdim=True).values
    w = torch.exp(scores)
    w = w / w.sum(dim=-1, keepdim=True)
    mixed = _q(ops.merge_heads(w @ vh))
    h_local = _q(mixed @ p[lp + "attn.wo"])

    if window_only:
        h_fused = h_local
    else:
        z = _q(p[lp + "router.w"] * np.log(rho) + p[lp + "router.b"])
        gamma = _q(torch.sigmoid(z))
        h_fused = _q(h_local + gamma * h_global)
    h_mid = _q(h_in + h_fused)
    n2 = _q(ops.rmsnorm(h_mid, p[lp + "norm2.gain"]))
    f1 = _q(n2 @ p[lp + "ffn.w1"])
    sw = _q(ops.swish(f1))
    ff = _q(sw @ p[lp + "ffn.w2"])
    h_out = _q(h_mid + ff)

    if not window_only:
        for entry in evicted:
            s.memory = _q(ops.update_memory(s.memory, *entry.summary))
    return h_out
