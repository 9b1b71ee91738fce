"""Finite-difference validation of the autograd gradients.

For an op f and a random point, form the scalar L(x) = <f(x), r> with a
fixed random readout r. For each input tensor, compare the autograd
directional derivative <dL/dx, d> against the central difference
(L(x + eps*d) - L(x - eps*d)) / (2 eps) along a random unit direction d.
The reported figure is the worst relative error over all inputs, with
|fd - ad| measured against max(|fd|, |ad|, 1e-8).
"""

from __future__ import annotations

import zlib

import numpy as np
import torch

from . import ops

EPS_DEFAULT = 1e-3


def _unit_like(rng, t):
    d = np.asarray(rng.normal(size=tuple(t.shape)))
    norm = np.linalg.norm(d)
    if norm == 0.0:
        d = np.ones_like(d)
        norm = np.linalg.norm(d)
    return torch.from_numpy(np.asarray(d / norm))


def directional_gradcheck(fn, inputs, eps=EPS_DEFAULT, seed=0):
    """Max relative error between autograd and central differences.

    fn maps the input tensors (float64) to one tensor or a tuple of them;
    every entry of `inputs` is treated as differentiable.
    """
    rng = np.random.default_rng([seed, 101])
    inputs = [t.detach().clone().to(torch.float64) for t in inputs]

    def as_tuple(out):
        return out if isinstance(out, tuple) else (out,)

    readouts = None

    def scalar_loss(xs):
        nonlocal readouts
        outs = as_tuple(fn(*xs))
        if readouts is None:
            readouts = [_unit_like(rng, o) for o in outs]
        return sum((o * r).sum() for o, r in zip(outs, readouts))

    leaves = [t.clone().requires_grad_(True) for t in inputs]
    loss = scalar_loss(leaves)
    grads = torch.autograd.grad(loss, leaves, allow_unused=True)

    worst = 0.0
    for i, base in enumerate(inputs):
        direction = _unit_like(rng, base)
        grad = grads[i]
        ad = 0.0 if grad is None else float((grad * direction).sum())
        plus = [t.clone() for t in inputs]
        minus = [t.clone() for t in inputs]
        plus[i] = base + eps * direction
        minus[i] = base - eps * direction
        with torch.no_grad():
            fd = float((scalar_loss(plus) - scalar_loss(minus)) / (2.0 * eps))
        rel = abs(fd - ad) / max(abs(fd), abs(ad), 1e-8)
        worst = max(worst, rel)
    return worst


def _t(rng, *shape, scale=1.0, offset=0.0):
    return torch.from_numpy(offset + scale * rng.normal(size=shape))


def _point_compute_gates(rng):
    d = 8
    inputs = (
        _t(rng, 3, d),
        _t(rng, d, d, scale=0.4),
        _t(rng, d, d, scale=0.4),
        _t(rng, d, scale=0.3),
        _t(rng, d, scale=0.3),
    )
    return ops.compute_gates, inputs


def _point_update_memory(rng):
    heads, dh = 2, 4
    d = heads * dh
    m = _t(rng, heads, dh, dh, scale=0.5)
    k = _t(rng, d)
    v = _t(rng, d, scale=0.8)
    alpha = -torch.from_numpy(np.abs(rng.normal(size=d)) + 0.01)
    beta = torch.from_numpy(rng.uniform(0.2, 0.8, size=d))
    return ops.update_memory, (m, k, v, alpha, beta)


def _point_retrieve(rng):
    heads, dh = 2, 4
    d = heads * dh
    inputs = (
        _t(rng, heads, dh, dh, scale=0.6),
        _t(rng, 2, d),
        _t(rng, 2, d),
        _t(rng, d, d, scale=0.4),
        _t(rng, d, scale=0.2),
        _t(rng, d, scale=0.2, offset=1.0),
    )
    return ops.retrieve, inputs


def _point_memory_gate(rng):
    d = 6
    rho = torch.from_numpy(rng.uniform(0.3, 1.0, size=()))
    return ops.memory_gate, (rho, _t(rng, d), _t(rng, d, scale=0.5))


def _point_fuse(rng):
    d = 8
    return ops.fuse, (_t(rng, 3, d), _t(rng, 3, d), _t(rng, d))


def _point_block_forward(rng):
    heads, dh, c, cached = 2, 4, 2, 4
    d = heads * dh
    positions = torch.arange(cached, cached + c)
    cache_positions = torch.arange(cached)

    def fn(h_in, memory, cache_k, cache_v, *weights):
        return ops.block_forward(
            h_in, memory, cache_k, cache_v, cache_positions, positions, 0.7, heads, *weights
        )

    weights = (
        _t(rng, d, scale=0.2, offset=1.0),  # norm1 gain
        _t(rng, d, d, scale=0.4),  # wq
        _t(rng, d, d, scale=0.4),  # wk
        _t(rng, d, d, scale=0.4),  # wv
        _t(rng, d, d, scale=0.4),  # wo
        _t(rng, d, d, scale=0.4),  # w_alpha
        _t(rng, d, d, scale=0.4),  # w_beta
        _t(rng, d, scale=0.3),  # A
        _t(rng, d, scale=0.3),  # B
        _t(rng, d, d, scale=0.4),  # wg
        _t(rng, d, scale=0.2),  # bias_g
        _t(rng, d, scale=0.2, offset=1.0),  # rms gain
        _t(rng, d, scale=0.3, offset=1.0),  # router w
        _t(rng, d, scale=0.3),  # router b
        _t(rng, d, scale=0.2, offset=1.0),  # norm2 gain
        _t(rng, d, 4 * d, scale=0.3),  # ffn w1
        _t(rng, 4 * d, d, scale=0.3),  # ffn w2
    )
    inputs = (
        _t(rng, c, d),
        _t(rng, heads, dh, dh, scale=0.5),
        _t(rng, cached, d),
        _t(rng, cached, d),
    ) + weights
    return fn, inputs


_POINTS = {
    "compute_gates": _point_compute_gates,
    "update_memory": _point_update_memory,
    "retrieve": _point_retrieve,
    "memory_gate": _point_memory_gate,
    "fuse": _point_fuse,
    "block_forward": _point_block_forward,
}

OP_NAMES = tuple(_POINTS)


def finite_diff_gradcheck(op_name, point=0, eps=EPS_DEFAULT):
    """Max relative gradient error for one op at one indexed random point."""
    if op_name not in _POINTS:
        raise ValueError(f"unknown op {op_name!r}; choose from {sorted(_POINTS)}")
    rng = np.random.default_rng([zlib.crc32(op_name.encode()), point])
    fn, inputs = _POINTS[op_name](rng)
    return directional_gradcheck(fn, inputs, eps=eps, seed=point)
