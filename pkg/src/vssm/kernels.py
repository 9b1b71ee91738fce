"""Numeric kernels shared by every other module.

Storage convention: float32 arrays, C-order, finite entries. Reductions
(matmul, softmax normalizers, mean squares) run in float64 and the result is
cast back to float32, so outputs are deterministic for a fixed input and do
not depend on how callers batch their work.
"""

import numpy as np

F32 = np.float32


class ContractViolation(ValueError):
    """An input broke the documented contract of an op."""


def _fail(op: str, msg: str):
    raise ContractViolation(f"{op}: {msg}")


def _check_finite(op: str, name: str, x: np.ndarray):
    if not np.isfinite(x).all():
        _fail(op, f"{name} contains non-finite entries")


def _as_array(op: str, name: str, x, ndim: int | None = None) -> np.ndarray:
    arr = np.asarray(x, dtype=F32)
    if ndim is not None and arr.ndim != ndim:
        _fail(op, f"{name} must be {ndim}-D, got shape {arr.shape}")
    _check_finite(op, name, arr)
    return arr


def linear(x, w, bias=None) -> np.ndarray:
    """y = x @ w (+ bias), accumulated in float64."""
    x = _as_array("linear", "x", x, ndim=2)
    w = _as_array("linear", "w", w, ndim=2)
    if x.shape[1] != w.shape[0]:
        _fail("linear", f"inner dims disagree: x {x.shape} vs w {w.shape}")
    y = x.astype(np.float64) @ w.astype(np.float64)
    if bias is not None:
        bias = _as_array("linear", "bias", bias, ndim=1)
        if bias.shape[0] != w.shape[1]:
            _fail("linear", f"bias width {bias.shape[0]} != out width {w.shape[1]}")
        y = y + bias.astype(np.float64)
    return y.astype(F32)


def stable_softmax(x, mask=None) -> np.ndarray:
    """Softmax over the last axis, shifted by the row max before exp.

    `mask` marks entries that participate; masked-out entries get weight 0.
    Every row must keep at least one participating entry.
    """
    x = np.asarray(x, dtype=F32)
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        if not mask.any(axis=-1).all():
            _fail("softmax", "a row is fully masked out")
        _check_finite("softmax", "x", np.where(mask, x, 0.0))
    else:
        _check_finite("softmax", "x", x)
    z = x.astype(np.float64)
    if mask is not None:
        z = np.where(mask, z, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return (e / e.sum(axis=-1, keepdims=True)).astype(F32)


def rmsnorm(x, gain, eps: float = 1e-6) -> np.ndarray:
    """Root-mean-square normalization over the last axis, then gain."""
    x = np.asarray(x, dtype=F32)
    gain = np.asarray(gain, dtype=F32)
    if x.shape[-1] != gain.shape[-1] or gain.ndim != 1:
        _fail("rmsnorm", f"gain shape {gain.shape} does not match width {x.shape[-1]}")
    _check_finite("rmsnorm", "x", x)
    _check_finite("rmsnorm", "gain", gain)
    if eps < 0.0:
        _fail("rmsnorm", "eps must be >= 0")
    z = x.astype(np.float64)
    ms = (z * z).mean(axis=-1, keepdims=True)
    y = z / np.sqrt(ms + eps) * gain.astype(np.float64)
    return y.astype(F32)


def sigmoid(x) -> np.ndarray:
    """Logistic function, overflow-safe on both tails."""
    x = np.asarray(x, dtype=F32)
    _check_finite("sigmoid", "x", x)
    z = x.astype(np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out.astype(F32)


def softplus(x) -> np.ndarray:
    """log(1 + exp(x)) computed as log1p(exp(-|x|)) + max(x, 0)."""
    x = np.asarray(x, dtype=F32)
    _check_finite("softplus", "x", x)
    z = x.astype(np.float64)
    out = np.log1p(np.exp(-np.abs(z))) + np.maximum(z, 0.0)
    return out.astype(F32)


def swish(x) -> np.ndarray:
    """x * sigmoid(x)."""
    x = np.asarray(x, dtype=F32)
    _check_finite("swish", "x", x)
    z = x.astype(np.float64)
    pos = z >= 0
    sig = np.empty_like(z)
    sig[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    sig[~pos] = ez / (1.0 + ez)
    return (z * sig).astype(F32)


def rope_rotate(x, positions, base: float = 10000.0) -> np.ndarray:
    """Rotary position embedding on the last axis.

    Consecutive pairs (2i, 2i+1) rotate by positions * base**(-2i/d). The
    width d must be even; positions broadcast over x's leading axes and may
    be negative (relative offsets).
    """
    x = np.asarray(x, dtype=F32)
    _check_finite("rope", "x", x)
    d = x.shape[-1]
    if d % 2 != 0:
        _fail("rope", f"width must be even, got {d}")
    pos = np.asarray(positions, dtype=np.float64)
    _check_finite("rope", "positions", pos)
    inv_freq = base ** (-2.0 * np.arange(d // 2, dtype=np.float64) / d)
    ang = pos[..., None] * inv_freq
    c, s = np.cos(ang), np.sin(ang)
    z = x.astype(np.float64)
    even, odd = z[..., 0::2], z[..., 1::2]
    out = np.empty(np.broadcast_shapes(z.shape[:-1] + (d // 2,), c.shape) + (2,))
    out[..., 0] = even * c - odd * s
    out[..., 1] = even * s + odd * c
    return out.reshape(out.shape[:-2] + (d,)).astype(F32)
