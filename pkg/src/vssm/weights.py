"""Weight bundle: every parameter lives in a flat, canonically named dict.

The names double as the interchange schema (layer0.attn.wq, layer0.gates.A,
layer0.router.b, ...), so serialization is a straight walk over the dict.
Initialization draws every 2-D projection from N(0, 0.02^2) in canonical
order from one seeded generator; vectors start at the neutral values (gate
logs and biases at 0, gains at 1, router slope at 1).
"""

from dataclasses import dataclass

import numpy as np

from .attention import AttentionWeightsSet
from .config import ModelConfig
from .kernels import ContractViolation
from .memory import GateParams, OutputGateParams
from .router import RouterParams

PROJ_STD = 0.02


def canonical_names(config: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    """(name, shape) for every parameter, in serialization order."""
    d = config.d_model
    names: list[tuple[str, tuple[int, ...]]] = []
    if config.vocab_size is not None:
        names.append(("embed.weight", (config.vocab_size, d)))
    if config.io_dim is not None:
        names.append(("in_proj.weight", (config.io_dim, d)))
    for i in range(config.n_layers):
        p = f"layer{i}."
        names += [
            (p + "norm1.gain", (d,)),
            (p + "attn.wq", (d, d)),
            (p + "attn.wk", (d, d)),
            (p + "attn.wv", (d, d)),
            (p + "attn.wo", (d, d)),
            (p + "gates.w_alpha", (d, d)),
            (p + "gates.w_beta", (d, d)),
            (p + "gates.A", (d,)),
            (p + "gates.B", (d,)),
            (p + "outgate.wg", (d, d)),
            (p + "outgate.bias", (d,)),
            (p + "outgate.rms_gain", (d,)),
            (p + "router.w", (d,)),
            (p + "router.b", (d,)),
            (p + "norm2.gain", (d,)),
            (p + "ffn.w1", (d, 4 * d)),
            (p + "ffn.w2", (4 * d, d)),
        ]
    names.append(("final_norm.gain", (d,)))
    if config.vocab_size is not None:
        names.append(("head.weight", (d, config.vocab_size)))
    if config.io_dim is not None:
        names.append(("out_proj.weight", (d, config.io_dim)))
    return names


def _neutral_vector(name: str, shape) -> np.ndarray:
    ones = name.endswith((".gain", ".rms_gain", "router.w"))
    return np.ones(shape, np.float32) if ones else np.zeros(shape, np.float32)


@dataclass(frozen=True)
class LayerWeights:
    attn: AttentionWeightsSet
    gates: GateParams
    outgate: OutputGateParams
    router: RouterParams
    norm1_gain: np.ndarray
    norm2_gain: np.ndarray
    ffn_w1: np.ndarray
    ffn_w2: np.ndarray


class WeightsBundle:
    def __init__(self, config: ModelConfig, arrays: dict[str, np.ndarray]):
        expected = canonical_names(config)
        missing = [n for n, _ in expected if n not in arrays]
        if missing:
            raise ContractViolation(f"weights: missing canonical name {missing[0]!r}")
        extra = set(arrays) - {n for n, _ in expected}
        if extra:
            raise ContractViolation(f"weights: unexpected name {sorted(extra)[0]!r}")
        for name, shape in expected:
            a = arrays[name]
            if a.shape != shape or a.dtype != np.float32:
                raise ContractViolation(
                    f"weights: {name} must be float32 {shape}, got {a.dtype} {a.shape}"
                )
            if not np.isfinite(a).all():
                raise ContractViolation(f"weights: {name} has non-finite entries")
        self.config = config
        self.arrays = {name: arrays[name] for name, _ in expected}

    @property
    def n_params(self) -> int:
        return sum(a.size for a in self.arrays.values())

    def layer(self, i: int) -> LayerWeights:
        if not (0 <= i < self.config.n_layers):
            raise ContractViolation(f"weights: layer index {i} out of range")
        g = self.arrays
        p = f"layer{i}."
        return LayerWeights(
            attn=AttentionWeightsSet(
                wq=g[p + "attn.wq"],
                wk=g[p + "attn.wk"],
                wv=g[p + "attn.wv"],
                wo=g[p + "attn.wo"],
                n_heads=self.config.n_heads,
            ),
            gates=GateParams(
                w_alpha=g[p + "gates.w_alpha"],
                w_beta=g[p + "gates.w_beta"],
                a_log=g[p + "gates.A"],
                b_bias=g[p + "gates.B"],
            ),
            outgate=OutputGateParams(
                w_g=g[p + "outgate.wg"],
                bias_g=g[p + "outgate.bias"],
                rms_gain=g[p + "outgate.rms_gain"],
            ),
            router=RouterParams(
                w=g[p + "router.w"], b=g[p + "router.b"], horizon=self.config.horizon
            ),
            norm1_gain=g[p + "norm1.gain"],
            norm2_gain=g[p + "norm2.gain"],
            ffn_w1=g[p + "ffn.w1"],
            ffn_w2=g[p + "ffn.w2"],
        )

    @property
    def final_gain(self) -> np.ndarray:
        return self.arrays["final_norm.gain"]

    @property
    def embed(self) -> np.ndarray:
        return self.arrays["embed.weight"]

    @property
    def head(self) -> np.ndarray:
        return self.arrays["head.weight"]

    @property
    def in_proj(self) -> np.ndarray:
        return self.arrays["in_proj.weight"]

    @property
    def out_proj(self) -> np.ndarray:
        return self.arrays["out_proj.weight"]


def init_weights(config: ModelConfig) -> WeightsBundle:
    """Fresh bundle, bit-reproducible for a fixed config (seed included)."""
    rng = np.random.default_rng(config.seed)
    arrays: dict[str, np.ndarray] = {}
    for name, shape in canonical_names(config):
        if len(shape) == 2:
            arrays[name] = rng.normal(0.0, PROJ_STD, size=shape).astype(np.float32)
        else:
            arrays[name] = _neutral_vector(name, shape)
    return WeightsBundle(config, arrays)
