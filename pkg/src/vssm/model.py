"""The streaming engine: a stack of pre-norm residual blocks over chunks.

Per chunk and per layer, in order: normalize, project QKV and gates, read
the global memory with pre-rotation queries, append the chunk to the rolling
cache (collecting evictions), attend over everything still cached, blend the
two paths with the position-aware gate, apply the residual and FFN, and only
then fold the evicted blocks into the memory. The late fold means the memory
a chunk reads reflects exactly the blocks evicted strictly before it.

Every layer owns a cache and a memory but all layers share one chunk clock,
so their eviction schedules are identical. `commit=False` runs the same
computation against a frozen cache view (the chunk's own keys are visible
but nothing is appended, evicted, or folded), which is what the chunked
sampler's inner refinement passes use.
"""

import numpy as np

from .attention import project_qkv, window_attention
from .cache import CacheConfig, RollingCache
from .config import ModelConfig
from .kernels import ContractViolation, linear, rmsnorm, swish
from .memory import MemoryState, compute_gates, retrieve, summarize_evicted, update_memory
from .router import fuse, memory_gate, position_ratio
from .weights import WeightsBundle


class LayerState:
    def __init__(self, cache: RollingCache, memory: MemoryState):
        self.cache = cache
        self.memory = memory


class EngineState:
    def __init__(self, layers: list[LayerState], chunks_consumed: int = 0):
        self.layers = layers
        self.chunks_consumed = chunks_consumed


class Engine:
    """Incremental runner bound to one weight bundle.

    use_global=False drops the memory path entirely (the sink-plus-window
    regime); force_gamma_zero keeps the memory machinery but silences its
    contribution, which must be indistinguishable in the outputs;
    unbounded_window disables eviction and is the full-causal reference.
    """

    def __init__(
        self,
        weights: WeightsBundle,
        use_global: bool = True,
        force_gamma_zero: bool = False,
        unbounded_window: bool = False,
    ):
        self.weights = weights
        self.config: ModelConfig = weights.config
        self.use_global = use_global
        self.force_gamma_zero = force_gamma_zero
        self.unbounded_window = unbounded_window
        cfg = self.config
        cache_cfg = CacheConfig(
            sink_blocks=cfg.sink_blocks,
            window_blocks=None if unbounded_window else cfg.window_blocks,
            chunk_size=cfg.chunk_size,
        )
        self.layer_weights = [weights.layer(i) for i in range(cfg.n_layers)]
        self.state = EngineState(
            layers=[
                LayerState(
                    RollingCache(cache_cfg, cfg.d_model),
                    MemoryState.zeros(cfg.n_heads, cfg.d_head),
                )
                for _ in range(cfg.n_layers)
            ]
        )
        self.comparisons_per_chunk: list[int] = []
        self.peak_cached_tokens = 0
        self.memory_updates = 0

    def process_chunk(
        self, x: np.ndarray, commit: bool = True, layer_outputs: list | None = None
    ) -> np.ndarray:
        """Run one chunk; returns the last layer's output.

        If layer_outputs is a list, every layer's output for this chunk is
        appended to it in layer order (the last one equals the return value).
        """
        cfg = self.config
        x = np.asarray(x, dtype=np.float32)
        if x.shape != (cfg.chunk_size, cfg.d_model):
            raise ContractViolation(
                f"process_chunk: chunk must be ({cfg.chunk_size},{cfg.d_model}), got {x.shape}"
            )
        if not np.isfinite(x).all():
            raise ContractViolation("process_chunk: chunk has non-finite entries")
        t = self.state.chunks_consumed
        positions = np.arange(
            t * cfg.chunk_size, (t + 1) * cfg.chunk_size, dtype=np.int64
        )
        h = x
        chunk_comparisons = 0
        for idx, (lw, ls) in enumerate(zip(self.layer_weights, self.state.layers)):
            h, n_visible = self._block_forward(lw, ls, h, positions, t, commit)
            if idx == 0:
                chunk_comparisons = cfg.chunk_size * n_visible
            if layer_outputs is not None:
                layer_outputs.append(h)
        if commit:
            self.state.chunks_consumed += 1
            self.comparisons_per_chunk.append(chunk_comparisons)
            self.peak_cached_tokens = max(
                self.peak_cached_tokens, self.state.layers[0].cache.cached_tokens
            )
        return h

    def _block_forward(self, lw, ls, h_in, positions, t, commit):
        xn = rmsnorm(h_in, lw.norm1_gain)
        proj = project_qkv(xn, lw.attn, positions)
        alpha, beta = compute_gates(xn, lw.gates)
        h_global = (
            retrieve(ls.memory, proj.q_pre, xn, lw.outgate) if self.use_global else None
        )
        if commit:
            evicted = ls.cache.append_block(proj.k_rot, proj.v, alpha, beta)
            k_vis, v_vis, pos_vis = ls.cache.gather_local()
        else:
            evicted = []
            k_c, v_c, pos_c = ls.cache.gather_local()
            k_vis = np.concatenate([k_c, proj.k_rot], axis=0)
            v_vis = np.concatenate([v_c, proj.v], axis=0)
            pos_vis = np.concatenate([pos_c, positions])
        h_local = window_attention(proj.q_rot, positions, k_vis, v_vis, pos_vis, lw.attn)
        if self.use_global:
            if self.force_gamma_zero:
                gamma = np.zeros(self.config.d_model, dtype=np.float32)
            else:
                gamma = memory_gate(position_ratio(t, lw.router.horizon), lw.router)
            h_fused = fuse(h_local, h_global, gamma)
        else:
            h_fused = h_local
        h_mid = (h_in.astype(np.float64) + h_fused.astype(np.float64)).astype(np.float32)
        ff = linear(swish(linear(rmsnorm(h_mid, lw.norm2_gain), lw.ffn_w1)), lw.ffn_w2)
        h_out = (h_mid.astype(np.float64) + ff.astype(np.float64)).astype(np.float32)
        if commit and self.use_global:
            for entry in evicted:
                update_memory(ls.memory, summarize_evicted(entry))
                self.memory_updates += 1
        return h_out, k_vis.shape[0]

    def switch_context(self, keep_memory: bool = True):
        """Start a new segment: drop windows, keep sinks, positions advance."""
        for ls in self.state.layers:
            ls.cache.reset_window(keep_sink=True)
            if not keep_memory:
                ls.memory.zero_()


def streaming_run(weights: WeightsBundle, chunks, **engine_kwargs):
    """Feed chunks through a fresh engine; returns (outputs, engine)."""
    engine = Engine(weights, **engine_kwargs)
    outputs = [engine.process_chunk(x) for x in chunks]
    return outputs, engine


def batch_replay_oracle(weights: WeightsBundle, chunks, **engine_kwargs):
    """Non-incremental reference: re-derives every step from scratch.

    For each position t the full prefix is replayed through a fresh engine,
    so no state survives between answers. Quadratic in the number of chunks;
    meant for equivalence checking, not for serving.
    """
    chunks = list(chunks)
    outputs = []
    for t in range(len(chunks)):
        engine = Engine(weights, **engine_kwargs)
        out = None
        for x in chunks[: t + 1]:
            out = engine.process_chunk(x)
        outputs.append(out)
    return outputs


def switch_context(engine: Engine, keep_memory: bool = True):
    engine.switch_context(keep_memory=keep_memory)


def embed_tokens(weights: WeightsBundle, tokens: np.ndarray) -> np.ndarray:
    """Token ids -> embedding rows (requires a vocab-head config)."""
    if weights.config.vocab_size is None:
        raise ContractViolation("embed_tokens: config has no vocab_size")
    tokens = np.asarray(tokens)
    if tokens.min(initial=0) < 0 or tokens.max(initial=0) >= weights.config.vocab_size:
        raise ContractViolation("embed_tokens: token id out of range")
    return weights.embed[tokens].astype(np.float32)


def output_logits(weights: WeightsBundle, h: np.ndarray) -> np.ndarray:
    """Final norm then vocabulary projection."""
    if weights.config.vocab_size is None:
        raise ContractViolation("output_logits: config has no vocab_size")
    return linear(rmsnorm(h, weights.final_gain), weights.head)


def project_in(weights: WeightsBundle, x: np.ndarray) -> np.ndarray:
    """Continuous inputs (C, io_dim) -> model width."""
    if weights.config.io_dim is None:
        raise ContractViolation("project_in: config has no io_dim")
    return linear(x, weights.in_proj)


def project_out(weights: WeightsBundle, h: np.ndarray) -> np.ndarray:
    """Final norm then projection back to io_dim."""
    if weights.config.io_dim is None:
        raise ContractViolation("project_out: config has no io_dim")
    return linear(rmsnorm(h, weights.final_gain), weights.out_proj)
