"""Block-granular rolling KV cache with permanent sink blocks.

The first `sink_blocks` appended blocks are pinned for the lifetime of the
stream; later blocks pass through a FIFO window of at most `window_blocks`
blocks. Whatever falls out of the window is returned to the caller, which is
how evicted content reaches the compressed global memory. Token positions are
absolute (block_index * chunk_size + offset) and never renumber, so sink
tokens keep their original positions forever.
"""

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .kernels import ContractViolation


@dataclass(frozen=True)
class CacheConfig:
    sink_blocks: int
    window_blocks: int | None  # None: unbounded, nothing is ever evicted
    chunk_size: int

    def __post_init__(self):
        if self.sink_blocks < 0:
            raise ContractViolation("CacheConfig: sink_blocks must be >= 0")
        if self.window_blocks is not None and self.window_blocks < 1:
            raise ContractViolation("CacheConfig: window_blocks must be >= 1")
        if self.chunk_size < 1:
            raise ContractViolation("CacheConfig: chunk_size must be >= 1")


@dataclass
class BlockEntry:
    """One cached chunk: rotated keys, values, and the gate values the

    global memory will need if this block is ever evicted. All four arrays
    are (chunk_size, d_model) float32.
    """

    block_index: int
    k: np.ndarray
    v: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray

    @property
    def positions(self) -> np.ndarray:
        c = self.k.shape[0]
        return self.block_index * c + np.arange(c, dtype=np.int64)


@dataclass
class RollingCache:
    config: CacheConfig
    d_model: int
    sink: list = field(default_factory=list)
    window: deque = field(default_factory=deque)
    next_block_index: int = 0

    def _check_block(self, name, arr):
        arr = np.asarray(arr, dtype=np.float32)
        expect = (self.config.chunk_size, self.d_model)
        if arr.shape != expect:
            raise ContractViolation(
                f"append_block: {name} has shape {arr.shape}, expected {expect}"
            )
        if not np.isfinite(arr).all():
            raise ContractViolation(f"append_block: {name} has non-finite entries")
        return arr

    def append_block(self, k, v, alpha, beta) -> list[BlockEntry]:
        """Append one chunk; returns the blocks evicted by this append."""
        entry = BlockEntry(
            block_index=self.next_block_index,
            k=self._check_block("k", k),
            v=self._check_block("v", v),
            alpha=self._check_block("alpha", alpha),
            beta=self._check_block("beta", beta),
        )
        self.next_block_index += 1
        if entry.block_index < self.config.sink_blocks:
            self.sink.append(entry)
            return []
        self.window.append(entry)
        evicted = []
        if self.config.window_blocks is not None:
            while len(self.window) > self.config.window_blocks:
                evicted.append(self.window.popleft())
        return evicted

    def gather_local(self):
        """All cached tokens in block order: (K, V, positions)."""
        blocks = self.sink + list(self.window)
        if not blocks:
            d = self.d_model
            empty = np.zeros((0, d), dtype=np.float32)
            return empty, empty.copy(), np.zeros(0, dtype=np.int64)
        k = np.concatenate([b.k for b in blocks], axis=0)
        v = np.concatenate([b.v for b in blocks], axis=0)
        positions = np.concatenate([b.positions for b in blocks])
        return k, v, positions

    def reset_window(self, keep_sink: bool = True):
        """Drop the FIFO window (a context switch); the block counter and,

        optionally, the sink entries survive so positions keep advancing.
        """
        self.window.clear()
        if not keep_sink:
            self.sink.clear()

    @property
    def cached_blocks(self) -> int:
        return len(self.sink) + len(self.window)

    @property
    def cached_tokens(self) -> int:
        return self.cached_blocks * self.config.chunk_size
