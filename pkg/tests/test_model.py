import numpy as np
import pytest

from vssm.checkpoint import load_engine_state, save_engine_state
from vssm.config import ModelConfig
from vssm.kernels import ContractViolation
from vssm.model import Engine, batch_replay_oracle, streaming_run, switch_context
from vssm.weights import init_weights


def make_chunks(rng, n, c, d, scale=1.0):
    return [rng.normal(scale=scale, size=(c, d)).astype(np.float32) for _ in range(n)]


SMALL = ModelConfig(
    d_model=16,
    n_heads=2,
    n_layers=2,
    sink_blocks=1,
    window_blocks=3,
    chunk_size=2,
    horizon=12,
)


class TestStreamingBasics:
    def test_output_shapes_and_finiteness(self):
        rng = np.random.default_rng(0)
        weights = init_weights(SMALL)
        chunks = make_chunks(rng, 8, 2, 16)
        outs, engine = streaming_run(weights, chunks)
        assert len(outs) == 8
        for o in outs:
            assert o.shape == (2, 16) and np.isfinite(o).all()
        assert engine.state.chunks_consumed == 8

    def test_zero_input_gives_zero_outputs(self):
        """No projection has a bias on the residual path, so an all-zero
        stream stays exactly zero at every layer of every chunk."""
        weights = init_weights(SMALL)
        engine = Engine(weights)
        for _ in range(6):
            per_layer = []
            out = engine.process_chunk(
                np.zeros((2, 16), dtype=np.float32), layer_outputs=per_layer
            )
            assert np.array_equal(out, np.zeros_like(out))
            for h in per_layer:
                assert np.array_equal(h, np.zeros_like(h))

    def test_deterministic_across_runs(self):
        rng = np.random.default_rng(1)
        weights = init_weights(SMALL)
        chunks = make_chunks(rng, 6, 2, 16)
        a, _ = streaming_run(weights, chunks)
        b, _ = streaming_run(weights, chunks)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)

    def test_wrong_chunk_shape_rejected(self):
        weights = init_weights(SMALL)
        engine = Engine(weights)
        with pytest.raises(ContractViolation, match="chunk"):
            engine.process_chunk(np.zeros((3, 16), dtype=np.float32))
        with pytest.raises(ContractViolation, match="chunk"):
            engine.process_chunk(np.zeros((2, 8), dtype=np.float32))

    def test_no_state_leakage_between_engines(self):
        rng = np.random.default_rng(2)
        weights = init_weights(SMALL)
        sa = make_chunks(rng, 6, 2, 16)
        sb = make_chunks(rng, 6, 2, 16, scale=2.0)
        solo_a, _ = streaming_run(weights, sa)
        solo_b, _ = streaming_run(weights, sb)
        ea, eb = Engine(weights), Engine(weights)
        inter_a, inter_b = [], []
        for xa, xb in zip(sa, sb):
            inter_a.append(ea.process_chunk(xa))
            inter_b.append(eb.process_chunk(xb))
        for x, y in zip(solo_a, inter_a):
            np.testing.assert_array_equal(x, y)
        for x, y in zip(solo_b, inter_b):
            np.testing.assert_array_equal(x, y)


class TestReplayEquivalence:
    def test_streaming_equals_replay(self):
        rng = np.random.default_rng(3)
        weights = init_weights(SMALL)
        chunks = make_chunks(rng, 12, 2, 16)
        streamed, _ = streaming_run(weights, chunks)
        replayed = batch_replay_oracle(weights, chunks)
        assert len(replayed) == 12
        for s, r in zip(streamed, replayed):
            np.testing.assert_array_equal(s, r)


class TestOracleEquivalence:
    def test_short_sequence_matches_full_causal(self):
        # (S + L) * C = 8 tokens: nothing is ever evicted at 4 chunks of 2.
        rng = np.random.default_rng(4)
        weights = init_weights(SMALL)
        chunks = make_chunks(rng, 4, 2, 16)
        hybrid, _ = streaming_run(weights, chunks)
        oracle, _ = streaming_run(weights, chunks, unbounded_window=True, use_global=False)
        for h, o in zip(hybrid, oracle):
            np.testing.assert_allclose(h, o, atol=1e-5)
            np.testing.assert_array_equal(h, o)


class TestDegeneration:
    def test_gamma_zero_matches_no_global_path(self):
        rng = np.random.default_rng(5)
        weights = init_weights(SMALL)
        chunks = make_chunks(rng, 10, 2, 16)
        gated, _ = streaming_run(weights, chunks, force_gamma_zero=True)
        sink_only, _ = streaming_run(weights, chunks, use_global=False)
        for g, s in zip(gated, sink_only):
            np.testing.assert_array_equal(g, s)

    def test_pure_window_when_no_sink(self):
        cfg = ModelConfig(
            d_model=16, n_heads=2, n_layers=1, sink_blocks=0, window_blocks=2, chunk_size=2
        )
        rng = np.random.default_rng(6)
        weights = init_weights(cfg)
        chunks = make_chunks(rng, 8, 2, 16)
        gated, _ = streaming_run(weights, chunks, force_gamma_zero=True)
        window_only, eng = streaming_run(weights, chunks, use_global=False)
        for g, s in zip(gated, window_only):
            np.testing.assert_array_equal(g, s)
        assert eng.peak_cached_tokens == 2 * 2

    def test_gamma_zero_differs_from_hybrid_after_evictions(self):
        rng = np.random.default_rng(7)
        weights = init_weights(SMALL)
        chunks = make_chunks(rng, 10, 2, 16)
        hybrid, _ = streaming_run(weights, chunks)
        gated, _ = streaming_run(weights, chunks, force_gamma_zero=True)
        np.testing.assert_array_equal(hybrid[0], gated[0])  # nothing evicted yet
        assert not np.array_equal(hybrid[-1], gated[-1])


class TestAccounting:
    def test_key_comparisons_per_chunk(self):
        s, l, c = 1, 3, 2
        cfg = ModelConfig(
            d_model=16, n_heads=2, n_layers=2, sink_blocks=s, window_blocks=l, chunk_size=c
        )
        rng = np.random.default_rng(8)
        weights = init_weights(cfg)
        n = 9
        _, engine = streaming_run(weights, make_chunks(rng, n, c, 16))
        expected = []
        for t in range(n):
            visible_blocks = min(t + 1, s) + max(0, min(t + 1 - s, l))
            expected.append(visible_blocks * c * c)
        assert engine.comparisons_per_chunk == expected
        assert max(engine.comparisons_per_chunk) <= (s + l + 1) * c * c

    def test_peak_cached_tokens_and_updates(self):
        s, l, c, layers, n = 1, 3, 2, 2, 11
        cfg = ModelConfig(
            d_model=16, n_heads=2, n_layers=layers, sink_blocks=s, window_blocks=l, chunk_size=c
        )
        rng = np.random.default_rng(9)
        weights = init_weights(cfg)
        _, engine = streaming_run(weights, make_chunks(rng, n, c, 16))
        assert engine.peak_cached_tokens == (s + l) * c
        assert engine.memory_updates == layers * max(0, n - s - l)
        for ls in engine.state.layers:
            assert ls.memory.updates_applied == max(0, n - s - l)

    def test_memory_updates_apply_after_retrieval(self):
        # Single layer, S=1, L=3: block 1 is evicted while chunk 4 is being
        # processed. Chunk 4's own output must not yet feel block 1 through
        # the memory (eviction lands after retrieval), but chunk 5's must.
        cfg = ModelConfig(
            d_model=16, n_heads=2, n_layers=1, sink_blocks=1, window_blocks=3,
            chunk_size=2, horizon=6,
        )
        rng = np.random.default_rng(10)
        weights = init_weights(cfg)
        chunks_a = make_chunks(rng, 6, 2, 16)
        chunks_b = [c.copy() for c in chunks_a]
        chunks_b[1] = chunks_b[1] + 0.5
        outs_a, _ = streaming_run(weights, chunks_a)
        outs_b, _ = streaming_run(weights, chunks_b)
        assert not np.array_equal(outs_a[1], outs_b[1])  # sees its own change
        assert not np.array_equal(outs_a[3], outs_b[3])  # block 1 still in window
        np.testing.assert_array_equal(outs_a[4], outs_b[4])  # evicted, not yet in memory
        assert not np.array_equal(outs_a[5], outs_b[5])  # now only via memory


class TestContextSwitch:
    def test_switch_clears_window_keeps_sink(self):
        rng = np.random.default_rng(11)
        weights = init_weights(SMALL)
        engine = Engine(weights)
        for x in make_chunks(rng, 7, 2, 16):
            engine.process_chunk(x)
        switch_context(engine, keep_memory=True)
        for ls in engine.state.layers:
            assert len(ls.cache.window) == 0
            assert [b.block_index for b in ls.cache.sink] == [0]
            assert ls.cache.next_block_index == 7
            assert np.abs(ls.memory.m).sum() > 0.0
        assert engine.state.chunks_consumed == 7

    def test_switch_can_zero_memory(self):
        rng = np.random.default_rng(12)
        weights = init_weights(SMALL)
        engine = Engine(weights)
        for x in make_chunks(rng, 7, 2, 16):
            engine.process_chunk(x)
        switch_context(engine, keep_memory=False)
        for ls in engine.state.layers:
            np.testing.assert_array_equal(ls.memory.m, np.zeros_like(ls.memory.m))

    def test_positions_keep_advancing_after_switch(self):
        rng = np.random.default_rng(13)
        weights = init_weights(SMALL)
        engine = Engine(weights)
        for x in make_chunks(rng, 5, 2, 16):
            engine.process_chunk(x)
        switch_context(engine, keep_memory=True)
        x = rng.normal(size=(2, 16)).astype(np.float32)
        engine.process_chunk(x)
        for ls in engine.state.layers:
            assert [b.block_index for b in ls.cache.window] == [5]
        assert engine.state.chunks_consumed == 6


class TestFrozenPass:
    def test_frozen_pass_leaves_state_untouched(self):
        rng = np.random.default_rng(14)
        weights = init_weights(SMALL)
        engine = Engine(weights)
        for x in make_chunks(rng, 6, 2, 16):
            engine.process_chunk(x)
        before_tokens = [ls.cache.cached_tokens for ls in engine.state.layers]
        before_mem = [ls.memory.m.copy() for ls in engine.state.layers]
        probe = rng.normal(size=(2, 16)).astype(np.float32)
        y1 = engine.process_chunk(probe, commit=False)
        y2 = engine.process_chunk(probe, commit=False)
        np.testing.assert_array_equal(y1, y2)
        assert engine.state.chunks_consumed == 6
        assert [ls.cache.cached_tokens for ls in engine.state.layers] == before_tokens
        for ls, m in zip(engine.state.layers, before_mem):
            np.testing.assert_array_equal(ls.memory.m, m)

    def test_frozen_matches_commit_before_saturation(self):
        rng = np.random.default_rng(15)
        weights = init_weights(SMALL)
        a, b = Engine(weights), Engine(weights)
        chunks = make_chunks(rng, 3, 2, 16)
        for x in chunks[:2]:
            a.process_chunk(x)
            b.process_chunk(x)
        frozen = a.process_chunk(chunks[2], commit=False)
        committed = b.process_chunk(chunks[2])
        np.testing.assert_array_equal(frozen, committed)


class TestCheckpoint:
    def test_round_trip_resume(self, tmp_path):
        rng = np.random.default_rng(16)
        weights = init_weights(SMALL)
        chunks = make_chunks(rng, 15, 2, 16)
        full, _ = streaming_run(weights, chunks)
        engine = Engine(weights)
        for x in chunks[:10]:
            engine.process_chunk(x)
        path = tmp_path / "state.vssm"
        save_engine_state(engine, path)
        resumed = load_engine_state(path, weights)
        tail = [resumed.process_chunk(x) for x in chunks[10:]]
        for got, want in zip(tail, full[10:]):
            np.testing.assert_array_equal(got, want)

    def test_magic_and_version_checked(self, tmp_path):
        rng = np.random.default_rng(17)
        weights = init_weights(SMALL)
        engine = Engine(weights)
        engine.process_chunk(rng.normal(size=(2, 16)).astype(np.float32))
        path = tmp_path / "state.vssm"
        save_engine_state(engine, path)
        raw = bytearray(path.read_bytes())
        assert raw[:4] == b"VSSM"
        bad = tmp_path / "bad.vssm"
        bad.write_bytes(b"XXXX" + bytes(raw[4:]))
        with pytest.raises(ContractViolation, match="magic"):
            load_engine_state(bad, weights)
        wrong_version = bytearray(raw)
        wrong_version[4:8] = (99).to_bytes(4, "little")
        bad2 = tmp_path / "bad2.vssm"
        bad2.write_bytes(bytes(wrong_version))
        with pytest.raises(ContractViolation, match="version"):
            load_engine_state(bad2, weights)

    def test_config_mismatch_rejected(self, tmp_path):
        rng = np.random.default_rng(18)
        weights = init_weights(SMALL)
        engine = Engine(weights)
        engine.process_chunk(rng.normal(size=(2, 16)).astype(np.float32))
        path = tmp_path / "state.vssm"
        save_engine_state(engine, path)
        other = init_weights(ModelConfig(d_model=16, n_heads=2, n_layers=1, chunk_size=2))
        with pytest.raises(ContractViolation, match="config"):
            load_engine_state(path, other)
