import json
import os
import subprocess
import sys

import numpy as np
import pytest

from vssm_trainer import (
    FormatError,
    ModelMeta,
    canonical_shapes,
    export_weights,
    import_weights,
    init_params,
    read_tensors,
)

META = ModelMeta(
    d_model=16,
    n_heads=2,
    n_layers=2,
    sink_blocks=1,
    window_blocks=3,
    chunk_size=4,
    horizon=8,
    seed=0,
)


def test_export_import_export_idempotent(tmp_path):
    params = init_params(META)
    m1 = export_weights(params, META, tmp_path / "one")
    m2 = export_weights(import_weights(m1, META), META, tmp_path / "two")
    assert m1.read_text() == m2.read_text()
    assert (m1.parent / "weights.bin").read_bytes() == (m2.parent / "weights.bin").read_bytes()


def test_export_order_is_canonical(tmp_path):
    params = init_params(META)
    shuffled = dict(reversed(list(params.items())))
    manifest = export_weights(shuffled, META, tmp_path)
    doc = json.loads(manifest.read_text())
    assert [e["name"] for e in doc["tensors"]] == [n for n, _ in canonical_shapes(META)]


def test_missing_canonical_name_reported(tmp_path):
    params = init_params(META)
    del params["layer0.router.w"]
    with pytest.raises(FormatError, match="layer0.router.w"):
        export_weights(params, META, tmp_path)


def test_unexpected_name_rejected(tmp_path):
    params = init_params(META)
    params["layer9.mystery"] = params["final_norm.gain"]
    with pytest.raises(FormatError, match="layer9.mystery"):
        export_weights(params, META, tmp_path)


def test_shape_mismatch_rejected(tmp_path):
    params = init_params(META)
    params["final_norm.gain"] = np.ones(5, np.float32)
    with pytest.raises(FormatError, match="final_norm.gain"):
        export_weights(params, META, tmp_path)


def test_import_validates_against_meta(tmp_path):
    manifest = export_weights(init_params(META), META, tmp_path)
    other = ModelMeta(
        d_model=16,
        n_heads=2,
        n_layers=3,
        sink_blocks=1,
        window_blocks=3,
        chunk_size=4,
        horizon=8,
    )
    with pytest.raises(FormatError, match="layer2"):
        import_weights(manifest, other)


def test_seed0_init_layout_matches_engine(tmp_path):
    """Exported fresh init has the exact name/shape layout the engine emits."""
    meta = ModelMeta(
        d_model=32,
        n_heads=4,
        n_layers=2,
        sink_blocks=1,
        window_blocks=3,
        chunk_size=4,
        horizon=16,
        vocab_size=32,
        seed=0,
    )
    cfg = tmp_path / "cfg.json"
    cfg.write_text(
        json.dumps(
            {
                "d_model": 32,
                "n_heads": 4,
                "n_layers": 2,
                "sink_blocks": 1,
                "window_blocks": 3,
                "chunk_size": 4,
                "horizon": 16,
                "vocab_size": 32,
                "seed": 0,
            }
        )
    )
    env = dict(os.environ)
    env.pop("VSSM_SEED", None)
    proc = subprocess.run(
        [
            sys.executable,
            "-m",
            "vssm",
            "dump-activations",
            "--config",
            str(cfg),
            "--chunks",
            "1",
            "--out",
            str(tmp_path / "dump"),
        ],
        capture_output=True,
        text=True,
        env=env,
    )
    assert proc.returncode == 0, proc.stderr
    engine_side = read_tensors(tmp_path / "dump" / "weights.json")
    ours = read_tensors(export_weights(init_params(meta), meta, tmp_path / "ours"))
    assert list(engine_side) == list(ours)
    for name in ours:
        assert engine_side[name].shape == ours[name].shape, name
