"""Command line front end.

Subcommands: equiv (streaming-vs-replay self check), bench (latency and
footprint report), recall (needle eval), generate (chunked diffusion
sampler), dump-activations (weights plus per-chunk per-layer outputs in
the interchange format). Exit codes: 0 success, 1 check failure, 2 usage
error. VSSM_SEED in the environment overrides --seed overrides the seed
in the config file.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from .bench import EQUIV_TOLERANCE, bench_latency, build_report, run_equiv_check
from .config import ModelConfig
from .diffusion import chunked_ar_sample
from .interchange import read_weights, write_tensors, write_weights
from .kernels import ContractViolation
from .model import Engine, embed_tokens, project_in
from .needle import gen_tasks, run_recall_eval
from .weights import init_weights


def _load_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ContractViolation(f"cannot read config {path}: {exc}") from exc
    try:
        return ModelConfig.from_json(text)
    except json.JSONDecodeError as exc:
        raise ContractViolation(f"config {path} is not valid JSON: {exc}") from exc


def _resolve_seed(args, config):
    env = os.environ.get("VSSM_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ContractViolation(f"VSSM_SEED must be an integer, got {env!r}")
    if args.seed is not None:
        return args.seed
    return config.seed


def _get_weights(args, config):
    if getattr(args, "weights", None):
        return read_weights(args.weights, config)
    return init_weights(config)


def _parse_int_list(text, what):
    try:
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ContractViolation(f"{what} must be comma-separated integers") from exc


def cmd_equiv(args, config):
    result = run_equiv_check(
        config, n_chunks=args.chunks, seed=config.seed, tolerance=args.tolerance
    )
    print(json.dumps(result, indent=1))
    return 0 if result["pass"] else 1


def cmd_bench(args, config):
    weights = _get_weights(args, config)
    lengths = _parse_int_list(args.lengths, "--lengths")
    hybrid = bench_latency(
        weights, lengths, warmup_chunks=args.warmup, seed=config.seed,
        repeats=args.repeats,
    )
    oracle = bench_latency(
        weights, lengths, warmup_chunks=args.warmup, seed=config.seed,
        repeats=args.repeats, oracle=True,
    )
    report = build_report(config, lengths, hybrid, oracle)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report, indent=1) + "\n")
    print(f"wrote {out}")
    return 0


def cmd_recall(args, config):
    if config.vocab_size is None:
        raise ContractViolation("recall needs a config with vocab_size")
    weights = _get_weights(args, config)
    tasks = gen_tasks(
        config.vocab_size,
        length=args.length,
        distances=_parse_int_list(args.distances, "--distances"),
        count=args.count,
        seed=config.seed,
    )
    result = run_recall_eval(weights, tasks, window_only=args.window_only)
    text = json.dumps(result, indent=1)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return 0


def cmd_generate(args, config):
    weights = _get_weights(args, config)
    sequence, _ = chunked_ar_sample(
        weights, n_chunks=args.chunks, steps=args.steps, seed=config.seed
    )
    manifest = write_tensors(args.out, "generated", {"sequence": sequence})
    print(f"wrote {manifest}")
    return 0


def cmd_dump_activations(args, config):
    weights = _get_weights(args, config)
    out = Path(args.out)
    write_weights(weights, out)
    engine = Engine(weights, force_gamma_zero=args.window_only)

    rng = np.random.default_rng([config.seed, 2])
    n, c = args.chunks, config.chunk_size
    acts = {}
    if config.vocab_size is not None:
        tokens = rng.integers(0, config.vocab_size, size=n * c, dtype=np.int64)
        acts["tokens"] = tokens.astype(np.float32)
        embedded = embed_tokens(weights, tokens)
        inputs = [embedded[t * c : (t + 1) * c] for t in range(n)]
    elif config.io_dim is not None:
        raw = [
            rng.standard_normal((c, config.io_dim)).astype(np.float32)
            for _ in range(n)
        ]
        for t, x in enumerate(raw):
            acts[f"chunk{t:04d}.input"] = x
        inputs = [project_in(weights, x) for x in raw]
    else:
        inputs = [
            rng.standard_normal((c, config.d_model)).astype(np.float32)
            for _ in range(n)
        ]
        for t, x in enumerate(inputs):
            acts[f"chunk{t:04d}.input"] = x

    for t, x in enumerate(inputs):
        outs = []
        engine.process_chunk(x, layer_outputs=outs)
        for layer, h in enumerate(outs):
            acts[f"chunk{t:04d}.layer{layer}.h_out"] = h
    manifest = write_tensors(out, "activations", acts)
    print(f"wrote {manifest}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="vssm",
        description="streaming hybrid-memory sequence engine",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="model config JSON")
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("equiv", help="streaming vs replay self check")
    common(p)
    p.add_argument("--chunks", type=int, default=32)
    p.add_argument("--tolerance", type=float, default=EQUIV_TOLERANCE)
    p.set_defaults(handler=cmd_equiv)

    p = sub.add_parser("bench", help="latency and footprint report")
    common(p)
    p.add_argument("--lengths", required=True, help="comma-separated token counts")
    p.add_argument("--out", required=True)
    p.add_argument("--warmup", type=int, default=20)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--weights", default=None, help="weights manifest JSON")
    p.set_defaults(handler=cmd_bench)

    p = sub.add_parser("recall", help="needle recall eval")
    common(p)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--distances", default="16,64,128")
    p.add_argument("--length", type=int, default=144)
    p.add_argument("--window-only", action="store_true")
    p.add_argument("--weights", default=None, help="weights manifest JSON")
    p.add_argument("--out", default=None)
    p.set_defaults(handler=cmd_recall)

    p = sub.add_parser("generate", help="sample a sequence chunk by chunk")
    common(p)
    p.add_argument("--chunks", type=int, required=True)
    p.add_argument("--steps", type=int, default=4)
    p.add_argument("--out", required=True)
    p.add_argument("--weights", default=None, help="weights manifest JSON")
    p.set_defaults(handler=cmd_generate)

    p = sub.add_parser(
        "dump-activations", help="write weights and per-layer chunk outputs"
    )
    common(p)
    p.add_argument("--chunks", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--weights", default=None, help="weights manifest JSON")
    p.add_argument(
        "--window-only", action="store_true", help="force the memory gate to zero"
    )
    p.set_defaults(handler=cmd_dump_activations)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = _load_config(args.config)
        seed = _resolve_seed(args, config)
        if seed != config.seed:
            config = dataclasses.replace(config, seed=seed)
        return args.handler(args, config)
    except ContractViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
