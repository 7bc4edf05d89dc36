"""Command-line harness: model training, decoding, benchmarks, and sweeps.

Every subcommand resolves its settings from defaults, an optional JSON config
file, and explicit flags (in that order), embeds the resolved settings plus
their hash in every artifact it writes, and is byte-reproducible for a fixed
seed. Wall-clock timings go to stderr only so artifacts stay deterministic.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from . import corpus as corpus_mod
from .controller import ControllerConfig
from .core import Vocabulary
from .drafter import refine
from .engine import DrafterConfig, EngineConfig, StepRecord, ar_greedy_decode, decode
from .metrics import CostModel, ablate, run_prompts, summarize, sweep
from .models import BidirectionalDenoiser, NGramModel, train_denoiser, train_ngram
from .search import PruneConfig, SearchConfig

TRACE_VERSION = 1

DEFAULT_SETTINGS = {
    "mode": "greedy",
    "max_new_tokens": 64,
    "seed": 0,
    "cps": True,
    "adl": True,
    "beam": 3,
    "tau": 0.8,
    "m_max": 15,
    "lambda": 0.5,
    "k_min": 20,
    "k_max": 30,
    "delta": 10,
    "rho": 0.5,
    "steps": 1,
    "top_k_refine": 1,
    "w_bi": None,
    "l2r_uses_past_block": False,
    "stochastic_path": "proxy-sample",
    "eos_stop_on_any": False,
    "renormalize_column": False,
    "c_target": 1.0,
    "c_draft": 0.2,
    "c_cps": 0.001,
    "c_ar_token": 1.0,
}


def canonical_json(payload) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def config_hash(settings: dict) -> str:
    return hashlib.sha256(canonical_json(settings).encode()).hexdigest()[:16]


def resolve_settings(args: argparse.Namespace) -> dict:
    settings = dict(DEFAULT_SETTINGS)
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        loaded = json.loads(Path(cfg_path).read_text())
        unknown = set(loaded) - set(DEFAULT_SETTINGS)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        settings.update(loaded)
    for key in DEFAULT_SETTINGS:
        val = getattr(args, key.replace("-", "_"), None)
        if val is not None:
            settings[key] = val
    return settings


def engine_config(settings: dict) -> EngineConfig:
    return EngineConfig(
        mode=settings["mode"],
        max_output_len=settings["max_new_tokens"],
        seed=settings["seed"],
        path_search=settings["cps"],
        adaptive_length=settings["adl"],
        search=SearchConfig(
            beam=settings["beam"],
            lam=settings["lambda"],
            prune=PruneConfig(
                tau=settings["tau"],
                m_max=settings["m_max"],
                renormalize_column=settings["renormalize_column"],
            ),
            eos_stop_on_any=settings["eos_stop_on_any"],
        ),
        controller=ControllerConfig(
            k_min=settings["k_min"],
            k_max=settings["k_max"],
            delta=settings["delta"],
            rho=settings["rho"],
        ),
        drafter=DrafterConfig(
            steps=settings["steps"],
            top_k_refine=settings["top_k_refine"],
            m_max=settings["m_max"],
            w_bi=settings["w_bi"],
            l2r_uses_past_block=settings["l2r_uses_past_block"],
        ),
        stochastic_path=settings["stochastic_path"],
    )


def cost_model(settings: dict) -> CostModel:
    return CostModel(
        c_target=settings["c_target"],
        c_draft=settings["c_draft"],
        c_cps=settings["c_cps"],
        c_ar_token=settings["c_ar_token"],
    )


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")


def format_cell(value) -> str:
    if isinstance(value, bool):
        return "on" if value else "off"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence], hash_line: str) -> None:
    lines = [f"# config_hash={hash_line}", ",".join(header)]
    lines.extend(",".join(format_cell(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")


def write_trace(path: Path, traces: Sequence[Sequence[StepRecord]]) -> None:
    with path.open("w") as fh:
        for prompt_idx, trace in enumerate(traces):
            for rec in trace:
                line = {"v": TRACE_VERSION, "prompt": prompt_idx}
                line.update(rec.to_dict())
                fh.write(canonical_json(line) + "\n")


def read_trace(path: str | Path) -> list[list[StepRecord]]:
    traces: dict[int, list[StepRecord]] = {}
    for raw in Path(path).read_text().splitlines():
        payload = json.loads(raw)
        version = payload.pop("v", None)
        if version != TRACE_VERSION:
            raise ValueError(f"unsupported trace version {version!r}")
        prompt_idx = payload.pop("prompt")
        traces.setdefault(prompt_idx, []).append(StepRecord.from_dict(payload))
    return [traces[i] for i in sorted(traces)]


def _load_models(args) -> tuple[NGramModel, BidirectionalDenoiser, NGramModel]:
    target = NGramModel.load(args.target)
    denoiser = BidirectionalDenoiser.load(args.denoiser)
    proxy = NGramModel.load(args.proxy) if args.proxy else target
    return target, denoiser, proxy


def _train_stack(args, settings) -> tuple[NGramModel, BidirectionalDenoiser, NGramModel, corpus_mod.Corpus]:
    """Fit target, proxy and drafter on the training split of one corpus file."""
    corp = corpus_mod.load_corpus(args.corpus, args.tokenizer, args.test_mod)
    train = corp.train_docs()
    target = train_ngram(train, args.target_order, args.k_add, corp.vocab)
    proxy = target if args.proxy_order == args.target_order else train_ngram(train, args.proxy_order, args.k_add, corp.vocab)
    w_bi = settings["w_bi"] if settings["w_bi"] is not None else 0.5
    denoiser = train_denoiser(train, args.drafter_order, args.k_add, w_bi, corp.vocab)
    return target, denoiser, proxy, corp


def cmd_synth_corpus(args) -> int:
    lines = corpus_mod.synthesize_corpus(args.seed, args.docs, args.words, args.min_len, args.max_len)
    Path(args.out).write_text("\n".join(lines) + "\n")
    print(f"wrote {len(lines)} documents to {args.out}")
    return 0


def cmd_build_vocab(args) -> int:
    vocab = corpus_mod.build_vocabulary(corpus_mod.read_lines(args.corpus), args.tokenizer)
    write_json(Path(args.out), {"tokenizer": args.tokenizer, **vocab.to_dict()})
    print(f"wrote vocabulary of {len(vocab)} tokens to {args.out}")
    return 0


def _training_docs(args) -> tuple[list[list[int]], Vocabulary]:
    corp = corpus_mod.load_corpus(args.corpus, args.tokenizer, args.test_mod)
    docs = corp.documents if args.split == "all" else corp.train_docs()
    if not docs:
        raise ValueError("empty corpus")
    return docs, corp.vocab

def cmd_train_ngram(args) -> int:
    docs, vocab = _training_docs(args)
    model = train_ngram(docs, args.order, args.k_add, vocab)
    model.save(args.out)
    print(f"trained order-{args.order} model on {len(docs)} documents -> {args.out}")
    return 0


def cmd_train_denoiser(args) -> int:
    docs, vocab = _training_docs(args)
    model = train_denoiser(docs, args.order, args.k_add, args.w_bi_train, vocab)
    model.save(args.out)
    print(f"trained order-{args.order} denoiser on {len(docs)} documents -> {args.out}")
    return 0


def cmd_decode(args) -> int:
    settings = resolve_settings(args)
    target, denoiser, proxy = _load_models(args)
    prompts = corpus_mod.load_prompts(args.prompts, target.vocab, args.tokenizer)
    if not prompts:
        raise ValueError("no prompts")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    outputs: list[list[int]] = []
    if args.baseline == "ar-greedy":
        for prompt in prompts:
            outputs.append(ar_greedy_decode(target, prompt, settings["max_new_tokens"]))
        traces: list[list[StepRecord]] = []
    else:
        cfg = engine_config(settings)
        traces = run_prompts(
            target, denoiser, proxy, prompts, cfg, on_output=lambda i, out: outputs.append(out)
        )
    elapsed = time.perf_counter() - started
    text = [
        corpus_mod.detokenize(target.vocab.decode(seq), args.tokenizer) for seq in outputs
    ]
    (out_dir / "output.txt").write_text("\n".join(text) + "\n")
    write_trace(out_dir / "trace.jsonl", traces)
    payload = {
        "config": settings,
        "config_hash": config_hash(settings),
        "baseline": args.baseline,
        "prompts": len(prompts),
        "tokens": sum(len(o) - len(p) for o, p in zip(outputs, prompts)),
    }
    write_json(out_dir / "summary.json", payload)
    print(f"decoded {len(prompts)} prompts -> {out_dir}", file=sys.stderr)
    print(f"wall_s={elapsed:.3f}", file=sys.stderr)
    return 0


def cmd_bench(args) -> int:
    settings = resolve_settings(args)
    target, denoiser, proxy, corp = _train_stack(args, settings)
    prompts = corpus_mod.prompts_from_docs(corp.test_docs(), args.prompt_tokens, args.num_prompts)
    if not prompts:
        raise ValueError("no benchmark prompts; corpus test split too small")
    cfg = engine_config(settings)
    cost = cost_model(settings)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    traces = run_prompts(target, denoiser, proxy, prompts, cfg)
    elapsed = time.perf_counter() - started
    summary = summarize(traces, cost)
    chash = config_hash(settings)
    write_trace(out_dir / "trace.jsonl", traces)
    write_json(out_dir / "summary.json", {"config": settings, "config_hash": chash, **summary.to_dict()})
    rows = [
        [i, len(trace), sum(r.committed for r in trace), sum(r.l_acc for r in trace) / len(trace)]
        for i, trace in enumerate(traces)
    ]
    write_csv(out_dir / "metrics.csv", ["prompt", "steps", "tokens", "mean_l_acc"], rows, chash)
    print(f"mat={summary.mat:.3f} speedup={summary.speedup:.3f}", file=sys.stderr)
    print(f"wall_s={elapsed:.3f}", file=sys.stderr)
    return 0


def cmd_ablate(args) -> int:
    settings = resolve_settings(args)
    target, denoiser, proxy, corp = _train_stack(args, settings)
    prompts = corpus_mod.prompts_from_docs(corp.test_docs(), args.prompt_tokens, args.num_prompts)
    if not prompts:
        raise ValueError("no benchmark prompts; corpus test split too small")
    cfg = engine_config(settings)
    cost = cost_model(settings)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = ablate(target, denoiser, proxy, prompts, cfg, cost)
    chash = config_hash(settings)
    write_csv(
        out_dir / "ablate.csv",
        ["cps", "adl", "mat", "speedup", "tokens", "steps"],
        [[r["cps"], r["adl"], r["mat"], r["speedup"], r["tokens"], r["steps"]] for r in rows],
        chash,
    )
    write_json(out_dir / "summary.json", {"config": settings, "config_hash": chash, "cells": rows})
    for r in rows:
        print(
            f"cps={'on' if r['cps'] else 'off'} adl={'on' if r['adl'] else 'off'} "
            f"mat={r['mat']:.3f} speedup={r['speedup']:.3f}",
            file=sys.stderr,
        )
    return 0


def cmd_sweep(args) -> int:
    settings = resolve_settings(args)
    target, denoiser, proxy, corp = _train_stack(args, settings)
    prompts = corpus_mod.prompts_from_docs(corp.test_docs(), args.prompt_tokens, args.num_prompts)
    if not prompts:
        raise ValueError("no benchmark prompts; corpus test split too small")
    cfg = engine_config(settings)
    cost = cost_model(settings)
    values = [float(v) for v in args.values.split(",") if v]
    rows = sweep(target, denoiser, proxy, prompts, cfg, cost, args.knob, values)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    chash = config_hash(settings)
    write_csv(
        out_dir / "sweep.csv",
        ["knob", "value", "mat", "speedup"],
        [[r["knob"], r["value"], r["mat"], r["speedup"]] for r in rows],
        chash,
    )
    write_json(out_dir / "summary.json", {"config": settings, "config_hash": chash, "rows": rows})
    return 0


def cmd_dump_lattice(args) -> int:
    settings = resolve_settings(args)
    denoiser = BidirectionalDenoiser.load(args.denoiser)
    if settings["w_bi"] is not None:
        denoiser = denoiser.with_weight(settings["w_bi"])
    prompts = corpus_mod.load_prompts(args.prompts, denoiser.vocab, args.tokenizer)
    if not prompts:
        raise ValueError("no prompts")
    k = args.k if args.k is not None else settings["k_max"]
    _, lattice = refine(
        denoiser, prompts[0], k, settings["steps"], settings["top_k_refine"], settings["m_max"]
    )
    with Path(args.out).open("w") as fh:
        for offset, col in enumerate(lattice.columns):
            for tok, score in zip(col.token_ids, col.scores):
                fh.write(
                    canonical_json(
                        {
                            "position": lattice.start + offset,
                            "token_id": tok,
                            "token": denoiser.vocab.token_of(tok),
                            "score": score,
                        }
                    )
                    + "\n"
                )
    print(f"wrote lattice for k={k} to {args.out}")
    return 0


def _add_settings_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON settings file; flags override its values")
    p.add_argument("--mode", choices=["greedy", "stochastic"])
    p.add_argument("--max-new-tokens", type=int, dest="max_new_tokens")
    p.add_argument("--seed", type=int)
    p.add_argument("--cps", type=_on_off)
    p.add_argument("--adl", type=_on_off)
    p.add_argument("--beam", type=int)
    p.add_argument("--tau", type=float)
    p.add_argument("--m-max", type=int, dest="m_max")
    p.add_argument("--lambda", type=float, dest="lambda_", metavar="LAMBDA")
    p.add_argument("--k-min", type=int, dest="k_min")
    p.add_argument("--k-max", type=int, dest="k_max")
    p.add_argument("--delta", type=int)
    p.add_argument("--rho", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--top-k-refine", type=int, dest="top_k_refine")
    p.add_argument("--w-bi", type=float, dest="w_bi")
    p.add_argument("--stochastic-path", choices=["proxy-sample", "cps"], dest="stochastic_path")
    p.add_argument("--c-target", type=float, dest="c_target")
    p.add_argument("--c-draft", type=float, dest="c_draft")
    p.add_argument("--c-cps", type=float, dest="c_cps")
    p.add_argument("--c-ar-token", type=float, dest="c_ar_token")


def _on_off(value: str) -> bool:
    if value in ("on", "true", "1"):
        return True
    if value in ("off", "false", "0"):
        return False
    raise argparse.ArgumentTypeError(f"expected on/off, got {value!r}")


def _add_corpus_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--corpus", required=True)
    p.add_argument("--tokenizer", choices=["whitespace", "byte"], default="whitespace")
    p.add_argument("--test-mod", type=int, default=5, dest="test_mod")


def _add_stack_flags(p: argparse.ArgumentParser) -> None:
    _add_corpus_flags(p)
    p.add_argument("--target-order", type=int, default=3, dest="target_order")
    p.add_argument("--proxy-order", type=int, default=3, dest="proxy_order")
    p.add_argument("--drafter-order", type=int, default=2, dest="drafter_order")
    p.add_argument("--k-add", type=float, default=0.1, dest="k_add")
    p.add_argument("--prompt-tokens", type=int, default=8, dest="prompt_tokens")
    p.add_argument("--num-prompts", type=int, default=None, dest="num_prompts")
    p.add_argument("--out", required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="speclab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-corpus", help="generate a deterministic demo corpus")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--docs", type=int, default=500)
    p.add_argument("--words", type=int, default=60)
    p.add_argument("--min-len", type=int, default=20, dest="min_len")
    p.add_argument("--max-len", type=int, default=80, dest="max_len")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth_corpus)

    p = sub.add_parser("build-vocab", help="build a vocabulary file from a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--tokenizer", choices=["whitespace", "byte"], default="whitespace")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_vocab)

    p = sub.add_parser("train-ngram", help="fit an autoregressive n-gram model")
    _add_corpus_flags(p)
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--k-add", type=float, default=0.1, dest="k_add")
    p.add_argument("--split", choices=["train", "all"], default="train")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_ngram)

    p = sub.add_parser("train-denoiser", help="fit the forward+backward drafter")
    _add_corpus_flags(p)
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--k-add", type=float, default=0.1, dest="k_add")
    p.add_argument("--w-bi-train", type=float, default=0.5, dest="w_bi_train")
    p.add_argument("--split", choices=["train", "all"], default="train")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_denoiser)

    p = sub.add_parser("decode", help="speculatively decode a prompt file")
    p.add_argument("--target", required=True)
    p.add_argument("--denoiser", required=True)
    p.add_argument("--proxy", default=None)
    p.add_argument("--prompts", required=True)
    p.add_argument("--tokenizer", choices=["whitespace", "byte"], default="whitespace")
    p.add_argument("--baseline", choices=["ar-greedy"], default=None)
    p.add_argument("--out", required=True)
    _add_settings_flags(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("bench", help="train on a corpus and benchmark its test split")
    _add_stack_flags(p)
    _add_settings_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("ablate", help="toggle grid over path search and adaptive length")
    _add_stack_flags(p)
    _add_settings_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", help="sweep one knob and record MAT/speedup")
    _add_stack_flags(p)
    _add_settings_flags(p)
    p.add_argument("--knob", required=True, choices=["steps", "beam", "m-max", "tau", "fixed-k"])
    p.add_argument("--values", required=True, help="comma-separated knob values")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("dump-lattice", help="emit the drafted candidate lattice as JSONL")
    p.add_argument("--denoiser", required=True)
    p.add_argument("--prompts", required=True)
    p.add_argument("--tokenizer", choices=["whitespace", "byte"], default="whitespace")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--out", required=True)
    _add_settings_flags(p)
    p.set_defaults(func=cmd_dump_lattice)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if hasattr(args, "lambda_") and args.lambda_ is not None:
        setattr(args, "lambda", args.lambda_)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
