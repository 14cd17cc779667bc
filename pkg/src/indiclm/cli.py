"""Command-line interface.

Subcommands: clean, split, tok-train, tok-encode, tok-fertility, pretrain,
sft, generate, quantize, bench, serve. Heavy modules are imported inside
the handlers so thread pinning (serve --threads) can happen before numpy
loads its BLAS.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path


def _read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def cmd_clean(args):
    from . import corpus as C

    if args.config:
        raw = _read_json(args.config)
        config = C.CleanConfig(
            enabled_rules=tuple(raw.get("rules", C.RULE_ORDER)),
            allowed_script_ranges=tuple(tuple(r) for r in raw["allowed_script_ranges"])
            if "allowed_script_ranges" in raw
            else C.default_clean_config(*raw.get("scripts", ())).allowed_script_ranges,
            dedup_lines=raw.get("dedup_lines", False),
        )
    else:
        config = C.default_clean_config(*(args.scripts or ()))
    docs = C.read_documents(args.infile, language=args.language, script=args.script)
    cleaned = [C.clean_document(d, config) for d in docs]
    cleaned = [d for d in cleaned if d.text]
    deduped = C.deduplicate(cleaned, by_line=config.dedup_lines)
    C.write_documents(deduped, args.out)
    stats = C.corpus_stats(deduped)
    stats["dropped_empty"] = len(docs) - len(cleaned)
    stats["dropped_duplicates"] = len(cleaned) - len(deduped)
    report = json.dumps(stats, ensure_ascii=False, indent=2)
    if args.stats:
        Path(args.stats).write_text(report + "\n", encoding="utf-8")
    print(report)


def cmd_split(args):
    from . import corpus as C

    docs = C.read_documents(args.infile)
    train, val = C.split_train_val(docs, C.SplitSpec(args.fraction, args.seed))
    C.write_documents(train, args.out_train)
    C.write_documents(val, args.out_val)
    print(json.dumps({"train": len(train), "val": len(val)}))


def cmd_tok_train(args):
    from . import corpus as C, tokenizer as T

    docs = C.read_documents(args.infile)
    model = T.train_bpe(
        (d.text for d in docs), args.vocab_size, byte_fallback=not args.no_byte_fallback
    )
    T.save_tokenizer(model, args.out)
    print(json.dumps({"vocab_size": model.vocab_size, "merges": len(model.merges)}))


def cmd_tok_encode(args):
    from . import tokenizer as T

    model = T.load_tokenizer(args.tok)
    text = args.text if args.text is not None else Path(args.infile).read_text(encoding="utf-8")
    ids = T.encode(model, text)
    print(json.dumps({"tokens": len(ids), "ids": ids}))


def cmd_tok_fertility(args):
    from . import tokenizer as T

    model = T.load_tokenizer(args.tok)
    text = Path(args.infile).read_text(encoding="utf-8")
    print(json.dumps({"fertility": T.fertility(model, text)}))


def _tokenize_docs(tok_module, model, docs):
    import numpy as np

    parts = []
    for doc in docs:
        parts.append([model.bos_id] + tok_module.encode(model, doc.text))
    return np.concatenate([np.asarray(p, np.int64) for p in parts])


def cmd_pretrain(args):
    from . import corpus as C, model as M, tokenizer as T, train as TR

    cfg = M.ModelConfig(**_read_json(args.model_config))
    tok = T.load_tokenizer(args.tok)
    if cfg.vocab_size < tok.vocab_size:
        sys.exit(f"model vocab {cfg.vocab_size} < tokenizer vocab {tok.vocab_size}")
    docs = C.read_documents(args.corpus)
    train_docs, val_docs = C.split_train_val(docs, C.SplitSpec(args.fraction, args.seed))
    streams = {
        "train": _tokenize_docs(T, tok, train_docs),
        "val": _tokenize_docs(T, tok, val_docs) if val_docs else None,
    }
    tconf = TR.TrainConfig(
        learning_rate=args.lr,
        warmup_steps=args.warmup,
        max_steps=args.steps,
        batch_size=args.batch_size,
        seq_len=args.seq_len,
        eval_interval_k=args.eval_every,
        eval_batches=args.eval_batches,
        checkpoint_every=args.checkpoint_every,
        grad_clip=args.grad_clip,
        seed=args.seed,
    )
    params = M.init_model(cfg)
    if args.resume:
        params, state = TR.load_checkpoint(args.resume)
    else:
        state = None
    params, metrics = TR.pretrain(
        params, streams, tconf, metrics_path=args.metrics, checkpoint_path=args.out, state=state
    )
    TR.save_checkpoint(params, TR.TrainState(step=tconf.max_steps), args.out)
    last_val = metrics.entries("val")[-1] if metrics.entries("val") else None
    print(json.dumps({"final_train_loss": metrics.entries("train")[-1]["loss"],
                      "final_val": last_val}))


def cmd_sft(args):
    from . import instruct as I, model as M, tokenizer as T, train as TR

    tok = T.load_tokenizer(args.tok)
    params, _ = TR.load_checkpoint(args.model)
    template = I.template_for(args.template)
    examples = I.load_dataset(args.dataset)
    sequences = []
    for ex in examples:
        rendered, span = I.render_prompt(ex, template)
        seq = TR.build_sft_sequence(
            lambda s: T.encode(tok, s), rendered[: span[0]], rendered[span[0] :],
            tok.bos_id, tok.eos_id, params.config.context_len,
        )
        if seq is not None:
            sequences.append(seq)
    tconf = TR.TrainConfig(
        learning_rate=args.lr,
        warmup_steps=args.warmup,
        max_steps=args.steps,
        batch_size=args.batch_size,
        seq_len=args.seq_len,
        eval_interval_k=args.steps,
        checkpoint_every=args.checkpoint_every,
        seed=args.seed,
    )
    params, metrics, skipped = TR.finetune_sft(
        params, sequences, tconf, pad_id=tok.pad_id,
        metrics_path=args.metrics, checkpoint_path=args.out,
    )
    TR.save_checkpoint(params, TR.TrainState(step=tconf.max_steps), args.out)
    print(json.dumps({"final_loss": metrics.entries("train")[-1]["loss"],
                      "sequences": len(sequences), "skipped": skipped}))


def cmd_generate(args):
    from . import model as M, sampling as S, tokenizer as T
    from .quantize import load_any_checkpoint, quantized_matmul_fn

    tok = T.load_tokenizer(args.tok)
    params, precision = load_any_checkpoint(args.model)
    mm = quantized_matmul_fn(params) if precision == "int8" else M.fp32_matmul(params)
    prompt = (
        Path(args.prompt_file).read_text(encoding="utf-8").strip()
        if args.prompt_file
        else args.prompt
    )
    config = S.SamplerConfig(
        temperature=args.temperature,
        top_k=args.top_k,
        top_p=args.top_p,
        max_new_tokens=args.max_new_tokens,
        n_samples=args.n,
        seed=args.seed,
    )
    for sample in S.generate(params, tok, prompt, config, mm=mm):
        print(
            json.dumps(
                {
                    "prompt": prompt,
                    "sample_index": sample.index,
                    "text": sample.text,
                    "token_count": sample.token_count,
                    "seconds": sample.seconds,
                },
                ensure_ascii=False,
            )
        )


def cmd_quantize(args):
    from . import model as M
    from .quantize import quantize_int8, save_quantized

    params = M.load_params(args.model)
    qparams = quantize_int8(params)
    save_quantized(qparams, args.out)
    fp32_size = Path(args.model).stat().st_size
    int8_size = Path(args.out).stat().st_size
    print(json.dumps({"fp32_bytes": fp32_size, "int8_bytes": int8_size,
                      "ratio": int8_size / fp32_size}))


def cmd_bench(args):
    from dataclasses import asdict

    from . import tokenizer as T
    from .quantize import bench_inference, load_any_checkpoint

    tok = T.load_tokenizer(args.tok)
    params, precision = load_any_checkpoint(args.model)
    if args.precision and args.precision != precision and precision == "fp32":
        precision = args.precision
    prompt = (
        Path(args.prompt_file).read_text(encoding="utf-8").strip()
        if args.prompt_file
        else args.prompt
    )
    result = bench_inference(
        params, tok, prompt, args.n_tokens, precision,
        model_id=Path(args.model).stem, threads=args.threads,
    )
    print(json.dumps(asdict(result)))


def cmd_serve(args):
    if args.threads:
        for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, str(args.threads))
    from .server import load_models_dir, serve_http

    registry = load_models_dir(args.models_dir)
    if not registry:
        sys.exit(f"no model/tokenizer pairs found in {args.models_dir}")
    serve_http(registry, bind=args.bind, score_store_path=args.scores, ui_dir=args.ui_dir)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="indiclm")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("clean", help="clean and deduplicate a raw corpus")
    p.add_argument("--config", help="JSON cleaning config")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--stats")
    p.add_argument("--scripts", nargs="*", help="allowed scripts when no config given")
    p.add_argument("--language", default="")
    p.add_argument("--script", default="")
    p.set_defaults(func=cmd_clean)

    p = sub.add_parser("split", help="train/validation split of a corpus")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--fraction", type=float, default=0.95)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-train", required=True)
    p.add_argument("--out-val", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("tok-train", help="train a BPE tokenizer")
    p.add_argument("--vocab-size", type=int, required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-byte-fallback", action="store_true")
    p.set_defaults(func=cmd_tok_train)

    p = sub.add_parser("tok-encode", help="encode text with a tokenizer")
    p.add_argument("--tok", required=True)
    p.add_argument("--text")
    p.add_argument("--in", dest="infile")
    p.set_defaults(func=cmd_tok_encode)

    p = sub.add_parser("tok-fertility", help="tokens per word for a text file")
    p.add_argument("--tok", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.set_defaults(func=cmd_tok_fertility)

    p = sub.add_parser("pretrain", help="pretrain a model on a corpus")
    p.add_argument("--model-config", required=True)
    p.add_argument("--tok", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--metrics")
    p.add_argument("--resume")
    p.add_argument("--fraction", type=float, default=0.95)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=3e-4)
    p.add_argument("--warmup", type=int, default=100)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--seq-len", type=int, default=128)
    p.add_argument("--eval-every", type=int, default=200)
    p.add_argument("--eval-batches", type=int, default=8)
    p.add_argument("--checkpoint-every", type=int, default=200)
    p.add_argument("--grad-clip", type=float, default=1.0)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("sft", help="supervised fine-tuning on instructions")
    p.add_argument("--dataset", required=True)
    p.add_argument("--template", default="default")
    p.add_argument("--tok", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--metrics")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--warmup", type=int, default=20)
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--batch-size", type=int, default=4)
    p.add_argument("--seq-len", type=int, default=256)
    p.add_argument("--checkpoint-every", type=int, default=300)
    p.set_defaults(func=cmd_sft)

    p = sub.add_parser("generate", help="sample continuations from a model")
    p.add_argument("--model", required=True)
    p.add_argument("--tok", required=True)
    p.add_argument("--prompt")
    p.add_argument("--prompt-file")
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--top-k", type=int)
    p.add_argument("--top-p", type=float, default=0.9)
    p.add_argument("--max-new-tokens", type=int, default=64)
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("quantize", help="write an int8 checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("bench", help="CPU inference speed of greedy decoding")
    p.add_argument("--model", required=True)
    p.add_argument("--tok", required=True)
    p.add_argument("--prompt", default="नमस्ते")
    p.add_argument("--prompt-file")
    p.add_argument("--n-tokens", type=int, default=64)
    p.add_argument("--precision", choices=("fp32", "int8"))
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("serve", help="run the HTTP generation service")
    p.add_argument("--bind", default="127.0.0.1:8000")
    p.add_argument("--models-dir", required=True)
    p.add_argument("--threads", type=int)
    p.add_argument("--scores", help="score store path")
    p.add_argument("--ui-dir", help="static playground assets to mount at /app")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
