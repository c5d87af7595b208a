"""Command line: prepare, train, eval, sweep-p, ablate, memory.

Every command writes its artifacts under ``--out-dir``. Failures exit with
status 1 and a single ``error: <category>: <message>`` line on stderr.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data import Document, corpus_stats, read_labeled_file
from .edges import build_edge_vocabulary, count_edge_pairs, dump_edge_tsv
from .errors import DataError, TGNNError
from .experiments import (ABLATIONS, ExperimentSpec, prepared_corpus, run_ablation, run_memory_report,
                          run_single, run_window_sweep, summary_csv, summary_tsv)
from .graph import GraphBatch, build_graphs
from .model import ModelConfig, config_fields, predict
from .trainer import evaluate_accuracy


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _add_data_args(ap: argparse.ArgumentParser):
    ap.add_argument("--train", required=True, help="training file, one '<label>\\t<text>' per line")
    ap.add_argument("--test", required=True, help="test file in the same format")
    ap.add_argument("--min-freq", type=int, default=5)
    ap.add_argument("--val-ratio", type=float, default=0.1)
    ap.add_argument("--split-seed", type=int, default=0)
    ap.add_argument("--p", type=int, default=3, help="neighbors on each side of a word")
    ap.add_argument("--k", type=int, default=2, help="pairs seen fewer times share the public edge")
    ap.add_argument("--out-dir", default=".")


def _add_train_args(ap: argparse.ArgumentParser):
    ap.add_argument("--embeddings", help="GloVe-format text vectors; random init when omitted")
    ap.add_argument("--d", type=int, default=300)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--weight-decay", type=float, default=1e-4)
    ap.add_argument("--batch-size", type=int, default=32)
    ap.add_argument("--patience", type=int, default=10)
    ap.add_argument("--max-epochs", type=int, default=100)
    ap.add_argument("--dropout-keep", type=float, default=0.5)
    ap.add_argument("--reduction", choices=["max", "mean"], default="max")
    ap.add_argument("--mpm-steps", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--seeds", type=_int_list, help="comma-separated seeds for multi-run commands")
    ap.add_argument("--jobs", type=int, default=1, help="parallel runs for sweep-p/ablate")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="textgnn", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    prep = sub.add_parser("prepare", help="load, split and index a dataset")
    _add_data_args(prep)

    tr = sub.add_parser("train", help="train one model; writes metrics.tsv and model.tgnn")
    _add_data_args(tr)
    _add_train_args(tr)

    ev = sub.add_parser("eval", help="evaluate a checkpoint on a labeled file or classify raw text")
    ev.add_argument("--model", required=True)
    ev.add_argument("--test", help="labeled file to score")
    ev.add_argument("--text", action="append", default=[], help="raw text to classify (repeatable)")
    ev.add_argument("--out-dir", default=".")

    sw = sub.add_parser("sweep-p", help="accuracy as a function of the window p")
    _add_data_args(sw)
    _add_train_args(sw)
    sw.add_argument("--p-values", type=_int_list, default=list(range(1, 20)))

    ab = sub.add_parser("ablate", help="ablation variants against the original model")
    _add_data_args(ab)
    _add_train_args(ab)
    ab.add_argument("--variants", default=",".join(ABLATIONS))

    mem = sub.add_parser("memory", help="edge/parameter counts against a corpus-level graph")
    _add_data_args(mem)
    mem.add_argument("--d", type=int, default=300)
    mem.add_argument("--pmi-window", type=int, default=20)
    return ap


def spec_from_args(args, **overrides) -> ExperimentSpec:
    seeds = getattr(args, "seeds", None) or [getattr(args, "seed", 0)]
    fields = dict(
        train_path=args.train, test_path=args.test, p=args.p, k=args.k, min_freq=args.min_freq,
        val_ratio=args.val_ratio, split_seed=args.split_seed, seeds=tuple(seeds),
    )
    for name in ("embeddings", "d", "lr", "weight_decay", "batch_size", "patience", "max_epochs",
                 "dropout_keep", "reduction", "mpm_steps", "pmi_window"):
        if hasattr(args, name):
            fields[name] = getattr(args, name)
    fields.update(overrides)
    return ExperimentSpec(**fields)


def _write(out_dir: Path, name: str, text: str) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_text(text, encoding="utf-8")
    return path


def cmd_prepare(args) -> int:
    spec = spec_from_args(args)
    corpus, vocab = prepared_corpus(spec)
    out = Path(args.out_dir)
    _write(out, "corpus.json", corpus.to_json())
    _write(out, "vocab.tsv", "".join(f"{w}\t{f}\n" for w, f in zip(vocab.words, vocab.freqs)))
    stats = count_edge_pairs(corpus.train, spec.p, len(vocab))
    edge_vocab = build_edge_vocabulary(stats, spec.k)
    out.mkdir(parents=True, exist_ok=True)
    dump_edge_tsv(out / "edges.tsv", stats, edge_vocab, vocab.words)
    summary = {**corpus_stats(corpus), "vocab": len(vocab), "edge_params": edge_vocab.size}
    _write(out, "prepare.tsv", "".join(f"{k}\t{v}\n" for k, v in summary.items()))
    print("  ".join(f"{k}={v}" for k, v in summary.items()))
    return 0


def cmd_train(args) -> int:
    spec = spec_from_args(args)
    result = run_single(spec, args.seed)
    out = Path(args.out_dir)
    _write(out, "metrics.tsv", result.report.to_tsv())
    meta = {
        "labels": result.corpus.labels,
        "model": config_fields(spec.model_config()),
        "spec": {k: v for k, v in spec.to_dict().items() if k not in ("train_path", "test_path", "embeddings")},
        "seed": args.seed,
    }
    save_checkpoint(out / "model.tgnn", Checkpoint(result.params, result.vocab, result.edge_vocab, meta))
    r = result.report
    print(f"best epoch {r.best_epoch} of {len(r.epochs)}; test accuracy {r.test_accuracy:.4f}; "
          f"{r.wall_clock:.1f}s")
    return 0


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.model)
    config = ModelConfig(**ckpt.meta["model"])
    labels = ckpt.meta["labels"]
    p = ckpt.edge_vocab.p
    out = Path(args.out_dir)
    lines = []
    if args.test:
        index = {name: i for i, name in enumerate(labels)}
        docs = []
        for name, tokens in read_labeled_file(Path(args.test)):
            if name not in index:
                raise DataError(f"label {name!r} was not seen in training")
            if tokens:
                docs.append(Document(index[name], ckpt.vocab.encode(tokens)))
        acc = evaluate_accuracy(ckpt.params, build_graphs(docs, p, ckpt.edge_vocab), config)
        lines.append(f"accuracy\t{acc:.6f}")
        print(f"accuracy {acc:.4f} on {len(docs)} documents")
    for text in args.text:
        tokens = ckpt.vocab.encode(text.lower().split())
        if not tokens:
            raise DataError("cannot classify an empty text")
        graph = build_graphs([Document(-1, tokens)], p, ckpt.edge_vocab)
        label = labels[int(predict(GraphBatch.from_graphs(graph), ckpt.params, config)[0])]
        lines.append(f"predict\t{label}\t{text}")
        print(f"{label}\t{text}")
    if not lines:
        raise DataError("nothing to evaluate: pass --test and/or --text")
    _write(out, "eval.tsv", "\n".join(lines) + "\n")
    return 0


def cmd_sweep(args) -> int:
    spec = spec_from_args(args)
    rows = run_window_sweep(spec, args.p_values, workers=args.jobs)
    out = Path(args.out_dir)
    _write(out, "sweep.tsv", summary_tsv(rows, "p"))
    _write(out, "sweep.csv", summary_csv(rows, "p"))
    for r in rows:
        print(f"p={r.key}: {100 * r.mean:.2f} +- {100 * r.std:.2f}")
    return 0


def cmd_ablate(args) -> int:
    spec = spec_from_args(args)
    variants = [v for v in args.variants.split(",") if v]
    rows = run_ablation(spec, variants, workers=args.jobs)
    _write(Path(args.out_dir), "ablation.tsv", summary_tsv(rows, "variant"))
    for r in rows:
        print(f"{r.key}: {100 * r.mean:.2f} +- {100 * r.std:.2f}")
    return 0


def cmd_memory(args) -> int:
    spec = spec_from_args(args)
    report = run_memory_report(spec)
    _write(Path(args.out_dir), "memory.tsv",
           "metric\tvalue\n" + "".join(f"{k}\t{v}\n" for k, v in report.items()))
    print(f"text-level edges {report['our_edges']:,} vs corpus graph {report['corpus_graph_edges']:,} "
          f"({100 * report['edge_ratio']:.1f}%); parameters {report['our_params']:,} "
          f"= {report['our_bytes'] / 2**20:.1f} MiB at 4 bytes")
    return 0


COMMANDS = {
    "prepare": cmd_prepare, "train": cmd_train, "eval": cmd_eval,
    "sweep-p": cmd_sweep, "ablate": cmd_ablate, "memory": cmd_memory,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    np.seterr(over="ignore", under="ignore")
    try:
        return COMMANDS[args.command](args)
    except TGNNError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
    except FileNotFoundError as exc:
        print(f"error: io_error: {exc}", file=sys.stderr)
    except (ValueError, KeyError) as exc:
        print(f"error: invalid_input: {exc}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
