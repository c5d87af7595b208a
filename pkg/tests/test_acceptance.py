"""Acceptance suite. One PASS/FAIL line per criterion is printed in the terminal summary.

Real-corpus checks read from ``$TGNN_DATA_DIR`` (default ``<repo>/data``)::

    R8/train.txt  R8/test.txt
    Ohsumed/train.txt  Ohsumed/test.txt     (R52/ is used when Ohsumed/ is absent)
    glove.6B.300d.txt

When a file is missing the criterion fails and says which file. ``TGNN_JOBS``
sets how many training runs execute in parallel.
"""

import os
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from acceptance_results import record
from oracles import brute_force_message_pass, brute_force_pmi
from synthetic import write_corpus
from textgnn.checkpoint import load_checkpoint, save_checkpoint
from textgnn.cli import main
from textgnn.data import Document
from textgnn.edges import build_edge_vocabulary, compute_pmi_table, count_edge_pairs
from textgnn.experiments import ExperimentSpec, edge_setup, prepared_corpus, run_many, run_memory_report
from textgnn.gradcheck import gradient_check
from textgnn.graph import GraphBatch, build_graphs, build_text_graph
from textgnn.model import ModelConfig, Params, initialize_params, message_pass
from textgnn.trainer import TrainConfig, evaluate, evaluate_accuracy, train

DATA = Path(os.environ.get("TGNN_DATA_DIR", Path(__file__).resolve().parents[1] / "data"))
JOBS = int(os.environ.get("TGNN_JOBS", "1"))
SEEDS = (0, 1, 2)


def _require(name, *paths):
    missing = [str(p) for p in paths if not p.exists()]
    if missing:
        record(name, False, "data unavailable: " + ", ".join(missing))
        pytest.fail("missing data files: " + ", ".join(missing))


def _dataset(name):
    return DATA / name / "train.txt", DATA / name / "test.txt"


GLOVE = DATA / "glove.6B.300d.txt"


def _spec(dataset, glove=True, **kw):
    train, test = _dataset(dataset)
    return ExperimentSpec(str(train), str(test), embeddings=str(GLOVE) if glove else None, seeds=SEEDS, **kw)


_accuracy_memo: dict = {}


def _accuracies(spec):
    """Test accuracy per seed; runs shared between criteria are trained once."""
    todo = [(spec, s) for s in spec.seeds if (spec, s) not in _accuracy_memo]
    for job, acc in zip(todo, run_many(todo, JOBS)):
        _accuracy_memo[job] = acc
    return [_accuracy_memo[(spec, s)] for s in spec.seeds]


def _random_params(rng, num_words, num_edges, d, c=3):
    return Params(rng.normal(size=(num_words, d)), rng.normal(size=num_edges), rng.uniform(0, 1, num_words),
                  rng.normal(size=(d, c)), rng.normal(size=c))


def test_gradient_correctness():
    rng = np.random.default_rng(2024)
    combos = [(p, red, trainable) for p in (1, 3, 5) for red in ("max", "mean") for trainable in (True, False)]
    start = time.perf_counter()
    worst, checked, excluded, n_docs = 0.0, 0, 0, 120
    for i in range(n_docs):
        p, reduction, trainable = combos[i % len(combos)]
        length = int(rng.integers(1, 41))
        tokens = tuple(int(t) for t in rng.integers(0, 15, size=length))
        doc = Document(int(rng.integers(3)), tokens)
        ev = build_edge_vocabulary(count_edge_pairs([doc], p, 15), 2)
        params = _random_params(rng, 15, ev.size, d=4)
        config = ModelConfig(reduction=reduction, dropout_keep=1.0, edges_trainable=trainable)
        result = gradient_check(build_text_graph(doc, p, ev), params, config, eps=1e-4)
        worst = max(worst, result.max_rel_error)
        checked += result.checked
        excluded += len(result.excluded)
    elapsed = time.perf_counter() - start
    ok = worst < 1e-3 and elapsed < 120
    record("gradient_correctness", ok, f"{n_docs} docs, {checked} coords ({excluded} tie-excluded), "
           f"max rel err {worst:.2e} (< 1e-3), {elapsed:.1f}s (< 120s)")
    assert ok


def test_oracle_equivalence():
    rng = np.random.default_rng(7)
    mismatches = 0
    for _ in range(1000):
        p = int(rng.integers(1, 6))
        tokens = [int(t) for t in rng.integers(0, 8, size=int(rng.integers(1, 16)))]
        doc = Document(0, tuple(tokens))
        ev = build_edge_vocabulary(count_edge_pairs([doc], p, 8), int(rng.integers(1, 3)))
        params = _random_params(rng, 8, ev.size, d=3)
        out, _ = message_pass(GraphBatch.from_graphs([build_text_graph(doc, p, ev)]), params, ModelConfig())
        expected = brute_force_message_pass(tokens, p, ev.lookup, params.embeddings, params.edge_weights,
                                            params.gates)
        mismatches += not np.array_equal(out, np.array(expected))

    toy = [Document(0, tuple(t)) for t in ([0, 1, 2, 3, 4, 5, 6, 7], [0, 1, 0, 1, 8, 9], [2, 3, 2, 3, 4],
                                           [5, 6, 7, 8, 9, 5, 6, 7, 8, 9, 0, 0], [1, 9])]
    pmi_ok = all(compute_pmi_table(toy, w, 10).as_dict() == brute_force_pmi(toy, w) for w in (2, 3, 5, 20))
    ok = mismatches == 0 and pmi_ok
    record("oracle_equivalence", ok, f"message pass {1000 - mismatches}/1000 graphs exact; "
           f"PMI toy corpus exact: {pmi_ok}")
    assert ok


def test_overfit_sanity():
    _require("overfit_sanity", *_dataset("R8"))
    spec = _spec("R8", glove=False)
    corpus, vocab = prepared_corpus(spec)
    edge_vocab, _ = edge_setup(spec, corpus, vocab)
    subset = build_graphs(corpus.train[:32], spec.p, edge_vocab)
    params = initialize_params(len(vocab), edge_vocab.size, corpus.num_classes, spec.d, seed=0)
    config = TrainConfig(max_epochs=200, patience=200)
    params, report = train(params, subset, subset, (), config)
    acc = evaluate_accuracy(params, subset, config.model)
    hit = next((r.epoch for r in report.epochs if r.val_acc == 1.0), None)
    ok = acc == 1.0 and report.wall_clock < 60
    record("overfit_sanity", ok, f"32-doc train accuracy {acc:.4f} (first 100% at epoch {hit}), "
           f"{report.wall_clock:.1f}s (< 60s)")
    assert ok


@pytest.mark.slow
def test_r8_accuracy():
    _require("r8_accuracy", *_dataset("R8"), GLOVE)
    glove = _accuracies(_spec("R8"))
    random_init = _accuracies(_spec("R8", ablation="random_embeddings"))
    g, r = 100 * np.mean(glove), 100 * np.mean(random_init)
    ok = g >= 96.8 and r >= 96.0
    record("r8_accuracy", ok, f"GloVe {g:.2f} (>= 96.8), random init {r:.2f} (>= 96.0) over seeds {SEEDS}")
    assert ok


@pytest.mark.slow
def test_window_sweep_trend():
    _require("window_sweep_trend", *_dataset("R8"), GLOVE)
    base = _spec("R8")
    means = {p: 100 * np.mean(_accuracies(replace(base, p=p))) for p in (1, 3, 19)}
    ok = means[3] > means[1] and means[3] > means[19]
    record("window_sweep_trend", ok, "  ".join(f"p={p}: {m:.2f}" for p, m in means.items()))
    assert ok


@pytest.mark.slow
def test_ablation_ordering():
    name = "R52" if _dataset("R52")[0].exists() and not _dataset("Ohsumed")[0].exists() else "Ohsumed"
    _require("ablation_ordering", *_dataset(name), GLOVE)
    base = _spec(name)
    means = {v: 100 * np.mean(_accuracies(replace(base, ablation=v)))
             for v in ("none", "mean_reduction", "fixed_pmi", "random_embeddings")}
    ok = all(means["none"] > means[v] for v in ("mean_reduction", "fixed_pmi", "random_embeddings"))
    record("ablation_ordering", ok, f"{name}: " + "  ".join(f"{v} {m:.2f}" for v, m in means.items()))
    assert ok


def test_memory_claim():
    _require("memory_claim", *_dataset("R8"))
    report = run_memory_report(_spec("R8", glove=False))
    edges, ratio = report["our_edges"], report["edge_ratio"]
    ok = 150_000 <= edges <= 400_000 and ratio < 0.15
    record("memory_claim", ok, f"edge params {edges:,} (in [150k, 400k]), corpus graph "
           f"{report['corpus_graph_edges']:,}, ratio {100 * ratio:.1f}% (< 15%)")
    assert ok


def test_determinism_and_format(tmp_path):
    train, test = write_corpus(tmp_path / "corpus", n_train=200, n_test=80)
    args = ["train", "--train", str(train), "--test", str(test), "--min-freq", "2", "--d", "32",
            "--max-epochs", "4", "--seed", "3"]
    runs = [tmp_path / "a", tmp_path / "b"]
    for out in runs:
        assert main([*args, "--out-dir", str(out)]) == 0
    same = {name: (runs[0] / name).read_bytes() == (runs[1] / name).read_bytes()
            for name in ("metrics.tsv", "model.tgnn")}

    ckpt = load_checkpoint(runs[0] / "model.tgnn")
    spec = ExperimentSpec(str(train), str(test), min_freq=2, d=32, max_epochs=4)
    corpus, _ = prepared_corpus(spec)
    config = ModelConfig(**ckpt.meta["model"])
    graphs = build_graphs(corpus.test, ckpt.edge_vocab.p, ckpt.edge_vocab)
    reloaded = evaluate(ckpt.params, graphs, config)
    # saving again from the loaded state must reproduce the file and the evaluation
    save_checkpoint(tmp_path / "again.tgnn", ckpt)
    again = load_checkpoint(tmp_path / "again.tgnn")
    round_trip = ((tmp_path / "again.tgnn").read_bytes() == (runs[0] / "model.tgnn").read_bytes()
                  and evaluate(again.params, graphs, config) == reloaded)
    test_acc = float((runs[0] / "metrics.tsv").read_text().splitlines()[-1].split("\t")[1])
    round_trip = round_trip and f"{reloaded[1]:.6f}" == f"{test_acc:.6f}"
    ok = all(same.values()) and round_trip
    record("determinism_and_format", ok, f"byte-identical {same}; checkpoint round trip "
           f"reproduces test accuracy {reloaded[1]:.4f}: {round_trip}")
    assert ok
