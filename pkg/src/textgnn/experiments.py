"""End-to-end runs: single training, window sweep, ablations and the memory report."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .data import UNK_ID, Corpus, Document, Vocabulary, load_pretrained_embeddings, prepare_corpus
from .edges import (EdgeVocabulary, build_edge_vocabulary, compute_pmi_table, corpus_graph_edge_count,
                    count_edge_pairs, pmi_edge_vocabulary)
from .errors import ConfigError, TGNNError
from .graph import build_graphs
from .model import ModelConfig, Params, count_capacity, initialize_params
from .trainer import TrainConfig, TrainReport, train

logger = logging.getLogger(__name__)

ABLATIONS = ("none", "fixed_pmi", "mean_reduction", "random_embeddings")


@dataclass(frozen=True)
class ExperimentSpec:
    train_path: str
    test_path: str
    embeddings: Optional[str] = None
    p: int = 3
    k: int = 2
    min_freq: int = 5
    val_ratio: float = 0.1
    split_seed: int = 0
    seeds: tuple = (0,)
    d: int = 300
    lr: float = 1e-3
    weight_decay: float = 1e-4
    batch_size: int = 32
    patience: int = 10
    max_epochs: int = 100
    dropout_keep: float = 0.5
    reduction: str = "max"
    mpm_steps: int = 1
    ablation: str = "none"
    pmi_window: int = 20

    def __post_init__(self):
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"ablation must be one of {ABLATIONS}, got {self.ablation!r}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.p < 1 or self.k < 1:
            raise ConfigError("p and k must be >= 1")

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            reduction="mean" if self.ablation == "mean_reduction" else self.reduction,
            dropout_keep=self.dropout_keep,
            edges_trainable=self.ablation != "fixed_pmi",
            mpm_steps=self.mpm_steps,
        )

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(lr=self.lr, weight_decay=self.weight_decay, batch_size=self.batch_size,
                           patience=self.patience, max_epochs=self.max_epochs, seed=seed,
                           model=self.model_config())

    def to_dict(self) -> dict:
        out = asdict(self)
        out["seeds"] = list(self.seeds)
        return out


@dataclass
class RunResult:
    seed: int
    params: Params
    report: TrainReport
    vocab: Vocabulary
    edge_vocab: EdgeVocabulary
    corpus: Corpus


@lru_cache(maxsize=4)
def _prepared(train_path, test_path, min_freq, val_ratio, split_seed):
    return prepare_corpus(train_path, test_path, min_freq=min_freq, val_ratio=val_ratio, seed=split_seed)


def prepared_corpus(spec: ExperimentSpec) -> tuple[Corpus, Vocabulary]:
    return _prepared(spec.train_path, spec.test_path, spec.min_freq, spec.val_ratio, spec.split_seed)


_embedding_cache: dict = {}


def embedding_matrix(spec: ExperimentSpec, vocab: Vocabulary) -> Optional[np.ndarray]:
    """Pretrained vectors for the run, or None for random init. Loaded once per process."""
    if spec.embeddings is None or spec.ablation == "random_embeddings":
        return None
    key = (spec.embeddings, spec.d, id(vocab))
    if key not in _embedding_cache:
        _embedding_cache[key] = load_pretrained_embeddings(spec.embeddings, vocab, spec.d)
    return _embedding_cache[key].matrix


def edge_setup(spec: ExperimentSpec, corpus: Corpus, vocab: Vocabulary):
    """Edge vocabulary plus optional fixed initial weights for the chosen variant."""
    if spec.ablation == "fixed_pmi":
        table = compute_pmi_table(corpus.train, spec.pmi_window, len(vocab))
        return pmi_edge_vocabulary(table, spec.p)
    stats = count_edge_pairs(corpus.train, spec.p, len(vocab))
    return build_edge_vocabulary(stats, spec.k), None


def run_single(spec: ExperimentSpec, seed: int) -> RunResult:
    corpus, vocab = prepared_corpus(spec)
    edge_vocab, edge_init = edge_setup(spec, corpus, vocab)
    if spec.ablation == "fixed_pmi" and edge_init is None:
        raise ConfigError("fixed PMI edges need a PMI table")
    graphs = {part: build_graphs(getattr(corpus, part), spec.p, edge_vocab) for part in ("train", "val", "test")}
    params = initialize_params(len(vocab), edge_vocab.size, corpus.num_classes, spec.d,
                               embedding_init=embedding_matrix(spec, vocab), seed=seed,
                               edge_init=edge_init)
    logger.info("training p=%d ablation=%s seed=%d: |V|=%d edges=%d", spec.p, spec.ablation, seed,
                len(vocab), edge_vocab.size)
    params, report = train(params, graphs["train"], graphs["val"], graphs["test"], spec.train_config(seed))
    return RunResult(seed, params, report, vocab, edge_vocab, corpus)


def _accuracy_job(args) -> float:
    spec, seed = args
    try:
        return run_single(spec, seed).report.test_accuracy
    except TGNNError as exc:
        raise type(exc)(f"p={spec.p} ablation={spec.ablation} seed={seed}: {exc}") from exc


def run_many(jobs: Sequence[tuple[ExperimentSpec, int]], workers: int = 1) -> list[float]:
    """Test accuracies for (spec, seed) jobs, in job order."""
    if workers <= 1:
        return [_accuracy_job(j) for j in jobs]
    with ProcessPoolExecutor(workers) as pool:
        return list(pool.map(_accuracy_job, jobs))


@dataclass
class SummaryRow:
    key: str
    accuracies: list[float]

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std(self) -> float:
        return float(np.std(self.accuracies))


def run_window_sweep(spec: ExperimentSpec, p_values: Sequence[int], workers: int = 1) -> list[SummaryRow]:
    if not p_values:
        raise ConfigError("p_values must not be empty")
    jobs = [(replace(spec, p=p), s) for p in p_values for s in spec.seeds]
    accs = run_many(jobs, workers)
    n = len(spec.seeds)
    return [SummaryRow(str(p), accs[i * n:(i + 1) * n]) for i, p in enumerate(p_values)]


def run_ablation(spec: ExperimentSpec, variants: Sequence[str] = ABLATIONS, workers: int = 1) -> list[SummaryRow]:
    for v in variants:
        if v not in ABLATIONS:
            raise ConfigError(f"unknown ablation {v!r}")
    jobs = [(replace(spec, ablation=v), s) for v in variants for s in spec.seeds]
    accs = run_many(jobs, workers)
    n = len(spec.seeds)
    return [SummaryRow(v, accs[i * n:(i + 1) * n]) for i, v in enumerate(variants)]


def summary_tsv(rows: Sequence[SummaryRow], key_name: str) -> str:
    lines = [f"{key_name}\tmean_acc\tstd\truns"]
    for r in rows:
        runs = ",".join(f"{a:.6f}" for a in r.accuracies)
        lines.append(f"{r.key}\t{r.mean:.6f}\t{r.std:.6f}\t{runs}")
    return "\n".join(lines) + "\n"


def summary_csv(rows: Sequence[SummaryRow], key_name: str) -> str:
    lines = [f"{key_name},mean_acc,std"]
    lines += [f"{r.key},{r.mean:.6f},{r.std:.6f}" for r in rows]
    return "\n".join(lines) + "\n"


def run_memory_report(spec: ExperimentSpec, num_classes: Optional[int] = None) -> dict:
    """Parameter counts of the text-level model against a whole-corpus graph's edge count."""
    corpus, vocab = prepared_corpus(spec)
    edge_vocab = build_edge_vocabulary(count_edge_pairs(corpus.train, spec.p, len(vocab)), spec.k)
    c = num_classes or corpus.num_classes
    shape_only = Params(np.empty((len(vocab), spec.d), np.float32), np.empty(edge_vocab.size, np.float32),
                        np.empty(len(vocab), np.float32), np.empty((spec.d, c), np.float32),
                        np.empty(c, np.float32))
    capacity = count_capacity(shape_only)
    # the corpus graph keeps only in-vocabulary words, so UNK tokens are dropped
    docs = [Document(d.label_id, tuple(t for t in d.tokens if t != UNK_ID))
            for d in corpus.train + corpus.val + corpus.test]
    corpus_graph = corpus_graph_edge_count([d for d in docs if d.tokens], len(vocab), spec.pmi_window)
    return {
        "our_edges": capacity["edge_param_count"],
        "our_params": capacity["total_param_count"],
        "our_bytes": capacity["bytes_at_4B"],
        "corpus_graph_edges": corpus_graph["total"],
        "corpus_word_word_edges": corpus_graph["word_word"],
        "corpus_doc_word_edges": corpus_graph["doc_word"],
        "edge_ratio": capacity["edge_param_count"] / max(corpus_graph["total"], 1),
    }
