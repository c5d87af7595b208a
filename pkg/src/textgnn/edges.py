"""Directed word-pair edges, the rare-edge fallback, and window PMI statistics.

Pairs are stored as int64 keys ``source * num_words + target`` in sorted
arrays so that lookups over whole documents are a single ``searchsorted``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError


def window_pairs(tokens, p: int) -> tuple[np.ndarray, np.ndarray]:
    """All (source, target) word pairs with positions at most ``p`` apart, self included."""
    tokens = np.asarray(tokens, dtype=np.int64)
    n = len(tokens)
    src, dst = [], []
    for offset in range(-p, p + 1):
        if abs(offset) >= n:
            continue
        if offset >= 0:
            # target at i, source at i + offset
            dst.append(tokens[: n - offset])
            src.append(tokens[offset:])
        else:
            dst.append(tokens[-offset:])
            src.append(tokens[: n + offset])
    return np.concatenate(src), np.concatenate(dst)


@dataclass
class EdgeStats:
    keys: np.ndarray
    counts: np.ndarray
    num_words: int
    p: int

    def __len__(self) -> int:
        return len(self.keys)

    def __getitem__(self, pair) -> int:
        key = pair[0] * self.num_words + pair[1]
        pos = np.searchsorted(self.keys, key)
        if pos < len(self.keys) and self.keys[pos] == key:
            return int(self.counts[pos])
        raise KeyError(pair)

    def as_dict(self) -> dict[tuple[int, int], int]:
        src, dst = np.divmod(self.keys, self.num_words)
        return {(int(a), int(n)): int(c) for a, n, c in zip(src, dst, self.counts)}

    def total(self) -> int:
        return int(self.counts.sum())


def count_edge_pairs(train_docs: Sequence, p: int, num_words: int) -> EdgeStats:
    """Occurrence counts of every directed in-window pair over the training texts."""
    if p < 1:
        raise ConfigError("window p must be >= 1")
    chunks = []
    for doc in train_docs:
        src, dst = window_pairs(doc.tokens, p)
        chunks.append(src * num_words + dst)
    if chunks:
        keys, counts = np.unique(np.concatenate(chunks), return_counts=True)
    else:
        keys, counts = np.empty(0, np.int64), np.empty(0, np.int64)
    return EdgeStats(keys, counts, num_words, p)


@dataclass
class EdgeVocabulary:
    """Named pairs get their own parameter; everything else shares ``public_index``."""

    keys: np.ndarray
    indices: np.ndarray
    public_index: int
    num_words: int
    k: int
    p: int

    @property
    def size(self) -> int:
        return len(self.keys) + 1

    def resolve(self, src, dst) -> np.ndarray:
        keys = np.asarray(src, dtype=np.int64) * self.num_words + np.asarray(dst, dtype=np.int64)
        if len(self.keys) == 0:
            return np.full(keys.shape, self.public_index, dtype=np.int64)
        pos = np.minimum(np.searchsorted(self.keys, keys), len(self.keys) - 1)
        hit = self.keys[pos] == keys
        return np.where(hit, self.indices[pos], self.public_index)

    def lookup(self, src: int, dst: int) -> int:
        return int(self.resolve([src], [dst])[0])

    def pairs(self):
        src, dst = np.divmod(self.keys, self.num_words)
        return zip(src.tolist(), dst.tolist(), self.indices.tolist())


def build_edge_vocabulary(stats: EdgeStats, k: int = 2) -> EdgeVocabulary:
    if k < 1:
        raise ConfigError("edge threshold k must be >= 1")
    keep = stats.counts >= k
    keys = stats.keys[keep]
    indices = np.arange(len(keys), dtype=np.int64)
    return EdgeVocabulary(keys, indices, len(keys), stats.num_words, k, stats.p)


def dump_edge_tsv(path, stats: EdgeStats, edge_vocab: EdgeVocabulary, words: Sequence[str]):
    src, dst = np.divmod(stats.keys, stats.num_words)
    idx = edge_vocab.resolve(src, dst)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("word_a\tword_n\tcount\tindex\n")
        for a, n, c, i in zip(src.tolist(), dst.tolist(), stats.counts.tolist(), idx.tolist()):
            fh.write(f"{words[a]}\t{words[n]}\t{c}\t{i}\n")


@dataclass
class PmiTable:
    """Positive PMI between distinct words, stored in both directions."""

    keys: np.ndarray
    values: np.ndarray
    num_words: int
    num_windows: int
    window: int

    def __len__(self) -> int:
        return len(self.keys)

    def get(self, a: int, b: int, default=None):
        key = a * self.num_words + b
        pos = np.searchsorted(self.keys, key)
        if pos < len(self.keys) and self.keys[pos] == key:
            return float(self.values[pos])
        return default

    def as_dict(self) -> dict[tuple[int, int], float]:
        src, dst = np.divmod(self.keys, self.num_words)
        return {(int(a), int(b)): float(v) for a, b, v in zip(src, dst, self.values)}


def _window_incidence(docs: Sequence, window: int, num_words: int) -> sp.csr_matrix:
    rows, cols = [], []
    n_windows = 0
    for doc in docs:
        toks = np.asarray(doc.tokens, dtype=np.int64)
        n = len(toks)
        if n == 0:
            continue
        if n <= window:
            spans = toks[None, :]
        else:
            spans = np.lib.stride_tricks.sliding_window_view(toks, window)
        rows.append(np.repeat(np.arange(n_windows, n_windows + len(spans)), spans.shape[1]))
        cols.append(spans.ravel())
        n_windows += len(spans)
    if not rows:
        return sp.csr_matrix((0, num_words))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    inc = sp.csr_matrix((np.ones(len(rows), dtype=np.int64), (rows, cols)),
                        shape=(n_windows, num_words))
    inc.sum_duplicates()
    inc.data[:] = 1
    return inc


def compute_pmi_table(docs: Sequence, window: int = 20, num_words: int | None = None) -> PmiTable:
    """PMI over sliding windows of ``window`` tokens; only positive values are kept.

    Documents shorter than the window count as a single window.
    """
    if window < 2:
        raise ConfigError("PMI window must be >= 2")
    if num_words is None:
        num_words = 1 + max((max(d.tokens) for d in docs if len(d.tokens)), default=0)
    inc = _window_incidence(docs, window, num_words)
    n_windows = inc.shape[0]
    word_windows = np.asarray(inc.sum(axis=0)).ravel()
    co = (inc.T @ inc).tocoo()
    off_diag = co.row != co.col
    a, b, nab = co.row[off_diag].astype(np.int64), co.col[off_diag].astype(np.int64), co.data[off_diag]
    pmi = np.log(nab.astype(np.float64) * n_windows / (word_windows[a] * word_windows[b]))
    pos = pmi > 0
    keys = a[pos] * num_words + b[pos]
    order = np.argsort(keys)
    return PmiTable(keys[order], pmi[pos][order], num_words, n_windows, window)


def pmi_edge_vocabulary(table: PmiTable, p: int) -> tuple[EdgeVocabulary, np.ndarray]:
    """Edge vocabulary plus fixed weights for the PMI ablation.

    Every positive-PMI pair is named with its PMI value; same-word pairs
    get weight 1 and every other pair falls back to a zero-weight public edge.
    """
    V = table.num_words
    self_keys = np.arange(V, dtype=np.int64) * (V + 1)
    keys = np.concatenate([table.keys, self_keys])
    values = np.concatenate([table.values, np.ones(V)])
    order = np.argsort(keys, kind="stable")
    keys, values = keys[order], values[order]
    indices = np.arange(len(keys), dtype=np.int64)
    vocab = EdgeVocabulary(keys, indices, len(keys), V, k=0, p=p)
    weights = np.concatenate([values, [0.0]])
    return vocab, weights


def corpus_graph_edge_count(docs: Sequence, num_words: int, window: int = 20) -> dict:
    """Edge count of a whole-corpus word/document graph, for memory comparison.

    Counted as the non-zeros of a symmetric adjacency without self loops:
    ordered positive-PMI word pairs plus both directions of every distinct
    (document, word) pair.
    """
    table = compute_pmi_table(docs, window, num_words)
    doc_word = sum(len(set(d.tokens)) for d in docs)
    return {
        "word_word": len(table),
        "doc_word": 2 * doc_word,
        "total": len(table) + 2 * doc_word,
    }
