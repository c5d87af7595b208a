"""Corpus loading, vocabulary construction, validation split and embedding init.

Dataset files hold one document per line as ``<label>\\t<text>``. Text is
lowercased and split on whitespace; the usual R8/R52/Ohsumed distributions
are already tokenized, so nothing else is done to it.
"""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DataError, DimensionMismatchError, ParseError

logger = logging.getLogger(__name__)

UNK = "<unk>"
UNK_ID = 0


@dataclass(frozen=True)
class Document:
    """A labeled document. ``tokens`` are words before encoding, word ids after."""

    label_id: int
    tokens: tuple

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass
class Corpus:
    train: list[Document]
    test: list[Document]
    labels: list[str]
    val: list[Document] = field(default_factory=list)
    dropped: int = 0

    @property
    def num_classes(self) -> int:
        return len(self.labels)

    def label_index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.labels)}

    def to_json(self) -> str:
        payload = {
            "labels": self.labels,
            "dropped": self.dropped,
            **{
                part: [[d.label_id, list(d.tokens)] for d in getattr(self, part)]
                for part in ("train", "val", "test")
            },
        }
        return json.dumps(payload, ensure_ascii=False, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "Corpus":
        payload = json.loads(text)
        parts = {
            part: [Document(label, tuple(toks)) for label, toks in payload[part]]
            for part in ("train", "val", "test")
        }
        return cls(labels=payload["labels"], dropped=payload["dropped"], **parts)


@dataclass
class Vocabulary:
    words: list[str]
    freqs: list[int]
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if not self.words or self.words[UNK_ID] != UNK:
            raise DataError(f"vocabulary must start with {UNK!r}")
        self.index = {w: i for i, w in enumerate(self.words)}

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.index

    def id(self, word: str) -> int:
        return self.index.get(word, UNK_ID)

    def encode(self, tokens: Iterable[str]) -> tuple[int, ...]:
        index = self.index
        return tuple(index.get(w, UNK_ID) for w in tokens)


@dataclass
class EmbeddingInit:
    matrix: np.ndarray
    coverage: float


def read_labeled_file(path: Path) -> list[tuple[str, list[str]]]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            if "\t" not in line:
                raise ParseError(f"{path}:{lineno}: expected '<label>\\t<text>', found no TAB")
            label, text = line.split("\t", 1)
            label = label.strip()
            if not label:
                raise ParseError(f"{path}:{lineno}: empty label")
            rows.append((label, text.lower().split()))
    return rows


def load_dataset(train_path, test_path, format: str = "tsv") -> Corpus:
    """Read train/test files into an unsplit corpus of word-token documents.

    Labels get dense ids in order of first appearance in the training file.
    Documents left without tokens are dropped and counted in ``Corpus.dropped``.
    """
    if format != "tsv":
        raise ConfigError(f"unsupported dataset format {format!r}")
    labels: dict[str, int] = {}
    dropped = 0

    train = []
    for label, tokens in read_labeled_file(Path(train_path)):
        label_id = labels.setdefault(label, len(labels))
        if tokens:
            train.append(Document(label_id, tuple(tokens)))
        else:
            dropped += 1

    test = []
    for label, tokens in read_labeled_file(Path(test_path)):
        if label not in labels:
            raise DataError(f"test label {label!r} never appears in training data")
        if tokens:
            test.append(Document(labels[label], tuple(tokens)))
        else:
            dropped += 1

    if dropped:
        logger.warning("dropped %d empty documents", dropped)
    return Corpus(train=train, test=test, labels=list(labels), dropped=dropped)


def build_vocabulary(train_docs: Sequence[Document], min_freq: int = 5) -> Vocabulary:
    """Words seen at least ``min_freq`` times in training, ranked by frequency."""
    if min_freq < 1:
        raise ConfigError("min_freq must be >= 1")
    if not train_docs:
        raise DataError("cannot build a vocabulary from an empty training set")
    counts = Counter()
    for doc in train_docs:
        counts.update(doc.tokens)
    kept = sorted((w for w, c in counts.items() if c >= min_freq and w != UNK),
                  key=lambda w: (-counts[w], w))
    unk_freq = sum(c for w, c in counts.items() if c < min_freq or w == UNK)
    return Vocabulary([UNK, *kept], [unk_freq, *(counts[w] for w in kept)])


def encode_documents(docs: Sequence[Document], vocab: Vocabulary) -> list[Document]:
    return [Document(d.label_id, vocab.encode(d.tokens)) for d in docs]


def split_validation(train_docs: Sequence, ratio: float = 0.1, seed: int = 0):
    """Randomly move ``round(ratio * n)`` documents out of training (half rounds up)."""
    if not 0.0 < ratio < 1.0:
        raise ConfigError(f"validation ratio must lie in (0, 1), got {ratio}")
    n = len(train_docs)
    if n < 2:
        raise ConfigError("need at least two training documents to split")
    n_val = min(max(int(math.floor(ratio * n + 0.5)), 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    val_ids = np.sort(perm[:n_val])
    train_ids = np.sort(perm[n_val:])
    return [train_docs[i] for i in train_ids], [train_docs[i] for i in val_ids]


def prepare_corpus(train_path, test_path, *, min_freq: int = 5, val_ratio: float = 0.1,
                   seed: int = 0) -> tuple[Corpus, Vocabulary]:
    """Load, split off validation, build the vocabulary on train and encode every part."""
    raw = load_dataset(train_path, test_path)
    train, val = split_validation(raw.train, val_ratio, seed)
    vocab = build_vocabulary(train, min_freq)
    corpus = Corpus(
        train=encode_documents(train, vocab),
        val=encode_documents(val, vocab),
        test=encode_documents(raw.test, vocab),
        labels=raw.labels,
        dropped=raw.dropped,
    )
    return corpus, vocab


def random_embeddings(n: int, d: int, rng: np.random.Generator, scale: float = 0.01) -> np.ndarray:
    return rng.uniform(-scale, scale, size=(n, d))


def load_pretrained_embeddings(path, vocab: Vocabulary, d: int = 300, seed: int = 0) -> EmbeddingInit:
    """GloVe-style text vectors for the vocabulary; misses get small uniform noise.

    ``coverage`` is the fraction of non-UNK vocabulary words found in the file.
    """
    matrix = random_embeddings(len(vocab), d, np.random.default_rng(seed))
    found = np.zeros(len(vocab), dtype=bool)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) == 1 and not parts[0]:
                continue
            if len(parts) != d + 1:
                raise DimensionMismatchError(
                    f"{path}:{lineno}: word {parts[0]!r} has {len(parts) - 1} values, expected {d}")
            wid = vocab.index.get(parts[0])
            if wid is None or wid == UNK_ID:
                continue
            try:
                matrix[wid] = np.asarray(parts[1:], dtype=np.float64)
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: bad number for {parts[0]!r}") from exc
            found[wid] = True
    coverage = found[1:].mean() if len(vocab) > 1 else 0.0
    logger.info("pretrained embeddings cover %.1f%% of the vocabulary", 100 * coverage)
    return EmbeddingInit(matrix, float(coverage))


def corpus_stats(corpus: Corpus) -> dict:
    lengths = [len(d) for d in corpus.train + corpus.val]
    return {
        "train": len(corpus.train),
        "val": len(corpus.val),
        "test": len(corpus.test),
        "classes": corpus.num_classes,
        "avg_length": float(np.mean(lengths + [len(d) for d in corpus.test])),
        "dropped": corpus.dropped,
    }
