"""Binary checkpoint: parameters, vocabulary and edge vocabulary in one file.

Layout (all integers little-endian u32, floats little-endian f32)::

    b"TGNN" version
    |V| d E+1 c
    embeddings, edge_weights, gates, dense_W, dense_b
    n_words, then n_words records "word\\tfreq"
    edge meta record (JSON), n_pairs, then n_pairs records "src\\tdst\\tindex"
    model meta record (JSON)

A record is a u32 byte length followed by that many UTF-8 bytes.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Vocabulary
from .edges import EdgeVocabulary
from .errors import CheckpointError
from .model import Params

MAGIC = b"TGNN"
VERSION = 1


@dataclass
class Checkpoint:
    params: Params
    vocab: Vocabulary
    edge_vocab: EdgeVocabulary
    meta: dict = field(default_factory=dict)


def _u32(value: int) -> bytes:
    return struct.pack("<I", value)


def _record(text: str) -> bytes:
    data = text.encode("utf-8")
    return _u32(len(data)) + data


def _to_bytes(ckpt: Checkpoint) -> bytes:
    p = ckpt.params
    out = io.BytesIO()
    out.write(MAGIC + _u32(VERSION))
    out.write(struct.pack("<4I", p.num_words, p.dim, p.num_edges, p.num_classes))
    for arr in p.arrays():
        out.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    out.write(_u32(len(ckpt.vocab)))
    for word, freq in zip(ckpt.vocab.words, ckpt.vocab.freqs):
        out.write(_record(f"{word}\t{freq}"))
    ev = ckpt.edge_vocab
    edge_meta = {"p": ev.p, "k": ev.k, "public_index": ev.public_index, "num_words": ev.num_words}
    out.write(_record(json.dumps(edge_meta, sort_keys=True)))
    out.write(_u32(len(ev.keys)))
    for a, n, i in ev.pairs():
        out.write(_record(f"{a}\t{n}\t{i}"))
    out.write(_record(json.dumps(ckpt.meta, sort_keys=True)))
    return out.getvalue()


def save_checkpoint(path, ckpt: Checkpoint):
    Path(path).write_bytes(_to_bytes(ckpt))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError("checkpoint truncated")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def floats(self, shape) -> np.ndarray:
        count = int(np.prod(shape))
        return np.frombuffer(self.take(4 * count), dtype="<f4").astype(np.float32).reshape(shape)

    def record(self) -> str:
        return self.take(self.u32()).decode("utf-8")


def load_checkpoint(path) -> Checkpoint:
    r = _Reader(Path(path).read_bytes())
    if r.take(4) != MAGIC:
        raise CheckpointError(f"{path}: not a TGNN checkpoint")
    version = r.u32()
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    V, d, E1, c = (r.u32() for _ in range(4))
    params = Params(r.floats((V, d)), r.floats((E1,)), r.floats((V,)), r.floats((d, c)), r.floats((c,)))

    words, freqs = [], []
    for _ in range(r.u32()):
        word, freq = r.record().rsplit("\t", 1)
        words.append(word)
        freqs.append(int(freq))
    vocab = Vocabulary(words, freqs)

    edge_meta = json.loads(r.record())
    n_pairs = r.u32()
    keys = np.empty(n_pairs, dtype=np.int64)
    indices = np.empty(n_pairs, dtype=np.int64)
    nw = edge_meta["num_words"]
    for j in range(n_pairs):
        a, n, i = r.record().split("\t")
        keys[j] = int(a) * nw + int(n)
        indices[j] = int(i)
    edge_vocab = EdgeVocabulary(keys, indices, edge_meta["public_index"], nw, edge_meta["k"], edge_meta["p"])
    meta = json.loads(r.record())
    if r.pos != len(r.data):
        raise CheckpointError(f"{path}: trailing bytes after checkpoint")
    if len(vocab) != V or edge_vocab.size != E1:
        raise CheckpointError(f"{path}: vocabulary sizes disagree with the header")
    return Checkpoint(params, vocab, edge_vocab, meta)
