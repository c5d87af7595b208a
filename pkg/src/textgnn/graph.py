"""Per-document graphs: one node per token position, windowed neighbors.

Neighbor slot ``s`` of node ``i`` always holds position ``i + s - p``; slots
falling outside the document are masked. Keeping slots aligned with offsets
lets the backward pass scatter neighbor gradients with plain slicing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .edges import EdgeVocabulary


@dataclass
class TextGraph:
    node_words: np.ndarray   # (l,) word id per position
    neighbor_pos: np.ndarray  # (l, 2p+1) neighbor position per slot, -1 when masked
    edge_refs: np.ndarray     # (l, 2p+1) edge parameter index per slot, -1 when masked
    p: int
    label_id: int = -1

    def __len__(self) -> int:
        return len(self.node_words)

    @property
    def mask(self) -> np.ndarray:
        return self.neighbor_pos >= 0

    def neighbors(self, i: int) -> list[int]:
        row = self.neighbor_pos[i]
        return row[row >= 0].tolist()


def build_text_graph(doc, p: int, edge_vocab: EdgeVocabulary) -> TextGraph:
    """Graph for one document. Reads the edge vocabulary, never modifies it."""
    words = np.asarray(doc.tokens, dtype=np.int64)
    n = len(words)
    if n == 0:
        raise ValueError("cannot build a graph for an empty document")
    offsets = np.arange(-p, p + 1)
    pos = np.arange(n)[:, None] + offsets[None, :]
    valid = (pos >= 0) & (pos < n)
    pos = np.where(valid, pos, -1)
    src = words[np.where(valid, pos, 0)]
    dst = np.broadcast_to(words[:, None], pos.shape)
    refs = np.where(valid, edge_vocab.resolve(src, dst), -1)
    return TextGraph(words, pos, refs, p, getattr(doc, "label_id", -1))


def build_graphs(docs: Sequence, p: int, edge_vocab: EdgeVocabulary) -> list[TextGraph]:
    return [build_text_graph(d, p, edge_vocab) for d in docs]


@dataclass
class GraphBatch:
    """Several graphs concatenated node-wise, with global neighbor indices."""

    words: np.ndarray      # (N,)
    gather: np.ndarray     # (N, S) global neighbor row, self for masked slots
    mask: np.ndarray       # (N, S) bool
    edge_refs: np.ndarray  # (N, S) edge index, 0 for masked slots
    starts: np.ndarray     # (B,) first node of each graph
    doc_of_node: np.ndarray  # (N,)
    labels: np.ndarray     # (B,)
    p: int

    @property
    def num_graphs(self) -> int:
        return len(self.starts)

    @property
    def num_nodes(self) -> int:
        return len(self.words)

    @classmethod
    def from_graphs(cls, graphs: Sequence[TextGraph]) -> "GraphBatch":
        if not graphs:
            raise ValueError("empty batch")
        p = graphs[0].p
        if any(g.p != p for g in graphs):
            raise ValueError("all graphs in a batch must share the window p")
        lengths = np.array([len(g) for g in graphs])
        starts = np.concatenate([[0], np.cumsum(lengths)[:-1]])
        words = np.concatenate([g.node_words for g in graphs])
        pos = np.concatenate([np.where(g.mask, g.neighbor_pos + s, -1) for g, s in zip(graphs, starts)])
        mask = pos >= 0
        own = np.arange(len(words))[:, None]
        gather = np.where(mask, pos, own)
        refs = np.concatenate([g.edge_refs for g in graphs])
        refs = np.where(mask, refs, 0)
        doc_of_node = np.repeat(np.arange(len(graphs)), lengths)
        labels = np.array([g.label_id for g in graphs], dtype=np.int64)
        return cls(words, gather, mask, refs, starts, doc_of_node, labels, p)
