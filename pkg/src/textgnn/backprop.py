"""Reverse-mode gradients of the mean batch cross-entropy.

Embedding rows, edge weights and gates are touched sparsely, so their
gradients are kept as (sorted unique index, value) pairs; the dense layer
gets full arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import ForwardCache, Params


def segment_sum(index: np.ndarray, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sum ``values`` rows sharing an index. Returns (sorted unique index, sums)."""
    index = np.asarray(index).ravel()
    if len(index) == 0:
        return index.astype(np.int64), values[:0]
    order = np.argsort(index, kind="stable")
    sorted_idx = index[order]
    starts = np.flatnonzero(np.r_[True, sorted_idx[1:] != sorted_idx[:-1]])
    return sorted_idx[starts].astype(np.int64), np.add.reduceat(values[order], starts, axis=0)


@dataclass
class SparseGrad:
    index: np.ndarray   # sorted, unique
    values: np.ndarray  # (len(index), ...) matching the parameter's trailing shape

    def merge(self, other: "SparseGrad") -> "SparseGrad":
        return SparseGrad(*segment_sum(np.concatenate([self.index, other.index]),
                                       np.concatenate([self.values, other.values])))

    def to_dense(self, shape, dtype=np.float64) -> np.ndarray:
        out = np.zeros(shape, dtype=dtype)
        out[self.index] = self.values
        return out


@dataclass
class Gradients:
    embeddings: SparseGrad
    edge_weights: Optional[SparseGrad]  # None when edges are frozen
    gates: SparseGrad
    dense_W: np.ndarray
    dense_b: np.ndarray

    def merge(self, other: "Gradients") -> "Gradients":
        if (self.edge_weights is None) != (other.edge_weights is None):
            raise ValueError("cannot merge gradients with and without edge terms")
        edges = None if self.edge_weights is None else self.edge_weights.merge(other.edge_weights)
        return Gradients(
            self.embeddings.merge(other.embeddings),
            edges,
            self.gates.merge(other.gates),
            self.dense_W + other.dense_W,
            self.dense_b + other.dense_b,
        )

    def to_dense(self, params: Params) -> Params:
        """Full-size arrays, zero outside touched indices (frozen edges give zeros)."""
        dt = params.dtype
        edges = (np.zeros(params.edge_weights.shape, dt) if self.edge_weights is None
                 else self.edge_weights.to_dense(params.edge_weights.shape, dt))
        return Params(
            self.embeddings.to_dense(params.embeddings.shape, dt),
            edges,
            self.gates.to_dense(params.gates.shape, dt),
            self.dense_W.astype(dt),
            self.dense_b.astype(dt),
        )

    def all_finite(self) -> bool:
        parts = [self.embeddings.values, self.gates.values, self.dense_W, self.dense_b]
        if self.edge_weights is not None:
            parts.append(self.edge_weights.values)
        return all(np.isfinite(p).all() for p in parts)


def _scatter_slot(out: np.ndarray, contrib: np.ndarray, offset: int):
    """Add slot contributions (N, d) back onto the rows they were read from.

    Node ``i`` read row ``i + offset``. Masked slots must already be zero,
    which keeps contributions from crossing documents.
    """
    n = contrib.shape[0]
    if abs(offset) >= n:
        return
    if offset >= 0:
        out[offset:] += contrib[: n - offset]
    else:
        out[: n + offset] += contrib[-offset:]


def backward(cache: ForwardCache, params: Params, weights: Optional[np.ndarray] = None) -> Gradients:
    """Gradients of ``sum_i weights[i] * loss_i``; the default weights give the batch mean."""
    batch, config = cache.batch, cache.config
    if cache.node_out.shape[0] != batch.num_nodes or len(cache.steps) != config.mpm_steps:
        raise ValueError("forward cache does not match its batch/config")
    B = batch.num_graphs
    if weights is None:
        weights = np.full(B, 1.0 / B)
    dt = params.dtype
    weights = np.asarray(weights, dtype=dt)

    # softmax cross-entropy
    dlogits = cache.probs.copy()
    dlogits[np.arange(B), batch.labels] -= 1
    dlogits *= weights[:, None]

    if cache.drop_mask is not None:
        dropped = cache.hidden * cache.drop_mask / np.asarray(config.dropout_keep, dtype=dt)
    else:
        dropped = cache.hidden
    dW = dropped.T @ dlogits
    db = dlogits.sum(axis=0)
    ddropped = dlogits @ params.dense_W.T
    if cache.drop_mask is not None:
        dhidden = ddropped * cache.drop_mask / np.asarray(config.dropout_keep, dtype=dt)
    else:
        dhidden = ddropped
    dsummed = dhidden * (cache.summed > 0)
    dreps = dsummed[batch.doc_of_node]

    mask = batch.mask
    counts = mask.sum(axis=1).astype(dt)
    dedge_total = np.zeros(mask.shape, dtype=dt)
    dgate_total = np.zeros(batch.num_nodes, dtype=dt)
    for step in reversed(cache.steps):
        gate = step.gate[:, None]
        dmessage = (1 - gate) * dreps
        dgate_total += ((step.reps - step.message) * dreps).sum(axis=1)
        dprev = gate * dreps
        if config.reduction == "mean":
            dmessage = dmessage / counts[:, None]
        for s in range(mask.shape[1]):
            if config.reduction == "max":
                dprod = np.where(step.argmax == s, dmessage, 0)
            else:
                dprod = dmessage * mask[:, s, None]
            dedge_total[:, s] += (dprod * step.gathered[s]).sum(axis=1)
            _scatter_slot(dprev, step.edges[:, s, None] * dprod, s - batch.p)
        dreps = dprev
    dedge_total *= mask

    emb = SparseGrad(*segment_sum(batch.words, dreps))
    gates = SparseGrad(*segment_sum(batch.words, dgate_total))
    edges = None
    if config.edges_trainable:
        edges = SparseGrad(*segment_sum(batch.edge_refs[batch.mask], dedge_total[batch.mask]))
    return Gradients(emb, edges, gates, dW, db)
