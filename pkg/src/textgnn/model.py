"""Shared parameters and the forward pass.

One message-passing step takes, per node and per dimension, the max (or
mean) over in-window neighbors of ``edge_weight * neighbor_rep``, then mixes
it with the node's own representation through a per-word gate. Node
representations are summed per document, passed through ReLU, dropout and a
dense softmax layer.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from .errors import ConfigError, DimensionMismatchError
from .graph import GraphBatch

REDUCTIONS = ("max", "mean")


@dataclass(frozen=True)
class ModelConfig:
    reduction: str = "max"
    dropout_keep: float = 0.5
    edges_trainable: bool = True
    mpm_steps: int = 1

    def __post_init__(self):
        if self.reduction not in REDUCTIONS:
            raise ConfigError(f"reduction must be one of {REDUCTIONS}, got {self.reduction!r}")
        if not 0.0 < self.dropout_keep <= 1.0:
            raise ConfigError("dropout_keep must lie in (0, 1]")
        if self.mpm_steps < 1:
            raise ConfigError("mpm_steps must be >= 1")


@dataclass
class Params:
    embeddings: np.ndarray    # (V, d)
    edge_weights: np.ndarray  # (E + 1,)
    gates: np.ndarray         # (V,)
    dense_W: np.ndarray       # (d, c)
    dense_b: np.ndarray       # (c,)

    GROUPS = ("embeddings", "edge_weights", "gates", "dense_W", "dense_b")

    def __post_init__(self):
        V, d = self.embeddings.shape
        if self.gates.shape != (V,):
            raise DimensionMismatchError(f"gates {self.gates.shape} != ({V},)")
        if self.dense_W.shape[0] != d:
            raise DimensionMismatchError(f"dense_W {self.dense_W.shape} does not take dimension {d}")
        if self.dense_b.shape != (self.dense_W.shape[1],):
            raise DimensionMismatchError(f"dense_b {self.dense_b.shape} != ({self.dense_W.shape[1]},)")
        if self.edge_weights.ndim != 1:
            raise DimensionMismatchError("edge_weights must be a vector")

    @property
    def num_words(self) -> int:
        return self.embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    @property
    def num_edges(self) -> int:
        return self.edge_weights.shape[0]

    @property
    def num_classes(self) -> int:
        return self.dense_W.shape[1]

    @property
    def dtype(self):
        return self.embeddings.dtype

    def arrays(self) -> list[np.ndarray]:
        return [getattr(self, name) for name in self.GROUPS]

    def copy(self) -> "Params":
        return Params(*(a.copy() for a in self.arrays()))

    def astype(self, dtype) -> "Params":
        return Params(*(a.astype(dtype) for a in self.arrays()))

    def all_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays())


def initialize_params(num_words: int, num_edges: int, num_classes: int, d: int = 300,
                      embedding_init: Optional[np.ndarray] = None, seed: int = 0,
                      edge_init: Optional[np.ndarray] = None, dtype=np.float32) -> Params:
    if d < 1:
        raise ConfigError("embedding dimension must be >= 1")
    if num_classes < 2:
        raise ConfigError("need at least two classes")
    rng = np.random.default_rng(seed)
    if embedding_init is None:
        emb = rng.uniform(-0.01, 0.01, size=(num_words, d))
    else:
        emb = np.asarray(embedding_init)
        if emb.shape != (num_words, d):
            raise DimensionMismatchError(f"embedding init {emb.shape} != ({num_words}, {d})")
    if edge_init is None:
        edges = np.ones(num_edges)
    else:
        edges = np.asarray(edge_init)
        if edges.shape != (num_edges,):
            raise DimensionMismatchError(f"edge init {edges.shape} != ({num_edges},)")
    bound = np.sqrt(6.0 / (d + num_classes))
    W = rng.uniform(-bound, bound, size=(d, num_classes))
    return Params(
        embeddings=emb.astype(dtype, copy=True),
        edge_weights=edges.astype(dtype, copy=True),
        gates=np.full(num_words, 0.5, dtype=dtype),
        dense_W=W.astype(dtype),
        dense_b=np.zeros(num_classes, dtype=dtype),
    )


@dataclass
class StepCache:
    reps: np.ndarray       # (N, d) input representations of this step
    gathered: np.ndarray   # (S, N, d) neighbor representations, slot-major
    edges: np.ndarray      # (N, S) edge weight per slot, 0 where masked
    message: np.ndarray    # (N, d)
    gate: np.ndarray       # (N,)
    argmax: Optional[np.ndarray]  # (N, d) winning slot, max reduction only


@dataclass
class ForwardCache:
    batch: GraphBatch
    config: ModelConfig
    steps: list[StepCache]
    node_out: np.ndarray   # (N, d)
    summed: np.ndarray     # (B, d)
    hidden: np.ndarray     # (B, d) after ReLU
    drop_mask: Optional[np.ndarray]
    logits: np.ndarray     # (B, c)
    probs: np.ndarray      # (B, c)
    losses: np.ndarray     # (B,)

    @property
    def loss(self) -> float:
        return float(self.losses.mean())


def reduce_messages(products: np.ndarray, mask: np.ndarray, reduction: str, overwrite: bool = False):
    """Combine slot-major (S, N, d) messages into (N, d); ``mask`` is (N, S).

    Returns (messages, winning slot per node and dimension or None). With
    ``overwrite`` the max path may clobber ``products``.
    """
    if reduction == "max":
        if not overwrite:
            products = products.copy()
        products[~mask.T] = -np.inf
        best = products[0].copy()
        arg = np.zeros(best.shape, dtype=np.int16)
        # strict ">" keeps the lowest slot on ties
        for s in range(1, products.shape[0]):
            np.copyto(arg, s, where=products[s] > best)
            np.maximum(best, products[s], out=best)
        return best, arg
    total = np.zeros(products.shape[1:], dtype=products.dtype)
    for s in range(products.shape[0]):
        total += products[s] * mask[:, s, None]
    counts = mask.sum(axis=1).astype(products.dtype)
    return total / counts[:, None], None


def edge_values(batch: GraphBatch, params: Params) -> np.ndarray:
    return np.where(batch.mask, params.edge_weights[batch.edge_refs], 0).astype(params.dtype)


def message_pass(batch: GraphBatch, params: Params, config: ModelConfig):
    """Updated node representations and the per-step cache."""
    reps = params.embeddings[batch.words]
    gate = params.gates[batch.words]
    edges = edge_values(batch, params)
    steps = []
    for _ in range(config.mpm_steps):
        gathered = reps[batch.gather.T]
        products = edges.T[:, :, None] * gathered
        message, arg = reduce_messages(products, batch.mask, config.reduction, overwrite=True)
        steps.append(StepCache(reps, gathered, edges, message, gate, arg))
        reps = (1 - gate)[:, None] * message + gate[:, None] * reps
    return reps, steps


def log_softmax(logits: np.ndarray) -> np.ndarray:
    top = logits.max(axis=-1, keepdims=True)
    shifted = logits - top
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def loss_forward(logits: np.ndarray, labels) -> np.ndarray:
    """Per-document cross-entropy, computed from logits via log-sum-exp."""
    logits = np.atleast_2d(logits)
    labels = np.atleast_1d(np.asarray(labels))
    return -log_softmax(logits)[np.arange(len(labels)), labels]


def readout(node_reps: np.ndarray, batch: GraphBatch, params: Params, config: ModelConfig,
            train_mode: bool = False, rng: Optional[np.random.Generator] = None):
    """Sum nodes per document, ReLU, dropout (training only), dense layer, softmax."""
    summed = np.add.reduceat(node_reps, batch.starts, axis=0)
    hidden = np.maximum(summed, 0)
    drop_mask = None
    if train_mode and config.dropout_keep < 1.0:
        if rng is None:
            raise ValueError("dropout in training mode needs an rng")
        drop_mask = rng.random(hidden.shape) < config.dropout_keep
        dropped = hidden * drop_mask / np.asarray(config.dropout_keep, dtype=hidden.dtype)
    else:
        dropped = hidden
    logits = dropped @ params.dense_W + params.dense_b
    probs = np.exp(log_softmax(logits))
    return summed, hidden, drop_mask, logits, probs


def forward(batch: GraphBatch, params: Params, config: ModelConfig, train_mode: bool = False,
            rng: Optional[np.random.Generator] = None, labels=None) -> ForwardCache:
    node_out, steps = message_pass(batch, params, config)
    summed, hidden, drop_mask, logits, probs = readout(node_out, batch, params, config, train_mode, rng)
    labels = batch.labels if labels is None else np.asarray(labels)
    losses = loss_forward(logits, labels) if (labels >= 0).all() else np.full(len(labels), np.nan)
    return ForwardCache(batch, config, steps, node_out, summed, hidden, drop_mask, logits, probs, losses)


def predict(batch: GraphBatch, params: Params, config: ModelConfig) -> np.ndarray:
    """Class ids with ties resolved toward the lowest id."""
    node_out, _ = message_pass(batch, params, config)
    _, _, _, logits, _ = readout(node_out, batch, params, config)
    return logits.argmax(axis=1)


def count_capacity(params: Params) -> dict:
    V, d, E1, c = params.num_words, params.dim, params.num_edges, params.num_classes
    total = V * d + E1 + V + d * c + c
    return {"edge_param_count": E1, "total_param_count": total, "bytes_at_4B": 4 * total}


def config_fields(config: ModelConfig) -> dict:
    return {f.name: getattr(config, f.name) for f in fields(config)}
