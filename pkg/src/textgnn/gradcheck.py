"""Central finite-difference check of the hand-written backward pass."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .backprop import backward
from .graph import GraphBatch, TextGraph
from .model import ModelConfig, Params, forward


@dataclass
class GradCheckResult:
    max_rel_error: float
    checked: int
    # coordinates where a max argmax or ReLU sign flips between +eps and -eps
    excluded: list = field(default_factory=list)
    worst: tuple = ()

    def passed(self, tol: float = 1e-3) -> bool:
        return self.max_rel_error < tol


def relative_error(analytic: float, numeric: float, floor: float = 1e-7) -> float:
    # the floor sits above the ~1e-11 rounding noise of a central difference at eps=1e-4
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def _signature(cache):
    parts = [cache.summed > 0]
    parts += [s.argmax for s in cache.steps if s.argmax is not None]
    return parts


def _same(sig_a, sig_b) -> bool:
    return all(np.array_equal(a, b) for a, b in zip(sig_a, sig_b))


def touched_coordinates(batch: GraphBatch, params: Params, config: ModelConfig):
    words = np.unique(batch.words)
    for w in words.tolist():
        for t in range(params.dim):
            yield "embeddings", (w, t)
    if config.edges_trainable:
        for e in np.unique(batch.edge_refs[batch.mask]).tolist():
            yield "edge_weights", (e,)
    for w in words.tolist():
        yield "gates", (w,)
    for idx in np.ndindex(params.dense_W.shape):
        yield "dense_W", idx
    for j in range(params.num_classes):
        yield "dense_b", (j,)


def gradient_check(graph: TextGraph | GraphBatch, params: Params, config: ModelConfig,
                   eps: float = 1e-4) -> GradCheckResult:
    """Compare backward against (L(+eps) - L(-eps)) / 2eps on every touched scalar.

    Runs in float64 with dropout off. Coordinates whose perturbation flips a
    max-reduction winner or a ReLU sign are reported in ``excluded``.
    """
    batch = graph if isinstance(graph, GraphBatch) else GraphBatch.from_graphs([graph])
    params = params.astype(np.float64)
    base = forward(batch, params, config)
    base_sig = _signature(base)
    grads = backward(base, params).to_dense(params)

    result = GradCheckResult(0.0, 0)
    for group, idx in touched_coordinates(batch, params, config):
        arr = getattr(params, group)
        orig = arr[idx]
        arr[idx] = orig + eps
        plus = forward(batch, params, config)
        arr[idx] = orig - eps
        minus = forward(batch, params, config)
        arr[idx] = orig
        if not (_same(base_sig, _signature(plus)) and _same(base_sig, _signature(minus))):
            result.excluded.append((group, idx))
            continue
        numeric = (plus.loss - minus.loss) / (2 * eps)
        analytic = float(getattr(grads, group)[idx])
        err = relative_error(analytic, numeric)
        result.checked += 1
        if err >= result.max_rel_error:
            result.max_rel_error = err
            result.worst = (group, idx, analytic, numeric)
    return result
