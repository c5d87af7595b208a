"""Adam with coupled L2 decay and lazy updates for sparsely touched parameters."""

from __future__ import annotations

import numpy as np

from .backprop import Gradients, SparseGrad
from .errors import DivergenceError
from .model import Params


class Adam:
    """Adam over the five parameter groups.

    Only indices present in the gradient are updated: their moments, their
    L2 term and their values. Rows a batch never touches are left alone.
    """

    def __init__(self, params: Params, lr: float = 1e-3, weight_decay: float = 1e-4,
                 betas=(0.9, 0.999), eps: float = 1e-8, decay_bias: bool = True):
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.decay_bias = decay_bias
        self.t = 0
        self.m = {name: np.zeros_like(a) for name, a in zip(Params.GROUPS, params.arrays())}
        self.v = {name: np.zeros_like(a) for name, a in zip(Params.GROUPS, params.arrays())}

    def _update(self, name: str, index, grad: np.ndarray):
        theta = getattr(self.params, name)
        if not np.isfinite(grad).all():
            raise DivergenceError(f"non-finite gradient for {name} at step {self.t}")
        wd = self.weight_decay if (self.decay_bias or name != "dense_b") else 0.0
        if wd:
            grad = grad + wd * theta[index]
        m = self.beta1 * self.m[name][index] + (1 - self.beta1) * grad
        v = self.beta2 * self.v[name][index] + (1 - self.beta2) * grad * grad
        self.m[name][index] = m
        self.v[name][index] = v
        m_hat = m / (1 - self.beta1 ** self.t)
        v_hat = v / (1 - self.beta2 ** self.t)
        new = theta[index] - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        if not np.isfinite(new).all():
            raise DivergenceError(f"non-finite {name} after Adam step {self.t}")
        theta[index] = new

    def step(self, grads: Gradients):
        self.t += 1
        for name in Params.GROUPS:
            g = getattr(grads, name)
            if g is None:
                continue
            if isinstance(g, SparseGrad):
                if len(g.index):
                    self._update(name, g.index, g.values)
            else:
                self._update(name, slice(None), g)
