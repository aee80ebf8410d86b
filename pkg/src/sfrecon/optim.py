"""Adam with an exponential warm-up and a single step decay."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteError

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


def lr_schedule(epoch, base_lr=1e-4, warmup_epochs=20, decay_epoch=200, decayed_lr=1e-5):
    """Learning rate for ``epoch`` (0-based).

    Geometric ramp from ``base_lr / 10`` to ``base_lr`` over the warm-up,
    then ``base_lr`` until ``decay_epoch`` and ``decayed_lr`` afterwards.
    """
    if epoch >= decay_epoch:
        return decayed_lr
    if epoch < warmup_epochs:
        return min(base_lr, base_lr * 10.0 ** ((epoch - warmup_epochs) / warmup_epochs))
    return base_lr


@dataclass
class OptimizerState:
    base_lr: float = 1e-4
    warmup_epochs: int = 20
    decay_epoch: int = 200
    decayed_lr: float = 1e-5
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def lr(self, epoch):
        return lr_schedule(epoch, self.base_lr, self.warmup_epochs, self.decay_epoch, self.decayed_lr)


def adam_step(state, params, epoch, grads=None):
    """One bias-corrected Adam update, in place.

    ``grads`` defaults to each tensor's ``.grad`` (missing gradients count as
    zero).  Nothing is modified if any gradient is non-finite.
    """
    if grads is None:
        grads = {k: p.grad for k, p in params.items()}
    clean = {}
    for name, p in params.items():
        g = grads.get(name)
        g = np.zeros_like(p.data) if g is None else np.asarray(g, dtype=float)
        if g.shape != p.data.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, expected {p.data.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for parameter {name}", name)
        clean[name] = g
    lr = state.lr(epoch)
    state.step += 1
    t = state.step
    c1 = 1.0 - BETA1 ** t
    c2 = 1.0 - BETA2 ** t
    for name, p in params.items():
        g = clean[name]
        m = state.m.get(name)
        v = state.v.get(name)
        m = (1 - BETA1) * g if m is None else BETA1 * m + (1 - BETA1) * g
        v = (1 - BETA2) * g * g if v is None else BETA2 * v + (1 - BETA2) * g * g
        state.m[name], state.v[name] = m, v
        p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + EPS)
    return lr
