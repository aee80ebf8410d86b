"""Finite-difference verification of reverse-mode gradients."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad


@dataclass
class GradCheckReport:
    max_rel_error: float
    entries: list = field(default_factory=list)  # (name, index, analytic, numeric, rel)
    tolerance: float = 1e-4

    @property
    def ok(self):
        return self.max_rel_error < self.tolerance

    @property
    def failures(self):
        return [e for e in self.entries if e[4] >= self.tolerance]


def _scalarize(out, rng):
    if out.data.size == 1:
        return ad.sum(out)
    proj = rng.standard_normal(out.shape)
    return ad.sum(out * proj)


def grad_check(fn, params, tolerance=1e-4, eps=1e-5, max_entries=None, seed=0, floor=1e-6):
    """Compare ``fn``'s reverse-mode gradients with central differences.

    ``fn()`` builds a tensor from the tensors in ``params`` (a dict); vector
    outputs are contracted with a fixed random projection.  The relative
    error per entry is ``|a - n| / max(|a|, |n|, floor)``.  At most
    ``max_entries`` entries per tensor are probed (all by default).
    """
    rng = np.random.default_rng(seed)
    proj_seed = int(rng.integers(2**31))

    def loss():
        return _scalarize(fn(), np.random.default_rng(proj_seed))

    for p in params.values():
        p.grad = None
    loss().backward()
    analytic = {k: (np.zeros_like(p.data) if p.grad is None else p.grad.copy())
                for k, p in params.items()}

    entries = []
    worst = 0.0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = rng.choice(flat.size, max_entries, replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            with ad.no_grad():
                up = float(loss().data)
            flat[i] = orig - eps
            with ad.no_grad():
                down = float(loss().data)
            flat[i] = orig
            num = (up - down) / (2 * eps)
            ana = float(analytic[name].reshape(-1)[i])
            rel = abs(ana - num) / max(abs(ana), abs(num), floor)
            worst = max(worst, rel)
            entries.append((name, int(i), ana, num, rel))
    for p in params.values():
        p.grad = None
    return GradCheckReport(worst, entries, tolerance)
