"""Layers used by the neural process: dense, attention and self-attention blocks.

Parameters live in a flat ``dict[str, Tensor]`` keyed by dotted names; layer
functions look their weights up by prefix.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ShapeError


def glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def param(params, name, value):
    params[name] = Tensor(value, requires_grad=True, name=name)
    return params[name]


def init_dense(params, rng, name, fan_in, fan_out, bias=True):
    param(params, f"{name}.w", glorot(rng, fan_in, fan_out))
    if bias:
        param(params, f"{name}.b", np.zeros(fan_out))


def dense(params, name, x):
    out = ad.matmul(x, params[f"{name}.w"])
    b = params.get(f"{name}.b")
    return out if b is None else out + b


def init_mlp(params, rng, name, sizes):
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        init_dense(params, rng, f"{name}.{i}", a, b)


def mlp(params, name, x, depth, final_activation=False):
    """``depth`` dense layers with GELU in between."""
    for i in range(depth):
        x = dense(params, f"{name}.{i}", x)
        if i < depth - 1 or final_activation:
            x = ad.gelu(x)
    return x


# ---------------------------------------------------------------- attention

def sdpa(queries, keys, values):
    """Scaled dot-product attention.

    Returns ``(output, weights)`` where ``weights = softmax(Q K^T / sqrt(d))``
    row-wise and ``output = weights V``.
    """
    queries, keys, values = map(ad.as_tensor, (queries, keys, values))
    if queries.shape[-1] != keys.shape[-1] or keys.shape[-2] != values.shape[-2]:
        raise ShapeError(f"sdpa shapes q={queries.shape} k={keys.shape} v={values.shape}")
    scale = 1.0 / np.sqrt(queries.shape[-1])
    weights = ad.softmax(ad.matmul(queries, ad.swap_last(keys)) * scale, axis=-1)
    return ad.matmul(weights, values), weights


@dataclass
class AttentionParams:
    heads: int
    wq: Tensor  # (d_query_in, d_model)
    wk: Tensor  # (d_key_in, d_model)
    wv: Tensor  # (d_value_in, d_model)
    wo: Tensor  # (d_model, d_out)

    def __post_init__(self):
        d_model = self.wq.shape[1]
        if d_model % self.heads:
            raise ShapeError(f"model width {d_model} is not divisible by {self.heads} heads")
        if self.wk.shape[1] != d_model or self.wv.shape[1] != d_model or self.wo.shape[0] != d_model:
            raise ShapeError("attention projections disagree on the model width")
        for w in (self.wq, self.wk, self.wv, self.wo):
            if not np.all(np.isfinite(w.data)):
                raise ValueError(f"non-finite attention weight {w.name}")

    @property
    def key_dim(self):
        return self.wq.shape[1]

    @property
    def head_dim(self):
        return self.key_dim // self.heads

    @classmethod
    def from_params(cls, params, prefix, heads):
        return cls(heads, params[f"{prefix}.wq"], params[f"{prefix}.wk"],
                   params[f"{prefix}.wv"], params[f"{prefix}.wo"])


def init_attention(params, rng, prefix, d_query, d_key, d_value, d_model, d_out):
    for name, fan_in in (("wq", d_query), ("wk", d_key), ("wv", d_value)):
        param(params, f"{prefix}.{name}", glorot(rng, fan_in, d_model))
    param(params, f"{prefix}.wo", glorot(rng, d_model, d_out))


def _split_heads(x, heads):
    *lead, n, d = x.shape
    x = ad.reshape(x, (*lead, n, heads, d // heads))
    k = len(lead)
    return ad.transpose(x, (*range(k), k + 1, k, k + 2))


def _merge_heads(x):
    *lead, h, n, d = x.shape
    k = len(lead)
    x = ad.transpose(x, (*range(k), k + 1, k, k + 2))
    return ad.reshape(x, (*lead, n, h * d))


def multihead_cross_attention(ap, queries, keys, values):
    """Multi-head attention; returns ``(output, weights)``.

    Head ``i`` attends with ``softmax(Q Wq_i (K Wk_i)^T / sqrt(d_head))``;
    head outputs are concatenated and projected by ``wo``.  ``weights`` has
    shape ``(..., heads, n_queries, n_keys)``.
    """
    queries, keys, values = map(ad.as_tensor, (queries, keys, values))
    if keys.shape[-2] != values.shape[-2]:
        raise ShapeError(f"{keys.shape[-2]} keys but {values.shape[-2]} values")
    if queries.shape[-1] != ap.wq.shape[0] or keys.shape[-1] != ap.wk.shape[0] \
            or values.shape[-1] != ap.wv.shape[0]:
        raise ShapeError("attention inputs do not match the projection shapes")
    q = _split_heads(ad.matmul(queries, ap.wq), ap.heads)
    k = _split_heads(ad.matmul(keys, ap.wk), ap.heads)
    v = _split_heads(ad.matmul(values, ap.wv), ap.heads)
    out, weights = sdpa(q, k, v)
    return ad.matmul(_merge_heads(out), ap.wo), weights


def init_self_attention_block(params, rng, prefix, d, ffn_mult=2):
    init_attention(params, rng, f"{prefix}.attn", d, d, d, d, d)
    init_mlp(params, rng, f"{prefix}.ffn", [d, ffn_mult * d, d])


def self_attention_block(params, prefix, x, heads):
    """Residual multi-head self-attention followed by a residual GELU feed-forward."""
    ap = AttentionParams.from_params(params, f"{prefix}.attn", heads)
    h, _ = multihead_cross_attention(ap, x, x, x)
    x = x + h
    return x + mlp(params, f"{prefix}.ffn", x, 2)
