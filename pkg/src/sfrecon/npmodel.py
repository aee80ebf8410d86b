"""Attentive neural process for sound-field magnitude reconstruction.

The encoder has two paths.  The latent path embeds each (location,
magnitude) pair, mixes the set with self-attention, mean-pools it and maps
the pooled feature to a diagonal Gaussian over a global latent ``z``.  The
deterministic path embeds locations as queries/keys and magnitudes as values
and runs multi-head cross-attention from every target to the context; its
attention weights are the learned correlation kernel.  The decoder maps
(target location, ``z``, attended value) to a Gaussian mean and variance.

All functions take batched arrays: locations ``(B, N, 2)`` in the unit
square and standardized magnitudes ``(B, N)``.  Unbatched ``(N, 2)``/``(N,)``
inputs are accepted and promoted.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Tensor
from .errors import InvalidInputError, NonFiniteError

SIGMA_FLOOR = 1e-6
VARIANCE_FLOOR = 1e-6


@dataclass
class NPConfig:
    embed_dim: int = 256
    latent_dim: int = 256
    heads: int = 8
    sa_blocks: int = 2
    decoder_width: int = 960
    decoder_layers: int = 3
    ffn_mult: int = 2
    freq_as_feature: bool = False

    @property
    def loc_dim(self):
        return 3 if self.freq_as_feature else 2

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


#: Small dimensions for CPU experiments and tests.
DESK_CONFIG = NPConfig(embed_dim=64, latent_dim=64, heads=4, sa_blocks=2,
                       decoder_width=128, decoder_layers=3)


@dataclass
class GaussianLatent:
    mu: Tensor
    sigma: Tensor


@dataclass
class DecoderOutput:
    mean: Tensor
    variance: Tensor


@dataclass
class AttentionMap:
    """Target-by-context weights, rows in the caller's context order."""

    weights: np.ndarray    # (..., n_targets, n_context), head average
    per_head: np.ndarray   # (..., heads, n_targets, n_context)


def init_params(cfg, seed=0):
    """Glorot-uniform weights and zero biases, deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    d, dz, h = cfg.embed_dim, cfg.latent_dim, cfg.decoder_width
    p = {}
    nn.init_mlp(p, rng, "lat.emb", [cfg.loc_dim + 1, d, d])
    for b in range(cfg.sa_blocks):
        nn.init_self_attention_block(p, rng, f"lat.sa{b}", d, cfg.ffn_mult)
    nn.init_mlp(p, rng, "lat.head", [d, d, 2 * dz])
    nn.init_mlp(p, rng, "det.loc", [cfg.loc_dim, d, d])
    nn.init_mlp(p, rng, "det.val", [1, d, d])
    nn.init_attention(p, rng, "det.ca", d, d, d, d, d)
    nn.init_dense(p, rng, "dec.loc", cfg.loc_dim, d)
    nn.init_mlp(p, rng, "dec.mlp", [d + dz + d] + [h] * cfg.decoder_layers)
    nn.init_dense(p, rng, "dec.out", h, 2)
    return p


def param_count(params):
    return int(sum(t.data.size for t in params.values()))


# ------------------------------------------------------------------ helpers

def _batched(x, y=None):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 2
    if single:
        x = x[None]
        if y is not None:
            y = np.asarray(y, dtype=float)[None]
    return x, (None if y is None else np.asarray(y, dtype=float)), single


def canonical_order(x, y):
    """Per-batch permutation sorting the context set lexicographically.

    Encoding a canonically ordered set makes every set-level output
    independent of the caller's ordering, bit for bit.
    """
    order = np.empty(y.shape, dtype=np.intp)
    for b in range(x.shape[0]):
        keys = [y[b]] + [x[b, :, c] for c in range(x.shape[2] - 1, -1, -1)]
        order[b] = np.lexsort(keys)
    return order


def _gather(arr, order):
    if arr.ndim == 3:
        return np.take_along_axis(arr, order[..., None], axis=1)
    return np.take_along_axis(arr, order, axis=1)


# ------------------------------------------------------------------ encoder

def encode_latent(params, cfg, x, y):
    """Diagonal Gaussian ``q(z | set)`` from context locations ``x`` and values ``y``."""
    x, y, single = _batched(x, y)
    if x.shape[1] < 1:
        raise InvalidInputError("context set is empty")
    order = canonical_order(x, y)
    x, y = _gather(x, order), _gather(y, order)
    h = nn.mlp(params, "lat.emb", Tensor(np.concatenate([x, y[..., None]], axis=-1)), 2)
    for b in range(cfg.sa_blocks):
        h = nn.self_attention_block(params, f"lat.sa{b}", h, cfg.heads)
    s = ad.mean(h, axis=1)
    out = nn.mlp(params, "lat.head", s, 2)
    dz = cfg.latent_dim
    mu = out[..., :dz]
    sigma = ad.softplus(out[..., dz:]) + SIGMA_FLOOR
    if single:
        mu, sigma = mu[0], sigma[0]
    return GaussianLatent(mu, sigma)


def sample_latent(latent, rng):
    """Reparameterized draw ``mu + sigma * eps`` with ``eps ~ N(0, I)``.

    ``rng`` is a numpy Generator or an integer seed.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    eps = rng.standard_normal(latent.mu.shape)
    return latent.mu + latent.sigma * eps


def encode_deterministic(params, cfg, cx, cy, tx):
    """Cross-attention from targets ``tx`` to the context.

    Returns ``(V*, AttentionMap)``; ``V*`` has shape ``(B, n_targets, embed_dim)``.
    """
    cx, cy, single = _batched(cx, cy)
    tx = np.asarray(tx, dtype=float)
    if tx.ndim == 2:
        tx = tx[None]
    if cx.shape[1] < 1:
        raise InvalidInputError("context set is empty")
    order = canonical_order(cx, cy)
    cx, cy = _gather(cx, order), _gather(cy, order)
    keys = nn.mlp(params, "det.loc", Tensor(cx), 2)
    queries = nn.mlp(params, "det.loc", Tensor(tx), 2)
    values = nn.mlp(params, "det.val", Tensor(cy[..., None]), 2)
    ap = nn.AttentionParams.from_params(params, "det.ca", cfg.heads)
    vstar, weights = nn.multihead_cross_attention(ap, queries, keys, values)
    # back to the caller's context order
    inv = np.argsort(order, axis=1)
    per_head = np.take_along_axis(weights.data, inv[:, None, None, :], axis=-1)
    amap = AttentionMap(per_head.mean(axis=1), per_head)
    if single:
        vstar = vstar[0]
        amap = AttentionMap(amap.weights[0], amap.per_head[0])
    return vstar, amap


# ------------------------------------------------------------------ decoder

def decode(params, cfg, z, vstar, tx):
    """Gaussian predictive mean and variance at target locations ``tx``."""
    tx = np.asarray(tx, dtype=float)
    single = tx.ndim == 2
    if single:
        tx = tx[None]
        z = ad.reshape(z, (1, *z.shape))
        vstar = ad.reshape(vstar, (1, *vstar.shape))
    b, n = tx.shape[:2]
    if z.shape[0] != b or vstar.shape[:2] != (b, n):
        raise InvalidInputError("decoder inputs disagree on batch or target count")
    loc = nn.dense(params, "dec.loc", Tensor(tx))
    zb = ad.broadcast_to(ad.reshape(z, (b, 1, z.shape[-1])), (b, n, z.shape[-1]))
    h = ad.concat([loc, zb, vstar], axis=-1)
    h = nn.mlp(params, "dec.mlp", h, cfg.decoder_layers, final_activation=True)
    out = nn.dense(params, "dec.out", h)
    mean = out[..., 0]
    var = ad.softplus(out[..., 1]) + VARIANCE_FLOOR
    if single:
        mean, var = mean[0], var[0]
    return DecoderOutput(mean, var)


# --------------------------------------------------------------------- loss

def kl_divergence(q, p):
    """``KL(q || p)`` for diagonal Gaussians, summed over the last axis."""
    diff = q.mu - p.mu
    terms = (ad.log(p.sigma) - ad.log(q.sigma)
             + (ad.square(q.sigma) + ad.square(diff)) / (2.0 * ad.square(p.sigma)) - 0.5)
    return ad.sum(terms, axis=-1)


def reconstruction_loss(pred, target):
    """Mean squared error over every target of every batch element."""
    return ad.mean(ad.square(pred - np.asarray(target, dtype=float)))


def elbo_loss(params, cfg, cx, cy, tx, ty, rng, decoder=decode):
    """Negative ELBO with the reconstruction term reduced to an MSE.

    ``loss = MSE(decoder mean, ty) + KL(q(z | targets) || q(z | context))``,
    averaged over the batch.  ``z`` is one reparameterized draw from the
    target-conditioned posterior.  Returns ``(loss, diagnostics)``.
    """
    prior = encode_latent(params, cfg, cx, cy)
    posterior = encode_latent(params, cfg, tx, ty)
    z = sample_latent(posterior, rng)
    vstar, _ = encode_deterministic(params, cfg, cx, cy, tx)
    out = decoder(params, cfg, z, vstar, tx)
    rec = reconstruction_loss(out.mean, ty)
    kl = ad.mean(kl_divergence(posterior, prior))
    loss = rec + kl
    for name, term in (("L_D", rec), ("KL", kl)):
        if not np.isfinite(term.data):
            raise NonFiniteError(f"non-finite {name} term in the loss", name)
    return loss, {"L_D": float(rec.data), "KL": float(kl.data), "loss": float(loss.data)}


# --------------------------------------------------------------- inference

def with_frequency(x, freq_hz, cfg):
    """Append the normalized frequency channel when the model expects it."""
    x = np.asarray(x, dtype=float)
    if not cfg.freq_as_feature:
        return x
    if freq_hz is None:
        raise InvalidInputError("model was trained with frequency as a feature; pass freq_hz")
    f = np.full(x.shape[:-1] + (1,), freq_hz / 1000.0)
    return np.concatenate([x, f], axis=-1)


def predict(params, cfg, cx, cy, tx):
    """Deterministic prediction with ``z`` set to the latent mean."""
    with ad.no_grad():
        latent = encode_latent(params, cfg, cx, cy)
        vstar, amap = encode_deterministic(params, cfg, cx, cy, tx)
        out = decode(params, cfg, latent.mu, vstar, tx)
    return out.mean.data, out.variance.data, amap
