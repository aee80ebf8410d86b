"""Training loop and field-level prediction for the neural process."""
from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import npmodel as npm
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import InvalidInputError, NonFiniteError
from .fields import Grid
from .optim import OptimizerState, adam_step


@dataclass
class TrainConfig:
    epochs: int = 300
    base_lr: float = 1e-4
    decayed_lr: float = 1e-5
    warmup: int = 20
    decay_epoch: int = 200
    batch_size: int = 16
    ctx_range: tuple = (3, 50)
    extra_range: tuple = (32, 256)
    # fixed context size per step (per-count training); None draws from ctx_range
    fixed_ctx: int | None = None
    # visits per field and epoch; frequencies are spread evenly over the visits
    visits_per_epoch: int = 1
    checkpoint_every: int = 0
    model: npm.NPConfig = dc_field(default_factory=npm.NPConfig)

    def __post_init__(self):
        if isinstance(self.model, dict):
            self.model = npm.NPConfig.from_dict(self.model)
        self.ctx_range = tuple(self.ctx_range)
        self.extra_range = tuple(self.extra_range)

    def to_dict(self):
        d = asdict(self)
        d["ctx_range"] = list(self.ctx_range)
        d["extra_range"] = list(self.extra_range)
        return d


@dataclass
class TrainingData:
    """Standardized magnitudes of every (field, frequency) pair."""

    values: np.ndarray   # (F, nf, P) standardized magnitudes
    mean: np.ndarray     # (F, nf)
    std: np.ndarray      # (F, nf)
    freqs: np.ndarray    # (F, nf)
    locs: np.ndarray     # (P, 2) unit-square grid locations

    @classmethod
    def from_dataset(cls, ds):
        mags = np.abs(ds.values).reshape(ds.count, ds.values.shape[1], -1)
        mean = mags.mean(axis=-1)
        std = mags.std(axis=-1)
        if np.any(std < 1e-12 * np.maximum(1.0, mean)):
            bad = np.argwhere(std < 1e-12 * np.maximum(1.0, mean))[0]
            raise InvalidInputError(f"field {bad[0]} frequency index {bad[1]} is degenerate")
        values = (mags - mean[..., None]) / std[..., None]
        return cls(values, mean, std, ds.freqs, Grid(ds.nx, ds.ny).normalized_points())


def draw_batch(data, pairs, rng, cfg, n_ctx=None):
    """Context/target arrays for the (field, freq) ``pairs`` of one step.

    One context size and one extra-target count are shared by the batch;
    contexts are the first ``n_ctx`` targets.  ``n_ctx`` defaults to
    ``cfg.fixed_ctx`` or a uniform draw from ``cfg.ctx_range``.
    """
    lo, hi = cfg.ctx_range
    n_ctx = n_ctx or cfg.fixed_ctx or int(rng.integers(lo, hi + 1))
    n_extra = int(rng.integers(cfg.extra_range[0], cfg.extra_range[1] + 1))
    n_tgt = min(n_ctx + n_extra, data.locs.shape[0])
    idx = np.argsort(rng.random((len(pairs), data.locs.shape[0])), axis=1)[:, :n_tgt]
    f, j = pairs[:, 0], pairs[:, 1]
    ty = data.values[f[:, None], j[:, None], idx]
    tx = data.locs[idx]
    if cfg.model.freq_as_feature:
        fcol = np.broadcast_to(data.freqs[f, j][:, None, None] / 1000.0, (*tx.shape[:2], 1))
        tx = np.concatenate([tx, fcol], axis=-1)
    return tx[:, :n_ctx], ty[:, :n_ctx], tx, ty


def stratified_integers(n, lo, hi, rng):
    """``n`` shuffled draws, each uniform on ``lo..hi``, jointly spread evenly over the range."""
    span = hi - lo + 1
    return lo + rng.permutation(np.floor((np.arange(n) + rng.random()) * span / n).astype(int))


def epoch_pairs(num_fields, num_freqs, visits, rng):
    """Shuffled ``(field, frequency index)`` pairs for one epoch.

    Each field is visited ``visits`` times.  Frequencies are spread evenly
    over the visits (counts differ by at most one) so that epoch losses are
    comparable across epochs.
    """
    fields_ = np.repeat(np.arange(num_fields), visits)
    rng.shuffle(fields_)
    freq_idx = rng.permutation((np.arange(len(fields_)) + rng.integers(num_freqs)) % num_freqs)
    return np.stack([fields_, freq_idx], axis=1)


def train(dataset, config, seed=0, checkpoint_path=None, log_path=None, params=None):
    """Fit the neural process with Adam on the negative ELBO.

    Returns ``(params, history)``; ``history`` holds one record per epoch.
    Single-threaded runs are reproducible from ``seed``.
    """
    data = dataset if isinstance(dataset, TrainingData) else TrainingData.from_dataset(dataset)
    cfg = config
    ss = np.random.SeedSequence(seed)
    init_seed, loop_seed = ss.spawn(2)
    if params is None:
        params = npm.init_params(cfg.model, int(init_seed.generate_state(1)[0]))
    rng = np.random.default_rng(loop_seed)
    opt = OptimizerState(cfg.base_lr, cfg.warmup, cfg.decay_epoch, cfg.decayed_lr)
    F, nf = data.values.shape[:2]
    history = []
    log = open(log_path, "w") if log_path else None
    t0 = time.perf_counter()
    step = 0
    try:
        for epoch in range(cfg.epochs):
            pairs = epoch_pairs(F, nf, cfg.visits_per_epoch, rng)
            n_batches = -(-len(pairs) // cfg.batch_size)
            # loss depends strongly on the context size, so sizes are spread evenly per epoch
            sizes = stratified_integers(n_batches, *cfg.ctx_range, rng)
            sums = {"L_D": 0.0, "KL": 0.0, "loss": 0.0}
            batches = 0
            for b, start in enumerate(range(0, len(pairs), cfg.batch_size)):
                cx, cy, tx, ty = draw_batch(data, pairs[start:start + cfg.batch_size], rng, cfg,
                                            n_ctx=cfg.fixed_ctx or int(sizes[b]))
                for p in params.values():
                    p.grad = None
                try:
                    loss, diag = npm.elbo_loss(params, cfg.model, cx, cy, tx, ty, rng)
                    loss.backward()
                    lr = adam_step(opt, params, epoch)
                except NonFiniteError as exc:
                    raise NonFiniteError(f"epoch {epoch} step {step}: {exc}", exc.name) from exc
                step += 1
                batches += 1
                for k in sums:
                    sums[k] += diag[k]
            record = {"epoch": epoch, "step": step, "L_D": sums["L_D"] / batches,
                      "KL": sums["KL"] / batches, "loss": sums["loss"] / batches, "lr": lr,
                      "wall_ms": round(1e3 * (time.perf_counter() - t0), 1)}
            history.append(record)
            if log:
                log.write(json.dumps(record) + "\n")
                log.flush()
            if checkpoint_path and cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
                save_checkpoint(checkpoint_path, params, cfg.model, opt)
    finally:
        if log:
            log.close()
    if checkpoint_path:
        save_checkpoint(checkpoint_path, params, cfg.model, opt)
    return params, history


def predict_field(context_locs, context_values, grid, model, stats=None, freq_hz=None):
    """Reconstruct magnitudes over ``grid`` from a context set.

    Parameters
    ----------
    context_locs : ndarray (n, 2)
        Context locations in metres.
    context_values : ndarray (n,)
        Standardized magnitudes at the context locations.
    grid : Grid
    model : path or (params, NPConfig)
        An NPC1 checkpoint path or an in-memory model.
    stats : (mean, std), optional
        Standardization statistics; when given the output is de-standardized.

    Returns
    -------
    field : ndarray (nx, ny)
    amap : AttentionMap
        Per-target attention over the context, in the caller's order.
    """
    if isinstance(model, (str, Path)):
        params, cfg, _ = load_checkpoint(model)
    else:
        params, cfg = model
    scale = np.array([grid.lx, grid.ly])
    cx = npm.with_frequency(np.asarray(context_locs, dtype=float) / scale, freq_hz, cfg)
    tx = npm.with_frequency(grid.normalized_points(), freq_hz, cfg)
    mean, _, amap = npm.predict(params, cfg, cx, np.asarray(context_values, dtype=float), tx)
    if stats is not None:
        mean = mean * stats[1] + stats[0]
    return mean.reshape(grid.nx, grid.ny), amap
