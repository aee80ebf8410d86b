"""Benchmark harness comparing reconstruction methods over a dataset.

Each (field, observation count) pair gets one observation set that is shared
by every method and frequency, so methods are compared on identical inputs.
Per-field rows are kept; the summary averages them per
(method, frequency, observation count).
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import fields as fs
from . import gp
from .dataset import worker_count
from .errors import InvalidInputError, OptimizationError, SingularSystemError, DegenerateFieldError
from .metrics import MetricReport, mac, nmse

METHODS = ("np", "gp-bessel", "gp-hier", "gp-rbf-iso", "gp-rbf-aniso", "gp-rbf-per", "mean-baseline")
GP_METHODS = {"gp-bessel": "bessel", "gp-hier": "hier", "gp-rbf-iso": "rbf-iso",
              "gp-rbf-aniso": "rbf-aniso", "gp-rbf-per": "rbf-per",
              "gp-pw-multi": "pw-multi", "gp-pw-sparse": "pw-sparse"}
CSV_HEADER = ("method", "family", "freq_hz", "n_obs", "field_id", "nmse_db", "mac")
SUMMARY_HEADER = ("method", "family", "freq_hz", "n_obs", "nmse_db", "mac", "fields", "failures")


@dataclass
class BenchConfig:
    methods: tuple = ("mean-baseline", "gp-bessel")
    obs_counts: tuple = (10,)
    seed: int = 0
    freqs: tuple | None = None        # None: every dataset frequency
    field_ids: tuple | None = None    # None: every field
    nmse_variant: str = "point"
    restarts: int = 8
    gp_scaling: str = "observations"  # or "none" (raw pascal)
    np_stats: str = "field"           # or "observations"

    def __post_init__(self):
        self.methods = tuple(self.methods)
        self.obs_counts = tuple(int(n) for n in self.obs_counts)
        for m in self.methods:
            if m not in METHODS and m not in GP_METHODS:
                raise InvalidInputError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
        if not self.obs_counts or min(self.obs_counts) < 1:
            raise InvalidInputError("observation counts must be positive")
        if self.nmse_variant not in ("point", "vector"):
            raise InvalidInputError(f"unknown NMSE variant {self.nmse_variant!r}")
        if self.gp_scaling not in ("observations", "none"):
            raise InvalidInputError(f"unknown GP scaling {self.gp_scaling!r}")
        if self.np_stats not in ("field", "observations"):
            raise InvalidInputError(f"unknown NP statistics source {self.np_stats!r}")

    def to_dict(self):
        d = asdict(self)
        for k in ("methods", "obs_counts", "freqs", "field_ids"):
            if d[k] is not None:
                d[k] = list(d[k])
        return d


def observation_seed(seed, field_id, n_obs):
    ss = np.random.SeedSequence([int(seed), int(field_id), int(n_obs)])
    return int(ss.generate_state(1)[0])


def reconstruct(method, field, obs, *, model=None, restarts=8, seed=0,
                gp_scaling="observations", np_stats="field"):
    """Predicted magnitudes over ``field.grid`` (flat, i-major).

    ``obs`` holds the observation indices and locations; its values are
    ignored and re-read from ``field`` in the form each method consumes.
    """
    idx = np.asarray(obs.indices)
    truth = np.asarray(field.values).ravel()
    mags = np.abs(truth)
    points = field.grid.points()
    if method == "mean-baseline":
        return np.full(field.grid.size, mags[idx].mean())
    if method in GP_METHODS:
        cobs = obs.with_values(truth[idx])
        fit = gp.fit_map(cobs, GP_METHODS[method], restarts=restarts, seed=seed,
                         freq_hz=field.freq_hz, scale=gp_scaling == "observations")
        return gp.posterior_mean(cobs, points, fit)[1]
    if method == "np":
        from .training import predict_field
        if model is None:
            raise InvalidInputError("method 'np' needs a trained model")
        if np_stats == "field":
            mean, std = float(mags.mean()), float(mags.std())
        else:
            mean, std = float(mags[idx].mean()), float(mags[idx].std())
        if not std > 1e-12 * max(1.0, abs(mean)):
            raise DegenerateFieldError("magnitudes are constant; cannot standardize")
        pred, _ = predict_field(obs.locations, (mags[idx] - mean) / std, field.grid, model,
                                stats=(mean, std), freq_hz=field.freq_hz)
        return pred.ravel()
    raise InvalidInputError(f"unknown method {method!r}")


_RECOVERABLE = (SingularSystemError, OptimizationError, InvalidInputError, DegenerateFieldError,
                FloatingPointError)


def _field_rows(args):
    dataset, i, cfg, model = args
    rows = []
    family = dataset.family.label
    freqs = dataset.freqs[i]
    wanted = range(len(freqs)) if cfg.freqs is None else [dataset.freq_index(i, f) for f in cfg.freqs]
    for n_obs in cfg.obs_counts:
        oseed = observation_seed(cfg.seed, i, n_obs)
        for j in wanted:
            field = dataset.field(i, j)
            obs = fs.sample_observations(field, n_obs, oseed)
            truth = field.magnitudes.ravel()
            for method in cfg.methods:
                try:
                    pred = reconstruct(method, field, obs, model=model, restarts=cfg.restarts,
                                       seed=oseed, gp_scaling=cfg.gp_scaling, np_stats=cfg.np_stats)
                    db = nmse(truth, pred, cfg.nmse_variant)[1]
                    score = mac(truth, pred)
                except _RECOVERABLE:
                    db, score = math.nan, math.nan
                rows.append({"method": method, "family": family, "freq_hz": float(freqs[j]),
                             "n_obs": n_obs, "field_id": i, "nmse_db": db, "mac": score})
    return rows


def benchmark(dataset, config, model=None, workers=None):
    """Score every configured method on every selected field.

    Returns ``(rows, reports)``: per-field dictionaries in a fixed order and
    one MetricReport per (method, frequency, observation count).
    """
    if "np" in config.methods and model is None:
        raise InvalidInputError("method 'np' needs a trained model")
    ids = range(dataset.count) if config.field_ids is None else config.field_ids
    for i in ids:
        if not 0 <= i < dataset.count:
            raise InvalidInputError(f"field id {i} is out of range for {dataset.count} fields")
    jobs = [(dataset, i, config, model) for i in ids]
    workers = worker_count() if workers is None else workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            chunks = list(pool.map(_field_rows, jobs))
    else:
        chunks = [_field_rows(job) for job in jobs]
    rows = [r for chunk in chunks for r in chunk]
    return rows, summarize(rows)


def summarize(rows):
    groups = {}
    for r in rows:
        key = (r["method"], r["family"], r["freq_hz"], r["n_obs"])
        groups.setdefault(key, []).append(r)
    reports = []
    for (method, family, freq, n_obs), grp in groups.items():
        db = np.array([r["nmse_db"] for r in grp], dtype=float)
        mc = np.array([r["mac"] for r in grp], dtype=float)
        ok = np.isfinite(db)
        mean_db = float(db[ok].mean()) if ok.any() else math.nan
        mean_mac = float(mc[ok].mean()) if ok.any() else math.nan
        linear = float(np.mean(10.0 ** (db[ok] / 10))) if ok.any() else math.nan
        reports.append(MetricReport(method, family, freq, n_obs, linear, mean_db, mean_mac,
                                    int(ok.sum()), int((~ok).sum())))
    return reports


def _fmt(x):
    return repr(float(x)) if isinstance(x, float) else str(x)


def rows_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([_fmt(r[k]) for k in CSV_HEADER])
    return buf.getvalue()


def summary_csv(reports):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_HEADER + ("complete",))
    for r in reports:
        w.writerow([r.method, r.family, _fmt(r.freq_hz), r.n_obs, _fmt(r.nmse_db), _fmt(r.mac),
                    r.field_count, r.failures, "yes" if r.complete else "no"])
    return buf.getvalue()


def read_rows(path):
    with open(path, newline="") as fh:
        out = []
        for r in csv.DictReader(fh):
            out.append({"method": r["method"], "family": r["family"], "freq_hz": float(r["freq_hz"]),
                        "n_obs": int(r["n_obs"]), "field_id": int(r["field_id"]),
                        "nmse_db": float(r["nmse_db"]), "mac": float(r["mac"])})
    return out


def lookup(reports, method, freq_hz, n_obs=None):
    for r in reports:
        if r.method == method and math.isclose(r.freq_hz, freq_hz) and (n_obs is None or r.n_obs == n_obs):
            return r
    raise KeyError(f"no report for {method} at {freq_hz} Hz")
