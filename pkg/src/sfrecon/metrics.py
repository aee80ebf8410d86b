"""Reconstruction error metrics: normalized mean square error and MAC."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

#: dB value written in place of ``-inf`` when the error is exactly zero.
DB_SENTINEL = -240.0


def _pair(truth, pred):
    truth = np.asarray(truth).ravel()
    pred = np.asarray(pred).ravel()
    if truth.shape != pred.shape:
        raise InvalidInputError(f"truth has {truth.size} entries but prediction has {pred.size}")
    if truth.size == 0:
        raise InvalidInputError("metrics need at least one entry")
    return truth, pred


def to_db(linear):
    """``10 log10(linear)``, with an exact zero mapped to ``DB_SENTINEL``."""
    if linear == 0:
        return DB_SENTINEL
    return float(10.0 * np.log10(linear))


def nmse(truth, pred, variant="point"):
    """Normalized mean square error as ``(linear, dB)``.

    Parameters
    ----------
    truth, pred : array_like
        Ground-truth and predicted values of equal size.
    variant : {"point", "vector"}
        ``"point"`` normalizes every squared error by the squared truth at the
        same point and then averages; ``"vector"`` divides the total squared
        error by the total truth energy.

    Raises
    ------
    InvalidInputError
        If the truth contains an exact zero (point variant) or is entirely
        zero (vector variant).
    """
    truth, pred = _pair(truth, pred)
    err = np.abs(truth - pred) ** 2
    energy = np.abs(truth) ** 2
    if variant == "point":
        if np.any(energy == 0):
            raise InvalidInputError(f"truth is exactly zero at index {int(np.flatnonzero(energy == 0)[0])}")
        linear = float(np.mean(err / energy))
    elif variant == "vector":
        total = float(np.sum(energy))
        if total == 0:
            raise InvalidInputError("truth is identically zero")
        linear = float(np.sum(err)) / total
    else:
        raise InvalidInputError(f"unknown NMSE variant {variant!r}")
    return linear, to_db(linear)


def mac(truth, pred):
    """Modal assurance criterion ``|t^H p|^2 / ((t^H t)(p^H p))`` in ``[0, 1]``."""
    truth, pred = _pair(truth, pred)
    tt = float(np.vdot(truth, truth).real)
    pp = float(np.vdot(pred, pred).real)
    if tt == 0 or pp == 0:
        raise InvalidInputError("MAC is undefined for a zero vector")
    return abs(np.vdot(truth, pred)) ** 2 / (tt * pp)


@dataclass
class MetricReport:
    """Mean scores of one method over a set of fields at one frequency."""

    method: str
    family: str
    freq_hz: float
    n_obs: int
    nmse_linear: float
    nmse_db: float
    mac: float
    field_count: int
    failures: int = 0

    @property
    def complete(self):
        return self.failures == 0

    def __post_init__(self):
        if self.nmse_linear < 0:
            raise InvalidInputError("NMSE cannot be negative")
        if not (0 <= self.mac <= 1 + 1e-12) and not np.isnan(self.mac):
            raise InvalidInputError(f"MAC {self.mac} lies outside [0, 1]")
