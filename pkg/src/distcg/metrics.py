"""Learning-curve metrics: MSD, MSE and Monte Carlo averaging."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DB_FLOOR = -300.0
STEADY_FRACTION = 0.1


def to_db(value, floor=DB_FLOOR):
    value = np.asarray(value, dtype=float)
    with np.errstate(divide="ignore"):
        out = 10.0 * np.log10(value)
    return np.maximum(out, floor)


def from_db(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def msd(estimates, w0):
    """Mean over nodes of ``||w0 - w_k||^2``.

    ``estimates`` is (N, M) or a single (M,) vector; leading batch axes are
    kept, so (runs, N, M) gives one value per run.
    """
    estimates = np.asarray(estimates)
    if estimates.ndim == 1:
        estimates = estimates[None, :]
    err = np.sum(np.abs(estimates - np.asarray(w0)) ** 2, axis=-1)
    return err.mean(axis=-1)


def mse(d, y):
    return np.abs(np.asarray(d) - np.asarray(y)) ** 2


@dataclass
class LearningCurve:
    linear: np.ndarray
    tag: str = ""
    runs: int = 1

    def __post_init__(self):
        self.linear = np.asarray(self.linear, dtype=float)

    @property
    def db(self):
        return to_db(self.linear)

    def __len__(self):
        return self.linear.shape[0]

    def steady_state(self, fraction=STEADY_FRACTION):
        return steady_state(self.linear, fraction)


def steady_state(linear, fraction=STEADY_FRACTION):
    """Mean of the final ``fraction`` of instants (linear domain)."""
    linear = np.asarray(linear, dtype=float)
    n = max(1, int(round(fraction * linear.shape[-1])))
    return linear[..., -n:].mean(axis=-1)


def average_runs(curves):
    """Pointwise linear-domain mean of equally long curves, weighted by run count."""
    curves = list(curves)
    if not curves:
        raise ValueError("no curves to average")
    n = len(curves[0])
    if any(len(c) != n for c in curves):
        raise ValueError(f"curve lengths differ: {[len(c) for c in curves]}")
    weights = np.array([c.runs for c in curves], dtype=float)
    stacked = np.stack([c.linear for c in curves])
    mean = (weights[:, None] * stacked).sum(axis=0) / weights.sum()
    return LearningCurve(mean, curves[0].tag, int(weights.sum()))
