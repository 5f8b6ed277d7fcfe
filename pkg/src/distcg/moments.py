"""Exponentially weighted second-order statistics kept at each node.

All updates broadcast over leading axes, so a stack of nodes or Monte Carlo
runs can be updated in one call.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_DELTA = 1e-2


def _check_forgetting(lam):
    if not 0.0 < lam <= 1.0:
        raise ValueError(f"forgetting factor must lie in (0, 1], got {lam}")


def outer(x):
    """``x x^H`` for the last axis of ``x``; exactly Hermitian by construction."""
    o = x[..., :, None] * np.conj(x)[..., None, :]
    # product rounding can leave the two triangles (and the diagonal's
    # imaginary part) out of step; averaging with the adjoint is exact
    return 0.5 * (o + np.conj(np.swapaxes(o, -1, -2)))


def update_autocorrelation(R_prev, x, lam):
    _check_forgetting(lam)
    R_prev, x = np.asarray(R_prev), np.asarray(x)
    if R_prev.shape[-1] != x.shape[-1]:
        raise ValueError(f"dimension mismatch: R is {R_prev.shape}, x is {x.shape}")
    return lam * R_prev + outer(x)


def update_crosscorrelation(b_prev, x, d, lam):
    _check_forgetting(lam)
    b_prev, x = np.asarray(b_prev), np.asarray(x)
    if b_prev.shape[-1] != x.shape[-1]:
        raise ValueError(f"dimension mismatch: b is {b_prev.shape}, x is {x.shape}")
    return lam * b_prev + np.conj(d)[..., None] * x


@dataclass
class NodeMoments:
    """Autocorrelation ``R``, cross-correlation ``b`` and forgetting factor."""

    R: np.ndarray
    b: np.ndarray
    lam: float

    def __post_init__(self):
        _check_forgetting(self.lam)
        M = self.b.shape[-1]
        if self.R.shape[-2:] != (M, M):
            raise ValueError(f"R has shape {self.R.shape}, b has shape {self.b.shape}")

    @classmethod
    def initial(cls, M, lam, delta=DEFAULT_DELTA, batch=()):
        """Regularized prior ``R = delta*I``, ``b = 0``."""
        R = np.broadcast_to(delta * np.eye(M, dtype=complex), (*batch, M, M)).copy()
        return cls(R, np.zeros((*batch, M), dtype=complex), lam)

    def update(self, x, d):
        return NodeMoments(
            update_autocorrelation(self.R, x, self.lam),
            update_crosscorrelation(self.b, x, d, self.lam),
            self.lam,
        )


def update_block_moments(moments, B, d, gram=None):
    """Fold a block of ``Nc`` observations ``d = B w + n`` into the moments.

    ``R <- lam R + B^H B`` and ``b <- lam b + B^H d``.  ``gram`` may carry a
    precomputed ``B^H B`` when ``B`` is shared by many updates.
    """
    B = np.asarray(B)
    d = np.asarray(d)
    M = moments.b.shape[-1]
    if B.shape[-1] != M:
        raise ValueError(f"B has {B.shape[-1]} columns, moments have dimension {M}")
    if B.shape[-2] != d.shape[-1]:
        raise ValueError(f"B has {B.shape[-2]} rows but d has {d.shape[-1]} entries")
    if gram is None:
        gram = np.conj(np.swapaxes(B, -1, -2)) @ B
    if B.ndim == 2:
        cross = d @ np.conj(B)
    else:
        cross = (np.conj(np.swapaxes(B, -1, -2)) @ d[..., None])[..., 0]
    return NodeMoments(moments.lam * moments.R + gram, moments.lam * moments.b + cross, moments.lam)
