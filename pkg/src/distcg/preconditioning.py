"""Unitary transform-domain preconditioners.

A preconditioner ``T`` maps the normal equations to ``(T R T^H) (T w) = T b``.
It is applied at ingestion: regressors become ``T x`` (block rows ``B T^H``),
desired samples are untouched, and estimates are mapped back with ``T^H``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("none", "dft", "dct")


@dataclass(frozen=True)
class Preconditioner:
    T: np.ndarray
    kind: str

    @property
    def M(self):
        return self.T.shape[0]

    @property
    def is_identity(self):
        return self.kind == "none"


def identity(M):
    return Preconditioner(np.eye(M, dtype=complex), "none")


def dft_matrix(M):
    """``[T]_{vm} = exp(-j 2 pi m v / M) / sqrt(M)``."""
    if M < 1:
        raise ValueError("M must be >= 1")
    v = np.arange(M)
    # reduce m*v mod M before scaling keeps the phases exact for large M
    phase = -2j * np.pi * (np.outer(v, v) % M) / M
    return Preconditioner(np.exp(phase) / np.sqrt(M), "dft")


def dct_coefficients(M):
    """Orthonormal DCT-II matrix ``delta(v) cos(v (2m + 1) pi / (2M))``."""
    if M < 1:
        raise ValueError("M must be >= 1")
    v = np.arange(M)[:, None]
    m = np.arange(M)[None, :]
    scale = np.where(v == 0, np.sqrt(1.0 / M), np.sqrt(2.0 / M))
    return scale * np.cos(v * (2 * m + 1) * np.pi / (2 * M))


def dct_matrix(M):
    """DCT preconditioner, used as ``T = T_DCT^H``."""
    return Preconditioner(dct_coefficients(M).conj().T.astype(complex), "dct")


def make(kind, M):
    kind = "none" if kind in (None, "identity") else kind
    if kind == "none":
        return identity(M)
    if kind == "dft":
        return dft_matrix(M)
    if kind == "dct":
        return dct_matrix(M)
    raise ValueError(f"unknown preconditioner {kind!r}; expected one of {KINDS}")


def _matrix(T):
    return T.T if isinstance(T, Preconditioner) else np.asarray(T)


def transform_regressor(T, x):
    """``T x`` along the last axis of ``x``."""
    T = _matrix(T)
    return np.asarray(x) @ T.T


def transform_block(T, B):
    """Rows of ``B`` mapped so that ``B w = (B T^H)(T w)``."""
    T = _matrix(T)
    return np.asarray(B) @ T.conj().T


def recover_estimate(T, w_tilde):
    """``T^H w~`` along the last axis."""
    T = _matrix(T)
    return np.asarray(w_tilde) @ T.conj()
