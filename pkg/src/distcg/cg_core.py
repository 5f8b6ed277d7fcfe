"""Conjugate-gradient kernel for Hermitian positive-definite systems ``R w = b``.

The scalar helpers (step size, beta rules, direction update) accept single
vectors.  ``inner`` and ``matvec`` broadcast over leading axes and are reused by
the batched adaptation code.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

EPS_DIV = 1e-12


class DegenerateDirection(ArithmeticError):
    """Raised when ``p^H R p`` is too small to divide by."""


class DegenerateResidual(ArithmeticError):
    """Raised when the previous residual energy is too small to divide by."""


class NotConverged(RuntimeError):
    """``cg_solve`` hit ``max_iters`` before meeting the tolerance."""

    def __init__(self, message, iterate):
        super().__init__(message)
        self.iterate = iterate


def inner(a, b):
    """``a^H b`` along the last axis."""
    return np.sum(np.conj(a) * b, axis=-1)


def matvec(R, p):
    return (R @ p[..., None])[..., 0]


def safe_ratio(num, den, eps=EPS_DIV):
    """Elementwise ``num / den`` with zero wherever ``|den| <= eps``.

    Returns the ratio and the boolean mask of degenerate entries.
    """
    den = np.asarray(den)
    bad = np.abs(den) <= eps
    ratio = np.where(bad, 0.0, num / np.where(bad, 1.0, den))
    return ratio, bad


@dataclass
class CgIterate:
    w: np.ndarray
    g: np.ndarray
    p: np.ndarray
    j: int = 0

    def __post_init__(self):
        if not (self.w.shape == self.g.shape == self.p.shape) or self.w.ndim != 1 or self.w.size < 1:
            raise ValueError("w, g and p must be vectors of identical length >= 1")
        if self.j < 0:
            raise ValueError("iteration index must be nonnegative")


def cg_step_size(g, p, R):
    """Rayleigh-quotient step ``(g^H g) / (p^H R p)``."""
    g, p, R = np.asarray(g), np.asarray(p), np.asarray(R)
    den = inner(p, R @ p)
    if abs(den) <= EPS_DIV:
        raise DegenerateDirection(f"|p^H R p| = {abs(den):.3e} <= {EPS_DIV}")
    return complex(inner(g, g) / den)


def fletcher_reeves_beta(g_new, g_old):
    den = inner(np.asarray(g_old), np.asarray(g_old))
    if abs(den) <= EPS_DIV:
        raise DegenerateResidual(f"|g_old^H g_old| = {abs(den):.3e} <= {EPS_DIV}")
    return complex(inner(np.asarray(g_new), np.asarray(g_new)) / den)


def polak_ribiere_beta(g_new, g_old):
    g_new, g_old = np.asarray(g_new), np.asarray(g_old)
    den = inner(g_old, g_old)
    if abs(den) <= EPS_DIV:
        raise DegenerateResidual(f"|g_old^H g_old| = {abs(den):.3e} <= {EPS_DIV}")
    return complex(inner(g_new - g_old, g_new) / den)


def update_direction(g, beta, p_old):
    return np.asarray(g) + beta * np.asarray(p_old)


def inv_norm(v):
    """``1 / ||v||`` along the last axis, with 1 where ``v`` is zero."""
    n = np.sqrt(np.real(inner(v, v)))
    return 1.0 / np.where(n > 0, n, 1.0)


def orthogonalize(g, basis, eps=EPS_DIV):
    """Remove from ``g`` its components along each vector in ``basis``.

    Batched over leading axes.  Projections use unit-norm copies so that
    small but valid basis vectors are not mistaken for degenerate ones;
    only exactly zero vectors are skipped.
    """
    for v in basis:
        u = v * inv_norm(v)[..., None]
        c, _ = safe_ratio(inner(u, g), inner(u, u), eps)
        g = g - c[..., None] * u
    return g


def conjugate(g, directions, eps=EPS_DIV):
    """Make ``g`` R-conjugate to earlier directions.

    ``directions`` holds ``(p, R p, p^H R p)`` triples.  The curvature guard
    acts on unit-norm directions, as in the step size.
    """
    p = g
    for pj, Rpj, dj in directions:
        s = inv_norm(pj)
        c, _ = safe_ratio(inner(Rpj * s[..., None], g), dj * s**2, eps)
        p = p - c[..., None] * (pj * s[..., None])
    return p


@dataclass
class CgTrace:
    """Per-iteration history kept by ``cg_solve(..., trace=True)``."""

    residuals: list = field(default_factory=list)
    directions: list = field(default_factory=list)
    estimates: list = field(default_factory=list)


def cg_solve(R, b, w0=None, max_iters=None, tol=1e-10, trace=False, reorthogonalize=True):
    """Solve ``R w = b`` for Hermitian positive-definite ``R``.

    Parameters
    ----------
    R : (M, M) array
    b : (M,) array
    w0 : (M,) array, optional
        Initial guess, zero by default.
    max_iters : int, optional
        Defaults to ``M``.
    tol : float
        Stop once ``||g|| <= tol * ||b||``.
    trace : bool
        If true, also return a :class:`CgTrace` with every residual,
        direction and estimate.
    reorthogonalize : bool
        Orthogonalize each residual against the earlier ones and conjugate
        each direction against the earlier directions.  In exact arithmetic
        this is the plain recurrence; in floating point it keeps finite
        termination on ill-conditioned spectra.  ``False`` runs the bare
        recurrence.

    Returns
    -------
    w, iters[, trace]

    Raises
    ------
    NotConverged
        With the final iterate attached, when ``max_iters`` is exhausted.
    """
    R = np.asarray(R, dtype=complex)
    b = np.asarray(b, dtype=complex)
    M = b.shape[0]
    if R.shape != (M, M):
        raise ValueError(f"R has shape {R.shape}, expected {(M, M)}")
    max_iters = M if max_iters is None else int(max_iters)
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    w = np.zeros(M, dtype=complex) if w0 is None else np.array(w0, dtype=complex)

    g = b - R @ w
    p = g.copy()
    hist = CgTrace() if trace else None
    if hist is not None:
        hist.residuals.append(g.copy())
        hist.directions.append(p.copy())
        hist.estimates.append(w.copy())

    target = tol * np.linalg.norm(b)
    it = 0
    past, residuals = [], []
    while np.linalg.norm(g) > target and it < max_iters:
        # the guard acts on the unit-norm direction so that it tests
        # curvature rather than how small the residual has become
        pn = np.linalg.norm(p)
        if pn == 0.0:
            break
        try:
            alpha = cg_step_size(g, p / pn, R) / pn**2
        except DegenerateDirection:
            break
        Rp = R @ p
        w = w + alpha * p
        g_new = g - alpha * Rp
        try:
            beta = fletcher_reeves_beta(g_new, g)
        except DegenerateResidual:
            beta = 0.0
        if reorthogonalize:
            residuals.append(g)
            past.append((p, Rp, inner(p, Rp)))
            g_new = orthogonalize(g_new, residuals)
            p = conjugate(g_new, past)
        else:
            p = update_direction(g_new, beta, p)
        g = g_new
        it += 1
        if hist is not None:
            hist.residuals.append(g.copy())
            hist.directions.append(p.copy())
            hist.estimates.append(w.copy())

    if np.linalg.norm(g) > target:
        raise NotConverged(
            f"residual {np.linalg.norm(g):.3e} > {target:.3e} after {it} iterations",
            CgIterate(w, g, p, it),
        )
    return (w, it, hist) if trace else (w, it)
