"""Per-node adaptive estimators.

``ccg_adapt`` and ``mcg_step`` are written against arrays with arbitrary
leading axes (runs, nodes) so the cooperation drivers can advance a whole
Monte Carlo batch per call.  ``mcg_adapt``, ``lms_adapt`` and ``rls_adapt``
expose the single-node, single-sample form.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cg_core import conjugate, inner, inv_norm, matvec, orthogonalize, safe_ratio

ETA_TOL = 1e-12


class InvalidEta(ValueError):
    pass


def check_eta(eta, lam):
    """Enforce ``lam - 0.5 <= eta <= lam`` (inclusive)."""
    if not (lam - 0.5 - ETA_TOL <= eta <= lam + ETA_TOL):
        raise InvalidEta(
            f"eta={eta} outside the admissible band [{lam - 0.5:g}, {lam:g}] for forgetting factor {lam}"
        )


class Diagnostics:
    """Counts of numerical events, indexed by (instant, node).

    Counts are summed over the Monte Carlo runs sharing the arrays.
    """

    KINDS = ("early_termination", "alpha_clamp", "beta_reset", "eta_violation")

    def __init__(self, instants, nodes):
        self.counts = {k: np.zeros((instants, nodes), dtype=np.int64) for k in self.KINDS}

    def record(self, kind, instant, node, mask):
        n = int(np.count_nonzero(mask))
        if n:
            if node is None:
                m = np.asarray(mask).reshape(-1, self.counts[kind].shape[1])
                self.counts[kind][instant] += m.sum(axis=0)
            else:
                self.counts[kind][instant, node] += n

    def totals(self):
        return {k: int(v.sum()) for k, v in self.counts.items()}

    def merge(self, other):
        for k in self.KINDS:
            self.counts[k] += other.counts[k]


@dataclass
class CcgConfig:
    J: int = 5
    lam: float = 0.998

    def __post_init__(self):
        if self.J < 1:
            raise ValueError(f"J must be >= 1, got {self.J}")


def ccg_adapt(R, b, w_init, J, events=None, reorthogonalize=True):
    """Run ``J`` conventional CG iterations on ``R w = b`` from ``w_init``.

    The direction restarts from the current residual ``b - R w_init``.  Lanes
    whose ``p^H R p`` collapses stop updating; the other lanes continue.
    ``events``, if given, is a callable ``events(kind, mask)``.  With
    ``reorthogonalize`` each residual and direction is cleaned against the
    earlier ones of the same instant (exact-arithmetic no-op); otherwise the
    Fletcher-Reeves recurrence runs bare.
    """
    if J < 1:
        raise ValueError(f"J must be >= 1, got {J}")
    w = np.array(w_init, dtype=complex)
    g = b - matvec(R, w)
    p = g.copy()
    gg = inner(g, g)
    frozen = np.zeros(gg.shape, dtype=bool)
    residuals, past = [], []
    for _ in range(J):
        Rp = matvec(R, p)
        pRp = inner(p, Rp)
        # guard the curvature of the unit-norm direction
        s2 = inv_norm(p) ** 2
        alpha, bad = safe_ratio(gg * s2, pRp * s2)
        frozen = frozen | bad
        alpha = np.where(frozen, 0.0, alpha)
        w = w + alpha[..., None] * p
        g_new = g - alpha[..., None] * Rp
        if reorthogonalize:
            residuals.append(g)
            past.append((p, Rp, pRp))
            g = orthogonalize(g_new, residuals)
            p = conjugate(g, past)
            gg = inner(g, g)
        else:
            gg_new = inner(g_new, g_new)
            beta, _ = safe_ratio(gg_new, gg)
            g = g_new
            p = g + beta[..., None] * p
            gg = gg_new
    if events is not None:
        events("early_termination", frozen)
    return w


@dataclass
class McgState:
    """Direction and residual carried across instants by modified CG."""

    p: np.ndarray
    g: np.ndarray
    eta: float
    lam: float = 1.0

    def __post_init__(self):
        check_eta(self.eta, self.lam)

    @classmethod
    def from_first_sample(cls, x, d, eta, lam):
        """``p(0) = g(0) = d*(1) x(1)``."""
        g = np.conj(d)[..., None] * np.asarray(x, dtype=complex)
        return cls(g.copy(), g, eta, lam)

    def reconfigure(self, eta=None, lam=None):
        return McgState(self.p, self.g, self.eta if eta is None else eta, self.lam if lam is None else lam)


def mcg_step(R, p, g, psi, innovation, lam, eta, events=None):
    """One modified-CG update, batched over leading axes.

    ``innovation`` is the a-priori correction term ``x (d - psi^H x)^*`` (or
    ``B^H (d - B psi)`` for block data).  Returns ``(w, p_new, g_new)``.
    """
    Rp = matvec(R, p)
    ratio, bad = safe_ratio(inner(p, g), inner(p, Rp))
    alpha = eta * ratio
    w = psi + alpha[..., None] * p
    g_new = lam * g - alpha[..., None] * Rp + innovation
    beta, reset = safe_ratio(inner(g_new - g, g_new), inner(g, g))
    p_new = g_new + beta[..., None] * p
    if events is not None:
        events("alpha_clamp", bad)
        events("beta_reset", reset)
    return w, p_new, g_new


def apriori_innovation(x, d, psi):
    """``x (d - psi^H x)^*``."""
    e = d - inner(psi, x)
    return x * np.conj(e)[..., None]


def mcg_adapt(state, moments, x, d, psi, lam=None, eta=None, events=None):
    """Single-sample modified-CG update of ``psi``.

    ``moments.R`` must already include the current regressor ``x``.  Returns
    the new estimate and the carried :class:`McgState`.
    """
    lam = moments.lam if lam is None else lam
    eta = state.eta if eta is None else eta
    check_eta(eta, lam)
    x = np.asarray(x, dtype=complex)
    psi = np.asarray(psi, dtype=complex)
    w, p, g = mcg_step(moments.R, state.p, state.g, psi, apriori_innovation(x, d, psi), lam, eta, events)
    return w, McgState(p, g, eta, lam)


def lms_adapt(w, x, d, mu):
    """Complex LMS: ``w + mu x (d - w^H x)^*``."""
    if mu < 0:
        raise ValueError(f"step size must be nonnegative, got {mu}")
    return np.asarray(w) + mu * apriori_innovation(np.asarray(x), d, np.asarray(w))


def hermitian_part(A):
    return 0.5 * (A + np.conj(np.swapaxes(A, -1, -2)))


def rls_adapt(P, w, x, d, lam):
    """Exponentially weighted RLS in inverse-correlation form.

    Returns ``(P_new, w_new)``.  Broadcasts over leading axes.
    """
    if not 0.0 < lam <= 1.0:
        raise ValueError(f"forgetting factor must lie in (0, 1], got {lam}")
    P = np.asarray(P)
    x = np.asarray(x)
    Px = matvec(P, x)
    k = Px / (lam + inner(x, Px))[..., None]
    e = d - inner(np.asarray(w), x)
    w_new = w + k * np.conj(e)[..., None]
    # P x x^H P with P Hermitian: (Px)(Px)^H
    P_new = hermitian_part((P - k[..., :, None] * np.conj(Px)[..., None, :]) / lam)
    return P_new, w_new


def rls_information_adapt(P_inv, w, gram, correction, lam):
    """Block RLS in information form.

    ``P_inv <- lam P_inv + gram`` then ``w <- w + P_inv^{-1} correction`` where
    ``gram = sum B^H B`` and ``correction = sum B^H (d - B w)`` over the
    observations absorbed this instant.
    """
    P_inv = lam * P_inv + gram
    step = np.linalg.solve(P_inv, correction[..., None])[..., 0]
    return P_inv, w + step

