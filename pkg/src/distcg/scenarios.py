"""Seeded data generation for parameter estimation and spectrum estimation.

Seed hierarchy: a master seed spawns fixed-key child streams, so run ``r``
sees the same data no matter how many runs are requested or how they are
batched::

    (0,)    scenario stream  -> true weights / active basis set
    (1, r)  run stream       -> regressors and noise of run r
    (2,)    topology stream  -> random geometric graph
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cg_core import inner
from .moments import outer
from .preconditioning import transform_block, transform_regressor


def scenario_rng(seed):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))


def run_rng(seed, run):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1, int(run))))


def topology_rng(seed):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2,)))


def circular_gaussian(rng, shape, variance):
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


# -- parameter estimation ----------------------------------------------------


@dataclass
class ParameterScenario:
    N: int = 20
    M: int = 10
    instants: int = 1000
    sigma_x2: float = 1.0
    sigma_n2: float = 1e-3
    seed: int = 0
    w0: np.ndarray | None = None

    def __post_init__(self):
        if self.sigma_x2 <= 0:
            raise ValueError(f"input variance must be positive, got {self.sigma_x2}")
        if self.sigma_n2 < 0:
            raise ValueError(f"noise variance must be nonnegative, got {self.sigma_n2}")
        if min(self.N, self.M, self.instants) < 1:
            raise ValueError("N, M and instants must all be >= 1")

    def true_weights(self):
        """Unit-norm circular Gaussian draw, fixed for the whole experiment."""
        if self.w0 is not None:
            return np.asarray(self.w0, dtype=complex)
        w = circular_gaussian(scenario_rng(self.seed), self.M, 1.0)
        return w / np.linalg.norm(w)


def gen_parameter_data(scenario, runs=1):
    """Regressor streams for the runs in ``runs`` (an int or an iterable of run ids).

    ``d_k(i) = w0^H x_k(i) + n_k(i)`` with i.i.d. circular Gaussian inputs
    and noise.
    """
    ids = range(runs) if isinstance(runs, int) else list(runs)
    w0 = scenario.true_weights()
    shape = (scenario.instants, scenario.N)
    xs, ds = [], []
    for r in ids:
        rng = run_rng(scenario.seed, r)
        x = circular_gaussian(rng, shape + (scenario.M,), scenario.sigma_x2)
        n = circular_gaussian(rng, shape, scenario.sigma_n2)
        xs.append(x)
        ds.append(inner(w0, x) + n)
    return RegressorData(np.stack(xs), np.stack(ds), w0)


# -- spectrum estimation -----------------------------------------------------


def frequency_grid(n_freq, f_min=0.0, f_max=1.0):
    """``f_j = f_min + j (f_max - f_min) / Nc`` for ``j = 0 .. Nc-1``."""
    return f_min + np.arange(n_freq) * (f_max - f_min) / n_freq


def rectangular_basis(grid, n_basis, f_min=0.0, f_max=1.0):
    """Non-overlapping unit-height rectangles partitioning ``[f_min, f_max]``.

    Row ``j`` evaluates every basis function at ``grid[j]``.
    """
    grid = np.asarray(grid, dtype=float)
    width = (f_max - f_min) / n_basis
    idx = np.clip(np.floor((grid - f_min) / width + 1e-9).astype(int), 0, n_basis - 1)
    B = np.zeros((grid.size, n_basis))
    B[np.arange(grid.size), idx] = 1.0
    return B


def psd_from_weights(w, grid, f_min=0.0, f_max=1.0):
    w = np.asarray(w)
    return rectangular_basis(grid, w.shape[-1], f_min, f_max) @ w


@dataclass
class SpectrumScenario:
    N: int = 20
    n_basis: int = 50
    n_freq: int = 100
    n_active: int = 8
    active_power: float = 1.0
    f_min: float = 0.0
    f_max: float = 1.0
    sigma_n2: float = 1e-3
    instants: int = 1000
    seed: int = 0
    active: tuple | None = None

    def __post_init__(self):
        if self.n_freq <= self.n_basis:
            raise ValueError(f"need more frequency samples than basis functions (Nc={self.n_freq}, B={self.n_basis})")
        if not 0 <= self.n_active <= self.n_basis:
            raise ValueError(f"active set size {self.n_active} not in [0, {self.n_basis}]")
        if not self.f_max > self.f_min:
            raise ValueError("f_max must exceed f_min")
        if self.sigma_n2 < 0:
            raise ValueError("noise variance must be nonnegative")

    @property
    def M(self):
        return self.n_basis

    def grid(self):
        return frequency_grid(self.n_freq, self.f_min, self.f_max)

    def basis(self):
        return rectangular_basis(self.grid(), self.n_basis, self.f_min, self.f_max)

    def active_set(self):
        if self.active is not None:
            return np.sort(np.asarray(self.active, dtype=int))
        rng = scenario_rng(self.seed)
        return np.sort(rng.choice(self.n_basis, self.n_active, replace=False))

    def true_weights(self):
        w = np.zeros(self.n_basis)
        w[self.active_set()] = self.active_power
        return w


def gen_spectrum_data(scenario, runs=1):
    """Block streams ``d_k(i) = B w0 + n_k(i)`` with an ideal channel.

    The basis evaluation matrix is shared by all nodes and instants.
    """
    ids = range(runs) if isinstance(runs, int) else list(runs)
    B = scenario.basis()
    clean = B @ scenario.true_weights()
    shape = (scenario.instants, scenario.N, scenario.n_freq)
    ds = []
    for r in ids:
        rng = run_rng(scenario.seed, r)
        ds.append(clean + np.sqrt(scenario.sigma_n2) * rng.standard_normal(shape))
    return BlockData(B, np.stack(ds), scenario.true_weights())


# -- stream containers -------------------------------------------------------
#
# Both containers expose the same per-instant operations so the cooperation
# drivers never branch on the data model.  ``node=None`` addresses all nodes
# at once (diffusion); an integer addresses one node (incremental).


@dataclass
class RegressorData:
    """``x``: (runs, instants, N, M); ``d``: (runs, instants, N)."""

    x: np.ndarray
    d: np.ndarray
    w0: np.ndarray
    transform: np.ndarray | None = field(default=None, repr=False)

    @property
    def shape(self):
        return self.x.shape

    @property
    def runs(self):
        return self.x.shape[0]

    @property
    def instants(self):
        return self.x.shape[1]

    @property
    def N(self):
        return self.x.shape[2]

    @property
    def M(self):
        return self.x.shape[3]

    def transformed(self, T):
        return RegressorData(transform_regressor(T, self.x), self.d, self.w0, T.T)

    def _at(self, i, node):
        if node is None:
            return self.x[:, i], self.d[:, i]
        return self.x[:, i, node], self.d[:, i, node]

    def sample(self, i, node=None):
        return self._at(i, node)

    def moment_increment(self, i, node=None):
        x, d = self._at(i, node)
        return outer(x), np.conj(d)[..., None] * x

    def first_cross(self, node=None):
        return self.moment_increment(0, node)[1]

    def innovation(self, i, psi, node=None):
        x, d = self._at(i, node)
        e = d - inner(psi, x)
        return x * np.conj(e)[..., None]

    def sq_error(self, i, psi, node=None):
        x, d = self._at(i, node)
        return np.abs(d - inner(psi, x)) ** 2


@dataclass
class BlockData:
    """``basis``: (Nc, M) shared; ``d``: (runs, instants, N, Nc)."""

    basis: np.ndarray
    d: np.ndarray
    w0: np.ndarray
    transform: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.gram = np.conj(self.basis.T) @ self.basis

    @property
    def runs(self):
        return self.d.shape[0]

    @property
    def instants(self):
        return self.d.shape[1]

    @property
    def N(self):
        return self.d.shape[2]

    @property
    def M(self):
        return self.basis.shape[1]

    def transformed(self, T):
        return BlockData(transform_block(T, self.basis), self.d, self.w0, T.T)

    def _d(self, i, node):
        return self.d[:, i] if node is None else self.d[:, i, node]

    def moment_increment(self, i, node=None):
        return self.gram, self._d(i, node) @ np.conj(self.basis)

    def first_cross(self, node=None):
        return self.moment_increment(0, node)[1]

    def residual(self, i, psi, node=None):
        return self._d(i, node) - psi @ self.basis.T

    def innovation(self, i, psi, node=None):
        return self.residual(i, psi, node) @ np.conj(self.basis)

    def sq_error(self, i, psi, node=None):
        return np.mean(np.abs(self.residual(i, psi, node)) ** 2, axis=-1)
