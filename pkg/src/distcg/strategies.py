"""Cooperation drivers: incremental and diffusion CG, plus LMS/RLS baselines.

Every driver advances a whole batch of Monte Carlo runs at once; per-node
state lives in arrays whose leading axis is the run index.  The two loops
``incremental_loop`` and ``diffusion_loop`` own the information flow, and the
algorithms only supply a per-node (or per-network) ``step``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import preconditioning
from .adaptation import (
    Diagnostics,
    InvalidEta,
    ccg_adapt,
    check_eta,
    mcg_step,
    rls_adapt,
    rls_information_adapt,
)
from .cg_core import matvec
from .metrics import LearningCurve, msd
from .moments import DEFAULT_DELTA
from .topology import TopologyError, metropolis_weights, validate_cycle

INCREMENTAL = ("idccg", "idmcg", "incremental-lms", "incremental-rls")
DIFFUSION = ("ddccg", "ddmcg", "diffusion-lms", "diffusion-rls")
ALGORITHMS = INCREMENTAL + DIFFUSION
CG_ALGORITHMS = ("idccg", "idmcg", "ddccg", "ddmcg")
# "strict" rejects eta outside [lam_f - 0.5, lam_f]; "record" runs anyway and
# logs every out-of-band update in the diagnostics.
ETA_POLICIES = ("strict", "record")


@dataclass
class AlgorithmParams:
    J: int = 5
    lam_f: float = 0.998
    eta: float = 0.55
    delta: float = DEFAULT_DELTA
    mu: float = 0.005
    lam: float = 0.998
    preconditioner: str = "none"
    rls_neighborhood_data: bool = True
    metropolis_include_self: bool = True
    eta_policy: str = "strict"

    def validate(self, algorithm):
        if algorithm in ("idccg", "ddccg") and self.J < 1:
            raise ValueError(f"{algorithm}: J must be >= 1, got {self.J}")
        if algorithm in CG_ALGORITHMS and not 0 < self.lam_f <= 1:
            raise ValueError(f"{algorithm}: lam_f must lie in (0, 1], got {self.lam_f}")
        if self.eta_policy not in ETA_POLICIES:
            raise ValueError(f"eta_policy must be one of {ETA_POLICIES}, got {self.eta_policy!r}")
        if algorithm in ("idmcg", "ddmcg") and self.eta_policy == "strict":
            check_eta(self.eta, self.lam_f)

        if algorithm.endswith("-rls") and not 0 < self.lam <= 1:
            raise ValueError(f"{algorithm}: lam must lie in (0, 1], got {self.lam}")
        if algorithm.endswith("-lms") and self.mu < 0:
            raise ValueError(f"{algorithm}: mu must be nonnegative, got {self.mu}")
        if self.delta <= 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if self.preconditioner not in preconditioning.KINDS:
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")

    def eta_in_band(self):
        try:
            check_eta(self.eta, self.lam_f)
        except InvalidEta:
            return False
        return True


@dataclass
class StrategyRun:
    """Outcome of one algorithm over a batch of runs.

    ``msd`` and ``mse`` are (runs, instants).  ``final`` holds each node's
    last estimate (runs, N, M) in the original domain; incremental runs also
    set ``global_estimate`` (runs, M).  ``estimates`` is the full (runs,
    instants, N, M) trajectory when recording was requested.
    """

    algorithm: str
    msd: np.ndarray
    mse: np.ndarray
    final: np.ndarray
    diagnostics: Diagnostics
    global_estimate: np.ndarray | None = None
    estimates: np.ndarray | None = None
    params: AlgorithmParams = field(default_factory=AlgorithmParams)

    @property
    def runs(self):
        return self.msd.shape[0]

    def msd_curve(self):
        return LearningCurve(self.msd.mean(axis=0), self.algorithm, self.runs)

    def mse_curve(self):
        return LearningCurve(self.mse.mean(axis=0), self.algorithm, self.runs)


def _events(diag, i, node):
    return lambda kind, mask: diag.record(kind, i, node, mask)


def _prepare(data, params):
    pre = preconditioning.make(params.preconditioner, data.M)
    if pre.is_identity:
        return data, lambda w: w
    return data.transformed(pre), lambda w: preconditioning.recover_estimate(pre, w)


def _eye_stack(value, shape, M):
    return np.broadcast_to(value * np.eye(M, dtype=complex), (*shape, M, M)).copy()


# -- loops ---------------------------------------------------------------------


def incremental_loop(data, topology, step, recover=lambda w: w, record=False):
    """Pass one estimate around the cycle each instant.

    ``step(i, k, psi)`` returns node ``k``'s estimate given the estimate
    handed over by its predecessor.  Returns ``(global, node_estimates, msd,
    mse, trajectory)``.
    """
    problems = validate_cycle(topology)
    if problems:
        raise TopologyError(f"incremental cycle invalid: {problems}")
    if topology.N != data.N:
        raise ValueError(f"topology has {topology.N} nodes, data has {data.N}")
    runs, I, N, M = data.runs, data.instants, data.N, data.M
    w = np.zeros((runs, M), dtype=complex)
    nodes = np.zeros((runs, N, M), dtype=complex)
    msd_ = np.zeros((runs, I))
    mse_ = np.zeros((runs, I))
    traj = np.zeros((runs, I, N, M), dtype=complex) if record else None
    for i in range(I):
        psi = w
        for k in topology.cycle:
            mse_[:, i] += data.sq_error(i, psi, k)
            psi = step(i, k, psi)
            nodes[:, k] = psi
        w = psi
        mse_[:, i] /= N
        # one global estimate per run: N = 1
        msd_[:, i] = msd(recover(w)[:, None, :], data.w0)
        if record:
            traj[:, i] = recover(nodes)
    return recover(w), recover(nodes), msd_, mse_, traj


def diffusion_loop(data, C, step, recover=lambda w: w, record=False):
    """Combine-then-adapt: ``psi_k(i) = sum_l c_kl w_l(i-1)``, then ``step(i, psi)``.

    ``step`` sees only the combined estimates of the current instant, never a
    neighbor's same-instant update.
    """
    C = np.asarray(C)
    if C.shape != (data.N, data.N):
        raise ValueError(f"combining matrix is {C.shape}, data has {data.N} nodes")
    runs, I, N, M = data.runs, data.instants, data.N, data.M
    w = np.zeros((runs, N, M), dtype=complex)
    msd_ = np.zeros((runs, I))
    mse_ = np.zeros((runs, I))
    traj = np.zeros((runs, I, N, M), dtype=complex) if record else None
    for i in range(I):
        psi = C @ w
        mse_[:, i] = data.sq_error(i, psi).mean(axis=-1)
        w = step(i, psi)
        rec = recover(w)
        msd_[:, i] = msd(rec, data.w0)
        if record:
            traj[:, i] = rec
    return recover(w), msd_, mse_, traj


def _incremental_run(name, topology, data, params, make_step, record):
    params.validate(name)
    data_t, recover = _prepare(data, params)
    diag = Diagnostics(data.instants, data.N)
    step = make_step(data_t, diag)
    w, nodes, msd_, mse_, traj = incremental_loop(data_t, topology, step, recover, record)
    return StrategyRun(name, msd_, mse_, nodes, diag, global_estimate=w, estimates=traj, params=params)


def _diffusion_run(name, topology, data, params, make_step, record, combiner):
    params.validate(name)
    if combiner is None:
        combiner = metropolis_weights(topology, params.metropolis_include_self)
    C = getattr(combiner, "C", combiner)
    data_t, recover = _prepare(data, params)
    diag = Diagnostics(data.instants, data.N)
    step = make_step(data_t, diag, C)
    w, msd_, mse_, traj = diffusion_loop(data_t, C, step, recover, record)
    return StrategyRun(name, msd_, mse_, w, diag, estimates=traj, params=params)


# -- incremental algorithms ------------------------------------------------------


def run_idccg(topology, data, params, record=False):
    lam, J = params.lam_f, params.J

    def make_step(data, diag):
        R = [_eye_stack(params.delta, (data.runs,), data.M) for _ in range(data.N)]
        b = [np.zeros((data.runs, data.M), dtype=complex) for _ in range(data.N)]

        def step(i, k, psi):
            dR, db = data.moment_increment(i, k)
            R[k] = lam * R[k] + dR
            b[k] = lam * b[k] + db
            return ccg_adapt(R[k], b[k], psi, J, _events(diag, i, k))

        return step

    return _incremental_run("idccg", topology, data, params, make_step, record)


def run_idmcg(topology, data, params, record=False):
    lam, eta = params.lam_f, params.eta

    def make_step(data, diag):
        R = [_eye_stack(params.delta, (data.runs,), data.M) for _ in range(data.N)]
        g = [data.first_cross(k).astype(complex) for k in range(data.N)]
        p = [gk.copy() for gk in g]
        out_of_band = not params.eta_in_band()

        def step(i, k, psi):
            if out_of_band:
                diag.record("eta_violation", i, k, np.ones(data.runs, dtype=bool))
            dR, _ = data.moment_increment(i, k)
            R[k] = lam * R[k] + dR
            w, p[k], g[k] = mcg_step(R[k], p[k], g[k], psi, data.innovation(i, psi, k), lam, eta, _events(diag, i, k))
            return w

        return step

    return _incremental_run("idmcg", topology, data, params, make_step, record)


def _incremental_lms(topology, data, params, record):
    mu = params.mu

    def make_step(data, diag):
        return lambda i, k, psi: psi + mu * data.innovation(i, psi, k)

    return _incremental_run("incremental-lms", topology, data, params, make_step, record)


def _incremental_rls(topology, data, params, record):
    lam = params.lam

    def make_step(data, diag):
        if hasattr(data, "x"):
            P = [_eye_stack(1.0 / params.delta, (data.runs,), data.M) for _ in range(data.N)]

            def step(i, k, psi):
                x, d = data.sample(i, k)
                P[k], w = rls_adapt(P[k], psi, x, d, lam)
                return w

        else:
            P_inv = [_eye_stack(params.delta, (data.runs,), data.M) for _ in range(data.N)]

            def step(i, k, psi):
                dR, _ = data.moment_increment(i, k)
                P_inv[k], w = rls_information_adapt(P_inv[k], psi, dR, data.innovation(i, psi, k), lam)
                return w

        return step

    return _incremental_run("incremental-rls", topology, data, params, make_step, record)


# -- diffusion algorithms --------------------------------------------------------


def run_ddccg(topology, data, params, record=False, combiner=None):
    lam, J = params.lam_f, params.J

    def make_step(data, diag, C):
        state = {
            "R": _eye_stack(params.delta, (data.runs, data.N), data.M),
            "b": np.zeros((data.runs, data.N, data.M), dtype=complex),
        }

        def step(i, psi):
            dR, db = data.moment_increment(i)
            state["R"] = lam * state["R"] + dR
            state["b"] = lam * state["b"] + db
            return ccg_adapt(state["R"], state["b"], psi, J, _events(diag, i, None))

        return step

    return _diffusion_run("ddccg", topology, data, params, make_step, record, combiner)


def run_ddmcg(topology, data, params, record=False, combiner=None):
    lam, eta = params.lam_f, params.eta

    def make_step(data, diag, C):
        g0 = data.first_cross().astype(complex)
        state = {"R": _eye_stack(params.delta, (data.runs, data.N), data.M), "p": g0.copy(), "g": g0}
        out_of_band = not params.eta_in_band()

        def step(i, psi):
            if out_of_band:
                diag.record("eta_violation", i, None, np.ones((data.runs, data.N), dtype=bool))
            dR, _ = data.moment_increment(i)
            state["R"] = lam * state["R"] + dR
            w, state["p"], state["g"] = mcg_step(
                state["R"], state["p"], state["g"], psi, data.innovation(i, psi), lam, eta, _events(diag, i, None)
            )
            return w

        return step

    return _diffusion_run("ddmcg", topology, data, params, make_step, record, combiner)


def _diffusion_lms(topology, data, params, record, combiner):
    mu = params.mu

    def make_step(data, diag, C):
        return lambda i, psi: psi + mu * data.innovation(i, psi)

    return _diffusion_run("diffusion-lms", topology, data, params, make_step, record, combiner)


def _diffusion_rls(topology, data, params, record, combiner):
    """CTA diffusion RLS.

    With ``rls_neighborhood_data`` each node absorbs the current measurements
    of every neighbor (itself included); otherwise only its own.
    """
    lam = params.lam
    share = params.rls_neighborhood_data
    A = topology.adjacency if share else np.eye(topology.N, dtype=bool)

    def make_step(data, diag, C):
        if hasattr(data, "x") and not share:
            state = {"P": _eye_stack(1.0 / params.delta, (data.runs, data.N), data.M)}

            def step(i, psi):
                x, d = data.sample(i)
                state["P"], w = rls_adapt(state["P"], psi, x, d, lam)
                return w

            return step

        # information form: absorbs all neighborhood samples in one exact update
        Af = A.astype(float)
        counts = Af.sum(axis=1)
        state = {"P_inv": _eye_stack(params.delta, (data.runs, data.N), data.M)}

        def step(i, psi):
            gram, cross = data.moment_increment(i)
            if gram.ndim == 2:
                gram_nb = counts[:, None, None] * gram
            else:
                gram_nb = np.einsum("kl,...lmn->...kmn", Af, gram)
            correction = Af @ cross - matvec(gram_nb, psi)
            state["P_inv"], w = rls_information_adapt(state["P_inv"], psi, gram_nb, correction, lam)
            return w

        return step

    return _diffusion_run("diffusion-rls", topology, data, params, make_step, record, combiner)


def run_baseline(kind, topology, data, params, record=False, combiner=None):
    if kind == "incremental-lms":
        return _incremental_lms(topology, data, params, record)
    if kind == "incremental-rls":
        return _incremental_rls(topology, data, params, record)
    if kind == "diffusion-lms":
        return _diffusion_lms(topology, data, params, record, combiner)
    if kind == "diffusion-rls":
        return _diffusion_rls(topology, data, params, record, combiner)
    raise ValueError(f"unknown baseline {kind!r}")


def run_algorithm(name, topology, data, params, record=False, combiner=None):
    """Dispatch by algorithm tag (see ``ALGORITHMS``)."""
    if name == "idccg":
        return run_idccg(topology, data, params, record)
    if name == "idmcg":
        return run_idmcg(topology, data, params, record)
    if name == "ddccg":
        return run_ddccg(topology, data, params, record, combiner)
    if name == "ddmcg":
        return run_ddmcg(topology, data, params, record, combiner)
    if name in ALGORITHMS:
        return run_baseline(name, topology, data, params, record, combiner)
    raise ValueError(f"unknown algorithm {name!r}; expected one of {ALGORITHMS}")


def with_params(params, **changes):
    return replace(params, **changes)
