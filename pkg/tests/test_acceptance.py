"""Acceptance suite: one PASS/FAIL line per criterion.

Lines are printed as each criterion finishes and repeated in the pytest
terminal summary.  The simulation criteria run the bundled experiments at
full scale (100 or 50 Monte Carlo runs, 1000 instants), so this module takes
several minutes.  Run it alone with ``pytest tests/test_acceptance.py``.
"""
import time

import numpy as np
import pytest

from distcg import runner
from distcg.adaptation import ccg_adapt
from distcg.cg_core import cg_solve
from distcg.metrics import steady_state, to_db
from distcg.moments import NodeMoments
from distcg.preconditioning import dct_matrix, dft_matrix, make, recover_estimate, transform_regressor
from distcg.topology import metropolis_weights, random_geometric

from conftest import crandn, random_hpd

RESULTS = []

# pinned tolerances
CG_MATCH = 1e-8
CG_TOL = 1e-9
ORTHO = 1e-6
WIENER = 1e-8
UNITARY = 1e-12
PRE_SOLVE = 1e-8
PRE_MOMENTS = 1e-10
ROW_SUM = 1e-12
NEAR_RLS_DB = 3.0
BELOW_LMS_DB = 5.0
PRECOND_SLACK_DB = 0.5
SUPPORT_RATE = 0.95
MONOTONE_DB = 1.0
MONOTONE_FROM = 100
KERNEL_BUDGET_S = 5.0
SIM_BUDGET_S = 600.0


def report(n, title, ok, detail):
    line = f"criterion {n:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    RESULTS.append(line)
    print(line)
    return ok


def _ss_db(result):
    return float(to_db(steady_state(result.msd_curve)))


class _Experiments:
    """Full-scale preset runs, shared by the simulation criteria."""

    def __init__(self):
        self.cache = {}

    def get(self, preset):
        if preset not in self.cache:
            start = time.perf_counter()
            exp = runner.simulate(runner.load_preset(preset))
            self.cache[preset] = (exp, time.perf_counter() - start)
        return self.cache[preset]


@pytest.fixture(scope="module")
def experiments():
    return _Experiments()


def csv_bodies(exp):
    out = {f"curves_{tag}.csv": runner.curve_csv(r) for tag, r in exp.results.items()}
    if exp.config.scenario == "spectrum":
        out["psd.csv"] = runner.psd_csv(exp)
    return out


def test_criterion_01_cg_kernel():
    start = time.perf_counter()
    worst_err = worst_orth = worst_conj = 0.0
    max_iters = 0
    for s in range(100):
        rng = np.random.default_rng([1, s])
        cond = 10 ** rng.uniform(0, 3)
        R = random_hpd(rng, 10, cond)
        b = crandn(rng, 10)
        w, iters, tr = cg_solve(R, b, max_iters=10, tol=CG_TOL, trace=True)
        ref = np.linalg.solve(R, b)
        worst_err = max(worst_err, np.linalg.norm(w - ref) / np.linalg.norm(ref))
        max_iters = max(max_iters, iters)
        gs, ps = tr.residuals[:-1], tr.directions[:-1]
        for j in range(len(gs)):
            for l in range(j):
                worst_orth = max(worst_orth, abs(np.vdot(gs[j], gs[l])) / (np.linalg.norm(gs[j]) * np.linalg.norm(gs[l])))
                nj = np.sqrt(np.vdot(ps[j], R @ ps[j]).real)
                nl = np.sqrt(np.vdot(ps[l], R @ ps[l]).real)
                worst_conj = max(worst_conj, abs(np.vdot(ps[j], R @ ps[l])) / (nj * nl))
    elapsed = time.perf_counter() - start
    ok = (
        worst_err <= CG_MATCH
        and max_iters <= 10
        and worst_orth <= ORTHO
        and worst_conj <= ORTHO
        and elapsed < KERNEL_BUDGET_S
    )
    detail = (
        f"max rel err {worst_err:.1e} (<= {CG_MATCH:g}), max iters {max_iters} (<= 10), "
        f"orthogonality {worst_orth:.1e}, conjugacy {worst_conj:.1e} (<= {ORTHO:g}), {elapsed:.2f} s"
    )
    assert report(1, "CG kernel exactness", ok, detail), detail


def test_criterion_02_wiener_consistency():
    worst = 0.0
    M = 10
    idx = np.arange(M)
    lag = idx[:, None] - idx[None, :]
    for s in range(50):
        rng = np.random.default_rng([2, s])
        rho = rng.uniform(0, 0.95) * np.exp(2j * np.pi * rng.uniform())
        # exact stationary moments of a complex AR(1) input: R = E[x x^H], b = R w0
        R = np.where(lag >= 0, rho ** np.abs(lag), np.conj(rho) ** np.abs(lag))
        w0 = crandn(rng, M)
        b = R @ w0
        w = ccg_adapt(R, b, np.zeros(M, complex), M)
        ref = np.linalg.solve(R, b)
        worst = max(worst, np.linalg.norm(w - ref) / np.linalg.norm(ref))
    ok = worst <= WIENER
    detail = f"max rel deviation from R^-1 b over 50 systems {worst:.1e} (<= {WIENER:g})"
    assert report(2, "Wiener consistency", ok, detail), detail


def test_criterion_03_preconditioner():
    worst_u = 0.0
    for M in range(1, 129):
        for T in (dft_matrix(M).T, dct_matrix(M).T):
            I = np.eye(M)
            worst_u = max(worst_u, np.abs(T @ T.conj().T - I).max(), np.abs(T.conj().T @ T - I).max())
    worst_solve = worst_mom = 0.0
    rng = np.random.default_rng(3)
    for kind in ("dft", "dct"):
        for M in (4, 10, 32):
            pre = make(kind, M)
            T = pre.T
            R = random_hpd(rng, M, 100)
            b = crandn(rng, M)
            wt, _ = cg_solve(T @ R @ T.conj().T, T @ b)
            ref = np.linalg.solve(R, b)
            worst_solve = max(worst_solve, np.linalg.norm(recover_estimate(pre, wt) - ref) / np.linalg.norm(ref))
            m = NodeMoments.initial(M, 0.99)
            mt = NodeMoments.initial(M, 0.99)
            mt = NodeMoments(T @ mt.R @ T.conj().T, mt.b, mt.lam)
            for _ in range(50):
                x, d = crandn(rng, M), crandn(rng)
                m = m.update(x, d)
                mt = mt.update(transform_regressor(pre, x), d)
            worst_mom = max(worst_mom, np.abs(mt.R - T @ m.R @ T.conj().T).max())
    ok = worst_u <= UNITARY and worst_solve <= PRE_SOLVE and worst_mom <= PRE_MOMENTS
    detail = (
        f"unitarity M=1..128 {worst_u:.1e} (<= {UNITARY:g}), transformed solve {worst_solve:.1e} "
        f"(<= {PRE_SOLVE:g}), moments after 50 updates {worst_mom:.1e} (<= {PRE_MOMENTS:g})"
    )
    assert report(3, "Preconditioner correctness", ok, detail), detail


def test_criterion_04_metropolis():
    worst_sum = 0.0
    ok_support = ok_sym = True
    rng = np.random.default_rng(4)
    for _ in range(50):
        N = int(rng.integers(2, 51))
        topo, _ = random_geometric(N, float(rng.uniform(0.3, 0.6)), rng)
        assert topo.is_connected()
        C = metropolis_weights(topo).C
        worst_sum = max(worst_sum, np.abs(C.sum(axis=1) - 1).max())
        ok_support &= not np.any((C != 0) & ~topo.adjacency) and bool(np.all(C >= 0))
        off = ~np.eye(N, dtype=bool)
        ok_sym &= bool(np.array_equal(C[off], C.T[off]))
    ok = worst_sum <= ROW_SUM and ok_support and ok_sym
    detail = f"50 graphs: max |row sum - 1| {worst_sum:.1e} (<= {ROW_SUM:g}), adjacency {ok_support}, symmetry {ok_sym}"
    assert report(4, "Metropolis validity", ok, detail), detail


def test_criterion_05_incremental_ordering(experiments):
    exp, elapsed = experiments.get("incremental")
    r = exp.results
    rls, mcg, ccg, lms = (_ss_db(r[t]) for t in ("incremental-rls", "idmcg_none", "idccg_none", "incremental-lms"))
    checks = {
        "IRLS <= IDMCG": rls <= mcg,
        "IDMCG <= IDCCG": mcg <= ccg,
        "IDCCG < ILMS": ccg < lms,
        f"IDMCG within {NEAR_RLS_DB:g} dB of IRLS": mcg - rls <= NEAR_RLS_DB,
        f"IDMCG >= {BELOW_LMS_DB:g} dB below ILMS": lms - mcg >= BELOW_LMS_DB,
        "runtime": elapsed <= SIM_BUDGET_S,
    }
    failed = [k for k, v in checks.items() if not v]
    detail = (
        f"steady-state MSD IRLS {rls:.2f}, IDMCG {mcg:.2f}, IDCCG {ccg:.2f}, ILMS {lms:.2f} dB; "
        f"IDMCG-IRLS {mcg - rls:.2f} dB, ILMS-IDMCG {lms - mcg:.2f} dB; {elapsed:.0f} s"
        + (f"; failed: {', '.join(failed)}" if failed else "")
    )
    assert report(5, "Incremental ordering", not failed, detail), detail


def test_criterion_06_diffusion_ordering(experiments):
    exp, elapsed = experiments.get("diffusion")
    r = exp.results
    rls, mcg, ccg, lms = (_ss_db(r[t]) for t in ("diffusion-rls", "ddmcg_none", "ddccg_none", "diffusion-lms"))
    checks = {
        "dRLS <= DDMCG": rls <= mcg,
        "DDMCG < dLMS": mcg < lms,
        "DDCCG < dLMS": ccg < lms,
        "runtime": elapsed <= SIM_BUDGET_S,
    }
    failed = [k for k, v in checks.items() if not v]
    detail = (
        f"steady-state MSD dRLS {rls:.2f}, DDMCG {mcg:.2f}, DDCCG {ccg:.2f}, dLMS {lms:.2f} dB; {elapsed:.0f} s"
        + (f"; failed: {', '.join(failed)}" if failed else "")
    )
    assert report(6, "Diffusion ordering", not failed, detail), detail


def test_criterion_07_preconditioning_benefit(experiments):
    exp, _ = experiments.get("incremental")
    r = exp.results
    parts, ok = [], True
    for name in ("idccg", "idmcg"):
        pre, plain = _ss_db(r[name]), _ss_db(r[f"{name}_none"])
        ok &= pre <= plain + PRECOND_SLACK_DB
        parts.append(f"{name.upper()} DCT {pre:.2f} vs none {plain:.2f} dB (diff {pre - plain:+.3f})")
    detail = "; ".join(parts) + f"; allowed +{PRECOND_SLACK_DB:g} dB"
    assert report(7, "Preconditioning non-inferiority", ok, detail), detail


def test_criterion_08_spectrum(experiments):
    exp, elapsed = experiments.get("spectrum")
    r = exp.results
    active = set(np.flatnonzero(exp.w0))
    final = r["ddmcg"].final
    hits = np.mean([set(np.argsort(-np.abs(f))[: len(active)]) == active for f in final])
    mcg, lms = _ss_db(r["ddmcg"]), _ss_db(r["diffusion-lms"])
    rises = {}
    for tag, res in r.items():
        tail = to_db(res.msd_curve)[MONOTONE_FROM - 1 :]
        rises[tag] = float(np.max(tail - np.minimum.accumulate(tail)))
    checks = {
        f"support >= {SUPPORT_RATE:.0%}": hits >= SUPPORT_RATE,
        "DDMCG <= dLMS": mcg <= lms,
        f"monotone within {MONOTONE_DB:g} dB": max(rises.values()) <= MONOTONE_DB,
        "runtime": elapsed <= SIM_BUDGET_S,
    }
    failed = [k for k, v in checks.items() if not v]
    worst = max(rises, key=rises.get)
    detail = (
        f"support recovered in {hits:.0%} of {len(final)} runs; DDMCG {mcg:.2f} vs dLMS {lms:.2f} dB; "
        f"largest rise after instant {MONOTONE_FROM} {rises[worst]:.2f} dB ({worst}); {elapsed:.0f} s"
        + (f"; failed: {', '.join(failed)}" if failed else "")
    )
    assert report(8, "Spectrum estimation", not failed, detail), detail


def test_criterion_09_eta_band(tmp_path):
    cases = [(0.998, 0.998, True), (0.498, 0.998, True), (0.49, 0.99, True), (0.5, 1.0, True), (1.0, 1.0, True),
             (0.45, 0.998, False), (0.3, 0.99, False), (0.999, 0.998, False), (0.497, 0.998, False)]
    wrong = []
    for eta, lam, accept in cases:
        path = tmp_path / "c.ini"
        path.write_text(f"[experiment]\nalgorithms = idmcg, ddmcg\n[params]\neta = {eta}\nlam_f = {lam}\n")
        try:
            runner.load_config(path)
            got = True
        except runner.ConfigError as exc:
            got = False
            msg = str(exc)
            if not (f"{lam - 0.5:g}" in msg and f"{lam:g}" in msg and "band" in msg):
                wrong.append(f"undescriptive error for eta={eta}: {msg}")
        if got != accept:
            wrong.append(f"eta={eta}, lam_f={lam}: {'accepted' if got else 'rejected'}")
    detail = f"{len(cases)} cases, band edges inclusive" + (f"; problems: {wrong}" if wrong else "")
    assert report(9, "Eta band enforcement", not wrong, detail), detail


def test_criterion_10_determinism(experiments):
    mismatched, compared = [], 0
    for preset in ("incremental", "diffusion", "spectrum"):
        first, _ = experiments.get(preset)
        again = runner.simulate(runner.load_preset(preset))
        a, b = csv_bodies(first), csv_bodies(again)
        compared += len(a)
        mismatched += [f"{preset}/{k}" for k in a if a[k].encode() != b.get(k, "").encode()]
    detail = f"{compared} CSV bodies across 3 full experiments" + (f"; differing: {mismatched}" if mismatched else " byte-identical")
    assert report(10, "Determinism", not mismatched, detail), detail


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-v"]))
