import numpy as np
import pytest
import scipy.fft
from hypothesis import given, settings
from hypothesis import strategies as st

from distcg.cg_core import cg_solve
from distcg.moments import NodeMoments
from distcg.preconditioning import (
    dct_coefficients,
    dct_matrix,
    dft_matrix,
    identity,
    make,
    recover_estimate,
    transform_block,
    transform_regressor,
)

from conftest import crandn, random_hpd


def _unitarity_error(T):
    I = np.eye(T.shape[0])
    return max(np.abs(T @ T.conj().T - I).max(), np.abs(T.conj().T @ T - I).max())


@pytest.mark.parametrize("M", range(1, 129))
def test_unitary(M):
    assert _unitarity_error(dft_matrix(M).T) <= 1e-12
    assert _unitarity_error(dct_matrix(M).T) <= 1e-12


def test_small_cases():
    np.testing.assert_allclose(dft_matrix(1).T, [[1]])
    np.testing.assert_allclose(dft_matrix(2).T, np.array([[1, 1], [1, -1]]) / np.sqrt(2), atol=1e-15)
    np.testing.assert_allclose(dct_matrix(1).T, [[1]])
    np.testing.assert_allclose(dct_coefficients(2), [[0.70710678, 0.70710678], [0.70710678, -0.70710678]], atol=1e-8)


@pytest.mark.parametrize("M", [2, 5, 16, 64])
def test_against_library_transforms(M):
    np.testing.assert_allclose(dft_matrix(M).T, scipy.fft.fft(np.eye(M), axis=0, norm="ortho"), atol=1e-12)
    np.testing.assert_allclose(dct_coefficients(M), scipy.fft.dct(np.eye(M), type=2, axis=0, norm="ortho"), atol=1e-12)
    np.testing.assert_allclose(dct_matrix(M).T, dct_coefficients(M).T)


def test_make():
    assert make("none", 3).is_identity
    assert make("dft", 3).kind == "dft"
    assert make("dct", 3).M == 3
    with pytest.raises(ValueError):
        make("klt", 3)
    with pytest.raises(ValueError):
        dft_matrix(0)


def test_identity_passthrough(rng):
    x = crandn(rng, 4)
    np.testing.assert_array_equal(transform_regressor(identity(4), x), x)
    np.testing.assert_array_equal(recover_estimate(identity(4), x), x)


@pytest.mark.parametrize("kind", ["dft", "dct"])
def test_norm_and_round_trip(kind, rng):
    T = make(kind, 7)
    x = crandn(rng, 5, 7)
    xt = transform_regressor(T, x)
    np.testing.assert_allclose(xt, x @ T.T.T)
    np.testing.assert_allclose(np.linalg.norm(xt, axis=-1), np.linalg.norm(x, axis=-1), rtol=1e-12)
    np.testing.assert_allclose(recover_estimate(T, xt), x, atol=1e-12)


@pytest.mark.parametrize("kind", ["dft", "dct"])
def test_block_rows_preserve_outputs(kind, rng):
    T = make(kind, 6)
    B = rng.standard_normal((9, 6))
    w = crandn(rng, 6)
    wt = T.T @ w
    np.testing.assert_allclose(transform_block(T, B) @ wt, B @ w, atol=1e-12)


@pytest.mark.parametrize("kind", ["dft", "dct"])
def test_transformed_moments(kind, rng):
    T = make(kind, 8)
    m = NodeMoments.initial(8, 0.99, delta=0.0)
    mt = NodeMoments.initial(8, 0.99, delta=0.0)
    for _ in range(50):
        x, d = crandn(rng, 8), crandn(rng)
        m = m.update(x, d)
        mt = mt.update(transform_regressor(T, x), d)
    assert np.abs(mt.R - T.T @ m.R @ T.T.conj().T).max() <= 1e-10
    assert np.abs(mt.b - T.T @ m.b).max() <= 1e-10


@settings(max_examples=40, deadline=None)
@given(M=st.integers(1, 24), seed=st.integers(0, 2**32 - 1), kind=st.sampled_from(["dft", "dct"]))
def test_transform_domain_solve_equivalence(M, seed, kind):
    rng = np.random.default_rng(seed)
    T = make(kind, M).T
    R = random_hpd(rng, M, 100)
    b = crandn(rng, M)
    w, _ = cg_solve(R, b)
    wt, _ = cg_solve(T @ R @ T.conj().T, T @ b)
    rec = recover_estimate(make(kind, M), wt)
    assert np.linalg.norm(rec - w) <= 1e-8 * np.linalg.norm(w)
    assert np.linalg.norm(rec - np.linalg.solve(R, b)) <= 1e-8 * np.linalg.norm(w)
    ev = np.linalg.eigvalsh(T @ R @ T.conj().T)
    np.testing.assert_allclose(ev, np.linalg.eigvalsh(R), atol=1e-10 * ev.max())
