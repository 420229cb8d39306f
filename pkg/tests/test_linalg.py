import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import orth
from niece.linalg import (LinalgError, cross_covariance, fix_signs, orthonormalize,
                          principal_sines, projection_distance, sample_covariance, sym_eigen)


def test_identity_eigen():
    e = sym_eigen(np.eye(3), 3)
    assert np.allclose(e.values, 1.0)
    assert np.allclose(e.vectors.T @ e.vectors, np.eye(3), atol=1e-12)
    assert np.all(e.vectors[np.argmax(np.abs(e.vectors), axis=0), range(3)] > 0)


def test_diagonal_eigen():
    e = sym_eigen(np.diag([3.0, 2.0, 1.0]), 2)
    assert np.allclose(e.values, [3, 2])
    assert np.allclose(e.vectors, np.eye(3)[:, :2])


def test_two_by_two_eigen():
    e = sym_eigen(np.array([[2.0, 1.0], [1.0, 2.0]]), 2)
    assert np.allclose(e.values, [3, 1])
    s = 1 / np.sqrt(2)
    assert np.allclose(e.vectors[:, 0], [s, s])
    # largest |entry| ties at both rows; the first row is made positive
    assert np.allclose(e.vectors[:, 1], [s, -s])


def test_eigen_rejects_bad_input():
    with pytest.raises(LinalgError):
        sym_eigen(np.ones((2, 3)), 1)
    with pytest.raises(LinalgError):
        sym_eigen(np.array([[1.0, np.nan], [np.nan, 1.0]]), 1)
    with pytest.raises(LinalgError):
        sym_eigen(np.eye(3), 4)


@given(st.integers(0, 10_000), st.integers(2, 12))
def test_eigen_reconstruction(seed, p):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((p, p))
    S = A + A.T
    e = sym_eigen(S, p)
    assert np.all(np.diff(e.values) <= 1e-12)
    assert np.allclose((e.vectors * e.values) @ e.vectors.T, S, atol=1e-9)


@given(st.integers(0, 10_000), st.integers(2, 10))
def test_eigen_permutation_equivariance(seed, p):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((p, p))
    S = A @ A.T + np.diag(np.arange(p))
    P = np.eye(p)[rng.permutation(p)]
    e1, e2 = sym_eigen(S, p), sym_eigen(P @ S @ P.T, p)
    assert np.allclose(e1.values, e2.values, atol=1e-10)
    for j in range(p):
        a, b = P @ e1.vectors[:, j], e2.vectors[:, j]
        assert abs(abs(a @ b) - 1) < 1e-8


def test_projection_distance_examples():
    e1, e2 = np.eye(2)[:, :1], np.eye(2)[:, 1:]
    assert projection_distance(e1, e1) == pytest.approx(0, abs=1e-15)
    assert projection_distance(e1, e2) == pytest.approx(np.sqrt(2))
    diag = np.array([[1.0], [1.0]]) / np.sqrt(2)
    assert projection_distance(e1, diag) == pytest.approx(1.0)


def test_principal_sines_examples():
    e1, e2 = np.eye(2)[:, :1], np.eye(2)[:, 1:]
    assert np.allclose(principal_sines(e1, e1), 0, atol=1e-15)
    assert np.allclose(principal_sines(e1, e2), [1.0])


@given(st.integers(0, 10_000), st.integers(2, 15), st.integers(1, 5))
def test_distance_sines_identity(seed, p, u):
    u = min(u, p)
    rng = np.random.default_rng(seed)
    A, B = orth(rng, p, u), orth(rng, p, u)
    dist = projection_distance(A, B)
    assert abs(dist - np.sqrt(2) * np.linalg.norm(principal_sines(A, B))) < 1e-10
    assert -1e-12 <= dist <= np.sqrt(2 * u) + 1e-12


@given(st.integers(0, 10_000), st.integers(1, 4))
def test_orthogonal_subspaces_max_distance(seed, u):
    rng = np.random.default_rng(seed)
    Q = orth(rng, 2 * u + 1, 2 * u)
    assert projection_distance(Q[:, :u], Q[:, u:]) == pytest.approx(np.sqrt(2 * u), abs=1e-10)


def test_orthonormalize_examples():
    Q = orthonormalize(np.column_stack([[1.0, 0, 0], [1.0, 1, 0]]))
    assert np.allclose(Q, np.eye(3)[:, :2])
    V = orth(np.random.default_rng(1), 6, 3)
    assert projection_distance(orthonormalize(V), V) < 1e-12
    with pytest.raises(LinalgError):
        orthonormalize(np.column_stack([[1.0, 0], [2.0, 0]]))


def test_orthonormalize_random_matches_svd_span():
    V = np.random.default_rng(2).standard_normal((10, 3))
    Q = orthonormalize(V)
    assert np.max(np.abs(Q.T @ Q - np.eye(3))) < 1e-10
    Usvd = np.linalg.svd(V, full_matrices=False)[0]
    assert projection_distance(Q, Usvd) < 1e-10


def test_fix_signs_rule():
    V = np.array([[-0.6, 0.5], [0.8, -0.5]])
    F = fix_signs(V)
    assert np.allclose(F[:, 0], [-0.6, 0.8])
    assert np.allclose(F[:, 1], [0.5, -0.5])


def test_sample_covariance_examples():
    S = sample_covariance(np.array([[0.0, 0.0], [2.0, 0.0]]))
    assert np.allclose(S, [[1, 0], [0, 0]])
    X = np.column_stack([np.arange(5.0), np.full(5, 3.0)])
    S = sample_covariance(X)
    assert np.allclose(S[1], 0) and np.allclose(S[:, 1], 0)


def test_sample_covariance_monte_carlo():
    X = np.random.default_rng(3).standard_normal((1000, 2)) * [2.0, 1.0]
    assert np.all(np.abs(np.diag(sample_covariance(X)) - [4, 1]) < 0.3)


@given(st.integers(0, 10_000))
def test_sample_covariance_row_permutation(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((15, 4))
    assert np.allclose(sample_covariance(X), sample_covariance(X[rng.permutation(15)]), atol=1e-12)


def test_cross_covariance_examples():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((50, 3))
    assert np.allclose(cross_covariance(X, X), sample_covariance(X))
    B = rng.standard_normal((2, 3))
    assert np.allclose(cross_covariance(X, X @ B.T), sample_covariance(X) @ B.T, atol=1e-12)
    big = rng.standard_normal((1000, 5))
    assert np.max(np.abs(cross_covariance(big[:, :2], big[:, 2:]))) < 0.1
