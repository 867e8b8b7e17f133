import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ofsulr.errors import DataError
from ofsulr.pca import (
    PcaModel,
    center,
    covariance,
    eig_decompose,
    inverse_transform,
    pca_fit,
    select_n,
    transform,
)
from ofsulr.preprocess import FeatureMatrix


def test_center_examples():
    Xc, mean = center(np.array([[1.0], [2.0], [3.0]]))
    np.testing.assert_array_equal(Xc[:, 0], [-1, 0, 1])
    assert mean.tolist() == [2.0]
    Xc, _ = center(np.array([[4.0, 5.0]]))
    np.testing.assert_array_equal(Xc, 0)


def test_covariance_by_definition():
    S = covariance(center(np.array([[0.0, 0.0], [2.0, 2.0]]))[0])
    np.testing.assert_array_equal(S, [[2, 2], [2, 2]])


def test_covariance_constant_column_and_small_n():
    X = np.array([[1.0, 3.0], [2.0, 3.0], [4.0, 3.0]])
    S = covariance(center(X)[0])
    assert S[1].tolist() == [0, 0] and S[:, 1].tolist() == [0, 0]
    with pytest.raises(DataError):
        covariance(np.zeros((1, 2)))


def test_covariance_of_independent_samples():
    n = 20000
    X = np.random.default_rng(0).standard_normal((n, 3))
    S = covariance(center(X)[0])
    off = S[~np.eye(3, dtype=bool)]
    assert np.all(np.abs(off) < 3 / np.sqrt(n))


def test_eig_diagonal_and_two_by_two():
    vals, vecs = eig_decompose(np.diag([2.0, 1.0]))
    np.testing.assert_allclose(vals, [2, 1])
    np.testing.assert_allclose(np.abs(vecs[0]), [1, 0], atol=1e-12)
    vals, vecs = eig_decompose(np.array([[2.0, 1.0], [1.0, 2.0]]))
    np.testing.assert_allclose(vals, [3, 1], atol=1e-12)
    np.testing.assert_allclose(vecs[0], [1 / np.sqrt(2), 1 / np.sqrt(2)], atol=1e-12)


def test_eig_rejects_asymmetric():
    with pytest.raises(DataError):
        eig_decompose(np.array([[1.0, 2.0], [0.0, 1.0]]))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 7), st.integers(0, 10**6))
def test_eig_properties(d, seed):
    A = np.random.default_rng(seed).standard_normal((d, d))
    S = (A + A.T) / 2
    vals, V = eig_decompose(S)
    scale = max(np.linalg.norm(S), 1e-300)
    np.testing.assert_allclose(V.T @ np.diag(vals) @ V, S, atol=1e-8)
    np.testing.assert_allclose(V @ V.T, np.eye(d), atol=1e-8)
    assert np.all(np.diff(vals) <= 1e-12 * scale)
    for lam, v in zip(vals, V):
        assert np.abs(S @ v - lam * v).max() <= 1e-7 * scale
        assert v[np.argmax(np.abs(v))] > 0
    # cross-check against LAPACK
    np.testing.assert_allclose(np.sort(vals), np.linalg.eigvalsh(S), atol=1e-9 * scale)


def test_select_n_policies():
    m = PcaModel(np.zeros(3), np.array([7.0, 2.5, 0.5]), np.eye(3), np.array([0.7, 0.25, 0.05]), 3)
    assert select_n(m, variance=0.95) == 2
    assert select_n(m, variance=1.0) == 3
    assert select_n(m, n_components=10) == 3
    m5 = PcaModel(np.zeros(5), np.ones(5), np.eye(5), np.full(5, 0.2), 5)
    assert select_n(m5, n_components=3) == 3
    with pytest.raises(Exception):
        select_n(m, n_components=0)


def test_transform_variances_equal_eigenvalues():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((200, 4)) @ rng.standard_normal((4, 4))
    m = pca_fit(X, n_components=3)
    Z = transform(X, m)
    np.testing.assert_allclose(Z.var(axis=0, ddof=1), m.eigenvalues[:3], rtol=1e-6)
    C = np.cov(Z, rowvar=False)
    assert np.abs(C[~np.eye(3, dtype=bool)]).max() < 1e-6 * m.eigenvalues[0]
    assert m.explained_ratio.sum() == pytest.approx(1.0)
    assert m.eigenvalues.sum() == pytest.approx(np.trace(np.cov(X, rowvar=False)), rel=1e-8)


def test_full_rotation_preserves_distances_and_inverts():
    X = np.random.default_rng(4).standard_normal((30, 3))
    m = pca_fit(X, n_components=3)
    Z = transform(X, m)
    dX = np.linalg.norm(X[:, None] - X[None], axis=2)
    dZ = np.linalg.norm(Z[:, None] - Z[None], axis=2)
    np.testing.assert_allclose(dZ, dX, atol=1e-8)
    np.testing.assert_allclose(inverse_transform(Z, m), X, atol=1e-8)


def test_rank_one_reconstruction():
    t = np.linspace(-3, 3, 25)
    X = np.column_stack([t, 2 * t + 1])
    m = pca_fit(X, n_components=1)
    np.testing.assert_allclose(inverse_transform(transform(X, m), m), X, atol=1e-9)


def test_feature_names_and_dimension_check():
    fm = FeatureMatrix(np.random.default_rng(0).standard_normal((10, 3)), ["a", "b", "c"])
    m = pca_fit(fm, n_components=2)
    assert transform(fm, m).feature_names == ["PC1", "PC2"]
    with pytest.raises(DataError):
        transform(np.zeros((2, 4)), m)
    back = PcaModel.from_dict(m.to_dict())
    np.testing.assert_array_equal(transform(fm, back).values, transform(fm, m).values)
