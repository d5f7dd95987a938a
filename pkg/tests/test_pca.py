import warnings

import numpy as np
import pytest

from jadl.pca import fit_pca, pca_denoise, pca_dictionary


def test_diagonal_covariance():
    # +-2 on the first axis, +-1 on the second: variances 4 and 1 uncentered
    X = np.array([[2.0, 0], [-2, 0], [0, 1], [0, -1]])
    model = fit_pca(X, centered=False)
    np.testing.assert_allclose(np.abs(model.components), np.eye(2), atol=1e-12)
    np.testing.assert_allclose(model.explained_variance, [2.0, 0.5])  # second moments / M
    centered = fit_pca(X)
    np.testing.assert_allclose(centered.explained_variance, [8 / 3, 2 / 3])


def test_sign_convention():
    rng = np.random.default_rng(0)
    model = fit_pca(rng.standard_normal((30, 7)))
    for v in model.components:
        assert v[np.argmax(np.abs(v))] > 0


def test_orthonormal_and_sorted():
    rng = np.random.default_rng(1)
    model = fit_pca(rng.standard_normal((50, 12)) @ rng.standard_normal((12, 12)))
    V = model.components
    np.testing.assert_allclose(V @ V.T, np.eye(V.shape[0]), atol=1e-9)
    assert np.all(np.diff(model.explained_variance) <= 0)


def test_equal_signals_give_rank_zero():
    X = np.tile(np.arange(5.0), (4, 1))
    model = fit_pca(X)
    assert model.rank == 0
    np.testing.assert_allclose(pca_denoise(model, X, 0), X)
    first = fit_pca(X, centered=False).components[0]
    np.testing.assert_allclose(first, np.arange(5.0) / np.linalg.norm(np.arange(5.0)), atol=1e-12)


@pytest.mark.parametrize("centered", [True, False])
def test_full_rank_reconstruction(centered):
    rng = np.random.default_rng(2)
    X = rng.standard_normal((20, 8))
    model = fit_pca(X, centered)
    np.testing.assert_allclose(pca_denoise(model, X, model.rank), X, atol=1e-8)


def test_zero_components_gives_mean():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((10, 6))
    model = fit_pca(X)
    np.testing.assert_allclose(pca_denoise(model, X, 0), np.tile(X.mean(0), (10, 1)))


@pytest.mark.parametrize("centered", [True, False])
def test_idempotent(centered):
    rng = np.random.default_rng(4)
    X = rng.standard_normal((15, 10))
    model = fit_pca(X, centered)
    once = pca_denoise(model, X, 3)
    np.testing.assert_allclose(pca_denoise(model, once, 3), once, atol=1e-12)


def test_error_monotone_in_k():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((40, 16))
    model = fit_pca(X)
    errs = [np.linalg.norm(pca_denoise(model, X, k) - X) for k in range(model.rank + 1)]
    assert all(b <= a + 1e-10 for a, b in zip(errs, errs[1:]))


def test_clamp_warns():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((3, 10))
    model = fit_pca(X)
    with pytest.warns(UserWarning):
        Y = pca_denoise(model, X, 10)
    np.testing.assert_allclose(Y, X, atol=1e-10)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        pca_denoise(model, X, model.rank)


def test_dictionary_rows():
    rng = np.random.default_rng(7)
    model = fit_pca(rng.standard_normal((10, 5)))
    assert pca_dictionary(model, 2).shape == (2, 5)


def test_needs_two_signals():
    with pytest.raises(ValueError):
        fit_pca(np.ones((1, 4)))
