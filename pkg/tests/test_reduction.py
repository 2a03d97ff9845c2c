import numpy as np
import pytest

from app.core.exceptions import ReductionError
from app.services.reduction import fit_pca, inverse_transform, load_pca, save_pca, transform


def _sign_fixed(rows: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(rows), axis=1)
    return rows * np.sign(rows[np.arange(rows.shape[0]), idx])[:, None]


@pytest.mark.parametrize("seed", range(20))
def test_pca_matches_svd(seed):
    rng = np.random.default_rng(seed)
    m, d = int(rng.integers(2, 201)), int(rng.integers(1, 65))
    x = rng.normal(size=(m, d)) @ rng.normal(size=(d, d))
    model = fit_pca(x, variance_target=0.95)

    centered = x - x.mean(axis=0)
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    eigvals = s ** 2 / (x.shape[0] - 1)
    ratios = eigvals / eigvals.sum()
    k = int(np.argmax(np.cumsum(ratios) >= 0.95)) + 1

    assert model.dim == k
    assert np.allclose(model.explained_variance, eigvals[:k], rtol=1e-9)
    assert np.allclose(model.explained_variance_ratio, ratios[:k], rtol=1e-9)
    assert np.allclose(model.components, _sign_fixed(vt[:k]), atol=1e-8)
    assert np.allclose(model.components @ model.components.T, np.eye(k), atol=1e-10)
    assert model.explained_variance_ratio.sum() >= 0.95 - 1e-12


def test_rank_two_input_keeps_at_most_two_components(rng):
    basis = rng.normal(size=(2, 10))
    x = rng.normal(size=(40, 2)) @ basis
    assert fit_pca(x, 0.95).dim <= 2
    assert fit_pca(x, 1.0).dim == 2


def test_zero_variance_keeps_one_component():
    model = fit_pca(np.ones((5, 4)))
    assert model.dim == 1
    assert np.array_equal(model.explained_variance_ratio, [0.0])
    assert np.allclose(transform(model, np.ones(4)), 0.0)


def test_transform_and_inverse(rng):
    x = rng.normal(size=(25, 6))
    full = fit_pca(x, 1.0)
    z = transform(full, x)
    assert z.shape == (25, 6)
    assert np.allclose(inverse_transform(full, z), x, atol=1e-10)
    assert np.allclose(transform(full, x[3]), z[3])
    with pytest.raises(ReductionError):
        transform(full, rng.normal(size=5))


def test_save_and_load(tmp_path, rng):
    model = fit_pca(rng.normal(size=(20, 5)), 0.9)
    loaded = load_pca(save_pca(model, tmp_path / "pca-city.json"))
    assert loaded.dim == model.dim
    assert np.array_equal(loaded.components, model.components)
    assert np.array_equal(loaded.mean, model.mean)
    assert not loaded.components.flags.writeable


@pytest.mark.parametrize("bad, target", [
    (np.ones((1, 3)), 0.95),
    (np.array([[1.0, np.nan], [0.0, 1.0]]), 0.95),
    (np.eye(3), 0.0),
    (np.eye(3), 1.5),
])
def test_invalid_inputs(bad, target):
    with pytest.raises(ReductionError):
        fit_pca(bad, target)
