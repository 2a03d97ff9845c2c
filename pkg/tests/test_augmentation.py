import numpy as np
import pytest
import torch

from app.core.exceptions import AugmentationError
from app.schemas.context import Scope
from app.services.augmentation import (AuxNodeSpec, ProjectionStack, augment_adjacency, augment_features,
                                       augment_sample, project_context)


def _random_adjacency(rng: np.random.Generator, n: int) -> np.ndarray:
    upper = np.triu(rng.integers(0, 2, size=(n, n)), k=1)
    return (upper + upper.T).astype(np.float64)


def test_augmented_adjacency_random_trials():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(2, 31))
        a = _random_adjacency(rng, n)
        scopes = [Scope.CITY if rng.random() < 0.5 else Scope.NODE for _ in range(int(rng.integers(0, 4)))]
        specs = [AuxNodeSpec(scope=s, target_grid=int(rng.integers(0, n)) if s is Scope.NODE else None)
                 for s in scopes]
        a_e = augment_adjacency(a, specs)

        assert a_e.shape == (n + len(specs), n + len(specs))
        assert np.array_equal(a_e, a_e.T)
        assert np.array_equal(a_e[:n, :n], a)
        assert np.all(np.diag(a_e) == 0)
        assert np.all(a_e[n:, n:] == 0)
        for j, spec in enumerate(specs):
            column = a_e[:n, n + j]
            if spec.scope is Scope.CITY:
                assert np.all(column == 1)
            else:
                expected = np.zeros(n)
                expected[spec.target_grid] = 1
                assert np.array_equal(column, expected)


def test_adjacency_validation():
    with pytest.raises(AugmentationError):
        augment_adjacency(np.array([[0, 1], [0, 0]]), [])
    with pytest.raises(AugmentationError):
        augment_adjacency(np.zeros((3, 3)), [AuxNodeSpec(scope=Scope.NODE, target_grid=3)])
    with pytest.raises(ValueError):
        AuxNodeSpec(scope=Scope.NODE)


def test_projection_matches_scalar_loop():
    torch.manual_seed(0)
    rng = np.random.default_rng(0)
    for trial in range(100):
        d, t1, dc = int(rng.integers(1, 4)), int(rng.integers(1, 7)), int(rng.integers(1, 9))
        activation = ("tanh", "relu", "identity")[trial % 3]
        stack = ProjectionStack(dc, d, t1, activation).double()
        c = torch.as_tensor(rng.normal(size=dc))
        block = project_context(c, stack)
        assert block.shape == (d, t1)
        for i, layer in enumerate(stack.layers):
            w, b = layer.weight.detach().numpy(), layer.bias.detach().numpy()
            for r in range(d):
                z = sum(w[r, j] * c[j].item() for j in range(dc)) + b[r]
                expected = {"tanh": np.tanh(z), "relu": max(z, 0.0), "identity": z}[activation]
                assert block[r, i].item() == pytest.approx(expected, abs=1e-12)


def test_projection_dimension_mismatch():
    with pytest.raises(AugmentationError):
        project_context(torch.zeros(5), ProjectionStack(4, 2, 3))


def test_augment_features_appends_rows():
    x = torch.randn(7, 4, 2, 6)
    blocks = [torch.randn(7, 2, 6), torch.randn(7, 2, 6)]
    x_e = augment_features(x, blocks)
    assert x_e.shape == (7, 6, 2, 6)
    assert torch.equal(x_e[:, :4], x)
    assert torch.equal(x_e[:, 5], blocks[1])
    with pytest.raises(AugmentationError):
        augment_features(x, [torch.randn(7, 3, 6)])


def test_augment_sample(rng):
    n, d, t1 = 4, 2, 6
    stack = ProjectionStack(3, d, t1).double()
    specs = [AuxNodeSpec(scope=Scope.CITY, projection=stack, context_vector=rng.normal(size=3)),
             AuxNodeSpec(scope=Scope.NODE, target_grid=2, projection=stack, context_vector=rng.normal(size=3))]
    x = torch.as_tensor(rng.normal(size=(n, d, t1)))
    sample = augment_sample(x, torch.zeros(n, d, 1), np.ones((n, n)) - np.eye(n), specs)
    assert sample.x_e.shape == (n + 2, d, t1)
    assert sample.aux_indices == [4, 5]
    assert sample.a_e[5, 2] == 1 and sample.a_e[5, 0] == 0
    assert torch.allclose(sample.x_e[4], project_context(torch.as_tensor(specs[0].context_vector), stack))
