import numpy as np
import pytest

from cascadekit import Dataset, StageModel, StageSpec


@pytest.fixture
def tiny_data():
    """Eight instances in two dimensions, linearly separable with margin."""
    X = np.array(
        [
            [1.0, 1.2],
            [0.8, 1.0],
            [1.1, 0.9],
            [1.3, 1.1],
            [-1.0, -0.8],
            [-0.9, -1.1],
            [-1.2, -1.0],
            [-1.1, -1.3],
        ]
    )
    y = np.array([1, 1, 1, 1, 0, 0, 0, 0])
    return Dataset(X, y)


def linear_stage(weights, bias, view):
    """Single logistic unit with explicit parameters (handy for path forcing)."""
    spec = StageSpec("linear", (), tuple(view))
    W = np.asarray(weights, dtype=float).reshape(1, len(view))
    b = np.asarray([bias], dtype=float)
    return StageModel(spec, [W], [b])
