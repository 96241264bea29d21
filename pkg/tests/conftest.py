import numpy as np
import pytest

from imbench.dataset import ColumnSchema, Dataset


@pytest.fixture
def toy_schema():
    return ColumnSchema(names=("x0", "x1"), label_name="failure",
                        feature_kinds=("continuous", "continuous"))


def make_dataset(rows, labels, names=None):
    rows = np.asarray(rows, dtype=np.float64)
    names = names or tuple(f"x{i}" for i in range(rows.shape[1]))
    schema = ColumnSchema(names=tuple(names), label_name="failure",
                          feature_kinds=tuple("continuous" for _ in names))
    return Dataset(schema, rows, np.asarray(labels, dtype=np.int64))


def random_imbalanced(rng, n_maj, n_min, d=4, shift=2.0):
    """Two-Gaussian toy dataset; majority label 0, minority label 1."""
    rows = np.vstack([
        rng.standard_normal((n_maj, d)),
        rng.standard_normal((n_min, d)) + shift,
    ])
    labels = np.concatenate([np.zeros(n_maj, dtype=np.int64),
                             np.ones(n_min, dtype=np.int64)])
    return make_dataset(rows, labels)


@pytest.fixture
def small_imbalanced():
    return random_imbalanced(np.random.default_rng(11), 100, 10)
