import numpy as np
import pytest

from axom.trees import fit_forest, fit_tree

DATA_DIR = "data"


@pytest.fixture(scope="session")
def data_dir():
    return DATA_DIR


def random_problem(rng, n=60, max_features=8, max_classes=4):
    p = int(rng.integers(2, max_features + 1))
    k = int(rng.integers(2, max_classes + 1))
    X = rng.random((n, p))
    y = rng.integers(0, k, n)
    return X, y, k


def random_tree(rng, seed, max_depth_hi=7, **kwargs):
    X, y, k = random_problem(rng, **kwargs)
    depth = int(rng.integers(1, max_depth_hi))
    return fit_tree(X, y, k, max_depth=depth, seed=seed), X


def random_forest(rng, seed, n_trees_hi=6, max_depth_hi=6, **kwargs):
    X, y, k = random_problem(rng, **kwargs)
    t = int(rng.integers(1, n_trees_hi))
    depth = int(rng.integers(1, max_depth_hi))
    return fit_forest(X, y, k, n_estimators=t, max_depth=depth, seed=seed), X
