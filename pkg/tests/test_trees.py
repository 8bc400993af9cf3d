import warnings

import numpy as np
import pytest

from axom.trees import (
    ForestModel,
    Leaf,
    SplitNode,
    TreeModel,
    fit_forest,
    fit_tree,
    gini,
    grid_search_cv,
    model_from_json,
    model_to_json,
    predict_label,
    predict_label_batch,
    predict_proba,
    predict_proba_batch,
)


def leaf_counts(node):
    if isinstance(node, Leaf):
        return node.class_counts.copy()
    return leaf_counts(node.left) + leaf_counts(node.right)


def walk_splits(node):
    if isinstance(node, SplitNode):
        yield node
        yield from walk_splits(node.left)
        yield from walk_splits(node.right)


def tree_depth(node):
    if isinstance(node, Leaf):
        return 0
    return 1 + max(tree_depth(node.left), tree_depth(node.right))


class TestGini:
    def test_balanced(self):
        assert gini([5, 5]) == pytest.approx(0.5)

    def test_pure(self):
        assert gini([10, 0]) == 0.0


class TestFitTree:
    def test_single_class_is_leaf(self):
        X = np.random.default_rng(0).random((20, 3))
        tree = fit_tree(X, np.zeros(20, dtype=int), 2)
        assert isinstance(tree.root, Leaf)
        assert predict_label(tree, X[0]) == 0

    def test_xor_fits_at_depth_two(self):
        X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
        y = np.array([0, 1, 1, 0])
        tree = fit_tree(X, y, 2, max_depth=2)
        assert (predict_label_batch(tree, X) == y).all()

    def test_max_depth_respected(self):
        rng = np.random.default_rng(1)
        X, y = rng.random((200, 4)), rng.integers(0, 3, 200)
        for depth in (1, 2, 4):
            tree = fit_tree(X, y, 3, max_depth=depth, seed=2)
            assert tree_depth(tree.root) <= depth

    def test_min_samples_leaf(self):
        rng = np.random.default_rng(2)
        X, y = rng.random((100, 3)), rng.integers(0, 2, 100)
        tree = fit_tree(X, y, 2, min_samples_leaf=10, seed=0)
        def leaves(node):
            if isinstance(node, Leaf):
                yield node
            else:
                yield from leaves(node.left)
                yield from leaves(node.right)
        assert all(leaf.cover >= 10 for leaf in leaves(tree.root))

    def test_every_split_reduces_weighted_impurity(self):
        rng = np.random.default_rng(3)
        X, y = rng.random((150, 5)), rng.integers(0, 3, 150)
        tree = fit_tree(X, y, 3, max_depth=6, seed=1)
        for node in walk_splits(tree.root):
            parent = gini(leaf_counts(node))
            lc, rc = leaf_counts(node.left), leaf_counts(node.right)
            weighted = (node.left.cover * gini(lc) + node.right.cover * gini(rc)) / node.cover
            assert weighted <= parent + 1e-12

    def test_cover_additivity(self):
        rng = np.random.default_rng(4)
        X, y = rng.random((80, 4)), rng.integers(0, 2, 80)
        tree = fit_tree(X, y, 2, max_depth=5)
        for node in walk_splits(tree.root):
            assert node.cover == node.left.cover + node.right.cover


class TestPredict:
    def test_leaf_normalization(self):
        tree = TreeModel(root=Leaf(class_counts=np.array([3, 1]), cover=4), n_features=1, n_classes=2)
        np.testing.assert_allclose(predict_proba(tree, np.array([0.5])), [0.75, 0.25])

    def test_two_tree_mean(self):
        t1 = TreeModel(root=Leaf(class_counts=np.array([4, 0]), cover=4), n_features=1, n_classes=2)
        t2 = TreeModel(root=Leaf(class_counts=np.array([0, 4]), cover=4), n_features=1, n_classes=2)
        forest = ForestModel(trees=(t1, t2), n_features=1, n_classes=2, seed=0, max_features=None)
        np.testing.assert_allclose(predict_proba(forest, np.array([0.0])), [0.5, 0.5])

    def test_simplex_membership(self):
        rng = np.random.default_rng(5)
        X, y = rng.random((60, 4)), rng.integers(0, 4, 60)
        forest = fit_forest(X, y, 4, n_estimators=7, max_depth=4, seed=3)
        probas = predict_proba_batch(forest, rng.random((50, 4)))
        assert (probas >= 0).all()
        np.testing.assert_allclose(probas.sum(axis=1), 1.0, atol=1e-12)

    def test_dimension_mismatch(self):
        tree = TreeModel(root=Leaf(class_counts=np.array([1, 1]), cover=2), n_features=3, n_classes=2)
        with pytest.raises(ValueError):
            predict_proba(tree, np.array([0.1, 0.2]))

    def test_argmax_tie_lowest_class(self):
        tree = TreeModel(root=Leaf(class_counts=np.array([2, 2]), cover=4), n_features=1, n_classes=2)
        assert predict_label(tree, np.array([0.3])) == 0


class TestForest:
    def test_singleton_no_bootstrap_equals_tree(self):
        rng = np.random.default_rng(6)
        X, y = rng.random((80, 3)), rng.integers(0, 3, 80)
        forest = fit_forest(X, y, 3, n_estimators=1, max_depth=4, max_features=None, seed=9, bootstrap=False)
        tree = fit_tree(X, y, 3, max_depth=4, max_features=None, seed=9)
        grid = rng.random((100, 3))
        np.testing.assert_array_equal(predict_proba_batch(forest, grid), predict_proba_batch(tree, grid))

    def test_deterministic(self):
        rng = np.random.default_rng(7)
        X, y = rng.random((60, 4)), rng.integers(0, 2, 60)
        a = fit_forest(X, y, 2, n_estimators=5, max_depth=4, seed=11)
        b = fit_forest(X, y, 2, n_estimators=5, max_depth=4, seed=11)
        assert model_to_json(a) == model_to_json(b)

    def test_bootstrap_cover(self):
        rng = np.random.default_rng(8)
        X, y = rng.random((64, 3)), rng.integers(0, 2, 64)
        forest = fit_forest(X, y, 2, n_estimators=4, max_depth=3, seed=0)
        for tree in forest.trees:
            assert tree.root.cover == 64

    def test_hard_vote_plurality(self):
        # five constant-label trees: labels 0,0,0,1,1 -> hard vote 0
        def const_tree(label):
            counts = np.array([4, 0]) if label == 0 else np.array([0, 4])
            return TreeModel(root=Leaf(class_counts=counts, cover=4), n_features=1, n_classes=2)

        forest = ForestModel(
            trees=tuple(const_tree(l) for l in (0, 0, 0, 1, 1)),
            n_features=1, n_classes=2, seed=0, max_features=None, vote="hard",
        )
        assert predict_label(forest, np.array([0.2])) == 0


class TestGridSearch:
    def test_singleton_grid(self):
        rng = np.random.default_rng(9)
        X, y = rng.random((40, 3)), rng.integers(0, 2, 40)
        params, acc = grid_search_cv(X, y, 2, {"max_depth": [4]}, model="tree", k_folds=3, seed=0)
        assert params == {"max_depth": 4}
        assert 0.0 <= acc <= 1.0

    def test_tie_prefers_smaller_model(self):
        # linearly separable blobs: a stump already reaches 100% CV accuracy
        rng = np.random.default_rng(10)
        X0 = rng.normal(0.2, 0.03, size=(30, 2))
        X1 = rng.normal(0.8, 0.03, size=(30, 2))
        X = np.vstack([X0, X1])
        y = np.array([0] * 30 + [1] * 30)
        params, acc = grid_search_cv(X, y, 2, {"max_depth": [1, 5]}, model="tree", k_folds=5, seed=0)
        assert acc == 1.0
        assert params["max_depth"] == 1

    def test_missing_class_downgrades_with_warning(self):
        X = np.arange(10, dtype=float).reshape(-1, 1)
        y = np.array([0] * 9 + [1])  # one fold's training side would lose class 1
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            grid_search_cv(X, y, 2, {"max_depth": [1]}, model="tree", k_folds=5, seed=0)
        assert any("plain folds" in str(w.message) for w in caught)

    def test_banknote_forest_cv_accuracy(self, data_dir):
        from axom.datasets import load_dataset

        ds, sp = load_dataset("banknote", data_dir, 0.1, seed=0)
        Xtr, ytr = ds.features[sp.train_indices], ds.labels[sp.train_indices]
        params, acc = grid_search_cv(
            Xtr, ytr, ds.n_classes,
            {"n_estimators": [50], "max_depth": [8], "min_samples_leaf": [1], "max_features": ["sqrt"]},
            model="forest", k_folds=5, seed=0,
        )
        assert acc >= 0.97


class TestSerialization:
    def test_round_trip_tree(self):
        rng = np.random.default_rng(11)
        X, y = rng.random((50, 4)), rng.integers(0, 3, 50)
        tree = fit_tree(X, y, 3, max_depth=4, seed=5)
        clone = model_from_json(model_to_json(tree))
        grid = rng.random((40, 4))
        np.testing.assert_array_equal(predict_proba_batch(tree, grid), predict_proba_batch(clone, grid))
        assert model_to_json(clone) == model_to_json(tree)

    def test_round_trip_forest(self):
        rng = np.random.default_rng(12)
        X, y = rng.random((50, 3)), rng.integers(0, 2, 50)
        forest = fit_forest(X, y, 2, n_estimators=4, max_depth=3, seed=2, vote="hard")
        clone = model_from_json(model_to_json(forest))
        assert isinstance(clone, ForestModel)
        assert clone.vote == "hard"
        grid = rng.random((30, 3))
        np.testing.assert_array_equal(predict_label_batch(forest, grid), predict_label_batch(clone, grid))

    def test_rejects_unknown_format(self):
        with pytest.raises(ValueError):
            model_from_json('{"format": "something-else"}')
