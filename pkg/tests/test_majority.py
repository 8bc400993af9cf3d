import logging

import numpy as np
import pytest

from conftest import random_forest
from axom.majority import axom_explain, weak_mislabeling_rate
from axom.shapley import shap_fast, shap_forest
from axom.trees import ForestModel, Leaf, SplitNode, TreeModel, predict_label, predict_proba


def const_tree(counts, n_features=2):
    counts = np.asarray(counts)
    return TreeModel(root=Leaf(class_counts=counts, cover=int(counts.sum())), n_features=n_features, n_classes=len(counts))


def vote_stump(label, n_features=2):
    """Stump voting `label` everywhere on feature 0 but with non-trivial structure."""
    if label == 0:
        left, right = np.array([8, 2]), np.array([7, 3])
    else:
        left, right = np.array([2, 8]), np.array([3, 7])
    return TreeModel(
        root=SplitNode(
            feature=0, threshold=0.5,
            left=Leaf(class_counts=left, cover=10),
            right=Leaf(class_counts=right, cover=10),
            cover=20,
        ),
        n_features=n_features,
        n_classes=2,
    )


class TestAxomExplain:
    def test_majority_vote_example(self):
        # eight weak learners casting 1,0,0,0,1,0,1,0: label 0 wins 5-3,
        # so exactly the trees at indices 1,2,3,5,7 contribute
        labels = [1, 0, 0, 0, 1, 0, 1, 0]
        forest = ForestModel(
            trees=tuple(vote_stump(l) for l in labels),
            n_features=2, n_classes=2, seed=0, max_features=None, vote="hard",
        )
        x = np.array([0.3, 0.6])
        assert predict_label(forest, x) == 0
        result = axom_explain(forest, x)
        assert result.contributing_trees == (1, 2, 3, 5, 7)
        assert result.n_discarded == 3
        expected = np.mean([shap_fast(forest.trees[i], x).values for i in (1, 2, 3, 5, 7)], axis=0)
        np.testing.assert_allclose(result.values, expected, atol=1e-15)

    def test_unanimous_forest_collapses_to_plain_mean(self):
        forest = ForestModel(
            trees=tuple(vote_stump(0) for _ in range(6)),
            n_features=2, n_classes=2, seed=0, max_features=None,
        )
        x = np.array([0.2, 0.9])
        result = axom_explain(forest, x)
        plain = shap_forest(forest, x)
        assert result.n_discarded == 0
        assert np.array_equal(result.values, plain.values)
        assert np.array_equal(result.base_values, plain.base_values)

    def test_singleton_forest(self):
        tree = vote_stump(1)
        forest = ForestModel(trees=(tree,), n_features=2, n_classes=2, seed=0, max_features=None)
        x = np.array([0.7, 0.1])
        result = axom_explain(forest, x)
        np.testing.assert_array_equal(result.values, shap_fast(tree, x).values)
        assert result.contributing_trees == (0,)

    def test_counts_and_label_consistency(self):
        rng = np.random.default_rng(0)
        for trial in range(20):
            forest, _ = random_forest(rng, trial, n_trees_hi=8)
            x = rng.random(forest.n_features)
            result = axom_explain(forest, x)
            if result.fallback:
                continue
            assert result.n_discarded + len(result.contributing_trees) == forest.n_estimators
            label = predict_label(forest, x)
            for ti in result.contributing_trees:
                assert int(np.argmax(predict_proba(forest.trees[ti], x))) == label

    def test_subset_mean_identity_exact(self):
        rng = np.random.default_rng(1)
        forest, _ = random_forest(rng, 50, n_trees_hi=7)
        x = rng.random(forest.n_features)
        result = axom_explain(forest, x)
        acc = np.zeros_like(result.values)
        for ti in result.contributing_trees:
            acc += shap_fast(forest.trees[ti], x).values
        acc /= len(result.contributing_trees)
        assert np.array_equal(result.values, acc)

    def test_soft_vote_fallback(self, caplog):
        # two confident single-leaf trees pointing at classes 0 and 2; the
        # soft-vote mean peaks at class 1, which no tree voted for
        forest = ForestModel(
            trees=(const_tree([10, 9, 1]), const_tree([1, 9, 10])),
            n_features=2, n_classes=3, seed=0, max_features=None,
        )
        x = np.array([0.5, 0.5])
        assert predict_label(forest, x) == 1
        with caplog.at_level(logging.WARNING, logger="axom.majority"):
            result = axom_explain(forest, x)
        assert result.fallback
        assert result.contributing_trees == (0, 1)
        assert result.n_discarded == 0
        assert np.array_equal(result.values, shap_forest(forest, x).values)
        assert any("falling back" in message for message in caplog.messages)

    def test_class_slice_view(self):
        rng = np.random.default_rng(2)
        forest, _ = random_forest(rng, 60)
        x = rng.random(forest.n_features)
        result = axom_explain(forest, x)
        np.testing.assert_array_equal(result.class_slice(0), result.values[0])


class TestWeakMislabeling:
    def test_unanimous_zero(self):
        forest = ForestModel(
            trees=tuple(vote_stump(0) for _ in range(5)),
            n_features=2, n_classes=2, seed=0, max_features=None,
        )
        X = np.random.default_rng(3).random((12, 2))
        assert weak_mislabeling_rate(forest, X) == 0.0

    def test_three_of_eight_disagree(self):
        labels = [1, 0, 0, 0, 1, 0, 1, 0]
        forest = ForestModel(
            trees=tuple(vote_stump(l) for l in labels),
            n_features=2, n_classes=2, seed=0, max_features=None, vote="hard",
        )
        X = np.array([[0.3, 0.6]])
        assert weak_mislabeling_rate(forest, X) == pytest.approx(37.5)

    def test_empty_input_rejected(self):
        forest = ForestModel(
            trees=(vote_stump(0),), n_features=2, n_classes=2, seed=0, max_features=None
        )
        with pytest.raises(ValueError):
            weak_mislabeling_rate(forest, np.empty((0, 2)))
