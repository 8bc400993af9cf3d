"""Majority-filtered combination of weak explanations (AXOM).

Only the trees whose predicted label matches the ensemble's label contribute
to the averaged explanation; the rest are discarded.  When every tree agrees
the result collapses to the plain forest explanation exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from axom import routing
from axom.shapley import Explanation
from axom.trees import ForestModel, predict_label

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class AxomExplanation:
    """Mean explanation of the majority trees.

    values is the elementwise mean of the contributing trees' Shapley
    matrices; base_values the mean of their base values, so the efficiency
    identity holds against the contributing subset's mean probability, not
    the full ensemble's.  fallback marks the soft-vote edge case where no
    single tree matched the ensemble label and the plain mean was used.
    """

    values: np.ndarray  # (n_classes, n_features)
    base_values: np.ndarray  # (n_classes,)
    for_sample: np.ndarray
    contributing_trees: tuple[int, ...]
    n_discarded: int
    fallback: bool = False

    def class_slice(self, k: int) -> np.ndarray:
        return self.values[k]

    def as_explanation(self) -> Explanation:
        return Explanation(values=self.values, base_values=self.base_values, for_sample=self.for_sample)


def axom_explain(forest: ForestModel, x, *, leaf_value: str = "proba") -> AxomExplanation:
    """Average the explanations of the trees that voted with the ensemble.

    The agreement test compares each tree's argmax label with the ensemble
    label under the forest's configured voting rule.
    """
    if not isinstance(forest, ForestModel) or forest.n_estimators < 1:
        raise ValueError("axom_explain expects a ForestModel with at least one tree")
    x = np.asarray(x, dtype=np.float64)
    ensemble_label = predict_label(forest, x)
    tables = [routing.get_table(t, leaf_value) for t in forest.trees]
    contributing = [ti for ti, table in enumerate(tables) if int(np.argmax(table.proba(x))) == ensemble_label]
    fallback = not contributing
    if fallback:
        log.warning(
            "no weak learner matches the ensemble label for this sample; falling back to the plain forest mean"
        )
        contributing = list(range(len(tables)))

    values = np.zeros((forest.n_classes, forest.n_features))
    base = np.zeros(forest.n_classes)
    for ti in contributing:
        values += tables[ti].shap(x)
        base += tables[ti].base
    values /= len(contributing)
    base /= len(contributing)
    return AxomExplanation(
        values=values,
        base_values=base,
        for_sample=x.copy(),
        contributing_trees=tuple(contributing),
        n_discarded=0 if fallback else forest.n_estimators - len(contributing),
        fallback=fallback,
    )


def weak_mislabeling_rate(forest: ForestModel, X_test) -> float:
    """Mean percentage of trees voting against the ensemble label.

    Averaged over the given samples; 0 for a unanimous forest.
    """
    X_test = np.asarray(X_test, dtype=np.float64)
    if X_test.ndim != 2 or len(X_test) == 0:
        raise ValueError("weak_mislabeling_rate expects a non-empty (n, p) matrix")
    tables = [routing.get_table(t, "proba") for t in forest.trees]
    total = 0.0
    for x in X_test:
        ensemble_label = predict_label(forest, x)
        disagree = sum(1 for table in tables if int(np.argmax(table.proba(x))) != ensemble_label)
        total += disagree / forest.n_estimators
    return 100.0 * total / len(X_test)
