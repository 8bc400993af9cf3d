"""Exact Shapley-value explanations for trees and forests.

shap_bruteforce enumerates every feature subset and is the correctness
oracle; shap_fast evaluates the same quantity in polynomial time through
per-leaf path games (see axom.routing).  Both share the masked-evaluation
semantics of eval_masked: conditioned features route normally, everything
else is marginalized with cover weights.  Forest explanations are the
unweighted mean of the per-tree explanations, which by linearity equals the
Shapley values of the soft-vote ensemble itself.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from axom import routing
from axom.trees import ForestModel, Leaf, TreeModel, predict_proba

BRUTEFORCE_MAX_FEATURES = 20


@dataclass(frozen=True, eq=False)
class Explanation:
    """Per-class by per-feature Shapley matrix for one input.

    For every class k, base_values[k] + values[k].sum() equals the model's
    predicted probability for k (the efficiency identity).
    """

    values: np.ndarray  # (n_classes, n_features)
    base_values: np.ndarray  # (n_classes,)
    for_sample: np.ndarray  # (n_features,)

    def class_slice(self, k: int) -> np.ndarray:
        """The 1 x n_features view for one label."""
        return self.values[k]

    def flat(self, norm_target: str = "all", class_row: int | None = None) -> np.ndarray:
        """Vector fed to the robustness norms: all classes or a single row."""
        if norm_target == "all":
            return self.values.ravel()
        if norm_target == "predicted":
            if class_row is None:
                raise ValueError("norm_target='predicted' needs class_row")
            return self.values[class_row]
        raise ValueError(f"unknown norm_target {norm_target!r}")


@dataclass(frozen=True)
class LeafSignature:
    """One entry per tree identifying the activated decision branch.

    Entries encode the routing decision at every split node (packed bits),
    so equal signatures guarantee bit-identical explanations even when a
    feature recurs with different thresholds away from the decision path.
    """

    entries: tuple[bytes, ...]

    def __len__(self) -> int:
        return len(self.entries)


def _as_vector(model, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != model.n_features:
        raise ValueError(f"expected a vector of {model.n_features} features, got shape {x.shape}")
    return x


def eval_masked(model: TreeModel | ForestModel, x, S, *, leaf_value: str = "proba") -> np.ndarray:
    """Masked model evaluation f_S(x) as a per-class vector.

    At a split on a conditioned feature the routed child is followed; on an
    unconditioned feature the children are averaged with cover weights.  With
    every feature conditioned this reproduces predict_proba exactly; with no
    features it is the base value.  Forests average the per-tree masked
    evaluations.
    """
    x = _as_vector(model, x)
    S = frozenset(int(a) for a in S)
    if not all(0 <= a < model.n_features for a in S):
        raise ValueError("S contains an out-of-range feature index")
    if isinstance(model, ForestModel):
        acc = np.zeros(model.n_classes)
        for tree in model.trees:
            acc += _eval_masked_tree(tree.root, x, S, leaf_value)
        return acc / len(model.trees)
    return _eval_masked_tree(model.root, x, S, leaf_value)


def _eval_masked_tree(node, x, S, leaf_value) -> np.ndarray:
    if isinstance(node, Leaf):
        return routing._leaf_value(node, leaf_value)
    if node.feature in S:
        child = node.left if x[node.feature] <= node.threshold else node.right
        return _eval_masked_tree(child, x, S, leaf_value)
    left = _eval_masked_tree(node.left, x, S, leaf_value)
    right = _eval_masked_tree(node.right, x, S, leaf_value)
    return (node.left.cover * left + node.right.cover * right) / node.cover


def _masked_table_tree(node, x, masks, leaf_value, n_classes) -> np.ndarray:
    """(len(masks), K) masked evaluations for every subset bitmask at once."""
    if isinstance(node, Leaf):
        return np.tile(routing._leaf_value(node, leaf_value), (len(masks), 1))
    left = _masked_table_tree(node.left, x, masks, leaf_value, n_classes)
    right = _masked_table_tree(node.right, x, masks, leaf_value, n_classes)
    routed = left if x[node.feature] <= node.threshold else right
    out = (node.left.cover * left + node.right.cover * right) / node.cover
    conditioned = ((masks >> node.feature) & 1).astype(bool)
    out[conditioned] = routed[conditioned]
    return out


def shap_bruteforce(model: TreeModel | ForestModel, x, *, leaf_value: str = "proba") -> Explanation:
    """Direct subset-enumeration Shapley values; the correctness oracle.

    Cost is 2^n_features masked evaluations, so models beyond
    BRUTEFORCE_MAX_FEATURES features are refused.
    """
    x = _as_vector(model, x)
    A = model.n_features
    if A > BRUTEFORCE_MAX_FEATURES:
        raise ValueError(
            f"brute-force enumeration is limited to {BRUTEFORCE_MAX_FEATURES} features, model has {A}"
        )
    masks = np.arange(1 << A, dtype=np.int64)
    if isinstance(model, ForestModel):
        table = np.zeros((len(masks), model.n_classes))
        for tree in model.trees:
            table += _masked_table_tree(tree.root, x, masks, leaf_value, model.n_classes)
        table /= len(model.trees)
    else:
        table = _masked_table_tree(model.root, x, masks, leaf_value, model.n_classes)

    popcount = np.zeros(len(masks), dtype=np.int64)
    for a in range(A):
        popcount += (masks >> a) & 1
    fact = math.factorial
    weights = np.asarray([(fact(s) * fact(A - s - 1)) / fact(A) for s in range(A)])

    values = np.zeros((model.n_classes, A))
    for a in range(A):
        without = np.flatnonzero(((masks >> a) & 1) == 0)
        with_a = without | (1 << a)
        contrib = (table[with_a] - table[without]) * weights[popcount[without], None]
        values[:, a] = contrib.sum(axis=0)
    base = table[0].copy()
    return Explanation(values=values, base_values=base, for_sample=x.copy())


def shap_fast(tree: TreeModel, x, *, leaf_value: str = "proba") -> Explanation:
    """Polynomial-time exact Shapley values for one tree.

    Matches shap_bruteforce to within 1e-9 elementwise; results are cached
    per constancy cell, so inputs with equal routing share one matrix.
    """
    if not isinstance(tree, TreeModel):
        raise TypeError("shap_fast expects a TreeModel; use shap_forest for ensembles")
    x = _as_vector(tree, x)
    table = routing.get_table(tree, leaf_value)
    return Explanation(values=table.shap(x), base_values=table.base, for_sample=x.copy())


def shap_forest(forest: ForestModel, x, *, leaf_value: str = "proba") -> Explanation:
    """Unweighted mean of the per-tree explanations (ascending tree order).

    By linearity of the Shapley formula in the model output this equals the
    Shapley values of the soft-vote ensemble's averaged masked evaluation.
    """
    x = _as_vector(forest, x)
    tables = [routing.get_table(t, leaf_value) for t in forest.trees]
    values, base = routing.mean_shap(tables, x)
    return Explanation(values=values, base_values=base, for_sample=x.copy())


def leaf_signature(model: TreeModel | ForestModel, x) -> LeafSignature:
    """Per-tree identifiers of the decision branch activated by x.

    Equal signatures imply bit-identical explanations; two inputs straddling
    a single threshold of one tree differ in exactly that entry.
    """
    x = _as_vector(model, x)
    entries = tuple(routing.get_table(t, "proba").routing_profile(x) for t in routing.model_trees(model))
    return LeafSignature(entries=entries)


def explain(model: TreeModel | ForestModel, x, *, leaf_value: str = "proba") -> Explanation:
    """shap_fast for trees, shap_forest for forests."""
    if isinstance(model, TreeModel):
        return shap_fast(model, x, leaf_value=leaf_value)
    return shap_forest(model, x, leaf_value=leaf_value)


def efficiency_residual(model, explanation: Explanation) -> float:
    """max_k |base_k + sum_a phi_{k,a} - proba_k|; ~0 for exact explanations."""
    proba = predict_proba(model, explanation.for_sample)
    return float(np.abs(explanation.base_values + explanation.values.sum(axis=1) - proba).max())


class ModelExplainer:
    """Callable explanation function g(x) with a batched fast path.

    method selects the explanation family: 'tree' (single tree), 'forest'
    (plain mean) or 'axom' (majority-filtered mean).  __call__ returns the
    flattened vector the robustness norms consume; explain_many evaluates a
    whole batch by grouping points into constancy cells.
    """

    def __init__(
        self,
        model,
        method: str = "forest",
        *,
        norm_target: str = "all",
        class_row: int | None = None,
        leaf_value: str = "proba",
    ):
        if method == "tree" and not isinstance(model, TreeModel):
            raise ValueError("method 'tree' expects a TreeModel")
        if method in ("forest", "axom") and not isinstance(model, ForestModel):
            raise ValueError(f"method {method!r} expects a ForestModel")
        self.model = model
        self.method = method
        self.norm_target = norm_target
        self.class_row = class_row
        self.leaf_value = leaf_value
        self.sweep = routing.EnsembleSweep(model, leaf_value)

    def __call__(self, x) -> np.ndarray:
        return self.explain_many(np.asarray(x, dtype=np.float64)[None, :])[0]

    def explain_many(self, pts: np.ndarray) -> np.ndarray:
        """(n_points, D) flattened explanations, one row per input."""
        pts = np.asarray(pts, dtype=np.float64)
        if self.norm_target == "predicted" and self.class_row is None:
            raise ValueError("norm_target='predicted' needs class_row")
        groups = self.sweep.prepare(pts)
        return groups.point_phi_flat(self.method, self.norm_target, self.class_row)


def write_explanations_csv(path, records) -> None:
    """Explanation export: (sample_id, class, feature, phi, base_value) rows.

    records yield (sample_id, Explanation) or (method, sample_id, Explanation);
    the three-element form adds the leading method column.
    """
    records = list(records)
    with_method = bool(records) and len(records[0]) == 3
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = ["sample_id", "class", "feature", "phi", "base_value"]
        writer.writerow((["method"] + header) if with_method else header)
        for record in records:
            if with_method:
                method, sample_id, expl = record
            else:
                method = None
                sample_id, expl = record
            K, A = expl.values.shape
            for k in range(K):
                for a in range(A):
                    row = [sample_id, k, a, repr(float(expl.values[k, a])), repr(float(expl.base_values[k]))]
                    writer.writerow(([method] + row) if with_method else row)
