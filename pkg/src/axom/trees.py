"""CART decision trees and bagged random forests, trained from scratch.

Splits greedily maximize Gini impurity decrease; candidate thresholds are
midpoints between consecutive distinct sorted values.  Routing is fixed:
value <= threshold goes left, value > threshold goes right.  Node covers
count training samples (bootstrap multiplicity included) and later weight
the marginalization of unconditioned features in the Shapley computation.
"""

from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

MODEL_FORMAT = "axom-model-v1"


@dataclass(frozen=True, eq=False)
class Leaf:
    class_counts: np.ndarray  # (n_classes,) int64, sums to cover
    cover: int


@dataclass(frozen=True, eq=False)
class SplitNode:
    feature: int
    threshold: float
    left: "TreeNode"
    right: "TreeNode"
    cover: int


TreeNode = Leaf | SplitNode


@dataclass(frozen=True, eq=False)
class TreeModel:
    root: TreeNode
    n_features: int
    n_classes: int


@dataclass(frozen=True, eq=False)
class ForestModel:
    """Bagged ensemble of TreeModels.

    vote="soft" predicts argmax of the mean per-tree probability vector;
    vote="hard" predicts the plurality of per-tree argmax labels.  Ties break
    toward the lowest class index in both modes.
    """

    trees: tuple[TreeModel, ...]
    n_features: int
    n_classes: int
    seed: int
    max_features: int | None
    vote: str = "soft"

    @property
    def n_estimators(self) -> int:
        return len(self.trees)


def gini(counts) -> float:
    """Gini impurity of a class-count vector; 0.5 for (5,5), 0 for pure."""
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts / total
    return float(1.0 - np.dot(p, p))


def _resolve_max_features(max_features, n_features: int) -> int:
    if max_features is None or max_features == "all":
        return n_features
    if max_features == "sqrt":
        return max(1, int(round(math.sqrt(n_features))))
    mf = int(max_features)
    if mf < 1:
        raise ValueError(f"max_features must be >= 1, got {max_features}")
    return min(mf, n_features)


def _best_split_for_feature(values, y, n_classes, min_samples_leaf):
    """Best (gain_numerator, threshold) along one feature, or None.

    Works with the un-normalized decrease n*parent_gini - sum_child n_c*gini_c
    (equivalently n * impurity decrease), which keeps comparisons integer-exact
    apart from the division by counts.
    """
    order = np.argsort(values, kind="stable")
    sv = values[order]
    sy = y[order]
    n = len(sv)
    boundaries = np.flatnonzero(sv[:-1] != sv[1:])  # split after position b
    if len(boundaries) == 0:
        return None
    one_hot = np.zeros((n, n_classes), dtype=np.float64)
    one_hot[np.arange(n), sy] = 1.0
    cum = np.cumsum(one_hot, axis=0)
    total = cum[-1]

    left_counts = cum[boundaries]
    right_counts = total - left_counts
    n_left = (boundaries + 1).astype(np.float64)
    n_right = n - n_left

    ok = (n_left >= min_samples_leaf) & (n_right >= min_samples_leaf)
    if not ok.any():
        return None
    # weighted child impurity * n  ==  n - sum_k l_k^2/n_l - sum_k r_k^2/n_r
    child = n - (left_counts**2).sum(axis=1) / n_left - (right_counts**2).sum(axis=1) / n_right
    child = np.where(ok, child, np.inf)
    best = int(np.argmin(child))  # first minimum -> lowest threshold on ties
    parent = n - float((total**2).sum()) / n
    gain = parent - float(child[best])
    b = boundaries[best]
    threshold = (sv[b] + sv[b + 1]) / 2.0
    return gain, float(threshold)


def _grow(X, y, row_idx, n_classes, depth, max_depth, min_samples_leaf, n_candidate_features, rng):
    counts = np.bincount(y[row_idx], minlength=n_classes).astype(np.int64)
    cover = int(len(row_idx))
    n_present = int((counts > 0).sum())
    if (
        n_present <= 1
        or (max_depth is not None and depth >= max_depth)
        or cover < 2 * min_samples_leaf
    ):
        return Leaf(class_counts=counts, cover=cover)

    n_features = X.shape[1]
    if n_candidate_features < n_features:
        candidates = np.sort(rng.choice(n_features, size=n_candidate_features, replace=False))
    else:
        candidates = np.arange(n_features)

    # zero-gain splits are allowed (stopping is purity/depth/leaf-size only),
    # which is what lets e.g. XOR resolve at depth 2
    best_gain = -math.inf
    best_feature = -1
    best_threshold = 0.0
    for f in candidates:
        found = _best_split_for_feature(X[row_idx, f], y[row_idx], n_classes, min_samples_leaf)
        if found is None:
            continue
        gain, threshold = found
        if gain > best_gain + 1e-12:
            best_gain, best_feature, best_threshold = gain, int(f), threshold
    if best_feature < 0:
        return Leaf(class_counts=counts, cover=cover)

    mask = X[row_idx, best_feature] <= best_threshold
    left_idx = row_idx[mask]
    right_idx = row_idx[~mask]
    left = _grow(X, y, left_idx, n_classes, depth + 1, max_depth, min_samples_leaf, n_candidate_features, rng)
    right = _grow(X, y, right_idx, n_classes, depth + 1, max_depth, min_samples_leaf, n_candidate_features, rng)
    return SplitNode(feature=best_feature, threshold=best_threshold, left=left, right=right, cover=cover)


def fit_tree(
    X,
    y,
    n_classes: int,
    *,
    max_depth: int | None = None,
    min_samples_leaf: int = 1,
    max_features=None,
    seed: int = 0,
) -> TreeModel:
    """Fit a CART classification tree.

    Degenerate inputs (single class, no improving split) yield a single leaf.
    max_features subsamples candidate features independently at every split,
    seed-deterministically.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) != len(y) or len(X) == 0:
        raise ValueError("X must be (n, p) with matching non-empty y")
    if min_samples_leaf < 1:
        raise ValueError("min_samples_leaf must be >= 1")
    if max_depth is not None and max_depth < 0:
        raise ValueError("max_depth must be >= 0")
    mf = _resolve_max_features(max_features, X.shape[1])
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    root = _grow(X, y, np.arange(len(X)), n_classes, 0, max_depth, min_samples_leaf, mf, rng)
    return TreeModel(root=root, n_features=X.shape[1], n_classes=n_classes)


def fit_forest(
    X,
    y,
    n_classes: int,
    *,
    n_estimators: int = 100,
    max_depth: int | None = None,
    min_samples_leaf: int = 1,
    max_features="sqrt",
    seed: int = 0,
    vote: str = "soft",
    bootstrap: bool = True,
) -> ForestModel:
    """Fit a bagged forest; tree t draws its bootstrap and split RNG from (seed, t)."""
    if n_estimators < 1:
        raise ValueError("n_estimators must be >= 1")
    if vote not in ("soft", "hard"):
        raise ValueError(f"vote must be 'soft' or 'hard', got {vote!r}")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n = len(X)
    mf = _resolve_max_features(max_features, X.shape[1])
    trees = []
    for t in range(n_estimators):
        rng = np.random.default_rng(np.random.SeedSequence([seed, t]))
        if bootstrap:
            rows = rng.integers(0, n, size=n)
            Xb, yb = X[rows], y[rows]
        else:
            Xb, yb = X, y
        root = _grow(Xb, yb, np.arange(n), n_classes, 0, max_depth, min_samples_leaf, mf, rng)
        trees.append(TreeModel(root=root, n_features=X.shape[1], n_classes=n_classes))
    return ForestModel(
        trees=tuple(trees),
        n_features=X.shape[1],
        n_classes=n_classes,
        seed=seed,
        max_features=mf if mf < X.shape[1] else None,
        vote=vote,
    )


def _tree_proba_one(tree: TreeModel, x) -> np.ndarray:
    node = tree.root
    while isinstance(node, SplitNode):
        node = node.left if x[node.feature] <= node.threshold else node.right
    return node.class_counts / node.cover


def _tree_proba_batch(tree: TreeModel, X) -> np.ndarray:
    out = np.empty((len(X), tree.n_classes), dtype=np.float64)
    stack = [(tree.root, np.arange(len(X)))]
    while stack:
        node, idx = stack.pop()
        if isinstance(node, Leaf):
            out[idx] = node.class_counts / node.cover
            continue
        mask = X[idx, node.feature] <= node.threshold
        left_idx = idx[mask]
        right_idx = idx[~mask]
        if len(left_idx):
            stack.append((node.left, left_idx))
        if len(right_idx):
            stack.append((node.right, right_idx))
    return out


def predict_proba(model: TreeModel | ForestModel, x) -> np.ndarray:
    """Per-class probability vector for one sample; sums to 1.

    Trees normalize the reached leaf's class counts; forests average the
    per-tree vectors (ascending tree order).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != model.n_features:
        raise ValueError(f"expected a vector of {model.n_features} features, got shape {x.shape}")
    if isinstance(model, TreeModel):
        return _tree_proba_one(model, x)
    acc = np.zeros(model.n_classes, dtype=np.float64)
    for tree in model.trees:
        acc += _tree_proba_one(tree, x)
    return acc / len(model.trees)


def predict_proba_batch(model: TreeModel | ForestModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if isinstance(model, TreeModel):
        return _tree_proba_batch(model, X)
    acc = np.zeros((len(X), model.n_classes), dtype=np.float64)
    for tree in model.trees:
        acc += _tree_proba_batch(tree, X)
    return acc / len(model.trees)


def _hard_vote_labels(model: ForestModel, X) -> np.ndarray:
    votes = np.zeros((len(X), model.n_classes), dtype=np.int64)
    for tree in model.trees:
        labels = np.argmax(_tree_proba_batch(tree, X), axis=1)
        votes[np.arange(len(X)), labels] += 1
    return np.argmax(votes, axis=1)  # argmax takes the lowest index on ties


def predict_label(model: TreeModel | ForestModel, x) -> int:
    """Predicted class; ties break toward the lowest class index."""
    return int(predict_label_batch(model, np.asarray(x, dtype=np.float64)[None, :])[0])


def predict_label_batch(model: TreeModel | ForestModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if isinstance(model, ForestModel) and model.vote == "hard":
        return _hard_vote_labels(model, X)
    return np.argmax(predict_proba_batch(model, X), axis=1)


def _stratified_folds(y, k, rng):
    folds = [[] for _ in range(k)]
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        rng.shuffle(idx)
        for i, sample in enumerate(idx):
            folds[i % k].append(sample)
    return [np.sort(np.asarray(f, dtype=np.int64)) for f in folds]


def _plain_folds(n, k, rng):
    idx = np.arange(n)
    rng.shuffle(idx)
    return [np.sort(part) for part in np.array_split(idx, k)]


def _model_size_key(params: dict):
    depth = params.get("max_depth")
    return (
        params.get("n_estimators", 1),
        math.inf if depth is None else depth,
        -params.get("min_samples_leaf", 1),
    )


def grid_search_cv(
    X,
    y,
    n_classes: int,
    grid: dict,
    *,
    model: str = "forest",
    k_folds: int = 5,
    seed: int = 0,
    vote: str = "soft",
):
    """Pick the grid point with the best stratified k-fold CV accuracy.

    Accuracy ties go to the smaller model: fewer estimators, then shallower
    depth, then larger min_samples_leaf, then grid order.  If some fold's
    training side would miss a class, folding downgrades to unstratified with
    a warning.

    Returns (best_params, best_cv_accuracy).
    """
    if k_folds < 2:
        raise ValueError("k_folds must be >= 2")
    if not grid:
        raise ValueError("grid must be non-empty")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)

    rng = np.random.default_rng(np.random.SeedSequence([seed, k_folds]))
    folds = _stratified_folds(y, k_folds, rng)
    classes = set(np.unique(y))
    for holdout in range(k_folds):
        train_idx = np.concatenate([f for j, f in enumerate(folds) if j != holdout])
        if set(np.unique(y[train_idx])) != classes:
            warnings.warn("stratified folds would drop a class from a training side; using plain folds")
            folds = _plain_folds(len(y), k_folds, rng)
            break

    keys = sorted(grid)
    candidates = [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]

    best_params = None
    best_acc = -1.0
    for params in candidates:
        correct = 0
        for holdout in range(k_folds):
            val_idx = folds[holdout]
            train_idx = np.concatenate([f for j, f in enumerate(folds) if j != holdout])
            if model == "forest":
                fitted = fit_forest(X[train_idx], y[train_idx], n_classes, seed=seed, vote=vote, **params)
            else:
                fitted = fit_tree(X[train_idx], y[train_idx], n_classes, seed=seed, **params)
            correct += int((predict_label_batch(fitted, X[val_idx]) == y[val_idx]).sum())
        acc = correct / len(y)
        if acc > best_acc or (acc == best_acc and _model_size_key(params) < _model_size_key(best_params)):
            best_acc = acc
            best_params = params
    return best_params, best_acc


def _node_to_dict(node: TreeNode) -> dict:
    if isinstance(node, Leaf):
        return {"counts": [int(c) for c in node.class_counts], "cover": node.cover}
    return {
        "feature": node.feature,
        "threshold": node.threshold,
        "cover": node.cover,
        "left": _node_to_dict(node.left),
        "right": _node_to_dict(node.right),
    }


def _node_from_dict(d: dict) -> TreeNode:
    if "counts" in d:
        return Leaf(class_counts=np.asarray(d["counts"], dtype=np.int64), cover=int(d["cover"]))
    return SplitNode(
        feature=int(d["feature"]),
        threshold=float(d["threshold"]),
        left=_node_from_dict(d["left"]),
        right=_node_from_dict(d["right"]),
        cover=int(d["cover"]),
    )


def model_to_json(model: TreeModel | ForestModel) -> str:
    """Self-describing versioned JSON document for one model."""
    if isinstance(model, TreeModel):
        doc = {
            "format": MODEL_FORMAT,
            "kind": "tree",
            "n_features": model.n_features,
            "n_classes": model.n_classes,
            "root": _node_to_dict(model.root),
        }
    else:
        doc = {
            "format": MODEL_FORMAT,
            "kind": "forest",
            "n_features": model.n_features,
            "n_classes": model.n_classes,
            "seed": model.seed,
            "max_features": model.max_features,
            "vote": model.vote,
            "trees": [_node_to_dict(t.root) for t in model.trees],
        }
    return json.dumps(doc, sort_keys=True)


def model_from_json(text: str) -> TreeModel | ForestModel:
    doc = json.loads(text)
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"unsupported model format {doc.get('format')!r}")
    if doc["kind"] == "tree":
        return TreeModel(
            root=_node_from_dict(doc["root"]),
            n_features=int(doc["n_features"]),
            n_classes=int(doc["n_classes"]),
        )
    trees = tuple(
        TreeModel(root=_node_from_dict(r), n_features=int(doc["n_features"]), n_classes=int(doc["n_classes"]))
        for r in doc["trees"]
    )
    return ForestModel(
        trees=trees,
        n_features=int(doc["n_features"]),
        n_classes=int(doc["n_classes"]),
        seed=int(doc["seed"]),
        max_features=doc["max_features"],
        vote=doc["vote"],
    )
