"""Internal routing/caching machinery behind the Shapley computations.

A fitted tree is compiled once into a TreeTable: per-leaf path records
(deduplicated features, cover-ratio products, routing intervals) plus a flat
list of every split node.  Explanations are a function of the tree's routing
profile alone, so TreeTable memoizes Shapley matrices by packed routing bits;
EnsembleSweep exploits the same fact to evaluate thousands of neighborhood
points by grouping them into explanation-constancy cells and explaining one
representative per cell.
"""

from __future__ import annotations

import logging
import math
from functools import lru_cache

import numpy as np

from axom.trees import ForestModel, Leaf, SplitNode, TreeModel

log = logging.getLogger(__name__)

LEAF_VALUE_MODES = ("proba", "indicator")


def _leaf_value(node: Leaf, mode: str) -> np.ndarray:
    if mode == "proba":
        return node.class_counts / node.cover
    one_hot = np.zeros(len(node.class_counts), dtype=np.float64)
    one_hot[int(np.argmax(node.class_counts))] = 1.0
    return one_hot


class TreeTable:
    """Flattened tree with per-leaf path games for exact Shapley values.

    For a leaf, the masked evaluation reaches it with probability
    prod_{f in S} z_f * prod_{f not in S} r_f, where z_f says whether x
    routes toward the leaf at every node of feature f on its path and r_f is
    the product of that feature's cover ratios.  The Shapley weight of a
    path feature is a subset sum over the other path features which, via
    c(j, u) = integral_0^1 t^j (1-t)^(u-1-j) dt, becomes the integral of a
    polynomial of degree u-1 and is evaluated exactly with Gauss-Legendre
    quadrature, vectorized over all leaves at once.
    """

    def __init__(self, tree: TreeModel, mode: str):
        if mode not in LEAF_VALUE_MODES:
            raise ValueError(f"leaf_value must be one of {LEAF_VALUE_MODES}, got {mode!r}")
        self.tree = tree
        self.mode = mode
        self.n_features = tree.n_features
        self.n_classes = tree.n_classes

        node_features: list[int] = []
        node_thresholds: list[float] = []
        leaf_values: list[np.ndarray] = []
        leaf_weights: list[float] = []
        leaf_paths: list[list[tuple[int, float, float, float]]] = []
        root_cover = tree.root.cover

        def walk(node, path: dict):
            if isinstance(node, Leaf):
                leaf_values.append(_leaf_value(node, mode))
                leaf_weights.append(node.cover / root_cover)
                leaf_paths.append([(f, r, lo, hi) for f, (r, lo, hi) in path.items()])
                return
            node_features.append(node.feature)
            node_thresholds.append(node.threshold)
            f = node.feature
            prev = path.get(f)
            r_prev, lo_prev, hi_prev = prev if prev is not None else (1.0, -math.inf, math.inf)
            # left: x <= threshold
            path[f] = (r_prev * node.left.cover / node.cover, lo_prev, min(hi_prev, node.threshold))
            walk(node.left, path)
            # right: x > threshold
            path[f] = (r_prev * node.right.cover / node.cover, max(lo_prev, node.threshold), hi_prev)
            walk(node.right, path)
            if prev is None:
                del path[f]
            else:
                path[f] = prev

        walk(tree.root, {})

        self.node_features = np.asarray(node_features, dtype=np.int64)
        self.node_thresholds = np.asarray(node_thresholds, dtype=np.float64)
        self.n_leaves = len(leaf_values)
        self.values = np.asarray(leaf_values, dtype=np.float64)  # (L, K)
        self.leaf_weight = np.asarray(leaf_weights, dtype=np.float64)
        base = self.leaf_weight @ self.values
        base.flags.writeable = False
        self.base = base  # (K,) cover-weighted mean of leaf values

        dmax = max((len(p) for p in leaf_paths), default=0)
        self.dmax = dmax
        L = self.n_leaves
        self.path_feat = np.zeros((L, dmax), dtype=np.int64)
        self.path_lo = np.full((L, dmax), math.inf)
        self.path_hi = np.full((L, dmax), math.inf)
        self.path_r = np.ones((L, dmax), dtype=np.float64)
        self.slot_valid = np.zeros((L, dmax), dtype=bool)
        self.path_len = np.zeros(L, dtype=np.int64)
        for i, path in enumerate(leaf_paths):
            self.path_len[i] = len(path)
            for j, (f, r, lo, hi) in enumerate(path):
                self.path_feat[i, j] = f
                self.path_r[i, j] = r
                self.path_lo[i, j] = lo
                self.path_hi[i, j] = hi
                self.slot_valid[i, j] = True

        # quadrature on [0, 1], exact for polynomials of degree <= dmax - 1
        n_quad = max(1, (dmax + 1) // 2)
        nodes, weights = np.polynomial.legendre.leggauss(n_quad)
        self.quad_t = (nodes + 1.0) / 2.0
        self.quad_w = weights / 2.0
        self.one_minus_t = 1.0 - self.quad_t
        # factor t + (1-t) r per (leaf, slot, node); 1.0 whenever the slot is out of the game
        self.factor = self.quad_t[None, None, :] + self.one_minus_t[None, None, :] * self.path_r[:, :, None]

        self._shap_memo: dict[bytes, np.ndarray] = {}

    # -- routing ---------------------------------------------------------

    def routing_profile(self, x: np.ndarray) -> bytes:
        """Packed routing bits at every split node; identifies the constancy cell."""
        if len(self.node_features) == 0:
            return b""
        bits = x[self.node_features] <= self.node_thresholds
        return np.packbits(bits).tobytes()

    def leaf_index(self, x: np.ndarray) -> int:
        """Index of the reached leaf in the left-first DFS numbering."""
        node = self.tree.root
        i = 0
        while isinstance(node, SplitNode):
            if x[node.feature] <= node.threshold:
                node = node.left
            else:
                i += _count_leaves(node.left)
                node = node.right
        return i

    def zbits(self, x: np.ndarray) -> np.ndarray:
        """(L, dmax) booleans: does x route toward leaf l at every node of slot j's feature."""
        if self.dmax == 0:
            return np.zeros((self.n_leaves, 0), dtype=bool)
        xv = x[self.path_feat]
        return (self.path_lo < xv) & (xv <= self.path_hi)

    # -- Shapley ---------------------------------------------------------

    def shap(self, x: np.ndarray) -> np.ndarray:
        """Memoized (K, A) Shapley matrix; read-only, shared between equal cells."""
        z = self.zbits(x)
        key = np.packbits(z).tobytes()
        cached = self._shap_memo.get(key)
        if cached is None:
            cached = self._shap_kernel(z)
            cached.flags.writeable = False
            self._shap_memo[key] = cached
        return cached

    def _shap_kernel(self, z: np.ndarray) -> np.ndarray:
        phi = np.zeros((self.n_features, self.n_classes), dtype=np.float64)
        if self.dmax == 0:
            return np.ascontiguousarray(phi.T)
        # active slots contribute their factor to the product, the rest contribute 1
        F = np.where(z[:, :, None], self.factor, 1.0)  # (L, Dmax, Q)
        G = F.prod(axis=1)  # (L, Q) product over the z=1 slots
        m1 = z.sum(axis=1)
        u = self.path_len
        r_inactive = np.where(~z & self.slot_valid, self.path_r, 1.0)
        R0 = r_inactive.prod(axis=1)  # (L,)

        omt = self.one_minus_t
        # a inactive: weight -r_a * (R0 / r_a) * S0 = -R0 * S0, shared per leaf
        e0 = np.maximum(u - 1 - m1, 0)  # only used when an inactive slot exists
        S0 = ((omt[None, :] ** e0[:, None]) * self.quad_w[None, :] * G).sum(axis=1)
        w0 = -R0 * S0
        # a active: divide its factor out of the full product
        e1 = u - m1
        H1 = (omt[None, :] ** e1[:, None]) * self.quad_w[None, :]  # (L, Q)
        W1 = ((H1 * G)[:, None, :] / F).sum(axis=2)  # (L, Dmax)
        w1 = (1.0 - self.path_r) * R0[:, None] * W1

        w = np.where(z, w1, w0[:, None])
        w = np.where(self.slot_valid, w, 0.0)
        contrib = w[:, :, None] * self.values[:, None, :]  # (L, Dmax, K)
        np.add.at(phi, self.path_feat.ravel(), contrib.reshape(-1, self.n_classes))
        return np.ascontiguousarray(phi.T)  # (K, A)

    def proba(self, x: np.ndarray) -> np.ndarray:
        node = self.tree.root
        while isinstance(node, SplitNode):
            node = node.left if x[node.feature] <= node.threshold else node.right
        return _leaf_value(node, self.mode)


def _count_leaves(node) -> int:
    if isinstance(node, Leaf):
        return 1
    return _count_leaves(node.left) + _count_leaves(node.right)


@lru_cache(maxsize=None)
def get_table(tree: TreeModel, mode: str) -> TreeTable:
    return TreeTable(tree, mode)


def model_trees(model: TreeModel | ForestModel) -> tuple[TreeModel, ...]:
    return (model,) if isinstance(model, TreeModel) else model.trees


def mean_shap(tables, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Ascending-order mean of per-tree Shapley matrices and base values."""
    acc = np.zeros((tables[0].n_classes, tables[0].n_features), dtype=np.float64)
    base = np.zeros(tables[0].n_classes, dtype=np.float64)
    for table in tables:
        acc += table.shap(x)
        base += table.base
    acc /= len(tables)
    base /= len(tables)
    return acc, base


class EnsembleSweep:
    """Evaluates many points against a model by explanation-constancy cells.

    Only split nodes whose threshold falls inside the batch's per-feature
    range can route points differently, so each tree partitions the batch
    into a handful of cells keyed by those "active" bits.  Per-tree
    quantities (probabilities, labels, Shapley matrices) are computed once
    per cell and combined per point with indexed accumulation in ascending
    tree order, which keeps results bit-identical to the per-sample
    functions in axom.shapley / axom.majority.
    """

    def __init__(self, model: TreeModel | ForestModel, leaf_value: str = "proba"):
        self.model = model
        self.trees = model_trees(model)
        self.tables = [get_table(t, leaf_value) for t in self.trees]
        self.vote = model.vote if isinstance(model, ForestModel) else "soft"
        self.n_classes = model.n_classes
        self.n_features = model.n_features

    def prepare(self, pts: np.ndarray) -> "SweepGroups":
        pts = np.asarray(pts, dtype=np.float64)
        lo = pts.min(axis=0)
        hi = pts.max(axis=0)
        groups = []
        for table in self.tables:
            nf, nt = table.node_features, table.node_thresholds
            active = (nt >= lo[nf]) & (nt < hi[nf]) if len(nf) else np.zeros(0, dtype=bool)
            if not active.any():
                groups.append((None, np.zeros(1, dtype=np.int64)))
                continue
            bits = pts[:, nf[active]] <= nt[active]
            packed = np.packbits(bits, axis=1)
            _, rep, inv = np.unique(packed, axis=0, return_index=True, return_inverse=True)
            groups.append((inv.ravel().astype(np.int64), np.asarray(rep, dtype=np.int64)))
        return SweepGroups(self, pts, groups)


class SweepGroups:
    """Per-tree cell decomposition of one point batch, with lazy assembly."""

    def __init__(self, sweep: EnsembleSweep, pts, groups):
        self.sweep = sweep
        self.pts = pts
        self.n = len(pts)
        self._groups = groups  # per tree: (gid array or None when constant, rep indices)
        self._tree_probas = None  # per tree: (G_t, K)
        self._labels = None
        self._phi_flat = {}

    def _per_tree_probas(self) -> list[np.ndarray]:
        if self._tree_probas is None:
            out = []
            for table, (gid, reps) in zip(self.sweep.tables, self._groups):
                out.append(np.stack([table.proba(self.pts[r]) for r in reps]))
            self._tree_probas = out
        return self._tree_probas

    def _expand(self, per_group: np.ndarray, gid) -> np.ndarray:
        if gid is None:
            return np.broadcast_to(per_group[0], (self.n,) + per_group.shape[1:])
        return per_group[gid]

    def point_probas(self) -> np.ndarray:
        """(n, K) mean per-tree probability vectors (ascending tree order)."""
        acc = np.zeros((self.n, self.sweep.n_classes))
        for probas, (gid, _) in zip(self._per_tree_probas(), self._groups):
            acc += self._expand(probas, gid)
        return acc / len(self.sweep.tables)

    def point_labels(self) -> np.ndarray:
        """(n,) model label per point, honoring the voting rule."""
        if self._labels is None:
            if self.sweep.vote == "hard":
                votes = np.zeros((self.n, self.sweep.n_classes), dtype=np.int64)
                rows = np.arange(self.n)
                for probas, (gid, _) in zip(self._per_tree_probas(), self._groups):
                    votes[rows, self._expand(probas.argmax(axis=1), gid)] += 1
                self._labels = votes.argmax(axis=1)
            else:
                self._labels = self.point_probas().argmax(axis=1)
        return self._labels

    def _tree_phi_flat(self, ti: int, norm_target: str, class_row) -> np.ndarray:
        """(G_t, D) flattened Shapley matrices of tree ti's cells."""
        table = self.sweep.tables[ti]
        _, reps = self._groups[ti]
        mats = [table.shap(self.pts[r]) for r in reps]
        if norm_target == "all":
            return np.stack([m.ravel() for m in mats])
        return np.stack([m[class_row] for m in mats])

    def point_phi_flat(self, method: str, norm_target: str = "all", class_row=None) -> np.ndarray:
        """(n, D) flattened explanations per point for tree/forest/axom."""
        key = (method, norm_target, class_row)
        cached = self._phi_flat.get(key)
        if cached is not None:
            return cached
        tables = self.sweep.tables
        if method == "tree":
            if len(tables) != 1:
                raise ValueError("method 'tree' needs a single-tree model")
            gid, _ = self._groups[0]
            out = np.ascontiguousarray(self._expand(self._tree_phi_flat(0, norm_target, class_row), gid))
        elif method == "forest":
            out = self._mean_phi(range(len(tables)), norm_target, class_row)
        elif method == "axom":
            labels = self.point_labels()
            d = None
            acc = None
            count = np.zeros(self.n, dtype=np.int64)
            for ti, (probas, (gid, _)) in enumerate(zip(self._per_tree_probas(), self._groups)):
                phi = self._tree_phi_flat(ti, norm_target, class_row)
                if acc is None:
                    d = phi.shape[1]
                    acc = np.zeros((self.n, d))
                mask = self._expand(probas.argmax(axis=1), gid) == labels
                expanded = self._expand(phi, gid)
                acc[mask] += expanded[mask]
                count[mask] += 1
            missing = count == 0
            out = acc / np.where(missing, 1, count)[:, None]
            if missing.any():
                log.warning(
                    "%d points have no weak learner agreeing with the ensemble label; using the plain mean",
                    int(missing.sum()),
                )
                out[missing] = self._mean_phi(range(len(tables)), norm_target, class_row)[missing]
        else:
            raise ValueError(f"unknown method {method!r}")
        self._phi_flat[key] = out
        return out

    def _mean_phi(self, tree_indices, norm_target, class_row) -> np.ndarray:
        acc = None
        n_trees = 0
        for ti in tree_indices:
            phi = self._tree_phi_flat(ti, norm_target, class_row)
            gid, _ = self._groups[ti]
            expanded = self._expand(phi, gid)
            if acc is None:
                acc = np.zeros((self.n, phi.shape[1]))
            acc += expanded
            n_trees += 1
        return acc / n_trees
