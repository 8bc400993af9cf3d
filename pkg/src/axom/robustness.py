"""Perturbation neighborhoods and the mean/max explanation-robustness metrics.

A neighborhood of x_i is the set of points within per-feature distance
epsilon that keep the model's predicted label.  The mean metric averages the
incremental ratio ||g(x_i)-g(x_j)|| / ||x_i-x_j|| over that set; the max
variant takes the supremum instead and diverges near explanation-constancy
boundaries, which is exactly why the mean is preferred.
"""

from __future__ import annotations

import multiprocessing
from dataclasses import dataclass, field

import numpy as np

from axom import routing
from axom.shapley import ModelExplainer
from axom.trees import ForestModel, TreeModel, predict_label

METHOD_BINDINGS = {
    "dt_shap": ("dt", "tree"),
    "rf_shap": ("rf", "forest"),
    "axom": ("rf", "axom"),
}


class EmptyNeighborhoodError(RuntimeError):
    """Every candidate neighbor changed the predicted label."""


@dataclass(frozen=True)
class NeighborhoodSpec:
    """How neighborhoods are generated.

    epsilon is in normalized-feature units (0.01 = 1% after 0-1 scaling);
    mode "grid" lays a k^p lattice with k = floor(n_points^(1/p)), mode
    "uniform_random" draws n_points i.i.d. from the hypercube.
    """

    epsilon: float = 0.01
    n_points: int = 10000
    mode: str = "uniform_random"
    seed: int = 0

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.n_points < 1:
            raise ValueError("n_points must be >= 1")
        if self.mode not in ("grid", "uniform_random"):
            raise ValueError(f"mode must be 'grid' or 'uniform_random', got {self.mode!r}")

    def grid_side(self, n_features: int) -> int:
        """Exact integer floor of n_points^(1/n_features); >= 2 or ValueError."""
        k = max(1, int(round(self.n_points ** (1.0 / n_features))))
        while (k + 1) ** n_features <= self.n_points:
            k += 1
        while k > 1 and k**n_features > self.n_points:
            k -= 1
        if k < 2:
            raise ValueError(
                f"grid mode needs at least 2 points per axis: n_points={self.n_points} "
                f"supports at most {int(np.log2(self.n_points))} features, got {n_features}"
            )
        return k


@dataclass(frozen=True, eq=False)
class Neighborhood:
    """Same-label neighbors of one center; rejected = label changed."""

    center: np.ndarray
    points: np.ndarray  # kept points only
    kept: int
    rejected: int


@dataclass(frozen=True)
class MethodAggregate:
    mean: float
    std: float
    n: int
    skipped: int


@dataclass(frozen=True)
class SampleRecord:
    sample_id: int
    method: str
    l_bar: float | None
    l_max: float | None
    kept: int
    rejected: int


@dataclass
class RobustnessReport:
    records: list[SampleRecord] = field(default_factory=list)
    aggregates: dict[str, MethodAggregate] = field(default_factory=dict)

    def method_values(self, method: str) -> np.ndarray:
        """Per-sample mean-robustness values for one method, in sample order."""
        return np.asarray(
            [r.l_bar for r in self.records if r.method == method and r.l_bar is not None]
        )


def generate_points(x_i: np.ndarray, spec: NeighborhoodSpec, sample_id: int = 0) -> np.ndarray:
    """Candidate perturbations in the epsilon box, center excluded."""
    x_i = np.asarray(x_i, dtype=np.float64)
    p = len(x_i)
    if spec.mode == "grid":
        k = spec.grid_side(p)
        offsets = np.linspace(-spec.epsilon, spec.epsilon, k)
        mesh = np.stack(np.meshgrid(*([offsets] * p), indexing="ij"), axis=-1).reshape(-1, p)
        if k % 2 == 1:  # odd side puts one lattice point exactly on the center
            mesh = mesh[np.any(mesh != 0.0, axis=1)]
        return x_i + mesh
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, sample_id]))
    return x_i + rng.uniform(-spec.epsilon, spec.epsilon, size=(spec.n_points, p))


def make_neighborhood(
    model: TreeModel | ForestModel, x_i, spec: NeighborhoodSpec, sample_id: int = 0
) -> Neighborhood:
    """Generate candidates and keep those with the center's predicted label."""
    x_i = np.asarray(x_i, dtype=np.float64)
    pts = generate_points(x_i, spec, sample_id)
    groups = routing.EnsembleSweep(model).prepare(pts)
    keep = groups.point_labels() == predict_label(model, x_i)
    return Neighborhood(
        center=x_i,
        points=pts[keep],
        kept=int(keep.sum()),
        rejected=int(len(pts) - keep.sum()),
    )


def _flat_explanations(explain_fn, pts: np.ndarray) -> np.ndarray:
    if hasattr(explain_fn, "explain_many"):
        return explain_fn.explain_many(pts)
    return np.asarray([np.asarray(explain_fn(x), dtype=np.float64).ravel() for x in pts])


def _ratios(explain_fn, x_i, neighborhood: Neighborhood) -> np.ndarray:
    if neighborhood.kept == 0:
        raise EmptyNeighborhoodError("all neighbors changed the predicted label")
    g_center = np.asarray(explain_fn(x_i), dtype=np.float64).ravel()
    g_pts = _flat_explanations(explain_fn, neighborhood.points)
    num = np.linalg.norm(g_pts - g_center, axis=1)
    den = np.linalg.norm(neighborhood.points - np.asarray(x_i), axis=1)
    return num / den


def mean_robustness(explain_fn, model, x_i, spec: NeighborhoodSpec, sample_id: int = 0) -> float:
    """Average incremental ratio of the explanation over the same-label box."""
    nb = make_neighborhood(model, x_i, spec, sample_id)
    return float(np.mean(_ratios(explain_fn, x_i, nb)))


def max_robustness(explain_fn, model, x_i, spec: NeighborhoodSpec, sample_id: int = 0) -> float:
    """Maximum incremental ratio; diverges as constancy boundaries approach the center."""
    nb = make_neighborhood(model, x_i, spec, sample_id)
    return float(np.max(_ratios(explain_fn, x_i, nb)))


def _eval_sample(args):
    models, x_i, sample_id, spec, methods, norm_target, leaf_value = args
    x_i = np.asarray(x_i, dtype=np.float64)
    by_model: dict[str, list[str]] = {}
    for method in methods:
        model_key, _ = METHOD_BINDINGS[method]
        by_model.setdefault(model_key, []).append(method)

    pts = None
    records = []
    for model_key, model_methods in by_model.items():
        model = models[model_key]
        if pts is None:
            pts = generate_points(x_i, spec, sample_id)
        groups = routing.EnsembleSweep(model, leaf_value).prepare(pts)
        center_label = predict_label(model, x_i)
        dist = np.linalg.norm(pts - x_i, axis=1)
        keep = (groups.point_labels() == center_label) & (dist > 0)
        kept = int(keep.sum())
        rejected = len(pts) - kept
        for method in model_methods:
            _, phi_method = METHOD_BINDINGS[method]
            if kept == 0:
                records.append(SampleRecord(sample_id, method, None, None, 0, rejected))
                continue
            class_row = center_label if norm_target == "predicted" else None
            explainer = ModelExplainer(
                model, phi_method, norm_target=norm_target, class_row=class_row, leaf_value=leaf_value
            )
            g_center = explainer(x_i)
            flat = groups.point_phi_flat(phi_method, norm_target, class_row)  # (n, D)
            diffs = np.linalg.norm(flat - g_center, axis=1)
            ratios = diffs[keep] / dist[keep]
            records.append(
                SampleRecord(sample_id, method, float(np.mean(ratios)), float(np.max(ratios)), kept, rejected)
            )
    order = {m: i for i, m in enumerate(methods)}
    records.sort(key=lambda r: order[r.method])
    return records


_POOL_ARGS = None


def _pool_init(models, spec, methods, norm_target, leaf_value):
    global _POOL_ARGS
    _POOL_ARGS = (models, spec, methods, norm_target, leaf_value)


def _pool_eval(payload):
    sample_id, x_i = payload
    models, spec, methods, norm_target, leaf_value = _POOL_ARGS
    return _eval_sample((models, x_i, sample_id, spec, methods, norm_target, leaf_value))


def evaluate_dataset(
    models: dict,
    test_X,
    spec: NeighborhoodSpec,
    *,
    methods: tuple[str, ...] = ("dt_shap", "rf_shap", "axom"),
    norm_target: str = "all",
    leaf_value: str = "proba",
    workers: int = 1,
) -> RobustnessReport:
    """Per-sample mean/max robustness for each method plus per-method aggregates.

    models maps "dt" to a TreeModel and "rf" to a ForestModel; methods choose
    among dt_shap / rf_shap / axom.  Results are deterministic for a fixed
    spec.seed regardless of the worker count: per-sample RNG streams derive
    from (spec.seed, sample_id) and aggregation runs in sample order.
    Samples whose whole neighborhood changes label are reported with
    kept=0 and excluded from the aggregates, never silently dropped.
    """
    for method in methods:
        if method not in METHOD_BINDINGS:
            raise ValueError(f"unknown method {method!r}")
        model_key, _ = METHOD_BINDINGS[method]
        if model_key not in models:
            raise ValueError(f"method {method!r} needs a {model_key!r} model")
    test_X = np.asarray(test_X, dtype=np.float64)

    if workers > 1:
        payloads = list(enumerate(test_X))
        with multiprocessing.Pool(
            processes=workers,
            initializer=_pool_init,
            initargs=(models, spec, methods, norm_target, leaf_value),
        ) as pool:
            per_sample = pool.map(_pool_eval, payloads)
    else:
        per_sample = [
            _eval_sample((models, x_i, sample_id, spec, methods, norm_target, leaf_value))
            for sample_id, x_i in enumerate(test_X)
        ]

    report = RobustnessReport()
    for records in per_sample:
        report.records.extend(records)
    for method in methods:
        values = [r.l_bar for r in report.records if r.method == method and r.l_bar is not None]
        skipped = sum(1 for r in report.records if r.method == method and r.l_bar is None)
        arr = np.asarray(values, dtype=np.float64)
        mean = float(arr.mean()) if len(arr) else float("nan")
        std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
        report.aggregates[method] = MethodAggregate(mean=mean, std=std, n=len(arr), skipped=skipped)
    return report
