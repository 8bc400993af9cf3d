"""End-to-end experiment pipeline: ingest, train, explain, score, report.

A declarative ExperimentConfig drives every stage; the canonical JSON form
of the config is hashed to name the output subdirectory, and a manifest
records completed stages so re-runs reuse finished work.  All CSV artifacts
are byte-deterministic for a fixed config, independent of the worker count.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from axom import __version__
from axom.datasets import DATASET_NAMES, load_dataset
from axom.heatmaps import (
    averaged_ratio_map,
    difference_map,
    ratio_map,
    render_heatmap_svg,
    select_axes,
    write_heatmap_csv,
)
from axom.majority import axom_explain, weak_mislabeling_rate
from axom.robustness import NeighborhoodSpec, evaluate_dataset
from axom.shapley import ModelExplainer, explain, write_explanations_csv
from axom.stats import compare
from axom.trees import (
    fit_forest,
    fit_tree,
    grid_search_cv,
    model_from_json,
    model_to_json,
    predict_label,
    predict_label_batch,
)

# spec'd default search grids; singletons can be forced from the CLI
DEFAULT_TREE_GRID = {
    "max_depth": [3, 5, 8, None],
    "min_samples_leaf": [1, 3, 5],
}
DEFAULT_FOREST_GRID = {
    "n_estimators": [50, 100, 200],
    "max_depth": [3, 5, 8, None],
    "min_samples_leaf": [1, 3, 5],
    "max_features": ["sqrt", "all"],
}

COMPARISONS = (("dt_shap", "rf_shap"), ("dt_shap", "axom"), ("rf_shap", "axom"))
COMPARISON_LABELS = {"dt_shap": "DT", "rf_shap": "RF", "axom": "AXOM"}
METHOD_SHORT = {"dt_shap": "dt", "rf_shap": "rf", "axom": "axom"}

# reported reference values, shown in reports for comparison only (the exact
# splits and seeds behind them are unpublished, so they are not reproducible
# bit-for-bit and are never used in any computation)
REFERENCE_ACCURACY = {
    "wine": (88.9, 100.0),
    "glass": (81.8, 95.5),
    "seeds": (85.7, 95.2),
    "banknote": (98.6, 99.3),
}
REFERENCE_ROBUSTNESS = {
    "wine": {"dt_shap": (0.00, 0.00), "rf_shap": (0.55, 0.51), "axom": (0.47, 0.44)},
    "glass": {"dt_shap": (1.89, 1.78), "rf_shap": (1.75, 1.87), "axom": (1.27, 0.72)},
    "seeds": {"dt_shap": (0.65, 2.02), "rf_shap": (0.77, 0.72), "axom": (0.65, 0.67)},
    "banknote": {"dt_shap": (1.75, 3.32), "rf_shap": (1.58, 1.57), "axom": (1.28, 1.34)},
}
REFERENCE_PVALUES = {
    ("DT", "RF"): {"wine": "<0.001", "glass": "0.774", "seeds": "0.008", "banknote": "0.3023"},
    ("DT", "AXOM"): {"wine": "<0.001", "glass": "0.113", "seeds": "0.008", "banknote": "0.0656"},
    ("RF", "AXOM"): {"wine": "0.042", "glass": "0.007", "seeds": "0.030", "banknote": "0.0444"},
}
REFERENCE_MISLABELING = {"wine": 12.1, "glass": 24.9, "seeds": 14.0, "banknote": 2.5}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class HeatmapRequest:
    dataset: str
    kind: str  # diff | ratio | avg
    method: str  # dt | rf | axom
    sample_id: int | str = "auto"  # ignored for avg
    axes: tuple[int, int] | str = "auto"
    resolution: tuple[int, int] = (100, 100)


@dataclass(frozen=True)
class ExperimentConfig:
    datasets: tuple[str, ...]
    data_dir: str
    output_dir: str
    test_fraction: float = 0.1
    seed: int = 0
    cv_folds: int = 5
    vote: str = "soft"
    tree_grid: dict = field(default_factory=lambda: dict(DEFAULT_TREE_GRID))
    forest_grid: dict = field(default_factory=lambda: dict(DEFAULT_FOREST_GRID))
    epsilon: float = 0.01
    n_points: int = 10000
    neighborhood_mode: str = "uniform_random"
    norm_target: str = "all"
    heatmaps: tuple[HeatmapRequest, ...] = ()

    def validate(self):
        if not self.datasets:
            raise ConfigError("config needs at least one dataset")
        for name in self.datasets:
            if name not in DATASET_NAMES:
                raise ConfigError(f"unknown dataset {name!r}; expected one of {', '.join(DATASET_NAMES)}")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("test_fraction must be in (0, 1)")
        if self.vote not in ("soft", "hard"):
            raise ConfigError("vote must be 'soft' or 'hard'")
        if self.neighborhood_mode not in ("grid", "uniform_random"):
            raise ConfigError("neighborhood_mode must be 'grid' or 'uniform_random'")
        if self.norm_target not in ("all", "predicted"):
            raise ConfigError("norm_target must be 'all' or 'predicted'")
        for req in self.heatmaps:
            if req.dataset not in self.datasets:
                raise ConfigError(f"heatmap request for {req.dataset!r} not among configured datasets")
            if req.kind not in ("diff", "ratio", "avg"):
                raise ConfigError("heatmap kind must be diff/ratio/avg")
            if req.method not in ("dt", "rf", "axom"):
                raise ConfigError("heatmap method must be dt/rf/axom")

    def canonical_json(self) -> str:
        doc = asdict(self)
        doc["heatmaps"] = [asdict(h) for h in self.heatmaps]
        return json.dumps(doc, sort_keys=True, separators=(",", ":"), default=str)

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:12]

    @staticmethod
    def from_dict(doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        heatmaps = []
        for h in doc.pop("heatmaps", []):
            h = dict(h)
            if "axes" in h and isinstance(h["axes"], list):
                h["axes"] = tuple(h["axes"])
            if "resolution" in h and isinstance(h["resolution"], list):
                h["resolution"] = tuple(h["resolution"])
            heatmaps.append(HeatmapRequest(**h))
        doc["heatmaps"] = tuple(heatmaps)
        doc["datasets"] = tuple(doc.get("datasets", ()))
        for key in ("tree_grid", "forest_grid"):
            if key in doc and doc[key] is not None:
                doc[key] = dict(doc[key])
        try:
            return ExperimentConfig(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @staticmethod
    def from_file(path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from None
        return ExperimentConfig.from_dict(doc)

    def to_file(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.canonical_json())


def derive_seed(*parts) -> int:
    """Stable sub-stream seed from integer parts."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


@dataclass
class RunManifest:
    config_hash: str
    run_dir: str
    versions: dict = field(default_factory=dict)
    stages: dict = field(default_factory=dict)  # name -> {completed, seconds, artifacts}
    skipped_samples: dict = field(default_factory=dict)

    def stage_done(self, name: str) -> bool:
        info = self.stages.get(name)
        if not info or not info.get("completed"):
            return False
        return all(Path(self.run_dir, p).exists() for p in info.get("artifacts", []))

    def record(self, name: str, seconds: float, artifacts: list[str]):
        self.stages[name] = {"completed": True, "seconds": round(seconds, 3), "artifacts": artifacts}
        self.save()

    def save(self):
        path = Path(self.run_dir) / "manifest.json"
        doc = {
            "config_hash": self.config_hash,
            "versions": self.versions,
            "stages": self.stages,
            "skipped_samples": self.skipped_samples,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)

    @staticmethod
    def load(run_dir) -> "RunManifest":
        with open(Path(run_dir) / "manifest.json", encoding="utf-8") as fh:
            doc = json.load(fh)
        m = RunManifest(config_hash=doc["config_hash"], run_dir=str(run_dir))
        m.versions = doc.get("versions", {})
        m.stages = doc.get("stages", {})
        m.skipped_samples = doc.get("skipped_samples", {})
        return m


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(x) -> str:
    return repr(float(x))


def _dataset_seed(config: ExperimentConfig, name: str, tag: int) -> int:
    return derive_seed(config.seed, tag, DATASET_NAMES.index(name))


def _train_dataset(config: ExperimentConfig, name: str, run_dir: Path):
    ds, sp = load_dataset(name, config.data_dir, config.test_fraction, _dataset_seed(config, name, 101))
    Xtr, ytr = ds.features[sp.train_indices], ds.labels[sp.train_indices]
    Xte, yte = ds.features[sp.test_indices], ds.labels[sp.test_indices]

    params_path = run_dir / "models" / f"{name}_params.json"
    dt_path = run_dir / "models" / f"{name}_dt.json"
    rf_path = run_dir / "models" / f"{name}_rf.json"
    if params_path.exists() and dt_path.exists() and rf_path.exists():
        tree = model_from_json(dt_path.read_text())
        forest = model_from_json(rf_path.read_text())
        info = json.loads(params_path.read_text())
        return ds, sp, tree, forest, info

    dt_seed = _dataset_seed(config, name, 202)
    rf_seed = _dataset_seed(config, name, 303)
    dt_params, dt_cv = grid_search_cv(
        Xtr, ytr, ds.n_classes, config.tree_grid, model="tree", k_folds=config.cv_folds, seed=dt_seed
    )
    rf_params, rf_cv = grid_search_cv(
        Xtr, ytr, ds.n_classes, config.forest_grid, model="forest",
        k_folds=config.cv_folds, seed=rf_seed, vote=config.vote,
    )
    tree = fit_tree(Xtr, ytr, ds.n_classes, seed=dt_seed, **dt_params)
    forest = fit_forest(Xtr, ytr, ds.n_classes, seed=rf_seed, vote=config.vote, **rf_params)
    info = {
        "dataset": name,
        "n_features": ds.n_features,
        "train_size": len(ytr),
        "test_size": len(yte),
        "dt_params": dt_params,
        "rf_params": rf_params,
        "dt_cv_accuracy": dt_cv,
        "rf_cv_accuracy": rf_cv,
        "dt_test_accuracy": float((predict_label_batch(tree, Xte) == yte).mean()),
        "rf_test_accuracy": float((predict_label_batch(forest, Xte) == yte).mean()),
    }
    dt_path.write_text(model_to_json(tree))
    rf_path.write_text(model_to_json(forest))
    params_path.write_text(json.dumps(info, indent=2, sort_keys=True))
    return ds, sp, tree, forest, info


def _explanations_stage(name, ds, sp, tree, forest, run_dir):
    Xte = ds.features[sp.test_indices]
    records = []
    for sid, x in enumerate(Xte):
        records.append(("dt", sid, explain(tree, x)))
    for sid, x in enumerate(Xte):
        records.append(("rf", sid, explain(forest, x)))
    for sid, x in enumerate(Xte):
        records.append(("axom", sid, axom_explain(forest, x).as_explanation()))
    write_explanations_csv(run_dir / "explanations" / f"{name}.csv", records)


def _robustness_stage(config, name, ds, sp, tree, forest, run_dir, workers):
    spec = NeighborhoodSpec(
        epsilon=config.epsilon,
        n_points=config.n_points,
        mode=config.neighborhood_mode,
        seed=_dataset_seed(config, name, 404),
    )
    Xte = ds.features[sp.test_indices]
    report = evaluate_dataset(
        {"dt": tree, "rf": forest}, Xte, spec, norm_target=config.norm_target, workers=workers
    )
    rows = []
    for r in report.records:
        rows.append(
            [
                name,
                METHOD_SHORT[r.method],
                r.sample_id,
                _fmt(r.l_bar) if r.l_bar is not None else "",
                _fmt(r.l_max) if r.l_max is not None else "",
                r.kept,
                r.rejected,
            ]
        )
    _write_csv(
        run_dir / "robustness" / f"{name}_samples.csv",
        ["dataset", "method", "sample_id", "L_bar", "L_max", "kept", "rejected"],
        rows,
    )
    return report


def _load_robustness(name, run_dir):
    """Rebuild per-method per-sample L_bar vectors from the samples CSV."""
    values = {m: {} for m in METHOD_SHORT.values()}
    with open(run_dir / "robustness" / f"{name}_samples.csv", newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            if row["L_bar"] != "":
                values[row["method"]][int(row["sample_id"])] = float(row["L_bar"])
    out = {}
    for short in values:
        long_name = {v: k for k, v in METHOD_SHORT.items()}[short]
        out[long_name] = values[short]
    return out


def _paired_lbar(per_method, method_a, method_b):
    ids = sorted(set(per_method[method_a]) & set(per_method[method_b]))
    a = np.asarray([per_method[method_a][i] for i in ids])
    b = np.asarray([per_method[method_b][i] for i in ids])
    return a, b


def _heatmap_stage(config, req: HeatmapRequest, ds, sp, tree, forest, run_dir):
    spec = NeighborhoodSpec(epsilon=config.epsilon, n_points=config.n_points, mode=config.neighborhood_mode)
    Xte = ds.features[sp.test_indices]
    model = tree if req.method == "dt" else forest
    method = {"dt": "tree", "rf": "forest", "axom": "axom"}[req.method]
    explainer = ModelExplainer(model, method)
    sample_id = 0 if req.sample_id == "auto" else int(req.sample_id)
    x_i = Xte[sample_id]
    if req.axes == "auto":
        axes = select_axes(model, x_i, Xte, spec)
    else:
        axes = tuple(req.axes)
    if req.kind == "diff":
        grid = difference_map(explainer, x_i, axes, spec, req.resolution)
    elif req.kind == "ratio":
        grid = ratio_map(explainer, x_i, axes, spec, req.resolution)
    else:
        grid = averaged_ratio_map(explainer, Xte, axes, spec, req.resolution)
    center_id = "averaged" if req.kind == "avg" else sample_id
    stem = f"{req.dataset}_{req.kind}_{req.method}_ax{axes[0]}-{axes[1]}"
    if req.kind != "avg":
        stem += f"_s{sample_id}"
    write_heatmap_csv(
        grid, run_dir / "heatmaps" / f"{stem}.csv", dataset=req.dataset, method=req.method, center_id=center_id
    )
    render_heatmap_svg(grid, run_dir / "heatmaps" / f"{stem}.svg", title=stem)
    return stem


def run(config: ExperimentConfig, *, workers: int = 1) -> RunManifest:
    """Execute every stage for every configured dataset.

    Emits the accuracy, robustness, significance and mislabeling tables,
    per-sample explanation dumps and requested heatmaps under
    <output_dir>/<config_hash>/; returns the manifest.  Stages found
    complete in an existing manifest are reused.
    """
    config.validate()
    run_dir = Path(config.output_dir) / config.config_hash()
    for sub in ("models", "explanations", "robustness", "tables", "heatmaps"):
        (run_dir / sub).mkdir(parents=True, exist_ok=True)
    manifest_path = run_dir / "manifest.json"
    if manifest_path.exists():
        manifest = RunManifest.load(run_dir)
    else:
        manifest = RunManifest(config_hash=config.config_hash(), run_dir=str(run_dir))
    manifest.versions = {"axom": __version__, "numpy": np.__version__}
    config.to_file(run_dir / "config.json")

    accuracy_rows = []
    aggregate_rows = []
    significance_rows = []
    mislabeling_rows = []

    for name in config.datasets:
        t0 = time.time()
        ds, sp, tree, forest, info = _train_dataset(config, name, run_dir)
        if not manifest.stage_done(f"train:{name}"):
            manifest.record(
                f"train:{name}",
                time.time() - t0,
                [f"models/{name}_dt.json", f"models/{name}_rf.json", f"models/{name}_params.json"],
            )
        accuracy_rows.append(
            [
                name,
                info["n_features"],
                info["train_size"],
                info["test_size"],
                _fmt(100.0 * info["dt_test_accuracy"]),
                _fmt(100.0 * info["rf_test_accuracy"]),
            ]
        )

        stage = f"explanations:{name}"
        if not manifest.stage_done(stage):
            t0 = time.time()
            _explanations_stage(name, ds, sp, tree, forest, run_dir)
            manifest.record(stage, time.time() - t0, [f"explanations/{name}.csv"])

        stage = f"robustness:{name}"
        if not manifest.stage_done(stage):
            t0 = time.time()
            report = _robustness_stage(config, name, ds, sp, tree, forest, run_dir, workers)
            manifest.skipped_samples[name] = {
                METHOD_SHORT[m]: agg.skipped for m, agg in report.aggregates.items()
            }
            manifest.record(stage, time.time() - t0, [f"robustness/{name}_samples.csv"])
        per_method = _load_robustness(name, run_dir)

        for method in ("dt_shap", "rf_shap", "axom"):
            vals = np.asarray([per_method[method][i] for i in sorted(per_method[method])])
            mean = float(vals.mean()) if len(vals) else float("nan")
            std = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
            aggregate_rows.append(
                [name, METHOD_SHORT[method], _fmt(mean), _fmt(std), len(vals),
                 len(sp.test_indices) - len(vals)]
            )

        for method_a, method_b in COMPARISONS:
            a, b = _paired_lbar(per_method, method_a, method_b)
            label = f"{COMPARISON_LABELS[method_a]} vs {COMPARISON_LABELS[method_b]}"
            result = compare(a, b, comparison=label)
            significance_rows.append(
                [label, name, _fmt(result.p_value), _fmt(result.statistic), result.test_used,
                 result.n, result.significant_at_005]
            )

        rate = weak_mislabeling_rate(forest, ds.features[sp.test_indices])
        mislabeling_rows.append([name, _fmt(rate)])

        for req in config.heatmaps:
            if req.dataset != name:
                continue
            stage = f"heatmap:{name}:{req.kind}:{req.method}:{req.sample_id}"
            if not manifest.stage_done(stage):
                t0 = time.time()
                stem = _heatmap_stage(config, req, ds, sp, tree, forest, run_dir)
                manifest.record(stage, time.time() - t0, [f"heatmaps/{stem}.csv", f"heatmaps/{stem}.svg"])

    _write_csv(
        run_dir / "tables" / "accuracy.csv",
        ["dataset", "n_features", "train_size", "test_size", "dt_accuracy_pct", "rf_accuracy_pct"],
        accuracy_rows,
    )
    _write_csv(
        run_dir / "tables" / "robustness_aggregate.csv",
        ["dataset", "method", "mean", "std", "n", "skipped"],
        aggregate_rows,
    )
    _write_csv(
        run_dir / "tables" / "significance.csv",
        ["comparison", "dataset", "p_value", "statistic", "test_used", "n", "significant_at_005"],
        significance_rows,
    )
    _write_csv(run_dir / "tables" / "mislabeling.csv", ["dataset", "mislabeling_pct"], mislabeling_rows)
    manifest.record(
        "tables",
        0.0,
        [
            "tables/accuracy.csv",
            "tables/robustness_aggregate.csv",
            "tables/significance.csv",
            "tables/mislabeling.csv",
        ],
    )
    return manifest


def _read_table(run_dir, name):
    path = Path(run_dir) / "tables" / name
    if not path.exists():
        return None
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def report(run_dir) -> str:
    """Render report.md juxtaposing run results with the reported references.

    Missing artifacts are listed and the rest of the report is still
    produced; regeneration is idempotent.
    """
    run_dir = Path(run_dir)
    if not (run_dir / "manifest.json").exists():
        raise FileNotFoundError(f"{run_dir} has no manifest.json; run the experiment first")
    manifest = RunManifest.load(run_dir)
    if not manifest.stages:
        raise ValueError("manifest records no completed stages; nothing to report")

    missing = []
    lines = ["# Experiment report", "", f"- config hash: `{manifest.config_hash}`"]
    for key, value in sorted(manifest.versions.items()):
        lines.append(f"- {key} version: {value}")
    lines.append("")
    lines.append(
        "Reference columns show the originally reported values for the four UCI "
        "datasets; exact splits/seeds behind them are unpublished, so they are "
        "comparison anchors, not reproduction targets."
    )

    acc = _read_table(run_dir, "accuracy.csv")
    if acc is None:
        missing.append("tables/accuracy.csv")
    else:
        lines += ["", "## Accuracy", "", "| dataset | train | test | DT % | RF % | ref DT % | ref RF % |",
                  "|---|---|---|---|---|---|---|"]
        for row in acc:
            ref = REFERENCE_ACCURACY.get(row["dataset"], ("", ""))
            lines.append(
                f"| {row['dataset']} | {row['train_size']} | {row['test_size']} "
                f"| {float(row['dt_accuracy_pct']):.1f} | {float(row['rf_accuracy_pct']):.1f} "
                f"| {ref[0]} | {ref[1]} |"
            )

    agg = _read_table(run_dir, "robustness_aggregate.csv")
    if agg is None:
        missing.append("tables/robustness_aggregate.csv")
    else:
        lines += ["", "## Mean robustness (lower = more robust)", "",
                  "| dataset | method | mean | std | ref mean | ref std |", "|---|---|---|---|---|---|"]
        short_to_long = {v: k for k, v in METHOD_SHORT.items()}
        for row in agg:
            ref = REFERENCE_ROBUSTNESS.get(row["dataset"], {}).get(short_to_long.get(row["method"], ""), ("", ""))
            lines.append(
                f"| {row['dataset']} | {row['method'].upper()} | {float(row['mean']):.3f} "
                f"| {float(row['std']):.3f} | {ref[0]} | {ref[1]} |"
            )

    sig = _read_table(run_dir, "significance.csv")
    if sig is None:
        missing.append("tables/significance.csv")
    else:
        lines += ["", "## Significance (two-sided p-values)", "",
                  "| comparison | dataset | p | test | significant at 0.05 | ref p |", "|---|---|---|---|---|---|"]
        for row in sig:
            pair = tuple(row["comparison"].split(" vs "))
            ref = REFERENCE_PVALUES.get(pair, {}).get(row["dataset"], "")
            lines.append(
                f"| {row['comparison']} | {row['dataset']} | {float(row['p_value']):.4g} "
                f"| {row['test_used']} | {row['significant_at_005']} | {ref} |"
            )

    mis = _read_table(run_dir, "mislabeling.csv")
    if mis is None:
        missing.append("tables/mislabeling.csv")
    else:
        lines += ["", "## Weak-vote disagreement", "", "| dataset | % | ref % |", "|---|---|---|"]
        for row in mis:
            ref = REFERENCE_MISLABELING.get(row["dataset"], "")
            lines.append(f"| {row['dataset']} | {float(row['mislabeling_pct']):.1f} | {ref} |")

    heatmaps = sorted(p.name for p in (run_dir / "heatmaps").glob("*.svg")) if (run_dir / "heatmaps").exists() else []
    if heatmaps:
        lines += ["", "## Heatmaps", ""]
        lines += [f"- [{name}](heatmaps/{name})" for name in heatmaps]

    if manifest.skipped_samples:
        lines += ["", "## Skipped samples (empty same-label neighborhoods)", ""]
        for name, by_method in sorted(manifest.skipped_samples.items()):
            lines.append(f"- {name}: " + ", ".join(f"{m}={c}" for m, c in sorted(by_method.items())))

    if missing:
        lines += ["", "## Missing artifacts", ""]
        lines += [f"- {m}" for m in missing]

    text = "\n".join(lines) + "\n"
    (run_dir / "report.md").write_text(text, encoding="utf-8")
    return text
