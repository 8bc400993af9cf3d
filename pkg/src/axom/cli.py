"""Command-line entry point.

Verbs: run (full pipeline from a config file or flags), report (render
report.md for a finished run), explain-one (single-sample dt/rf/axom
explanation dump) and heatmap (one map as CSV + SVG).  Exit codes: 0 on
success, 1 for validation problems, 2 for runtime failures.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from axom.datasets import DATASET_NAMES, DatasetError, load_dataset
from axom.experiment import (
    DEFAULT_FOREST_GRID,
    DEFAULT_TREE_GRID,
    ConfigError,
    ExperimentConfig,
    HeatmapRequest,
    report,
    run,
)
from axom.heatmaps import (
    averaged_ratio_map,
    difference_map,
    ratio_map,
    render_heatmap_svg,
    select_axes,
    write_heatmap_csv,
)
from axom.majority import axom_explain
from axom.robustness import NeighborhoodSpec
from axom.shapley import ModelExplainer, explain, write_explanations_csv
from axom.trees import fit_forest, fit_tree


class ValidationExit(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationExit(message)


def _add_data_flags(p):
    p.add_argument("--dataset", choices=DATASET_NAMES, required=True)
    p.add_argument("--data-dir", default="data")
    p.add_argument("--test-fraction", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)


def _add_model_flags(p):
    p.add_argument("--n-estimators", type=int, default=100)
    p.add_argument("--max-depth", type=int, default=8)
    p.add_argument("--min-samples-leaf", type=int, default=1)
    p.add_argument("--max-features", default="sqrt")
    p.add_argument("--vote", choices=("soft", "hard"), default="soft")


def _add_neighborhood_flags(p):
    p.add_argument("--epsilon", type=float, default=0.01)
    p.add_argument("--n-points", type=int, default=10000)
    p.add_argument("--neighborhood", choices=("grid", "random"), default="random")
    p.add_argument("--norm-target", choices=("all-classes", "predicted-class"), default="all-classes")


def build_parser() -> _Parser:
    parser = _Parser(prog="axom", description="Tree-ensemble explanation robustness experiments")
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="run the full experiment pipeline")
    p_run.add_argument("--config", help="JSON experiment config; overrides the other flags")
    p_run.add_argument("--dataset", action="append", choices=DATASET_NAMES, dest="datasets")
    p_run.add_argument("--data-dir", default="data")
    p_run.add_argument("--output-dir", default="runs")
    p_run.add_argument("--test-fraction", type=float, default=0.1)
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--cv-folds", type=int, default=5)
    p_run.add_argument("--vote", choices=("soft", "hard"), default="soft")
    p_run.add_argument("--n-estimators", type=int, help="skip the grid: fix the forest size")
    p_run.add_argument("--max-depth", type=int, help="skip the grid: fix the depth (-1 = unlimited)")
    p_run.add_argument("--min-samples-leaf", type=int, help="skip the grid: fix the leaf size")
    p_run.add_argument("--max-features", help="skip the grid: sqrt/all/<int>")
    p_run.add_argument("--epsilon", type=float, default=0.01)
    p_run.add_argument("--n-points", type=int, default=10000)
    p_run.add_argument("--neighborhood", choices=("grid", "random"), default="random")
    p_run.add_argument("--norm-target", choices=("all-classes", "predicted-class"), default="all-classes")
    p_run.add_argument("--workers", type=int, default=1)
    p_run.add_argument("--report", action="store_true", help="render report.md after the run")

    p_report = sub.add_parser("report", help="render report.md for a finished run")
    p_report.add_argument("--run-dir", required=True)

    p_one = sub.add_parser("explain-one", help="dt/rf/axom explanations for one test sample")
    _add_data_flags(p_one)
    _add_model_flags(p_one)
    p_one.add_argument("--sample-id", type=int, default=0)
    p_one.add_argument("--out", help="CSV path (default: print a summary)")

    p_heat = sub.add_parser("heatmap", help="difference/ratio/averaged heatmap as CSV + SVG")
    _add_data_flags(p_heat)
    _add_model_flags(p_heat)
    _add_neighborhood_flags(p_heat)
    p_heat.add_argument("--heatmap", choices=("diff", "ratio", "avg"), default="ratio")
    p_heat.add_argument("--method", choices=("dt", "rf", "axom"), default="rf")
    p_heat.add_argument("--axes", help="comma pair i,j (default: automatic selection)")
    p_heat.add_argument("--sample-id", type=int, default=0)
    p_heat.add_argument("--resolution", type=int, default=100)
    p_heat.add_argument("--out", default="heatmap", help="output path stem")
    return parser


def _grid_overrides(args):
    tree_grid = dict(DEFAULT_TREE_GRID)
    forest_grid = dict(DEFAULT_FOREST_GRID)
    if args.n_estimators is not None:
        forest_grid["n_estimators"] = [args.n_estimators]
    if args.max_depth is not None:
        depth = None if args.max_depth < 0 else args.max_depth
        tree_grid["max_depth"] = [depth]
        forest_grid["max_depth"] = [depth]
    if args.min_samples_leaf is not None:
        tree_grid["min_samples_leaf"] = [args.min_samples_leaf]
        forest_grid["min_samples_leaf"] = [args.min_samples_leaf]
    if args.max_features is not None:
        forest_grid["max_features"] = [args.max_features]
    return tree_grid, forest_grid


def _cmd_run(args) -> int:
    if args.config:
        config = ExperimentConfig.from_file(args.config)
    else:
        if not args.datasets:
            raise ValidationExit("run needs --config or at least one --dataset")
        tree_grid, forest_grid = _grid_overrides(args)
        config = ExperimentConfig(
            datasets=tuple(args.datasets),
            data_dir=args.data_dir,
            output_dir=args.output_dir,
            test_fraction=args.test_fraction,
            seed=args.seed,
            cv_folds=args.cv_folds,
            vote=args.vote,
            tree_grid=tree_grid,
            forest_grid=forest_grid,
            epsilon=args.epsilon,
            n_points=args.n_points,
            neighborhood_mode="grid" if args.neighborhood == "grid" else "uniform_random",
            norm_target="predicted" if args.norm_target == "predicted-class" else "all",
        )
    config.validate()
    for name in config.datasets:
        if not (Path(config.data_dir) / f"{name}.csv").exists():
            raise ValidationExit(f"missing dataset file {Path(config.data_dir) / (name + '.csv')}")
    manifest = run(config, workers=args.workers)
    print(f"run complete: {manifest.run_dir}")
    if args.report:
        report(manifest.run_dir)
        print(f"report: {Path(manifest.run_dir) / 'report.md'}")
    return 0


def _train_quick(args):
    ds, sp = load_dataset(args.dataset, args.data_dir, args.test_fraction, args.seed)
    Xtr, ytr = ds.features[sp.train_indices], ds.labels[sp.train_indices]
    depth = None if args.max_depth is not None and args.max_depth < 0 else args.max_depth
    tree = fit_tree(Xtr, ytr, ds.n_classes, max_depth=depth, min_samples_leaf=args.min_samples_leaf, seed=args.seed)
    forest = fit_forest(
        Xtr,
        ytr,
        ds.n_classes,
        n_estimators=args.n_estimators,
        max_depth=depth,
        min_samples_leaf=args.min_samples_leaf,
        max_features=args.max_features,
        seed=args.seed,
        vote=args.vote,
    )
    return ds, sp, tree, forest


def _cmd_explain_one(args) -> int:
    ds, sp, tree, forest = _train_quick(args)
    Xte = ds.features[sp.test_indices]
    if not 0 <= args.sample_id < len(Xte):
        raise ValidationExit(f"--sample-id must be in [0, {len(Xte) - 1}]")
    x = Xte[args.sample_id]
    axom_result = axom_explain(forest, x)
    records = [
        ("dt", args.sample_id, explain(tree, x)),
        ("rf", args.sample_id, explain(forest, x)),
        ("axom", args.sample_id, axom_result.as_explanation()),
    ]
    if args.out:
        write_explanations_csv(args.out, records)
        print(f"wrote {args.out}")
    else:
        print(f"sample {args.sample_id} of {args.dataset} "
              f"(contributing trees: {len(axom_result.contributing_trees)}, "
              f"discarded: {axom_result.n_discarded})")
        for method, _, expl in records:
            print(f"[{method}] base={np.round(expl.base_values, 4).tolist()}")
            for k in range(ds.n_classes):
                row = ", ".join(f"{v:+.4f}" for v in expl.values[k])
                print(f"  class {k}: {row}")
    return 0


def _cmd_heatmap(args) -> int:
    ds, sp, tree, forest = _train_quick(args)
    Xte = ds.features[sp.test_indices]
    if not 0 <= args.sample_id < len(Xte):
        raise ValidationExit(f"--sample-id must be in [0, {len(Xte) - 1}]")
    model = tree if args.method == "dt" else forest
    method = {"dt": "tree", "rf": "forest", "axom": "axom"}[args.method]
    spec = NeighborhoodSpec(
        epsilon=args.epsilon,
        n_points=args.n_points,
        mode="grid" if args.neighborhood == "grid" else "uniform_random",
        seed=args.seed,
    )
    x_i = Xte[args.sample_id]
    if args.axes:
        try:
            ax, ay = (int(v) for v in args.axes.split(","))
        except ValueError:
            raise ValidationExit("--axes expects a comma pair like 0,3") from None
        if not (0 <= ax < ds.n_features and 0 <= ay < ds.n_features) or ax == ay:
            raise ValidationExit("--axes indices out of range or equal")
        axes = (ax, ay)
    else:
        axes = select_axes(model, x_i, Xte, spec)
    explainer = ModelExplainer(model, method)
    resolution = (args.resolution, args.resolution)
    if args.heatmap == "diff":
        grid = difference_map(explainer, x_i, axes, spec, resolution)
    elif args.heatmap == "ratio":
        grid = ratio_map(explainer, x_i, axes, spec, resolution)
    else:
        grid = averaged_ratio_map(explainer, Xte, axes, spec, resolution)
    csv_path = f"{args.out}.csv"
    svg_path = f"{args.out}.svg"
    write_heatmap_csv(
        grid, csv_path, dataset=args.dataset, method=args.method,
        center_id="averaged" if args.heatmap == "avg" else args.sample_id,
    )
    render_heatmap_svg(grid, svg_path, title=f"{args.dataset} {args.heatmap} {args.method}")
    print(f"wrote {csv_path} and {svg_path} (axes {axes[0]},{axes[1]})")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ValidationExit as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        if args.verb == "run":
            return _cmd_run(args)
        if args.verb == "report":
            report(args.run_dir)
            print(f"report: {Path(args.run_dir) / 'report.md'}")
            return 0
        if args.verb == "explain-one":
            return _cmd_explain_one(args)
        if args.verb == "heatmap":
            return _cmd_heatmap(args)
        raise ValidationExit(f"unknown verb {args.verb!r}")
    except (ValidationExit, ConfigError, DatasetError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
