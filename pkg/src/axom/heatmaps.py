"""Explanation-difference and incremental-ratio heatmaps on a 2-D lattice.

Each map fixes two feature axes, sweeps a (rows x cols) lattice over the
epsilon box around a center, and records either the explanation difference
norm or its ratio to the input distance.  Unlike the robustness metrics,
heatmaps apply no same-label filter: they exist to visualize boundaries,
including label-change zones.  The averaged map overlays the per-center
ratio maps of a whole test set at the same lattice offsets.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from axom.robustness import NeighborhoodSpec, _flat_explanations
from axom.shapley import ModelExplainer
from axom.trees import predict_label, predict_label_batch

DEFAULT_RESOLUTION = (100, 100)


@dataclass(frozen=True, eq=False)
class HeatmapGrid:
    """values[i, j] is the cell at y-offset index i, x-offset index j.

    Offsets span [-epsilon, +epsilon] inclusive per axis; an odd axis length
    is shifted half a cell so the exact center never sits on the lattice.
    center is None for averaged maps, which are centered at the origin.
    """

    axis_x: int
    axis_y: int
    resolution: tuple[int, int]
    values: np.ndarray
    epsilon: float
    kind: str  # difference | ratio | averaged_ratio
    center: np.ndarray | None = None


def embed_point(x_i, x_m, axis_x: int, axis_y: int) -> np.ndarray:
    """Copy of x_i with coordinates (axis_x, axis_y) replaced by the lattice point."""
    x_i = np.asarray(x_i, dtype=np.float64)
    p = len(x_i)
    if axis_x == axis_y:
        raise ValueError("axis_x and axis_y must differ")
    if not (0 <= axis_x < p and 0 <= axis_y < p):
        raise ValueError("axis index out of range")
    out = x_i.copy()
    out[axis_x] = x_m[0]
    out[axis_y] = x_m[1]
    return out


def _axis_offsets(epsilon: float, k: int) -> np.ndarray:
    if k < 2:
        raise ValueError("heatmap resolution must be >= 2 per axis")
    offsets = np.linspace(-epsilon, epsilon, k)
    if k % 2 == 1:
        offsets = offsets + epsilon / (k - 1)  # half a cell; drops the exact center
    return offsets


def _lattice(x_i, axis_x, axis_y, epsilon, resolution):
    rows, cols = resolution
    off_y = _axis_offsets(epsilon, rows)
    off_x = _axis_offsets(epsilon, cols)
    pts = np.tile(np.asarray(x_i, dtype=np.float64), (rows * cols, 1))
    grid_y, grid_x = np.meshgrid(off_y, off_x, indexing="ij")
    pts[:, axis_y] += grid_y.ravel()
    pts[:, axis_x] += grid_x.ravel()
    dist = np.hypot(grid_x.ravel(), grid_y.ravel())
    return pts, dist


def difference_map(
    explain_fn, x_i, axes: tuple[int, int], spec: NeighborhoodSpec, resolution=DEFAULT_RESOLUTION
) -> HeatmapGrid:
    """||g(x_i) - g(x_j(x_m))|| per lattice cell; no label filtering."""
    axis_x, axis_y = axes
    x_i = np.asarray(x_i, dtype=np.float64)
    pts, _ = _lattice(x_i, axis_x, axis_y, spec.epsilon, resolution)
    g_center = np.asarray(explain_fn(x_i), dtype=np.float64).ravel()
    g_pts = _flat_explanations(explain_fn, pts)
    values = np.linalg.norm(g_pts - g_center, axis=1).reshape(resolution)
    return HeatmapGrid(
        axis_x=axis_x,
        axis_y=axis_y,
        resolution=tuple(resolution),
        values=values,
        epsilon=spec.epsilon,
        kind="difference",
        center=x_i.copy(),
    )


def ratio_map(
    explain_fn, x_i, axes: tuple[int, int], spec: NeighborhoodSpec, resolution=DEFAULT_RESOLUTION
) -> HeatmapGrid:
    """Difference map divided elementwise by the input distance field."""
    axis_x, axis_y = axes
    x_i = np.asarray(x_i, dtype=np.float64)
    pts, dist = _lattice(x_i, axis_x, axis_y, spec.epsilon, resolution)
    g_center = np.asarray(explain_fn(x_i), dtype=np.float64).ravel()
    g_pts = _flat_explanations(explain_fn, pts)
    values = (np.linalg.norm(g_pts - g_center, axis=1) / dist).reshape(resolution)
    return HeatmapGrid(
        axis_x=axis_x,
        axis_y=axis_y,
        resolution=tuple(resolution),
        values=values,
        epsilon=spec.epsilon,
        kind="ratio",
        center=x_i.copy(),
    )


def averaged_ratio_map(
    explain_fn, test_X, axes: tuple[int, int], spec: NeighborhoodSpec, resolution=DEFAULT_RESOLUTION
) -> HeatmapGrid:
    """Mean of the per-center ratio maps at the same lattice offsets."""
    test_X = np.asarray(test_X, dtype=np.float64)
    if len(test_X) == 0:
        raise ValueError("averaged map needs a non-empty test set")
    acc = np.zeros(tuple(resolution), dtype=np.float64)
    for x_i in test_X:
        acc += ratio_map(explain_fn, x_i, axes, spec, resolution).values
    acc /= len(test_X)
    return HeatmapGrid(
        axis_x=axes[0],
        axis_y=axes[1],
        resolution=tuple(resolution),
        values=acc,
        epsilon=spec.epsilon,
        kind="averaged_ratio",
        center=None,
    )


def select_axes(
    model,
    x_i,
    test_X,
    spec: NeighborhoodSpec,
    *,
    explainer: ModelExplainer | None = None,
    sweep_cells: int = 100,
    top_k: int = 4,
) -> tuple[int, int]:
    """Pick two display axes by attribution significance and label stability.

    Features are ranked by total mean |phi| over the test set; among the
    top_k candidates the two whose single-axis sweeps at x_i flip the
    predicted label for the fewest cells win (mass and index break ties, so
    a zero-mass dummy never beats an equally stable split feature).
    """
    x_i = np.asarray(x_i, dtype=np.float64)
    p = len(x_i)
    if p < 2:
        raise ValueError("axis selection needs at least 2 features")
    if p == 2:
        return (0, 1)
    if explainer is None:
        from axom.trees import TreeModel

        explainer = ModelExplainer(model, "tree" if isinstance(model, TreeModel) else "forest")
    flat = explainer.explain_many(np.asarray(test_X, dtype=np.float64))
    mass = np.abs(flat).mean(axis=0).reshape(model.n_classes, p).sum(axis=0)

    candidates = sorted(range(p), key=lambda f: (-mass[f], f))[: max(2, top_k)]
    center_label = predict_label(model, x_i)
    scored = []
    for f in candidates:
        sweep_pts = np.tile(x_i, (sweep_cells, 1))
        sweep_pts[:, f] += _axis_offsets(spec.epsilon, sweep_cells)
        flips = int((predict_label_batch(model, sweep_pts) != center_label).sum())
        scored.append((flips, -mass[f], f))
    scored.sort()
    chosen = sorted([scored[0][2], scored[1][2]])
    return (chosen[0], chosen[1])


def write_heatmap_csv(grid: HeatmapGrid, path, *, dataset: str = "", method: str = "", center_id="") -> None:
    """Metadata header line, then row-major values (one CSV line per grid row)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "dataset", dataset,
                "method", method,
                "center", center_id if grid.center is not None else "averaged",
                "axis_x", grid.axis_x,
                "axis_y", grid.axis_y,
                "epsilon", repr(grid.epsilon),
                "kind", grid.kind,
                "rows", grid.resolution[0],
                "cols", grid.resolution[1],
            ]
        )
        for row in grid.values:
            writer.writerow([repr(float(v)) for v in row])


def read_heatmap_csv(path) -> tuple[dict, np.ndarray]:
    """Inverse of write_heatmap_csv; returns (metadata, values)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    meta_row = rows[0]
    meta = {meta_row[i]: meta_row[i + 1] for i in range(0, len(meta_row), 2)}
    values = np.asarray([[float(v) for v in row] for row in rows[1:]])
    return meta, values


_COLOR_STOPS = ((13, 8, 135), (177, 42, 144), (240, 249, 33))


def _color(t: float) -> str:
    t = min(max(t, 0.0), 1.0)
    if t <= 0.5:
        a, b, u = _COLOR_STOPS[0], _COLOR_STOPS[1], t * 2
    else:
        a, b, u = _COLOR_STOPS[1], _COLOR_STOPS[2], (t - 0.5) * 2
    rgb = tuple(round(pa + (pb - pa) * u) for pa, pb in zip(a, b))
    return "#%02x%02x%02x" % rgb


def render_heatmap_svg(grid: HeatmapGrid, path, *, cell: int = 4, title: str = "") -> None:
    """Deterministic SVG rendering with a linear color scale and min/max legend."""
    rows, cols = grid.resolution
    vmin = float(grid.values.min())
    vmax = float(grid.values.max())
    span = vmax - vmin
    width = cols * cell
    height = rows * cell
    legend_h = 40
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height + legend_h}" '
        f'viewBox="0 0 {width} {height + legend_h}">'
    ]
    if title:
        parts.append(f'<title>{title}</title>')
    for i in range(rows):
        for j in range(cols):
            v = float(grid.values[i, j])
            t = 0.0 if span == 0 else (v - vmin) / span
            parts.append(
                f'<rect x="{j * cell}" y="{(rows - 1 - i) * cell}" width="{cell}" height="{cell}" '
                f'fill="{_color(t)}"/>'
            )
    # legend: gradient bar with min/max annotations
    steps = 60
    bar_w = width / steps
    for s in range(steps):
        parts.append(
            f'<rect x="{s * bar_w:.2f}" y="{height + 8}" width="{bar_w + 0.5:.2f}" height="10" '
            f'fill="{_color(s / (steps - 1))}"/>'
        )
    parts.append(
        f'<text x="0" y="{height + 32}" font-size="10" font-family="monospace">min={vmin:.6g}</text>'
    )
    parts.append(
        f'<text x="{width}" y="{height + 32}" font-size="10" font-family="monospace" '
        f'text-anchor="end">max={vmax:.6g}</text>'
    )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts))
