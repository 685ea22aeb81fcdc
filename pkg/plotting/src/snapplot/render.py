"""Figure rendering over experiment CSV files.

Four figure kinds, one per experiment layout:

``rmse``     estimator RMSE versus the swept value, bounds overlaid dashed
``cdf``      empirical distribution of per-trial bound values, one curve
             per variant
``sweep``    aggregate bound means versus the swept parameter
``contour``  bound level map over a two-coordinate grid; cells whose bound
             is infinite are drawn as a hatched region instead of a color

Rendering never writes to the CSVs it reads, and rendering the same spec
twice produces the same image.  Values arrive in the scale recorded per
row: rows tagged ``linear`` are converted to decibels here when the
figure calls for a dB axis, rows already tagged ``db`` pass through.
"""

from __future__ import annotations

import csv
import math
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import Patch, Rectangle

from .spec import PlotSpec, SpecError

# columns each figure kind actually reads; presence is checked against the
# CSV header before any row is interpreted
REQUIRED_COLUMNS = {
    "rmse": ("sweep", "sweep_value", "trial", "metric", "value"),
    "cdf": ("variant", "trial", "metric", "value"),
    "sweep": ("sweep", "sweep_value", "trial", "metric", "value"),
    "contour": ("coord1", "coord2", "metric", "value", "scale"),
}


def read_rows(paths, required) -> list[dict]:
    """Read CSV rows as dicts, verifying the required columns exist."""
    rows = []
    for path in paths:
        try:
            with open(path, newline="", encoding="utf-8") as handle:
                reader = csv.DictReader(handle)
                header = reader.fieldnames or []
                missing = [name for name in required if name not in header]
                if missing:
                    raise SpecError(
                        f"{path} is missing required columns: {', '.join(missing)} "
                        f"(found: {', '.join(header) or 'no header'})"
                    )
                rows.extend(reader)
        except OSError as exc:
            raise SpecError(f"cannot read CSV {path}: {exc}") from exc
    return rows


def _value(row) -> float:
    try:
        return float(row["value"])
    except ValueError as exc:
        raise SpecError(f"unparseable value {row['value']!r}") from exc


def _aggregate_series(rows, metric):
    """(x, y) arrays for summary rows (no trial index) of one metric."""
    points = [
        (float(row["sweep_value"]), _value(row))
        for row in rows
        if row["metric"] == metric and not row["trial"]
    ]
    points.sort()
    xs = np.array([p[0] for p in points])
    ys = np.array([p[1] for p in points])
    return xs, ys


def _available(rows, key) -> str:
    names = sorted({row[key] for row in rows if row[key]})
    return ", ".join(names) or "none"


def _draw_series(ax, rows, spec: PlotSpec):
    drew = False
    for metric in spec.metrics:
        xs, ys = _aggregate_series(rows, metric)
        if xs.size == 0:
            raise SpecError(
                f"metric {metric!r} has no summary rows; available metrics: "
                f"{_available(rows, 'metric')}"
            )
        ax.plot(xs, ys, marker="o", label=metric)
        drew = True
    for metric in spec.bounds:
        xs, ys = _aggregate_series(rows, metric)
        if xs.size == 0:
            raise SpecError(
                f"bound {metric!r} has no summary rows; available metrics: "
                f"{_available(rows, 'metric')}"
            )
        ax.plot(xs, ys, linestyle="--", color="black", label=metric)
        drew = True
    if not drew:
        raise SpecError("spec selects no metrics to draw")
    ax.legend()


def _sweep_label(rows) -> str:
    labels = sorted({row["sweep"] for row in rows if row["sweep"]})
    return labels[0] if len(labels) == 1 else ""


def empirical_cdf(samples):
    """Empirical CDF support points and levels.

    Infinite samples count toward the total but contribute no support
    point, so the curve tops out below one when any sample is infinite.
    """
    values = np.asarray(samples, dtype=float)
    if values.size == 0:
        raise SpecError("no samples to build a distribution from")
    finite = np.sort(values[np.isfinite(values)])
    levels = np.arange(1, finite.size + 1) / values.size
    return finite, levels


def _draw_cdf(ax, rows, spec: PlotSpec):
    selected = [row for row in rows if row["metric"] == spec.metric and row["trial"]]
    if not selected:
        raise SpecError(
            f"metric {spec.metric!r} has no per-trial rows; available metrics: "
            f"{_available(rows, 'metric')}"
        )
    present = sorted({row["variant"] for row in selected})
    variants = spec.variants or present
    for variant in variants:
        samples = [_value(row) for row in selected if row["variant"] == variant]
        if not samples:
            raise SpecError(
                f"variant {variant!r} has no rows for metric {spec.metric!r}; "
                f"available variants: {', '.join(present)}"
            )
        xs, ys = empirical_cdf(samples)
        if xs.size == 0:
            continue  # every sample infinite: nothing finite to place on the axis
        ax.step(xs, ys, where="post", label=variant or "all")
    ax.set_ylim(0.0, 1.05)
    if ax.get_lines():
        ax.legend()


def contour_grid(rows, metric):
    """Pivot contour rows for one metric into a dense (xs, ys, grid) in dB.

    Rows tagged ``db`` are taken as-is; rows tagged ``linear`` are
    converted with 10 log10.  Infinite values survive as ``inf`` so the
    caller can mark those cells.
    """
    selected = [row for row in rows if row["metric"] == metric]
    if not selected:
        raise SpecError(
            f"metric {metric!r} not present; available metrics: "
            f"{_available(rows, 'metric')}"
        )
    xs = sorted({float(row["coord1"]) for row in selected})
    ys = sorted({float(row["coord2"]) for row in selected})
    x_index = {x: i for i, x in enumerate(xs)}
    y_index = {y: j for j, y in enumerate(ys)}
    grid = np.full((len(xs), len(ys)), np.nan)
    for row in selected:
        i = x_index[float(row["coord1"])]
        j = y_index[float(row["coord2"])]
        if not math.isnan(grid[i, j]):
            raise SpecError(
                f"duplicate contour cell at ({row['coord1']}, {row['coord2']})"
            )
        value = _value(row)
        scale = row["scale"]
        if scale == "db":
            grid[i, j] = value
        elif scale in ("", "linear"):
            if math.isinf(value):
                grid[i, j] = value
            elif value > 0.0:
                grid[i, j] = 10.0 * math.log10(value)
            else:
                raise SpecError(
                    f"cannot express nonpositive value {value!r} in dB "
                    f"at cell ({row['coord1']}, {row['coord2']})"
                )
        else:
            raise SpecError(f"unknown scale tag {scale!r}")
    if np.isnan(grid).any():
        raise SpecError("contour grid is incomplete: some cells have no row")
    return np.array(xs), np.array(ys), grid


def _edges(centers):
    centers = np.asarray(centers, dtype=float)
    if centers.size == 1:
        return np.array([centers[0] - 0.5, centers[0] + 0.5])
    mids = 0.5 * (centers[:-1] + centers[1:])
    first = centers[0] - (mids[0] - centers[0])
    last = centers[-1] + (centers[-1] - mids[-1])
    return np.concatenate([[first], mids, [last]])


def _draw_contour(ax, fig, rows, spec: PlotSpec):
    xs, ys, grid = contour_grid(rows, spec.metric)
    x_edges = _edges(xs)
    y_edges = _edges(ys)
    finite = np.ma.masked_invalid(grid)
    mesh = ax.pcolormesh(x_edges, y_edges, finite.T, shading="flat")
    fig.colorbar(mesh, ax=ax, label=spec.metric)
    unbounded = 0
    for i in range(len(xs)):
        for j in range(len(ys)):
            if np.isinf(grid[i, j]):
                ax.add_patch(
                    Rectangle(
                        (x_edges[i], y_edges[j]),
                        x_edges[i + 1] - x_edges[i],
                        y_edges[j + 1] - y_edges[j],
                        facecolor="white",
                        edgecolor="0.4",
                        hatch="////",
                        linewidth=0.0,
                    )
                )
                unbounded += 1
    if unbounded:
        proxy = Patch(facecolor="white", edgecolor="0.4", hatch="////",
                      label="no finite bound")
        ax.legend(handles=[proxy], loc="upper right")


def build_figure(spec: PlotSpec):
    """Assemble the matplotlib figure for a spec without writing it."""
    rows = read_rows(spec.inputs, REQUIRED_COLUMNS[spec.kind])
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    try:
        if spec.kind in ("rmse", "sweep"):
            _draw_series(ax, rows, spec)
            ax.set_xlabel(spec.x_label or _sweep_label(rows))
            ax.set_ylabel(spec.y_label or "value")
        elif spec.kind == "cdf":
            _draw_cdf(ax, rows, spec)
            ax.set_xlabel(spec.x_label or spec.metric)
            ax.set_ylabel(spec.y_label or "empirical probability")
        else:
            _draw_contour(ax, fig, rows, spec)
            ax.set_xlabel(spec.x_label or "coord1")
            ax.set_ylabel(spec.y_label or "coord2")
        if spec.kind != "contour":
            ax.set_xscale(spec.x_scale)
            ax.set_yscale(spec.y_scale)
            ax.grid(True, which="both", alpha=0.3)
        if spec.title:
            ax.set_title(spec.title)
        fig.tight_layout()
    except Exception:
        plt.close(fig)
        raise
    return fig


def render(spec: PlotSpec) -> str:
    """Render the figure described by the spec and write the image file."""
    fig = build_figure(spec)
    try:
        parent = os.path.dirname(spec.output)
        if parent:
            os.makedirs(parent, exist_ok=True)
        fig.savefig(spec.output, dpi=150)
    finally:
        plt.close(fig)
    return spec.output
