"""Static SVG reports: embedding scatters, light curves, map heatmaps,
and the k-distance curve used to pick a DBSCAN radius.

SVG output is plain deterministic text: identical inputs give identical
bytes. Continuous values run through a small viridis-style gradient;
discrete values through a fixed 10-color palette.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .embed import Embedding2D, LatentMatrix
from .errors import EmptyEmbedding
from .ingest import EventSeries
from .tensorize import MapTensor

# viridis anchor points (position, rgb)
_VIRIDIS = [
    (0.0, (68, 1, 84)),
    (0.25, (59, 82, 139)),
    (0.5, (33, 145, 140)),
    (0.75, (94, 201, 98)),
    (1.0, (253, 231, 37)),
]

_PALETTE = [
    "#4c78a8", "#f58518", "#e45756", "#72b7b2", "#54a24b",
    "#eeca3b", "#b279a2", "#ff9da6", "#9d755d", "#bab0ac",
]


def continuous_color(value: float, lo: float, hi: float) -> str:
    """Map value in [lo, hi] onto the viridis-style gradient."""
    if not math.isfinite(value):
        return "#999999"
    t = 0.0 if hi <= lo else (value - lo) / (hi - lo)
    t = min(max(t, 0.0), 1.0)
    for (p0, c0), (p1, c1) in zip(_VIRIDIS, _VIRIDIS[1:]):
        if t <= p1:
            f = (t - p0) / (p1 - p0)
            rgb = tuple(round(a + f * (b - a)) for a, b in zip(c0, c1))
            return "#{:02x}{:02x}{:02x}".format(*rgb)
    return "#{:02x}{:02x}{:02x}".format(*_VIRIDIS[-1][1])


def discrete_color(index: int) -> str:
    return _PALETTE[index % len(_PALETTE)]


def _fmt(v: float) -> str:
    return f"{v:.3f}"


def _svg_document(width: int, height: int, body: list[str]) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">'
    )
    return "\n".join([head, *body, "</svg>"]) + "\n"


def _scale(values: np.ndarray, out_lo: float, out_hi: float) -> np.ndarray:
    lo, hi = float(values.min()), float(values.max())
    if hi <= lo:
        return np.full_like(values, (out_lo + out_hi) / 2.0)
    return out_lo + (values - lo) / (hi - lo) * (out_hi - out_lo)


def render_scatter_svg(
    embedding: Embedding2D,
    color_by: str,
    labels: dict[str, list],
    path: str | Path,
    title: str = "",
) -> None:
    """One circle marker per embedded point, colored by a label column.

    ``labels`` maps column names to per-point values aligned with the
    embedding; raises ``KeyError`` for a missing column (the CLI reports
    that as a usage error).
    """
    n = len(embedding.ids)
    if n == 0:
        raise EmptyEmbedding("nothing to plot")
    if color_by not in labels:
        raise KeyError(f"no label column {color_by!r}")
    values = labels[color_by]
    if len(values) != n:
        raise ValueError(f"column {color_by!r} has {len(values)} values for {n} points")

    width, height, margin = 640, 480, 40
    xs = _scale(embedding.points[:, 0], margin, width - margin - 120)
    ys = _scale(embedding.points[:, 1], height - margin, margin)  # y grows upward

    numeric = all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in values)
    # strings and whole numbers read as categories; fractional values as a gradient
    discrete = (not numeric) or all(float(v).is_integer() for v in values)

    body = ['<rect width="100%" height="100%" fill="white"/>']
    if title:
        body.append(f'<text x="{margin}" y="24" font-size="14" font-family="sans-serif">{title}</text>')

    legend_x = width - 110
    if discrete:
        keys = sorted(set(values), key=lambda v: (str(type(v)), v))
        color_of = {k: discrete_color(i) for i, k in enumerate(keys)}
        for i in range(n):
            body.append(
                f'<circle class="marker" cx="{_fmt(xs[i])}" cy="{_fmt(ys[i])}" r="3" '
                f'fill="{color_of[values[i]]}" fill-opacity="0.8"/>'
            )
        for j, k in enumerate(keys):
            y = margin + 16 * j
            body.append(f'<rect x="{legend_x}" y="{y}" width="10" height="10" fill="{color_of[k]}"/>')
            body.append(
                f'<text x="{legend_x + 14}" y="{y + 9}" font-size="11" font-family="sans-serif">{k}</text>'
            )
    else:
        arr = np.array([float(v) for v in values])
        lo, hi = float(arr.min()), float(arr.max())
        for i in range(n):
            body.append(
                f'<circle class="marker" cx="{_fmt(xs[i])}" cy="{_fmt(ys[i])}" r="3" '
                f'fill="{continuous_color(arr[i], lo, hi)}" fill-opacity="0.8"/>'
            )
        steps = 24
        for j in range(steps):
            y = margin + j * 6
            v = hi - (hi - lo) * j / (steps - 1)
            body.append(
                f'<rect x="{legend_x}" y="{y}" width="10" height="6" fill="{continuous_color(v, lo, hi)}"/>'
            )
        body.append(
            f'<text x="{legend_x + 14}" y="{margin + 9}" font-size="11" font-family="sans-serif">{hi:.3g}</text>'
        )
        body.append(
            f'<text x="{legend_x + 14}" y="{margin + steps * 6}" font-size="11" '
            f'font-family="sans-serif">{lo:.3g}</text>'
        )
    Path(path).write_text(_svg_document(width, height, body), encoding="utf-8")


def light_curve_counts(series: EventSeries, bin_seconds: float) -> np.ndarray:
    """Event counts per fixed-width time bin covering [t_1, t_N]."""
    if bin_seconds <= 0:
        raise ValueError("bin_seconds must be > 0")
    duration = series.duration
    n_bins = max(1, math.ceil(duration / bin_seconds)) if duration > 0 else 1
    idx = np.minimum(((series.t - series.t[0]) / bin_seconds).astype(np.int64), n_bins - 1)
    return np.bincount(idx, minlength=n_bins).astype(np.int64)


def render_series_svg(
    series: EventSeries,
    bin_seconds: float,
    map_tensor: MapTensor | None = None,
    path: str | Path = "series.svg",
) -> None:
    """Binned light curve panel, plus a map heatmap panel when given."""
    counts = light_curve_counts(series, bin_seconds)
    width, panel_h, margin = 640, 220, 40
    height = panel_h + (panel_h if map_tensor is not None else 0) + margin

    body = ['<rect width="100%" height="100%" fill="white"/>']
    body.append(
        f'<text x="{margin}" y="20" font-size="12" font-family="sans-serif">'
        f"{series.series_id}: {series.n_events} events, {bin_seconds:g}s bins</text>"
    )
    plot_w = width - 2 * margin
    plot_h = panel_h - 2 * margin
    peak = max(int(counts.max()), 1)
    n_bins = len(counts)
    pts = []
    for i, c in enumerate(counts):
        x0 = margin + plot_w * i / n_bins
        x1 = margin + plot_w * (i + 1) / n_bins
        y = margin + plot_h * (1.0 - c / peak)
        pts.append(f"{_fmt(x0)},{_fmt(y)} {_fmt(x1)},{_fmt(y)}")
    body.append(
        f'<polyline points="{" ".join(pts)}" fill="none" stroke="#4c78a8" stroke-width="1.5"/>'
    )
    body.append(
        f'<line x1="{margin}" y1="{margin + plot_h}" x2="{margin + plot_w}" '
        f'y2="{margin + plot_h}" stroke="black"/>'
    )

    if map_tensor is not None:
        top = panel_h + 10
        n_tau, n_eps = map_tensor.dims
        vmax = float(map_tensor.values.max()) or 1.0
        cell_w = plot_w / n_tau
        cell_h = (panel_h - margin) / n_eps
        for i in range(n_tau):
            for j in range(n_eps):
                v = float(map_tensor.values[i, j])
                color = continuous_color(v, 0.0, vmax)
                x0 = margin + i * cell_w
                y0 = top + (n_eps - 1 - j) * cell_h
                body.append(
                    f'<rect x="{_fmt(x0)}" y="{_fmt(y0)}" width="{_fmt(cell_w)}" '
                    f'height="{_fmt(cell_h)}" fill="{color}"/>'
                )
    Path(path).write_text(_svg_document(width, height, body), encoding="utf-8")


def k_distance_curve(latents, k: int) -> np.ndarray:
    """Distance to the k-th nearest other row, sorted descending.

    The classic way to eyeball a DBSCAN eps: look for the knee.
    """
    rows = latents.rows if isinstance(latents, LatentMatrix) else np.asarray(latents, dtype=np.float64)
    n = rows.shape[0]
    if not 1 <= k <= n - 1:
        raise ValueError(f"k={k} outside [1, {n - 1}]")
    sq = np.einsum("ij,ij->i", rows, rows)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (rows @ rows.T)
    np.fill_diagonal(d2, np.inf)
    kth = np.partition(np.sqrt(np.maximum(d2, 0.0)), k - 1, axis=1)[:, k - 1]
    return np.sort(kth)[::-1]


def suggest_eps(latents, min_pts: int, quantile: float = 0.90) -> float:
    """DBSCAN radius from the k-distance curve: the given quantile of
    k-th-neighbor distances (k = min_pts). Points denser than that quantile
    become core points."""
    curve = k_distance_curve(latents, min_pts)
    return float(np.quantile(curve, quantile))


def render_kdistance_svg(latents, k: int, path: str | Path) -> None:
    curve = k_distance_curve(latents, k)
    width, height, margin = 480, 320, 40
    plot_w, plot_h = width - 2 * margin, height - 2 * margin
    peak = float(curve[0]) or 1.0
    pts = [
        f"{_fmt(margin + plot_w * i / max(len(curve) - 1, 1))},"
        f"{_fmt(margin + plot_h * (1.0 - v / peak))}"
        for i, v in enumerate(curve)
    ]
    body = [
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{margin}" y="20" font-size="12" font-family="sans-serif">{k}-distance curve</text>',
        f'<polyline points="{" ".join(pts)}" fill="none" stroke="#e45756" stroke-width="1.5"/>',
    ]
    Path(path).write_text(_svg_document(width, height, body), encoding="utf-8")
