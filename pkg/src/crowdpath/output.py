"""CSV and SVG writers for reports, predictions and feature maps."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

METRICS_COLUMNS = ("method", "scene", "horizon", "ade", "fde", "n",
                   "success_rate", "mean_visited", "db_size")
TRAJECTORY_COLUMNS = ("sample_id", "method", "horizon", "step", "pred_x", "pred_y", "gt_x", "gt_y")


def _num(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _open(sink):
    if hasattr(sink, "write"):
        return sink, False
    return open(sink, "w", newline="", encoding="utf-8"), True


def _write_rows(sink, header, rows):
    fh, close = _open(sink)
    try:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        w.writerows(rows)
    finally:
        if close:
            fh.close()


def write_metrics_csv(report, sink):
    """One row per (method, scene, horizon); floats are written with ``repr``."""
    _write_rows(sink, METRICS_COLUMNS, (
        [r.method, r.scene, _num(r.horizon), _num(r.ade), _num(r.fde), _num(r.n),
         _num(r.success_rate), _num(r.mean_visited), _num(r.db_size)] for r in report.rows))


def write_trajectory_csv(predictions, sink):
    rows = []
    for sp in predictions:
        truth = sp.truth.xy if sp.truth is not None else None
        for i, (step, (x, y)) in enumerate(zip(sp.pred.steps, sp.pred.xy)):
            gx, gy = (truth[i] if truth is not None and i < len(truth) else (None, None))
            rows.append([sp.sample_id, sp.method, _num(sp.horizon), _num(int(step)),
                         _num(x), _num(y), _num(gx), _num(gy)])
    _write_rows(sink, TRAJECTORY_COLUMNS, rows)


def write_map_csv(fmap, sink):
    """Row-major weights, one grid row per line; blocked cells are written as ``X``."""
    rows = [["X" if np.isneginf(v) else repr(float(v)) for v in row] for row in fmap.weights]
    fh, close = _open(sink)
    try:
        csv.writer(fh, lineterminator="\r\n").writerows(rows)
    finally:
        if close:
            fh.close()


def read_map_csv(source):
    text = Path(source).read_text() if not hasattr(source, "read") else source.read()
    rows = list(csv.reader(io.StringIO(text)))
    return np.array([[-np.inf if v == "X" else float(v) for v in row] for row in rows])


# --------------------------------------------------------------------------
# SVG

class _Canvas:
    """Maps world coordinates (y up) to an SVG viewport (y down)."""

    def __init__(self, points, width=640, margin=20.0):
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        span = np.maximum(hi - lo, 1e-6)
        self.scale = (width - 2 * margin) / span[0] if span[0] >= span[1] else (width - 2 * margin) / span[1]
        self.lo, self.margin = lo, margin
        self.width = width
        self.height = int(math.ceil(span[1] * self.scale + 2 * margin))
        self.hi = hi
        self.items = []

    def xy(self, p):
        x = self.margin + (p[0] - self.lo[0]) * self.scale
        y = self.height - self.margin - (p[1] - self.lo[1]) * self.scale
        return x, y

    def points_attr(self, pts):
        return " ".join(f"{x:.2f},{y:.2f}" for x, y in (self.xy(p) for p in pts))

    def polygon(self, pts, fill, stroke="none", opacity=1.0):
        self.items.append(f'<polygon points="{self.points_attr(pts)}" fill="{fill}" '
                          f'stroke="{stroke}" fill-opacity="{opacity}"/>')

    def polyline(self, pts, stroke, dashed=False, width=2.0):
        dash = ' stroke-dasharray="6,4"' if dashed else ""
        self.items.append(f'<polyline points="{self.points_attr(pts)}" fill="none" '
                          f'stroke="{stroke}" stroke-width="{width}"{dash}/>')

    def circle(self, p, r, fill):
        x, y = self.xy(p)
        self.items.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{r}" fill="{fill}"/>')

    def rect(self, p0, p1, fill, opacity=1.0):
        (x0, y0), (x1, y1) = self.xy(p0), self.xy(p1)
        self.items.append(f'<rect x="{min(x0, x1):.2f}" y="{min(y0, y1):.2f}" '
                          f'width="{abs(x1 - x0):.2f}" height="{abs(y1 - y0):.2f}" '
                          f'fill="{fill}" fill-opacity="{opacity}"/>')

    def text(self, s):
        self.items.append(f'<text x="{self.margin}" y="{self.margin - 5}" font-size="12">'
                          f'{escape(s)}</text>')

    def render(self):
        body = "\n".join(self.items)
        return ('<?xml version="1.0" encoding="UTF-8"?>\n'
                f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{self.width}" '
                f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">\n'
                f'<rect x="0" y="0" width="{self.width}" height="{self.height}" fill="white"/>\n'
                f"{body}\n</svg>\n")


def _heat(t):
    t = min(max(t, 0.0), 1.0)
    return f"rgb({int(255 * t)},{int(80 + 100 * (1 - t))},{int(255 * (1 - t))})"


def overlay_svg(prediction, truth=None, history=None, obstacles=(), fmap=None,
                transform=None, title=None, width=640):
    """Scene-frame overlay: history grey, ground truth solid, prediction dashed.

    With ``fmap`` and its query ``transform`` the free cells are drawn as a heat layer.
    """
    pred = np.asarray(getattr(prediction, "xy", prediction), dtype=np.float64)
    parts = [pred]
    gt = None if truth is None else np.asarray(getattr(truth, "xy", truth), dtype=np.float64)
    hist = None if history is None else np.asarray(getattr(history, "xy", history), dtype=np.float64)
    for a in (gt, hist):
        if a is not None:
            parts.append(a)
    for poly in obstacles:
        parts.append(poly.vertices)
    cells = []
    if fmap is not None and transform is not None:
        g = fmap.geometry
        w = fmap.weights
        free = np.isfinite(w)
        lo, hi = (w[free].min(), w[free].max()) if free.any() else (0.0, 1.0)
        for r in range(g.rows):
            for c in range(g.cols):
                corners = np.array([(c, r), (c + 1, r), (c + 1, r + 1), (c, r + 1)],
                                   dtype=np.float64) * g.cell_size
                world = transform.invert(corners)
                if free[r, c]:
                    t = (w[r, c] - lo) / (hi - lo) if hi > lo else 0.5
                    cells.append((world, _heat(t), 0.35))
                else:
                    cells.append((world, "black", 0.5))
                parts.append(world)
    canvas = _Canvas(np.vstack(parts), width)
    for world, fill, opacity in cells:
        canvas.polygon(world, fill, opacity=opacity)
    for poly in obstacles:
        canvas.polygon(poly.vertices, "#555555", stroke="black")
    if hist is not None and len(hist) > 1:
        canvas.polyline(hist, "#888888")
    if gt is not None:
        canvas.polyline(gt if hist is None else np.vstack([hist[-1:], gt]), "#1f77b4")
    canvas.polyline(pred if hist is None else np.vstack([hist[-1:], pred]), "#d62728", dashed=True)
    if hist is not None:
        canvas.circle(hist[-1], 4, "black")
    if title:
        canvas.text(title)
    return canvas.render()


def map_svg(fmap, cell_px=16):
    """Heat rendering of a feature map in its canonical frame; blocked cells black."""
    g = fmap.geometry
    w = fmap.weights
    free = np.isfinite(w)
    capped = np.where(free, np.minimum(w, np.percentile(w[free], 99) if free.any() else 0), 0)
    lo, hi = (capped[free].min(), capped[free].max()) if free.any() else (0.0, 1.0)
    width, height = g.cols * cell_px, g.rows * cell_px
    items = []
    for r in range(g.rows):
        for c in range(g.cols):
            fill = _heat((capped[r, c] - lo) / (hi - lo) if hi > lo else 0.5) if free[r, c] else "black"
            items.append(f'<rect x="{c * cell_px}" y="{height - (r + 1) * cell_px}" '
                         f'width="{cell_px}" height="{cell_px}" fill="{fill}"/>')
    return ('<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" '
            f'height="{height}" viewBox="0 0 {width} {height}">\n' + "\n".join(items) + "\n</svg>\n")


def write_text(path, text):
    Path(path).write_text(text, encoding="utf-8")


def emit_outputs(report, out_dir, scenes=None, svg=False, prefix="report"):
    """Write ``<prefix>.csv`` and, if predictions were kept, ``<prefix>_trajectories.csv``
    plus one SVG overlay per prediction when ``svg`` is set. Returns written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / f"{prefix}.csv"]
    write_metrics_csv(report, written[0])
    if report.predictions:
        written.append(out / f"{prefix}_trajectories.csv")
        write_trajectory_csv(report.predictions, written[-1])
        if svg:
            by_name = {s.name: s for s in (scenes or ())}
            for sp in report.predictions:
                scene = by_name.get(sp.sample_id.split(":")[0])
                obstacles = scene.obstacles if scene is not None else ()
                name = f"{sp.sample_id.replace(':', '_')}_{sp.method}_{sp.horizon:g}.svg"
                write_text(out / name, overlay_svg(sp.pred, sp.truth, obstacles=obstacles,
                                                   title=f"{sp.sample_id} {sp.method}"))
                written.append(out / name)
    return written
