"""Cell indexing on the feature-map grid.

Cells are half-open squares ``[col*s, (col+1)*s) x [row*s, (row+1)*s)`` in
the canonical frame; ``(row, col)`` indexes the weight matrix. The grid
covers ``ceil(L/s) x ceil(W/s)`` cells, so it may overhang the window by
less than one cell.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .core import points_in_polygon


class GridGeometry(NamedTuple):
    rows: int
    cols: int
    cell_size: float

    @classmethod
    def from_config(cls, config):
        rows, cols = config.grid_shape
        return cls(rows, cols, config.cell_size)

    @property
    def shape(self):
        return (self.rows, self.cols)


def _index(value, s):
    i = math.floor(value / s)
    # make the result agree with the floating-point interval [i*s, (i+1)*s)
    if value < i * s:
        i -= 1
    elif value >= (i + 1) * s:
        i += 1
    return i


def cell_of(point, geom):
    """``(row, col)`` containing ``point``, or None outside the grid."""
    x, y = float(point[0]), float(point[1])
    if not (math.isfinite(x) and math.isfinite(y)):
        return None
    s = geom.cell_size
    col, row = _index(x, s), _index(y, s)
    if 0 <= row < geom.rows and 0 <= col < geom.cols:
        return (row, col)
    return None


def cell_center(row, col, geom):
    s = geom.cell_size
    return ((col + 0.5) * s, (row + 0.5) * s)


def cell_centers(geom):
    """Arrays ``(cx, cy)`` of shape (rows, cols)."""
    s = geom.cell_size
    cx = (np.arange(geom.cols) + 0.5) * s
    cy = (np.arange(geom.rows) + 0.5) * s
    return np.broadcast_to(cx, geom.shape), np.broadcast_to(cy[:, None], geom.shape)


def blocked_mask(obstacles, geom):
    """Cells whose center lies in (or on) any obstacle."""
    mask = np.zeros(geom.shape, dtype=bool)
    if not obstacles:
        return mask
    cx, cy = cell_centers(geom)
    pts = np.column_stack([cx.ravel(), cy.ravel()])
    for poly in obstacles:
        v = poly.vertices
        lo, hi = v.min(axis=0), v.max(axis=0)
        near = ((pts[:, 0] >= lo[0]) & (pts[:, 0] <= hi[0])
                & (pts[:, 1] >= lo[1]) & (pts[:, 1] <= hi[1]))
        if near.any():
            hit = np.zeros(len(pts), dtype=bool)
            hit[near] = points_in_polygon(pts[near], v)
            mask |= hit.reshape(geom.shape)
    return mask


def pack_mask(mask):
    """Boolean grid as a Python int bitset (for fast set algebra)."""
    return int.from_bytes(np.packbits(np.asarray(mask, dtype=bool).ravel()).tobytes(), "big")
