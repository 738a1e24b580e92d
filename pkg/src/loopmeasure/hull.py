"""Raster extraction of hulls, boundaries and complement components of loops.

Conventions, chosen to avoid the classic discrete-separation paradox:
path (marked) cells are connected through the supercover and may touch
diagonally only via an explicitly marked corner cell; the complement is
4-connected. Cells are half-open boxes [x, x+h) x [y, y+h), so every point
belongs to exactly one cell. Path cells count toward the filled area: the
trace area vanishes with h, and including it makes the raster bookkeeping
identity (filled = marked + sum of bounded components) exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import EmptyGrid, InsufficientData, InvalidParameter
from .geom import PolyLoop, SimpleLoop

FOUR_CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class RasterGrid:
    """Occupancy bitmap (indexed [iy, ix]) with cell size h and world origin."""

    h: float
    origin: tuple[float, float]
    marked: np.ndarray

    @classmethod
    def from_mask(cls, mask, h: float, origin=(0.0, 0.0)) -> "RasterGrid":
        """Wrap a hand-built mask, padding a one-cell unmarked frame ring."""
        mask = np.asarray(mask, dtype=bool)
        padded = np.pad(mask, 1, constant_values=False)
        ox, oy = origin
        return cls(h=float(h), origin=(ox - h, oy - h), marked=padded)

    @property
    def shape(self) -> tuple[int, int]:
        return self.marked.shape

    def cell_of(self, point) -> tuple[int, int]:
        """(ix, iy) cell indices of a world point; may fall outside the grid."""
        ix = int(np.floor((point[0] - self.origin[0]) / self.h))
        iy = int(np.floor((point[1] - self.origin[1]) / self.h))
        return ix, iy

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        ny, nx = self.marked.shape
        xs = self.origin[0] + (np.arange(nx) + 0.5) * self.h
        ys = self.origin[1] + (np.arange(ny) + 0.5) * self.h
        return xs, ys


def _mark_diagonal_steps(marked, p, q, cx1, cy1, cx2, cy2, h, ix_min, iy_min):
    """Corner rule for segments whose endpoint cells are diagonal neighbors.

    The crossing of the shared column boundary decides which of the two
    corner-adjacent cells the segment passes through; an exact corner hit
    (possible only for hand-aligned geometry) marks both to keep the marked
    set 4-connected.
    """
    xb = (np.maximum(cx1, cx2) + ix_min) * h
    t = (xb - p[:, 0]) / (q[:, 0] - p[:, 0])
    y_at = p[:, 1] + t * (q[:, 1] - p[:, 1])
    row = np.floor(y_at / h).astype(np.int64) - iy_min
    same_row = row == cy1
    marked[np.where(same_row, cy1, cy2), np.where(same_row, cx2, cx1)] = True
    exact = y_at == (row + iy_min) * h
    if np.any(exact):
        marked[cy1[exact], cx2[exact]] = True
        marked[cy2[exact], cx1[exact]] = True


def rasterize(path: PolyLoop, h: float) -> RasterGrid:
    """Supercover rasterization: marks every cell the polygonal path passes through."""
    if h <= 0:
        raise InvalidParameter("h must be positive")
    v = path.vertices
    inv_h = 1.0 / h
    cells_x = np.floor(v[:, 0] * inv_h).astype(np.int64)
    cells_y = np.floor(v[:, 1] * inv_h).astype(np.int64)
    ix_min = int(cells_x.min()) - 1
    iy_min = int(cells_y.min()) - 1
    nx = int(cells_x.max()) - ix_min + 2
    ny = int(cells_y.max()) - iy_min + 2
    origin = (ix_min * h, iy_min * h)
    cells_x -= ix_min
    cells_y -= iy_min

    marked = np.zeros((ny, nx), dtype=bool)
    marked[cells_y, cells_x] = True

    nxt = np.roll(np.arange(v.shape[0]), -1)
    dx = cells_x[nxt] - cells_x
    dy = cells_y[nxt] - cells_y
    far = (np.abs(dx) >= 2) | (np.abs(dy) >= 2)
    diag = ~far & (dx != 0) & (dy != 0)
    if np.any(diag):
        i = np.nonzero(diag)[0]
        _mark_diagonal_steps(
            marked, v[i], v[nxt[i]], cells_x[i], cells_y[i], cells_x[nxt[i]], cells_y[nxt[i]], h, ix_min, iy_min
        )
    if np.any(far):
        i = np.nonzero(far)[0]
        p, q = v[i], v[nxt[i]]
        delta = q - p
        k = np.maximum(
            np.ceil(np.abs(delta[:, 0]) / (0.99 * h)),
            np.ceil(np.abs(delta[:, 1]) / (0.99 * h)),
        ).astype(np.int64)
        np.maximum(k, 2, out=k)
        pieces = k + 1  # sub-chain includes both endpoints
        total = int(pieces.sum())
        seg = np.repeat(np.arange(k.size), pieces)
        offsets = np.concatenate([[0], np.cumsum(pieces)[:-1]])
        frac = (np.arange(total) - np.repeat(offsets, pieces)) / k[seg]
        pts = p[seg] + frac[:, None] * delta[seg]
        rcx = np.floor(pts[:, 0] * inv_h).astype(np.int64) - ix_min
        rcy = np.floor(pts[:, 1] * inv_h).astype(np.int64) - iy_min
        marked[rcy, rcx] = True
        valid = seg[1:] == seg[:-1]
        sdx = rcx[1:] - rcx[:-1]
        sdy = rcy[1:] - rcy[:-1]
        sdiag = valid & (sdx != 0) & (sdy != 0)
        if np.any(sdiag):
            j = np.nonzero(sdiag)[0]
            _mark_diagonal_steps(
                marked, pts[j], pts[j + 1], rcx[j], rcy[j], rcx[j + 1], rcy[j + 1], h, ix_min, iy_min
            )
    return RasterGrid(h=float(h), origin=origin, marked=marked)


@dataclass(frozen=True)
class ComponentDecomposition:
    """Labeled complement components of a raster; exactly one is unbounded."""

    grid: RasterGrid
    labels: np.ndarray
    unbounded_label: int
    bounded_labels: np.ndarray
    cell_counts: np.ndarray  # indexed by label; label 0 = marked cells

    @property
    def h(self) -> float:
        return self.grid.h

    def marked_cell_count(self) -> int:
        return int(self.cell_counts[0])

    def bounded_areas(self) -> np.ndarray:
        return self.cell_counts[self.bounded_labels] * self.h**2

    def label_at(self, point) -> int:
        """Component label at a world point: 0 marked, else component id; -1 off grid."""
        ix, iy = self.grid.cell_of(point)
        ny, nx = self.labels.shape
        if not (0 <= ix < nx and 0 <= iy < ny):
            return -1
        return int(self.labels[iy, ix])


def decompose(grid: RasterGrid) -> ComponentDecomposition:
    """4-connected flood fill of unmarked cells; the frame ring is unbounded."""
    labels, _ = ndimage.label(~grid.marked, structure=FOUR_CONN)
    unbounded = int(labels[0, 0])
    if unbounded == 0:
        raise InvalidParameter("frame ring must be unmarked; build grids with a clear ring")
    counts = np.bincount(labels.ravel())
    bounded = np.array(
        [lab for lab in range(1, counts.size) if lab != unbounded and counts[lab] > 0],
        dtype=np.int64,
    )
    return ComponentDecomposition(
        grid=grid,
        labels=labels,
        unbounded_label=unbounded,
        bounded_labels=bounded,
        cell_counts=counts,
    )


def filled_area(decomp: ComponentDecomposition) -> float:
    """Area of the filled hull: marked cells plus all bounded components."""
    cells = decomp.marked_cell_count() + int(decomp.cell_counts[decomp.bounded_labels].sum())
    return cells * decomp.h**2


def area_spectrum(decomp: ComponentDecomposition, thresholds) -> dict[float, int]:
    """N(u): number of bounded components of area at least u, per threshold."""
    areas = decomp.bounded_areas()
    return {float(u): int(np.count_nonzero(areas >= u)) for u in thresholds}


_DIRS = np.array([[1, 0], [0, 1], [-1, 0], [0, -1]])  # E, N, W, S in corner steps


def _trace_contour(region: np.ndarray, h: float, origin: tuple[float, float]) -> SimpleLoop:
    """CCW outer contour of a cell region along cell edges.

    Walks with the region on the left; at the (here provably absent) ambiguous
    corners the left turn is preferred, which keeps the trace simple.
    """
    rows, cols = np.nonzero(region)
    if rows.size == 0:
        raise EmptyGrid("cannot trace an empty region")
    start_i = np.lexsort((cols, rows))[0]
    sy, sx = int(rows[start_i]), int(cols[start_i])
    ny, nx = region.shape

    def inside(ix: int, iy: int) -> bool:
        return 0 <= ix < nx and 0 <= iy < ny and region[iy, ix]

    corners: list[tuple[int, int]] = []
    cx, cy, d = sx, sy, 0  # start at bottom-left corner of the start cell, heading E
    start_state = (cx, cy, d)
    while True:
        corners.append((cx, cy))
        nxt_x, nxt_y = cx + _DIRS[d][0], cy + _DIRS[d][1]
        # cells ahead-left / ahead-right of the corner we are moving to
        if d == 0:
            left, right = (nxt_x, nxt_y), (nxt_x, nxt_y - 1)
        elif d == 1:
            left, right = (nxt_x - 1, nxt_y), (nxt_x, nxt_y)
        elif d == 2:
            left, right = (nxt_x - 1, nxt_y - 1), (nxt_x - 1, nxt_y)
        else:
            left, right = (nxt_x, nxt_y - 1), (nxt_x - 1, nxt_y - 1)
        cx, cy = nxt_x, nxt_y
        if not inside(*left):
            d = (d + 1) % 4  # turn left
        elif inside(*right):
            d = (d - 1) % 4  # turn right
        if (cx, cy, d) == start_state:
            break
        if len(corners) > 4 * region.size + 8:
            raise InvalidParameter("contour tracing did not close; region is malformed")
    arr = np.asarray(corners, dtype=float)
    arr[:, 0] = origin[0] + arr[:, 0] * h
    arr[:, 1] = origin[1] + arr[:, 1] * h
    return SimpleLoop(arr)


def outer_boundary(decomp: ComponentDecomposition) -> SimpleLoop:
    """Boundary separating the unbounded component from marked plus bounded cells."""
    if decomp.marked_cell_count() == 0:
        raise EmptyGrid("no marked cells")
    filled = decomp.labels != decomp.unbounded_label
    return _trace_contour(filled, decomp.h, decomp.grid.origin)


def component_boundary(decomp: ComponentDecomposition, label: int) -> SimpleLoop:
    """CCW boundary of one bounded complement component."""
    if label == decomp.unbounded_label or label <= 0:
        raise InvalidParameter("label must identify a bounded component")
    return _trace_contour(decomp.labels == label, decomp.h, decomp.grid.origin)


def inner_boundaries(decomp: ComponentDecomposition) -> list[SimpleLoop]:
    """One boundary loop per bounded component."""
    return [component_boundary(decomp, int(lab)) for lab in decomp.bounded_labels]


def boundary_cell_edge_count(decomp: ComponentDecomposition, label: int) -> int:
    """Number of cell edges between the given component and everything else."""
    mask = decomp.labels == label
    edges = 0
    edges += np.count_nonzero(mask[:, 1:] != mask[:, :-1])
    edges += np.count_nonzero(mask[1:, :] != mask[:-1, :])
    edges += np.count_nonzero(mask[0, :]) + np.count_nonzero(mask[-1, :])
    edges += np.count_nonzero(mask[:, 0]) + np.count_nonzero(mask[:, -1])
    return int(edges)


def decomposition_summary(decomp: ComponentDecomposition) -> dict:
    """JSON-ready summary: component count, areas, filled area, boundary sizes."""
    areas = np.sort(decomp.bounded_areas())[::-1]
    return {
        "h": decomp.h,
        "marked_cells": decomp.marked_cell_count(),
        "n_bounded_components": int(decomp.bounded_labels.size),
        "bounded_areas": [float(a) for a in areas[:64]],
        "filled_area": filled_area(decomp),
        "outer_boundary_edges": boundary_cell_edge_count(decomp, decomp.unbounded_label),
    }


def winding_field(path: PolyLoop, grid: RasterGrid) -> np.ndarray:
    """Winding number of the path around every cell center of the grid.

    Horizontal-ray crossing counts, accumulated per row as signed column
    thresholds and finished with a suffix sum. Exact up to float tie-breaks,
    which have probability zero for continuous random paths.
    """
    v = path.vertices
    closed = np.vstack([v, v[:1]])
    p, q = closed[:-1], closed[1:]
    ny, nx = grid.marked.shape
    h = grid.h
    yc0 = grid.origin[1] + 0.5 * h
    xc0 = grid.origin[0] + 0.5 * h

    y_lo = np.minimum(p[:, 1], q[:, 1])
    y_hi = np.maximum(p[:, 1], q[:, 1])
    row_lo = np.ceil((y_lo - yc0) / h).astype(np.int64)
    row_hi = np.ceil((y_hi - yc0) / h).astype(np.int64)  # exclusive
    np.clip(row_lo, 0, ny, out=row_lo)
    np.clip(row_hi, 0, ny, out=row_hi)
    k = np.maximum(row_hi - row_lo, 0)

    seg = np.repeat(np.arange(k.size), k)
    if seg.size == 0:
        return np.zeros((ny, nx), dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(k)[:-1]])
    rows = (np.arange(seg.size) - np.repeat(offsets, k)) + row_lo[seg]
    y_c = yc0 + rows * h
    t = (y_c - p[seg, 1]) / (q[seg, 1] - p[seg, 1])
    x_cross = p[seg, 0] + t * (q[seg, 0] - p[seg, 0])
    sign = np.where(q[seg, 1] > p[seg, 1], 1, -1)
    idx = np.ceil((x_cross - xc0) / h).astype(np.int64)
    np.clip(idx, 0, nx, out=idx)

    acc = np.zeros((ny, nx + 1), dtype=np.int64)
    np.add.at(acc, (rows, idx), sign)
    suffix = np.cumsum(acc[:, ::-1], axis=1)[:, ::-1]
    return suffix[:, 1:]


def _point_set_diameter(points: np.ndarray) -> float:
    from scipy.spatial import ConvexHull, QhullError

    try:
        points = points[ConvexHull(points).vertices]
    except QhullError:
        pass
    diff = points[:, None, :] - points[None, :, :]
    return float(np.sqrt((diff**2).sum(axis=2)).max())


def boxcount_dimension(points, scale_range=None, n_scales: int = 8, resolution: float | None = None):
    """Least-squares box-counting dimension of a planar point set.

    Returns (slope, r_squared) for log(occupied boxes) against log(1/eps).
    The default ladder uses n_scales geometric scales spanning a factor 2**7,
    clipped a factor 4 away from both the data diameter and, when given, the
    raster resolution.
    """
    points = np.asarray(points, dtype=float)
    if points.shape[0] < 1000:
        raise InsufficientData("need at least 1000 points for a dimension estimate")
    if scale_range is None:
        diam = _point_set_diameter(points)
        eps_max = diam / 4.0
        eps_min = eps_max / 2**7
        if resolution is not None:
            eps_min = max(eps_min, 4.0 * resolution)
        if eps_min >= eps_max:
            raise InsufficientData("scale ladder is empty after clipping")
        scale_range = (eps_min, eps_max)
    eps_min, eps_max = scale_range
    if not (0 < eps_min < eps_max):
        raise InvalidParameter("need 0 < eps_min < eps_max")
    scales = np.geomspace(eps_min, eps_max, n_scales)
    counts = np.empty(n_scales)
    for i, eps in enumerate(scales):
        cells = np.floor(points / eps).astype(np.int64)
        keys = cells[:, 0] * (2**32) + cells[:, 1]
        counts[i] = np.unique(keys).size
    from .stats import linear_fit

    slope, _, r2 = linear_fit(np.log(1.0 / scales), np.log(counts))
    return float(slope), float(r2)
