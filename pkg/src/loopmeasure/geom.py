"""Geometric primitives for closed planar polygonal loops.

A loop is a cyclic vertex list with straight segments between consecutive
vertices (and last back to first). No parametrization is stored: loops are
traces only, and all operations here are pure functions of the trace.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .errors import DegenerateLoop, InvalidParameter, PointOnCurve

POINT_ON_CURVE_RTOL = 1e-12  # relative to loop diameter, for scale invariance
SHAPE_RTOL = 1e-9


def _as_vertices(vertices) -> np.ndarray:
    v = np.asarray(vertices, dtype=float)
    if v.ndim != 2 or v.shape[1] != 2:
        raise InvalidParameter(f"vertices must be an (n, 2) array, got shape {v.shape}")
    if v.shape[0] < 3:
        raise InvalidParameter("a loop needs at least 3 vertices")
    closed = np.vstack([v, v[:1]])
    if np.any(np.all(closed[1:] == closed[:-1], axis=1)):
        raise InvalidParameter("consecutive vertices must be distinct")
    return v


@dataclass(frozen=True)
class PolyLoop:
    """Closed polygonal loop; ``vertices`` is cyclic, last connects to first."""

    vertices: np.ndarray

    def __post_init__(self):
        v = _as_vertices(self.vertices)
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    def __len__(self) -> int:
        return self.vertices.shape[0]

    def segments(self) -> tuple[np.ndarray, np.ndarray]:
        """Segment start and end arrays, including the closing segment."""
        v = self.vertices
        return v, np.roll(v, -1, axis=0)

    def translated(self, dz) -> "PolyLoop":
        return type(self)(self.vertices + np.asarray(dz, dtype=float))

    def scaled(self, factor: float) -> "PolyLoop":
        return type(self)(self.vertices * float(factor))

    def reversed(self) -> "PolyLoop":
        return type(self)(self.vertices[::-1])


class SimpleLoop(PolyLoop):
    """A PolyLoop asserted (or verified) to be non-self-intersecting.

    Traced grid boundaries and lattice interfaces are simple by construction
    and should be built with ``check=False``; ``check=True`` runs the
    exhaustive O(n^2) segment test and is meant for small loops.
    """

    def __init__(self, vertices, check: bool = False):
        super().__init__(vertices)
        if check and not _is_simple(self):
            raise InvalidParameter("loop is not simple")


def _segments_properly_intersect(p1, p2, q1, q2) -> bool:
    """True if segment p1p2 meets q1q2 anywhere (shared endpoints excluded by caller)."""

    def orient(a, b, c):
        return np.sign((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))

    def on_seg(a, b, c):
        return (
            min(a[0], b[0]) - 1e-15 <= c[0] <= max(a[0], b[0]) + 1e-15
            and min(a[1], b[1]) - 1e-15 <= c[1] <= max(a[1], b[1]) + 1e-15
        )

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True
    if o1 == 0 and on_seg(p1, p2, q1):
        return True
    if o2 == 0 and on_seg(p1, p2, q2):
        return True
    if o3 == 0 and on_seg(q1, q2, p1):
        return True
    if o4 == 0 and on_seg(q1, q2, p2):
        return True
    return False


def _is_simple(loop: PolyLoop) -> bool:
    a, b = loop.segments()
    n = len(loop)
    for i in range(n):
        for j in range(i + 1, n):
            adjacent = j == i + 1 or (i == 0 and j == n - 1)
            if adjacent:
                continue
            if _segments_properly_intersect(a[i], b[i], a[j], b[j]):
                return False
    # adjacent segments may meet only at the shared vertex; distinctness of
    # consecutive vertices plus a collinear-overlap test covers that
    for i in range(n):
        j = (i + 1) % n
        d1 = b[i] - a[i]
        d2 = b[j] - a[j]
        cross = d1[0] * d2[1] - d1[1] * d2[0]
        if cross == 0 and np.dot(d1, d2) < 0:
            return False
    return True


@dataclass(frozen=True)
class AnnulusSpec:
    """Round annulus: center plus inner and outer radii."""

    center: tuple[float, float]
    r_inner: float
    r_outer: float

    def __post_init__(self):
        if not (0 < self.r_inner < self.r_outer):
            raise InvalidParameter("need 0 < r_inner < r_outer")

    @property
    def modulus(self) -> float:
        return float(np.log(self.r_outer / self.r_inner))

    def translated(self, dz) -> "AnnulusSpec":
        dz = np.asarray(dz, dtype=float)
        return AnnulusSpec(
            (self.center[0] + dz[0], self.center[1] + dz[1]), self.r_inner, self.r_outer
        )


@dataclass(frozen=True)
class Shape:
    """A normalized simple loop (max vertex distance from origin equals 1)."""

    loop: SimpleLoop
    provenance: str = "synthetic"
    translation_normalized: bool = False

    def __post_init__(self):
        if self.provenance not in ("brownian-hull", "percolation-perimeter", "synthetic"):
            raise InvalidParameter(f"unknown provenance {self.provenance!r}")
        mr = max_radius(self.loop)
        if abs(mr - 1.0) > SHAPE_RTOL:
            raise InvalidParameter(f"shape max_radius is {mr}, expected 1")


def polygon_edge_distances(loop: PolyLoop, z) -> np.ndarray:
    """Distance from point z to every segment of the loop."""
    z = np.asarray(z, dtype=float)
    a, b = loop.segments()
    d = b - a
    seg_len2 = np.einsum("ij,ij->i", d, d)
    t = np.clip(np.einsum("ij,ij->i", z - a, d) / seg_len2, 0.0, 1.0)
    proj = a + t[:, None] * d
    return np.hypot(proj[:, 0] - z[0], proj[:, 1] - z[1])


def distance_to_loop(loop: PolyLoop, z) -> float:
    return float(polygon_edge_distances(loop, z).min())


def winding_number(loop: PolyLoop, z) -> int:
    """Signed number of turns of the loop around z.

    Sum of signed angle increments over the segments, divided by 2 pi and
    rounded to the nearest integer. Raises PointOnCurve when z is within
    1e-12 * diameter of the trace, where the angle sum is unreliable.
    """
    z = np.asarray(z, dtype=float)
    tol = POINT_ON_CURVE_RTOL * diameter(loop)
    if distance_to_loop(loop, z) <= tol:
        raise PointOnCurve(f"point {tuple(z)} lies on the loop trace")
    rel = loop.vertices - z
    ang = np.arctan2(rel[:, 1], rel[:, 0])
    dang = np.diff(np.append(ang, ang[0]))
    dang = (dang + np.pi) % (2 * np.pi) - np.pi
    return int(round(dang.sum() / (2 * np.pi)))


def winding_numbers(loop: PolyLoop, points: np.ndarray) -> np.ndarray:
    """Vectorized winding numbers for many query points (no on-curve check)."""
    points = np.asarray(points, dtype=float)
    rel_x = loop.vertices[None, :, 0] - points[:, 0, None]
    rel_y = loop.vertices[None, :, 1] - points[:, 1, None]
    ang = np.arctan2(rel_y, rel_x)
    dang = np.diff(np.concatenate([ang, ang[:, :1]], axis=1), axis=1)
    dang = (dang + np.pi) % (2 * np.pi) - np.pi
    return np.rint(dang.sum(axis=1) / (2 * np.pi)).astype(int)


def signed_area(loop: PolyLoop) -> float:
    """Shoelace area: positive for CCW simple loops, winding-weighted otherwise."""
    x, y = loop.vertices[:, 0], loop.vertices[:, 1]
    x1, y1 = np.roll(x, -1), np.roll(y, -1)
    return float(0.5 * np.sum(x * y1 - x1 * y))


def arc_length(loop: PolyLoop) -> float:
    a, b = loop.segments()
    return float(np.hypot(*(b - a).T).sum())


def diameter(loop: PolyLoop) -> float:
    """Maximal pairwise vertex distance (via the convex hull for big loops)."""
    v = loop.vertices
    if v.shape[0] > 16:
        try:
            v = v[ConvexHull(v).vertices]
        except QhullError:
            pass  # collinear input; fall through to the pairwise scan
    diff = v[:, None, :] - v[None, :, :]
    return float(np.sqrt((diff**2).sum(axis=2)).max())


def max_radius(loop: PolyLoop) -> float:
    """Maximal vertex distance from the origin."""
    return float(np.hypot(loop.vertices[:, 0], loop.vertices[:, 1]).max())


def enclosed_centroid(loop: PolyLoop) -> np.ndarray:
    """Area centroid of the region enclosed by the loop."""
    area = signed_area(loop)
    if abs(area) < 1e-300:
        raise DegenerateLoop("loop encloses no area")
    x, y = loop.vertices[:, 0], loop.vertices[:, 1]
    x1, y1 = np.roll(x, -1), np.roll(y, -1)
    cross = x * y1 - x1 * y
    cx = np.sum((x + x1) * cross) / (6.0 * area)
    cy = np.sum((y + y1) * cross) / (6.0 * area)
    return np.array([cx, cy])


def normalize_shape(loop: SimpleLoop, mode: str = "root-scaling", provenance: str = "synthetic") -> Shape:
    """Normalize a simple loop to a shape representative.

    root-scaling divides by max_radius, keeping the root at the origin (the
    representative used by the scaling decomposition of the rooted loop
    measure). translate-and-scale first moves the enclosed-region centroid to
    the origin and then scales max_radius to 1 (used when comparing shapes
    across models). Both modes are idempotent.
    """
    if diameter(loop) < 1e-12:
        raise DegenerateLoop("cannot normalize a loop of zero extent")
    if mode == "root-scaling":
        v = loop.vertices / max_radius(loop)
        translated = False
    elif mode == "translate-and-scale":
        v = loop.vertices - enclosed_centroid(loop)
        v = v / np.hypot(v[:, 0], v[:, 1]).max()
        translated = True
    else:
        raise InvalidParameter(f"unknown normalization mode {mode!r}")
    return Shape(SimpleLoop(v), provenance=provenance, translation_normalized=translated)


def shape_functionals(shape: Shape) -> dict[str, float]:
    """Scalar shape observables: area/diameter^2 and boundary anisotropy.

    Anisotropy is the ratio (largest over smallest) of the square roots of
    the eigenvalues of the second-moment matrix of the boundary vertices.
    """
    loop = shape.loop
    diam = diameter(loop)
    if diam < 1e-12:
        raise DegenerateLoop("degenerate shape")
    area_over_diam2 = abs(signed_area(loop)) / diam**2
    v = loop.vertices - loop.vertices.mean(axis=0)
    m = v.T @ v / v.shape[0]
    eig = np.linalg.eigvalsh(m)
    eig = np.clip(eig, 0.0, None)
    if eig[0] <= 0:
        raise DegenerateLoop("boundary vertices are collinear")
    anisotropy = float(np.sqrt(eig[1] / eig[0]))
    return {"area_over_diam2": float(area_over_diam2), "anisotropy": anisotropy}


def regular_polygon(n: int, radius: float = 1.0, center=(0.0, 0.0)) -> SimpleLoop:
    """CCW regular n-gon, handy as a polygonal stand-in for a circle."""
    theta = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    v = np.column_stack([np.cos(theta), np.sin(theta)]) * radius + np.asarray(center, dtype=float)
    return SimpleLoop(v)


def write_loops(path, loops) -> None:
    """One loop per line: whitespace-separated x0 y0 x1 y1 ... in UTF-8 text."""
    with open(path, "w", encoding="utf-8") as fh:
        for loop in loops:
            fh.write(" ".join(repr(c) for c in loop.vertices.ravel()))
            fh.write("\n")


def read_loops(path, simple: bool = False) -> list[PolyLoop]:
    """Read loops written by write_loops; lines with odd coordinate counts are rejected."""
    out: list[PolyLoop] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) % 2 != 0:
                raise InvalidParameter(f"line {lineno}: odd coordinate count {len(parts)}")
            coords = np.array([float(p) for p in parts]).reshape(-1, 2)
            out.append(SimpleLoop(coords) if simple else PolyLoop(coords))
    return out
