"""Critical site percolation on the triangular lattice.

Sites live at axial coordinates (q, r) with the 6-neighbor mask; the world
position of a site is (q + r/2, r * sqrt(3)/2). Interfaces are traced on the
hexagonal dual: vertices of the dual are the two triangle families of the
lattice, and every dual edge separates one site pair. At a dual vertex three
faces meet, so the interface degree is 0 or 2 and the bichromatic edge set
decomposes uniquely into disjoint simple cycles.

All sites outside the simulated box are black by convention, so every
interface closes. Frame-touching clusters are excluded from all statistics
(the measures being probed are whole-plane objects; boundary effects are
bias, not signal).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import InvalidParameter, InvalidWindow, TouchesFrame
from .events import LoopEvent
from .geom import PolyLoop, Shape, SimpleLoop, diameter, normalize_shape, signed_area
from .stats import Estimate, mass_estimate

SQRT3_2 = np.sqrt(3.0) / 2.0

TRI_STRUCTURE = np.array([[0, 1, 1], [1, 1, 1], [1, 1, 0]], dtype=bool)  # rows r, cols q


@dataclass(frozen=True)
class PercConfig:
    """One site coloring: white[r, q] is True for white sites."""

    white: np.ndarray
    p: float
    seed: int

    @property
    def side(self) -> int:
        return self.white.shape[0]

    def white_fraction(self) -> float:
        return float(self.white.mean())


@dataclass(frozen=True)
class Cluster:
    """Maximal same-color 6-connected site set (bounding box in axial coords)."""

    label: int
    size: int
    q_min: int
    q_max: int
    r_min: int
    r_max: int
    touches_frame: bool
    labels: np.ndarray = field(repr=False)

    def site_mask(self, pad: int = 0) -> tuple[np.ndarray, int, int]:
        """Local boolean mask of the cluster inside its (padded) bounding box.

        Returns (mask, q_offset, r_offset): mask[r - r_offset, q - q_offset].
        """
        r0, r1 = self.r_min - pad, self.r_max + 1 + pad
        q0, q1 = self.q_min - pad, self.q_max + 1 + pad
        side = self.labels.shape[0]
        rr0, qq0 = max(r0, 0), max(q0, 0)
        rr1, qq1 = min(r1, side), min(q1, side)
        mask = np.zeros((r1 - r0, q1 - q0), dtype=bool)
        mask[rr0 - r0 : rr1 - r0, qq0 - q0 : qq1 - q0] = (
            self.labels[rr0:rr1, qq0:qq1] == self.label
        )
        return mask, q0, r0


def axial_to_xy(q, r) -> tuple[np.ndarray, np.ndarray]:
    q = np.asarray(q, dtype=float)
    r = np.asarray(r, dtype=float)
    return q + 0.5 * r, SQRT3_2 * r


def sample_config(side: int, p: float = 0.5, seed: int = 0) -> PercConfig:
    """Independent site coloring of an side x side axial box."""
    if side < 2:
        raise InvalidParameter("need side >= 2")
    if not (0.0 <= p <= 1.0):
        raise InvalidParameter("p must be in [0, 1]")
    rng = np.random.default_rng(seed)
    white = rng.random((side, side)) < p
    white.setflags(write=False)
    return PercConfig(white=white, p=p, seed=seed)


def clusters(config: PercConfig, color: str = "white") -> list[Cluster]:
    """Maximal 6-connected clusters of the given color."""
    if color not in ("white", "black"):
        raise InvalidParameter("color must be 'white' or 'black'")
    mask = config.white if color == "white" else ~config.white
    labels, n = ndimage.label(mask, structure=TRI_STRUCTURE)
    labels.setflags(write=False)
    if n == 0:
        return []
    objects = ndimage.find_objects(labels)
    counts = np.bincount(labels.ravel())
    side = config.side
    out = []
    for lab, sl in enumerate(objects, start=1):
        if sl is None:
            continue
        r_sl, q_sl = sl
        touches = (
            r_sl.start == 0 or q_sl.start == 0 or r_sl.stop == side or q_sl.stop == side
        )
        out.append(
            Cluster(
                label=lab,
                size=int(counts[lab]),
                q_min=q_sl.start,
                q_max=q_sl.stop - 1,
                r_min=r_sl.start,
                r_max=r_sl.stop - 1,
                touches_frame=touches,
                labels=labels,
            )
        )
    return out


# ---------------------------------------------------------------------------
# hexagonal-dual interface tracing
# ---------------------------------------------------------------------------
# Dual-vertex encoding: triangle families T1(q, r) = {(q,r), (q+1,r), (q,r+1)}
# and T2(q, r) = {(q+1,r), (q,r+1), (q+1,r+1)}. Dual edges are indexed by the
# site bond they cross: E(q,r) for (q,r)-(q+1,r), NW(q,r) for (q,r)-(q,r+1)
# and D(q,r) for the short diagonal (q+1,r)-(q,r+1).


def _trace_binary_interfaces(white: np.ndarray) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """All white/black separating cycles of a padded boolean site array.

    The outermost ring of the array must be uniformly False. Returns one
    (type, q, r) integer-array triple per cycle, each dual edge used exactly
    once.
    """
    h, w = white.shape
    hw = h * w
    present = np.zeros(3 * hw, dtype=bool)
    e_mask = white[:, :-1] != white[:, 1:]
    nw_mask = white[:-1, :] != white[1:, :]
    d_mask = white[:-1, 1:] != white[1:, :-1]
    rr, qq = np.nonzero(e_mask)
    present[0 * hw + rr * w + qq] = True
    rr, qq = np.nonzero(nw_mask)
    present[1 * hw + rr * w + qq] = True
    rr, qq = np.nonzero(d_mask)
    present[2 * hw + rr * w + qq] = True

    edge_codes = np.nonzero(present)[0]
    used = np.zeros(3 * hw, dtype=bool)
    loops = []

    def endpoints(e: int) -> tuple[int, int]:
        f, rem = divmod(e, hw)
        r, q = divmod(rem, w)
        v1 = r * w + q  # T1(q, r)
        if f == 0:
            v2 = hw + (r - 1) * w + q  # T2(q, r-1)
        elif f == 1:
            v2 = hw + r * w + (q - 1)  # T2(q-1, r)
        else:
            v2 = hw + r * w + q  # T2(q, r)
        return v1, v2

    def other_edge_at(v: int, e: int) -> int:
        t, rem = divmod(v, hw)
        r, q = divmod(rem, w)
        if t == 0:
            slots = (rem, hw + rem, 2 * hw + rem)  # E(q,r), NW(q,r), D(q,r)
        else:
            slots = (hw + rem + 1, r * w + q + w, 2 * hw + rem)  # NW(q+1,r), E(q,r+1), D(q,r)
        for s in slots:
            if s != e and present[s]:
                return s
        raise InvalidParameter("interface degree is not 2; array ring must be blank")

    for e0 in edge_codes:
        e0 = int(e0)
        if used[e0]:
            continue
        v_start, v = endpoints(e0)
        used[e0] = True
        verts = [v_start, v]
        e = e0
        while True:
            e = other_edge_at(v, e)
            if e == e0:
                break
            used[e] = True
            a, b = endpoints(e)
            v = b if a == v else a
            verts.append(v)
        if verts[-1] == verts[0]:
            verts.pop()
        arr = np.asarray(verts, dtype=np.int64)
        t = arr // hw
        r = (arr % hw) // w
        q = (arr % hw) % w
        loops.append((t, q, r))
    return loops


def _dual_loop(t: np.ndarray, q: np.ndarray, r: np.ndarray, q_off: float, r_off: float) -> SimpleLoop:
    aq = q + q_off + np.where(t == 0, 1.0 / 3.0, 2.0 / 3.0)
    ar = r + r_off + np.where(t == 0, 1.0 / 3.0, 2.0 / 3.0)
    x, y = axial_to_xy(aq, ar)
    loop = SimpleLoop(np.column_stack([x, y]))
    if signed_area(loop) < 0:
        loop = SimpleLoop(loop.vertices[::-1])
    return loop


def interface_loops(config: PercConfig) -> list[SimpleLoop]:
    """All white/black interface cycles on the hexagonal dual, CCW oriented."""
    padded = np.pad(config.white, 1, constant_values=False)
    return [_dual_loop(t, q, r, -1.0, -1.0) for t, q, r in _trace_binary_interfaces(padded)]


# ---------------------------------------------------------------------------
# outer perimeters with fjord filling
# ---------------------------------------------------------------------------

_NEIGHBOR_OFFSETS = ((0, 1), (0, -1), (1, 0), (-1, 0), (1, -1), (-1, 1))  # (dr, dq)


def _retained_complement(comp: np.ndarray) -> np.ndarray:
    """Cells of the unbounded complement with two vertex-disjoint escapes.

    comp is a padded boolean mask of non-cluster cells whose outer ring is
    entirely True. A virtual infinity vertex is attached to every ring cell
    and the block-cut structure of the complement graph is computed by an
    iterative depth-first search; a cell is retained when it shares a
    non-bridge block with infinity (Menger: that is exactly two disjoint
    paths to infinity).
    """
    h, w = comp.shape
    # restrict to the component of the complement that contains the ring
    labels, _ = ndimage.label(comp, structure=TRI_STRUCTURE)
    uinf = labels == labels[0, 0]
    rs, qs = np.nonzero(uinf)
    m = rs.size
    idx = -np.ones((h, w), dtype=np.int64)
    idx[rs, qs] = np.arange(m)

    adj: list[list[int]] = [[] for _ in range(m + 1)]
    inf_idx = m
    on_ring = (rs == 0) | (rs == h - 1) | (qs == 0) | (qs == w - 1)
    for dr, dq in _NEIGHBOR_OFFSETS:
        rn, qn = rs + dr, qs + dq
        ok = (rn >= 0) & (rn < h) & (qn >= 0) & (qn < w)
        src = idx[rs[ok], qs[ok]]
        dst = idx[rn[ok], qn[ok]]
        good = dst >= 0
        for a, b in zip(src[good], dst[good]):
            adj[a].append(int(b))
    for a in np.nonzero(on_ring)[0]:
        adj[int(a)].append(inf_idx)
        adj[inf_idx].append(int(a))

    disc = np.full(m + 1, -1, dtype=np.int64)
    low = np.zeros(m + 1, dtype=np.int64)
    parent = np.full(m + 1, -1, dtype=np.int64)
    retained = np.zeros(m + 1, dtype=bool)
    estack: list[tuple[int, int]] = []
    timer = 0
    disc[inf_idx] = low[inf_idx] = timer
    timer += 1
    stack: list[tuple[int, object]] = [(inf_idx, iter(adj[inf_idx]))]
    while stack:
        u, it = stack[-1]
        advanced = False
        for v in it:
            if disc[v] == -1:
                estack.append((u, v))
                parent[v] = u
                disc[v] = low[v] = timer
                timer += 1
                stack.append((v, iter(adj[v])))
                advanced = True
                break
            if v != parent[u] and disc[v] < disc[u]:
                estack.append((u, v))
                if disc[v] < low[u]:
                    low[u] = disc[v]
        if advanced:
            continue
        stack.pop()
        if not stack:
            continue
        p = stack[-1][0]
        if low[u] < low[p]:
            low[p] = low[u]
        if low[u] >= disc[p]:
            block_vertices = set()
            n_edges = 0
            while estack:
                a, b = estack.pop()
                block_vertices.add(a)
                block_vertices.add(b)
                n_edges += 1
                if (a, b) == (p, u):
                    break
            if inf_idx in block_vertices and n_edges >= 2:
                for bv in block_vertices:
                    retained[bv] = True

    out = np.zeros((h, w), dtype=bool)
    out[rs, qs] = retained[:m]
    return out


@dataclass(frozen=True)
class PerimeterLoop:
    """Outer perimeter of a cluster: fjords without two disjoint escapes filled."""

    loop: SimpleLoop
    cluster_label: int


def _single_interface(filled: np.ndarray, q_off: float, r_off: float) -> SimpleLoop:
    cycles = _trace_binary_interfaces(filled)
    if len(cycles) != 1:
        raise InvalidParameter(f"expected one boundary cycle, got {len(cycles)}")
    t, q, r = cycles[0]
    return _dual_loop(t, q, r, q_off, r_off)


def outer_perimeter(cluster: Cluster, config: PercConfig) -> PerimeterLoop:
    """Perimeter after filling every fjord lacking two disjoint paths to infinity."""
    if cluster.touches_frame:
        raise TouchesFrame("frame-touching clusters are boundary-contaminated")
    mask, q0, r0 = cluster.site_mask(pad=1)
    retained = _retained_complement(~mask)
    filled = ~retained
    return PerimeterLoop(
        loop=_single_interface(filled, q0, r0), cluster_label=cluster.label
    )


def outer_interface_loop(cluster: Cluster, config: PercConfig) -> SimpleLoop:
    """The cluster's outer interface cycle (no fjord filling): the boundary
    against the unbounded complement component, holes kept inside."""
    if cluster.touches_frame:
        raise TouchesFrame("frame-touching clusters are boundary-contaminated")
    mask, q0, r0 = cluster.site_mask(pad=1)
    comp = ~mask
    labels, _ = ndimage.label(comp, structure=TRI_STRUCTURE)
    filled = labels != labels[0, 0]
    return _single_interface(filled, q0, r0)


# ---------------------------------------------------------------------------
# ensemble statistics
# ---------------------------------------------------------------------------


def _bbox_cartesian_extent(c: Cluster) -> float:
    dq = c.q_max - c.q_min + 1
    dr = c.r_max - c.r_min + 1
    return float(np.hypot(dq + 0.5 * dr, SQRT3_2 * dr))


def perimeter_loops_in_window(
    config: PercConfig, diam_lo: float, diam_hi: float
) -> list[PerimeterLoop]:
    """Outer perimeters of non-frame white clusters with diameter in the window."""
    out = []
    for c in clusters(config, "white"):
        if c.touches_frame:
            continue
        extent = _bbox_cartesian_extent(c)
        if extent < 0.5 * diam_lo or extent > 2.5 * diam_hi + 4:
            continue
        per = outer_perimeter(c, config)
        d = diameter(per.loop)
        if diam_lo <= d <= diam_hi:
            out.append(per)
    return out


def perimeter_shape_sample(
    side: int,
    diam_window: tuple[float, float],
    n_configs: int,
    seed: int = 0,
) -> list[Shape]:
    """Normalized shapes of white-cluster outer perimeters across configurations."""
    diam_lo, diam_hi = diam_window
    if not (0 < diam_lo < diam_hi):
        raise InvalidWindow("need 0 < diam_lo < diam_hi")
    if diam_hi > side / 4:
        raise InvalidWindow("window must sit well inside the box (diam_hi <= side/4)")
    seeds = np.random.SeedSequence(seed).spawn(n_configs)
    shapes = []
    for s in seeds:
        config = sample_config(side, 0.5, s)
        for per in perimeter_loops_in_window(config, diam_lo, diam_hi):
            shapes.append(
                normalize_shape(per.loop, "translate-and-scale", provenance="percolation-perimeter")
            )
    return shapes


def pi_mass_estimate(
    event: LoopEvent,
    side: int,
    n_configs: int,
    seed: int = 0,
    diam_bounds: tuple[float, float] | None = None,
) -> Estimate:
    """Expected number of qualifying outer perimeters per unit area.

    The event must be bounded and frame-safe (qualifying loops must fit well
    inside the box). diam_bounds, when given, prefilters clusters by a
    necessary perimeter-diameter range before tracing.
    """
    if side < 8:
        raise InvalidParameter("box too small")
    area = side * side * SQRT3_2
    lo, hi = diam_bounds if diam_bounds is not None else (0.0, np.inf)
    seeds = np.random.SeedSequence(seed).spawn(n_configs)
    counts = np.empty(n_configs)
    for i, s in enumerate(seeds):
        config = sample_config(side, 0.5, s)
        n_hit = 0
        for c in clusters(config, "white"):
            if c.touches_frame:
                continue
            extent = _bbox_cartesian_extent(c)
            if extent < 0.5 * lo or extent > 2.5 * hi + 4:
                continue
            per = outer_perimeter(c, config)
            if event.evaluate(per.loop):
                n_hit += 1
        counts[i] = n_hit / area
    return mass_estimate(counts)
