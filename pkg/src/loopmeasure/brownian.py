"""Brownian loop sampling and importance-weighted estimators of the infinite
loop measures.

The rooted measure on loops at the origin is realized through its exact
product decomposition: a scale factor r with density dr/r times the law of a
time-1 bridge rescaled to maximal radius 1. Restricted to a scale window
[r_lo, r_hi] this is finitely sampleable, and the window normalization pins
the measure so that the mass of {max_radius in [1, e]} is exactly 1 (which
also makes the restriction-formula constant equal to 1). The unrooted,
translation-invariant measure is realized as area element x rooted measure,
reweighted by 1/(2T) against a log-uniform time proposal on a window.

Events whose r-section is an interval are integrated in r analytically
(zero-variance for pure scale windows); everything else falls back to
sampling r log-uniformly.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import EmptyBatch, InvalidEvent, InvalidParameter, InvalidWindow, WindowViolation
from .events import (
    BOUNDARY,
    TRACE,
    Conjunction,
    ContainedInDisc,
    DiameterWindow,
    LoopEvent,
    SurroundsAnnulusHole,
    SurroundsPoint,
    evaluate_on,
    event_targets,
    radial_interval_on,
)
from .geom import PolyLoop, SimpleLoop, diameter, max_radius, shape_functionals, signed_area
from .hull import ComponentDecomposition, component_boundary, decompose, filled_area, outer_boundary, rasterize, winding_field
from .sharding import map_shards, shard_counts, spawn_seeds
from .stats import Estimate, mass_estimate

DEFAULT_N_STEPS = 2**16
DEFAULT_HULL_RESOLUTION = 1.0 / 128.0


@dataclass(frozen=True)
class BrownianLoopPath:
    """Discrete rooted Brownian bridge; points[k] is the position at time k*T/n."""

    points: np.ndarray
    time_length: float

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
            raise InvalidParameter("points must be an (n_steps + 1, 2) array")
        if not (np.all(pts[0] == 0.0) and np.all(pts[-1] == 0.0)):
            raise InvalidParameter("a rooted bridge starts and ends exactly at the origin")
        object.__setattr__(self, "points", pts)

    @property
    def n_steps(self) -> int:
        return self.points.shape[0] - 1

    def as_loop(self) -> PolyLoop:
        """The trace as a cyclic polygon (duplicate closing point dropped)."""
        return PolyLoop(self.points[:-1])


@dataclass(frozen=True)
class WeightedLoopSample:
    """One importance sample: a loop trace with its measure weight."""

    weight: float
    time_length: float | None = None
    scale: float | None = None
    root: tuple[float, float] = (0.0, 0.0)
    accepted: bool = False
    functionals: dict | None = None


@dataclass(frozen=True)
class RadialWindow:
    """Scale window for the rooted-measure estimators."""

    r_lo: float
    r_hi: float
    n: int
    seed: int = 0

    def __post_init__(self):
        if not (0 < self.r_lo < self.r_hi):
            raise InvalidWindow("need 0 < r_lo < r_hi")
        if self.n <= 0:
            raise InvalidWindow("need a positive sample count")


@dataclass(frozen=True)
class MWindow:
    """Root box K, time window and sample counts for the unrooted measure."""

    box: tuple[float, float, float, float]  # x_lo, x_hi, y_lo, y_hi
    t_lo: float
    t_hi: float
    n_loops: int
    z_per_loop: int = 64
    seed: int = 0

    def __post_init__(self):
        x_lo, x_hi, y_lo, y_hi = self.box
        if not (x_lo < x_hi and y_lo < y_hi):
            raise InvalidWindow("empty root box")
        if not (0 < self.t_lo < self.t_hi):
            raise InvalidWindow("need 0 < t_lo < t_hi")
        if self.n_loops <= 0 or self.z_per_loop <= 0:
            raise InvalidWindow("need positive sample counts")

    @property
    def area(self) -> float:
        x_lo, x_hi, y_lo, y_hi = self.box
        return (x_hi - x_lo) * (y_hi - y_lo)


def _bridge_points(rng: np.random.Generator, t: float, n_steps: int) -> np.ndarray:
    inc = rng.standard_normal((n_steps, 2)) * np.sqrt(t / n_steps)
    w = np.empty((n_steps + 1, 2))
    w[0] = 0.0
    np.cumsum(inc, axis=0, out=w[1:])
    frac = (np.arange(n_steps + 1, dtype=float) / n_steps)[:, None]
    b = w - frac * w[-1]
    b[0] = 0.0
    b[-1] = 0.0
    return b


def sample_bridge(t: float, n_steps: int, seed) -> BrownianLoopPath:
    """Exact discrete Brownian bridge of time length t rooted at the origin."""
    if t <= 0:
        raise InvalidParameter("time length must be positive")
    if n_steps < 2:
        raise InvalidParameter("need at least 2 steps")
    rng = np.random.default_rng(seed)
    return BrownianLoopPath(points=_bridge_points(rng, t, n_steps), time_length=t)


def _shape_loop(rng: np.random.Generator, n_steps: int) -> PolyLoop:
    pts = _bridge_points(rng, 1.0, n_steps)[:-1]
    pts /= np.hypot(pts[:, 0], pts[:, 1]).max()
    return PolyLoop(pts)


def sample_shape_loop(n_steps: int, seed) -> PolyLoop:
    """Scale representative of the rooted loop law: a time-1 bridge rescaled
    so the maximal distance from the origin is 1 (the root stays at 0)."""
    if n_steps < 2:
        raise InvalidParameter("need at least 2 steps")
    return _shape_loop(np.random.default_rng(seed), n_steps)


def extract_outer_boundary(loop: PolyLoop, h: float) -> SimpleLoop:
    """Outer boundary of the loop's filled hull at raster resolution h."""
    return outer_boundary(decompose(rasterize(loop, h)))


# ---------------------------------------------------------------------------
# rooted-measure estimator (mass of events under the scale-decomposed measure)
# ---------------------------------------------------------------------------


def _rooted_shard(args) -> tuple[np.ndarray, int, list]:
    event, r_lo, r_hi, n, seed, hull_h, n_steps, want_log = args
    rng = np.random.default_rng(seed)
    need_boundary = BOUNDARY in event_targets(event)
    log_ratio = float(np.log(r_hi / r_lo))
    masses = np.empty(n)
    violations = 0
    records: list = []
    for i in range(n):
        trace = _shape_loop(rng, n_steps)
        loops = {TRACE: trace}
        if need_boundary:
            loops[BOUNDARY] = extract_outer_boundary(trace, hull_h)
        interval = radial_interval_on(event, loops)
        if interval is not None:
            lo_e = max(interval[0], r_lo)
            hi_e = min(interval[1], r_hi)
            m = float(np.log(hi_e / lo_e)) if hi_e > lo_e else 0.0
            masses[i] = m
            scale = None
            if m > 0.0 and (interval[0] < r_lo * 1.01 or interval[1] > r_hi / 1.01):
                violations += 1
        else:
            u = rng.random()
            scale = r_lo * (r_hi / r_lo) ** u
            scaled = {k: v.scaled(scale) for k, v in loops.items()}
            hit = evaluate_on(event, scaled)
            masses[i] = log_ratio if hit else 0.0
            if hit and (scale < r_lo * 1.01 or scale > r_hi / 1.01):
                violations += 1
        if want_log:
            target = loops.get(BOUNDARY, trace)
            records.append(
                {
                    "weight": float(masses[i]),
                    "scale": scale,
                    "accepted": bool(masses[i] > 0),
                    "functionals": {
                        "diameter": diameter(target),
                        "max_radius": max_radius(target),
                        "signed_area": signed_area(target),
                    },
                }
            )
    return masses, violations, records


def _run_rooted(event, window, hull_resolution, n_steps, jobs, n_shards, sample_log):
    seeds = spawn_seeds(window.seed, n_shards)
    counts = shard_counts(window.n, n_shards)
    args = [
        (event, window.r_lo, window.r_hi, c, s, hull_resolution, n_steps, sample_log is not None)
        for c, s in zip(counts, seeds)
        if c > 0
    ]
    results = map_shards(_rooted_shard, args, jobs)
    masses = np.concatenate([r[0] for r in results])
    violations = sum(r[1] for r in results)
    if violations:
        warnings.warn(
            f"{violations} accepted samples within 1% of the scale-window edge; "
            "the window may truncate the event",
            WindowViolation,
        )
    if sample_log is not None:
        with open(sample_log, "w", encoding="utf-8") as fh:
            for r in results:
                for rec in r[2]:
                    fh.write(json.dumps(rec) + "\n")
    return masses


def estimate_N0_mass(
    event: LoopEvent,
    window: RadialWindow,
    hull_resolution: float = DEFAULT_HULL_RESOLUTION,
    n_steps: int = DEFAULT_N_STEPS,
    jobs: int = 1,
    n_shards: int = 32,
    sample_log=None,
) -> Estimate:
    """Mass of the event under the rooted loop measure, restricted to the window.

    The caller asserts that the event implies max_radius in [r_lo, r_hi]; an
    accepted sample within 1% of a window edge raises a WindowViolation
    warning. hull_resolution is relative to the unit-max-radius shape, so the
    extraction commutes with scaling and the estimator is scale covariant.
    """
    masses = _run_rooted(event, window, hull_resolution, n_steps, jobs, n_shards, sample_log)
    return mass_estimate(masses)


def estimate_nu_mass(
    event: LoopEvent,
    window: RadialWindow,
    hull_resolution: float = DEFAULT_HULL_RESOLUTION,
    n_steps: int = DEFAULT_N_STEPS,
    jobs: int = 1,
    n_shards: int = 32,
    root=(0.0, 0.0),
    sample_log=None,
) -> Estimate:
    """Mass of an outer-boundary event under the induced self-avoiding-loop
    measure, normalized so the restriction-formula constant is 1.

    With a nonzero root the loops are rooted there instead (the translated
    sampler); the event is an absolute-plane predicate either way.
    """
    if event_targets(event) == {TRACE}:
        raise InvalidEvent("nu is a measure on outer boundaries; use a boundary-target event")
    root = (float(root[0]), float(root[1]))
    shifted = event.translated(root) if root != (0.0, 0.0) else event
    masses = _run_rooted(shifted, window, hull_resolution, n_steps, jobs, n_shards, sample_log)
    return mass_estimate(masses)


# ---------------------------------------------------------------------------
# unrooted-measure estimator
# ---------------------------------------------------------------------------


def _conjuncts(event: LoopEvent) -> list[LoopEvent]:
    return list(event.events) if isinstance(event, Conjunction) else [event]


def _trace_diameter_prefilter(event: LoopEvent, boundary_mode: str, h: float):
    """Necessary bounds on the trace diameter for the event to hold for any root."""
    lo, hi = 0.0, np.inf
    for e in _conjuncts(event):
        if isinstance(e, DiameterWindow):
            lo = max(lo, e.lo)
            if e.target == TRACE or boundary_mode == "outer":
                hi = min(hi, e.hi)
        elif isinstance(e, SurroundsAnnulusHole):
            lo = max(lo, 2 * e.annulus.r_inner)
            if boundary_mode == "outer":
                hi = min(hi, 2 * e.annulus.r_outer)
        elif isinstance(e, ContainedInDisc):
            if e.target == TRACE or boundary_mode == "outer":
                hi = min(hi, 2 * e.radius)
    slack = 4.0 * h
    return max(0.0, lo - slack), hi + slack


class _LoopContext:
    """Per-bridge lazy raster context shared by all root positions."""

    def __init__(self, trace: PolyLoop, h: float, boundary_mode: str):
        self.trace = trace
        self.h = h
        self.boundary_mode = boundary_mode
        self._decomp: ComponentDecomposition | None = None
        self._outer: SimpleLoop | None = None
        self._component_loops: dict[int, SimpleLoop] = {}

    @property
    def decomp(self) -> ComponentDecomposition:
        if self._decomp is None:
            self._decomp = decompose(rasterize(self.trace, self.h))
        return self._decomp

    @property
    def outer(self) -> SimpleLoop:
        if self._outer is None:
            self._outer = outer_boundary(self.decomp)
        return self._outer

    def component_loop(self, label: int) -> SimpleLoop:
        if label not in self._component_loops:
            self._component_loops[label] = component_boundary(self.decomp, label)
        return self._component_loops[label]

    def labels_at(self, points: np.ndarray) -> np.ndarray:
        """Component label per point: 0 marked, -1 off grid, else component id."""
        d = self.decomp
        ox, oy = d.grid.origin
        ix = np.floor((points[:, 0] - ox) / d.h).astype(np.int64)
        iy = np.floor((points[:, 1] - oy) / d.h).astype(np.int64)
        ny, nx = d.labels.shape
        ok = (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny)
        out = np.full(points.shape[0], -1, dtype=np.int64)
        out[ok] = d.labels[iy[ok], ix[ok]]
        return out

    def enclosed(self, labels: np.ndarray) -> np.ndarray:
        """Whether the labeled cell lies inside the filled hull."""
        return (labels != self.decomp.unbounded_label) & (labels != -1)

    def boundary_for_label(self, label: int) -> SimpleLoop:
        """The loop carrying boundary events for a root whose marked point has
        this label: the component boundary in origin-component mode when the
        point sits in a bounded pocket, the outer boundary otherwise."""
        if self.boundary_mode == "origin-component" and label > 0 and label != self.decomp.unbounded_label:
            return self.component_loop(int(label))
        return self.outer


def _m_indicators(event: LoopEvent, ctx: _LoopContext, zs: np.ndarray) -> np.ndarray:
    """Event indicators for the translated loops z + trace, vectorized over z."""
    m = zs.shape[0]
    alive = np.ones(m, dtype=bool)
    marked = event.surrounded_points()
    marked_labels = None
    if ctx.boundary_mode == "origin-component":
        if not marked:
            raise InvalidEvent("origin-component mode needs an event that surrounds a point")
        marked_labels = ctx.labels_at(np.asarray(marked[0], dtype=float) - zs)

    def boundary_loop(k: int) -> SimpleLoop:
        if marked_labels is None:
            return ctx.outer
        return ctx.boundary_for_label(int(marked_labels[k]))

    for e in _conjuncts(event):
        if not alive.any():
            break
        vals = np.zeros(m, dtype=bool)
        idx = np.nonzero(alive)[0]
        if isinstance(e, DiameterWindow) and e.target == TRACE:
            vals[idx] = e.lo <= diameter(ctx.trace) <= e.hi
        elif isinstance(e, DiameterWindow) and marked_labels is None:
            vals[idx] = e.lo <= diameter(ctx.outer) <= e.hi
        elif isinstance(e, SurroundsPoint) and e.target == BOUNDARY:
            pts = np.asarray(e.point, dtype=float) - zs[idx]
            vals[idx] = ctx.enclosed(ctx.labels_at(pts))
        elif isinstance(e, SurroundsAnnulusHole) and e.target == BOUNDARY:
            center = np.asarray(e.annulus.center, dtype=float)
            pts = center - zs
            enclosed = ctx.enclosed(ctx.labels_at(pts[idx]))
            for j, k in enumerate(idx):
                if not enclosed[j]:
                    continue
                rel = boundary_loop(k).vertices - pts[k]
                radii = np.hypot(rel[:, 0], rel[:, 1])
                vals[k] = radii.min() > e.annulus.r_inner and radii.max() < e.annulus.r_outer
        elif isinstance(e, ContainedInDisc) and e.target == BOUNDARY:
            c = np.asarray(e.center, dtype=float)
            for k in idx:
                rel = boundary_loop(k).vertices - (c - zs[k])
                vals[k] = np.hypot(rel[:, 0], rel[:, 1]).max() < e.radius
        else:
            for k in idx:
                shifted = e.translated(zs[k])
                loop = ctx.trace if e.target == TRACE else boundary_loop(k)
                vals[k] = shifted.evaluate(loop)
        alive &= vals
    return alive


def _m_shard(args) -> tuple[np.ndarray, int]:
    event, box, t_lo, t_hi, n_loops, z_per_loop, seed, hull_h, n_steps, boundary_mode = args
    rng = np.random.default_rng(seed)
    x_lo, x_hi, y_lo, y_hi = box
    area = (x_hi - x_lo) * (y_hi - y_lo)
    log_t = float(np.log(t_hi / t_lo))
    d_lo, d_hi = _trace_diameter_prefilter(event, boundary_mode, hull_h)
    vals = np.zeros(n_loops * z_per_loop)
    violations = 0
    for i in range(n_loops):
        t = t_lo * (t_hi / t_lo) ** rng.random()
        pts = _bridge_points(rng, t, n_steps)[:-1]
        zs = np.column_stack(
            [rng.uniform(x_lo, x_hi, z_per_loop), rng.uniform(y_lo, y_hi, z_per_loop)]
        )
        span_x = np.ptp(pts[:, 0])
        span_y = np.ptp(pts[:, 1])
        if np.hypot(span_x, span_y) < d_lo or max(span_x, span_y) > d_hi:
            continue
        ctx = _LoopContext(PolyLoop(pts), hull_h, boundary_mode)
        ind = _m_indicators(event, ctx, zs)
        if not ind.any():
            continue
        weight = area * log_t / (2.0 * t)
        vals[i * z_per_loop : (i + 1) * z_per_loop] = weight * ind
        if t < t_lo * 1.01 or t > t_hi / 1.01:
            violations += int(ind.sum())
        edge_x = (zs[ind, 0] < x_lo + 0.01 * (x_hi - x_lo)) | (zs[ind, 0] > x_hi - 0.01 * (x_hi - x_lo))
        edge_y = (zs[ind, 1] < y_lo + 0.01 * (y_hi - y_lo)) | (zs[ind, 1] > y_hi - 0.01 * (y_hi - y_lo))
        violations += int(np.count_nonzero(edge_x | edge_y))
    return vals, violations


def estimate_M_mass(
    event: LoopEvent,
    window: MWindow,
    hull_resolution: float = 1.0 / 64.0,
    n_steps: int = DEFAULT_N_STEPS,
    jobs: int = 1,
    n_shards: int = 32,
    boundary_mode: str = "outer",
) -> Estimate:
    """Mass of the event under the unrooted Brownian loop measure.

    Draws the root z uniformly on the window box and the time length
    log-uniformly; the importance weight |K| log(t_hi/t_lo) / (2T) corrects
    the dT/(2T^2) density against the proposal. boundary_mode selects which
    boundary carries boundary-target events: the outer boundary, or the
    boundary of the complement component containing the event's marked point
    (hull_resolution here is an absolute cell size).
    """
    if boundary_mode not in ("outer", "origin-component"):
        raise InvalidParameter("boundary_mode must be 'outer' or 'origin-component'")
    seeds = spawn_seeds(window.seed, n_shards)
    counts = shard_counts(window.n_loops, n_shards)
    args = [
        (
            event,
            window.box,
            window.t_lo,
            window.t_hi,
            c,
            window.z_per_loop,
            s,
            hull_resolution,
            n_steps,
            boundary_mode,
        )
        for c, s in zip(counts, seeds)
        if c > 0
    ]
    results = map_shards(_m_shard, args, jobs)
    vals = np.concatenate([r[0] for r in results])
    violations = sum(r[1] for r in results)
    if violations:
        warnings.warn(
            f"{violations} accepted samples within 1% of the (z, T) window edge",
            WindowViolation,
        )
    return mass_estimate(vals)


# ---------------------------------------------------------------------------
# direct expectations
# ---------------------------------------------------------------------------


def _hull_area_shard(args) -> np.ndarray:
    t, n_steps, n, seed, h = args
    rng = np.random.default_rng(seed)
    areas = np.empty(n)
    for i in range(n):
        pts = _bridge_points(rng, t, n_steps)[:-1]
        areas[i] = filled_area(decompose(rasterize(PolyLoop(pts), h)))
    return areas


def expected_hull_area(
    t: float,
    n_steps: int = DEFAULT_N_STEPS,
    n_samples: int = 1000,
    hull_resolution: float = 1.0 / 64.0,
    seed: int = 0,
    jobs: int = 1,
    n_shards: int = 32,
) -> Estimate:
    """Mean filled hull area of time-t bridges at the given raster resolution."""
    if n_samples <= 0:
        raise EmptyBatch("n_samples must be positive")
    seeds = spawn_seeds(seed, n_shards)
    counts = shard_counts(n_samples, n_shards)
    args = [(t, n_steps, c, s, hull_resolution) for c, s in zip(counts, seeds) if c > 0]
    areas = np.concatenate(map_shards(_hull_area_shard, args, jobs))
    return mass_estimate(areas)


def _winding_shard(args) -> np.ndarray:
    t, n_steps, n, seed, h, n_max = args
    rng = np.random.default_rng(seed)
    out = np.empty((n, 2 * n_max))
    for i in range(n):
        pts = _bridge_points(rng, t, n_steps)[:-1]
        loop = PolyLoop(pts)
        grid = rasterize(loop, h)
        wf = winding_field(loop, grid)
        clipped = np.clip(wf, -n_max - 1, n_max + 1) + n_max + 1
        counts = np.bincount(clipped.ravel(), minlength=2 * n_max + 3)
        per_n = counts[1 : 2 * n_max + 2] * h * h  # indices for -n_max..n_max
        out[i, :n_max] = per_n[:n_max]
        out[i, n_max:] = per_n[n_max + 1 :]
    return out


def winding_matrix(
    t: float,
    n_steps: int = DEFAULT_N_STEPS,
    n_samples: int = 1000,
    hull_resolution: float = 1.0 / 64.0,
    seed: int = 0,
    n_max: int = 5,
    jobs: int = 1,
    n_shards: int = 32,
) -> np.ndarray:
    """Per-sample areas by winding index: column j holds the area with index
    n for n = -n_max..-1, 1..n_max (index 0 excluded; its set is unbounded)."""
    if n_samples <= 0:
        raise EmptyBatch("n_samples must be positive")
    seeds = spawn_seeds(seed, n_shards)
    counts = shard_counts(n_samples, n_shards)
    args = [(t, n_steps, c, s, hull_resolution, n_max) for c, s in zip(counts, seeds) if c > 0]
    return np.concatenate(map_shards(_winding_shard, args, jobs), axis=0)


def winding_index_order(n_max: int) -> list[int]:
    return list(range(-n_max, 0)) + list(range(1, n_max + 1))


def winding_area_spectrum(
    t: float,
    n_steps: int = DEFAULT_N_STEPS,
    n_samples: int = 1000,
    hull_resolution: float = 1.0 / 64.0,
    seed: int = 0,
    n_max: int = 5,
    jobs: int = 1,
    n_shards: int = 32,
) -> dict[int, Estimate]:
    """Expected area with winding index n, for 1 <= |n| <= n_max."""
    mat = winding_matrix(t, n_steps, n_samples, hull_resolution, seed, n_max, jobs, n_shards)
    return {n: mass_estimate(mat[:, j]) for j, n in enumerate(winding_index_order(n_max))}


def hull_area_richardson(
    t: float,
    n_steps: int = DEFAULT_N_STEPS,
    n_samples: int = 1000,
    hull_resolution: float = 1.0 / 64.0,
    seed: int = 0,
    jobs: int = 1,
    n_shards: int = 32,
) -> dict[str, Estimate]:
    """Mean hull area at resolutions h and h/2 plus the h -> 0 extrapolation.

    Both rasters share each bridge, so the per-sample extrapolation
    2 A(h/2) - A(h) removes the staircase bias at first order; at these
    resolutions the bias is empirically linear in h because h sits at the
    path's discretization scale, where the frontier is rectifiable.
    """
    if n_samples <= 0:
        raise EmptyBatch("n_samples must be positive")
    seeds = spawn_seeds(seed, n_shards)
    counts = shard_counts(n_samples, n_shards)
    args = [(t, n_steps, c, s, hull_resolution) for c, s in zip(counts, seeds) if c > 0]
    pairs = np.concatenate(map_shards(_hull_area_pair_shard, args, jobs), axis=0)
    coarse, fine = pairs[:, 0], pairs[:, 1]
    return {
        "coarse": mass_estimate(coarse),
        "fine": mass_estimate(fine),
        "extrapolated": mass_estimate(2.0 * fine - coarse),
    }


def _hull_area_pair_shard(args) -> np.ndarray:
    t, n_steps, n, seed, h = args
    rng = np.random.default_rng(seed)
    out = np.empty((n, 2))
    for i in range(n):
        pts = _bridge_points(rng, t, n_steps)[:-1]
        loop = PolyLoop(pts)
        out[i, 0] = filled_area(decompose(rasterize(loop, h)))
        out[i, 1] = filled_area(decompose(rasterize(loop, h / 2.0)))
    return out


def _inner_ratio_shard(args) -> tuple[np.ndarray, bool]:
    t, n_steps, n, seed, resolutions = args
    from .geom import signed_area as _signed_area

    rng = np.random.default_rng(seed)
    out = np.empty((n, len(resolutions)))
    identity_ok = True
    for i in range(n):
        pts = _bridge_points(rng, t, n_steps)[:-1]
        loop = PolyLoop(pts)
        for j, h in enumerate(resolutions):
            decomp = decompose(rasterize(loop, h))
            inner = float(decomp.cell_counts[decomp.bounded_labels].sum()) * h * h
            total = filled_area(decomp)
            out[i, j] = inner / total
            if i == 0:
                # independent form of the bookkeeping identity: the traced
                # outer boundary encloses exactly the filled cells
                traced = abs(_signed_area(outer_boundary(decomp)))
                identity_ok = identity_ok and traced == total
    return out, identity_ok


def inner_area_ratios(
    t: float,
    n_steps: int,
    n_samples: int,
    resolutions,
    seed: int = 0,
    jobs: int = 1,
    n_shards: int = 16,
):
    """Batch means of (sum of inner areas) / (filled area) per resolution.

    Returns a list of (h, Estimate, identity_ok) where identity_ok certifies
    that the traced outer boundary area equals the filled cell area exactly.
    """
    if n_samples <= 0:
        raise EmptyBatch("n_samples must be positive")
    seeds = spawn_seeds(seed, n_shards)
    counts = shard_counts(n_samples, n_shards)
    args = [(t, n_steps, c, s, tuple(resolutions)) for c, s in zip(counts, seeds) if c > 0]
    results = map_shards(_inner_ratio_shard, args, jobs)
    mat = np.concatenate([r[0] for r in results], axis=0)
    identity_ok = all(r[1] for r in results)
    return [(h, mass_estimate(mat[:, j]), identity_ok) for j, h in enumerate(resolutions)]


def _component_count_shard(args) -> np.ndarray:
    t, n_steps, n, seed, h, thresholds = args
    rng = np.random.default_rng(seed)
    out = np.empty((n, len(thresholds)))
    for i in range(n):
        pts = _bridge_points(rng, t, n_steps)[:-1]
        decomp = decompose(rasterize(PolyLoop(pts), h))
        areas = decomp.bounded_areas()
        for j, u in enumerate(thresholds):
            out[i, j] = np.count_nonzero(areas >= u)
    return out


def component_count_curve(
    t: float,
    n_steps: int,
    n_samples: int,
    hull_resolution: float,
    thresholds,
    seed: int = 0,
    jobs: int = 1,
    n_shards: int = 16,
) -> list[Estimate]:
    """Mean number of bounded complement components with area >= u, per u."""
    if n_samples <= 0:
        raise EmptyBatch("n_samples must be positive")
    seeds = spawn_seeds(seed, n_shards)
    counts = shard_counts(n_samples, n_shards)
    args = [(t, n_steps, c, s, hull_resolution, tuple(float(u) for u in thresholds)) for c, s in zip(counts, seeds) if c > 0]
    mat = np.concatenate(map_shards(_component_count_shard, args, jobs), axis=0)
    return [mass_estimate(mat[:, j]) for j in range(mat.shape[1])]


def _ergodic_shard(args) -> np.ndarray:
    n_steps, n, seed, h, top_k = args
    from .geom import normalize_shape, shape_functionals
    from .hull import component_boundary

    rng = np.random.default_rng(seed)
    out = np.empty(n)
    for i in range(n):
        pts = _bridge_points(rng, 1.0, n_steps)[:-1]
        decomp = decompose(rasterize(PolyLoop(pts), h))
        areas = decomp.bounded_areas()
        order = np.argsort(areas)[::-1][:top_k]
        vals = []
        for j in order:
            loop = component_boundary(decomp, int(decomp.bounded_labels[j]))
            shape = normalize_shape(loop, "translate-and-scale")
            vals.append(shape_functionals(shape)["area_over_diam2"])
        out[i] = float(np.mean(vals)) if vals else np.nan
    return out


def _boundary_functional_shard(args) -> list[dict]:
    n_steps, n, seed, h = args
    from .geom import normalize_shape, shape_functionals

    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        pts = _bridge_points(rng, 1.0, n_steps)[:-1]
        gamma = outer_boundary(decompose(rasterize(PolyLoop(pts), h)))
        shape = normalize_shape(gamma, "translate-and-scale", provenance="brownian-hull")
        out.append(shape_functionals(shape))
    return out


def boundary_shape_functionals(
    n_loops: int,
    n_steps: int = DEFAULT_N_STEPS,
    hull_resolution: float = DEFAULT_HULL_RESOLUTION,
    seed: int = 0,
    jobs: int = 1,
    n_shards: int = 32,
) -> list[dict]:
    """Shape functionals of normalized hull boundaries of time-1 bridges."""
    seeds = spawn_seeds(seed, n_shards)
    counts = shard_counts(n_loops, n_shards)
    args = [(n_steps, c, s, hull_resolution) for c, s in zip(counts, seeds) if c > 0]
    out: list[dict] = []
    for part in map_shards(_boundary_functional_shard, args, jobs):
        out.extend(part)
    return out


def ergodic_shape_average(
    n_steps: int,
    n_loops: int,
    top_components: int,
    hull_resolution: float,
    n_ensemble: int,
    seed: int = 0,
    jobs: int = 1,
    n_shards: int = 16,
) -> dict[str, Estimate]:
    """Average shape functional over each loop's largest bounded components,
    against the ensemble mean over hull-boundary shapes."""
    seeds = spawn_seeds(seed, n_shards)
    counts = shard_counts(n_loops, n_shards)
    args = [(n_steps, c, s, hull_resolution, top_components) for c, s in zip(counts, seeds) if c > 0]
    vals = np.concatenate(map_shards(_ergodic_shard, args, jobs))
    vals = vals[~np.isnan(vals)]
    ensemble = boundary_shape_functionals(
        n_ensemble, n_steps=n_steps, hull_resolution=2.0 * hull_resolution, seed=seed + 1, jobs=jobs
    )
    ens_vals = np.array([f["area_over_diam2"] for f in ensemble])
    return {
        "component_average": mass_estimate(vals),
        "ensemble_mean": mass_estimate(ens_vals),
    }


def _dimension_shard(args) -> np.ndarray:
    n_steps, n, seed, h, min_cells = args
    from .hull import boxcount_dimension

    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        pts = _bridge_points(rng, 1.0, n_steps)[:-1]
        gamma = outer_boundary(decompose(rasterize(PolyLoop(pts), h)))
        d = diameter(gamma)
        if d / h < min_cells:
            continue
        slope, _ = boxcount_dimension(gamma.vertices, scale_range=(4.0 * h, d / 4.0))
        out.append(slope)
    return np.asarray(out)


def boundary_dimension_sample(
    n_loops: int,
    n_steps: int = DEFAULT_N_STEPS,
    hull_resolution: float = 1.0 / 256.0,
    min_diameter_cells: int = 128,
    seed: int = 0,
    jobs: int = 1,
    n_shards: int = 32,
) -> Estimate:
    """Mean box-counting slope of hull boundaries over qualifying loops."""
    seeds = spawn_seeds(seed, n_shards)
    counts = shard_counts(n_loops, n_shards)
    args = [(n_steps, c, s, hull_resolution, min_diameter_cells) for c, s in zip(counts, seeds) if c > 0]
    slopes = np.concatenate(map_shards(_dimension_shard, args, jobs))
    return mass_estimate(slopes)


def two_root_agreement(
    z_tilde,
    events: list[LoopEvent],
    windows: list[RadialWindow],
    hull_resolution: float = DEFAULT_HULL_RESOLUTION,
    n_steps: int = DEFAULT_N_STEPS,
    jobs: int = 1,
    n_shards: int = 32,
) -> list[dict]:
    """Compare outer-boundary event masses under the origin-rooted measure and
    its translate rooted at z_tilde.

    Every event must structurally surround both the origin and z_tilde
    (otherwise the comparison is meaningless and InvalidEvent is raised). The
    two estimators share random numbers, so the reported paired difference is
    exactly zero when z_tilde is the origin.
    """
    z_tilde = (float(z_tilde[0]), float(z_tilde[1]))
    reports = []
    for event, window in zip(events, windows):
        surrounded = event.surrounded_points()
        has_origin = any(abs(p[0]) < 1e-12 and abs(p[1]) < 1e-12 for p in surrounded)
        has_z = any(
            abs(p[0] - z_tilde[0]) < 1e-12 and abs(p[1] - z_tilde[1]) < 1e-12 for p in surrounded
        )
        if not (has_origin and has_z):
            raise InvalidEvent("event must surround both the origin and z_tilde")
        m0 = _run_rooted(event, window, hull_resolution, n_steps, jobs, n_shards, None)
        shifted = event.translated(z_tilde) if z_tilde != (0.0, 0.0) else event
        m1 = _run_rooted(shifted, window, hull_resolution, n_steps, jobs, n_shards, None)
        est0 = mass_estimate(m0)
        est1 = mass_estimate(m1)
        diff = mass_estimate(m0 - m1)
        pooled_se = float(np.hypot(est0.half_width_95, est1.half_width_95) / 1.96)
        reports.append(
            {
                "root_mass": est0,
                "translated_mass": est1,
                "difference": diff,
                "pooled_se": pooled_se,
                "consistent": abs(est0.mean - est1.mean) <= 2.0 * pooled_se + 1e-300,
            }
        )
    return reports


def dump_traces(loops, path) -> None:
    """Write raw loop traces in the one-loop-per-line text format."""
    from .geom import write_loops

    write_loops(path, loops)
