"""Deterministic predicates on simple loops, usable as estimator targets.

Every event is evaluable on a loop deterministically. Events carry a target
("trace" or "boundary") telling the Brownian estimators whether to test the
sampled trace or its extracted outer boundary. Where the truth value of the
event under scaling r * loop is an interval in r computable from the loop
alone, the event exposes that interval through ``radial_interval`` and the
rooted-measure estimator integrates dr/r over it analytically instead of
sampling r. Pure max-radius windows therefore come back with zero variance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameter
from .geom import AnnulusSpec, PolyLoop, diameter, max_radius, winding_number

TRACE = "trace"
BOUNDARY = "boundary"

_NEVER = (np.inf, np.inf)


def _check_target(target: str) -> str:
    if target not in (TRACE, BOUNDARY):
        raise InvalidParameter(f"event target must be 'trace' or 'boundary', got {target!r}")
    return target


@dataclass(frozen=True)
class LoopEvent:
    """Base event. Subclasses implement evaluate(); radial_interval is optional."""

    target: str = BOUNDARY

    def evaluate(self, loop: PolyLoop) -> bool:
        raise NotImplementedError

    def radial_interval(self, loop: PolyLoop):
        """{r > 0 : event holds for r * loop} as (lo, hi), or None if not an interval."""
        return None

    def surrounded_points(self) -> list[tuple[float, float]]:
        """Points every accepted loop must wind around (for precondition checks)."""
        return []

    def translated(self, dz) -> "LoopEvent":
        """Event E' with E'(loop) == E(loop + dz)."""
        return self

    def scaled(self, factor: float) -> "LoopEvent":
        """Event E' with E'(loop) == E(loop / factor)."""
        return self

    def __and__(self, other: "LoopEvent") -> "Conjunction":
        mine = self.events if isinstance(self, Conjunction) else (self,)
        theirs = other.events if isinstance(other, Conjunction) else (other,)
        return Conjunction(events=mine + theirs)


@dataclass(frozen=True)
class ScaleWindow(LoopEvent):
    """max_radius of the loop lies in [lo, hi]."""

    lo: float = 1.0
    hi: float = np.e
    target: str = TRACE

    def __post_init__(self):
        _check_target(self.target)
        if not (0 < self.lo < self.hi):
            raise InvalidParameter("need 0 < lo < hi")

    def evaluate(self, loop: PolyLoop) -> bool:
        return self.lo <= max_radius(loop) <= self.hi

    def radial_interval(self, loop: PolyLoop):
        mr = max_radius(loop)
        return (self.lo / mr, self.hi / mr)

    def scaled(self, factor: float) -> "ScaleWindow":
        return ScaleWindow(lo=self.lo * factor, hi=self.hi * factor, target=self.target)


@dataclass(frozen=True)
class DiameterWindow(LoopEvent):
    """Loop diameter lies in [lo, hi]."""

    lo: float = 1.0
    hi: float = 2.0
    target: str = BOUNDARY

    def __post_init__(self):
        _check_target(self.target)
        if not (0 < self.lo < self.hi):
            raise InvalidParameter("need 0 < lo < hi")

    def evaluate(self, loop: PolyLoop) -> bool:
        return self.lo <= diameter(loop) <= self.hi

    def radial_interval(self, loop: PolyLoop):
        d = diameter(loop)
        return (self.lo / d, self.hi / d)

    def scaled(self, factor: float) -> "DiameterWindow":
        return DiameterWindow(lo=self.lo * factor, hi=self.hi * factor, target=self.target)


@dataclass(frozen=True)
class SurroundsPoint(LoopEvent):
    """Nonzero winding number around the given point."""

    point: tuple[float, float] = (0.0, 0.0)
    target: str = BOUNDARY

    def __post_init__(self):
        _check_target(self.target)

    def evaluate(self, loop: PolyLoop) -> bool:
        return winding_number(loop, self.point) != 0

    def radial_interval(self, loop: PolyLoop):
        # winding around the origin is invariant under scaling about it
        if self.point != (0.0, 0.0):
            return None
        return (0.0, np.inf) if winding_number(loop, self.point) != 0 else _NEVER

    def surrounded_points(self):
        return [tuple(map(float, self.point))]

    def translated(self, dz) -> "SurroundsPoint":
        return SurroundsPoint(point=(self.point[0] - dz[0], self.point[1] - dz[1]), target=self.target)

    def scaled(self, factor: float) -> "SurroundsPoint":
        return SurroundsPoint(point=(self.point[0] * factor, self.point[1] * factor), target=self.target)


@dataclass(frozen=True)
class ContainedInDisc(LoopEvent):
    """Every vertex lies strictly inside the disc of given center and radius."""

    center: tuple[float, float] = (0.0, 0.0)
    radius: float = 1.0
    target: str = BOUNDARY

    def __post_init__(self):
        _check_target(self.target)
        if self.radius <= 0:
            raise InvalidParameter("radius must be positive")

    def evaluate(self, loop: PolyLoop) -> bool:
        v = loop.vertices - np.asarray(self.center, dtype=float)
        return bool(np.max(np.hypot(v[:, 0], v[:, 1])) < self.radius)

    def radial_interval(self, loop: PolyLoop):
        if self.center != (0.0, 0.0):
            return None
        return (0.0, self.radius / max_radius(loop))

    def translated(self, dz) -> "ContainedInDisc":
        return ContainedInDisc(
            center=(self.center[0] - dz[0], self.center[1] - dz[1]),
            radius=self.radius,
            target=self.target,
        )

    def scaled(self, factor: float) -> "ContainedInDisc":
        return ContainedInDisc(
            center=(self.center[0] * factor, self.center[1] * factor),
            radius=self.radius * factor,
            target=self.target,
        )


@dataclass(frozen=True)
class ExitsSet(LoopEvent):
    """The loop touches a closed point set given as one or more polylines.

    A loop confined to a domain "exits" the complement of the set exactly
    when some loop segment intersects some chain segment; the test is exact
    segment-segment intersection.
    """

    chains: tuple = ()
    target: str = BOUNDARY

    def __post_init__(self):
        _check_target(self.target)
        frozen = []
        for chain in self.chains:
            arr = np.asarray(chain, dtype=float).reshape(-1, 2)
            if arr.shape[0] < 2:
                raise InvalidParameter("each chain needs at least 2 points")
            arr.setflags(write=False)
            frozen.append(arr)
        object.__setattr__(self, "chains", tuple(frozen))

    def _obstacle_segments(self) -> tuple[np.ndarray, np.ndarray]:
        starts = np.concatenate([c[:-1] for c in self.chains])
        ends = np.concatenate([c[1:] for c in self.chains])
        return starts, ends

    def evaluate(self, loop: PolyLoop) -> bool:
        b1, b2 = self._obstacle_segments()
        return bool(_any_segment_intersection(loop.vertices, b1, b2))

    def translated(self, dz) -> "ExitsSet":
        dz = np.asarray(dz, dtype=float)
        return ExitsSet(chains=tuple(c - dz for c in self.chains), target=self.target)

    def scaled(self, factor: float) -> "ExitsSet":
        return ExitsSet(chains=tuple(c * factor for c in self.chains), target=self.target)


@dataclass(frozen=True)
class SurroundsAnnulusHole(LoopEvent):
    """Loop stays in the open annulus and winds around its hole."""

    annulus: AnnulusSpec = None  # type: ignore[assignment]
    target: str = BOUNDARY

    def __post_init__(self):
        _check_target(self.target)
        if self.annulus is None:
            raise InvalidParameter("an AnnulusSpec is required")

    def evaluate(self, loop: PolyLoop) -> bool:
        c = np.asarray(self.annulus.center, dtype=float)
        v = loop.vertices - c
        radii = np.hypot(v[:, 0], v[:, 1])
        if not (radii.min() > self.annulus.r_inner and radii.max() < self.annulus.r_outer):
            return False
        return winding_number(loop, c) != 0

    def radial_interval(self, loop: PolyLoop):
        if tuple(self.annulus.center) != (0.0, 0.0):
            return None
        radii = np.hypot(loop.vertices[:, 0], loop.vertices[:, 1])
        rmin, rmax = radii.min(), radii.max()
        if rmin <= 0 or winding_number(loop, (0.0, 0.0)) == 0:
            return _NEVER
        lo = self.annulus.r_inner / rmin
        hi = self.annulus.r_outer / rmax
        if hi <= lo:
            return _NEVER
        return (lo, hi)

    def surrounded_points(self):
        return [tuple(map(float, self.annulus.center))]

    def translated(self, dz) -> "SurroundsAnnulusHole":
        return SurroundsAnnulusHole(annulus=self.annulus.translated((-dz[0], -dz[1])), target=self.target)

    def scaled(self, factor: float) -> "SurroundsAnnulusHole":
        c = self.annulus.center
        scaled = AnnulusSpec(
            (c[0] * factor, c[1] * factor),
            self.annulus.r_inner * factor,
            self.annulus.r_outer * factor,
        )
        return SurroundsAnnulusHole(annulus=scaled, target=self.target)


@dataclass(frozen=True)
class ContainedInSquareFrame(LoopEvent):
    """Every vertex lies strictly between two concentric axis-aligned squares
    centered at the origin (a Chebyshev annulus)."""

    inner_half: float = 0.5
    outer_half: float = 2.0
    target: str = BOUNDARY

    def __post_init__(self):
        _check_target(self.target)
        if not (0 < self.inner_half < self.outer_half):
            raise InvalidParameter("need 0 < inner_half < outer_half")

    def evaluate(self, loop: PolyLoop) -> bool:
        cheb = np.maximum(np.abs(loop.vertices[:, 0]), np.abs(loop.vertices[:, 1]))
        return bool(cheb.min() > self.inner_half and cheb.max() < self.outer_half)

    def radial_interval(self, loop: PolyLoop):
        cheb = np.maximum(np.abs(loop.vertices[:, 0]), np.abs(loop.vertices[:, 1]))
        lo = self.inner_half / cheb.min()
        hi = self.outer_half / cheb.max()
        return (lo, hi) if hi > lo else _NEVER

    def scaled(self, factor: float) -> "ContainedInSquareFrame":
        return ContainedInSquareFrame(
            inner_half=self.inner_half * factor, outer_half=self.outer_half * factor, target=self.target
        )


@dataclass(frozen=True)
class Impossible(LoopEvent):
    """The empty event; useful as a zero-mass sanity check."""

    target: str = BOUNDARY

    def evaluate(self, loop: PolyLoop) -> bool:
        return False

    def radial_interval(self, loop: PolyLoop):
        return _NEVER


@dataclass(frozen=True)
class Conjunction(LoopEvent):
    """Finite AND of events; target bookkeeping is per conjunct."""

    events: tuple = ()

    def __post_init__(self):
        if not self.events:
            raise InvalidParameter("empty conjunction")

    @property
    def targets(self) -> set[str]:
        return {e.target for e in self.events}

    def evaluate(self, loop: PolyLoop) -> bool:
        # only meaningful when all conjuncts share one target loop
        return all(e.evaluate(loop) for e in self.events)

    def evaluate_on(self, loops_by_target: dict[str, PolyLoop]) -> bool:
        return all(e.evaluate(loops_by_target[e.target]) for e in self.events)

    def radial_interval_on(self, loops_by_target: dict[str, PolyLoop]):
        lo, hi = 0.0, np.inf
        for e in self.events:
            iv = e.radial_interval(loops_by_target[e.target])
            if iv is None:
                return None
            lo, hi = max(lo, iv[0]), min(hi, iv[1])
        return (lo, hi)

    def surrounded_points(self):
        pts: list[tuple[float, float]] = []
        for e in self.events:
            pts.extend(e.surrounded_points())
        return pts

    def translated(self, dz) -> "Conjunction":
        return Conjunction(events=tuple(e.translated(dz) for e in self.events))

    def scaled(self, factor: float) -> "Conjunction":
        return Conjunction(events=tuple(e.scaled(factor) for e in self.events))


def event_targets(event: LoopEvent) -> set[str]:
    if isinstance(event, Conjunction):
        return event.targets
    return {event.target}


def evaluate_event(event: LoopEvent, loop: PolyLoop) -> bool:
    """Evaluate an event on a single loop (all conjuncts against that loop)."""
    return event.evaluate(loop)


def evaluate_on(event: LoopEvent, loops_by_target: dict[str, PolyLoop]) -> bool:
    """Evaluate with per-target loops (trace versus extracted boundary)."""
    if isinstance(event, Conjunction):
        return event.evaluate_on(loops_by_target)
    return event.evaluate(loops_by_target[event.target])


def radial_interval_on(event: LoopEvent, loops_by_target: dict[str, PolyLoop]):
    if isinstance(event, Conjunction):
        return event.radial_interval_on(loops_by_target)
    return event.radial_interval(loops_by_target[event.target])


def _any_segment_intersection(vertices: np.ndarray, b1: np.ndarray, b2: np.ndarray) -> bool:
    """True if any closed-loop segment intersects any obstacle segment."""
    all_a1 = vertices
    all_a2 = np.roll(vertices, -1, axis=0)
    # chunk over loop segments to bound the (segments x obstacles) workspace
    for lo in range(0, all_a1.shape[0], 8192):
        a1 = all_a1[lo : lo + 8192][:, None, :]
        a2 = all_a2[lo : lo + 8192][:, None, :]
        c1 = b1[None, :, :]
        c2 = b2[None, :, :]

        def cross(o, p, q):
            return (p[..., 0] - o[..., 0]) * (q[..., 1] - o[..., 1]) - (p[..., 1] - o[..., 1]) * (
                q[..., 0] - o[..., 0]
            )

        d1 = cross(c1, c2, a1)
        d2 = cross(c1, c2, a2)
        d3 = cross(a1, a2, c1)
        d4 = cross(a1, a2, c2)
        proper = (np.sign(d1) * np.sign(d2) < 0) & (np.sign(d3) * np.sign(d4) < 0)
        if proper.any():
            return True
        # collinear / endpoint touches
        touch = ((d1 == 0) | (d2 == 0) | (d3 == 0) | (d4 == 0)) & (
            np.maximum(np.minimum(a1[..., 0], a2[..., 0]), np.minimum(c1[..., 0], c2[..., 0]))
            <= np.minimum(np.maximum(a1[..., 0], a2[..., 0]), np.maximum(c1[..., 0], c2[..., 0]))
        ) & (
            np.maximum(np.minimum(a1[..., 1], a2[..., 1]), np.minimum(c1[..., 1], c2[..., 1]))
            <= np.minimum(np.maximum(a1[..., 1], a2[..., 1]), np.maximum(c1[..., 1], c2[..., 1]))
        )
        if touch.any():
            # bounding boxes overlap and one endpoint is collinear; verify a
            # genuine touch point exists (cheap exact check on the few hits)
            idx = np.argwhere(touch)
            for i, j in idx[:256]:
                if _segment_touch(all_a1[lo + i], all_a2[lo + i], b1[j], b2[j]):
                    return True
    return False


def _segment_touch(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    def on_seg(a, b, c):
        return (
            min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
            and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])
        )

    o1, o2 = orient(q1, q2, p1), orient(q1, q2, p2)
    o3, o4 = orient(p1, p2, q1), orient(p1, p2, q2)
    if (o1 > 0) != (o2 > 0) and (o3 > 0) != (o4 > 0) and o1 != 0 and o2 != 0 and o3 != 0 and o4 != 0:
        return True
    if o1 == 0 and on_seg(q1, q2, p1):
        return True
    if o2 == 0 and on_seg(q1, q2, p2):
        return True
    if o3 == 0 and on_seg(p1, p2, q1):
        return True
    if o4 == 0 and on_seg(p1, p2, q2):
        return True
    return False
