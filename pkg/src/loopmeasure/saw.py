"""Exact enumeration of self-avoiding polygons on the square lattice and the
weighted discrete loop measure with per-step weight 1/lambda.

Translation classes are anchored canonically: the class representative is the
traversal that starts at the lexicographically smallest vertex (by (y, x))
and leaves it eastward; the stored step string is the lexicographic minimum
over cyclic rotations of that traversal. Reflections are genuinely different
polygons and stay distinct. The connective constant is never hard-coded:
its default value is extrapolated from the census itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BudgetExceeded, InsufficientData, InvalidParameter
from .events import LoopEvent, evaluate_event
from .geom import PolyLoop, SimpleLoop, winding_numbers
from .stats import linear_fit

STEPS = {"E": (1, 0), "N": (0, 1), "W": (-1, 0), "S": (0, -1)}
DEFAULT_BUDGET = 22


@dataclass(frozen=True)
class LatticeLoop:
    """Positioned self-avoiding polygon: anchor vertex plus unit steps."""

    anchor: tuple[int, int]
    steps: str

    def __post_init__(self):
        n = len(self.steps)
        if n < 4 or n % 2 != 0:
            raise InvalidParameter("closed lattice loops have even length >= 4")
        x, y = 0, 0
        seen = {(0, 0)}
        for i, s in enumerate(self.steps):
            dx, dy = STEPS[s]
            x, y = x + dx, y + dy
            if (x, y) in seen and not (i == n - 1 and (x, y) == (0, 0)):
                raise InvalidParameter("steps revisit a vertex")
            seen.add((x, y))
        if (x, y) != (0, 0):
            raise InvalidParameter("steps do not close")

    def vertices(self) -> np.ndarray:
        out = np.empty((len(self.steps), 2))
        x, y = self.anchor
        for i, s in enumerate(self.steps):
            out[i] = (x, y)
            dx, dy = STEPS[s]
            x, y = x + dx, y + dy
        return out

    def as_loop(self) -> SimpleLoop:
        return SimpleLoop(self.vertices())

    def translated(self, dx: int, dy: int) -> "LatticeLoop":
        return LatticeLoop(anchor=(self.anchor[0] + dx, self.anchor[1] + dy), steps=self.steps)


@dataclass(frozen=True)
class SapCensus:
    """Counts and canonical representatives of translation classes by length."""

    n_max: int
    counts: dict[int, int]
    representatives: dict[int, tuple[str, ...]]

    def total(self) -> int:
        return sum(self.counts.values())


def _canonical_rotation(steps: str) -> str:
    doubled = steps + steps
    n = len(steps)
    return min(doubled[i : i + n] for i in range(n))


def _class_step_strings(n_max: int):
    """Yield one traversal step string per translation class, via anchored DFS.

    The anchor is the (y, x)-smallest vertex of the polygon; its two incident
    edges necessarily go east and north, so enumerating east-first paths that
    stay in the half-plane {y > 0 or (y = 0 and x >= 0)} and close through
    the north edge visits every class exactly once.
    """
    path_steps: list[str] = []
    visited = {(0, 0), (1, 0)}
    out: list[str] = []

    def dfs(x: int, y: int):
        depth = len(path_steps) + 1  # steps taken including the initial E
        for s, (dx, dy) in STEPS.items():
            nx, ny = x + dx, y + dy
            if ny < 0 or (ny == 0 and nx < 0):
                continue
            if nx == 0 and ny == 0:
                if depth + 1 >= 4:
                    out.append("E" + "".join(path_steps) + s)
                continue
            if (nx, ny) in visited:
                continue
            if depth + 1 + abs(nx) + abs(ny) > n_max:
                continue
            visited.add((nx, ny))
            path_steps.append(s)
            dfs(nx, ny)
            path_steps.pop()
            visited.remove((nx, ny))

    if n_max >= 4:
        dfs(1, 0)
    return out


def enumerate_saps(n_max: int, budget: int = DEFAULT_BUDGET) -> SapCensus:
    """Exhaustive census of self-avoiding polygons up to translation."""
    if n_max > budget:
        raise BudgetExceeded(f"n_max {n_max} exceeds the enumeration budget {budget}")
    counts: dict[int, int] = {}
    reps: dict[int, list[str]] = {}
    for steps in _class_step_strings(n_max):
        n = len(steps)
        counts[n] = counts.get(n, 0) + 1
        reps.setdefault(n, []).append(_canonical_rotation(steps))
    for n in reps:
        reps[n].sort()
    return SapCensus(
        n_max=n_max,
        counts=dict(sorted(counts.items())),
        representatives={n: tuple(v) for n, v in sorted(reps.items())},
    )


def naive_enumerate(n_max: int) -> dict[int, int]:
    """Independent brute-force census oracle: enumerate every closed
    self-avoiding walk from the origin with no canonical pruning, then dedupe
    translation classes by their translated edge sets."""
    if n_max > 16:
        raise BudgetExceeded("the naive oracle is meant for n_max <= 16")
    classes: dict[int, set] = {}

    def canonical_edges(verts: list[tuple[int, int]]) -> frozenset:
        xs = [v[0] for v in verts]
        ys = [v[1] for v in verts]
        x0, y0 = min(xs), min(ys)
        shifted = [(x - x0, y - y0) for x, y in verts]
        edges = set()
        for a, b in zip(shifted, shifted[1:] + shifted[:1]):
            edges.add((min(a, b), max(a, b)))
        return frozenset(edges)

    path = [(0, 0)]
    visited = {(0, 0)}

    def dfs():
        x, y = path[-1]
        for dx, dy in STEPS.values():
            nx, ny = x + dx, y + dy
            if (nx, ny) == (0, 0) and len(path) >= 4:
                classes.setdefault(len(path), set()).add(canonical_edges(path))
            if (nx, ny) in visited:
                continue
            if len(path) + abs(nx) + abs(ny) > n_max:
                continue
            visited.add((nx, ny))
            path.append((nx, ny))
            dfs()
            path.pop()
            visited.remove((nx, ny))

    dfs()
    return {n: len(s) for n, s in sorted(classes.items())}


def connective_estimate(census: SapCensus) -> list[tuple[int, float]]:
    """Ratio estimates lambda_n = (count_n / count_{n-2})^(1/2) from the census."""
    if census.n_max < 10:
        raise InsufficientData("need a census with n_max >= 10")
    out = []
    for n in sorted(census.counts):
        if n - 2 in census.counts:
            out.append((n, float(np.sqrt(census.counts[n] / census.counts[n - 2]))))
    if not out:
        raise InsufficientData("census too small for ratio estimates")
    return out


def default_lambda(census: SapCensus) -> float:
    """Connective-constant default: extrapolate the ratio estimates to n -> oo
    with a linear fit in 1/n. Crude but self-consistent; no literature value
    is baked in."""
    est = connective_estimate(census)
    if len(est) < 3:
        return est[-1][1]
    ns = np.array([n for n, _ in est], dtype=float)
    vs = np.array([v for _, v in est])
    _, intercept, _ = linear_fit(1.0 / ns, vs)
    return float(intercept)


@dataclass(frozen=True)
class SapMassResult:
    """Truncated discrete-measure mass: sum of lambda^(-n) over positioned loops."""

    mass: float
    n_max: int
    lam: float
    positioned_count: int
    truncated: bool = True


def _loop_from_steps(steps: str) -> tuple[np.ndarray, tuple[int, int, int, int]]:
    verts = LatticeLoop(anchor=(0, 0), steps=steps).vertices()
    xs, ys = verts[:, 0], verts[:, 1]
    return verts, (int(xs.min()), int(xs.max()), int(ys.min()), int(ys.max()))


def _translation_box(event: LoopEvent, bbox, search_box):
    """Integer anchor-translation ranges outside which the event cannot hold."""
    x_min, x_max, y_min, y_max = bbox
    lo_x, hi_x = -np.inf, np.inf
    lo_y, hi_y = -np.inf, np.inf
    for px, py in event.surrounded_points():
        # the translated polygon's bounding box must cover the point
        lo_x = max(lo_x, np.ceil(px - x_max))
        hi_x = min(hi_x, np.floor(px - x_min))
        lo_y = max(lo_y, np.ceil(py - y_max))
        hi_y = min(hi_y, np.floor(py - y_min))
    if search_box is not None:
        sx0, sx1, sy0, sy1 = search_box
        lo_x, hi_x = max(lo_x, np.ceil(sx0 - x_min)), min(hi_x, np.floor(sx1 - x_max))
        lo_y, hi_y = max(lo_y, np.ceil(sy0 - y_min)), min(hi_y, np.floor(sy1 - y_max))
    if not (np.isfinite(lo_x) and np.isfinite(hi_x) and np.isfinite(lo_y) and np.isfinite(hi_y)):
        raise InvalidParameter("event is unbounded; pass a search_box")
    return int(lo_x), int(hi_x), int(lo_y), int(hi_y)


def sap_mass(
    event: LoopEvent,
    n_max: int,
    lam: float,
    census: SapCensus | None = None,
    search_box=None,
    budget: int = DEFAULT_BUDGET,
) -> SapMassResult:
    """Lower-bound mass of the event under the discrete loop measure.

    Sums lambda^(-n) over all distinct positioned loops (translations counted
    separately) of length <= n_max satisfying the event. The result is a
    truncation at n_max of the full measure.
    """
    if lam <= 1:
        raise InvalidParameter("lambda must exceed 1")
    if census is None or census.n_max < n_max:
        census = enumerate_saps(n_max, budget=budget)
    from .events import SurroundsPoint

    total = 0.0
    positioned = 0
    for n, reps in census.representatives.items():
        if n > n_max:
            continue
        weight = lam ** (-n)
        for steps in reps:
            verts, bbox = _loop_from_steps(steps)
            lo_x, hi_x, lo_y, hi_y = _translation_box(event, bbox, search_box)
            if hi_x < lo_x or hi_y < lo_y:
                continue
            txs = np.arange(lo_x, hi_x + 1)
            tys = np.arange(lo_y, hi_y + 1)
            if isinstance(event, SurroundsPoint):
                # vectorize: winding of the fixed polygon around (point - t)
                px, py = event.point
                grid = np.array([(px - tx, py - ty) for tx in txs for ty in tys])
                hits = int(np.count_nonzero(winding_numbers(PolyLoop(verts), grid)))
            else:
                hits = 0
                loop = PolyLoop(verts)
                for tx in txs:
                    for ty in tys:
                        if evaluate_event(event.translated((float(tx), float(ty))), loop):
                            hits += 1
            total += weight * hits
            positioned += hits
    return SapMassResult(mass=total, n_max=n_max, lam=lam, positioned_count=positioned)


@dataclass(frozen=True)
class AnnulusDecayPoint:
    hole_side: int
    width: int
    min_winding_length: int
    mass: float
    loop_count: int
    truncated_to: int


def _winding_loops_in_frame(hole_side: int, width: int, n_max: int):
    """Every positioned self-avoiding polygon inside the square-frame annulus
    that winds around the hole, up to length n_max."""
    a, w = hole_side, width
    s = a + 2 * w

    def allowed(x: int, y: int) -> bool:
        if not (0 <= x <= s and 0 <= y <= s):
            return False
        return not (w < x < w + a and w < y < w + a)

    center = (w + a / 2.0 + 0.1, w + a / 2.0 + 0.1)
    found: list[LatticeLoop] = []

    verts_sorted = [(x, y) for y in range(s + 1) for x in range(s + 1) if allowed(x, y)]
    for x0, y0 in verts_sorted:
        # anchored DFS as in the census, but in absolute coordinates
        if not (allowed(x0 + 1, y0) and allowed(x0, y0 + 1)):
            continue
        path_steps: list[str] = []
        visited = {(x0, y0), (x0 + 1, y0)}

        def dfs(x: int, y: int):
            depth = len(path_steps) + 1
            for step, (dx, dy) in STEPS.items():
                nx, ny = x + dx, y + dy
                if not allowed(nx, ny):
                    continue
                if ny < y0 or (ny == y0 and nx < x0):
                    continue
                if (nx, ny) == (x0, y0):
                    if depth + 1 >= 4:
                        found.append(LatticeLoop(anchor=(x0, y0), steps="E" + "".join(path_steps) + step))
                    continue
                if (nx, ny) in visited:
                    continue
                if depth + 1 + abs(nx - x0) + abs(ny - y0) > n_max:
                    continue
                visited.add((nx, ny))
                path_steps.append(step)
                dfs(nx, ny)
                path_steps.pop()
                visited.remove((nx, ny))

        dfs(x0 + 1, y0)

    winding = []
    for loop in found:
        pl = loop.as_loop()
        if winding_numbers(pl, np.array([center]))[0] != 0:
            winding.append(loop)
    return winding


def annulus_decay(
    hole_sides: list[int],
    width: int = 1,
    lam: float | None = None,
    n_max: int = 20,
    budget: int = DEFAULT_BUDGET,
) -> list[AnnulusDecayPoint]:
    """Masses of loops winding a square-frame annulus, one point per hole side.

    The minimal winding length is 4 * (hole_side + 1); frames whose minimal
    length exceeds n_max report zero mass with the truncation flag intact.
    """
    if n_max > budget:
        raise BudgetExceeded(f"n_max {n_max} exceeds the enumeration budget {budget}")
    if width < 1:
        raise InvalidParameter("width must be at least 1")
    if lam is None:
        lam = default_lambda(enumerate_saps(min(14, n_max)))
    out = []
    for a in hole_sides:
        min_len = 4 * (a + 1)
        if min_len > n_max:
            out.append(
                AnnulusDecayPoint(
                    hole_side=a, width=width, min_winding_length=min_len,
                    mass=0.0, loop_count=0, truncated_to=n_max,
                )
            )
            continue
        loops = _winding_loops_in_frame(a, width, n_max)
        mass = float(sum(lam ** (-len(l.steps)) for l in loops))
        out.append(
            AnnulusDecayPoint(
                hole_side=a, width=width, min_winding_length=min_len,
                mass=mass, loop_count=len(loops), truncated_to=n_max,
            )
        )
    return out
