"""Conformal quantities by Monte Carlo and discrete PDE.

Three estimators live here: walk-on-spheres Brownian exit (giving
log Phi'(0) = -E[log|Z_T|] for domains inside the unit disc), the radial
slit-disc semigroup with its capacity inverse, and the conformal modulus of
annular grid regions via the Dirichlet energy of a discrete harmonic
potential.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse.linalg import spsolve

from .errors import InvalidParameter, InvalidStart, NotAnnular
from .sharding import map_shards, spawn_seeds
from .stats import Estimate, weighted_mean_ci

WOS_MAX_ITER = 100_000


@dataclass(frozen=True)
class PlanarDomain:
    """Bounded planar domain built from boundary elements.

    Elements: an outer boundary (exact circle or closed polygon), optional
    circular or polygonal holes, and optional open polyline slits. The
    distance query returns the exact distance to the nearest boundary
    element, which is the correctness condition for walk-on-spheres.
    """

    outer_circle: tuple[float, float, float] | None = None  # (cx, cy, radius)
    outer_polygon: np.ndarray | None = None
    slits: tuple = ()
    hole_polygons: tuple = ()

    def __post_init__(self):
        if (self.outer_circle is None) == (self.outer_polygon is None):
            raise InvalidParameter("exactly one of outer_circle/outer_polygon is required")
        segs = []
        for chain in self.slits:
            chain = np.asarray(chain, dtype=float)
            if chain.ndim != 2 or chain.shape[0] < 2 or chain.shape[1] != 2:
                raise InvalidParameter("each slit must be a polyline of >= 2 points")
            segs.append(np.stack([chain[:-1], chain[1:]], axis=1))
        for poly in self.hole_polygons:
            poly = np.asarray(poly, dtype=float)
            closed = np.vstack([poly, poly[:1]])
            segs.append(np.stack([closed[:-1], closed[1:]], axis=1))
        if self.outer_polygon is not None:
            poly = np.asarray(self.outer_polygon, dtype=float)
            closed = np.vstack([poly, poly[:1]])
            segs.append(np.stack([closed[:-1], closed[1:]], axis=1))
        seg_arr = np.concatenate(segs, axis=0) if segs else np.zeros((0, 2, 2))
        seg_arr.setflags(write=False)
        object.__setattr__(self, "_segments", seg_arr)

    def distance_and_projection(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Exact distance to the boundary and the nearest boundary point."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        best_d = np.full(pts.shape[0], np.inf)
        best_p = np.zeros_like(pts)
        if self.outer_circle is not None:
            cx, cy, radius = self.outer_circle
            rel = pts - (cx, cy)
            rho = np.hypot(rel[:, 0], rel[:, 1])
            d = radius - rho
            safe = np.where(rho == 0, 1.0, rho)
            proj = (cx, cy) + rel * (radius / safe)[:, None]
            proj[rho == 0] = (cx + radius, cy)
            better = d < best_d
            best_d[better] = d[better]
            best_p[better] = proj[better]
        segs = self._segments
        if segs.shape[0]:
            a, b = segs[:, 0, :], segs[:, 1, :]
            d_ab = b - a
            len2 = np.einsum("ij,ij->i", d_ab, d_ab)
            len2 = np.where(len2 == 0, 1.0, len2)
            ap = pts[:, None, :] - a[None, :, :]
            t = np.clip(np.einsum("psk,sk->ps", ap, d_ab) / len2[None, :], 0.0, 1.0)
            proj = a[None, :, :] + t[..., None] * d_ab[None, :, :]
            dist = np.sqrt(((proj - pts[:, None, :]) ** 2).sum(axis=2))
            idx = dist.argmin(axis=1)
            dmin = dist[np.arange(pts.shape[0]), idx]
            better = dmin < best_d
            best_d[better] = dmin[better]
            best_p[better] = proj[np.arange(pts.shape[0]), idx][better]
        return best_d, best_p

    def contains(self, z) -> bool:
        z = np.asarray(z, dtype=float)
        if self.outer_circle is not None:
            cx, cy, radius = self.outer_circle
            if np.hypot(z[0] - cx, z[1] - cy) >= radius:
                return False
        else:
            if not _point_in_polygon(self.outer_polygon, z):
                return False
        for poly in self.hole_polygons:
            if _point_in_polygon(np.asarray(poly, dtype=float), z):
                return False
        d, _ = self.distance_and_projection(z[None, :])
        return bool(d[0] > 0)

    def diameter_hint(self) -> float:
        if self.outer_circle is not None:
            return 2.0 * self.outer_circle[2]
        v = np.asarray(self.outer_polygon, dtype=float)
        return float(np.hypot(np.ptp(v[:, 0]), np.ptp(v[:, 1])))


def _point_in_polygon(poly: np.ndarray, z) -> bool:
    x, y = float(z[0]), float(z[1])
    closed = np.vstack([poly, poly[:1]])
    px, py = closed[:-1, 0], closed[:-1, 1]
    qx, qy = closed[1:, 0], closed[1:, 1]
    crossing = ((py <= y) & (qy > y)) | ((qy <= y) & (py > y))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (y - py) / (qy - py)
    x_cross = px + t * (qx - px)
    return bool(np.count_nonzero(crossing & (x_cross > x)) % 2)


def unit_disc() -> PlanarDomain:
    return PlanarDomain(outer_circle=(0.0, 0.0, 1.0))


def disc(radius: float, center=(0.0, 0.0)) -> PlanarDomain:
    return PlanarDomain(outer_circle=(center[0], center[1], float(radius)))


def disc_with_radial_slit(r_slit: float, angle: float = 0.0) -> PlanarDomain:
    """Unit disc minus the radial segment [r_slit, 1) at the given angle."""
    if not (0 < r_slit < 1):
        raise InvalidParameter("slit radius must be in (0, 1)")
    direction = np.array([np.cos(angle), np.sin(angle)])
    chain = np.array([direction * r_slit, direction * 1.0])
    return PlanarDomain(outer_circle=(0.0, 0.0, 1.0), slits=(chain,))


def walk_exit_batch(domain: PlanarDomain, z0, shell_eps: float, n: int, seed) -> np.ndarray:
    """n walk-on-spheres exits from z0: jump uniformly on the largest safe
    circle until within shell_eps of the boundary, then project onto it."""
    z0 = np.asarray(z0, dtype=float)
    if not domain.contains(z0):
        raise InvalidStart(f"start point {tuple(z0)} is not interior")
    d0, _ = domain.distance_and_projection(z0[None, :])
    if d0[0] <= shell_eps:
        raise InvalidStart("start point is inside the absorbing shell")
    rng = np.random.default_rng(seed)
    pts = np.tile(z0, (n, 1))
    exits = np.empty((n, 2))
    alive = np.arange(n)
    for _ in range(WOS_MAX_ITER):
        d, proj = domain.distance_and_projection(pts[alive])
        done = d <= shell_eps
        if np.any(done):
            exits[alive[done]] = proj[done]
            alive = alive[~done]
            d = d[~done]
        if alive.size == 0:
            break
        theta = rng.uniform(0.0, 2 * np.pi, alive.size)
        pts[alive, 0] += d * np.cos(theta)
        pts[alive, 1] += d * np.sin(theta)
    else:
        raise InvalidParameter("walk-on-spheres failed to absorb; check the domain")
    return exits


def walk_exit(domain: PlanarDomain, z0, shell_eps: float, seed) -> np.ndarray:
    """Single walk-on-spheres exit point."""
    return walk_exit_batch(domain, z0, shell_eps, 1, seed)[0]


def _log_deriv_shard(args) -> np.ndarray:
    domain, eps, n, seed = args
    exits = walk_exit_batch(domain, (0.0, 0.0), eps, n, seed)
    return -np.log(np.hypot(exits[:, 0], exits[:, 1]))


def log_deriv_at_zero(
    domain: PlanarDomain,
    n_samples: int,
    shell_eps: float | None = None,
    seed: int = 0,
    jobs: int = 1,
    n_shards: int = 32,
) -> Estimate:
    """Estimate log Phi'(0) for a domain inside the unit disc containing 0.

    Uses -E[log |Z_T|] for the Brownian exit point Z_T, sampled by
    walk-on-spheres. Nonnegative up to Monte Carlo error for any such domain.
    """
    if n_samples <= 0:
        raise InvalidParameter("n_samples must be positive")
    if shell_eps is None:
        shell_eps = 1e-4 * domain.diameter_hint()
    seeds = spawn_seeds(seed, n_shards)
    counts = [n_samples // n_shards + (1 if i < n_samples % n_shards else 0) for i in range(n_shards)]
    shard_args = [(domain, shell_eps, c, s) for c, s in zip(counts, seeds) if c > 0]
    values = np.concatenate(map_shards(_log_deriv_shard, shard_args, jobs))
    return weighted_mean_ci(values, np.ones_like(values))


def slit_capacity(r: float) -> float:
    """Capacity t with Phi'(0) = (1+r)^2 / (4r) for the radial slit [r, 1)."""
    if not (0 < r <= 1):
        raise InvalidParameter("slit radius must be in (0, 1]")
    return float(np.log((1 + r) ** 2 / (4 * r)))


def slit_radius_for_capacity(t: float) -> float:
    """Inverse of slit_capacity: the r in (0, 1] with (1+r)^2/(4r) = e^t."""
    if t < 0:
        raise InvalidParameter("capacity must be nonnegative")
    et = np.exp(t)
    return float((2 * et - 1) - 2 * np.sqrt(et * (et - 1)))


def slit_uniformization(r: float):
    """Conformal map Phi from the slit disc onto the unit disc and its inverse.

    Phi fixes 0 and has real positive derivative (1+r)^2/(4r) there. Built by
    composing a Moebius map sending the slit to [0, 1), the square-root
    uniformization of the slit, the half-disc-to-half-plane map and a final
    Moebius map back to the disc.
    """
    if not (0 < r < 1):
        raise InvalidParameter("slit radius must be in (0, 1)")
    y0 = (1 - r) / (2 * np.sqrt(r))

    def forward(z):
        z = np.asarray(z, dtype=complex)
        w = (z - r) / (1 - r * z)
        s = np.sqrt(w)
        s = np.where(s.imag < 0, -s, s)
        zeta = -(s + 1 / s) / 2
        return (zeta - 1j * y0) / (zeta + 1j * y0)

    def inverse(omega):
        omega = np.asarray(omega, dtype=complex)
        zeta = 1j * y0 * (1 + omega) / (1 - omega)
        root = np.sqrt(zeta * zeta - 1)
        s = -zeta + root
        s = np.where(np.abs(s) > 1, -zeta - root, s)
        w = s * s
        return (w + r) / (1 + r * w)

    return forward, inverse


@dataclass(frozen=True)
class AnnularRegion:
    """Doubly connected grid region: a cell mask whose complement has exactly
    two components, the hole and the outside."""

    mask: np.ndarray
    hole_mask: np.ndarray = field(repr=False, default=None)  # type: ignore[assignment]
    outside_mask: np.ndarray = field(repr=False, default=None)  # type: ignore[assignment]

    @classmethod
    def from_mask(cls, mask) -> "AnnularRegion":
        mask = np.pad(np.asarray(mask, dtype=bool), 1, constant_values=False)
        labels, n = ndimage.label(~mask, structure=np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]]))
        if n != 2:
            raise NotAnnular(f"complement has {n} components, expected 2")
        outside_label = labels[0, 0]
        hole_label = 1 if outside_label == 2 else 2
        return cls(mask=mask, hole_mask=labels == hole_label, outside_mask=labels == outside_label)


def round_annulus_region(r_inner: float, r_outer: float, resolution: int) -> AnnularRegion:
    """Mask of the round annulus r_inner < |z| < r_outer at the given grid size."""
    if not (0 < r_inner < r_outer) or resolution < 8:
        raise InvalidParameter("need 0 < r_inner < r_outer and resolution >= 8")
    h = 2 * r_outer / resolution
    c = (np.arange(resolution) + 0.5) * h - r_outer
    xx, yy = np.meshgrid(c, c)
    rho = np.hypot(xx, yy)
    return AnnularRegion.from_mask((rho > r_inner) & (rho < r_outer))


def square_frame_region(inner_half: float, outer_half: float, resolution: int) -> AnnularRegion:
    """Mask of the region between two concentric axis-aligned squares."""
    if not (0 < inner_half < outer_half) or resolution < 8:
        raise InvalidParameter("need 0 < inner_half < outer_half and resolution >= 8")
    h = 2 * outer_half / resolution
    c = (np.arange(resolution) + 0.5) * h - outer_half
    xx, yy = np.meshgrid(c, c)
    m = np.maximum(np.abs(xx), np.abs(yy))
    return AnnularRegion.from_mask((m > inner_half) & (m < outer_half))


def modulus_estimate(region: AnnularRegion, residual: float = 1e-8) -> float:
    """Conformal modulus of the region: solve the discrete Laplace problem
    with potential 0 on the hole side and 1 outside, then 2*pi / energy."""
    mask = region.mask
    ny, nx = mask.shape
    if mask[0, :].any() or mask[-1, :].any() or mask[:, 0].any() or mask[:, -1].any():
        raise NotAnnular("region mask must not touch the grid border; use from_mask")
    ys, xs = np.nonzero(mask)
    n = ys.size
    if n == 0:
        raise NotAnnular("empty region")
    idx = -np.ones((ny, nx), dtype=np.int64)
    idx[ys, xs] = np.arange(n)

    fixed = np.zeros((ny, nx))
    fixed[region.outside_mask] = 1.0

    rows, cols, vals = [], [], []
    b = np.zeros(n)
    for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        yn, xn = ys + dy, xs + dx
        inner = mask[yn, xn]
        rows.append(idx[ys[inner], xs[inner]])
        cols.append(idx[yn[inner], xn[inner]])
        vals.append(-np.ones(int(inner.sum())))
        bdry = ~inner
        b[idx[ys[bdry], xs[bdry]]] += fixed[yn[bdry], xn[bdry]]
    diag = np.full(n, 4.0)
    a_mat = sparse.coo_matrix(
        (
            np.concatenate(vals + [diag]),
            (
                np.concatenate(rows + [np.arange(n)]),
                np.concatenate(cols + [np.arange(n)]),
            ),
        ),
        shape=(n, n),
    ).tocsr()

    u, info = sparse.linalg.cg(a_mat, b, rtol=1e-12, atol=0.0, maxiter=20_000)
    res = np.linalg.norm(a_mat @ u - b)
    if info != 0 or res > residual * max(1.0, np.linalg.norm(b)):
        u = spsolve(a_mat.tocsc(), b)

    full = fixed.copy()
    full[ys, xs] = u
    # discrete Dirichlet energy: sum (du)^2 over cell edges touching the region
    energy = 0.0
    for axis in (0, 1):
        du = np.diff(full, axis=axis)
        lo = mask.take(range(0, mask.shape[axis] - 1), axis=axis)
        hi = mask.take(range(1, mask.shape[axis]), axis=axis)
        energy += float((du[lo | hi] ** 2).sum())
    if energy <= 0:
        raise NotAnnular("degenerate potential; region too thin to resolve")
    return float(2 * np.pi / energy)


def write_mask_pgm(mask: np.ndarray, path) -> None:
    """Dump a boolean mask as a plain-text PGM (P2) for eyeballing."""
    mask = np.asarray(mask, dtype=bool)
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"P2\n{mask.shape[1]} {mask.shape[0]}\n1\n")
        for row in mask:
            fh.write(" ".join("1" if v else "0" for v in row))
            fh.write("\n")


def read_mask_pgm(path) -> np.ndarray:
    with open(path, "r", encoding="ascii") as fh:
        tokens = fh.read().split()
    if tokens[0] != "P2":
        raise InvalidParameter("expected a plain P2 PGM")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    data = np.array(tokens[4 : 4 + w * h], dtype=int).reshape(h, w)
    return data > maxval // 2


def parse_domain_text(text: str) -> PlanarDomain:
    """Parse the structured text domain format.

    Lines: ``outer: x0 y0 x1 y1 ...`` (required, closed polygon),
    ``slit: x0 y0 x1 y1 [...]`` and ``hole: x0 y0 ...`` (optional, repeatable).
    Blank lines and ``#`` comments are ignored.
    """
    outer = None
    slits: list[np.ndarray] = []
    holes: list[np.ndarray] = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if ":" not in line:
            raise InvalidParameter(f"malformed domain line: {raw!r}")
        key, _, rest = line.partition(":")
        coords = [float(tok) for tok in rest.split()]
        if len(coords) % 2 != 0:
            raise InvalidParameter(f"odd coordinate count in line: {raw!r}")
        pts = np.array(coords).reshape(-1, 2)
        key = key.strip().lower()
        if key == "outer":
            outer = pts
        elif key == "slit":
            slits.append(pts)
        elif key == "hole":
            holes.append(pts)
        else:
            raise InvalidParameter(f"unknown domain element {key!r}")
    if outer is None:
        raise InvalidParameter("domain text needs an 'outer:' polygon")
    return PlanarDomain(outer_polygon=outer, slits=tuple(slits), hole_polygons=tuple(holes))


def format_domain_text(domain: PlanarDomain) -> str:
    if domain.outer_polygon is None:
        raise InvalidParameter("only polygonal-outer domains have a text form")
    lines = ["outer: " + " ".join(repr(c) for c in np.asarray(domain.outer_polygon).ravel())]
    for chain in domain.slits:
        lines.append("slit: " + " ".join(repr(c) for c in np.asarray(chain).ravel()))
    for poly in domain.hole_polygons:
        lines.append("hole: " + " ".join(repr(c) for c in np.asarray(poly).ravel()))
    return "\n".join(lines) + "\n"
