"""Named experiments: seeded, persisted, replayable runs with pass/fail flags.

Each experiment resolves a flat key-value config against its declared
defaults (unknown keys are rejected), runs the relevant estimators, and
returns named estimates with tolerance flags. Records are appended as JSON
lines; tables go to CSV and plots to standalone SVG, so a run can be
verified with no plotting stack installed.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import brownian, conformal, percolation, saw
from .brownian import MWindow, RadialWindow
from .errors import InvalidConfig, UnknownExperiment
from .events import (
    ContainedInDisc,
    ContainedInSquareFrame,
    DiameterWindow,
    ExitsSet,
    ScaleWindow,
    SurroundsAnnulusHole,
    SurroundsPoint,
)
from .geom import AnnulusSpec, diameter, normalize_shape, shape_functionals
from .hull import boxcount_dimension
from .sharding import default_jobs
from .stats import Estimate, ks_statistic, linear_fit, mass_estimate

PI5 = math.pi / 5.0
DECAY_RATE_ASYMPTOTIC = 5.0 * math.pi**2 / 4.0


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    params: dict
    out_dir: str | None = None
    seed: int = 0
    jobs: int = 1


@dataclass
class ExperimentResult:
    estimates: dict[str, Estimate] = field(default_factory=dict)
    targets: dict[str, float] = field(default_factory=dict)
    passes: dict[str, bool] = field(default_factory=dict)
    notes: dict[str, float] = field(default_factory=dict)
    tables: dict[str, list[dict]] = field(default_factory=dict)
    plots: list[dict] = field(default_factory=list)

    def all_pass(self) -> bool:
        return all(self.passes.values())


# ---------------------------------------------------------------------------
# config plumbing
# ---------------------------------------------------------------------------


def parse_config_text(text: str) -> dict:
    """Flat key = value lines; '#' comments; commas make tuples."""
    out: dict = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(f"malformed config line: {raw!r}")
        key, _, val = line.partition("=")
        out[key.strip()] = val.strip()
    return out


def _coerce(value, default):
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        return str(value).lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(float(value))
    if isinstance(default, float):
        return float(value)
    if isinstance(default, tuple):
        if isinstance(value, (tuple, list)):
            items = list(value)
        else:
            items = [v for v in str(value).split(",") if v.strip()]
        kind = type(default[0]) if default else float
        return tuple(kind(float(v)) if kind in (int, float) else v for v in items)
    return str(value)


def resolve_params(name: str, overrides: dict) -> dict:
    if name not in REGISTRY:
        raise UnknownExperiment(f"unknown experiment {name!r}; known: {sorted(REGISTRY)}")
    defaults = REGISTRY[name][0]
    params = dict(defaults)
    for key, val in overrides.items():
        if key not in defaults:
            raise InvalidConfig(f"unknown key {key!r} for experiment {name}")
        params[key] = _coerce(val, defaults[key])
    for key, val in params.items():
        if isinstance(val, (int, float)) and not isinstance(val, bool) and val < 0:
            raise InvalidConfig(f"{key} must be nonnegative")
    _validate(name, params)
    return params


def _validate(name: str, params: dict) -> None:
    for key in ("n_samples", "n_loops", "n_configs"):
        if key in params and params[key] == 0:
            raise InvalidConfig(f"{key} must be positive")


def _within(est: Estimate, target: float, rel_tol: float) -> bool:
    return abs(est.mean - target) <= rel_tol * abs(target)


def _pooled_consistent(a: Estimate, b: Estimate, n_se: float = 2.0) -> bool:
    pooled = math.hypot(a.half_width_95, b.half_width_95) / 1.96
    return abs(a.mean - b.mean) <= n_se * pooled + 1e-300


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


def _exp_area_pi5(params, seed, jobs) -> ExperimentResult:
    res = ExperimentResult()
    h = params["hull_resolution"]
    pair = brownian.hull_area_richardson(
        t=1.0,
        n_steps=params["n_steps"],
        n_samples=params["n_samples"],
        hull_resolution=h,
        seed=seed,
        jobs=jobs,
    )
    res.estimates["area_h"] = pair["coarse"]
    res.estimates["area_h2"] = pair["fine"]
    res.estimates["area_extrapolated"] = pair["extrapolated"]
    res.targets["area_extrapolated"] = PI5
    res.passes["area_pi5_within_3pct"] = _within(pair["extrapolated"], PI5, params["rel_tol"])
    res.tables["areas"] = [
        {"resolution": h, "mean": pair["coarse"].mean, "half_width_95": pair["coarse"].half_width_95},
        {"resolution": h / 2, "mean": pair["fine"].mean, "half_width_95": pair["fine"].half_width_95},
        {"resolution": 0.0, "mean": pair["extrapolated"].mean, "half_width_95": pair["extrapolated"].half_width_95},
    ]
    return res


def _exp_n0_normalization(params, seed, jobs) -> ExperimentResult:
    res = ExperimentResult()
    for i, r in enumerate(params["exponents"]):
        event = ScaleWindow(lo=1.0, hi=math.exp(r), target="trace")
        window = RadialWindow(0.5, 2.0 * math.exp(r), params["n_samples"], seed=seed + i)
        est = brownian.estimate_N0_mass(event, window, n_steps=params["n_steps"], jobs=jobs)
        key = f"mass_r{r:g}"
        res.estimates[key] = est
        res.targets[key] = float(r)
        res.passes[f"{key}_exact"] = est.half_width_95 == 0.0 and abs(est.mean - r) < 1e-9
    return res


def _slit_event(r_slit: float, angle: float = 0.0) -> tuple:
    direction = np.array([math.cos(angle), math.sin(angle)])
    chain = np.array([direction * r_slit, direction])
    event = ContainedInDisc(center=(0.0, 0.0), radius=1.0, target="boundary") & ExitsSet(
        chains=(chain,), target="boundary"
    )
    return event, chain


def _exp_restriction(params, seed, jobs) -> ExperimentResult:
    res = ExperimentResult()
    rows = []
    for i, r in enumerate(params["slit_radii"]):
        event, _ = _slit_event(r)
        window = RadialWindow(0.3 * r, 1.05, params["n_samples"], seed=seed + 17 * i)
        nu = brownian.estimate_nu_mass(
            event, window, hull_resolution=params["hull_resolution"],
            n_steps=params["n_steps"], jobs=jobs,
        )
        wos = conformal.log_deriv_at_zero(
            conformal.disc_with_radial_slit(r), params["n_wos"], seed=seed + 1000 + i, jobs=jobs
        )
        analytic = conformal.slit_capacity(r)
        res.estimates[f"nu_r{r:g}"] = nu
        res.estimates[f"wos_r{r:g}"] = wos
        res.targets[f"nu_r{r:g}"] = analytic
        res.targets[f"wos_r{r:g}"] = analytic
        pooled = math.hypot(nu.half_width_95, wos.half_width_95) / 1.96
        tol_nu_wos = max(params["rel_tol"] * abs(wos.mean), 2.0 * pooled)
        res.passes[f"nu_vs_wos_r{r:g}"] = abs(nu.mean - wos.mean) <= tol_nu_wos
        res.passes[f"nu_vs_analytic_r{r:g}"] = abs(nu.mean - analytic) <= max(
            params["rel_tol"] * analytic, 2.0 * nu.half_width_95 / 1.96
        )
        res.passes[f"wos_vs_analytic_r{r:g}"] = abs(wos.mean - analytic) <= max(
            params["rel_tol"] * analytic, 2.0 * wos.half_width_95 / 1.96
        )
        rows.append(
            {"slit_radius": r, "nu_mass": nu.mean, "nu_hw": nu.half_width_95,
             "wos": wos.mean, "wos_hw": wos.half_width_95, "analytic": analytic}
        )
    res.tables["restriction"] = rows
    return res


def _exp_additivity(params, seed, jobs) -> ExperimentResult:
    res = ExperimentResult()
    r1, r2 = params["slit_radius_1"], params["slit_radius_2"]
    angle = params["angle"]
    event_u, chain1 = _slit_event(r1)
    event_v, chain2 = _slit_event(r2, angle)
    # pull the second slit back through the uniformization of the first
    _, inverse = conformal.slit_uniformization(r1)
    rho = np.linspace(r2, 1.0 - 1e-9, params["curve_points"])
    curve_pts = inverse(rho * np.exp(1j * angle))
    curve = np.column_stack([curve_pts.real, curve_pts.imag])
    event_w = ContainedInDisc(center=(0.0, 0.0), radius=1.0, target="boundary") & ExitsSet(
        chains=(chain1, curve), target="boundary"
    )
    r_lo = 0.3 * min(r1, float(np.hypot(curve[:, 0], curve[:, 1]).min()))
    n = params["n_samples"]
    h = params["hull_resolution"]
    n_steps = params["n_steps"]
    m_u = brownian.estimate_nu_mass(event_u, RadialWindow(0.3 * r1, 1.05, n, seed=seed + 1), hull_resolution=h, n_steps=n_steps, jobs=jobs)
    m_v = brownian.estimate_nu_mass(event_v, RadialWindow(0.3 * r2, 1.05, n, seed=seed + 2), hull_resolution=h, n_steps=n_steps, jobs=jobs)
    m_w = brownian.estimate_nu_mass(event_w, RadialWindow(r_lo, 1.05, n, seed=seed + 3), hull_resolution=h, n_steps=n_steps, jobs=jobs)
    res.estimates["mass_slit_1"] = m_u
    res.estimates["mass_slit_2"] = m_v
    res.estimates["mass_double"] = m_w
    res.targets["mass_slit_1"] = conformal.slit_capacity(r1)
    res.targets["mass_slit_2"] = conformal.slit_capacity(r2)
    res.targets["mass_double"] = conformal.slit_capacity(r1) + conformal.slit_capacity(r2)
    pooled = math.sqrt(m_u.half_width_95**2 + m_v.half_width_95**2 + m_w.half_width_95**2) / 1.96
    res.passes["additivity"] = abs(m_w.mean - m_u.mean - m_v.mean) <= 2.0 * pooled
    res.notes["sum_of_singles"] = m_u.mean + m_v.mean
    return res


def _exp_m_vs_n0_ratio(params, seed, jobs) -> ExperimentResult:
    res = ExperimentResult()
    d_lo, d_hi = params["diam_window"]
    event = SurroundsPoint(point=(0.0, 0.0), target="boundary") & DiameterWindow(
        lo=d_lo, hi=d_hi, target="boundary"
    )
    half = 1.1 * d_hi
    m_window = MWindow(
        box=(-half, half, -half, half),
        t_lo=params["t_lo"],
        t_hi=params["t_hi"],
        n_loops=params["n_loops"],
        z_per_loop=params["z_per_loop"],
        seed=seed,
    )
    m_mass = brownian.estimate_M_mass(
        event, m_window, hull_resolution=params["hull_resolution"],
        n_steps=params["n_steps"], jobs=jobs,
    )
    nu_window = RadialWindow(0.25 * d_lo, 3.0 * d_hi, params["n_nu"], seed=seed + 7)
    nu_mass = brownian.estimate_nu_mass(
        event, nu_window, hull_resolution=params["nu_hull_resolution"],
        n_steps=params["n_steps"], jobs=jobs,
    )
    ratio = m_mass.mean / nu_mass.mean
    ratio_hw = ratio * math.sqrt(
        (m_mass.half_width_95 / m_mass.mean) ** 2 + (nu_mass.half_width_95 / max(nu_mass.mean, 1e-300)) ** 2
    )
    res.estimates["m_mass"] = m_mass
    res.estimates["nu_mass"] = nu_mass
    res.estimates["ratio"] = Estimate(ratio, ratio_hw, m_mass.n_effective)
    res.targets["ratio"] = PI5
    res.passes["ratio_pi5_within_10pct"] = abs(ratio - PI5) <= params["rel_tol"] * PI5
    return res


def _exp_inner_outer(params, seed, jobs) -> ExperimentResult:
    res = ExperimentResult()
    rows = []
    annuli = [
        AnnulusSpec((0.0, 0.0), params["r_inner_1"], params["r_outer_1"]),
        AnnulusSpec((0.0, 0.0), params["r_inner_2"], params["r_outer_2"]),
        AnnulusSpec((0.0, 0.0), params["r_inner_3"], params["r_outer_3"]),
    ]
    for i, ann in enumerate(annuli):
        event = SurroundsAnnulusHole(annulus=ann, target="boundary")
        half = 1.1 * ann.r_outer
        outer = brownian.estimate_M_mass(
            event,
            MWindow((-half, half, -half, half), params["t_lo"], params["t_hi"],
                    params["n_loops"], params["z_per_loop"], seed=seed + 2 * i),
            hull_resolution=params["hull_resolution"], n_steps=params["n_steps"],
            jobs=jobs, boundary_mode="outer",
        )
        inner = brownian.estimate_M_mass(
            event,
            MWindow((-half, half, -half, half), params["t_lo"], params["t_hi_inner"],
                    params["n_loops"], params["z_per_loop"], seed=seed + 2 * i + 1),
            hull_resolution=params["hull_resolution"], n_steps=params["n_steps"],
            jobs=jobs, boundary_mode="origin-component",
        )
        key = f"annulus_{i + 1}"
        res.estimates[f"outer_{key}"] = outer
        res.estimates[f"origin_component_{key}"] = inner
        res.passes[f"symmetry_{key}"] = _pooled_consistent(outer, inner)
        rows.append(
            {"r_inner": ann.r_inner, "r_outer": ann.r_outer,
             "outer_mass": outer.mean, "outer_hw": outer.half_width_95,
             "inner_mass": inner.mean, "inner_hw": inner.half_width_95}
        )
    res.tables["inner_outer"] = rows
    return res


def _exp_two_sided_count(params, seed, jobs) -> ExperimentResult:
    res = ExperimentResult()
    h0 = params["hull_resolution"]
    ratios = brownian.inner_area_ratios(
        t=1.0, n_steps=params["n_steps"], n_samples=params["n_samples"],
        resolutions=(h0, h0 / 2, h0 / 4), seed=seed, jobs=jobs,
    )
    means = []
    for h, est, identity_ok in ratios:
        key = f"inner_over_filled_h{h:g}"
        res.estimates[key] = est
        res.passes[f"raster_identity_exact_h{h:g}"] = identity_ok
        means.append(est.mean)
    res.passes["ratio_strictly_increasing"] = means[0] < means[1] < means[2]
    res.passes["finest_ratio_above_0.7"] = means[2] > params["ratio_floor"]
    res.tables["ratios"] = [
        {"resolution": h, "inner_over_filled": est.mean, "half_width_95": est.half_width_95}
        for h, est, _ in ratios
    ]
    return res


def _exp_annulus_mass(params, seed, jobs) -> ExperimentResult:
    res = ExperimentResult()
    n = params["n_samples"]
    h = params["hull_resolution"]
    n_steps = params["n_steps"]
    rows = []

    def f_hat(annulus: AnnulusSpec, run_seed: int) -> Estimate:
        event = SurroundsAnnulusHole(annulus=annulus, target="boundary")
        window = RadialWindow(0.6 * annulus.r_inner, 1.3 * annulus.r_outer, n, seed=run_seed)
        return brownian.estimate_nu_mass(event, window, hull_resolution=h, n_steps=n_steps, jobs=jobs)

    rhos = params["rhos"]
    masses = []
    for i, rho in enumerate(rhos):
        est = f_hat(AnnulusSpec((0.0, 0.0), 1.0, math.exp(rho)), seed + i)
        masses.append(est)
        res.estimates[f"F_rho{rho:g}"] = est
        rows.append({"rho": rho, "F": est.mean, "half_width_95": est.half_width_95})
    res.tables["f_of_rho"] = rows

    # scale invariance: (1, e) versus (2, 2e)
    f_small = f_hat(AnnulusSpec((0.0, 0.0), 1.0, math.e), seed + 101)
    f_big = f_hat(AnnulusSpec((0.0, 0.0), 2.0, 2.0 * math.e), seed + 102)
    res.estimates["F_unit_annulus"] = f_small
    res.estimates["F_doubled_annulus"] = f_big
    res.passes["scale_invariance"] = _pooled_consistent(f_small, f_big)

    # conformal invariance: square frame versus the round annulus of equal modulus
    inner_half, outer_half = params["frame_inner_half"], params["frame_outer_half"]
    frame_event = ContainedInSquareFrame(
        inner_half=inner_half, outer_half=outer_half, target="boundary"
    ) & SurroundsPoint(point=(0.0, 0.0), target="boundary")
    frame_window = RadialWindow(0.6 * inner_half, 1.3 * outer_half * math.sqrt(2.0), n, seed=seed + 103)
    f_frame = brownian.estimate_nu_mass(frame_event, frame_window, hull_resolution=h, n_steps=n_steps, jobs=jobs)
    rho_frame = conformal.modulus_estimate(
        conformal.square_frame_region(inner_half, outer_half, params["modulus_resolution"])
    )
    f_round = f_hat(AnnulusSpec((0.0, 0.0), 1.0, math.exp(rho_frame)), seed + 104)
    res.estimates["F_square_frame"] = f_frame
    res.estimates["F_matched_round"] = f_round
    res.notes["frame_modulus"] = rho_frame
    res.passes["conformal_invariance_10pct"] = abs(f_frame.mean - f_round.mean) <= params[
        "conformal_rel_tol"
    ] * abs(f_round.mean)

    # decay: log F against 1/rho decreasing, linear fit quality, rate reported
    xs = np.array([1.0 / r for r in rhos])
    ys = np.array([math.log(max(e.mean, 1e-300)) for e in masses])
    slope, intercept, r2 = linear_fit(xs, ys)
    res.notes["decay_rate"] = -slope
    res.notes["decay_rate_asymptotic"] = DECAY_RATE_ASYMPTOTIC
    res.notes["decay_fit_r2"] = r2
    # xs = 1/rho is decreasing along the rho grid, so ys must be increasing
    res.passes["decay_decreasing"] = slope < 0 and bool(np.all(np.diff(ys) > 0))
    res.passes["decay_fit_r2_above_0.9"] = r2 > params["fit_r2_floor"]
    res.plots.append(
        {"name": "annulus_decay", "x": [float(v) for v in xs], "y": [float(v) for v in ys],
         "xlabel": "1/rho", "ylabel": "log F", "title": "winding mass against inverse modulus"}
    )
    return res


def _exp_winding_spectrum(params, seed, jobs) -> ExperimentResult:
    res = ExperimentResult()
    n_max = params["n_max"]
    mat = brownian.winding_matrix(
        t=1.0, n_steps=params["n_steps"], n_samples=params["n_samples"],
        hull_resolution=params["hull_resolution"], seed=seed, n_max=n_max, jobs=jobs,
    )
    order = brownian.winding_index_order(n_max)
    rows = []
    for j, n_idx in enumerate(order):
        est = mass_estimate(mat[:, j])
        res.estimates[f"area_n{n_idx:+d}"] = est
        rows.append({"n": n_idx, "mean_area": est.mean, "half_width_95": est.half_width_95})
    res.tables["spectrum"] = rows

    signed = mass_estimate(mat @ np.array(order, dtype=float))
    res.estimates["signed_balance"] = signed
    se = signed.half_width_95 / 1.96
    res.passes["signed_sum_within_3se"] = abs(signed.mean) <= 3.0 * se + 1e-300
    for n_idx in range(1, n_max + 1):
        diff = mass_estimate(mat[:, order.index(n_idx)] - mat[:, order.index(-n_idx)])
        res.estimates[f"pair_diff_n{n_idx}"] = diff
        se = diff.half_width_95 / 1.96
        res.passes[f"symmetry_n{n_idx}_within_3se"] = abs(diff.mean) <= 3.0 * se + 1e-300
    return res


def _exp_components(params, seed, jobs) -> ExperimentResult:
    res = ExperimentResult()
    us = np.geomspace(params["u_lo"], params["u_hi"], params["n_thresholds"])
    table = brownian.component_count_curve(
        t=1.0, n_steps=params["n_steps"], n_samples=params["n_samples"],
        hull_resolution=params["hull_resolution"], thresholds=us, seed=seed, jobs=jobs,
    )
    rows = []
    ok = True
    for u, est in zip(us, table):
        ratio = u * math.log(1.0 / u) ** 2 * est.mean / (2.0 * math.pi)
        rows.append({"u": float(u), "mean_count": est.mean, "normalized_ratio": ratio})
        res.estimates[f"count_u{u:.4g}"] = est
        ok = ok and (params["ratio_lo"] <= ratio <= params["ratio_hi"])
    res.tables["component_counts"] = rows
    res.passes["mountford_ratio_in_band"] = ok
    res.plots.append(
        {"name": "component_spectrum", "x": [r["u"] for r in rows],
         "y": [r["normalized_ratio"] for r in rows], "xlabel": "u",
         "ylabel": "u log^2(1/u) N(u) / 2 pi", "title": "component spectrum", "logx": True}
    )
    return res


def _exp_ergodic_shapes(params, seed, jobs) -> ExperimentResult:
    res = ExperimentResult()
    out = brownian.ergodic_shape_average(
        n_steps=params["n_steps"], n_loops=params["n_loops"],
        top_components=params["top_components"], hull_resolution=params["hull_resolution"],
        n_ensemble=params["n_ensemble"], seed=seed, jobs=jobs,
    )
    res.estimates["component_average"] = out["component_average"]
    res.estimates["ensemble_mean"] = out["ensemble_mean"]
    ratio = out["component_average"].mean / out["ensemble_mean"].mean
    res.notes["ratio"] = ratio
    # reported, not asserted: the theorem concerns a different normalization family
    res.notes["within_10pct"] = float(abs(ratio - 1.0) <= 0.10)
    return res


def _exp_dimensions(params, seed, jobs) -> ExperimentResult:
    res = ExperimentResult()
    brown = brownian.boundary_dimension_sample(
        n_loops=params["n_loops"], n_steps=params["n_steps"],
        hull_resolution=params["hull_resolution"], min_diameter_cells=params["min_diameter_cells"],
        seed=seed, jobs=jobs,
    )
    res.estimates["brownian_boundary_dim"] = brown
    res.targets["brownian_boundary_dim"] = 4.0 / 3.0
    res.passes["brownian_dim_4_3"] = abs(brown.mean - 4.0 / 3.0) <= params["dim_tol"]

    interfaces, perimeters = _percolation_dimension_samples(params, seed)
    res.estimates["perc_interface_dim"] = interfaces
    res.targets["perc_interface_dim"] = 7.0 / 4.0
    res.passes["perc_interface_dim_7_4"] = abs(interfaces.mean - 7.0 / 4.0) <= params["dim_tol"]
    res.estimates["perc_perimeter_dim"] = perimeters
    res.targets["perc_perimeter_dim"] = 4.0 / 3.0
    res.passes["perc_perimeter_dim_4_3"] = abs(perimeters.mean - 4.0 / 3.0) <= params["dim_tol"]
    return res


def _percolation_dimension_samples(params, seed) -> tuple[Estimate, Estimate]:
    side = params["lattice_side"]
    lo, hi = params["min_diameter_cells"], side / 4.0
    want = params["n_loops"]
    interface_slopes: list[float] = []
    perimeter_slopes: list[float] = []
    seeds = np.random.SeedSequence(seed + 5000).spawn(params["max_configs"])
    for s in seeds:
        config = percolation.sample_config(side, 0.5, s)
        if len(interface_slopes) < want:
            for loop in percolation.interface_loops(config):
                d = diameter(loop)
                if lo <= d <= hi:
                    slope, _ = boxcount_dimension(loop.vertices, scale_range=(4.0, d / 4.0))
                    interface_slopes.append(slope)
        if len(perimeter_slopes) < want:
            for per in percolation.perimeter_loops_in_window(config, lo, hi):
                d = diameter(per.loop)
                slope, _ = boxcount_dimension(per.loop.vertices, scale_range=(4.0, d / 4.0))
                perimeter_slopes.append(slope)
        if len(interface_slopes) >= want and len(perimeter_slopes) >= want:
            break
    return (
        mass_estimate(np.array(interface_slopes[: max(want, 1)])),
        mass_estimate(np.array(perimeter_slopes[: max(want, 1)])),
    )


def _exp_perc_vs_brownian(params, seed, jobs) -> ExperimentResult:
    res = ExperimentResult()
    d_lo, d_hi = params["perc_diam_window"]
    shapes_p = []
    seeds = np.random.SeedSequence(seed + 31).spawn(params["max_configs"])
    for s in seeds:
        config = percolation.sample_config(params["lattice_side"], 0.5, s)
        shapes_p.extend(
            percolation.perimeter_loops_in_window(config, d_lo, d_hi)
        )
        if len(shapes_p) >= params["n_shapes"]:
            break
    shapes_p = shapes_p[: params["n_shapes"]]
    perc_f = [
        shape_functionals(normalize_shape(p.loop, "translate-and-scale", provenance="percolation-perimeter"))
        for p in shapes_p
    ]
    brow_f = brownian.boundary_shape_functionals(
        n_loops=params["n_shapes"], n_steps=params["n_steps"],
        hull_resolution=params["hull_resolution"], seed=seed + 97, jobs=jobs,
    )
    for key in ("area_over_diam2", "anisotropy"):
        a = np.array([f[key] for f in perc_f])
        b = np.array([f[key] for f in brow_f])
        d_ks, p_val = ks_statistic(a, b)
        res.notes[f"ks_D_{key}"] = d_ks
        res.notes[f"ks_p_{key}"] = p_val
        res.passes[f"ks_not_rejected_{key}"] = p_val >= params["alpha"]
        res.estimates[f"perc_mean_{key}"] = mass_estimate(a)
        res.estimates[f"brownian_mean_{key}"] = mass_estimate(b)
        res.passes[f"means_within_3pct_{key}"] = abs(a.mean() - b.mean()) <= params["mean_rel_tol"] * abs(
            b.mean()
        )
    res.notes["n_perc_shapes"] = len(perc_f)
    return res


def _exp_saw(params, seed, jobs) -> ExperimentResult:
    res = ExperimentResult()
    census = saw.enumerate_saps(params["n_census"])
    oracle = saw.naive_enumerate(params["n_oracle"])
    agree = all(census.counts.get(n) == oracle.get(n) for n in range(4, params["n_oracle"] + 1, 2))
    res.passes["census_matches_naive_oracle"] = agree
    res.tables["census"] = [{"n": n, "classes": c} for n, c in census.counts.items()]

    lam = params["lam"] if params["lam"] > 0 else saw.default_lambda(census)
    res.notes["lambda"] = lam
    face = SurroundsPoint(point=(0.5, 0.5), target="trace")
    m4 = saw.sap_mass(face, n_max=4, lam=lam, census=census)
    m6 = saw.sap_mass(face, n_max=6, lam=lam, census=census)
    res.passes["anchor_n4_exact"] = abs(m4.mass - lam**-4) < 1e-12
    res.passes["anchor_n6_exact"] = abs(m6.mass - (lam**-4 + 4 * lam**-6)) < 1e-12
    res.notes["face_mass_n4"] = m4.mass
    res.notes["face_mass_n6"] = m6.mass

    points = saw.annulus_decay(
        list(params["hole_sides"]), width=params["frame_width"], lam=lam, n_max=params["n_decay"]
    )
    rows = [
        {"hole_side": p.hole_side, "mass": p.mass, "loop_count": p.loop_count,
         "min_winding_length": p.min_winding_length}
        for p in points
    ]
    res.tables["annulus_decay"] = rows
    with_mass = [p for p in points if p.mass > 0]
    res.passes["decay_monotone"] = all(
        a.mass > b.mass for a, b in zip(with_mass, with_mass[1:])
    )
    xs = [p.hole_side for p in with_mass]
    ys = [math.log(p.mass) for p in with_mass]
    slope, _, r2 = linear_fit(xs, ys)
    res.notes["decay_slope"] = slope
    res.notes["decay_fit_r2"] = r2
    res.passes["decay_fit_r2_above_0.9"] = r2 > 0.9
    res.plots.append(
        {"name": "saw_decay", "x": xs, "y": ys, "xlabel": "frame hole side",
         "ylabel": "log mass", "title": "winding mass decay in square frames"}
    )
    return res


def _exp_two_root(params, seed, jobs) -> ExperimentResult:
    res = ExperimentResult()
    z = (params["z_x"], params["z_y"])
    d_lo, d_hi = params["diam_window"]
    event = (
        SurroundsPoint(point=(0.0, 0.0), target="boundary")
        & SurroundsPoint(point=z, target="boundary")
        & DiameterWindow(lo=d_lo, hi=d_hi, target="boundary")
    )
    window = RadialWindow(0.2 * d_lo, 2.5 * d_hi, params["n_samples"], seed=seed)
    reports = brownian.two_root_agreement(
        z, [event], [window], hull_resolution=params["hull_resolution"],
        n_steps=params["n_steps"], jobs=jobs,
    )
    rep = reports[0]
    res.estimates["mass_root_origin"] = rep["root_mass"]
    res.estimates["mass_root_translated"] = rep["translated_mass"]
    res.estimates["paired_difference"] = rep["difference"]
    res.passes["two_root_consistent"] = rep["consistent"]
    return res


REGISTRY: dict[str, tuple[dict, object]] = {
    "area-pi5": (
        {"n_samples": 100_000, "n_steps": 2**16, "hull_resolution": 1.0 / 64.0, "rel_tol": 0.03},
        _exp_area_pi5,
    ),
    "n0-normalization": (
        {"exponents": (1.0, 2.0), "n_samples": 2_000, "n_steps": 4096},
        _exp_n0_normalization,
    ),
    "restriction": (
        {"slit_radii": (0.3, 0.5, 0.7), "n_samples": 60_000, "n_wos": 200_000,
         "hull_resolution": 1.0 / 192.0, "n_steps": 2**16, "rel_tol": 0.05},
        _exp_restriction,
    ),
    "additivity": (
        {"slit_radius_1": 0.5, "slit_radius_2": 0.6, "angle": math.pi, "curve_points": 400,
         "n_samples": 40_000, "hull_resolution": 1.0 / 192.0, "n_steps": 2**16},
        _exp_additivity,
    ),
    "m-vs-n0-ratio": (
        {"diam_window": (1.0, 2.0), "t_lo": 0.02, "t_hi": 12.0, "n_loops": 30_000,
         "z_per_loop": 96, "n_nu": 2_000, "hull_resolution": 1.0 / 64.0,
         "nu_hull_resolution": 1.0 / 128.0, "n_steps": 2**15, "rel_tol": 0.10},
        _exp_m_vs_n0_ratio,
    ),
    "inner-outer-symmetry": (
        {"r_inner_1": 1.0, "r_outer_1": 2.0, "r_inner_2": 1.0, "r_outer_2": math.e,
         "r_inner_3": 0.75, "r_outer_3": 2.5, "t_lo": 0.15, "t_hi": 30.0, "t_hi_inner": 60.0,
         "n_loops": 15_000, "z_per_loop": 96, "hull_resolution": 1.0 / 48.0, "n_steps": 2**15},
        _exp_inner_outer,
    ),
    "two-sided-count": (
        {"n_samples": 400, "n_steps": 2**16, "hull_resolution": 1.0 / 128.0, "ratio_floor": 0.7},
        _exp_two_sided_count,
    ),
    "annulus-mass": (
        {"rhos": (0.8, 1.1, 1.4, 1.7, 2.0), "n_samples": 30_000, "hull_resolution": 1.0 / 128.0,
         "n_steps": 2**16, "frame_inner_half": 0.5, "frame_outer_half": 2.0,
         "modulus_resolution": 512, "conformal_rel_tol": 0.10, "fit_r2_floor": 0.9},
        _exp_annulus_mass,
    ),
    "winding-spectrum": (
        {"n_samples": 3_000, "n_steps": 2**16, "hull_resolution": 1.0 / 128.0, "n_max": 4},
        _exp_winding_spectrum,
    ),
    "components": (
        {"n_samples": 300, "n_steps": 2**16, "hull_resolution": 1.0 / 512.0,
         "u_lo": 1e-3, "u_hi": 1e-2, "n_thresholds": 7, "ratio_lo": 0.5, "ratio_hi": 2.0},
        _exp_components,
    ),
    "ergodic-shapes": (
        {"n_loops": 60, "top_components": 20, "n_ensemble": 600, "n_steps": 2**16,
         "hull_resolution": 1.0 / 256.0},
        _exp_ergodic_shapes,
    ),
    "dimensions": (
        {"n_loops": 200, "n_steps": 2**16, "hull_resolution": 1.0 / 256.0,
         "min_diameter_cells": 128, "lattice_side": 1024, "max_configs": 40, "dim_tol": 0.10},
        _exp_dimensions,
    ),
    "perc-vs-brownian-shapes": (
        {"n_shapes": 2_000, "lattice_side": 256, "perc_diam_window": (48.0, 64.0),
         "max_configs": 4_000, "n_steps": 2**16, "hull_resolution": 1.0 / 32.0,
         "alpha": 0.001, "mean_rel_tol": 0.03},
        _exp_perc_vs_brownian,
    ),
    "saw": (
        {"n_census": 16, "n_oracle": 14, "lam": -1.0, "hole_sides": (1, 2, 3, 4),
         "frame_width": 1, "n_decay": 20},
        _exp_saw,
    ),
    "two-root": (
        {"z_x": 0.5, "z_y": 0.0, "diam_window": (2.0, 4.0), "n_samples": 30_000,
         "hull_resolution": 1.0 / 128.0, "n_steps": 2**16},
        _exp_two_root,
    ),
}


def run(config: ExperimentConfig) -> dict:
    """Run one experiment and return its JSON-ready record."""
    params = resolve_params(config.name, config.params)
    jobs = config.jobs if config.jobs else default_jobs()
    started = time.time()
    result: ExperimentResult = REGISTRY[config.name][1](params, config.seed, jobs)
    finished = time.time()
    record = {
        "experiment": config.name,
        "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in params.items()},
        "seed": config.seed,
        "started": started,
        "finished": finished,
        "estimates": {
            k: {"mean": e.mean, "half_width_95": e.half_width_95, "n_effective": e.n_effective}
            for k, e in result.estimates.items()
        },
        "targets": result.targets,
        "passes": result.passes,
        "notes": result.notes,
        "artifacts": [],
    }
    if config.out_dir:
        record["artifacts"] = _write_artifacts(config, result)
        _append_record(config.out_dir, record)
    return record


def _append_record(out_dir: str, record: dict) -> None:
    import os

    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "records.jsonl"), "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record) + "\n")


def _write_artifacts(config: ExperimentConfig, result: ExperimentResult) -> list[str]:
    import csv
    import os

    os.makedirs(config.out_dir, exist_ok=True)
    paths = []
    for name, rows in result.tables.items():
        if not rows:
            continue
        path = os.path.join(config.out_dir, f"{config.name}_{name}.csv")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            writer.writerows(rows)
        paths.append(path)
    for plot in result.plots:
        path = os.path.join(config.out_dir, f"{config.name}_{plot['name']}.svg")
        write_svg_plot(path, plot)
        paths.append(path)
    return paths


def write_svg_plot(path: str, plot: dict) -> None:
    """Tiny standalone SVG scatter/line plot; no plotting stack required."""
    xs = np.asarray(plot["x"], dtype=float)
    ys = np.asarray(plot["y"], dtype=float)
    if plot.get("logx"):
        xs = np.log10(xs)
    if plot.get("logy"):
        ys = np.log10(ys)
    width, height, margin = 640, 480, 60
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0

    def sx(x):
        return margin + (x - x0) / (x1 - x0) * (width - 2 * margin)

    def sy(y):
        return height - margin - (y - y0) / (y1 - y0) * (height - 2 * margin)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
        f'<text x="{width / 2}" y="{height - 15}" text-anchor="middle" font-size="13">{plot.get("xlabel", "")}</text>',
        f'<text x="18" y="{height / 2}" transform="rotate(-90 18 {height / 2})" text-anchor="middle" font-size="13">{plot.get("ylabel", "")}</text>',
        f'<text x="{width / 2}" y="25" text-anchor="middle" font-size="15">{plot.get("title", "")}</text>',
    ]
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        xv = x0 + frac * (x1 - x0)
        yv = y0 + frac * (y1 - y0)
        parts.append(
            f'<text x="{sx(xv):.1f}" y="{height - margin + 18}" text-anchor="middle" font-size="10">{xv:.3g}</text>'
        )
        parts.append(
            f'<text x="{margin - 8}" y="{sy(yv):.1f}" text-anchor="end" font-size="10">{yv:.3g}</text>'
        )
    pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
    parts.append(f'<polyline points="{pts}" fill="none" stroke="steelblue" stroke-width="1.5"/>')
    for x, y in zip(xs, ys):
        parts.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3.5" fill="firebrick"/>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts))


def read_records(path: str) -> list[dict]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def report(records: list[dict], out_dir: str) -> list[str]:
    """Summary CSV (one row per estimate) plus a pass-rate SVG."""
    import csv
    import os

    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for rec in records:
        targets = rec.get("targets", {})
        for name, est in rec.get("estimates", {}).items():
            rows.append(
                {
                    "experiment": rec["experiment"],
                    "estimate": name,
                    "mean": est["mean"],
                    "half_width_95": est["half_width_95"],
                    "target": targets.get(name, ""),
                    "all_checks_pass": all(rec.get("passes", {}).values()),
                }
            )
    csv_path = os.path.join(out_dir, "summary.csv")
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["experiment", "estimate", "mean", "half_width_95", "target", "all_checks_pass"]
        )
        writer.writeheader()
        writer.writerows(rows)
    paths = [csv_path]
    scored = [
        (i, (r["mean"] - float(r["target"])) / (abs(float(r["target"])) + 1e-300))
        for i, r in enumerate(rows)
        if r["target"] != ""
    ]
    if scored:
        svg_path = os.path.join(out_dir, "summary_deviation.svg")
        write_svg_plot(
            svg_path,
            {"name": "summary", "x": [float(i) for i, _ in scored], "y": [v for _, v in scored],
             "xlabel": "estimate index", "ylabel": "relative deviation from target",
             "title": "estimates against targets"},
        )
        paths.append(svg_path)
    return paths
