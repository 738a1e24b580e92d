"""Shared estimation utilities: weighted means with CIs, KS test, least squares."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AllZeroWeights, DegenerateDesign, EmptyBatch

N_BATCHES = 32


@dataclass(frozen=True)
class Estimate:
    """A point estimate with a 95% half width and an effective sample size."""

    mean: float
    half_width_95: float
    n_effective: float

    def agrees_with(self, other: "Estimate", n_se: float = 2.0) -> bool:
        """True if the two means differ by less than n_se pooled standard errors."""
        pooled = np.hypot(self.half_width_95, other.half_width_95) / 1.96
        return abs(self.mean - other.mean) <= n_se * pooled + 1e-300


def weighted_mean_ci(values, weights) -> Estimate:
    """Weighted (ratio) mean with a batch-means 95% interval.

    The interval uses 32 contiguous batches rather than the naive variance
    formula; importance weights are heavy-tailed and batch means stays usable
    there. The interval is a normal approximation.
    """
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if values.shape != weights.shape or values.ndim != 1:
        raise ValueError(f"values/weights must be equal-length 1-d arrays, got {values.shape} vs {weights.shape}")
    if values.size == 0:
        raise EmptyBatch("no samples")
    if np.any(weights < 0):
        raise AllZeroWeights("negative weights are not allowed")
    w_total = weights.sum()
    if w_total == 0:
        raise AllZeroWeights("all weights are zero")

    mean = float(np.dot(weights, values) / w_total)
    n_eff = float(w_total**2 / np.dot(weights, weights))

    n_batches = min(N_BATCHES, values.size)
    edges = np.linspace(0, values.size, n_batches + 1).astype(int)
    batch_means = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        wb = weights[lo:hi].sum()
        if wb > 0:
            batch_means.append(np.dot(weights[lo:hi], values[lo:hi]) / wb)
    batch_means = np.asarray(batch_means)
    if batch_means.size < 2:
        half_width = 0.0
    else:
        se = batch_means.std(ddof=1) / np.sqrt(batch_means.size)
        half_width = float(1.96 * se)
    return Estimate(mean=mean, half_width_95=half_width, n_effective=n_eff)


def mass_estimate(weighted_indicators) -> Estimate:
    """CI for a Monte Carlo mass estimate: plain mean of per-sample weighted indicators."""
    x = np.asarray(weighted_indicators, dtype=float)
    return weighted_mean_ci(x, np.ones_like(x))


def ks_statistic(a, b) -> tuple[float, float]:
    """Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.

    The p-value is the asymptotic Kolmogorov series; it is an approximation
    and is labeled as such wherever it is reported.
    """
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise EmptyBatch("ks_statistic needs two nonempty samples")
    pooled = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, pooled, side="right") / a.size
    cdf_b = np.searchsorted(b, pooled, side="right") / b.size
    d = float(np.max(np.abs(cdf_a - cdf_b)))
    en = np.sqrt(a.size * b.size / (a.size + b.size))
    lam = (en + 0.12 + 0.11 / en) * d
    k = np.arange(1, 101)
    p = 2.0 * np.sum((-1.0) ** (k - 1) * np.exp(-2.0 * (k * lam) ** 2))
    return d, float(min(max(p, 0.0), 1.0))


def linear_fit(xs, ys) -> tuple[float, float, float]:
    """Ordinary least squares line fit returning (slope, intercept, R^2).

    Constant ys give slope 0 with the R^2 = 0 convention.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size != ys.size or xs.size < 3:
        raise DegenerateDesign("need at least 3 points")
    if np.ptp(xs) == 0:
        raise DegenerateDesign("xs are all equal")
    xm, ym = xs.mean(), ys.mean()
    sxx = np.dot(xs - xm, xs - xm)
    sxy = np.dot(xs - xm, ys - ym)
    slope = sxy / sxx
    intercept = ym - slope * xm
    ss_tot = np.dot(ys - ym, ys - ym)
    if ss_tot == 0:
        return float(slope), float(intercept), 0.0
    resid = ys - (slope * xs + intercept)
    r2 = 1.0 - np.dot(resid, resid) / ss_tot
    return float(slope), float(intercept), float(r2)
