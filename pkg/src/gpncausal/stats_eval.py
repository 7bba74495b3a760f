"""Weighted empirical distributions and the summaries computed on them."""
from __future__ import annotations

import math

import numpy as np
from scipy.special import betainc

from .errors import DomainError, RangeError


class WeightedSample:
    """Values with non-negative weights normalized to sum to one."""

    def __init__(self, values, weights=None):
        v = np.asarray(values, dtype=float).ravel()
        if v.size == 0:
            raise DomainError("empty sample")
        if weights is None:
            w = np.full(v.size, 1.0 / v.size)
        else:
            w = np.asarray(weights, dtype=float).ravel()
            if w.size != v.size:
                raise DomainError("values and weights differ in length")
            if np.any(w < 0) or not np.all(np.isfinite(w)) or w.sum() <= 0:
                raise DomainError("weights must be finite, non-negative and not all zero")
            w = w / math.fsum(w)
        if not np.all(np.isfinite(v)):
            raise DomainError("values must be finite")
        self.values = v
        self.weights = w

    def __len__(self):
        return self.values.size

    @property
    def uniform(self):
        return bool(np.all(self.weights == self.weights[0]))

    @property
    def n_eff(self):
        """Kish effective sample size (sum w)^2 / sum w^2."""
        if self.uniform:
            return float(self.values.size)
        return float(1.0 / np.sum(self.weights ** 2))

    def mean(self):
        return float(self.values @ self.weights)

    def sd(self):
        m = self.mean()
        return float(np.sqrt(max(((self.values - m) ** 2) @ self.weights, 0.0)))


def _cdf_on(s: WeightedSample, t):
    order = np.argsort(s.values, kind="stable")
    v = s.values[order]
    cw = np.concatenate([[0.0], np.cumsum(s.weights[order])])
    return cw[np.searchsorted(v, t, side="right")]


def wasserstein(a: WeightedSample, b: WeightedSample) -> float:
    """First-order Wasserstein distance: integral of |F_a - F_b|.

    Both CDFs are step functions, so the integral is an exact sum over the
    merged support.
    """
    t = np.unique(np.concatenate([a.values, b.values]))
    if t.size < 2:
        return 0.0
    diff = np.abs(_cdf_on(a, t[:-1]) - _cdf_on(b, t[:-1]))
    return float(np.sum(diff * np.diff(t)))


def weighted_hd_quantile(s: WeightedSample, q: float, n_eff: float | None = None) -> float:
    """Weighted Harrell-Davis quantile estimate.

    Order statistic i gets the Beta(q (n + 1), (1 - q)(n + 1)) mass of the
    interval between the cumulative weights before and after it, with n the
    effective sample size.  ``n_eff`` overrides the Kish value, which is
    useful when the weights are frequencies.
    """
    if not 0.0 < q < 1.0:
        raise DomainError("q must lie in (0, 1)")
    order = np.argsort(s.values, kind="stable")
    v = s.values[order]
    if v[0] == v[-1]:
        return float(v[0])
    n = s.n_eff if n_eff is None else float(n_eff)
    a, b = q * (n + 1.0), (1.0 - q) * (n + 1.0)
    if s.uniform:
        t = np.arange(v.size + 1) / v.size
    else:
        t = np.concatenate([[0.0], np.cumsum(s.weights[order])])
        t[-1] = 1.0
    cdf = betainc(a, b, np.clip(t, 0.0, 1.0))
    return float(np.diff(cdf) @ v)


def credible_band(curve, level=0.8):
    """Per-grid weighted HD quantiles at (1 - level) / 2 and (1 + level) / 2."""
    if not 0.0 < level < 1.0:
        raise DomainError("level must lie in (0, 1)")
    lo_q, hi_q = (1.0 - level) / 2.0, (1.0 + level) / 2.0
    lo = np.empty(curve.grid.size)
    hi = np.empty(curve.grid.size)
    for g in range(curve.grid.size):
        s = WeightedSample(curve.samples[g], curve.weights)
        lo[g] = weighted_hd_quantile(s, lo_q)
        hi[g] = weighted_hd_quantile(s, hi_q)
    return lo, np.maximum(hi, lo)


def curve_at(curve, x):
    """Per-draw values at ``x`` by linear interpolation on the grid."""
    grid = curve.grid
    if not grid.min() <= x <= grid.max():
        raise RangeError(f"{x} lies outside the grid [{grid.min()}, {grid.max()}]")
    order = np.argsort(grid)
    g = grid[order]
    j = int(np.clip(np.searchsorted(g, x, side="right") - 1, 0, g.size - 2)) if g.size > 1 else 0
    if g.size == 1:
        return curve.samples[order[0]].copy()
    lam = (x - g[j]) / (g[j + 1] - g[j])
    return (1.0 - lam) * curve.samples[order[j]] + lam * curve.samples[order[j + 1]]


def causal_effect_delta(curve, x: float) -> WeightedSample:
    """Distribution of E(Y | do(X = x + 1)) - E(Y | do(X = x)) across draws."""
    return WeightedSample(curve_at(curve, x + 1.0) - curve_at(curve, x), curve.weights)


def silverman_bandwidth(s: WeightedSample) -> float:
    sd = s.sd()
    if sd == 0.0:
        return 1e-3 * max(1.0, abs(s.mean()))
    return 1.06 * sd * s.n_eff ** -0.2


def kde(s: WeightedSample, bandwidth: float | None = None, n_grid: int = 512):
    """Weighted Gaussian kernel density on an equispaced grid.

    Returns ``(grid, density)``; the grid spans the data plus five
    bandwidths on each side.
    """
    h = silverman_bandwidth(s) if bandwidth is None else float(bandwidth)
    if h <= 0:
        raise DomainError("bandwidth must be positive")
    grid = np.linspace(s.values.min() - 5 * h, s.values.max() + 5 * h, n_grid)
    dens = np.zeros(n_grid)
    for start in range(0, s.values.size, 4096):
        v = s.values[start:start + 4096]
        w = s.weights[start:start + 4096]
        z = (grid[:, None] - v[None, :]) / h
        dens += np.exp(-0.5 * z * z) @ w
    return grid, dens / (h * np.sqrt(2.0 * np.pi))


def write_xy_csv(path, x, y, header=("grid", "value")):
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for a, b in zip(x, y):
            fh.write(f"{float(a)!r},{float(b)!r}\n")
