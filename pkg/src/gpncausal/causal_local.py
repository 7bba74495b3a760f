"""Local backdoor approximation of E(Y | do(X = x)).

Y is regressed on X and the parents of X with an additive GP; the component
of X, shifted by the sample mean of Y, is the intervention curve.  Without a
known DAG the curve is mixed over the sampled parent sets of X.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ._rng import keyed_rng, mask_of
from .causal_mc import InterventionCurve
from .errors import DomainError
from .gpn import RootConditional
from .graph import node_set
from .kernel_gp import HyperPrior, HyperSamples, additive_component_posterior, sample_gaussian, sample_hyperparameters


@dataclass
class LocalFit:
    x: int
    y: int
    adjustment: tuple
    hyper: HyperSamples | None      # None when Y is a parent of X
    x_train: np.ndarray
    z_train: np.ndarray
    y_train: np.ndarray             # centred outcome
    y_mean: float
    y_raw: np.ndarray = field(repr=False, default=None)

    @property
    def constant(self):
        """True when Y is a parent of X, so intervening on X leaves Y unchanged."""
        return self.hyper is None


def fit_local(data, x, y, adjustment=(), prior=None, rng_seed=0, n_hyper=50, burn_in=500, thin=5) -> LocalFit:
    """Sample hyperparameters of y = f(x) + sum_z g_z(z) + eps.

    If ``y`` is in ``adjustment`` the fit is marked constant and no GP is
    fitted.
    """
    data = np.asarray(data, dtype=float)
    n = data.shape[1]
    x, y = int(x), int(y)
    adj = node_set(adjustment)
    for v in (x, y, *adj):
        if not 0 <= v < n:
            raise DomainError(f"unknown column {v}")
    if x == y:
        raise DomainError("intervention and outcome nodes must differ")
    if x in adj:
        raise DomainError("the intervened node cannot be in its own adjustment set")
    yv = data[:, y]
    ybar = float(yv.mean())
    common = dict(x=x, y=y, adjustment=adj, x_train=data[:, x], y_train=yv - ybar, y_mean=ybar, y_raw=yv)
    if y in adj:
        return LocalFit(hyper=None, z_train=np.empty((data.shape[0], 0)), **common)
    Z = data[:, list(adj)]
    rng = keyed_rng(rng_seed, "local-hyper", x, y, mask_of(adj))
    hs = sample_hyperparameters(yv - ybar, np.column_stack([data[:, x], Z]), prior or HyperPrior(),
                                n_hyper, rng, burn_in=burn_in, thin=thin)
    return LocalFit(hyper=hs, z_train=Z, **common)


def largest_remainder(probs, total) -> np.ndarray:
    """Integer counts proportional to ``probs`` that sum exactly to ``total``.

    Ties in the remainder go to the earlier entry.
    """
    p = np.asarray(probs, dtype=float)
    if p.size == 0 or np.any(p < 0) or p.sum() <= 0:
        raise DomainError("need non-negative probabilities with positive sum")
    quota = p / p.sum() * total
    counts = np.floor(quota).astype(int)
    rest = total - counts.sum()
    order = sorted(range(p.size), key=lambda i: (-(quota[i] - counts[i]), i))
    for i in order[:rest]:
        counts[i] += 1
    return counts


def _local_draws(fit: LocalFit, grid, n_draws, rng):
    grid = np.asarray(grid, dtype=float)
    if fit.constant:
        mu, _ = RootConditional(fit.y_raw).draw(n_draws, rng)
        return np.broadcast_to(mu[None, :], (grid.size, n_draws)).copy()
    counts = largest_remainder(np.ones(len(fit.hyper)), n_draws)
    cols = []
    for i, c in enumerate(counts):
        if c == 0:
            continue
        post = additive_component_posterior(fit.y_train, fit.x_train, fit.z_train, grid, fit.hyper[i])
        cols.append(sample_gaussian(post, int(c), rng).T)
    return np.concatenate(cols, axis=1) + fit.y_mean


def local_curve(fit: LocalFit, grid, n_draws=500, rng_seed=0) -> InterventionCurve:
    """Draws of E(Y | do(X = x)) over ``grid`` with uniform weights."""
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if n_draws < 1:
        raise DomainError("n_draws must be >= 1")
    sd = fit.x_train.std()
    mu = fit.x_train.mean()
    if sd > 0 and np.any(np.abs(grid - mu) > 3 * sd):
        warnings.warn("grid extends beyond 3 sd of the intervened column", stacklevel=2)
    rng = keyed_rng(rng_seed, "local-curve", fit.x, fit.y, mask_of(fit.adjustment))
    s = _local_draws(fit, grid, n_draws, rng)
    meta = {"seed": rng_seed, "adjustment": list(fit.adjustment), "n_fits": 1}
    return InterventionCurve(grid, s, np.full(n_draws, 1.0 / n_draws), fit.y, (fit.x,), "local",
                             np.zeros(n_draws, dtype=int), meta)


def local_mixture(data, archive, x, y, grid, prior=None, rng_seed=0, n_draws=1000, n_hyper=50,
                  burn_in=500, thin=5, fits=None) -> InterventionCurve:
    """Mix local curves over the weighted parent-set posterior of ``x``.

    Each distinct parent set is fitted once (``fits`` may carry fits across
    calls) and receives a largest-remainder share of ``n_draws``.
    """
    from .structure import parent_set_posterior

    if not archive:
        raise DomainError("archive is empty")
    if isinstance(x, (tuple, list, dict)):
        if len(x) != 1:
            raise DomainError("the local method supports single-node interventions only")
        x = next(iter(x))
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    post = parent_set_posterior(archive, x)
    sets = list(post.probs)
    counts = largest_remainder([post.probs[s] for s in sets], n_draws)
    fits = {} if fits is None else fits
    cols, comp = [], []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for j, (pa, c) in enumerate(zip(sets, counts)):
            if c == 0:
                continue
            key = (int(x), int(y), pa)
            if key not in fits:
                fits[key] = fit_local(data, x, y, pa, prior, rng_seed, n_hyper, burn_in, thin)
            rng = keyed_rng(rng_seed, "local-curve", int(x), int(y), mask_of(pa))
            cols.append(_local_draws(fits[key], grid, int(c), rng))
            comp.append(np.full(c, j))
    s = np.concatenate(cols, axis=1)
    meta = {"seed": rng_seed, "parent_sets": [list(p) for p in sets],
            "parent_set_probs": [post.probs[p] for p in sets], "counts": counts.tolist(),
            "n_fits": int(np.count_nonzero(counts))}
    return InterventionCurve(grid, s, np.full(n_draws, 1.0 / n_draws), int(y), (int(x),), "local",
                             np.concatenate(comp), meta)

