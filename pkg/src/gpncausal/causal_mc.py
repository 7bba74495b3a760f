"""Intervention distributions by propagating particles through a mutilated GPN.

A particle is one joint draw of every node at every grid value.  Within a
particle the GP function of each node is drawn jointly over all the parent
locations the grid produces, and the additive noise is shared across the
grid, so each particle traces a coherent curve while every grid value keeps
the correct marginal law.  Particles are independent of each other.
"""
from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import graph
from ._rng import keyed_rng
from .errors import ArchiveIntegrityError, DomainError
from .gpn import FittedGpn, GpConditional, RootConditional
from .graph import Dag
from .kernel_gp import batch_jittered_cholesky

THREADS_ENV = "GPNCAUSAL_THREADS"


@dataclass
class InterventionQuery:
    """do(intervened[k] = grid_k[g]) for g = 0..G-1; all grids share length G."""

    intervened: dict
    targets: tuple | str | None = None   # None: every non-intervened node; "downstream"
    n_mc: int = 100
    expectation_only: bool = False

    def __post_init__(self):
        grids = {int(k): np.atleast_1d(np.asarray(v, dtype=float)) for k, v in self.intervened.items()}
        if not grids:
            raise DomainError("query needs at least one intervened node")
        lengths = {g.size for g in grids.values()}
        if len(lengths) != 1 or 0 in lengths:
            raise DomainError("intervention grids must be nonempty and of equal length")
        if not all(np.all(np.isfinite(g)) for g in grids.values()):
            raise DomainError("intervention grids must be finite")
        self.intervened = dict(sorted(grids.items()))
        if self.targets is not None and self.targets != "downstream":
            self.targets = tuple(int(t) for t in np.atleast_1d(self.targets))
            if set(self.targets) & set(self.intervened):
                raise DomainError("a target cannot be intervened on")
        if self.n_mc < 1:
            raise DomainError("n_mc must be >= 1")

    @property
    def nodes(self):
        return tuple(self.intervened)

    @property
    def grid(self):
        return self.intervened[self.nodes[0]]

    @property
    def G(self):
        return self.grid.size

    def resolve_targets(self, n, dag=None):
        if self.targets is None:
            return tuple(v for v in range(n) if v not in self.intervened)
        if self.targets == "downstream":
            # without a single DAG every non-intervened node may be downstream
            if dag is None:
                return tuple(v for v in range(n) if v not in self.intervened)
            return downstream_targets(dag, self.nodes)
        for t in self.targets:
            if not 0 <= t < n:
                raise DomainError(f"unknown target node {t}")
        return self.targets


@dataclass
class InterventionCurve:
    grid: np.ndarray          # (G,) values of the first intervened node
    samples: np.ndarray       # (G, D) one column per draw
    weights: np.ndarray       # (D,) non-negative, sum to one
    target: int
    intervened: tuple
    method: str = "mc"
    dag_index: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.samples = np.asarray(self.samples, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.samples.shape[0] != self.grid.size:
            raise DomainError("samples need one row per grid value")
        if self.weights.size != self.samples.shape[1] or np.any(self.weights < 0):
            raise DomainError("weights must be non-negative, one per draw")
        if self.dag_index is None:
            self.dag_index = np.zeros(self.samples.shape[1], dtype=int)

    @property
    def n_draws(self):
        return self.samples.shape[1]

    def mean(self):
        return self.samples @ self.weights / self.weights.sum()

    def sd(self):
        m = self.mean()
        w = self.weights / self.weights.sum()
        return np.sqrt(np.maximum(((self.samples - m[:, None]) ** 2) @ w, 0.0))

    def to_csv(self, path):
        """Long format: grid_value, draw_index, value, weight, dag_index."""
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["grid_value", "draw_index", "value", "weight", "dag_index"])
        for g, x in enumerate(self.grid):
            for d in range(self.n_draws):
                wr.writerow([repr(float(x)), d, repr(float(self.samples[g, d])),
                             repr(float(self.weights[d])), int(self.dag_index[d])])
        with open(path, "w", newline="") as fh:
            fh.write(buf.getvalue())

    @classmethod
    def from_csv(cls, path, target=-1, intervened=(), method="mc"):
        rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        grid = np.unique(rows[:, 0])
        D = int(rows[:, 1].max()) + 1
        samples = np.empty((grid.size, D))
        gi = np.searchsorted(grid, rows[:, 0])
        samples[gi, rows[:, 1].astype(int)] = rows[:, 2]
        first = rows[gi == 0]
        order = np.argsort(first[:, 1])
        return cls(grid, samples, first[order, 3], target, tuple(intervened), method,
                   first[order, 4].astype(int))

    def summary(self, level=0.8):
        from .stats_eval import credible_band, weighted_hd_quantile, WeightedSample
        lo, hi = credible_band(self, level)
        med = [weighted_hd_quantile(WeightedSample(self.samples[g], self.weights), 0.5)
               for g in range(self.grid.size)]
        return {"method": self.method, "target": self.target, "intervened": list(self.intervened),
                "level": level, "grid": self.grid.tolist(), "mean": self.mean().tolist(),
                "hd_median": med, "band_lo": lo.tolist(), "band_hi": hi.tolist(),
                "n_draws": self.n_draws, "meta": self.meta}

    def write_summary(self, path, level=0.8):
        with open(path, "w", newline="\n") as fh:
            json.dump(self.summary(level), fh, indent=1, sort_keys=True)
            fh.write("\n")


# -- propagation ------------------------------------------------------------

def downstream_targets(dag: Dag, intervened) -> tuple:
    """Nodes reachable from an intervened node once its incoming edges are cut."""
    nodes = graph.node_set(intervened)
    H = graph.mutilate(dag, nodes)
    return tuple(v for v in graph.descendants(H, nodes) if v not in nodes)


def _gp_node(cond: GpConditional, locs, rng):
    """Function draws (G, P) and noise variances (P,) for a GP node.

    ``locs`` has shape (G, P, k).  Hyperparameters are drawn per particle from
    the retained posterior draws (with replacement).
    """
    G, P, k = locs.shape
    S = len(cond.samples)
    idx = rng.integers(S, size=P)
    const = np.all(locs == locs[:1], axis=(0, 2))
    f = np.empty((G, P))
    for i in np.unique(idx[const]):
        sel = np.flatnonzero(const & (idx == i))
        Xs = locs[0, sel, :]
        mean, v = cond.cross(i, Xs)
        var = np.maximum(float(k) - np.sum(v * v, axis=0), 0.0)
        f[:, sel] = (mean + np.sqrt(var) * rng.standard_normal(sel.size))[None, :]
    for i in np.unique(idx[~const]):
        sel = np.flatnonzero(~const & (idx == i))
        L_own = locs[:, sel, :].transpose(1, 0, 2)              # (s, G, k)
        mean, v = cond.cross(i, L_own.reshape(-1, k))
        ls = np.asarray(cond.samples.lengthscales[i])
        diff = L_own[:, :, None, :] - L_own[:, None, :, :]
        Kss = np.exp(-(diff * diff) / (2.0 * ls ** 2)).sum(axis=-1)
        V = v.reshape(v.shape[0], sel.size, G)
        cov = Kss - np.einsum("nsg,nsh->sgh", V, V)
        cov = 0.5 * (cov + cov.transpose(0, 2, 1))
        Lc = batch_jittered_cholesky(cov)
        z = rng.standard_normal((sel.size, G))
        f[:, sel] = (mean.reshape(sel.size, G) + np.einsum("sgh,sh->sg", Lc, z)).T
    return f, cond.samples.noise_var[idx]


def propagate(model: FittedGpn, fixed: dict, G: int, P: int, rng_for_node):
    """Sample every node of the mutilated model.

    ``fixed`` maps intervened nodes to (G,) grids.  ``rng_for_node(node)``
    returns the generator for that node.  Returns ``(values, expectations)``,
    two lists of (G, P) arrays; the second omits each node's own noise.
    """
    H = graph.mutilate(model.dag, fixed.keys()) if fixed else model.dag
    vals = [None] * H.n
    expct = [None] * H.n
    for node in graph.topological_order(H):
        if node in fixed:
            vals[node] = expct[node] = np.broadcast_to(np.asarray(fixed[node], float)[:, None], (G, P))
            continue
        rng = rng_for_node(node)
        cond = model.conditionals[node]
        if isinstance(cond, RootConditional):
            mu, var = cond.draw(P, rng)
            eps = rng.standard_normal(P)
            expct[node] = np.broadcast_to(mu[None, :], (G, P))
            vals[node] = np.broadcast_to((mu + np.sqrt(var) * eps)[None, :], (G, P))
            continue
        pa = graph.parents(H, node)
        locs = np.stack([vals[p] for p in pa], axis=-1)
        f, noise_var = _gp_node(cond, locs, rng)
        eps = rng.standard_normal(P)
        expct[node] = f
        vals[node] = f + (np.sqrt(noise_var) * eps)[None, :]
    return vals, expct


def _check_model(model: FittedGpn, dag: Dag):
    if model.dag.n != dag.n or model.dag.parent_sets() != dag.parent_sets():
        raise DomainError("fitted model does not match the supplied DAG")


def _run(model, query: InterventionQuery, rng_for_node, targets=None):
    for v in query.nodes:
        graph._check_node(model.dag, v)
    vals, expct = propagate(model, query.intervened, query.G, query.n_mc, rng_for_node)
    out = {}
    for t in targets if targets is not None else query.resolve_targets(model.dag.n, model.dag):
        src = expct if query.expectation_only else vals
        out[t] = np.array(src[t])
    return out


def intervene_known_dag(model: FittedGpn, dag: Dag, query: InterventionQuery, rng_seed=0, method="mc"):
    """Posterior (predictive) intervention curves for a known DAG.

    Returns ``{target: InterventionCurve}`` with uniform weights.
    """
    _check_model(model, dag)
    draws = _run(model, query, lambda node: keyed_rng(rng_seed, "mc", str(dag.key()), 0, node))
    P = query.n_mc
    meta = {"seed": rng_seed, "expectation_only": query.expectation_only, "n_dags": 1}
    return {t: InterventionCurve(query.grid, s, np.full(P, 1.0 / P), t, query.nodes, method,
                                 np.zeros(P, dtype=int), dict(meta))
            for t, s in draws.items()}


def sample_observational(model: FittedGpn, n_obs: int, rng_seed=0):
    """Posterior-predictive observational rows (n_obs, n) from a fitted model."""
    vals, _ = propagate(model, {}, 1, n_obs, lambda node: keyed_rng(rng_seed, "obs", node))
    return np.stack([v[0] for v in vals], axis=-1)


def _thread_count():
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


class ConditionalPool:
    """Shares fitted conditionals (and their factorizations) across DAG samples."""

    def __init__(self, data):
        self.data = np.asarray(data, dtype=float)
        self._gp = {}
        self._root = {}

    def root(self, node):
        if node not in self._root:
            self._root[node] = RootConditional(self.data[:, node])
        return self._root[node]

    def gp(self, node, pa, samples):
        key = (node, pa, id(samples))
        if key not in self._gp:
            self._gp[key] = (GpConditional(self.data[:, list(pa)], self.data[:, node], samples), samples)
        return self._gp[key][0]

    def model(self, sample) -> FittedGpn:
        conds = {}
        for v, pa in enumerate(sample.dag.parent_sets()):
            if not pa:
                conds[v] = self.root(v)
            elif v not in sample.conditionals:
                raise ArchiveIntegrityError(f"archive record lacks the conditional of node {v} given {pa}")
            else:
                conds[v] = self.gp(v, pa, sample.conditionals[v])
        return FittedGpn(sample.dag, conds, sample.dag.labels)


def canonical_order(samples):
    """Order-independent processing order and per-DAG occurrence numbers."""
    keys = [str(s.dag.key()) for s in samples]
    order = sorted(range(len(samples)), key=lambda i: (keys[i], samples[i].log_weight, i))
    seen, occ = {}, {}
    for i in order:
        occ[i] = seen.get(keys[i], 0)
        seen[keys[i]] = occ[i] + 1
    return order, keys, occ


def intervene_unknown_dag(archive, data, query: InterventionQuery, rng_seed=0, *, pool=None, method="mc"):
    """Mix known-DAG curves over weighted DAG samples.

    Each sampled DAG contributes ``query.n_mc`` draws carrying weight
    w_m / n_mc, so the weighted mean is the importance-sampling estimate.
    Output columns follow a canonical DAG order, which makes the result
    independent of the archive order.
    """
    from .structure import normalized_weights

    if not archive:
        raise DomainError("archive is empty")
    data = np.asarray(data, dtype=float)
    pool = pool or ConditionalPool(data)
    order, keys, occ = canonical_order(archive)
    models = [pool.model(archive[i]) for i in order]
    w_all = normalized_weights(archive)
    targets = query.resolve_targets(data.shape[1])

    def one(j):
        i = order[j]
        return _run(models[j], query, lambda node: keyed_rng(rng_seed, "mc", keys[i], occ[i], node), targets)

    threads = _thread_count()
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(one, range(len(order))))
    else:
        results = [one(j) for j in range(len(order))]
    P = query.n_mc
    weights = np.repeat([w_all[i] / P for i in order], P)
    dag_index = np.repeat(order, P)
    meta = {"seed": rng_seed, "expectation_only": query.expectation_only, "n_dags": len(archive)}
    return {t: InterventionCurve(query.grid, np.concatenate([r[t] for r in results], axis=1), weights,
                                 t, query.nodes, method, dag_index, dict(meta))
            for t in targets}
