"""Bayesian linear-Gaussian comparator.

Each family is y = b0 + b^T pa + eps with the conjugate prior
b | s2 ~ N(0, s2 I) (intercept included) and s2 ~ IG(1, 1).  Interventions
propagate through the mutilated graph exactly like the GP networks, so every
sampled curve is affine in the intervention value.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.special import gammaln

from . import graph
from ._rng import keyed_rng
from .causal_mc import InterventionCurve, InterventionQuery, canonical_order
from .errors import DomainError, NumericError
from .graph import Dag, node_set
from .kernel_gp import LOG_2PI
from .structure import FamilyCache, normalized_weights

A0 = 1.0
B0 = 1.0


@dataclass
class LinearFamily:
    node: int
    parents: tuple
    mean: np.ndarray          # (p + 1,) intercept first
    precision: np.ndarray     # (p + 1, p + 1)
    a: float
    b: float
    log_evidence: float

    def __post_init__(self):
        self._chol = linalg.cholesky(self.precision, lower=True)

    def draw(self, size, rng):
        """Posterior draws of coefficients (size, p + 1) and noise variances (size,)."""
        var = self.b / rng.gamma(self.a, size=size)
        z = rng.standard_normal((size, self.mean.size))
        # Cov(coef | var) = var * precision^{-1} = var * L^{-T} L^{-1}
        dev = linalg.solve_triangular(self._chol, z.T, lower=True, trans="T").T
        return self.mean + np.sqrt(var)[:, None] * dev, var


def fit_linear_family(data, node, parent_set=()) -> LinearFamily:
    """Conjugate normal-inverse-gamma regression of ``node`` on its parents."""
    data = np.asarray(data, dtype=float)
    pa = node_set(parent_set)
    if node in pa:
        raise DomainError("a node cannot be its own parent")
    N = data.shape[0]
    if N <= len(pa) + 1:
        raise DomainError("need more rows than regression coefficients")
    y = data[:, node]
    D = np.column_stack([np.ones(N), data[:, list(pa)]])
    prec = D.T @ D + np.eye(D.shape[1])
    try:
        L = linalg.cholesky(prec, lower=True)
    except linalg.LinAlgError as err:
        raise NumericError("singular regression design") from err
    mean = linalg.cho_solve((L, True), D.T @ y)
    a = A0 + 0.5 * N
    b = B0 + 0.5 * max(float(y @ y - mean @ prec @ mean), 0.0)
    log_ev = (-0.5 * N * LOG_2PI - np.sum(np.log(np.diag(L)))
              + A0 * np.log(B0) - a * np.log(b) + gammaln(a) - gammaln(A0))
    return LinearFamily(int(node), pa, mean, prec, a, b, float(log_ev))


class LinearScoreCache(FamilyCache):
    """Family cache whose approximate and exact scores are both the linear evidence.

    Structure sampling with this cache targets the linear-model posterior
    directly, so every importance weight is one.
    """

    def __init__(self, data, seed=0, max_parents=3):
        super().__init__(data, seed=seed, max_parents=max_parents)
        self._fam = {}

    def family(self, node, parents) -> LinearFamily:
        key = (node, node_set(parents))
        if key not in self._fam:
            self._check(*key)
            self._fam[key] = fit_linear_family(self.data, *key)
        return self._fam[key]

    def q_score(self, node, parents):
        return self.family(node, parents).log_evidence

    def log_marginal(self, node, parents):
        return self.family(node, parents).log_evidence, 0.0

    def hyper(self, node, parents):
        raise DomainError("linear families carry no GP hyperparameters")


def _propagate_linear(dag: Dag, families, fixed, G, P, rng_for_node):
    H = graph.mutilate(dag, fixed.keys())
    vals = [None] * H.n
    expct = [None] * H.n
    for node in graph.topological_order(H):
        if node in fixed:
            vals[node] = expct[node] = np.broadcast_to(np.asarray(fixed[node], float)[:, None], (G, P))
            continue
        rng = rng_for_node(node)
        fam = families[node]
        coef, var = fam.draw(P, rng)
        eps = rng.standard_normal(P)
        f = np.broadcast_to(coef[:, 0][None, :], (G, P)).copy()
        for k, p in enumerate(fam.parents):
            f += coef[:, k + 1][None, :] * vals[p]
        expct[node] = f
        vals[node] = f + (np.sqrt(var) * eps)[None, :]
    return vals, expct


def intervene_linear(source, data, query: InterventionQuery, rng_seed=0):
    """Linear-model intervention curves for a known DAG or a DAG archive.

    ``source`` is a Dag or a list of WeightedDagSample; archive weights are
    respected, so a GP-weighted archive may also be reused here.
    """
    data = np.asarray(data, dtype=float)
    samples = source if isinstance(source, (list, tuple)) else None
    if samples is None:
        from .structure import WeightedDagSample
        samples = [WeightedDagSample(source, 0.0)]
    if not samples:
        raise DomainError("archive is empty")
    n = data.shape[1]
    for v in query.nodes:
        if not 0 <= v < n:
            raise DomainError(f"unknown node {v}")
    targets = query.resolve_targets(n)
    fams = {}

    def family(v, pa):
        if (v, pa) not in fams:
            fams[(v, pa)] = fit_linear_family(data, v, pa)
        return fams[(v, pa)]

    order, keys, occ = canonical_order(samples)
    w_all = normalized_weights(samples)
    P = query.n_mc
    out = {t: [] for t in targets}
    for i in order:
        dag = samples[i].dag
        families = {v: family(v, pa) for v, pa in enumerate(dag.parent_sets()) if v not in query.intervened}
        vals, expct = _propagate_linear(dag, families, query.intervened, query.G, P,
                                        lambda node: keyed_rng(rng_seed, "linear", keys[i], occ[i], node))
        src = expct if query.expectation_only else vals
        for t in targets:
            out[t].append(np.array(src[t]))
    weights = np.repeat([w_all[i] / P for i in order], P)
    dag_index = np.repeat(order, P)
    meta = {"seed": rng_seed, "expectation_only": query.expectation_only, "n_dags": len(samples)}
    return {t: InterventionCurve(query.grid, np.concatenate(out[t], axis=1), weights, t, query.nodes,
                                 "linear", dag_index, dict(meta))
            for t in targets}
