"""Posterior over DAGs for GP networks.

Structure MCMC runs on a cheap approximate score (MAP fit with a dimension
penalty); each retained DAG carries an importance weight
sum_i [log marginal_i - q_score_i] which corrects the approximation toward
exp(sum_i log marginal_i), the posterior under a uniform DAG prior.
"""
from __future__ import annotations

import itertools
import json
import math
import threading
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from . import graph
from ._rng import keyed_rng, mask_of
from .errors import CapacityError, DomainError, OptimizationError
from .gpn import RootConditional, family_hyper_samples
from .graph import Dag, node_set
from .kernel_gp import LOG_2PI, HyperPrior, HyperSamples, batch_jittered_cholesky, map_search, sq_dists

DEFAULT_MAX_PARENTS = 3


@dataclass(frozen=True)
class FamilyScore:
    node: int
    parent_set: tuple
    q_score: float
    log_marginal: float
    mc_variance: float


# -- family scores ---------------------------------------------------------

def family_q_score(data, node, parent_set, prior=None, rng_seed=0, n_restarts=5) -> float:
    """Approximate log score of one family.

    Non-root: log p(x | Pa, MAP) + log p(MAP) - (|Theta| / 2) log N.
    Root: Gaussian log-likelihood at the sample mean / variance, penalized
    for its two parameters in the same way.
    """
    data = np.asarray(data, dtype=float)
    pa = node_set(parent_set)
    if node in pa:
        raise DomainError("a node cannot be its own parent")
    y = data[:, node]
    n = y.size
    if not pa:
        var = y.var()
        ll = -0.5 * n * (LOG_2PI + np.log(var) + 1.0)
        return float(ll - np.log(n))
    rng = keyed_rng(rng_seed, "q-score", node, mask_of(pa))
    try:
        _, lp, _ = map_search(y, data[:, list(pa)], prior or HyperPrior(), n_restarts, rng)
    except OptimizationError as err:
        if err.best is None:
            raise
        lp = err.best[1]
    return float(lp - 0.5 * (len(pa) + 1) * np.log(n))


def _gp_loglik_batch(y, D2, theta, sd, chunk=128):
    """log N(y; 0, K(theta_s) + sd_s^2 I) for every prior draw s."""
    n = y.size
    out = np.empty(theta.shape[0])
    for start in range(0, theta.shape[0], chunk):
        th = theta[start:start + chunk]
        s = sd[start:start + chunk]
        C = np.exp(-D2[None] / (2.0 * th[:, :, None, None] ** 2)).sum(axis=1)
        C[:, np.arange(n), np.arange(n)] += (s * s)[:, None]
        L = batch_jittered_cholesky(C)
        for b in range(L.shape[0]):
            a = linalg.solve_triangular(L[b], y, lower=True)
            out[start + b] = -0.5 * a @ a - np.sum(np.log(np.diag(L[b]))) - 0.5 * n * LOG_2PI
    return out


def family_log_marginal_mc(data, node, parent_set, prior=None, S=1000, rng_seed=0):
    """Prior Monte Carlo estimate of log int p(x_node | Pa, Theta) p(Theta) dTheta.

    Returns ``(log_marginal, mc_variance)`` where the variance is the delta
    method variance of the log of the (unbiased) probability-scale average.
    Root nodes use the closed-form normal-inverse-gamma marginal.
    """
    data = np.asarray(data, dtype=float)
    pa = node_set(parent_set)
    y = data[:, node]
    if not pa:
        return RootConditional(y).log_marginal(), 0.0
    if S < 100:
        raise DomainError("S must be at least 100")
    prior = prior or HyperPrior()
    rng = keyed_rng(rng_seed, "marginal", node, mask_of(pa))
    theta, sd = prior.sample(len(pa), S, rng)
    ll = _gp_loglik_batch(y, sq_dists(data[:, list(pa)], data[:, list(pa)]), theta, sd)
    est = float(logsumexp(ll) - np.log(S))
    w = np.exp(ll - ll.max())
    var = float(np.var(w) / (S * np.mean(w) ** 2))
    return est, var


class FamilyCache:
    """Memo table of family scores and hyperparameter draws for one data set.

    Every entry is computed from an RNG keyed by (seed, node, parent set), so
    the table content does not depend on the order in which it is filled.
    """

    def __init__(self, data, prior=None, seed=0, S=1000, n_hyper=50, max_parents=DEFAULT_MAX_PARENTS,
                 n_restarts=5, hyper_burn_in=500, hyper_thin=5):
        self.data = np.asarray(data, dtype=float)
        self.n = self.data.shape[1]
        self.prior = prior or HyperPrior()
        self.seed = seed
        self.S = S
        self.n_hyper = n_hyper
        self.max_parents = max_parents
        self.n_restarts = n_restarts
        self.hyper_burn_in = hyper_burn_in
        self.hyper_thin = hyper_thin
        self._q = {}
        self._marg = {}
        self._hyper = {}
        self._lock = threading.Lock()
        self.n_marginals_computed = 0

    def _check(self, node, pa):
        if len(pa) > self.max_parents:
            raise DomainError(f"parent set {pa} exceeds max_parents={self.max_parents}")

    def q_score(self, node, parents):
        key = (node, node_set(parents))
        if key not in self._q:
            self._check(*key)
            val = family_q_score(self.data, node, key[1], self.prior, self.seed, self.n_restarts)
            with self._lock:
                self._q.setdefault(key, val)
        return self._q[key]

    def log_marginal(self, node, parents):
        key = (node, node_set(parents))
        if key not in self._marg:
            self._check(*key)
            val = family_log_marginal_mc(self.data, node, key[1], self.prior, self.S, self.seed)
            with self._lock:
                if key not in self._marg:
                    self._marg[key] = val
                    self.n_marginals_computed += 1
        return self._marg[key]

    def score(self, node, parents) -> FamilyScore:
        pa = node_set(parents)
        lm, var = self.log_marginal(node, pa)
        return FamilyScore(node, pa, self.q_score(node, pa), lm, var)

    def hyper(self, node, parents) -> HyperSamples:
        key = (node, node_set(parents))
        if key not in self._hyper:
            val = family_hyper_samples(self.data, node, key[1], self.prior, self.n_hyper, self.seed,
                                       self.hyper_burn_in, self.hyper_thin)
            with self._lock:
                self._hyper.setdefault(key, val)
        return self._hyper[key]

    def log_weight(self, dag: Dag) -> float:
        return float(sum(self.log_marginal(v, pa)[0] - self.q_score(v, pa)
                         for v, pa in enumerate(dag.parent_sets())))

    def log_score(self, dag: Dag) -> float:
        return float(sum(self.log_marginal(v, pa)[0] for v, pa in enumerate(dag.parent_sets())))


# -- weighted DAG samples ---------------------------------------------------

@dataclass
class WeightedDagSample:
    dag: Dag
    log_weight: float
    conditionals: dict = field(default_factory=dict)   # node -> HyperSamples (non-roots)

    def to_dict(self):
        fams = []
        for v, pa in enumerate(self.dag.parent_sets()):
            if pa and v in self.conditionals:
                d = self.conditionals[v].to_dict()
                d.update(node=v, parents=list(pa))
                fams.append(d)
        return {"dag": self.dag.to_dict(), "log_weight": self.log_weight, "families": fams}

    @classmethod
    def from_dict(cls, d):
        conds = {int(f["node"]): HyperSamples.from_dict(f) for f in d.get("families", [])}
        return cls(Dag.from_dict(d["dag"]), float(d["log_weight"]), conds)


class DagArchive(list):
    """List of WeightedDagSample with chain diagnostics attached."""

    acceptance_rate = float("nan")
    n_steps = 0

    @property
    def n_unique(self):
        return len({s.dag.key() for s in self})

    def weights(self):
        return normalized_weights(self)

    def ess(self):
        """Two summaries: sum(w) / max(w) and Kish (sum w)^2 / sum w^2."""
        w = self.weights()
        return float(1.0 / w.max()), float(1.0 / np.sum(w * w))

    def diagnostics(self):
        ess_max, ess_kish = self.ess() if len(self) else (0.0, 0.0)
        return {"n_samples": len(self), "n_unique_dags": self.n_unique,
                "acceptance_rate": self.acceptance_rate, "ess_max": ess_max, "ess_kish": ess_kish}


def normalized_weights(samples) -> np.ndarray:
    """Self-normalized importance weights; the sum is order independent."""
    lw = np.array([s.log_weight for s in samples], dtype=float)
    if lw.size == 0:
        raise DomainError("no samples")
    w = np.exp(lw - lw.max())
    return w / math.fsum(w)


# -- structure MCMC -----------------------------------------------------------

def _ancestors(pmasks):
    n = len(pmasks)
    anc = [0] * n
    for order_pass in range(n):
        changed = False
        for v in range(n):
            a = pmasks[v]
            m = pmasks[v]
            while m:
                low = m & -m
                u = low.bit_length() - 1
                a |= anc[u]
                m ^= low
            if a != anc[v]:
                anc[v] = a
                changed = True
        if not changed:
            break
    return anc


def _neighbours(pmasks, max_parents):
    """All single-edge add / delete / reverse moves that keep the graph acyclic."""
    n = len(pmasks)
    anc = _ancestors(pmasks)
    moves = []
    for u, v in itertools.permutations(range(n), 2):
        bu, bv = 1 << u, 1 << v
        if pmasks[v] & bu:
            moves.append(("del", u, v))
            if bin(pmasks[u]).count("1") < max_parents:
                others = pmasks[v] & ~bu
                # reversing u->v closes a cycle iff u still reaches v without that edge
                blocked = any(others & (1 << w) and (w == u or anc[w] & bu) for w in range(n))
                if not blocked:
                    moves.append(("rev", u, v))
        elif not pmasks[u] & bv:
            if bin(pmasks[v]).count("1") < max_parents and not anc[u] & bv:
                moves.append(("add", u, v))
    return moves


def _apply(pmasks, move):
    kind, u, v = move
    pm = list(pmasks)
    if kind == "add":
        pm[v] |= 1 << u
    elif kind == "del":
        pm[v] &= ~(1 << u)
    else:
        pm[v] &= ~(1 << u)
        pm[u] |= 1 << v
    return tuple(pm)


def _mask_to_set(m):
    return tuple(i for i in range(m.bit_length()) if m >> i & 1)


def sample_dags(data, M, prior=None, rng_seed=0, *, cache: FamilyCache | None = None, burn_in=1000,
                thin=10, with_conditionals=True, labels=()) -> DagArchive:
    """Importance-weighted DAG samples from a structure MCMC chain.

    The chain proposes uniformly among single-edge moves and targets
    exp(sum of family q-scores) under a uniform DAG prior.  ``M`` thinned
    states are returned, each with log weight sum(log marginal - q-score) and,
    when ``with_conditionals``, the hyperparameter draws of every family.
    """
    if M < 1:
        raise DomainError("M must be >= 1")
    cache = cache or FamilyCache(data, prior, seed=rng_seed)
    n = cache.n
    labels = tuple(labels) or tuple(f"X{i + 1}" for i in range(n))
    rng = keyed_rng(rng_seed, "dag-mcmc")

    def q_of(pm):
        return sum(cache.q_score(v, _mask_to_set(m)) for v, m in enumerate(pm))

    state = tuple([0] * n)
    score = q_of(state)
    nbrs = _neighbours(state, cache.max_parents)
    archive = DagArchive()
    accepted = 0
    total = burn_in + M * thin
    for step in range(total):
        move = nbrs[rng.integers(len(nbrs))]
        prop = _apply(state, move)
        prop_nbrs = _neighbours(prop, cache.max_parents)
        prop_score = q_of(prop)
        log_acc = prop_score - score + np.log(len(nbrs)) - np.log(len(prop_nbrs))
        if np.log(rng.random()) < log_acc:
            state, score, nbrs = prop, prop_score, prop_nbrs
            accepted += 1
        if step >= burn_in and (step - burn_in + 1) % thin == 0:
            dag = Dag.from_parent_sets([_mask_to_set(m) for m in state], labels)
            archive.append(WeightedDagSample(dag, cache.log_weight(dag)))
    if with_conditionals:
        attach_conditionals(archive, cache)
    archive.acceptance_rate = accepted / total
    archive.n_steps = total
    return archive


def attach_conditionals(samples, cache: FamilyCache):
    """Fill the per-family hyperparameter cache of every sample."""
    for s in samples:
        for v, pa in enumerate(s.dag.parent_sets()):
            if pa and v not in s.conditionals:
                s.conditionals[v] = cache.hyper(v, pa)
    return samples


def enumerate_posterior(data, prior=None, rng_seed=0, *, cache: FamilyCache | None = None, labels=()):
    """Exact-enumeration posterior over all DAGs (n <= 4), uniform DAG prior.

    Returns a list of ``(Dag, probability)``.  Family marginals are memoized,
    so at most n * 2^(n-1) of them are estimated.
    """
    data = np.asarray(data, dtype=float)
    n = data.shape[1]
    if n > graph.MAX_ENUMERATION_NODES:
        raise CapacityError(f"enumeration supports n <= {graph.MAX_ENUMERATION_NODES}, got {n}")
    cache = cache or FamilyCache(data, prior, seed=rng_seed, max_parents=n - 1)
    dags = graph.enumerate_dags(n, labels)
    scores = np.array([cache.log_score(d) for d in dags])
    probs = np.exp(scores - logsumexp(scores))
    probs /= math.fsum(probs)
    return list(zip(dags, probs.tolist()))


@dataclass
class ParentSetPosterior:
    node: int
    probs: dict            # parent set tuple -> probability

    def expected_size(self):
        return float(sum(len(s) * p for s, p in self.probs.items()))


def parent_set_posterior(samples, node) -> ParentSetPosterior:
    """Weighted frequency of each sampled parent set of ``node``."""
    if not samples:
        raise DomainError("need at least one sample")
    w = normalized_weights(samples)
    acc = {}
    for s, wi in zip(samples, w):
        key = graph.parents(s.dag, node)
        acc.setdefault(key, []).append(wi)
    total = math.fsum(w)
    probs = {k: math.fsum(v) / total for k, v in sorted(acc.items())}
    return ParentSetPosterior(int(node), probs)


def edge_probabilities(samples) -> np.ndarray:
    """Weighted edge-inclusion matrix P[u, v] = Pr(u -> v)."""
    w = normalized_weights(samples)
    n = samples[0].dag.n
    acc = {}
    for s, wi in zip(samples, w):
        for e in s.dag.edges:
            acc.setdefault(e, []).append(wi)
    P = np.zeros((n, n))
    for (u, v), ws in acc.items():
        P[u, v] = min(math.fsum(ws), 1.0)
    return P


def posterior_edge_probabilities(posterior) -> np.ndarray:
    """Edge-inclusion matrix from an enumerated ``[(Dag, prob), ...]`` list."""
    n = posterior[0][0].n
    P = np.zeros((n, n))
    for dag, p in posterior:
        for u, v in dag.edges:
            P[u, v] += p
    return P


# -- persistence --------------------------------------------------------------

def write_archive(path, samples):
    """JSON lines, one DAG sample per line."""
    with open(path, "w", newline="\n") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_dict(), sort_keys=True) + "\n")


def read_archive(path) -> DagArchive:
    out = DagArchive()
    with open(path) as fh:
        for line in fh:
            if line.strip():
                out.append(WeightedDagSample.from_dict(json.loads(line)))
    return out


def write_posterior(path, posterior):
    rows = [{"dag": d.to_dict(), "probability": p} for d, p in posterior]
    with open(path, "w", newline="\n") as fh:
        json.dump({"n_dags": len(rows), "posterior": rows}, fh, indent=1, sort_keys=True)
        fh.write("\n")
