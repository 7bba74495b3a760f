"""GPN structural models: synthetic Fourier generator and fitted conditionals."""
from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import gammaln

from . import graph
from ._rng import keyed_rng, mask_of
from .errors import DomainError
from .graph import Dag
from .kernel_gp import (HyperPrior, HyperSamples, LOG_2PI, gram, jittered_cholesky,
                        sample_hyperparameters)

N_FREQ = 6
FOURIER_NOISE_VAR = 0.5


def fourier_concentration():
    """Dirichlet concentration for (u0, u1, v1, ..., u6, v6): e^{-k} per frequency k."""
    alpha = [1.0]
    for k in range(1, N_FREQ + 1):
        alpha += [np.exp(-k), np.exp(-k)]
    return np.array(alpha)


@dataclass
class FourierFamily:
    """X = sum_j beta_j {u_j0 x_j + sum_k [v_jk sin(k x_j) + u_jk cos(k x_j)]} + eps."""

    parents: tuple
    beta: np.ndarray          # (q,)
    u: np.ndarray             # (q, 7), u[:, 0] is the linear weight
    v: np.ndarray             # (q, 7), v[:, 0] unused (zero)
    noise_var: float = FOURIER_NOISE_VAR

    def mean(self, pa):
        """Noise-free output for parent values of shape (..., q)."""
        pa = np.asarray(pa, dtype=float)
        out = np.zeros(pa.shape[:-1])
        for j in range(len(self.parents)):
            x = pa[..., j]
            term = self.u[j, 0] * x
            for k in range(1, N_FREQ + 1):
                term = term + self.v[j, k] * np.sin(k * x) + self.u[j, k] * np.cos(k * x)
            out = out + self.beta[j] * term
        return out

    def to_dict(self):
        return {"parents": list(self.parents), "beta": self.beta.tolist(), "u": self.u.tolist(),
                "v": self.v.tolist(), "noise_var": self.noise_var}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["parents"]), np.asarray(d["beta"], float), np.asarray(d["u"], float),
                   np.asarray(d["v"], float), float(d["noise_var"]))


@dataclass
class SyntheticGpn:
    dag: Dag
    families: dict            # node -> FourierFamily (non-roots)
    root_params: dict         # node -> (mean, var)
    seed: int | None = None

    def to_dict(self):
        return {"dag": self.dag.to_dict(), "seed": self.seed,
                "roots": {str(k): list(v) for k, v in sorted(self.root_params.items())},
                "families": {str(k): f.to_dict() for k, f in sorted(self.families.items())}}

    @classmethod
    def from_dict(cls, d):
        return cls(Dag.from_dict(d["dag"]),
                   {int(k): FourierFamily.from_dict(f) for k, f in d["families"].items()},
                   {int(k): tuple(v) for k, v in d["roots"].items()}, d.get("seed"))

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def generate_fourier_gpn(dag: Dag, rng_seed=0, root_mean=0.0, root_var=1.0) -> SyntheticGpn:
    """Random non-linear GPN on ``dag`` with Fourier-series edge functions."""
    rng = keyed_rng(rng_seed, "fourier")
    alpha = fourier_concentration()
    families, roots = {}, {}
    for node in range(dag.n):
        pa = graph.parents(dag, node)
        if not pa:
            roots[node] = (float(root_mean), float(root_var))
            continue
        q = len(pa)
        w = rng.dirichlet(alpha, size=q)                      # (q, 13)
        u = np.zeros((q, N_FREQ + 1))
        v = np.zeros((q, N_FREQ + 1))
        u[:, 0] = w[:, 0]
        u[:, 1:] = w[:, 1::2]
        v[:, 1:] = w[:, 2::2]
        sign = rng.choice([-1.0, 1.0], size=q)
        beta = sign * rng.uniform(0.5, 2.0, size=q)
        families[node] = FourierFamily(pa, beta, u, v)
    return SyntheticGpn(dag, families, roots, int(rng_seed) if np.isscalar(rng_seed) else None)


def _forward(model: SyntheticGpn, noise, fixed=None, expectation_of=None):
    """Push standard-normal ``noise`` (..., n) through the model.

    ``fixed`` maps intervened nodes to broadcastable values; their noise is
    ignored.  The node ``expectation_of`` is returned without its own noise.
    """
    fixed = fixed or {}
    dag = graph.mutilate(model.dag, fixed.keys()) if fixed else model.dag
    vals = [None] * dag.n
    for node in graph.topological_order(dag):
        if node in fixed:
            vals[node] = np.broadcast_to(np.asarray(fixed[node], float), noise.shape[:-1])
            continue
        if node in model.root_params:
            m, var = model.root_params[node]
            vals[node] = m + np.sqrt(var) * noise[..., node]
            continue
        fam = model.families[node]
        f = fam.mean(np.stack([vals[p] for p in fam.parents], axis=-1))
        vals[node] = f if node == expectation_of else f + np.sqrt(fam.noise_var) * noise[..., node]
    return vals


def simulate(model, n_obs: int, rng_seed=0):
    """Draw ``n_obs`` i.i.d. joint observations, shape (n_obs, n)."""
    if isinstance(model, FittedGpn):
        from .causal_mc import sample_observational
        return sample_observational(model, n_obs, rng_seed)
    rng = keyed_rng(rng_seed, "simulate")
    noise = rng.standard_normal((n_obs, model.dag.n))
    return np.stack(_forward(model, noise), axis=-1)


def true_intervention_expectation(model: SyntheticGpn, target, intervened, values, R=100_000, rng_seed=0):
    """Ground-truth E(target | do(intervened = values)) by forward Monte Carlo.

    ``values`` has shape (G,) for one intervened node or (G, k) for k nodes.
    The same R noise draws are reused at every grid value.  Returns
    ``(mean (G,), standard_error (G,))``.
    """
    intervened = tuple(int(v) for v in np.atleast_1d(intervened))
    target = int(target)
    for v in intervened + (target,):
        graph._check_node(model.dag, v)
    if target in intervened:
        raise DomainError("target cannot be an intervened node")
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if values.shape[1] != len(intervened):
        raise DomainError("values need one column per intervened node")
    rng = keyed_rng(rng_seed, "truth")
    noise = rng.standard_normal((R, model.dag.n))
    means, ses = np.empty(len(values)), np.empty(len(values))
    for g, row in enumerate(values):
        fixed = dict(zip(intervened, row))
        y = _forward(model, noise, fixed, expectation_of=target)[target]
        y = np.broadcast_to(y, (R,))
        means[g] = y.mean()
        ses[g] = y.std(ddof=1) / np.sqrt(R) if R > 1 else 0.0
    return means, ses


# -- data I/O ------------------------------------------------------------

def standardize(data):
    """Column-wise zero mean / unit variance; returns (z, means, sds)."""
    data = np.asarray(data, dtype=float)
    mu = data.mean(axis=0)
    sd = data.std(axis=0, ddof=1)
    sd = np.where(sd > 0, sd, 1.0)
    z = (data - mu) / sd
    # second pass removes the residual rounding of the first
    z -= z.mean(axis=0)
    s2 = z.std(axis=0, ddof=1)
    z /= np.where(s2 > 0, s2, 1.0)
    return z, mu, sd


def write_csv(path, data, labels):
    buf = io.StringIO()
    np.savetxt(buf, np.asarray(data, dtype=float), delimiter=",", fmt="%.17g",
               header=",".join(labels), comments="")
    with open(path, "w", newline="\n") as fh:
        fh.write(buf.getvalue())


def read_csv(path):
    """Return (data, labels) from a CSV with a header row of node labels."""
    with open(path) as fh:
        header = fh.readline().strip()
    labels = [s.strip() for s in header.split(",")]
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != len(labels):
        raise DomainError("header and data column counts differ")
    return data, labels


# -- fitted conditionals ---------------------------------------------------

@dataclass(frozen=True)
class NigPrior:
    """mu | s2 ~ N(m0, s2 / kappa0), s2 ~ IG(a0, b0)."""

    m0: float = 0.0
    kappa0: float = 1.0
    a0: float = 1.0
    b0: float = 1.0


class RootConditional:
    """Gaussian root node with a conjugate normal-inverse-gamma posterior."""

    def __init__(self, x, prior: NigPrior = NigPrior()):
        x = np.asarray(x, dtype=float).ravel()
        n = x.size
        xbar = x.mean() if n else 0.0
        self.prior = prior
        self.n = n
        self.xbar = xbar
        self.kappa = prior.kappa0 + n
        self.mu = (prior.kappa0 * prior.m0 + n * xbar) / self.kappa
        self.a = prior.a0 + 0.5 * n
        ss = float(np.sum((x - xbar) ** 2))
        self.b = prior.b0 + 0.5 * ss + prior.kappa0 * n * (xbar - prior.m0) ** 2 / (2.0 * self.kappa)

    def draw(self, size, rng):
        """Posterior draws of (mean, variance)."""
        var = self.b / rng.gamma(self.a, size=size)
        mu = self.mu + np.sqrt(var / self.kappa) * rng.standard_normal(size)
        return mu, var

    def log_marginal(self):
        p = self.prior
        return float(-0.5 * self.n * LOG_2PI + 0.5 * np.log(p.kappa0 / self.kappa)
                     + p.a0 * np.log(p.b0) - self.a * np.log(self.b) + gammaln(self.a) - gammaln(p.a0))


class GpConditional:
    """Non-root family: training slice plus retained hyperparameter draws."""

    def __init__(self, X, y, samples: HyperSamples):
        self.X = np.asarray(X, dtype=float).reshape(len(y), -1)
        self.y = np.asarray(y, dtype=float).ravel()
        self.samples = samples
        self._factors = {}

    @property
    def p(self):
        return self.X.shape[1]

    def factor(self, i):
        """Cholesky factor and weights (L, alpha) for hyperparameter draw ``i``."""
        if i not in self._factors:
            h = self.samples[i]
            C = gram(h, self.X, self.X)
            C[np.diag_indices_from(C)] += h.noise_var
            L = jittered_cholesky(C)
            self._factors[i] = (L, linalg.cho_solve((L, True), self.y))
        return self._factors[i]

    def cross(self, i, Xs):
        """Return (K*^T alpha, L^{-1} K*) at test rows ``Xs`` for draw ``i``."""
        L, alpha = self.factor(i)
        Ks = gram(self.samples[i], self.X, Xs)
        return Ks.T @ alpha, linalg.solve_triangular(L, Ks, lower=True)


@dataclass
class FittedGpn:
    dag: Dag
    conditionals: dict        # node -> RootConditional | GpConditional
    labels: tuple = field(default=())


def family_hyper_samples(data, node, parents, prior=None, n_samples=50, rng_seed=0,
                         burn_in=500, thin=5) -> HyperSamples:
    """Posterior hyperparameter draws for one family, keyed by (seed, node, parents)."""
    data = np.asarray(data, dtype=float)
    rng = keyed_rng(rng_seed, "family-hyper", node, mask_of(parents))
    return sample_hyperparameters(data[:, node], data[:, list(parents)], prior or HyperPrior(),
                                  n_samples, rng, burn_in=burn_in, thin=thin)


def fit_gpn(data, dag: Dag, prior=None, n_hyper=50, rng_seed=0, hyper_source=None) -> FittedGpn:
    """Fit every conditional of ``dag`` to ``data``.

    ``hyper_source(node, parents)`` may supply cached hyperparameter draws;
    otherwise they are sampled here.
    """
    data = np.asarray(data, dtype=float)
    if data.shape[1] != dag.n:
        raise DomainError("data column count does not match the graph")
    conds = {}
    for node in range(dag.n):
        pa = graph.parents(dag, node)
        if not pa:
            conds[node] = RootConditional(data[:, node])
            continue
        hs = (hyper_source(node, pa) if hyper_source is not None
              else family_hyper_samples(data, node, pa, prior, n_hyper, rng_seed))
        conds[node] = GpConditional(data[:, list(pa)], data[:, node], hs)
    return FittedGpn(dag, conds, dag.labels)


PRESET_DAGS = {
    # five-node benchmark: one root feeding a diamond, with a long path to X5
    "five_node": Dag(5, frozenset({(0, 1), (0, 2), (1, 3), (2, 3), (1, 4), (3, 4)})),
    # four-node benchmark: X3 confounds X1 and the mediator X4 of X1 -> X2
    "four_node": Dag(4, frozenset({(2, 0), (0, 3), (2, 3), (3, 1)})),
    "chain3": Dag(3, frozenset({(0, 1), (1, 2)})),
}
