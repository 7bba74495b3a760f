"""Convergence benchmark on a four-node Fourier network.

For one data set the reference distribution of E(Y | do(X = x0)) is built
from the exhaustively enumerated DAG posterior.  Estimates from the MC and
local methods at several archive sizes are compared with it through the
Wasserstein distance, and a second independent reference draw gives the
noise floor of the distance itself.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import gpn, structure
from ._rng import keyed_rng
from .causal_local import largest_remainder, local_mixture
from .causal_mc import ConditionalPool, InterventionQuery, intervene_unknown_dag, propagate
from .stats_eval import WeightedSample, wasserstein
from .structure import FamilyCache, WeightedDagSample


@dataclass
class BenchmarkConfig:
    dag: str = "four_node"
    n_obs: int = 100
    x: int = 0
    y: int = 1
    x0: float = 0.0
    M_values: tuple = (50, 200, 800)
    n_truth: int = 10_000
    n_mc: int = 100
    n_local: int = 2000
    S_marginal: int = 1000
    n_hyper: int = 50
    max_parents: int = 3
    burn_in: int = 1000
    thin: int = 10
    methods: tuple = ("mc", "local")


@dataclass
class BenchmarkRun:
    seed: int
    distances: dict                   # method -> {M: distance}
    floor: float
    runtimes: dict = field(default_factory=dict)   # method -> {M: seconds}


def reference_draws(data, posterior, cache: FamilyCache, x, y, x0, n_draws, seed, stream="truth"):
    """Draws of E(Y | do(X = x0)) mixed over the enumerated posterior.

    Each DAG receives a largest-remainder share of ``n_draws``.
    """
    probs = np.array([p for _, p in posterior])
    counts = largest_remainder(probs, n_draws)
    pool = ConditionalPool(data)
    out = []
    for j in np.flatnonzero(counts):
        dag = posterior[j][0]
        sample = WeightedDagSample(dag, 0.0)
        structure.attach_conditionals([sample], cache)
        model = pool.model(sample)
        _, expct = propagate(model, {x: np.array([x0])}, 1, int(counts[j]),
                             lambda node: keyed_rng(seed, stream, str(dag.key()), node))
        out.append(np.asarray(expct[y][0]))
    return np.concatenate(out)


def run_seed(cfg: BenchmarkConfig, seed: int) -> BenchmarkRun:
    dag = gpn.PRESET_DAGS[cfg.dag]
    model = gpn.generate_fourier_gpn(dag, seed)
    raw = gpn.simulate(model, cfg.n_obs, seed)
    data, _, _ = gpn.standardize(raw)
    kw = dict(seed=seed, S=cfg.S_marginal, n_hyper=cfg.n_hyper, max_parents=cfg.max_parents)
    ref_cache = FamilyCache(data, **kw)
    posterior = structure.enumerate_posterior(data, cache=ref_cache)
    truth = reference_draws(data, posterior, ref_cache, cfg.x, cfg.y, cfg.x0, cfg.n_truth, seed)
    again = reference_draws(data, posterior, ref_cache, cfg.x, cfg.y, cfg.x0, cfg.n_truth, seed, "truth-2")
    truth_ws = WeightedSample(truth)
    floor = wasserstein(truth_ws, WeightedSample(again))
    dist = {m: {} for m in cfg.methods}
    times = {m: {} for m in cfg.methods}
    query = InterventionQuery({cfg.x: [cfg.x0]}, targets=(cfg.y,), n_mc=cfg.n_mc, expectation_only=True)
    for M in cfg.M_values:
        if "mc" in cfg.methods:
            t0 = time.perf_counter()
            cache = FamilyCache(data, **kw)
            arch = structure.sample_dags(data, M, rng_seed=seed, cache=cache, burn_in=cfg.burn_in,
                                         thin=cfg.thin)
            curve = intervene_unknown_dag(arch, data, query, seed)[cfg.y]
            times["mc"][M] = time.perf_counter() - t0
            dist["mc"][M] = wasserstein(WeightedSample(curve.samples[0], curve.weights), truth_ws)
        if "local" in cfg.methods:
            t0 = time.perf_counter()
            cache = FamilyCache(data, **kw)
            arch = structure.sample_dags(data, M, rng_seed=seed, cache=cache, burn_in=cfg.burn_in,
                                         thin=cfg.thin, with_conditionals=False)
            curve = local_mixture(data, arch, cfg.x, cfg.y, [cfg.x0], rng_seed=seed, n_draws=cfg.n_local,
                                  n_hyper=cfg.n_hyper)
            times["local"][M] = time.perf_counter() - t0
            dist["local"][M] = wasserstein(WeightedSample(curve.samples[0], curve.weights), truth_ws)
    return BenchmarkRun(seed, dist, floor, times)


def summarize(runs, cfg: BenchmarkConfig):
    """Median distance per method and archive size, plus the median floor.

    Runtimes are kept apart because they are not reproducible.
    """
    metrics = {"config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in cfg.__dict__.items()},
               "seeds": [r.seed for r in runs],
               "floor": {"per_seed": [r.floor for r in runs], "median": float(np.median([r.floor for r in runs]))},
               "wasserstein": {}}
    runtimes = {}
    for m in cfg.methods:
        metrics["wasserstein"][m] = {
            str(M): {"per_seed": [r.distances[m][M] for r in runs],
                     "median": float(np.median([r.distances[m][M] for r in runs]))}
            for M in cfg.M_values}
        runtimes[m] = {str(M): {"per_seed": [r.runtimes[m][M] for r in runs],
                                "median": float(np.median([r.runtimes[m][M] for r in runs]))}
                       for M in cfg.M_values}
    return metrics, runtimes
