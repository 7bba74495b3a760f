"""Command-line driver.

Subcommands: generate, sample-dags, intervene, evaluate, enumerate-posterior.
Options come from a JSON config file (``--config``) overridden by flags.
Exit codes: 0 success, 1 domain or numeric error, 2 usage error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import benchmark, gpn, structure
from .causal_local import local_mixture
from .causal_mc import InterventionCurve, InterventionQuery, intervene_known_dag, intervene_unknown_dag
from .errors import GpnError, UsageError
from .graph import Dag
from .linear_baseline import LinearScoreCache, intervene_linear
from .stats_eval import WeightedSample, credible_band, wasserstein
from .structure import WeightedDagSample

METHODS = ("mc", "local", "linear")


@dataclass
class RunConfig:
    seed: int = 0
    data: str | None = None              # CSV path; required except for generate / benchmark
    dag: str = "five_node"                    # preset name or DAG JSON path
    n_obs: int | None = None             # generate: 50, benchmark: 100
    M: int = 200
    max_parents: int = 3
    S_marginal: int = 1000
    n_hyper: int = 50
    burn_in: int = 1000
    thin: int = 10
    method: str = "mc"
    intervened: list = field(default_factory=lambda: [0])
    grid: list | None = None             # shared grid; default spans each column
    grid_points: int = 30
    targets: list | None = None
    all_pairs: bool = False
    n_mc: int = 100
    n_draws: int = 1000                  # local method draws per curve
    predictive: bool = False             # include the target's own noise
    known_dag: bool = False
    archive: str | None = None
    enumerate: bool = False
    truth: str | None = None
    curves: list = field(default_factory=list)
    truth_R: int = 10_000
    seeds: int = 10
    M_values: list = field(default_factory=lambda: [50, 200, 800])
    n_truth: int = 10_000
    out: str = "out"

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


# -- helpers ------------------------------------------------------------------

def _write_json(path, obj):
    with open(path, "w", newline="\n") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _require_file(path, what):
    if not path:
        raise UsageError(f"{what} is required")
    if not os.path.isfile(path):
        raise UsageError(f"{what} not found: {path}")
    return path


def resolve_dag(spec, labels=()):
    if spec in gpn.PRESET_DAGS:
        d = gpn.PRESET_DAGS[spec]
        return Dag(d.n, d.edges, tuple(labels)) if labels else d
    _require_file(spec, "DAG file")
    with open(spec) as fh:
        d = Dag.from_json(fh.read())
    return Dag(d.n, d.edges, tuple(labels)) if labels else d


def default_grid(column, points):
    return np.linspace(float(np.min(column)), float(np.max(column)), int(points))


def query_specs(cfg: RunConfig, data, n):
    """List of (intervened {node: grid}, targets) requested by the config."""
    def grid_for(v):
        return np.asarray(cfg.grid, dtype=float) if cfg.grid is not None else default_grid(data[:, v], cfg.grid_points)

    if cfg.all_pairs:
        return [({x: grid_for(x)}, tuple(t for t in range(n) if t != x)) for x in range(n)]
    nodes = sorted({int(v) for v in cfg.intervened})
    for v in nodes + list(cfg.targets or []):
        if not 0 <= int(v) < n:
            raise UsageError(f"node {v} does not exist")
    targets = tuple(int(t) for t in cfg.targets) if cfg.targets else tuple(t for t in range(n) if t not in nodes)
    return [({v: grid_for(v) for v in nodes}, targets)]


def _tag(labels, nodes):
    return "+".join(labels[v] for v in nodes)


def _load_data(cfg):
    data, labels = gpn.read_csv(_require_file(cfg.data, "data CSV"))
    return data, tuple(labels)


# -- commands -----------------------------------------------------------------

def cmd_generate(cfg: RunConfig):
    """Synthetic Fourier GPN: standardized data, model JSON and true curves."""
    os.makedirs(cfg.out, exist_ok=True)
    dag = resolve_dag(cfg.dag)
    n_obs = cfg.n_obs or 50
    model = gpn.generate_fourier_gpn(dag, cfg.seed)
    raw = gpn.simulate(model, n_obs, cfg.seed)
    z, mu, sd = gpn.standardize(raw)
    gpn.write_csv(os.path.join(cfg.out, "data.csv"), z, dag.labels)
    _write_json(os.path.join(cfg.out, "model.json"),
                {"model": model.to_dict(), "mean": mu.tolist(), "sd": sd.tolist(), "n_obs": n_obs})
    tdir = os.path.join(cfg.out, "truth")
    os.makedirs(tdir, exist_ok=True)
    written = []
    for fixed, targets in query_specs(cfg, z, dag.n):
        nodes = sorted(fixed)
        values = np.column_stack([mu[v] + sd[v] * fixed[v] for v in nodes])
        for t in targets:
            m, se = gpn.true_intervention_expectation(model, t, nodes, values, cfg.truth_R, cfg.seed)
            path = os.path.join(tdir, f"truth_{_tag(dag.labels, nodes)}_{dag.labels[t]}.csv")
            with open(path, "w", newline="\n") as fh:
                fh.write("grid_value,value,se\n")
                for g, a, b in zip(fixed[nodes[0]], (m - mu[t]) / sd[t], se / sd[t]):
                    fh.write(f"{float(g)!r},{float(a)!r},{float(b)!r}\n")
            written.append(path)
    return {"data": os.path.join(cfg.out, "data.csv"), "truth_files": len(written)}


def _cache(cfg, data):
    return structure.FamilyCache(data, seed=cfg.seed, S=cfg.S_marginal, n_hyper=cfg.n_hyper,
                                 max_parents=cfg.max_parents)


def cmd_enumerate_posterior(cfg: RunConfig):
    data, labels = _load_data(cfg)
    os.makedirs(cfg.out, exist_ok=True)
    post = structure.enumerate_posterior(data, cache=_cache(cfg, data), labels=labels)
    structure.write_posterior(os.path.join(cfg.out, "posterior.json"), post)
    _write_json(os.path.join(cfg.out, "posterior_edges.json"),
                {"labels": list(labels), "edge_probabilities": structure.posterior_edge_probabilities(post).tolist()})
    return {"n_dags": len(post)}


def cmd_sample_dags(cfg: RunConfig):
    if cfg.enumerate:
        return cmd_enumerate_posterior(cfg)
    data, labels = _load_data(cfg)
    os.makedirs(cfg.out, exist_ok=True)
    arch = structure.sample_dags(data, cfg.M, rng_seed=cfg.seed, cache=_cache(cfg, data), burn_in=cfg.burn_in,
                                 thin=cfg.thin, labels=labels)
    structure.write_archive(os.path.join(cfg.out, "archive.jsonl"), arch)
    diag = arch.diagnostics()
    diag["edge_probabilities"] = structure.edge_probabilities(arch).tolist()
    diag["labels"] = list(labels)
    _write_json(os.path.join(cfg.out, "archive_diagnostics.json"), diag)
    return diag


def _write_curve(cfg, curve: InterventionCurve, labels):
    cdir = os.path.join(cfg.out, "curves")
    os.makedirs(cdir, exist_ok=True)
    stem = f"{curve.method}_{_tag(labels, curve.intervened)}_{labels[curve.target]}"
    curve.to_csv(os.path.join(cdir, stem + ".csv"))
    curve.write_summary(os.path.join(cdir, stem + ".json"))
    return stem


def cmd_intervene(cfg: RunConfig):
    if cfg.method not in METHODS:
        raise UsageError(f"method must be one of {METHODS}")
    data, labels = _load_data(cfg)
    n = data.shape[1]
    specs = query_specs(cfg, data, n)
    if cfg.method == "local" and any(len(fixed) > 1 for fixed, _ in specs):
        raise UsageError("the local method supports single-node interventions only")
    if cfg.known_dag:
        dag = resolve_dag(cfg.dag, labels)
        if dag.n != n:
            raise UsageError("DAG size does not match the data")
        archive = [WeightedDagSample(dag, 0.0)]
    elif cfg.method == "linear" and not cfg.archive:
        archive = structure.sample_dags(data, cfg.M, rng_seed=cfg.seed,
                                        cache=LinearScoreCache(data, cfg.seed, cfg.max_parents),
                                        burn_in=cfg.burn_in, thin=cfg.thin, with_conditionals=False, labels=labels)
    else:
        archive = structure.read_archive(_require_file(cfg.archive, "DAG archive"))
    stems = []
    fitted = None
    fits = {}
    for fixed, targets in specs:
        q = InterventionQuery(fixed, targets, cfg.n_mc, expectation_only=not cfg.predictive)
        if cfg.method == "mc":
            if cfg.known_dag:
                fitted = fitted or gpn.fit_gpn(data, archive[0].dag, n_hyper=cfg.n_hyper, rng_seed=cfg.seed)
                curves = intervene_known_dag(fitted, archive[0].dag, q, cfg.seed)
            else:
                curves = intervene_unknown_dag(archive, data, q, cfg.seed)
        elif cfg.method == "linear":
            curves = intervene_linear(archive, data, q, cfg.seed)
        else:
            (x, grid), = fixed.items()
            curves = {t: local_mixture(data, archive, x, t, grid, rng_seed=cfg.seed, n_draws=cfg.n_draws,
                                       n_hyper=cfg.n_hyper, fits=fits)
                      for t in targets}
        stems += [_write_curve(cfg, curves[t], labels) for t in sorted(curves)]
    return {"curves": len(stems)}


def _read_truth_curve(path):
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return rows[:, 0], rows[:, 1], rows[:, 2]


def cmd_evaluate(cfg: RunConfig):
    """Compare curve files against a truth file, or run the convergence benchmark."""
    os.makedirs(cfg.out, exist_ok=True)
    if cfg.truth:
        return _evaluate_files(cfg)
    bcfg = benchmark.BenchmarkConfig(n_obs=cfg.n_obs or 100, M_values=tuple(cfg.M_values), n_truth=cfg.n_truth,
                                     n_mc=cfg.n_mc, n_local=cfg.n_draws, S_marginal=cfg.S_marginal,
                                     n_hyper=cfg.n_hyper, max_parents=cfg.max_parents, burn_in=cfg.burn_in,
                                     thin=cfg.thin)
    runs = [benchmark.run_seed(bcfg, cfg.seed + s) for s in range(cfg.seeds)]
    metrics, runtimes = benchmark.summarize(runs, bcfg)
    _write_json(os.path.join(cfg.out, "metrics.json"), metrics)
    _write_json(os.path.join(cfg.out, "runtimes.json"), runtimes)
    return {"wasserstein": {m: {M: v["median"] for M, v in d.items()} for m, d in metrics["wasserstein"].items()}}


def _evaluate_files(cfg):
    _require_file(cfg.truth, "truth file")
    if not cfg.curves:
        raise UsageError("evaluate needs at least one curve file")
    with open(cfg.truth) as fh:
        header = fh.readline().strip().split(",")
    out = {"truth": os.path.basename(cfg.truth), "curves": {}}
    t0 = time.perf_counter()
    runtimes = {}
    if header[:2] == ["grid_value", "draw_index"]:
        truth = InterventionCurve.from_csv(cfg.truth)
        for path in cfg.curves:
            c = InterventionCurve.from_csv(_require_file(path, "curve file"))
            if c.grid.size != truth.grid.size or not np.allclose(c.grid, truth.grid):
                raise UsageError(f"{path} and the truth use different grids")
            d = [wasserstein(WeightedSample(c.samples[g], c.weights), WeightedSample(truth.samples[g], truth.weights))
                 for g in range(c.grid.size)]
            out["curves"][os.path.basename(path)] = {"wasserstein": d, "wasserstein_mean": float(np.mean(d))}
    else:
        grid, value, se = _read_truth_curve(cfg.truth)
        for path in cfg.curves:
            c = InterventionCurve.from_csv(_require_file(path, "curve file"))
            tv = np.interp(c.grid, grid, value)
            lo, hi = credible_band(c, 0.8)
            out["curves"][os.path.basename(path)] = {
                "rmse": float(np.sqrt(np.mean((c.mean() - tv) ** 2))),
                "band80_coverage": float(np.mean((lo <= tv) & (tv <= hi))),
                "mean_band_width": float(np.mean(hi - lo))}
    runtimes["evaluate_seconds"] = time.perf_counter() - t0
    _write_json(os.path.join(cfg.out, "metrics.json"), out)
    _write_json(os.path.join(cfg.out, "runtimes.json"), runtimes)
    return out


COMMANDS = {
    "generate": cmd_generate,
    "sample-dags": cmd_sample_dags,
    "intervene": cmd_intervene,
    "evaluate": cmd_evaluate,
    "enumerate-posterior": cmd_enumerate_posterior,
}


# -- argument parsing ---------------------------------------------------------

def _int_list(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _float_list(text):
    return [float(v) for v in text.split(",") if v.strip()]


def build_parser():
    p = argparse.ArgumentParser(prog="gpncausal", description="Causal effect estimation in GP networks.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON file with RunConfig fields")
        s.add_argument("--seed", type=int)
        s.add_argument("--out")
        s.add_argument("--data", help="standardized data CSV")
        s.add_argument("--dag", help="preset name or DAG JSON file")
        s.add_argument("--n-obs", dest="n_obs", type=int)
        s.add_argument("--M", type=int)
        s.add_argument("--max-parents", dest="max_parents", type=int)
        s.add_argument("--S-marginal", dest="S_marginal", type=int)
        s.add_argument("--n-hyper", dest="n_hyper", type=int)
        s.add_argument("--burn-in", dest="burn_in", type=int)
        s.add_argument("--thin", type=int)
        s.add_argument("--method", choices=METHODS)
        s.add_argument("--intervened", type=_int_list, help="comma-separated 0-based nodes")
        s.add_argument("--grid", type=_float_list, help="comma-separated grid values")
        s.add_argument("--grid-points", dest="grid_points", type=int)
        s.add_argument("--targets", type=_int_list)
        s.add_argument("--all-pairs", dest="all_pairs", action="store_const", const=True)
        s.add_argument("--n-mc", dest="n_mc", type=int)
        s.add_argument("--n-draws", dest="n_draws", type=int)
        s.add_argument("--predictive", action="store_const", const=True)
        s.add_argument("--known-dag", dest="known_dag", action="store_const", const=True)
        s.add_argument("--archive")
        s.add_argument("--enumerate", action="store_const", const=True)
        s.add_argument("--truth")
        s.add_argument("--curves", nargs="+")
        s.add_argument("--truth-R", dest="truth_R", type=int)
        s.add_argument("--seeds", type=int)
        s.add_argument("--M-values", dest="M_values", type=_int_list)
        s.add_argument("--n-truth", dest="n_truth", type=int)
    return p


def config_from_args(args) -> RunConfig:
    base = {}
    if args.config:
        with open(_require_file(args.config, "config file")) as fh:
            base = json.load(fh)
    names = {f.name for f in dataclasses.fields(RunConfig)}
    base.update({k: v for k, v in vars(args).items() if k in names and v is not None})
    return RunConfig.from_dict(base)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        result = COMMANDS[args.command](cfg)
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return 2
    except GpnError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    print(json.dumps(result, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
