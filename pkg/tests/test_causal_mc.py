import numpy as np
import pytest
from scipy import stats

from gpncausal import causal_mc, gpn, graph, structure
from gpncausal.causal_mc import InterventionCurve, InterventionQuery
from gpncausal.errors import ArchiveIntegrityError, DomainError
from gpncausal.graph import Dag
from gpncausal.kernel_gp import HyperSamples
from gpncausal.structure import WeightedDagSample

CHAIN = gpn.PRESET_DAGS["chain3"]
PAIR = Dag(2, frozenset({(0, 1)}))


def fixed_hypers(ls, noise_var, p=1):
    return HyperSamples(np.full((1, p), float(ls)), np.array([float(noise_var)]))


def fitted_chain(seed=0, n=100, n_hyper=20):
    m = gpn.generate_fourier_gpn(CHAIN, seed)
    z = gpn.standardize(gpn.simulate(m, n, seed))[0]
    return z, gpn.fit_gpn(z, CHAIN, n_hyper=n_hyper, rng_seed=seed)


def ks_ok(a, b, alpha=0.01):
    return stats.ks_2samp(a, b).pvalue > alpha


def test_downstream_examples():
    assert causal_mc.downstream_targets(CHAIN, [0]) == (1, 2)
    assert causal_mc.downstream_targets(CHAIN, [2]) == ()


def test_downstream_matches_closure():
    rng = np.random.default_rng(0)
    for _ in range(50):
        perm = rng.permutation(6)
        edges = {(int(perm[i]), int(perm[j])) for i in range(6) for j in range(i + 1, 6) if rng.random() < 0.4}
        d = Dag(6, frozenset(edges))
        T = {int(t) for t in rng.choice(6, size=2, replace=False)}
        R = np.zeros((6, 6), dtype=bool)
        for u, v in graph.mutilate(d, T).edges:
            R[u, v] = True
        for k in range(6):
            R |= R[:, [k]] & R[[k], :]
        expect = tuple(v for v in range(6) if v not in T and any(R[t, v] for t in T))
        assert causal_mc.downstream_targets(d, T) == expect


def test_query_validation():
    with pytest.raises(DomainError):
        InterventionQuery({})
    with pytest.raises(DomainError):
        InterventionQuery({0: []})
    with pytest.raises(DomainError):
        InterventionQuery({0: [0.0, np.nan]})
    with pytest.raises(DomainError):
        InterventionQuery({0: [0.0, 1.0], 1: [0.0]})
    with pytest.raises(DomainError):
        InterventionQuery({0: [0.0]}, targets=(0,))
    q = InterventionQuery({2: [0.0, 1.0]}, targets="downstream")
    assert q.resolve_targets(3, CHAIN) == ()
    assert q.resolve_targets(3) == (0, 1)
    with pytest.raises(DomainError):
        InterventionQuery({0: [0.0]}, targets=(7,)).resolve_targets(3)


def test_unknown_node_rejected():
    _, fit = fitted_chain(n=30, n_hyper=3)
    with pytest.raises(DomainError):
        causal_mc.intervene_known_dag(fit, CHAIN, InterventionQuery({5: [0.0]}, targets=(1,)))
    with pytest.raises(DomainError):
        causal_mc.intervene_known_dag(fit, PAIR, InterventionQuery({0: [0.0]}))


def test_no_path_gives_flat_curve():
    _, fit = fitted_chain(1, n=60, n_hyper=5)
    q = InterventionQuery({2: np.linspace(-2, 2, 15)}, targets=(0, 1), n_mc=400)
    for c in causal_mc.intervene_known_dag(fit, CHAIN, q, 1).values():
        m = c.mean()
        se = c.sd() / np.sqrt(c.n_draws)
        assert np.all(np.abs(m - m.mean()) <= 4 * se + 1e-12)


def test_pair_matches_dense_gp_conditioning():
    """Root X intervened: expectation draws follow the GP posterior of f at the grid."""
    rng = np.random.default_rng(2)
    x = rng.normal(size=80)
    y = 0.8 * x + 0.3 * rng.normal(size=80)
    z = np.column_stack([x, y])
    ls, nv = 20.0, 0.09
    fit = gpn.FittedGpn(PAIR, {0: gpn.RootConditional(x), 1: gpn.GpConditional(x[:, None], y, fixed_hypers(ls, nv))})
    grid = np.linspace(-2, 2, 9)
    q = InterventionQuery({0: grid}, targets=(1,), n_mc=4000, expectation_only=True)
    c = causal_mc.intervene_known_dag(fit, PAIR, q, 3)[1]
    k = lambda a, b: np.exp(-(a[:, None] - b[None, :]) ** 2 / (2 * ls ** 2))
    C = k(x, x) + nv * np.eye(x.size)
    mean = k(grid, x) @ np.linalg.solve(C, y)
    var = 1.0 - np.einsum("ij,ji->i", k(grid, x), np.linalg.solve(C, k(x, grid)))
    se = np.sqrt(var / c.n_draws)
    assert np.all(np.abs(c.mean() - mean) <= 3 * se)
    assert np.allclose(c.sd(), np.sqrt(var), rtol=0.1)
    # long lengthscales make the curve essentially the ridge regression line
    Phi = np.column_stack([np.ones_like(x), x / ls])
    beta = np.linalg.solve(Phi.T @ Phi + nv * np.eye(2), Phi.T @ y)
    assert np.max(np.abs(c.mean() - (beta[0] + beta[1] * grid / ls))) < 0.05


def test_chain_matches_generator_truth():
    dag = CHAIN
    m = gpn.generate_fourier_gpn(dag, 0)
    z, mu, sd = gpn.standardize(gpn.simulate(m, 200, 100))
    fit = gpn.fit_gpn(z, dag, n_hyper=50, rng_seed=0)
    grid = np.linspace(z[:, 0].min(), z[:, 0].max(), 30)
    q = InterventionQuery({0: grid}, targets=(2,), n_mc=200, expectation_only=True)
    c = causal_mc.intervene_known_dag(fit, dag, q, 0)[2]
    tm, tse = gpn.true_intervention_expectation(m, 2, [0], mu[0] + sd[0] * grid, R=20_000, rng_seed=0)
    truth, tse = (tm - mu[2]) / sd[2], tse / sd[2]
    ok = np.abs(c.mean() - truth) <= 3 * np.sqrt(c.sd() ** 2 + tse ** 2)
    assert ok.mean() >= 0.9


def test_single_dag_archive_equals_known_dag():
    z, fit = fitted_chain(3, n=50, n_hyper=8)
    conds = {v: fit.conditionals[v].samples for v in (1, 2)}
    arch = [WeightedDagSample(CHAIN, -3.7, conds)]
    q = InterventionQuery({0: np.linspace(-1, 1, 5)}, n_mc=30)
    a = causal_mc.intervene_known_dag(fit, CHAIN, q, 9)
    b = causal_mc.intervene_unknown_dag(arch, z, q, 9)
    for t in (1, 2):
        assert np.array_equal(a[t].samples, b[t].samples)
        assert np.array_equal(a[t].weights, b[t].weights)


def test_archive_order_does_not_matter():
    z, _ = fitted_chain(4, n=50)
    cache = structure.FamilyCache(z, seed=4, S=200, n_hyper=5, hyper_burn_in=50)
    arch = structure.sample_dags(z, 12, rng_seed=4, cache=cache, burn_in=50, thin=2)
    q = InterventionQuery({0: np.linspace(-1, 1, 4)}, targets=(2,), n_mc=10)
    a = causal_mc.intervene_unknown_dag(arch, z, q, 5)[2]
    shuffled = [arch[i] for i in np.random.default_rng(0).permutation(len(arch))]
    b = causal_mc.intervene_unknown_dag(shuffled, z, q, 5)[2]
    assert np.array_equal(a.mean(), b.mean())
    assert abs(a.weights.sum() - 1) < 1e-12


def test_missing_family_is_an_integrity_error():
    z, _ = fitted_chain(5, n=30)
    with pytest.raises(ArchiveIntegrityError):
        causal_mc.intervene_unknown_dag([WeightedDagSample(CHAIN, 0.0)], z, InterventionQuery({0: [0.0]}))
    with pytest.raises(DomainError):
        causal_mc.intervene_unknown_dag([], z, InterventionQuery({0: [0.0]}))


def test_thread_pool_gives_same_result(monkeypatch):
    z, _ = fitted_chain(6, n=40)
    cache = structure.FamilyCache(z, seed=6, S=200, n_hyper=5, hyper_burn_in=50)
    arch = structure.sample_dags(z, 8, rng_seed=6, cache=cache, burn_in=50, thin=2)
    q = InterventionQuery({0: np.linspace(-1, 1, 4)}, n_mc=10)
    a = causal_mc.intervene_unknown_dag(arch, z, q, 1)
    monkeypatch.setenv(causal_mc.THREADS_ENV, "4")
    b = causal_mc.intervene_unknown_dag(arch, z, q, 1)
    for t in a:
        assert np.array_equal(a[t].samples, b[t].samples)


def test_grid_jointly_equals_pointwise_in_law():
    _, fit = fitted_chain(7, n=60, n_hyper=10)
    grid = np.array([-1.0, 0.0, 1.5])
    joint = causal_mc.intervene_known_dag(fit, CHAIN, InterventionQuery({0: grid}, (2,), 10_000), 11)[2]
    for g, v in enumerate(grid):
        single = causal_mc.intervene_known_dag(fit, CHAIN, InterventionQuery({0: [v]}, (2,), 10_000), 12)[2]
        assert ks_ok(joint.samples[g], single.samples[0])


def test_other_root_unaffected():
    rng = np.random.default_rng(8)
    x, w = rng.normal(size=(2, 60))
    y = np.sin(x) + w + 0.2 * rng.normal(size=60)
    dag = Dag(3, frozenset({(0, 2), (1, 2)}))
    z = gpn.standardize(np.column_stack([x, w, y]))[0]
    fit = gpn.fit_gpn(z, dag, n_hyper=5, rng_seed=8)
    c = causal_mc.intervene_known_dag(fit, dag, InterventionQuery({0: [1.0]}, (1,), 10_000), 2)[1]
    obs = causal_mc.sample_observational(fit, 10_000, 3)[:, 1]
    assert ks_ok(c.samples[0], obs)


def test_expectation_only_has_smaller_variance():
    _, fit = fitted_chain(9, n=60, n_hyper=10)
    grid = np.linspace(-1.5, 1.5, 6)
    full = causal_mc.intervene_known_dag(fit, CHAIN, InterventionQuery({0: grid}, (2,), 10_000), 4)[2]
    ex = causal_mc.intervene_known_dag(fit, CHAIN, InterventionQuery({0: grid}, (2,), 10_000, True), 4)[2]
    assert np.all(ex.sd() < full.sd())


def test_blocking_joint_intervention_is_flat():
    _, fit = fitted_chain(10, n=60, n_hyper=5)
    grid = np.linspace(-2, 2, 7)
    q = InterventionQuery({0: grid, 1: np.full(7, 0.5)}, targets=(2,), n_mc=50)
    c = causal_mc.intervene_known_dag(fit, CHAIN, q, 0)[2]
    assert np.all(c.samples == c.samples[:1])


def test_curve_csv_and_summary_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    w = rng.random(6)
    c = InterventionCurve(np.linspace(0, 1, 3), rng.normal(size=(3, 6)), w / w.sum(), 2, (0,), "mc",
                          np.arange(6) % 2)
    c.to_csv(tmp_path / "c.csv")
    back = InterventionCurve.from_csv(tmp_path / "c.csv", target=2, intervened=(0,))
    assert np.array_equal(back.samples, c.samples)
    assert np.array_equal(back.weights, c.weights)
    assert np.array_equal(back.grid, c.grid)
    assert np.array_equal(back.dag_index, c.dag_index)
    header = (tmp_path / "c.csv").read_text().splitlines()[0]
    assert header == "grid_value,draw_index,value,weight,dag_index"
    s = c.summary()
    assert np.allclose(s["mean"], c.mean())
    assert all(lo <= hi for lo, hi in zip(s["band_lo"], s["band_hi"]))
    c.write_summary(tmp_path / "s.json")
    c.write_summary(tmp_path / "t.json")
    assert (tmp_path / "s.json").read_bytes() == (tmp_path / "t.json").read_bytes()
    with pytest.raises(DomainError):
        InterventionCurve([0.0], np.zeros((1, 2)), [0.5, -0.5], 1, (0,))
