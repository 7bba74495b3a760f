import numpy as np
import pytest

from gpncausal import gpn
from gpncausal.errors import DomainError
from gpncausal.gpn import PRESET_DAGS, FourierFamily, SyntheticGpn
from gpncausal.graph import Dag


def test_generator_deterministic():
    d = PRESET_DAGS["five_node"]
    a, b = gpn.generate_fourier_gpn(d, 3), gpn.generate_fourier_gpn(d, 3)
    assert a.to_json() == b.to_json()
    assert gpn.generate_fourier_gpn(d, 4).to_json() != a.to_json()


def test_fourier_weights_and_edge_weights():
    d = PRESET_DAGS["five_node"]
    betas = []
    for seed in range(200):
        m = gpn.generate_fourier_gpn(d, seed)
        for fam in m.families.values():
            np.testing.assert_allclose(fam.u.sum(axis=1) + fam.v.sum(axis=1), 1.0, atol=1e-12)
            assert np.all(fam.u >= 0) and np.all(fam.v >= 0) and np.all(fam.v[:, 0] == 0)
            assert fam.noise_var == 0.5
            betas.extend(fam.beta.tolist())
        assert all(v == (0.0, 1.0) for v in m.root_params.values())
    betas = np.abs(np.array(betas))
    assert len(betas) >= 1000
    assert betas.min() >= 0.5 and betas.max() <= 2.0


def test_concentration_decays():
    a = gpn.fourier_concentration()
    assert a.size == 13 and a[0] == 1.0
    np.testing.assert_allclose(a[1::2], np.exp(-np.arange(1, 7)))
    np.testing.assert_allclose(a[2::2], np.exp(-np.arange(1, 7)))


def test_model_json_round_trip():
    m = gpn.generate_fourier_gpn(PRESET_DAGS["four_node"], 2)
    assert SyntheticGpn.from_json(m.to_json()).to_json() == m.to_json()


def test_root_marginal():
    m = gpn.generate_fourier_gpn(Dag(1), 0)
    x = gpn.simulate(m, 100_000, 1)[:, 0]
    se = 1 / np.sqrt(x.size)
    assert abs(x.mean()) < 4 * se
    assert abs(x.var() - 1.0) < 4 * np.sqrt(2) * se


def test_chain_correlation_sign_follows_beta():
    d = Dag(2, frozenset({(0, 1)}))
    fam = FourierFamily((0,), np.array([-1.5]), np.array([[1.0] + [0.0] * 6]), np.zeros((1, 7)))
    m = SyntheticGpn(d, {1: fam}, {0: (0.0, 1.0)})
    x = gpn.simulate(m, 20_000, 0)
    assert np.corrcoef(x.T)[0, 1] < -0.5


def test_five_node_shape():
    m = gpn.generate_fourier_gpn(PRESET_DAGS["five_node"], 0)
    x = gpn.simulate(m, 50, 0)
    assert x.shape == (50, 5) and np.all(np.isfinite(x))


def test_independent_columns_uncorrelated():
    m = gpn.generate_fourier_gpn(Dag(2), 0)
    x = gpn.simulate(m, 100_000, 5)
    assert abs(np.corrcoef(x.T)[0, 1]) < 4 / np.sqrt(x.shape[0])


def test_truth_no_path_is_marginal_mean():
    d = Dag(3, frozenset({(0, 1)}))
    m = gpn.generate_fourier_gpn(d, 1)
    means, _ = gpn.true_intervention_expectation(m, 2, [0], np.linspace(-2, 2, 5), R=1000)
    assert np.ptp(means) == 0.0
    means1, _ = gpn.true_intervention_expectation(m, 0, [2], np.linspace(-2, 2, 5), R=1000)
    assert np.ptp(means1) == 0.0


def test_truth_direct_edge_is_fourier_mean():
    d = Dag(2, frozenset({(0, 1)}))
    m = gpn.generate_fourier_gpn(d, 7)
    xs = np.linspace(-2, 2, 9)
    means, ses = gpn.true_intervention_expectation(m, 1, [0], xs, R=10)
    np.testing.assert_allclose(means, m.families[1].mean(xs[:, None]), atol=1e-12)
    assert np.all(ses < 1e-15)


def test_truth_chain_matches_high_R():
    d = PRESET_DAGS["chain3"]
    m = gpn.generate_fourier_gpn(d, 2)
    xs = np.array([-1.0, 0.5])
    lo, lo_se = gpn.true_intervention_expectation(m, 2, [0], xs, R=20_000, rng_seed=1)
    hi, hi_se = gpn.true_intervention_expectation(m, 2, [0], xs, R=1_000_000, rng_seed=2)
    assert np.all(np.abs(lo - hi) < 3 * np.sqrt(lo_se ** 2 + hi_se ** 2))


def test_truth_ignores_intervened_noise():
    d = Dag(2, frozenset({(0, 1)}))
    m = gpn.generate_fourier_gpn(d, 3)
    a, _ = gpn.true_intervention_expectation(m, 1, [0], [0.3], R=50, rng_seed=1)
    b, _ = gpn.true_intervention_expectation(m, 1, [0], [0.3], R=50, rng_seed=99)
    assert a[0] == b[0]


def test_truth_rejects_target_in_intervened():
    m = gpn.generate_fourier_gpn(PRESET_DAGS["chain3"], 0)
    with pytest.raises(DomainError):
        gpn.true_intervention_expectation(m, 1, [1], [0.0])


def test_standardize_contract(tmp_path):
    x = gpn.simulate(gpn.generate_fourier_gpn(PRESET_DAGS["five_node"], 0), 50, 0) * 3 + 7
    z, mu, sd = gpn.standardize(x)
    assert np.all(np.abs(z.mean(axis=0)) < 1e-10)
    assert np.all(np.abs(z.std(axis=0, ddof=1) - 1) < 1e-10)
    gpn.write_csv(tmp_path / "d.csv", z, PRESET_DAGS["five_node"].labels)
    back, labels = gpn.read_csv(tmp_path / "d.csv")
    assert np.array_equal(back, z) and labels == list(PRESET_DAGS["five_node"].labels)


def test_root_conditional_posterior():
    rng = np.random.default_rng(0)
    x = rng.normal(2.0, 0.5, size=400)
    rc = gpn.RootConditional(x)
    mu, var = rc.draw(20_000, np.random.default_rng(1))
    # conjugate update: E[var] = b / (a - 1), E[mu] = posterior location
    assert var.mean() == pytest.approx(rc.b / (rc.a - 1), rel=0.02)
    assert abs(mu.mean() - rc.mu) < 4 * np.sqrt(var.mean() / rc.kappa / mu.size)
    assert rc.mu == pytest.approx(x.sum() / (x.size + 1))


def test_root_marginal_matches_quadrature():
    """Closed-form normal-inverse-gamma evidence vs. 2-D numerical integration."""
    from scipy import integrate, stats
    x = np.array([0.3, -0.4, 1.1])
    rc = gpn.RootConditional(x)

    def f(mu, t):   # t = log s2
        s2 = np.exp(t)
        lik = np.exp(-np.sum((x - mu) ** 2) / (2 * s2)) / (2 * np.pi * s2) ** (x.size / 2)
        prior_mu = np.exp(-mu * mu / (2 * s2)) / np.sqrt(2 * np.pi * s2)
        return lik * prior_mu * stats.invgamma.pdf(s2, 1, scale=1) * s2

    val, _ = integrate.dblquad(f, -12, 8, -8, 8, epsabs=1e-13)
    assert rc.log_marginal() == pytest.approx(np.log(val), abs=1e-4)


def test_fit_and_posterior_predictive_simulation():
    d = PRESET_DAGS["chain3"]
    m = gpn.generate_fourier_gpn(d, 0)
    z, _, _ = gpn.standardize(gpn.simulate(m, 80, 0))
    fit = gpn.fit_gpn(z, d, n_hyper=10, rng_seed=0)
    sim = gpn.simulate(fit, 2000, 1)
    assert sim.shape == (2000, 3)
    # predictive draws reproduce the strong dependence seen in the data
    assert np.sign(np.corrcoef(sim.T)[1, 2]) == np.sign(np.corrcoef(z.T)[1, 2])
    with pytest.raises(DomainError):
        gpn.fit_gpn(z[:, :2], d)
