import math

import numpy as np
import pytest
from scipy import stats

from scorematch.simulate import (Graph, NonNormalizableError, TruthSpec, chain_graph, chain_truth,
                                 contaminate, erdos_renyi_graph, gen_graph, hub_lattice_graph,
                                 lattice_graph, make_rng, normal_conditionals_truth, precision_block_uniform,
                                 precision_discrete, precision_peng, sample_mvn, sample_mvt,
                                 sample_normal_conditionals_gibbs, sample_truncated_mvn_gibbs,
                                 sample_truth, star_graph, star_truth)

# ---------------------------------------------------------------- graphs


def test_chain_edges():
    assert set(chain_graph(4).edges) == {(0, 1), (1, 2), (2, 3)}


@pytest.mark.parametrize("side", [2, 3, 5])
def test_lattice_edge_count(side):
    assert lattice_graph(side).n_edges == 2 * side * (side - 1)


def test_star_graph():
    g = star_graph(21, 20)
    assert g.n_edges == 20
    assert set(np.flatnonzero(g.adjacency()[0])) == set(range(1, 21))
    deg = g.degrees()
    assert deg[0] == 20 and np.all(deg[1:] == 1)


def test_graph_from_adjacency_round_trip():
    g = lattice_graph(3)
    assert Graph.from_adjacency(g.adjacency()).edges == g.edges


def test_hub_lattice_has_hubs():
    g = hub_lattice_graph(2, 8, n_hubs=3, hub_degree=20, seed=1)
    assert g.m == 128
    assert np.sum(g.degrees() >= 20) >= 6


def test_erdos_renyi_seeded():
    assert erdos_renyi_graph(30, 0.1, seed=4).edges == erdos_renyi_graph(30, 0.1, seed=4).edges


def test_gen_graph_dispatch():
    assert gen_graph("chain", m=5).edges == chain_graph(5).edges
    assert gen_graph("lattice2d", side=3).n_edges == 12
    with pytest.raises(ValueError, match="needs parameter"):
        gen_graph("star", m=5)
    with pytest.raises(ValueError):
        gen_graph("torus", m=5)


# ---------------------------------------------------------------- truths


@pytest.mark.parametrize("truth", [chain_truth(8), star_truth(30, 10), precision_peng(lattice_graph(4), seed=2)])
def test_zero_pattern_matches_graph(truth):
    m = truth.m
    off = ~np.eye(m, dtype=bool)
    adj = truth.graph.adjacency()
    assert np.all(np.abs(truth.K[off & ~adj]) <= 1e-8)
    assert np.all(truth.K[adj] != 0)
    np.testing.assert_allclose(truth.K @ truth.Sigma, np.eye(m), atol=1e-8)


def test_star_covariance_entries():
    t = star_truth(50, 10)
    rho = 0.25
    assert t.Sigma[0, 1] == pytest.approx(rho)
    assert t.Sigma[1, 2] == pytest.approx(rho ** 2)
    assert t.K[0, 1] == pytest.approx(-rho / (1 - rho ** 2))
    with pytest.raises(ValueError):
        star_truth(50, 4)


@pytest.mark.parametrize("seed", range(5))
def test_peng_correlation(seed):
    t = precision_peng(erdos_renyi_graph(40, 0.08, seed=seed), seed=seed)
    np.testing.assert_allclose(np.diag(t.Sigma), 1.0, atol=1e-12)
    assert np.linalg.eigvalsh(t.Sigma).min() > 0


@pytest.mark.parametrize("seed", range(5))
def test_block_uniform_min_eigenvalue_and_structure(seed):
    t = precision_block_uniform(4, 5, seed=seed)
    assert abs(np.linalg.eigvalsh(t.K).min() - 0.1) <= 1e-6
    mask = np.kron(np.eye(4), np.ones((5, 5))).astype(bool)
    assert np.all(t.K[~mask] == 0)


def test_block_uniform_nonzero_fraction():
    fracs = []
    for seed in range(100):
        K = precision_block_uniform(2, 6, seed=seed).K
        within = np.kron(np.eye(2), np.tril(np.ones((6, 6)), -1)).astype(bool)
        fracs.append(np.mean(K[within] != 0))
    assert abs(np.mean(fracs) - 0.8) <= 0.1


@pytest.mark.parametrize("seed", range(5))
def test_discrete_min_eigenvalue(seed):
    t = precision_discrete(200, seed=seed)
    assert abs(np.linalg.eigvalsh(t.K).min() - 0.6) <= 0.02


def test_discrete_unscaled_is_diagonally_dominant_and_sparse():
    rates = []
    for seed in range(5):
        t = precision_discrete(200, seed=seed)
        K0 = t.K - np.diag(np.diag(t.K)) + np.diag(1 + np.count_nonzero(t.K - np.diag(np.diag(t.K)), axis=1))
        off = np.abs(K0 - np.diag(np.diag(K0))).sum(axis=1)
        assert np.all(np.diag(K0) > off)
        rates.append(np.mean(t.K[np.tril_indices(200, -1)] != 0))
    assert abs(np.mean(rates) - 0.02) <= 0.01


def test_truth_dict_round_trip():
    t = normal_conditionals_truth(lattice_graph(3))
    back = TruthSpec.from_dict(t.to_dict())
    assert back.graph.edges == t.graph.edges and back.family == t.family
    np.testing.assert_array_equal(back.quartic, t.quartic)
    assert t.quartic[0, 1] == pytest.approx(-1 / 25)


# ---------------------------------------------------------------- samplers


def test_rng_streams_differ_and_repeat():
    a = make_rng(3, 0).random(5)
    np.testing.assert_array_equal(a, make_rng(3, 0).random(5))
    assert not np.array_equal(a, make_rng(3, 1).random(5))


def test_mvn_moments_and_determinism():
    X = sample_mvn(np.eye(3), 10_000, seed=1)
    assert np.all(np.abs(X.mean(axis=0)) <= 4 / math.sqrt(10_000))
    np.testing.assert_array_equal(X, sample_mvn(np.eye(3), 10_000, seed=1))
    S = chain_truth(4).Sigma
    Y = sample_mvn(S, 100_000, seed=2)
    assert np.abs(Y.T @ Y / 100_000 - S).max() <= 0.1


def test_mvn_rejects_indefinite():
    with pytest.raises(np.linalg.LinAlgError):
        sample_mvn(np.array([[1.0, 2.0], [2.0, 1.0]]), 5)


def test_mvt_tails_and_limit():
    X = sample_mvt(np.eye(2), 3, 10_000, seed=0)
    assert stats.kurtosis(X[:, 0]) > 0
    S = chain_truth(3).Sigma
    Y = sample_mvt(S, 1e6, 100_000, seed=1)
    assert np.abs(Y.T @ Y / 100_000 - S).max() <= 0.05
    np.testing.assert_array_equal(X, sample_mvt(np.eye(2), 3, 10_000, seed=0))


def test_contaminate():
    X = np.ones((150, 3))
    out = contaminate(X, 0.02, seed=0)
    assert np.sum(np.any(out != 1.0, axis=1)) == 3
    np.testing.assert_array_equal(contaminate(X, 0.0), X)
    noise = contaminate(np.zeros((10_000, 2)), 1.0, seed=1)
    np.testing.assert_allclose(noise.var(axis=0), 0.2, rtol=0.05)


def test_half_normal_mean():
    X = sample_truncated_mvn_gibbs(np.eye(1), 10_000, seed=0)
    se = X.std() / math.sqrt(len(X))
    assert np.all(X >= 0)
    assert abs(X.mean() - math.sqrt(2 / math.pi)) <= 3 * se


def test_truncated_independence_under_diagonal_precision():
    X = sample_truncated_mvn_gibbs(np.eye(2), 10_000, seed=1)
    r = np.corrcoef(X.T)[0, 1]
    assert abs(r) <= 3 / math.sqrt(10_000)


def _batch_se(x, batches=50):
    means = x[: len(x) // batches * batches].reshape(batches, -1, x.shape[1]).mean(axis=1)
    return means.std(axis=0, ddof=1) / math.sqrt(batches)


def test_truncated_chain_stationarity():
    K = chain_truth(5).K
    X = sample_truncated_mvn_gibbs(K, 20_000, thin=2, seed=2)
    a, b = X[:10_000], X[10_000:]
    se = np.sqrt(_batch_se(a) ** 2 + _batch_se(b) ** 2)
    assert np.all(np.abs(a.mean(axis=0) - b.mean(axis=0)) <= 4 * se)


def test_truncated_deep_tail_draws_stay_finite():
    K = np.array([[1.0, 0.9], [0.9, 1.0]])
    X = sample_truncated_mvn_gibbs(K, 200, seed=0, x0=[60.0, 60.0])
    assert np.all(np.isfinite(X)) and np.all(X >= 0)


def test_normal_conditionals_without_interaction():
    n = 10_000
    X = sample_normal_conditionals_gibbs(np.zeros((2, 2)), -1.0, 8 / 50, n, seed=0)
    se_mean = np.sqrt(0.5 / n)
    assert np.all(np.abs(X.mean(axis=0) - 0.08) <= 3 * se_mean)
    se_var = 0.5 * math.sqrt(2 / (n - 1))
    assert np.all(np.abs(X.var(axis=0, ddof=1) - 0.5) <= 3 * se_var)
    np.testing.assert_array_equal(X, sample_normal_conditionals_gibbs(np.zeros((2, 2)), -1.0, 8 / 50, n, seed=0))


def test_normal_conditionals_negative_interaction():
    n = 10_000
    Q = np.array([[0.0, -0.1], [-0.1, 0.0]])
    X = sample_normal_conditionals_gibbs(Q, -1.0, 0.0, n, seed=3)
    r = np.corrcoef(X[:, 0] ** 2, X[:, 1] ** 2)[0, 1]
    assert r < -3 / math.sqrt(n)


def test_normal_conditionals_non_normalisable():
    with pytest.raises(NonNormalizableError) as info:
        sample_normal_conditionals_gibbs(np.zeros((2, 2)), [-1.0, 0.5], 0.0, 10, seed=0)
    assert info.value.index == 1


def test_sample_truth_dispatch():
    X = sample_truth(normal_conditionals_truth(lattice_graph(2)), 50, seed=0)
    assert X.shape == (50, 4)
    Y = sample_truth(precision_block_uniform(1, 3, seed=0), 20, seed=0)
    assert Y.shape == (20, 3) and np.all(Y >= 0)


def test_normal_quantile_matches_scipy():
    from scipy.special import ndtri as ref

    from scorematch import _kernels
    p = np.concatenate([np.geomspace(1e-300, 0.02425, 40), np.linspace(0.02425, 0.97575, 60),
                        1 - np.geomspace(0.02425, 1e-15, 40)])
    got = np.array([_kernels.ndtri(v) for v in p])
    np.testing.assert_allclose(got, ref(p), rtol=1e-13, atol=1e-15)
    assert _kernels.ndtri(0.0) == -np.inf and _kernels.ndtri(1.0) == np.inf
