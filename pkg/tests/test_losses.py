import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scorematch.losses import (NONNEG, REAL_LINE, ContractError, FamilySpec, PairwiseStatSpec,
                               build_gaussian_loss, build_general_pairwise_loss, build_location_loss,
                               build_loss, build_nonneg_gaussian_loss, build_normal_conditionals_loss,
                               gaussian_layout, gaussian_trace_loss, gaussian_stat_spec, location_layout,
                               normal_conditionals_layout, population_gaussian_loss)
from scorematch.data import DomainError, sample_covariance
from scorematch.diagnostics import meinshausen_sigma

from cases import random_case
from oracles import hyvarinen_score, random_symmetric


def gauss_value(W, K):
    return build_gaussian_loss(W).smooth_value(gaussian_layout(K.shape[0]).pack(K=K))


# ---------------------------------------------------------------- Gaussian


def test_gaussian_identity_value():
    assert gauss_value(np.eye(3), np.eye(3)) == pytest.approx(-3 + 1.5)


@pytest.mark.parametrize("w", [0.5, 1.0, 4.0])
def test_gaussian_scalar_loss(w):
    loss = build_gaussian_loss(np.array([[w]]))
    for kappa in (-1.0, 0.3, 2.0):
        assert loss.smooth_value(np.array([kappa])) == pytest.approx(0.5 * w * kappa ** 2 - kappa)
    assert loss.reduced_linear()[0] / loss.reduced_hessian()[0, 0] == pytest.approx(1 / w)


@pytest.mark.parametrize("seed", range(10))
def test_gaussian_trace_form(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(20, 4))
    W = sample_covariance(X)
    K = random_symmetric(rng, 4)
    assert gauss_value(W, K) == pytest.approx(-np.trace(K) + 0.5 * np.trace(K @ K @ W), abs=1e-10)


def test_gaussian_blocks_and_g():
    W = sample_covariance(np.random.default_rng(0).normal(size=(10, 3)))
    loss = build_gaussian_loss(W)
    for j in range(3):
        np.testing.assert_array_equal(loss.block(j), W)
    np.testing.assert_array_equal(loss.g, np.eye(3).reshape(-1))


def test_gaussian_rejects_asymmetric():
    with pytest.raises(ValueError):
        build_gaussian_loss(np.array([[1.0, 0.2], [0.1, 1.0]]))


@pytest.mark.parametrize("seed", range(5))
def test_gaussian_transpose_invariance(seed):
    rng = np.random.default_rng(seed)
    W = sample_covariance(rng.normal(size=(10, 4)))
    K = rng.normal(size=(4, 4))
    assert gaussian_trace_loss(W, K) == pytest.approx(gaussian_trace_loss(W, K.T), abs=1e-12)
    loss = build_gaussian_loss(W)
    Ks = 0.5 * (K + K.T)
    assert loss.smooth_value(Ks.reshape(-1)) == pytest.approx(gaussian_trace_loss(W, Ks), abs=1e-12)
    # free-coordinate evaluation symmetrises, so K and K' give the same value
    lay = loss.layout
    assert loss.reduced_value(lay.to_reduced(K.T.reshape(-1))) == pytest.approx(
        loss.reduced_value(lay.to_reduced(K.reshape(-1))), abs=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_full_vector_form_on_nonsymmetric_input(seed):
    rng = np.random.default_rng(seed)
    W = sample_covariance(rng.normal(size=(10, 3)))
    K = rng.normal(size=(3, 3))
    # column j of K is the j-th block, giving -tr(K) + tr(K' W K) / 2
    value = build_gaussian_loss(W).smooth_value(K.T.reshape(-1))
    assert value == pytest.approx(-np.trace(K) + 0.5 * np.trace(K.T @ W @ K), abs=1e-12)


def test_population_loss():
    S = meinshausen_sigma(0.3)
    loss = population_gaussian_loss(S)
    np.testing.assert_array_equal(loss.block(2), S)
    np.testing.assert_array_equal(population_gaussian_loss(np.eye(3)).block(0), np.eye(3))
    K = np.linalg.inv(S)
    np.testing.assert_allclose(loss.gamma_times(K.T.reshape(-1)), loss.g, atol=1e-10)


# ---------------------------------------------------------------- non-negative


@pytest.mark.parametrize("c", [0.5, 1.0, 2.0])
def test_nonneg_single_observation(c):
    loss = build_nonneg_gaussian_loss(np.array([[c, 0.0]]))
    assert loss.block(0)[0, 0] == pytest.approx(c ** 4)
    assert loss.g[0] == pytest.approx(3 * c ** 2)
    assert loss.g[0] / loss.block(0)[0, 0] == pytest.approx(3 / c ** 2)


def test_nonneg_zero_data():
    loss = build_nonneg_gaussian_loss(np.zeros((4, 3)))
    assert not loss.blocks.any() and not loss.g.any()


def test_nonneg_rejects_negative():
    with pytest.raises(DomainError):
        build_loss("truncated-gaussian", np.array([[1.0, -1.0]]))


def test_truncated_family_requires_nonneg_domain():
    with pytest.raises(ValueError):
        FamilySpec("truncated-gaussian", REAL_LINE)
    assert FamilySpec("gaussian", NONNEG).nonnegative


# ---------------------------------------------------------------- normal conditionals


def test_normal_conditionals_dimensions():
    lay = normal_conditionals_layout(2)
    assert lay.block_dim == 5 and lay.dim == 10
    loss = build_normal_conditionals_loss(np.random.default_rng(0).normal(size=(6, 2)))
    assert loss.blocks.shape == (2, 5, 5)


def test_normal_conditionals_value_at_zero():
    loss = build_normal_conditionals_loss(np.random.default_rng(0).normal(size=(6, 3)))
    assert loss.value(np.zeros(loss.layout.dim)) == loss.c


# ---------------------------------------------------------------- oracle equivalence


@pytest.mark.parametrize("family", ["gaussian", "truncated-gaussian", "location", "normal-conditionals"])
@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 31), m=st.integers(1, 5), n=st.integers(1, 30))
def test_loss_matches_finite_difference_score(family, seed, m, n):
    rng = np.random.default_rng(seed)
    X, theta1, logq1, nonneg = random_case(family, rng, max(m, 2) if family == "normal-conditionals" else m, n)
    _, theta2, logq2, _ = random_case(family, rng, X.shape[1], n)
    loss = build_loss(family, X)
    diff_loss = loss.smooth_value(theta1) - loss.smooth_value(theta2)
    diff_ref = hyvarinen_score(logq1, X, nonneg) - hyvarinen_score(logq2, X, nonneg)
    scale = max(1.0, abs(loss.smooth_value(theta1)), abs(loss.smooth_value(theta2)))
    assert abs(diff_loss - diff_ref) <= 1e-6 * scale


@pytest.mark.parametrize("family", ["gaussian", "truncated-gaussian", "location", "normal-conditionals"])
@pytest.mark.parametrize("seed", range(3))
def test_blocks_are_psd(family, seed):
    rng = np.random.default_rng(seed)
    X = rng.exponential(size=(15, 4)) if family in ("truncated-gaussian", "location") else rng.normal(size=(15, 4))
    loss = build_loss(family, X)
    assert np.linalg.eigvalsh(loss.blocks).min() >= -1e-10


# ---------------------------------------------------------------- general builder


@pytest.mark.parametrize("seed", range(4))
def test_general_builder_reproduces_gaussian(seed):
    X = np.random.default_rng(seed).normal(size=(25, 4))
    general = build_general_pairwise_loss(gaussian_stat_spec(4), X, REAL_LINE)
    direct = build_gaussian_loss(sample_covariance(X))
    np.testing.assert_allclose(general.blocks, direct.blocks, atol=1e-12)
    np.testing.assert_allclose(general.g, direct.g, atol=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_general_builder_reproduces_nonneg(seed):
    X = np.random.default_rng(seed).exponential(size=(25, 4))
    general = build_general_pairwise_loss(gaussian_stat_spec(4), X, NONNEG)
    direct = build_nonneg_gaussian_loss(X)
    np.testing.assert_allclose(general.blocks, direct.blocks, atol=1e-12)
    np.testing.assert_allclose(general.g, direct.g, atol=1e-12)


def test_general_builder_location_matches_dedicated():
    X = np.random.default_rng(3).exponential(size=(25, 3))
    loss = build_location_loss(X)
    assert loss.layout == location_layout(3)
    assert np.linalg.eigvalsh(loss.blocks).min() >= -1e-10


def test_general_builder_random_callbacks_psd():
    rng = np.random.default_rng(0)
    m = 3
    lay = gaussian_layout(m)
    coef = rng.normal(size=(m, m))
    spec = PairwiseStatSpec(lay, grad=lambda X, j: np.sin(X * coef[j]),
                            hess=lambda X, j: np.cos(X * coef[j]) * coef[j])
    loss = build_general_pairwise_loss(spec, rng.normal(size=(30, m)))
    assert np.linalg.eigvalsh(loss.blocks).min() >= -1e-10


def test_general_builder_rejects_bad_callback_shape():
    lay = gaussian_layout(3)
    spec = PairwiseStatSpec(lay, grad=lambda X, j: X[:, :2], hess=lambda X, j: X)
    with pytest.raises(ContractError):
        build_general_pairwise_loss(spec, np.ones((4, 3)))


# ---------------------------------------------------------------- layout


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 31), m=st.integers(1, 6))
def test_layout_round_trip(seed, m):
    rng = np.random.default_rng(seed)
    lay = normal_conditionals_layout(m)
    B, B2, b = random_symmetric(rng, m), random_symmetric(rng, m, zero_diag=True), rng.normal(size=m)
    theta = lay.pack(B=B, B2=B2, b=b)
    mats = lay.matrices(lay.from_reduced(lay.to_reduced(theta)))
    np.testing.assert_allclose(mats["B"], B)
    np.testing.assert_allclose(mats["B2"], B2)
    np.testing.assert_allclose(mats["b"], b)
    assert np.all(np.diag(mats["B2"]) == 0)
