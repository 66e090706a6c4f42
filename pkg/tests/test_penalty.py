import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scorematch.cd import solve_cd
from scorematch.data import sample_covariance
from scorematch.losses import build_gaussian_loss, build_loss, gaussian_layout
from scorematch.penalty import (GROUP, L1, PenaltySpec, default_penalty, kkt_residual, lambda_max,
                                objective, soft_threshold)


@pytest.mark.parametrize("a, b, expected", [(3.0, 1.0, 2.0), (-0.5, 1.0, 0.0), (-3.0, 1.0, -2.0),
                                            (0.7, 0.0, 0.7), (-2.5, 0.0, -2.5)])
def test_soft_threshold(a, b, expected):
    assert soft_threshold(a, b) == expected


def test_soft_threshold_rejects_negative_threshold():
    with pytest.raises(ValueError):
        soft_threshold(1.0, -0.1)


@given(a=st.floats(-1e6, 1e6), b=st.floats(0, 1e6))
def test_soft_threshold_is_shrinkage(a, b):
    out = soft_threshold(a, b)
    assert abs(out) <= abs(a) and (out == 0 or np.sign(out) == np.sign(a))


def test_default_weights():
    lay = gaussian_layout(3)
    pen = default_penalty(lay)
    rc = lay.reduced
    assert set(pen.weights[rc.kind == 0]) == {0.0}
    assert set(pen.weights[rc.kind == 1]) == {2.0}


def test_penalty_validation():
    with pytest.raises(ValueError):
        PenaltySpec(np.array([-1.0, 1.0]))
    with pytest.raises(ValueError):
        PenaltySpec(np.array([1.0, 1.0]), GROUP, groups=([0, 1], [1]))
    with pytest.raises(ValueError):
        PenaltySpec(np.array([0.0, 1.0]), GROUP, groups=([0, 1],))
    with pytest.raises(ValueError):
        PenaltySpec(np.ones(2), "elastic")


def test_lambda_max_identity_is_zero():
    assert lambda_max(build_gaussian_loss(np.eye(4))) == 0.0


@pytest.mark.parametrize("rho", [-0.6, -0.1, 0.25, 0.8])
def test_lambda_max_two_nodes(rho):
    assert lambda_max(build_gaussian_loss(np.array([[1.0, rho], [rho, 1.0]]))) == pytest.approx(abs(rho))


@pytest.mark.parametrize("family", ["gaussian", "truncated-gaussian", "location", "normal-conditionals"])
@pytest.mark.parametrize("seed", range(3))
def test_lambda_max_zeroes_penalised_coordinates(family, seed):
    rng = np.random.default_rng(seed)
    X = rng.exponential(size=(40, 4)) if family in ("truncated-gaussian", "location") else rng.normal(size=(40, 4))
    loss = build_loss(family, X)
    pen = default_penalty(loss.layout)
    lm = lambda_max(loss, pen)
    est = solve_cd(loss, pen, 1.01 * lm)
    assert np.all(est.theta[pen.weights > 0] == 0)
    below = solve_cd(loss, pen, 0.9 * lm)
    assert np.any(below.theta[pen.weights > 0] != 0)


def test_kkt_of_exact_scalar_solution():
    loss = build_gaussian_loss(np.array([[2.0]]))
    assert kkt_residual(loss, None, np.array([0.5]), 0.3) <= 1e-12


def test_kkt_at_zero_above_lambda_max():
    W = sample_covariance(np.random.default_rng(0).normal(size=(30, 4)))
    loss = build_gaussian_loss(W)
    lam = 1.5 * lambda_max(loss)
    theta0 = np.zeros(loss.layout.n_reduced)
    grad = loss.reduced_gradient(theta0)
    unpen = default_penalty(loss.layout).weights == 0
    assert kkt_residual(loss, None, theta0, lam) == pytest.approx(np.abs(grad[unpen]).max())
    assert kkt_residual(loss, None, theta0, lam) > 0


@pytest.mark.parametrize("coord_kind", [0, 1])
def test_kkt_grows_linearly_under_perturbation(coord_kind):
    W = sample_covariance(np.random.default_rng(1).normal(size=(40, 5)))
    loss = build_gaussian_loss(W)
    lam = 0.3 * lambda_max(loss)
    est = solve_cd(loss, None, lam, tol=1e-13)
    r = int(np.flatnonzero((loss.layout.reduced.kind == coord_kind) & (est.theta != 0))[0])
    ratios = []
    for delta in (1e-3, 1e-4, 1e-5):
        theta = est.theta.copy()
        theta[r] += delta
        ratios.append(kkt_residual(loss, None, theta, lam) / delta)
    assert min(ratios) > 0.05 and max(ratios) / min(ratios) < 1.5


def test_objective_adds_weighted_penalty():
    W = sample_covariance(np.random.default_rng(2).normal(size=(30, 3)))
    loss = build_gaussian_loss(W)
    theta = np.random.default_rng(3).normal(size=loss.layout.n_reduced)
    w = default_penalty(loss.layout).weights
    assert objective(loss, None, theta, 0.4) == pytest.approx(loss.reduced_value(theta) + 0.4 * np.sum(w * np.abs(theta)))
