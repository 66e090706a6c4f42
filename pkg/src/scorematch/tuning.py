"""Penalty-level selection by extended BIC, with optional refitting on the support."""
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ._linalg import RankError
from .cd import DEFAULT_T_MAX, DEFAULT_TOL, Estimate, solve_cd, solve_cd_gaussian
from .losses import PAIR, QuadraticLoss
from .path import SolutionPath
from .penalty import (GROUP, L1, PenaltySpec, default_penalty, kkt_residual, lambda_max,
                      restricted_hessian, solve_restricted)


@dataclass(frozen=True)
class EbicConfig:
    """Settings for :func:`select_lambda_ebic`.

    ``scale_loss_by_n`` multiplies the fitted loss by the sample size before
    adding the complexity terms, putting it on the scale of a log-likelihood.
    """

    gamma: float = 0.5
    refit: bool = False
    scale_loss_by_n: bool = True

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")


def _edge_count(layout, theta) -> int:
    return int(np.count_nonzero(np.triu(layout.edge_matrix(theta), 1)))


def ebic_score(estimate: Estimate, loss: QuadraticLoss, n: int, m: Optional[int] = None,
               gamma: float = 0.5, scale_loss_by_n: bool = False, theta=None) -> float:
    """Extended BIC of an estimate.

    ``2 * (0.5 theta' Gamma theta - g' theta)`` plus ``|E| (log n + 4 gamma log m)``,
    where ``|E|`` counts node pairs with a nonzero interaction.  For the
    Gaussian loss the first term equals ``-2 tr(K) + tr(KKW)``.

    Parameters
    ----------
    estimate : Estimate
    loss : QuadraticLoss
    n, m : int
        Sample size and number of variables (``m`` defaults to the layout's).
    gamma : float
    scale_loss_by_n : bool
        Multiply the loss term by ``n``.
    theta : ndarray, optional
        Free-coordinate vector to score instead of ``estimate.theta`` (used
        for refitted values).

    Returns
    -------
    float
    """
    m = loss.layout.m if m is None else m
    theta = estimate.theta if theta is None else theta
    fit = 2.0 * loss.reduced_value(theta)
    if scale_loss_by_n:
        fit *= n
    n_edges = _edge_count(loss.layout, estimate.theta)
    return float(fit + n_edges * (np.log(n) + 4.0 * gamma * np.log(m)))


def _support_coords(loss: QuadraticLoss, support, penalty: PenaltySpec) -> np.ndarray:
    rc = loss.layout.reduced
    m = loss.layout.m
    if isinstance(support, Estimate):
        adj = support.adjacency()
    else:
        arr = np.asarray(support)
        if arr.dtype == bool and arr.shape == (m, m):
            adj = arr | arr.T
        else:
            adj = np.zeros((m, m), dtype=bool)
            for j, k in (tuple(e) for e in support):
                if j == k:
                    raise ValueError("support edges must join distinct nodes")
                adj[j, k] = adj[k, j] = True
    on_edge = (rc.kind == PAIR) & adj[rc.row, rc.col]
    return np.flatnonzero((penalty.weights == 0) | on_edge)


def refit_restricted(loss: QuadraticLoss, support, penalty: Optional[PenaltySpec] = None) -> np.ndarray:
    """Unpenalised minimiser over the coordinates of ``support`` plus all unpenalised ones.

    Parameters
    ----------
    loss : QuadraticLoss
    support : iterable of (j, k), boolean adjacency matrix, or Estimate
    penalty : PenaltySpec, optional
        Decides which coordinates are always free.

    Returns
    -------
    ndarray
        Free-coordinate vector, zero outside the support.

    Raises
    ------
    RankError
        If the restricted system is singular; ``err.block`` names the first
        node whose restricted block is singular (if one can be isolated).
    """
    if penalty is None:
        penalty = default_penalty(loss.layout)
    coords = _support_coords(loss, support, penalty)
    try:
        return solve_restricted(loss, coords)
    except RankError as exc:
        bad = _find_singular_block(loss, coords)
        where = f" (block of node {bad})" if bad is not None else ""
        raise RankError(f"restricted system is singular{where}", block=bad) from exc


def _find_singular_block(loss, coords):
    rc = loss.layout.reduced
    chosen = np.zeros(rc.size, dtype=bool)
    chosen[coords] = True
    for b in range(loss.layout.m):
        idx = rc.block_coords[b]
        keep = (idx >= 0) & chosen[np.maximum(idx, 0)]
        sub = loss.blocks[b][np.ix_(keep, keep)]
        if sub.size and np.linalg.eigvalsh(sub).min() <= 1e-12 * max(1.0, np.abs(sub).max()):
            return b
    return None


def lambda_grid(lam_max: float, num: int = 50, ratio: float = 1e-3) -> np.ndarray:
    """Log-spaced decreasing grid from ``lam_max`` to ``ratio * lam_max``."""
    if lam_max <= 0:
        return np.zeros(1)
    return np.geomspace(lam_max, ratio * lam_max, num)


def _is_plain_gaussian(loss, penalty):
    if loss.family not in ("gaussian", "gaussian-population") or loss.shared_block is None:
        return False
    return np.array_equal(penalty.weights, default_penalty(loss.layout).weights) and penalty.mode == L1


def fit_grid(loss: QuadraticLoss, penalty: Optional[PenaltySpec] = None,
             lambdas: Optional[Sequence[float]] = None, tol: float = DEFAULT_TOL,
             t_max: int = DEFAULT_T_MAX) -> list:
    """Fit a decreasing grid of penalty levels with warm-started coordinate descent."""
    if penalty is None:
        penalty = default_penalty(loss.layout)
    if lambdas is None:
        lambdas = lambda_grid(lambda_max(loss, penalty))
    lambdas = np.sort(np.asarray(lambdas, dtype=float))[::-1]
    fast = _is_plain_gaussian(loss, penalty)
    out = []
    warm = None
    for lam in lambdas:
        if fast:
            est = solve_cd_gaussian(loss.shared_block, lam, tol, t_max, warm_start=warm)
        else:
            est = solve_cd(loss, penalty, lam, tol, t_max, warm_start=warm)
        warm = est.theta
        out.append(est)
    return out


@dataclass
class Selection:
    lam: float
    estimate: Estimate
    table: list = field(default_factory=list)


def _candidates_from_path(path: SolutionPath, loss):
    lams = np.concatenate([path.knots, path.segment_midpoints()])
    lams = np.unique(lams)[::-1]
    return [path.estimate_at(float(l), loss) for l in lams]


def select_lambda_ebic(candidates, loss: QuadraticLoss, n: int,
                       config: EbicConfig = EbicConfig(),
                       penalty: Optional[PenaltySpec] = None) -> Selection:
    """Choose the penalty level minimising the extended BIC.

    Parameters
    ----------
    candidates : SolutionPath or list of Estimate
        A path contributes its knots and segment midpoints.
    loss : QuadraticLoss
        Loss the candidates were fitted on.
    n : int
        Sample size.
    config : EbicConfig

    Returns
    -------
    Selection
        ``lam``, the chosen estimate (refitted values if ``config.refit``) and
        a per-candidate table of dicts.  Ties go to the larger ``lambda``.
    """
    if isinstance(candidates, SolutionPath):
        penalty = penalty or candidates.penalty
        cands = _candidates_from_path(candidates, loss)
    else:
        cands = list(candidates)
    if not cands:
        raise ValueError("no candidates to select from")
    if penalty is None:
        penalty = default_penalty(loss.layout)
    cands = sorted(cands, key=lambda e: -e.lam)
    table = []
    best, best_score = None, np.inf
    for est in cands:
        theta = est.theta
        refit_failed = False
        if config.refit:
            try:
                theta = refit_restricted(loss, est, penalty)
            except RankError:
                refit_failed = True
                theta = est.theta
        score = ebic_score(est, loss, n, loss.layout.m, config.gamma, config.scale_loss_by_n, theta)
        table.append({"lambda": est.lam, "score": score, "support_size": est.support_size(),
                      "refit_failed": refit_failed})
        if score < best_score - 1e-12 * max(1.0, abs(best_score) if np.isfinite(best_score) else 1.0):
            best_score = score
            if config.refit and not refit_failed:
                chosen = Estimate(theta, est.lam, kkt_residual(loss, penalty, theta, est.lam),
                                  est.iterations, est.converged, est.layout, {"refit": True})
            else:
                chosen = est
            best = chosen
    return Selection(best.lam, best, table)
