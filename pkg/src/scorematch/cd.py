"""Coordinate-descent solvers for penalised score-matching losses."""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .losses import PAIR, Layout, QuadraticLoss, build_gaussian_loss, gaussian_layout
from .penalty import GROUP, L1, PenaltySpec, as_reduced, default_penalty, kkt_residual

DEFAULT_TOL = 1e-8
DEFAULT_T_MAX = 10000


@dataclass
class Estimate:
    """Penalised minimiser at one penalty level.

    ``theta`` holds the free coordinates of ``layout`` (each symmetric pair once).
    """

    theta: np.ndarray
    lam: float
    kkt_residual: float
    iterations: int
    converged: bool
    layout: Layout
    meta: dict = field(default_factory=dict)

    @property
    def theta_full(self) -> np.ndarray:
        return self.layout.from_reduced(self.theta)

    def matrices(self) -> dict:
        return self.layout.matrices(self.theta_full)

    def matrix(self, name: Optional[str] = None) -> np.ndarray:
        return self.matrices()[name or self.layout.pair_sets[0]]

    def adjacency(self, tol: float = 0.0) -> np.ndarray:
        return self.layout.edge_matrix(self.theta, tol)

    def edges(self, tol: float = 0.0):
        adj = self.adjacency(tol)
        j, k = np.nonzero(np.triu(adj, 1))
        return list(zip(j.tolist(), k.tolist()))

    def support_size(self, tol: float = 0.0) -> int:
        return len(self.edges(tol))


def _unit_hessians(loss: QuadraticLoss, unit_start, unit_coords):
    rc = loss.layout.reduced
    ob, ol, nocc = rc.occurrence_table()
    n_units = unit_start.shape[0] - 1
    uh = np.zeros((n_units, 2, 2))
    # diagonal curvature of every coordinate
    diag = np.zeros(rc.size)
    for o in range(2):
        has = nocc > o
        diag[has] += loss.blocks[ob[has, o], ol[has, o], ol[has, o]]
    sizes = np.diff(unit_start)
    first = unit_coords[unit_start[:-1]]
    uh[:, 0, 0] = diag[first]
    for u in np.flatnonzero(sizes == 2):
        r0, r1 = unit_coords[unit_start[u]], unit_coords[unit_start[u] + 1]
        uh[u, 1, 1] = diag[r1]
        off = 0.0
        for a in range(nocc[r0]):
            for b in range(nocc[r1]):
                if ob[r0, a] == ob[r1, b]:
                    off += loss.blocks[ob[r0, a], ol[r0, a], ol[r1, b]]
        uh[u, 0, 1] = uh[u, 1, 0] = off
    return uh


def _initial_theta(loss, warm_start):
    if warm_start is None:
        return np.zeros(loss.layout.n_reduced)
    return as_reduced(loss.layout, warm_start).copy()


def _run_units(loss, penalty, lam, tol, t_max, warm_start):
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    if tol <= 0:
        raise ValueError("tol must be positive")
    rc = loss.layout.reduced
    theta = _initial_theta(loss, warm_start)
    unit_start, unit_coords, unit_weight = penalty.units()
    unit_hess = _unit_hessians(loss, unit_start, unit_coords)
    ob, ol, nocc = rc.occurrence_table()
    m, d = loss.layout.m, loss.layout.block_dim
    resid = (loss.gradient(loss.layout.from_reduced(theta))).reshape(m, d).copy()
    blocks = loss.blocks
    if blocks.strides[0] != 0:
        blocks = np.ascontiguousarray(blocks)
    sweeps, converged = _kernels.cd_units(
        blocks, resid, theta, unit_start, unit_coords, unit_weight, unit_hess,
        ob, ol, nocc, float(lam), float(tol), int(t_max))
    res = kkt_residual(loss, penalty, theta, lam)
    return Estimate(theta, float(lam), res, int(sweeps), bool(converged), loss.layout)


def solve_cd(loss: QuadraticLoss, penalty: Optional[PenaltySpec] = None, lam: float = 0.0,
             tol: float = DEFAULT_TOL, t_max: int = DEFAULT_T_MAX, warm_start=None) -> Estimate:
    """Cyclic coordinate descent for ``loss + lam * sum_r w_r |theta_r|``.

    Parameters
    ----------
    loss : QuadraticLoss
    penalty : PenaltySpec, optional
        Defaults to the off-diagonal l1 penalty of the loss layout.
    lam : float
        Penalty level, ``>= 0``.
    tol : float
        Stop when a full sweep changes the coefficients by at most ``tol`` in l1 norm.
    t_max : int
        Maximum number of sweeps; hitting it returns an estimate flagged
        ``converged=False``.
    warm_start : ndarray, optional
        Starting point (free or full coordinates).

    Returns
    -------
    Estimate
    """
    if penalty is None:
        penalty = default_penalty(loss.layout)
    if penalty.mode == GROUP and penalty.groups:
        return solve_group_cd(loss, penalty, lam, tol, t_max, warm_start)
    return _run_units(loss, penalty, lam, tol, t_max, warm_start)


def solve_group_cd(loss: QuadraticLoss, penalty: PenaltySpec, lam: float = 0.0,
                   tol: float = DEFAULT_TOL, t_max: int = DEFAULT_T_MAX, warm_start=None) -> Estimate:
    """Block coordinate descent for a group-lasso penalty with groups of size <= 2.

    Each group is minimised exactly: the 2-d quadratic plus Euclidean-norm
    penalty has a closed-form direction once the norm of the solution is found
    by a scalar root search.
    """
    return _run_units(loss, penalty, lam, tol, t_max, warm_start)


def solve_cd_gaussian(W, lam: float = 0.0, tol: float = DEFAULT_TOL, t_max: int = DEFAULT_T_MAX,
                      warm_start=None) -> Estimate:
    """Coordinate descent specialised to the Gaussian loss ``-tr(K) + 0.5 tr(KKW)``.

    Parameters
    ----------
    W : array_like, shape (m, m)
        Symmetric second-moment matrix.
    lam : float
        Penalty level; each off-diagonal pair is penalised with weight 2.
    tol, t_max, warm_start
        As in :func:`solve_cd`; ``warm_start`` may be an ``m x m`` matrix.

    Returns
    -------
    Estimate
    """
    loss = build_gaussian_loss(W)
    W = np.ascontiguousarray(loss.blocks[0])
    m = W.shape[0]
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    if tol <= 0:
        raise ValueError("tol must be positive")
    layout = gaussian_layout(m)
    if warm_start is None:
        K = np.zeros((m, m))
    else:
        ws = np.asarray(warm_start, dtype=float)
        if ws.shape == (m, m):
            K = 0.5 * (ws + ws.T)
        else:
            K = layout.matrices(layout.from_reduced(as_reduced(layout, ws)))["K"]
    K = np.ascontiguousarray(K, dtype=float)
    M = K @ W
    sweeps, converged = _kernels.cd_gaussian(W, K, M, float(lam), float(tol), int(t_max))
    theta = layout.to_reduced(K.T.reshape(-1))
    res = kkt_residual(loss, None, theta, lam)
    return Estimate(theta, float(lam), res, int(sweeps), bool(converged), layout)
