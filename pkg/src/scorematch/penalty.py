"""Penalty specification, thresholds and optimality certificates."""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._linalg import RankError, psd_solve
from .losses import PAIR, Layout, QuadraticLoss

L1 = "l1"
GROUP = "group"


@dataclass(frozen=True)
class PenaltySpec:
    """Which free coordinates are penalised and how.

    ``weights[r]`` multiplies ``lambda`` for coordinate ``r`` (0 means
    unpenalised).  A symmetric off-diagonal entry stands for two entries of the
    interaction matrix, hence its default weight 2.  In group mode ``groups``
    lists disjoint index arrays; the penalty is ``lambda * weight * ||theta_G||``
    with the group's weight taken from its first member.
    """

    weights: np.ndarray
    mode: str = L1
    groups: tuple = ()

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("penalty weights must be finite and non-negative")
        if self.mode not in (L1, GROUP):
            raise ValueError(f"unknown penalty mode {self.mode!r}")
        groups = tuple(np.asarray(gr, dtype=np.int64) for gr in self.groups)
        seen = np.concatenate(groups) if groups else np.empty(0, dtype=np.int64)
        if len(np.unique(seen)) != len(seen):
            raise ValueError("penalty groups must be disjoint")
        if np.any(w[seen] == 0):
            raise ValueError("every group must consist of penalised coordinates")
        for gr in groups:
            if len(gr) == 0 or len(gr) > 2:
                raise ValueError("groups must have one or two members")
            if not np.allclose(w[gr], w[gr[0]]):
                raise ValueError("members of a group must share one weight")
        if self.mode == L1 and groups:
            raise ValueError("l1 mode takes no groups")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "groups", groups)

    @property
    def penalized(self) -> np.ndarray:
        return self.weights > 0

    @property
    def unpenalized(self) -> np.ndarray:
        return np.flatnonzero(self.weights == 0)

    def units(self):
        """Coordinate units visited by block coordinate descent.

        Returns ``(unit_start, unit_coords, unit_weight)``: groups first, then
        every remaining coordinate on its own, in index order.
        """
        R = self.weights.shape[0]
        grouped = np.zeros(R, dtype=bool)
        members, sizes, wts = [], [], []
        for gr in self.groups:
            grouped[gr] = True
        order = []
        gi = {int(gr[0]): gr for gr in self.groups}
        for r in range(R):
            if r in gi:
                order.append(gi[r])
            elif not grouped[r]:
                order.append(np.array([r], dtype=np.int64))
        for u in order:
            members.append(u)
            sizes.append(len(u))
            wts.append(self.weights[u[0]])
        unit_start = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        return unit_start, np.concatenate(members).astype(np.int64), np.asarray(wts, dtype=float)


def default_penalty(layout: Layout, mode: str = L1) -> PenaltySpec:
    """Penalise every off-diagonal interaction, weight = number of matrix entries it stands for.

    In group mode (only meaningful with two or more interaction matrices) the
    entries ``(j, k)`` of all interaction matrices form one group.
    """
    rc = layout.reduced
    weights = np.where(rc.kind == PAIR, rc.n_occ, 0).astype(float)
    if mode == L1:
        return PenaltySpec(weights)
    pair_idx = np.flatnonzero(rc.kind == PAIR)
    key = {}
    for r in pair_idx:
        key.setdefault((int(rc.row[r]), int(rc.col[r])), []).append(r)
    groups = tuple(np.asarray(v, dtype=np.int64) for v in key.values())
    return PenaltySpec(weights, GROUP, groups)


def soft_threshold(a, b):
    """``sign(a) * max(|a| - b, 0)``; vectorised over ``a``.

    Parameters
    ----------
    a : float or ndarray
    b : float
        Non-negative threshold.
    """
    if np.any(np.asarray(b) < 0):
        raise ValueError("threshold must be non-negative")
    out = np.sign(a) * np.maximum(np.abs(a) - b, 0.0)
    return float(out) if np.ndim(out) == 0 else out


def restricted_hessian(loss: QuadraticLoss, coords) -> np.ndarray:
    """Hessian of the loss restricted to the free coordinates ``coords``."""
    coords = np.asarray(coords, dtype=np.int64)
    rc = loss.layout.reduced
    pos = -np.ones(rc.size, dtype=np.int64)
    pos[coords] = np.arange(coords.size)
    H = np.zeros((coords.size, coords.size))
    for b in range(loss.layout.m):
        idx = rc.block_coords[b]
        keep = np.flatnonzero((idx >= 0) & (pos[np.maximum(idx, 0)] >= 0))
        if keep.size == 0:
            continue
        sel = pos[idx[keep]]
        H[np.ix_(sel, sel)] += loss.blocks[b][np.ix_(keep, keep)]
    return H


def solve_restricted(loss: QuadraticLoss, coords) -> np.ndarray:
    """Free-coordinate vector solving the stationarity equations on ``coords``, zero elsewhere."""
    coords = np.asarray(coords, dtype=np.int64)
    theta = np.zeros(loss.layout.n_reduced)
    if coords.size == 0:
        return theta
    H = restricted_hessian(loss, coords)
    f = loss.reduced_linear()[coords]
    theta[coords] = psd_solve(H, f)
    return theta


def unpenalized_solution(loss: QuadraticLoss, penalty: PenaltySpec) -> np.ndarray:
    """Minimiser over unpenalised coordinates with every penalised one at zero."""
    try:
        return solve_restricted(loss, penalty.unpenalized)
    except RankError as exc:
        raise RankError(f"unpenalised subproblem is singular: {exc}") from exc


def _group_norms(vec, groups):
    return np.array([np.linalg.norm(vec[gr]) for gr in groups])


def lambda_max(loss: QuadraticLoss, penalty: Optional[PenaltySpec] = None) -> float:
    """Smallest penalty level at which every penalised coordinate is zero.

    Parameters
    ----------
    loss : QuadraticLoss
    penalty : PenaltySpec, optional
        Defaults to :func:`default_penalty` of the loss layout.

    Returns
    -------
    float
    """
    if penalty is None:
        penalty = default_penalty(loss.layout)
    theta0 = unpenalized_solution(loss, penalty)
    grad = loss.reduced_gradient(theta0)
    w = penalty.weights
    vals = [0.0]
    grouped = np.zeros(w.shape[0], dtype=bool)
    for gr in penalty.groups:
        grouped[gr] = True
        vals.append(np.linalg.norm(grad[gr]) / w[gr[0]])
    single = (w > 0) & ~grouped
    if np.any(single):
        vals.append(float(np.max(np.abs(grad[single]) / w[single])))
    return float(max(vals))


def as_reduced(layout: Layout, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.shape[0] == layout.n_reduced:
        return theta
    if theta.shape[0] == layout.dim:
        return layout.to_reduced(theta)
    raise ValueError(f"vector of length {theta.shape[0]} matches neither layout size")


def kkt_residual(loss: QuadraticLoss, penalty: Optional[PenaltySpec], theta, lam: float) -> float:
    """Largest violation of the optimality conditions of the penalised loss.

    Parameters
    ----------
    loss : QuadraticLoss
    penalty : PenaltySpec or None
    theta : ndarray
        Free-coordinate vector (or full vector, which is reduced first).
    lam : float

    Returns
    -------
    float
        Max over coordinates (groups) of the stationarity violation.
    """
    if penalty is None:
        penalty = default_penalty(loss.layout)
    theta = as_reduced(loss.layout, theta)
    grad = loss.reduced_gradient(theta)
    w = penalty.weights
    res = np.zeros_like(grad)
    unp = w == 0
    res[unp] = np.abs(grad[unp])
    grouped = np.zeros(w.shape[0], dtype=bool)
    worst = 0.0
    for gr in penalty.groups:
        grouped[gr] = True
        t = theta[gr]
        nt = np.linalg.norm(t)
        thr = lam * w[gr[0]]
        if nt > 0:
            worst = max(worst, float(np.linalg.norm(grad[gr] + thr * t / nt)))
        else:
            worst = max(worst, max(0.0, float(np.linalg.norm(grad[gr])) - thr))
    single = (w > 0) & ~grouped
    thr = lam * w[single]
    t = theta[single]
    gs = grad[single]
    res[single] = np.where(t != 0, np.abs(gs + thr * np.sign(t)), np.maximum(0.0, np.abs(gs) - thr))
    return float(max(worst, res.max(initial=0.0)))


def objective(loss: QuadraticLoss, penalty: Optional[PenaltySpec], theta, lam: float) -> float:
    """Penalised objective (constant ``c`` excluded)."""
    if penalty is None:
        penalty = default_penalty(loss.layout)
    theta = as_reduced(loss.layout, theta)
    w = penalty.weights
    grouped = np.zeros(w.shape[0], dtype=bool)
    pen = 0.0
    for gr in penalty.groups:
        grouped[gr] = True
        pen += w[gr[0]] * np.linalg.norm(theta[gr])
    single = ~grouped
    pen += float(np.sum(w[single] * np.abs(theta[single])))
    return loss.reduced_value(theta) + lam * pen
