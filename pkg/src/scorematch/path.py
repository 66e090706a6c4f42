"""Exact piecewise-linear solution paths of l1-penalised quadratic losses."""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import cho_solve

from ._linalg import RankError, psd_factor
from .cd import Estimate
from .losses import Layout, QuadraticLoss
from .penalty import L1, PenaltySpec, default_penalty, kkt_residual, unpenalized_solution

GRADIENT_ZERO = "gradient-zero"
RANK_LIMIT = "rank-limit"
USER_LAMBDA_MIN = "user-lambda-min"
MAX_ACTIVE = "max-active"


class UnsupportedPenalty(ValueError):
    pass


@dataclass
class SolutionPath:
    """Coefficients as a function of the penalty level.

    ``knots`` are increasing; on ``[knots[r], knots[r+1]]`` the solution is
    ``coefs[r] + (lam - knots[r]) * slopes[r]``.  The last segment is the ray
    ``[knots[-1], inf)`` on which every penalised coordinate is zero, so its
    slope is zero.  ``active_sets[r]`` lists the free coordinates (penalised
    ones only) that are nonzero on the open segment ``r``.
    """

    knots: np.ndarray
    coefs: np.ndarray
    slopes: np.ndarray
    active_sets: list
    termination: str
    layout: Layout
    penalty: PenaltySpec
    meta: dict = field(default_factory=dict)

    @property
    def lambda_max(self) -> float:
        return float(self.knots[-1])

    @property
    def lambda_min(self) -> float:
        return float(self.knots[0])

    @property
    def n_segments(self) -> int:
        return len(self.knots)

    def segment_of(self, lam: float) -> int:
        if lam < self.knots[0] - 1e-14 * max(1.0, self.knots[-1]):
            raise ValueError(f"lambda={lam:g} lies below the computed path (min {self.knots[0]:g})")
        return int(np.clip(np.searchsorted(self.knots, lam, side="right") - 1, 0, len(self.knots) - 1))

    def theta_at(self, lam: float) -> np.ndarray:
        """Free-coordinate solution at ``lam`` by linear interpolation."""
        r = self.segment_of(lam)
        theta = self.coefs[r] + (lam - self.knots[r]) * self.slopes[r]
        # active penalised coordinates keep one sign on a segment; rounding near an
        # endpoint can flip a vanishing value, which is snapped back to zero
        if r + 1 < len(self.knots):
            act = np.asarray(self.active_sets[r], dtype=np.int64)
            mid = 0.5 * (self.knots[r] + self.knots[r + 1])
            ref = self.coefs[r][act] + (mid - self.knots[r]) * self.slopes[r][act]
            theta[act] = np.where(theta[act] * ref < 0, 0.0, theta[act])
        return theta

    def estimate_at(self, lam: float, loss: Optional[QuadraticLoss] = None) -> Estimate:
        theta = self.theta_at(lam)
        res = kkt_residual(loss, self.penalty, theta, lam) if loss is not None else float("nan")
        return Estimate(theta, float(lam), res, 0, True, self.layout, {"source": "path"})

    def segment_midpoints(self) -> np.ndarray:
        """Midpoints of the bounded segments."""
        return 0.5 * (self.knots[:-1] + self.knots[1:])

    def support_at(self, lam: float) -> np.ndarray:
        r = self.segment_of(lam)
        return np.asarray(self.active_sets[r], dtype=np.int64)

    def total_abs_offdiag(self) -> np.ndarray:
        """Sum of absolute penalised coefficients at each knot, in matrix-entry units."""
        w = self.penalty.weights
        return np.abs(self.coefs) @ w


def solve_path(loss: QuadraticLoss, penalty: Optional[PenaltySpec] = None,
               lambda_min: float = 0.0, max_active: Optional[int] = None,
               rcond: float = 1e-10) -> SolutionPath:
    """Trace the l1-penalised solution path from ``lambda_max`` down to ``lambda_min``.

    Unpenalised coordinates are solved exactly before tracing and stay in the
    working set throughout.  At each knot a coordinate either enters the
    active set (its gradient reaches the penalty bound) or leaves it (its
    coefficient crosses zero).

    Parameters
    ----------
    loss : QuadraticLoss
    penalty : PenaltySpec, optional
        Must be in l1 mode.
    lambda_min : float
        Lower end of the path.
    max_active : int, optional
        Stop once more than this many penalised coordinates are active.
    rcond : float
        Relative pivot threshold below which the active Gram matrix is
        declared singular (path stops with termination ``"rank-limit"``).

    Returns
    -------
    SolutionPath
    """
    if penalty is None:
        penalty = default_penalty(loss.layout)
    if penalty.mode != L1:
        raise UnsupportedPenalty("solution paths are piecewise linear only for the l1 penalty")
    if lambda_min < 0:
        raise ValueError("lambda_min must be non-negative")
    blocks = loss.blocks[:1] if loss.shared_block is not None else loss.blocks
    eig_min = np.linalg.eigvalsh(blocks).min(initial=0.0)
    if eig_min < -1e-8 * max(1.0, float(np.abs(blocks).max(initial=0.0))):
        raise ValueError("loss Hessian is not positive semidefinite")
    H = loss.reduced_hessian()
    f = loss.reduced_linear()
    w = penalty.weights
    R = H.shape[0]
    unpen = w == 0
    theta = unpenalized_solution(loss, penalty)
    c = f - H @ theta
    pen_idx = np.flatnonzero(~unpen)
    if pen_idx.size:
        ratios = np.abs(c[pen_idx]) / w[pen_idx]
        lam_max = float(ratios.max())
    else:
        ratios = np.empty(0)
        lam_max = 0.0
    scale = max(lam_max, 1e-300)

    knots = [lam_max]
    coefs = [theta.copy()]
    slopes = [np.zeros(R)]
    actives = [np.empty(0, dtype=np.int64)]
    in_set = unpen.copy()
    sign = np.zeros(R)
    if lam_max <= lambda_min or lam_max == 0.0:
        termination = GRADIENT_ZERO if lam_max == 0.0 else USER_LAMBDA_MIN
        return _finish(knots, coefs, slopes, actives, termination, loss, penalty, lam_max)

    enter = pen_idx[ratios >= lam_max * (1 - 1e-12)]
    in_set[enter] = True
    sign[enter] = np.sign(c[enter])
    lam = lam_max
    termination = GRADIENT_ZERO
    n_events = 0
    while True:
        A = np.flatnonzero(in_set)
        n_pen_active = int(np.count_nonzero(in_set & ~unpen))
        if max_active is not None and n_pen_active > max_active:
            termination = MAX_ACTIVE
            break
        try:
            fac = psd_factor(H[np.ix_(A, A)], rcond)
        except RankError:
            termination = RANK_LIMIT
            break
        a = cho_solve(fac, f[A])
        d = cho_solve(fac, w[A] * sign[A])
        # theta_A(l) = a - l d ; inactive gradients c_I(l) = alpha + l beta
        inact = np.flatnonzero(~in_set)
        HIA = H[np.ix_(inact, A)]
        alpha = f[inact] - HIA @ a
        beta = HIA @ d
        ceiling = lam * (1 - 1e-10)
        cand_enter = np.full(inact.size, -np.inf)
        wi = w[inact]
        with np.errstate(divide="ignore", invalid="ignore"):
            l1 = alpha / (wi - beta)
            l2 = -alpha / (wi + beta)
        for lc in (l1, l2):
            ok = np.isfinite(lc) & (lc >= 0) & (lc < ceiling)
            cand_enter = np.where(ok, np.maximum(cand_enter, lc), cand_enter)
        pa = ~unpen[A]
        with np.errstate(divide="ignore", invalid="ignore"):
            ld = np.where(pa & (d != 0), a / d, -np.inf)
        ok = np.isfinite(ld) & (ld >= 0) & (ld < ceiling)
        cand_drop = np.where(ok, ld, -np.inf)
        nxt = max(cand_enter.max(initial=-np.inf), cand_drop.max(initial=-np.inf))
        stop_at = max(lambda_min, 0.0)
        if nxt <= stop_at:
            nxt = stop_at
            done = True
        else:
            done = False
        theta_new = np.zeros(R)
        theta_new[A] = a - nxt * d
        seg_slope = np.zeros(R)
        seg_slope[A] = -d
        knots.append(nxt)
        coefs.append(theta_new)
        slopes.append(seg_slope)
        actives.append(A[pa].copy())
        n_events += 1
        if done:
            termination = USER_LAMBDA_MIN if lambda_min > 0 else GRADIENT_ZERO
            break
        tie = 1e-12 * scale
        for r in A[pa][cand_drop[pa] >= nxt - tie]:
            in_set[r] = False
            sign[r] = 0.0
            theta_new[r] = 0.0
        new = inact[cand_enter >= nxt - tie]
        c_new = alpha[cand_enter >= nxt - tie] + nxt * beta[cand_enter >= nxt - tie]
        in_set[new] = True
        sign[new] = np.sign(c_new)
        lam = nxt
        if n_events > 50 * R + 100:
            raise RuntimeError("homotopy did not terminate; input may be degenerate")
    return _finish(knots, coefs, slopes, actives, termination, loss, penalty, lam_max)


def _finish(knots, coefs, slopes, actives, termination, loss, penalty, lam_max):
    # built from lambda_max downwards: slopes[i] and actives[i] describe the
    # segment [knots[i], knots[i-1]], index 0 being the ray above lambda_max
    return SolutionPath(np.asarray(knots[::-1], dtype=float), np.asarray(coefs[::-1]),
                        np.asarray(slopes[::-1]), actives[::-1], termination,
                        loss.layout, penalty, {"lambda_max": lam_max})
