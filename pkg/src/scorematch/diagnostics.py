"""Population-level quantities: incoherence, norm constants and support comparisons."""
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import block_diag

from ._linalg import RankError
from .losses import FamilySpec, QuadraticLoss, build_loss, population_gaussian_loss
from .simulate import TruthSpec, sample_truth

OFFDIAG = "offdiag"
WITH_DIAG = "with-diag"


def meinshausen_sigma(rho: float) -> np.ndarray:
    """Four-variable covariance whose inverse lacks the (0, 3) interaction.

    Unit diagonal, ``Sigma[1, 2] = 0``, ``Sigma[0, 3] = 2 rho^2`` and ``rho``
    elsewhere.  Positive definite for ``0 <= rho < 1/sqrt(2)``.
    """
    if not 0.0 <= rho < 1.0 / np.sqrt(2.0):
        raise ValueError("rho must lie in [0, 1/sqrt(2))")
    S = np.full((4, 4), float(rho))
    np.fill_diagonal(S, 1.0)
    S[1, 2] = S[2, 1] = 0.0
    S[0, 3] = S[3, 0] = 2.0 * rho * rho
    return S


@dataclass
class PopulationGamma:
    """Expected loss (exact or Monte Carlo) with entrywise standard errors of the blocks."""

    loss: QuadraticLoss
    block_se: Optional[np.ndarray] = None
    mc_samples: Optional[int] = None

    def dense(self) -> np.ndarray:
        return self.loss.gamma_dense()


def population_gamma(family, truth: TruthSpec, mc_samples: Optional[int] = None, seed=0) -> PopulationGamma:
    """Population Hessian of the score-matching loss.

    Parameters
    ----------
    family : FamilySpec or str
    truth : TruthSpec
    mc_samples : int, optional
        Number of draws for Monte Carlo estimation; required unless the
        family is the centred Gaussian (exact, ``Gamma* = I (x) Sigma*``).
        When given for the Gaussian family the Monte Carlo estimate is
        returned instead of the exact value.
    seed : int

    Returns
    -------
    PopulationGamma
    """
    if not isinstance(family, FamilySpec):
        family = FamilySpec(family)
    exact = family.kind == "gaussian-centered" and not family.nonnegative
    if exact and mc_samples is None:
        Sigma = truth.Sigma if truth.Sigma is not None else np.linalg.inv(truth.K)
        return PopulationGamma(population_gaussian_loss(Sigma))
    if mc_samples is None:
        raise ValueError(f"family {family.kind} needs mc_samples for a Monte Carlo estimate")
    X = sample_truth(truth, int(mc_samples), seed=seed)
    loss = build_loss(family, X)
    se = _block_standard_errors(family, X, loss)
    return PopulationGamma(loss, se, int(mc_samples))


def _block_standard_errors(family, X, loss):
    n, m = X.shape
    d = loss.layout.block_dim
    se = np.empty((m, d, d))
    if loss.layout.block_dim != m:
        return None
    for j in range(m):
        wt = X[:, j] ** 2 if family.nonnegative else np.ones(n)
        terms = wt[:, None, None] * X[:, :, None] * X[:, None, :]
        se[j] = terms.std(axis=0, ddof=1) / np.sqrt(n)
    return se


def _dense(gamma_star) -> np.ndarray:
    if isinstance(gamma_star, PopulationGamma):
        gamma_star = gamma_star.loss
    if isinstance(gamma_star, QuadraticLoss):
        return block_diag(*gamma_star.blocks)
    return np.asarray(gamma_star, dtype=float)


def support_indices(theta_star, include_diagonal: bool = False, m: Optional[int] = None,
                    n_pair_sets: int = 1) -> np.ndarray:
    """Positions (in the full parameter vector) of the nonzero interaction entries.

    ``theta_star`` may be an ``m x m`` matrix (Gaussian layout, column-major
    ``vec``) or a full parameter vector.  Only entries belonging to the
    interaction matrices count; diagonal entries are included on request.
    """
    arr = np.asarray(theta_star, dtype=float)
    if arr.ndim == 2:
        m = arr.shape[0]
        vec = arr.T.reshape(-1)
        d = m
    else:
        if m is None:
            m = int(round(np.sqrt(arr.size)))
        vec = arr
        d = arr.size // m
    blocks = vec.reshape(m, d)
    mask = np.zeros((m, d), dtype=bool)
    for a in range(n_pair_sets):
        part = blocks[:, a * m:(a + 1) * m] != 0
        if not include_diagonal:
            part = part & ~np.eye(m, dtype=bool)
        mask[:, a * m:(a + 1) * m] = part
    return np.flatnonzero(mask.reshape(-1))


def _ss_inverse(G, S):
    G_SS = G[np.ix_(S, S)]
    try:
        inv = np.linalg.inv(G_SS)
    except np.linalg.LinAlgError as exc:
        raise RankError("Gamma*_SS is singular") from exc
    if not np.all(np.isfinite(inv)) or np.linalg.cond(G_SS) > 1e14:
        raise RankError("Gamma*_SS is numerically singular")
    return inv


def irrepresentability_alpha(gamma_star, support) -> float:
    """``1 - || Gamma*_{S^c S} (Gamma*_{SS})^{-1} ||_inf`` (max absolute row sum).

    Parameters
    ----------
    gamma_star : ndarray, QuadraticLoss or PopulationGamma
        Population Hessian over the full parameter vector.
    support : array_like of int or boolean mask
        Coordinates in ``S``.

    Returns
    -------
    float
        Positive values mean the incoherence condition holds.
    """
    G = _dense(gamma_star)
    S = np.asarray(support)
    if S.dtype == bool:
        S = np.flatnonzero(S)
    S = np.unique(S.astype(np.int64))
    Sc = np.setdiff1d(np.arange(G.shape[0]), S)
    if S.size == 0 or Sc.size == 0:
        return 1.0
    M = G[np.ix_(Sc, S)] @ _ss_inverse(G, S)
    return float(1.0 - np.abs(M).sum(axis=1).max())


def meinshausen_alpha(rho: float, include_diagonal: bool = False) -> float:
    """Incoherence of the four-variable example at correlation ``rho``."""
    Sigma = meinshausen_sigma(rho)
    K = np.linalg.inv(Sigma)
    K[np.abs(K) < 1e-12] = 0.0
    G = np.kron(np.eye(4), Sigma)
    return irrepresentability_alpha(G, support_indices(K, include_diagonal))


def meinshausen_threshold(include_diagonal: bool = False, tol: float = 1e-4,
                          lo: float = 0.05, hi: float = 0.7) -> float:
    """Correlation at which the incoherence of the four-variable example changes sign (bisection)."""
    f_lo = meinshausen_alpha(lo, include_diagonal)
    f_hi = meinshausen_alpha(hi, include_diagonal)
    if f_lo <= 0 or f_hi > 0:
        raise ValueError("incoherence does not change sign on the bracket")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if meinshausen_alpha(mid, include_diagonal) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass
class TheoryReport:
    alpha: float
    c_gamma_star: float
    c_theta_star: float
    model_complexity: Optional[float]
    support: list
    convention: str = OFFDIAG
    variants: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _constants(G, theta_star, S, sigma_max):
    alpha = irrepresentability_alpha(G, S)
    # an empty support has an empty inverse block
    c_gamma = float(np.abs(_ss_inverse(G, S)).sum(axis=1).max()) if len(S) else 0.0
    c_theta = float(np.abs(np.asarray(theta_star, dtype=float)).sum(axis=1).max())
    complexity = None
    if sigma_max is not None and alpha > 0:
        complexity = 4.0 / alpha * c_gamma * sigma_max
    return alpha, c_gamma, c_theta, complexity


def theory_constants(gamma_star, theta_star, support=None, Sigma=None,
                     convention: str = OFFDIAG) -> TheoryReport:
    """Incoherence, ``||(Gamma*_SS)^{-1}||_inf``, ``||Theta*||_inf`` and model complexity.

    Parameters
    ----------
    gamma_star : ndarray, QuadraticLoss or PopulationGamma
    theta_star : ndarray, shape (m, m)
        True interaction matrix.
    support : array_like of int, optional
        Coordinates of ``S``; derived from ``theta_star`` when omitted, with
        or without the diagonal according to ``convention``.
    Sigma : ndarray, optional
        True covariance; enables the model complexity
        ``(4 / alpha) c_gamma max_j Sigma_jj``.
    convention : {"offdiag", "with-diag"}

    Returns
    -------
    TheoryReport
        ``variants`` holds the constants under both support conventions.
    """
    if convention not in (OFFDIAG, WITH_DIAG):
        raise ValueError(f"unknown convention {convention!r}")
    G = _dense(gamma_star)
    theta_star = np.asarray(theta_star, dtype=float)
    sigma_max = None if Sigma is None else float(np.max(np.diag(Sigma)))
    variants = {}
    for conv in (OFFDIAG, WITH_DIAG):
        S = support_indices(theta_star, include_diagonal=(conv == WITH_DIAG))
        try:
            a, cg, ct, cc = _constants(G, theta_star, S, sigma_max)
            variants[conv] = {"alpha": a, "c_gamma_star": cg, "c_theta_star": ct, "model_complexity": cc}
        except RankError as exc:
            variants[conv] = {"error": str(exc)}
    if support is None:
        S = support_indices(theta_star, include_diagonal=(convention == WITH_DIAG))
    else:
        S = np.asarray(support, dtype=np.int64)
    a, cg, ct, cc = _constants(G, theta_star, S, sigma_max)
    return TheoryReport(a, cg, ct, cc, S.tolist(), convention, variants)


def signed_support_match(estimate, truth, zero_tol: float = 1e-6) -> bool:
    """Whether off-diagonal supports coincide and signs agree on them.

    ``estimate`` entries count as nonzero when larger than ``zero_tol`` in
    magnitude; ``truth`` is compared against exact zero.
    """
    est = np.asarray(estimate, dtype=float)
    tru = np.asarray(truth, dtype=float)
    if est.shape != tru.shape:
        raise ValueError("estimate and truth have different shapes")
    off = ~np.eye(est.shape[0], dtype=bool) if est.ndim == 2 else np.ones(est.shape, dtype=bool)
    est_on = (np.abs(est) > zero_tol) & off
    tru_on = (tru != 0) & off
    if not np.array_equal(est_on, tru_on):
        return False
    return bool(np.all(np.sign(est[tru_on]) == np.sign(tru[tru_on])))
