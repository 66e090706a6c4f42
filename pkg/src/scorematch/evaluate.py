"""Graph-recovery scoring and the sample-size scaling experiments."""
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .cd import solve_cd, solve_cd_gaussian
from .data import as_array, center, sample_covariance
from .diagnostics import signed_support_match
from .losses import PAIR, FamilySpec, build_gaussian_loss, build_loss
from .path import SolutionPath, solve_path
from .penalty import default_penalty, lambda_max
from .simulate import (Graph, TruthSpec, chain_truth, lattice_truth, make_rng, precision_from_graph,
                       chain_graph, sample_mvn, sample_truncated_mvn_gibbs, star_truth)
from .tuning import fit_grid, lambda_grid


class EvaluationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# ROC
# ---------------------------------------------------------------------------


@dataclass
class RocCurve:
    """ROC points ordered by decreasing penalty level."""

    fpr: np.ndarray
    tpr: np.ndarray
    lambdas: np.ndarray
    auc: float

    @property
    def points(self) -> np.ndarray:
        return np.column_stack([self.fpr, self.tpr])


def _pair_supports_from_coords(layout, coord_sets):
    rc = layout.reduced
    m = layout.m
    out = []
    for coords in coord_sets:
        coords = np.asarray(coords, dtype=np.int64)
        coords = coords[rc.kind[coords] == PAIR] if coords.size else coords
        adj = np.zeros((m, m), dtype=bool)
        adj[rc.row[coords], rc.col[coords]] = True
        out.append(adj)
    return out


def roc_auc(fpr, tpr) -> float:
    """Area under the step-through points, extended horizontally to FPR = 1."""
    order = np.lexsort((tpr, fpr))
    x = np.concatenate([[0.0], np.asarray(fpr, dtype=float)[order]])
    y = np.concatenate([[0.0], np.asarray(tpr, dtype=float)[order]])
    area = float(np.sum(np.diff(x) * 0.5 * (y[1:] + y[:-1])))
    return area + (1.0 - x[-1]) * y[-1]


def roc_from_supports(supports, lambdas, truth: Graph) -> RocCurve:
    """ROC curve from a sequence of ``m x m`` boolean supports."""
    tru = np.triu(truth.adjacency(), 1)
    n_true = int(tru.sum())
    n_pairs = truth.m * (truth.m - 1) // 2
    if n_true == 0:
        raise EvaluationError("truth graph has no edges: true-positive rate undefined; use FPR only")
    n_false = n_pairs - n_true
    fpr, tpr = [], []
    for adj in supports:
        est = np.triu(adj | adj.T, 1)
        tp = int(np.sum(est & tru))
        fp = int(np.sum(est & ~tru))
        tpr.append(tp / n_true)
        fpr.append(fp / n_false if n_false else 0.0)
    fpr = np.asarray(fpr)
    tpr = np.asarray(tpr)
    return RocCurve(fpr, tpr, np.asarray(lambdas, dtype=float), roc_auc(fpr, tpr))


def roc_points(path: SolutionPath, truth: Graph) -> RocCurve:
    """ROC curve with one point per path segment, from the empty model downwards.

    Parameters
    ----------
    path : SolutionPath
    truth : Graph

    Returns
    -------
    RocCurve
    """
    if path.layout.m != truth.m:
        raise EvaluationError("path and truth have different numbers of nodes")
    sets = path.active_sets[::-1]
    lams = path.knots[::-1]
    return roc_from_supports(_pair_supports_from_coords(path.layout, sets), lams, truth)


def roc_from_estimates(estimates, truth: Graph) -> RocCurve:
    """ROC curve over a grid of estimates (any order; sorted by decreasing penalty)."""
    ests = sorted(estimates, key=lambda e: -e.lam)
    supports = [e.adjacency() for e in ests]
    return roc_from_supports(supports, [e.lam for e in ests], truth)


def degree_distribution(graph: Graph) -> dict:
    """Number of nodes with each degree."""
    deg, count = np.unique(graph.degrees(), return_counts=True)
    return {int(d): int(c) for d, c in zip(deg, count)}


# ---------------------------------------------------------------------------
# family comparison
# ---------------------------------------------------------------------------


def family_roc(kind: str, X, truth: Graph, grid_size: int = 60) -> RocCurve:
    """ROC curve of one estimator on data ``X`` (see :func:`auc_comparison` for the kinds)."""
    if kind == "gaussian":
        return roc_points(solve_path(build_gaussian_loss(sample_covariance(X))), truth)
    if kind == "gaussian-centered":
        return roc_points(solve_path(build_gaussian_loss(sample_covariance(center(X)))), truth)
    if kind == "gaussian-shifted-nonneg":
        Xs = X - X.min(axis=0)
        return roc_points(solve_path(build_loss("truncated-gaussian", Xs)), truth)
    if kind == "truncated-gaussian":
        return roc_points(solve_path(build_loss("truncated-gaussian", X)), truth)
    if kind == "normal-conditionals":
        loss = build_loss("normal-conditionals", X)
        pen = default_penalty(loss.layout, "group")
        lams = np.append(lambda_grid(lambda_max(loss, pen), grid_size, 1e-4), 0.0)
        ests = fit_grid(loss, pen, lams, tol=1e-7)
        return roc_from_estimates(ests, truth)
    raise EvaluationError(f"unknown family {kind!r} for comparison")


def auc_comparison(data, truth: Graph, families: Sequence[str], grid_size: int = 60) -> dict:
    """AUC of each estimator's ROC curve on the same data.

    ``"gaussian"`` fits the Gaussian loss to the raw data (no centring, as in
    :func:`build_loss`); ``"gaussian-centered"`` centres the columns first;
    ``"truncated-gaussian"`` fits the non-negative loss (data must be
    non-negative); ``"gaussian-shifted-nonneg"`` fits the non-negative loss
    after shifting each column to start at zero; ``"normal-conditionals"``
    fits the group-penalised loss on a grid ending at ``lambda = 0``.
    """
    X = as_array(data)
    out = {}
    for fam in families:
        if fam == "truncated-gaussian" and np.any(X < 0):
            raise EvaluationError("truncated-gaussian needs non-negative data")
        out[fam] = family_roc(fam, X, truth, grid_size).auc
    return out


# ---------------------------------------------------------------------------
# scaling experiments
# ---------------------------------------------------------------------------

DESIGNS = ("vary_m_chain", "vary_m_lattice", "vary_d_star", "vary_complexity_chain",
           "nonneg_chain_scaling")


@dataclass
class ExperimentConfig:
    """One sample-size scaling experiment.

    ``values`` are the grid points (``m`` for chains, lattice side for
    lattices, ``d`` for stars, edge strength for the complexity design).
    Sample sizes are ``round(t * scale(value))`` for ``t`` in ``n_multiples``
    where ``scale`` is the design's rescaling (``log m``, ``d^2``,
    ``(log m)^a``, or 1), unless ``n_values`` lists them per grid point.
    The penalty level is ``c * sqrt((log m)^a / n)``.
    """

    design: str
    values: list
    n_multiples: Optional[list] = None
    n_values: Optional[dict] = None
    trials: int = 50
    c: float = 1.0
    rate_exponent: float = 1.0
    seed: int = 0
    m: int = 200
    edge_value: Optional[float] = None
    zero_tol: float = 1e-6
    burnin: int = 100
    thin: int = 10

    def __post_init__(self):
        if self.design not in DESIGNS:
            raise ValueError(f"unknown design {self.design!r}; choose from {DESIGNS}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.values:
            raise ValueError("values must be nonempty")
        if self.n_multiples is None and self.n_values is None:
            raise ValueError("need n_multiples or n_values")

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        missing = [k for k in ("design", "values") if k not in obj]
        if missing:
            raise KeyError(missing[0])
        return cls(**{k: v for k, v in obj.items() if k in known})

    def to_dict(self) -> dict:
        return asdict(self)

    # design-specific pieces ------------------------------------------------

    def n_nodes(self, value) -> int:
        if self.design in ("vary_m_chain", "nonneg_chain_scaling"):
            return int(value)
        if self.design == "vary_m_lattice":
            return int(value) ** 2
        if self.design == "vary_d_star":
            return int(self.m)
        return int(self.m)

    def degree(self, value) -> int:
        if self.design == "vary_d_star":
            return int(value)
        return 4 if self.design == "vary_m_lattice" else 2

    def scale(self, value) -> float:
        """Factor by which ``n`` is divided on the rescaled axis."""
        m = self.n_nodes(value)
        if self.design == "vary_d_star":
            return float(value) ** 2
        if self.design == "vary_complexity_chain":
            return 1.0
        return math.log(m) ** self.rate_exponent

    def sample_sizes(self, value) -> list:
        if self.n_values is not None:
            key = str(value) if str(value) in self.n_values else value
            return sorted(int(v) for v in self.n_values[key])
        return sorted({max(2, int(round(t * self.scale(value)))) for t in self.n_multiples})

    def truth(self, value) -> TruthSpec:
        if self.design == "vary_m_chain":
            return chain_truth(int(value), 0.3 if self.edge_value is None else self.edge_value)
        if self.design == "vary_m_lattice":
            return lattice_truth(int(value), 0.2 if self.edge_value is None else self.edge_value)
        if self.design == "vary_d_star":
            return star_truth(int(self.m), int(value))
        if self.design == "vary_complexity_chain":
            return chain_truth(int(self.m), float(value))
        K = precision_from_graph(chain_graph(int(value)), 0.3 if self.edge_value is None else self.edge_value).K
        return TruthSpec(chain_graph(int(value)), "truncated-gaussian", K=K)

    @property
    def nonnegative(self) -> bool:
        return self.design == "nonneg_chain_scaling"

    def lam(self, n, m) -> float:
        return self.c * math.sqrt(math.log(m) ** self.rate_exponent / n)


def _worker_count(threads):
    if threads is None:
        threads = int(os.environ.get("SCOREMATCH_THREADS", "1") or 1)
    return max(1, int(threads))


def _run_trial(config: ExperimentConfig, g_idx: int, value, trial: int, c: Optional[float] = None):
    """Success indicator for every sample size of one trial (nested samples)."""
    truth = config.truth(value)
    m = truth.m
    sizes = config.sample_sizes(value)
    n_max = sizes[-1]
    stream = g_idx * 1_000_003 + trial
    if config.nonnegative:
        X = sample_truncated_mvn_gibbs(truth.K, n_max, config.burnin, config.thin,
                                       seed=config.seed, stream=stream)
    else:
        X = sample_mvn(truth.Sigma, n_max, seed=config.seed, stream=stream)
    c = config.c if c is None else c
    out = []
    for n in sizes:
        Xn = X[:n]
        lam = c * math.sqrt(math.log(m) ** config.rate_exponent / n)
        if config.nonnegative:
            est = solve_cd(build_loss("truncated-gaussian", Xn), None, lam, tol=1e-8)
            Khat = est.matrix()
        else:
            est = solve_cd_gaussian(Xn.T @ Xn / n, lam, tol=1e-8)
            Khat = est.matrix()
        out.append(bool(signed_support_match(Khat, truth.K, config.zero_tol)))
    return out


def recovery_probability(config: ExperimentConfig, threads: Optional[int] = None,
                         c: Optional[float] = None, trials: Optional[int] = None) -> list:
    """Fraction of trials recovering the signed support, per grid value and sample size.

    Each trial draws one sample of the largest size and uses its leading rows
    for the smaller sizes.  Trial ``t`` of grid value ``g`` uses RNG stream
    ``g * 1000003 + t`` under ``config.seed``, so results do not depend on
    scheduling or thread count.

    Returns
    -------
    list of dict
        Rows with keys ``value, m, n, rescaled_n, success, trials, c``.
    """
    trials = config.trials if trials is None else trials
    jobs = [(g, v, t) for g, v in enumerate(config.values) for t in range(trials)]
    workers = _worker_count(threads)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(lambda j: _run_trial(config, j[0], j[1], j[2], c), jobs))
    else:
        results = [_run_trial(config, g, v, t, c) for g, v, t in jobs]
    rows = []
    for g, v in enumerate(config.values):
        sizes = config.sample_sizes(v)
        hits = np.array([results[i] for i, j in enumerate(jobs) if j[0] == g], dtype=float)
        for s, n in enumerate(sizes):
            rows.append({"value": v, "m": config.n_nodes(v), "n": n,
                         "rescaled_n": n / config.scale(v), "success": float(hits[:, s].mean()),
                         "trials": trials, "c": config.c if c is None else c})
    return rows


def _curves(table, rescale):
    curves = {}
    for row in table:
        x = rescale(row["n"], row["m"], row.get("d", row["value"]))
        curves.setdefault(row["value"], []).append((x, row["success"]))
    return {k: np.asarray(sorted(v)) for k, v in curves.items()}


def rescale_alignment(table, rescale: Callable, n_grid: int = 200) -> float:
    """Largest vertical gap between success curves on a rescaled sample-size axis.

    Each curve is linearly interpolated in ``log(rescaled n)`` and compared
    on the range covered by every curve.

    Parameters
    ----------
    table : list of dict
        Output of :func:`recovery_probability`.
    rescale : callable ``(n, m, value) -> float``

    Returns
    -------
    float
        Max over pairs of curves of their sup-distance.
    """
    curves = _curves(table, rescale)
    if len(curves) < 2:
        raise EvaluationError("need at least two curves to compare")
    lo = max(np.log(c[0, 0]) for c in curves.values())
    hi = min(np.log(c[-1, 0]) for c in curves.values())
    if not lo < hi:
        raise EvaluationError("rescaled curves do not overlap")
    grid = np.linspace(lo, hi, n_grid)
    vals = np.array([np.interp(grid, np.log(c[:, 0]), c[:, 1]) for c in curves.values()])
    return float((vals.max(axis=0) - vals.min(axis=0)).max())


def crossing_n(table, value, level: float = 0.5) -> float:
    """Smallest (interpolated) sample size at which the success curve reaches ``level``."""
    rows = sorted((r["n"], r["success"]) for r in table if r["value"] == value)
    ns = np.array([r[0] for r in rows], dtype=float)
    ps = np.array([r[1] for r in rows])
    above = np.flatnonzero(ps >= level)
    if above.size == 0:
        return float("inf")
    i = above[0]
    if i == 0:
        return float(ns[0])
    x0, x1 = np.log(ns[i - 1]), np.log(ns[i])
    y0, y1 = ps[i - 1], ps[i]
    return float(np.exp(x0 + (level - y0) * (x1 - x0) / (y1 - y0)))


def calibrate_rate_constant(config: ExperimentConfig, c_grid: Sequence[float], pilot_trials: int = 10,
                            threads: Optional[int] = None, top_level: float = 0.9) -> dict:
    """Choose the penalty constant from a pilot run.

    Constants whose success rate reaches ``top_level`` at the largest sample
    size of every curve are preferred; among those (or among all, if none
    qualifies) the highest mean success wins, ties going to the smaller
    constant.  The pilot uses its own seed (``config.seed + 7919``).

    Returns
    -------
    dict
        ``{"c": best, "scores": {c: mean success}, "top": {c: min success at largest n}}``.
    """
    pilot = ExperimentConfig(**{**config.to_dict(), "seed": config.seed + 7919, "trials": pilot_trials})
    scores, tops = {}, {}
    for c in c_grid:
        rows = recovery_probability(pilot, threads, c=c)
        scores[float(c)] = float(np.mean([r["success"] for r in rows]))
        last = {}
        for r in rows:
            if r["n"] >= last.get(r["value"], (0, 0))[0]:
                last[r["value"]] = (r["n"], r["success"])
        tops[float(c)] = float(min(v[1] for v in last.values()))
    best = max(scores, key=lambda k: (tops[k] >= top_level, scores[k], -k))
    return {"c": best, "scores": scores, "top": tops}
