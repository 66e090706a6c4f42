"""Ground-truth graphs, interaction matrices and samplers for simulation studies.

Nodes are numbered from 0.  All randomness comes from ``make_rng(seed, stream)``.
"""
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from . import _kernels

GIBBS_CHUNK = 4096


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for ``(seed, stream)``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(stream),)))


def _rng(seed, stream=0):
    if isinstance(seed, np.random.Generator):
        return seed
    return make_rng(0 if seed is None else seed, stream)


# ---------------------------------------------------------------------------
# graphs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph on nodes ``0..m-1``."""

    m: int
    edges: tuple

    def __post_init__(self):
        norm = set()
        for j, k in self.edges:
            j, k = int(j), int(k)
            if j == k:
                raise ValueError(f"self-loop at node {j}")
            if not (0 <= j < self.m and 0 <= k < self.m):
                raise ValueError(f"edge ({j}, {k}) outside 0..{self.m - 1}")
            norm.add((min(j, k), max(j, k)))
        object.__setattr__(self, "edges", tuple(sorted(norm)))

    @classmethod
    def from_adjacency(cls, adj):
        adj = np.asarray(adj, dtype=bool)
        j, k = np.nonzero(np.triu(adj | adj.T, 1))
        return cls(adj.shape[0], tuple(zip(j.tolist(), k.tolist())))

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.m, self.m), dtype=bool)
        for j, k in self.edges:
            adj[j, k] = adj[k, j] = True
        return adj

    def degrees(self) -> np.ndarray:
        return self.adjacency().sum(axis=1)


def chain_graph(m: int) -> Graph:
    if m < 2:
        raise ValueError("a chain needs m >= 2")
    return Graph(m, tuple((j, j + 1) for j in range(m - 1)))


def lattice_graph(side: int, cols: Optional[int] = None) -> Graph:
    """4-nearest-neighbour grid with ``side`` rows and ``cols`` (default ``side``) columns."""
    cols = side if cols is None else cols
    if side < 1 or cols < 1 or side * cols < 2:
        raise ValueError("lattice needs at least two nodes")
    edges = []
    for r in range(side):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                edges.append((v, v + 1))
            if r + 1 < side:
                edges.append((v, v + cols))
    return Graph(side * cols, tuple(edges))


def star_graph(m: int, d: int) -> Graph:
    """Hub node 0 joined to nodes ``1..d``; the remaining nodes are isolated."""
    if not 1 <= d < m:
        raise ValueError("star needs 1 <= d < m")
    return Graph(m, tuple((0, k) for k in range(1, d + 1)))


def hub_lattice_graph(n_components: int, side: int, n_hubs: int = 3, hub_degree: int = 20,
                      seed=0) -> Graph:
    """Disjoint ``side x side`` lattices, each with ``n_hubs`` random nodes raised to ``hub_degree``."""
    size = side * side
    if hub_degree >= size:
        raise ValueError("hub degree must be smaller than the component size")
    if n_hubs > size:
        raise ValueError("more hubs than nodes in a component")
    rng = _rng(seed)
    base = lattice_graph(side)
    adj = np.zeros((n_components * size,) * 2, dtype=bool)
    for comp in range(n_components):
        off = comp * size
        for j, k in base.edges:
            adj[off + j, off + k] = adj[off + k, off + j] = True
        hubs = rng.choice(size, n_hubs, replace=False) + off
        for h in hubs:
            need = hub_degree - int(adj[h].sum())
            if need <= 0:
                continue
            pool = np.array([v for v in range(off, off + size) if v != h and not adj[h, v]])
            for v in rng.choice(pool, min(need, pool.size), replace=False):
                adj[h, v] = adj[v, h] = True
    return Graph.from_adjacency(adj)


def erdos_renyi_graph(m: int, p: float, seed=0) -> Graph:
    if not 0.0 <= p <= 1.0:
        raise ValueError("edge probability must lie in [0, 1]")
    rng = _rng(seed)
    upper = np.triu(rng.random((m, m)) < p, 1)
    return Graph.from_adjacency(upper)


def gen_graph(kind: str, seed=0, **params) -> Graph:
    """Build a graph by name.

    Parameters
    ----------
    kind : {"chain", "lattice2d", "star", "hub_lattice", "erdos_renyi"}
    seed : int
        Used by the random kinds only.
    **params
        ``m`` (chain, star, erdos_renyi), ``side`` (lattice2d, hub_lattice),
        ``d`` (star), ``p`` (erdos_renyi), ``n_components``, ``n_hubs``,
        ``hub_degree`` (hub_lattice).
    """
    try:
        if kind == "chain":
            return chain_graph(params["m"])
        if kind in ("lattice2d", "lattice"):
            return lattice_graph(params["side"], params.get("cols"))
        if kind == "star":
            return star_graph(params["m"], params["d"])
        if kind == "hub_lattice":
            return hub_lattice_graph(params.get("n_components", 1), params["side"],
                                     params.get("n_hubs", 3), params.get("hub_degree", 20), seed)
        if kind == "erdos_renyi":
            return erdos_renyi_graph(params["m"], params["p"], seed)
    except KeyError as exc:
        raise ValueError(f"graph kind {kind!r} needs parameter {exc.args[0]!r}") from None
    raise ValueError(f"unknown graph kind {kind!r}")


# ---------------------------------------------------------------------------
# true parameters
# ---------------------------------------------------------------------------


@dataclass
class TruthSpec:
    """A ground-truth model: graph, family and its parameters.

    Gaussian-type families fill ``K`` (and ``Sigma`` when known); the
    normal-conditionals family fills ``quartic`` (symmetric, zero diagonal,
    multiplying ``x_j^2 x_k^2`` for every ordered pair), ``quad`` and ``linear``.
    """

    graph: Graph
    family: str
    K: Optional[np.ndarray] = None
    Sigma: Optional[np.ndarray] = None
    quartic: Optional[np.ndarray] = None
    quad: Optional[np.ndarray] = None
    linear: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.graph.m

    def interaction(self) -> np.ndarray:
        return self.quartic if self.family == "normal-conditionals" else self.K

    def to_dict(self) -> dict:
        out = {"m": self.m, "edges": [list(e) for e in self.graph.edges], "family": self.family,
               "meta": self.meta}
        for name in ("K", "Sigma", "quartic", "quad", "linear"):
            val = getattr(self, name)
            if val is not None:
                out[name] = np.asarray(val).tolist()
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "TruthSpec":
        graph = Graph(int(obj["m"]), tuple(tuple(e) for e in obj.get("edges", [])))
        arrays = {k: np.asarray(obj[k], dtype=float) for k in ("K", "Sigma", "quartic", "quad", "linear")
                  if obj.get(k) is not None}
        return cls(graph, obj["family"], meta=obj.get("meta", {}), **arrays)


def precision_from_graph(graph: Graph, edge_value: float, diag: float = 1.0) -> TruthSpec:
    """``K`` with ``diag`` on the diagonal and ``edge_value`` on every edge."""
    K = diag * np.eye(graph.m)
    K[graph.adjacency()] = edge_value
    return TruthSpec(graph, "gaussian", K=K, Sigma=np.linalg.inv(K))


def chain_truth(m: int, edge_value: float = 0.3) -> TruthSpec:
    return precision_from_graph(chain_graph(m), edge_value)


def lattice_truth(side: int, edge_value: float = 0.2) -> TruthSpec:
    return precision_from_graph(lattice_graph(side), edge_value)


def star_truth(m: int, d: int, hub_cov: Optional[float] = None) -> TruthSpec:
    """Star-structured Gaussian specified through its covariance.

    Hub-leaf covariances equal ``rho = hub_cov`` (default ``2.5 / d``) and
    leaf-leaf covariances equal ``rho**2``, the values implied by conditional
    independence of the leaves given the hub; the inverse is then exactly a
    star with hub-leaf entries ``-rho / (1 - rho**2)``.
    """
    graph = star_graph(m, d)
    rho = 2.5 / d if hub_cov is None else hub_cov
    if d * rho * rho >= 1.0:
        raise ValueError("star covariance is not positive definite (need d * rho^2 < 1)")
    Sigma = np.eye(m)
    leaves = np.arange(1, d + 1)
    Sigma[np.ix_(leaves, leaves)] = rho * rho
    Sigma[leaves, leaves] = 1.0
    Sigma[0, leaves] = Sigma[leaves, 0] = rho
    K = np.linalg.inv(Sigma)
    K[~(graph.adjacency() | np.eye(m, dtype=bool))] = 0.0
    K = 0.5 * (K + K.T)
    return TruthSpec(graph, "gaussian", K=K, Sigma=Sigma, meta={"hub_cov": rho})


def precision_peng(graph: Graph, seed=0, max_retries: int = 20) -> TruthSpec:
    """Sparse partial-correlation construction turned into a correlation matrix.

    Each adjacency entry gets a U[0.5, 1] weight, rows are divided by 1.5 times
    their absolute sums, the result is symmetrised with unit diagonal, inverted
    and rescaled to unit diagonal.  ``K`` is the inverse of that correlation
    matrix and has the graph's zero pattern.
    """
    if graph.n_edges == 0:
        raise ValueError("graph has no edges")
    rng = _rng(seed)
    adj = graph.adjacency()
    for _ in range(max_retries):
        P = np.where(adj, rng.uniform(0.5, 1.0, size=adj.shape), 0.0)
        rows = np.abs(P).sum(axis=1)
        rows[rows == 0] = 1.0
        P = P / (1.5 * rows[:, None])
        P = 0.5 * (P + P.T)
        np.fill_diagonal(P, 1.0)
        if np.linalg.eigvalsh(P).min() <= 1e-10:
            continue
        C = np.linalg.inv(P)
        s = np.sqrt(np.diag(C))
        Sigma = C / np.outer(s, s)
        Sigma = 0.5 * (Sigma + Sigma.T)
        np.fill_diagonal(Sigma, 1.0)
        K = np.linalg.inv(Sigma)
        K[~(adj | np.eye(graph.m, dtype=bool))] = 0.0
        K = 0.5 * (K + K.T)
        return TruthSpec(graph, "gaussian", K=K, Sigma=Sigma)
    raise np.linalg.LinAlgError("could not draw a positive definite partial-correlation matrix")


def precision_block_uniform(num_blocks: int, block_size: int, seed=0, min_eig: float = 0.1,
                            p_zero: float = 0.2, graph: Optional[Graph] = None) -> TruthSpec:
    """Block-diagonal precision for the truncated-Gaussian design.

    Within each block every lower-triangular slot of ``graph`` (default: a
    complete graph per block) is 0 with probability ``p_zero`` and U[0.5, 1]
    otherwise.  A common diagonal value then sets the smallest eigenvalue to
    ``min_eig`` exactly.
    """
    m = num_blocks * block_size
    rng = _rng(seed)
    if graph is None:
        adj = np.zeros((m, m), dtype=bool)
        for b in range(num_blocks):
            sl = slice(b * block_size, (b + 1) * block_size)
            adj[sl, sl] = True
        np.fill_diagonal(adj, False)
    else:
        adj = graph.adjacency()
    low = np.tril(adj, -1)
    keep = rng.random((m, m)) >= p_zero
    vals = rng.uniform(0.5, 1.0, size=(m, m))
    off = np.where(low & keep, vals, 0.0)
    off = off + off.T
    # eigenvalues of off + t I are those of off shifted by t
    t = min_eig - np.linalg.eigvalsh(off).min()
    K = off + t * np.eye(m)
    return TruthSpec(Graph.from_adjacency(off != 0), "truncated-gaussian", K=K,
                     meta={"diag": float(t), "template": "block" if graph is None else "graph"})


def precision_discrete(m: int, target_min_eig: float = 0.6, seed=0, p_nonzero: float = 0.02) -> TruthSpec:
    """Random +-1 precision with degree-based diagonal, rescaled to a target smallest eigenvalue.

    Off-diagonal lower entries are -1, 0, 1 with probabilities
    ``p/2, 1-p, p/2``; the diagonal is ``1 + degree``.  The diagonal is then
    multiplied by the common factor placing the smallest eigenvalue at
    ``target_min_eig`` (when that is below the unscaled value).
    """
    if m < 2:
        raise ValueError("need m >= 2")
    rng = _rng(seed)
    u = rng.random((m, m))
    half = p_nonzero / 2.0
    low = np.where(u < half, -1.0, np.where(u < p_nonzero, 1.0, 0.0))
    off = np.tril(low, -1)
    off = off + off.T
    diag = 1.0 + np.count_nonzero(off, axis=1)
    K0 = off + np.diag(diag)
    lam0 = np.linalg.eigvalsh(K0).min()

    def gap(s):
        return np.linalg.eigvalsh(off + np.diag(s * diag)).min() - target_min_eig

    scale = 1.0
    if lam0 > target_min_eig:
        # off has zero trace, so its smallest eigenvalue is <= 0 < target
        scale = brentq(gap, 0.0, 1.0, xtol=1e-14)
    K = off + np.diag(scale * diag)
    return TruthSpec(Graph.from_adjacency(off != 0), "gaussian", K=K, Sigma=np.linalg.inv(K),
                     meta={"diag_scale": float(scale), "unscaled_min_eig": float(lam0)})


def normal_conditionals_truth(graph: Graph, interaction: float = -1.0 / 25, quad: float = -1.0,
                              linear: float = 8.0 / 50) -> TruthSpec:
    """Normal-conditionals model with quartic interaction matrix ``interaction * adjacency``.

    Defaults give interactions ``-1/25``, ``x_j^2`` coefficients ``-1`` and
    ``x_j`` coefficients ``8/50``.
    """
    adj = graph.adjacency().astype(float)
    return TruthSpec(graph, "normal-conditionals", quartic=interaction * adj,
                     quad=np.full(graph.m, float(quad)), linear=np.full(graph.m, float(linear)))


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------


def _check_pd(M, name):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square")
    if not np.allclose(M, M.T, atol=1e-10):
        raise ValueError(f"{name} must be symmetric")
    try:
        return np.linalg.cholesky(0.5 * (M + M.T))
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"{name} is not positive definite") from exc


def sample_mvn(Sigma, n: int, seed=0, stream: int = 0) -> np.ndarray:
    """``n`` zero-mean normal rows with covariance ``Sigma``."""
    Lc = _check_pd(Sigma, "Sigma")
    z = _rng(seed, stream).standard_normal((n, Lc.shape[0]))
    return z @ Lc.T


def sample_mvt(Sigma, df: float, n: int, seed=0, stream: int = 0) -> np.ndarray:
    """Multivariate t rows with scatter matrix ``Sigma`` (covariance ``df/(df-2) Sigma``)."""
    if df < 1:
        raise ValueError("degrees of freedom must be >= 1")
    Lc = _check_pd(Sigma, "Sigma")
    rng = _rng(seed, stream)
    z = rng.standard_normal((n, Lc.shape[0])) @ Lc.T
    w = rng.chisquare(df, size=n) / df
    return z / np.sqrt(w)[:, None]


def contaminate(x, fraction: float = 0.02, noise_variance: float = 0.2, seed=0, stream: int = 0):
    """Replace ``ceil(fraction * n)`` random rows by i.i.d. ``N(0, noise_variance)`` entries."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    x = np.array(x, dtype=float, copy=True)
    n, m = x.shape
    k = int(math.ceil(fraction * n - 1e-12))
    if k == 0:
        return x
    rng = _rng(seed, stream)
    rows = rng.choice(n, k, replace=False)
    x[rows] = rng.normal(0.0, math.sqrt(noise_variance), size=(k, m))
    return x


def _run_gibbs(step, m, n, burnin, thin, draw):
    if n < 1 or burnin < 0 or thin < 1:
        raise ValueError("need n >= 1, burnin >= 0, thin >= 1")
    total = burnin + n * thin
    out = np.empty((n, m))
    t = 0
    while t < total:
        size = min(GIBBS_CHUNK, total - t)
        step(draw(size), t, out)
        t += size
    return out


def sample_truncated_mvn_gibbs(K, n: int, burnin: int = 100, thin: int = 10, seed=0,
                               stream: int = 0, x0=None) -> np.ndarray:
    """Gibbs sampler for ``N(0, K^-1)`` restricted to the non-negative orthant.

    Parameters
    ----------
    K : array_like, shape (m, m)
        Positive definite precision matrix.
    n : int
        Number of kept draws.
    burnin, thin : int
        Sweeps discarded at the start; keep one sweep in ``thin`` afterwards.
    seed, stream : int
    x0 : array_like, optional
        Starting point (default all ones).

    Returns
    -------
    ndarray, shape (n, m)
    """
    K = np.ascontiguousarray(K, dtype=float)
    _check_pd(K, "K")
    m = K.shape[0]
    rng = _rng(seed, stream)
    x = np.ones(m) if x0 is None else np.array(x0, dtype=float)

    def step(rand, t0, out):
        _kernels.gibbs_truncated_sweeps(K, x, rand, t0, burnin, thin, out)

    return _run_gibbs(step, m, n, burnin, thin, lambda s: rng.random((s, m)))


class NonNormalizableError(ValueError):
    def __init__(self, j):
        super().__init__(f"full conditional of variable {j} is not normalisable "
                         f"(non-negative coefficient of x_{j}^2)")
        self.index = j


def sample_normal_conditionals_gibbs(quartic, quad, linear, n: int, burnin: int = 100, thin: int = 10,
                                     seed=0, stream: int = 0, x0=None) -> np.ndarray:
    """Gibbs sampler for ``exp(sum_{j != k} Q_jk x_j^2 x_k^2 + sum_j a_j x_j^2 + b_j x_j)``.

    Parameters
    ----------
    quartic : array_like, shape (m, m)
        Symmetric ``Q`` with zero diagonal (the sum runs over ordered pairs).
    quad, linear : array_like, shape (m,)
        Coefficients ``a`` of ``x_j^2`` and ``b`` of ``x_j``.
    n, burnin, thin, seed, stream, x0
        As in :func:`sample_truncated_mvn_gibbs`; the default start is 0.

    Raises
    ------
    NonNormalizableError
        If a visited state makes some conditional's ``x_j^2`` coefficient non-negative.
    """
    Q = np.ascontiguousarray(quartic, dtype=float)
    m = Q.shape[0]
    if Q.shape != (m, m) or not np.allclose(Q, Q.T):
        raise ValueError("quartic interactions must be a symmetric matrix")
    if np.any(np.diag(Q) != 0):
        raise ValueError("quartic interactions must have zero diagonal")
    b2 = np.ascontiguousarray(np.broadcast_to(np.asarray(quad, dtype=float), (m,)))
    b = np.ascontiguousarray(np.broadcast_to(np.asarray(linear, dtype=float), (m,)))
    rng = _rng(seed, stream)
    x = np.zeros(m) if x0 is None else np.array(x0, dtype=float)

    def step(rand, t0, out):
        bad = _kernels.gibbs_normal_conditionals_sweeps(Q, b2, b, x, rand, t0, burnin, thin, out)
        if bad >= 0:
            raise NonNormalizableError(int(bad))

    return _run_gibbs(step, m, n, burnin, thin, lambda s: rng.standard_normal((s, m)))


def sample_truth(truth: TruthSpec, n: int, seed=0, stream: int = 0, **kwargs) -> np.ndarray:
    """Draw ``n`` rows from a :class:`TruthSpec` with the sampler matching its family."""
    if truth.family == "gaussian":
        Sigma = truth.Sigma if truth.Sigma is not None else np.linalg.inv(truth.K)
        return sample_mvn(Sigma, n, seed, stream)
    if truth.family == "truncated-gaussian":
        return sample_truncated_mvn_gibbs(truth.K, n, seed=seed, stream=stream, **kwargs)
    if truth.family == "normal-conditionals":
        return sample_normal_conditionals_gibbs(truth.quartic, truth.quad, truth.linear, n,
                                                seed=seed, stream=stream, **kwargs)
    raise ValueError(f"cannot sample family {truth.family!r}")
