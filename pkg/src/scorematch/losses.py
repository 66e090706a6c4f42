"""Empirical score-matching losses as block-diagonal quadratic forms.

A pairwise model on ``m`` variables has ``A`` symmetric interaction matrices
(one per pairwise statistic) and ``L`` per-node singleton parameters.  The
gradient of the log-density in coordinate ``j`` is linear in the ``d = A*m + L``
parameters that touch node ``j``, so the loss splits into ``m`` independent
``d x d`` blocks.  Block ``j`` holds, in order, column ``j`` of each interaction
matrix followed by the ``L`` singleton parameters of node ``j``; the full
parameter vector concatenates the blocks (column-major ``vec`` for ``A=1, L=0``).

Every loss uses the convention ``loss(theta) = 0.5 theta' Gamma theta - g' theta + c``.
"""
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from .data import DomainError, as_array, sample_covariance

REAL_LINE = "real-line"
NONNEG = "nonnegative-orthant"
DOMAINS = (REAL_LINE, NONNEG)

DIAG, PAIR, SINGLE = 0, 1, 2


class ContractError(ValueError):
    """Callback output is inconsistent with the declared parameter layout."""


@dataclass(frozen=True)
class Layout:
    """Parameter layout of a pairwise model.

    Parameters
    ----------
    m : int
        Number of variables.
    pair_sets : sequence of str
        Names of the symmetric interaction matrices.
    singles : sequence of str
        Names of per-node parameters.
    zero_diag : sequence of bool
        For each interaction matrix, whether its diagonal is structurally zero.
    """

    m: int
    pair_sets: tuple = ("K",)
    singles: tuple = ()
    zero_diag: tuple = (False,)

    def __post_init__(self):
        object.__setattr__(self, "pair_sets", tuple(self.pair_sets))
        object.__setattr__(self, "singles", tuple(self.singles))
        object.__setattr__(self, "zero_diag", tuple(bool(z) for z in self.zero_diag))
        if len(self.zero_diag) != len(self.pair_sets):
            raise ValueError("zero_diag needs one flag per interaction matrix")
        if self.m < 1:
            raise ValueError("layout needs at least one variable")
        object.__setattr__(self, "_reduced", _reduce(self))

    @property
    def n_pair_sets(self) -> int:
        return len(self.pair_sets)

    @property
    def n_singles(self) -> int:
        return len(self.singles)

    @property
    def block_dim(self) -> int:
        return self.n_pair_sets * self.m + self.n_singles

    @property
    def dim(self) -> int:
        return self.m * self.block_dim

    # -- reduced (free-parameter) coordinates ------------------------------

    @property
    def reduced(self) -> "ReducedCoords":
        return self._reduced

    @property
    def n_reduced(self) -> int:
        return self._reduced.size

    def to_reduced(self, theta) -> np.ndarray:
        """Average the copies of each free parameter in a full vector."""
        rc = self._reduced
        theta = np.asarray(theta, dtype=float).reshape(-1)
        sums = np.bincount(rc.occ_coord, weights=theta[rc.occ_vec], minlength=rc.size)
        return sums / rc.n_occ

    def from_reduced(self, theta_r) -> np.ndarray:
        rc = self._reduced
        out = np.zeros(self.dim)
        out[rc.occ_vec] = np.asarray(theta_r, dtype=float)[rc.occ_coord]
        return out

    # -- matrix views ------------------------------------------------------

    def matrices(self, theta) -> dict:
        """Split a full vector into named interaction matrices and singleton vectors.

        Pairwise entries are symmetrised by averaging, so the views are exactly
        symmetric even for vectors that are not.
        """
        m, A = self.m, self.n_pair_sets
        blocks = np.asarray(theta, dtype=float).reshape(m, self.block_dim)
        out = {}
        for a, name in enumerate(self.pair_sets):
            mat = blocks[:, a * m:(a + 1) * m].T
            mat = 0.5 * (mat + mat.T)
            if self.zero_diag[a]:
                np.fill_diagonal(mat, 0.0)
            out[name] = mat
        for ell, name in enumerate(self.singles):
            out[name] = blocks[:, A * m + ell].copy()
        return out

    def pack(self, **parts) -> np.ndarray:
        """Inverse of :meth:`matrices`; missing parts are zero."""
        m, A = self.m, self.n_pair_sets
        blocks = np.zeros((m, self.block_dim))
        for a, name in enumerate(self.pair_sets):
            if name in parts:
                mat = np.asarray(parts[name], dtype=float)
                if mat.shape != (m, m):
                    raise ValueError(f"{name} must be {m}x{m}")
                mat = 0.5 * (mat + mat.T)
                if self.zero_diag[a]:
                    mat = mat.copy()
                    np.fill_diagonal(mat, 0.0)
                blocks[:, a * m:(a + 1) * m] = mat.T
        for ell, name in enumerate(self.singles):
            if name in parts:
                blocks[:, A * m + ell] = np.asarray(parts[name], dtype=float)
        return blocks.reshape(-1)

    def edge_matrix(self, theta_r, tol: float = 0.0) -> np.ndarray:
        """Boolean m x m adjacency from reduced coordinates (any pair set nonzero)."""
        rc = self._reduced
        adj = np.zeros((self.m, self.m), dtype=bool)
        on = (rc.kind == PAIR) & (np.abs(np.asarray(theta_r)) > tol)
        adj[rc.row[on], rc.col[on]] = True
        return adj | adj.T


@dataclass(frozen=True)
class ReducedCoords:
    """Free parameters of a :class:`Layout` and where each one is stored.

    A symmetric off-diagonal entry appears in two blocks; diagonal and
    singleton entries appear once.  ``occ_*`` arrays list every appearance.
    """

    kind: np.ndarray       # DIAG, PAIR or SINGLE
    set_index: np.ndarray  # pair-set or singleton-set index
    row: np.ndarray
    col: np.ndarray
    n_occ: np.ndarray
    occ_coord: np.ndarray
    occ_block: np.ndarray
    occ_local: np.ndarray
    occ_vec: np.ndarray
    block_coords: np.ndarray  # (m, d) reduced index per block slot, -1 if structural zero

    @property
    def size(self) -> int:
        return self.kind.shape[0]

    def occurrence_table(self):
        """Padded (R, 2) block/local tables for the compiled kernels."""
        R = self.size
        first = np.searchsorted(self.occ_coord, np.arange(R))
        second = np.where(self.n_occ == 2, first + 1, first)
        ob = np.stack([self.occ_block[first], self.occ_block[second]], axis=1)
        ol = np.stack([self.occ_local[first], self.occ_local[second]], axis=1)
        return ob, ol, self.n_occ.astype(np.int64)


def _reduce(layout: Layout) -> ReducedCoords:
    m, A, L, d = layout.m, layout.n_pair_sets, layout.n_singles, layout.block_dim
    kind, sidx, row, col = [], [], [], []
    occ_coord, occ_block, occ_local = [], [], []
    block_coords = -np.ones((m, d), dtype=np.int64)

    def add(k, s, j, c, places):
        r = len(kind)
        kind.append(k)
        sidx.append(s)
        row.append(j)
        col.append(c)
        for b, loc in places:
            occ_coord.append(r)
            occ_block.append(b)
            occ_local.append(loc)
            block_coords[b, loc] = r

    for a in range(A):
        if not layout.zero_diag[a]:
            for j in range(m):
                add(DIAG, a, j, j, [(j, a * m + j)])
        for j in range(m):
            for k in range(j + 1, m):
                add(PAIR, a, j, k, [(k, a * m + j), (j, a * m + k)])
    for ell in range(L):
        for j in range(m):
            add(SINGLE, ell, j, j, [(j, A * m + ell)])

    occ_block = np.asarray(occ_block, dtype=np.int64)
    occ_local = np.asarray(occ_local, dtype=np.int64)
    kind = np.asarray(kind, dtype=np.int64)
    return ReducedCoords(
        kind=kind,
        set_index=np.asarray(sidx, dtype=np.int64),
        row=np.asarray(row, dtype=np.int64),
        col=np.asarray(col, dtype=np.int64),
        n_occ=np.where(kind == PAIR, 2, 1).astype(np.int64),
        occ_coord=np.asarray(occ_coord, dtype=np.int64),
        occ_block=occ_block,
        occ_local=occ_local,
        occ_vec=occ_block * d + occ_local,
        block_coords=block_coords,
    )


@dataclass(frozen=True)
class QuadraticLoss:
    """Block-diagonal quadratic ``0.5 theta' Gamma theta - g' theta + c``.

    ``blocks`` has shape ``(m, d, d)``; it may be a read-only broadcast view when
    all blocks coincide (Gaussian losses).  ``g`` is the full-length linear term.
    """

    blocks: np.ndarray
    g: np.ndarray
    c: float
    layout: Layout
    family: str = "custom"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        m, d = self.layout.m, self.layout.block_dim
        if self.blocks.shape != (m, d, d):
            raise ContractError(f"blocks have shape {self.blocks.shape}, layout needs {(m, d, d)}")
        if self.g.shape != (m * d,):
            raise ContractError(f"g has length {self.g.shape}, layout needs {m * d}")

    @property
    def dim(self) -> int:
        return self.layout.dim

    @property
    def shared_block(self) -> Optional[np.ndarray]:
        """The common block if all blocks are the same stored matrix, else None."""
        st = self.blocks.strides
        return self.blocks[0] if st[0] == 0 else None

    def block(self, j: int) -> np.ndarray:
        return self.blocks[j]

    def gamma_dense(self) -> np.ndarray:
        from scipy.linalg import block_diag
        return block_diag(*self.blocks)

    def _split(self, theta):
        return np.asarray(theta, dtype=float).reshape(self.layout.m, self.layout.block_dim)

    def gamma_times(self, theta) -> np.ndarray:
        t = self._split(theta)
        return np.einsum("bij,bj->bi", self.blocks, t).reshape(-1)

    def gradient(self, theta) -> np.ndarray:
        """Gradient ``Gamma theta - g`` of the smooth loss in full coordinates."""
        return self.gamma_times(theta) - self.g

    def smooth_value(self, theta) -> float:
        """``0.5 theta' Gamma theta - g' theta`` (constant excluded)."""
        theta = np.asarray(theta, dtype=float).reshape(-1)
        return float(0.5 * theta @ self.gamma_times(theta) - self.g @ theta)

    def value(self, theta) -> float:
        return self.smooth_value(theta) + self.c

    # -- reduced coordinates ----------------------------------------------

    def reduced_linear(self) -> np.ndarray:
        rc = self.layout.reduced
        return np.bincount(rc.occ_coord, weights=self.g[rc.occ_vec], minlength=rc.size)

    def reduced_hessian(self) -> np.ndarray:
        """Dense Hessian of the loss in the free coordinates (``P' Gamma P``)."""
        rc = self.layout.reduced
        H = np.zeros((rc.size, rc.size))
        for b in range(self.layout.m):
            idx = rc.block_coords[b]
            keep = idx >= 0
            sel = idx[keep]
            H[np.ix_(sel, sel)] += self.blocks[b][np.ix_(keep, keep)]
        return H

    def reduced_gradient(self, theta_r) -> np.ndarray:
        rc = self.layout.reduced
        grad = self.gradient(self.layout.from_reduced(theta_r))
        return np.bincount(rc.occ_coord, weights=grad[rc.occ_vec], minlength=rc.size)

    def reduced_value(self, theta_r) -> float:
        return self.smooth_value(self.layout.from_reduced(theta_r))

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "m": self.layout.m,
            "pair_sets": list(self.layout.pair_sets),
            "singles": list(self.layout.singles),
            "zero_diag": list(self.layout.zero_diag),
            "blocks": np.asarray(self.blocks).tolist(),
            "g": self.g.tolist(),
            "c": self.c,
        }


# ---------------------------------------------------------------------------
# layouts of the built-in families
# ---------------------------------------------------------------------------


@lru_cache(maxsize=32)
def gaussian_layout(m: int) -> Layout:
    return Layout(m, ("K",), (), (False,))


@lru_cache(maxsize=32)
def location_layout(m: int) -> Layout:
    return Layout(m, ("K",), ("eta",), (False,))


@lru_cache(maxsize=32)
def normal_conditionals_layout(m: int) -> Layout:
    # "B" multiplies x_j x_k (its diagonal is the x_j^2 coefficient),
    # "B2" multiplies x_j^2 x_k^2 once per unordered pair.
    return Layout(m, ("B", "B2"), ("b",), (False, True))


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------


def _check_symmetric(W, name="W"):
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValueError(f"{name} must be a square matrix")
    if not np.all(np.isfinite(W)):
        raise ValueError(f"{name} contains non-finite entries")
    if not np.allclose(W, W.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(W).max(initial=0))):
        raise ValueError(f"{name} must be symmetric")
    return 0.5 * (W + W.T)


def _shared_blocks(W, m):
    W = np.ascontiguousarray(W)
    W.setflags(write=False)
    return np.broadcast_to(W, (m,) + W.shape)


def build_gaussian_loss(W) -> QuadraticLoss:
    """Gaussian score-matching loss ``-tr(K) + 0.5 tr(K K W)`` for a symmetric ``W``.

    Parameters
    ----------
    W : array_like, shape (m, m)
        Second-moment matrix of the data.

    Returns
    -------
    QuadraticLoss
        Every block equals ``W`` and ``g = vec(I)``.
    """
    W = _check_symmetric(W)
    m = W.shape[0]
    return QuadraticLoss(_shared_blocks(W, m), np.eye(m).reshape(-1), 0.0,
                         gaussian_layout(m), family="gaussian")


def gaussian_trace_loss(W, K) -> float:
    """``-tr(K) + tr(K K W) / 2`` for any square ``K``.

    Agrees with :func:`build_gaussian_loss` on symmetric ``K`` and takes the
    same value at ``K`` and ``K.T``.  On a non-symmetric ``K`` the quadratic
    form of the full parameter vector is ``-tr(K) + tr(K' W K) / 2`` instead,
    which is not transpose invariant.
    """
    W = np.asarray(W, dtype=float)
    K = np.asarray(K, dtype=float)
    return float(-np.trace(K) + 0.5 * np.trace(K @ K @ W))


def population_gaussian_loss(Sigma) -> QuadraticLoss:
    """Population version of :func:`build_gaussian_loss` (``W`` replaced by ``Sigma``)."""
    loss = build_gaussian_loss(Sigma)
    return QuadraticLoss(loss.blocks, loss.g, 0.0, loss.layout, family="gaussian-population")


def build_nonneg_gaussian_loss(x) -> QuadraticLoss:
    """Non-negative score-matching loss for a zero-mean Gaussian truncated to the orthant.

    Parameters
    ----------
    x : DataMatrix or array_like, shape (n, m)
        Non-negative observations.

    Returns
    -------
    QuadraticLoss
        Block ``j`` is ``mean(x_j^2 x x')``; ``g = 2 vec(W) + vec(diag(W))``.
    """
    X = as_array(x)
    if np.any(X < 0):
        raise DomainError("non-negative family requires all observations >= 0")
    n, m = X.shape
    W = X.T @ X / n
    sq = X * X
    blocks = np.einsum("ij,ik,il->jkl", sq, X, X, optimize=True) / n
    blocks = 0.5 * (blocks + blocks.transpose(0, 2, 1))
    g = (2.0 * W + np.diag(np.diag(W))).T.reshape(-1)
    return QuadraticLoss(blocks, g, 0.0, gaussian_layout(m), family="truncated-gaussian")


def build_normal_conditionals_loss(x) -> QuadraticLoss:
    """Score-matching loss for densities proportional to
    ``exp(sum_{j != k} B2_jk x_j^2 x_k^2 + x'Bx + b'x)`` on the real line.

    ``B2`` is symmetric with zero diagonal; the sum runs over ordered pairs,
    so each unordered pair contributes ``2 B2_jk x_j^2 x_k^2``.

    Parameters
    ----------
    x : DataMatrix or array_like, shape (n, m)

    Returns
    -------
    QuadraticLoss
        ``m`` blocks of size ``2m + 1`` laid out as ``(B[:, j], B2[:, j], b_j)``.
    """
    X = as_array(x)
    n, m = X.shape
    layout = normal_conditionals_layout(m)
    d = layout.block_dim
    sq = X * X
    blocks = np.empty((m, d, d))
    g = np.empty((m, d))
    H = np.empty((n, d))
    H[:, :m] = 2.0 * X
    H[:, 2 * m] = 1.0
    mean_sq = sq.mean(axis=0)
    for j in range(m):
        H[:, m:2 * m] = 4.0 * X[:, [j]] * sq
        H[:, m + j] = 0.0
        blocks[j] = H.T @ H / n
        gj = np.zeros(d)
        gj[j] = -2.0
        gj[m:2 * m] = -4.0 * mean_sq
        gj[m + j] = 0.0
        g[j] = gj
    blocks = 0.5 * (blocks + blocks.transpose(0, 2, 1))
    return QuadraticLoss(blocks, g.reshape(-1), 0.0, layout, family="normal-conditionals")


@dataclass(frozen=True)
class PairwiseStatSpec:
    """User-supplied derivatives of a pairwise exponential family.

    All callbacks are vectorised over samples: given the ``(n, m)`` data array
    and a coordinate ``j`` they return one row per sample.

    Parameters
    ----------
    layout : Layout
    grad : callable ``(X, j) -> (n, d)``
        Partial derivative in ``x_j`` of the statistics multiplying block ``j``.
    hess : callable ``(X, j) -> (n, d)``
        Second partial derivative in ``x_j`` of the same statistics.
    base_grad, base_hess : callable ``(X, j) -> (n,)``, optional
        First and second partials of the base-measure log-density.
    """

    layout: Layout
    grad: Callable
    hess: Callable
    base_grad: Optional[Callable] = None
    base_hess: Optional[Callable] = None


def _call(fn, X, j, shape, what):
    out = np.asarray(fn(X, j), dtype=float)
    if out.shape != shape:
        raise ContractError(f"{what}(x, {j}) returned shape {out.shape}, expected {shape}")
    if not np.all(np.isfinite(out)):
        raise ContractError(f"{what}(x, {j}) returned non-finite values")
    return out


def build_general_pairwise_loss(spec: PairwiseStatSpec, x, domain: str = REAL_LINE) -> QuadraticLoss:
    """Assemble the empirical (non-negative) score-matching loss from derivative callbacks.

    Parameters
    ----------
    spec : PairwiseStatSpec
    x : DataMatrix or array_like, shape (n, m)
    domain : {"real-line", "nonnegative-orthant"}
        On the orthant every term of coordinate ``j`` is weighted by ``x_j^2``
        and the ``2 x_j`` drift term is added.

    Returns
    -------
    QuadraticLoss
    """
    if domain not in DOMAINS:
        raise ValueError(f"unknown domain {domain!r}")
    X = as_array(x)
    n, m = X.shape
    layout = spec.layout
    if layout.m != m:
        raise ContractError(f"layout has m={layout.m} but data has {m} columns")
    if domain == NONNEG and np.any(X < 0):
        raise DomainError("non-negative domain requires all observations >= 0")
    d = layout.block_dim
    blocks = np.empty((m, d, d))
    g = np.empty((m, d))
    c = 0.0
    for j in range(m):
        h = _call(spec.grad, X, j, (n, d), "grad")
        hjj = _call(spec.hess, X, j, (n, d), "hess")
        bj = np.zeros(n) if spec.base_grad is None else _call(spec.base_grad, X, j, (n,), "base_grad")
        bjj = np.zeros(n) if spec.base_hess is None else _call(spec.base_hess, X, j, (n,), "base_hess")
        if domain == NONNEG:
            wt = X[:, j] ** 2
            blocks[j] = (h * wt[:, None]).T @ h / n
            g[j] = -((2.0 * X[:, j])[:, None] * h + wt[:, None] * (hjj + bj[:, None] * h)).mean(axis=0)
            c += float(np.mean(2.0 * X[:, j] * bj + wt * (bjj + 0.5 * bj * bj)))
        else:
            blocks[j] = h.T @ h / n
            g[j] = -(hjj + bj[:, None] * h).mean(axis=0)
            c += float(np.mean(bjj + 0.5 * bj * bj))
    blocks = 0.5 * (blocks + blocks.transpose(0, 2, 1))
    return QuadraticLoss(blocks, g.reshape(-1), c, layout, family="pairwise")


def gaussian_stat_spec(m: int) -> PairwiseStatSpec:
    """Statistics of ``log q = -0.5 x'Kx`` in the :func:`gaussian_layout`."""

    def grad(X, j):
        return -X

    def hess(X, j):
        out = np.zeros_like(X)
        out[:, j] = -1.0
        return out

    return PairwiseStatSpec(gaussian_layout(m), grad, hess)


def location_stat_spec(m: int) -> PairwiseStatSpec:
    """Statistics of ``log q = -0.5 x'Kx + eta'x`` (``eta = K mu``)."""

    def grad(X, j):
        return np.hstack([-X, np.ones((X.shape[0], 1))])

    def hess(X, j):
        out = np.zeros((X.shape[0], m + 1))
        out[:, j] = -1.0
        return out

    return PairwiseStatSpec(location_layout(m), grad, hess)


def build_location_loss(x) -> QuadraticLoss:
    """Non-negative loss for a truncated Gaussian with unknown location."""
    X = as_array(x)
    loss = build_general_pairwise_loss(location_stat_spec(X.shape[1]), X, NONNEG)
    return QuadraticLoss(loss.blocks, loss.g, loss.c, loss.layout, family="truncated-gaussian-location")


# ---------------------------------------------------------------------------
# family dispatch
# ---------------------------------------------------------------------------

FAMILY_KINDS = ("gaussian-centered", "truncated-gaussian-centered",
                "truncated-gaussian-location", "normal-conditionals")

_ALIASES = {
    "gaussian": "gaussian-centered",
    "truncated-gaussian": "truncated-gaussian-centered",
    "truncated": "truncated-gaussian-centered",
    "location": "truncated-gaussian-location",
}


@dataclass(frozen=True)
class FamilySpec:
    kind: str
    domain: Optional[str] = None

    def __post_init__(self):
        kind = _ALIASES.get(self.kind, self.kind)
        if kind not in FAMILY_KINDS:
            raise ValueError(f"unknown family {self.kind!r}; choose from {FAMILY_KINDS}")
        default = NONNEG if kind.startswith("truncated") else REAL_LINE
        domain = self.domain or default
        if domain not in DOMAINS:
            raise ValueError(f"unknown domain {domain!r}")
        if kind.startswith("truncated") and domain != NONNEG:
            raise ValueError(f"{kind} requires domain {NONNEG!r}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "domain", domain)

    @property
    def nonnegative(self) -> bool:
        return self.domain == NONNEG

    def layout(self, m: int) -> Layout:
        if self.kind == "truncated-gaussian-location":
            return location_layout(m)
        if self.kind == "normal-conditionals":
            return normal_conditionals_layout(m)
        return gaussian_layout(m)


def build_loss(family, x) -> QuadraticLoss:
    """Build the loss of ``family`` (a :class:`FamilySpec` or kind string) on data ``x``."""
    if not isinstance(family, FamilySpec):
        family = FamilySpec(family)
    X = as_array(x)
    if family.nonnegative and np.any(X < 0):
        raise DomainError(f"{family.kind} requires all observations >= 0")
    if family.kind == "gaussian-centered":
        if family.nonnegative:
            return build_nonneg_gaussian_loss(X)
        return build_gaussian_loss(sample_covariance(X))
    if family.kind == "truncated-gaussian-centered":
        return build_nonneg_gaussian_loss(X)
    if family.kind == "truncated-gaussian-location":
        return build_location_loss(X)
    if family.nonnegative:
        raise ValueError("normal-conditionals is defined on the real line only")
    return build_normal_conditionals_loss(X)


def log_density(family, theta, X) -> np.ndarray:
    """Unnormalised log-density of each row of ``X`` under full parameter ``theta``."""
    if not isinstance(family, FamilySpec):
        family = FamilySpec(family)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    parts = family.layout(X.shape[1]).matrices(theta)
    if family.kind == "normal-conditionals":
        sq = X * X
        quart = np.einsum("ij,jk,ik->i", sq, parts["B2"], sq)
        return quart + np.einsum("ij,jk,ik->i", X, parts["B"], X) + X @ parts["b"]
    out = -0.5 * np.einsum("ij,jk,ik->i", X, parts["K"], X)
    if family.kind == "truncated-gaussian-location":
        out = out + X @ parts["eta"]
    return out
