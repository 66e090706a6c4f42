"""Hot inner loops: coordinate descent sweeps and Gibbs sweeps.

Every function here is written in the subset of numpy that numba's nopython
mode accepts, so the same source runs compiled (default) or interpreted when
``SCOREMATCH_NO_NUMBA`` is set.  Callers own all validation; kernels assume
well-formed, contiguous float64 input.
"""
import math

import numpy as np

from ._backend import jit

SQRT2 = math.sqrt(2.0)


@jit
def soft(a, b):
    if a > b:
        return a - b
    if a < -b:
        return a + b
    return 0.0


# ---------------------------------------------------------------------------
# coordinate descent on a block-diagonal quadratic
# ---------------------------------------------------------------------------


@jit
def _coord_grad(resid, r, occ_block, occ_local, n_occ):
    s = 0.0
    for o in range(n_occ[r]):
        s += resid[occ_block[r, o], occ_local[r, o]]
    return s


@jit
def _coord_shift(blocks, resid, r, delta, occ_block, occ_local, n_occ):
    for o in range(n_occ[r]):
        b = occ_block[r, o]
        resid[b] += delta * blocks[b, occ_local[r, o]]


@jit
def _group_step(h00, h01, h11, s0, s1, mu):
    """Minimise 0.5 u'Hu + s'u + mu*||u|| over u in R^2 (H is 2x2 PSD)."""
    snorm = math.sqrt(s0 * s0 + s1 * s1)
    if snorm <= mu:
        return 0.0, 0.0
    half_tr = 0.5 * (h00 + h11)
    disc = math.sqrt(0.25 * (h00 - h11) ** 2 + h01 * h01)
    lam1 = half_tr + disc
    lam2 = half_tr - disc
    if lam2 < 0.0:
        lam2 = 0.0
    if abs(h01) > 1e-300:
        v10, v11 = lam1 - h11, h01
    elif h00 >= h11:
        v10, v11 = 1.0, 0.0
    else:
        v10, v11 = 0.0, 1.0
    nv = math.sqrt(v10 * v10 + v11 * v11)
    v10 /= nv
    v11 /= nv
    v20, v21 = -v11, v10
    c1 = v10 * s0 + v11 * s1
    c2 = v20 * s0 + v21 * s1
    # radius t = ||u|| solves sum_i c_i^2 / (lam_i t + mu)^2 = 1; the left side
    # is decreasing in t and exceeds 1 at t = 0.
    lo = 0.0
    if lam1 > 0.0:
        lo = (snorm - mu) / lam1
    if lam2 > 1e-14 * max(lam1, 1e-300):
        hi = (snorm - mu) / lam2
    else:
        hi = max(lo, 1.0)
        for _ in range(200):
            val = c1 * c1 / (lam1 * hi + mu) ** 2 + c2 * c2 / (lam2 * hi + mu) ** 2
            if val <= 1.0:
                break
            hi *= 2.0
    for _ in range(200):
        t = 0.5 * (lo + hi)
        val = c1 * c1 / (lam1 * t + mu) ** 2 + c2 * c2 / (lam2 * t + mu) ** 2
        if val > 1.0:
            lo = t
        else:
            hi = t
        if hi - lo <= 1e-15 * hi:
            break
    t = 0.5 * (lo + hi)
    u1 = -c1 * t / (lam1 * t + mu)
    u2 = -c2 * t / (lam2 * t + mu)
    return u1 * v10 + u2 * v20, u1 * v11 + u2 * v21


@jit
def _update_unit(blocks, resid, theta, u, unit_start, unit_coords, unit_weight,
                 unit_hess, occ_block, occ_local, n_occ, lam):
    start = unit_start[u]
    size = unit_start[u + 1] - start
    w = unit_weight[u]
    if size == 1:
        r = unit_coords[start]
        h = unit_hess[u, 0, 0]
        if h <= 0.0:
            return 0.0
        grad = _coord_grad(resid, r, occ_block, occ_local, n_occ)
        old = theta[r]
        if w == 0.0:
            new = old - grad / h
        else:
            new = soft(old * h - grad, lam * w) / h
        delta = new - old
        if delta != 0.0:
            theta[r] = new
            _coord_shift(blocks, resid, r, delta, occ_block, occ_local, n_occ)
        return abs(delta)

    r0 = unit_coords[start]
    r1 = unit_coords[start + 1]
    h00 = unit_hess[u, 0, 0]
    h01 = unit_hess[u, 0, 1]
    h11 = unit_hess[u, 1, 1]
    g0 = _coord_grad(resid, r0, occ_block, occ_local, n_occ)
    g1 = _coord_grad(resid, r1, occ_block, occ_local, n_occ)
    old0 = theta[r0]
    old1 = theta[r1]
    # linear coefficient of the unit's quadratic with the unit itself zeroed
    s0 = g0 - (h00 * old0 + h01 * old1)
    s1 = g1 - (h01 * old0 + h11 * old1)
    if w == 0.0:
        det = h00 * h11 - h01 * h01
        if det <= 1e-14 * max(h00 * h11, 1e-300):
            return 0.0
        new0 = -(h11 * s0 - h01 * s1) / det
        new1 = -(-h01 * s0 + h00 * s1) / det
    else:
        new0, new1 = _group_step(h00, h01, h11, s0, s1, lam * w)
    d0 = new0 - old0
    d1 = new1 - old1
    if d0 != 0.0:
        theta[r0] = new0
        _coord_shift(blocks, resid, r0, d0, occ_block, occ_local, n_occ)
    if d1 != 0.0:
        theta[r1] = new1
        _coord_shift(blocks, resid, r1, d1, occ_block, occ_local, n_occ)
    return abs(d0) + abs(d1)


@jit
def cd_units(blocks, resid, theta, unit_start, unit_coords, unit_weight,
             unit_hess, occ_block, occ_local, n_occ, lam, tol, t_max):
    """Cyclic (block-)coordinate descent with active-set sweeps.

    ``resid`` holds the per-block gradient ``blocks[b] @ theta_b - g_b`` and is
    kept in sync with ``theta`` (reduced coordinates).  A sweep over the whole
    unit list is followed by sweeps over currently active units until their
    l1 change drops under ``tol``; convergence requires a full sweep whose
    l1 change is under ``tol``.  Returns (sweeps, converged).
    """
    n_units = unit_weight.shape[0]
    active = np.ones(n_units, dtype=np.bool_)
    full = True
    sweeps = 0
    while sweeps < t_max:
        change = 0.0
        for u in range(n_units):
            if full or active[u]:
                change += _update_unit(blocks, resid, theta, u, unit_start,
                                       unit_coords, unit_weight, unit_hess,
                                       occ_block, occ_local, n_occ, lam)
        sweeps += 1
        if change <= tol:
            if full:
                return sweeps, True
            full = True
        else:
            if full:
                for u in range(n_units):
                    nz = unit_weight[u] == 0.0
                    for p in range(unit_start[u], unit_start[u + 1]):
                        if theta[unit_coords[p]] != 0.0:
                            nz = True
                    active[u] = nz
            full = False
    return sweeps, False


@jit
def cd_gaussian(W, K, M, lam, tol, t_max):
    """Coordinate descent for the Gaussian loss -tr(K) + 0.5 tr(KKW) + lam ||K||_1,off.

    ``M`` must equal ``K @ W`` on entry (row k of M is (W kappa_k)') and is
    updated in place along with ``K``.  Diagonals are solved exactly, each
    unordered pair (j, k) is soft-thresholded with curvature w_jj + w_kk and
    threshold 2*lam.  Returns (sweeps, converged).
    """
    m = W.shape[0]
    n_pairs = m * (m - 1) // 2
    act_j = np.empty(n_pairs, dtype=np.int64)
    act_k = np.empty(n_pairs, dtype=np.int64)
    n_act = 0
    full = True
    sweeps = 0
    while sweeps < t_max:
        change = 0.0
        for j in range(m):
            h = W[j, j]
            if h <= 0.0:
                continue
            delta = -(M[j, j] - 1.0) / h
            if delta != 0.0:
                K[j, j] += delta
                M[j] += delta * W[j]
                change += abs(delta)
        if full:
            n_pairs_sweep = n_pairs
        else:
            n_pairs_sweep = n_act
        j = 0
        k = 1
        for q in range(n_pairs_sweep):
            if full:
                if k >= m:
                    j += 1
                    k = j + 1
                jj = j
                kk = k
                k += 1
            else:
                jj = act_j[q]
                kk = act_k[q]
            h = W[jj, jj] + W[kk, kk]
            if h <= 0.0:
                continue
            old = K[jj, kk]
            grad = M[kk, jj] + M[jj, kk]
            new = soft(old * h - grad, 2.0 * lam) / h
            delta = new - old
            if delta != 0.0:
                K[jj, kk] = new
                K[kk, jj] = new
                M[kk] += delta * W[jj]
                M[jj] += delta * W[kk]
                change += abs(delta)
        sweeps += 1
        if change <= tol:
            if full:
                return sweeps, True
            full = True
        else:
            if full:
                n_act = 0
                for a in range(m):
                    for b in range(a + 1, m):
                        if K[a, b] != 0.0:
                            act_j[n_act] = a
                            act_k[n_act] = b
                            n_act += 1
            full = False
    return sweeps, False


# ---------------------------------------------------------------------------
# univariate truncated normal via inverse survival function
# ---------------------------------------------------------------------------


@jit
def ndtri(p):
    """Inverse standard normal CDF (rational start refined by one Halley step)."""
    if p <= 0.0:
        return -np.inf
    if p >= 1.0:
        return np.inf
    a1 = -3.969683028665376e+01
    a2 = 2.209460984245205e+02
    a3 = -2.759285104469687e+02
    a4 = 1.383577518672690e+02
    a5 = -3.066479806614716e+01
    a6 = 2.506628277459239e+00
    b1 = -5.447609879822406e+01
    b2 = 1.615858368580409e+02
    b3 = -1.556989798598866e+02
    b4 = 6.680131188771972e+01
    b5 = -1.328068155288572e+01
    c1 = -7.784894002430293e-03
    c2 = -3.223964580411365e-01
    c3 = -2.400758277161838e+00
    c4 = -2.549732539343734e+00
    c5 = 4.374664141464968e+00
    c6 = 2.938163982698783e+00
    d1 = 7.784695709041462e-03
    d2 = 3.224671290700398e-01
    d3 = 2.445134137142996e+00
    d4 = 3.754408661907416e+00
    p_low = 0.02425
    if p < p_low:
        q = math.sqrt(-2.0 * math.log(p))
        x = (((((c1 * q + c2) * q + c3) * q + c4) * q + c5) * q + c6) / \
            ((((d1 * q + d2) * q + d3) * q + d4) * q + 1.0)
    elif p <= 1.0 - p_low:
        q = p - 0.5
        r = q * q
        x = (((((a1 * r + a2) * r + a3) * r + a4) * r + a5) * r + a6) * q / \
            (((((b1 * r + b2) * r + b3) * r + b4) * r + b5) * r + 1.0)
    else:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        x = -(((((c1 * q + c2) * q + c3) * q + c4) * q + c5) * q + c6) / \
            ((((d1 * q + d2) * q + d3) * q + d4) * q + 1.0)
    # refine on the tail nearer to x so the CDF residual does not cancel
    if x <= 0.0:
        e = 0.5 * math.erfc(-x / SQRT2) - p
    else:
        e = (1.0 - p) - 0.5 * math.erfc(x / SQRT2)
    u = e * math.sqrt(2.0 * math.pi) * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


@jit
def std_normal_above(alpha, u):
    """Quantile ``u`` in (0, 1] of a standard normal conditioned on Z >= alpha."""
    tail = 0.5 * math.erfc(alpha / SQRT2)
    if tail < 1e-300:
        # Q(alpha) underflows: the conditional law is alpha + Exp(alpha)
        return alpha - math.log(u) / alpha
    z = -ndtri(u * tail)
    if z < alpha:
        z = alpha
    return z


# ---------------------------------------------------------------------------
# Gibbs sweeps
# ---------------------------------------------------------------------------


@jit
def gibbs_truncated_sweeps(K, x, rand, t0, burnin, thin, out):
    """Run ``rand.shape[0]`` sweeps for N(0, K^-1) truncated to [0, inf)^m."""
    m = K.shape[0]
    for s in range(rand.shape[0]):
        for j in range(m):
            kjj = K[j, j]
            sd = 1.0 / math.sqrt(kjj)
            mean = -(np.dot(K[j], x) - kjj * x[j]) / kjj
            u = 1.0 - rand[s, j]  # in (0, 1]
            x[j] = mean + sd * std_normal_above(-mean / sd, u)
        t = t0 + s
        if t >= burnin and (t - burnin + 1) % thin == 0:
            out[(t - burnin + 1) // thin - 1] = x


@jit
def gibbs_normal_conditionals_sweeps(Q, b2, b, x, rand, t0, burnin, thin, out):
    """Gibbs sweeps for exp{sum_{j != k} Q_jk x_j^2 x_k^2 + sum_j b2_j x_j^2 + b_j x_j}.

    Returns -1 on success, or the index j of a coordinate whose full
    conditional was not normalisable (non-negative x_j^2 coefficient).
    """
    m = Q.shape[0]
    xsq = x * x
    for s in range(rand.shape[0]):
        for j in range(m):
            a = b2[j] + 2.0 * (np.dot(Q[j], xsq) - Q[j, j] * xsq[j])
            if a >= 0.0:
                return j
            var = -0.5 / a
            mean = -b[j] / (2.0 * a)
            x[j] = mean + math.sqrt(var) * rand[s, j]
            xsq[j] = x[j] * x[j]
        t = t0 + s
        if t >= burnin and (t - burnin + 1) % thin == 0:
            out[(t - burnin + 1) // thin - 1] = x
    return -1
