"""Small dense linear-algebra helpers shared by solvers and tuning."""
import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve


class RankError(np.linalg.LinAlgError):
    """A restricted Gram system is numerically singular."""

    def __init__(self, message, block=None):
        super().__init__(message)
        self.block = block


def psd_factor(H, rcond: float = 1e-12):
    """Cholesky factor of a PSD matrix, or raise RankError when it is numerically singular."""
    H = np.asarray(H, dtype=float)
    if H.size == 0:
        return None
    scale = max(float(np.max(np.abs(np.diag(H)))), 1e-300)
    try:
        fac = cho_factor(H, lower=False, check_finite=False)
    except LinAlgError as exc:
        raise RankError("matrix is not positive definite") from exc
    piv = np.abs(np.diag(fac[0])) ** 2
    if piv.min() <= rcond * scale:
        raise RankError(f"pivot ratio {piv.min() / scale:.3g} below {rcond:g}")
    return fac


def psd_solve(H, b, rcond: float = 1e-12):
    fac = psd_factor(H, rcond)
    if fac is None:
        return np.zeros_like(np.asarray(b, dtype=float))
    return cho_solve(fac, b, check_finite=False)
