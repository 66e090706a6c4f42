"""Observation matrices: validation, covariance and file IO."""
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class InvalidDataError(ValueError):
    """Raised for malformed observation matrices (non-finite, wrong shape, wrong domain)."""


class DomainError(InvalidDataError):
    """Raised when data falls outside the support required by a family."""


@dataclass(frozen=True)
class DataMatrix:
    """An ``n x m`` matrix of observations, one sample per row."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=float, copy=True)
        if arr.ndim != 2:
            raise InvalidDataError(f"expected a 2-d matrix, got shape {arr.shape}")
        n, m = arr.shape
        if n < 1:
            raise InvalidDataError("need at least one observation")
        if m < 2:
            raise InvalidDataError(f"need at least two variables, got {m}")
        if not np.all(np.isfinite(arr)):
            raise InvalidDataError("observations contain non-finite entries")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def require_nonnegative(self):
        if np.any(self.values < 0):
            raise DomainError("non-negative family requires all observations >= 0")
        return self


def as_array(x, min_vars: int = 1) -> np.ndarray:
    """Return a finite 2-d float array from a DataMatrix or array-like."""
    if isinstance(x, DataMatrix):
        return x.values
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < min_vars:
        raise InvalidDataError(f"expected an n x m matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidDataError("observations contain non-finite entries")
    return arr


def sample_covariance(x) -> np.ndarray:
    """Uncentred second-moment matrix ``(1/n) X'X``.

    Parameters
    ----------
    x : DataMatrix or array_like, shape (n, m)

    Returns
    -------
    ndarray, shape (m, m)
        Symmetric positive semidefinite matrix. Means are not subtracted.
    """
    arr = as_array(x)
    W = arr.T @ arr / arr.shape[0]
    return 0.5 * (W + W.T)


def center(x, scale: bool = False) -> np.ndarray:
    """Column-centre (and optionally standardise) a data matrix."""
    arr = as_array(x)
    out = arr - arr.mean(axis=0)
    if scale:
        sd = out.std(axis=0)
        sd[sd == 0] = 1.0
        out = out / sd
    return out


def read_data(path) -> DataMatrix:
    """Load a headerless CSV (rows are samples) or a JSON ``{n, m, values}`` envelope."""
    path = Path(path)
    if path.suffix.lower() == ".json":
        obj = json.loads(path.read_text())
        values = np.asarray(obj["values"], dtype=float)
        if "n" in obj and "m" in obj and values.shape != (obj["n"], obj["m"]):
            raise InvalidDataError(
                f"declared shape ({obj['n']}, {obj['m']}) does not match values {values.shape}")
        return DataMatrix(values)
    try:
        values = np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise InvalidDataError(f"could not parse {path}: {exc}") from exc
    return DataMatrix(values)


def write_data(path, x) -> None:
    arr = as_array(x)
    path = Path(path)
    if path.suffix.lower() == ".json":
        path.write_text(json.dumps({"n": arr.shape[0], "m": arr.shape[1],
                                    "values": arr.tolist()}))
    else:
        np.savetxt(path, arr, delimiter=",", fmt="%.17g")
