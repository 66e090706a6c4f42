import json

import numpy as np
import pytest

from scorematch.data import (DataMatrix, DomainError, InvalidDataError, center, read_data,
                             sample_covariance, write_data)


def test_second_moment_of_single_row():
    np.testing.assert_array_equal(sample_covariance([[1.0, 2.0]]), [[1, 2], [2, 4]])


def test_second_moment_of_unit_rows():
    np.testing.assert_array_equal(sample_covariance([[1.0, 0.0], [0.0, 1.0]]), 0.5 * np.eye(2))


@pytest.mark.parametrize("seed", range(5))
def test_second_moment_is_psd_and_uncentred(seed):
    X = np.random.default_rng(seed).normal(loc=3.0, size=(5, 3))
    W = sample_covariance(X)
    assert np.linalg.eigvalsh(W).min() >= -1e-12
    np.testing.assert_allclose(W, X.T @ X / 5)


@pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
def test_non_finite_rejected(bad):
    X = np.ones((3, 2))
    X[1, 1] = bad
    with pytest.raises(InvalidDataError):
        sample_covariance(X)
    with pytest.raises(InvalidDataError):
        DataMatrix(X)


def test_data_matrix_shape_checks():
    with pytest.raises(InvalidDataError):
        DataMatrix(np.ones((3, 1)))
    with pytest.raises(InvalidDataError):
        DataMatrix(np.ones(4))
    dm = DataMatrix(np.ones((3, 2)))
    assert (dm.n, dm.m) == (3, 2)
    with pytest.raises(ValueError):
        dm.values[0, 0] = 5.0


def test_nonnegative_requirement():
    with pytest.raises(DomainError):
        DataMatrix([[1.0, -0.1]]).require_nonnegative()


def test_center_and_standardize():
    X = np.random.default_rng(0).normal(2.0, 3.0, size=(50, 3))
    np.testing.assert_allclose(center(X).mean(axis=0), 0, atol=1e-12)
    np.testing.assert_allclose(center(X, scale=True).std(axis=0), 1, atol=1e-12)


@pytest.mark.parametrize("suffix", [".csv", ".json"])
def test_round_trip(tmp_path, suffix):
    X = np.random.default_rng(1).normal(size=(7, 4))
    path = tmp_path / f"d{suffix}"
    write_data(path, X)
    np.testing.assert_array_equal(read_data(path).values, X)


def test_json_shape_mismatch(tmp_path):
    path = tmp_path / "d.json"
    path.write_text(json.dumps({"n": 3, "m": 2, "values": [[1, 2]]}))
    with pytest.raises(InvalidDataError):
        read_data(path)


def test_unparseable_csv(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("1,2\n3,x\n")
    with pytest.raises(InvalidDataError):
        read_data(path)
