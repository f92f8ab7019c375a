"""svd3 reconstruction and orthonormality checks."""

import numpy as np
import numpy.testing as npt
import pytest

from sfhand.errors import DimensionError, NumericalError
from sfhand.linalg import svd3


def assert_valid_svd(m, u, s, v, tol=1e-9):
    npt.assert_allclose(u @ np.diag(s) @ v.T, m, atol=tol)
    npt.assert_allclose(u.T @ u, np.eye(3), atol=tol)
    npt.assert_allclose(v.T @ v, np.eye(3), atol=tol)
    assert s[0] >= s[1] >= s[2] >= 0


def test_identity():
    u, s, v = svd3(np.eye(3))
    npt.assert_allclose(s, [1.0, 1.0, 1.0], atol=1e-12)
    assert_valid_svd(np.eye(3), u, s, v)


def test_diagonal():
    m = np.diag([3.0, 2.0, 1.0])
    u, s, v = svd3(m)
    npt.assert_allclose(s, [3.0, 2.0, 1.0], atol=1e-12)
    assert_valid_svd(m, u, s, v)


def test_random_reconstruction():
    rng = np.random.default_rng(11)
    for _ in range(200):
        m = rng.standard_normal((3, 3)) * rng.uniform(0.1, 10)
        u, s, v = svd3(m)
        assert_valid_svd(m, u, s, v)


def test_singular_values_match_lapack():
    rng = np.random.default_rng(12)
    for _ in range(50):
        m = rng.standard_normal((3, 3))
        _, s, _ = svd3(m)
        npt.assert_allclose(s, np.linalg.svd(m, compute_uv=False), atol=1e-9)


def test_rank_deficient():
    col = np.array([1.0, 2.0, 3.0])
    m = np.outer(col, [1.0, 0.0, 0.0])  # rank 1
    u, s, v = svd3(m)
    assert_valid_svd(m, u, s, v)
    assert s[1] < 1e-9 and s[2] < 1e-9


def test_zero_matrix():
    u, s, v = svd3(np.zeros((3, 3)))
    assert_valid_svd(np.zeros((3, 3)), u, s, v)
    npt.assert_array_equal(s, np.zeros(3))


def test_bad_inputs():
    with pytest.raises(DimensionError):
        svd3(np.zeros((2, 2)))
    with pytest.raises(NumericalError):
        svd3(np.full((3, 3), np.nan))
