import numpy as np
import pytest

from slope_recovery.src.errors import (DimensionError, EmptyPattern,
                                       InvalidClusterValues, InvalidVector)
from slope_recovery.src.pattern import (SlopePattern, abs_sorted_pattern_matrix,
                                        cluster_sizes, patt, patt_with_tol,
                                        pattern_matrix, reduce, synthesize)


def test_patt_examples():
    assert patt([4.7, -4.7, 0, 1.8, 4.7, -1.8]).values == (2, -2, 0, 1, 2, -1)
    assert patt([1.2, -2.3, 3.5, 1.2, 2.3, -3.5]).values == (1, -2, 3, 1, 2, -3)
    zero = patt([0.0, 0.0, 0.0])
    assert zero.is_zero
    assert zero.k == 0


def test_patt_rejects_non_finite():
    with pytest.raises(InvalidVector):
        patt([1.0, np.inf])


def test_pattern_validates_levels():
    with pytest.raises(InvalidVector):
        SlopePattern((2, 0, -2))
    assert SlopePattern((2, -1, 0)).k == 2


def test_pattern_wire_form():
    M = SlopePattern.parse("2, -2,0,1")
    assert M.values == (2, -2, 0, 1)
    assert str(M) == "2,-2,0,1"
    assert SlopePattern.parse(str(M)) == M
    with pytest.raises(InvalidVector):
        SlopePattern.parse("2,a")


def test_patt_with_tol_examples():
    assert patt_with_tol([1.00000001, 1.0, 0.0000001], 1e-4).values == (1, 1, 0)
    assert patt_with_tol([2.0, 1.0], 1e-4).values == (2, 1)
    assert patt_with_tol([1.0, 1.00005, 1.2], 1e-4).values == (1, 1, 2)
    assert patt_with_tol([-3.0, 3.00001, 0.5]).values == (-2, 2, 1)


def test_pattern_matrix_examples():
    U = pattern_matrix(SlopePattern((-2, 1, 0, -1, 2)))
    np.testing.assert_array_equal(U[:, 0], [-1, 0, 0, 0, 1])
    np.testing.assert_array_equal(U[:, 1], [0, 1, 0, -1, 0])

    np.testing.assert_array_equal(pattern_matrix(SlopePattern((1,) * 4)), np.ones((4, 1)))

    U = pattern_matrix(SlopePattern((2, -2, 0, 1, 2, -1)))
    expected = np.array([[1, 0], [-1, 0], [0, 0], [0, 1], [1, 0], [0, -1]])
    np.testing.assert_array_equal(U, expected)


def test_pattern_matrix_of_zero_pattern():
    with pytest.raises(EmptyPattern):
        pattern_matrix(SlopePattern((0, 0)))


def test_abs_sorted_pattern_matrix_and_cluster_sizes():
    M = SlopePattern((-2, 1, 0, -1, 2))
    U_abs = abs_sorted_pattern_matrix(M)
    np.testing.assert_array_equal(U_abs, [[1, 0], [1, 0], [0, 1], [0, 1], [0, 0]])
    np.testing.assert_array_equal(cluster_sizes(M), [2, 2])


def test_reduce_clustered_design_and_parameter(rng):
    X = rng.standard_normal((6, 5))
    lam = np.array([5.0, 4.0, 3.0, 2.0, 1.0])
    red = reduce(X, lam, SlopePattern((1, 2, -2, 0, 1)))
    np.testing.assert_allclose(red.X_tilde[:, 0], X[:, 1] - X[:, 2])
    np.testing.assert_allclose(red.X_tilde[:, 1], X[:, 0] + X[:, 4])
    np.testing.assert_allclose(red.Lambda_tilde, [9.0, 5.0])
    assert red.kernel_trivial
    assert red.k == 2


def test_reduce_all_ones_and_identity_pattern(two_var_X):
    X = np.eye(3)
    red = reduce(X, [3.0, 2.0, 1.0], SlopePattern((1, 1, 1)))
    np.testing.assert_allclose(red.X_tilde[:, 0], X.sum(axis=1))
    np.testing.assert_allclose(red.Lambda_tilde, [6.0])

    red = reduce(two_var_X, [4.0, 2.0], SlopePattern((2, 1)))
    np.testing.assert_allclose(red.X_tilde, two_var_X)
    np.testing.assert_allclose(red.Lambda_tilde, [4.0, 2.0])


def test_reduce_dimension_mismatch(two_var_X):
    with pytest.raises(DimensionError):
        reduce(two_var_X, [3.0, 2.0, 1.0], SlopePattern((1, 1)))


def test_cluster_sum_identity(rng):
    lam = np.sort(rng.uniform(0.1, 5.0, 8))[::-1]
    M = SlopePattern((3, 0, -1, 2, 0, 3, 1, 0))
    red = reduce(rng.standard_normal((10, 8)), lam, M)
    assert red.Lambda_tilde.sum() == pytest.approx(lam[:5].sum())
    assert np.all(np.diff(red.Lambda_tilde) < 0)


def test_synthesize_examples():
    b = synthesize(SlopePattern((2, -2, 0, 1, 2, -1)), [4.7, 1.8])
    np.testing.assert_allclose(b, [4.7, -4.7, 0, 1.8, 4.7, -1.8])
    np.testing.assert_allclose(synthesize(SlopePattern((1,)), [2.5]), [2.5])
    np.testing.assert_allclose(synthesize(SlopePattern((2, 1)), [5.0, 3.0]), [5.0, 3.0])
    with pytest.raises(InvalidClusterValues):
        synthesize(SlopePattern((2, 1)), [3.0, 5.0])
    with pytest.raises(InvalidClusterValues):
        synthesize(SlopePattern((2, 1)), [1.0])


def test_synthesize_round_trip(rng):
    for _ in range(200):
        p = int(rng.integers(1, 9))
        b = rng.integers(-3, 4, p).astype(float)
        if not np.any(b):
            b[0] = 1.0
        M = patt(b)
        s = np.sort(rng.uniform(0.1, 10.0, M.k))[::-1]
        if np.any(np.diff(s) >= 0):
            continue
        assert patt(synthesize(M, s)) == M


def test_patt_sign_order_and_scale_invariance(rng):
    for _ in range(100):
        b = np.round(rng.standard_normal(7), 1)
        M = patt(b).as_array()
        np.testing.assert_array_equal(np.sign(M), np.sign(b))
        absb, absm = np.abs(b), np.abs(M)
        assert np.array_equal(absb[:, None] < absb[None, :], absm[:, None] < absm[None, :])
        assert patt(3.5 * b) == patt(b)
