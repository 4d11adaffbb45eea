import itertools

import numpy as np
import pytest

from slope_recovery.src.errors import DimensionError, InvalidTuning
from slope_recovery.src.pattern import SlopePattern, patt
from slope_recovery.src.sorted_l1 import (TuningSequence,
                                          affine_span_residual,
                                          cumulative_tightness,
                                          dual_sorted_l1_norm,
                                          in_relative_interior,
                                          prox_sorted_l1, sorted_l1_norm,
                                          subdiff_membership,
                                          subdiff_membership_cumsum)

LAM = np.array([4.0, 2.0])


def _random_lambda(rng, p):
    lam = np.sort(rng.uniform(0.2, 3.0, p))[::-1]
    lam[:-1] += 1e-3 * np.arange(p - 1, 0, -1)
    return lam


def test_tuning_sequence_validation():
    TuningSequence([3.0, 3.0, 1.0])
    with pytest.raises(InvalidTuning):
        TuningSequence([1.0, 2.0])
    with pytest.raises(InvalidTuning):
        TuningSequence([2.0, -1.0])
    with pytest.raises(InvalidTuning):
        TuningSequence([0.0, 0.0])
    with pytest.raises(InvalidTuning):
        TuningSequence([2.0, 1.0], alpha=0.0)
    with pytest.raises(InvalidTuning):
        TuningSequence([2.0, 2.0]).require_strict()
    scaled = TuningSequence([4.0, 2.0]).scaled(0.5)
    np.testing.assert_allclose(scaled.effective, [2.0, 1.0])


def test_sorted_l1_norm_examples():
    assert sorted_l1_norm([0.0, 0.0], LAM) == 0.0
    assert sorted_l1_norm([5.0, 3.0], LAM) == pytest.approx(26.0)
    assert sorted_l1_norm([3.0, -5.0], LAM) == pytest.approx(26.0)
    assert sorted_l1_norm([5.0, 3.0], TuningSequence(LAM, alpha=0.5)) == pytest.approx(13.0)
    with pytest.raises(DimensionError):
        sorted_l1_norm([1.0, 2.0, 3.0], LAM)


def test_dual_norm_examples():
    assert dual_sorted_l1_norm([4.0, 2.4], LAM) == pytest.approx(6.4 / 6, abs=1e-12)
    assert dual_sorted_l1_norm([4.0, 2.0], LAM) == pytest.approx(1.0, abs=1e-12)
    assert dual_sorted_l1_norm([0.0, 0.0], LAM) == 0.0


def test_dual_norm_on_rows():
    rows = np.array([[4.0, 2.4], [4.0, 2.0], [0.0, 0.0]])
    np.testing.assert_allclose(dual_sorted_l1_norm(rows, LAM), [6.4 / 6, 1.0, 0.0])


def test_norm_axioms_and_hoelder(rng):
    for _ in range(200):
        p = int(rng.integers(1, 8))
        lam = _random_lambda(rng, p)
        a, b = rng.standard_normal(p), rng.standard_normal(p)
        c = float(rng.standard_normal())
        assert sorted_l1_norm(a + b, lam) <= sorted_l1_norm(a, lam) + sorted_l1_norm(b, lam) + 1e-12
        assert sorted_l1_norm(c * a, lam) == pytest.approx(abs(c) * sorted_l1_norm(a, lam))
        assert sorted_l1_norm(a, lam) > 0
        perm = rng.permutation(p)
        signs = rng.choice([-1.0, 1.0], p)
        assert sorted_l1_norm(signs * a[perm], lam) == pytest.approx(sorted_l1_norm(a, lam))
        assert abs(a @ b) <= sorted_l1_norm(b, lam) * dual_sorted_l1_norm(a, lam) + 1e-10


def test_prox_examples():
    np.testing.assert_array_equal(prox_sorted_l1([0.0, 0.0], LAM), [0.0, 0.0])
    np.testing.assert_allclose(prox_sorted_l1([5.0], [2.0]), [3.0])
    np.testing.assert_allclose(prox_sorted_l1([5.0, 5.0], LAM), [2.0, 2.0])
    np.testing.assert_allclose(prox_sorted_l1([-5.0, 1.0], [1.0, 1.0]), [-4.0, 0.0])
    with pytest.raises(InvalidTuning):
        prox_sorted_l1([1.0, 1.0], [1.0, 2.0])


def test_prox_matches_grid_minimizer(rng):
    grid = np.linspace(-6.0, 6.0, 1201)
    step = grid[1] - grid[0]
    for _ in range(10):
        y = rng.uniform(-5.0, 5.0, 2)
        lam = _random_lambda(rng, 2)
        z1, z2 = np.meshgrid(grid, grid, indexing="ij")
        absz = np.abs(np.stack([z1, z2]))
        top = np.maximum(absz[0], absz[1])
        bottom = np.minimum(absz[0], absz[1])
        vals = 0.5 * ((z1 - y[0]) ** 2 + (z2 - y[1]) ** 2) + lam[0] * top + lam[1] * bottom
        i, j = np.unravel_index(np.argmin(vals), vals.shape)
        np.testing.assert_allclose(prox_sorted_l1(y, lam), [grid[i], grid[j]], atol=2 * step)


def test_prox_optimality_certificate_and_nonexpansive(rng, tol):
    for _ in range(200):
        p = int(rng.integers(1, 8))
        lam = _random_lambda(rng, p)
        y = 3.0 * rng.standard_normal(p)
        z = prox_sorted_l1(y, lam)
        # the prox output is exact, so the pattern is read without tolerance
        assert subdiff_membership(y - z, patt(np.round(z, 12)), lam, tol, slack=1e-9).result
        y2 = y + rng.standard_normal(p)
        assert np.linalg.norm(prox_sorted_l1(y2, lam) - z) <= np.linalg.norm(y2 - y) + 1e-12


def test_subdiff_membership_examples(tol):
    assert subdiff_membership(LAM, np.array([3.0, 1.0]), LAM, tol).result
    query = subdiff_membership([4.0, 2.4], SlopePattern((1, 0)), LAM, tol)
    assert not query
    assert query.dual_value == pytest.approx(6.4 / 6)
    assert subdiff_membership([4.0, 2.0], SlopePattern((2, 1)), LAM, tol)


def test_subdiff_membership_zero_pattern(tol):
    assert subdiff_membership([3.0, 1.0], SlopePattern((0, 0)), LAM, tol)
    assert not subdiff_membership([5.0, 1.0], SlopePattern((0, 0)), LAM, tol)


def test_subdiff_membership_needs_strict_lambda(tol):
    with pytest.raises(InvalidTuning):
        subdiff_membership([1.0, 1.0], SlopePattern((1, 1)), [2.0, 2.0], tol)


def test_cumsum_membership_examples(tol):
    lam = np.array([5.0, 3.0, 2.0])
    b = np.array([3.0, 2.0, 1.0])
    assert subdiff_membership_cumsum(lam, b, lam, tol)
    assert not subdiff_membership_cumsum(np.array([5.0, 3.0, 0.0]), b, lam, tol)
    assert not subdiff_membership([5.0, 3.0, 0.0], b, lam, tol)


def test_cumsum_membership_agrees_with_affine_form(rng, tol):
    for _ in range(3000):
        p = int(rng.integers(1, 6))
        lam = np.round(_random_lambda(rng, p), 2) + 0.01 * np.arange(p, 0, -1)
        b = rng.integers(-2, 3, p).astype(float)
        # half the candidates are built to sit on the subdifferential face
        if rng.random() < 0.5 and np.any(b):
            order = np.argsort(-np.abs(b), kind="stable")
            v = np.zeros(p)
            v[order] = lam
            v = np.where(b != 0, np.sign(b), 1.0) * v
        else:
            v = np.round(rng.uniform(-1.2, 1.2, p) * lam[0], 1)
        assert subdiff_membership_cumsum(v, b, lam, tol) == subdiff_membership(v, b, lam, tol).result


def test_lambda_in_subdiff_only_for_sorted_nonnegative(rng, tol):
    lam = np.array([4.0, 3.0, 2.0, 1.0])
    for b in itertools.product([0.0, 1.0, 2.0, -1.0], repeat=4):
        b = np.array(b)
        if subdiff_membership(lam, b, lam, tol).result:
            assert np.all(b >= 0)
            assert np.all(np.diff(b) <= 0)


def test_same_pattern_same_verdict(rng, tol):
    lam = np.array([5.0, 4.0, 2.5, 1.0])
    for _ in range(200):
        a = rng.integers(-2, 3, 4).astype(float)
        b = 1.7 * a
        v = rng.uniform(-5.0, 5.0, 4)
        assert subdiff_membership(v, a, lam, tol).result == subdiff_membership(v, b, lam, tol).result


def test_relative_interior_examples(tol):
    M = SlopePattern((2, 1))
    assert in_relative_interior([4.0, 2.0], M, LAM, tol)
    assert not in_relative_interior([4.0, 1.9], M, LAM, tol)
    lam3 = np.array([3.0, 2.0, 1.0])
    # every cumulative sum tight while the pattern has two clusters
    assert subdiff_membership([3.0, 2.0, 1.0], SlopePattern((2, 1, 0)), lam3, tol)
    assert not in_relative_interior([3.0, 2.0, 1.0], SlopePattern((2, 1, 0)), lam3, tol)
    assert in_relative_interior([3.0, 2.0, 0.5], SlopePattern((2, 1, 0)), lam3, tol)


def test_cumulative_tightness(tol):
    assert cumulative_tightness([4.0, 2.0], LAM, tol) == (1, 2)
    assert cumulative_tightness([3.0, 3.0], LAM, tol) == (2,)


def test_affine_span_residual_examples():
    assert affine_span_residual([4.0, 2.0], SlopePattern((2, 1)), LAM) == 0.0
    assert affine_span_residual([4.0, 99.0], SlopePattern((1, 0)), LAM) == 0.0
    assert affine_span_residual([5.0, 0.0], SlopePattern((1, 0)), LAM) == pytest.approx(1.0)


def _interior_point(M, lam):
    """Cluster-wise averages of Λ in rank order, half the tail average on the zero cluster."""
    values = np.asarray(M.values, dtype=float)
    mags = np.abs(values)
    order = np.argsort(-mags, kind="stable")
    v = np.empty(M.p)
    start = 0
    for level in range(M.k, 0, -1):
        count = int(np.sum(mags == level))
        idx = order[start:start + count]
        v[idx] = np.sign(values[idx]) * lam[start:start + count].mean()
        start += count
    if start < M.p:
        v[order[start:]] = 0.5 * lam[start:].mean()
    return v


def test_different_patterns_are_told_apart(rng, tol):
    lam = np.array([5.0, 4.0, 2.5, 1.0])
    distinct = 0
    for _ in range(200):
        a = rng.integers(-2, 3, 4).astype(float)
        b = rng.integers(-2, 3, 4).astype(float)
        if not np.any(a) or not np.any(b):
            continue
        Ma, Mb = patt(a), patt(b)
        v_a, v_b = _interior_point(Ma, lam), _interior_point(Mb, lam)
        assert in_relative_interior(v_a, Ma, lam, tol)
        assert in_relative_interior(v_b, Mb, lam, tol)
        if Ma == Mb:
            assert subdiff_membership(v_a, b, lam, tol).result
            continue
        distinct += 1
        assert not subdiff_membership(v_a, b, lam, tol).result or not subdiff_membership(v_b, a, lam, tol).result
    assert distinct > 100
