import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kplane.errors import DegenerateSystemError, InvalidInputError
from kplane.numerics import SymSystem, accumulate, accumulate_batch, fallback_ridge, lstsq, solve_spd

from oracles import pinv_solve


def _system(X, y, w=None):
    Xa = np.hstack([X, np.ones((len(y), 1))])
    return accumulate_batch(SymSystem(Xa.shape[1]), Xa, y, w)


def test_accumulate_single_outer_product():
    s = accumulate(SymSystem(2), [1.0, 1.0], 2.0, 1.0)
    np.testing.assert_array_equal(s.A, [[1, 1], [1, 1]])
    np.testing.assert_array_equal(s.b, [2, 2])
    assert s.n == 1


def test_zero_weight_leaves_system_unchanged():
    s = accumulate(SymSystem(2), [1.0, 3.0], 2.0)
    A, b = s.A.copy(), s.b.copy()
    accumulate(s, [5.0, 1.0], 9.0, weight=0.0)
    np.testing.assert_array_equal(s.A, A)
    np.testing.assert_array_equal(s.b, b)


def test_two_points_match_matrix_product():
    s = SymSystem(2)
    accumulate(s, [0.0, 1.0], 1.0)
    accumulate(s, [1.0, 1.0], 3.0)
    Xa = np.array([[0.0, 1.0], [1.0, 1.0]])
    y = np.array([1.0, 3.0])
    np.testing.assert_array_equal(s.A, Xa.T @ Xa)
    np.testing.assert_array_equal(s.b, Xa.T @ y)
    np.testing.assert_array_equal(s.A, [[1, 1], [1, 2]])
    # b = 1*(0,1) + 3*(1,1) with the bias entry last
    np.testing.assert_array_equal(s.b, [3, 4])


def test_accumulate_rejects_bad_input():
    with pytest.raises(InvalidInputError):
        accumulate(SymSystem(2), [1.0, 2.0, 3.0], 1.0)
    with pytest.raises(InvalidInputError):
        accumulate(SymSystem(2), [1.0, 2.0], 1.0, weight=-1.0)
    with pytest.raises(InvalidInputError):
        accumulate_batch(SymSystem(2), np.ones((3, 3)), np.ones(3))


def test_batch_equals_pointwise(rng):
    X = rng.normal(size=(20, 3))
    y = rng.normal(size=20)
    w = rng.uniform(size=20)
    s1 = SymSystem(3)
    for xi, yi, wi in zip(X, y, w):
        accumulate(s1, xi, yi, wi)
    s2 = accumulate_batch(SymSystem(3), X, y, w)
    np.testing.assert_allclose(s1.A, s2.A, rtol=1e-12)
    np.testing.assert_allclose(s1.b, s2.b, rtol=1e-12)
    assert s1.n == s2.n == 20
    np.testing.assert_array_equal(s2.A, s2.A.T)


def test_merge_adds_systems(rng):
    X = rng.normal(size=(10, 2))
    y = rng.normal(size=10)
    a = accumulate_batch(SymSystem(2), X[:4], y[:4])
    b = accumulate_batch(SymSystem(2), X[4:], y[4:])
    whole = accumulate_batch(SymSystem(2), X, y)
    m = a.merge(b)
    np.testing.assert_allclose(m.A, whole.A, rtol=1e-12)
    assert m.n == 10


def test_exact_line():
    w = solve_spd(_system(np.array([[0.0], [1.0], [2.0]]), np.array([1.0, 3.0, 5.0])))
    np.testing.assert_allclose(w, [2.0, 1.0], atol=1e-12)


def test_constant_targets(rng):
    X = rng.uniform(-3, 3, size=(12, 2))
    w = solve_spd(_system(X, np.full(12, 7.0)))
    np.testing.assert_allclose(w, [0.0, 0.0, 7.0], atol=1e-10)


def test_matches_pseudo_inverse_oracle(rng):
    for _ in range(20):
        X = rng.normal(size=(5, 2))
        y = rng.normal(size=5)
        w = solve_spd(_system(X, y))
        ref = pinv_solve(np.hstack([X, np.ones((5, 1))]), y)
        np.testing.assert_allclose(w, ref, rtol=1e-8, atol=1e-10)


def test_normal_equation_residual_bound(rng):
    X = rng.normal(size=(30, 4))
    y = rng.normal(size=30)
    s = _system(X, y)
    for ridge in (0.0, 0.1, 10.0):
        w = solve_spd(s, ridge)
        res = (s.A + ridge * np.eye(5)) @ w - s.b
        assert np.linalg.norm(res) <= 1e-8 * (1 + np.linalg.norm(s.b))


def test_residual_orthogonal_to_regressors(rng):
    X = rng.normal(size=(40, 3))
    y = X @ [1.0, -2.0, 0.5] + rng.normal(size=40)
    Xa = np.hstack([X, np.ones((40, 1))])
    w = lstsq(Xa, y)
    r = Xa @ w - y
    assert np.max(np.abs(Xa.T @ r)) <= 1e-6 * np.linalg.norm(y)


def test_deterministic(rng):
    X = rng.normal(size=(15, 3))
    y = rng.normal(size=15)
    a = solve_spd(_system(X, y))
    b = solve_spd(_system(X, y))
    assert a.tobytes() == b.tobytes()


def test_ridge_shrinks_monotonically(rng):
    X = rng.normal(size=(8, 3))
    y = rng.normal(size=8) * 5
    s = _system(X, y)
    norms = [np.linalg.norm(solve_spd(s, r)) for r in (0.0, 1e-3, 1e-2, 0.1, 1, 10, 100)]
    assert all(b <= a + 1e-12 for a, b in zip(norms, norms[1:]))


def test_singular_system_uses_fallback_ridge():
    # one point, two parameters: rank 1
    s = accumulate(SymSystem(2), [2.0, 1.0], 3.0)
    w = solve_spd(s)
    assert np.all(np.isfinite(w))
    assert fallback_ridge(s) == pytest.approx(1e-8 * 5.0 / 2)
    # the ridged solution still interpolates the single point
    assert w @ [2.0, 1.0] == pytest.approx(3.0, rel=1e-6)


def test_duplicate_points_rank_deficient():
    X = np.array([[1.0, 2.0]] * 4)
    w = lstsq(np.hstack([X, np.ones((4, 1))]), np.full(4, 5.0))
    assert np.all(np.isfinite(w))


def test_all_zero_system_is_degenerate():
    with pytest.raises(DegenerateSystemError):
        solve_spd(SymSystem(3))


def test_negative_ridge_rejected():
    with pytest.raises(InvalidInputError):
        solve_spd(accumulate(SymSystem(1), [1.0], 1.0), ridge=-1)


@settings(max_examples=60, deadline=None)
@given(st.integers(3, 25), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_symmetric_psd_and_solution_finite(n, d, seed):
    r = np.random.default_rng(seed)
    X = r.normal(size=(n, d))
    y = r.normal(size=n)
    s = _system(X, y, r.uniform(0, 2, size=n))
    np.testing.assert_array_equal(s.A, s.A.T)
    assert np.linalg.eigvalsh(s.A).min() >= -1e-9 * np.trace(s.A)
    assert np.all(np.isfinite(solve_spd(s)))
