import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kplane.errors import InvalidInputError, ValidationError
from kplane.model import (
    AffineModel,
    Assignment,
    Dataset,
    PiecewiseModel,
    ScalingParams,
    assign_hard,
    mse,
    objective,
    predict,
)

from oracles import naive_assign, naive_objective


def _random_instance(r, n=10, d=2, k=3):
    X = r.normal(size=(n, d))
    y = r.normal(size=n)
    model = PiecewiseModel(r.normal(size=(k, d + 1)), r.normal(size=(k, d)), gamma=float(r.uniform(0, 3)))
    return Dataset(X, y), model


# -- Dataset / model invariants ----------------------------------------------

def test_dataset_validation():
    with pytest.raises(InvalidInputError):
        Dataset(np.zeros((0, 1)), np.zeros(0))
    with pytest.raises(InvalidInputError):
        Dataset([[1.0], [np.nan]], [1.0, 2.0])
    with pytest.raises(InvalidInputError):
        Dataset([[1.0], [2.0]], [1.0])
    s = ScalingParams([0.0], [1.0])
    with pytest.raises(ValidationError):
        Dataset([[1.5]], [0.0], s)
    d = Dataset([1.0, 2.0, 3.0], [0.0, 1.0, 2.0])
    assert (d.n, d.d) == (3, 1)
    with pytest.raises(ValueError):
        d.features[0, 0] = 9.0


def test_model_validation():
    with pytest.raises(ValidationError):
        PiecewiseModel(np.zeros((2, 2)), np.zeros((3, 1)))
    with pytest.raises(ValidationError):
        PiecewiseModel(np.zeros((2, 2)), np.zeros((2, 1)), gamma=-1)
    with pytest.raises(ValidationError):
        PiecewiseModel([[np.inf, 0.0]], [[0.0]])
    with pytest.raises(ValidationError):
        AffineModel([1.0, np.nan], 0.0)
    m = PiecewiseModel.from_planes([AffineModel([2.0], 1.0)], [[0.0]])
    assert m.k == 1 and m.d == 1
    assert m.planes[0](np.array([3.0])) == 7.0


def test_assignment_sizes():
    a = Assignment.from_labels([0, 2, 2, 1, 2], 4)
    np.testing.assert_array_equal(a.sizes, [1, 1, 3, 0])
    assert a.sizes.sum() == 5
    with pytest.raises(InvalidInputError):
        Assignment.from_labels([0, 4], 4)


# -- assign_hard ----------------------------------------------------------------

def test_single_cluster_gets_everything(rng):
    data = Dataset(rng.normal(size=(7, 2)), rng.normal(size=7))
    m = PiecewiseModel([[1.0, 2.0, 0.0]], [[0.0, 0.0]], gamma=5.0)
    assert np.all(assign_hard(data, m).labels == 0)


def test_residual_dominance_at_zero_gamma():
    data = Dataset([[1.0]], [3.0])
    m = PiecewiseModel([[1.0, 0.0], [2.0, 1.0]], [[1.0], [50.0]])
    assert assign_hard(data, m, 0.0).labels[0] == 1


def test_tie_breaks_to_lowest_index():
    m = PiecewiseModel([[1.0, 0.0], [1.0, 0.0]], [[0.0], [2.0]], gamma=1.0)
    data = Dataset([[1.8], [1.0]], [1.8, 1.0])
    np.testing.assert_array_equal(assign_hard(data, m).labels, [1, 0])


def test_assign_matches_naive_oracle(rng):
    for _ in range(30):
        data, m = _random_instance(rng, n=25, d=3, k=4)
        np.testing.assert_array_equal(
            assign_hard(data, m).labels,
            naive_assign(data.features, data.targets, m.coef, m.centroids, m.gamma),
        )


def test_gamma_zero_is_residual_only(rng):
    data, m = _random_instance(rng, n=40)
    resid = (data.augmented @ m.coef.T - data.targets[:, None]) ** 2
    np.testing.assert_array_equal(assign_hard(data, m, 0.0).labels, np.argmin(resid, axis=1))


def test_large_gamma_is_nearest_centroid(rng):
    X = rng.uniform(-1, 1, size=(60, 2))
    data = Dataset(X, rng.normal(size=60))
    m = PiecewiseModel(rng.normal(size=(3, 3)), [[-5.0, 0.0], [0.0, 5.0], [5.0, 0.0]])
    resid = (data.augmented @ m.coef.T - data.targets[:, None]) ** 2
    d2 = ((X[:, None, :] - m.centroids[None]) ** 2).sum(-1)
    srt = np.sort(d2, axis=1)
    gap = np.min(srt[:, 1] - srt[:, 0])
    gamma = 2 * (resid.max() - resid.min()) / gap
    np.testing.assert_array_equal(assign_hard(data, m, gamma).labels, np.argmin(d2, axis=1))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_assignment_is_optimal_given_parameters(seed):
    r = np.random.default_rng(seed)
    data, m = _random_instance(r, n=15, d=2, k=3)
    best = objective(data, m, assign_hard(data, m))
    for _ in range(20):
        alt = Assignment.from_labels(r.integers(0, 3, size=15), 3)
        assert best <= objective(data, m, alt) + 1e-12


# -- objective -----------------------------------------------------------------

def test_objective_perfect_fit_is_zero():
    data = Dataset([[0.0], [1.0], [2.0]], [1.0, 3.0, 5.0])
    m = PiecewiseModel([[2.0, 1.0]], [[1.0]])
    assert objective(data, m, assign_hard(data, m)) == 0.0


def test_objective_single_point():
    data = Dataset([[1.0, 2.0]], [4.0])
    m = PiecewiseModel([[1.0, 1.0, 0.5]], [[0.0, 0.0]], gamma=0.3)
    r = 1 + 2 + 0.5 - 4.0
    assert objective(data, m, Assignment.from_labels([0], 1)) == pytest.approx(r * r + 0.3 * 5.0)


def test_objective_matches_naive_loop(rng):
    for _ in range(30):
        data, m = _random_instance(rng, n=10, d=2, k=3)
        labels = rng.integers(0, 3, size=10)
        got = objective(data, m, Assignment.from_labels(labels, 3))
        ref = naive_objective(data.features, data.targets, m.coef, m.centroids, m.gamma, labels)
        assert got == pytest.approx(ref, rel=1e-12, abs=1e-14)


def test_objective_size_mismatch(rng):
    data, m = _random_instance(rng)
    with pytest.raises(InvalidInputError):
        objective(data, m, Assignment.from_labels([0, 1], 3))


# -- predict / mse ---------------------------------------------------------------

def test_predict_single_plane_is_affine():
    m = PiecewiseModel([[2.0, -1.0, 0.5]], [[9.0, 9.0]])
    assert predict(m, [1.0, 3.0]) == pytest.approx(2.0 - 3.0 + 0.5)


def test_predict_nearest_centroid_selects_plane():
    m = PiecewiseModel([[1.0, 0.0], [0.0, 5.0]], [[0.0], [2.0]])
    assert predict(m, [0.4]) == pytest.approx(0.4)
    assert predict(m, [1.9]) == 5.0
    assert predict(m, [1.0]) == 1.0
    np.testing.assert_allclose(predict(m, np.array([0.4, 1.9, 1.0])), [0.4, 5.0, 1.0])


def test_predict_dimension_mismatch():
    m = PiecewiseModel([[1.0, 1.0, 0.0]], [[0.0, 0.0]])
    with pytest.raises(InvalidInputError):
        predict(m, [1.0, 2.0, 3.0])
    with pytest.raises(InvalidInputError):
        mse(m, Dataset([[1.0]], [1.0]))


def test_predict_applies_model_scaling():
    s = ScalingParams([0.0], [10.0])
    # in scaled space: plane y = z, centroid at z = 0
    m = PiecewiseModel([[1.0, 0.0]], [[0.0]], scaling=s)
    assert predict(m, [10.0]) == pytest.approx(1.0)
    assert predict(m, [20.0]) == pytest.approx(3.0)


def test_predict_invariant_to_joint_permutation(rng):
    m = PiecewiseModel(rng.normal(size=(4, 3)), rng.normal(size=(4, 2)))
    perm = np.array([2, 0, 3, 1])
    p = PiecewiseModel(m.coef[perm], m.centroids[perm])
    Z = rng.normal(size=(200, 2))
    np.testing.assert_array_equal(predict(m, Z), predict(p, Z))


def test_mse_examples():
    data = Dataset([[0.0], [1.0]], [1.0, -1.0])
    zero = PiecewiseModel([[0.0, 0.0]], [[0.0]])
    assert mse(zero, data) == 1.0
    exact = PiecewiseModel([[-2.0, 1.0]], [[0.5]])
    assert mse(exact, data) == 0.0


def test_mse_rejects_foreign_scaling():
    m = PiecewiseModel([[1.0, 0.0]], [[0.0]], scaling=ScalingParams([0.0], [2.0]))
    other = Dataset([[0.5]], [0.0], ScalingParams([0.0], [4.0]))
    with pytest.raises(InvalidInputError):
        mse(m, other)
