"""Datasets, piecewise-affine models and the hard-assignment machinery.

Conventions: the augmented input is ``[x; 1]`` (bias last) and cluster
indices are 0-based.  Every argmin over clusters resolves ties to the lowest
index, both when partitioning training data and when predicting.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, ValidationError


@dataclass(frozen=True)
class ScalingParams:
    """Per-feature ``(min, max)`` recorded on a training split."""

    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        mins = np.asarray(self.mins, dtype=np.float64).reshape(-1)
        maxs = np.asarray(self.maxs, dtype=np.float64).reshape(-1)
        if mins.shape != maxs.shape:
            raise ValidationError("scaling mins and maxs differ in length")
        if not (np.all(np.isfinite(mins)) and np.all(np.isfinite(maxs))):
            raise ValidationError("scaling bounds must be finite")
        if np.any(mins > maxs):
            raise ValidationError("scaling requires min <= max for every feature")
        object.__setattr__(self, "mins", mins)
        object.__setattr__(self, "maxs", maxs)

    @property
    def dim(self) -> int:
        return len(self.mins)

    def transform(self, X) -> np.ndarray:
        """Map raw features affinely so the training range becomes [-1, 1].

        Constant features map to 0. Values outside the training range are not
        clamped.
        """
        X = np.asarray(X, dtype=np.float64)
        span = self.maxs - self.mins
        safe = np.where(span > 0, span, 1.0)
        out = 2.0 * (X - self.mins) / safe - 1.0
        return np.where(span > 0, out, 0.0)

    def __eq__(self, other):
        if not isinstance(other, ScalingParams):
            return NotImplemented
        return np.array_equal(self.mins, other.mins) and np.array_equal(self.maxs, other.maxs)

    __hash__ = None


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    targets: np.ndarray
    scaling: ScalingParams | None = None

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        y = np.array(self.targets, dtype=np.float64).reshape(-1)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise InvalidInputError(f"features must be an N x d matrix with N, d >= 1, got shape {X.shape}")
        if y.shape[0] != X.shape[0]:
            raise InvalidInputError(f"{X.shape[0]} feature rows but {y.shape[0]} targets")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise InvalidInputError("dataset contains non-finite values")
        if self.scaling is not None:
            if self.scaling.dim != X.shape[1]:
                raise InvalidInputError("scaling dimension does not match features")
            if np.any(np.abs(X) > 1.0 + 1e-12):
                raise ValidationError("scaled features must lie in [-1, 1]")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "targets", y)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def augmented(self) -> np.ndarray:
        return augment(self.features)

    def subset(self, idx) -> Dataset:
        return Dataset(self.features[idx], self.targets[idx], self.scaling)


def augment(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return np.hstack([X, np.ones((X.shape[0], 1))])


@dataclass(frozen=True)
class AffineModel:
    w: np.ndarray
    b: float

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64).reshape(-1)
        if not (np.all(np.isfinite(w)) and np.isfinite(self.b)):
            raise ValidationError("affine model has non-finite parameters")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", float(self.b))

    def __call__(self, x):
        return np.asarray(x, dtype=np.float64) @ self.w + self.b

    @property
    def augmented(self) -> np.ndarray:
        return np.append(self.w, self.b)


@dataclass(frozen=True)
class PiecewiseModel:
    """K hyperplanes plus the K centroids that select among them.

    ``coef`` is a ``(K, d + 1)`` array whose rows are ``[w_k; b_k]``.
    """

    coef: np.ndarray
    centroids: np.ndarray
    gamma: float = 0.0
    scaling: ScalingParams | None = None

    def __post_init__(self):
        coef = np.array(self.coef, dtype=np.float64)
        mu = np.array(self.centroids, dtype=np.float64)
        if coef.ndim != 2 or coef.shape[0] < 1 or coef.shape[1] < 2:
            raise ValidationError(f"coef must have shape (K, d+1) with K >= 1, got {coef.shape}")
        if mu.ndim == 1:
            mu = mu[:, None]
        if mu.shape != (coef.shape[0], coef.shape[1] - 1):
            raise ValidationError(
                f"planes and centroids disagree: coef {coef.shape}, centroids {mu.shape}"
            )
        if not (np.all(np.isfinite(coef)) and np.all(np.isfinite(mu))):
            raise ValidationError("model parameters must be finite")
        if not (np.isfinite(self.gamma) and self.gamma >= 0):
            raise ValidationError(f"gamma must be finite and >= 0, got {self.gamma}")
        if self.scaling is not None and self.scaling.dim != mu.shape[1]:
            raise ValidationError("scaling dimension does not match model dimension")
        coef.setflags(write=False)
        mu.setflags(write=False)
        object.__setattr__(self, "coef", coef)
        object.__setattr__(self, "centroids", mu)
        object.__setattr__(self, "gamma", float(self.gamma))

    @classmethod
    def from_planes(cls, planes, centroids, gamma=0.0, scaling=None) -> PiecewiseModel:
        coef = np.array([p.augmented for p in planes])
        return cls(coef, centroids, gamma, scaling)

    @property
    def k(self) -> int:
        return self.coef.shape[0]

    @property
    def d(self) -> int:
        return self.centroids.shape[1]

    @property
    def planes(self) -> tuple[AffineModel, ...]:
        return tuple(AffineModel(c[:-1], c[-1]) for c in self.coef)


@dataclass(frozen=True)
class Assignment:
    labels: np.ndarray
    sizes: np.ndarray

    @classmethod
    def from_labels(cls, labels, k: int) -> Assignment:
        labels = np.asarray(labels, dtype=np.intp)
        if labels.size and (labels.min() < 0 or labels.max() >= k):
            raise InvalidInputError(f"labels must lie in 0..{k - 1}")
        return cls(labels, np.bincount(labels, minlength=k))


class Termination(str, enum.Enum):
    PARTITIONS_STABLE = "partitions-stable"
    OBJECTIVE_STAGNANT = "objective-stagnant"
    MAX_ITERS = "max-iters"


@dataclass
class FitTrace:
    objective_per_iter: list[float] = field(default_factory=list)
    sizes_per_iter: list[np.ndarray] = field(default_factory=list)
    iterations: int = 0
    termination: Termination | None = None
    final_sizes: np.ndarray | None = None
    restart: int = 0
    reseeds: int = 0
    dropped: int = 0
    labels: np.ndarray | None = None
    epsilon_per_iter: list[float] | None = None

    @property
    def final_objective(self) -> float:
        return self.objective_per_iter[-1]


# -- array-level kernels shared with the solvers ------------------------------

def residual_costs(Xa, y, coef) -> np.ndarray:
    """Squared residual of every point under every plane, shape (N, K)."""
    return (Xa @ coef.T - y[:, None]) ** 2


def sq_distances(X, centroids) -> np.ndarray:
    diff = X[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def cost_matrix(X, y, coef, centroids, gamma) -> np.ndarray:
    C = residual_costs(augment(X), y, coef)
    if gamma > 0:
        C = C + gamma * sq_distances(X, centroids)
    return C


def _check_dims(data: Dataset, model: PiecewiseModel):
    if data.d != model.d:
        raise InvalidInputError(f"model expects {model.d} features, data has {data.d}")


def model_space(model: PiecewiseModel, data: Dataset) -> np.ndarray:
    """Features of ``data`` expressed in the coordinates the model was fit in."""
    _check_dims(data, model)
    if data.scaling is not None:
        if model.scaling is not None and data.scaling != model.scaling:
            raise InvalidInputError("dataset was scaled with parameters different from the model's")
        return data.features
    if model.scaling is not None:
        return model.scaling.transform(data.features)
    return data.features


# -- public operations --------------------------------------------------------

def assign_hard(data: Dataset, model: PiecewiseModel, gamma: float | None = None) -> Assignment:
    """Put each point in the cluster minimising residual^2 + gamma * dist^2."""
    if gamma is None:
        gamma = model.gamma
    if gamma < 0:
        raise InvalidInputError("gamma must be >= 0")
    _check_dims(data, model)
    C = cost_matrix(data.features, data.targets, model.coef, model.centroids, gamma)
    return Assignment.from_labels(np.argmin(C, axis=1), model.k)


def objective(data: Dataset, model: PiecewiseModel, assignment: Assignment,
              gamma: float | None = None) -> float:
    if gamma is None:
        gamma = model.gamma
    _check_dims(data, model)
    labels = assignment.labels
    if labels.shape != (data.n,):
        raise InvalidInputError("assignment does not match dataset size")
    Xa = data.augmented
    r = np.einsum("nd,nd->n", Xa, model.coef[labels]) - data.targets
    per_point = r * r
    if gamma > 0:
        diff = data.features - model.centroids[labels]
        per_point = per_point + gamma * np.einsum("nd,nd->n", diff, diff)
    return float(np.sum(per_point))


def nearest_centroid(Z, centroids) -> np.ndarray:
    return np.argmin(sq_distances(Z, centroids), axis=1)


def predict(model: PiecewiseModel, x):
    """Evaluate the plane whose centroid is nearest to ``x``.

    ``x`` may be a single d-vector (returns a float) or an (M, d) array.
    Raw features are mapped through the model's stored scaling first.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0:
        x = x.reshape(1)
    single = x.ndim == 1 and x.shape[0] == model.d
    if single:
        Z = x[None, :]
    elif x.ndim == 1 and model.d == 1:
        Z = x[:, None]
    else:
        Z = x
    if Z.ndim != 2 or Z.shape[1] != model.d:
        raise InvalidInputError(f"model expects {model.d} features, got input of shape {x.shape}")
    if model.scaling is not None:
        Z = model.scaling.transform(Z)
    yhat = _predict_scaled(model, Z)
    return float(yhat[0]) if single else yhat


def _predict_scaled(model: PiecewiseModel, Z) -> np.ndarray:
    j = nearest_centroid(Z, model.centroids)
    return np.einsum("nd,nd->n", augment(Z), model.coef[j])


def predict_dataset(model: PiecewiseModel, data: Dataset) -> np.ndarray:
    return _predict_scaled(model, model_space(model, data))


def mse(model: PiecewiseModel, data: Dataset) -> float:
    if data.n == 0:
        raise InvalidInputError("cannot compute MSE on an empty dataset")
    err = predict_dataset(model, data) - data.targets
    return float(np.mean(err * err))
