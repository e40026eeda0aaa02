"""K-plane, modified K-plane and soft-EM fitting procedures.

The two hard algorithms share one alternating loop: assign every point to the
cluster with the lowest cost, refit each cluster's plane by least squares and
its centroid by the mean, repeat.  With ``gamma = 0`` the centroid term
vanishes and the loop is plain K-plane regression.

The soft variant replaces the hard assignment by responsibilities under a
mixture whose component log-density is ``-(residual^2 + gamma*dist^2)/(2*eps)``;
as ``eps -> 0`` its updates coincide with the hard ones.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

import numpy as np

from . import numerics
from .errors import InvalidInputError, MonotonicityError, ValidationError
from .model import (
    Assignment,
    Dataset,
    FitTrace,
    PiecewiseModel,
    Termination,
    augment,
    cost_matrix,
    nearest_centroid,
    sq_distances,
)

log = logging.getLogger(__name__)

MIN_RESPONSIBILITY = 1e-12


class EmptyClusterPolicy(str, enum.Enum):
    RESEED_WORST_POINT = "reseed-worst-point"
    DROP_CLUSTER = "drop-cluster"


@dataclass
class SolverConfig:
    k: int = 2
    gamma: float = 0.0
    max_iters: int = 100
    objective_rel_tol: float = 1e-10
    restarts: int = 10
    seed: int = 0
    empty_cluster_policy: EmptyClusterPolicy = EmptyClusterPolicy.RESEED_WORST_POINT

    def __post_init__(self):
        self.empty_cluster_policy = EmptyClusterPolicy(self.empty_cluster_policy)
        if self.k < 1:
            raise InvalidInputError(f"k must be >= 1, got {self.k}")
        if not (np.isfinite(self.gamma) and self.gamma >= 0):
            raise InvalidInputError(f"gamma must be finite and >= 0, got {self.gamma}")
        if self.max_iters < 1:
            raise InvalidInputError("max_iters must be positive")
        if self.restarts < 1:
            raise InvalidInputError("restarts must be positive")
        if self.objective_rel_tol < 0:
            raise InvalidInputError("objective_rel_tol must be >= 0")


@dataclass
class MixtureConfig(SolverConfig):
    epsilon: float = 0.01
    anneal_factor: float = 1.0
    epsilon_min: float = 1e-8

    def __post_init__(self):
        super().__post_init__()
        if not 0 < self.anneal_factor <= 1:
            raise InvalidInputError(f"anneal_factor must lie in (0, 1], got {self.anneal_factor}")
        if not self.epsilon_min > 0:
            raise InvalidInputError("epsilon_min must be > 0")
        if not self.epsilon >= self.epsilon_min:
            raise InvalidInputError(
                f"epsilon ({self.epsilon}) must be >= epsilon_min ({self.epsilon_min})"
            )


@dataclass(frozen=True)
class MixtureModel:
    alphas: np.ndarray
    coef: np.ndarray
    centroids: np.ndarray
    epsilon: float
    gamma: float
    scaling: object = None

    def __post_init__(self):
        alphas = np.asarray(self.alphas, dtype=np.float64).reshape(-1)
        coef = np.asarray(self.coef, dtype=np.float64)
        mu = np.asarray(self.centroids, dtype=np.float64)
        if coef.ndim != 2 or mu.ndim != 2 or len(alphas) != coef.shape[0] or mu.shape != (
            coef.shape[0], coef.shape[1] - 1
        ):
            raise ValidationError("mixture alphas, planes and centroids disagree in shape")
        if not all(np.all(np.isfinite(a)) for a in (alphas, coef, mu)):
            raise ValidationError("mixture parameters must be finite")
        if np.any(alphas < 0) or abs(alphas.sum() - 1.0) > 1e-12:
            raise ValidationError("mixing weights must be nonnegative and sum to 1")
        if not self.epsilon > 0 or not self.gamma >= 0:
            raise ValidationError("mixture needs epsilon > 0 and gamma >= 0")
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "coef", coef)
        object.__setattr__(self, "centroids", mu)

    @property
    def k(self) -> int:
        return len(self.alphas)

    @classmethod
    def from_piecewise(cls, model: PiecewiseModel, epsilon: float, gamma: float | None = None):
        k = model.k
        return cls(np.full(k, 1.0 / k), model.coef, model.centroids, epsilon,
                   model.gamma if gamma is None else gamma, model.scaling)


# -- initialisation ------------------------------------------------------------

def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) % 2**64, int(stream)])


def _kmeanspp_indices(X, k, rng) -> np.ndarray:
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    taken = np.zeros(n, dtype=bool)
    taken[chosen[0]] = True
    d2 = sq_distances(X, X[chosen[0]][None, :])[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            # all remaining points coincide with a seed
            idx = int(rng.choice(np.flatnonzero(~taken)))
        chosen.append(idx)
        taken[idx] = True
        d2 = np.minimum(d2, sq_distances(X, X[idx][None, :])[:, 0])
    return np.array(chosen)


def init(data: Dataset, config: SolverConfig, restart_index: int = 0) -> PiecewiseModel:
    """Seed K distinct points by k-means++ and fit a plane on each seed's Voronoi cell."""
    k = config.k
    if data.n < k:
        raise InvalidInputError(f"need at least k={k} points, got N={data.n}")
    X, y = data.features, data.targets
    Xa = augment(X)
    seeds = _kmeanspp_indices(X, k, _rng(config.seed, restart_index))
    mu = X[seeds].copy()
    cell = nearest_centroid(X, mu)
    coef = np.empty((k, data.d + 1))
    for j in range(k):
        members = np.flatnonzero(cell == j)
        if members.size == 0:
            members = seeds[j:j + 1]
        coef[j] = numerics.lstsq(Xa[members], y[members])
    return PiecewiseModel(coef, mu, config.gamma, data.scaling)


# -- hard alternating loop -----------------------------------------------------

def _refit(Xa, X, y, labels, k):
    coef = np.empty((k, Xa.shape[1]))
    for j in range(k):
        m = labels == j
        coef[j] = numerics.lstsq(Xa[m], y[m])
    counts = np.bincount(labels, minlength=k)
    mu = np.zeros((k, X.shape[1]))
    np.add.at(mu, labels, X)
    return coef, mu / counts[:, None]


def _repair_empty(labels, C, k, policy):
    """Apply the empty-cluster policy.  Returns (labels, k, n_reseeded, n_dropped)."""
    sizes = np.bincount(labels, minlength=k)
    if sizes.min() > 0:
        return labels, k, 0, 0
    if policy is EmptyClusterPolicy.DROP_CLUSTER:
        keep = np.flatnonzero(sizes > 0)
        remap = np.full(k, -1)
        remap[keep] = np.arange(len(keep))
        return remap[labels], len(keep), 0, k - len(keep)
    labels = labels.copy()
    point_cost = C[np.arange(len(labels)), labels]
    reseeded = 0
    for j in np.flatnonzero(sizes == 0):
        donors = sizes[labels] >= 2
        n_star = int(np.argmax(np.where(donors, point_cost, -np.inf)))
        sizes[labels[n_star]] -= 1
        labels[n_star] = j
        sizes[j] = 1
        point_cost[n_star] = -np.inf
        reseeded += 1
    return labels, k, reseeded, 0


def _slack(value: float) -> float:
    return 1e-9 * max(1.0, abs(value))


def _alternate(data: Dataset, coef, mu, gamma: float, config: SolverConfig, start_labels=None):
    X, y = data.features, data.targets
    Xa = augment(X)
    n = data.n
    rows = np.arange(n)
    k = coef.shape[0] if coef is not None else int(start_labels.max()) + 1
    trace = FitTrace()

    if start_labels is not None:
        labels = np.asarray(start_labels, dtype=np.intp)
        # treat the given partition as S^0; E^0 is measured after the first refit
        C = np.zeros((n, k))
        E = np.inf
    else:
        C = cost_matrix(X, y, coef, mu, gamma)
        labels = np.argmin(C, axis=1)
        E = float(np.sum(C[rows, labels]))
        trace.objective_per_iter.append(E)
        trace.sizes_per_iter.append(np.bincount(labels, minlength=k))

    termination = Termination.MAX_ITERS
    for it in range(1, config.max_iters + 1):
        labels_fit, k, reseeded, dropped = _repair_empty(labels, C, k, config.empty_cluster_policy)
        trace.reseeds += reseeded
        trace.dropped += dropped
        coef, mu = _refit(Xa, X, y, labels_fit, k)
        C = cost_matrix(X, y, coef, mu, gamma)
        E_mid = float(np.sum(C[rows, labels_fit]))
        new_labels = np.argmin(C, axis=1)
        E_new = float(np.sum(C[rows, new_labels]))
        if E_mid > E + _slack(E) or E_new > E_mid + _slack(E_mid):
            raise MonotonicityError(
                f"objective increased at iteration {it}: {E!r} -> {E_mid!r} -> {E_new!r}"
            )
        trace.objective_per_iter.append(E_new)
        trace.sizes_per_iter.append(np.bincount(new_labels, minlength=k))
        trace.iterations = it
        labels_prev = labels_fit
        labels = new_labels
        if np.array_equal(new_labels, labels_prev):
            termination = Termination.PARTITIONS_STABLE
            break
        if np.isfinite(E) and E - E_new <= config.objective_rel_tol * abs(E):
            termination = Termination.OBJECTIVE_STAGNANT
            break
        E = E_new

    trace.termination = termination
    trace.final_sizes = np.bincount(labels, minlength=k)
    trace.labels = labels
    return coef, mu, labels, trace


def _run_restarts(data: Dataset, config: SolverConfig, gamma: float):
    if data.n < config.k:
        raise InvalidInputError(f"need at least k={config.k} points, got N={data.n}")
    best = None
    for r in range(config.restarts):
        start = init(data, config, r)
        coef, mu, labels, trace = _alternate(data, start.coef, start.centroids, gamma, config)
        trace.restart = r
        if best is None or trace.final_objective < best[3].final_objective:
            best = (coef, mu, labels, trace)
    return best


def _centroids_from_labels(X, labels, fallback):
    mu = np.array(fallback, dtype=np.float64, copy=True)
    for j in range(mu.shape[0]):
        m = labels == j
        if m.any():
            mu[j] = X[m].mean(axis=0)
    return mu


def fit_kplane(data: Dataset, config: SolverConfig):
    """Plain K-plane regression (residual-only assignment), best of ``config.restarts``.

    The returned centroids are the means of the final clusters so the model
    can predict with the nearest-centroid rule.
    """
    coef, mu, labels, trace = _run_restarts(data, config, 0.0)
    mu = _centroids_from_labels(data.features, labels, mu)
    return PiecewiseModel(coef, mu, 0.0, data.scaling), trace


def fit_mkplane(data: Dataset, config: SolverConfig):
    """Modified K-plane regression, best of ``config.restarts`` restarts.

    Raises :class:`MonotonicityError` if an iteration ever increases the
    objective beyond rounding slack.
    """
    coef, mu, labels, trace = _run_restarts(data, config, config.gamma)
    return PiecewiseModel(coef, mu, config.gamma, data.scaling), trace


def refine(data: Dataset, start, config: SolverConfig, gamma: float | None = None):
    """Run the hard alternating loop once from a given start.

    ``start`` is either a :class:`PiecewiseModel` (used as the initial
    parameters) or an integer label vector (used as the initial partition).
    """
    gamma = config.gamma if gamma is None else gamma
    if isinstance(start, PiecewiseModel):
        coef, mu, labels, trace = _alternate(data, start.coef, start.centroids, gamma, config)
    else:
        labels0 = np.asarray(start, dtype=np.intp)
        if labels0.shape != (data.n,) or labels0.min() < 0:
            raise InvalidInputError("initial labels must be a nonnegative vector of length N")
        coef, mu, labels, trace = _alternate(data, None, None, gamma, config, start_labels=labels0)
    return PiecewiseModel(coef, mu, gamma, data.scaling), trace


def hard_update(data: Dataset, assignment: Assignment):
    """Least-squares planes and mean centroids for a fixed partition."""
    k = len(assignment.sizes)
    if assignment.sizes.min() == 0:
        raise InvalidInputError("every cluster needs at least one point")
    return _refit(data.augmented, data.features, data.targets, assignment.labels, k)


# -- soft EM -------------------------------------------------------------------

def _e_step(X, y, alphas, coef, mu, gamma, epsilon):
    """Responsibilities, per-point cost matrix and incomplete-data NLL (without log L)."""
    C = cost_matrix(X, y, coef, mu, gamma)
    with np.errstate(divide="ignore"):
        logits = np.log(alphas)[None, :] - C / (2.0 * epsilon)
    shift = logits.max(axis=1, keepdims=True)
    P = np.exp(logits - shift)
    norm = P.sum(axis=1, keepdims=True)
    R = P / norm
    nll = -float(np.sum(shift[:, 0] + np.log(norm[:, 0])))
    return R, C, nll


def em_e_step(data: Dataset, model: MixtureModel) -> np.ndarray:
    """N x K posterior membership probabilities; rows sum to one."""
    R, _, _ = _e_step(data.features, data.targets, model.alphas, model.coef,
                      model.centroids, model.gamma, model.epsilon)
    return R


def negative_log_likelihood(data: Dataset, model: MixtureModel) -> float:
    _, _, nll = _e_step(data.features, data.targets, model.alphas, model.coef,
                        model.centroids, model.gamma, model.epsilon)
    return nll


def _soft_repair(R, C, policy):
    totals = R.sum(axis=0)
    empty = totals < MIN_RESPONSIBILITY
    if not empty.any():
        return R, 0, 0
    if policy is EmptyClusterPolicy.DROP_CLUSTER:
        R = R[:, ~empty]
        return R / R.sum(axis=1, keepdims=True), 0, int(empty.sum())
    R = R.copy()
    hard = np.argmax(R, axis=1)
    sizes = np.bincount(hard, minlength=R.shape[1])
    if C is None:
        point_cost = -R.max(axis=1)
    else:
        point_cost = C[np.arange(len(hard)), hard].copy()
    for j in np.flatnonzero(empty):
        donors = (sizes[hard] >= 2) & (R[:, j] < 1.0)
        n_star = int(np.argmax(np.where(donors, point_cost, -np.inf)))
        sizes[hard[n_star]] -= 1
        hard[n_star] = j
        sizes[j] += 1
        R[n_star] = 0.0
        R[n_star, j] = 1.0
        point_cost[n_star] = -np.inf
    return R, int(empty.sum()), 0


def em_m_step(data: Dataset, responsibilities, policy=EmptyClusterPolicy.RESEED_WORST_POINT,
              costs=None):
    """Mixing weights, weighted least-squares planes and weighted-mean centroids.

    Returns ``(alphas, coef, centroids)``.  A component whose total
    responsibility is below 1e-12 is handled by the empty-cluster policy; for
    reseeding, ``costs`` (the E-step cost matrix) picks the worst-explained
    point, otherwise the least confidently assigned point is used.
    """
    R = np.asarray(responsibilities, dtype=np.float64)
    if R.ndim != 2 or R.shape[0] != data.n:
        raise InvalidInputError("responsibility matrix must be N x K")
    if np.any(R < 0) or np.max(np.abs(R.sum(axis=1) - 1.0)) > 1e-9:
        raise InvalidInputError("responsibility rows must be nonnegative and sum to 1")
    R, _, _ = _soft_repair(R, costs, EmptyClusterPolicy(policy))
    return _m_step(data.augmented, data.features, data.targets, R)


def _m_step(Xa, X, y, R):
    n, k = R.shape
    totals = R.sum(axis=0)
    alphas = totals / n
    alphas = alphas / alphas.sum()
    coef = np.empty((k, Xa.shape[1]))
    for j in range(k):
        coef[j] = numerics.lstsq(Xa, y, weights=R[:, j])
    mu = (R.T @ X) / totals[:, None]
    return alphas, coef, mu


def harden(data: Dataset, mixture: MixtureModel,
           policy=EmptyClusterPolicy.RESEED_WORST_POINT) -> tuple[PiecewiseModel, np.ndarray]:
    """Argmax-responsibility partition refit with the hard updates."""
    R, C, _ = _e_step(data.features, data.targets, mixture.alphas, mixture.coef,
                      mixture.centroids, mixture.gamma, mixture.epsilon)
    labels = np.argmax(R, axis=1)
    labels, k, _, _ = _repair_empty(labels, C, mixture.k, EmptyClusterPolicy(policy))
    coef, mu = _refit(data.augmented, data.features, data.targets, labels, k)
    return PiecewiseModel(coef, mu, mixture.gamma, data.scaling), labels


def _em_run(data: Dataset, start: PiecewiseModel, config: MixtureConfig):
    X, y = data.features, data.targets
    Xa = augment(X)
    k = start.k
    alphas = np.full(k, 1.0 / k)
    coef, mu = start.coef, start.centroids
    gamma, eps = config.gamma, config.epsilon
    trace = FitTrace()
    trace.epsilon_per_iter = [eps]

    R, C, nll = _e_step(X, y, alphas, coef, mu, gamma, eps)
    trace.objective_per_iter.append(nll)
    termination = Termination.MAX_ITERS
    for it in range(1, config.max_iters + 1):
        R, reseeded, dropped = _soft_repair(R, C, config.empty_cluster_policy)
        trace.reseeds += reseeded
        trace.dropped += dropped
        alphas, coef, mu = _m_step(Xa, X, y, R)
        eps_next = max(eps * config.anneal_factor, config.epsilon_min)
        labels_before = np.argmax(R, axis=1)
        R, C, nll_new = _e_step(X, y, alphas, coef, mu, gamma, eps_next)
        trace.objective_per_iter.append(nll_new)
        trace.epsilon_per_iter.append(eps_next)
        trace.iterations = it
        settled = eps_next == eps
        eps = eps_next
        if settled and abs(nll - nll_new) <= config.objective_rel_tol * abs(nll):
            termination = Termination.OBJECTIVE_STAGNANT
            break
        if settled and np.array_equal(np.argmax(R, axis=1), labels_before) and np.all(
            (R == 0) | (R == 1)
        ):
            termination = Termination.PARTITIONS_STABLE
            break
        nll = nll_new
    trace.termination = termination
    mixture = MixtureModel(alphas, coef, mu, eps, gamma, data.scaling)
    trace.final_sizes = np.bincount(np.argmax(R, axis=1), minlength=len(alphas))
    return mixture, trace


def fit_em(data: Dataset, config: MixtureConfig):
    """Soft EM for the centroid-gated mixture of linear regressions.

    Each restart starts from :func:`init`'s parameters with uniform mixing
    weights.  The restart with the lowest final negative log-likelihood wins.

    Returns ``(mixture, hardened_model, trace)`` where ``hardened_model`` is
    the piecewise model refit on the argmax-responsibility partition.
    """
    if data.n < config.k:
        raise InvalidInputError(f"need at least k={config.k} points, got N={data.n}")
    best = None
    for r in range(config.restarts):
        start = init(data, config, r)
        mixture, trace = _em_run(data, start, config)
        trace.restart = r
        if best is None or trace.final_objective < best[1].final_objective:
            best = (mixture, trace)
    mixture, trace = best
    hardened, labels = harden(data, mixture, config.empty_cluster_policy)
    trace.labels = labels
    return mixture, hardened, trace

