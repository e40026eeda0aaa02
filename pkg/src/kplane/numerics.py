"""Symmetric accumulate-and-solve for (weighted) least squares.

The solvers only ever need systems of size ``d + 1`` with ``d`` small, so the
normal equations are formed explicitly and solved by Cholesky factorisation.
A rank-deficient system (e.g. a cluster with fewer than ``d + 1`` points) is
retried with a small ridge proportional to the trace of ``A``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg.lapack import dpotrf, dpotrs

from .errors import DegenerateSystemError, InvalidInputError

# pivot^2 below this fraction of the largest diagonal entry counts as singular
_SINGULAR_RTOL = 1e-13
FALLBACK_RIDGE_SCALE = 1e-8
_TINY = np.finfo(float).tiny


@dataclass
class SymSystem:
    """Accumulator for ``A = sum w x x^T`` and ``b = sum w y x``."""

    dim: int
    A: np.ndarray = field(default=None)
    b: np.ndarray = field(default=None)
    n: int = 0

    def __post_init__(self):
        if self.dim < 1:
            raise InvalidInputError("system dimension must be >= 1")
        if self.A is None:
            self.A = np.zeros((self.dim, self.dim))
        if self.b is None:
            self.b = np.zeros(self.dim)

    def copy(self) -> SymSystem:
        return SymSystem(self.dim, self.A.copy(), self.b.copy(), self.n)

    def merge(self, other: SymSystem) -> SymSystem:
        if other.dim != self.dim:
            raise InvalidInputError(f"cannot merge systems of size {self.dim} and {other.dim}")
        return SymSystem(self.dim, self.A + other.A, self.b + other.b, self.n + other.n)


def accumulate(sys: SymSystem, x, y: float, weight: float = 1.0) -> SymSystem:
    """Add one (augmented) regressor row to ``sys`` in place and return it."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (sys.dim,):
        raise InvalidInputError(f"expected a vector of length {sys.dim}, got shape {x.shape}")
    if not weight >= 0:
        raise InvalidInputError(f"weight must be nonnegative, got {weight}")
    sys.A += weight * np.outer(x, x)
    sys.b += (weight * y) * x
    sys.n += 1
    return sys


def accumulate_batch(sys: SymSystem, X, y, weights=None) -> SymSystem:
    """Vectorised :func:`accumulate` over the rows of ``X``."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != sys.dim or y.shape != (X.shape[0],):
        raise InvalidInputError(
            f"expected X of shape (n, {sys.dim}) and y of shape (n,), got {X.shape} and {y.shape}"
        )
    if weights is None:
        Xw = X
    else:
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != y.shape or np.any(weights < 0):
            raise InvalidInputError("weights must be a nonnegative vector matching y")
        Xw = X * weights[:, None]
    A = Xw.T @ X
    # keep A exactly symmetric regardless of BLAS summation order
    sys.A += 0.5 * (A + A.T)
    sys.b += Xw.T @ y
    sys.n += X.shape[0]
    return sys


def _cholesky_solve(A, b):
    # raw LAPACK calls: these systems are tiny and solved thousands of times
    L, info = dpotrf(A, lower=1, clean=0)
    if info != 0:
        return None
    piv = L.diagonal() ** 2
    if piv.min() <= _SINGULAR_RTOL * max(A.diagonal().max(), _TINY):
        return None
    w, info = dpotrs(L, b, lower=1)
    return w if info == 0 else None


def fallback_ridge(sys: SymSystem) -> float:
    return FALLBACK_RIDGE_SCALE * float(np.trace(sys.A)) / sys.dim


def solve_spd(sys: SymSystem, ridge: float = 0.0) -> np.ndarray:
    """Solve ``(A + ridge I) w = b``.

    If the (ridged) matrix is numerically singular the solve is retried with
    ``ridge = 1e-8 * trace(A) / dim``, which handles clusters holding fewer
    points than parameters.

    Raises
    ------
    DegenerateSystemError
        If ``A`` is identically zero, or still singular after the fallback.
    """
    if ridge < 0:
        raise InvalidInputError(f"ridge must be nonnegative, got {ridge}")
    A = sys.A + ridge * np.eye(sys.dim) if ridge else sys.A
    w = _cholesky_solve(A, sys.b)
    if w is not None:
        return w
    r = max(ridge, fallback_ridge(sys))
    if r <= 0 or not np.isfinite(r):
        raise DegenerateSystemError("cannot solve an all-zero normal-equation system")
    w = _cholesky_solve(sys.A + r * np.eye(sys.dim), sys.b)
    if w is None:
        raise DegenerateSystemError("normal equations singular even after ridge fallback")
    return w


def lstsq(X, y, weights=None, ridge: float = 0.0) -> np.ndarray:
    """Least-squares fit of ``y ~ X`` through the normal equations."""
    X = np.asarray(X, dtype=np.float64)
    sys = accumulate_batch(SymSystem(X.shape[1]), X, y, weights)
    return solve_spd(sys, ridge)
