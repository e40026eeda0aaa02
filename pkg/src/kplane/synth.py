"""The two one-dimensional benchmark problems.

Problem 1 has four pieces on [0, 5] with a jump at x = 2; problem 2 has three
pieces on [0, 3] where the first and last share the affine map ``y = x`` and a
jump sits at x = 2.  Piece boundaries are left-closed.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .model import Dataset


class Problem(enum.IntEnum):
    P1 = 1
    P2 = 2


DOMAINS = {Problem.P1: (0.0, 5.0), Problem.P2: (0.0, 3.0)}

# ideal centroids of each piece for uniform sampling on the domain
PIECE_CENTERS = {Problem.P1: (0.5, 1.5, 2.75, 4.25), Problem.P2: (0.5, 1.5, 2.5)}
BREAKPOINTS = {Problem.P1: (1.0, 2.0, 3.5), Problem.P2: (1.0, 2.0)}


@dataclass(frozen=True)
class SynthSpec:
    problem: Problem
    n: int
    noise_std: float = 0.1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "problem", Problem(self.problem))
        if self.n < 1:
            raise InvalidInputError(f"n must be >= 1, got {self.n}")
        if not (np.isfinite(self.noise_std) and self.noise_std >= 0):
            raise InvalidInputError(f"noise_std must be >= 0, got {self.noise_std}")


def _p1(x):
    return np.select(
        [x < 1, x < 2, x < 3.5],
        [x, 2 - x, (7 - 2 * x) / 3],
        (2 * x - 7) / 3,
    )


def _p2(x):
    return np.select([x < 1, x < 2], [x, np.ones_like(x)], x)


def true_function(problem, x):
    """Noise-free target; accepts a scalar or an array of points in the domain."""
    problem = Problem(problem)
    lo, hi = DOMAINS[problem]
    xa = np.asarray(x, dtype=np.float64)
    if np.any(~np.isfinite(xa)) or np.any(xa < lo) or np.any(xa > hi):
        raise InvalidInputError(f"x must lie in [{lo}, {hi}] for problem {int(problem)}")
    y = _p1(xa) if problem is Problem.P1 else _p2(xa)
    return float(y) if np.ndim(x) == 0 else y


def generate(spec: SynthSpec) -> Dataset:
    rng = np.random.default_rng(int(spec.seed) % 2**64)
    lo, hi = DOMAINS[spec.problem]
    x = rng.uniform(lo, hi, size=spec.n)
    y = true_function(spec.problem, x)
    if spec.noise_std > 0:
        y = y + rng.normal(0.0, spec.noise_std, size=spec.n)
    return Dataset(x[:, None], y)


def train_test(problem, n_train: int, n_test: int, noise_std: float, seed: int):
    """Independent train and test draws derived from one seed."""
    s_train, s_test = np.random.SeedSequence(int(seed) % 2**64).generate_state(2, dtype=np.uint64)
    train = generate(SynthSpec(problem, n_train, noise_std, int(s_train)))
    test = generate(SynthSpec(problem, n_test, noise_std, int(s_test)))
    return train, test
