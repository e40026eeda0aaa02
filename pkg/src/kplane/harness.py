"""Repeated k-fold cross-validation over K and gamma grids.

For every repeat the data is reshuffled with ``seed ^ repeat`` and split into
folds; every (K, gamma) cell is evaluated on the same folds.  Scaling, when
enabled, is fit on each fold's training part only.  MSE statistics are taken
over all repeat x fold runs; timings cover the fit call alone.
"""
from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .dataio import apply_scaling, atomic_write, fit_scaling
from .errors import InvalidInputError, KPlaneError
from .model import Dataset, ScalingParams, mse
from .solvers import MixtureConfig, SolverConfig, fit_em, fit_kplane, fit_mkplane

log = logging.getLogger(__name__)

ALGOS = ("kplane", "mkplane", "em")
DEFAULT_GAMMA_GRID = (0.01, 0.1, 1.0, 10.0, 100.0, 1000.0)
REPORT_COLUMNS = ("algo", "k", "gamma", "mse_mean", "mse_std", "time_mean", "time_std")


def kfold_split(n: int, folds: int, seed: int):
    """Seeded k-fold partition of ``range(n)``.

    Returns a list of ``(train_idx, test_idx)`` pairs of sorted index arrays;
    test sizes differ by at most one.
    """
    if folds < 2:
        raise InvalidInputError(f"folds must be >= 2, got {folds}")
    if folds > n:
        raise InvalidInputError(f"folds ({folds}) cannot exceed the number of points ({n})")
    perm = np.random.default_rng(int(seed) % 2**64).permutation(n)
    out = []
    for part in np.array_split(perm, folds):
        test = np.sort(part)
        mask = np.ones(n, dtype=bool)
        mask[test] = False
        out.append((np.flatnonzero(mask), test))
    return out


def fit_algo(algo: str, data: Dataset, config: SolverConfig):
    """Fit with the named algorithm and return ``(piecewise_model, trace)``."""
    if algo == "kplane":
        return fit_kplane(data, config)
    if algo == "mkplane":
        return fit_mkplane(data, config)
    if algo == "em":
        if not isinstance(config, MixtureConfig):
            config = MixtureConfig(**vars(config))
        _, hardened, trace = fit_em(data, config)
        return hardened, trace
    raise InvalidInputError(f"unknown algorithm {algo!r}; choose from {', '.join(ALGOS)}")


@dataclass
class CvSpec:
    algo: str = "mkplane"
    k_values: tuple = (2, 3, 4, 5)
    gamma_grid: tuple = DEFAULT_GAMMA_GRID
    folds: int = 10
    repeats: int = 10
    seed: int = 0
    scale: bool = True
    config: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.algo not in ALGOS:
            raise InvalidInputError(f"unknown algorithm {self.algo!r}")
        if self.folds < 2:
            raise InvalidInputError("folds must be >= 2")
        if self.repeats < 1:
            raise InvalidInputError("repeats must be >= 1")
        if not self.k_values or any(k < 1 for k in self.k_values):
            raise InvalidInputError("every k must be >= 1")
        if self.algo != "kplane" and (not self.gamma_grid or any(g < 0 for g in self.gamma_grid)):
            raise InvalidInputError("gamma grid must be non-empty and nonnegative")

    def gammas(self):
        # plain K-plane ignores gamma; report it once as 0
        return (0.0,) if self.algo == "kplane" else tuple(float(g) for g in self.gamma_grid)


@dataclass
class FoldRun:
    repeat: int
    fold: int
    k: int
    gamma: float
    mse: float
    seconds: float
    scaling: ScalingParams | None = None
    error: str | None = None


@dataclass
class CvRow:
    algo: str
    k: int
    gamma: float
    mse_mean: float
    mse_std: float
    time_mean: float
    time_std: float
    n_runs: int
    n_failed: int


@dataclass
class CvReport:
    rows: list[CvRow]
    chosen_gamma: dict
    runs: list[FoldRun] = field(default_factory=list, repr=False)

    def row(self, k, gamma) -> CvRow:
        for r in self.rows:
            if r.k == k and r.gamma == gamma:
                return r
        raise KeyError((k, gamma))

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in self.rows:
            w.writerow([r.algo, r.k, repr(r.gamma), repr(r.mse_mean), repr(r.mse_std),
                        repr(r.time_mean), repr(r.time_std)])
        return buf.getvalue()

    def write_csv(self, path):
        with atomic_write(path, newline="", encoding="utf-8") as fh:
            fh.write(self.to_csv_text())

    def summary(self) -> str:
        lines = [f"{'algo':8s} {'K':>3s} {'gamma':>9s} {'MSE':>22s} {'time (s)':>20s}"]
        for r in self.rows:
            failed = f"  ({r.n_failed} failed)" if r.n_failed else ""
            lines.append(
                f"{r.algo:8s} {r.k:3d} {r.gamma:9.4g} {r.mse_mean:12.4f} +/- {r.mse_std:<7.4f}"
                f" {r.time_mean:9.4f} +/- {r.time_std:<7.4f}{failed}"
            )
        for k, g in self.chosen_gamma.items():
            lines.append(f"K={k}: best gamma {g:g}")
        return "\n".join(l.rstrip() for l in lines)


def _stats(values):
    a = np.asarray(values, dtype=np.float64)
    if a.size == 0:
        return float("nan"), float("nan")
    return float(a.mean()), float(a.std())


def run_cv(data: Dataset, spec: CvSpec) -> CvReport:
    if spec.folds > data.n:
        raise InvalidInputError(f"folds ({spec.folds}) cannot exceed the number of points ({data.n})")
    gammas = spec.gammas()
    runs: list[FoldRun] = []
    for rep in range(spec.repeats):
        for fi, (tr_idx, te_idx) in enumerate(kfold_split(data.n, spec.folds, spec.seed ^ rep)):
            train, test = data.subset(tr_idx), data.subset(te_idx)
            scaling = None
            if spec.scale:
                scaling = fit_scaling(train)
                train = apply_scaling(train, scaling)
            for k in spec.k_values:
                for g in gammas:
                    cfg = replace(spec.config, k=k, gamma=g)
                    t0 = time.perf_counter()
                    try:
                        model, _ = fit_algo(spec.algo, train, cfg)
                    except KPlaneError as exc:
                        log.warning("fit failed (repeat %d fold %d K=%d gamma=%g): %s",
                                    rep, fi, k, g, exc)
                        runs.append(FoldRun(rep, fi, k, g, float("nan"), 0.0, scaling, str(exc)))
                        continue
                    seconds = time.perf_counter() - t0
                    runs.append(FoldRun(rep, fi, k, g, mse(model, test), seconds, scaling))

    rows = []
    chosen = {}
    for k in spec.k_values:
        best = None
        for g in gammas:
            cell = [r for r in runs if r.k == k and r.gamma == g]
            ok = [r for r in cell if r.error is None]
            m_mean, m_std = _stats([r.mse for r in ok])
            t_mean, t_std = _stats([r.seconds for r in ok])
            rows.append(CvRow(spec.algo, k, g, m_mean, m_std, t_mean, t_std, len(cell),
                              len(cell) - len(ok)))
            if ok and (best is None or m_mean < best[0]):
                best = (m_mean, g)
        if best is not None:
            chosen[k] = best[1]
    return CvReport(rows, chosen, runs)


def select_gamma(data: Dataset, config: SolverConfig, grid, folds: int = 10, seed: int = 0,
                 algo: str = "mkplane", scale: bool = False) -> float:
    """Pick gamma for ``config.k`` by one round of k-fold CV (lowest mean MSE)."""
    spec = CvSpec(algo=algo, k_values=(config.k,), gamma_grid=tuple(grid), folds=folds,
                  repeats=1, seed=seed, scale=scale, config=config)
    report = run_cv(data, spec)
    if config.k not in report.chosen_gamma:
        raise KPlaneError("every gamma in the grid failed to fit")
    return report.chosen_gamma[config.k]
