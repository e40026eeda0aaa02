"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 runtime error.  Output files are
written atomically, so a failing command never leaves a partial file.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

import numpy as np

from .dataio import (
    apply_scaling,
    fit_scaling,
    load_model,
    read_csv,
    read_table,
    save_model,
    write_csv,
    write_table,
)
from .errors import InvalidInputError, KPlaneError
from .harness import ALGOS, CvSpec, run_cv
from .model import PiecewiseModel, mse, predict
from .solvers import MixtureConfig, SolverConfig, fit_em, fit_kplane, fit_mkplane
from .synth import SynthSpec, generate

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _nonneg_float(s):
    try:
        v = float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {s!r}") from None
    if not np.isfinite(v) or v < 0:
        raise argparse.ArgumentTypeError(f"must be a finite value >= 0, got {s}")
    return v


def _pos_float(s):
    v = _nonneg_float(s)
    if v == 0:
        raise argparse.ArgumentTypeError("must be > 0")
    return v


def _pos_int(s):
    try:
        v = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {s!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {s}")
    return v


def _int_list(s):
    try:
        vals = [int(p) for p in s.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from None
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError("k values must be integers >= 1")
    return vals


def _float_list(s):
    return [_nonneg_float(p) for p in s.split(",") if p.strip()]


def _on_off(s):
    if s not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return s == "on"


def _range(s):
    try:
        a, b = (float(p) for p in s.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected A:B, got {s!r}") from None
    if not (np.isfinite(a) and np.isfinite(b)):
        raise argparse.ArgumentTypeError("range bounds must be finite")
    return a, b


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="kplane", description="Piecewise-linear regression by (modified) K-plane fitting.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic benchmark dataset")
    s.add_argument("--problem", type=int, choices=(1, 2), required=True)
    s.add_argument("--n", type=_pos_int, required=True)
    s.add_argument("--noise-std", type=_nonneg_float, default=0.1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)

    f = sub.add_parser("fit", help="fit a model and write it to a model file")
    f.add_argument("--algo", choices=ALGOS, default="mkplane")
    f.add_argument("--k", type=_pos_int, required=True)
    f.add_argument("--gamma", type=_nonneg_float, default=100.0)
    f.add_argument("--restarts", type=_pos_int, default=10)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--scale", type=_on_off, default=False, metavar="{on,off}")
    f.add_argument("--input", required=True)
    f.add_argument("--model-out", required=True)
    f.add_argument("--epsilon", type=_pos_float, default=0.01)
    f.add_argument("--anneal", type=_pos_float, default=1.0)

    pr = sub.add_parser("predict", help="append a y_hat column to a CSV file")
    pr.add_argument("--model", required=True)
    pr.add_argument("--input", required=True)
    pr.add_argument("--out", required=True)

    e = sub.add_parser("eval", help="print the MSE of a model on a CSV file")
    e.add_argument("--model", required=True)
    e.add_argument("--input", required=True)

    c = sub.add_parser("cv", help="repeated k-fold cross-validation over K and gamma")
    c.add_argument("--algo", choices=ALGOS, default="mkplane")
    c.add_argument("--k-list", type=_int_list, default=[2, 3, 4, 5])
    c.add_argument("--gamma-list", type=_float_list, default=None)
    c.add_argument("--folds", type=_pos_int, default=10)
    c.add_argument("--repeats", type=_pos_int, default=10)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--restarts", type=_pos_int, default=10)
    c.add_argument("--scale", type=_on_off, default=True, metavar="{on,off}")
    c.add_argument("--input", required=True)
    c.add_argument("--out", required=True)

    d = sub.add_parser("dump-function", help="sample a 1-d model on a uniform grid")
    d.add_argument("--model", required=True)
    d.add_argument("--range", type=_range, required=True, dest="bounds", metavar="A:B")
    d.add_argument("--steps", type=_pos_int, required=True)
    d.add_argument("--out", required=True)
    return p


def format_mse(v: float) -> str:
    return f"{v:.6f}" if v == 0 else f"{v:.6g}"


def _load_piecewise(path) -> PiecewiseModel:
    model = load_model(path)
    if not isinstance(model, PiecewiseModel):
        raise InvalidInputError(f"{path}: expected a piecewise model, found a mixture model")
    return model


def cmd_synth(args):
    data = generate(SynthSpec(args.problem, args.n, args.noise_std, args.seed))
    write_csv(args.out, data)
    print(f"wrote {data.n} points to {args.out}")


def cmd_fit(args):
    raw = read_csv(args.input)
    if raw.n < args.k:
        raise InvalidInputError(f"need N >= K, but the input has N={raw.n} points and K={args.k}")
    data = apply_scaling(raw, fit_scaling(raw)) if args.scale else raw
    base = dict(k=args.k, gamma=args.gamma, restarts=args.restarts, seed=args.seed)
    if args.algo == "em":
        if args.anneal > 1:
            raise UsageError("--anneal must lie in (0, 1]")
        config = MixtureConfig(**base, epsilon=args.epsilon, anneal_factor=args.anneal,
                               epsilon_min=min(1e-8, args.epsilon))
        mixture, model, trace = fit_em(data, config)
        print(f"negative log-likelihood: {trace.final_objective!r}")
        print(f"final epsilon: {mixture.epsilon!r}")
    else:
        fit = fit_kplane if args.algo == "kplane" else fit_mkplane
        model, trace = fit(data, SolverConfig(**base))
        print(f"objective: {trace.final_objective!r}")
    print(f"iterations: {trace.iterations}")
    print(f"termination: {trace.termination.value}")
    print("cluster sizes: " + " ".join(str(int(s)) for s in trace.final_sizes))
    print(f"train MSE: {format_mse(mse(model, raw))}")
    save_model(model, args.model_out)


def _feature_matrix(path, d):
    header, M = read_table(path)
    if M.shape[1] == d + 1:
        return header, M, M[:, :d]
    if M.shape[1] == d:
        return header, M, M
    raise InvalidInputError(f"model expects {d} features but {path} has {M.shape[1]} columns")


def cmd_predict(args):
    model = _load_piecewise(args.model)
    header, M, X = _feature_matrix(args.input, model.d)
    yhat = predict(model, X)
    write_table(args.out, header + ["y_hat"], [*M.T, yhat])


def cmd_eval(args):
    model = _load_piecewise(args.model)
    data = read_csv(args.input)
    if data.d != model.d:
        raise InvalidInputError(f"model expects {model.d} features but data has {data.d}")
    print(format_mse(mse(model, data)))


def cmd_cv(args):
    data = read_csv(args.input)
    if args.folds > data.n:
        raise UsageError(f"--folds ({args.folds}) exceeds the number of points ({data.n})")
    if args.folds < 2:
        raise UsageError("--folds must be >= 2")
    if args.algo == "em":
        config = MixtureConfig(restarts=args.restarts, seed=args.seed)
    else:
        config = SolverConfig(restarts=args.restarts, seed=args.seed)
    spec = CvSpec(algo=args.algo, k_values=tuple(args.k_list), folds=args.folds,
                  repeats=args.repeats, seed=args.seed, scale=args.scale, config=config)
    if args.gamma_list:
        spec = replace(spec, gamma_grid=tuple(args.gamma_list))
    report = run_cv(data, spec)
    report.write_csv(args.out)
    print(report.summary())


def cmd_dump(args):
    model = _load_piecewise(args.model)
    if model.d != 1:
        raise InvalidInputError(f"dump-function needs a 1-d model, this one has d={model.d}")
    a, b = args.bounds
    xs = np.array([a]) if args.steps == 1 else np.linspace(a, b, args.steps)
    write_table(args.out, ["x", "y_hat"], [xs, predict(model, xs[:, None])])


COMMANDS = {"synth": cmd_synth, "fit": cmd_fit, "predict": cmd_predict, "eval": cmd_eval,
            "cv": cmd_cv, "dump-function": cmd_dump}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"kplane {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (KPlaneError, OSError) as exc:
        print(f"kplane {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
