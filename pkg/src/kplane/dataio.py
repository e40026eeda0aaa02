"""CSV datasets, feature scaling, model files and UCI ingestion.

CSV layout: a header row ``x1,...,xd,y`` followed by comma-separated decimal
numbers, one sample per row.  Model files are JSON documents carrying a
``schema_version`` field; floats are written with ``repr`` so they round-trip
exactly.
"""
from __future__ import annotations

import contextlib
import csv
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, ParseError, ValidationError
from .model import Dataset, PiecewiseModel, ScalingParams
from .solvers import MixtureModel

SCHEMA_VERSION = 1


@contextlib.contextmanager
def atomic_write(path, mode="w", **kw):
    """Write to a sibling temp file and rename it over ``path`` on success."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent or ".")
    try:
        with os.fdopen(fd, mode, **kw) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def _fmt(v) -> str:
    return repr(float(v))


# -- CSV ---------------------------------------------------------------------

def read_table(path):
    """Return ``(header, matrix)`` for a numeric CSV file with a header row."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InvalidInputError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, found {len(row)}", row=lineno)
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise ParseError(f"non-numeric value ({exc})", row=lineno) from None
    if not rows:
        raise InvalidInputError(f"{path}: no data rows")
    return header, np.array(rows, dtype=np.float64)


def read_csv(path) -> Dataset:
    header, M = read_table(path)
    if M.shape[1] < 2:
        raise InvalidInputError(f"{path}: need at least one feature column and a target column")
    try:
        return Dataset(M[:, :-1], M[:, -1])
    except InvalidInputError as exc:
        raise InvalidInputError(f"{path}: {exc}") from None


def write_table(path, header, columns):
    with atomic_write(path, newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([_fmt(v) for v in row])


def write_csv(path, data: Dataset):
    header = [f"x{i + 1}" for i in range(data.d)] + ["y"]
    write_table(path, header, [*data.features.T, data.targets])


# -- scaling -----------------------------------------------------------------

def fit_scaling(data: Dataset) -> ScalingParams:
    return ScalingParams(data.features.min(axis=0), data.features.max(axis=0))


def apply_scaling(data: Dataset, params: ScalingParams) -> Dataset:
    """Map features into [-1, 1] using ``params``; targets are left alone.

    The result records ``params``; it is only valid for the split the
    parameters were fit on (other splits may fall outside [-1, 1]).
    """
    if params.dim != data.d:
        raise InvalidInputError("scaling dimension does not match dataset")
    return Dataset(params.transform(data.features), data.targets, params)


def scale_features(data: Dataset, params: ScalingParams) -> np.ndarray:
    """Transform without recording; for held-out data that may leave [-1, 1]."""
    return params.transform(data.features)


# -- model files ---------------------------------------------------------------

def _scaling_doc(s):
    if s is None:
        return None
    return {"min": [float(v) for v in s.mins], "max": [float(v) for v in s.maxs]}


def model_to_dict(model) -> dict:
    if isinstance(model, PiecewiseModel):
        doc = {"schema_version": SCHEMA_VERSION, "kind": "piecewise", "k": model.k, "d": model.d,
               "gamma": model.gamma}
    elif isinstance(model, MixtureModel):
        doc = {"schema_version": SCHEMA_VERSION, "kind": "mixture", "k": model.k,
               "d": model.centroids.shape[1], "gamma": model.gamma,
               "epsilon": model.epsilon, "alphas": [float(a) for a in model.alphas]}
    else:
        raise TypeError(f"cannot serialise {type(model).__name__}")
    doc["planes"] = [{"w": [float(v) for v in c[:-1]], "b": float(c[-1])} for c in model.coef]
    doc["centroids"] = [[float(v) for v in m] for m in model.centroids]
    doc["scaling"] = _scaling_doc(model.scaling)
    return doc


def save_model(model, path):
    doc = model_to_dict(model)
    with atomic_write(path, encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, allow_nan=False)
        fh.write("\n")


def _require(doc, key, kind):
    if key not in doc:
        raise ParseError(f"model file missing field '{key}'")
    v = doc[key]
    if kind is float:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ParseError(f"field '{key}' must be a number")
        return float(v)
    if kind is int:
        if isinstance(v, bool) or not isinstance(v, int):
            raise ParseError(f"field '{key}' must be an integer")
        return v
    if not isinstance(v, kind):
        raise ParseError(f"field '{key}' has the wrong type")
    return v


def _floats(seq, what):
    try:
        out = np.array(seq, dtype=np.float64)
    except (TypeError, ValueError):
        raise ParseError(f"{what} must be numeric") from None
    return out


def model_from_dict(doc):
    if not isinstance(doc, dict):
        raise ParseError("model file must contain a JSON object")
    version = _require(doc, "schema_version", int)
    if version != SCHEMA_VERSION:
        raise ParseError(f"unsupported schema_version {version}")
    kind = _require(doc, "kind", str)
    k = _require(doc, "k", int)
    d = _require(doc, "d", int)
    gamma = _require(doc, "gamma", float)
    planes = _require(doc, "planes", list)
    try:
        coef = np.array([list(p["w"]) + [p["b"]] for p in planes], dtype=np.float64)
    except (KeyError, TypeError, ValueError):
        raise ParseError("planes must be objects with numeric 'w' and 'b'") from None
    centroids = _floats(_require(doc, "centroids", list), "centroids")
    sc = doc.get("scaling")
    scaling = None
    if sc is not None:
        if not isinstance(sc, dict) or "min" not in sc or "max" not in sc:
            raise ParseError("scaling must hold 'min' and 'max' lists")
        scaling = ScalingParams(_floats(sc["min"], "scaling.min"), _floats(sc["max"], "scaling.max"))
    if coef.shape[0] != k or centroids.shape[0] != k:
        raise ValidationError(f"invariant failed: expected {k} planes and {k} centroids")
    if coef.ndim != 2 or coef.shape[1] != d + 1 or centroids.ndim != 2 or centroids.shape[1] != d:
        raise ValidationError(f"invariant failed: plane/centroid dimension differs from d={d}")
    if kind == "piecewise":
        return PiecewiseModel(coef, centroids, gamma, scaling)
    if kind == "mixture":
        alphas = _floats(_require(doc, "alphas", list), "alphas")
        return MixtureModel(alphas, coef, centroids, _require(doc, "epsilon", float), gamma, scaling)
    raise ParseError(f"unknown model kind '{kind}'")


def load_model(path):
    """Load a model file, returning a PiecewiseModel or MixtureModel."""
    try:
        text = Path(path).read_text(encoding="utf-8")
        doc = json.loads(text, parse_constant=lambda c: math.nan)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: malformed model file ({exc.msg} at line {exc.lineno})") from None
    except UnicodeDecodeError:
        raise ParseError(f"{path}: model file is not UTF-8 text") from None
    return model_from_dict(doc)


# -- UCI datasets ----------------------------------------------------------------
# Files are supplied by the user; see README for the expected layouts.

ABALONE_SEX = {"M": 1.0, "F": 0.0, "I": -1.0}
UCI_DATASETS = ("housing", "abalone", "auto-mpg", "compactiv")


def _whitespace_rows(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                yield lineno, line


def load_housing(path) -> Dataset:
    """Boston housing: 13 whitespace-separated features, MEDV target last."""
    rows = []
    for lineno, line in _whitespace_rows(path):
        parts = line.split()
        if len(parts) != 14:
            raise ParseError(f"expected 14 fields, found {len(parts)}", row=lineno)
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise ParseError("non-numeric value", row=lineno) from None
    M = np.array(rows)
    return Dataset(M[:, :13], M[:, 13])


def load_abalone(path) -> Dataset:
    """Abalone: sex encoded ordinally (M=1, F=0, I=-1) plus 7 measurements; rings target."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if len(row) != 9:
                raise ParseError(f"expected 9 fields, found {len(row)}", row=lineno)
            sex = row[0].strip().upper()
            if sex not in ABALONE_SEX:
                raise ParseError(f"unknown sex code {row[0]!r}", row=lineno)
            try:
                rows.append([ABALONE_SEX[sex]] + [float(v) for v in row[1:]])
            except ValueError:
                raise ParseError("non-numeric value", row=lineno) from None
    M = np.array(rows)
    return Dataset(M[:, :8], M[:, 8])


def load_auto_mpg(path) -> Dataset:
    """Auto-mpg: 7 numeric features, mpg target; rows with missing horsepower are dropped."""
    rows = []
    for lineno, line in _whitespace_rows(path):
        numeric = line.split('"')[0].split()
        if len(numeric) != 8:
            raise ParseError(f"expected 8 numeric fields before the car name, found {len(numeric)}",
                             row=lineno)
        if "?" in numeric:
            continue
        try:
            vals = [float(v) for v in numeric]
        except ValueError:
            raise ParseError("non-numeric value", row=lineno) from None
        rows.append(vals[1:] + vals[:1])
    M = np.array(rows)
    return Dataset(M[:, :7], M[:, 7])


def load_compactiv(path) -> Dataset:
    """Computer activity (12-attribute variant): numeric columns, target last.

    Accepts whitespace- or comma-separated rows, optionally with a header.
    """
    rows = []
    for lineno, line in _whitespace_rows(path):
        parts = line.replace(",", " ").split()
        try:
            vals = [float(p) for p in parts]
        except ValueError:
            if not rows:
                continue  # header
            raise ParseError("non-numeric value", row=lineno) from None
        if len(vals) != 13:
            raise ParseError(f"expected 13 fields, found {len(vals)}", row=lineno)
        rows.append(vals)
    M = np.array(rows)
    return Dataset(M[:, :12], M[:, 12])


def load_uci(name: str, path) -> Dataset:
    loaders = {"housing": load_housing, "abalone": load_abalone,
               "auto-mpg": load_auto_mpg, "compactiv": load_compactiv}
    if name not in loaders:
        raise InvalidInputError(f"unknown dataset {name!r}; choose from {', '.join(loaders)}")
    return loaders[name](path)
