"""Synthetic datasets, CSV ingestion and a small logistic baseline.

Synthetic data: ``y ~ Bernoulli(1/2)``, two-dimensional Gaussian features
per class, and a protected attribute that is either independent
(``U``: unbiased) or the sign of the first feature (``B``: biased).
Gaussians are drawn as ``mean + L @ standard_normal`` with ``L`` the Cholesky
factor of the class covariance; the standard normals come from numpy's
PCG64 generator (ziggurat method), so a seed fixes the data exactly.
"""

from __future__ import annotations

import contextlib
import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyDataset, SchemaError
from .tensor import FairnessConfusionTensor, tally

MEANS = {1: np.array([2.0, 2.0]), 0: np.array([-2.0, -2.0])}
COVARIANCES = {1: np.array([[5.0, 1.0], [1.0, 5.0]]), 0: np.array([[10.0, 1.0], [1.0, 3.0]])}
VARIANTS = ("U", "B")
DEFAULT_N = 20_000

PREDICTION_COLUMNS = ("y", "yhat", "a")
ADULT_SEX_MAPPING = {"Male": 1, "Female": 0}


@dataclass(frozen=True)
class SyntheticSpec:
    n: int = DEFAULT_N
    variant: str = "U"
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be at least 1")
        v = {"unbiased": "U", "biased": "B"}.get(str(self.variant).lower(), str(self.variant).upper())
        if v not in VARIANTS:
            raise ValueError(f"variant must be U or B, got {self.variant!r}")
        object.__setattr__(self, "variant", v)


@dataclass(frozen=True)
class LabeledDataset:
    x: np.ndarray
    y: np.ndarray
    a: np.ndarray
    ids: np.ndarray = field(default=None)
    feature_names: tuple = ("x0", "x1")

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        y = np.asarray(self.y, dtype=int)
        a = np.asarray(self.a, dtype=int)
        if not (len(x) == len(y) == len(a)):
            raise ValueError("x, y and a must have the same length")
        if np.any((y != 0) & (y != 1)) or np.any((a != 0) & (a != 1)):
            raise ValueError("y and a must be 0/1")
        ids = np.arange(len(y)) if self.ids is None else np.asarray(self.ids, dtype=np.int64)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    def __len__(self):
        return len(self.y)

    def tensor(self, yhat) -> FairnessConfusionTensor:
        return tally(self.y, yhat, self.a)


def gen_synthetic(spec: SyntheticSpec) -> LabeledDataset:
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    y = (rng.random(spec.n) < 0.5).astype(int)
    normals = rng.standard_normal((spec.n, 2))
    x = np.empty((spec.n, 2))
    for c in (0, 1):
        L = np.linalg.cholesky(COVARIANCES[c])
        idx = y == c
        x[idx] = MEANS[c] + normals[idx] @ L.T
    if spec.variant == "U":
        a = (rng.random(spec.n) < 0.5).astype(int)
    else:
        a = (x[:, 0] > 0).astype(int)
    return LabeledDataset(x, y, a)


# ---------------------------------------------------------------------------
# CSV


@dataclass(frozen=True)
class PredictionRecords:
    y: np.ndarray
    yhat: np.ndarray
    a: np.ndarray
    ids: np.ndarray

    def __len__(self):
        return len(self.y)

    def tensor(self) -> FairnessConfusionTensor:
        return tally(self.y, self.yhat, self.a)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


@contextlib.contextmanager
def _sink(target):
    """Open a path for writing, or pass an already-open text stream through."""
    if hasattr(target, "write"):
        yield target
    else:
        with open(target, "w", newline="") as fh:
            yield fh


def write_csv(ds: LabeledDataset, path, protected="a"):
    """Labeled feature file; ``path`` may also be an open text stream."""
    with _sink(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", *ds.feature_names, "y", protected])
        for i in range(len(ds)):
            w.writerow([int(ds.ids[i]), *(_fmt(v) for v in ds.x[i]), int(ds.y[i]), int(ds.a[i])])


def write_predictions(path, y, yhat, a, ids=None, extra=None):
    """Prediction CSV with columns ``id,y,yhat,a`` plus any ``extra`` columns."""
    n = len(y)
    ids = np.arange(n) if ids is None else ids
    extra = extra or {}
    with _sink(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "y", "yhat", "a", *extra.keys()])
        for i in range(n):
            w.writerow([int(ids[i]), int(y[i]), int(yhat[i]), int(a[i]), *(_fmt(col[i]) for col in extra.values())])


def _binary(value, column, row):
    v = value.strip()
    if v in ("0", "1"):
        return int(v)
    try:
        f = float(v)
    except ValueError:
        raise SchemaError(f"column {column!r}: expected 0 or 1, got {value!r}", row=row) from None
    if f in (0.0, 1.0):
        return int(f)
    raise SchemaError(f"column {column!r}: expected 0 or 1, got {value!r}", row=row)


def _protected(value, column, row, mapping):
    if mapping is None:
        return _binary(value, column, row)
    key = value.strip()
    if key not in mapping:
        raise SchemaError(f"column {column!r}: value {value!r} not in mapping {sorted(mapping)}", row=row)
    return int(mapping[key])


def _reader(path, required):
    fh = open(path, newline="")  # noqa: SIM115 (closed by the caller)
    reader = csv.DictReader(fh)
    header = reader.fieldnames or []
    missing = [c for c in required if c not in header]
    if missing:
        fh.close()
        raise SchemaError(f"missing column(s) {', '.join(missing)}; header is {', '.join(header)}")
    return fh, reader, header


def load_csv(path, schema="prediction", protected="a", mapping=None, label="y"):
    """Read a prediction file or a labeled feature file.

    ``schema="prediction"`` needs columns ``y, yhat`` and the protected
    column; ``schema="labeled"`` needs ``y`` and the protected column and
    treats every other column except ``id`` as a numeric feature.  A
    categorical protected column is binarized through ``mapping`` (for the
    Adult census file: ``{"Male": 1, "Female": 0}``).  Row numbers in errors
    count data rows from 1.
    """
    if schema not in ("prediction", "labeled"):
        raise ValueError(f"unknown schema {schema!r}")
    required = [label, protected] + (["yhat"] if schema == "prediction" else [])
    fh, reader, header = _reader(path, required)
    with fh:
        features = [c for c in header if c not in (label, protected, "yhat", "id")]
        ys, yh, aa, ids, xs = [], [], [], [], []
        for row_no, row in enumerate(reader, start=1):
            if None in row or any(v is None for v in row.values()):
                raise SchemaError("wrong number of fields", row=row_no)
            ys.append(_binary(row[label], label, row_no))
            aa.append(_protected(row[protected], protected, row_no, mapping))
            if "id" in row:
                try:
                    ids.append(int(row["id"]))
                except ValueError:
                    raise SchemaError(f"column 'id': not an integer: {row['id']!r}", row=row_no) from None
            else:
                ids.append(row_no - 1)
            if schema == "prediction":
                yh.append(_binary(row["yhat"], "yhat", row_no))
            else:
                vals = []
                for c in features:
                    try:
                        vals.append(float(row[c]))
                    except ValueError:
                        raise SchemaError(f"column {c!r}: not a number: {row[c]!r}", row=row_no) from None
                xs.append(vals)
    if not ys:
        raise EmptyDataset(f"{path} has no data rows")
    ids = np.array(ids, dtype=np.int64)
    if schema == "prediction":
        return PredictionRecords(np.array(ys), np.array(yh), np.array(aa), ids)
    return LabeledDataset(np.array(xs).reshape(len(ys), len(features)), ys, aa, ids, tuple(features))


# ---------------------------------------------------------------------------
# baseline classifier


@dataclass(frozen=True)
class LogisticModel:
    weights: np.ndarray
    bias: float
    mean: np.ndarray
    scale: np.ndarray

    def score(self, x):
        z = (np.atleast_2d(x) - self.mean) / self.scale
        return 1.0 / (1.0 + np.exp(-(z @ self.weights + self.bias)))

    def predict(self, x):
        return (self.score(x) >= 0.5).astype(int)


@dataclass(frozen=True)
class Baseline:
    model: LogisticModel
    yhat: np.ndarray
    scores: np.ndarray

    def accuracy(self, y):
        return float(np.mean(self.yhat == np.asarray(y)))


def train_baseline(ds: LabeledDataset, epochs=500, lr=0.5, seed=0, l2=1e-4) -> Baseline:
    """Logistic regression by full-batch gradient descent on standardized features.

    The protected attribute is never read.  ``seed`` sets the small random
    initial weights.
    """
    if len(ds) == 0:
        raise EmptyDataset("cannot train on an empty dataset")
    x, y = ds.x, ds.y.astype(float)
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    z = (x - mean) / scale
    rng = np.random.Generator(np.random.PCG64(seed))
    w = 0.01 * rng.standard_normal(z.shape[1])
    b = 0.0
    n = len(y)
    for _ in range(epochs):
        p = 1.0 / (1.0 + np.exp(-(z @ w + b)))
        r = p - y
        w = w - lr * (z.T @ r / n + l2 * w)
        b = b - lr * float(r.mean())
    model = LogisticModel(w, float(b), mean, scale)
    scores = model.score(x)
    return Baseline(model, (scores >= 0.5).astype(int), scores)


def bayes_accuracy(n=200_000, seed=0):
    """Monte-Carlo accuracy of the Bayes classifier for the synthetic classes."""
    ds = gen_synthetic(SyntheticSpec(n=n, variant="U", seed=seed))
    logp = {}
    for c in (0, 1):
        cov = COVARIANCES[c]
        d = ds.x - MEANS[c]
        inv = np.linalg.inv(cov)
        logp[c] = -0.5 * np.einsum("ij,jk,ik->i", d, inv, d) - 0.5 * math.log(np.linalg.det(cov))
    pred = (logp[1] > logp[0]).astype(int)
    return float(np.mean(pred == ds.y))
