"""The fairness-confusion tensor and its feasible polytope.

Element order is fixed everywhere in the package::

    z = (TP1, FN1, FP1, TN1, TP0, FN0, FP0, TN0) / N

Group ``a = 1`` occupies the first four slots, group ``a = 0`` the last four.
The polytope K is ``{z >= 0 : A_const z = b_const}``; it has exactly four
degrees of freedom, which :class:`FreeCoordinates` parameterizes.
"""

from __future__ import annotations

import json
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import EmptyDataset, InfeasibleCoordinates, InvalidCount, InvalidLabel

CELL_NAMES = ("TP1", "FN1", "FP1", "TN1", "TP0", "FN0", "FP0", "TN0")

A_CONST = np.array(
    [
        [1, 1, 1, 1, 0, 0, 0, 0],
        [1, 1, 0, 0, 0, 0, 0, 0],
        [0, 0, 0, 0, 1, 1, 1, 1],
        [0, 0, 0, 0, 1, 1, 0, 0],
    ],
    dtype=float,
)

# classification error is c . z
ERROR_VECTOR = np.array([0, 1, 1, 0, 0, 1, 1, 0], dtype=float)

UNDEFINED = math.nan

_TOL = 1e-12


@dataclass(frozen=True)
class Marginals:
    """Dataset constants ``N_a`` (group sizes) and ``M_a`` (positives per group).

    Counts may be ints, floats or Fractions; arithmetic stays in whatever
    number type was supplied, which keeps exact (rational) analysis possible.
    """

    n1: float
    m1: float
    n0: float
    m0: float

    def __post_init__(self):
        for name in ("n1", "m1", "n0", "m0"):
            if getattr(self, name) < 0:
                raise InvalidCount(f"{name} must be nonnegative")
        if self.m1 > self.n1 or self.m0 > self.n0:
            raise InvalidCount("positives cannot exceed group size")
        if self.n1 + self.n0 <= 0:
            raise InvalidCount("dataset is empty")

    @classmethod
    def from_inline(cls, n, n1, m1, m0):
        """Build from the CLI's ``N,N1,M1,M0`` form."""
        if n1 > n:
            raise InvalidCount("N1 cannot exceed N")
        return cls(n1=n1, m1=m1, n0=n - n1, m0=m0)

    @property
    def n_total(self):
        return self.n1 + self.n0

    def n_group(self, a):
        return self.n1 if a == 1 else self.n0

    def m_group(self, a):
        return self.m1 if a == 1 else self.m0

    def neg_group(self, a):
        return self.n_group(a) - self.m_group(a)

    def base_rate(self, a):
        n_a = self.n_group(a)
        if n_a == 0:
            return UNDEFINED
        return self.m_group(a) / n_a

    def equal_base_rates(self, tol=0.0):
        # cross-multiplied so that integer/Fraction marginals compare exactly
        diff = self.m1 * self.n0 - self.m0 * self.n1
        if tol == 0.0:
            return diff == 0
        return abs(diff) <= tol * self.n_total**2

    def degenerate_quantities(self):
        """Names of vanished quantities; empty for a fully regular instance."""
        out = []
        for a in (1, 0):
            if self.n_group(a) == 0:
                out.append(f"N{a}")
            if self.m_group(a) == 0:
                out.append(f"M{a}")
            if self.neg_group(a) == 0:
                out.append(f"N{a}-M{a}")
        return out

    @property
    def is_degenerate(self):
        return bool(self.degenerate_quantities())

    def b_const(self):
        n = self.n_total
        vals = (self.n1, self.m1, self.n0, self.m0)
        if all(isinstance(v, (int, Fraction)) for v in vals):
            return np.array([Fraction(v) / n for v in vals], dtype=object)
        return np.array([v / n for v in vals], dtype=float)

    def free_box(self):
        """Upper bounds of the normalized free coordinates (tp1, fp1, tp0, fp0)."""
        n = float(self.n_total)
        return np.array(
            [self.m1 / n, (self.n1 - self.m1) / n, self.m0 / n, (self.n0 - self.m0) / n],
            dtype=float,
        )

    def as_dict(self):
        return {
            "N": _plain(self.n_total),
            "N1": _plain(self.n1),
            "M1": _plain(self.m1),
            "N0": _plain(self.n0),
            "M0": _plain(self.m0),
        }


def _plain(v):
    if isinstance(v, Fraction):
        return int(v) if v.denominator == 1 else float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    return v


@dataclass(frozen=True)
class FreeCoordinates:
    """The four degrees of freedom of K, in raw counts."""

    tp1: float
    fp1: float
    tp0: float
    fp0: float

    def as_array(self):
        return np.array([self.tp1, self.fp1, self.tp0, self.fp0], dtype=float)


@dataclass(frozen=True)
class GroupRate:
    tpr: float
    fpr: float
    fnr: float
    tnr: float
    positive_rate: float


@dataclass(frozen=True)
class GroupRates:
    group1: GroupRate
    group0: GroupRate

    def __getitem__(self, a):
        return self.group1 if a == 1 else self.group0


class FairnessConfusionTensor:
    """Eight cell counts plus the marginals they imply.

    Instances are immutable: the count array is flagged read-only.
    """

    __slots__ = ("_counts", "_marginals")

    def __init__(self, counts, marginals: Marginals | None = None):
        arr = np.array(counts, dtype=float).reshape(-1)
        if arr.shape != (8,):
            raise InvalidCount("a tensor has exactly 8 cells")
        if np.any(~np.isfinite(arr)) or np.any(arr < 0):
            raise InvalidCount("counts must be finite and nonnegative")
        implied = _marginals_of(arr)
        if marginals is None:
            marginals = implied
        else:
            tol = 1e-9 * max(1.0, float(marginals.n_total))
            got = np.array([implied.n1, implied.m1, implied.n0, implied.m0], dtype=float)
            want = np.array([marginals.n1, marginals.m1, marginals.n0, marginals.m0], dtype=float)
            if np.max(np.abs(got - want)) > tol:
                raise InvalidCount("counts do not match the supplied marginals")
        arr.setflags(write=False)
        self._counts = arr
        self._marginals = marginals

    @property
    def counts(self):
        return self._counts

    @property
    def marginals(self):
        return self._marginals

    @property
    def z(self):
        out = self._counts / float(self._marginals.n_total)
        out.setflags(write=False)
        return out

    def __getitem__(self, name):
        return float(self._counts[CELL_NAMES.index(name)])

    def __repr__(self):
        cells = ", ".join(f"{k}={v:g}" for k, v in zip(CELL_NAMES, self._counts))
        return f"FairnessConfusionTensor({cells})"

    def __eq__(self, other):
        if not isinstance(other, FairnessConfusionTensor):
            return NotImplemented
        return np.array_equal(self._counts, other._counts)

    def __hash__(self):
        return hash(self._counts.tobytes())

    def free(self):
        c = self._counts
        return FreeCoordinates(tp1=c[0], fp1=c[2], tp0=c[4], fp0=c[6])

    def error_rate(self):
        return error_rate(self.z)

    def rates(self):
        return group_rates(self.z, self._marginals)

    def to_json(self):
        return json.dumps({"counts": [float(c) for c in self._counts], "marginals": self._marginals.as_dict()})

    @classmethod
    def from_json(cls, text):
        obj = json.loads(text)
        return from_counts(obj["counts"])


def _marginals_of(arr):
    # integral counts give integer marginals so exact arithmetic stays available
    num = int if np.all(arr == np.round(arr)) else float
    return Marginals(
        n1=num(arr[0] + arr[1] + arr[2] + arr[3]),
        m1=num(arr[0] + arr[1]),
        n0=num(arr[4] + arr[5] + arr[6] + arr[7]),
        m0=num(arr[4] + arr[5]),
    )


def from_counts(counts: Sequence[float]) -> FairnessConfusionTensor:
    """Tensor from the 8 counts in (TP1, FN1, FP1, TN1, TP0, FN0, FP0, TN0) order."""
    return FairnessConfusionTensor(counts)


def from_predictions(records: Iterable) -> FairnessConfusionTensor:
    """Tally ``(y, yhat, a)`` records into a tensor.

    Accepts any iterable of triples, or a 2-D array with three columns.
    """
    arr = np.asarray(list(records) if not isinstance(records, np.ndarray) else records)
    if arr.size == 0:
        raise EmptyDataset("no prediction records")
    arr = arr.reshape(-1, 3)
    if not np.all(np.isin(arr, (0, 1))):
        bad = np.argwhere(~np.isin(arr, (0, 1)))[0]
        raise InvalidLabel(f"record {int(bad[0])}: value {arr[bad[0], bad[1]]!r} not in {{0, 1}}")
    return tally(arr[:, 0].astype(int), arr[:, 1].astype(int), arr[:, 2].astype(int))


def tally(y, yhat, a) -> FairnessConfusionTensor:
    """Vectorized tally of three aligned 0/1 arrays."""
    y = np.asarray(y, dtype=int)
    yhat = np.asarray(yhat, dtype=int)
    a = np.asarray(a, dtype=int)
    if y.size == 0:
        raise EmptyDataset("no prediction records")
    # cell offset within a group: TP=0, FN=1, FP=2, TN=3
    within = np.where(y == 1, np.where(yhat == 1, 0, 1), np.where(yhat == 1, 2, 3))
    cell = within + 4 * (1 - a)
    counts = np.bincount(cell, minlength=8).astype(float)
    return FairnessConfusionTensor(counts)


def embedding(m: Marginals):
    """Affine map ``z = P u + p0`` from normalized free coordinates.

    ``u = (tp1, fp1, tp0, fp0) / N``; the box is ``0 <= u <= m.free_box()``.
    """
    n = float(m.n_total)
    P = np.zeros((8, 4))
    P[0, 0], P[1, 0] = 1.0, -1.0
    P[2, 1], P[3, 1] = 1.0, -1.0
    P[4, 2], P[5, 2] = 1.0, -1.0
    P[6, 3], P[7, 3] = 1.0, -1.0
    p0 = np.array([0, m.m1 / n, 0, (m.n1 - m.m1) / n, 0, m.m0 / n, 0, (m.n0 - m.m0) / n], dtype=float)
    return P, p0


def embed(free: FreeCoordinates, m: Marginals):
    """Normalized z for the given free coordinates (raw counts)."""
    f = free.as_array()
    box = np.array([m.m1, m.n1 - m.m1, m.m0, m.n0 - m.m0], dtype=float)
    tol = 1e-9 * max(1.0, float(m.n_total))
    if np.any(f < -tol) or np.any(f > box + tol):
        raise InfeasibleCoordinates(f"free coordinates {f.tolist()} outside box {box.tolist()}")
    P, p0 = embedding(m)
    return P @ (np.clip(f, 0, box) / float(m.n_total)) + p0


def extract(z, m: Marginals) -> FreeCoordinates:
    n = float(m.n_total)
    z = np.asarray(z, dtype=float)
    return FreeCoordinates(tp1=z[0] * n, fp1=z[2] * n, tp0=z[4] * n, fp0=z[6] * n)


def const_residual(z, m: Marginals):
    """Componentwise residual of ``A_const z - b_const``."""
    return A_CONST @ np.asarray(z, dtype=float) - m.b_const().astype(float)


def in_polytope(z, m: Marginals, tol=1e-9):
    z = np.asarray(z, dtype=float)
    return bool(np.all(z >= -tol) and np.max(np.abs(const_residual(z, m))) <= tol)


def error_rate(z):
    return float(ERROR_VECTOR @ np.asarray(z, dtype=float))


def _ratio(num, den):
    if den <= _TOL:
        return UNDEFINED
    return float(num / den)


def group_rates(z, m: Marginals | None = None) -> GroupRates:
    """Per-group rates. Rates whose denominator vanishes come back as NaN."""
    z = np.asarray(z, dtype=float)
    out = []
    for base in (0, 4):
        tp, fn, fp, tn = z[base : base + 4]
        pos, neg = tp + fn, fp + tn
        out.append(
            GroupRate(
                tpr=_ratio(tp, pos),
                fpr=_ratio(fp, neg),
                fnr=_ratio(fn, pos),
                tnr=_ratio(tn, neg),
                positive_rate=_ratio(tp + fp, pos + neg),
            )
        )
    return GroupRates(group1=out[0], group0=out[1])


def roc_point(z, a):
    """``(FPR_a, TPR_a)`` of group ``a``."""
    r = group_rates(z)[a]
    return r.fpr, r.tpr
