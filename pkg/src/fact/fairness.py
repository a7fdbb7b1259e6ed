"""Group fairness definitions as linear or quadratic functions of z.

Linear definitions produce rows ``A`` with ``A z = 0`` exactly when the
definition holds; quadratic ones produce symmetric ``B`` with
``0.5 * z^T B z = 0``.  Rows carry a ``1/N`` normalization and put group 1
first with a positive sign.  Two builders deviate and say so: the
calibration rows are unnormalized, and relaxed equalized odds negates its
group-0 entries so the row vanishes on equality.
"""

from __future__ import annotations

import re
from collections.abc import Sequence
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import DefinitionError, DegenerateMarginal, InvalidScores
from .tensor import Marginals

LINEAR_TAGS = ("DP", "EOp", "PE", "EOd", "EFNR", "CG", "PCB", "NCB", "REOd")
QUADRATIC_TAGS = ("PP", "EFOR", "CA")
ALL_TAGS = LINEAR_TAGS + QUADRATIC_TAGS
SCORED_TAGS = ("CG", "PCB", "NCB")
REOD_WEIGHTS = ("alpha0", "beta0", "alpha1", "beta1")

_CANON = {t.lower(): t for t in ALL_TAGS}


@dataclass(frozen=True)
class FairnessDef:
    """A fairness definition tag with its parameters.

    ``params`` is a tuple of ``(name, value)`` pairs so the object stays
    hashable.  CG/PCB/NCB take ``v0`` and ``v1``; REOd takes the four weights.
    """

    tag: str
    params: tuple = ()

    def __post_init__(self):
        canon = _CANON.get(self.tag.lower())
        if canon is None:
            raise DefinitionError(f"unknown fairness definition {self.tag!r}")
        object.__setattr__(self, "tag", canon)
        object.__setattr__(self, "params", tuple(sorted(dict(self.params).items())))
        p = dict(self.params)
        if canon in SCORED_TAGS:
            missing = {"v0", "v1"} - p.keys()
            if missing:
                raise DefinitionError(f"{canon} needs scores v0 and v1")
            _check_scores(p["v0"], p["v1"], allow_equal=canon == "CG" and bool(p.get("degenerate")))
        if canon == "REOd":
            for w in REOD_WEIGHTS:
                if w not in p:
                    raise DefinitionError(f"REOd needs weights {', '.join(REOD_WEIGHTS)}")
                if p[w] < 0:
                    raise DefinitionError("REOd weights must be nonnegative")

    @classmethod
    def make(cls, tag, **params):
        return cls(tag, tuple(params.items()))

    def param(self, name, default=None):
        return dict(self.params).get(name, default)

    @property
    def is_linear(self):
        return self.tag in LINEAR_TAGS

    def __str__(self):
        if not self.params:
            return self.tag
        inner = ",".join(f"{k}={_fmt(v)}" for k, v in self.params)
        return f"{self.tag}({inner})"


def _fmt(v):
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, Fraction):
        return str(v)
    return f"{v:g}"


def _check_scores(v0, v1, allow_equal=False):
    if not (0 <= v0 <= 1 and 0 <= v1 <= 1):
        raise InvalidScores(f"scores must lie in [0, 1], got v0={v0}, v1={v1}")
    if v0 > v1 or (v0 == v1 and not allow_equal):
        raise InvalidScores(f"scores need v0 < v1, got v0={v0}, v1={v1}")


_TOKEN = re.compile(r"\s*([A-Za-z]+)\s*(?:\(([^()]*)\))?\s*")


def parse_defs(text: str) -> list[FairnessDef]:
    """Parse ``"CG(v0=0.3,v1=0.8),EOd,DP"`` into definitions.

    Values accept decimal or ``p/q`` rational syntax; rationals come back as
    :class:`fractions.Fraction`.
    """
    text = text.strip()
    if not text:
        return []
    out = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise DefinitionError(f"cannot parse definition list at {text[pos:]!r}")
        tag, inner = m.group(1), m.group(2)
        params = {}
        if inner is not None and inner.strip():
            for item in inner.split(","):
                if "=" not in item:
                    raise DefinitionError(f"parameter {item.strip()!r} is not name=value")
                k, v = (s.strip() for s in item.split("=", 1))
                params[k] = _parse_value(v)
        out.append(FairnessDef(tag, tuple(params.items())))
        pos = m.end()
        if pos < len(text):
            if text[pos] != ",":
                raise DefinitionError(f"expected ',' at {text[pos:]!r}")
            pos += 1
    return out


def _parse_value(v):
    if v.lower() in ("true", "false"):
        return v.lower() == "true"
    try:
        if "/" in v:
            return Fraction(v)
        return float(v)
    except (ValueError, ZeroDivisionError):
        raise DefinitionError(f"bad parameter value {v!r}") from None


@dataclass(frozen=True)
class LinearFairness:
    tag: str
    rows: np.ndarray
    labels: tuple


@dataclass(frozen=True)
class QuadraticFairness:
    tag: str
    forms: np.ndarray  # (k, 8, 8), each symmetric
    labels: tuple


def _require(m: Marginals, *quantities):
    values = {
        "N1": m.n1,
        "N0": m.n0,
        "M1": m.m1,
        "M0": m.m0,
        "N1-M1": m.n1 - m.m1,
        "N0-M0": m.n0 - m.m0,
    }
    for q in quantities:
        if values[q] == 0:
            raise DegenerateMarginal(q)


def _coerce(exact):
    if exact:
        return lambda x: Fraction(x) if not isinstance(x, Fraction) else x
    return float


def _row(values, num):
    return np.array([num(v) for v in values], dtype=object if num is not float else float)


def build(defn: FairnessDef, m: Marginals, exact=False):
    """Fairness matrix (or quadratic forms) of one definition.

    With ``exact=True`` the entries are :class:`~fractions.Fraction` objects in
    an object array, so integer marginals and rational scores give exact
    residuals.
    """
    num = _coerce(exact)
    n1, m1, n0, m0 = num(m.n1), num(m.m1), num(m.n0), num(m.m0)
    n = n1 + n0
    tag = defn.tag
    zero = num(0)

    if tag == "DP":
        _require(m, "N1", "N0")
        row = _row([n0, zero, n0, zero, -n1, zero, -n1, zero], num) / n
        return LinearFairness(tag, row.reshape(1, 8), ("DP",))
    if tag == "EOp":
        _require(m, "M1", "M0")
        return LinearFairness(tag, _eop_row(n, m1, m0, num).reshape(1, 8), ("EOp",))
    if tag == "PE":
        _require(m, "N1-M1", "N0-M0")
        return LinearFairness(tag, _pe_row(n, n1, m1, n0, m0, num).reshape(1, 8), ("PE",))
    if tag == "EOd":
        _require(m, "M1", "M0", "N1-M1", "N0-M0")
        rows = np.vstack([_eop_row(n, m1, m0, num), _pe_row(n, n1, m1, n0, m0, num)])
        return LinearFairness(tag, rows, ("EOd:EOp", "EOd:PE"))
    if tag == "EFNR":
        _require(m, "M1", "M0")
        row = _row([zero, m0, zero, zero, zero, -m1, zero, zero], num) / n
        return LinearFairness(tag, row.reshape(1, 8), ("EFNR",))
    if tag == "CG":
        v0, v1 = num(defn.param("v0")), num(defn.param("v1"))
        return LinearFairness(tag, cg_rows(v0, v1, num), ("CG:TP1", "CG:FN1", "CG:TP0", "CG:FN0"))
    if tag == "PCB":
        _require(m, "M1", "M0")
        v0, v1 = num(defn.param("v0")), num(defn.param("v1"))
        scale = min(m1, m0)
        row = _row([v1 / m1, v0 / m1, zero, zero, -v1 / m0, -v0 / m0, zero, zero], num) * scale
        return LinearFairness(tag, row.reshape(1, 8), ("PCB",))
    if tag == "NCB":
        _require(m, "N1-M1", "N0-M0")
        v0, v1 = num(defn.param("v0")), num(defn.param("v1"))
        q1, q0 = n1 - m1, n0 - m0
        scale = min(q1, q0)
        row = _row([zero, zero, v1 / q1, v0 / q1, zero, zero, -v1 / q0, -v0 / q0], num) * scale
        return LinearFairness(tag, row.reshape(1, 8), ("NCB",))
    if tag == "REOd":
        _require(m, "M1", "M0", "N1-M1", "N0-M0")
        a0, b0, a1, b1 = (num(defn.param(k)) for k in REOD_WEIGHTS)
        # group-0 entries negated: the definition is an equality between groups
        row = _row([zero, b1 / m1, a1 / (n1 - m1), zero, zero, -b0 / m0, -a0 / (n0 - m0), zero], num) / n
        return LinearFairness(tag, row.reshape(1, 8), ("REOd",))
    if tag == "PP":
        return QuadraticFairness(tag, pp_form(num)[None], ("PP",))
    if tag == "EFOR":
        return QuadraticFairness(tag, efor_form(num)[None], ("EFOR",))
    if tag == "CA":
        return QuadraticFairness(tag, np.stack([pp_form(num), efor_form(num)]), ("CA:PP", "CA:EFOR"))
    raise DefinitionError(f"no builder for {tag}")  # pragma: no cover


def _eop_row(n, m1, m0, num):
    zero = num(0)
    return _row([m0, zero, zero, zero, -m1, zero, zero, zero], num) / n


def _pe_row(n, n1, m1, n0, m0, num):
    zero = num(0)
    return _row([zero, zero, n0 - m0, zero, zero, zero, -(n1 - m1), zero], num) / n


def cg_rows(v0, v1, num=float):
    """Calibration within groups for two score bins.

    Per group: ``TP = v1 (TP + FP)`` and ``FN = v0 (FN + TN)``, i.e.
    ``(1 - v1) TP - v1 FP = 0`` and ``(1 - v0) FN - v0 TN = 0``.  Rows are
    ordered (group 1 TP, group 1 FN, group 0 TP, group 0 FN).
    """
    one, zero = num(1), num(0)
    rows = [
        [one - v1, zero, -v1, zero, zero, zero, zero, zero],
        [zero, one - v0, zero, -v0, zero, zero, zero, zero],
        [zero, zero, zero, zero, one - v1, zero, -v1, zero],
        [zero, zero, zero, zero, zero, one - v0, zero, -v0],
    ]
    return np.array(rows, dtype=object if num is not float else float)


def _sym(entries, num):
    dtype = object if num is not float else float
    B = np.full((8, 8), num(0), dtype=dtype)
    for (i, j), v in entries.items():
        B[i, j] = num(v)
        B[j, i] = num(v)
    return B


def pp_form(num=float):
    # 0.5 z^T B z = (FP1 TP0 - TP1 FP0) / N^2
    return _sym({(0, 6): -1, (2, 4): 1}, num)


def efor_form(num=float):
    # 0.5 z^T B z = (TN1 FN0 - TN0 FN1) / N^2
    return _sym({(3, 5): 1, (1, 7): -1}, num)


@dataclass(frozen=True)
class FairnessSystem:
    """Conjunction of definitions: stacked linear rows plus quadratic forms.

    ``row_groups[i]`` / ``form_groups[i]`` index the rows/forms contributed by
    ``defs[i]``; MLAFOP uses these to weight definitions separately.
    """

    defs: tuple
    linear: np.ndarray
    linear_labels: tuple
    quadratic: np.ndarray
    quadratic_labels: tuple
    row_groups: tuple = field(default=())
    form_groups: tuple = field(default=())

    @property
    def is_linear(self):
        return len(self.quadratic_labels) == 0

    @property
    def n_rows(self):
        return self.linear.shape[0]

    def subsystem(self, index):
        """System holding only ``defs[index]``."""
        rows = list(self.row_groups[index])
        forms = list(self.form_groups[index])
        return FairnessSystem(
            defs=(self.defs[index],),
            linear=self.linear[rows],
            linear_labels=tuple(self.linear_labels[i] for i in rows),
            quadratic=self.quadratic[forms],
            quadratic_labels=tuple(self.quadratic_labels[i] for i in forms),
            row_groups=(tuple(range(len(rows))),),
            form_groups=(tuple(range(len(forms))),),
        )

    def to_dict(self):
        return {
            "defs": [str(d) for d in self.defs],
            "linear": {lab: [float(x) for x in row] for lab, row in zip(self.linear_labels, self.linear)},
            "quadratic": {
                lab: np.asarray(B, dtype=float).tolist() for lab, B in zip(self.quadratic_labels, self.quadratic)
            },
        }


def stack(defs: Sequence[FairnessDef], m: Marginals, exact=False) -> FairnessSystem:
    """Build every definition and stack them in input order."""
    dtype = object if exact else float
    rows, rlabels, forms, flabels = [], [], [], []
    row_groups, form_groups = [], []
    for d in defs:
        built = build(d, m, exact=exact)
        if isinstance(built, LinearFairness):
            start = len(rlabels)
            rows.extend(list(built.rows))
            rlabels.extend(built.labels)
            row_groups.append(tuple(range(start, len(rlabels))))
            form_groups.append(())
        else:
            start = len(flabels)
            forms.extend(list(built.forms))
            flabels.extend(built.labels)
            form_groups.append(tuple(range(start, len(flabels))))
            row_groups.append(())
    linear = np.array(rows, dtype=dtype).reshape(-1, 8)
    quadratic = np.array(forms, dtype=dtype).reshape(-1, 8, 8)
    return FairnessSystem(
        defs=tuple(defs),
        linear=linear,
        linear_labels=tuple(rlabels),
        quadratic=quadratic,
        quadratic_labels=tuple(flabels),
        row_groups=tuple(row_groups),
        form_groups=tuple(form_groups),
    )


@dataclass(frozen=True)
class GapReport:
    linear: dict
    quadratic: dict
    epsilon: float

    @property
    def residuals(self):
        return {**self.linear, **self.quadratic}

    def max_abs(self):
        vals = [abs(v) for v in self.residuals.values()]
        return max(vals) if vals else 0.0

    def to_dict(self):
        return {"linear": self.linear, "quadratic": self.quadratic, "epsilon": self.epsilon}


def linear_residuals(sys: FairnessSystem, z):
    return np.asarray(sys.linear, dtype=float) @ np.asarray(z, dtype=float)


def quadratic_residuals(sys: FairnessSystem, z):
    z = np.asarray(z, dtype=float)
    Q = np.asarray(sys.quadratic, dtype=float)
    return 0.5 * np.einsum("i,kij,j->k", z, Q, z)


def gap(sys: FairnessSystem, z) -> GapReport:
    """Labeled residuals and the aggregate deviation.

    The aggregate is the sum of squared linear residuals plus the sum of
    squared quadratic residuals, all with unit weight.
    """
    lin = linear_residuals(sys, z)
    quad = quadratic_residuals(sys, z)
    eps = float(lin @ lin + quad @ quad)
    return GapReport(
        linear={k: float(v) for k, v in zip(sys.linear_labels, lin)},
        quadratic={k: float(v) for k, v in zip(sys.quadratic_labels, quad)},
        epsilon=eps,
    )


def exact_residuals(sys: FairnessSystem, z):
    """Residuals with object (Fraction) arithmetic; ``sys`` built with exact=True."""
    z = np.asarray(z, dtype=object)
    lin = [sum(r * zi for r, zi in zip(row, z)) for row in sys.linear]
    quad = [Fraction(1, 2) * sum(z[i] * B[i, j] * z[j] for i in range(8) for j in range(8)) for B in sys.quadratic]
    return lin, quad
