"""(epsilon, delta) Pareto frontiers from sweeps of the LAFOP family.

A sweep solves one problem per grid value, either a regularization weight
(``lambda_log``) or a fairness budget (``epsilon_log``), in the model-agnostic
(MA) or model-specific (MS) setting.  Points that fail are kept with their
status so a curve that stops early ("truncated") stays visible.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import FactError, Infeasible
from .fairness import FairnessSystem, gap, stack
from .lafop import min_residual, model_specific_constraints, solve_hard, solve_lafop, solve_ms_lafop
from .solver import DEFAULT_CONFIG, SolverConfig
from .tensor import FairnessConfusionTensor, Marginals, error_rate

LAMBDA_LOG, EPSILON_LOG = "lambda_log", "epsilon_log"
DECADES = tuple(10.0**-k for k in range(1, 7))
CSV_COLUMNS = ("epsilon", "delta", "error_rate", "control_value", "status")
MA_NOTE = "model-agnostic: delta is measured relative to the Bayes error, which the frontier does not see"


@dataclass(frozen=True)
class SweepSpec:
    grid_kind: str
    lo: float
    hi: float
    count: int
    mode: str = "MA"
    base: FairnessConfusionTensor | None = None

    def __post_init__(self):
        if self.grid_kind not in (LAMBDA_LOG, EPSILON_LOG):
            raise ValueError(f"grid kind must be {LAMBDA_LOG} or {EPSILON_LOG}")
        if self.count < 2:
            raise ValueError("a sweep needs at least two points")
        if not (0 < self.lo < self.hi):
            raise ValueError("log grid bounds must satisfy 0 < lo < hi")
        if self.mode not in ("MA", "MS"):
            raise ValueError("mode must be MA or MS")
        if self.mode == "MS" and self.base is None:
            raise ValueError("MS mode needs a base classifier tensor")

    def values(self):
        return np.logspace(math.log10(self.lo), math.log10(self.hi), self.count)

    def describe(self):
        return {"grid_kind": self.grid_kind, "lo": self.lo, "hi": self.hi, "count": self.count, "mode": self.mode}


def parse_grid(text: str, mode="MA", base=None) -> SweepSpec:
    """``"eps:1e-6:1e-1:40"`` or ``"lam:1e-4:1e4:40"``."""
    parts = text.split(":")
    if len(parts) != 4 or parts[0] not in ("eps", "lam"):
        raise ValueError(f"grid must look like eps:LO:HI:COUNT or lam:LO:HI:COUNT, got {text!r}")
    kind = EPSILON_LOG if parts[0] == "eps" else LAMBDA_LOG
    return SweepSpec(kind, float(parts[1]), float(parts[2]), int(parts[3]), mode=mode, base=base)


@dataclass(frozen=True)
class FrontierPoint:
    epsilon: float
    delta: float
    control: float
    error_rate: float
    status: str = "ok"
    index: int = -1

    @property
    def ok(self):
        return self.status in ("ok", "approximate")

    def csv_row(self):
        return (self.epsilon, self.delta, self.error_rate, self.control, self.status)


@dataclass(frozen=True)
class FrontierCurve:
    """Cleaned nondominated points (``epsilon`` descending) plus raw grid results."""

    points: tuple
    truncated_at: float
    raw: tuple = ()
    spec: SweepSpec | None = None
    defs: tuple = ()
    note: str = ""

    @property
    def epsilons(self):
        return np.array([p.epsilon for p in self.points])

    @property
    def deltas(self):
        return np.array([p.delta for p in self.points])

    def converged_delta(self):
        """delta at the smallest reached epsilon."""
        return self.points[-1].delta if self.points else math.nan

    def csv_rows(self):
        return [p.csv_row() for p in (self.raw or self.points)]

    def to_dict(self):
        return {
            "spec": self.spec.describe() if self.spec else None,
            "defs": [str(d) for d in self.defs],
            "truncated_at": self.truncated_at,
            "note": self.note,
            "points": [dict(zip(CSV_COLUMNS, p.csv_row())) for p in self.points],
            "raw": [dict(zip(CSV_COLUMNS, p.csv_row())) for p in self.raw],
        }


def pareto_cleanup(points) -> FrontierCurve:
    """Keep the nondominated ``(epsilon, delta)`` pairs as a monotone staircase.

    Failed points are dropped; of exact duplicates the first is kept.
    """
    pts = [p for p in points if p.ok and np.isfinite(p.epsilon) and np.isfinite(p.delta)]
    if not pts and points:
        return FrontierCurve((), math.nan)
    order = sorted(range(len(pts)), key=lambda i: (pts[i].epsilon, pts[i].delta, i))
    kept = []
    best = math.inf
    for i in order:
        if pts[i].delta < best:
            kept.append(pts[i])
            best = pts[i].delta
    kept.reverse()
    return FrontierCurve(tuple(kept), kept[-1].epsilon if kept else math.nan)


def _threads():
    env = os.environ.get("FACT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"FACT_THREADS must be an integer, got {env!r}") from None
    return min(8, os.cpu_count() or 1)


def _solve_point(m, sys, spec: SweepSpec, value, index, cfg):
    try:
        if spec.grid_kind == LAMBDA_LOG:
            if spec.mode == "MS":
                sol = solve_ms_lafop(spec.base, sys, lam=value, cfg=cfg)
            else:
                sol = solve_lafop(m, sys, value, cfg)
        else:
            if spec.mode == "MS":
                sol = solve_ms_lafop(spec.base, sys, eps=value, cfg=cfg)
            else:
                sol = solve_hard(m, sys, value, cfg)
    except Infeasible:
        return FrontierPoint(math.nan, math.nan, float(value), math.nan, "infeasible", index)
    except FactError as exc:
        return FrontierPoint(math.nan, math.nan, float(value), math.nan, f"error:{type(exc).__name__}", index)
    status = "ok" if sol.converged else "approximate"
    return FrontierPoint(sol.epsilon, sol.delta, float(value), sol.error_rate, status, index)


def sweep(m: Marginals, defs, spec: SweepSpec, cfg: SolverConfig = DEFAULT_CONFIG, threads=None) -> FrontierCurve:
    """One solve per grid value, run concurrently, assembled by grid index.

    ``truncated_at`` is the least achievable fairness deviation (0 up to
    tolerance for compatible sets); budgets below it come back infeasible.
    """
    if spec.mode == "MS":
        m = spec.base.marginals
    sys = defs if isinstance(defs, FairnessSystem) else stack(list(defs), m)
    values = spec.values()
    workers = threads or _threads()
    # the warning filter is process-wide, so it is set once around the pool
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            raw = list(pool.map(lambda iv: _solve_point(m, sys, spec, iv[1], iv[0], cfg), enumerate(values)))
        ineq = model_specific_constraints(spec.base) if spec.mode == "MS" else None
        trunc = min_residual(m, sys, cfg, ineq=ineq) if len(sys.defs) else 0.0
    cleaned = pareto_cleanup(raw)
    return FrontierCurve(
        points=cleaned.points,
        truncated_at=float(trunc),
        raw=tuple(raw),
        spec=spec,
        defs=tuple(sys.defs),
        note=MA_NOTE if spec.mode == "MA" else "",
    )


# ---------------------------------------------------------------------------
# comparison


def delta_at(curve: FrontierCurve, eps: float):
    """delta at ``eps`` by linear interpolation in ``(log eps, delta)``; None outside the range.

    Points with ``epsilon == 0`` extend the curve flat down to zero.
    """
    pts = sorted(curve.points, key=lambda p: p.epsilon)
    if not pts or eps > pts[-1].epsilon:
        return None
    pos = [p for p in pts if p.epsilon > 0]
    zero = [p for p in pts if p.epsilon <= 0]
    if not pos or eps < pos[0].epsilon:
        return zero[0].delta if zero and eps >= 0 else None
    x = np.log10([p.epsilon for p in pos])
    y = np.array([p.delta for p in pos])
    return float(np.interp(math.log10(eps), x, y))


@dataclass(frozen=True)
class ModelMarker:
    """A fixed classifier placed next to frontiers."""

    label: str
    epsilon: float
    gap_norm: float
    delta: float
    error_rate: float

    def to_dict(self):
        return {
            "label": self.label,
            "epsilon_sq": self.epsilon,
            "gap_norm": self.gap_norm,
            "delta": self.delta,
            "error_rate": self.error_rate,
        }


def model_point(label, tensor: FairnessConfusionTensor, defs) -> ModelMarker:
    """Both ``||A z||^2`` and ``||A z||`` so either axis convention can be plotted."""
    sys = defs if isinstance(defs, FairnessSystem) else stack(list(defs), tensor.marginals)
    eps = gap(sys, tensor.z).epsilon
    err = error_rate(tensor.z)
    return ModelMarker(label, eps, math.sqrt(eps), err * err, err)


@dataclass(frozen=True)
class Comparison:
    anchors: tuple
    table: dict
    markers: tuple = field(default=())

    def difference(self, a, b):
        """``delta_a - delta_b`` per anchor; None where either is unavailable."""
        return [None if x is None or y is None else x - y for x, y in zip(self.table[a], self.table[b])]

    def to_dict(self):
        return {
            "anchors": list(self.anchors),
            "delta": {k: v for k, v in self.table.items()},
            "markers": [mk.to_dict() for mk in self.markers],
        }


def compare(curves: dict, anchors=DECADES, markers=()) -> Comparison:
    if not curves:
        raise ValueError("compare needs at least one curve")
    table = {label: [delta_at(c, a) for a in anchors] for label, c in curves.items()}
    return Comparison(tuple(anchors), table, tuple(markers))
