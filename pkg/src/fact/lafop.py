"""Accuracy-fairness optimality problems over the tensor polytope.

Four flavors share one machinery:

* regularized:  ``min (c.z)^2 + lam * ||A z||^2``
* hard:         ``min (c.z)^2  s.t. ||A z||^2 <= eps``
* multilinear:  ``min (c.z)^2 + sum_i lam_i ||A_i z||^2``
* model-specific: any of the above with each group's ROC point confined to
  what randomizing a given base classifier can reach.

``lam = inf`` is a two-phase solve (least fairness residual first, then least
error on that optimal face) rather than a large finite weight.
"""

from __future__ import annotations

import math
import warnings
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .errors import Infeasible
from .fairness import FairnessDef, FairnessSystem, GapReport, gap, stack
from .postprocess import hull_constraints
from .solver import DEFAULT_CONFIG, QuadraticProgram, Solution, SolverConfig, solve
from .tensor import ERROR_VECTOR, FairnessConfusionTensor, Marginals, error_rate

INF = math.inf

# bisection bracket for the hard-constraint form, in log10(lambda)
HARD_LOG_LAMBDA = (-6.0, 9.0)
HARD_ITERATIONS = 60
# weight standing in for an exact constraint when quadratic forms are present
_QUAD_HARD_WEIGHT = 1e8


@dataclass(frozen=True)
class EpsDeltaSolution:
    """An (epsilon, delta) solution: aggregate fairness deviation and (c.z)^2."""

    z_star: np.ndarray
    epsilon: float
    delta: float
    lambda_used: object
    error_rate: float
    gaps: GapReport
    converged: bool = True
    approximate: bool = False
    per_definition: dict = field(default_factory=dict)

    def row(self):
        return {
            "lambda": _jsonable(self.lambda_used),
            "epsilon": self.epsilon,
            "delta": self.delta,
            "error_rate": self.error_rate,
            **{f"res[{k}]": v for k, v in self.gaps.residuals.items()},
        }


def _jsonable(v):
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    return v


class _Setup:
    """Marginals, fairness system and any extra inequality rows."""

    def __init__(self, m: Marginals, sys: FairnessSystem, ineq=None):
        self.m = m
        self.sys = sys
        self.ineq = ineq
        self.A = np.asarray(sys.linear, dtype=float)
        self.B = [np.asarray(B, dtype=float) for B in sys.quadratic]

    def qp(self, rows, penalties=(), eq=None):
        return QuadraticProgram(self.m, rows, penalties=tuple(penalties), eq=eq, ineq=self.ineq)

    def finish(self, sol: Solution, lam, per_definition=None):
        z = sol.z_star
        rep = gap(self.sys, z)
        err = error_rate(z)
        per = per_definition if per_definition is not None else _per_definition(self.sys, z)
        return EpsDeltaSolution(
            z_star=z,
            epsilon=rep.epsilon,
            delta=err * err,
            lambda_used=lam,
            error_rate=err,
            gaps=rep,
            converged=sol.converged,
            approximate=sol.approximate,
            per_definition=per,
        )


def _per_definition(sys: FairnessSystem, z):
    out = {}
    for i, d in enumerate(sys.defs):
        out[str(d)] = gap(sys.subsystem(i), z).epsilon
    return out


def _as_system(sys_or_defs, m):
    if isinstance(sys_or_defs, FairnessSystem):
        return sys_or_defs
    return stack(list(sys_or_defs), m)


def _regularized(setup: _Setup, weights_rows, weights_forms, cfg):
    """``(c.z)^2 + sum w_r (A_r z)^2 + sum w_k (0.5 z^T B_k z)^2``."""
    rows = [ERROR_VECTOR]
    for w, r in zip(weights_rows, setup.A):
        if w > 0:
            rows.append(math.sqrt(w) * r)
    pens = [(w, B) for w, B in zip(weights_forms, setup.B) if w > 0]
    return solve(setup.qp(np.array(rows), pens), cfg)


def _two_phase(setup: _Setup, hard_rows, hard_forms, soft_rows, soft_forms, cfg, strict):
    """Exact (lam = inf) treatment of the rows/forms flagged hard.

    Returns ``(solution, min_residual)`` where ``min_residual`` is the least
    achievable squared residual of the hard part.
    """
    A_h = setup.A[hard_rows] if len(hard_rows) else np.zeros((0, 8))
    B_h = [setup.B[k] for k in hard_forms]
    if B_h:
        ph1 = solve(setup.qp(A_h if len(A_h) else np.zeros((0, 8)), [(1.0, B) for B in B_h]), cfg)
    else:
        ph1 = solve(setup.qp(A_h if len(A_h) else np.zeros((0, 8))), cfg)
    z1 = ph1.z_star
    r_lin = A_h @ z1
    r_quad = np.array([0.5 * z1 @ B @ z1 for B in B_h])
    min_res = float(r_lin @ r_lin + r_quad @ r_quad)
    if strict and math.sqrt(min_res) > cfg.feasibility_tol:
        raise Infeasible(
            f"fairness constraints cannot hold simultaneously (least squared residual {min_res:.3g})",
            min_residual=min_res,
        )
    rows = [ERROR_VECTOR] + [math.sqrt(w) * setup.A[i] for i, w in soft_rows if w > 0]
    pens = [(w, setup.B[k]) for k, w in soft_forms if w > 0]
    pens += [(_QUAD_HARD_WEIGHT, B) for B in B_h]
    eq = (A_h, r_lin) if len(A_h) else None
    ph2 = solve(setup.qp(np.array(rows), pens, eq=eq), cfg)
    if B_h or not ph1.converged:
        ph2 = Solution(**{**ph2.__dict__, "approximate": ph2.approximate or ph1.approximate})
    return ph2, min_res


def _lambda_solution(setup: _Setup, lam, cfg, strict=True):
    n_rows, n_forms = len(setup.A), len(setup.B)
    if n_forms and lam > 0:
        warnings.warn(
            "quadratic fairness forms make the problem nonconvex; using multistart (approximate)",
            RuntimeWarning,
            stacklevel=3,
        )
    if math.isinf(lam):
        sol, _ = _two_phase(setup, list(range(n_rows)), list(range(n_forms)), [], [], cfg, strict)
        return sol
    return _regularized(setup, [lam] * n_rows, [lam] * n_forms, cfg)


def solve_lafop(m: Marginals, sys, lam: float, cfg: SolverConfig = DEFAULT_CONFIG, ineq=None) -> EpsDeltaSolution:
    """Minimize ``(c.z)^2 + lam ||A z||^2`` over K.

    ``lam = 0`` ignores fairness; ``lam = inf`` imposes it exactly and raises
    :class:`~fact.errors.Infeasible` when the definitions are incompatible.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    setup = _Setup(m, _as_system(sys, m), ineq)
    sol = _lambda_solution(setup, lam, cfg)
    return setup.finish(sol, lam)


def min_residual(m: Marginals, sys, cfg: SolverConfig = DEFAULT_CONFIG, ineq=None) -> float:
    """Least achievable aggregate fairness deviation over K (0 iff compatible)."""
    setup = _Setup(m, _as_system(sys, m), ineq)
    _, res = _two_phase(setup, list(range(len(setup.A))), list(range(len(setup.B))), [], [], cfg, strict=False)
    return res


def solve_hard(m: Marginals, sys, eps: float, cfg: SolverConfig = DEFAULT_CONFIG, ineq=None) -> EpsDeltaSolution:
    """Minimize ``(c.z)^2`` subject to aggregate fairness deviation ``<= eps``.

    Bisects ``log10 lam`` over ``[-6, 9]`` for the smallest weight whose
    regularized optimum meets the budget; the residual is monotone in
    ``lam``.  Budgets tighter than the ``lam = 1e9`` residual fall back to the
    exact two-phase solve.
    """
    if eps < 0:
        raise ValueError("epsilon must be nonnegative")
    setup = _Setup(m, _as_system(sys, m), ineq)
    tol = cfg.feasibility_tol

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        base = setup.finish(_lambda_solution(setup, 0.0, cfg), 0.0)
        if base.epsilon <= eps:
            return base
        lo, hi = HARD_LOG_LAMBDA
        top = setup.finish(_lambda_solution(setup, 10.0**hi, cfg), 10.0**hi)
        if top.epsilon > eps:
            exact_sol, res = _two_phase(
                setup, list(range(len(setup.A))), list(range(len(setup.B))), [], [], cfg, strict=False
            )
            if res > eps + tol * tol and math.sqrt(res) > tol:
                raise Infeasible(
                    f"no point reaches fairness deviation {eps:.3g}; least achievable is {res:.3g}",
                    min_residual=res,
                )
            return setup.finish(exact_sol, INF)
        best = top
        for _ in range(HARD_ITERATIONS):
            mid = 0.5 * (lo + hi)
            cand = setup.finish(_lambda_solution(setup, 10.0**mid, cfg), 10.0**mid)
            if cand.epsilon <= eps:
                hi, best = mid, cand
            else:
                lo = mid
            if hi - lo < 1e-12:
                break
    return best


def solve_mlafop(
    m: Marginals, sys, lambdas: Sequence[float], cfg: SolverConfig = DEFAULT_CONFIG, ineq=None
) -> EpsDeltaSolution:
    """One weight per definition: ``(c.z)^2 + sum_i lam_i ||A_i z||^2``.

    ``sys`` may be a :class:`FairnessSystem` or a list of definitions;
    ``lambdas`` aligns with its definitions.  Infinite weights are imposed
    exactly.  ``per_definition`` reports each definition's own deviation.
    """
    sys = _as_system(sys, m)
    if len(lambdas) != len(sys.defs):
        raise ValueError(f"need {len(sys.defs)} weights, got {len(lambdas)}")
    if any(l < 0 for l in lambdas):
        raise ValueError("weights must be nonnegative")
    setup = _Setup(m, sys, ineq)
    w_rows = np.zeros(len(setup.A))
    w_forms = np.zeros(len(setup.B))
    for i, lam in enumerate(lambdas):
        w_rows[list(sys.row_groups[i])] = lam
        w_forms[list(sys.form_groups[i])] = lam
    if np.any(np.isinf(w_rows)) or np.any(np.isinf(w_forms)):
        hard_r = [i for i, w in enumerate(w_rows) if math.isinf(w)]
        hard_f = [k for k, w in enumerate(w_forms) if math.isinf(w)]
        soft_r = [(i, w) for i, w in enumerate(w_rows) if not math.isinf(w)]
        soft_f = [(k, w) for k, w in enumerate(w_forms) if not math.isinf(w)]
        sol, _ = _two_phase(setup, hard_r, hard_f, soft_r, soft_f, cfg, strict=True)
    else:
        sol = _regularized(setup, w_rows, w_forms, cfg)
    return setup.finish(sol, tuple(lambdas))


def model_specific_constraints(base: FairnessConfusionTensor):
    """Inequalities confining each group's ROC point to the base classifier's hull."""
    return hull_constraints(base).as_inequalities(base.marginals)


def solve_ms_lafop(
    base: FairnessConfusionTensor,
    sys=None,
    lam: float | None = None,
    eps: float | None = None,
    cfg: SolverConfig = DEFAULT_CONFIG,
) -> EpsDeltaSolution:
    """LAFOP restricted to tensors reachable by randomizing ``base``.

    Give exactly one of ``lam`` (regularized, ``inf`` allowed) or ``eps``
    (hard budget).  ``sys`` defaults to equalized odds.
    """
    if (lam is None) == (eps is None):
        raise ValueError("give exactly one of lam or eps")
    m = base.marginals
    if sys is None:
        sys = [FairnessDef("EOd")]
    sys = _as_system(sys, m)
    ineq = model_specific_constraints(base)
    if lam is not None:
        return solve_lafop(m, sys, lam, cfg, ineq=ineq)
    return solve_hard(m, sys, eps, cfg, ineq=ineq)


# ---------------------------------------------------------------------------
# problem objects


@dataclass(frozen=True)
class Regularized:
    lam: float


@dataclass(frozen=True)
class Hard:
    eps: float


@dataclass(frozen=True)
class Multilinear:
    lambdas: tuple


@dataclass(frozen=True)
class ModelSpecific:
    base: FairnessConfusionTensor
    lam: float | None = None
    eps: float | None = None


@dataclass(frozen=True)
class LafopProblem:
    marginals: Marginals
    defs: tuple
    mode: object

    def __post_init__(self):
        mode = self.mode
        if isinstance(mode, Regularized) and mode.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if isinstance(mode, Hard) and mode.eps < 0:
            raise ValueError("epsilon must be nonnegative")
        if isinstance(mode, Multilinear) and len(mode.lambdas) != len(self.defs):
            raise ValueError("one weight per definition")

    def system(self):
        return stack(list(self.defs), self.marginals)

    def solve(self, cfg: SolverConfig = DEFAULT_CONFIG) -> EpsDeltaSolution:
        sys = self.system()
        mode = self.mode
        if isinstance(mode, Regularized):
            return solve_lafop(self.marginals, sys, mode.lam, cfg)
        if isinstance(mode, Hard):
            return solve_hard(self.marginals, sys, mode.eps, cfg)
        if isinstance(mode, Multilinear):
            return solve_mlafop(self.marginals, sys, list(mode.lambdas), cfg)
        if isinstance(mode, ModelSpecific):
            return solve_ms_lafop(mode.base, sys, lam=mode.lam, eps=mode.eps, cfg=cfg)
        raise TypeError(f"unknown mode {mode!r}")
