"""Compatibility of fairness-definition sets and the calibration closed forms.

A set is compatible when some tensor in K satisfies every definition
exactly.  For linear sets this is a feasibility question for the stacked
system ``[A_const; A] z = [b_const; 0], z >= 0``; it is decided here in
floating point through the solver's phase 1 and, for rational inputs, in
exact arithmetic by enumerating the vertices of the solution polytope.

Sets containing calibration within groups (CG) with distinct scores have at
most one candidate, the closed-form ``z0``, so quadratic members are decided
by evaluating them at ``z0``.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Sequence
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DefinitionError, InvalidScores
from .fairness import FairnessDef, exact_residuals, gap, pp_form, stack
from .solver import DEFAULT_CONFIG, QuadraticProgram, SolverConfig, feasible, solve
from .tensor import A_CONST, ERROR_VECTOR, Marginals

ZERO, UNIQUE, INFINITE = "zero", "unique", "infinite"
FACE_TOL = 1e-9


@dataclass(frozen=True)
class CompatReport:
    defs: tuple
    compatible: bool
    solution_count_class: str
    witness: np.ndarray | None
    violated_condition: str | None = None
    face_dimension: int = -1
    min_residual: float = 0.0
    method: str = "linear-feasibility"
    approximate: bool = False

    def __post_init__(self):
        if self.compatible != (self.solution_count_class != ZERO):
            raise ValueError("compatible must agree with the solution count class")

    def to_dict(self):
        return {
            "set": [str(d) for d in self.defs],
            "verdict": "compatible" if self.compatible else "incompatible",
            "solution_count_class": self.solution_count_class,
            "face_dimension": self.face_dimension,
            "violated_condition": self.violated_condition,
            "witness": None if self.witness is None else [float(x) for x in self.witness],
            "min_residual": self.min_residual,
            "method": self.method,
            "approximate": self.approximate,
        }


def _is_rational(x):
    return isinstance(x, (int, Fraction)) and not isinstance(x, bool)


def _linear_only(defs):
    quad = [str(d) for d in defs if not d.is_linear]
    if quad:
        raise DefinitionError(
            f"quadratic definitions {', '.join(quad)} are not handled by the linear check; use decide_compat"
        )


# ---------------------------------------------------------------------------
# floating-point check


def check_compat(defs: Sequence[FairnessDef], m: Marginals, cfg: SolverConfig = DEFAULT_CONFIG) -> CompatReport:
    """Decide whether the linear definitions ``defs`` can hold together on K.

    The solution count class is ``unique`` when the feasible face is a single
    point and ``infinite`` when its dimension is at least one.  The face
    dimension counts coordinates forced to zero on the face (found by
    maximizing each over the face) as extra equalities.
    """
    defs = tuple(defs)
    _linear_only(defs)
    sys = stack(defs, m)
    A = sys.linear
    eq = (A, np.zeros(len(A)))
    res = feasible(m, eq=eq, cfg=cfg)
    if not res.feasible:
        return CompatReport(
            defs,
            False,
            ZERO,
            None,
            violated_condition=_violated(defs, m),
            min_residual=res.residual,
        )
    lp_cfg = SolverConfig(
        feasibility_tol=cfg.feasibility_tol,
        optimality_tol=cfg.optimality_tol,
        max_iterations=cfg.max_iterations,
        tie_break=False,
    )
    forced = []
    for k in range(8):
        q = np.zeros(8)
        q[k] = -1.0
        top = solve(QuadraticProgram(m, np.zeros((0, 8)), linear=q, eq=eq), lp_cfg)
        if top.z_star[k] <= FACE_TOL:
            forced.append(k)
    eqs = np.vstack([A_CONST, A] + [np.eye(8)[forced]] if forced else [A_CONST, A])
    s = np.linalg.svd(eqs, compute_uv=False)
    rank = int(np.sum(s > FACE_TOL * max(1.0, s[0])))
    dim = 8 - rank
    witness = solve(QuadraticProgram(m, np.zeros((0, 8)), eq=eq), cfg).z_star
    return CompatReport(defs, True, UNIQUE if dim == 0 else INFINITE, witness, face_dimension=dim)


# ---------------------------------------------------------------------------
# exact rational check


def rref(rows):
    """Reduced row echelon form over the rationals; returns ``(R, pivots)``."""
    R = [[Fraction(x) for x in row] for row in rows]
    pivots = []
    r = 0
    ncols = len(R[0]) if R else 0
    for c in range(ncols):
        p = next((i for i in range(r, len(R)) if R[i][c] != 0), None)
        if p is None:
            continue
        R[r], R[p] = R[p], R[r]
        piv = R[r][c]
        R[r] = [x / piv for x in R[r]]
        for i in range(len(R)):
            if i != r and R[i][c] != 0:
                f = R[i][c]
                R[i] = [a - f * b for a, b in zip(R[i], R[r])]
        pivots.append(c)
        r += 1
        if r == len(R):
            break
    return R, pivots


def exact_rank(rows):
    return len(rref(rows)[1]) if len(rows) else 0


def _exact_solve(rows, rhs):
    """Unique solution of a full-column-rank consistent system, else None."""
    aug = [list(r) + [b] for r, b in zip(rows, rhs)]
    R, piv = rref(aug)
    n = len(rows[0])
    if n in piv or len(piv) < n:
        return None
    sol = [Fraction(0)] * n
    for i, c in enumerate(piv):
        sol[c] = R[i][n]
    return sol


def exact_check(defs: Sequence[FairnessDef], m: Marginals) -> CompatReport:
    """Exact verdict for linear sets with rational marginals and parameters.

    Enumerates every basic solution (coordinates set to zero until the
    stacked system has full column rank); the solution set is a polytope, so
    it is nonempty exactly when one of them is nonnegative, and a coordinate
    vanishes on the whole set exactly when it vanishes at every vertex.
    """
    defs = tuple(defs)
    _linear_only(defs)
    for v in (m.n1, m.m1, m.n0, m.m0):
        if not _is_rational(v):
            raise DefinitionError("exact check needs integer or Fraction marginals")
    for d in defs:
        for _, v in d.params:
            if not (_is_rational(v) or isinstance(v, bool)):
                raise DefinitionError(f"exact check needs rational parameters, got {d}")
    sys = stack(defs, m, exact=True)
    rows = [list(r) for r in A_CONST.astype(int).tolist()] + [list(r) for r in sys.linear]
    rhs = list(m.b_const()) + [Fraction(0)] * len(sys.linear)
    r = exact_rank(rows)
    vertices = []
    for S in itertools.combinations(range(8), 8 - r):
        extra = [[1 if j == k else 0 for j in range(8)] for k in S]
        z = _exact_solve(rows + extra, rhs + [Fraction(0)] * len(S))
        if z is not None and all(x >= 0 for x in z) and z not in vertices:
            vertices.append(z)
    if not vertices:
        return CompatReport(defs, False, ZERO, None, violated_condition=_violated(defs, m), method="exact")
    forced = [k for k in range(8) if all(v[k] == 0 for v in vertices)]
    extra = [[1 if j == k else 0 for j in range(8)] for k in forced]
    dim = 8 - exact_rank(rows + extra)
    witness = np.array(vertices[0], dtype=object)
    return CompatReport(defs, True, UNIQUE if dim == 0 else INFINITE, witness, face_dimension=dim, method="exact")


# ---------------------------------------------------------------------------
# calibration closed forms


@dataclass(frozen=True)
class CgClosedForm:
    """The only tensor calibrated with scores ``v0 < v1``, and whether it lies in K."""

    z0: np.ndarray
    admissible: bool
    v0: object
    v1: object


def _num_for(*values):
    return (lambda x: Fraction(x)) if all(_is_rational(v) for v in values) else float


def cg_closed_form(m: Marginals, v0, v1) -> CgClosedForm:
    """Closed-form calibrated tensor; exact when every input is rational.

    Admissible iff ``0 <= v0 <= min_a M_a/N_a <= max_a M_a/N_a <= v1 <= 1``,
    which is exactly ``z0 >= 0``.
    """
    if not (0 <= v0 <= 1 and 0 <= v1 <= 1):
        raise InvalidScores(f"scores must lie in [0, 1], got v0={v0}, v1={v1}")
    if v0 >= v1:
        raise InvalidScores(f"closed form needs v0 < v1, got v0={v0}, v1={v1}; see cg_degenerate_family")
    num = _num_for(m.n1, m.m1, m.n0, m.m0, v0, v1)
    V0, V1 = num(v0), num(v1)
    n = num(m.n1) + num(m.n0)
    scale = n * (V1 - V0)
    z = []
    for na, ma in ((num(m.n1), num(m.m1)), (num(m.n0), num(m.m0))):
        hi = ma - na * V0
        lo = na * V1 - ma
        z += [V1 * hi, V0 * lo, (1 - V1) * hi, (1 - V0) * lo]
    z0 = np.array([x / scale for x in z], dtype=object if num is not float else float)
    admissible = all(x >= 0 for x in z0)
    return CgClosedForm(z0, bool(admissible), v0, v1)


@dataclass(frozen=True)
class CgDegenerateFamily:
    """Calibrated tensors when both score bins share the score ``v``.

    ``z(alpha, beta)`` for ``0 <= alpha <= (1 - v) N1`` and
    ``0 <= beta <= (1 - v) N0``; it meets the marginals only when ``v`` equals
    both base rates (``consistent``).
    """

    marginals: Marginals
    v: object
    consistent: bool

    @property
    def alpha_max(self):
        return (1 - self.v) * self.marginals.n1

    @property
    def beta_max(self):
        return (1 - self.v) * self.marginals.n0

    @property
    def empty(self):
        return not self.consistent

    def z(self, alpha, beta):
        if not (0 <= alpha <= self.alpha_max and 0 <= beta <= self.beta_max):
            raise ValueError(f"(alpha, beta)=({alpha}, {beta}) outside the parameter box")
        m, v = self.marginals, self.v
        num = _num_for(m.n1, m.n0, v, alpha, beta)
        v = num(v)
        n = num(m.n1) + num(m.n0)
        if v == 1:
            # only positives and everything predicted positive
            z = [num(m.n1), 0, 0, 0, num(m.n0), 0, 0, 0]
            return np.array([num(x) / n for x in z], dtype=object if num is not float else float)
        out = []
        for na, p in ((num(m.n1), num(alpha)), (num(m.n0), num(beta))):
            out += [v * (na * (1 - v) - p), v * p, (1 - v) * (na * (1 - v) - p), (1 - v) * p]
        scale = n * (1 - v)
        return np.array([x / scale for x in out], dtype=object if num is not float else float)


def cg_degenerate_family(m: Marginals, v) -> CgDegenerateFamily:
    if not 0 <= v <= 1:
        raise InvalidScores(f"score must lie in [0, 1], got {v}")
    if _is_rational(v) and all(_is_rational(x) for x in (m.n1, m.m1, m.n0, m.m0)):
        ok = Fraction(m.m1) == Fraction(v) * m.n1 and Fraction(m.m0) == Fraction(v) * m.n0
    else:
        ok = math.isclose(m.m1, v * m.n1, abs_tol=1e-12) and math.isclose(m.m0, v * m.n0, abs_tol=1e-12)
    return CgDegenerateFamily(m, v, bool(ok))


# ---------------------------------------------------------------------------
# quadratic members via z0


def _cg_def(defs):
    cgs = [d for d in defs if d.tag == "CG"]
    return cgs[0] if cgs else None


def decide_compat(
    defs: Sequence[FairnessDef], m: Marginals, cfg: SolverConfig = DEFAULT_CONFIG, tol: float = 1e-12
) -> CompatReport:
    """Compatibility for any set.

    Linear sets go to :func:`check_compat`.  Sets with a quadratic member and
    a CG member with distinct scores are decided at the closed-form ``z0``.
    Anything else falls back to the least achievable deviation from a
    multistart solve and is flagged approximate.
    """
    defs = tuple(defs)
    if all(d.is_linear for d in defs):
        return check_compat(defs, m, cfg)
    cg = _cg_def(defs)
    if cg is not None and cg.param("v0") != cg.param("v1"):
        cf = cg_closed_form(m, cg.param("v0"), cg.param("v1"))
        if not cf.admissible:
            return CompatReport(
                defs, False, ZERO, None, violated_condition="CG scores outside the admissible range", method="cg-z0"
            )
        exact = cf.z0.dtype == object
        sys = stack(defs, m, exact=exact)
        if exact:
            lin, quad = exact_residuals(sys, cf.z0)
            ok = all(x == 0 for x in lin) and all(x == 0 for x in quad)
            resid = float(sum(x * x for x in lin) + sum(x * x for x in quad))
        else:
            rep = gap(sys, cf.z0)
            resid = rep.epsilon
            ok = rep.max_abs() <= tol
        if ok:
            return CompatReport(defs, True, UNIQUE, cf.z0, face_dimension=0, method="cg-z0")
        return CompatReport(
            defs, False, ZERO, None, violated_condition=_violated(defs, m), min_residual=resid, method="cg-z0"
        )
    from .lafop import min_residual

    res = min_residual(m, defs, cfg)
    ok = math.sqrt(res) <= cfg.feasibility_tol
    return CompatReport(
        defs,
        ok,
        INFINITE if ok else ZERO,
        None,
        violated_condition=None if ok else _violated(defs, m),
        min_residual=res,
        method="multistart",
        approximate=True,
    )


# ---------------------------------------------------------------------------
# named compatibility conditions for CG sets


def _ebr(m):
    return m.equal_base_rates(tol=1e-12)


def _eq(a, b):
    if _is_rational(a) and _is_rational(b):
        return Fraction(a) == Fraction(b)
    return abs(a - b) <= 1e-12


ATOMS = {
    "EBR": lambda m, v0, v1: _ebr(m),
    "v0=0": lambda m, v0, v1: _eq(v0, 0),
    "v1=1": lambda m, v0, v1: _eq(v1, 1),
    "M0=M1": lambda m, v0, v1: _eq(m.m0, m.m1),
    "N0=N1": lambda m, v0, v1: _eq(m.n0, m.n1),
}


@dataclass(frozen=True)
class ConditionRow:
    """Sets of definitions with a necessary condition for compatibility.

    ``condition`` is a disjunction of conjunctions of atom names.
    """

    name: str
    sets: tuple
    condition: tuple

    def holds(self, m, v0, v1):
        return any(all(ATOMS[a](m, v0, v1) for a in conj) for conj in self.condition)

    def describe(self):
        return " or ".join(" and ".join(conj) for conj in self.condition)


def _with_any_of(core, extras):
    out = []
    for k in range(len(extras) + 1):
        for sub in itertools.combinations(extras, k):
            out.append(frozenset(core) | frozenset(sub))
    return tuple(out)


_EXTRAS = ("EOp", "PE", "PCB", "NCB", "EFOR")

CG_CONDITION_ROWS = (
    ConditionRow("cg-pp-dp", _with_any_of(("CG", "PP", "DP"), _EXTRAS), (("M0=M1", "N0=N1"),)),
    ConditionRow("cg-dp", _with_any_of(("CG", "DP"), _EXTRAS), (("EBR",),)),
    ConditionRow(
        "cg-positive",
        tuple(
            frozenset(s)
            for s in (
                ("CG", "EOp"),
                ("CG", "PCB"),
                ("CG", "EOp", "PCB"),
                ("CG", "EFOR", "EOp"),
                ("CG", "EFOR", "PCB"),
                ("CG", "EFOR", "EOp", "PCB"),
            )
        ),
        (("v0=0",), ("EBR",)),
    ),
    ConditionRow(
        "cg-negative",
        tuple(
            frozenset(s)
            for s in (
                ("CG", "PE"),
                ("CG", "NCB"),
                ("CG", "EOp", "NCB"),
                ("CG", "EFOR", "PE"),
                ("CG", "EFOR", "NCB"),
                ("CG", "EFOR", "EOp", "NCB"),
            )
        ),
        (("v1=1",), ("EBR",)),
    ),
    ConditionRow(
        "cg-both",
        tuple(
            frozenset(s)
            for s in (
                ("CG", "EOd"),
                ("CG", "PCB", "NCB"),
                ("CG", "EOd", "PCB", "NCB"),
                ("CG", "EFOR", "EOd"),
                ("CG", "EFOR", "PCB", "NCB"),
                ("CG", "EFOR", "EOd", "PCB", "NCB"),
            )
        ),
        (("v0=0", "v1=1"), ("EBR",)),
    ),
)


def condition_row(tags) -> ConditionRow | None:
    key = frozenset(tags)
    for row in CG_CONDITION_ROWS:
        if key in row.sets:
            return row
    return None


def make_defs(tags, v0, v1):
    """Definitions for a tag set, giving the scored ones ``v0``/``v1``."""
    out = []
    for t in tags:
        if t in ("CG", "PCB", "NCB"):
            out.append(FairnessDef.make(t, v0=v0, v1=v1))
        else:
            out.append(FairnessDef(t))
    return out


def _violated(defs, m):
    cg = _cg_def(defs)
    row = condition_row(d.tag for d in defs)
    if row is not None and cg is not None:
        v0, v1 = cg.param("v0"), cg.param("v1")
        if not cg_closed_form(m, v0, v1).admissible:
            return "CG scores outside the admissible range"
        if not row.holds(m, v0, v1):
            return row.describe()
    if cg is not None and cg.param("v0") != cg.param("v1"):
        cf = cg_closed_form(m, cg.param("v0"), cg.param("v1"))
        if not cf.admissible:
            return "CG scores outside the admissible range"
    return None


def pp_ratio_condition(m: Marginals, v0):
    """``v0 = (M1 - M0) / (N1 - N0)``; ``None`` (vacuous) when ``N1 = N0``."""
    if _eq(m.n1, m.n0):
        return None
    if all(_is_rational(x) for x in (m.n1, m.m1, m.n0, m.m0, v0)):
        return Fraction(v0) * (m.n1 - m.n0) == m.m1 - m.m0
    return abs(v0 * (m.n1 - m.n0) - (m.m1 - m.m0)) <= 1e-12 * max(1.0, abs(m.n1 - m.n0))


@dataclass(frozen=True)
class ConditionReport:
    tags: tuple
    conditions: dict
    necessary_holds: bool
    verdict: CompatReport
    agrees: bool
    row: str | None = None

    def to_dict(self):
        return {
            "set": list(self.tags),
            "row": self.row,
            "conditions": self.conditions,
            "necessary_holds": self.necessary_holds,
            "verdict": self.verdict.to_dict(),
            "agrees": self.agrees,
        }


def corollary_conditions(tags, m: Marginals, v0, v1, cfg: SolverConfig = DEFAULT_CONFIG) -> ConditionReport:
    """Evaluate the named compatibility conditions for a CG set and cross-check.

    Sets in ``CG_CONDITION_ROWS`` use their row condition.  ``{CG, PP}`` uses
    ``v0 = (M1 - M0)/(N1 - N0)`` or ``v1 = 1`` (at ``N1 = N0`` the ratio is
    vacuous and the condition asserts nothing); ``{CG, EFOR}`` has no condition.  ``agrees`` compares the
    condition with the computed verdict: for a necessary condition, a
    compatible verdict must come with the condition holding.
    """
    tags = tuple(tags)
    key = frozenset(tags)
    defs = make_defs(tags, v0, v1)
    verdict = decide_compat(defs, m, cfg)
    conds = {name: bool(f(m, v0, v1)) for name, f in ATOMS.items()}
    row = condition_row(tags)
    if row is not None:
        holds = row.holds(m, v0, v1)
        name = row.name
    elif key == frozenset(("CG", "PP")):
        ratio = pp_ratio_condition(m, v0)
        conds["v0=(M1-M0)/(N1-N0)"] = "vacuous" if ratio is None else bool(ratio)
        # a vacuous ratio asserts nothing
        holds = ratio is None or bool(ratio) or conds["v1=1"]
        name = "cg-pp"
    elif key == frozenset(("CG", "EFOR")):
        holds = True
        name = "cg-efor"
    elif key == frozenset(("CG",)):
        holds = True
        name = "cg"
    else:
        raise DefinitionError(f"no named conditions for {sorted(key)}")
    agrees = holds or not verdict.compatible
    return ConditionReport(tags, conds, bool(holds), verdict, bool(agrees), name)


# ---------------------------------------------------------------------------
# PE + EFNR + PP


@dataclass(frozen=True)
class ChouldechovaReport:
    satisfies_set: bool
    no_true_positives: bool
    no_false_positives: bool
    equal_base_rates: bool

    @property
    def any_condition(self):
        return self.no_true_positives or self.no_false_positives or self.equal_base_rates

    def to_dict(self):
        return {
            "satisfies_set": self.satisfies_set,
            "no_true_positives": self.no_true_positives,
            "no_false_positives": self.no_false_positives,
            "equal_base_rates": self.equal_base_rates,
        }


def chouldechova_check(z, tol=1e-9) -> ChouldechovaReport:
    """Which escape conditions hold at ``z`` when {PE, EFNR, PP} is imposed.

    Marginals are read off ``z`` itself.
    """
    z = np.asarray(z, dtype=float)
    n1, n0 = z[:4].sum(), z[4:].sum()
    m1, m0 = z[0] + z[1], z[4] + z[5]
    if min(m1, m0, n1 - m1, n0 - m0) <= tol:
        satisfies = False
    else:
        pe = z[2] / (n1 - m1) - z[6] / (n0 - m0)
        efnr = z[1] / m1 - z[5] / m0
        pp = 0.5 * z @ pp_form() @ z
        satisfies = max(abs(pe), abs(efnr), abs(pp)) <= tol
    return ChouldechovaReport(
        satisfies_set=bool(satisfies),
        no_true_positives=bool(z[0] <= tol and z[4] <= tol),
        no_false_positives=bool(z[2] <= tol and z[6] <= tol),
        equal_base_rates=bool(abs(m1 * n0 - m0 * n1) <= tol),
    )


# ---------------------------------------------------------------------------
# CG and accuracy


@dataclass(frozen=True)
class CgAccuracyVerdict:
    alpha: object
    equality: bool
    alpha_bound: bool
    v0_bound: bool

    @property
    def verdict(self):
        return self.equality and self.alpha_bound and self.v0_bound


def cg_accuracy_condition(m: Marginals, v0, v1) -> CgAccuracyVerdict:
    """Closed-form perfect-accuracy criterion for calibrated classifiers.

    ``v0 (1 - 2 v1) = alpha (1 - v1 + v0)`` (cross-multiplied), ``alpha <=
    1/8`` and ``|v0 - 1/4| <= sqrt(1 - 8 alpha)/4`` with ``alpha = (M0 + M1)/N``.
    See :func:`cg_zero_error` for the direct evaluation of ``c . z0``, which
    does not always agree with this criterion.
    """
    if not (0 <= v0 < v1 <= 1):
        raise InvalidScores(f"need 0 <= v0 < v1 <= 1, got v0={v0}, v1={v1}")
    num = _num_for(m.m0, m.m1, m.n0, m.n1, v0, v1)
    alpha = (num(m.m0) + num(m.m1)) / (num(m.n0) + num(m.n1))
    V0, V1 = num(v0), num(v1)
    lhs = V0 * (1 - 2 * V1)
    rhs = alpha * (1 - V1 + V0)
    equality = lhs == rhs if num is not float else abs(lhs - rhs) <= 1e-12
    alpha_bound = alpha <= Fraction(1, 8) if num is not float else alpha <= 0.125 + 1e-15
    if alpha_bound:
        # |v0 - 1/4| <= sqrt(1 - 8 alpha)/4  <=>  (4 v0 - 1)^2 <= 1 - 8 alpha
        d = (4 * V0 - 1) ** 2 - (1 - 8 * alpha)
        v0_bound = d <= 0 if num is not float else d <= 1e-12
    else:
        v0_bound = False
    return CgAccuracyVerdict(alpha, bool(equality), bool(alpha_bound), bool(v0_bound))


def cg_zero_error(m: Marginals, v0, v1) -> bool:
    """Whether the calibrated tensor ``z0`` lies in K and has zero error."""
    cf = cg_closed_form(m, v0, v1)
    if not cf.admissible:
        return False
    err = sum(c * x for c, x in zip(ERROR_VECTOR.astype(int).tolist(), cf.z0))
    return err == 0 if cf.z0.dtype == object else abs(err) <= 1e-12
