"""Fairness-confusion tensor diagnostics.

Group fairness definitions become linear or quadratic functions of the
normalized confusion tensor ``z``; accuracy-fairness trade-offs become small
quadratic programs over the polytope K of valid tensors.
"""

__version__ = "0.1.0"

from .errors import FactError, Infeasible
from .fairness import FairnessDef, gap, parse_defs, stack
from .incompat import cg_closed_form, check_compat, decide_compat
from .lafop import solve_hard, solve_lafop, solve_mlafop, solve_ms_lafop
from .tensor import FairnessConfusionTensor, Marginals, from_counts, tally

__all__ = [
    "FactError",
    "FairnessConfusionTensor",
    "FairnessDef",
    "Infeasible",
    "Marginals",
    "cg_closed_form",
    "check_compat",
    "decide_compat",
    "from_counts",
    "gap",
    "parse_defs",
    "solve_hard",
    "solve_lafop",
    "solve_mlafop",
    "solve_ms_lafop",
    "stack",
    "tally",
]
