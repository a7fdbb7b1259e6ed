"""Randomized post-processing from a model-specific optimum.

A base classifier with per-group ROC point ``(F, T)`` can be randomized into
any point of the parallelogram spanned by (0,0), (F,T), (1-F,1-T), (1,1):
predict 1 with probability ``p11`` when the base says 1, and with ``p10``
when it says 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateBaseClassifier, DegenerateMarginal, NotRealizable
from .hull import Halfplanes, hull_halfplanes
from .tensor import FairnessConfusionTensor, group_rates

CLAMP_TOL = 1e-9

# index of (TP_a, FP_a) in z
_TP = {1: 0, 0: 4}
_FP = {1: 2, 0: 6}


@dataclass(frozen=True)
class MixingRates:
    """Per group: ``p11 = Pr(Y~=1 | Yhat=1)``, ``p10 = Pr(Y~=1 | Yhat=0)``."""

    p11_1: float
    p10_1: float
    p11_0: float
    p10_0: float

    def __post_init__(self):
        for v in (self.p11_1, self.p10_1, self.p11_0, self.p10_0):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"mixing rate {v} outside [0, 1]")

    @classmethod
    def identity(cls):
        return cls(1.0, 0.0, 1.0, 0.0)

    def for_group(self, a):
        return (self.p11_1, self.p10_1) if a == 1 else (self.p11_0, self.p10_0)

    def as_dict(self):
        return {"a=1": {"p11": self.p11_1, "p10": self.p10_1}, "a=0": {"p11": self.p11_0, "p10": self.p10_0}}


@dataclass(frozen=True)
class HullConstraints:
    """Reachable ROC region of each group."""

    group1: Halfplanes
    group0: Halfplanes

    def __getitem__(self, a):
        return self.group1 if a == 1 else self.group0

    def as_inequalities(self, marginals):
        """Rows ``(A_in, b_in)`` such that ``A_in z <= b_in`` encodes membership.

        With the marginals fixed, ``FPR_a = z_FP * N / (N_a - M_a)`` and
        ``TPR_a = z_TP * N / M_a`` are linear in z.
        """
        n = float(marginals.n_total)
        rows, rhs = [], []
        for a in (1, 0):
            pos = float(marginals.m_group(a))
            neg = float(marginals.neg_group(a))
            hp = self[a]
            for (nf, nt), d in zip(hp.normals, hp.offsets):
                row = np.zeros(8)
                row[_FP[a]] = nf * n / neg
                row[_TP[a]] = nt * n / pos
                rows.append(row)
                rhs.append(d)
        return np.array(rows), np.array(rhs)


def _base_roc(base: FairnessConfusionTensor):
    m = base.marginals
    for a in (1, 0):
        if m.m_group(a) == 0:
            raise DegenerateMarginal(f"M{a}")
        if m.neg_group(a) == 0:
            raise DegenerateMarginal(f"N{a}-M{a}")
    r = group_rates(base.z)
    return {a: (r[a].fpr, r[a].tpr) for a in (1, 0)}


def hull_constraints(base: FairnessConfusionTensor) -> HullConstraints:
    """Halfplanes of conv{(0,0), (F,T), (1-F,1-T), (1,1)} for each group."""
    roc = _base_roc(base)
    out = {}
    for a, (f, t) in roc.items():
        out[a] = hull_halfplanes([(0.0, 0.0), (f, t), (1.0 - f, 1.0 - t), (1.0, 1.0)])
    return HullConstraints(group1=out[1], group0=out[0])


def mixing_rates(base: FairnessConfusionTensor, target) -> MixingRates:
    """Rates turning ``base`` into the target tensor (z or tensor) in expectation.

    Per group solves ``T~ = p11 T + p10 (1 - T)``, ``F~ = p11 F + p10 (1 - F)``.
    """
    z_t = target.z if isinstance(target, FairnessConfusionTensor) else np.asarray(target, dtype=float)
    roc = _base_roc(base)
    hulls = hull_constraints(base)
    tr = group_rates(z_t)
    vals = {}
    for a in (1, 0):
        f, t = roc[a]
        ft, tt = tr[a].fpr, tr[a].tpr
        if hulls[a].violation((ft, tt)) > CLAMP_TOL:
            raise NotRealizable(f"group {a}: target ROC point ({ft:.6g}, {tt:.6g}) outside the reachable hull")
        det = t - f
        if abs(det) <= 1e-12:
            raise DegenerateBaseClassifier(f"group {a}: base classifier has TPR == FPR")
        M = np.array([[t, 1.0 - t], [f, 1.0 - f]])
        p11, p10 = np.linalg.solve(M, np.array([tt, ft]))
        vals[a] = (_clamp(p11, a), _clamp(p10, a))
    return MixingRates(vals[1][0], vals[1][1], vals[0][0], vals[0][1])


def _clamp(p, a):
    if p < -CLAMP_TOL or p > 1.0 + CLAMP_TOL:
        raise NotRealizable(f"group {a}: mixing rate {p:.12g} outside [0, 1]")
    return float(min(1.0, max(0.0, p)))


def _splitmix64(x):
    x = x + np.uint64(0x9E3779B97F4A7C15)
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


def record_uniforms(seed, ids):
    """Uniform [0, 1) draw per record id, a pure function of ``(seed, id)``."""
    ids = np.asarray(ids, dtype=np.uint64)
    with np.errstate(over="ignore"):
        key = _splitmix64(np.full(ids.shape, np.uint64(seed % 2**64), dtype=np.uint64))
        h = _splitmix64(ids ^ key)
    return (h >> np.uint64(11)).astype(np.float64) / float(2**53)


def apply_mixing(yhat, a, rates: MixingRates, seed=0, ids=None):
    """Post-processed predictions.

    Record ``i`` is predicted 1 with probability ``p1yhat`` of its group; the
    draw depends only on ``(seed, ids[i])`` (default id: position), so
    reordering records together with their ids leaves each outcome unchanged.
    """
    yhat = np.asarray(yhat, dtype=int)
    a = np.asarray(a, dtype=int)
    if ids is None:
        ids = np.arange(yhat.size)
    u = record_uniforms(seed, ids)
    p = np.where(
        a == 1,
        np.where(yhat == 1, rates.p11_1, rates.p10_1),
        np.where(yhat == 1, rates.p11_0, rates.p10_0),
    )
    return (u < p).astype(int)


def expected_tensor(base: FairnessConfusionTensor, rates: MixingRates) -> FairnessConfusionTensor:
    """Tensor of the randomized classifier in expectation."""
    c = base.counts
    out = np.empty(8)
    for a, off in ((1, 0), (0, 4)):
        p11, p10 = rates.for_group(a)
        tp, fn, fp, tn = c[off : off + 4]
        new_tp = p11 * tp + p10 * fn
        new_fp = p11 * fp + p10 * tn
        out[off : off + 4] = (new_tp, tp + fn - new_tp, new_fp, fp + tn - new_fp)
    return FairnessConfusionTensor(out, base.marginals)
