import itertools
import math
import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fact.errors import Infeasible
from fact.fairness import FairnessDef, gap, parse_defs, stack
from fact.incompat import cg_closed_form
from fact.lafop import (
    Hard,
    LafopProblem,
    ModelSpecific,
    Multilinear,
    Regularized,
    min_residual,
    solve_hard,
    solve_lafop,
    solve_mlafop,
    solve_ms_lafop,
)
from fact.tensor import ERROR_VECTOR, Marginals, from_counts, in_polytope

from .conftest import regular_marginals
from .oracles import grid_min

INF = math.inf
M = Marginals(n1=32, m1=16, n0=32, m0=8)
EOD_DP = [FairnessDef("EOd"), FairnessDef("DP")]


class TestRegularized:
    @given(regular_marginals(), st.sampled_from(["DP", "EOd", "CG(v0=0.1,v1=0.9)", "PE,EFNR"]))
    def test_zero_weight_is_perfect(self, m, text):
        sol = solve_lafop(m, parse_defs(text), 0.0)
        assert sol.delta == pytest.approx(0.0, abs=1e-18)

    @settings(max_examples=30)
    @given(regular_marginals(max_n=60), st.data())
    def test_infinite_weight_calibration_is_closed_form(self, m, data):
        lo = min(Fraction(m.m1, m.n1), Fraction(m.m0, m.n0))
        hi = max(Fraction(m.m1, m.n1), Fraction(m.m0, m.n0))
        v0 = float(lo * Fraction(data.draw(st.integers(0, 10)), 10))
        v1 = float(hi + (1 - hi) * Fraction(data.draw(st.integers(0, 10)), 10))
        sol = solve_lafop(m, [FairnessDef.make("CG", v0=v0, v1=v1)], INF)
        assert np.max(np.abs(sol.z_star - cg_closed_form(m, v0, v1).z0)) <= 1e-9

    def test_infinite_weight_dp_with_equal_base_rates(self):
        m = Marginals(20, 8, 30, 12)
        sol = solve_lafop(m, [FairnessDef("DP")], INF)
        assert sol.delta == pytest.approx(0.0, abs=1e-18)
        assert gap(stack([FairnessDef("DP")], m), sol.z_star).epsilon <= 1e-18

    def test_infinite_weight_compatible_reaches_zero(self):
        sol = solve_lafop(M, EOD_DP, INF)
        assert sol.epsilon <= 1e-9**2

    def test_regularization_path_is_monotone(self):
        sols = [solve_lafop(M, EOD_DP, lam) for lam in np.logspace(-4, 4, 25)]
        eps = [s.epsilon for s in sols]
        dlt = [s.delta for s in sols]
        assert all(b <= a + 1e-15 for a, b in itertools.pairwise(eps))
        assert all(b >= a - 1e-15 for a, b in itertools.pairwise(dlt))

    def test_solution_fields(self):
        sol = solve_lafop(M, EOD_DP, 2.0)
        assert in_polytope(sol.z_star, M)
        assert sol.error_rate == pytest.approx(float(ERROR_VECTOR @ sol.z_star))
        assert sol.delta == pytest.approx(sol.error_rate**2)
        assert set(sol.row()) >= {"lambda", "epsilon", "delta", "error_rate"}

    def test_quadratic_members_warn_and_flag(self):
        with pytest.warns(RuntimeWarning):
            sol = solve_lafop(M, parse_defs("DP,PP"), 10.0)
        assert sol.approximate


class TestHard:
    def test_large_budget_is_free(self):
        base = solve_lafop(M, EOD_DP, 0.0)
        sol = solve_hard(M, EOD_DP, base.epsilon * 2)
        assert sol.delta == pytest.approx(0.0, abs=1e-18)

    def test_kleinberg_set_infeasible_at_zero(self):
        defs = parse_defs("CG(v0=0.1,v1=0.8),PCB(v0=0.1,v1=0.8),NCB(v0=0.1,v1=0.8)")
        with pytest.raises(Infeasible) as exc:
            solve_hard(M, defs, 0.0)
        assert exc.value.min_residual > 0

    def test_negative_budget(self):
        with pytest.raises(ValueError):
            solve_hard(M, EOD_DP, -1.0)

    @pytest.mark.parametrize("eps", [1e-3, 1e-4, 1e-5])
    def test_matches_grid_oracle(self, eps):
        A = stack(EOD_DP, M).linear
        sol = solve_hard(M, EOD_DP, eps)
        assert sol.epsilon <= eps * (1 + 1e-9)

        def err_sq(Z):
            e = Z @ ERROR_VECTOR
            return e * e

        def within(Z):
            r = Z @ A.T
            return np.sum(r * r, axis=1) <= eps

        best, _ = grid_min(M, err_sq, 32, keep=within)
        assert sol.delta <= best + 1e-9

    def test_min_residual_zero_for_compatible(self):
        assert min_residual(M, EOD_DP) <= 1e-18
        assert min_residual(M, parse_defs("CG(v0=0.1,v1=0.8),DP")) > 1e-6


class TestMultilinear:
    def test_equal_weights_match_single_weight(self):
        a = solve_mlafop(M, EOD_DP, [3.0, 3.0])
        b = solve_lafop(M, EOD_DP, 3.0)
        assert np.allclose(a.z_star, b.z_star, atol=1e-12)

    def test_infinite_entry_imposed_exactly(self):
        sol = solve_mlafop(M, EOD_DP, [INF, 0.5])
        assert abs(sol.per_definition["EOd"]) <= 1e-16
        assert sol.per_definition["DP"] > 0 or sol.delta == 0

    def test_weight_count_checked(self):
        with pytest.raises(ValueError):
            solve_mlafop(M, EOD_DP, [1.0])

    def test_zero_weight_on_one_definition(self):
        sol = solve_mlafop(M, EOD_DP, [0.0, 0.0])
        assert sol.delta == pytest.approx(0.0, abs=1e-18)


class TestModelSpecific:
    base = from_counts([40, 10, 15, 35, 20, 20, 5, 45])

    def test_fair_base_stays_reachable(self):
        # both groups share TPR 0.8 and FPR 0.3
        fair = from_counts([8, 2, 3, 7, 16, 4, 6, 14])
        sol = solve_ms_lafop(fair, eps=0.0)
        assert sol.epsilon <= 1e-18
        assert sol.error_rate <= fair.error_rate() + 1e-12

    def test_perfect_base_with_equal_base_rates(self):
        perfect = from_counts([5, 0, 0, 5, 3, 0, 0, 3])
        sol = solve_ms_lafop(perfect, lam=INF)
        assert sol.delta == pytest.approx(0.0, abs=1e-18) and sol.epsilon <= 1e-18

    @pytest.mark.parametrize("eps", [1e-3, 1e-4, 1e-5, 0.0])
    def test_model_specific_never_beats_agnostic(self, eps):
        ms = solve_ms_lafop(self.base, eps=eps)
        ma = solve_hard(self.base.marginals, [FairnessDef("EOd")], eps)
        assert ms.delta >= ma.delta - 1e-12

    def test_exactly_one_mode(self):
        with pytest.raises(ValueError):
            solve_ms_lafop(self.base)
        with pytest.raises(ValueError):
            solve_ms_lafop(self.base, lam=1.0, eps=0.1)


class TestProblem:
    @pytest.mark.parametrize(
        "mode",
        [
            Regularized(1.0),
            Hard(1e-4),
            Multilinear((1.0, 2.0)),
            ModelSpecific(from_counts([8, 2, 3, 7, 6, 4, 1, 9]), lam=1.0),
        ],
    )
    def test_modes_dispatch(self, mode):
        m = mode.base.marginals if isinstance(mode, ModelSpecific) else M
        sol = LafopProblem(m, tuple(EOD_DP), mode).solve()
        assert in_polytope(sol.z_star, m)

    def test_validation(self):
        with pytest.raises(ValueError):
            LafopProblem(M, tuple(EOD_DP), Regularized(-1.0))
        with pytest.raises(ValueError):
            LafopProblem(M, tuple(EOD_DP), Multilinear((1.0,)))


def test_sweep_solutions_are_deterministic_under_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        a = solve_lafop(M, EOD_DP, 1.0)
    assert np.array_equal(a.z_star, solve_lafop(M, EOD_DP, 1.0).z_star)
