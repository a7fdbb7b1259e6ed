from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fact.errors import DefinitionError, DegenerateMarginal, InvalidScores
from fact.fairness import FairnessDef, build, exact_residuals, gap, parse_defs, pp_form, stack
from fact.incompat import cg_closed_form
from fact.tensor import Marginals, group_rates

from .conftest import points_in_k, random_tensor_z

M_SYM = Marginals(n1=4, m1=2, n0=4, m0=2)
M_UNEQ = Marginals(n1=10, m1=6, n0=10, m0=3)


def _def(text):
    return parse_defs(text)[0]


class TestBuilders:
    def test_dp_row(self):
        row = build(FairnessDef("DP"), M_SYM).rows[0]
        assert row.tolist() == [0.5, 0, 0.5, 0, -0.5, 0, -0.5, 0]

    def test_eop_row_with_equal_positives(self):
        row = build(FairnessDef("EOp"), Marginals(n1=5, m1=2, n0=7, m0=2)).rows[0]
        nz = row / row[0]
        assert nz.tolist() == [1, 0, 0, 0, -1, 0, 0, 0]

    def test_pp_form_entries(self):
        B = pp_form()
        assert B[0, 6] == B[6, 0] == -1
        assert B[2, 4] == B[4, 2] == 1
        assert np.count_nonzero(B) == 4

    def test_eod_is_eop_then_pe(self, rng):
        sys = stack([FairnessDef("EOd")], M_UNEQ)
        parts = stack([FairnessDef("EOp"), FairnessDef("PE")], M_UNEQ)
        z = random_tensor_z(rng, M_UNEQ)
        assert np.allclose(sys.linear @ z, parts.linear @ z)

    def test_coefficients_bounded(self):
        for text in (
            "DP",
            "EOp",
            "PE",
            "EOd",
            "EFNR",
            "CG(v0=0.2,v1=0.7)",
            "PCB(v0=0.2,v1=0.7)",
            "NCB(v0=0.2,v1=0.7)",
            "REOd(alpha0=1,beta0=1,alpha1=1,beta1=1)",
        ):
            rows = build(_def(text), M_UNEQ).rows
            assert np.all(np.abs(rows) <= 1.0), text

    def test_degenerate_marginal_named(self):
        with pytest.raises(DegenerateMarginal) as exc:
            build(FairnessDef("EOp"), Marginals(n1=4, m1=0, n0=4, m0=2))
        assert "M1" in str(exc.value)

    def test_scores_must_be_ordered(self):
        with pytest.raises(InvalidScores):
            FairnessDef.make("CG", v0=0.6, v1=0.4)
        with pytest.raises(InvalidScores):
            FairnessDef.make("PCB", v0=0.5, v1=0.5)

    def test_reod_weights_nonnegative(self):
        with pytest.raises(DefinitionError):
            FairnessDef.make("REOd", alpha0=-1, beta0=1, alpha1=1, beta1=1)


class TestStack:
    def test_empty_system(self):
        sys = stack([], M_SYM)
        assert sys.n_rows == 0 and gap(sys, np.full(8, 1 / 8)).epsilon == 0.0

    def test_row_count(self):
        sys = stack(parse_defs("CG(v0=0.2,v1=0.7),PCB(v0=0.2,v1=0.7),NCB(v0=0.2,v1=0.7)"), M_UNEQ)
        assert sys.n_rows == 6

    def test_row_groups_partition(self):
        sys = stack(parse_defs("EOd,DP,PP"), M_UNEQ)
        assert sys.row_groups == ((0, 1), (2,), ())
        assert sys.form_groups == ((), (), (0,))


class TestGap:
    def test_dp_zero_at_perfect_with_equal_base_rates(self):
        z = np.array([2, 0, 0, 2, 2, 0, 0, 2]) / 8
        assert gap(stack([FairnessDef("DP")], M_SYM), z).epsilon == 0.0

    def test_dp_at_perfect_with_unequal_base_rates(self):
        m = M_UNEQ
        z = np.array([6, 0, 0, 4, 3, 0, 0, 7]) / 20
        r = gap(stack([FairnessDef("DP")], m), z).linear["DP"]
        scale = m.n1 * m.n0 / m.n_total**2
        assert r == pytest.approx(scale * (6 / 10 - 3 / 10))
        assert r != 0

    def test_efor_vanishes_at_calibrated_tensor(self):
        cf = cg_closed_form(M_UNEQ, Fraction(1, 5), Fraction(7, 10))
        assert cf.admissible
        sys = stack([FairnessDef("EFOR")], M_UNEQ, exact=True)
        _, quad = exact_residuals(sys, cf.z0)
        assert quad == [0]

    @given(points_in_k())
    def test_pp_residual_matches_product_difference(self, mz):
        # the form is built so that it equals (FP1 TP0 - TP1 FP0) / N^2
        _, z = mz
        r = gap(stack([FairnessDef("PP")], M_SYM), z).quadratic["PP"]
        assert r == pytest.approx(-(z[0] * z[6] - z[4] * z[2]), abs=1e-15)

    def test_aggregate_squares_both_kinds(self, rng):
        sys = stack(parse_defs("DP,PP"), M_UNEQ)
        z = random_tensor_z(rng, M_UNEQ)
        rep = gap(sys, z)
        assert rep.epsilon == pytest.approx(rep.linear["DP"] ** 2 + rep.quadratic["PP"] ** 2)


# Independent evaluator: each linear residual equals a positive constant times a
# difference of group rates, so A z = 0 exactly when the rates agree.
def _rate_statement(tag, m, z, v0=0.2, v1=0.7):
    r = group_rates(z)
    n = float(m.n_total)
    q1, q0 = m.n1 - m.m1, m.n0 - m.m0
    if tag == "DP":
        return [m.n1 * m.n0 / n**2 * (r[1].positive_rate - r[0].positive_rate)]
    if tag == "EOp":
        return [m.m1 * m.m0 / n**2 * (r[1].tpr - r[0].tpr)]
    if tag == "PE":
        return [q1 * q0 / n**2 * (r[1].fpr - r[0].fpr)]
    if tag == "EOd":
        return _rate_statement("EOp", m, z) + _rate_statement("PE", m, z)
    if tag == "EFNR":
        return [m.m1 * m.m0 / n**2 * (r[1].fnr - r[0].fnr)]
    if tag == "PCB":
        s = [v1 * r[a].tpr + v0 * r[a].fnr for a in (1, 0)]
        return [min(m.m1, m.m0) / n * (s[0] - s[1])]
    if tag == "NCB":
        s = [v1 * r[a].fpr + v0 * r[a].tnr for a in (1, 0)]
        return [min(q1, q0) / n * (s[0] - s[1])]
    if tag == "CG":
        out = []
        for off in (0, 4):
            tp, fn, fp, tn = z[off : off + 4]
            out += [(tp + fp) * (tp / (tp + fp) - v1), (fn + tn) * (fn / (fn + tn) - v0)]
        return out
    if tag == "REOd":
        return [(r[1].fpr + 2 * r[1].fnr - 3 * r[0].fpr - r[0].fnr) / n**2]
    raise AssertionError(tag)


DEF_TEXT = {
    "DP": "DP",
    "EOp": "EOp",
    "PE": "PE",
    "EOd": "EOd",
    "EFNR": "EFNR",
    "PCB": "PCB(v0=0.2,v1=0.7)",
    "NCB": "NCB(v0=0.2,v1=0.7)",
    "CG": "CG(v0=0.2,v1=0.7)",
    "REOd": "REOd(alpha1=1,beta1=2,alpha0=3,beta0=1)",
}


@pytest.mark.parametrize("tag", sorted(DEF_TEXT))
def test_linear_rows_encode_rate_statements(tag, rng):
    for _ in range(1000):
        m = Marginals(n1=int(rng.integers(4, 50)), m1=0, n0=int(rng.integers(4, 50)), m0=0)
        m = Marginals(n1=m.n1, m1=int(rng.integers(1, m.n1)), n0=m.n0, m0=int(rng.integers(1, m.n0)))
        z = random_tensor_z(rng, m)
        rows = build(_def(DEF_TEXT[tag]), m).rows
        assert np.allclose(rows @ z, _rate_statement(tag, m, z), atol=1e-13)


@given(st.integers(2, 60), st.integers(2, 60), st.data())
def test_rate_equalities_give_zero_rows(n1, n0, data):
    m1 = data.draw(st.integers(1, n1 - 1))
    m0 = data.draw(st.integers(1, n0 - 1))
    m = Marginals(n1=n1, m1=m1, n0=n0, m0=m0)
    t, f = data.draw(st.floats(0, 1)), data.draw(st.floats(0, 1))
    n = float(m.n_total)
    z = (
        np.array(
            [
                t * m1,
                (1 - t) * m1,
                f * (n1 - m1),
                (1 - f) * (n1 - m1),
                t * m0,
                (1 - t) * m0,
                f * (n0 - m0),
                (1 - f) * (n0 - m0),
            ]
        )
        / n
    )
    assert np.allclose(build(FairnessDef("EOd"), m).rows @ z, 0, atol=1e-14)
    assert abs(build(FairnessDef("EFNR"), m).rows @ z)[0] <= 1e-14


class TestParse:
    def test_parse_with_params(self):
        defs = parse_defs("CG(v0=0.3,v1=0.8),EOd,DP")
        assert [d.tag for d in defs] == ["CG", "EOd", "DP"]
        assert defs[0].param("v1") == 0.8

    def test_rationals(self):
        assert parse_defs("CG(v0=1/4,v1=3/4)")[0].param("v0") == Fraction(1, 4)

    def test_case_insensitive_round_trip(self):
        defs = parse_defs("eod,pcb(v0=0.1,v1=0.9)")
        assert ",".join(str(d) for d in defs) == "EOd,PCB(v0=0.1,v1=0.9)"

    @pytest.mark.parametrize("text", ["nonsense", "DP;EOd", "CG(v0)", "CG(v0=0.3)"])
    def test_rejects(self, text):
        with pytest.raises(DefinitionError):
            parse_defs(text)

    def test_reversed_scores(self):
        with pytest.raises(InvalidScores):
            parse_defs("CG(v0=0.9,v1=0.1)")
