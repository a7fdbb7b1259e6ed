import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fact.errors import EmptyDataset, InfeasibleCoordinates, InvalidCount, InvalidLabel
from fact.tensor import (
    FairnessConfusionTensor,
    FreeCoordinates,
    Marginals,
    const_residual,
    embed,
    error_rate,
    extract,
    from_counts,
    from_predictions,
    group_rates,
    in_polytope,
    tally,
)

from .conftest import points_in_k, regular_marginals


class TestFromCounts:
    def test_symmetric_counts(self):
        t = from_counts([1] * 8)
        m = t.marginals
        assert (m.n_total, m.n1, m.n0, m.m1, m.m0) == (8, 4, 4, 2, 2)

    def test_zero_off_diagonal_gives_zero_error(self):
        t = from_counts([2, 0, 0, 2, 1, 0, 0, 3])
        assert (t.marginals.m1, t.marginals.m0) == (2, 1)
        assert t.error_rate() == 0.0

    def test_negative_count_rejected(self):
        with pytest.raises(InvalidCount):
            from_counts([-1, 1, 1, 1, 1, 1, 1, 1])

    def test_integral_counts_keep_integer_marginals(self):
        m = from_counts([3, 1, 2, 4, 1, 1, 0, 2]).marginals
        assert all(isinstance(v, int) for v in (m.n1, m.m1, m.n0, m.m0))

    def test_json_round_trip(self):
        t = from_counts([3, 1, 2, 4, 1, 1, 0, 2])
        doc = json.loads(t.to_json())
        assert doc["counts"] == [3, 1, 2, 4, 1, 1, 0, 2]
        assert FairnessConfusionTensor.from_json(t.to_json()) == t


class TestFromPredictions:
    def test_single_record_lands_in_tp1(self):
        assert from_predictions([(1, 1, 1)]).counts.tolist() == [1, 0, 0, 0, 0, 0, 0, 0]

    def test_group0_errors(self):
        c = from_predictions([(1, 0, 0), (0, 1, 0)]).counts
        assert c[5] == 1 and c[6] == 1 and c.sum() == 2

    def test_empty_input(self):
        with pytest.raises(EmptyDataset):
            from_predictions([])

    def test_bad_label(self):
        with pytest.raises(InvalidLabel):
            from_predictions([(1, 2, 0)])

    def test_matches_independent_tally(self, rng):
        recs = rng.integers(0, 2, size=(1000, 3))
        t = from_predictions(recs)
        expected = np.zeros(8)
        for y, yh, a in recs:
            cell = {(1, 1): 0, (1, 0): 1, (0, 1): 2, (0, 0): 3}[(y, yh)]
            expected[cell + (0 if a == 1 else 4)] += 1
        assert np.array_equal(t.counts, expected)
        assert t.counts.sum() == 1000

    def test_group_rates_match_raw_records(self, rng):
        y, yh, a = rng.integers(0, 2, size=(3, 500))
        r = group_rates(tally(y, yh, a).z)
        for g in (1, 0):
            sel = a == g
            assert r[g].tpr == pytest.approx(np.mean(yh[sel & (y == 1)]))
            assert r[g].fpr == pytest.approx(np.mean(yh[sel & (y == 0)]))


class TestEmbedding:
    m = Marginals(n1=4, m1=2, n0=4, m0=1)

    def test_perfect_prediction(self):
        z = embed(FreeCoordinates(2, 0, 1, 0), self.m)
        assert z[[1, 2, 5, 6]].tolist() == [0, 0, 0, 0]
        assert error_rate(z) == 0.0

    def test_all_wrong(self):
        z = embed(FreeCoordinates(0, 2, 0, 3), self.m)
        assert error_rate(z) == pytest.approx(1.0)

    def test_out_of_box(self):
        with pytest.raises(InfeasibleCoordinates):
            embed(FreeCoordinates(3, 0, 0, 0), self.m)

    @given(points_in_k())
    def test_constraints_hold(self, mz):
        m, z = mz
        assert np.max(np.abs(const_residual(z, m))) <= 1e-12
        assert in_polytope(z, m)

    @given(points_in_k())
    def test_embed_extract_bijection(self, mz):
        m, z = mz
        assert np.allclose(embed(extract(z, m), m), z, atol=1e-12)

    @given(regular_marginals(), st.floats(0, 1))
    def test_error_rate_affine_on_segments(self, m, t):
        rng = np.random.default_rng(0)
        box = m.free_box()
        z1 = embed(FreeCoordinates(*(rng.random(4) * box * float(m.n_total))), m)
        z2 = embed(FreeCoordinates(*(rng.random(4) * box * float(m.n_total))), m)
        mid = (1 - t) * z1 + t * z2
        assert error_rate(mid) == pytest.approx((1 - t) * error_rate(z1) + t * error_rate(z2), abs=1e-12)


class TestRatesAndError:
    def test_hand_tally(self):
        assert from_counts([2, 1, 1, 0, 1, 1, 1, 1]).error_rate() == pytest.approx(0.5)

    def test_perfect_rates(self):
        r = group_rates(from_counts([2, 0, 0, 2, 1, 0, 0, 3]).z)
        for g in (1, 0):
            assert (r[g].tpr, r[g].fpr) == (1.0, 0.0)

    def test_uniform_counts(self):
        r = group_rates(from_counts([1] * 8).z)
        assert (r[1].tpr, r[1].fpr) == (0.5, 0.5)

    def test_undefined_sentinel(self):
        r = group_rates(from_counts([0, 0, 1, 3, 1, 1, 1, 1]).z)
        assert math.isnan(r[1].tpr)
        assert r[1].fpr == 0.25

    def test_degenerate_marginals_are_flagged(self):
        m = from_counts([0, 0, 1, 3, 1, 1, 1, 1]).marginals
        assert m.is_degenerate and "M1" in m.degenerate_quantities()
