import io
import math

import numpy as np
import pytest
from scipy.stats import norm

from fact.data import (
    ADULT_SEX_MAPPING,
    COVARIANCES,
    MEANS,
    LabeledDataset,
    SyntheticSpec,
    bayes_accuracy,
    gen_synthetic,
    load_csv,
    train_baseline,
    write_csv,
    write_predictions,
)
from fact.errors import EmptyDataset, SchemaError


class TestSynthetic:
    def test_unbiased_attribute_is_independent(self, synth_u):
        r = np.corrcoef(synth_u.a, synth_u.y)[0, 1]
        assert abs(r) <= 3 / math.sqrt(len(synth_u))

    def test_biased_base_rates_match_densities(self, synth_b):
        p1 = norm.cdf(2 / math.sqrt(5))  # Pr(x0 > 0 | y = 1)
        p0 = norm.cdf(-2 / math.sqrt(10))  # Pr(x0 > 0 | y = 0)
        want = {1: p1 / (p1 + p0), 0: (1 - p1) / (2 - p1 - p0)}
        for g in (1, 0):
            sel = synth_b.a == g
            got = synth_b.y[sel].mean()
            assert abs(got - want[g]) <= 4 * math.sqrt(want[g] * (1 - want[g]) / sel.sum())
        assert abs(want[1] - want[0]) > 0.5

    def test_moments(self, synth_u):
        for c in (0, 1):
            x = synth_u.x[synth_u.y == c]
            sd = np.sqrt(np.diag(COVARIANCES[c]))
            assert np.all(np.abs(x.mean(axis=0) - MEANS[c]) <= 4 * sd / math.sqrt(len(x)))

    def test_same_seed_same_bytes(self):
        out = []
        for _ in range(2):
            buf = io.StringIO()
            write_csv(gen_synthetic(SyntheticSpec(n=500, variant="B", seed=3)), buf)
            out.append(buf.getvalue())
        assert out[0] == out[1]

    def test_variant_names(self):
        assert SyntheticSpec(variant="biased").variant == "B"
        with pytest.raises(ValueError):
            SyntheticSpec(variant="X")


class TestCsv:
    def test_prediction_file(self, tmp_path):
        p = tmp_path / "p.csv"
        p.write_text("y,yhat,a\n1,1,0\n0,1,1\n1,0,1\n")
        recs = load_csv(p)
        assert len(recs) == 3
        assert recs.tensor().counts.sum() == 3

    def test_adult_mapping(self, tmp_path):
        p = tmp_path / "adult.csv"
        p.write_text("age,hours,sex,y\n39,40,Male,0\n50,13,Female,1\n38,40,Male,1\n")
        ds = load_csv(p, schema="labeled", protected="sex", mapping=ADULT_SEX_MAPPING)
        assert ds.a.tolist() == [1, 0, 1]
        assert ds.feature_names == ("age", "hours")

    def test_adult_unknown_category(self, tmp_path):
        p = tmp_path / "adult.csv"
        p.write_text("age,sex,y\n39,Male,0\n50,Other,1\n")
        with pytest.raises(SchemaError) as exc:
            load_csv(p, schema="labeled", protected="sex", mapping=ADULT_SEX_MAPPING)
        assert exc.value.row == 2

    def test_malformed_row_number(self, tmp_path):
        rows = ["y,yhat,a"] + ["1,0,1"] * 16 + ["1,maybe,0"] + ["0,0,0"] * 3
        p = tmp_path / "bad.csv"
        p.write_text("\n".join(rows) + "\n")
        with pytest.raises(SchemaError) as exc:
            load_csv(p)
        assert exc.value.row == 17
        assert "17" in str(exc.value)

    def test_missing_column(self, tmp_path):
        p = tmp_path / "p.csv"
        p.write_text("y,a\n1,0\n")
        with pytest.raises(SchemaError, match="yhat"):
            load_csv(p)

    def test_empty(self, tmp_path):
        p = tmp_path / "p.csv"
        p.write_text("y,yhat,a\n")
        with pytest.raises(EmptyDataset):
            load_csv(p)

    def test_labeled_round_trip(self, tmp_path):
        ds = gen_synthetic(SyntheticSpec(n=300, variant="U", seed=1))
        p = tmp_path / "d.csv"
        write_csv(ds, p)
        back = load_csv(p, schema="labeled")
        assert np.array_equal(back.x, ds.x) and np.array_equal(back.y, ds.y) and np.array_equal(back.a, ds.a)
        assert np.array_equal(back.ids, ds.ids)

    def test_prediction_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        y, yh, a = rng.integers(0, 2, (3, 50))
        p = tmp_path / "p.csv"
        write_predictions(p, y, yh, a, extra={"score": rng.random(50)})
        back = load_csv(p)
        assert np.array_equal(back.y, y) and np.array_equal(back.yhat, yh) and np.array_equal(back.a, a)


class TestBaseline:
    def test_separable_toy(self):
        x = np.array([[-2.0, 0], [-1, 0.5], [-1.5, -1], [1, 0], [2, 1], [1.5, -0.5]])
        ds = LabeledDataset(x, [0, 0, 0, 1, 1, 1], [0, 1, 0, 1, 0, 1])
        assert train_baseline(ds, epochs=2000).accuracy(ds.y) == 1.0

    def test_accuracy_below_bayes(self):
        ds = gen_synthetic(SyntheticSpec(n=10_000, variant="U", seed=2))
        acc = train_baseline(ds).accuracy(ds.y)
        assert 0.85 <= acc <= 0.99
        assert acc <= bayes_accuracy(n=100_000) + 0.01

    def test_seed_reproducible(self):
        ds = gen_synthetic(SyntheticSpec(n=2000, variant="B", seed=4))
        a, b = train_baseline(ds, seed=5), train_baseline(ds, seed=5)
        assert np.array_equal(a.model.weights, b.model.weights)

    def test_protected_column_unused(self):
        ds = gen_synthetic(SyntheticSpec(n=2000, variant="B", seed=4))
        shuffled = LabeledDataset(ds.x, ds.y, np.random.default_rng(1).permutation(ds.a))
        assert np.array_equal(train_baseline(ds).yhat, train_baseline(shuffled).yhat)

    def test_empty(self):
        with pytest.raises(EmptyDataset):
            train_baseline(LabeledDataset(np.zeros((0, 2)), [], []))
