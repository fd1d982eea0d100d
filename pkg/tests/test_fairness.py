import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from duqfl.fairness import (
    FairnessReport,
    SelectionHistory,
    accuracy_variance,
    best_client_heatmap,
    delta_accuracy,
    efs,
    fairness_report,
    feti,
    ffm,
    heatmap_csv,
    selection_history,
)
from duqfl.federation import RoundRecord, read_jsonl

GOLDEN = Path(__file__).parent / "fixtures" / "golden_rounds.jsonl"

# (accuracy %, EFS, delta accuracy, FETI) reference trade-off rows, lambda = 0.5
TABLE = [
    (74.0, 0.9912, 0.0239, 0.9837),
    (91.0, 0.9372, 0.0000, 0.9686),
    (88.0, 0.9232, 0.0330, 0.9451),
    (89.0, 0.9372, 0.0220, 0.9576),
]


def record(rnd, best, accs, loss=None):
    loss = loss or [0.5] * len(accs)
    return RoundRecord(rnd, loss, accs, accs, best, max(accs), "best")


class TestFFM:
    @pytest.mark.parametrize("counts, expected", [((4, 4, 4), 1.0), ((5, 3, 2), 0.4), ((3, 0, 0), 0.0)])
    def test_examples(self, counts, expected):
        assert ffm(counts) == pytest.approx(expected, abs=1e-15)

    def test_no_rounds(self):
        with pytest.raises(ValueError):
            ffm((0, 0, 0))


class TestEFS:
    def test_uniform(self):
        assert efs((4, 4, 4)) == 1.0
        assert efs((1, 1)) == 1.0

    def test_single_winner(self):
        assert efs((7, 0, 0)) == 0.0

    def test_table_entry(self):
        assert efs((5, 3, 2)) == pytest.approx(0.9372, abs=5e-4)

    def test_hand_entropy(self):
        f = np.array([5, 3, 2]) / 10
        expected = -sum(p * math.log(p, 3) for p in f)
        assert efs((5, 3, 2)) == pytest.approx(expected, abs=1e-12)

    def test_errors(self):
        with pytest.raises(ValueError):
            efs((5,))
        with pytest.raises(ValueError):
            efs((0, 0))


class TestDeltaAccuracy:
    def test_table_rows(self):
        assert delta_accuracy(91, 91) == pytest.approx(0.0, abs=5e-4)
        assert delta_accuracy(88, 91) == pytest.approx(0.0330, abs=5e-4)
        assert delta_accuracy(89, 91) == pytest.approx(0.0220, abs=5e-4)

    def test_zero_accuracy(self):
        assert delta_accuracy(0, 91) == 1.0

    def test_errors(self):
        with pytest.raises(ValueError):
            delta_accuracy(50, 0)
        with pytest.raises(ValueError):
            delta_accuracy(95, 91)


class TestFETI:
    def test_accuracy_favoured_row(self):
        assert feti(0.9372, 0.0, 0.5) == pytest.approx(0.9686, abs=1e-4)

    def test_balanced_row(self):
        assert feti(0.9912, 0.0239, 0.5) == pytest.approx(0.9837, abs=1e-4)

    @pytest.mark.parametrize("acc, e, d, expected", TABLE)
    def test_table_consistency(self, acc, e, d, expected):
        assert feti(e, d, 0.5) == pytest.approx(expected, abs=1e-3)

    def test_lambda_one_is_efs(self):
        assert feti(0.73, 0.4, 1.0) == 0.73

    def test_errors(self):
        with pytest.raises(ValueError):
            feti(0.5, 0.5, 1.5)
        with pytest.raises(ValueError):
            feti(1.2, 0.0, 0.5)
        with pytest.raises(ValueError):
            feti(0.5, -0.1, 0.5)

    def test_monotone(self):
        rng = np.random.default_rng(0)
        for e1, e2, d1, d2, lam in rng.uniform(size=(1000, 5)):
            lo_e, hi_e = sorted((e1, e2))
            lo_d, hi_d = sorted((d1, d2))
            assert feti(hi_e, d1, lam) >= feti(lo_e, d1, lam)
            assert feti(e1, hi_d, lam) <= feti(e1, lo_d, lam)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 20), min_size=2, max_size=8).filter(lambda c: sum(c) > 0), st.randoms())
def test_label_permutation_invariance(counts, random):
    shuffled = counts[:]
    random.shuffle(shuffled)
    assert ffm(counts) == ffm(shuffled)
    assert efs(counts) == pytest.approx(efs(shuffled), abs=1e-12)


@pytest.mark.parametrize("c", [2, 3, 4, 5])
def test_uniform_iff(c):
    uniform = (3,) * c
    assert ffm(uniform) == efs(uniform) == 1.0
    skew = (4,) + (3,) * (c - 2) + (2,)
    assert ffm(skew) < 1 and efs(skew) < 1


class TestRecords:
    def test_variance_examples(self):
        assert accuracy_variance([record(1, 0, [0.8, 0.8, 0.9])])[0] == pytest.approx(0.0022222222, abs=1e-9)
        assert accuracy_variance([record(1, 0, [0.7, 0.7])])[0] == 0.0
        assert accuracy_variance([record(1, 0, [0.7])])[0] == 0.0

    def test_variance_needs_records(self):
        with pytest.raises(ValueError):
            accuracy_variance([])

    def test_heatmap_columns_and_rows(self):
        winners = [0, 2, 2, 1, 2]
        recs = [record(i + 1, w, [0.5, 0.6, 0.7]) for i, w in enumerate(winners)]
        heat = best_client_heatmap(recs)
        assert heat.shape == (3, 5)
        assert np.all(heat.sum(axis=0) == 1)
        assert tuple(heat.sum(axis=1)) == selection_history(recs).counts == (1, 1, 3)

    def test_golden_heatmap(self):
        heat = best_client_heatmap(read_jsonl(GOLDEN))
        np.testing.assert_array_equal(heat, [[1, 1], [0, 0], [0, 0]])

    def test_heatmap_csv(self, tmp_path):
        text = heatmap_csv(np.array([[1, 0], [0, 1]]), tmp_path / "h.csv")
        assert text == "client,round_1,round_2\n0,1,0\n1,0,1\n"
        assert (tmp_path / "h.csv").read_text() == text

    def test_report(self):
        recs = [record(1, 0, [0.6, 0.7]), record(2, 1, [0.8, 0.9]), record(3, 1, [0.85, 0.8])]
        rep = fairness_report(recs, lam=0.5)
        assert rep.counts == [1, 2]
        assert rep.ffm == 0.5
        assert rep.max_accuracy == 0.9 and rep.final_accuracy == 0.85
        assert rep.delta_accuracy == pytest.approx((0.9 - 0.85) / 0.9)
        assert rep.feti == 0.5 * rep.efs + 0.5 * (1 - rep.delta_accuracy)
        assert FairnessReport.from_json(rep.to_json()) == rep

    def test_report_with_reference(self):
        recs = [record(1, 0, [0.6, 0.7])]
        assert fairness_report(recs, a_max=0.91).delta_accuracy == pytest.approx((0.91 - 0.7) / 0.91)

    def test_history_validation(self):
        with pytest.raises(ValueError):
            SelectionHistory((1, -1))
        with pytest.raises(ValueError):
            SelectionHistory.from_winners([3], 3)
