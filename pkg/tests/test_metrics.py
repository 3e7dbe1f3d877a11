import math
import statistics
import time

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lenkit.errors import ConfigError, DataError
from lenkit.logic import CnfFormula, DnfFormula, parse_formula
from lenkit.metrics import (
    ExtractionTimer,
    aggregate,
    complexity,
    consistency,
    explanation_accuracy,
    extraction_time,
    fidelity,
    macro_explanation_accuracy,
    model_accuracy,
    run_consistency,
)

from oracles import assignments, make_dnf, raw_eval_dnf, raw_terms

CORNERS = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
XOR_LABELS = np.array([False, True, True, False])


class FixedModel:
    def __init__(self, predictions):
        self.predictions = np.asarray(predictions, dtype=bool)

    def predict_bool(self, X):
        return self.predictions.reshape(len(X), -1)


class TestModelAccuracy:
    @pytest.mark.parametrize("pred, expected", [
        ([1, 0, 1, 0], 100.0), ([0, 1, 0, 1], 0.0), ([1, 0, 1, 1], 75.0),
    ])
    def test_hand_counts(self, pred, expected):
        assert model_accuracy(pred, [1, 0, 1, 0]) == expected

    def test_per_class_then_averaged(self):
        # column accuracies 100% and 50%
        assert model_accuracy([[1, 1], [0, 1]], [[1, 1], [0, 0]]) == 75.0

    def test_length_mismatch(self):
        with pytest.raises(DataError):
            model_accuracy([1, 0], [1, 0, 1])


class TestExplanationAccuracy:
    def test_xor(self, xor_dnf):
        assert explanation_accuracy(xor_dnf, CORNERS, XOR_LABELS) == 100.0

    def test_constant_false_on_balanced_labels(self):
        assert explanation_accuracy(DnfFormula.false(("c1", "c2")), CORNERS, XOR_LABELS) == 50.0

    @given(raw_terms(3), st.lists(st.booleans(), min_size=8, max_size=8))
    def test_against_enumeration(self, terms, labels):
        vocab = ("a", "b", "c")
        X = np.array(assignments(3), dtype=float)
        hits = sum(raw_eval_dnf(terms, a) == y for a, y in zip(assignments(3), labels))
        got = explanation_accuracy(make_dnf(vocab, terms), X, labels)
        assert got == pytest.approx(hits / 8 * 100)

    def test_macro_average(self, xor_dnf):
        never = DnfFormula.false(("c1", "c2"))
        Y = np.stack([XOR_LABELS, ~XOR_LABELS], axis=1)
        assert macro_explanation_accuracy([xor_dnf, never], CORNERS, Y) == 75.0

    def test_formula_count_mismatch(self, xor_dnf):
        with pytest.raises(DataError):
            macro_explanation_accuracy([xor_dnf], CORNERS, np.zeros((4, 2)))


class TestComplexity:
    def test_cluster_rule(self):
        assert complexity(parse_formula("~even & odd", ("even", "odd"))) == 2

    def test_constant_false(self):
        assert complexity(DnfFormula.false(("a",))) == 0

    def test_xor(self, xor_dnf):
        assert complexity(xor_dnf) == 4

    def test_cnf_is_standardized_to_dnf(self):
        cnf = parse_formula("(a | b) & (a | c)", ("a", "b", "c"), kind="cnf")
        assert isinstance(cnf, CnfFormula)
        # a | (b & c)
        assert complexity(cnf) == 3

    @given(raw_terms(4), st.randoms())
    def test_order_invariant(self, terms, rnd):
        vocab = ("a", "b", "c", "d")
        shuffled = [rnd.sample(t, len(t)) for t in terms]
        rnd.shuffle(shuffled)
        assert complexity(make_dnf(vocab, terms)) == complexity(make_dnf(vocab, shuffled))


class TestFidelity:
    def test_constant_false_vs_constant_zero_head(self):
        assert fidelity(DnfFormula.false(("c1", "c2")), FixedModel([0, 0, 0, 0]), CORNERS) == 100.0

    def test_hand_count_on_eight_samples(self):
        vocab = ("a", "b", "c")
        phi = parse_formula("a & ~c", vocab)
        X = np.array(assignments(3), dtype=float)
        # rule outputs on the 8 rows: 0 0 0 0 1 0 1 0
        preds = [0, 1, 0, 0, 1, 1, 0, 0]
        assert fidelity(phi, FixedModel(preds), X) == pytest.approx(5 / 8 * 100)

    @given(raw_terms(3), st.lists(st.booleans(), min_size=8, max_size=8))
    def test_equals_explanation_accuracy_for_a_perfect_model(self, terms, labels):
        phi = make_dnf(("a", "b", "c"), terms)
        X = np.array(assignments(3), dtype=float)
        assert fidelity(phi, FixedModel(labels), X) == explanation_accuracy(phi, X, labels)


class TestConsistency:
    def test_identical_runs(self):
        assert consistency([{"a", "b"}] * 5) == 100.0

    def test_disjoint_singletons(self):
        assert consistency([{c} for c in "abcde"]) == pytest.approx(20.0)

    def test_hand_example(self):
        assert consistency([{"a", "b"}, {"a"}, {"a"}]) == pytest.approx(66.67, abs=0.01)

    def test_accepts_formulas(self):
        vocab = ("a", "b")
        runs = [parse_formula(t, vocab) for t in ("a & b", "a", "~a")]
        assert consistency(runs) == pytest.approx(66.67, abs=0.01)

    @given(st.lists(st.sets(st.sampled_from("abcdef"), min_size=1), min_size=1, max_size=8))
    def test_bounds(self, runs):
        assert 100 / len(runs) - 1e-9 <= consistency(runs) <= 100.0 + 1e-9

    def test_per_run_shares(self):
        shares = run_consistency([{"a", "b"}, {"a"}, set()])
        assert shares == pytest.approx([(2 / 3 + 1 / 3) / 2 * 100, 2 / 3 * 100, 0.0])

    def test_no_runs(self):
        with pytest.raises(ConfigError):
            consistency([])


class TestTiming:
    def test_train_then_extract(self):
        run = ExtractionTimer()
        with run.measure("train"):
            time.sleep(0.01)
        train_only = extraction_time(run)
        with run.measure("extract"):
            pass
        assert 0 < train_only <= extraction_time(run)
        assert run.train_seconds >= 0.01

    def test_unknown_phase(self):
        with pytest.raises(ConfigError):
            ExtractionTimer().measure("predict")


class TestAggregate:
    def test_constant_folds(self):
        out = aggregate([{"m": 4.0}] * 3)
        assert out["m"] == {"mean": 4.0, "std": 0.0}

    def test_sample_std(self):
        out = aggregate([{"m": 1.0}, {"m": 3.0}])
        assert out["m"]["mean"] == 2.0
        assert out["m"]["std"] == pytest.approx(math.sqrt(2), abs=1e-3)

    def test_single_fold_has_zero_std(self):
        assert aggregate([{"m": 5.0}])["m"]["std"] == 0.0

    def test_non_numeric_fields_skipped(self):
        assert set(aggregate([{"m": 1.0, "name": "x"}])) == {"m"}

    def test_empty(self):
        with pytest.raises(ConfigError):
            aggregate([])

    @given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=12))
    def test_matches_statistics_module(self, values):
        out = aggregate([{"m": v} for v in values])["m"]
        assert out["mean"] == pytest.approx(statistics.fmean(values), abs=1e-9)
        assert out["std"] == pytest.approx(statistics.stdev(values), abs=1e-6)
