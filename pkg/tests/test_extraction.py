import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lenkit.data import DIGITS, ConceptDataset, mnist_eo_concepts
from lenkit.errors import ConfigError, DataError, FormulaError
from lenkit.extraction import (
    ExplanationOptions,
    booleanize,
    build_truth_table,
    class_explanation,
    explain_cascade,
    explain_class,
    explain_example,
    explain_set,
    global_cnf,
    uncovered_count,
)
from lenkit.logic import eval_cnf, eval_dnf, parse_formula

from oracles import assignments, make_dnf


class RuleModel:
    """Stand-in classifier whose outputs are Boolean functions of the thresholded concepts."""

    def __init__(self, *rules):
        self.rules = rules

    def predict_bool(self, X):
        bits = np.asarray(X) >= 0.5
        return np.stack([[bool(rule(row)) for row in bits] for rule in self.rules], axis=1)


XOR = RuleModel(lambda b: b[0] != b[1])
CORNERS = np.array([[0.1, 0.2], [0.2, 0.7], [0.6, 0.3], [0.9, 0.8]])


def same_function(phi, expected, k):
    return all(eval_dnf(phi, a) == eval_dnf(expected, a) for a in assignments(k))


class TestBooleanize:
    @pytest.mark.parametrize("values, expected", [
        ([0.2, 0.7], [False, True]),
        ([0.6, 0.3], [True, False]),
        ([0.5, 0.4999], [True, False]),
    ])
    def test_threshold(self, values, expected):
        assert booleanize(values).tolist() == expected

    def test_custom_threshold(self):
        assert booleanize([[0.3, 0.8]], threshold=0.25).tolist() == [[True, True]]

    def test_out_of_range_names_position(self):
        with pytest.raises(DataError, match="row 1, column 0"):
            booleanize([[0.1, 0.2], [1.5, 0.3]])

    def test_nan_rejected(self):
        with pytest.raises(DataError):
            booleanize([[np.nan]])


class TestTruthTable:
    def test_xor_corners(self):
        table = build_truth_table(XOR, CORNERS)
        assert len(table.rows) == 4
        assert set(table.positive_rows()) == {(False, True), (True, False)}

    def test_duplicates_accumulate(self):
        once = build_truth_table(XOR, CORNERS)
        twice = build_truth_table(XOR, np.vstack([CORNERS, CORNERS]))
        assert once.rows.keys() == twice.rows.keys()
        assert all(twice.rows[k] == (2 * p, 2 * n) for k, (p, n) in once.rows.items())

    def test_restricted_arity(self, rng):
        X = rng.uniform(size=(30, 4))
        table = build_truth_table(XOR, X, retained=[1, 3])
        assert table.retained_concepts == (1, 3)
        assert all(len(key) == 2 for key in table.rows)

    @settings(max_examples=30)
    @given(st.integers(0, 1000), st.lists(st.integers(0, 4), min_size=1, max_size=5, unique=True))
    def test_projection_merges_counts(self, seed, subset):
        X = np.random.default_rng(seed).uniform(size=(40, 5))
        model = RuleModel(lambda b: b[0] and not b[3] or b[2])
        full = build_truth_table(model, X)
        subset = sorted(subset)
        assert full.project(subset).rows == build_truth_table(model, X, retained=subset).rows

    def test_counts_sum_to_samples(self, rng):
        X = rng.uniform(size=(25, 3))
        table = build_truth_table(XOR, X)
        assert sum(p + n for p, n in table.rows.values()) == 25

    def test_empty_dataset(self):
        with pytest.raises(DataError):
            build_truth_table(XOR, np.zeros((0, 2)))

    def test_retained_out_of_range(self):
        with pytest.raises(ConfigError):
            build_truth_table(XOR, CORNERS, retained=[0, 2])

    def test_class_index_out_of_range(self):
        with pytest.raises(ConfigError):
            build_truth_table(XOR, CORNERS, class_index=1)


class TestExampleLevel:
    def test_first_corner(self):
        m = explain_example(XOR, [0.2, 0.7])
        assert str(make_dnf(("c1", "c2"), [[(i.index, i.negated) for i in m.literals]])) == "~c1 & c2"

    def test_second_corner(self):
        m = explain_example(XOR, [0.6, 0.3])
        assert [(lit.name, lit.negated) for lit in m.literals] == [("c1", False), ("c2", True)]

    def test_outside_support(self):
        assert explain_example(XOR, [0.9, 0.8]) is None

    def test_restricted_to_retained(self):
        m = explain_example(RuleModel(lambda b: b[0]), [0.9, 0.1, 0.7], retained=[0, 2],
                            concept_names=["a", "b", "c"])
        assert [lit.name for lit in m.literals] == ["a", "c"]


class TestClassLevel:
    def test_xor(self, xor_dnf):
        phi = explain_class(XOR, CORNERS)
        assert same_function(phi, xor_dnf, 2)
        assert phi.literal_count == 4

    def test_constant_zero_head(self):
        assert explain_class(RuleModel(lambda b: False), CORNERS).is_false

    def test_support_counts_carried(self, rng):
        X = np.vstack([CORNERS] * 3 + [CORNERS[1:2]])
        phi = explain_class(XOR, X, options=ExplanationOptions(simplify=False))
        assert sorted(phi.support) == [3, 4]

    def test_min_support_filters_rare_rows(self):
        X = np.vstack([CORNERS[1:2]] * 3 + [CORNERS[2:3]])
        phi = explain_class(XOR, X, options=ExplanationOptions(min_support=2))
        assert str(phi) == "~c1 & c2"

    def test_top_k_keeps_most_frequent(self):
        X = np.vstack([CORNERS[2:3]] * 5 + [CORNERS[1:2]] * 2)
        exp = class_explanation(XOR, X, options=ExplanationOptions(top_k_minterms=1))
        assert str(exp.formula) == "c1 & ~c2"
        assert (exp.raw_minterm_count, exp.filtered_minterm_count) == (2, 1)

    @settings(max_examples=25)
    @given(st.integers(0, 10_000), st.integers(1, 4))
    def test_min_support_monotone(self, seed, low):
        X = np.random.default_rng(seed).uniform(size=(60, 4))
        model = RuleModel(lambda b: b[0] or b[1] and b[3])
        loose = explain_class(model, X, options=ExplanationOptions(min_support=low, simplify=False))
        tight = explain_class(model, X, options=ExplanationOptions(min_support=low + 1, simplify=False))
        assert set(tight.minterms) <= set(loose.minterms)

    def test_conflicting_rows(self):
        # two inputs sharing a Booleanization but with different predictions
        model = RuleModel(lambda b: True)
        X = np.array([[0.9, 0.1], [0.8, 0.2], [0.7, 0.3]])
        preds = [True, False, False]
        majority = class_explanation(model, X, predictions=preds)
        lenient = class_explanation(model, X, predictions=preds,
                                    options=ExplanationOptions(conflict_policy="positive_only"))
        assert majority.formula.is_false
        assert str(lenient.formula) == "c1 & ~c2"

    def test_exact_tie_excluded_under_majority(self):
        X = np.array([[0.9, 0.1], [0.8, 0.2]])
        exp = class_explanation(XOR, X, predictions=[True, False])
        assert exp.formula.is_false

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_support_soundness(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.uniform(size=(80, 5))
        preds = rng.uniform(size=80) < 0.4
        opts = ExplanationOptions(conflict_policy="positive_only", min_support=1)
        phi = class_explanation(XOR, X, options=opts, predictions=preds).formula
        for bits in booleanize(X[preds]):
            assert eval_dnf(phi, bits)

    def test_mnist_even_rule(self):
        data = mnist_eo_concepts(2000, seed=3)
        oracle = RuleModel(lambda b: b[0] or b[2] or b[4] or b[6] or b[8])
        phi = explain_class(oracle, data, options=ExplanationOptions(top_k_minterms=5))
        expected = parse_formula("~one & ~three & ~five & ~seven & ~nine", data.concept_names)
        for digit in range(10):
            a = np.eye(10, dtype=bool)[digit]
            assert eval_dnf(phi, a) == eval_dnf(expected, a)

    def test_names_from_dataset(self):
        data = ConceptDataset(("left", "right"), CORNERS)
        assert str(explain_class(XOR, data)) in {"(left & ~right) | (~left & right)",
                                                 "(~left & right) | (left & ~right)"}

    def test_record_fields(self):
        rec = class_explanation(XOR, CORNERS).record("xor")
        assert rec["class"] == "xor" and rec["minterm_count"] == 2
        assert rec["rule_text"].startswith("forall c in C: xor(c) <-> ")
        assert rec["options"]["min_support"] == 1


class TestOptions:
    @pytest.mark.parametrize("kwargs", [dict(min_support=0), dict(top_k_minterms=0),
                                        dict(conflict_policy="vote")])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            ExplanationOptions(**kwargs)


class TestSetLevel:
    def test_single_sample(self):
        assert str(explain_set(XOR, [0.2, 0.7])) == "~c1 & c2"

    def test_no_support_members(self):
        assert explain_set(XOR, CORNERS[[0, 3]]).is_false

    def test_full_set_matches_class_level(self, rng):
        X = rng.uniform(size=(50, 3))
        assert explain_set(XOR, X) == explain_class(XOR, X)

    def test_empty_set(self):
        with pytest.raises(DataError):
            explain_set(XOR, np.zeros((0, 2)))


class TestGlobalCnf:
    def test_even_or_odd_covers_one_hot_domain(self):
        even = parse_formula("~one & ~three & ~five & ~seven & ~nine", DIGITS)
        odd = parse_formula("~zero & ~two & ~four & ~six & ~eight", DIGITS)
        cnf = global_cnf([even, odd])
        for a in np.eye(10, dtype=bool):
            assert eval_cnf(cnf, a)

    def test_single_formula(self, xor_dnf):
        cnf = global_cnf([xor_dnf])
        for a in assignments(2):
            assert eval_cnf(cnf, a) == eval_dnf(xor_dnf, a)

    def test_disjoint_minterms_against_brute_force(self):
        vocab = ("a", "b", "c")
        f = make_dnf(vocab, [[(0, False), (1, True)]])
        g = make_dnf(vocab, [[(1, False), (2, False)]])
        cnf = global_cnf([f, g])
        for a in assignments(3):
            assert eval_cnf(cnf, a) == (eval_dnf(f, a) or eval_dnf(g, a))

    def test_vocabulary_mismatch(self, xor_dnf):
        with pytest.raises(FormulaError):
            global_cnf([xor_dnf, make_dnf(("x", "y"), [[(0, False)]])])

    def test_needs_input(self):
        with pytest.raises(FormulaError):
            global_cnf([])

    def test_uncovered_count(self, xor_dnf):
        assert uncovered_count([xor_dnf], CORNERS) == 2


class TestCascade:
    base = ("a", "b")

    def test_direct_substitution(self):
        h1 = parse_formula("a & b", self.base)
        top = parse_formula("h1", ("h1",))
        (out,) = explain_cascade([(("h1",), [h1]), (("y",), [top])])
        assert str(out) == "a & b"

    def test_negated_intermediate(self):
        h1 = parse_formula("a & b", self.base)
        (out,) = explain_cascade([(("h1",), [h1]), (("y",), [parse_formula("~h1", ("h1",))])])
        for a in assignments(2):
            assert eval_dnf(out, a) == (not (a[0] and a[1]))

    def test_two_unit_xor(self, xor_dnf):
        hidden = [parse_formula("~c1 & c2", ("c1", "c2")), parse_formula("c1 & ~c2", ("c1", "c2"))]
        out_rule = parse_formula("h1 | h2", ("h1", "h2"))
        (out,) = explain_cascade([(("h1", "h2"), hidden), (("y",), [out_rule])])
        assert same_function(out, xor_dnf, 2)

    def test_vocabulary_mismatch(self):
        h1 = parse_formula("a & b", self.base)
        with pytest.raises(FormulaError, match="does not match"):
            explain_cascade([(("h1",), [h1]), (("y",), [parse_formula("z", ("z",))])])

    def test_formula_count_mismatch(self):
        with pytest.raises(FormulaError):
            explain_cascade([(("h1", "h2"), [parse_formula("a", self.base)])])
