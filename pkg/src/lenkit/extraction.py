"""Empirical truth tables and example-, set-, class- and global-level explanations."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import logic
from .errors import ConfigError, DataError, FormulaError
from .logic import CnfFormula, DnfFormula, Literal, Minterm

CONFLICT_POLICIES = ("majority", "positive_only")


@dataclass(frozen=True)
class ExplanationOptions:
    boolean_threshold: float = 0.5
    min_support: int = 1
    top_k_minterms: int | None = None
    simplify: bool = True
    conflict_policy: str = "majority"
    max_simplify_vars: int = logic.DEFAULT_SIMPLIFY_MAX_VARS

    def __post_init__(self):
        if self.min_support < 1:
            raise ConfigError("min_support must be at least 1")
        if self.top_k_minterms is not None and self.top_k_minterms < 1:
            raise ConfigError("top_k_minterms must be positive")
        if self.conflict_policy not in CONFLICT_POLICIES:
            raise ConfigError(f"unknown conflict_policy {self.conflict_policy!r}")

    def to_dict(self) -> dict:
        return asdict(self)


def booleanize(values, threshold: float = 0.5) -> np.ndarray:
    V = np.asarray(values, dtype=float)
    bad = np.argwhere(~((V >= 0.0) & (V <= 1.0)))
    if len(bad):
        pos = tuple(int(i) for i in bad[0])
        where = f"row {pos[0]}, column {pos[1]}" if len(pos) == 2 else f"position {pos}"
        raise DataError(f"value {V[tuple(bad[0])]!r} outside [0, 1] at {where}")
    return V >= threshold


def _matrix(data):
    return np.asarray(getattr(data, "X", data), dtype=float)


def _names(data, k, concept_names=None) -> tuple[str, ...]:
    if concept_names is not None:
        return tuple(concept_names)
    names = getattr(data, "concept_names", None)
    if names is not None:
        return tuple(names)
    return tuple(f"c{j + 1}" for j in range(k))


def predicted_support(model, X, class_index: int) -> np.ndarray:
    """Boolean predictions of ``model`` for one output (``model.predict_bool``)."""
    preds = np.asarray(model.predict_bool(X))
    if preds.ndim == 1:
        preds = preds[:, None]
    if not 0 <= class_index < preds.shape[1]:
        raise ConfigError(f"class index {class_index} out of range for {preds.shape[1]} outputs")
    return preds[:, class_index].astype(bool)


@dataclass
class TruthTable:
    retained_concepts: tuple[int, ...]
    rows: dict[tuple[bool, ...], tuple[int, int]]
    class_index: int = 0

    def __post_init__(self):
        for key, (pos, neg) in self.rows.items():
            if len(key) != len(self.retained_concepts):
                raise DataError("truth-table row arity differs from retained concept count")
            if pos < 0 or neg < 0:
                raise DataError("truth-table counts must be non-negative")

    def positive_rows(self, policy: str = "majority") -> dict[tuple[bool, ...], int]:
        if policy == "majority":
            return {k: p for k, (p, n) in self.rows.items() if p > n}
        return {k: p for k, (p, n) in self.rows.items() if p > 0}

    def project(self, retained: Sequence[int]) -> TruthTable:
        """Restrict to a subset of the retained columns, merging counts."""
        pos = [self.retained_concepts.index(j) for j in retained]
        rows: dict = {}
        for key, (p, n) in self.rows.items():
            sub = tuple(key[i] for i in pos)
            a, b = rows.get(sub, (0, 0))
            rows[sub] = (a + p, b + n)
        return TruthTable(tuple(retained), rows, self.class_index)


def _table(bits: np.ndarray, preds: np.ndarray, retained, class_index) -> TruthTable:
    counts: dict = {}
    for row, p in zip(map(tuple, bits[:, list(retained)].tolist()), preds.tolist()):
        a, b = counts.get(row, (0, 0))
        counts[row] = (a + 1, b) if p else (a, b + 1)
    rows = {tuple(bool(v) for v in k): c for k, c in sorted(counts.items())}
    return TruthTable(tuple(retained), rows, class_index)


def build_truth_table(
    model,
    data,
    class_index: int = 0,
    retained: Sequence[int] | None = None,
    threshold: float = 0.5,
    predictions=None,
) -> TruthTable:
    """Deduplicated Booleanized inputs with counts of positive/negative predictions."""
    X = _matrix(data)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError("cannot build a truth table from an empty dataset")
    k = X.shape[1]
    retained = tuple(range(k)) if retained is None else tuple(sorted(set(retained)))
    if any(not 0 <= j < k for j in retained):
        raise ConfigError(f"retained concepts {retained} outside [0, {k})")
    bits = booleanize(X, threshold)
    preds = (
        predicted_support(model, X, class_index)
        if predictions is None
        else np.asarray(predictions, dtype=bool).reshape(-1)
    )
    return _table(bits, preds, retained, class_index)


def _minterm(bits_row, retained, names) -> Minterm:
    return Minterm(tuple(Literal(j, names[j], not bool(bits_row[i])) for i, j in enumerate(retained)))


def explain_example(
    model,
    sample,
    class_index: int = 0,
    retained: Sequence[int] | None = None,
    concept_names: Sequence[str] | None = None,
    threshold: float = 0.5,
) -> Minterm | None:
    """Signed conjunction of the retained concepts if the sample is in the class support."""
    c = np.asarray(sample, dtype=float).reshape(1, -1)
    k = c.shape[1]
    names = _names(None, k, concept_names)
    if not predicted_support(model, c, class_index)[0]:
        return None
    retained = tuple(range(k)) if retained is None else tuple(sorted(set(retained)))
    bits = booleanize(c, threshold)[0]
    return _minterm(bits[list(retained)], retained, names)


@dataclass
class Explanation:
    formula: DnfFormula
    class_index: int
    retained: tuple[int, ...]
    support_size: int
    raw_minterm_count: int
    filtered_minterm_count: int
    options: ExplanationOptions = field(default_factory=ExplanationOptions)

    def record(self, class_name: str, style: str = "fol_iff") -> dict:
        return {
            "class": class_name,
            "class_index": self.class_index,
            "style": style,
            "formula_text": logic.format_formula(self.formula, "dnf_text"),
            "rule_text": logic.format_formula(self.formula, style, class_name),
            "minterm_count": len(self.formula.minterms),
            "literal_count": self.formula.literal_count,
            "support": self.support_size,
            "raw_minterm_count": self.raw_minterm_count,
            "filtered_minterm_count": self.filtered_minterm_count,
            "retained": [self.formula.vocabulary[j] for j in self.retained],
            "minimized": self.formula.minimized,
            "options": self.options.to_dict(),
        }


def formula_from_table(
    table: TruthTable, names: Sequence[str], options: ExplanationOptions
) -> tuple[DnfFormula, int, int]:
    """Class-level DNF from a truth table; also returns raw and filtered minterm counts."""
    positives = table.positive_rows(options.conflict_policy)
    raw = len(positives)
    kept = [(key, s) for key, s in positives.items() if s >= options.min_support]
    if options.top_k_minterms is not None:
        # most frequent first; ties keep canonical row order
        kept = sorted(kept, key=lambda ks: -ks[1])[: options.top_k_minterms]
    terms = [_minterm(key, table.retained_concepts, names) for key, _ in kept]
    phi = DnfFormula(tuple(names), tuple(terms), tuple(s for _, s in kept))
    filtered = len(phi.minterms)
    if options.simplify:
        phi = logic.simplify(phi, options.max_simplify_vars)
    return phi, raw, filtered


def class_explanation(
    model,
    data,
    class_index: int = 0,
    options: ExplanationOptions | None = None,
    retained: Sequence[int] | None = None,
    concept_names: Sequence[str] | None = None,
    predictions=None,
) -> Explanation:
    options = options or ExplanationOptions()
    X = _matrix(data)
    names = _names(data, X.shape[1], concept_names)
    table = build_truth_table(model, X, class_index, retained, options.boolean_threshold, predictions)
    phi, raw, filtered = formula_from_table(table, names, options)
    support = sum(p for p, _ in table.rows.values())
    return Explanation(phi, class_index, table.retained_concepts, support, raw, filtered, options)


def explain_class(
    model,
    data,
    class_index: int = 0,
    options: ExplanationOptions | None = None,
    retained: Sequence[int] | None = None,
    concept_names: Sequence[str] | None = None,
) -> DnfFormula:
    return class_explanation(model, data, class_index, options, retained, concept_names).formula


def explain_set(
    model,
    samples,
    class_index: int = 0,
    options: ExplanationOptions | None = None,
    retained: Sequence[int] | None = None,
    concept_names: Sequence[str] | None = None,
) -> DnfFormula:
    """Explanation restricted to the given samples (those outside the support contribute nothing)."""
    S = _matrix(samples)
    if S.ndim == 1:
        S = S[None, :]
    if S.shape[0] == 0:
        raise DataError("explain_set needs a non-empty sample set")
    return explain_class(model, S, class_index, options, retained, _names(samples, S.shape[1], concept_names))


def global_cnf(
    formulas: Sequence[DnfFormula], max_vars: int = logic.DEFAULT_CNF_MAX_VARS
) -> CnfFormula:
    """CNF equivalent to the disjunction of the per-class formulas.

    Each formula is converted separately, then clauses are combined pairwise
    (``A | B`` of two CNFs is the CNF of all clause unions).
    """
    if not formulas:
        raise FormulaError("global_cnf needs at least one formula")
    vocab = formulas[0].vocabulary
    if any(f.vocabulary != vocab for f in formulas):
        raise FormulaError("global_cnf needs formulas over a shared vocabulary")
    cnfs = [logic.dnf_to_cnf(f, max_vars=max_vars) for f in formulas]
    if len(logic.dnf_or(*formulas).concepts) > max_vars:
        raise logic.FormulaSizeError(f"combined formula exceeds {max_vars} variables")
    clauses = logic._terms_of(cnfs[0])
    for other in cnfs[1:]:
        combined = set()
        for a in clauses:
            for b in logic._terms_of(other):
                u = a | b
                if not logic._contradictory(u):
                    combined.add(u)
        clauses = logic._absorb(combined)
        if len(clauses) > logic.DEFAULT_MAX_CLAUSES:
            raise logic.FormulaSizeError("global CNF exceeded the clause limit")
    return CnfFormula(vocab, tuple(logic._build_terms(vocab, clauses, logic.Clause)))


def uncovered_count(formulas: Sequence[DnfFormula], data, threshold: float = 0.5) -> int:
    """Samples satisfying none of the formulas (coverage gap of the global rule)."""
    bits = booleanize(_matrix(data), threshold)
    covered = np.zeros(bits.shape[0], dtype=bool)
    for f in formulas:
        covered |= logic.evaluate(f, bits)
    return int((~covered).sum())


def explain_cascade(
    stages: Sequence[tuple[Sequence[str], Sequence[DnfFormula]]],
    simplify: bool = True,
    max_simplify_vars: int = logic.DEFAULT_SIMPLIFY_MAX_VARS,
) -> list[DnfFormula]:
    """Compose per-stage formulas down to the first stage's input concepts.

    ``stages[j]`` is ``(output_names, formulas)``; the formulas of stage ``j``
    must be written over the output names of stage ``j - 1``.
    """
    if not stages:
        raise FormulaError("explain_cascade needs at least one stage")
    names0, current = stages[0]
    current = list(current)
    if len(current) != len(names0):
        raise FormulaError("stage 0: one formula per output name required")
    base_vocab = current[0].vocabulary if current else ()
    for j, (names, formulas) in enumerate(stages[1:], start=1):
        prev_names = tuple(stages[j - 1][0])
        if len(formulas) != len(names):
            raise FormulaError(f"stage {j}: one formula per output name required")
        definitions = dict(zip(prev_names, current))
        composed = []
        for f in formulas:
            if tuple(f.vocabulary) != prev_names:
                raise FormulaError(
                    f"stage {j} vocabulary {tuple(f.vocabulary)} does not match "
                    f"stage {j - 1} outputs {prev_names}"
                )
            composed.append(logic.substitute(f, definitions, base_vocab))
        current = composed
    if simplify:
        current = [logic.simplify(f, max_simplify_vars) for f in current]
    return current

