"""Evaluation metrics for LENs and their explanations."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import logic
from .errors import ConfigError, DataError
from .extraction import booleanize, predicted_support
from .logic import CnfFormula, DnfFormula

METRICS = (
    "model_accuracy",
    "explanation_accuracy",
    "complexity",
    "fidelity",
    "extraction_time",
    "consistency",
)


def _as_2d(a) -> np.ndarray:
    a = np.asarray(a)
    return a[:, None] if a.ndim == 1 else a


def model_accuracy(predictions, targets) -> float:
    """Exact-match rate per output column, averaged over columns, in percent."""
    p, t = _as_2d(predictions).astype(bool), _as_2d(targets).astype(bool)
    if p.shape != t.shape:
        raise DataError(f"predictions {p.shape} and targets {t.shape} differ in shape")
    if p.size == 0:
        raise DataError("no predictions to score")
    return float((p == t).mean(axis=0).mean() * 100.0)


def explanation_accuracy(phi, data, targets, threshold: float = 0.5) -> float:
    """Agreement of the formula on Booleanized samples with the labels, in percent."""
    X = np.asarray(getattr(data, "X", data), dtype=float)
    y = np.asarray(targets).astype(bool).reshape(-1)
    if len(y) != X.shape[0]:
        raise DataError("targets and samples differ in length")
    pred = logic.evaluate(phi, booleanize(X, threshold))
    return float((pred == y).mean() * 100.0)


def macro_explanation_accuracy(formulas: Sequence, data, targets, threshold: float = 0.5) -> float:
    """One-vs-rest explanation accuracy averaged over classes."""
    Y = _as_2d(targets)
    if Y.shape[1] != len(formulas):
        raise DataError("one formula per target column required")
    return float(np.mean([explanation_accuracy(f, data, Y[:, i], threshold)
                          for i, f in enumerate(formulas)]))


def complexity(phi: DnfFormula | CnfFormula) -> int:
    """Literal occurrences of the DNF form of ``phi``."""
    if isinstance(phi, CnfFormula):
        phi = logic.cnf_to_dnf(phi)
    return phi.literal_count


def fidelity(phi, model, data, class_index: int = 0, threshold: float = 0.5) -> float:
    """Agreement between the formula and the model's Boolean predictions, in percent."""
    X = np.asarray(getattr(data, "X", data), dtype=float)
    rule = logic.evaluate(phi, booleanize(X, threshold))
    net = predicted_support(model, X, class_index)
    return float((rule == net).mean() * 100.0)


def _concept_set(item) -> frozenset:
    if isinstance(item, (DnfFormula, CnfFormula)):
        return frozenset(item.vocabulary[i] for i in item.concepts)
    return frozenset(item)


def consistency(runs: Iterable) -> float:
    """Average, over concepts used in any run, of the fraction of runs using them (percent).

    ``runs`` holds one formula (or concept-name set) per run.
    """
    sets = [_concept_set(r) for r in runs]
    if not sets:
        raise ConfigError("consistency needs at least one run")
    concepts = set().union(*sets)
    if not concepts:
        return 0.0
    fractions = [sum(c in s for s in sets) / len(sets) for c in concepts]
    return float(np.mean(fractions) * 100.0)


def run_consistency(runs: Sequence) -> list[float]:
    """Per-run share of the consistency score: mean recurrence of that run's concepts."""
    sets = [_concept_set(r) for r in runs]
    out = []
    for s in sets:
        if not s:
            out.append(0.0)
            continue
        out.append(float(np.mean([sum(c in t for t in sets) / len(sets) for c in s]) * 100.0))
    return out


@dataclass
class ExtractionTimer:
    """Wall-clock bookkeeping for train + extract (monotonic clock)."""

    train_seconds: float = 0.0
    extract_seconds: float = 0.0

    def measure(self, phase: str):
        timer = self

        class _Span:
            def __enter__(self):
                self.start = time.perf_counter()
                return self

            def __exit__(self, *exc):
                elapsed = time.perf_counter() - self.start
                setattr(timer, f"{phase}_seconds", getattr(timer, f"{phase}_seconds") + elapsed)
                return False

        if phase not in ("train", "extract"):
            raise ConfigError(f"unknown timing phase {phase!r}")
        return _Span()


def extraction_time(run: ExtractionTimer) -> float:
    return run.train_seconds + run.extract_seconds


def aggregate(fold_results: Sequence[Mapping[str, float]]) -> dict[str, dict[str, float]]:
    """Mean and sample standard deviation (n - 1) per metric over folds."""
    if not fold_results:
        raise ConfigError("cannot aggregate an empty list of folds")
    keys = [k for k in fold_results[0] if isinstance(fold_results[0][k], (int, float))]
    out = {}
    for key in keys:
        values = np.array([float(f[key]) for f in fold_results])
        std = float(values.std(ddof=1)) if len(values) > 1 else 0.0
        out[key] = {"mean": float(values.mean()), "std": std if not math.isnan(std) else 0.0}
    return out
