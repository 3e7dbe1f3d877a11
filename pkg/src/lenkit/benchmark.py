"""k-fold benchmark: train, extract and score a LEN on every fold.

Each fold owns its model and RNG stream (``seed = base_seed + fold``), so the
results do not depend on how many worker threads run the folds.
"""

from __future__ import annotations

import csv
import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import metrics
from .config import RunConfig, fit_model
from .data import ConceptDataset, kfold
from .errors import DataError, LenError
from .metrics import ExtractionTimer

log = logging.getLogger(__name__)

SUMMARY_COLUMNS = ("model", "dataset", "metric", "mean", "std")
PARETO_COLUMNS = ("model", "dataset", "fold", "model_error", "explanation_error")
# Wall-clock time differs between otherwise identical runs; it is kept out of
# the summary so that the summary is reproducible byte for byte.
TIMING_METRICS = ("extraction_time",)


@dataclass
class FoldResult:
    fold: int
    seed: int
    metrics: dict
    formulas: list[str]
    concepts: list[str]

    def to_dict(self) -> dict:
        return {"fold": self.fold, "seed": self.seed, **self.metrics,
                "formulas": self.formulas, "concepts": self.concepts}


def cluster_alignment(pred: np.ndarray, Y: np.ndarray) -> list[int]:
    """Target column for each cluster, chosen to maximize agreement on the given split."""
    r, q = pred.shape[1], Y.shape[1]
    if r != q:
        raise DataError(f"scoring {r} clusters needs {r} reference target columns, found {q}")
    best, best_score = None, -1.0
    for perm in itertools.permutations(range(q)):
        score = float(np.mean([np.mean(pred[:, i] == Y[:, perm[i]]) for i in range(r)]))
        if score > best_score:
            best, best_score = list(perm), score
    return best


def run_fold(cfg: RunConfig, dataset: ConceptDataset, fold: int, train_idx, test_idx) -> FoldResult:
    seed = cfg.seed + fold
    train, test = dataset.subset(train_idx), dataset.subset(test_idx)
    timer = ExtractionTimer()
    with timer.measure("train"):
        model = fit_model(cfg, train, seed)
    r = model.preset.r
    with timer.measure("extract"):
        formulas = [model.explain(i, train).formula for i in range(r)]

    threshold = model.preset.extraction.boolean_threshold
    pred = model.predict_bool(test.X)
    targets = list(range(r))
    if cfg.is_clustering:
        targets = cluster_alignment(model.predict_bool(train.X), train.Y)
    aligned = np.zeros((test.n, r), dtype=bool)
    for i, t in enumerate(targets):
        aligned[:, t] = pred[:, i]
    Y = test.Y[:, :r] if not cfg.is_clustering else test.Y
    result = {
        "model_accuracy": metrics.model_accuracy(aligned, Y),
        "explanation_accuracy": float(np.mean([
            metrics.explanation_accuracy(phi, test, Y[:, targets[i]], threshold)
            for i, phi in enumerate(formulas)])),
        "complexity": float(np.mean([metrics.complexity(phi) for phi in formulas])),
        "fidelity": float(np.mean([
            metrics.fidelity(phi, model, test, i, threshold) for i, phi in enumerate(formulas)])),
        "extraction_time": metrics.extraction_time(timer),
    }
    concepts = sorted({name for phi in formulas for name in phi.concept_names})
    log.info("fold %d: model %.2f%%, explanation %.2f%%", fold,
             result["model_accuracy"], result["explanation_accuracy"])
    return FoldResult(fold, seed, result, [str(phi) for phi in formulas], concepts)


def run_benchmark(cfg: RunConfig, threads: int = 1) -> dict:
    """Run the k-fold protocol; returns the report document {config, per_fold, aggregate}."""
    dataset = cfg.load_dataset()
    if cfg.is_clustering and dataset.q == 0:
        raise DataError("benchmarking a clustering criterion needs reference target columns")
    splits = kfold(dataset, cfg.folds, cfg.seed)

    def task(item):
        fold, (tr, te) = item
        try:
            return run_fold(cfg, dataset, fold, tr, te)
        except LenError as exc:
            exc.args = (f"fold {fold}: {exc}",) + exc.args[1:]
            exc.fold = fold
            raise

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            folds = list(pool.map(task, enumerate(splits)))
    else:
        folds = [task(item) for item in enumerate(splits)]

    shares = metrics.run_consistency([f.concepts for f in folds])
    for f, share in zip(folds, shares):
        f.metrics["consistency"] = share
    per_fold = [f.to_dict() for f in folds]
    agg = metrics.aggregate([{m: f.metrics[m] for m in metrics.METRICS} for f in folds])
    agg["consistency"]["mean"] = metrics.consistency([f.concepts for f in folds])
    return {
        "config": cfg.to_dict(),
        "resolved_preset": fit_preset_dict(cfg, dataset),
        "dataset": {"name": cfg.dataset_name, "n": dataset.n, "k": dataset.k,
                    "provenance": dataset.provenance},
        "per_fold": per_fold,
        "aggregate": agg,
    }


def fit_preset_dict(cfg: RunConfig, dataset: ConceptDataset) -> dict:
    return cfg.build_model(dataset).preset.to_dict()


def _fmt(x: float) -> str:
    return repr(round(float(x), 10))


def summary_rows(report: dict, metric_names) -> list[dict]:
    model = report["config"]["model"]
    name = report["dataset"]["name"]
    return [
        {"model": model, "dataset": name, "metric": m,
         "mean": _fmt(report["aggregate"][m]["mean"]), "std": _fmt(report["aggregate"][m]["std"])}
        for m in metric_names
    ]


def pareto_rows(report: dict) -> list[dict]:
    model = report["config"]["model"]
    name = report["dataset"]["name"]
    return [
        {"model": model, "dataset": name, "fold": f["fold"],
         "model_error": _fmt(100.0 - f["model_accuracy"]),
         "explanation_error": _fmt(100.0 - f["explanation_accuracy"])}
        for f in report["per_fold"]
    ]


def _write_csv(path: Path, columns, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def write_reports(report: dict, out_dir) -> dict[str, Path]:
    """Write summary.csv, timing.csv and pareto.csv into ``out_dir``."""
    out = Path(out_dir)
    stable = [m for m in metrics.METRICS if m not in TIMING_METRICS]
    paths = {"summary": out / "summary.csv", "timing": out / "timing.csv",
             "pareto": out / "pareto.csv"}
    _write_csv(paths["summary"], SUMMARY_COLUMNS, summary_rows(report, stable))
    _write_csv(paths["timing"], SUMMARY_COLUMNS, summary_rows(report, TIMING_METRICS))
    _write_csv(paths["pareto"], PARETO_COLUMNS, pareto_rows(report))
    return paths
