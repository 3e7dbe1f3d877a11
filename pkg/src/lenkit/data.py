"""Concept datasets: CSV ingestion, discretization, synthetic tasks and k-fold splits."""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError

DIGITS = ("zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine")


@dataclass(frozen=True)
class ConceptDataset:
    concept_names: tuple[str, ...]
    X: np.ndarray
    target_names: tuple[str, ...] = ()
    Y: np.ndarray | None = None
    provenance: str = ""

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2:
            raise DataError("concept matrix must be two-dimensional")
        n, k = X.shape
        if n < 1:
            raise DataError("dataset must contain at least one row")
        names = tuple(self.concept_names)
        if len(names) != k:
            raise DataError(f"{len(names)} concept names for {k} columns")
        if len(set(names)) != k:
            raise DataError("concept names must be unique")
        bad = np.argwhere(~((X >= 0.0) & (X <= 1.0)))
        if len(bad):
            r, c = bad[0]
            raise DataError(f"concept value {X[r, c]!r} outside [0, 1] at row {r}, column {names[c]!r}")
        targets = tuple(self.target_names)
        Y = np.zeros((n, 0), dtype=bool) if self.Y is None else np.asarray(self.Y)
        if Y.ndim == 1:
            Y = Y[:, None]
        if Y.shape != (n, len(targets)):
            raise DataError(f"target matrix shape {Y.shape} does not match {len(targets)} targets")
        object.__setattr__(self, "concept_names", names)
        object.__setattr__(self, "target_names", targets)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y.astype(bool))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def k(self) -> int:
        return self.X.shape[1]

    @property
    def q(self) -> int:
        return len(self.target_names)

    def subset(self, indices) -> ConceptDataset:
        idx = np.asarray(indices)
        return ConceptDataset(
            self.concept_names, self.X[idx], self.target_names, self.Y[idx], self.provenance
        )

    def schema(self) -> dict:
        return {"concepts": list(self.concept_names), "targets": list(self.target_names)}


def schema_path_for(csv_path) -> Path:
    p = Path(csv_path)
    return p.with_name(p.stem + ".schema.json")


def save_csv(dataset: ConceptDataset, path, schema_path=None) -> Path:
    """Write the CSV and its JSON schema sidecar; returns the sidecar path."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(list(dataset.concept_names) + list(dataset.target_names))
        for x, y in zip(dataset.X, dataset.Y):
            w.writerow([repr(float(v)) for v in x] + [int(b) for b in y])
    schema_path = Path(schema_path) if schema_path else schema_path_for(path)
    schema_path.write_text(json.dumps(dataset.schema(), indent=2))
    return schema_path


def _read_schema(schema, csv_path) -> dict:
    if schema is None:
        schema = schema_path_for(csv_path)
    if isinstance(schema, (str, Path)):
        try:
            schema = json.loads(Path(schema).read_text())
        except FileNotFoundError as exc:
            raise DataError(f"schema file not found: {schema}") from exc
        except json.JSONDecodeError as exc:
            raise DataError(f"schema is not valid JSON: {exc}") from exc
    if not isinstance(schema, dict) or "concepts" not in schema:
        raise DataError("schema must be an object with a 'concepts' list")
    return {"concepts": list(schema["concepts"]), "targets": list(schema.get("targets", []))}


def load_csv(path, schema=None) -> ConceptDataset:
    """Load a header-ed CSV; ``schema`` is a dict, a sidecar path, or ``None``
    to look for ``<stem>.schema.json`` next to the CSV."""
    path = Path(path)
    schema = _read_schema(schema, path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError as exc:
        raise DataError(f"data file not found: {path}") from exc
    if not rows:
        raise DataError(f"{path}: missing header row")
    header = [h.strip() for h in rows[0]]
    col = {h: i for i, h in enumerate(header)}
    for name in schema["concepts"] + schema["targets"]:
        if name not in col:
            raise DataError(f"{path}: missing column {name!r}")
    body = rows[1:]
    if not body:
        raise DataError(f"{path}: no data rows")

    def cell(r, name):
        row = body[r]
        try:
            text = row[col[name]]
            value = float(text)
        except (IndexError, ValueError):
            raise DataError(f"{path}: non-numeric cell at row {r + 1}, column {name!r}") from None
        if math.isnan(value):
            raise DataError(f"{path}: NaN at row {r + 1}, column {name!r}")
        return value

    X = np.empty((len(body), len(schema["concepts"])))
    Y = np.zeros((len(body), len(schema["targets"])), dtype=bool)
    for r in range(len(body)):
        for j, name in enumerate(schema["concepts"]):
            v = cell(r, name)
            if not 0.0 <= v <= 1.0:
                raise DataError(f"{path}: value {v} outside [0, 1] at row {r + 1}, column {name!r}")
            X[r, j] = v
        for j, name in enumerate(schema["targets"]):
            v = cell(r, name)
            if v not in (0.0, 1.0):
                raise DataError(f"{path}: target {v} is not 0/1 at row {r + 1}, column {name!r}")
            Y[r, j] = v == 1.0
    return ConceptDataset(schema["concepts"], X, schema["targets"], Y, provenance=f"csv:{path.name}")


def discretize(
    column: Sequence[float], thresholds: Sequence[float], labels: Sequence[str]
) -> tuple[tuple[str, ...], np.ndarray]:
    """One-hot bin a real column.

    Bin ``i`` holds values ``v`` with ``thresholds[i-1] < v <= thresholds[i]``,
    so a value equal to a threshold goes to the lower of its two bins.
    """
    t = np.asarray(thresholds, dtype=float)
    if np.any(np.diff(t) <= 0):
        raise ConfigError("thresholds must be strictly increasing")
    if len(labels) != len(t) + 1:
        raise ConfigError(f"need {len(t) + 1} labels for {len(t)} thresholds")
    v = np.asarray(column, dtype=float)
    if np.isnan(v).any():
        raise DataError(f"NaN at position {int(np.argmax(np.isnan(v)))}")
    bins = np.searchsorted(t, v, side="left")
    out = np.zeros((len(v), len(labels)))
    out[np.arange(len(v)), bins] = 1.0
    return tuple(labels), out


# ---------------------------------------------------------------------------
# synthetic tasks


def _jitter_bits(bits: np.ndarray, amplitude: float, rng) -> np.ndarray:
    """Move Boolean corners inward by up to ``amplitude`` (stays in [0, 1])."""
    if amplitude < 0 or amplitude >= 0.5:
        raise ConfigError("noise amplitude must lie in [0, 0.5)")
    u = rng.uniform(0.0, amplitude, size=bits.shape) if amplitude else np.zeros(bits.shape)
    return np.where(bits, 1.0 - u, u)


def xor(k_noise: int = 0, n: int = 400, noise_amplitude: float = 0.1, seed: int = 0) -> ConceptDataset:
    """XOR of two concepts plus ``k_noise`` uniform-noise concepts."""
    if n < 1 or k_noise < 0:
        raise ConfigError("xor needs n >= 1 and k_noise >= 0")
    rng = np.random.default_rng(seed)
    corners = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=bool)
    bits = corners[np.arange(n) % 4]
    X = _jitter_bits(bits, noise_amplitude, rng)
    if k_noise:
        X = np.hstack([X, rng.uniform(0.0, 1.0, size=(n, k_noise))])
    y = bits[:, 0] != bits[:, 1]
    order = rng.permutation(n)
    names = tuple(f"c{j + 1}" for j in range(2 + k_noise))
    return ConceptDataset(names, X[order], ("xor",), y[order, None], f"xor(k_noise={k_noise}, n={n}, noise={noise_amplitude}, seed={seed})")


def mnist_eo_concepts(n: int = 5000, seed: int = 0) -> ConceptDataset:
    """Ground-truth one-hot digit concepts with even/odd targets."""
    if n < 1:
        raise ConfigError("n must be positive")
    rng = np.random.default_rng(seed)
    digits = rng.integers(0, 10, size=n)
    X = np.zeros((n, 10))
    X[np.arange(n), digits] = 1.0
    even = digits % 2 == 0
    Y = np.stack([even, ~even], axis=1)
    return ConceptDataset(DIGITS, X, ("even", "odd"), Y, f"mnist_eo_concepts(n={n}, seed={seed})")


def mnist_iclu_concepts(n: int = 2000, seed: int = 0) -> ConceptDataset:
    """Twelve concepts (ten digits, even, odd) and no targets."""
    base = mnist_eo_concepts(n, seed)
    X = np.hstack([base.X, base.Y.astype(float)])
    return ConceptDataset(DIGITS + ("even", "odd"), X, provenance=f"mnist_iclu_concepts(n={n}, seed={seed})")


def random_boolean(
    k: int = 8, seed: int = 0, n: int = 500, n_relevant: int = 3, noise_amplitude: float = 0.2
) -> ConceptDataset:
    """``k`` jittered Boolean concepts; the target is a random Boolean
    function that depends on each of ``n_relevant`` hidden concepts."""
    if k < 1 or n < 1:
        raise ConfigError("random_boolean needs k >= 1 and n >= 1")
    rng = np.random.default_rng(seed)
    m = min(n_relevant, k)
    relevant = np.sort(rng.choice(k, size=m, replace=False))
    codes = np.arange(2**m)
    table = np.zeros(2**m, dtype=bool)
    # redraw until the function depends on every relevant concept
    while not all((table != table[codes ^ (1 << j)]).any() for j in range(m)):
        table = rng.integers(0, 2, size=2**m).astype(bool)
    bits = rng.integers(0, 2, size=(n, k)).astype(bool)
    code = sum(bits[:, r].astype(int) << j for j, r in enumerate(relevant))
    y = table[code]
    X = _jitter_bits(bits, noise_amplitude, rng)
    names = tuple(f"x{j}" for j in range(k))
    return ConceptDataset(names, X, ("y",), y[:, None], f"random_boolean(k={k}, n={n}, seed={seed}, relevant={relevant.tolist()})")


def mi_two_cluster(n: int = 400, seed: int = 0, group_size: int = 3, noise_amplitude: float = 0.2) -> ConceptDataset:
    """Two equal-size groups; group A activates the ``a*`` concepts, group B the ``b*`` ones."""
    if n < 2:
        raise ConfigError("mi_two_cluster needs n >= 2")
    rng = np.random.default_rng(seed)
    group = np.arange(n) % 2 == 0
    bits = np.hstack([np.repeat(group[:, None], group_size, 1), np.repeat(~group[:, None], group_size, 1)])
    X = _jitter_bits(bits, noise_amplitude, rng)
    order = rng.permutation(n)
    names = tuple(f"a{j + 1}" for j in range(group_size)) + tuple(f"b{j + 1}" for j in range(group_size))
    return ConceptDataset(names, X[order], ("group_a",), group[order, None], f"mi_two_cluster(n={n}, seed={seed})")


def cascade(n: int = 400, seed: int = 0, noise_amplitude: float = 0.1) -> ConceptDataset:
    """Two-stage task: mid concepts ``h1 = a & b``, ``h2 = c | d``; final ``y = h1 | ~h2``."""
    rng = np.random.default_rng(seed)
    bits = rng.integers(0, 2, size=(n, 4)).astype(bool)
    h1 = bits[:, 0] & bits[:, 1]
    h2 = bits[:, 2] | bits[:, 3]
    y = h1 | ~h2
    X = _jitter_bits(bits, noise_amplitude, rng)
    return ConceptDataset(("a", "b", "c", "d"), X, ("h1", "h2", "y"), np.stack([h1, h2, y], 1), f"cascade(n={n}, seed={seed})")


GENERATORS = {
    "xor": xor,
    "mnist_eo_concepts": mnist_eo_concepts,
    "mnist_iclu_concepts": mnist_iclu_concepts,
    "random_boolean": random_boolean,
    "mi_two_cluster": mi_two_cluster,
    "cascade": cascade,
}


def generate(task: str, **params) -> ConceptDataset:
    try:
        fn = GENERATORS[task]
    except KeyError:
        raise ConfigError(f"unknown generator {task!r}; expected one of {', '.join(GENERATORS)}") from None
    try:
        return fn(**params)
    except TypeError as exc:
        raise ConfigError(f"invalid parameters for {task}: {exc}") from exc


def kfold(dataset: ConceptDataset, folds: int, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """Seeded k-fold split, stratified on the first target column when present."""
    n = dataset.n
    if folds < 2 or folds > n:
        raise ConfigError(f"folds must lie in [2, {n}]")
    rng = np.random.default_rng(seed)
    order = None
    if dataset.q:
        y = dataset.Y[:, 0]
        pos, neg = np.nonzero(y)[0], np.nonzero(~y)[0]
        if min(len(pos), len(neg)) < folds and len(pos) and len(neg):
            warnings.warn(
                f"a class has fewer than {folds} members; falling back to unstratified folds",
                stacklevel=2,
            )
        else:
            order = np.concatenate([rng.permutation(pos), rng.permutation(neg)])
    if order is None:
        order = rng.permutation(n)
    assignment = np.empty(n, dtype=int)
    assignment[order] = np.arange(n) % folds
    all_idx = np.arange(n)
    return [(all_idx[assignment != f], all_idx[assignment == f]) for f in range(folds)]
