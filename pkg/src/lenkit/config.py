"""Run configuration: one JSON document describing dataset, model and extraction.

Example::

    {
      "model": "mu",
      "criterion": "iff",
      "pruning": {"strategy": "network", "tau": 0.5, "prune_epoch": 250},
      "hidden_dims": [20, 10],
      "training": {"epochs": 500, "learning_rate": 0.01, "l1_weight": 0.01},
      "extraction": {"min_support": 1},
      "dataset": {"generator": "xor", "params": {"k_noise": 3, "n": 400}},
      "seed": 0,
      "folds": 10
    }
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from . import data as data_mod
from .criteria import CLI_NAMES, make_criterion
from .data import ConceptDataset
from .errors import ConfigError, DataError
from .models import KINDS, LogicExplainedNetwork, resolve_preset

STRATEGY_FOR_MODEL = {"psi": "node", "mu": "network", "relu": "example"}
MODEL_FOR_STRATEGY = {v: k for k, v in STRATEGY_FOR_MODEL.items()}
STYLE_FOR_CRITERION = {
    "if": "fol_if",
    "only_if": "fol_onlyif",
    "iff": "fol_iff",
    "coherence": "fol_iff",
    "mi": "fol_cluster",
}
_PRUNING_KEYS = {"strategy", "zeta", "tau", "prune_epoch", "mode"}


@dataclass
class RunConfig:
    model: str | None = None
    criterion: str = "iff"
    softmax_temperature: float = 1.0
    clusters: int = 2
    pruning: dict = field(default_factory=dict)
    hidden_dims: list[int] | None = None
    training: dict = field(default_factory=dict)
    extraction: dict = field(default_factory=dict)
    dataset: dict = field(default_factory=dict)
    seed: int = 0
    folds: int = 10
    style: str | None = None
    base_dir: str = field(default=".", repr=False)

    def __post_init__(self):
        unknown = set(self.pruning) - _PRUNING_KEYS
        if unknown:
            raise ConfigError(f"unknown pruning keys: {', '.join(sorted(unknown))}")
        strategy = self.pruning.get("strategy")
        if strategy is not None and strategy not in MODEL_FOR_STRATEGY:
            raise ConfigError(f"unknown pruning strategy {strategy!r}")
        if self.model is None:
            self.model = MODEL_FOR_STRATEGY.get(strategy, "mu")
        if self.model not in KINDS:
            raise ConfigError(f"unknown model {self.model!r}; expected one of {', '.join(KINDS)}")
        if strategy is not None and strategy != STRATEGY_FOR_MODEL[self.model]:
            raise ConfigError(
                f"pruning strategy {strategy!r} does not match the {self.model} model "
                f"(expects {STRATEGY_FOR_MODEL[self.model]!r})"
            )
        if self.criterion not in CLI_NAMES:
            raise ConfigError(f"unknown criterion {self.criterion!r}")
        if self.clusters < 2:
            raise ConfigError("clusters must be at least 2")
        if not isinstance(self.dataset, dict):
            raise ConfigError("dataset must be an object")

    @property
    def is_clustering(self) -> bool:
        return make_criterion(self.criterion).on_logits

    @property
    def resolved_style(self) -> str:
        return self.style or STYLE_FOR_CRITERION[self.criterion]

    @classmethod
    def from_dict(cls, doc: dict, base_dir: str | Path = ".") -> RunConfig:
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        names = {f.name for f in dataclasses.fields(cls)} - {"base_dir"}
        unknown = set(doc) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        try:
            return cls(**doc, base_dir=str(base_dir))
        except TypeError as exc:
            raise ConfigError(f"invalid config: {exc}") from exc

    @classmethod
    def load(cls, path) -> RunConfig:
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc.msg} at line {exc.lineno}") from None
        return cls.from_dict(doc, base_dir=path.parent)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("base_dir")
        return d

    # resolution --------------------------------------------------------

    def _path(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def load_dataset(self) -> ConceptDataset:
        source = self.dataset
        if "generator" in source and "path" in source:
            raise ConfigError("dataset takes either 'generator' or 'path', not both")
        if "generator" in source:
            params = dict(source.get("params", {}))
            params.setdefault("seed", self.seed)
            return data_mod.generate(source["generator"], **params)
        if "path" in source:
            schema = source.get("schema")
            return data_mod.load_csv(self._path(source["path"]),
                                     None if schema is None else self._path(schema))
        raise ConfigError("dataset needs a 'generator' or a 'path'")

    @property
    def dataset_name(self) -> str:
        if "generator" in self.dataset:
            return str(self.dataset["generator"])
        return Path(str(self.dataset.get("path", "dataset"))).stem

    def preset_overrides(self, seed: int | None = None) -> dict[str, Any]:
        o: dict[str, Any] = {
            "criterion": self.criterion,
            "softmax_temperature": self.softmax_temperature,
            "seed": self.seed if seed is None else seed,
        }
        if self.hidden_dims is not None:
            o["hidden_dims"] = tuple(self.hidden_dims)
        p = self.pruning
        if "zeta" in p:
            o["zeta"] = p["zeta"]
        if "tau" in p:
            o["tau"] = p["tau"]
        if "prune_epoch" in p:
            o["prune_epoch"] = p["prune_epoch"]
        if self.model == "mu":
            mode = p.get("mode") or ("top_k" if "zeta" in p and "tau" not in p else None)
            if mode:
                o["network_mode"] = mode
        elif self.model == "relu" and "zeta" in p and "tau" not in p:
            o["tau"] = None
        elif "mode" in p:
            raise ConfigError("pruning mode applies to network-level pruning only")
        o.update(self.training)
        o.update(self.extraction)
        return o

    def output_count(self, dataset: ConceptDataset) -> int:
        if self.is_clustering:
            return self.clusters
        if dataset.q == 0:
            raise DataError(f"criterion {self.criterion!r} needs target columns in the dataset")
        return dataset.q

    def build_model(self, dataset: ConceptDataset, seed: int | None = None) -> LogicExplainedNetwork:
        preset = resolve_preset(self.model, dataset.k, self.output_count(dataset),
                                **self.preset_overrides(seed))
        return LogicExplainedNetwork(preset)

    def class_names(self, dataset: ConceptDataset) -> list[str]:
        if self.is_clustering:
            return [f"cluster{i + 1}" for i in range(self.clusters)]
        return list(dataset.target_names)


def fit_model(cfg: RunConfig, dataset: ConceptDataset, seed: int | None = None) -> LogicExplainedNetwork:
    model = cfg.build_model(dataset, seed)
    if cfg.is_clustering:
        return model.fit(dataset.X)
    return model.fit(dataset.X, dataset.Y)
