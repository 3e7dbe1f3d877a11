"""Out-of-the-box LENs: psi (node-level), mu (network-level) and ReLU (example-level)."""

from __future__ import annotations

import dataclasses
import logging
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import logic
from .criteria import Criterion, cluster_probabilities, make_criterion
from .errors import ConfigError, FormulaError
from .extraction import (
    Explanation,
    ExplanationOptions,
    build_truth_table,
    explain_cascade,
    formula_from_table,
)
from .logic import DnfFormula, Literal, Minterm
from .network import Network, TrainConfig, forward, sigmoid, train
from .pruning import (
    prune_example_level,
    prune_network_level,
    prune_node_level,
    reachable_inputs,
)

log = logging.getLogger(__name__)

KINDS = ("psi", "mu", "relu")
PSI_PROBE_CAP = 10
# Clustering has poor local optima (unbalanced splits); keep the best of several starts.
MI_RESTARTS = 8
RESTART_SEED_STRIDE = 7919

_DEFAULTS = {
    "psi": dict(hidden_dims=(4,), hidden_activation="sigmoid", zeta=2, l1_weight=3e-4,
                l1_scope="all", learning_rate=3e-2, epochs=1000),
    "mu": dict(hidden_dims=(20, 10), hidden_activation="relu", tau=0.5, l1_weight=1e-2,
               l1_scope="first", learning_rate=1e-2, epochs=500),
    "relu": dict(hidden_dims=(50, 30), hidden_activation="relu", zeta=None, tau=0.5,
                 l1_weight=1e-4, l1_scope="all", learning_rate=1e-3, epochs=500),
}


@dataclass
class LenPreset:
    kind: str
    k: int
    r: int
    hidden_dims: tuple[int, ...] = ()
    hidden_activation: str = "sigmoid"
    zeta: int | None = None
    tau: float | None = None
    network_mode: str = "threshold"
    l1_weight: float = 0.0
    l1_scope: str = "all"
    criterion: str = "iff"
    softmax_temperature: float = 1.0
    restarts: int | None = None
    train: TrainConfig = field(default_factory=TrainConfig)
    extraction: ExplanationOptions = field(default_factory=ExplanationOptions)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown model preset {self.kind!r}")
        if self.k < 1 or self.r < 1:
            raise ConfigError("k and r must be at least 1")
        self.hidden_dims = tuple(int(h) for h in self.hidden_dims)
        if any(h < 1 for h in self.hidden_dims):
            raise ConfigError("hidden dims must be positive")
        if self.l1_scope not in ("all", "first"):
            raise ConfigError(f"unknown l1_scope {self.l1_scope!r}")
        on_logits = self.criterion_obj.on_logits
        if self.restarts is None:
            self.restarts = MI_RESTARTS if on_logits else 1
        if int(self.restarts) < 1:
            raise ConfigError("restarts must be at least 1")
        self.restarts = int(self.restarts)
        self.check()

    def check(self) -> None:
        """Assert the preset's structural invariants."""
        if self.kind == "psi":
            if self.hidden_activation != "sigmoid":
                raise ConfigError("psi networks use sigmoid activations everywhere")
            if self.zeta is None or self.zeta < 1:
                raise ConfigError("psi networks need a node-level fan-in zeta >= 1")
            if self.zeta > PSI_PROBE_CAP:
                raise ConfigError(f"psi fan-in above the exhaustive probe cap {PSI_PROBE_CAP}")
            if len(self.hidden_dims) > 3:
                warnings.warn("psi networks with more than 3 hidden layers are hard to merge into rules",
                              stacklevel=3)
        elif self.kind == "mu":
            if self.network_mode == "threshold" and (self.tau is None or not 0 < self.tau <= 1):
                raise ConfigError("mu networks need tau in (0, 1]")
            if self.network_mode == "top_k" and (self.zeta is None or self.zeta < 1):
                raise ConfigError("mu top_k pruning needs zeta >= 1")
            if self.network_mode not in ("threshold", "top_k"):
                raise ConfigError(f"unknown network pruning mode {self.network_mode!r}")
            if self.l1_scope != "first":
                raise ConfigError("mu networks regularize the first layer only")
        else:
            if self.hidden_activation != "relu":
                raise ConfigError("relu networks need relu hidden activations")
            if self.zeta is None and self.tau is None:
                raise ConfigError("relu networks need zeta or tau for example-level pruning")

    @property
    def criterion_obj(self) -> Criterion:
        return make_criterion(self.criterion, self.softmax_temperature)

    @property
    def per_class_subnets(self) -> bool:
        return self.kind == "mu" and not self.criterion_obj.on_logits

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        d["hidden_dims"] = list(self.hidden_dims)
        d["train"] = self.train.to_dict()
        d["extraction"] = self.extraction.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> LenPreset:
        d = dict(d)
        d["train"] = TrainConfig(**d.get("train", {}))
        d["extraction"] = ExplanationOptions(**d.get("extraction", {}))
        return cls(**d)


_PRESET_FIELDS = {f.name for f in dataclasses.fields(LenPreset)} - {"train", "extraction", "kind", "k", "r"}
_TRAIN_FIELDS = {f.name for f in dataclasses.fields(TrainConfig)}
_EXTRACT_FIELDS = {f.name for f in dataclasses.fields(ExplanationOptions)}


def resolve_preset(kind: str, k: int, r: int, **overrides) -> LenPreset:
    """Merge preset defaults with flat overrides routed to preset, training or extraction fields."""
    if kind not in KINDS:
        raise ConfigError(f"unknown model preset {kind!r}")
    merged = dict(_DEFAULTS[kind])
    merged.update(overrides)
    preset_kw, train_kw, extract_kw = {}, {}, {}
    for key, value in merged.items():
        if key in _PRESET_FIELDS:
            preset_kw[key] = value
        elif key in _TRAIN_FIELDS:
            train_kw[key] = value
        elif key in _EXTRACT_FIELDS:
            extract_kw[key] = value
        else:
            raise ConfigError(f"unknown option {key!r} for the {kind} preset")
    if "l1_weight" in preset_kw:
        train_kw["l1_weight"] = preset_kw["l1_weight"]
    train_kw.pop("l1_layers", None)
    return LenPreset(kind, k, r, train=TrainConfig(**train_kw),
                     extraction=ExplanationOptions(**extract_kw), **preset_kw)


def build_psi(k: int, r: int, **overrides) -> LogicExplainedNetwork:
    return LogicExplainedNetwork(resolve_preset("psi", k, r, **overrides))


def build_mu(k: int, r: int, **overrides) -> LogicExplainedNetwork:
    return LogicExplainedNetwork(resolve_preset("mu", k, r, **overrides))


def build_relu(k: int, r: int, **overrides) -> LogicExplainedNetwork:
    return LogicExplainedNetwork(resolve_preset("relu", k, r, **overrides))


BUILDERS = {"psi": build_psi, "mu": build_mu, "relu": build_relu}


@dataclass
class PsiExplanation:
    neuron_formulas: list[list[DnfFormula]]
    layer_names: list[tuple[str, ...]]
    outputs: list[DnfFormula]


def _hidden_names(net: Network) -> list[tuple[str, ...]]:
    hidden = net.layers[:-1]
    if len(hidden) == 1:
        return [tuple(f"h{j + 1}" for j in range(hidden[0].out_dim))]
    return [tuple(f"h{l + 1}_{j + 1}" for j in range(s.out_dim)) for l, s in enumerate(hidden)]


def neuron_formula(
    weights, bias: float, live, vocabulary: Sequence[str], max_fan_in: int = PSI_PROBE_CAP
) -> DnfFormula:
    """Rule of one sigmoid neuron from its exhaustive 0/1 truth table over live inputs."""
    live = [int(j) for j in np.nonzero(live)[0]]
    if len(live) > max_fan_in:
        raise FormulaError(f"neuron fan-in {len(live)} exceeds the exhaustive probe cap {max_fan_in}")
    w = np.asarray(weights, dtype=float)[live]
    m = len(live)
    codes = np.arange(2**m)
    bits = ((codes[:, None] >> np.arange(m)[None, :]) & 1).astype(bool)
    fires = sigmoid(bits.astype(float) @ w + bias) >= 0.5
    terms = [
        Minterm(tuple(Literal(j, vocabulary[j], not b) for j, b in zip(live, row)))
        for row, f in zip(bits, fires)
        if f
    ]
    return logic.simplify(DnfFormula(tuple(vocabulary), tuple(terms)))


def psi_extract(
    net: Network, concept_names: Sequence[str], max_fan_in: int = PSI_PROBE_CAP,
    output_names: Sequence[str] | None = None,
) -> PsiExplanation:
    """Per-neuron rules of a pruned sigmoid network, composed down to the input concepts."""
    if any(s.activation != "sigmoid" for s in net.layers):
        raise ConfigError("psi extraction needs sigmoid activations everywhere")
    names = [tuple(concept_names)] + _hidden_names(net)
    out_names = tuple(output_names) if output_names else tuple(f"y{i + 1}" for i in range(net.out_dim))
    layer_formulas = []
    for l, (w, b, m) in enumerate(zip(net.weights, net.biases, net.mask)):
        layer_formulas.append(
            [neuron_formula(w[j], b[j], m[j], names[l], max_fan_in) for j in range(w.shape[0])]
        )
    stage_names = names[1:] + [out_names]
    stages = list(zip(stage_names, layer_formulas))
    outputs = explain_cascade(stages)
    return PsiExplanation(layer_formulas, stage_names, outputs)


class LogicExplainedNetwork:
    """A preset-configured LEN: training, prediction and explanation."""

    def __init__(self, preset: LenPreset, networks: list[Network] | None = None):
        self.preset = preset
        self.networks = networks or []
        self.histories: list = []
        self.pruning_info: list[dict] = []

    # construction ------------------------------------------------------

    def _dims(self, r: int) -> list[int]:
        return [self.preset.k, *self.preset.hidden_dims, r]

    def _activations(self) -> list[str]:
        return [self.preset.hidden_activation] * len(self.preset.hidden_dims) + ["sigmoid"]

    def init_networks(self, seed: int | None = None) -> list[Network]:
        seed = self.preset.train.seed if seed is None else seed
        if self.preset.per_class_subnets:
            return [Network.create(self._dims(1), self._activations(), seed=seed + i)
                    for i in range(self.preset.r)]
        return [Network.create(self._dims(self.preset.r), self._activations(), seed=seed)]

    def _pruner(self, slot: int):
        p = self.preset
        if p.kind == "psi":
            return lambda net: prune_node_level(net, p.zeta)
        if p.kind == "mu":
            def prune(net):
                res = prune_network_level(net, p.network_mode, p.tau or 0.5, p.zeta)
                self.pruning_info.append(
                    {"subnet": slot, "retained": list(res.retained), "degenerate": res.degenerate}
                )
                if res.degenerate:
                    log.warning("network-level pruning kept only concept %d", res.retained[0])
            return prune
        return None

    def _l1_layers(self, n_layers: int):
        return (0,) if self.preset.l1_scope == "first" else tuple(range(n_layers))

    # training ----------------------------------------------------------

    def fit(self, X, Y=None) -> LogicExplainedNetwork:
        X = np.asarray(getattr(X, "X", X), dtype=float)
        crit = self.preset.criterion_obj
        if Y is not None:
            Y = np.asarray(Y, dtype=float)
            if Y.ndim == 1:
                Y = Y[:, None]
            if not crit.on_logits and Y.shape[1] != self.preset.r:
                raise ConfigError(f"{Y.shape[1]} target columns for r={self.preset.r} outputs")
        elif not crit.on_logits:
            raise ConfigError(f"criterion {crit.kind} needs targets")
        if X.shape[1] != self.preset.k:
            raise ConfigError(f"{X.shape[1]} concept columns for k={self.preset.k}")
        self.pruning_info = []
        self.histories = []
        trained = []
        for slot, net in enumerate(self.init_networks()):
            cfg = dataclasses.replace(
                self.preset.train,
                seed=self.preset.train.seed + slot,
                l1_layers=self._l1_layers(len(net.layers)),
            )
            targets = None
            if not crit.on_logits:
                targets = Y[:, [slot]] if self.preset.per_class_subnets else Y
            best = None
            for attempt in range(self.preset.restarts):
                start = net
                if attempt:
                    seed = self.preset.train.seed + RESTART_SEED_STRIDE * attempt
                    start = self.init_networks(seed)[slot]
                    cfg = dataclasses.replace(cfg, seed=seed + slot)
                info_mark = len(self.pruning_info)
                result = train(start, X, targets, cfg, crit, self._pruner(slot))
                if best is None or result[1].loss[-1] < best[1].loss[-1]:
                    best, best_info = result, self.pruning_info[info_mark:]
                del self.pruning_info[info_mark:]
            self.pruning_info.extend(best_info)
            trained.append(best[0])
            self.histories.append(best[1])
        self.networks = trained
        self.check_trained()
        return self

    def check_trained(self) -> None:
        p = self.preset
        p.check()
        for net in self.networks:
            if p.kind == "psi":
                if max(net.max_fan_in()) > p.zeta and net.layers[0].in_dim > p.zeta:
                    raise ConfigError("psi network violates its fan-in bound after training")
            for w, m in zip(net.weights, net.mask):
                if np.any(w[~m] != 0):
                    raise ConfigError("masked weights are not zero")

    # prediction --------------------------------------------------------

    def _require_trained(self):
        if not self.networks:
            raise ConfigError("model has not been trained")

    def predict_proba(self, X) -> np.ndarray:
        self._require_trained()
        X = np.asarray(getattr(X, "X", X), dtype=float)
        return np.hstack([net.predict(X) for net in self.networks])

    def logits(self, X) -> np.ndarray:
        self._require_trained()
        X = np.asarray(getattr(X, "X", X), dtype=float)
        return np.hstack([forward(net, X).logits for net in self.networks])

    def cluster_probabilities(self, X) -> np.ndarray:
        return cluster_probabilities(self.logits(X), self.preset.softmax_temperature)

    def predict_bool(self, X) -> np.ndarray:
        """Thresholded outputs; for clustering, the one-hot arg-max cluster."""
        if self.preset.criterion_obj.on_logits:
            z = self.logits(X)
            out = np.zeros(z.shape, dtype=bool)
            out[np.arange(len(z)), z.argmax(axis=1)] = True
            return out
        return self.predict_proba(X) >= 0.5

    # explanation -------------------------------------------------------

    def _net_for(self, class_index: int) -> tuple[Network, int]:
        if self.preset.per_class_subnets:
            return self.networks[class_index], 0
        return self.networks[0], class_index

    def retained_concepts(self, class_index: int, X=None) -> tuple[int, ...]:
        self._require_trained()
        if not 0 <= class_index < self.preset.r:
            raise ConfigError(f"class index {class_index} out of range for r={self.preset.r}")
        net, out = self._net_for(class_index)
        kind = self.preset.kind
        if kind == "mu":
            return tuple(int(j) for j in np.nonzero(net.mask[0].any(axis=0))[0])
        if kind == "psi":
            return reachable_inputs(net, out)
        if X is None:
            raise ConfigError("relu retention needs the samples to explain")
        X = np.asarray(getattr(X, "X", X), dtype=float)
        support = self.predict_bool(X)[:, class_index]
        keep: set[int] = set()
        for c in X[support]:
            per_output = prune_example_level(net, c, self.preset.zeta, self.preset.tau)
            keep.update(per_output[out])
        return tuple(sorted(keep))

    def explain(
        self,
        class_index: int,
        data,
        concept_names: Sequence[str] | None = None,
        options: ExplanationOptions | None = None,
    ) -> Explanation:
        """Class-level explanation; ``data`` supplies the support samples (training split)."""
        self._require_trained()
        options = options or self.preset.extraction
        X = np.asarray(getattr(data, "X", data), dtype=float)
        names = tuple(concept_names or getattr(data, "concept_names", None)
                      or [f"c{j + 1}" for j in range(self.preset.k)])
        crit = self.preset.criterion_obj
        preds = self.predict_bool(X)[:, class_index]
        if self.preset.kind == "psi" and not crit.on_logits:
            net, out = self._net_for(class_index)
            phi = psi_extract(net, names).outputs[out]
            retained = tuple(sorted(phi.concepts))
            support = int(preds.sum())
            return Explanation(phi, class_index, retained, support,
                               len(phi.minterms), len(phi.minterms), options)
        retained = self.retained_concepts(class_index, X)
        table = build_truth_table(None, X, class_index, retained,
                                  options.boolean_threshold, predictions=preds)
        phi, raw, filtered = formula_from_table(table, names, options)
        return Explanation(phi, class_index, table.retained_concepts, int(preds.sum()),
                           raw, filtered, options)

    # persistence -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "preset": self.preset.to_dict(),
            "networks": [net.to_dict() for net in self.networks],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> LogicExplainedNetwork:
        if doc.get("format_version") != 1:
            raise ConfigError(f"unsupported model format_version {doc.get('format_version')!r}")
        preset = LenPreset.from_dict(doc["preset"])
        return cls(preset, [Network.from_dict(n) for n in doc["networks"]])
