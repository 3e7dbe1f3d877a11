"""Training criteria for the three LEN objectives.

Every loss returns ``(value, gradient)`` where the gradient is taken with
respect to the loss input: sigmoid outputs for the supervised criteria,
pre-activation logits for the mutual-information criterion. Supervised
losses are summed over samples and over outputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

EPS = 1e-7

CLI_NAMES = {
    "if": "if_rule",
    "only_if": "only_if_rule",
    "iff": "iff_rule",
    "coherence": "coherence",
    "mi": "mutual_info",
}
KINDS = tuple(CLI_NAMES.values())


def _pair(targets, outputs):
    y = np.asarray(targets, dtype=float)
    f = np.asarray(outputs, dtype=float)
    if y.shape != f.shape:
        raise ValueError(f"shape mismatch: targets {y.shape} vs outputs {f.shape}")
    return y, f


def loss_if(targets, outputs):
    """Hinge penalty for class members scored below their label."""
    y, f = _pair(targets, outputs)
    value = np.maximum(0.0, y - f).sum()
    grad = np.where(y > f, -1.0, 0.0)
    return float(value), grad


def loss_only_if(targets, outputs):
    y, f = _pair(targets, outputs)
    value = np.maximum(0.0, f - y).sum()
    grad = np.where(f > y, 1.0, 0.0)
    return float(value), grad


def loss_iff(targets, outputs):
    """Binary cross-entropy (negative log-likelihood, non-negative)."""
    y, f = _pair(targets, outputs)
    f = np.clip(f, EPS, 1.0 - EPS)
    value = -(y * np.log(f) + (1.0 - y) * np.log1p(-f)).sum()
    grad = (f - y) / (f * (1.0 - f))
    return float(value), grad


def loss_coherence(blackbox_outputs, outputs):
    """Cross-entropy against (possibly soft) black-box predictions."""
    return loss_iff(blackbox_outputs, outputs)


def _log_softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def cluster_probabilities(logits, temperature: float = 1.0) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    return np.exp(_log_softmax(z / temperature))


def loss_mi(logits, temperature: float = 1.0):
    """Negative mutual information between samples and clusters.

    ``p(i|c)`` is the softmax of ``logits / temperature``; the loss is the mean
    per-sample entropy minus the entropy of the batch-mean distribution.
    """
    z = np.asarray(logits, dtype=float)
    if z.ndim != 2 or z.shape[0] == 0:
        raise ValueError("mutual-information loss needs a non-empty batch x r matrix")
    if z.shape[1] < 2:
        raise ValueError("mutual-information loss needs at least two outputs")
    n = z.shape[0]
    logp = _log_softmax(z / temperature)
    p = np.exp(logp)
    h_cond = -(p * logp).sum(axis=1).mean()
    pbar = p.mean(axis=0)
    log_pbar = np.log(np.maximum(pbar, 1e-300))
    h_marg = -(pbar * log_pbar).sum()
    value = h_cond - h_marg

    g_p = (log_pbar[None, :] - logp) / n
    g_s = p * (g_p - (p * g_p).sum(axis=1, keepdims=True))
    return float(value), g_s / temperature


@dataclass(frozen=True)
class Criterion:
    kind: str
    target_source: str = "labels"
    softmax_temperature: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown criterion {self.kind!r}")
        if self.target_source not in ("labels", "blackbox_outputs", "none"):
            raise ConfigError(f"unknown target source {self.target_source!r}")
        if self.kind == "mutual_info" and self.target_source != "none":
            raise ConfigError("mutual_info criterion takes no targets")
        if self.kind == "coherence" and self.target_source != "blackbox_outputs":
            raise ConfigError("coherence criterion requires blackbox_outputs targets")
        if self.kind != "mutual_info" and self.target_source == "none":
            raise ConfigError(f"{self.kind} criterion requires targets")
        if not self.softmax_temperature > 0:
            raise ConfigError("softmax_temperature must be positive")

    @property
    def on_logits(self) -> bool:
        return self.kind == "mutual_info"

    @property
    def is_cross_entropy(self) -> bool:
        return self.kind in ("iff_rule", "coherence")

    @property
    def cli_name(self) -> str:
        return {v: k for k, v in CLI_NAMES.items()}[self.kind]

    def __call__(self, targets, outputs):
        if self.kind == "if_rule":
            return loss_if(targets, outputs)
        if self.kind == "only_if_rule":
            return loss_only_if(targets, outputs)
        if self.kind == "iff_rule":
            return loss_iff(targets, outputs)
        if self.kind == "coherence":
            return loss_coherence(targets, outputs)
        return loss_mi(outputs, self.softmax_temperature)


def make_criterion(name: str, temperature: float = 1.0) -> Criterion:
    """Build a criterion from its config/CLI name (``if``, ``only_if``, ``iff``, ``coherence``, ``mi``)."""
    kind = CLI_NAMES.get(name, name)
    if kind not in KINDS:
        raise ConfigError(f"unknown criterion {name!r}")
    source = {"mutual_info": "none", "coherence": "blackbox_outputs"}.get(kind, "labels")
    return Criterion(kind, source, temperature)
