"""Dense feed-forward networks with masks, manual backprop and L1 training."""

from __future__ import annotations

import copy
import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .criteria import Criterion
from .errors import ConfigError, DataError, NumericError

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
ACTIVATIONS = ("sigmoid", "relu", "identity")
BIAS_MODES = ("learned", "fixed_one", "none")


def sigmoid(z):
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _activate(name, z):
    if name == "sigmoid":
        return sigmoid(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    return z


def _activation_grad(name, z, a):
    if name == "sigmoid":
        return a * (1.0 - a)
    if name == "relu":
        return (z > 0).astype(float)
    return np.ones_like(z)


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: str = "sigmoid"
    has_bias: bool = True

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise ConfigError("layer dimensions must be positive")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")


@dataclass
class Network:
    """Layered dense net; ``weights[l]`` has shape ``(out_dim, in_dim)``.

    ``mask[l]`` marks live connections. Masked weights are kept at exactly zero.
    """

    layers: list[LayerSpec]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    mask: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not self.layers:
            raise ConfigError("a network needs at least one layer")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_dim != b.in_dim:
                raise ConfigError(f"layer dims do not chain: {a.out_dim} -> {b.in_dim}")
        if not self.mask:
            self.mask = [np.ones(w.shape, dtype=bool) for w in self.weights]
        for spec, w, b, m in zip(self.layers, self.weights, self.biases, self.mask):
            if w.shape != (spec.out_dim, spec.in_dim) or b.shape != (spec.out_dim,):
                raise ConfigError("parameter shapes do not match layer specs")
            if m.shape != w.shape:
                raise ConfigError("mask shape does not match weights")
        self.apply_mask()

    @classmethod
    def create(
        cls,
        dims: Sequence[int],
        activations: Sequence[str] | str = "sigmoid",
        seed: int = 0,
        has_bias: bool = True,
    ) -> Network:
        """Glorot-uniform weights, zero biases. ``dims`` = input, hidden..., output."""
        if isinstance(activations, str):
            activations = [activations] * (len(dims) - 1)
        if len(activations) != len(dims) - 1:
            raise ConfigError("need one activation per layer")
        rng = np.random.default_rng(seed)
        layers, weights, biases = [], [], []
        for n_in, n_out, act in zip(dims[:-1], dims[1:], activations):
            layers.append(LayerSpec(n_in, n_out, act, has_bias))
            bound = np.sqrt(6.0 / (n_in + n_out))
            weights.append(rng.uniform(-bound, bound, size=(n_out, n_in)))
            biases.append(np.zeros(n_out))
        return cls(layers, weights, biases)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def copy(self) -> Network:
        return copy.deepcopy(self)

    def apply_mask(self) -> None:
        for w, m in zip(self.weights, self.mask):
            w *= m
            w[~m] = 0.0  # also clears -0.0 and nan
        for spec, b in zip(self.layers, self.biases):
            if not spec.has_bias:
                b[:] = 0.0

    def predict(self, X) -> np.ndarray:
        return forward(self, X).output

    def predict_bool(self, X, threshold: float = 0.5) -> np.ndarray:
        return self.predict(X) >= threshold

    def l1_norm(self, layers: Sequence[int] | None = None) -> float:
        idx = range(len(self.layers)) if layers is None else layers
        return float(sum(np.abs(self.weights[l]).sum() for l in idx))

    def max_fan_in(self) -> list[int]:
        return [int(m.sum(axis=1).max()) for m in self.mask]

    # serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "layers": [
                {
                    "in_dim": s.in_dim,
                    "out_dim": s.out_dim,
                    "activation": s.activation,
                    "has_bias": s.has_bias,
                }
                for s in self.layers
            ],
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "mask": [m.astype(int).tolist() for m in self.mask],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> Network:
        version = doc.get("format_version")
        if version != FORMAT_VERSION:
            raise DataError(f"unsupported network format_version {version!r}")
        try:
            layers = [LayerSpec(**spec) for spec in doc["layers"]]
            weights = [np.array(w, dtype=float).reshape(s.out_dim, s.in_dim)
                       for w, s in zip(doc["weights"], layers)]
            biases = [np.array(b, dtype=float).reshape(s.out_dim)
                      for b, s in zip(doc["biases"], layers)]
            mask = [np.array(m, dtype=bool).reshape(s.out_dim, s.in_dim)
                    for m, s in zip(doc["mask"], layers)]
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed network document: {exc}") from exc
        return cls(layers, weights, biases, mask)

    def to_json(self) -> str:
        # repr-based float formatting round-trips float64 exactly
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> Network:
        return cls.from_dict(json.loads(text))


def networks_equal(a: Network, b: Network) -> bool:
    """Bitwise equality of architecture, parameters and mask."""
    if a.layers != b.layers:
        return False
    pairs = zip(a.weights + a.biases + a.mask, b.weights + b.biases + b.mask)
    return all(np.array_equal(x, y) for x, y in pairs)


@dataclass
class Activations:
    inputs: np.ndarray
    pre: list[np.ndarray]
    post: list[np.ndarray]

    @property
    def output(self) -> np.ndarray:
        return self.post[-1]

    @property
    def logits(self) -> np.ndarray:
        return self.pre[-1]


def forward(net: Network, batch) -> Activations:
    X = np.asarray(batch, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != net.in_dim:
        raise DataError(f"expected batch with {net.in_dim} columns, got shape {X.shape}")
    pre, post = [], []
    a = X
    for spec, w, b in zip(net.layers, net.weights, net.biases):
        z = a @ w.T + b
        a = _activate(spec.activation, z)
        pre.append(z)
        post.append(a)
    return Activations(X, pre, post)


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]


def backward(
    net: Network,
    acts: Activations,
    grad_output,
    l1_weight: float = 0.0,
    l1_layers: Sequence[int] | None = None,
    at: str = "post",
    train_bias: bool = True,
) -> Gradients:
    """Backpropagate a loss gradient given at the output.

    ``at="post"`` means ``grad_output`` is dL/d(output activation); ``"pre"``
    means it is dL/d(output pre-activation). The L1 subgradient
    ``l1_weight * sign(W)`` is added on the layers in ``l1_layers`` (all by
    default). Masked entries always get zero gradient.
    """
    g = np.asarray(grad_output, dtype=float)
    if g.shape != acts.output.shape:
        raise ValueError(f"gradient shape {g.shape} != output shape {acts.output.shape}")
    L = len(net.layers)
    l1_set = set(range(L)) if l1_layers is None else set(l1_layers)
    dW: list = [None] * L
    db: list = [None] * L
    delta = g
    if at == "post":
        spec = net.layers[-1]
        delta = delta * _activation_grad(spec.activation, acts.pre[-1], acts.post[-1])
    elif at != "pre":
        raise ValueError(f"unknown gradient location {at!r}")
    for l in range(L - 1, -1, -1):
        a_prev = acts.inputs if l == 0 else acts.post[l - 1]
        gw = delta.T @ a_prev
        if l1_weight and l in l1_set:
            gw = gw + l1_weight * np.sign(net.weights[l])
        dW[l] = gw * net.mask[l]
        if net.layers[l].has_bias and train_bias:
            db[l] = delta.sum(axis=0)
        else:
            db[l] = np.zeros(net.layers[l].out_dim)
        if l > 0:
            spec = net.layers[l - 1]
            delta = (delta @ net.weights[l]) * _activation_grad(
                spec.activation, acts.pre[l - 1], acts.post[l - 1]
            )
    return Gradients(dW, db)


def objective(
    net: Network,
    X,
    targets,
    criterion: Criterion,
    l1_weight: float = 0.0,
    l1_layers: Sequence[int] | None = None,
    train_bias: bool = True,
):
    """Mean criterion value per sample plus ``l1_weight * ||W||_1``, with gradients."""
    acts = forward(net, X)
    n = acts.inputs.shape[0]
    if criterion.on_logits:
        # mutual information is already a per-sample average
        value, g = criterion(None, acts.logits)
        grads = backward(net, acts, g, l1_weight, l1_layers, at="pre", train_bias=train_bias)
    elif criterion.is_cross_entropy and net.layers[-1].activation == "sigmoid":
        value, _ = criterion(targets, acts.output)
        value /= n
        y = np.asarray(targets, dtype=float)
        # fused sigmoid + cross-entropy: d/dz = f - y
        f = np.clip(acts.output, 1e-7, 1 - 1e-7)
        grads = backward(net, acts, (f - y) / n, l1_weight, l1_layers, at="pre",
                         train_bias=train_bias)
    else:
        value, g = criterion(targets, acts.output)
        value /= n
        grads = backward(net, acts, g / n, l1_weight, l1_layers, at="post",
                         train_bias=train_bias)
    if l1_weight:
        idx = range(len(net.layers)) if l1_layers is None else l1_layers
        value += l1_weight * net.l1_norm(idx)
    return float(value), grads, acts


@dataclass
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 1e-2
    l1_weight: float = 0.0
    l1_layers: tuple[int, ...] | None = None
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int | None = None
    seed: int = 0
    prune_epoch: int | None = None
    fine_tune: bool = True
    bias_mode: str = "learned"

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if self.l1_weight < 0:
            raise ConfigError("l1_weight must be non-negative")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.bias_mode not in BIAS_MODES:
            raise ConfigError(f"unknown bias_mode {self.bias_mode!r}")
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        if self.l1_layers is not None:
            self.l1_layers = tuple(self.l1_layers)
        if self.prune_epoch is not None and self.epochs > 0:
            if not 0 < self.prune_epoch <= self.epochs:
                raise ConfigError("prune_epoch must lie in (0, epochs]")

    @property
    def resolved_prune_epoch(self) -> int:
        if self.prune_epoch is not None:
            return self.prune_epoch
        return max(1, self.epochs // 2)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["l1_layers"] = None if self.l1_layers is None else list(self.l1_layers)
        d["prune_epoch"] = self.resolved_prune_epoch
        return d


@dataclass
class History:
    loss: list[float] = field(default_factory=list)
    accuracy: list[float | None] = field(default_factory=list)
    pruned_at: int | None = None

    def __len__(self):
        return len(self.loss)

    def to_dict(self) -> dict:
        return {"loss": self.loss, "accuracy": self.accuracy, "pruned_at": self.pruned_at}


Pruner = Callable[[Network], object]


def _check_finite(value, grads: Gradients, epoch: int):
    if not np.isfinite(value):
        raise NumericError(f"non-finite loss at epoch {epoch}", epoch=epoch)
    for l, (gw, gb) in enumerate(zip(grads.weights, grads.biases)):
        if not (np.all(np.isfinite(gw)) and np.all(np.isfinite(gb))):
            raise NumericError(
                f"non-finite gradient at epoch {epoch}, layer {l}", epoch=epoch, layer=l
            )


def _accuracy(acts: Activations, targets, criterion: Criterion):
    if criterion.on_logits or targets is None:
        return None
    y = np.asarray(targets) >= 0.5
    return float(((acts.output >= 0.5) == y).mean() * 100.0)


def train(
    net: Network,
    X,
    targets,
    config: TrainConfig,
    criterion: Criterion,
    pruner: Pruner | None = None,
) -> tuple[Network, History]:
    """Full-batch (or mini-batch) training with an optional pruning hook.

    The hook runs once after ``config.resolved_prune_epoch`` epochs when
    ``fine_tune`` is set, otherwise after the final epoch. The input network
    is not modified. Overflow is reported as :class:`NumericError` rather
    than as floating-point warnings.
    """
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return _train(net, X, targets, config, criterion, pruner)


def _train(net, X, targets, config, criterion, pruner):
    net = net.copy()
    X = np.asarray(X, dtype=float)
    Y = None if targets is None else np.asarray(targets, dtype=float)
    if Y is not None and Y.ndim == 1:
        Y = Y[:, None]
    if Y is None and not criterion.on_logits:
        raise ConfigError(f"criterion {criterion.kind} requires targets")
    if Y is not None and not criterion.on_logits and Y.shape != (X.shape[0], net.out_dim):
        raise DataError(f"targets of shape {Y.shape} do not match network outputs {net.out_dim}")

    train_bias = config.bias_mode == "learned"
    if config.bias_mode == "fixed_one":
        for spec, b in zip(net.layers, net.biases):
            if spec.has_bias:
                b[:] = 1.0
    elif config.bias_mode == "none":
        for b in net.biases:
            b[:] = 0.0

    rng = np.random.default_rng(config.seed)
    history = History()
    value, grads, acts = objective(net, X, Y, criterion, config.l1_weight, config.l1_layers, train_bias)
    history.loss.append(value)
    history.accuracy.append(_accuracy(acts, Y, criterion))

    m_w = [np.zeros_like(w) for w in net.weights]
    v_w = [np.zeros_like(w) for w in net.weights]
    m_b = [np.zeros_like(b) for b in net.biases]
    v_b = [np.zeros_like(b) for b in net.biases]
    step = 0
    n = X.shape[0]
    prune_at = config.resolved_prune_epoch if config.fine_tune else config.epochs

    for epoch in range(1, config.epochs + 1):
        if config.batch_size is None or config.batch_size >= n:
            batches = [slice(None)]
        else:
            order = rng.permutation(n)
            batches = [order[i:i + config.batch_size] for i in range(0, n, config.batch_size)]
        for idx in batches:
            yb = None if Y is None else Y[idx]
            value, grads, _ = objective(
                net, X[idx], yb, criterion, config.l1_weight, config.l1_layers, train_bias
            )
            _check_finite(value, grads, epoch)
            step += 1
            for l in range(len(net.layers)):
                gw, gb = grads.weights[l], grads.biases[l]
                if config.optimizer == "sgd":
                    net.weights[l] -= config.learning_rate * gw
                    net.biases[l] -= config.learning_rate * gb
                    continue
                b1, b2 = config.beta1, config.beta2
                m_w[l] = b1 * m_w[l] + (1 - b1) * gw
                v_w[l] = b2 * v_w[l] + (1 - b2) * gw * gw
                m_b[l] = b1 * m_b[l] + (1 - b1) * gb
                v_b[l] = b2 * v_b[l] + (1 - b2) * gb * gb
                c1 = 1 - b1**step
                c2 = 1 - b2**step
                net.weights[l] -= config.learning_rate * (m_w[l] / c1) / (
                    np.sqrt(v_w[l] / c2) + config.adam_eps
                )
                net.biases[l] -= config.learning_rate * (m_b[l] / c1) / (
                    np.sqrt(v_b[l] / c2) + config.adam_eps
                )
            net.apply_mask()
        if pruner is not None and epoch == prune_at:
            pruner(net)
            net.apply_mask()
            for l, m in enumerate(net.mask):
                m_w[l] *= m
                v_w[l] *= m
            history.pruned_at = epoch
            log.debug("pruned at epoch %d, fan-in %s", epoch, net.max_fan_in())
        value, _, acts = objective(net, X, Y, criterion, config.l1_weight, config.l1_layers, train_bias)
        if not np.isfinite(value):
            raise NumericError(f"non-finite loss at epoch {epoch}", epoch=epoch)
        history.loss.append(value)
        history.accuracy.append(_accuracy(acts, Y, criterion))
    return net, history


@dataclass
class AffineCollapse:
    W_hat: np.ndarray
    b_hat: np.ndarray
    anchor_sample: np.ndarray
    output_activation: str = "sigmoid"

    def __call__(self, c) -> np.ndarray:
        z = self.W_hat @ np.asarray(c, dtype=float) + self.b_hat
        return _activate(self.output_activation, z)


def affine_collapse(net: Network, sample) -> AffineCollapse:
    """Reduce a ReLU network to one affine map along the firing path of ``sample``.

    A hidden unit is active iff its pre-activation is strictly positive.
    """
    for spec in net.layers[:-1]:
        if spec.activation != "relu":
            raise ConfigError(
                f"affine collapse needs ReLU hidden layers, found {spec.activation!r}"
            )
    c = np.asarray(sample, dtype=float).reshape(-1)
    acts = forward(net, c)
    W_hat = net.weights[0].copy()
    b_hat = net.biases[0].copy()
    for l in range(1, len(net.layers)):
        active = (acts.pre[l - 1][0] > 0).astype(float)
        DW = net.weights[l] * active[None, :]
        W_hat = DW @ W_hat
        b_hat = DW @ b_hat + net.biases[l]
    return AffineCollapse(W_hat, b_hat, c, net.layers[-1].activation)
