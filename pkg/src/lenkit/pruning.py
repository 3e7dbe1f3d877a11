"""Node-level, network-level and example-level pruning.

Ties are always broken in favour of the lower input index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .network import Network, affine_collapse


def _top_indices(scores: np.ndarray, k: int) -> np.ndarray:
    # stable sort on negated score keeps lower indices first among ties
    return np.argsort(-scores, kind="stable")[:k]


def prune_node_level(net: Network, zeta: int) -> list[np.ndarray]:
    """Keep at most ``zeta`` incoming connections (largest |w|) per neuron.

    Layers whose input size does not exceed ``zeta`` are left untouched.
    Mutates and returns ``net.mask``.
    """
    if zeta < 1:
        raise ConfigError("fan-in zeta must be at least 1")
    for l, (w, m) in enumerate(zip(net.weights, net.mask)):
        if zeta >= w.shape[1]:
            continue
        new = np.zeros_like(m)
        for j in range(w.shape[0]):
            scores = np.where(m[j], np.abs(w[j]), -1.0)
            keep = _top_indices(scores, zeta)
            keep = keep[m[j, keep]]
            new[j, keep] = True
        net.mask[l] = new
    net.apply_mask()
    return net.mask


@dataclass
class NetworkPruning:
    mask: list[np.ndarray]
    retained: tuple[int, ...]
    scores: np.ndarray
    degenerate: bool = False


def concept_scores(net: Network) -> np.ndarray:
    """Normalized importance of each input concept (L2 norm of its first-layer column over the max)."""
    norms = np.linalg.norm(net.weights[0] * net.mask[0], axis=0)
    top = norms.max()
    return norms / top if top > 0 else np.zeros_like(norms)


def prune_network_level(
    net: Network, mode: str = "threshold", tau: float = 0.5, zeta: int | None = None
) -> NetworkPruning:
    """Mask whole first-layer columns of unimportant concepts.

    ``mode="threshold"`` keeps concepts with normalized score >= ``tau``;
    ``mode="top_k"`` keeps the ``zeta`` highest-scoring ones. If nothing
    would survive, the single best concept is kept and ``degenerate`` is set.
    """
    scores = concept_scores(net)
    k = len(scores)
    if mode == "threshold":
        if not 0 < tau <= 1:
            raise ConfigError("tau must lie in (0, 1]")
        keep = [j for j in range(k) if scores[j] >= tau]
    elif mode == "top_k":
        if zeta is None or zeta < 1:
            raise ConfigError("top_k network pruning needs zeta >= 1")
        keep = sorted(int(j) for j in _top_indices(scores, zeta) if scores[j] > 0)
    else:
        raise ConfigError(f"unknown network pruning mode {mode!r}")
    degenerate = not keep
    if degenerate:
        keep = [int(_top_indices(scores, 1)[0])]
    dropped = np.ones(k, dtype=bool)
    dropped[keep] = False
    net.mask[0][:, dropped] = False
    net.apply_mask()
    return NetworkPruning(net.mask, tuple(keep), scores, degenerate)


def example_importance(net: Network, sample) -> np.ndarray:
    """|W_hat| of the sample's affine collapse, shape (outputs, concepts)."""
    return np.abs(affine_collapse(net, sample).W_hat)


def prune_example_level(
    net: Network,
    sample,
    zeta: int | None = None,
    tau: float | None = None,
) -> list[tuple[int, ...]]:
    """Concepts kept for one sample, per output, ordered by decreasing importance.

    Either ``zeta`` (top-k) or ``tau`` (threshold on the row-normalized
    importance) must be given. The network is not modified.
    """
    imp = example_importance(net, sample)
    k = imp.shape[1]
    out = []
    for row in imp:
        if zeta is not None:
            if zeta < 1:
                raise ConfigError("zeta must be at least 1")
            keep = _top_indices(row, min(zeta, k))
        elif tau is not None:
            top = row.max()
            norm = row / top if top > 0 else np.zeros_like(row)
            keep = [j for j in _top_indices(row, k) if norm[j] >= tau]
        else:
            raise ConfigError("example-level pruning needs zeta or tau")
        out.append(tuple(int(j) for j in keep))
    return out


def reachable_inputs(net: Network, output_index: int) -> tuple[int, ...]:
    """Input concepts connected to ``output_index`` through unmasked weights."""
    live = np.zeros(net.out_dim, dtype=bool)
    live[output_index] = True
    for m in reversed(net.mask):
        live = m[live].any(axis=0)
    return tuple(int(j) for j in np.nonzero(live)[0])
