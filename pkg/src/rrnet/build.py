"""Graph constructors: KNN and social intra edges, top-K and bipartite inter edges."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import ConfigError, NumericError, ResourceError
from .graph import EdgeList

log = logging.getLogger(__name__)

METRICS = ("cosine", "euclidean")
MAX_BIPARTITE_EDGES = 8_000_000


@dataclass
class BuildConfig:
    k_intra1: int = 5
    k_intra2: int = 2
    k_inter: int = 10
    metric: str = "cosine"
    seed: int = 0

    def __post_init__(self):
        for name in ("k_intra1", "k_intra2", "k_inter"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.metric not in METRICS:
            raise ConfigError(f"metric must be one of {METRICS}, got {self.metric!r}")


# neighbour counts (modality 1, modality 2) and candidate count per task
PRESETS = {
    "esc10": BuildConfig(k_intra1=5, k_intra2=2, k_inter=10),
    "esc50": BuildConfig(k_intra1=10, k_intra2=2, k_inter=20),
    "cifar10": BuildConfig(k_intra1=10, k_intra2=2, k_inter=10),
    "cifar100": BuildConfig(k_intra1=20, k_intra2=3, k_inter=15),
}


def _distances(x: np.ndarray, rows: slice, metric: str, unit: np.ndarray | None) -> np.ndarray:
    if metric == "cosine":
        return 1.0 - unit[rows] @ unit.T
    sq = np.einsum("ij,ij->i", x, x)
    d = sq[rows, None] + sq[None, :] - 2.0 * (x[rows] @ x.T)
    return np.maximum(d, 0.0)


def build_knn_intra(features, k: int, metric: str = "cosine", offset: int = 0,
                    block: int = 1024) -> EdgeList:
    """Edges ``j -> i`` from each node's ``k`` nearest neighbours ``j != i``.

    Ties in distance go to the lower index. Edges are grouped by receiver in
    ascending order, neighbours nearest first.
    """
    x = np.asarray(features, dtype=np.float64)
    n = x.shape[0]
    if metric not in METRICS:
        raise ConfigError(f"metric must be one of {METRICS}, got {metric!r}")
    if k < 0 or k >= n:
        raise ConfigError(f"k={k} neighbours requested for {n} points (need 0 <= k < n)")
    if k == 0:
        return EdgeList.empty()
    unit = None
    if metric == "cosine":
        norms = np.linalg.norm(x, axis=1)
        zero = np.flatnonzero(norms == 0)
        if zero.size:
            raise NumericError(f"row {int(zero[0])} has zero norm; cosine distance undefined")
        unit = x / norms[:, None]
    senders, receivers = [], []
    cols = np.arange(n)
    for start in range(0, n, block):
        stop = min(start + block, n)
        d = _distances(x, slice(start, stop), metric, unit)
        for r in range(stop - start):
            i = start + r
            row = d[r].copy()
            row[i] = np.inf
            # lexsort keys: last is primary
            order = np.lexsort((cols, row))[:k]
            senders.append(order)
            receivers.append(np.full(k, i))
    return EdgeList(np.concatenate(senders) + offset, np.concatenate(receivers) + offset)


def topk_indices(confidence, K: int) -> np.ndarray:
    """Per row, the ``K`` columns of highest confidence (ties to the lower column)."""
    conf = np.asarray(confidence, dtype=np.float64)
    n1, n2 = conf.shape
    if K < 0 or K > n2:
        raise ConfigError(f"K={K} candidates requested but only {n2} modality-2 nodes")
    cols = np.arange(n2)
    return np.stack([np.lexsort((cols, -conf[i]))[:K] for i in range(n1)]) if n1 else \
        np.zeros((0, K), np.int64)


def build_topk_inter(confidence, K: int, offset1: int = 0, offset2: int = 0) -> EdgeList:
    """``K`` inter edges ``i -> j`` per modality-1 node, highest confidence first."""
    top = topk_indices(confidence, K)
    n1 = top.shape[0]
    return EdgeList(np.repeat(np.arange(n1), K) + offset1, top.reshape(-1) + offset2)


def build_social_intra(pairs: Iterable[tuple[int, int]], n: int | None = None,
                       offset: int = 0) -> tuple[EdgeList, int]:
    """One directed edge per distinct listed pair; self-pairs are dropped.

    Returns the edges and the number of rejected self-pairs.
    """
    seen: set[tuple[int, int]] = set()
    kept: list[tuple[int, int]] = []
    rejected = 0
    for u, v in pairs:
        u, v = int(u), int(v)
        if n is not None and not (0 <= u < n and 0 <= v < n):
            raise ConfigError(f"social pair ({u}, {v}) outside [0, {n})")
        if u == v:
            rejected += 1
            continue
        if (u, v) not in seen:
            seen.add((u, v))
            kept.append((u, v))
    if rejected:
        log.warning("dropped %d self-referencing social pairs", rejected)
    if not kept:
        return EdgeList.empty(), rejected
    return EdgeList.from_pairs(kept).shifted(offset), rejected


def build_full_bipartite(n1: int, n2: int, offset1: int = 0, offset2: int = 0,
                         cap: int = MAX_BIPARTITE_EDGES) -> EdgeList:
    """All ``n1 * n2`` pairs in row-major order."""
    if n1 * n2 > cap:
        raise ResourceError(
            f"{n1}x{n2} = {n1 * n2} inter edges exceeds the cap of {cap}; "
            "use build_topk_inter to prune candidates")
    s = np.repeat(np.arange(n1), n2) + offset1
    r = np.tile(np.arange(n2), n1) + offset2
    return EdgeList(s, r)


def build_observed_inter(pairs: Iterable[tuple[int, int]], offset1: int = 0,
                         offset2: int = 0) -> EdgeList:
    """Inter edges for exactly the observed (user, item) pairs, first occurrence order."""
    seen: dict[tuple[int, int], None] = {}
    for u, v in pairs:
        seen.setdefault((int(u), int(v)), None)
    if not seen:
        return EdgeList.empty()
    return EdgeList.from_pairs(seen.keys()).shifted(offset1, offset2)


def init_uniform_embeddings(n: int, dim: int, seed: int) -> np.ndarray:
    if n <= 0 or dim <= 0:
        raise ConfigError(f"embedding shape must be positive, got {n}x{dim}")
    return np.random.default_rng(seed).random((n, dim))
