"""Turn a TaskDataset into a labeled GraphBundle and score predictions on its splits."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .build import (
    BuildConfig, build_full_bipartite, build_knn_intra, build_observed_inter,
    build_social_intra, build_topk_inter, init_uniform_embeddings,
)
from .data import TEST, TRAIN, VAL, TaskDataset
from .errors import DataError
from .graph import EdgeList, GraphBundle, NodeTable
from .train import (
    Evaluator, eval_mae_rmse, eval_mapping_accuracy, rating_from_probability, rating_to_target,
)


@dataclass
class TaskGraph:
    dataset: TaskDataset
    bundle: GraphBundle
    # inter-edge index of every dataset record (-1 when the pair is not a candidate)
    record_edge: np.ndarray

    @property
    def offset2(self) -> int:
        return self.dataset.n1


def _edge_lookup(inter: EdgeList, pairs: np.ndarray, n1: int, n2: int) -> np.ndarray:
    """Inter-edge index for each local ``(i, j)`` pair, -1 when absent."""
    want = pairs[:, 0] * n2 + pairs[:, 1]
    if len(inter) == 0:
        return np.full(len(want), -1, dtype=np.int64)
    keys = inter.senders * n2 + (inter.receivers - n1)
    order = np.argsort(keys, kind="stable")
    sorted_keys = keys[order]
    pos = np.minimum(np.searchsorted(sorted_keys, want), len(keys) - 1)
    hit = sorted_keys[pos] == want
    return np.where(hit, order[pos], -1)


def build_task_graph(ds: TaskDataset, build: BuildConfig, embedding_dim: int = 128,
                     observed_pairs: bool = False, max_inter_edges: Optional[int] = None) -> TaskGraph:
    """Graphs plus training labels for ``ds``.

    Mapping tasks: KNN intra edges, top-K inter edges from the confidence
    matrix, label 1 on the true candidate and 0 on the others for every
    training query. Rating tasks: uniform embeddings, social intra edges on
    users, no item edges, full bipartite (or observed-pair) inter edges, and
    normalised ratings as soft targets on training records only.
    """
    if ds.split is None:
        raise DataError("split the dataset before building graphs")
    n1, n2 = ds.n1, ds.n2
    if ds.kind == "mapping":
        f1, f2 = ds.features1, ds.features2
        intra1 = build_knn_intra(f1, build.k_intra1, build.metric)
        intra2 = build_knn_intra(f2, build.k_intra2, build.metric, offset=n1)
        inter = build_topk_inter(ds.confidence, build.k_inter, 0, n1)
    else:
        f1 = init_uniform_embeddings(n1, embedding_dim, build.seed)
        f2 = init_uniform_embeddings(n2, embedding_dim, build.seed + 1)
        social = ds.social if ds.social is not None else np.zeros((0, 2), np.int64)
        intra1, _ = build_social_intra(map(tuple, social), n=n1)
        intra2 = EdgeList.empty()
        if observed_pairs:
            inter = build_observed_inter(map(tuple, ds.records), 0, n1)
        else:
            kwargs = {} if max_inter_edges is None else {"cap": max_inter_edges}
            inter = build_full_bipartite(n1, n2, 0, n1, **kwargs)
    record_edge = _edge_lookup(inter, ds.records, n1, n2)

    labels = np.zeros(len(inter))
    mask = np.zeros(len(inter), dtype=bool)
    train_rows = ds.records_in(TRAIN)
    if ds.kind == "mapping":
        queries = ds.records[train_rows, 0]
        mask = np.isin(inter.senders, queries)
        hits = record_edge[train_rows]
        labels[hits[hits >= 0]] = 1.0
    else:
        hits = record_edge[train_rows]
        ok = hits >= 0
        labels[hits[ok]] = rating_to_target(ds.ratings[train_rows][ok], ds.rating_range)
        mask[hits[ok]] = True
    bundle = GraphBundle(NodeTable.from_features(f1, f2), intra1, intra2, inter, labels, mask)
    return TaskGraph(ds, bundle, record_edge)


def queries_for(tg: TaskGraph, which: int) -> dict[int, int]:
    rows = tg.dataset.records_in(which)
    recs = tg.dataset.records[rows]
    return {int(i): int(j) + tg.offset2 for i, j in recs}


def rating_predictions(tg: TaskGraph, p: np.ndarray, which: int) -> tuple[np.ndarray, np.ndarray]:
    """Predicted and true ratings for the records of one split that have an inter edge."""
    ds = tg.dataset
    rows = ds.records_in(which)
    edges = tg.record_edge[rows]
    ok = edges >= 0
    if not ok.any():
        raise DataError("no records of this split have a candidate inter edge")
    pred = rating_from_probability(np.asarray(p).reshape(-1)[edges[ok]], ds.rating_range)
    return pred, ds.ratings[rows][ok]


def split_metrics(tg: TaskGraph, p: np.ndarray, which: int = TEST) -> dict[str, float]:
    p = np.asarray(p).reshape(-1)
    if tg.dataset.kind == "mapping":
        return {"accuracy": eval_mapping_accuracy(p, tg.bundle, queries_for(tg, which))}
    mae, rmse = eval_mae_rmse(*rating_predictions(tg, p, which))
    return {"mae": mae, "rmse": rmse}


def validation_evaluator(tg: TaskGraph) -> Optional[Evaluator]:
    """Model-selection metric on the validation split (``None`` if it is empty)."""
    if len(tg.dataset.records_in(VAL)) == 0:
        return None
    if tg.dataset.kind == "mapping":
        q = queries_for(tg, VAL)
        return Evaluator("val_accuracy", lambda p: eval_mapping_accuracy(p, tg.bundle, q), True)
    return Evaluator("val_mae", lambda p: eval_mae_rmse(*rating_predictions(tg, p, VAL))[0], False)
