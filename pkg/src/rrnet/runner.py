"""End-to-end runs driven by a RunConfig: data, graphs, training, outputs."""

from __future__ import annotations

import csv
import dataclasses
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .config import RunConfig, to_lines
from .data import (
    TEST, TaskDataset, gen_synthetic_task, load_filmtrust, load_mapping_task, split_dataset,
)
from .build import build_knn_intra, build_topk_inter
from .gradcheck import GradcheckReport, gradcheck
from .graph import GraphBundle, NodeTable
from .model import ModelConfig, ModelParams, forward, init_params, load_params, loss, save_params
from .pipeline import TaskGraph, build_task_graph, split_metrics, validation_evaluator
from .train import MetricsReport, train

log = logging.getLogger(__name__)


@dataclass
class RunResult:
    graph: TaskGraph
    params: ModelParams
    report: MetricsReport
    test: dict[str, float]


def load_task(cfg: RunConfig) -> TaskDataset:
    d = cfg.data
    if cfg.kind == "rating":
        ds = load_filmtrust(d.ratings, d.trust or None, (d.rating_min, d.rating_max))
    elif cfg.uses_files:
        ds = load_mapping_task(d.features1, d.features2, d.confidence, d.truth)
    else:
        s = cfg.synth
        ds = gen_synthetic_task(s.n, s.clusters, (s.dim1, s.dim2), s.noise, s.seed, s.latent_dim)
    return split_dataset(ds, d.split, d.split_seed)


def model_config(cfg: RunConfig, ds: TaskDataset) -> ModelConfig:
    if ds.kind == "rating":
        dims = (cfg.data.embedding_dim, cfg.data.embedding_dim)
    else:
        dims = (ds.features1.shape[1], ds.features2.shape[1])
    return dataclasses.replace(cfg.model, raw_dims=dims)


def prepare(cfg: RunConfig) -> TaskGraph:
    cfg.check_paths()
    ds = load_task(cfg)
    return build_task_graph(ds, cfg.build, cfg.data.embedding_dim, cfg.data.observed_pairs,
                            cfg.data.max_inter_edges)


def run_once(cfg: RunConfig, out_dir: Optional[Path] = None) -> RunResult:
    """Train once; with ``out_dir`` also write metrics.csv, checkpoint.bin and manifest.txt."""
    tg = prepare(cfg)
    mcfg = model_config(cfg, tg.dataset)
    params = init_params(mcfg, cfg.train.seed)
    params, report = train(tg.bundle, params, cfg.train, validation_evaluator(tg),
                           log=lambda msg: log.debug(msg))
    p = forward(tg.bundle, params).data
    test = split_metrics(tg, p, TEST)
    for name, value in test.items():
        report.final[f"test_{name}"] = value
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        report.write_csv(out_dir / "metrics.csv")
        save_params(params, out_dir / "checkpoint.bin")
        write_manifest(cfg, out_dir / "manifest.txt")
    return RunResult(tg, params, report, test)


def write_manifest(cfg: RunConfig, path: Path) -> None:
    path.write_text("\n".join(to_lines(cfg)) + "\n")


def seeded(cfg: RunConfig, seed: int) -> RunConfig:
    """Same config with every seed set to ``seed``."""
    return dataclasses.replace(
        cfg,
        build=dataclasses.replace(cfg.build, seed=seed),
        train=dataclasses.replace(cfg.train, seed=seed),
        data=dataclasses.replace(cfg.data, split_seed=seed),
        synth=dataclasses.replace(cfg.synth, seed=seed),
    )


def run_repeats(cfg: RunConfig, out_dir: Path) -> dict[str, tuple[float, float]]:
    """``cfg.repeats`` runs with seeds ``s, s+1, ...``; returns mean and std per test metric."""
    if cfg.repeats == 1:
        result = run_once(cfg, out_dir)
        return {k: (v, 0.0) for k, v in result.test.items()}
    base = cfg.train.seed
    rows = []
    for r in range(cfg.repeats):
        result = run_once(seeded(cfg, base + r), out_dir / f"run{r}")
        rows.append(result.test)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_manifest(cfg, out_dir / "manifest.txt")
    summary = {k: (float(np.mean([row[k] for row in rows])), float(np.std([row[k] for row in rows])))
               for k in rows[0]}
    with open(out_dir / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "mean", "std"])
        for k, (m, s) in summary.items():
            w.writerow([k, repr(m), repr(s)])
    return summary


def evaluate_checkpoint(cfg: RunConfig, checkpoint) -> dict[str, float]:
    tg = prepare(cfg)
    params = load_params(checkpoint, model_config(cfg, tg.dataset))
    return split_metrics(tg, forward(tg.bundle, params).data, TEST)


def tiny_bundle(seed: int = 0, n: int = 6, dims: tuple[int, int] = (4, 3), k_intra: int = 2,
                k_inter: int = 2) -> GraphBundle:
    """Small random labeled bundle for gradient checks."""
    rng = np.random.default_rng(seed)
    f1, f2 = rng.uniform(-1, 1, (n, dims[0])), rng.uniform(-1, 1, (n, dims[1]))
    bundle = GraphBundle(NodeTable.from_features(f1, f2),
                         build_knn_intra(f1, k_intra, "euclidean"),
                         build_knn_intra(f2, k_intra, "euclidean", offset=n),
                         build_topk_inter(rng.random((n, n)), k_inter, 0, n))
    return bundle.with_labels(rng.integers(0, 2, len(bundle.inter)).astype(float))


def run_gradcheck(seed: int = 0, hidden: int = 8, n_intra: int = 1, n_inter: int = 1,
                  tolerance: float = 1e-4) -> GradcheckReport:
    bundle = tiny_bundle(seed)
    params = init_params(ModelConfig(hidden, n_intra, n_inter, 1, (4, 3)), seed)
    return gradcheck(lambda: loss(forward(bundle, params), bundle), params.parameters(),
                     tolerance=tolerance)
