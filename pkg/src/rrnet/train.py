"""Full-batch training loop and evaluation metrics."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError, ContractError, NumericError
from .graph import GraphBundle
from .model import ModelParams, forward, loss
from .optim import OptimizerState, sgd_step
from .tensor import zero_grads


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 5e-4
    epochs: int = 500
    seed: int = 0
    eval_every: int = 1
    reduction: str = "sum"

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        # zero is allowed here (frozen run); run configs insist on a positive rate
        if not self.learning_rate >= 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.eval_every < 1:
            raise ConfigError(f"eval_every must be >= 1, got {self.eval_every}")
        if self.reduction not in ("sum", "mean"):
            raise ConfigError(f"reduction must be 'sum' or 'mean', got {self.reduction!r}")


@dataclass
class Evaluator:
    """Scores a probability vector over the inter edges; used for model selection."""

    name: str
    fn: Callable[[np.ndarray], float]
    higher_is_better: bool = True

    def __call__(self, p: np.ndarray) -> float:
        return float(self.fn(p))

    def better(self, a: float, b: Optional[float]) -> bool:
        if b is None:
            return True
        return a > b if self.higher_is_better else a < b


@dataclass
class MetricsReport:
    losses: list[float] = field(default_factory=list)
    history: list[tuple[int, str, float]] = field(default_factory=list)
    final: dict[str, float] = field(default_factory=dict)
    best_epoch: Optional[int] = None
    seconds: float = 0.0

    def write_csv(self, path) -> None:
        """Header ``epoch,loss,metric_name,metric_value``: one row per epoch, then final metrics."""
        by_epoch = {e: (name, value) for e, name, value in self.history}
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "loss", "metric_name", "metric_value"])
            for epoch, value in enumerate(self.losses):
                name, metric = by_epoch.get(epoch, ("", None))
                w.writerow([epoch, repr(value), name, "" if metric is None else repr(metric)])
            for name, value in self.final.items():
                w.writerow(["final", "", name, repr(value)])


def train(bundle: GraphBundle, params: ModelParams, cfg: TrainConfig,
          evaluator: Optional[Evaluator] = None,
          log: Optional[Callable[[str], None]] = None) -> tuple[ModelParams, MetricsReport]:
    """Full-batch momentum SGD on the labeled inter edges.

    With an evaluator, the parameters scoring best on it (checked every
    ``eval_every`` epochs and after the last step) are restored at the end.
    The metric at epoch ``t`` scores the parameters *before* step ``t``.
    """
    started = time.perf_counter()
    plist = params.parameters()
    state = OptimizerState.for_params(plist, cfg.learning_rate, cfg.momentum, cfg.weight_decay)
    report = MetricsReport()
    best_value: Optional[float] = None
    best_state = None
    for epoch in range(cfg.epochs):
        zero_grads(plist)
        p = forward(bundle, params)
        value = loss(p, bundle, cfg.reduction)
        lv = value.item()
        if not math.isfinite(lv):
            raise NumericError(f"non-finite loss at epoch {epoch}")
        report.losses.append(lv)
        if evaluator is not None and epoch % cfg.eval_every == 0:
            m = evaluator(p.data.reshape(-1))
            report.history.append((epoch, evaluator.name, m))
            if evaluator.better(m, best_value):
                best_value, best_state, report.best_epoch = m, params.state_dict(), epoch
        value.backward()
        sgd_step(plist, [t.grad for t in plist], state)
        if log is not None:
            log(f"epoch {epoch} loss {lv:.6f}")
    if evaluator is not None:
        m = evaluator(forward(bundle, params).data.reshape(-1))
        if evaluator.better(m, best_value):
            best_value, best_state, report.best_epoch = m, params.state_dict(), cfg.epochs
        params.load_state_dict(best_state)
        report.final[f"best_{evaluator.name}"] = best_value
    zero_grads(plist)
    report.seconds = time.perf_counter() - started
    return params, report


def eval_mapping_accuracy(p, bundle: GraphBundle, queries: dict[int, int]) -> float:
    """Fraction of query nodes whose highest-probability inter edge hits the true partner.

    ``queries`` maps a modality-1 node to its true modality-2 partner (global
    indices). Ties go to the first edge in list order; a query with no
    candidate edges counts as wrong.
    """
    if not queries:
        return 0.0
    p = np.asarray(p.data if hasattr(p, "data") else p, dtype=np.float64).reshape(-1)
    senders, receivers = bundle.inter.senders, bundle.inter.receivers
    order = np.argsort(senders, kind="stable")
    s_sorted = senders[order]
    correct = 0
    for q, truth in queries.items():
        lo, hi = np.searchsorted(s_sorted, [q, q + 1])
        if lo == hi:
            continue
        edges = order[lo:hi]
        best = edges[int(np.argmax(p[edges]))]
        correct += int(receivers[best] == truth)
    return correct / len(queries)


def eval_mae_rmse(predicted, actual) -> tuple[float, float]:
    pred = np.asarray(predicted, dtype=np.float64).reshape(-1)
    true = np.asarray(actual, dtype=np.float64).reshape(-1)
    if pred.size != true.size:
        raise ContractError(f"{pred.size} predictions for {true.size} ratings")
    if pred.size == 0:
        raise ContractError("MAE/RMSE need at least one rating")
    err = pred - true
    mae = float(np.mean(np.abs(err)))
    rmse = float(np.sqrt(np.mean(err ** 2)))
    # RMSE >= MAE holds exactly; only round-off can flip it when all errors are equal
    return mae, max(rmse, mae)


def _check_range(rating_range: Sequence[float]) -> tuple[float, float]:
    lo, hi = float(rating_range[0]), float(rating_range[1])
    if hi <= lo:
        raise ConfigError(f"rating range [{lo}, {hi}] is empty")
    return lo, hi


def rating_from_probability(p, rating_range: Sequence[float]):
    lo, hi = _check_range(rating_range)
    return lo + np.asarray(p, dtype=np.float64) * (hi - lo)


def rating_to_target(r, rating_range: Sequence[float]):
    lo, hi = _check_range(rating_range)
    return (np.asarray(r, dtype=np.float64) - lo) / (hi - lo)
