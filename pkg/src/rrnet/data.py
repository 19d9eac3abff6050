"""Task datasets: FilmTrust-format ratings, feature CSVs, splits, and a synthetic mapping task."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, DataError

log = logging.getLogger(__name__)

TRAIN, VAL, TEST = 0, 1, 2
SPLIT_NAMES = ("train", "val", "test")
FILMTRUST_RANGE = (0.5, 4.0)


@dataclass
class TaskDataset:
    """One cross-modality task.

    ``records`` are ``(i, j)`` index pairs local to each modality: ground-truth
    partners for mapping tasks, rated (user, item) pairs for rating tasks.
    ``split`` assigns each record to TRAIN, VAL or TEST.
    """

    kind: str
    n1: int
    n2: int
    records: np.ndarray
    features1: Optional[np.ndarray] = None
    features2: Optional[np.ndarray] = None
    ratings: Optional[np.ndarray] = None
    rating_range: Optional[tuple[float, float]] = None
    confidence: Optional[np.ndarray] = None
    social: Optional[np.ndarray] = None
    split: Optional[np.ndarray] = None
    ids1: Optional[np.ndarray] = None
    ids2: Optional[np.ndarray] = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("mapping", "rating"):
            raise ConfigError(f"unknown task kind {self.kind!r}")
        self.records = np.asarray(self.records, dtype=np.int64).reshape(-1, 2)
        if self.records.size:
            if (self.records[:, 0].min() < 0 or self.records[:, 0].max() >= self.n1
                    or self.records[:, 1].min() < 0 or self.records[:, 1].max() >= self.n2):
                raise DataError("a ground-truth record points outside the node range")
        if self.kind == "rating":
            if self.ratings is None or len(self.ratings) != len(self.records):
                raise DataError("rating tasks need one rating per record")
            lo, hi = self.rating_range
            if np.any((self.ratings < lo) | (self.ratings > hi)):
                raise DataError(f"ratings outside declared range [{lo}, {hi}]")

    def __len__(self) -> int:
        return len(self.records)

    def records_in(self, which: int) -> np.ndarray:
        if self.split is None:
            raise DataError("dataset has no split assignment")
        return np.flatnonzero(self.split == which)


def _parse_number_lines(path: Path, min_fields: int, max_fields: int):
    rows, malformed = [], 0
    for line in path.read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if not min_fields <= len(parts) <= max_fields:
            malformed += 1
            continue
        try:
            rows.append([float(x) for x in parts])
        except ValueError:
            malformed += 1
    return rows, malformed


def _read(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"cannot read {p}")
    return p


def load_filmtrust(ratings_path, trust_path=None,
                   rating_range: tuple[float, float] = FILMTRUST_RANGE) -> TaskDataset:
    """Read ``user item rating`` and ``user user [weight]`` files.

    Ids are re-indexed contiguously in ascending numeric order. Malformed or
    out-of-range lines are skipped and counted; a repeated (user, item) pair
    keeps its last rating. Trust pairs whose users never rate are dropped.
    """
    lo, hi = rating_range
    if hi <= lo:
        raise ConfigError(f"rating range [{lo}, {hi}] is empty")
    rows, malformed = _parse_number_lines(_read(ratings_path), 3, 3)
    latest: dict[tuple[int, int], float] = {}
    duplicates = 0
    for u, i, r in rows:
        if not (lo <= r <= hi) or u != int(u) or i != int(i):
            malformed += 1
            continue
        key = (int(u), int(i))
        if key in latest:
            duplicates += 1
            del latest[key]  # re-insert so order follows the last occurrence
        latest[key] = r
    if not latest:
        raise DataError(f"{ratings_path}: no valid rating records")
    users = np.array(sorted({u for u, _ in latest}), dtype=np.int64)
    items = np.array(sorted({i for _, i in latest}), dtype=np.int64)
    uix = {int(u): k for k, u in enumerate(users)}
    iix = {int(i): k for k, i in enumerate(items)}
    records = np.array([(uix[u], iix[i]) for u, i in latest], dtype=np.int64)
    ratings = np.array(list(latest.values()), dtype=np.float64)

    social = np.zeros((0, 2), np.int64)
    trust_malformed = trust_unmatched = 0
    if trust_path is not None:
        trows, trust_malformed = _parse_number_lines(_read(trust_path), 2, 3)
        kept = []
        for row in trows:
            a, b = int(row[0]), int(row[1])
            if a in uix and b in uix:
                kept.append((uix[a], uix[b]))
            else:
                trust_unmatched += 1
        if kept:
            social = np.array(kept, dtype=np.int64)
    info = {"users": len(users), "items": len(items), "ratings": len(ratings),
            "social": len(social), "malformed": malformed, "duplicates": duplicates,
            "trust_malformed": trust_malformed, "trust_unmatched": trust_unmatched}
    log.info("loaded %s", info)
    return TaskDataset("rating", len(users), len(items), records, ratings=ratings,
                       rating_range=(lo, hi), social=social, ids1=users, ids2=items, info=info)


def load_feature_csv(path) -> np.ndarray:
    """Headerless CSV, one row per instance."""
    try:
        arr = np.loadtxt(_read(path), delimiter=",", ndmin=2, dtype=np.float64)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc
    if arr.size == 0:
        raise DataError(f"{path}: no rows")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{path}: non-finite values")
    return arr


def load_pairs(path) -> np.ndarray:
    """Whitespace-separated ``u v`` pairs, one per line (extra columns ignored)."""
    rows, malformed = _parse_number_lines(_read(path), 2, 3)
    if malformed:
        log.warning("%s: skipped %d malformed lines", path, malformed)
    return np.array([(int(r[0]), int(r[1])) for r in rows], dtype=np.int64).reshape(-1, 2)


def load_mapping_task(features1, features2, confidence, truth) -> TaskDataset:
    """Feature CSVs per modality, an ``n1 x n2`` confidence CSV, and ``i j`` truth pairs."""
    f1, f2 = load_feature_csv(features1), load_feature_csv(features2)
    conf = load_feature_csv(confidence)
    if conf.shape != (len(f1), len(f2)):
        raise DataError(f"{confidence}: shape {conf.shape}, expected {(len(f1), len(f2))}")
    return TaskDataset("mapping", len(f1), len(f2), load_pairs(truth), features1=f1,
                       features2=f2, confidence=conf)


def split_dataset(ds: TaskDataset, fractions: Sequence[float] = (0.8, 0.1, 0.1),
                  seed: int = 0) -> TaskDataset:
    """Seeded random split: round(f_train*N) train, round(f_val*N) val, the rest test."""
    fr = [float(f) for f in fractions]
    if len(fr) != 3 or any(f < 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9 or fr[0] <= 0:
        raise ConfigError(f"split fractions must be three non-negative values summing to 1 "
                          f"with a positive train share, got {fractions}")
    n = len(ds)
    n_train = int(round(fr[0] * n))
    n_val = min(int(round(fr[1] * n)), n - n_train)
    order = np.random.default_rng(seed).permutation(n)
    split = np.full(n, TEST, dtype=np.int8)
    split[order[:n_train]] = TRAIN
    split[order[n_train:n_train + n_val]] = VAL
    return replace(ds, split=split)


def gen_synthetic_task(n: int = 100, clusters: int = 10, dims: tuple[int, int] = (16, 12),
                       noise: float = 0.1, seed: int = 0, latent_dim: int = 8) -> TaskDataset:
    """Two modalities observed through different random linear maps of shared clusters.

    Instance ``i`` of either modality belongs to cluster ``i % clusters``. The
    first ``clusters`` modality-2 instances are noiseless prototypes; every
    modality-1 instance maps to its cluster's prototype. The confidence matrix
    stands in for a weak baseline: random scores in [0, 1) on prototypes and
    -1 elsewhere, so a top-K with K >= clusters always keeps the true partner.
    """
    if clusters < 1 or clusters > n:
        raise ConfigError(f"need 1 <= clusters <= n, got clusters={clusters}, n={n}")
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(clusters, latent_dim))
    maps = [rng.normal(size=(latent_dim, d)) / np.sqrt(latent_dim) for d in dims]
    c = np.arange(n) % clusters
    z1 = centers[c] + noise * rng.normal(size=(n, latent_dim))
    z2 = centers[c] + noise * rng.normal(size=(n, latent_dim))
    z2[:clusters] = centers
    conf = np.full((n, n), -1.0)
    conf[:, :clusters] = rng.random((n, clusters))
    records = np.stack([np.arange(n), c], axis=1)
    return TaskDataset("mapping", n, n, records, features1=z1 @ maps[0],
                       features2=z2 @ maps[1], confidence=conf,
                       info={"latent1": z1, "centers": centers, "clusters": clusters,
                             "noise": noise})


def nearest_centroid_accuracy(ds: TaskDataset, rows: Optional[np.ndarray] = None) -> float:
    """Accuracy of assigning each latent modality-1 code to its nearest cluster centre."""
    z, centers = ds.info["latent1"], ds.info["centers"]
    recs = ds.records if rows is None else ds.records[rows]
    d = ((z[recs[:, 0], None, :] - centers[None, :, :]) ** 2).sum(-1)
    return float(np.mean(np.argmin(d, axis=1) == recs[:, 1]))
