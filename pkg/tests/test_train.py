"""Training loop, metrics, loaders, splits and the synthetic task."""

from __future__ import annotations

import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rrnet.build import BuildConfig
from rrnet.data import (
    TEST, TRAIN, VAL, TaskDataset, gen_synthetic_task, load_filmtrust, load_mapping_task,
    nearest_centroid_accuracy, split_dataset,
)
from rrnet.errors import ConfigError, ContractError, DataError
from rrnet.graph import EdgeList, GraphBundle, NodeTable
from rrnet.model import ModelConfig, forward, init_params
from rrnet.pipeline import build_task_graph, split_metrics, validation_evaluator
from rrnet.runner import tiny_bundle
from rrnet.train import (
    Evaluator, MetricsReport, TrainConfig, eval_mae_rmse, eval_mapping_accuracy,
    rating_from_probability, rating_to_target, train,
)

FAST = dict(momentum=0.9, weight_decay=5e-4, reduction="mean")


def synthetic_graph(n=30, clusters=3, noise=0.1, seed=0):
    ds = split_dataset(gen_synthetic_task(n, clusters, (16, 12), noise, seed), (0.6, 0.2, 0.2), seed)
    return build_task_graph(ds, BuildConfig(5, 2, clusters, "cosine", seed))


def write_filmtrust(tmp_path, users=12, items=9, seed=0):
    rng = np.random.default_rng(seed)
    lines = []
    for u in range(1, users + 1):
        for i in rng.choice(np.arange(1, items + 1), size=4, replace=False):
            lines.append(f"{u} {i} {rng.choice(np.arange(1, 9)) * 0.5}")
    (tmp_path / "ratings.txt").write_text("\n".join(lines) + "\n")
    trust = [f"{u} {u % users + 1} 1" for u in range(1, users + 1)]
    (tmp_path / "trust.txt").write_text("\n".join(trust) + "\n")
    return tmp_path / "ratings.txt", tmp_path / "trust.txt"


class TestMetrics:
    def test_mae_rmse_examples(self):
        assert eval_mae_rmse([1.0, 2.0], [1.0, 2.0]) == (0.0, 0.0)
        mae, rmse = eval_mae_rmse([3, 4], [4, 2])
        assert mae == 1.5 and abs(rmse - math.sqrt(2.5)) < 1e-12

    def test_uniform_shift(self):
        r = np.random.default_rng(0).uniform(0.5, 4, 20)
        mae, rmse = eval_mae_rmse(r + 0.3, r)
        assert abs(mae - 0.3) < 1e-12 and abs(rmse - 0.3) < 1e-12

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.floats(0, 5), st.floats(0, 5)), min_size=1, max_size=40))
    def test_mae_never_exceeds_rmse(self, pairs):
        mae, rmse = eval_mae_rmse([a for a, _ in pairs], [b for _, b in pairs])
        assert mae <= rmse

    def test_mae_rmse_contract(self):
        with pytest.raises(ContractError):
            eval_mae_rmse([], [])
        with pytest.raises(ContractError):
            eval_mae_rmse([1.0], [1.0, 2.0])

    def test_rating_maps(self):
        assert rating_from_probability(0.5, (0.5, 4.0)) == 2.25
        grid = np.arange(1, 9) * 0.5
        y = rating_to_target(grid, (0.5, 4.0))
        np.testing.assert_allclose(y, np.arange(8) / 7, atol=1e-15)
        np.testing.assert_allclose(rating_from_probability(y, (0.5, 4.0)), grid, atol=1e-15)
        with pytest.raises(ConfigError):
            rating_to_target(1.0, (2.0, 2.0))


class TestMappingAccuracy:
    def bundle(self):
        nodes = NodeTable.from_features(np.zeros((4, 1)), np.zeros((3, 1)))
        pairs = [(q, 4 + j) for q in range(4) for j in range(3)]
        return GraphBundle(nodes, inter=EdgeList.from_pairs(pairs))

    def test_peaked_on_truth_is_perfect(self):
        b = self.bundle()
        truth = {0: 4, 1: 6, 2: 5, 3: 4}
        p = np.array([1.0 if truth[s] == r else 0.1 for s, r in b.inter.pairs()])
        assert eval_mapping_accuracy(p, b, truth) == 1.0

    def test_pruned_truth_is_wrong(self):
        b = self.bundle()
        assert eval_mapping_accuracy(np.random.default_rng(0).random(12), b, {0: 99, 1: 98}) == 0.0

    def test_hand_set_probabilities_match_enumeration(self):
        b = self.bundle()
        p = np.random.default_rng(1).random(12)
        truth = {0: 5, 1: 5, 2: 6, 3: 4}
        expected = 0
        for q, t in truth.items():
            cands = [(p[k], r) for k, (s, r) in enumerate(b.inter.pairs()) if s == q]
            expected += max(cands)[1] == t
        assert eval_mapping_accuracy(p, b, truth) == expected / 4

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_invariant_under_monotone_transform(self, seed):
        b = self.bundle()
        rng = np.random.default_rng(seed)
        p = rng.uniform(0.01, 0.99, 12)
        truth = {q: int(rng.integers(4, 7)) for q in range(4)}
        base = eval_mapping_accuracy(p, b, truth)
        assert eval_mapping_accuracy(np.log(p) * 3 + 1, b, truth) == base
        assert eval_mapping_accuracy(p ** 3, b, truth) == base


class TestTrain:
    def test_zero_learning_rate_freezes_parameters(self):
        b = tiny_bundle(0)
        p = init_params(ModelConfig(hidden=4, raw_dims=(4, 3)), 0)
        before = p.state_dict()
        p, rep = train(b, p, TrainConfig(learning_rate=0.0, epochs=5, **FAST))
        assert all(before[k].tobytes() == v.tobytes() for k, v in p.state_dict().items())
        assert len(set(rep.losses)) == 1

    def test_bit_reproducible(self):
        runs = []
        for _ in range(2):
            tg = synthetic_graph(seed=3)
            p = init_params(ModelConfig(hidden=8, raw_dims=(16, 12)), 3)
            p, rep = train(tg.bundle, p, TrainConfig(0.1, epochs=20, **FAST), validation_evaluator(tg))
            runs.append((rep.losses, rep.history, p.state_dict()))
        assert runs[0][0] == runs[1][0] and runs[0][1] == runs[1][1]
        assert all(runs[0][2][k].tobytes() == runs[1][2][k].tobytes() for k in runs[0][2])

    def test_three_clusters_loss_drops_below_a_fifth(self):
        tg = synthetic_graph(30, 3, 0.1, seed=0)
        p = init_params(ModelConfig(hidden=16, raw_dims=(16, 12)), 0)
        _, rep = train(tg.bundle, p, TrainConfig(0.1, epochs=200, **FAST))
        assert rep.losses[-1] < 0.2 * rep.losses[0]

    def test_noiseless_task_loss_drops_below_five_percent(self):
        tg = synthetic_graph(30, 3, 0.0, seed=1)
        p = init_params(ModelConfig(hidden=16, raw_dims=(16, 12)), 1)
        _, rep = train(tg.bundle, p, TrainConfig(0.1, epochs=300, **FAST))
        assert min(rep.losses) < 0.05 * rep.losses[0]

    def test_best_validation_parameters_are_restored(self):
        tg = synthetic_graph(seed=2)
        p = init_params(ModelConfig(hidden=8, raw_dims=(16, 12)), 2)
        ev = validation_evaluator(tg)
        p, rep = train(tg.bundle, p, TrainConfig(0.1, epochs=30, eval_every=5, **FAST), ev)
        assert ev(forward(tg.bundle, p).data) == rep.final["best_val_accuracy"]
        # the last check runs after the final step and is not in the history
        assert rep.final["best_val_accuracy"] >= max(v for _, _, v in rep.history)

    def test_metrics_csv_layout(self, tmp_path):
        rep = MetricsReport(losses=[0.7, 0.5], history=[(0, "val_accuracy", 0.25)],
                            final={"test_accuracy": 1.0})
        rep.write_csv(tmp_path / "m.csv")
        rows = list(csv.reader(open(tmp_path / "m.csv")))
        assert rows == [["epoch", "loss", "metric_name", "metric_value"],
                        ["0", "0.7", "val_accuracy", "0.25"], ["1", "0.5", "", ""],
                        ["final", "", "test_accuracy", "1.0"]]

    @pytest.mark.parametrize("kwargs", [{"epochs": 0}, {"learning_rate": -1.0},
                                        {"eval_every": 0}, {"reduction": "max"}])
    def test_config_checks(self, kwargs):
        with pytest.raises(ConfigError):
            TrainConfig(**kwargs)

    def test_evaluator_direction(self):
        lower = Evaluator("mae", lambda p: 0.0, higher_is_better=False)
        assert lower.better(0.5, 0.7) and not lower.better(0.7, 0.5) and lower.better(1.0, None)


class TestFilmTrustLoader:
    def test_minimal_file(self, tmp_path):
        (tmp_path / "r.txt").write_text("1 1 3.5\n")
        ds = load_filmtrust(tmp_path / "r.txt")
        assert (ds.n1, ds.n2, len(ds)) == (1, 1, 1) and ds.ratings.tolist() == [3.5]

    def test_duplicates_keep_last_and_are_counted(self, tmp_path):
        (tmp_path / "r.txt").write_text("5 10 1.0\n5 11 2.0\n7 10 3.0\n5 10 4.0\n7 10 0.5\n")
        ds = load_filmtrust(tmp_path / "r.txt")
        got = {(int(ds.ids1[u]), int(ds.ids2[i])): r for (u, i), r in zip(ds.records, ds.ratings)}
        assert got == {(5, 10): 4.0, (5, 11): 2.0, (7, 10): 0.5}
        assert ds.info["duplicates"] == 2

    def test_malformed_lines_skipped(self, tmp_path):
        (tmp_path / "r.txt").write_text("1 1 3.5\nbroken\n2 2 9.0\n3 x 1.0\n2 1 1.0\n")
        ds = load_filmtrust(tmp_path / "r.txt")
        assert len(ds) == 2 and ds.info["malformed"] == 3

    def test_reindexing_is_a_bijection(self, tmp_path):
        (tmp_path / "r.txt").write_text("40 7 1.0\n3 90 2.0\n17 7 3.0\n")
        ds = load_filmtrust(tmp_path / "r.txt")
        assert ds.ids1.tolist() == [3, 17, 40] and ds.ids2.tolist() == [7, 90]
        back = [(int(ds.ids1[u]), int(ds.ids2[i])) for u, i in ds.records]
        assert sorted(back) == [(3, 90), (17, 7), (40, 7)]

    def test_trust_pairs_need_known_users(self, tmp_path):
        (tmp_path / "r.txt").write_text("1 1 1.0\n2 1 2.0\n")
        (tmp_path / "t.txt").write_text("1 2 1\n2 1\n1 99 1\n")
        ds = load_filmtrust(tmp_path / "r.txt", tmp_path / "t.txt")
        assert ds.social.tolist() == [[0, 1], [1, 0]] and ds.info["trust_unmatched"] == 1

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="nope.txt"):
            load_filmtrust(tmp_path / "nope.txt")

    def test_empty_file(self, tmp_path):
        (tmp_path / "r.txt").write_text("\n")
        with pytest.raises(DataError):
            load_filmtrust(tmp_path / "r.txt")


class TestSplit:
    def dataset(self, n):
        recs = np.stack([np.arange(n) % 50, np.arange(n) % 40], axis=1)
        return TaskDataset("rating", 50, 40, recs, ratings=np.ones(n), rating_range=(0.5, 4.0))

    def test_filmtrust_sized_split(self):
        ds = split_dataset(self.dataset(35497), (0.8, 0.1, 0.1), seed=0)
        sizes = [len(ds.records_in(w)) for w in (TRAIN, VAL, TEST)]
        assert abs(sizes[0] - 28398) <= 1 and abs(sizes[1] - 3550) <= 1 and abs(sizes[2] - 3549) <= 1
        assert sum(sizes) == 35497

    def test_seeded_and_degenerate(self):
        a = split_dataset(self.dataset(100), (0.8, 0.1, 0.1), seed=4)
        b = split_dataset(self.dataset(100), (0.8, 0.1, 0.1), seed=4)
        assert a.split.tobytes() == b.split.tobytes()
        assert np.all(split_dataset(self.dataset(10), (1, 0, 0)).split == TRAIN)

    def test_bad_fractions(self):
        with pytest.raises(ConfigError):
            split_dataset(self.dataset(10), (0.5, 0.1, 0.1))


class TestSyntheticTask:
    def test_noiseless_with_one_cluster_per_instance(self):
        ds = gen_synthetic_task(n=12, clusters=12, noise=0.0, seed=0)
        assert nearest_centroid_accuracy(ds) == 1.0

    def test_seeded(self):
        a, b = gen_synthetic_task(seed=5), gen_synthetic_task(seed=5)
        for f in ("features1", "features2", "confidence", "records"):
            assert getattr(a, f).tobytes() == getattr(b, f).tobytes()

    def test_nearest_centroid_floor_recorded(self):
        ds = gen_synthetic_task(n=60, clusters=10, noise=0.1, seed=0)
        # brute force over every centre, written independently of the helper
        z, c = ds.info["latent1"], ds.info["centers"]
        hits = sum(int(np.argmin([np.sum((z[i] - c[k]) ** 2) for k in range(10)]) == i % 10)
                   for i in range(60))
        assert nearest_centroid_accuracy(ds) == hits / 60

    def test_true_partner_always_among_top_candidates(self):
        tg = synthetic_graph(100, 10, 0.1, seed=6)
        assert np.all(tg.record_edge >= 0)

    def test_file_round_trip(self, tmp_path):
        ds = gen_synthetic_task(n=20, clusters=4, seed=1)
        for name in ("features1", "features2", "confidence"):
            np.savetxt(tmp_path / f"{name}.csv", getattr(ds, name), delimiter=",", fmt="%.17g")
        (tmp_path / "truth.txt").write_text("".join(f"{i} {j}\n" for i, j in ds.records))
        back = load_mapping_task(*(tmp_path / f for f in ("features1.csv", "features2.csv",
                                                         "confidence.csv", "truth.txt")))
        assert back.features1.tobytes() == ds.features1.tobytes()
        assert back.records.tolist() == ds.records.tolist()


class TestRatingPipeline:
    def test_labels_only_on_training_records(self, tmp_path):
        ds = split_dataset(load_filmtrust(*write_filmtrust(tmp_path)), (0.8, 0.1, 0.1), 0)
        tg = build_task_graph(ds, BuildConfig(seed=0), embedding_dim=8)
        b = tg.bundle
        assert len(b.inter) == ds.n1 * ds.n2 and len(b.intra2) == 0
        assert len(b.intra1) == len(ds.social)
        train_edges = tg.record_edge[ds.records_in(TRAIN)]
        assert sorted(b.labeled_edges().tolist()) == sorted(train_edges.tolist())
        np.testing.assert_allclose(b.labels[train_edges],
                                   rating_to_target(ds.ratings[ds.records_in(TRAIN)], (0.5, 4.0)))

    def test_observed_pairs_builder(self, tmp_path):
        ds = split_dataset(load_filmtrust(*write_filmtrust(tmp_path)), (0.8, 0.1, 0.1), 0)
        tg = build_task_graph(ds, BuildConfig(seed=0), embedding_dim=8, observed_pairs=True)
        assert len(tg.bundle.inter) == len(ds)

    def test_training_improves_validation_error(self, tmp_path):
        ds = split_dataset(load_filmtrust(*write_filmtrust(tmp_path, 20, 10)), (0.8, 0.1, 0.1), 0)
        tg = build_task_graph(ds, BuildConfig(seed=0), embedding_dim=8)
        p = init_params(ModelConfig(hidden=8, n_intra_units=1, n_inter_units=1, raw_dims=(8, 8)), 0)
        p, rep = train(tg.bundle, p, TrainConfig(0.1, epochs=100, **FAST), validation_evaluator(tg))
        first = rep.history[0][2]
        assert rep.final["best_val_mae"] <= first
        m = split_metrics(tg, forward(tg.bundle, p).data, VAL)
        assert m["mae"] <= m["rmse"]
