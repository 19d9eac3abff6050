"""Graph data model: node table, edge lists, bundle validation, edge-list files."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rrnet.errors import BoundsError, FormatError, StateError
from rrnet.graph import (
    EdgeList, GraphBundle, NodeTable, degrees, incident_edges, init_edge_attrs, permute_nodes,
    read_edge_list, validate, write_edge_list,
)


def small_bundle(rng: np.random.Generator, n1: int = 3, n2: int = 2, d: int = 2) -> GraphBundle:
    nodes = NodeTable.from_features(rng.normal(size=(n1, d)), rng.normal(size=(n2, d)))
    intra1 = EdgeList.from_pairs([(a, b) for a in range(n1) for b in range(n1)
                                  if a != b and rng.random() < 0.5] or [(0, 1)])
    intra2 = EdgeList.from_pairs([(n1, n1 + 1)]) if n2 > 1 else EdgeList.empty()
    inter = EdgeList.from_pairs([(a, n1 + b) for a in range(n1) for b in range(n2)])
    return GraphBundle(nodes, intra1, intra2, inter)


class TestNodeTable:
    def test_from_features_orders_modalities(self):
        nodes = NodeTable.from_features(np.zeros((2, 3)), np.ones((3, 1)))
        assert nodes.n == 5
        assert nodes.modality.tolist() == [1, 1, 2, 2, 2]
        assert nodes.local_index().tolist() == [0, 1, 0, 1, 2]

    def test_raw_reads_interleaved_table(self):
        nodes = NodeTable(np.array([2, 1, 2]), {1: np.array([[7.0]]), 2: np.array([[1.0], [2.0]])})
        assert [nodes.raw(i)[0] for i in range(3)] == [1.0, 7.0, 2.0]
        with pytest.raises(BoundsError):
            nodes.raw(3)

    def test_missing_attributes_is_state_error(self):
        nodes = NodeTable(np.array([1, 2]), {1: np.zeros((1, 2))})
        with pytest.raises(StateError):
            nodes.raw(1)


class TestInitEdgeAttrs:
    def test_hand_example(self):
        nodes = NodeTable(np.array([1, 1]), {1: np.array([[1.0, 2.0], [3.0, 4.0]]),
                                             2: np.zeros((0, 2))})
        b = init_edge_attrs(GraphBundle(nodes, EdgeList.from_pairs([(0, 1)])))
        assert b.intra1.attrs.tolist() == [[1.0, 2.0, 3.0, 4.0]]

    def test_zero_nodes_give_zero_edges(self):
        rng = np.random.default_rng(0)
        b = small_bundle(rng)
        b = GraphBundle(NodeTable.from_features(np.zeros((3, 2)), np.zeros((2, 2))),
                        b.intra1, b.intra2, b.inter)
        out = init_edge_attrs(b)
        for role in ("intra1", "intra2", "inter"):
            assert not out.edges(role).attrs.any()

    def test_matches_concatenation_loop_and_splits_back(self):
        rng = np.random.default_rng(1)
        b = small_bundle(rng, 3, 2, 3)
        out = init_edge_attrs(b)
        for role in ("intra1", "intra2", "inter"):
            e = out.edges(role)
            for k, (s, r) in enumerate(e.pairs()):
                ref = list(b.nodes.raw(s)) + list(b.nodes.raw(r))
                assert e.attrs[k].tolist() == ref
                np.testing.assert_array_equal(e.attrs[k, :3], b.nodes.raw(s))
                np.testing.assert_array_equal(e.attrs[k, 3:], b.nodes.raw(r))

    def test_deterministic_and_idempotent(self):
        b = small_bundle(np.random.default_rng(2))
        once = init_edge_attrs(b)
        twice = init_edge_attrs(once)
        for role in ("intra1", "intra2", "inter"):
            np.testing.assert_array_equal(once.edges(role).attrs, twice.edges(role).attrs)

    def test_requires_node_attributes(self):
        nodes = NodeTable(np.array([1, 2]), {1: np.zeros((1, 1))})
        with pytest.raises(StateError):
            init_edge_attrs(GraphBundle(nodes, inter=EdgeList.from_pairs([(0, 1)])))


class TestIncidentEdges:
    def test_star_centre_and_isolated_node(self):
        nodes = NodeTable(np.ones(5, np.int8), {1: np.zeros((5, 1)), 2: np.zeros((0, 1))})
        star = EdgeList.from_pairs([(0, 1), (2, 0), (0, 3)])
        b = GraphBundle(nodes, star)
        assert incident_edges(b, 0, "intra1") == [0, 1, 2]
        assert incident_edges(b, 4, "intra1") == []
        with pytest.raises(BoundsError):
            incident_edges(b, 5, "intra1")

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000))
    def test_matches_scan_and_covers_each_edge_twice(self, seed):
        rng = np.random.default_rng(seed)
        nodes = NodeTable(np.ones(6, np.int8), {1: np.zeros((6, 1)), 2: np.zeros((0, 1))})
        pairs = [(a, b) for a in range(6) for b in range(6) if a != b and rng.random() < 0.3]
        b = GraphBundle(nodes, EdgeList.from_pairs(pairs) if pairs else EdgeList.empty())
        hits = []
        for u in range(6):
            scan = [k for k, (s, r) in enumerate(pairs) if s == u or r == u]
            assert incident_edges(b, u, "intra1") == scan
            assert degrees(b, "intra1")[u] == len(scan)
            hits += scan
        assert sorted(hits) == sorted(list(range(len(pairs))) * 2)


class TestValidate:
    def test_well_formed_bundle(self):
        assert validate(small_bundle(np.random.default_rng(3))) == []

    def test_inter_edge_inside_modality_one(self):
        b = small_bundle(np.random.default_rng(4))
        bad = GraphBundle(b.nodes, b.intra1, b.intra2, EdgeList.from_pairs([(0, 1)]))
        assert [v.code for v in validate(bad)] == ["inter-modality"]

    def test_duplicate_intra_edge(self):
        b = small_bundle(np.random.default_rng(5))
        bad = GraphBundle(b.nodes, EdgeList.from_pairs([(0, 1), (0, 1)]), b.intra2, b.inter)
        assert [v.code for v in validate(bad)] == ["duplicate-edge"]

    @pytest.mark.parametrize("change,code", [
        (lambda b: GraphBundle(b.nodes, EdgeList.from_pairs([(1, 1)]), b.intra2, b.inter),
         "self-loop"),
        (lambda b: GraphBundle(b.nodes, EdgeList.from_pairs([(0, 9)]), b.intra2, b.inter),
         "index-range"),
        (lambda b: GraphBundle(b.nodes, EdgeList.from_pairs([(0, 3)]), b.intra2, b.inter),
         "intra-modality"),
        (lambda b: b.with_labels(np.zeros(len(b.inter) + 1)), "label-length"),
        (lambda b: b.with_labels(np.full(len(b.inter), 1.5)), "label-range"),
        (lambda b: GraphBundle(b.nodes, EdgeList(b.intra1.senders, b.intra1.receivers,
                                                 np.zeros((len(b.intra1) + 1, 2))),
                               b.intra2, b.inter), "attr-shape"),
    ])
    def test_each_invariant_has_a_named_violation(self, change, code):
        b = change(small_bundle(np.random.default_rng(6)))
        assert code in [v.code for v in validate(b)]


class TestEdgeListFiles:
    def test_round_trip(self, tmp_path):
        e = EdgeList.from_pairs([(0, 3), (2, 1), (4, 0)])
        write_edge_list(tmp_path / "e.tsv", e, "inter")
        assert (tmp_path / "e.tsv").read_text().splitlines()[0] == "# role: inter"
        role, back = read_edge_list(tmp_path / "e.tsv")
        assert role == "inter" and back.pairs() == e.pairs()

    def test_empty_round_trip(self, tmp_path):
        write_edge_list(tmp_path / "e.tsv", EdgeList.empty(), "intra2")
        role, back = read_edge_list(tmp_path / "e.tsv")
        assert role == "intra2" and len(back) == 0

    @pytest.mark.parametrize("text", ["0\t1\n", "# role: sideways\n0\t1\n",
                                      "# role: intra1\n0 1 2\n"])
    def test_malformed_files(self, tmp_path, text):
        (tmp_path / "e.tsv").write_text(text)
        with pytest.raises(FormatError):
            read_edge_list(tmp_path / "e.tsv")


class TestPermuteNodes:
    def test_relabelled_bundle_stays_valid_and_keeps_raw_rows(self):
        rng = np.random.default_rng(7)
        b = small_bundle(rng)
        perm = rng.permutation(b.nodes.n)
        pb = permute_nodes(b, perm)
        assert validate(pb) == []
        for i in range(b.nodes.n):
            np.testing.assert_array_equal(pb.nodes.raw(perm[i]), b.nodes.raw(i))
        assert pb.inter.pairs() == [(perm[s], perm[r]) for s, r in b.inter.pairs()]
