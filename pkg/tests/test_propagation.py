import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from watershed_classifier import (
    ConfigError,
    PointSet,
    classify_one,
    cross_edge_count,
    margin,
    mst,
    propagate,
    shatter_check,
)
from watershed_classifier.core import pairwise_sq
from oracles import (
    brute_force_max_margin,
    double_loop_margin,
    kruskal_mst_weight,
    linear_scan_nn,
    paired_targets,
)


def seeded_points(coords, seeds):
    labels = np.full(len(coords), -1, dtype=np.int64)
    for pid, c in seeds:
        labels[pid] = c
    return PointSet(np.asarray(coords, dtype=float), labels)


def distinct_random_coords(gen, n, d=2):
    while True:
        coords = gen.uniform(0.0, 1.0, size=(n, d))
        up = pairwise_sq(coords)[np.triu_indices(n, 1)]
        if np.unique(up).size == up.size:
            return coords


class TestPropagate:
    def test_nearer_seed_wins(self):
        ps = seeded_points([[0.0], [10.0], [4.0]], [(0, 0), (1, 1)])
        res = propagate(ps)
        assert res.labels.tolist() == [0, 1, 0]
        assert len(res.order) == 1

    def test_chain_splits_at_widest_gap(self):
        # two tight groups joined by a chain; gaps 0.4/0.5/1.0/0.5/0.4, so
        # the maximum-margin labeling cuts the middle gap with margin 1.0,
        # beating the 0.5-gap alternatives
        coords = [[0.0], [0.4], [0.9], [1.9], [2.4], [2.8]]
        res = propagate(seeded_points(coords, [(0, 0), (5, 1)]))
        assert res.labels.tolist() == [0, 0, 0, 1, 1, 1]
        assert res.margin == pytest.approx(1.0, abs=1e-6)

    def test_matches_exhaustive_max_margin_on_20_points(self):
        gen = np.random.default_rng(101)
        coords = distinct_random_coords(gen, 20)
        seed_labels = np.full(20, -1, dtype=np.int64)
        seed_labels[4] = 0
        seed_labels[15] = 1
        res = propagate(PointSet(coords, seed_labels))
        oracle_margin, _ = brute_force_max_margin(coords, seed_labels, 2)
        assert res.margin == pytest.approx(oracle_margin, rel=1e-12)

    def test_margin_field_matches_recomputation(self):
        gen = np.random.default_rng(5)
        coords = distinct_random_coords(gen, 12)
        ps = seeded_points(coords, [(0, 0), (7, 1), (3, 2)])
        res = propagate(ps)
        assert res.margin == margin(ps, res.labels)

    def test_order_replay_and_minimality(self):
        gen = np.random.default_rng(6)
        coords = distinct_random_coords(gen, 15)
        ps = seeded_points(coords, [(1, 0), (8, 1)])
        res = propagate(ps)
        assert len(res.order) == 15 - 2
        # replay: each point attaches to an already-labeled source with the
        # same final label, and its weight is minimal over the frontier
        labeled = {1, 8}
        dmat = np.sqrt(pairwise_sq(coords) + 1e-12)
        for pid, src, w in res.order:
            assert src in labeled
            assert res.labels[pid] == res.labels[src]
            frontier_min = min(
                dmat[i, j] for i in range(15) if i not in labeled for j in labeled
            )
            assert w == pytest.approx(frontier_min, rel=1e-12)
            labeled.add(pid)
        replayed = {i: int(ps.labels[i]) for i in (1, 8)}
        for pid, src, _ in res.order:
            replayed[pid] = replayed[src]
        assert [replayed[i] for i in range(15)] == res.labels.tolist()

    def test_deterministic(self):
        gen = np.random.default_rng(7)
        coords = gen.uniform(size=(30, 3))
        ps = seeded_points(coords, [(0, 0), (29, 1)])
        a, b = propagate(ps), propagate(ps)
        assert np.array_equal(a.labels, b.labels)
        assert a.order == b.order

    def test_missing_class_seed_rejected(self):
        ps = seeded_points([[0.0], [1.0], [2.0]], [(0, 0)])
        with pytest.raises(ConfigError, match="class 1"):
            propagate(ps, n_classes=2)

    def test_empty_rejected(self):
        with pytest.raises(ConfigError):
            propagate(PointSet(np.zeros((0, 2)), np.zeros(0, dtype=int)))


class TestMargin:
    def test_collinear(self):
        ps = PointSet(np.array([[0.0], [1.0], [3.0]]), np.array([0, 0, 1]))
        assert margin(ps) == pytest.approx(2.0, abs=1e-6)

    def test_single_class_returns_infinity(self):
        ps = PointSet(np.array([[0.0], [1.0]]), np.array([0, 0]))
        assert margin(ps) == math.inf

    def test_matches_double_loop_oracle(self):
        gen = np.random.default_rng(8)
        coords = gen.normal(size=(10, 2))
        labels = gen.integers(0, 3, size=10)
        labels[:3] = [0, 1, 2]
        assert margin(coords, labels) == pytest.approx(
            double_loop_margin(coords, labels), rel=1e-12
        )

    def test_requires_full_labeling(self):
        ps = PointSet(np.zeros((2, 1)), np.array([0, -1]))
        with pytest.raises(ConfigError):
            margin(ps)


class TestClassifyOne:
    def test_nearest_wins(self):
        ref = PointSet(np.array([[0.0], [1.0]]), np.array([0, 1]))
        assert classify_one([0.9], ref) == 1

    def test_tie_breaks_to_smaller_id(self):
        coords = np.full((8, 2), 10.0)
        coords[3] = (1.0, 0.0)
        coords[7] = (-1.0, 0.0)
        labels = np.array([1, 1, 1, 0, 1, 1, 1, 1])
        ref = PointSet(coords, labels)
        # the origin is equidistant to ids 3 and 7; the smaller id wins
        assert classify_one([0.0, 0.0], ref) == 0

    def test_matches_linear_scan(self):
        gen = np.random.default_rng(9)
        coords = gen.normal(size=(50, 3))
        labels = gen.integers(0, 4, size=50)
        ref = PointSet(coords, labels)
        for q in gen.normal(size=(20, 3)):
            assert classify_one(q, ref) == linear_scan_nn(q, coords, labels)

    def test_empty_reference(self):
        with pytest.raises(ConfigError):
            classify_one([0.0], PointSet(np.zeros((0, 1)), np.zeros(0, dtype=int)))


class TestMst:
    def test_collinear(self):
        tree = mst(PointSet.unlabeled([[0.0], [1.0], [3.0]]))
        edges = sorted((min(i, j), max(i, j), round(w, 6)) for i, j, w in tree.edges)
        assert edges == [(0, 1, 1.0), (1, 2, 2.0)]

    def test_unit_square(self):
        tree = mst(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]))
        assert tree.total_weight() == pytest.approx(3.0, abs=1e-8)

    def test_matches_kruskal(self):
        gen = np.random.default_rng(10)
        coords = gen.uniform(size=(12, 2))
        assert mst(coords).total_weight() == pytest.approx(
            kruskal_mst_weight(coords), abs=1e-9
        )

    def test_weight_invariant_under_permutation(self):
        gen = np.random.default_rng(11)
        coords = gen.uniform(size=(15, 3))
        perm = gen.permutation(15)
        assert mst(coords).total_weight() == pytest.approx(
            mst(coords[perm]).total_weight(), rel=1e-12
        )

    def test_too_few_points(self):
        with pytest.raises(ConfigError):
            mst(np.zeros((1, 2)))


class TestCrossEdges:
    def test_uniform_labels(self):
        tree = mst(np.array([[0.0], [1.0], [2.5]]))
        assert cross_edge_count(tree, [0, 0, 0]) == 0

    def test_alternating_path(self):
        tree = mst(np.array([[0.0], [1.0], [2.0]]))
        assert cross_edge_count(tree, [0, 1, 0]) == 2

    def test_matches_edge_scan(self):
        gen = np.random.default_rng(12)
        coords = gen.uniform(size=(20, 2))
        labels = gen.integers(0, 3, size=20)
        tree = mst(coords)
        expected = sum(1 for i, j, _ in tree.edges if labels[i] != labels[j])
        assert cross_edge_count(tree, labels) == expected

    def test_labels_must_cover_vertices(self):
        tree = mst(np.array([[0.0], [1.0], [2.0]]))
        with pytest.raises(ConfigError):
            cross_edge_count(tree, [0, 1])


class TestShatterCheck:
    def test_two_points_opposite_labels(self):
        targets = PointSet.unlabeled([[0.0, 0.0], [1.0, 0.0]])
        ok, placement = shatter_check(targets, 1, [0, 1])
        assert ok
        assert sorted(placement.target_seeds) == [(0, 0), (1, 1)]
        assert placement.far_seeds == ()

    def test_two_points_same_label_uses_far_seed(self):
        targets = PointSet.unlabeled([[0.0, 0.0], [1.0, 0.0]])
        ok, placement = shatter_check(targets, 1, [0, 0])
        assert ok
        assert len(placement.far_seeds) == 1
        cls, coords = placement.far_seeds[0]
        assert cls == 1
        # farther than twice the target diameter from every target
        for t in targets.coords:
            assert np.linalg.norm(np.array(coords) - t) > 2.0

    def test_paired_sets_shatter_fully(self):
        gen = np.random.default_rng(13)
        for n_seeds in (1, 2):
            k = 2 * n_seeds
            targets = paired_targets(gen, n_seeds)
            for bits in itertools.product((0, 1), repeat=k):
                ok, _ = shatter_check(PointSet.unlabeled(targets), n_seeds, bits)
                assert ok, f"n_seeds={n_seeds} config={bits}"

    def test_dominated_point_blocks_minority_config(self):
        # a point that is every other point's nearest neighbor cannot be the
        # lone minority label: no pool placement reproduces that labeling
        targets = PointSet.unlabeled(
            [[0.0, 0.01], [2.0, 0.0], [-1.1, 1.7], [-0.9, -1.75]]
        )
        ok, placement = shatter_check(targets, 2, [1, 0, 0, 0])
        assert not ok and placement is None

    def test_config_length_checked(self):
        with pytest.raises(ConfigError):
            shatter_check(PointSet.unlabeled([[0.0, 0.0]]), 1, [0, 1])

    def test_duplicate_distances_rejected(self):
        square = PointSet.unlabeled([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        with pytest.raises(ConfigError):
            shatter_check(square, 1, [0, 0, 1, 1])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(6, 30))
def test_greedy_margin_dominates_random_consistent_labelings(seed, n):
    # beyond enumeration range: any labeling that agrees with the seeds has
    # margin at most the greedy one
    gen = np.random.default_rng(seed)
    coords = gen.uniform(size=(n, 2))
    seed_ids = gen.choice(n, size=2, replace=False)
    seed_labels = np.full(n, -1, dtype=np.int64)
    seed_labels[seed_ids] = [0, 1]
    res = propagate(PointSet(coords, seed_labels))
    for _ in range(5):
        labels = gen.integers(0, 2, size=n)
        labels[seed_ids] = [0, 1]
        assert res.margin >= margin(coords, labels) - 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_propagate_equivariant_under_point_reordering(seed):
    gen = np.random.default_rng(seed)
    coords = gen.uniform(size=(15, 2))
    seed_labels = np.full(15, -1, dtype=np.int64)
    seed_labels[[2, 9]] = [0, 1]
    base = propagate(PointSet(coords, seed_labels))
    perm = gen.permutation(15)
    permuted = propagate(PointSet(coords[perm], seed_labels[perm]))
    assert np.array_equal(permuted.labels, base.labels[perm])
    assert permuted.margin == base.margin


def test_propagation_csv_round_trip(tmp_path):
    ps = seeded_points([[0.0], [1.0], [5.0], [6.0]], [(0, 0), (3, 1)])
    res = propagate(ps)
    path = tmp_path / "order.csv"
    res.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "point_id,source_id,edge_weight,label"
    assert len(lines) == 1 + len(res.order)


def test_tree_csv(tmp_path):
    tree = mst(np.array([[0.0], [1.0], [3.0]]))
    path = tmp_path / "tree.csv"
    tree.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "i,j,weight"
    assert len(lines) == 3
