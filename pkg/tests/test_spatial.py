import numpy as np
import pytest

from gaussfield.core import ContractError, DomainError
from gaussfield.spatial import (
    build_index,
    query_radius_knn,
    query_radius_knn_batch,
    rebuild,
)


def brute_force(means, x, r, k):
    """Independent exhaustive scan: filter by r, sort by (sq_dist, index)."""
    diff = means - np.asarray(x)
    sq = diff[:, 0] ** 2 + diff[:, 1] ** 2
    within = np.flatnonzero(sq <= r * r)
    order = np.lexsort((within, sq[within]))
    chosen = within[order][:k]
    return chosen, sq[chosen]


def assert_matches_oracle(index, means, queries, r, k):
    idx, sq, counts = query_radius_knn_batch(index, queries, r, k)
    for m, q in enumerate(queries):
        ref_idx, ref_sq = brute_force(means, q, r, k)
        n = int(counts[m])
        assert n == len(ref_idx)
        assert np.array_equal(idx[m, :n], ref_idx)
        assert np.array_equal(sq[m, :n], ref_sq)


class TestBuildIndex:
    def test_single_mean_cell(self):
        index = build_index(np.array([[0.5, 0.5]]), cell_size=0.1)
        assert (5, 5) in index.cells
        assert list(index.cells[(5, 5)]) == [0]

    def test_cells_partition_points(self):
        rng = np.random.default_rng(0)
        means = rng.uniform(-0.2, 1.2, (500, 2))
        index = build_index(means, cell_size=0.07)
        total = sum(len(v) for v in index.cells.values())
        assert total == 500
        all_ids = np.sort(np.concatenate(list(index.cells.values())))
        assert np.array_equal(all_ids, np.arange(500))

    def test_every_mean_recoverable_from_its_cell(self):
        rng = np.random.default_rng(1)
        means = rng.uniform(0, 1, (10_000, 2))
        cs = 0.1
        index = build_index(means, cell_size=cs)
        cells = index.cells
        for i in range(10_000):
            cx, cy = int(np.floor(means[i, 0] / cs)), int(np.floor(means[i, 1] / cs))
            assert i in cells[(cx, cy)]

    def test_non_finite_rejected(self):
        with pytest.raises(DomainError):
            build_index(np.array([[0.1, np.inf]]), cell_size=0.1)

    def test_bad_cell_size(self):
        with pytest.raises(DomainError):
            build_index(np.zeros((1, 2)), cell_size=0.0)


class TestQuery:
    def test_query_exactly_at_mean(self):
        rng = np.random.default_rng(2)
        means = rng.uniform(0, 1, (50, 2))
        index = build_index(means, cell_size=0.1)
        res = query_radius_knn(index, means[17], r=0.1, k=4)
        assert res.indices[0] == 17
        assert res.sq_dists[0] == 0.0

    def test_radius_limits_below_k(self):
        means = np.array([[0.5, 0.5], [0.52, 0.5], [0.5, 0.53], [0.9, 0.9]])
        index = build_index(means, cell_size=0.1)
        res = query_radius_knn(index, np.array([0.51, 0.51]), r=0.1, k=16)
        assert len(res) == 3
        assert np.all(res.sq_dists <= 0.1 ** 2)

    def test_zero_neighbors_empty(self):
        index = build_index(np.array([[0.1, 0.1]]), cell_size=0.05)
        res = query_radius_knn(index, np.array([0.9, 0.9]), r=0.05, k=3)
        assert len(res) == 0

    def test_matches_brute_force_at_scale(self):
        rng = np.random.default_rng(3)
        means = rng.uniform(0, 1, (10_000, 2))
        queries = rng.uniform(0, 1, (1_000, 2))
        index = build_index(means, cell_size=0.1)
        assert_matches_oracle(index, means, queries, r=0.1, k=16)

    def test_matches_oracle_when_radius_exceeds_cell_size(self):
        rng = np.random.default_rng(4)
        means = rng.uniform(0, 1, (800, 2))
        queries = rng.uniform(0, 1, (100, 2))
        index = build_index(means, cell_size=0.04)
        assert_matches_oracle(index, means, queries, r=0.13, k=8)

    def test_sorted_by_distance_then_index(self):
        # Four means equidistant from the query; ties break by index.
        means = np.array([[0.6, 0.5], [0.4, 0.5], [0.5, 0.6], [0.5, 0.4]])
        index = build_index(means, cell_size=0.1)
        res = query_radius_knn(index, np.array([0.5, 0.5]), r=0.2, k=4)
        assert np.array_equal(res.indices, [0, 1, 2, 3])

    def test_monotone_in_radius(self):
        rng = np.random.default_rng(5)
        means = rng.uniform(0, 1, (300, 2))
        index = build_index(means, cell_size=0.05)
        k = 12
        for q in rng.uniform(0, 1, (30, 2)):
            small = query_radius_knn(index, q, r=0.05, k=k)
            large = query_radius_knn(index, q, r=0.11, k=k)
            if len(small) < k:
                assert set(small.indices).issubset(set(large.indices))

    def test_deterministic(self):
        rng = np.random.default_rng(6)
        means = rng.uniform(0, 1, (500, 2))
        queries = rng.uniform(0, 1, (64, 2))
        index = build_index(means, cell_size=0.1)
        a = query_radius_knn_batch(index, queries, r=0.1, k=8)
        b = query_radius_knn_batch(index, queries, r=0.1, k=8)
        for x, y in zip(a, b):
            assert np.array_equal(x, y)

    def test_bad_query_args(self):
        index = build_index(np.zeros((1, 2)), cell_size=0.1)
        with pytest.raises(DomainError):
            query_radius_knn(index, np.zeros(2), r=0.0, k=1)
        with pytest.raises(DomainError):
            query_radius_knn(index, np.zeros(2), r=0.1, k=0)


class TestRebuild:
    def test_rebuild_unchanged_is_identical(self):
        rng = np.random.default_rng(7)
        means = rng.uniform(0, 1, (400, 2))
        queries = rng.uniform(0, 1, (60, 2))
        index = build_index(means, cell_size=0.1)
        index2 = rebuild(index, means)
        a = query_radius_knn_batch(index, queries, r=0.1, k=8)
        b = query_radius_knn_batch(index2, queries, r=0.1, k=8)
        for x, y in zip(a, b):
            assert np.array_equal(x, y)

    def test_translation_preserves_neighborhoods(self):
        rng = np.random.default_rng(8)
        means = rng.uniform(0, 1, (400, 2))
        v = np.array([0.731, -0.413])
        index = build_index(means, cell_size=0.1)
        index_t = rebuild(index, means + v)
        for q in rng.uniform(0, 1, (40, 2)):
            a = query_radius_knn(index, q, r=0.1, k=8)
            b = query_radius_knn(index_t, q + v, r=0.1, k=8)
            assert np.array_equal(a.indices, b.indices)
            assert np.max(np.abs(a.sq_dists - b.sq_dists), initial=0.0) <= 1e-12

    def test_partial_edit_matches_oracle(self):
        rng = np.random.default_rng(9)
        means = rng.uniform(0, 1, (2_000, 2))
        edited = means.copy()
        moved = rng.choice(2_000, size=100, replace=False)
        edited[moved] += rng.uniform(-0.3, 0.3, (100, 2))
        index = rebuild(build_index(means, cell_size=0.1), edited)
        queries = rng.uniform(0, 1, (200, 2))
        assert_matches_oracle(index, edited, queries, r=0.1, k=16)

    def test_stale_detection(self):
        means = np.random.default_rng(10).uniform(0, 1, (50, 2))
        index = build_index(means, cell_size=0.1)
        index.verify_against(means)
        with pytest.raises(ContractError):
            index.verify_against(means + 1e-9)
