"""Vertical designs: partitions, cluster structure, assignment sampling."""

import numpy as np
import pytest

import spillsim as sp


class TestMakeDesign:
    def test_singleton_blocks_unit_length_gives_nt_clusters(self):
        n, horizon = 3, 4
        d = sp.make_design(1, [sp.singleton_partition(n)] * horizon, horizon=horizon)
        assert d.n_clusters == n * horizon

    def test_single_block_full_horizon_gives_one_cluster(self):
        d = sp.make_design(4, [sp.single_block_partition(5)], horizon=4)
        assert d.n_clusters == 1

    def test_cluster_count_sums_partitions(self):
        partitions = [
            [{1, 2}, {3, 4}],
            [{1, 3}, {2, 4}],
        ]
        d = sp.make_design(2, partitions, horizon=4)
        assert d.n_clusters == 4

    def test_final_block_may_be_short(self):
        d = sp.make_design(2, [sp.singleton_partition(2)] * 3, horizon=5)
        assert d.n_time_blocks == 3
        assert list(d.block_rounds(3)) == [5]
        assert d.block_of_round(5) == 3

    def test_overlapping_blocks_rejected(self):
        with pytest.raises(ValueError, match="overlap"):
            sp.make_design(2, [[{1, 2}, {2, 3}]], horizon=2)

    def test_missing_member_rejected(self):
        with pytest.raises(ValueError, match="missing"):
            sp.VerticalDesign(block_len=2, partitions=((frozenset({1}),),), n=2, horizon=2)

    def test_wrong_partition_count_rejected(self):
        with pytest.raises(ValueError, match="expected 2 partitions"):
            sp.make_design(2, [sp.singleton_partition(2)], horizon=4)


class TestRegionPartition:
    def make_traj(self, points):
        pos = np.array(points, dtype=np.float64).reshape(len(points), 1, 2)
        return sp.TrajectorySet(pos, max_speed=0.0)

    def test_whole_square_single_block(self):
        traj = self.make_traj([(0.1, 0.1), (0.9, 0.9), (0.4, 0.6)])
        assert sp.region_partition(traj, 1, cell_side=1.0) == (frozenset({1, 2, 3}),)

    def test_distant_points_in_own_cells(self):
        traj = self.make_traj([(0.1, 0.1), (0.9, 0.9)])
        part = sp.region_partition(traj, 1, cell_side=0.5)
        assert part == (frozenset({1}), frozenset({2}))

    def test_boundary_point_goes_to_higher_cell(self):
        traj = self.make_traj([(0.5, 0.1), (0.6, 0.1)])
        part = sp.region_partition(traj, 1, cell_side=0.5)
        # both land in the cell [0.5, 1) x [0, 0.5)
        assert part == (frozenset({1, 2}),)

    def test_true_partition_on_random_trajectories(self):
        traj = sp.random_walk_trajectories(9, 6, 0.1, seed=4)
        for anchor in (1, 3, 6):
            part = sp.region_partition(traj, anchor, cell_side=0.34)
            members = sorted(i for block in part for i in block)
            assert members == list(range(1, 10))


class TestSampleAssignment:
    def test_within_cluster_constancy_exact(self):
        g = sp.make_dynamic_er(5, 7, sp.ErParams(0.5, 0.3, 0.3), seed=0)
        partitions = sp.build_partitions("components", g, 3)
        d = sp.VerticalDesign(block_len=3, partitions=partitions, n=5, horizon=7)
        for seed in range(20):
            am = sp.sample_assignment(d, seed=seed)
            for (k, b), arm in am.cluster_arms.items():
                rounds = d.block_rounds(k)
                for i in d.cluster_members((k, b)):
                    assert np.all(am.w[i - 1, rounds.start - 1 : rounds.stop - 1] == arm)

    def test_single_cluster_is_fair(self):
        d = sp.make_design(3, [sp.single_block_partition(2)], horizon=3)
        hits = sum(int(sp.sample_assignment(d, seed=s).w[0, 0]) for s in range(10_000))
        assert abs(hits / 10_000 - 0.5) < 0.02

    def test_singleton_clusters_uncorrelated(self):
        d = sp.make_design(1, [sp.singleton_partition(2)] * 2, horizon=2)
        draws = np.array([sp.sample_assignment(d, seed=s).w.flatten() for s in range(10_000)])
        corr = np.corrcoef(draws.T)
        off_diag = corr[~np.eye(4, dtype=bool)]
        assert np.abs(off_diag).max() < 0.03

    def test_marginal_fairness_every_cell(self):
        g = sp.make_static(3, 4, [(1, 2)])
        partitions = [[{1, 2}, {3}], [{1}, {2, 3}]]
        d = sp.make_design(2, partitions, horizon=4)
        total = np.zeros((3, 4))
        for s in range(10_000):
            total += sp.sample_assignment(d, seed=s).w
        assert np.all(np.abs(total / 10_000 - 0.5) < 0.02)

    def test_deterministic_per_seed(self):
        d = sp.make_design(2, [[{1, 2}, {3}], [{1}, {2, 3}]], horizon=4)
        a = sp.sample_assignment(d, seed=5)
        b = sp.sample_assignment(d, seed=5)
        assert np.array_equal(a.w, b.w)
        assert a.cluster_arms == b.cluster_arms


class TestClustersTouching:
    def test_single_cell(self):
        d = sp.make_design(2, [[{1, 2}, {3}], [{1}, {2, 3}]], horizon=4)
        assert sp.clusters_touching(d, [(3, 1)]) == frozenset({d.cluster_of(3, 1)})

    def test_adjacent_time_blocks(self):
        d = sp.make_design(2, [sp.singleton_partition(2)] * 2, horizon=4)
        got = sp.clusters_touching(d, [(1, 2), (1, 3)])
        assert len(got) == 2

    def test_history_inside_one_block(self):
        g = sp.make_static(2, 4, [])
        d = sp.make_design(2, [sp.singleton_partition(2)] * 2, horizon=4)
        cells = g.spatio_temporal_neighborhood(1, 4, 1)
        assert len(sp.clusters_touching(d, cells)) == 1


class TestBuilders:
    def test_union_components_partition(self):
        g = sp.make_static(5, 4, [(1, 2), (4, 5)])
        part = sp.union_component_partition(g, range(1, 5))
        assert part == (frozenset({1, 2}), frozenset({3}), frozenset({4, 5}))

    def test_components_follow_block_union(self):
        # edge (1,2) only in round 1; blocks of length 2 split at round 3
        rounds = [[(1, 2)], [], [], []]
        g = sp.GraphSequence(3, 4, rounds)
        parts = sp.build_partitions("components", g, 2)
        assert parts[0] == (frozenset({1, 2}), frozenset({3}))
        assert parts[1] == (frozenset({1}), frozenset({2}), frozenset({3}))

    def test_unknown_kind_rejected(self):
        g = sp.make_static(2, 2, [])
        with pytest.raises(ValueError, match="unknown partition kind"):
            sp.build_partitions("hex", g, 1)


class TestSerialization:
    def test_round_trip(self):
        d = sp.make_design(2, [[{1, 2}, {3}], [{1}, {2, 3}]], horizon=4)
        text = d.to_text()
        parsed = sp.VerticalDesign.from_text(text)
        assert parsed == d
        assert parsed.to_text() == text

    def test_assignment_export_schema(self):
        d = sp.make_design(2, [[{1, 2}]], horizon=2)
        am = sp.sample_assignment(d, seed=0)
        lines = am.to_csv_text().splitlines()
        assert lines[0] == "i,t,w"
        assert len(lines) == 5
        arm_lines = am.arms_text().splitlines()
        assert arm_lines == [f"1 1 {am.cluster_arms[(1, 1)]}"]
