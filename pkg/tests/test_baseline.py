import numpy as np
import pytest

from conftest import mission
from core.baseline import ate_rmse, gauss_newton_pgo, odometry_trajectories, one_time_fusion, rendezvous_align
from core.quadratic import objective
from core.rbcd import solve_staircase, spanning_tree_poses
from core.rounding import gauge_fix, round_solution
from core.synthetic import perturb_initial_guess
from models.errors import InsufficientMatches, KeyMismatch
from models.pose_graph import MultiRobotGraph, NodeId, Pose, RelativeMeasurement
from models.schemas import SolverOptions
from utils.lie import exp_so


def rigid(rng, d):
    return Pose(exp_so(rng.normal(size=1 if d == 2 else 3), d), rng.normal(size=d))


class TestRendezvousAlign:
    def test_single_pair(self, rng):
        a, b = rigid(rng, 3), rigid(rng, 3)
        T = rendezvous_align([(a, b)])
        assert (T @ a).allclose(b)

    def test_recovers_exact_transform(self, rng):
        T = rigid(rng, 3)
        pairs = [(a, T @ a) for a in (rigid(rng, 3) for _ in range(5))]
        assert rendezvous_align(pairs).allclose(T, atol=1e-8)

    def test_needs_a_pair(self):
        with pytest.raises(InsufficientMatches):
            rendezvous_align([])


class TestOdometry:
    def test_noiseless_dead_reckoning_matches_truth(self, noiseless_mission):
        truth = noiseless_mission.ground_truth
        local = odometry_trajectories(noiseless_mission)
        for node in noiseless_mission.node_ids():
            expected = truth[NodeId(node.robot, 0)].inverse() @ truth[node]
            assert local[node].allclose(expected, atol=1e-9)

    def test_anchors(self, noiseless_mission):
        truth = noiseless_mission.ground_truth
        anchors = {robot: truth[NodeId(robot, 0)] for robot in range(noiseless_mission.num_robots)}
        anchored = odometry_trajectories(noiseless_mission, anchors)
        assert all(anchored[node].allclose(truth[node], atol=1e-8) for node in noiseless_mission.node_ids())


class TestOneTimeFusion:
    def test_noiseless_fusion_is_exact(self, noiseless_mission):
        fused = gauge_fix(one_time_fusion(noiseless_mission))
        truth = gauge_fix(noiseless_mission.ground_truth)
        assert all(fused[node].allclose(truth[node], atol=1e-8) for node in truth)

    def test_disconnected_robots(self):
        step = Pose.from_xy_theta(1.0, 0.0, 0.0)
        graph = MultiRobotGraph(2, (2, 2), (
            RelativeMeasurement(NodeId(0, 0), NodeId(0, 1), step, 1.0, 1.0),
            RelativeMeasurement(NodeId(1, 0), NodeId(1, 1), step, 1.0, 1.0),
        ))
        with pytest.raises(InsufficientMatches):
            one_time_fusion(graph)


class TestGaussNewton:
    def test_converges_monotonically(self, planar_mission):
        init = perturb_initial_guess(planar_mission, 0.2, 0.3, seed=5)
        poses, converged, trace = gauss_newton_pgo(planar_mission, init)
        assert converged
        assert all(b <= a for a, b in zip(trace.costs, trace.costs[1:]))
        assert objective(planar_mission, poses) == pytest.approx(trace.costs[-1])
        assert poses[NodeId(0, 0)].allclose(init[NodeId(0, 0)])

    def test_reaches_the_certified_optimum_from_a_good_start(self, spatial_mission):
        poses, converged, _ = gauss_newton_pgo(spatial_mission, spanning_tree_poses(spatial_mission))
        X, _, certificate = solve_staircase(spatial_mission, SolverOptions(grad_tol=1e-8))
        assert converged and certificate.certified
        optimum = objective(spatial_mission, round_solution(spatial_mission, X))
        assert objective(spatial_mission, poses) == pytest.approx(optimum, rel=1e-5, abs=1e-8)

    def test_iteration_cap(self, planar_mission):
        init = perturb_initial_guess(planar_mission, 0.5, 1.0, seed=6)
        _, converged, trace = gauss_newton_pgo(planar_mission, init, max_iters=1)
        assert not converged
        assert len(trace.costs) <= 2


class TestAteRmse:
    def test_zero_for_identical_and_rigidly_moved(self):
        graph = mission(num_robots=2, poses_per_robot=6)
        truth = graph.ground_truth
        assert ate_rmse(truth, truth) == pytest.approx([0.0, 0.0], abs=1e-12)
        T = Pose(exp_so([0.7], 2), np.array([3.0, -1.0]))
        moved = {node: T @ pose for node, pose in truth.items()}
        assert ate_rmse(moved, truth) == pytest.approx([0.0, 0.0], abs=1e-9)
        shifted = {node: Pose(pose.rotation, pose.translation + np.array([3.0, -1.0])) for node, pose in truth.items()}
        assert ate_rmse(shifted, truth, align=False) == pytest.approx([np.sqrt(10.0)] * 2)

    def test_per_robot_error(self):
        graph = mission(num_robots=2, poses_per_robot=6)
        truth = graph.ground_truth
        shifted = {
            node: Pose(pose.rotation, pose.translation + (np.array([0.0, 0.1]) if node.robot == 1 else 0.0))
            for node, pose in truth.items()
        }
        per_robot = ate_rmse(shifted, truth, align=False)
        assert per_robot == pytest.approx([0.0, 0.1])
        assert ate_rmse(shifted, truth, per_robot=False, align=False) == pytest.approx([np.sqrt(0.005)])

    def test_key_mismatch(self, planar_mission):
        truth = dict(planar_mission.ground_truth)
        estimate = dict(truth)
        del estimate[NodeId(1, 3)]
        with pytest.raises(KeyMismatch):
            ate_rmse(estimate, truth)
