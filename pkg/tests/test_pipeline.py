import time

import numpy as np
import pytest

from conftest import mission
from core.baseline import ate_rmse
from core.pipeline import (
    build_report,
    compare,
    exit_status,
    initial_poses,
    initial_state,
    resolve_with_rendezvous,
    run_certified,
    run_gauss_newton,
    run_one_time,
)
from core.quadratic import assemble, objective
from models.errors import IncompleteSolution
from models.pose_graph import NodeId, Pose, RelativeMeasurement
from models.schemas import InitStrategy, NetworkProfile, SolveMode, SolverOptions, TrajectoryShape, Verdict


class TestRunCertified:
    def test_certified_and_gauge_fixed(self, planar_mission):
        result = run_certified(planar_mission, SolverOptions())
        assert result.certified
        assert result.mode == SolveMode.CERTIFIED
        assert result.poses[NodeId(0, 0)].allclose(Pose.identity(2))
        assert result.final_cost == pytest.approx(objective(planar_mission, result.poses))
        assert result.final_cost <= objective(planar_mission, planar_mission.ground_truth) * (1 + 1e-6)
        assert exit_status(result) == "success"

    def test_decentralized_staircase(self, planar_mission):
        central = run_certified(planar_mission, SolverOptions())
        result = run_certified(planar_mission, SolverOptions(), decentralized=True, profile=NetworkProfile())
        assert result.certified
        assert result.traffic is not None and result.traffic.messages_sent > 0
        assert result.message_log().count("\n") == result.traffic.messages_sent
        assert result.final_cost == pytest.approx(central.final_cost, rel=1e-5)

    def test_budget_exhaustion_is_uncertified(self, planar_mission):
        options = SolverOptions(max_sweeps=1, grad_tol=1e-12)
        result = run_certified(planar_mission, options, init=initial_state(planar_mission, options, InitStrategy.RANDOM))
        assert result.certificate.verdict == Verdict.INDETERMINATE
        assert exit_status(result) == "uncertified"

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_two_robot_survey_is_certified_within_budget(self, seed):
        graph = mission(
            num_robots=2,
            poses_per_robot=100,
            dimension=3,
            rot=0.05,
            trans=0.05,
            seed=seed,
            trajectory_shape=TrajectoryShape.GRID,
            step_length=0.5,
            intra_loop_period=3,
            inter_overlap=0.2,
        )
        started = time.perf_counter()
        result = run_certified(graph, SolverOptions())
        elapsed = time.perf_counter() - started
        assert result.certificate.verdict == Verdict.CERTIFIED
        assert result.certificate.lambda_d_plus_1 > 1e-6 * assemble(graph).inf_norm
        assert elapsed < 10.0

    def test_joint_solution_beats_one_time_fusion(self):
        better = 0
        for seed in range(20):
            graph = mission(poses_per_robot=20, rot=0.03, trans=0.05, seed=seed, intra_loop_period=5, inter_overlap=0.3)
            truth = graph.ground_truth
            certified = ate_rmse(run_certified(graph, SolverOptions()).poses, truth, per_robot=False)[0]
            one_time = ate_rmse(run_one_time(graph).poses, truth, per_robot=False)[0]
            better += certified < one_time
        assert better >= 18


class TestBaselines:
    def test_gauss_newton_never_sets_uncertified(self, planar_mission):
        result = run_gauss_newton(planar_mission, initial_poses(planar_mission, InitStrategy.SPANNING_TREE))
        assert result.certificate is None
        assert exit_status(result) == "success"
        assert result.termination == "converged"

    def test_one_time(self, planar_mission):
        result = run_one_time(planar_mission)
        assert result.iterations == 0
        assert set(result.poses) == set(planar_mission.node_ids())

    def test_given_initial_poses_need_a_guess(self, planar_mission):
        with pytest.raises(IncompleteSolution):
            initial_poses(planar_mission, InitStrategy.GIVEN)

    def test_random_initial_poses_are_seeded(self, planar_mission):
        a = initial_poses(planar_mission, InitStrategy.RANDOM, seed=3)
        b = initial_poses(planar_mission, InitStrategy.RANDOM, seed=3)
        assert all(a[node].allclose(b[node], atol=0.0) for node in a)


class TestResolve:
    def test_new_rendezvous_warm_start(self, planar_mission):
        truth = planar_mission.ground_truth
        a, b = NodeId(0, 5), NodeId(1, 5)
        extra = RelativeMeasurement(a, b, truth[a].inverse() @ truth[b], 1e4, 2500.0)

        first = run_certified(planar_mission, SolverOptions())
        resolved = resolve_with_rendezvous(first, [extra], SolverOptions())
        fresh = run_certified(planar_mission.with_edges([extra]), SolverOptions())

        assert resolved.certified and fresh.certified
        assert len(resolved.graph.edges) == len(planar_mission.edges) + 1
        assert resolved.final_cost == pytest.approx(fresh.final_cost, rel=1e-5)
        assert resolved.final_cost >= first.final_cost * (1 - 1e-9)


class TestReport:
    def test_report_with_ground_truth(self, planar_mission):
        result = run_certified(planar_mission, SolverOptions())
        report = build_report(result, planar_mission.ground_truth)
        assert report.certified is True
        assert report.verdict == Verdict.CERTIFIED
        assert report.lambda_d_plus_1 > 0
        assert report.final_rank == result.state.r
        assert len(report.per_robot_rmse) == 2
        assert len(report.baseline_rmse) == 2
        assert len(report.improvement_percent) == 2
        assert report.traffic is None

    def test_report_without_ground_truth(self, planar_mission):
        report = build_report(run_one_time(planar_mission))
        assert report.certified is None
        assert report.per_robot_rmse == []


def test_compare_table(planar_mission):
    table = compare(planar_mission, planar_mission.ground_truth, seeds=[0, 1])
    assert list(table.columns) == ["robot", "method", "seed", "rmse_m", "improvement_percent"]
    assert len(table) == 2 * 4 * 2
    assert set(table["method"]) == {"odometry", "one-time", "gauss-newton", "certified"}
    odometry = table[table["method"] == "odometry"]
    assert np.all(odometry["improvement_percent"] == 0.0)
    certified = table[table["method"] == "certified"]
    assert certified["rmse_m"].max() < 0.5
