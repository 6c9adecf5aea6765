import numpy as np
import pytest
from pydantic import ValidationError

from conftest import mission
from core.synthetic import generate, overlap_count, perturb_initial_guess
from models.errors import SpecError
from models.pose_graph import EdgeKind, MultiRobotGraph
from models.schemas import MissionSpec, NoiseModel, TrajectoryShape
from utils.lie import log_so


class TestGenerate:
    def test_single_robot_line(self):
        spec = MissionSpec(num_robots=1, poses_per_robot=5, dimension=2,
                           trajectory_shape=TrajectoryShape.LINE, inter_overlap=0.0)
        graph = generate(spec)
        assert graph.poses_per_robot == (5,)
        assert len(graph.edges) == 4
        assert all(edge.kind == EdgeKind.INTRA for edge in graph.edges)
        assert graph.validate().is_valid

    @pytest.mark.parametrize("shape", list(TrajectoryShape))
    @pytest.mark.parametrize("dimension", [2, 3])
    def test_valid_and_noiseless_measurements_match_truth(self, shape, dimension):
        graph = mission(num_robots=3, poses_per_robot=10, dimension=dimension, rot=0.0, trans=0.0,
                        trajectory_shape=shape)
        assert graph.validate().is_valid
        assert graph.rendezvous_edges()
        truth = graph.ground_truth
        for edge in graph.edges:
            expected = truth[edge.source].inverse() @ truth[edge.target]
            assert edge.measurement.allclose(expected, atol=1e-9)

    def test_rendezvous_links_consecutive_robots(self):
        graph = mission(num_robots=4, poses_per_robot=12)
        for edge in graph.rendezvous_edges():
            assert edge.target.robot == edge.source.robot + 1
        assert graph.robot_neighbors()[0] == [1]

    def test_loop_closures(self):
        graph = mission(num_robots=1, poses_per_robot=9, intra_loop_period=4, inter_overlap=0.0)
        closures = [edge for edge in graph.edges if edge.target.index - edge.source.index == 4]
        assert [(e.source.index, e.target.index) for e in closures] == [(0, 4), (4, 8)]

    def test_weights_follow_noise(self):
        graph = mission(rot=0.1, trans=0.5)
        edge = graph.edges[0]
        assert edge.kappa == pytest.approx(100.0)
        assert edge.sigma == pytest.approx(4.0)

    def test_deterministic_per_seed(self):
        a, b, c = mission(seed=4), mission(seed=4), mission(seed=5)
        assert all(x.measurement.allclose(y.measurement, atol=0.0) for x, y in zip(a.edges, b.edges))
        assert not all(x.measurement.allclose(y.measurement) for x, y in zip(a.edges, c.edges))

    def test_unrealizable_specs(self):
        with pytest.raises(SpecError):
            generate(MissionSpec(num_robots=1, inter_overlap=0.5))
        with pytest.raises(SpecError):
            generate(MissionSpec(num_robots=2, intra_loop_period=1))
        with pytest.raises(ValidationError):
            MissionSpec(dimension=4)
        with pytest.raises(ValidationError):
            MissionSpec(noise=NoiseModel(rot_stddev=-1.0))


def test_overlap_count():
    assert overlap_count(MissionSpec(poses_per_robot=10, inter_overlap=0.2)) == 2
    assert overlap_count(MissionSpec(poses_per_robot=10, inter_overlap=0.01)) == 1
    assert overlap_count(MissionSpec(poses_per_robot=10, inter_overlap=1.0)) == 10


class TestPerturb:
    def test_bounded_and_seeded(self, spatial_mission):
        poses = perturb_initial_guess(spatial_mission, 0.2, 0.5, seed=1)
        again = perturb_initial_guess(spatial_mission, 0.2, 0.5, seed=1)
        for node, pose in poses.items():
            truth = spatial_mission.ground_truth[node]
            assert np.linalg.norm(log_so(truth.rotation.T @ pose.rotation)) <= 0.2 + 1e-9
            assert np.all(np.abs(pose.translation - truth.translation) <= 0.5)
            assert pose.allclose(again[node], atol=0.0)

    def test_zero_magnitude_is_truth(self, planar_mission):
        poses = perturb_initial_guess(planar_mission, 0.0, 0.0, seed=0)
        assert all(poses[node].allclose(planar_mission.ground_truth[node]) for node in poses)

    def test_needs_ground_truth(self):
        graph = MultiRobotGraph(2, (1,), ground_truth=None)
        with pytest.raises(SpecError):
            perturb_initial_guess(graph, 0.1, 0.1, seed=0)
