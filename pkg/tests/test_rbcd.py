import numpy as np
import pytest

from conftest import cycle_graph, mission, winding_poses
from core import stiefel
from core.baseline import gauss_newton_pgo
from core.certifier import assemble_dual, verify
from core.quadratic import LiftedState, assemble, cost, objective
from core.rbcd import block_update, escape_saddle, initialize, solve, solve_staircase, spanning_tree_poses
from core.rounding import round_solution
from core.synthetic import perturb_initial_guess
from models.errors import IncompleteSolution, RankLimitReached, SaddleEscapeFailed
from models.pose_graph import NodeId, Pose
from models.schemas import BlockRule, InitStrategy, SolverOptions, StepRule, TerminationReason, Verdict


class TestInitialize:
    def test_spanning_tree_recovers_noiseless_truth(self, noiseless_mission):
        L = assemble(noiseless_mission)
        X = initialize(noiseless_mission, InitStrategy.SPANNING_TREE, 3)
        assert X.is_feasible()
        assert cost(L, X) <= 1e-9 * L.inf_norm

    def test_given_requires_complete_poses(self, planar_mission):
        with pytest.raises(IncompleteSolution):
            initialize(planar_mission, InitStrategy.GIVEN, 3)
        poses = perturb_initial_guess(planar_mission, 0.1, 0.1, seed=0)
        X = initialize(planar_mission, InitStrategy.GIVEN, 4, poses=poses)
        assert X.r == 4 and X.is_feasible()

    def test_random_is_seeded(self, planar_mission):
        a = initialize(planar_mission, InitStrategy.RANDOM, 3, seed=5)
        b = initialize(planar_mission, InitStrategy.RANDOM, 3, seed=5)
        c = initialize(planar_mission, InitStrategy.RANDOM, 3, seed=6)
        assert np.array_equal(a.matrix, b.matrix)
        assert not np.array_equal(a.matrix, c.matrix)
        assert a.is_feasible()

    def test_spanning_tree_root_is_identity(self, spatial_mission):
        poses = spanning_tree_poses(spatial_mission)
        assert poses[NodeId(0, 0)].allclose(Pose.identity(3))


class TestBlockUpdate:
    @pytest.mark.parametrize("step_rule", [StepRule.GRADIENT, StepRule.NEWTON_CG])
    def test_only_own_columns_change_and_cost_drops(self, spatial_mission, step_rule):
        L = assemble(spatial_mission)
        X = initialize(spatial_mission, InitStrategy.RANDOM, 4, seed=1)
        options = SolverOptions(step_rule=step_rule)
        updated, info = block_update(L, X, 1, options)
        cols = L.robot_columns(1)
        mask = np.ones(L.size, dtype=bool)
        mask[cols] = False
        assert np.array_equal(updated.matrix[:, mask], X.matrix[:, mask])
        assert not np.array_equal(updated.matrix[:, cols], X.matrix[:, cols])
        assert cost(L, updated) < cost(L, X)
        assert updated.is_feasible()
        assert info.decrease == pytest.approx(cost(L, X) - cost(L, updated), rel=1e-8, abs=1e-8)
        assert not info.null_step

    def test_single_robot_step_lowers_cost(self, winding_cycle):
        L = assemble(winding_cycle)
        X = LiftedState.from_poses(winding_cycle, winding_poses(5), 3)
        X.matrix[0, 2] += 0.5  # move one translation
        options = SolverOptions(step_rule=StepRule.GRADIENT, inner_steps=1)
        updated, _ = block_update(L, X, 0, options)
        assert cost(L, updated) < cost(L, X)

    def test_heavy_weights_near_stationarity_still_step(self):
        graph = mission(rot=1e-3, trans=1e-3, seed=2)
        L = assemble(graph)
        X, trace = solve(graph, SolverOptions(max_sweeps=500))
        assert trace.termination == TerminationReason.CONVERGED
        before = cost(L, X)
        updated, info = block_update(L, X, 0, SolverOptions(), tol=0.0)
        assert not info.null_step
        assert updated.is_feasible()
        assert cost(L, updated) <= before + 1e-9 * (1.0 + before)


class TestSolve:
    @pytest.mark.parametrize("block_rule", [BlockRule.ROUND_ROBIN, BlockRule.GREEDY_GRADIENT])
    def test_monotone_and_converges(self, planar_mission, block_rule):
        X0 = initialize(planar_mission, InitStrategy.RANDOM, 3, seed=2)
        options = SolverOptions(block_rule=block_rule, max_sweeps=300)
        X, trace = solve(planar_mission, options, X0)
        costs = [record.cost for record in trace.sweeps]
        assert all(b <= a + 1e-9 * (1 + a) for a, b in zip(costs, costs[1:]))
        assert trace.termination == TerminationReason.CONVERGED
        assert trace.sweeps[-1].gradient_norm <= trace.grad_tol
        assert X.is_feasible()

    def test_max_sweeps(self, spatial_mission):
        X0 = initialize(spatial_mission, InitStrategy.RANDOM, 4, seed=3)
        options = SolverOptions(max_sweeps=1, grad_tol=1e-14, step_rule=StepRule.GRADIENT, inner_steps=1)
        _, trace = solve(spatial_mission, options, X0)
        assert trace.termination == TerminationReason.MAX_SWEEPS
        assert trace.iterations == 1

    def test_already_stationary_start(self, noiseless_mission):
        X0 = initialize(noiseless_mission, InitStrategy.SPANNING_TREE, 3)
        X, trace = solve(noiseless_mission, SolverOptions(), X0)
        assert trace.termination == TerminationReason.CONVERGED
        assert trace.iterations == 0
        assert np.array_equal(X.matrix, X0.matrix)


class TestEscape:
    def test_escape_lowers_cost_on_a_winding_ring(self):
        graph = cycle_graph([0.0] * 3)
        L = assemble(graph)
        X = LiftedState.from_poses(graph, winding_poses(3), 3)
        certificate = verify(assemble_dual(L, X), X)
        assert certificate.verdict == Verdict.NOT_CERTIFIED
        escaped = escape_saddle(L, X, certificate.escape_eigvec, certificate.lambda_d_plus_1)
        assert escaped.r == X.r + 1
        assert escaped.is_feasible()
        assert cost(L, escaped) < cost(L, X)

    def test_rank_limit(self):
        graph = cycle_graph([0.0] * 3)
        L = assemble(graph)
        X = LiftedState.from_poses(graph, winding_poses(3), 3)
        certificate = verify(assemble_dual(L, X), X)
        with pytest.raises(RankLimitReached):
            escape_saddle(L, X, certificate.escape_eigvec, certificate.lambda_d_plus_1, r_max=3)

    def test_flat_direction_raises(self, winding_cycle):
        L = assemble(winding_cycle)
        X = LiftedState.from_poses(winding_cycle, winding_poses(5), 2)
        # shifting every translation together leaves the cost unchanged
        gauge = np.zeros(L.size)
        gauge[2::3] = 1.0
        with pytest.raises(SaddleEscapeFailed):
            escape_saddle(L, X, gauge, -1.0)


class TestStaircase:
    def test_escapes_the_local_minimum_gauss_newton_keeps(self, winding_cycle):
        start = winding_poses(5)
        stuck_cost = 20.0 * (1.0 - np.cos(2.0 * np.pi / 5))
        assert objective(winding_cycle, start) == pytest.approx(stuck_cost)

        gn_poses, converged, _ = gauss_newton_pgo(winding_cycle, start)
        assert converged
        assert objective(winding_cycle, gn_poses) == pytest.approx(stuck_cost, rel=1e-9)

        X0 = LiftedState.from_poses(winding_cycle, start, 3)
        X, trace, certificate = solve_staircase(winding_cycle, SolverOptions(), init=X0)
        assert trace.escapes >= 1
        assert certificate.verdict == Verdict.CERTIFIED
        assert objective(winding_cycle, round_solution(winding_cycle, X)) < 1e-6

    @staticmethod
    def ring_grid_minimum(angles: np.ndarray) -> float:
        """Min-plus sweep over a 0.25 degree heading grid, node 0 held at heading 0."""
        grid = np.deg2rad(np.arange(-180.0, 180.0, 0.25))

        def edge(src, dst, angle):
            return 4.0 * (1.0 - np.cos(dst - src - angle))

        best = edge(0.0, grid, angles[0])
        for angle in angles[1:-1]:
            best = np.min(best[:, None] + edge(grid[:, None], grid[None, :], angle), axis=0)
        return float(np.min(best + edge(grid, 0.0, angles[-1])))

    def test_brute_force_optimum_on_small_rings(self, rng):
        for k in range(20):
            angles = rng.uniform(-0.5, 0.5, size=3 + k % 3)
            graph = cycle_graph(list(angles))
            brute = self.ring_grid_minimum(angles)
            X, _, certificate = solve_staircase(graph, SolverOptions(grad_tol=1e-10))
            assert certificate.verdict == Verdict.CERTIFIED
            solved = objective(graph, round_solution(graph, X))
            assert solved <= brute + 1e-9
            assert brute - solved <= 1e-3

    def test_failed_escape_is_reported(self, winding_cycle, monkeypatch):
        def stuck(*args, **kwargs):
            raise SaddleEscapeFailed("no decrease")

        monkeypatch.setattr("core.rbcd.escape_saddle", stuck)
        X0 = LiftedState.from_poses(winding_cycle, winding_poses(5), 3)
        X, trace, certificate = solve_staircase(winding_cycle, SolverOptions(), init=X0)
        assert trace.termination == TerminationReason.ESCAPE_FAILED
        assert trace.escapes == 0
        assert certificate.verdict == Verdict.NOT_CERTIFIED
        assert X.r == 3

    def test_low_noise_mission_is_certified_from_random_start(self, spatial_mission):
        options = SolverOptions(seed=4, grad_tol=1e-6)
        X0 = initialize(spatial_mission, InitStrategy.RANDOM, 4, seed=4)
        X, trace, certificate = solve_staircase(spatial_mission, options, init=X0)
        assert certificate.verdict == Verdict.CERTIFIED
        assert certificate.lambda_d_plus_1 > certificate.tol_used
        truth = objective(spatial_mission, spatial_mission.ground_truth)
        assert objective(spatial_mission, round_solution(spatial_mission, X)) <= truth * (1 + 1e-6) + 1e-6

    def test_sweep_budget_is_shared_across_ranks(self, winding_cycle):
        X0 = LiftedState.from_poses(winding_cycle, winding_poses(5), 3)
        _, trace, _ = solve_staircase(winding_cycle, SolverOptions(max_sweeps=2), init=X0)
        assert trace.iterations <= 2

    def test_feasible_random_frames(self, rng):
        M = stiefel.random_state(rng, 5, 3, 7)
        assert stiefel.orthonormality_error(M, 3) < 1e-12
