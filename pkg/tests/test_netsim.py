import numpy as np
import pytest

from agents.network import Message, MessageKind, SimulatedNetwork
from agents.orchestrator import (
    DecentralizedOrchestrator,
    merge_traffic,
    run_decentralized,
    traffic_report,
    write_message_log,
)
from conftest import mission
from config.settings import settings
from core.quadratic import assemble, cost
from core.rbcd import initialize, solve
from models.errors import DimensionMismatch
from models.schemas import InitStrategy, NetworkMode, NetworkProfile, SolverOptions, TerminationReason

LOSSY = NetworkProfile(latency_min=1, latency_max=5, drop_prob=0.3, mode=NetworkMode.SYNCHRONOUS_ROUNDS)
JITTERY = NetworkProfile(latency_min=0, latency_max=2, drop_prob=0.3, mode=NetworkMode.ASYNCHRONOUS)


def message(sender=0, receiver=1, sequence=1, kind=MessageKind.SEPARATOR, payload=None):
    return Message(sender=sender, receiver=receiver, sweep=0, sequence=sequence, kind=kind, payload=payload or {})


class TestSimulatedNetwork:
    def test_latency_and_send_order(self):
        network = SimulatedNetwork(NetworkProfile(latency_min=2, latency_max=2), np.random.default_rng(0))
        first, second = message(sequence=1), message(sequence=2)
        network.send(first, tick=0)
        network.send(second, tick=0)
        assert network.pop_due(1) is None
        assert network.pop_due(2) is first
        assert network.pop_due(2) is second
        assert network.in_flight == 0

    def test_drops_are_logged_and_counted(self):
        network = SimulatedNetwork(NetworkProfile(drop_prob=0.5), np.random.default_rng(1))
        delivered = sum(network.send(message(sequence=k), tick=k) for k in range(200))
        assert network.dropped == 200 - delivered
        assert 0 < network.dropped < 200
        assert sum(entry.dropped for entry in network.log) == network.dropped

    def test_size_counts_payload_entries(self):
        payload = {3: np.zeros((4, 3)), 5: np.zeros((4, 3))}
        assert message(payload=payload).size_bytes == 24 * settings.BYTES_PER_ENTRY
        assert message(kind=MessageKind.ACK).size_bytes == 0


class TestAgents:
    @pytest.fixture
    def orchestrator(self, planar_mission):
        L = assemble(planar_mission)
        X0 = initialize(planar_mission, InitStrategy.RANDOM, 3, seed=1)
        return DecentralizedOrchestrator(L, X0, SolverOptions(), NetworkProfile(), seed=0, grad_tol=1e-6)

    def test_payload_outside_separator_set_is_rejected(self, orchestrator):
        agent = orchestrator.agents[0]
        foreign = message(sender=1, receiver=0, payload={0: np.zeros((3, 3))})
        assert agent.receive(foreign) is None
        assert agent.rejected == 1

    def test_stale_updates_are_acked_but_ignored(self, orchestrator):
        agent = orchestrator.agents[0]
        node = int(agent.problem.couplings[1].nodes[0])
        fresh = message(sender=1, receiver=0, sequence=2, payload={node: np.full((3, 3), 2.0)})
        stale = message(sender=1, receiver=0, sequence=1, payload={node: np.full((3, 3), 9.0)})
        assert agent.receive(fresh).kind == MessageKind.ACK
        ack = agent.receive(stale)
        assert ack.kind == MessageKind.ACK and ack.sequence == 1
        assert np.all(agent.cache[1][:, :3] == 2.0)

    def test_unacknowledged_message_is_retransmitted(self, orchestrator):
        agent = orchestrator.agents[0]
        sent = agent.act(0)
        assert sent
        agent.track(sent[0], tick=0)
        assert agent.due_retransmissions(settings.RETRANSMIT_TIMEOUT_TICKS - 1) == []
        assert agent.due_retransmissions(settings.RETRANSMIT_TIMEOUT_TICKS) == [sent[0]]
        agent.receive(message(sender=1, receiver=0, sequence=sent[0].sequence, kind=MessageKind.ACK))
        assert not agent.outstanding


class TestRunDecentralized:
    def test_synchronous_zero_latency_matches_centralized_sweeps(self, planar_mission):
        L = assemble(planar_mission)
        X0 = initialize(planar_mission, InitStrategy.RANDOM, 3, seed=8)
        options = SolverOptions(max_sweeps=6, grad_tol=1e-14)
        central, central_trace = solve(planar_mission, options, X0, laplacian=L)
        run = run_decentralized(planar_mission, options, NetworkProfile(), init=X0, laplacian=L)
        np.testing.assert_allclose(run.state.matrix, central.matrix, atol=1e-10)
        assert [s.cost for s in run.trace.sweeps] == pytest.approx([s.cost for s in central_trace.sweeps], rel=1e-10)
        assert run.traffic.rounds == 6
        assert run.traffic.ticks == 6 * planar_mission.num_robots

    def test_converges_on_a_perfect_network(self, planar_mission):
        run = run_decentralized(planar_mission, SolverOptions(max_sweeps=500), NetworkProfile())
        assert run.trace.termination == TerminationReason.CONVERGED
        assert run.traffic.dropped == 0 and run.traffic.retransmissions == 0

    @pytest.mark.parametrize("seed", range(20))
    def test_lossy_network_converges_to_the_lossless_cost(self, seed):
        graph = mission(seed=seed)
        L = assemble(graph)
        options = SolverOptions(max_sweeps=1000)
        lossless = run_decentralized(graph, options, NetworkProfile(), seed=seed, laplacian=L)
        lossy = run_decentralized(graph, options, LOSSY, seed=seed, laplacian=L)
        assert lossless.trace.termination == TerminationReason.CONVERGED
        assert lossy.trace.termination == TerminationReason.CONVERGED
        assert lossy.state.is_feasible()
        assert cost(L, lossy.state) == pytest.approx(cost(L, lossless.state), rel=1e-4)

    def test_asynchronous_jitter_still_decreases_cost(self, planar_mission):
        L = assemble(planar_mission)
        X0 = initialize(planar_mission, InitStrategy.RANDOM, 3, seed=9)
        run = run_decentralized(planar_mission, SolverOptions(max_sweeps=40), JITTERY, seed=3, init=X0, laplacian=L)
        assert run.state.is_feasible()
        assert cost(L, run.state) < cost(L, X0)
        assert run.traffic.dropped > 0
        assert run.traffic.rounds <= 40

    def test_traffic_statistics_are_consistent(self, spatial_mission):
        run = run_decentralized(spatial_mission, SolverOptions(max_sweeps=20), LOSSY, seed=5)
        traffic = traffic_report(run)
        separators = [entry for entry in run.message_log if entry.kind == MessageKind.SEPARATOR]
        assert traffic.messages_sent == len(separators) == sum(traffic.per_robot_sent)
        assert traffic.bytes_modeled == sum(entry.size for entry in separators)
        assert traffic.dropped == sum(entry.dropped for entry in run.message_log)
        assert sum(traffic.per_robot_received) <= traffic.messages_sent

    def test_seeded_runs_are_identical(self, planar_mission):
        a = run_decentralized(planar_mission, SolverOptions(max_sweeps=15), LOSSY, seed=11)
        b = run_decentralized(planar_mission, SolverOptions(max_sweeps=15), LOSSY, seed=11)
        assert write_message_log(a) == write_message_log(b)
        assert np.array_equal(a.state.matrix, b.state.matrix)

    def test_message_log_lines(self, planar_mission):
        run = run_decentralized(planar_mission, SolverOptions(max_sweeps=3), NetworkProfile())
        lines = write_message_log(run).splitlines()
        assert lines
        for line in lines:
            tick, sender, receiver, sweep, size = (int(field) for field in line.split())
            assert sender != receiver
            assert size > 0 and size % settings.BYTES_PER_ENTRY == 0

    def test_merge_traffic(self, planar_mission):
        runs = [run_decentralized(planar_mission, SolverOptions(max_sweeps=2), NetworkProfile(), seed=s) for s in (0, 1)]
        total = merge_traffic(runs)
        assert total.messages_sent == runs[0].traffic.messages_sent + runs[1].traffic.messages_sent
        assert total.rounds == 4
        assert merge_traffic([]) is None

    def test_initial_state_shape(self, planar_mission, spatial_mission):
        X0 = initialize(spatial_mission, InitStrategy.SPANNING_TREE, 4)
        with pytest.raises(DimensionMismatch):
            run_decentralized(planar_mission, SolverOptions(), NetworkProfile(), init=X0)
