"""
CertiPGO - Certifiably optimal multi-robot pose-graph optimization
Command-line application
"""
import argparse
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional

from config.experiment import ExperimentConfig, load_experiment
from config.settings import settings
from core.baseline import odometry_trajectories
from core.io_g2o import (
    parse_g2o,
    read_ground_truth,
    robot_trajectory,
    write_g2o,
    write_ground_truth,
    write_report,
    write_tum,
)
from core.pipeline import (
    build_report,
    compare,
    exit_status,
    initial_poses,
    initial_state,
    run_certified,
    run_gauss_newton,
    run_one_time,
)
from core.synthetic import generate, mission_summary, perturb_initial_guess
from models.errors import InvalidGraph, PGOError
from models.pose_graph import MultiRobotGraph, NodeId, Pose
from models.schemas import InitStrategy, SolveMode
from utils.helpers import format_solve_report, format_time_duration
from utils.logger import get_logger

# Initialize logger
logger = get_logger("cli")

INIT_CHOICES = {
    "spanning-tree": InitStrategy.SPANNING_TREE,
    "random": InitStrategy.RANDOM,
    "file": InitStrategy.GIVEN,
}


def ground_truth_path(graph_path: Path) -> Path:
    """Sidecar written next to a generated graph: OUTPUT.g2o -> OUTPUT.gt.tum."""
    return graph_path.with_suffix(".gt.tum")


def load_graph(path: Path) -> MultiRobotGraph:
    graph = parse_g2o(path.read_bytes())
    report = graph.validate()
    if not report.is_valid:
        raise InvalidGraph(f"{path}: {report.summary()}")
    return graph


def load_ground_truth(path: Optional[Path], graph: MultiRobotGraph) -> Optional[Dict[NodeId, Pose]]:
    if path is None:
        return None
    return read_ground_truth(path.read_text(encoding="utf-8"), graph.dimension)


def cmd_generate(args: argparse.Namespace) -> int:
    config = load_experiment(args.config)
    graph = generate(config.mission)
    if config.initial_guess is not None:
        spec = config.initial_guess
        vertices = perturb_initial_guess(graph, spec.magnitude_rot, spec.magnitude_trans, spec.seed)
    else:
        vertices = odometry_trajectories(graph)

    output = Path(args.output)
    output.write_text(write_g2o(graph, vertices), encoding="utf-8")
    sidecar = ground_truth_path(output)
    sidecar.write_text(write_ground_truth(graph, graph.ground_truth), encoding="utf-8")
    nodes, intra, inter = mission_summary(graph)
    logger.info(f"Wrote {output} ({nodes} poses, {intra} intra, {inter} inter edges) and {sidecar}")
    return settings.EXIT_CODES["success"]


def cmd_solve(args: argparse.Namespace) -> int:
    graph_path = Path(args.input)
    graph = load_graph(graph_path)
    config = load_experiment(args.profile) if args.profile else ExperimentConfig()
    options = config.solver
    if args.seed is not None:
        options = options.model_copy(update={"seed": args.seed})
    strategy = INIT_CHOICES[args.init]
    mode = SolveMode(args.mode)

    truth_path = Path(args.ground_truth) if args.ground_truth else None
    if truth_path is None and ground_truth_path(graph_path).exists():
        truth_path = ground_truth_path(graph_path)
    ground_truth = load_ground_truth(truth_path, graph)

    started = time.perf_counter()
    if mode == SolveMode.CERTIFIED:
        result = run_certified(
            graph,
            options,
            init=initial_state(graph, options, strategy),
            decentralized=args.decentralized,
            profile=config.network,
            seed=options.seed,
        )
    elif mode == SolveMode.GAUSS_NEWTON:
        result = run_gauss_newton(graph, initial_poses(graph, strategy, options.seed))
    else:
        result = run_one_time(graph)
    logger.info(f"{mode.value} solve finished in {format_time_duration(time.perf_counter() - started)}")

    report = build_report(result, ground_truth)
    logger.info("\n" + format_solve_report(report))
    text = write_report(report)
    if args.report:
        Path(args.report).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)

    if args.traj_out:
        directory = Path(args.traj_out)
        directory.mkdir(parents=True, exist_ok=True)
        for robot in range(graph.num_robots):
            trajectory = robot_trajectory(graph, result.poses, robot)
            (directory / f"robot_{robot}.tum").write_text(write_tum(trajectory), encoding="utf-8")
    if args.message_log:
        Path(args.message_log).write_text(result.message_log(), encoding="utf-8")

    return settings.EXIT_CODES[exit_status(result)]


def cmd_compare(args: argparse.Namespace) -> int:
    graph = load_graph(Path(args.input))
    ground_truth = load_ground_truth(Path(args.ground_truth), graph)
    table = compare(graph, ground_truth, args.seeds)
    sys.stdout.write(table.to_string(index=False) + "\n")
    if args.csv:
        table.to_csv(args.csv, index=False)
    if args.json:
        Path(args.json).write_text(table.to_json(orient="records", indent=2) + "\n", encoding="utf-8")
    return settings.EXIT_CODES["success"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="certipgo", description="Certifiably optimal multi-robot pose-graph optimization")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="Generate a synthetic mission")
    gen.add_argument("config", help="Experiment INI file")
    gen.add_argument("output", help="Output g2o file; ground truth goes to OUTPUT.gt.tum")
    gen.set_defaults(handler=cmd_generate)

    solve = sub.add_parser("solve", help="Solve a g2o pose graph")
    solve.add_argument("input", help="Input g2o file")
    solve.add_argument("--mode", choices=[m.value for m in SolveMode], default=SolveMode.CERTIFIED.value)
    solve.add_argument("--init", choices=sorted(INIT_CHOICES), default="spanning-tree")
    solve.add_argument("--decentralized", action="store_true", help="Run the message-passing agents")
    solve.add_argument("--profile", help="Experiment INI file with [solver] and [network] sections")
    solve.add_argument("--seed", type=int, default=None)
    solve.add_argument("--report", help="Write the JSON report here instead of stdout")
    solve.add_argument("--traj-out", help="Directory for robot_<k>.tum trajectories")
    solve.add_argument("--ground-truth", help="Ground-truth TUM sidecar (default: INPUT.gt.tum if present)")
    solve.add_argument("--message-log", help="Write the decentralized message log here")
    solve.set_defaults(handler=cmd_solve)

    cmp_ = sub.add_parser("compare", help="Compare methods against ground truth")
    cmp_.add_argument("input", help="Input g2o file")
    cmp_.add_argument("ground_truth", help="Ground-truth TUM sidecar")
    cmp_.add_argument("--seeds", type=int, nargs="+", default=[0])
    cmp_.add_argument("--csv", help="Write the table as CSV")
    cmp_.add_argument("--json", help="Write the table as JSON records")
    cmp_.set_defaults(handler=cmd_compare)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings.validate_config()
        return args.handler(args)
    except PGOError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return settings.EXIT_CODES["input_error"]
    except (OSError, ValueError) as e:
        logger.error(f"Input error: {e}")
        return settings.EXIT_CODES["input_error"]


if __name__ == "__main__":
    sys.exit(main())
