"""
Utility functions and helpers for CertiPGO.
"""
import math
from typing import List, Sequence

from models.schemas import SolveReport
from utils.logger import get_logger

logger = get_logger("helpers")


def improvement_percent(baseline: float, ours: float) -> float:
    """(baseline - ours) / baseline * 100, rounded to one decimal."""
    if not baseline > 0 or not math.isfinite(baseline) or not math.isfinite(ours):
        logger.warning(f"Improvement undefined for baseline {baseline} and estimate {ours}")
        return 0.0
    return round((baseline - ours) / baseline * 100.0, 1)


def improvements(baselines: Sequence[float], ours: Sequence[float]) -> List[float]:
    """Per-robot improvement percentages."""
    if len(baselines) != len(ours):
        raise ValueError(f"Got {len(baselines)} baseline values for {len(ours)} estimates")
    return [improvement_percent(b, o) for b, o in zip(baselines, ours)]


def format_time_duration(seconds: float) -> str:
    """Format duration in seconds to human readable format."""
    if seconds < 60:
        return f"{seconds:.1f}s"
    elif seconds < 3600:
        minutes = seconds / 60
        return f"{minutes:.1f}m"
    else:
        hours = seconds / 3600
        return f"{hours:.1f}h"


def format_bytes(size: int) -> str:
    """Format a byte count with binary prefixes."""
    value = float(size)
    for unit in ("B", "KiB", "MiB"):
        if value < 1024 or unit == "MiB":
            return f"{value:.0f} {unit}" if unit == "B" else f"{value:.1f} {unit}"
        value /= 1024
    return f"{value:.1f} MiB"


def format_solve_report(report: SolveReport) -> str:
    """Human-readable summary of a solve, written to stderr by the CLI."""
    lines = [
        "=" * 50,
        "CERTIPGO SOLVE REPORT",
        "=" * 50,
        f"Mode: {report.mode.value}",
        f"Final cost: {report.final_cost:.9g}",
        f"Iterations: {report.iterations}",
    ]
    if report.verdict is not None:
        lines.append(f"Certificate: {report.verdict.value} (lambda = {report.lambda_d_plus_1})")
        lines.append(f"Final rank: {report.final_rank}")
    if report.termination:
        lines.append(f"Termination: {report.termination}")

    if report.per_robot_rmse:
        lines.extend(["", "ATE RMSE PER ROBOT:"])
        for robot, rmse in enumerate(report.per_robot_rmse):
            row = f"• robot {robot}: {rmse:.3f} m"
            if robot < len(report.baseline_rmse):
                row += f" (one-time fusion {report.baseline_rmse[robot]:.3f} m"
                if robot < len(report.improvement_percent):
                    row += f", {report.improvement_percent[robot]:+.1f}%"
                row += ")"
            lines.append(row)

    if report.traffic is not None:
        lines.extend([
            "",
            "TRAFFIC:",
            f"• messages: {report.traffic.messages_sent} ({report.traffic.retransmissions} retransmitted)",
            f"• acknowledgements: {report.traffic.acks_sent}, dropped: {report.traffic.dropped}",
            f"• payload: {format_bytes(report.traffic.bytes_modeled)} over {report.traffic.rounds} rounds",
        ])

    lines.append("=" * 50)
    return "\n".join(lines)
