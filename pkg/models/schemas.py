"""
Pydantic models and schemas for CertiPGO options, specifications and reports.
"""
from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, Field, field_validator, model_validator


class TrajectoryShape(str, Enum):
    """Synthetic trajectory shape enumeration."""
    RING = "ring"
    GRID = "grid"
    LINE = "line"


class BlockRule(str, Enum):
    """Block selection rule for coordinate descent."""
    ROUND_ROBIN = "round_robin"
    GREEDY_GRADIENT = "greedy_gradient"


class StepRule(str, Enum):
    """Search direction used inside a block update."""
    GRADIENT = "gradient"
    NEWTON_CG = "newton_cg"


class TerminationReason(str, Enum):
    """Why a solve stopped."""
    CONVERGED = "converged"
    MAX_SWEEPS = "max_sweeps"
    ESCAPED_RANK_LIMIT = "escaped_rank_limit"
    ESCAPE_FAILED = "escape_failed"


class Verdict(str, Enum):
    """Outcome of the dual certificate test."""
    CERTIFIED = "certified"
    NOT_CERTIFIED = "not_certified"
    INDETERMINATE = "indeterminate"


class InitStrategy(str, Enum):
    """Initialization strategy for the lifted state."""
    SPANNING_TREE = "spanning_tree"
    GIVEN = "given"
    RANDOM = "random"


class SolveMode(str, Enum):
    """Pipeline selected on the command line."""
    CERTIFIED = "certified"
    GAUSS_NEWTON = "gauss-newton"
    ONE_TIME = "one-time"


class NetworkMode(str, Enum):
    """Scheduling mode of the network simulator."""
    SYNCHRONOUS_ROUNDS = "synchronous_rounds"
    ASYNCHRONOUS = "asynchronous"


class NoiseModel(BaseModel):
    """Measurement noise of a synthetic mission."""
    rot_stddev: float = Field(0.0, ge=0, description="Rotation noise per edge (radians)")
    trans_stddev: float = Field(0.0, ge=0, description="Translation noise per axis (meters)")
    seed: int = Field(0, ge=0, lt=2**64, description="Seed of the noise generator")


class MissionSpec(BaseModel):
    """Description of a synthetic multi-robot mission."""
    num_robots: int = Field(2, ge=1, description="Number of agents")
    poses_per_robot: int = Field(10, ge=1, description="Poses per agent")
    dimension: int = Field(3, description="Pose dimension d (2 or 3)")
    trajectory_shape: TrajectoryShape = Field(TrajectoryShape.RING, description="Shape of the base path")
    intra_loop_period: int = Field(0, ge=0, description="Every k-th pose closes to the pose k earlier (0 disables)")
    inter_overlap: float = Field(0.2, ge=0, le=1, description="Fraction of a trajectory overlapping the next robot's")
    step_length: float = Field(1.0, gt=0, description="Distance between consecutive poses (meters)")
    noise: NoiseModel = Field(default_factory=NoiseModel, description="Noise model")

    @field_validator("dimension")
    @classmethod
    def validate_dimension(cls, v):
        """Only planar and spatial problems are supported."""
        if v not in (2, 3):
            raise ValueError("dimension must be 2 or 3")
        return v


class SolverOptions(BaseModel):
    """Options of the Riemannian block-coordinate descent solver and staircase."""
    r_init: Optional[int] = Field(None, ge=2, description="Initial rank (default d+1)")
    r_max: Optional[int] = Field(None, ge=2, description="Maximum rank (default d+4)")
    grad_tol: Optional[float] = Field(None, gt=0, description="Gradient norm threshold (default 1e-6*(1+initial cost))")
    max_sweeps: int = Field(1000, ge=1, description="Maximum number of block sweeps")
    inner_steps: int = Field(5, ge=1, description="Retracted steps per block update")
    block_rule: BlockRule = Field(BlockRule.ROUND_ROBIN, description="Block selection rule")
    step_rule: StepRule = Field(StepRule.NEWTON_CG, description="Direction inside a block update")
    seed: int = Field(0, ge=0, description="Seed for random initialization")

    @model_validator(mode="after")
    def validate_ranks(self):
        """r_init may not exceed r_max."""
        if self.r_init is not None and self.r_max is not None and self.r_init > self.r_max:
            raise ValueError("r_init must not exceed r_max")
        return self

    def ranks_for(self, d: int):
        """Resolve (r_init, r_max) for dimension d."""
        r_init = self.r_init if self.r_init is not None else d + 1
        r_max = self.r_max if self.r_max is not None else d + 4
        if r_init < d:
            raise ValueError(f"r_init={r_init} is below the problem dimension {d}")
        return r_init, max(r_max, r_init)


class NetworkProfile(BaseModel):
    """Link model of the decentralized harness."""
    latency_min: int = Field(0, ge=0, description="Minimum delivery delay (ticks)")
    latency_max: int = Field(0, ge=0, description="Maximum delivery delay (ticks)")
    drop_prob: float = Field(0.0, ge=0, lt=1, description="Per-message drop probability")
    mode: NetworkMode = Field(NetworkMode.SYNCHRONOUS_ROUNDS, description="Scheduling mode")

    @model_validator(mode="after")
    def validate_latency(self):
        """Latency range must be ordered."""
        if self.latency_max < self.latency_min:
            raise ValueError("latency_max must be >= latency_min")
        return self


class SweepRecord(BaseModel):
    """Solver state after one sweep."""
    cost: float = Field(..., description="Objective value")
    gradient_norm: float = Field(..., ge=0, description="Full Riemannian gradient norm")
    rank: int = Field(..., description="Lifted rank r")


class SolveTrace(BaseModel):
    """History of a solve."""
    sweeps: List[SweepRecord] = Field(default_factory=list, description="Per-sweep records")
    termination: TerminationReason = Field(TerminationReason.MAX_SWEEPS, description="Termination reason")
    null_steps: int = Field(0, ge=0, description="Block updates that found no decrease")
    escapes: int = Field(0, ge=0, description="Rank escalations performed")
    grad_tol: Optional[float] = Field(None, description="Gradient tolerance used")

    @property
    def iterations(self) -> int:
        return len(self.sweeps)

    @property
    def final_cost(self) -> Optional[float]:
        return self.sweeps[-1].cost if self.sweeps else None

    def extend(self, other: "SolveTrace") -> None:
        self.sweeps.extend(other.sweeps)
        self.null_steps += other.null_steps
        self.termination = other.termination
        self.grad_tol = other.grad_tol


class GaussNewtonTrace(BaseModel):
    """History of the Gauss-Newton baseline."""
    costs: List[float] = Field(default_factory=list, description="Accepted costs, initial first")
    iterations: int = Field(0, ge=0, description="Linear solves performed")
    rejected_steps: int = Field(0, ge=0, description="Steps rejected by the damping schedule")
    final_damping: float = Field(0.0, description="Damping at termination")


class CertificateSummary(BaseModel):
    """Certificate data embedded in reports."""
    verdict: Verdict = Field(..., description="Certificate verdict")
    lambda_small: List[float] = Field(default_factory=list, description="Smallest eigenvalues of S, ascending")
    lambda_d_plus_1: float = Field(..., description="Smallest eigenvalue beyond the structural kernel")
    tol_used: float = Field(..., description="Absolute eigenvalue tolerance")
    diagnostic: str = Field("", description="Eigen-solver diagnostic")


class TrafficStats(BaseModel):
    """Communication cost of a decentralized run."""
    messages_sent: int = Field(0, ge=0, description="Separator messages sent, retransmissions included")
    retransmissions: int = Field(0, ge=0, description="Separator messages resent after a timeout")
    acks_sent: int = Field(0, ge=0, description="Acknowledgements sent")
    dropped: int = Field(0, ge=0, description="Messages lost by the network")
    bytes_modeled: int = Field(0, ge=0, description="Payload entries times bytes per entry")
    per_robot_sent: List[int] = Field(default_factory=list, description="Separator messages sent per robot")
    per_robot_received: List[int] = Field(default_factory=list, description="Separator messages delivered per robot")
    rounds: int = Field(0, ge=0, description="Completed token rounds")
    ticks: int = Field(0, ge=0, description="Scheduler ticks elapsed")


class SolveReport(BaseModel):
    """Machine-readable summary of one solve."""
    mode: SolveMode = Field(SolveMode.CERTIFIED, description="Pipeline that produced the report")
    certified: Optional[bool] = Field(None, description="Certificate verdict is certified")
    verdict: Optional[Verdict] = Field(None, description="Full certificate verdict")
    lambda_d_plus_1: Optional[float] = Field(None, description="lambda_{d+1}(S*)")
    final_rank: Optional[int] = Field(None, description="Lifted rank at termination")
    final_cost: float = Field(..., description="Objective of the rounded poses")
    iterations: int = Field(0, ge=0, description="Sweeps or Gauss-Newton iterations")
    termination: Optional[str] = Field(None, description="Termination reason")
    per_robot_rmse: List[float] = Field(default_factory=list, description="ATE RMSE per robot (m)")
    baseline_rmse: List[float] = Field(default_factory=list, description="One-time fusion ATE RMSE per robot (m)")
    improvement_percent: List[float] = Field(default_factory=list, description="Improvement over the baseline per robot")
    traffic: Optional[TrafficStats] = Field(None, description="Decentralized communication statistics")
