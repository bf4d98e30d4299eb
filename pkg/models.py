import math
from enum import Enum
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class VehicleKind(str, Enum):
    HDV = "HDV"
    AV = "AV"


class Zone(str, Enum):
    CZ = "CZ"
    MZ = "MZ"
    EZ = "EZ"
    EXITED = "Exited"


class Phase(str, Enum):
    GREEN = "Green"
    RED = "Red"
    AMBER = "Amber"


class PlanKind(str, Enum):
    CROSS = "Cross"
    STOP = "Stop"


class CrossSpeed(str, Enum):
    """Speed at which a crossing plan reaches the stop line"""
    FREE = "free"
    MAX = "max"


class StopTiming(str, Enum):
    """When a stop plan comes to rest at the stop point"""
    ANNOUNCED = "announced"  # exactly when the announced red starts
    FREE = "free"            # no earlier than that, at the energy-optimal time


class Scenario(str, Enum):
    MIXED50 = "mixed50"
    HDV_ONLY = "hdv-only"


class EnergyGroup(str, Enum):
    AV_MIXED = "AV_mixed"
    HDV_MIXED = "HDV_mixed"
    HDV_ONLY = "HDV_only"


class ActionId(str, Enum):
    """Traffic-light decision for one block; declaration order is the argmax tie-break order."""
    OPEN_PAIR_13 = "OpenPair13"
    OPEN_PAIR_24 = "OpenPair24"
    ALL_RED = "AllRed"

    def opens(self, lane: int) -> bool:
        """True when the lane is green under this action"""
        if self is ActionId.OPEN_PAIR_13:
            return lane in (1, 3)
        if self is ActionId.OPEN_PAIR_24:
            return lane in (2, 4)
        return False

    def color(self, lane: int) -> Phase:
        return Phase.GREEN if self.opens(lane) else Phase.RED


def _parse_float_tuple(value: Any) -> Any:
    if isinstance(value, str):
        return tuple(float(x) for x in value.replace(" ", "").split(",") if x)
    return value


def _parse_pairs(value: Any) -> Any:
    # "1:3,2:4" -> ((1, 3), (2, 4))
    if isinstance(value, str):
        pairs = []
        for chunk in value.replace(" ", "").split(","):
            if not chunk:
                continue
            left, right = chunk.split(":")
            pairs.append((int(left), int(right)))
        return tuple(pairs)
    return value


class IntersectionConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_lanes: int = 4
    L_M: float = 30.0
    L_C: float = 400.0
    L_E: float = 400.0
    v_max: float = 13.0
    N_max: int = 100
    non_conflicting_pairs: Tuple[Tuple[int, int], ...] = ((1, 3), (2, 4))
    T_S: float = 0.5
    T_RL: float = 15.0
    T_alert: float = 3.0
    d_a: int = 2
    d_follow: float = 5.0
    delta_a: float = 12.0
    s0: float = 2.0
    T_headway: float = 5.0
    epsilon_idm: float = 1.6
    u_max: float = 1.5
    u_min: float = 2.0
    u_min_hard: float = 6.0
    lambda_arrival: float = 450.0
    W: Tuple[float, ...] = (1.0, 1.0, 1.0, 1.0)
    speed_aware_follow: bool = True

    @field_validator("W", mode="before")
    @classmethod
    def _parse_w(cls, value):
        return _parse_float_tuple(value)

    @field_validator("non_conflicting_pairs", mode="before")
    @classmethod
    def _parse_non_conflicting(cls, value):
        return _parse_pairs(value)

    @model_validator(mode="after")
    def _check_invariants(self):
        positive = ("L_M", "L_C", "L_E", "v_max", "u_max", "u_min", "u_min_hard", "s0",
                    "T_headway", "epsilon_idm", "delta_a", "d_follow", "T_S", "T_RL")
        for name in positive:
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise ValueError(f"{name} must be strictly positive, got {value}")
        if self.n_lanes < 1 or self.N_max < 0 or self.d_a < 1:
            raise ValueError("n_lanes and d_a must be >= 1, N_max >= 0")
        n = self.T_RL / self.T_S
        if abs(n - round(n)) > 1e-9 or round(n) < 1:
            raise ValueError(f"T_RL={self.T_RL} is not an integer multiple of T_S={self.T_S}")
        m = self.T_alert / self.T_S
        if abs(m - round(m)) > 1e-9 or not 0 <= round(m) < round(n):
            raise ValueError(f"T_alert={self.T_alert} must be m*T_S with 0 <= m < {round(n)}")
        if self.delta_a >= self.L_C or self.d_follow >= self.L_C:
            raise ValueError("delta_a and d_follow must be shorter than L_C")
        if self.lambda_arrival < 0:
            raise ValueError("lambda_arrival must be non-negative")
        if len(self.W) != self.n_lanes or any(w < 0 for w in self.W):
            raise ValueError(f"W needs {self.n_lanes} non-negative weights")
        seen: set = set()
        for j, l in self.non_conflicting_pairs:
            if not (1 <= j <= self.n_lanes and 1 <= l <= self.n_lanes) or j == l:
                raise ValueError(f"invalid non-conflicting pair ({j}, {l})")
            if j in seen or l in seen:
                raise ValueError("non_conflicting_pairs must be disjoint")
            seen.update((j, l))
        return self

    @property
    def steps_per_block(self) -> int:
        return int(round(self.T_RL / self.T_S))

    @property
    def alert_steps(self) -> int:
        return int(round(self.T_alert / self.T_S))

    @property
    def T_delay(self) -> float:
        return self.d_a * self.T_RL

    @property
    def total_length(self) -> float:
        return self.L_C + self.L_M + self.L_E


class SimSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    seed: int = Field(default=0, ge=0, lt=2 ** 64)
    p_av: float = Field(default=0.5, ge=0.0, le=1.0)
    horizon_s: float = Field(default=3600.0, ge=0.0)
    lambda_per_lane: bool = False
    halt_on_violation: bool = False
    entry_speed_min: float = 9.0
    entry_speed_max: float = 11.0
    entry_accel_min: float = 0.0
    entry_accel_max: float = 0.5


class PenaltyWeights(BaseModel):
    model_config = ConfigDict(frozen=True)

    K_vmax: float = Field(default=1e3, ge=0.0, allow_inf_nan=False)
    K_vmin: float = Field(default=1e3, ge=0.0, allow_inf_nan=False)
    K1_tcross: float = Field(default=1e4, ge=0.0, allow_inf_nan=False)
    K2_tcross: float = Field(default=1e4, ge=0.0, allow_inf_nan=False)


class SolverSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    max_iter: int = Field(default=500, ge=1)
    rel_tol: float = Field(default=1e-8, gt=0.0)
    tol_v: float = Field(default=0.05, gt=0.0)
    cross_speed: CrossSpeed = CrossSpeed.FREE
    stop_time: StopTiming = StopTiming.FREE
    # latest rest time of a free stop plan, counted from the announcement
    stop_horizon_s: float = Field(default=120.0, gt=0.0, allow_inf_nan=False)


class LearnerConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    gamma: float = Field(default=0.95, ge=0.0, le=1.0)
    alpha_initial: float = Field(default=0.5, ge=0.0, le=1.0)
    alpha_decay: float = Field(default=0.9995, ge=0.0, le=1.0)
    alpha_min: float = Field(default=0.05, ge=0.0, le=1.0)
    epsilon_initial: float = Field(default=1.0, ge=0.0, le=1.0)
    epsilon_decay: float = Field(default=0.999, ge=0.0, le=1.0)
    epsilon_min: float = Field(default=0.05, ge=0.0, le=1.0)
    bucket_width: int = Field(default=5, ge=1)
    bucket_count: int = Field(default=6, ge=1)
    episodes: int = Field(default=300, ge=0)
    episode_length_blocks: int = Field(default=240, ge=0)
    allow_all_red: bool = False

    def alpha(self, t: int) -> float:
        return max(self.alpha_min, self.alpha_initial * self.alpha_decay ** t)

    def epsilon(self, t: int) -> float:
        return max(self.epsilon_min, self.epsilon_initial * self.epsilon_decay ** t)


class LanePhase(BaseModel):
    model_config = ConfigDict(frozen=True)

    phase: Phase
    phase_entered_at: float
    # color of the block this phase belongs to; differs from phase only during amber
    block_color: Phase


class Announcement(BaseModel):
    model_config = ConfigDict(frozen=True)

    color: Literal[Phase.GREEN, Phase.RED]
    at: float


class TrajectoryPlan(BaseModel):
    model_config = ConfigDict(frozen=True)

    t_start: float
    controls: Tuple[float, ...]
    t_terminal: float
    kind: PlanKind
    objective_value: float
    p_start: float
    v_start: float
    dt: float
    overspeed: float = 0.0
    underspeed: float = 0.0
    max_violation: float = 0.0

    def control_index(self, clock: float) -> int:
        return int(round((clock - self.t_start) / self.dt))


class PlanRequest(BaseModel):
    model_config = ConfigDict(frozen=True)

    t_now: float
    p_now: float
    v_now: float
    announced: Announcement
    amber_applies: bool
    cfg: IntersectionConfig

    @model_validator(mode="after")
    def _check_request(self):
        blocks = self.t_now / self.cfg.T_RL
        if self.t_now < 0 or abs(blocks - round(blocks)) > 1e-9:
            raise ValueError(f"t_now={self.t_now} is not a block boundary")
        if not 0.0 <= self.p_now < self.cfg.L_C:
            raise ValueError(f"p_now={self.p_now} outside the control zone")
        if not 0.0 <= self.v_now <= self.cfg.v_max:
            raise ValueError(f"v_now={self.v_now} outside [0, v_max]")
        return self


class AffineControl(BaseModel):
    """Unconstrained minimum-energy control u(t) = a + b*t"""
    model_config = ConfigDict(frozen=True)

    a: float
    b: float
    objective: float


class VehicleState(BaseModel):
    # mutated in place by the engine that owns it
    id: int
    lane: int
    kind: VehicleKind
    position: float = 0.0
    speed: float = 0.0
    accel: float = 0.0
    t_entry: float = 0.0
    plan: Optional[TrajectoryPlan] = None
    fallback_engaged: bool = False
    idm_override: bool = False
    energy: float = 0.0
    t_mz_exit: Optional[float] = None

    def engage_fallback(self):
        """Latch IDM driving for the rest of the journey"""
        self.fallback_engaged = True
        self.plan = None


class ScriptedArrival(BaseModel):
    """Deterministic arrival used instead of the Poisson stream"""
    model_config = ConfigDict(frozen=True)

    t: float = Field(ge=0.0)
    lane: int = Field(ge=1)
    kind: VehicleKind = VehicleKind.HDV
    speed: float = Field(default=10.0, ge=0.0)
    accel: float = 0.0


class LeaderInfo(BaseModel):
    model_config = ConfigDict(frozen=True)

    position: float
    speed: float


class IdmContext(BaseModel):
    model_config = ConfigDict(frozen=True)

    self_speed: float
    self_position: float
    desired_speed: float
    leader: Optional[LeaderInfo] = None
    lane_phase: LanePhase
    cfg: IntersectionConfig
    clock: float = 0.0

    @model_validator(mode="after")
    def _check_context(self):
        if self.leader is not None and self.leader.position < self.self_position:
            raise ValueError("leader must not be behind the subject vehicle")
        if not 0.0 < self.desired_speed <= self.cfg.v_max:
            raise ValueError("desired_speed must lie in (0, v_max]")
        return self


class AugmentedState(BaseModel):
    model_config = ConfigDict(frozen=True)

    buckets: Tuple[int, ...]
    pending: Tuple[ActionId, ...]


class QEntry(BaseModel):
    q: float = 0.0
    visits: int = 0


class VehicleRecord(BaseModel):
    id: int
    lane: int
    kind: VehicleKind
    t_entry: float
    t_exit: float
    wait_time: float
    energy: float


class BlockRecord(BaseModel):
    k: int
    t: float
    queues: Tuple[int, ...]
    action: ActionId
    reward: float
    phases: Tuple[Phase, ...]


class MetricsLog(BaseModel):
    vehicles: List[VehicleRecord] = []
    blocks: List[BlockRecord] = []
    spawned: int = 0
    dropped_arrivals: int = 0
    in_system_at_end: Dict[VehicleKind, int] = {}


class EnergyStats(BaseModel):
    model_config = ConfigDict(frozen=True)

    group: EnergyGroup
    count: int
    mean: float
    median: float
    mode: float
    std_dev: float
    excluded_in_system: int = 0


class TrainingPoint(BaseModel):
    episode: int
    cumulative_reward: float
    avg_wait_s: float
    avg_queue_per_lane: float


class CommandResult(BaseModel):
    status: Literal["success", "error"]
    message: Optional[str] = None
    code: Optional[str] = None
    data: Optional[Dict[str, Any]] = None
