import logging
from collections import deque
from typing import Deque, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from av_planner import plan_green, plan_red, replan_on_green, should_fallback
from error_handler import AlreadyPastStopPoint, InfeasibleWindow, InvalidInput
from geometry import free_flow_exit_time, zone_of
from idm_dynamics import hdv_accel
from models import (
    ActionId, Announcement, BlockRecord, IdmContext, IntersectionConfig, LanePhase,
    LeaderInfo, MetricsLog, PenaltyWeights, Phase, PlanKind, PlanRequest, ScriptedArrival,
    SimSettings, SolverSettings, VehicleKind, VehicleRecord, VehicleState, Zone,
)
from safety_monitor import SafetyMonitor
from sim_logger import sim_logger

logger = logging.getLogger(__name__)

# actions awaiting execution when the first block starts
INITIAL_ACTION = ActionId.OPEN_PAIR_13

# order fixes each stream's spawn key; append only
STREAMS = ("arrivals", "lanes", "kinds", "speeds", "accels", "exploration")


def named_stream(seed: int, name: str, episode: int = 0) -> np.random.Generator:
    """Independent generator per (seed, stream, episode) so toggling one stream never shifts another"""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(STREAMS.index(name), episode)))


def compute_reward(X_k: Sequence[int], X_k1: Sequence[int], W: Sequence[float]) -> float:
    """Weighted decrease of the control-zone queues over one block"""
    if not len(X_k) == len(X_k1) == len(W):
        raise InvalidInput(f"Length mismatch: {len(X_k)}, {len(X_k1)}, {len(W)}")
    before = sum(w * x for w, x in zip(W, X_k))
    after = sum(w * x for w, x in zip(W, X_k1))
    return float(before - after)


class IntersectionEngine:
    def __init__(self, cfg: IntersectionConfig, sim: SimSettings,
                 weights: Optional[PenaltyWeights] = None,
                 solver: Optional[SolverSettings] = None,
                 episode: int = 0,
                 arrival_script: Optional[Iterable[ScriptedArrival]] = None):
        self.cfg = cfg
        self.sim = sim
        self.weights = weights or PenaltyWeights()
        self.solver = solver or SolverSettings()
        self.episode = episode

        self.step_index = 0
        self.lanes: Dict[int, List[VehicleState]] = {lane: [] for lane in range(1, cfg.n_lanes + 1)}
        self.pending: Deque[ActionId] = deque([INITIAL_ACTION] * cfg.d_a)
        self.applied: List[ActionId] = []
        self.lane_phases: Dict[int, LanePhase] = {
            lane: LanePhase(phase=INITIAL_ACTION.color(lane), phase_entered_at=0.0,
                            block_color=INITIAL_ACTION.color(lane))
            for lane in self.lanes
        }
        self.metrics = MetricsLog()
        self.monitor = SafetyMonitor(cfg, sim.halt_on_violation, initial_action=INITIAL_ACTION)
        self._next_id = 0

        self._script: Optional[List[ScriptedArrival]] = None
        if arrival_script is not None:
            self._script = sorted(arrival_script, key=lambda a: a.t)
            for arrival in self._script:
                if arrival.lane > cfg.n_lanes:
                    raise InvalidInput(f"Scripted arrival on unknown lane {arrival.lane}")
        self._script_pos = 0
        self._rng = {name: named_stream(sim.seed, name, episode) for name in STREAMS if name != "exploration"}

    @property
    def clock(self) -> float:
        return self.step_index * self.cfg.T_S

    @property
    def block_index(self) -> int:
        return self.step_index // self.cfg.steps_per_block

    @property
    def vehicle_count(self) -> int:
        return sum(len(queue) for queue in self.lanes.values())

    @property
    def pending_actions(self) -> Tuple[ActionId, ...]:
        return tuple(self.pending)

    # ---- arrivals -------------------------------------------------------

    def _scripted_arrivals(self) -> List[Tuple[int, VehicleKind, float, float]]:
        end = self.clock + self.cfg.T_S
        drawn = []
        while self._script_pos < len(self._script) and self._script[self._script_pos].t < end - 1e-9:
            arrival = self._script[self._script_pos]
            drawn.append((arrival.lane, arrival.kind, arrival.speed, arrival.accel))
            self._script_pos += 1
        return drawn

    def _poisson_arrivals(self) -> List[Tuple[int, VehicleKind, float, float]]:
        cfg, sim = self.cfg, self.sim
        rate = cfg.lambda_arrival * cfg.T_S / 3600.0
        if sim.lambda_per_lane:
            counts = self._rng["arrivals"].poisson(rate, size=cfg.n_lanes)
            lanes = [lane for lane, count in zip(range(1, cfg.n_lanes + 1), counts) for _ in range(count)]
        else:
            count = int(self._rng["arrivals"].poisson(rate))
            lanes = [int(x) for x in self._rng["lanes"].integers(1, cfg.n_lanes + 1, size=count)]

        drawn = []
        for lane in lanes:
            # every arrival consumes its draws, dropped or not
            is_av = self._rng["kinds"].random() < sim.p_av
            speed = float(self._rng["speeds"].uniform(sim.entry_speed_min, sim.entry_speed_max))
            accel = float(self._rng["accels"].uniform(sim.entry_accel_min, sim.entry_accel_max))
            drawn.append((lane, VehicleKind.AV if is_av else VehicleKind.HDV, speed, accel))
        return drawn

    def spawn_arrivals(self) -> int:
        """Admit this step's arrivals at position 0; returns how many were admitted"""
        arrivals = self._scripted_arrivals() if self._script is not None else self._poisson_arrivals()
        admitted = 0
        for lane, kind, speed, accel in arrivals:
            queue = self.lanes[lane]
            jam_gap = self.cfg.s0 + speed * speed / (2.0 * self.cfg.u_min_hard)
            if self.vehicle_count >= self.cfg.N_max or (queue and queue[-1].position <= jam_gap):
                self.metrics.dropped_arrivals += 1
                continue
            queue.append(VehicleState(
                id=self._next_id, lane=lane, kind=kind, position=0.0,
                speed=min(speed, self.cfg.v_max), accel=accel, t_entry=self.clock,
            ))
            self._next_id += 1
            self.metrics.spawned += 1
            admitted += 1
        return admitted

    # ---- light actuation ------------------------------------------------

    def actuate_block_boundary(self, new_action: ActionId):
        cfg = self.cfg
        if self.step_index % cfg.steps_per_block != 0:
            raise InvalidInput(f"Clock {self.clock} is not on a block boundary")
        applied = self.pending.popleft()
        previous = self.applied[-1] if self.applied else None
        clock = self.clock

        for lane, phase in self.lane_phases.items():
            color = applied.color(lane)
            if previous is None or previous.color(lane) is not color:
                first = Phase.AMBER if previous is not None and cfg.alert_steps > 0 else color
                self.lane_phases[lane] = LanePhase(phase=first, phase_entered_at=clock, block_color=color)
        self.applied.append(applied)

        self.pending.append(new_action)

        before = self.pending[-2] if len(self.pending) > 1 else applied
        self._broadcast(new_action, before)

    def _broadcast(self, announced: ActionId, before: ActionId):
        cfg = self.cfg
        at = self.clock + cfg.T_delay
        for lane, queue in self.lanes.items():
            color = announced.color(lane)
            announcement = Announcement(color=color, at=at)
            amber = cfg.alert_steps > 0 and before.color(lane) is not color
            for index, vehicle in enumerate(queue):
                if vehicle.kind is not VehicleKind.AV or vehicle.fallback_engaged:
                    continue
                if zone_of(vehicle.position, cfg) is not Zone.CZ:
                    continue
                leader = queue[index - 1] if index > 0 else None
                if should_fallback(vehicle, leader, cfg):
                    self._engage_fallback(vehicle, leader)
                    continue
                self._plan_for(vehicle, announcement, amber)

    def _plan_for(self, vehicle: VehicleState, announcement: Announcement, amber: bool):
        current = vehicle.plan
        green = announcement.color is Phase.GREEN
        replanning = current is not None and current.kind is PlanKind.STOP and green
        if current is not None and not vehicle.idm_override and not replanning:
            return

        req = PlanRequest(
            t_now=self.clock, p_now=vehicle.position, v_now=min(vehicle.speed, self.cfg.v_max),
            announced=announcement, amber_applies=amber, cfg=self.cfg,
        )
        try:
            if replanning:
                plan = replan_on_green(current, req, self.weights, self.solver)
            elif green:
                plan = plan_green(req, self.weights, self.solver)
            else:
                plan = plan_red(req, self.weights, self.solver)
        except (AlreadyPastStopPoint, InfeasibleWindow) as e:
            vehicle.plan = None
            vehicle.idm_override = True
            sim_logger.log_plan_event(vehicle.id, "IDM_OVERRIDE", {"reason": e.error_code, "t": self.clock})
            return

        vehicle.plan = plan
        vehicle.idm_override = False
        sim_logger.log_plan_event(vehicle.id, plan.kind.value, {
            "t": self.clock, "t_terminal": plan.t_terminal,
            "objective": round(plan.objective_value, 6), "max_violation": plan.max_violation,
        })

    def _engage_fallback(self, vehicle: VehicleState, leader: VehicleState):
        vehicle.engage_fallback()
        sim_logger.log_plan_event(vehicle.id, "FALLBACK", {
            "t": self.clock, "gap": leader.position - vehicle.position,
        })

    # ---- dynamics -------------------------------------------------------

    def _end_amber(self):
        if self.step_index % self.cfg.steps_per_block < self.cfg.alert_steps:
            return
        for lane, phase in self.lane_phases.items():
            if phase.phase is Phase.AMBER:
                self.lane_phases[lane] = LanePhase(
                    phase=phase.block_color, phase_entered_at=self.clock, block_color=phase.block_color
                )

    def _idm(self, vehicle: VehicleState, leader: Optional[VehicleState]) -> float:
        # hot loop: the engine builds these from already-validated state
        ctx = IdmContext.model_construct(
            self_speed=vehicle.speed,
            self_position=vehicle.position,
            desired_speed=self.cfg.v_max,
            leader=None if leader is None else LeaderInfo.model_construct(
                position=leader.position, speed=leader.speed),
            lane_phase=self.lane_phases[vehicle.lane],
            cfg=self.cfg,
            clock=self.clock,
        )
        return hdv_accel(ctx)

    def _select_accel(self, vehicle: VehicleState, leader: Optional[VehicleState]) -> float:
        cfg = self.cfg
        if vehicle.kind is VehicleKind.HDV or vehicle.fallback_engaged:
            return self._idm(vehicle, leader)
        if leader is not None and should_fallback(vehicle, leader, cfg):
            self._engage_fallback(vehicle, leader)
            return self._idm(vehicle, leader)

        plan = vehicle.plan
        if plan is not None:
            index = plan.control_index(self.clock)
            if 0 <= index < len(plan.controls):
                return plan.controls[index]
            if plan.kind is PlanKind.CROSS:
                return self._ramp_to_v_max(vehicle)
            return min(cfg.u_max, max(-cfg.u_min_hard, -vehicle.speed / cfg.T_S))
        if vehicle.idm_override:
            return self._idm(vehicle, leader)
        # no announcement received yet: hold the entry speed
        return 0.0

    def _ramp_to_v_max(self, vehicle: VehicleState) -> float:
        """Constant acceleration that reaches v_max on leaving the exiting zone; recomputing it each step gives the same value"""
        cfg = self.cfg
        if vehicle.speed >= cfg.v_max:
            return max(-cfg.u_min_hard, (cfg.v_max - vehicle.speed) / cfg.T_S)
        remaining = cfg.total_length - vehicle.position
        ramp = (cfg.v_max ** 2 - vehicle.speed ** 2) / (2.0 * remaining)
        # the last step overshoots the exit, so it must not overshoot v_max
        return min(cfg.u_max, ramp, (cfg.v_max - vehicle.speed) / cfg.T_S)

    def _integrate(self, vehicle: VehicleState, u: float, clock: float) -> Optional[float]:
        """Exact update for constant u over one step; returns the exit time if the vehicle leaves"""
        cfg = self.cfg
        dt = cfg.T_S
        v = vehicle.speed
        v_next = v + u * dt
        if v_next < 0.0:
            distance = v * v / (-2.0 * u)
            v_next = 0.0
        else:
            distance = 0.5 * (v + v_next) * dt
        start = vehicle.position
        vehicle.position = start + distance
        vehicle.speed = v_next
        vehicle.accel = (v_next - v) / dt
        vehicle.energy += vehicle.accel ** 2 * dt

        mz_end = cfg.L_C + cfg.L_M
        if vehicle.t_mz_exit is None and start < mz_end <= vehicle.position:
            vehicle.t_mz_exit = clock + dt * (mz_end - start) / distance
        if start < cfg.total_length <= vehicle.position:
            return clock + dt * (cfg.total_length - start) / distance
        return None

    def step(self):
        self.spawn_arrivals()
        clock = self.clock

        controls: Dict[int, float] = {}
        for queue in self.lanes.values():
            for index, vehicle in enumerate(queue):
                leader = queue[index - 1] if index > 0 else None
                controls[vehicle.id] = self._select_accel(vehicle, leader)

        exits: List[Tuple[VehicleState, float]] = []
        for lane, queue in self.lanes.items():
            for vehicle in queue:
                previous = vehicle.position
                t_exit = self._integrate(vehicle, controls[vehicle.id], clock)
                self.monitor.check_stop_line(vehicle, previous, self.lane_phases[lane], clock)
                if t_exit is not None:
                    exits.append((vehicle, t_exit))
            self.monitor.check_lane_order(lane, queue, clock + self.cfg.T_S)

        self.step_index += 1
        self._end_amber()
        for vehicle, t_exit in exits:
            self._retire(vehicle, t_exit)

    def _retire(self, vehicle: VehicleState, t_exit: float):
        self.lanes[vehicle.lane] = [v for v in self.lanes[vehicle.lane] if v.id != vehicle.id]
        mz_exit = vehicle.t_mz_exit if vehicle.t_mz_exit is not None else t_exit
        self.metrics.vehicles.append(VehicleRecord(
            id=vehicle.id, lane=vehicle.lane, kind=vehicle.kind, t_entry=vehicle.t_entry,
            t_exit=t_exit, wait_time=mz_exit - free_flow_exit_time(vehicle.t_entry, self.cfg),
            energy=vehicle.energy,
        ))

    # ---- observation ----------------------------------------------------

    def observe_state(self) -> Tuple[int, ...]:
        """Per-lane count of vehicles still in the control zone"""
        return tuple(
            sum(1 for v in self.lanes[lane] if v.position < self.cfg.L_C)
            for lane in sorted(self.lanes)
        )

    def advance_block(self, action: ActionId) -> BlockRecord:
        """Decide `action` at this boundary, then simulate one traffic-light block"""
        k = self.block_index
        t = self.clock
        X_k = self.observe_state()
        self.actuate_block_boundary(action)
        colors = tuple(self.lane_phases[lane].block_color for lane in sorted(self.lanes))
        for _ in range(self.cfg.steps_per_block):
            self.step()
        X_k1 = self.observe_state()
        reward = compute_reward(X_k, X_k1, self.cfg.W)
        record = BlockRecord(k=k, t=t, queues=X_k, action=action, reward=reward, phases=colors)
        self.metrics.blocks.append(record)
        self.monitor.check_light_delay(record, self.metrics.blocks)
        self.monitor.check_conservation(self.metrics.spawned, self.vehicle_count, len(self.metrics.vehicles))
        sim_logger.log_block_event(k, {"X": X_k, "action": action.value, "reward": reward})
        return record

    def finalize(self) -> MetricsLog:
        counts = {kind: 0 for kind in VehicleKind}
        for queue in self.lanes.values():
            for vehicle in queue:
                counts[vehicle.kind] += 1
        self.metrics.in_system_at_end = counts
        return self.metrics
