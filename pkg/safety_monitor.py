from typing import Any, Dict, Optional, Sequence

from error_handler import CollisionDetected, RedLightViolation
from models import ActionId, BlockRecord, IntersectionConfig, LanePhase, Phase, VehicleState
from sim_logger import sim_logger

# an entry must clear the stop line by more than this to count
ENTRY_TOL = 1e-6


class SafetyMonitor:
    def __init__(self, cfg: IntersectionConfig, halt_on_violation: bool = False,
                 initial_action: ActionId = ActionId.OPEN_PAIR_13):
        self.cfg = cfg
        # runs every block before the first decision takes effect
        self.initial_action = initial_action
        self.halt_on_violation = halt_on_violation
        self.red_entries = 0
        self.delay_mismatches = 0
        self.conservation_failures = 0
        self.blocks_checked = 0

    def check_lane_order(self, lane: int, vehicles: Sequence[VehicleState], clock: float):
        """Front-to-back positions in a lane must be strictly decreasing"""
        for front, rear in zip(vehicles, vehicles[1:]):
            if front.position - rear.position <= 0:
                snapshot = [
                    {"id": v.id, "kind": v.kind.value, "position": v.position, "speed": v.speed}
                    for v in vehicles
                ]
                context = {"lane": lane, "clock": clock, "front": front.id, "rear": rear.id,
                           "lane_snapshot": snapshot}
                sim_logger.log_safety_event("COLLISION", context)
                raise CollisionDetected(
                    f"Vehicles {front.id} and {rear.id} overlap in lane {lane} at t={clock:.2f}", context
                )

    def check_stop_line(self, vehicle: VehicleState, previous_position: float,
                        lane_phase: LanePhase, clock: float):
        if not (previous_position < self.cfg.L_C and vehicle.position > self.cfg.L_C + ENTRY_TOL):
            return
        if lane_phase.phase is not Phase.RED:
            return
        self.red_entries += 1
        context = {"vehicle": vehicle.id, "lane": vehicle.lane, "kind": vehicle.kind.value,
                   "clock": clock, "speed": vehicle.speed}
        sim_logger.log_safety_event("RED_LIGHT_ENTRY", context)
        if self.halt_on_violation:
            raise RedLightViolation(f"Vehicle {vehicle.id} entered lane {vehicle.lane} on red", context)

    def check_light_delay(self, record: BlockRecord, log: Sequence[BlockRecord]):
        """
        The colors a block ran must be those of the action logged d_a blocks
        earlier. Both sides come from the block log, not from the pending queue
        that drives the lights.
        """
        self.blocks_checked += 1
        source_k = record.k - self.cfg.d_a
        expected: Optional[ActionId] = self.initial_action
        if source_k >= 0:
            source = next((b for b in reversed(log) if b.k == source_k), None)
            expected = source.action if source is not None else None
        wanted = None if expected is None else tuple(
            expected.color(lane) for lane in range(1, len(record.phases) + 1))
        if record.phases != wanted:
            self.delay_mismatches += 1
            sim_logger.log_safety_event("LIGHT_DELAY_MISMATCH", {
                "k": record.k, "ran": [p.value for p in record.phases],
                "expected": None if expected is None else expected.value,
            })

    def check_conservation(self, spawned: int, in_system: int, exited: int):
        if spawned != in_system + exited:
            self.conservation_failures += 1
            sim_logger.log_safety_event("CONSERVATION", {
                "spawned": spawned, "in_system": in_system, "exited": exited,
            })

    def to_dict(self) -> Dict[str, Any]:
        return {
            'red_entries': self.red_entries,
            'delay_mismatches': self.delay_mismatches,
            'conservation_failures': self.conservation_failures,
            'blocks_checked': self.blocks_checked,
        }
