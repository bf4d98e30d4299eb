import math

from error_handler import InvalidInput
from models import IntersectionConfig, Zone


def free_flow_merge_time(t_entry: float, cfg: IntersectionConfig) -> float:
    """Time the vehicle would reach the merging zone with no traffic"""
    return t_entry + cfg.L_C / cfg.v_max


def free_flow_exit_time(t_entry: float, cfg: IntersectionConfig) -> float:
    """Time the vehicle would leave the merging zone with no traffic"""
    return t_entry + (cfg.L_C + cfg.L_M) / cfg.v_max


def zone_of(position: float, cfg: IntersectionConfig) -> Zone:
    # intervals are left-closed: a vehicle exactly at L_C is in the MZ
    if not math.isfinite(position) or position < 0:
        raise InvalidInput(f"Position must be a non-negative finite number, got {position}")
    if position < cfg.L_C:
        return Zone.CZ
    if position < cfg.L_C + cfg.L_M:
        return Zone.MZ
    if position < cfg.total_length:
        return Zone.EZ
    return Zone.EXITED


def are_conflicting(j: int, l: int, cfg: IntersectionConfig) -> bool:
    for lane in (j, l):
        if not 1 <= lane <= cfg.n_lanes:
            raise InvalidInput(f"Lane {lane} outside 1..{cfg.n_lanes}", {"lane": lane})
    if j == l:
        return False
    for a, b in cfg.non_conflicting_pairs:
        if {a, b} == {j, l}:
            return False
    return True
