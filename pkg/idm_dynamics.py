"""
Intelligent driver model for human-driven vehicles and for AVs in fallback.

The interaction term is the regularized form s*^2 / (s^2 + eps^2). The
closing-speed term is signed: approaching a slower leader (or the stop
line) widens the desired gap and a faster leader narrows it.
"""
import math
import logging

from error_handler import InvalidInput
from models import IdmContext, IntersectionConfig, Phase

logger = logging.getLogger(__name__)


def _require_finite(**values: float):
    for name, value in values.items():
        if not math.isfinite(value):
            raise InvalidInput(f"{name} must be finite, got {value}")


def _clamp(accel: float, cfg: IntersectionConfig) -> float:
    return min(cfg.u_max, max(-cfg.u_min_hard, accel))


def desired_gap(v: float, closing_speed: float, cfg: IntersectionConfig) -> float:
    """s* = s0 + T*v + v*(v - v_leader) / (2*sqrt(u_max*u_min)); a faster leader shrinks it"""
    brake = v * closing_speed / (2.0 * math.sqrt(cfg.u_max * cfg.u_min))
    return cfg.s0 + cfg.T_headway * v + brake


def follow_range(v: float, closing_speed: float, cfg: IntersectionConfig) -> float:
    """Gap at or below which a leader (or the stop line) starts to govern the vehicle"""
    if not cfg.speed_aware_follow:
        return cfg.d_follow
    return max(cfg.d_follow, desired_gap(v, closing_speed, cfg))


def fallback_range(v: float, v_leader: float, cfg: IntersectionConfig) -> float:
    """
    Gap at or below which a planning AV hands over to IDM: d_follow plus one
    step of travel plus the extra distance needed to shed the speed difference
    at comfortable deceleration.
    """
    if not cfg.speed_aware_follow:
        return cfg.d_follow
    shed = max(0.0, v * v - v_leader * v_leader) / (2.0 * cfg.u_min)
    return cfg.d_follow + v * cfg.T_S + shed


def stopping_distance(v: float, cfg: IntersectionConfig) -> float:
    return v * v / (2.0 * cfg.u_min_hard)


def idm_accel_follow(v: float, v_bar: float, s: float, delta_v: float, cfg: IntersectionConfig) -> float:
    """
    Car-following acceleration.

    delta_v is v_leader - v. Pass s = math.inf for free road, which makes
    the interaction term exactly zero.
    """
    _require_finite(v=v, v_bar=v_bar, delta_v=delta_v)
    if math.isnan(s) or s < 0:
        raise InvalidInput(f"Gap must be non-negative or +inf, got {s}")
    if v < 0 or v_bar <= 0:
        raise InvalidInput(f"Speeds out of range: v={v}, v_bar={v_bar}")

    speed_term = (v / v_bar) ** 4
    if math.isinf(s):
        interaction = 0.0
    else:
        s_star = desired_gap(v, -delta_v, cfg)
        interaction = s_star ** 2 / (s ** 2 + cfg.epsilon_idm ** 2)
    return _clamp(cfg.u_max * (1.0 - speed_term - interaction), cfg)


def idm_accel_red_light(v: float, v_bar: float, position: float, cfg: IntersectionConfig) -> float:
    """Treat the red light as a stopped vehicle sitting on the stop line"""
    _require_finite(v=v, v_bar=v_bar, position=position)
    if position >= cfg.L_C:
        raise InvalidInput(
            f"Vehicle at {position} is already past the stop line {cfg.L_C}",
            {"position": position},
        )
    return idm_accel_follow(v, v_bar, cfg.L_C - position, -v, cfg)


def _amber_go(ctx: IdmContext, dist: float) -> bool:
    # True when the vehicle keeps going through an amber that precedes red
    cfg = ctx.cfg
    v = ctx.self_speed
    if not cfg.speed_aware_follow:
        return dist <= cfg.d_follow
    if dist > max(cfg.d_follow, stopping_distance(v, cfg)):
        return False
    remaining = ctx.lane_phase.phase_entered_at + cfg.T_alert - ctx.clock
    if remaining <= 0:
        return False
    # current speed alone must clear the line before red; stays true while accelerating
    return v * remaining >= dist


def _light_requires_stop(ctx: IdmContext, dist: float) -> bool:
    phase = ctx.lane_phase
    if phase.phase is Phase.GREEN:
        return False
    if phase.phase is Phase.RED:
        return True
    # amber ahead of a green block is a clearance interval for this lane
    if phase.block_color is Phase.GREEN:
        return True
    return not _amber_go(ctx, dist)


def hdv_accel(ctx: IdmContext) -> float:
    cfg = ctx.cfg
    v = ctx.self_speed
    p = ctx.self_position

    cruise = idm_accel_follow(v, ctx.desired_speed, math.inf, 0.0, cfg)
    leader = ctx.leader
    if leader is not None:
        gap = leader.position - p
        if gap <= follow_range(v, v - leader.speed, cfg):
            cruise = idm_accel_follow(v, ctx.desired_speed, gap, leader.speed - v, cfg)

    # inside the MZ or EZ the light no longer applies
    if p >= cfg.L_C:
        return cruise
    # a leader still in the CZ stands between this vehicle and the light
    if leader is not None and leader.position < cfg.L_C:
        return cruise

    dist = cfg.L_C - p
    if not _light_requires_stop(ctx, dist):
        return cruise
    if dist <= follow_range(v, v, cfg):
        return min(cruise, idm_accel_red_light(v, ctx.desired_speed, p, cfg))
    return cruise
