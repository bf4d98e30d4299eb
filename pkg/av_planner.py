"""
Minimum-energy trajectory planning for lead AVs.

Controls are piecewise constant over one simulation step and the vehicle
is a double integrator updated exactly for constant acceleration, so a
plan simulated by the engine hits the same terminal state the planner
solved for. Each fixed-endpoint problem first tries the closed form (the
least-norm control meeting the terminal constraints). When that control
breaks a speed bound the penalised problem is solved as a convex program
with cvxpy; for the default weights the hinges are exact penalties, so a
feasible request comes back with every speed inside [0, v_max].
"""
import logging
import math
from functools import lru_cache
from typing import List, Optional, Tuple

import cvxpy as cp
import numpy as np
import pandas as pd

from error_handler import AlreadyPastStopPoint, InfeasibleWindow, InvalidInput
from idm_dynamics import fallback_range
from models import (
    AffineControl, CrossSpeed, IntersectionConfig, PenaltyWeights, Phase, PlanKind, PlanRequest,
    SolverSettings, StopTiming, TrajectoryPlan, VehicleKind, VehicleState,
)

logger = logging.getLogger(__name__)

# speed excursions below this are rounding noise
FEASIBILITY_EPS = 1e-9
SOLVED = (cp.OPTIMAL, cp.OPTIMAL_INACCURATE)


def analytic_min_energy(p0: float, v0: float, pf: float, vf: float, T: float) -> AffineControl:
    """Exact minimizer of 1/2 * int_0^T u^2 dt with both endpoints fixed; u(t) = a + b*t"""
    if not math.isfinite(T) or T <= 0:
        raise InvalidInput(f"Horizon must be positive, got {T}")
    gramian = np.array([[T, T ** 2 / 2.0],
                        [T ** 2 / 2.0, T ** 3 / 6.0]])
    rhs = np.array([vf - v0, pf - p0 - v0 * T])
    a, b = np.linalg.solve(gramian, rhs)
    objective = 0.5 * (a * a * T + a * b * T ** 2 + b * b * T ** 3 / 3.0)
    return AffineControl(a=float(a), b=float(b), objective=float(objective))


def simulate_controls(p0: float, v0: float, controls, dt: float) -> Tuple[np.ndarray, np.ndarray]:
    """Positions and speeds at every step boundary (length N+1); speeds are not clamped"""
    u = np.asarray(controls, dtype=float)
    v = np.concatenate(([v0], v0 + dt * np.cumsum(u)))
    p = np.concatenate(([p0], p0 + np.cumsum(0.5 * (v[:-1] + v[1:]) * dt)))
    return p, v


def _terminal_matrix(n_steps: int, dt: float, free_speed: bool = False) -> np.ndarray:
    """Rows map the controls to the terminal speed change and the terminal displacement"""
    m = np.arange(n_steps)
    position = dt * dt * (n_steps - m - 0.5)
    if free_speed:
        return position[np.newaxis, :]
    return np.vstack([np.full(n_steps, dt), position])


def _speed_hinges(v_after: np.ndarray, v_max: float) -> Tuple[np.ndarray, np.ndarray]:
    return np.maximum(0.0, v_after - v_max), np.maximum(0.0, -v_after)


def _crossing_window(req: PlanRequest) -> Tuple[float, float]:
    cfg = req.cfg
    lower = req.t_now + cfg.T_delay + (cfg.T_alert if req.amber_applies else 0.0)
    upper = req.t_now + cfg.T_delay + cfg.T_RL
    return lower, upper


@lru_cache(maxsize=256)
def _penalty_program(n_steps: int, dt: float, v_max: float, K_vmax: float, K_vmin: float,
                     free_speed: bool) -> Tuple[cp.Problem, cp.Variable, cp.Parameter, cp.Parameter]:
    """
    Penalised program for one horizon. The entry speed and the terminal
    targets are parameters, so cvxpy compiles each horizon once.
    """
    rows = _terminal_matrix(n_steps, dt, free_speed)
    u = cp.Variable(n_steps)
    v0 = cp.Parameter()
    target = cp.Parameter(rows.shape[0])
    v_after = v0 + dt * cp.cumsum(u)
    cost = (0.5 * dt * cp.sum_squares(u)
            + K_vmax * dt * cp.sum(cp.pos(v_after - v_max))
            + K_vmin * dt * cp.sum(cp.pos(-v_after)))
    return cp.Problem(cp.Minimize(cost), [rows @ u == target]), u, v0, target


class _FixedEndpointProblem:
    """min 1/2*sum(u^2)*dt + speed hinges  s.t.  A u = b; vf=None leaves the terminal speed free"""

    def __init__(self, p0: float, v0: float, pf: float, vf: Optional[float], n_steps: int,
                 cfg: IntersectionConfig, weights: PenaltyWeights, settings: SolverSettings):
        self.v0 = v0
        self.dt = cfg.T_S
        self.v_max = cfg.v_max
        self.n_steps = n_steps
        self.weights = weights
        self.settings = settings
        self.free_speed = vf is None
        self.A = _terminal_matrix(n_steps, self.dt, self.free_speed)
        displacement = pf - p0 - n_steps * self.dt * v0
        self.b = np.array([displacement] if self.free_speed else [vf - v0, displacement])
        self._gram_inv = np.linalg.pinv(self.A @ self.A.T)

    def least_norm(self) -> np.ndarray:
        return self.A.T @ (self._gram_inv @ self.b)

    def energy(self, u: np.ndarray) -> float:
        return 0.5 * float(np.dot(u, u)) * self.dt

    def restore(self, u: np.ndarray) -> np.ndarray:
        """Project out the solver's residual on the terminal constraints"""
        return u - self.A.T @ (self._gram_inv @ (self.A @ u - self.b))

    def solve_penalised(self, start: np.ndarray) -> np.ndarray:
        """Exact minimizer of the penalised problem; returns `start` if the solver gives up"""
        w = self.weights
        problem, u, v0, target = _penalty_program(
            self.n_steps, self.dt, self.v_max, w.K_vmax, w.K_vmin, self.free_speed)
        v0.value = self.v0
        target.value = self.b
        try:
            problem.solve(solver=cp.CLARABEL, max_iter=self.settings.max_iter,
                          tol_gap_rel=self.settings.rel_tol)
        except cp.error.SolverError as e:
            logger.warning(f"Penalty program over {self.n_steps} steps failed: {e}")
            return start
        if problem.status not in SOLVED or u.value is None:
            logger.warning(f"Penalty program over {self.n_steps} steps ended as {problem.status}")
            return start
        return self.restore(np.asarray(u.value, dtype=float))


def _penalty_gradient_array(u: np.ndarray, v0: float, dt: float, v_max: float,
                            weights: PenaltyWeights) -> np.ndarray:
    v_after = v0 + dt * np.cumsum(u)
    slope = (weights.K_vmax * dt * (v_after > v_max).astype(float)
             - weights.K_vmin * dt * (v_after < 0.0).astype(float))
    # speed after step i depends on every control up to and including i
    tail = np.cumsum(slope[::-1])[::-1]
    return dt * u + dt * tail


def _window_penalty(plan: TrajectoryPlan, req: PlanRequest, w: PenaltyWeights) -> float:
    lower, upper = _crossing_window(req)
    return (w.K1_tcross * max(0.0, lower - plan.t_terminal)
            + w.K2_tcross * max(0.0, plan.t_terminal - upper))


def penalty_objective(plan: TrajectoryPlan, req: PlanRequest, w: PenaltyWeights) -> float:
    u = np.asarray(plan.controls, dtype=float)
    dt = plan.dt
    _, v = simulate_controls(plan.p_start, plan.v_start, u, dt)
    over, under = _speed_hinges(v[1:], req.cfg.v_max)
    value = (0.5 * float(np.dot(u, u)) * dt
             + w.K_vmax * float(over.sum()) * dt
             + w.K_vmin * float(under.sum()) * dt)
    if plan.kind is PlanKind.CROSS:
        value += _window_penalty(plan, req, w)
    return value


def penalty_gradient(plan: TrajectoryPlan, req: PlanRequest, w: PenaltyWeights) -> np.ndarray:
    """Gradient of penalty_objective with respect to each control (window terms are constant)"""
    u = np.asarray(plan.controls, dtype=float)
    return _penalty_gradient_array(u, plan.v_start, plan.dt, req.cfg.v_max, w)


def _build_plan(req: PlanRequest, u: np.ndarray, n_steps: int, kind: PlanKind,
                w: PenaltyWeights) -> TrajectoryPlan:
    dt = req.cfg.T_S
    _, v = simulate_controls(req.p_now, req.v_now, u, dt)
    over, under = _speed_hinges(v[1:], req.cfg.v_max)
    draft = TrajectoryPlan(
        t_start=req.t_now,
        controls=tuple(float(x) for x in u),
        t_terminal=req.t_now + n_steps * dt,
        kind=kind,
        objective_value=0.0,
        p_start=req.p_now,
        v_start=req.v_now,
        dt=dt,
        overspeed=float(over.sum()) * dt,
        underspeed=float(under.sum()) * dt,
        max_violation=float(max(over.max(initial=0.0), under.max(initial=0.0))),
    )
    return draft.model_copy(update={"objective_value": penalty_objective(draft, req, w)})


def _solve_fixed_endpoint(req: PlanRequest, pf: float, vf: Optional[float], n_steps: int, w: PenaltyWeights,
                          settings: SolverSettings, kind: PlanKind) -> TrajectoryPlan:
    problem = _FixedEndpointProblem(req.p_now, req.v_now, pf, vf, n_steps, req.cfg, w, settings)
    u = problem.least_norm()
    plan = _build_plan(req, u, n_steps, kind, w)
    if plan.max_violation > FEASIBILITY_EPS:
        plan = _build_plan(req, problem.solve_penalised(u), n_steps, kind, w)
    return plan


def _stop_steps(req: PlanRequest, settings: SolverSettings) -> int:
    cfg = req.cfg
    earliest = int(round(cfg.T_delay / cfg.T_S))
    if settings.stop_time is StopTiming.ANNOUNCED:
        return earliest
    latest = max(earliest, int(round(settings.stop_horizon_s / cfg.T_S)))
    if req.v_now <= 0.0:
        return latest
    # the unbounded free-time stop lasts 3*D/v0 and touches v = 0 with zero slope
    distance = cfg.L_C - cfg.delta_a - req.p_now
    return min(latest, max(earliest, int(3.0 * distance / (req.v_now * cfg.T_S))))


def plan_green(req: PlanRequest, w: PenaltyWeights,
               settings: Optional[SolverSettings] = None) -> TrajectoryPlan:
    settings = settings or SolverSettings()
    if req.announced.color is not Phase.GREEN:
        raise InvalidInput("plan_green needs a green announcement")
    cfg = req.cfg
    dt = cfg.T_S
    v_cross = cfg.v_max if settings.cross_speed is CrossSpeed.MAX else None
    lower, upper = _crossing_window(req)
    first = int(round((lower - req.t_now) / dt))
    # crossing exactly on the block end would put the next step in the following block
    last = int(round((upper - req.t_now) / dt)) - 1

    candidates: List[Tuple[float, int]] = []
    for n_steps in range(first, last + 1):
        problem = _FixedEndpointProblem(req.p_now, req.v_now, cfg.L_C, v_cross, n_steps, cfg, w, settings)
        candidates.append((problem.energy(problem.least_norm()), n_steps))
    candidates.sort()

    best: Optional[TrajectoryPlan] = None
    for bound, n_steps in candidates:
        # the unbounded optimum is a lower bound on the penalised objective
        if best is not None and bound >= best.objective_value:
            break
        plan = _solve_fixed_endpoint(req, cfg.L_C, v_cross, n_steps, w, settings, PlanKind.CROSS)
        if (best is None or plan.objective_value < best.objective_value
                or (plan.objective_value == best.objective_value and plan.t_terminal < best.t_terminal)):
            best = plan

    if best is None or best.max_violation > settings.tol_v:
        raise InfeasibleWindow(
            f"No crossing time in [{lower}, {upper}] keeps speeds within bounds",
            {"t_now": req.t_now, "p_now": req.p_now, "v_now": req.v_now,
             "max_violation": None if best is None else best.max_violation},
        )
    logger.debug(f"Cross plan from p={req.p_now:.2f} v={req.v_now:.2f}: t_cross={best.t_terminal}, "
                 f"objective={best.objective_value:.4f}")
    return best


def plan_red(req: PlanRequest, w: PenaltyWeights,
             settings: Optional[SolverSettings] = None) -> TrajectoryPlan:
    settings = settings or SolverSettings()
    if req.announced.color is not Phase.RED:
        raise InvalidInput("plan_red needs a red announcement")
    cfg = req.cfg
    stop_point = cfg.L_C - cfg.delta_a
    if req.p_now >= stop_point:
        raise AlreadyPastStopPoint(
            f"Vehicle at {req.p_now:.2f} is already past the stop point {stop_point:.2f}",
            {"p_now": req.p_now, "stop_point": stop_point},
        )
    n_steps = _stop_steps(req, settings)
    plan = _solve_fixed_endpoint(req, stop_point, 0.0, n_steps, w, settings, PlanKind.STOP)
    if plan.max_violation > settings.tol_v:
        logger.debug(f"Stop plan keeps a speed violation of {plan.max_violation:.3f} m/s")
    return plan


def replan_on_green(plan: TrajectoryPlan, req: PlanRequest, w: PenaltyWeights,
                    settings: Optional[SolverSettings] = None) -> TrajectoryPlan:
    """Swap a stop plan for a crossing plan once green is announced; red keeps the stop plan"""
    if plan.kind is not PlanKind.STOP:
        raise InvalidInput("Only stop plans are replanned on a green announcement")
    if req.announced.color is not Phase.GREEN:
        return plan
    if req.t_now <= plan.t_start:
        raise InvalidInput(f"Replan time {req.t_now} must follow the plan start {plan.t_start}")
    return plan_green(req, w, settings)


def should_fallback(vehicle: VehicleState, leader: Optional[VehicleState], cfg: IntersectionConfig) -> bool:
    if vehicle.kind is not VehicleKind.AV:
        raise InvalidInput(f"Vehicle {vehicle.id} is not an AV")
    if leader is None:
        return False
    gap = leader.position - vehicle.position
    return gap <= fallback_range(vehicle.speed, leader.speed, cfg)


def plan_to_frame(plan: TrajectoryPlan) -> pd.DataFrame:
    """One row per step boundary; the terminal row carries no control"""
    p, v = simulate_controls(plan.p_start, plan.v_start, plan.controls, plan.dt)
    n = len(plan.controls)
    return pd.DataFrame({
        't': plan.t_start + plan.dt * np.arange(n + 1),
        'u': np.append(np.asarray(plan.controls, dtype=float), np.nan),
        'v': v,
        'p': p,
    })
