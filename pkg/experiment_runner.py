import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Optional

from av_planner import plan_green, plan_red, plan_to_frame
from error_handler import InvalidInput
from models import Announcement, Phase, PlanRequest, Scenario, SimSettings, VehicleKind
from q_learner import QTable, available_actions, evaluate, greedy_policy, train
from reporting import (
    collect_energy_stats, groups_for, log_from_vehicles_csv, waiting_time_stats,
    write_blocks_csv, write_energy_stats_csv, write_summary_json, write_training_csv,
    write_vehicles_csv, write_waiting_time_csv,
)
from sim_config import SimConfig
from sim_logger import sim_logger
from simulation_engine import IntersectionEngine

logger = logging.getLogger(__name__)

# stream key of the evaluation run, kept clear of the training episodes
EVAL_EPISODE = 1_000_000

SCENARIO_P_AV = {Scenario.MIXED50: 0.5, Scenario.HDV_ONLY: 0.0}


def _finite_or_none(value: float) -> Optional[float]:
    return value if math.isfinite(value) else None


def apply_scenario(config: SimConfig, scenario: Optional[Scenario]) -> SimConfig:
    """Force the AV share a scenario prescribes; without a scenario the configured p_av stands"""
    if scenario is None:
        return config
    return config.with_overrides(p_av=SCENARIO_P_AV[scenario])


def scenario_of(settings: SimSettings) -> Scenario:
    return Scenario.HDV_ONLY if settings.p_av == 0 else Scenario.MIXED50


def _engine(config: SimConfig, episode: int) -> IntersectionEngine:
    return IntersectionEngine(config.INTERSECTION, config.SIM, config.PENALTIES, config.SOLVER, episode=episode)


def run_experiment(config: SimConfig, mode: str, out_dir: Path,
                   qtable_path: Optional[Path] = None) -> Dict[str, Any]:
    """Train or evaluate a controller end to end and write every artifact into out_dir"""
    if mode not in ('train', 'eval'):
        raise InvalidInput(f"Unknown mode '{mode}'")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = config.INTERSECTION
    learner = config.LEARNER
    n_blocks = int(config.SIM.horizon_s // cfg.T_RL + 1e-9)

    sim_logger.log_system_event("RUN_STARTED", {
        "mode": mode, "scenario": scenario_of(config.SIM).value, "seed": config.SIM.seed, "blocks": n_blocks,
    })

    training_summary: Dict[str, Any] = {}
    if mode == 'train':
        q, curves = train(lambda episode: _engine(config, episode), learner, config.SIM.seed)
        write_training_csv(curves, out_dir / 'training.csv')
        q.save_csv(out_dir / 'qtable.csv')
        training_summary = {
            'episodes': len(curves),
            'q_entries': len(q),
            'final_cumulative_reward': curves[-1].cumulative_reward if curves else None,
        }
    else:
        source = qtable_path or out_dir / 'qtable.csv'
        if Path(source).exists():
            q = QTable.load_csv(Path(source), available_actions(learner))
        else:
            logger.warning(f"No Q-table at {source}; evaluating the all-zero table")
            q = QTable(available_actions(learner))

    engine = _engine(config, EVAL_EPISODE)
    metrics = evaluate(engine, greedy_policy(q), n_blocks, learner)

    write_vehicles_csv(metrics, out_dir / 'vehicles.csv')
    write_blocks_csv(metrics, cfg.n_lanes, out_dir / 'blocks.csv')
    stats = collect_energy_stats(metrics, groups_for(config.SIM.p_av))
    write_energy_stats_csv(stats, out_dir / 'energy_stats.csv')
    waits = waiting_time_stats(metrics, cfg.T_RL, horizon_s=n_blocks * cfg.T_RL)
    write_waiting_time_csv(waits, out_dir / 'waiting_time.csv')

    exited = len(metrics.vehicles)
    mean_wait = (sum(max(0.0, v.wait_time) for v in metrics.vehicles) / exited) if exited else math.nan
    summary: Dict[str, Any] = {
        'mode': mode,
        'scenario': scenario_of(config.SIM).value,
        'seed': config.SIM.seed,
        'config': config.to_dict(),
        'totals': {
            'blocks': len(metrics.blocks),
            'spawned': metrics.spawned,
            'exited': exited,
            'dropped_arrivals': metrics.dropped_arrivals,
            'in_system_at_end': {kind.value: metrics.in_system_at_end.get(kind, 0) for kind in VehicleKind},
            'mean_wait_s': _finite_or_none(mean_wait),
            'cumulative_reward': sum(b.reward for b in metrics.blocks),
        },
        'energy': {s.group.value: {'count': s.count, 'mean': s.mean} for s in stats},
        'safety': engine.monitor.to_dict(),
        'training': training_summary,
    }
    write_summary_json(summary, out_dir / 'summary.json')
    sim_logger.log_system_event("RUN_FINISHED", {"out": str(out_dir), **summary['totals']})
    return summary


def run_plan(config: SimConfig, t_now: float, p_now: float, v_now: float, color: Phase,
             amber_applies: bool, out_dir: Path) -> Dict[str, Any]:
    """Plan for a single AV and dump the trajectory as plan.csv"""
    cfg = config.INTERSECTION
    try:
        req = PlanRequest(
            t_now=t_now, p_now=p_now, v_now=v_now,
            announced=Announcement(color=color, at=t_now + cfg.T_delay),
            amber_applies=amber_applies, cfg=cfg,
        )
    except ValueError as e:
        raise InvalidInput(f"Invalid planning request: {e}")
    planner = plan_green if color is Phase.GREEN else plan_red
    plan = planner(req, config.PENALTIES, config.SOLVER)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    plan_to_frame(plan).to_csv(out_dir / 'plan.csv', index=False)
    return {
        'kind': plan.kind.value,
        't_terminal': plan.t_terminal,
        'objective': plan.objective_value,
        'overspeed': plan.overspeed,
        'underspeed': plan.underspeed,
        'max_violation': plan.max_violation,
    }


def run_stats(config: SimConfig, out_dir: Path) -> Dict[str, Any]:
    """Recompute energy and waiting-time reports from an existing vehicles.csv"""
    out_dir = Path(out_dir)
    source = out_dir / 'vehicles.csv'
    if not source.exists():
        raise InvalidInput(f"No vehicles.csv in {out_dir}")
    log = log_from_vehicles_csv(source)
    summary_path = out_dir / 'summary.json'
    if summary_path.exists():
        # vehicles.csv only holds completed journeys; the run summary has the rest
        totals = json.loads(summary_path.read_text()).get('totals', {})
        log.in_system_at_end = {VehicleKind(k): int(n) for k, n in totals.get('in_system_at_end', {}).items()}
    stats = collect_energy_stats(log, groups_for(config.SIM.p_av))
    write_energy_stats_csv(stats, out_dir / 'energy_stats.csv')
    write_waiting_time_csv(waiting_time_stats(log, config.INTERSECTION.T_RL), out_dir / 'waiting_time.csv')
    return {'groups': {s.group.value: s.model_dump(mode='json') for s in stats}}
