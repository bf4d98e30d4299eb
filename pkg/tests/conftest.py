import pytest

from models import (
    ActionId, Announcement, IntersectionConfig, LanePhase, LearnerConfig, PenaltyWeights, Phase,
    PlanRequest, ScriptedArrival, SimSettings, SolverSettings,
)
from simulation_engine import IntersectionEngine


@pytest.fixture
def cfg():
    return IntersectionConfig()


@pytest.fixture
def weights():
    return PenaltyWeights()


@pytest.fixture
def solver():
    return SolverSettings()


@pytest.fixture
def learner_cfg():
    return LearnerConfig()


@pytest.fixture
def sim():
    return SimSettings(seed=3)


def lane_phase(phase: Phase, block_color: Phase = None, entered_at: float = 0.0) -> LanePhase:
    return LanePhase(phase=phase, phase_entered_at=entered_at, block_color=block_color or phase)


def plan_request(cfg: IntersectionConfig, p: float, v: float, color: Phase = Phase.GREEN,
                 t_now: float = 0.0, amber: bool = False) -> PlanRequest:
    return PlanRequest(
        t_now=t_now, p_now=p, v_now=v,
        announced=Announcement(color=color, at=t_now + cfg.T_delay),
        amber_applies=amber, cfg=cfg,
    )


@pytest.fixture
def scripted_engine(cfg, sim):
    """Factory for an engine fed by a fixed arrival list"""
    def build(arrivals, config: IntersectionConfig = None, settings: SimSettings = None):
        return IntersectionEngine(
            config or cfg, settings or sim,
            arrival_script=[a if isinstance(a, ScriptedArrival) else ScriptedArrival(**a) for a in arrivals],
        )
    return build


def alternating(period: int = 2):
    """Fixed-time controller: switch the open pair every `period` blocks"""
    def policy(k: int) -> ActionId:
        return ActionId.OPEN_PAIR_13 if (k // period) % 2 == 0 else ActionId.OPEN_PAIR_24
    return policy
