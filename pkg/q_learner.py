import logging
import math
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from error_handler import InvalidInput
from models import ActionId, AugmentedState, LearnerConfig, MetricsLog, QEntry, TrainingPoint
from sim_logger import sim_logger
from simulation_engine import IntersectionEngine, named_stream

logger = logging.getLogger(__name__)

SAFE_ACTIONS: Tuple[ActionId, ...] = (ActionId.OPEN_PAIR_13, ActionId.OPEN_PAIR_24)

Policy = Callable[[AugmentedState], ActionId]


def available_actions(cfg: LearnerConfig) -> Tuple[ActionId, ...]:
    if cfg.allow_all_red:
        return SAFE_ACTIONS + (ActionId.ALL_RED,)
    return SAFE_ACTIONS


def reduce_state(X: Sequence[int], pending: Sequence[ActionId], cfg: LearnerConfig) -> AugmentedState:
    """Bucketize the control-zone counts and attach the actions still awaiting execution"""
    buckets = []
    for count in X:
        if count < 0:
            raise InvalidInput(f"Queue counts must be non-negative, got {count}")
        buckets.append(min(int(count) // cfg.bucket_width, cfg.bucket_count - 1))
    return AugmentedState(buckets=tuple(buckets), pending=tuple(pending))


class QTable:
    """Sparse Q-table; absent entries read as q = 0, visits = 0"""

    def __init__(self, actions: Sequence[ActionId] = SAFE_ACTIONS):
        # action order doubles as the argmax tie-break order
        self.actions: Tuple[ActionId, ...] = tuple(a for a in ActionId if a in set(actions))
        self._entries: Dict[Tuple[AugmentedState, ActionId], QEntry] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def q(self, state: AugmentedState, action: ActionId) -> float:
        entry = self._entries.get((state, action))
        return 0.0 if entry is None else entry.q

    def visits(self, state: AugmentedState, action: ActionId) -> int:
        entry = self._entries.get((state, action))
        return 0 if entry is None else entry.visits

    def entry(self, state: AugmentedState, action: ActionId) -> QEntry:
        key = (state, action)
        if key not in self._entries:
            self._entries[key] = QEntry()
        return self._entries[key]

    def items(self) -> Iterator[Tuple[Tuple[AugmentedState, ActionId], QEntry]]:
        return iter(self._entries.items())

    def best_action(self, state: AugmentedState) -> ActionId:
        best = self.actions[0]
        best_q = self.q(state, best)
        for action in self.actions[1:]:
            value = self.q(state, action)
            if value > best_q:
                best, best_q = action, value
        return best

    def max_q(self, state: AugmentedState) -> float:
        return max(self.q(state, a) for a in self.actions)

    def to_frame(self) -> pd.DataFrame:
        rows = []
        width = max((len(s.buckets) for s, _ in self._entries), default=0)
        for (state, action), entry in self._entries.items():
            row = {f"bucket_{i + 1}": b for i, b in enumerate(state.buckets)}
            row.update({
                'pending': "|".join(a.value for a in state.pending),
                'action': action.value,
                'q': entry.q,
                'visits': entry.visits,
            })
            rows.append(row)
        columns = [f"bucket_{i + 1}" for i in range(width)] + ['pending', 'action', 'q', 'visits']
        frame = pd.DataFrame(rows, columns=columns)
        return frame.sort_values(columns[:-2], kind="mergesort").reset_index(drop=True)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, actions: Optional[Sequence[ActionId]] = None) -> 'QTable':
        bucket_columns = sorted((c for c in frame.columns if c.startswith("bucket_")),
                                key=lambda c: int(c.split("_")[1]))
        seen = {ActionId(a) for a in frame['action']} if len(frame) else set()
        table = cls(actions if actions is not None else (SAFE_ACTIONS + tuple(seen)))
        for row in frame.itertuples(index=False):
            record = row._asdict()
            pending = str(record['pending']) if not pd.isna(record['pending']) else ""
            state = AugmentedState(
                buckets=tuple(int(record[c]) for c in bucket_columns),
                pending=tuple(ActionId(p) for p in pending.split("|") if p),
            )
            table._entries[(state, ActionId(record['action']))] = QEntry(
                q=float(record['q']), visits=int(record['visits'])
            )
        return table

    def save_csv(self, path: Path):
        self.to_frame().to_csv(path, index=False, float_format="%.17g")

    @classmethod
    def load_csv(cls, path: Path, actions: Optional[Sequence[ActionId]] = None) -> 'QTable':
        return cls.from_frame(pd.read_csv(path, float_precision="round_trip"), actions)


def select_action(q: QTable, s: AugmentedState, eps: float, rng: np.random.Generator) -> ActionId:
    """Epsilon-greedy; the coin is always drawn so the stream advances identically"""
    if not 0.0 <= eps <= 1.0:
        raise InvalidInput(f"epsilon must lie in [0, 1], got {eps}")
    if rng.random() < eps:
        return q.actions[int(rng.integers(len(q.actions)))]
    return q.best_action(s)


def q_update(q: QTable, s: AugmentedState, a: ActionId, r: float, s_next: AugmentedState,
             alpha: float, gamma: float) -> QTable:
    if not 0.0 <= alpha <= 1.0:
        raise InvalidInput(f"alpha must lie in [0, 1], got {alpha}")
    target = r + gamma * q.max_q(s_next)
    entry = q.entry(s, a)
    entry.q += alpha * (target - entry.q)
    entry.visits += 1
    return q


def greedy_policy(q: QTable) -> Policy:
    return q.best_action


def _mean_wait(metrics: MetricsLog) -> float:
    waits = [max(0.0, v.wait_time) for v in metrics.vehicles]
    return float(np.mean(waits)) if waits else math.nan


def train(engine_factory: Callable[[int], IntersectionEngine], learner_cfg: LearnerConfig,
          seed: int = 0) -> Tuple[QTable, List[TrainingPoint]]:
    """Tabular Q-learning over fixed-length episodes; every episode starts from an empty intersection"""
    q = QTable(available_actions(learner_cfg))
    rng = named_stream(seed, "exploration")
    curves: List[TrainingPoint] = []
    t = 0

    for episode in range(learner_cfg.episodes):
        engine = engine_factory(episode)
        state = reduce_state(engine.observe_state(), engine.pending_actions, learner_cfg)
        cumulative = 0.0
        queue_means = []
        for _ in range(learner_cfg.episode_length_blocks):
            action = select_action(q, state, learner_cfg.epsilon(t), rng)
            record = engine.advance_block(action)
            next_state = reduce_state(engine.observe_state(), engine.pending_actions, learner_cfg)
            q_update(q, state, action, record.reward, next_state, learner_cfg.alpha(t), learner_cfg.gamma)
            cumulative += record.reward
            queue_means.append(float(np.mean(record.queues)))
            state = next_state
            t += 1

        metrics = engine.finalize()
        point = TrainingPoint(
            episode=episode,
            cumulative_reward=cumulative,
            avg_wait_s=_mean_wait(metrics),
            avg_queue_per_lane=float(np.mean(queue_means)) if queue_means else math.nan,
        )
        curves.append(point)
        sim_logger.log_training_event(episode, point.model_dump())

    return q, curves


def evaluate(engine: IntersectionEngine, policy: Policy, n_blocks: int,
             learner_cfg: LearnerConfig) -> MetricsLog:
    """Run a frozen policy; the table is only read"""
    for _ in range(n_blocks):
        state = reduce_state(engine.observe_state(), engine.pending_actions, learner_cfg)
        engine.advance_block(policy(state))
    return engine.finalize()
