"""
Finite deterministic MDPs whose actions take effect d_a steps after they are
chosen, their reduction to an ordinary MDP over (state, pending actions), and
exact value iteration on the reduced chain.
"""
import itertools
import logging
from collections import deque
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from error_handler import InvalidInput
from models import ActionId, AugmentedState
from q_learner import QTable, q_update, select_action

logger = logging.getLogger(__name__)

Key = Tuple[AugmentedState, ActionId]


class DelayedMDP:
    """
    next_state[s, i] and reward[s, i] describe what happens in state s when
    actions[i] is the action being executed, which is the one chosen d_a
    steps earlier.
    """

    def __init__(self, next_state: np.ndarray, reward: np.ndarray, d_a: int,
                 actions: Sequence[ActionId] = (ActionId.OPEN_PAIR_13, ActionId.OPEN_PAIR_24)):
        next_state = np.asarray(next_state, dtype=int)
        reward = np.asarray(reward, dtype=float)
        if next_state.ndim != 2 or next_state.shape != reward.shape:
            raise InvalidInput("next_state and reward must be matching (states x actions) tables")
        if next_state.shape[1] != len(actions):
            raise InvalidInput(f"Tables have {next_state.shape[1]} action columns, {len(actions)} actions given")
        if d_a < 1:
            raise InvalidInput(f"d_a must be >= 1, got {d_a}")
        if next_state.min() < 0 or next_state.max() >= next_state.shape[0]:
            raise InvalidInput("next_state refers to an unknown state")
        self.next_state = next_state
        self.reward = reward
        self.d_a = d_a
        self.actions = tuple(actions)
        self._column = {a: i for i, a in enumerate(self.actions)}

    @classmethod
    def random(cls, rng: np.random.Generator, n_states: int, d_a: int,
               actions: Sequence[ActionId] = (ActionId.OPEN_PAIR_13, ActionId.OPEN_PAIR_24)) -> 'DelayedMDP':
        next_state = rng.integers(0, n_states, size=(n_states, len(actions)))
        reward = rng.uniform(-1.0, 1.0, size=(n_states, len(actions)))
        return cls(next_state, reward, d_a, actions)

    @property
    def n_states(self) -> int:
        return self.next_state.shape[0]

    def augmented_states(self) -> List[AugmentedState]:
        return [
            AugmentedState(buckets=(s,), pending=pending)
            for s in range(self.n_states)
            for pending in itertools.product(self.actions, repeat=self.d_a)
        ]

    def reduced_step(self, state: AugmentedState, action: ActionId) -> Tuple[AugmentedState, float]:
        """One transition of the reduced MDP: the oldest pending action executes, `action` joins the queue"""
        s = state.buckets[0]
        column = self._column[state.pending[0]]
        following = AugmentedState(
            buckets=(int(self.next_state[s, column]),),
            pending=state.pending[1:] + (action,),
        )
        return following, float(self.reward[s, column])

    def value_iteration(self, gamma: float, tol: float = 1e-12, max_iter: int = 100_000) -> Dict[Key, float]:
        states = self.augmented_states()
        transitions = {(i, a): self.reduced_step(i, a) for i in states for a in self.actions}
        values = {i: 0.0 for i in states}
        for _ in range(max_iter):
            q = {key: r + gamma * values[nxt] for key, (nxt, r) in transitions.items()}
            updated = {i: max(q[(i, a)] for a in self.actions) for i in states}
            delta = max(abs(updated[i] - values[i]) for i in states)
            values = updated
            if delta < tol:
                break
        return {key: r + gamma * values[nxt] for key, (nxt, r) in transitions.items()}

    def greedy_from_values(self, q: Dict[Key, float]) -> Dict[AugmentedState, ActionId]:
        policy = {}
        for state in self.augmented_states():
            best = self.actions[0]
            for action in self.actions[1:]:
                if q[(state, action)] > q[(state, best)]:
                    best = action
            policy[state] = best
        return policy

    def simulate_delayed(self, s0: int, initial_pending: Sequence[ActionId],
                         chosen: Sequence[ActionId]) -> List[float]:
        """Run the delayed process directly: each chosen action executes d_a steps later"""
        if len(initial_pending) != self.d_a:
            raise InvalidInput(f"Need {self.d_a} initially pending actions")
        buffer = deque(initial_pending)
        s = s0
        rewards = []
        for action in chosen:
            executing = buffer.popleft()
            buffer.append(action)
            column = self._column[executing]
            rewards.append(float(self.reward[s, column]))
            s = int(self.next_state[s, column])
        return rewards

    def simulate_reduced(self, s0: int, initial_pending: Sequence[ActionId],
                         chosen: Sequence[ActionId]) -> List[float]:
        state = AugmentedState(buckets=(s0,), pending=tuple(initial_pending))
        rewards = []
        for action in chosen:
            state, r = self.reduced_step(state, action)
            rewards.append(r)
        return rewards


def learn_reduced(mdp: DelayedMDP, steps: int, epsilon: float, gamma: float, rng: np.random.Generator,
                  alpha: float = 1.0, restart_every: Optional[int] = 25) -> QTable:
    """Q-learning on the reduced chain, restarting from a uniformly drawn augmented state"""
    q = QTable(mdp.actions)
    states = mdp.augmented_states()
    state = states[int(rng.integers(len(states)))]
    for step in range(steps):
        if restart_every and step > 0 and step % restart_every == 0:
            state = states[int(rng.integers(len(states)))]
        action = select_action(q, state, epsilon, rng)
        following, r = mdp.reduced_step(state, action)
        q_update(q, state, action, r, following, alpha, gamma)
        state = following
    return q
