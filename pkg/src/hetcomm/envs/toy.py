"""Tiny oracle environments with enumerable optima.

``SignalGameEnv`` makes communication necessary by construction: a scout
privately sees a bit and only a one-way scout-to-fighter channel lets the
fighter act on it. ``TwoStateMdpEnv`` is a hand-enumerable fixed-horizon
MDP used to verify Q-learning convergence against backward induction.
"""

from __future__ import annotations

import numpy as np

from ..graph import AgentGraph, build_graph
from ..network import ObservationPadder
from .base import EnvStepResult


class SignalGameEnv:
    """One-step cooperative signaling game.

    The scout (class 0) observes a bit encoded as +/-1; the fighter
    (class 1) must pick the matching output action for reward 1. Actions:
    0 no-op (scout only), 1 output-0, 2 output-1 (fighter only).
    """

    def __init__(self, with_arc: bool = True, append_class_onehot: bool = True):
        self.with_arc = with_arc
        self.num_agents = 2
        self.num_classes = 2
        self.agent_classes = np.array([0, 1], dtype=np.int64)
        self.num_actions = 3
        self.padder = ObservationPadder([2, 1], 2, append_class_onehot)
        self.obs_width = self.padder.width
        arcs = [(0, 1)] if with_arc else []
        self._graph: AgentGraph = build_graph(self.agent_classes, arcs, 2)
        self._masks = np.array([[True, False, False], [False, True, True]])
        self.won = False

    def reset(self, seed: int) -> EnvStepResult:
        rng = np.random.default_rng(seed)
        self.bit = int(rng.integers(2))
        self.done = False
        self.won = False
        return self._result(0.0, False)

    def step(self, actions) -> EnvStepResult:
        actions = np.asarray(actions, dtype=np.int64)
        for i, a in enumerate(actions):
            if not self._masks[i, a]:
                raise RuntimeError(f"agent {i} action {a} is illegal")
        correct = int(actions[1]) - 1 == self.bit
        self.won = correct
        self.done = True
        return self._result(1.0 if correct else 0.0, True)

    def _result(self, reward: float, done: bool) -> EnvStepResult:
        scout = np.array([1.0 if self.bit else -1.0, 1.0])
        fighter = np.array([1.0])
        obs = self.padder.pad_all([scout, fighter], self.agent_classes)
        return EnvStepResult(
            observations=obs,
            graph=self._graph,
            masks=self._masks.copy(),
            reward=reward,
            done=done,
            info={"won": self.won, "dead_enemies": 0,
                  "alive": np.ones(2, dtype=bool)},
        )


def signal_game_optimal_returns() -> tuple[float, float]:
    """(best expected return with the channel, without it), by enumeration.

    With the channel the fighter's choice may depend on the bit (4 mappings
    from bit to action); without it the fighter sees a constant and must
    commit to one action.
    """
    bits = [0, 1]
    with_channel = max(
        np.mean([1.0 if policy[b] == b else 0.0 for b in bits])
        for policy in [{0: a0, 1: a1} for a0 in (0, 1) for a1 in (0, 1)]
    )
    without_channel = max(
        np.mean([1.0 if a == b else 0.0 for b in bits]) for a in (0, 1)
    )
    return float(with_channel), float(without_channel)


# deterministic 2-state, 2-action, horizon-2 MDP: state -> action -> (next, reward)
TWO_STATE_DYNAMICS = {
    0: {0: (0, 0.1), 1: (1, 0.0)},
    1: {0: (1, 1.0), 1: (0, 0.3)},
}
TWO_STATE_HORIZON = 2


class TwoStateMdpEnv:
    """Single-agent fixed-horizon MDP wrapped in the multi-agent interface."""

    def __init__(self, append_class_onehot: bool = True):
        self.num_agents = 1
        self.num_classes = 1
        self.agent_classes = np.array([0], dtype=np.int64)
        self.num_actions = 2
        self.padder = ObservationPadder([2], 1, append_class_onehot)
        self.obs_width = self.padder.width
        self._graph = build_graph(self.agent_classes, [], 1)

    def reset(self, seed: int) -> EnvStepResult:
        self.state = 0
        self.t = 0
        return self._result(0.0, False)

    def step(self, actions) -> EnvStepResult:
        action = int(np.asarray(actions).reshape(-1)[0])
        self.state, reward = TWO_STATE_DYNAMICS[self.state][action]
        self.t += 1
        return self._result(reward, self.t >= TWO_STATE_HORIZON)

    def _result(self, reward: float, done: bool) -> EnvStepResult:
        obs = np.zeros(2)
        obs[self.state] = 1.0
        return EnvStepResult(
            observations=self.padder.pad_all([obs], self.agent_classes),
            graph=self._graph,
            masks=np.ones((1, 2), dtype=bool),
            reward=reward,
            done=done,
            info={"won": False, "dead_enemies": 0, "alive": np.ones(1, dtype=bool)},
        )


def two_state_optimal_q(gamma: float) -> dict:
    """Optimal Q values by backward induction: {(state, t): [q(a0), q(a1)]}
    with t counted from 1 at the first decision."""
    horizon = TWO_STATE_HORIZON
    q = {}
    values = {s: 0.0 for s in TWO_STATE_DYNAMICS}
    for t in range(horizon, 0, -1):
        new_values = {}
        for s, moves in TWO_STATE_DYNAMICS.items():
            qs = []
            for a in sorted(moves):
                nxt, r = moves[a]
                qs.append(r + (gamma * values[nxt] if t < horizon else 0.0))
            q[(s, t)] = qs
            new_values[s] = max(qs)
        values = new_values
    return q
