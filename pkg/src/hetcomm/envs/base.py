"""Shared environment result type.

Every environment is a cooperative Dec-POMDP surface: all agents receive
the same scalar reward, observations are egocentric, and each step also
yields the current communication graph and per-agent action masks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..graph import AgentGraph


@dataclass
class EnvStepResult:
    observations: np.ndarray  # (num_agents, obs_width), padded
    graph: AgentGraph
    masks: np.ndarray  # (num_agents, num_actions) bool
    reward: float
    done: bool
    info: dict = field(default_factory=dict)
