"""hetcomm: class-specialized inter-agent communication for cooperative
multi-agent reinforcement learning, with built-in desk-scale environments."""

from .autodiff import Tensor, no_grad
from .config import TrainConfig
from .graph import AgentGraph, RelationIndex, build_graph
from .params import ParameterStore, adam_step

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "no_grad",
    "TrainConfig",
    "AgentGraph",
    "RelationIndex",
    "build_graph",
    "ParameterStore",
    "adam_step",
    "__version__",
]
