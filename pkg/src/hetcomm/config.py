"""Training configuration: every tunable in one serializable record."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field


@dataclass
class TrainConfig:
    # experiment surface
    scenario: str = "m3"
    comm: str = "rgcn"  # rgcn | gat | none
    mixer: str = "vdn"  # iql | vdn
    steps: int = 200000
    eval_interval: int = 10000
    eval_episodes: int = 32
    seeds: list[int] = field(default_factory=lambda: [0])

    # optimization
    lr: float = 2.5e-4
    l2_coef: float = 1e-5
    gamma: float = 0.99
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip_norm: float | None = None
    target_sync_interval: int = 250

    # exploration
    eps_min: float = 0.1
    eps_max: float = 0.95
    eps_decay_steps: int = 50000

    # replay
    buffer_capacity: int = 2000
    batch_size: int = 32
    train_every: int = 1

    # network
    hidden_width: int = 96
    comm_layers: int = 2
    rgcn_bases: int = 2
    gat_heads: int = 3
    leaky_relu_slope: float = 0.01
    append_class_onehot: bool = True

    def __post_init__(self):
        if self.comm not in ("rgcn", "gat", "none"):
            raise ValueError(f"comm must be rgcn, gat or none, got {self.comm!r}")
        if self.mixer not in ("iql", "vdn"):
            raise ValueError(f"mixer must be iql or vdn, got {self.mixer!r}")
        if not self.seeds:
            raise ValueError("at least one seed is required")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")

    @classmethod
    def load(cls, path) -> "TrainConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def replace(self, **kwargs) -> "TrainConfig":
        return dataclasses.replace(self, **kwargs)
