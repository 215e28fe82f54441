"""Unit stat tables and declarative scenario definitions.

Shipped scenarios mirror a micro-battle ladder: a single-class skirmish,
two- and three-class mixed teams, a team with a healer, and an asymmetric
variant where the opponent outnumbers the agents.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields


@dataclass(frozen=True)
class UnitSpec:
    name: str
    max_hp: float
    damage: float  # per attack; 0 for healing classes
    heal: float  # per heal; 0 for attacking classes
    attack_range: int
    heal_range: int
    sight_range: int
    comm_range: int
    move_speed: int
    cooldown: int  # steps between attacks/heals

    def __post_init__(self):
        if self.damage > 0 and self.heal > 0:
            raise ValueError(f"unit {self.name!r} cannot both attack and heal")


# Rock-paper-scissors flavored defaults; tuned for desk-scale play, not for
# fidelity to any particular RTS title. Communication ranges deliberately
# exceed sight ranges so messages can relay what the receiver cannot see.
DEFAULT_UNITS = {
    "fighter": UnitSpec("fighter", 45, 6, 0, 1, 0, 3, 6, 1, 0),
    "ranged": UnitSpec("ranged", 40, 8, 0, 4, 0, 4, 7, 1, 1),
    "heavy": UnitSpec("heavy", 80, 10, 0, 1, 0, 3, 6, 1, 1),
    "healer": UnitSpec("healer", 50, 0, 8, 0, 3, 4, 7, 1, 0),
    "artillery": UnitSpec("artillery", 30, 12, 0, 6, 0, 5, 9, 1, 2),
}


@dataclass
class ScenarioConfig:
    name: str
    grid: tuple[int, int]
    allies: list[tuple[str, int]]  # (class name, count), order fixed
    enemies: list[tuple[str, int]]
    opponent: str = "focus_fire"
    max_steps: int = 50
    unit_overrides: dict = field(default_factory=dict)
    win_bonus: float = 10.0
    heal_reward_weight: float = 0.5

    def unit_spec(self, class_name: str) -> UnitSpec:
        spec = DEFAULT_UNITS[class_name]
        over = self.unit_overrides.get(class_name)
        if over:
            valid = {f.name for f in fields(UnitSpec)} - {"name"}
            unknown = set(over) - valid
            if unknown:
                raise ValueError(f"unknown unit fields for {class_name!r}: {sorted(unknown)}")
            spec = UnitSpec(**{**spec.__dict__, **over})
        return spec

    def class_names(self) -> list[str]:
        """All unit classes present, allies first, deterministic order."""
        seen = []
        for name, _ in list(self.allies) + list(self.enemies):
            if name not in seen:
                seen.append(name)
        return seen

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "grid": list(self.grid),
            "allies": {c: n for c, n in self.allies},
            "enemies": {c: n for c, n in self.enemies},
            "opponent": self.opponent,
            "max_steps": self.max_steps,
            "unit_overrides": self.unit_overrides,
            "win_bonus": self.win_bonus,
            "heal_reward_weight": self.heal_reward_weight,
        }


def _mk(name, grid, allies, enemies, opponent="focus_fire", max_steps=50):
    return ScenarioConfig(name, grid, allies, enemies, opponent, max_steps)


_BUILTIN = {
    "m3": _mk("m3", (8, 8), [("fighter", 3)], [("fighter", 3)], max_steps=40),
    "m3_passive": _mk("m3_passive", (8, 8), [("fighter", 3)], [("fighter", 3)],
                      opponent="passive", max_steps=40),
    "s3z5": _mk("s3z5", (12, 12), [("ranged", 3), ("fighter", 5)],
                [("ranged", 3), ("fighter", 5)]),
    "c1s3z5": _mk("c1s3z5", (12, 12), [("artillery", 1), ("ranged", 3), ("fighter", 5)],
                  [("artillery", 1), ("ranged", 3), ("fighter", 5)], max_steps=60),
    "mmm": _mk("mmm", (14, 14), [("healer", 1), ("heavy", 2), ("ranged", 7)],
               [("healer", 1), ("heavy", 2), ("ranged", 7)], max_steps=60),
    "mmm2": _mk("mmm2", (14, 14), [("healer", 1), ("heavy", 2), ("ranged", 7)],
                [("healer", 1), ("heavy", 3), ("ranged", 8)], max_steps=60),
}

_SCENARIO_KEYS = {
    "name", "grid", "allies", "enemies", "opponent", "max_steps",
    "unit_overrides", "win_bonus", "heal_reward_weight",
}


def builtin_scenarios() -> list[str]:
    return list(_BUILTIN)


def load_scenario(scenario: str) -> ScenarioConfig:
    """Resolve a builtin scenario id or parse a scenario definition file."""
    if scenario in _BUILTIN:
        return _BUILTIN[scenario]
    with open(scenario) as f:
        raw = json.load(f)
    unknown = set(raw) - _SCENARIO_KEYS
    if unknown:
        raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
    for key in ("name", "grid", "allies", "enemies"):
        if key not in raw:
            raise ValueError(f"scenario file missing required key {key!r}")
    return ScenarioConfig(
        name=raw["name"],
        grid=tuple(raw["grid"]),
        allies=list(raw["allies"].items()),
        enemies=list(raw["enemies"].items()),
        opponent=raw.get("opponent", "focus_fire"),
        max_steps=int(raw.get("max_steps", 50)),
        unit_overrides=raw.get("unit_overrides", {}),
        win_bonus=float(raw.get("win_bonus", 10.0)),
        heal_reward_weight=float(raw.get("heal_reward_weight", 0.5)),
    )


def save_scenario(config: ScenarioConfig, path):
    with open(path, "w") as f:
        json.dump(config.to_dict(), f, indent=2)
