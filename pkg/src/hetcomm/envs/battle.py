"""Deterministic desk-scale cooperative battle simulator.

Two teams of heterogeneous units fight on a small grid. The agent team is
controlled through the environment interface; the enemy team follows a
scripted policy. Distances are Chebyshev, resolution is simultaneous
(moves, then attacks and heals, then deaths) with ties broken by unit
index. Everything is a pure function of (scenario, seed, actions).

Joint action layout: 0 no-op, 1 stop, 2-5 move (+y, +x, -y, -x), then one
attack slot per enemy unit, then (if the ally roster has a healing class)
one heal slot per ally unit.
"""

from __future__ import annotations

import numpy as np

from ..graph import AgentGraph, build_graph
from ..network import ObservationPadder
from .base import EnvStepResult
from .scenarios import ScenarioConfig

NOOP, STOP = 0, 1
MOVE_DELTAS = [(0, 1), (1, 0), (0, -1), (-1, 0)]  # N, E, S, W
NUM_FIXED_ACTIONS = 6


class IllegalActionError(RuntimeError):
    pass


def _chebyshev(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.abs(a[:, None, :] - b[None, :, :]).max(axis=2)


class BattleEnv:
    def __init__(self, scenario: ScenarioConfig, append_class_onehot: bool = True,
                 trace: bool = False):
        self.scenario = scenario
        self.class_names = scenario.class_names()
        self.num_classes = len(self.class_names)
        self.specs = {name: scenario.unit_spec(name) for name in self.class_names}

        def roster_classes(roster):
            out = []
            for name, count in roster:
                out.extend([self.class_names.index(name)] * count)
            return np.array(out, dtype=np.int64)

        self.ally_class = roster_classes(scenario.allies)
        self.enemy_class = roster_classes(scenario.enemies)
        self.num_agents = len(self.ally_class)
        self.num_enemies = len(self.enemy_class)
        self.num_units = self.num_agents + self.num_enemies
        self.unit_class = np.concatenate([self.ally_class, self.enemy_class])
        self.team = np.concatenate(
            [np.zeros(self.num_agents, dtype=np.int64), np.ones(self.num_enemies, dtype=np.int64)]
        )
        self.agent_classes = self.ally_class

        # per-unit stat arrays
        def stat(field):
            return np.array([getattr(self.specs[self.class_names[c]], field)
                             for c in self.unit_class], dtype=np.float64)

        self.max_hp = stat("max_hp")
        self.damage = stat("damage")
        self.heal_amount = stat("heal")
        self.attack_range = stat("attack_range").astype(np.int64)
        self.heal_range = stat("heal_range").astype(np.int64)
        self.sight_range = stat("sight_range").astype(np.int64)
        self.comm_range = stat("comm_range").astype(np.int64)
        self.cooldown_spec = stat("cooldown").astype(np.int64)

        ally_heals = any(self.heal_amount[: self.num_agents] > 0) or any(
            self.specs[name].heal > 0 for name, _ in scenario.allies
        )
        self.num_heal_slots = self.num_agents if ally_heals else 0
        self.num_actions = NUM_FIXED_ACTIONS + self.num_enemies + self.num_heal_slots
        self.heal_base = NUM_FIXED_ACTIONS + self.num_enemies

        slot_width = 4 + self.num_classes
        raw_width = 4 + (self.num_units - 1) * slot_width
        self.padder = ObservationPadder(
            [raw_width] * self.num_classes, self.num_classes, append_class_onehot
        )
        self.obs_width = self.padder.width
        self._slot_width = slot_width
        self.trace_enabled = trace
        self.trace_lines: list[str] = []
        self._rng = None

    # ------------------------------------------------------------------

    def reset(self, seed: int) -> EnvStepResult:
        self._rng = np.random.default_rng(seed)
        w, h = self.scenario.grid
        self.pos = np.zeros((self.num_units, 2), dtype=np.int64)
        self._place_team(np.arange(self.num_agents), left=True)
        self._place_team(np.arange(self.num_agents, self.num_units), left=False)
        self.hp = self.max_hp.copy()
        self.alive = np.ones(self.num_units, dtype=bool)
        self.cooldown = np.zeros(self.num_units, dtype=np.int64)
        self.step_count = 0
        self.dead_enemies = 0
        self.won = False
        self.enemy_total_hp = float(self.max_hp[self.num_agents :].sum())
        self.trace_lines = []
        self._trace("reset")
        return self._result(reward=0.0, done=False)

    def _place_team(self, idx: np.ndarray, left: bool):
        w, h = self.scenario.grid
        cells = []
        col = 1 if left else w - 2
        direction = 1 if left else -1
        remaining = len(idx)
        while remaining > 0:
            rows = min(remaining, h - 2)
            y0 = (h - rows) // 2
            for r in range(rows):
                cells.append((col, y0 + r))
            remaining -= rows
            col += direction
        order = self._rng.permutation(len(idx))
        for k, unit in enumerate(idx):
            self.pos[unit] = cells[order[k]]

    # ------------------------------------------------------------------

    def available_actions(self, agent: int) -> np.ndarray:
        mask = np.zeros(self.num_actions, dtype=bool)
        mask[NOOP] = True
        if not self.alive[agent]:
            return mask
        mask[STOP] = True
        w, h = self.scenario.grid
        occupied = {tuple(p) for p, a in zip(self.pos, self.alive) if a}
        for k, (dx, dy) in enumerate(MOVE_DELTAS):
            x, y = self.pos[agent] + (dx, dy)
            if 0 <= x < w and 0 <= y < h and (x, y) not in occupied:
                mask[NUM_FIXED_ACTIONS - 4 + k] = True
        ready = self.cooldown[agent] == 0
        if self.damage[agent] > 0 and ready:
            dists = np.abs(self.pos[self.num_agents :] - self.pos[agent]).max(axis=1)
            in_range = (dists <= self.attack_range[agent]) & self.alive[self.num_agents :]
            mask[NUM_FIXED_ACTIONS : NUM_FIXED_ACTIONS + self.num_enemies] = in_range
        if self.num_heal_slots and self.heal_amount[agent] > 0 and ready:
            dists = np.abs(self.pos[: self.num_agents] - self.pos[agent]).max(axis=1)
            healable = (
                (dists <= self.heal_range[agent])
                & self.alive[: self.num_agents]
                & (self.hp[: self.num_agents] < self.max_hp[: self.num_agents])
            )
            healable[agent] = False
            mask[self.heal_base : self.heal_base + self.num_agents] = healable
        return mask

    def _masks(self) -> np.ndarray:
        return np.stack([self.available_actions(i) for i in range(self.num_agents)])

    # ------------------------------------------------------------------

    def step(self, actions) -> EnvStepResult:
        actions = np.asarray(actions, dtype=np.int64)
        masks = self._masks()
        for i, a in enumerate(actions):
            if not masks[i, a]:
                raise IllegalActionError(f"agent {i} action {a} is illegal under the current mask")

        intents = [self._agent_intent(i, actions[i]) for i in range(self.num_agents)]
        intents += [self._enemy_intent(e) for e in range(self.num_agents, self.num_units)]

        # phase 1: moves, lower unit index resolves first
        occupied = {tuple(self.pos[u]) for u in range(self.num_units) if self.alive[u]}
        w, h = self.scenario.grid
        for u, intent in enumerate(intents):
            if intent[0] != "move" or not self.alive[u]:
                continue
            x, y = self.pos[u] + intent[1]
            if 0 <= x < w and 0 <= y < h and (x, y) not in occupied:
                occupied.discard(tuple(self.pos[u]))
                self.pos[u] = (x, y)
                occupied.add((x, y))

        # phase 2: attacks and heals against post-move positions
        damage = np.zeros(self.num_units)
        ally_damage = np.zeros(self.num_units)
        healing = np.zeros(self.num_units)
        ally_healing = np.zeros(self.num_units)
        acted = np.zeros(self.num_units, dtype=bool)
        for u, intent in enumerate(intents):
            if not self.alive[u]:
                continue
            kind = intent[0]
            if kind == "attack":
                target = intent[1]
                dist = np.abs(self.pos[u] - self.pos[target]).max()
                if self.alive[target] and dist <= self.attack_range[u]:
                    damage[target] += self.damage[u]
                    if self.team[u] == 0:
                        ally_damage[target] += self.damage[u]
                    acted[u] = True
            elif kind == "heal":
                target = intent[1]
                dist = np.abs(self.pos[u] - self.pos[target]).max()
                if self.alive[target] and dist <= self.heal_range[u]:
                    healing[target] += self.heal_amount[u]
                    if self.team[u] == 0:
                        ally_healing[target] += self.heal_amount[u]
                    acted[u] = True

        hp_before = self.hp.copy()
        dealt = np.minimum(ally_damage, hp_before)  # reward counts real damage only
        applied_heal = np.clip(self.max_hp - (hp_before - damage), 0.0, healing)
        heal_fraction = np.divide(
            applied_heal, healing, out=np.zeros_like(healing), where=healing > 0
        )
        rewarded_heal = ally_healing * heal_fraction
        self.hp = np.clip(hp_before - damage + healing, 0.0, self.max_hp)

        # phase 3: deaths and cooldowns
        died = self.alive & (self.hp <= 0)
        self.alive &= self.hp > 0
        self.cooldown = np.maximum(self.cooldown - 1, 0)
        self.cooldown[acted] = self.cooldown_spec[acted]

        self.dead_enemies = int((~self.alive[self.num_agents :]).sum())
        self.step_count += 1
        reward = float(
            (dealt[self.num_agents :].sum()
             + self.scenario.heal_reward_weight * rewarded_heal[: self.num_agents].sum())
            / self.enemy_total_hp
        )
        enemies_gone = not self.alive[self.num_agents :].any()
        allies_gone = not self.alive[: self.num_agents].any()
        if enemies_gone:
            self.won = True
            reward += self.scenario.win_bonus
        done = enemies_gone or allies_gone or self.step_count >= self.scenario.max_steps
        self._trace(f"step {self.step_count} actions {actions.tolist()} reward {reward:.6f}"
                    f" died {np.flatnonzero(died).tolist()}")
        return self._result(reward=reward, done=done)

    # ------------------------------------------------------------------

    def _agent_intent(self, agent: int, action: int):
        if not self.alive[agent] or action in (NOOP, STOP):
            return ("none",)
        if action < NUM_FIXED_ACTIONS:
            return ("move", np.array(MOVE_DELTAS[action - 2]))
        if action < self.heal_base:
            return ("attack", self.num_agents + (action - NUM_FIXED_ACTIONS))
        return ("heal", action - self.heal_base)

    def _enemy_intent(self, unit: int):
        if not self.alive[unit]:
            return ("none",)
        if self.scenario.opponent == "passive":
            return ("none",)
        if self.scenario.opponent != "focus_fire":
            raise ValueError(f"unknown opponent policy {self.scenario.opponent!r}")
        if self.heal_amount[unit] > 0:
            mates = [
                v for v in range(self.num_agents, self.num_units)
                if v != unit and self.alive[v] and self.hp[v] < self.max_hp[v]
            ]
            if not mates:
                return ("none",)
            dists = [np.abs(self.pos[unit] - self.pos[v]).max() for v in mates]
            reachable = [v for v, d in zip(mates, dists) if d <= self.heal_range[unit]]
            if reachable and self.cooldown[unit] == 0:
                target = min(reachable, key=lambda v: (self.hp[v] / self.max_hp[v], v))
                return ("heal", target)
            target = mates[int(np.argmin(dists))]
            return self._move_toward(unit, target)
        foes = [v for v in range(self.num_agents) if self.alive[v]]
        if not foes:
            return ("none",)
        dists = [np.abs(self.pos[unit] - self.pos[v]).max() for v in foes]
        target = foes[int(np.argmin(dists))]
        if min(dists) <= self.attack_range[unit] and self.cooldown[unit] == 0:
            return ("attack", target)
        return self._move_toward(unit, target)

    def _move_toward(self, unit: int, target: int):
        delta = self.pos[target] - self.pos[unit]
        prim = 0 if abs(delta[0]) >= abs(delta[1]) else 1
        occupied = {tuple(p) for p, a in zip(self.pos, self.alive) if a}
        w, h = self.scenario.grid
        for axis in (prim, 1 - prim):
            if delta[axis] == 0:
                continue
            step = np.zeros(2, dtype=np.int64)
            step[axis] = np.sign(delta[axis])
            x, y = self.pos[unit] + step
            if 0 <= x < w and 0 <= y < h and (x, y) not in occupied:
                return ("move", step)
        return ("none",)

    # ------------------------------------------------------------------

    def comm_graph(self) -> AgentGraph:
        arcs = []
        for i in range(self.num_agents):
            if not self.alive[i]:
                continue
            for j in range(self.num_agents):
                if i == j or not self.alive[j]:
                    continue
                if np.abs(self.pos[i] - self.pos[j]).max() <= self.comm_range[i]:
                    arcs.append((i, j))
        return build_graph(self.agent_classes, arcs, self.num_classes)

    def _observations(self) -> np.ndarray:
        w, h = self.scenario.grid
        hp_frac = np.divide(self.hp, self.max_hp)
        onehot = np.eye(self.num_classes)[self.unit_class]
        raws = []
        for i in range(self.num_agents):
            if not self.alive[i]:
                raws.append(np.zeros(4 + (self.num_units - 1) * self._slot_width))
                continue
            own = np.array([
                hp_frac[i],
                self.pos[i, 0] / max(w - 1, 1),
                self.pos[i, 1] / max(h - 1, 1),
                1.0 if self.cooldown[i] > 0 else 0.0,
            ])
            others = [u for u in range(self.num_agents) if u != i] + list(
                range(self.num_agents, self.num_units)
            )
            others = np.array(others)
            delta = self.pos[others] - self.pos[i]
            visible = self.alive[others] & (np.abs(delta).max(axis=1) <= self.sight_range[i])
            sight = max(self.sight_range[i], 1)
            slots = np.zeros((len(others), self._slot_width))
            slots[visible, 0] = 1.0
            slots[visible, 1] = delta[visible, 0] / sight
            slots[visible, 2] = delta[visible, 1] / sight
            slots[visible, 3] = hp_frac[others[visible]]
            slots[visible, 4:] = onehot[others[visible]]
            raws.append(np.concatenate([own, slots.reshape(-1)]))
        return self.padder.pad_all(raws, self.agent_classes)

    def _result(self, reward: float, done: bool) -> EnvStepResult:
        return EnvStepResult(
            observations=self._observations(),
            graph=self.comm_graph(),
            masks=self._masks(),
            reward=reward,
            done=done,
            info={
                "won": self.won,
                "dead_enemies": self.dead_enemies,
                "alive": self.alive[: self.num_agents].copy(),
            },
        )

    def _trace(self, line: str):
        if self.trace_enabled:
            hp = " ".join(f"{u}:{self.hp[u]:.0f}@{self.pos[u, 0]},{self.pos[u, 1]}"
                          for u in range(self.num_units))
            self.trace_lines.append(f"{line} | {hp}")

    def write_trace(self, path):
        with open(path, "w") as f:
            f.write("\n".join(self.trace_lines) + "\n")
