"""Deterministic turn-based combat micro-simulator.

Discrete action space per controlled agent::

    0        NoOp      (legal only while dead)
    1        Stop
    2..5     Move north / south / east / west
    6 + k    Attack enemy slot k

Each step resolves in four phases: movement, then simultaneous attacks,
then deaths, then cooldown bookkeeping. The engine itself is fully
deterministic; the optional ``rng`` argument of :func:`step` is accepted
for interface stability but the shipped rules never draw from it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import IllegalActionError
from .scenario import ScenarioSpec
from .units import CONTROLLED, ENEMY, TYPE_INDEX, UnitState

NOOP = 0
STOP = 1
MOVE_N = 2
MOVE_S = 3
MOVE_E = 4
MOVE_W = 5
ATTACK_BASE = 6

# (dx, dy) per move action; y grows southward so north is -y.
_MOVE_DELTAS = {MOVE_N: (0.0, -1.0), MOVE_S: (0.0, 1.0),
                MOVE_E: (1.0, 0.0), MOVE_W: (-1.0, 0.0)}

_MOVE_NAMES = {MOVE_N: "N", MOVE_S: "S", MOVE_E: "E", MOVE_W: "W"}


def action_name(action: int) -> str:
    if action == NOOP:
        return "NoOp"
    if action == STOP:
        return "Stop"
    if action in _MOVE_NAMES:
        return f"Move({_MOVE_NAMES[action]})"
    if action >= ATTACK_BASE:
        return f"Attack({action - ATTACK_BASE})"
    return f"Action({action})"


@dataclass
class StepOutcome:
    shared_reward: float
    terminal: bool
    victory: bool
    damage_dealt: float
    kills: int


@dataclass
class WorldState:
    """Full simulator state; a plain value safe to copy across workers."""

    spec: ScenarioSpec
    units: list[UnitState]
    step_count: int = 0
    seed: int = 0

    @property
    def n_controlled(self) -> int:
        return self.spec.n_controlled

    def controlled(self) -> list[UnitState]:
        return self.units[:self.n_controlled]

    def enemies(self) -> list[UnitState]:
        return self.units[self.n_controlled:]

    def living(self, team: int) -> list[UnitState]:
        return [u for u in self.units if u.team == team and u.alive]

    def unit(self, unit_id: int) -> UnitState:
        if not (0 <= unit_id < len(self.units)):
            raise KeyError(f"unknown unit id {unit_id}")
        return self.units[unit_id]

    def copy(self) -> "WorldState":
        return WorldState(self.spec, [u.copy() for u in self.units],
                          self.step_count, self.seed)


def load_scenario(spec: ScenarioSpec, seed: int = 0) -> WorldState:
    """Reset a scenario: spawn positions, full health (scaled for enemies)."""
    spec.validate()
    units = []
    uid = 0
    for utype, (x, y) in spec.controlled_units:
        units.append(UnitState(uid, CONTROLLED, utype, x, y, utype.max_health))
        uid += 1
    for utype, (x, y) in spec.enemy_units:
        units.append(UnitState(uid, ENEMY, utype, x, y,
                               utype.max_health * spec.enemy_health_fraction))
        uid += 1
    return WorldState(spec, units, step_count=0, seed=seed)


def _move_in_bounds(spec: ScenarioSpec, unit: UnitState, action: int) -> bool:
    dx, dy = _MOVE_DELTAS[action]
    nx = unit.x + dx * unit.type.move_speed
    ny = unit.y + dy * unit.type.move_speed
    return 0 <= nx <= spec.map_width - 1 and 0 <= ny <= spec.map_height - 1


def legal_actions(world: WorldState, agent_id: int) -> np.ndarray:
    """Boolean mask over the action space for one controlled agent."""
    if not (0 <= agent_id < world.n_controlled):
        raise KeyError(f"agent id {agent_id} is not a controlled agent")
    unit = world.units[agent_id]
    mask = np.zeros(world.spec.num_actions, dtype=bool)
    if not unit.alive:
        mask[NOOP] = True
        return mask
    mask[STOP] = True
    for move in _MOVE_DELTAS:
        mask[move] = _move_in_bounds(world.spec, unit, move)
    if unit.cooldown_remaining == 0:
        for k, enemy in enumerate(world.enemies()):
            if enemy.alive and unit.distance_to(enemy) <= unit.type.attack_range:
                mask[ATTACK_BASE + k] = True
    return mask


def compute_reward(damage_dealt: float, kills: int, victory: bool,
                   spec: ScenarioSpec) -> float:
    """Shared team reward: damage + kill points + victory bonus, scaled to 20.

    The scale is chosen per scenario so a perfect episode (all enemy
    health destroyed, every enemy killed, victory) sums to exactly 20.
    """
    if damage_dealt < 0:
        raise ValueError("damage_dealt must be non-negative")
    total_health = sum(u.max_health for u, _ in spec.enemy_units)
    total_health *= spec.enemy_health_fraction
    kill_points = 10.0 * len(spec.enemy_units)
    victory_bonus = total_health
    scale = 20.0 / (total_health + kill_points + victory_bonus)
    return scale * (damage_dealt + 10.0 * kills + victory_bonus * victory)


def _scripted_decisions(world: WorldState) -> list[tuple[int, float]]:
    """Per enemy slot: (action, move clamp). Moves are clamped to the
    remaining axis delta so a chasing enemy never overshoots alignment."""
    targets = world.controlled()
    decisions = []
    for enemy in world.enemies():
        if not enemy.alive:
            decisions.append((NOOP, 0.0))
            continue
        best = None
        best_dist = math.inf
        for target in targets:
            if not target.alive:
                continue
            d = enemy.distance_to(target)
            if d < best_dist - 1e-12:
                best, best_dist = target, d
        if best is None:
            decisions.append((STOP, 0.0))
            continue
        if best_dist <= enemy.type.attack_range:
            if enemy.cooldown_remaining == 0:
                # Enemy attacks carry the controlled target's unit id.
                decisions.append((ATTACK_BASE + best.unit_id, 0.0))
            else:
                decisions.append((STOP, 0.0))
            continue
        dx = best.x - enemy.x
        dy = best.y - enemy.y
        # Align the nearer nonzero axis first; ties prefer x.
        if dx != 0 and (dy == 0 or abs(dx) <= abs(dy)):
            decisions.append((MOVE_E if dx > 0 else MOVE_W, abs(dx)))
        else:
            decisions.append((MOVE_S if dy > 0 else MOVE_N, abs(dy)))
    return decisions


def scripted_opponent(world: WorldState) -> list[int]:
    """One action per enemy slot: attack the nearest controlled unit when
    ready and in range, otherwise close in along the axis nearer to
    alignment. Distance ties pick the lowest target unit id; dead enemies
    emit NoOp."""
    return [action for action, _ in _scripted_decisions(world)]


def _apply_move(spec: ScenarioSpec, unit: UnitState, action: int,
                clamp_to_target: float | None = None) -> None:
    dx, dy = _MOVE_DELTAS[action]
    speed = unit.type.move_speed
    if clamp_to_target is not None:
        speed = min(speed, clamp_to_target)
    unit.x = min(max(unit.x + dx * speed, 0.0), spec.map_width - 1)
    unit.y = min(max(unit.y + dy * speed, 0.0), spec.map_height - 1)


def step(world: WorldState, joint_actions: list[int],
         rng: np.random.Generator | None = None) -> tuple[WorldState, StepOutcome]:
    """Advance the world by one step given one action per controlled agent.

    Actions are validated against :func:`legal_actions`; an illegal
    submission raises :class:`IllegalActionError` naming the agent.
    """
    spec = world.spec
    n = world.n_controlled
    if len(joint_actions) != n:
        raise IllegalActionError(
            f"expected {n} actions, got {len(joint_actions)}")
    for agent_id, action in enumerate(joint_actions):
        mask = legal_actions(world, agent_id)
        if not (0 <= action < len(mask)) or not mask[action]:
            raise IllegalActionError(
                f"agent {agent_id}: illegal action {action_name(action)}")

    enemy_decisions = _scripted_decisions(world)
    enemy_actions = [action for action, _ in enemy_decisions]
    new = world.copy()
    new.step_count += 1

    # Phase 1: movement (independent per unit, applied simultaneously).
    for agent_id, action in enumerate(joint_actions):
        if action in _MOVE_DELTAS:
            _apply_move(spec, new.units[agent_id], action)
    for k, (action, clamp) in enumerate(enemy_decisions):
        if action in _MOVE_DELTAS:
            _apply_move(spec, new.units[n + k], action, clamp_to_target=clamp)

    # Phase 2: attacks resolve simultaneously against post-movement health.
    incoming = [0.0] * len(new.units)
    attackers = []
    for agent_id, action in enumerate(joint_actions):
        if action >= ATTACK_BASE:
            target_id = n + (action - ATTACK_BASE)
            incoming[target_id] += new.units[agent_id].type.damage_per_hit
            attackers.append(agent_id)
    for k, action in enumerate(enemy_actions):
        if action >= ATTACK_BASE:
            target_id = action - ATTACK_BASE
            incoming[target_id] += new.units[n + k].type.damage_per_hit
            attackers.append(n + k)

    # Phase 3: deaths. Damage to a unit is capped at its remaining health
    # so reward bookkeeping conserves total enemy health.
    damage_dealt = 0.0
    kills = 0
    for unit, dmg in zip(new.units, incoming):
        if dmg <= 0.0 or not unit.alive:
            continue
        lost = min(unit.health, dmg)
        unit.health -= lost
        if unit.team == ENEMY:
            damage_dealt += lost
            if not unit.alive:
                kills += 1

    # Phase 4: cooldowns. Attackers reset; everyone else ticks down.
    attacker_set = set(attackers)
    for unit in new.units:
        if not unit.alive:
            continue
        if unit.unit_id in attacker_set:
            unit.cooldown_remaining = unit.type.cooldown
        elif unit.cooldown_remaining > 0:
            unit.cooldown_remaining -= 1

    victory = not any(u.alive for u in new.enemies())
    defeat = not any(u.alive for u in new.controlled())
    timeout = new.step_count >= spec.max_episode_steps
    terminal = victory or defeat or timeout
    reward = compute_reward(damage_dealt, kills, victory, spec)
    return new, StepOutcome(reward, terminal, victory, damage_dealt, kills)


def observe(world: WorldState, agent_id: int) -> np.ndarray:
    """Local observation vector for one controlled agent.

    Layout: [own health, ready flag, own x, own y] then, for every enemy
    slot and then every ally slot sorted nearest-first: [rel x, rel y,
    distance, health, one-hot type (3), visible]. Slots for dead or
    out-of-sight units are zero. All entries lie in [-1, 1]; a dead
    observer gets an all-zero vector.
    """
    if not (0 <= agent_id < world.n_controlled):
        raise KeyError(f"agent id {agent_id} is not a controlled agent")
    spec = world.spec
    obs = np.zeros(spec.observation_dim, dtype=np.float32)
    me = world.units[agent_id]
    if not me.alive:
        return obs
    sight = spec.sight_range
    obs[0] = me.health / me.type.max_health
    obs[1] = 1.0 if me.cooldown_remaining == 0 else 0.0
    obs[2] = me.x / (spec.map_width - 1)
    obs[3] = me.y / (spec.map_height - 1)

    def fill(slot_base: int, others: list[UnitState]) -> None:
        visible = [(me.distance_to(u), u.unit_id, u) for u in others
                   if u.alive and me.distance_to(u) <= sight]
        visible.sort(key=lambda t: (t[0], t[1]))
        for i, (dist, _, u) in enumerate(visible):
            base = slot_base + 8 * i
            obs[base + 0] = (u.x - me.x) / sight
            obs[base + 1] = (u.y - me.y) / sight
            obs[base + 2] = dist / sight
            obs[base + 3] = u.health / u.type.max_health
            obs[base + 4 + TYPE_INDEX[u.type.type_id]] = 1.0
            obs[base + 7] = 1.0

    fill(4, world.enemies())
    allies = [u for u in world.controlled() if u.unit_id != agent_id]
    fill(4 + 8 * spec.n_enemies, allies)
    return obs
