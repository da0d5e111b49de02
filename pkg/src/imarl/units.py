"""Unit catalog and per-unit runtime state.

Unit statistics are fixed so that a scripted mirror match on the shipped
scenarios runs for a few dozen steps: long enough for positioning to
matter, short enough for desk-scale training.
"""

from __future__ import annotations

from dataclasses import dataclass, field

CONTROLLED = 0
ENEMY = 1

TEAM_NAMES = {CONTROLLED: "controlled", ENEMY: "enemy"}


@dataclass(frozen=True)
class UnitTypeSpec:
    """Static combat statistics for one unit type."""

    type_id: str
    max_health: float
    attack_range: float  # cells
    damage_per_hit: float
    move_speed: float  # cells per step
    cooldown: int  # steps a unit must wait between attacks
    influence_strength: float

    def __post_init__(self):
        for name in ("max_health", "attack_range", "damage_per_hit",
                     "move_speed", "influence_strength"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{self.type_id}: {name} must be positive")
        if self.cooldown < 0:
            raise ValueError(f"{self.type_id}: cooldown must be >= 0")


# Melee zealots have range 1; ranged types satisfy attack_range >= 1.
MARINE = UnitTypeSpec("marine", max_health=45.0, attack_range=5.0,
                      damage_per_hit=6.0, move_speed=1.0, cooldown=2,
                      influence_strength=1.0)
STALKER = UnitTypeSpec("stalker", max_health=160.0, attack_range=6.0,
                       damage_per_hit=14.0, move_speed=1.0, cooldown=2,
                       influence_strength=2.0)
ZEALOT = UnitTypeSpec("zealot", max_health=150.0, attack_range=1.0,
                      damage_per_hit=16.0, move_speed=1.0, cooldown=1,
                      influence_strength=1.8)

UNIT_TYPES = {t.type_id: t for t in (MARINE, STALKER, ZEALOT)}

# Index used for the one-hot type entry in observations.
TYPE_INDEX = {"marine": 0, "stalker": 1, "zealot": 2}


def unit_type(type_id: str) -> UnitTypeSpec:
    try:
        return UNIT_TYPES[type_id]
    except KeyError:
        raise KeyError(f"unknown unit type {type_id!r}; "
                       f"known: {sorted(UNIT_TYPES)}") from None


@dataclass
class UnitState:
    """Mutable per-unit state inside a world snapshot."""

    unit_id: int
    team: int
    type: UnitTypeSpec
    x: float
    y: float
    health: float
    cooldown_remaining: int = 0

    @property
    def alive(self) -> bool:
        return self.health > 0.0

    def distance_to(self, other: "UnitState") -> float:
        return ((self.x - other.x) ** 2 + (self.y - other.y) ** 2) ** 0.5

    def copy(self) -> "UnitState":
        return UnitState(self.unit_id, self.team, self.type,
                         self.x, self.y, self.health, self.cooldown_remaining)
