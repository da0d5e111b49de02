"""Scenario definitions and the plain-text scenario file format.

A scenario file has three sections::

    [scenario]
    name = 3m
    map_width = 32
    map_height = 32
    max_episode_steps = 100
    enemy_health_fraction = 1.0
    sight_range = 9

    [controlled]
    marine 8 13
    marine 8 16

    [enemy]
    marine 24 13
    marine 24 16

The ``[scenario]`` section holds ``key = value`` pairs; the two team
sections list one unit per line as ``<type> <x> <y>``. Blank lines and
``#`` comments are ignored. Four scenarios ship with the package: 3m,
8m, 25m and 2s3z.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from .errors import ScenarioError
from .units import UnitTypeSpec, unit_type

DEFAULT_SIGHT_RANGE = 9.0


@dataclass(frozen=True)
class ScenarioSpec:
    """Everything needed to reset a battle."""

    name: str
    map_width: int
    map_height: int
    controlled_units: tuple[tuple[UnitTypeSpec, tuple[float, float]], ...]
    enemy_units: tuple[tuple[UnitTypeSpec, tuple[float, float]], ...]
    max_episode_steps: int
    enemy_health_fraction: float = 1.0
    sight_range: float = DEFAULT_SIGHT_RANGE

    def validate(self) -> "ScenarioSpec":
        if self.map_width < 2 or self.map_height < 2:
            raise ScenarioError(f"{self.name}: map must be at least 2x2")
        if self.max_episode_steps < 1:
            raise ScenarioError(f"{self.name}: max_episode_steps must be >= 1")
        if not (0.0 < self.enemy_health_fraction <= 1.0):
            raise ScenarioError(
                f"{self.name}: enemy_health_fraction must be in (0, 1], "
                f"got {self.enemy_health_fraction}")
        if self.sight_range <= 0:
            raise ScenarioError(f"{self.name}: sight_range must be positive")
        if not self.controlled_units or not self.enemy_units:
            raise ScenarioError(f"{self.name}: both teams need at least one unit")
        seen = set()
        for team, roster in (("controlled", self.controlled_units),
                             ("enemy", self.enemy_units)):
            for utype, (x, y) in roster:
                if not (0 <= x <= self.map_width - 1
                        and 0 <= y <= self.map_height - 1):
                    raise ScenarioError(
                        f"{self.name}: {team} {utype.type_id} spawn ({x}, {y}) "
                        f"outside {self.map_width}x{self.map_height} map")
                if (x, y) in seen:
                    raise ScenarioError(
                        f"{self.name}: duplicate spawn position ({x}, {y})")
                seen.add((x, y))
        return self

    @property
    def n_controlled(self) -> int:
        return len(self.controlled_units)

    @property
    def n_enemies(self) -> int:
        return len(self.enemy_units)

    @property
    def num_actions(self) -> int:
        # NoOp, Stop, 4 moves, one attack per enemy slot.
        return 6 + self.n_enemies

    @property
    def observation_dim(self) -> int:
        # 4 own features + 8 per enemy slot + 8 per ally slot.
        return 4 + 8 * self.n_enemies + 8 * (self.n_controlled - 1)

    def with_overrides(self, **kwargs) -> "ScenarioSpec":
        return replace(self, **kwargs).validate()


_SCALAR_KEYS = {
    "name": str,
    "map_width": int,
    "map_height": int,
    "max_episode_steps": int,
    "enemy_health_fraction": float,
    "sight_range": float,
}


def parse_scenario(text: str, source: str = "<string>") -> ScenarioSpec:
    """Parse the scenario file format; raises ScenarioError with line numbers."""
    scalars: dict = {}
    rosters: dict[str, list] = {"controlled": [], "enemy": []}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in ("scenario", "controlled", "enemy"):
                raise ScenarioError(
                    f"{source}:{lineno}: unknown section [{section}]")
            continue
        if section is None:
            raise ScenarioError(f"{source}:{lineno}: content before any section")
        if section == "scenario":
            if "=" not in line:
                raise ScenarioError(f"{source}:{lineno}: expected key = value")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in _SCALAR_KEYS:
                raise ScenarioError(f"{source}:{lineno}: unknown key {key!r}")
            try:
                scalars[key] = _SCALAR_KEYS[key](value)
            except ValueError:
                raise ScenarioError(
                    f"{source}:{lineno}: bad value {value!r} for {key}") from None
        else:
            parts = line.split()
            if len(parts) != 3:
                raise ScenarioError(
                    f"{source}:{lineno}: expected '<type> <x> <y>', got {line!r}")
            try:
                utype = unit_type(parts[0])
            except KeyError as exc:
                raise ScenarioError(f"{source}:{lineno}: {exc.args[0]}") from None
            try:
                x, y = float(parts[1]), float(parts[2])
            except ValueError:
                raise ScenarioError(
                    f"{source}:{lineno}: bad coordinates in {line!r}") from None
            rosters[section].append((utype, (x, y)))

    for key in ("name", "map_width", "map_height", "max_episode_steps"):
        if key not in scalars:
            raise ScenarioError(f"{source}: missing required key {key!r}")
    spec = ScenarioSpec(
        name=scalars["name"],
        map_width=scalars["map_width"],
        map_height=scalars["map_height"],
        controlled_units=tuple(rosters["controlled"]),
        enemy_units=tuple(rosters["enemy"]),
        max_episode_steps=scalars["max_episode_steps"],
        enemy_health_fraction=scalars.get("enemy_health_fraction", 1.0),
        sight_range=scalars.get("sight_range", DEFAULT_SIGHT_RANGE),
    )
    return spec.validate()


def load_scenario_file(path: str | Path) -> ScenarioSpec:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file {path}: {exc}") from exc
    return parse_scenario(text, source=str(path))


BUILTIN_SCENARIOS = ("3m", "8m", "25m", "2s3z")


def builtin_scenario(name: str) -> ScenarioSpec:
    """Load one of the shipped scenarios by name."""
    if name not in BUILTIN_SCENARIOS:
        raise ScenarioError(
            f"unknown builtin scenario {name!r}; available: {BUILTIN_SCENARIOS}")
    text = resources.files("imarl.scenarios").joinpath(f"{name}.scn").read_text()
    return parse_scenario(text, source=f"builtin:{name}")


def resolve_scenario(name_or_path: str) -> ScenarioSpec:
    """Accept either a builtin name or a path to a scenario file."""
    if name_or_path in BUILTIN_SCENARIOS:
        return builtin_scenario(name_or_path)
    if Path(name_or_path).exists():
        return load_scenario_file(name_or_path)
    raise ScenarioError(
        f"{name_or_path!r} is neither a builtin scenario nor an existing file")
