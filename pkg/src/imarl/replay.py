"""Replay logs: newline-delimited JSON records, one per executed step.

Record schema::

    {"step": int, "reward": float, "terminal": bool, "victory": bool,
     "actions": [int, ...],          # controlled agents, in id order
     "enemy_actions": [int, ...],
     "units": [{"id": int, "team": "controlled"|"enemy", "type": str,
                "x": float, "y": float, "health": float, "cd": int}, ...]}

Unit entries describe the state *after* the step resolved. The renderer
turns a log back into ASCII frames for behavior inspection.
"""

from __future__ import annotations

import json
from pathlib import Path

from .errors import ReplayParseError
from .units import CONTROLLED, TEAM_NAMES

_GLYPHS = {("controlled", "marine"): "M", ("controlled", "stalker"): "S",
           ("controlled", "zealot"): "Z", ("enemy", "marine"): "m",
           ("enemy", "stalker"): "s", ("enemy", "zealot"): "z"}


class ReplayWriter:
    """Appends one JSON record per step to an open file."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._fh = self.path.open("w")

    def record_step(self, world, joint_actions, enemy_actions, outcome) -> None:
        rec = {
            "step": world.step_count,
            "reward": outcome.shared_reward,
            "terminal": outcome.terminal,
            "victory": outcome.victory,
            "actions": [int(a) for a in joint_actions],
            "enemy_actions": [int(a) for a in enemy_actions],
            "units": [
                {"id": u.unit_id, "team": TEAM_NAMES[u.team],
                 "type": u.type.type_id, "x": round(u.x, 4), "y": round(u.y, 4),
                 "health": round(u.health, 4), "cd": u.cooldown_remaining}
                for u in world.units
            ],
        }
        self._fh.write(json.dumps(rec) + "\n")

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


_REQUIRED_KEYS = {"step", "reward", "terminal", "victory", "actions",
                  "enemy_actions", "units"}
_REQUIRED_UNIT_KEYS = {"id", "team", "type", "x", "y", "health", "cd"}


def read_replay(path: str | Path) -> list[dict]:
    """Parse a replay log; malformed lines raise ReplayParseError."""
    records = []
    with Path(path).open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ReplayParseError(lineno, f"invalid JSON: {exc.msg}")
            if not isinstance(rec, dict) or not _REQUIRED_KEYS <= rec.keys():
                missing = _REQUIRED_KEYS - set(rec) if isinstance(rec, dict) else _REQUIRED_KEYS
                raise ReplayParseError(lineno, f"missing keys {sorted(missing)}")
            for u in rec["units"]:
                if not _REQUIRED_UNIT_KEYS <= u.keys():
                    raise ReplayParseError(
                        lineno, f"unit entry missing keys in {u}")
            records.append(rec)
    return records


def render_frames(records: list[dict], map_width: int | None = None,
                  map_height: int | None = None) -> list[str]:
    """ASCII map per step: unit glyphs by type and team plus health lines."""
    if not records:
        return []
    if map_width is None:
        map_width = int(max(u["x"] for r in records for u in r["units"])) + 1
    if map_height is None:
        map_height = int(max(u["y"] for r in records for u in r["units"])) + 1
    frames = []
    for rec in records:
        grid = [["." for _ in range(map_width)] for _ in range(map_height)]
        for u in rec["units"]:
            if u["health"] <= 0:
                continue
            cx = min(max(int(round(u["x"])), 0), map_width - 1)
            cy = min(max(int(round(u["y"])), 0), map_height - 1)
            glyph = _GLYPHS.get((u["team"], u["type"]), "?")
            grid[cy][cx] = glyph if grid[cy][cx] == "." else "*"
        lines = [f"step {rec['step']}  reward {rec['reward']:.4f}"
                 f"{'  VICTORY' if rec['victory'] else ''}"]
        lines += ["".join(row) for row in grid]
        health = " ".join(
            f"{_GLYPHS.get((u['team'], u['type']), '?')}{u['id']}:{u['health']:.0f}"
            for u in rec["units"])
        lines.append(health)
        frames.append("\n".join(lines))
    return frames


def maim_grids_from_replay(records: list[dict], spec, params):
    """Rebuild the aggregated influence grid for each logged step."""
    from .engine import load_scenario
    from .influence import aggregate_maim

    grids = []
    for rec in records:
        world = load_scenario(spec)
        for unit, entry in zip(world.units, rec["units"]):
            unit.x, unit.y = entry["x"], entry["y"]
            unit.health = entry["health"]
        grids.append(aggregate_maim(world, params))
    return grids
