"""Plain-text run configuration (INI dialect via configparser).

Three sections, all optional keys falling back to the defaults listed in
the README's config reference:

  [run]      scenario, seeds, out_dir, workers, method
  [trainer]  episodes, gamma, actor_lr, critic_lr, dropout_rate, seed,
             architecture, optimizer, normalize_advantage, maim_grid,
             conv_filters, conv_stacks, maim_feature_dim, dense_widths,
             running_window, checkpoint_every
  [epsilon]  epsilon_0, epsilon_min, decay_episodes

``seeds`` and ``dense_widths`` accept space- or comma-separated integers.
Unknown keys are rejected so typos fail loudly instead of silently
running with defaults.
"""

from __future__ import annotations

import configparser
from dataclasses import fields

from .campaign import RunConfig
from .trainer import EpsilonSchedule, TrainerConfig

_TRAINER_KEYS = {f.name for f in fields(TrainerConfig)} - {"epsilon"}
_EPSILON_KEYS = {f.name for f in fields(EpsilonSchedule)}
_RUN_KEYS = {"scenario", "seeds", "out_dir", "workers", "method"}


def _int_list(raw: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in raw.replace(",", " ").split())


def _parse_value(name: str, raw: str, target_type):
    if target_type is bool:
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {raw!r}")
    if target_type is int:
        return int(raw)
    if target_type is float:
        return float(raw)
    if name in ("dense_widths",):
        return _int_list(raw)
    return raw.strip()


def _read(path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = parser.read(path)
    if not read:
        raise ValueError(f"cannot read config file {path}")
    for section in parser.sections():
        if section not in ("run", "trainer", "epsilon"):
            raise ValueError(f"{path}: unknown section [{section}]")
    return parser


def _trainer_from(parser: configparser.ConfigParser, path) -> TrainerConfig:
    kwargs = {}
    hints = {"episodes": int, "gamma": float, "actor_lr": float,
             "critic_lr": float, "dropout_rate": float, "seed": int,
             "architecture": str, "optimizer": str, "normalize_advantage": bool,
             "maim_grid": int, "conv_filters": int, "conv_stacks": int,
             "maim_feature_dim": int, "dense_widths": tuple,
             "running_window": int, "checkpoint_every": int}
    if parser.has_section("trainer"):
        for key, raw in parser.items("trainer"):
            if key not in _TRAINER_KEYS:
                raise ValueError(f"{path}: unknown trainer key {key!r}")
            kwargs[key] = _parse_value(key, raw, hints[key])
    eps_kwargs = {}
    if parser.has_section("epsilon"):
        eps_hints = {"epsilon_0": float, "epsilon_min": float, "decay_episodes": int}
        for key, raw in parser.items("epsilon"):
            if key not in _EPSILON_KEYS:
                raise ValueError(f"{path}: unknown epsilon key {key!r}")
            eps_kwargs[key] = _parse_value(key, raw, eps_hints[key])
    if eps_kwargs:
        kwargs["epsilon"] = EpsilonSchedule(**eps_kwargs)
    return TrainerConfig(**kwargs)


def load_trainer_config(path) -> TrainerConfig:
    return _trainer_from(_read(path), path)


def load_run_config(path) -> RunConfig:
    parser = _read(path)
    trainer = _trainer_from(parser, path)
    if not parser.has_section("run"):
        raise ValueError(f"{path}: campaign configs need a [run] section")
    raw = dict(parser.items("run"))
    for key in raw:
        if key not in _RUN_KEYS:
            raise ValueError(f"{path}: unknown run key {key!r}")
    if "scenario" not in raw:
        raise ValueError(f"{path}: [run] must set scenario")
    if "out_dir" not in raw:
        raise ValueError(f"{path}: [run] must set out_dir")
    seeds = _int_list(raw["seeds"]) if "seeds" in raw else tuple(range(31))
    return RunConfig(scenario=raw["scenario"], trainer=trainer, seeds=seeds,
                     out_dir=raw["out_dir"], workers=int(raw.get("workers", "1")),
                     method=raw.get("method"))
