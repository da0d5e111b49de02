"""Influence-map multi-agent actor-critic with a built-in combat simulator.

The package has five layers, bottom up:
  engine     deterministic grid combat (units, actions, shared reward)
  influence  per-unit influence fields and their global aggregation
  nn         hand-rolled dense/conv network with exact backprop
  trainer    semi-centralized advantage actor-critic over the above
  campaign   multi-seed experiment runner, metrics, CLI
"""

from .campaign import RunConfig, run_campaign
from .engine import StepOutcome, WorldState, legal_actions, load_scenario, observe, step
from .influence import AIMParams, agent_influence, aggregate_maim, encode_maim, maim_normalizer
from .metrics import (MetricsRecord, SummaryStats, aggregate_seeds, compare_methods,
                      first_win_episode, running_average)
from .scenario import ScenarioSpec, builtin_scenario, load_scenario_file, resolve_scenario
from .trainer import (CombatEnv, EpisodeBuffer, EpsilonSchedule, Policy, TrainerConfig,
                      TrainResult, Transition, actor_update, compute_returns,
                      critic_update, epsilon_value, run_episode, select_action, train)

__version__ = "0.1.0"

__all__ = [
    "AIMParams",
    "CombatEnv",
    "EpisodeBuffer",
    "EpsilonSchedule",
    "MetricsRecord",
    "Policy",
    "RunConfig",
    "ScenarioSpec",
    "StepOutcome",
    "SummaryStats",
    "TrainResult",
    "TrainerConfig",
    "Transition",
    "WorldState",
    "actor_update",
    "agent_influence",
    "aggregate_maim",
    "aggregate_seeds",
    "builtin_scenario",
    "compare_methods",
    "compute_returns",
    "critic_update",
    "encode_maim",
    "epsilon_value",
    "first_win_episode",
    "legal_actions",
    "load_scenario",
    "load_scenario_file",
    "maim_normalizer",
    "observe",
    "resolve_scenario",
    "run_campaign",
    "run_episode",
    "running_average",
    "select_action",
    "step",
    "train",
]
