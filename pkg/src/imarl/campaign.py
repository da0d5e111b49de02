"""Multi-seed campaign runner.

Each seed is an independent training run (own parameter snapshots, own
rng streams), so seeds can execute in parallel worker processes; results
are merged afterward sorted by (seed, episode), which makes the emitted
CSV set byte-identical no matter the worker count. A seed that crashes
is excluded from aggregation with a warning and recorded in
failures.json, never silently dropped.

Artifacts under out_dir:
  metrics_seed<seed>.csv   one per surviving seed
  metrics_all.csv          merged stream
  summary.json             SummaryStats
  failures.json            only when some seed failed
  seed<seed>/              checkpoints, when a cadence is configured
"""

from __future__ import annotations

import json
import multiprocessing
import os
import warnings
from dataclasses import dataclass, replace

from .metrics import (MetricsRecord, SummaryStats, aggregate_seeds, save_summary,
                      write_metrics_csv)
from .scenario import ScenarioSpec, resolve_scenario
from .trainer import TrainerConfig, train


@dataclass(frozen=True)
class RunConfig:
    scenario: str
    trainer: TrainerConfig
    seeds: tuple[int, ...]
    out_dir: str
    workers: int = 1
    method: str | None = None  # label in summaries; defaults to the architecture

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(self.seeds))
        if not self.seeds:
            raise ValueError("seed list must be non-empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @property
    def method_label(self) -> str:
        return self.method if self.method else self.trainer.architecture


def _seed_task(args):
    """Worker body; must stay top-level picklable for spawn."""
    scenario, config, checkpoint_dir = args
    try:
        result = train(scenario, config, checkpoint_dir=checkpoint_dir)
        return (config.seed, "ok", result.metrics)
    except Exception as exc:  # exclude-and-warn policy, never kill the campaign
        return (config.seed, "error", f"{type(exc).__name__}: {exc}")


def run_campaign(config: RunConfig, on_seed_done=None) -> SummaryStats:
    scenario = resolve_scenario(config.scenario)
    os.makedirs(config.out_dir, exist_ok=True)
    tasks = []
    for seed in config.seeds:
        trainer = replace(config.trainer, seed=seed)
        ckpt_dir = None
        if trainer.checkpoint_every > 0:
            ckpt_dir = os.path.join(config.out_dir, f"seed{seed}")
            os.makedirs(ckpt_dir, exist_ok=True)
        tasks.append((scenario, trainer, ckpt_dir))

    if config.workers == 1 or len(tasks) == 1:
        outcomes = [_seed_task(t) for t in tasks]
    else:
        ctx = multiprocessing.get_context("spawn")
        with ctx.Pool(min(config.workers, len(tasks))) as pool:
            outcomes = pool.map(_seed_task, tasks)

    streams: list[tuple[int, list[MetricsRecord]]] = []
    failures: dict[int, str] = {}
    for seed, status, payload in sorted(outcomes, key=lambda o: o[0]):
        if status == "ok":
            streams.append((seed, payload))
        else:
            failures[seed] = payload
            warnings.warn(f"seed {seed} failed and was excluded: {payload}")
        if on_seed_done is not None:
            on_seed_done(seed, status)

    if failures:
        with open(os.path.join(config.out_dir, "failures.json"), "w") as fh:
            json.dump({str(k): v for k, v in sorted(failures.items())}, fh,
                      indent=2, sort_keys=True)
            fh.write("\n")
    if not streams:
        raise RuntimeError(f"every seed failed: {failures}")

    window = config.trainer.running_window
    merged: list[MetricsRecord] = []
    for seed, records in streams:
        write_metrics_csv(os.path.join(config.out_dir, f"metrics_seed{seed}.csv"),
                          records, window)
        merged.extend(records)
    merged.sort(key=lambda r: (r.seed, r.episode))
    write_metrics_csv(os.path.join(config.out_dir, "metrics_all.csv"),
                      merged, window)
    stats = aggregate_seeds(streams, scenario=scenario.name,
                            method=config.method_label, window=window)
    save_summary(os.path.join(config.out_dir, "summary.json"), stats)
    return stats
