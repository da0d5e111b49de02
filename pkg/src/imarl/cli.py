"""Command-line surface.

Subcommands: train (single run), campaign (multi-seed), compare (two
summary files), replay (render a log), gradcheck (gradient verification).
Exit codes: 0 success, 1 validation error (bad arguments, config or
input files), 2 runtime fault (crashed run, failed gradient check).
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
from dataclasses import replace

from .campaign import RunConfig, run_campaign
from .configfile import load_run_config, load_trainer_config
from .errors import CheckpointError, ReplayParseError, ScenarioError
from .influence import AIMParams, save_grid_pgm
from .metrics import CSV_HEADER, compare_methods, format_row, load_summary
from .nn import gradcheck as gradcheck_mod
from .replay import maim_grids_from_replay, read_replay, render_frames
from .scenario import BUILTIN_SCENARIOS, resolve_scenario
from .trainer import TrainerConfig, train

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="imarl",
        description="Influence-map multi-agent actor-critic on a built-in "
                    "deterministic combat simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run one training seed")
    p_train.add_argument("scenario",
                         help=f"built-in name ({', '.join(BUILTIN_SCENARIOS)}) "
                              "or a scenario file path")
    p_train.add_argument("--config", help="INI config file ([trainer]/[epsilon])")
    p_train.add_argument("--episodes", type=int)
    p_train.add_argument("--seed", type=int)
    p_train.add_argument("--arch", choices=("dense_cnn", "dense_only"))
    p_train.add_argument("--optimizer", choices=("sgd", "adam"))
    p_train.add_argument("--maim-grid", type=int)
    p_train.add_argument("--out", help="write the metrics CSV here (incremental)")
    p_train.add_argument("--checkpoint-dir")
    p_train.add_argument("--replay", help="record one episode as a JSONL replay")
    p_train.add_argument("--replay-episode", type=int,
                         help="episode to record (default: the last one)")
    p_train.add_argument("--quiet", action="store_true")

    p_camp = sub.add_parser("campaign", help="run a multi-seed campaign")
    p_camp.add_argument("--config", help="INI config file with a [run] section")
    p_camp.add_argument("--scenario")
    p_camp.add_argument("--seeds", help="comma/space separated, e.g. '0,1,2'")
    p_camp.add_argument("--out-dir")
    p_camp.add_argument("--workers", type=int)
    p_camp.add_argument("--episodes", type=int)
    p_camp.add_argument("--arch", choices=("dense_cnn", "dense_only"))
    p_camp.add_argument("--method", help="label used in the summary")

    p_cmp = sub.add_parser("compare", help="compare two campaign summaries")
    p_cmp.add_argument("summary_a")
    p_cmp.add_argument("summary_b")

    p_rep = sub.add_parser("replay", help="render a replay log as text frames")
    p_rep.add_argument("log")
    p_rep.add_argument("--limit", type=int, help="render at most N frames")
    p_rep.add_argument("--scenario", help="needed for influence image dumps")
    p_rep.add_argument("--maim-dir", help="write per-step grayscale PGM images here")
    p_rep.add_argument("--maim-grid", type=int, default=64)

    p_gc = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p_gc.add_argument("--seed", type=int, default=0)
    p_gc.add_argument("--instances", type=int, default=100)
    return parser


def _cmd_train(args) -> int:
    scenario = resolve_scenario(args.scenario)
    config = load_trainer_config(args.config) if args.config else TrainerConfig()
    overrides = {}
    for src, dst in (("episodes", "episodes"), ("seed", "seed"),
                     ("arch", "architecture"), ("optimizer", "optimizer"),
                     ("maim_grid", "maim_grid")):
        value = getattr(args, src)
        if value is not None:
            overrides[dst] = value
    if overrides:
        config = replace(config, **overrides)

    out_fh = open(args.out, "w", newline="\n") if args.out else None
    if out_fh:
        out_fh.write(f"# running_avg_window={config.running_window}\n{CSV_HEADER}\n")

    def progress(rec):
        if out_fh:
            out_fh.write(format_row(rec) + "\n")
        if not args.quiet and (rec.episode % 50 == 0
                               or rec.episode == config.episodes - 1):
            print(f"episode {rec.episode}: reward={rec.reward:.3f} "
                  f"running_avg={rec.running_avg:.3f} epsilon={rec.epsilon:.3f}",
                  flush=True)

    try:
        result = train(scenario, config, progress=progress,
                       replay_path=args.replay, replay_episode=args.replay_episode,
                       checkpoint_dir=args.checkpoint_dir)
    finally:
        if out_fh:
            out_fh.close()
    wins = sum(1 for r in result.metrics if r.win)
    last = result.metrics[-1].running_avg if result.metrics else 0.0
    print(f"seed {config.seed} on {scenario.name}: {len(result.metrics)} episodes, "
          f"{wins} wins, final running_avg {last:.4f}")
    return EXIT_OK


def _cmd_campaign(args) -> int:
    if args.config:
        run = load_run_config(args.config)
    else:
        if not args.scenario or not args.out_dir:
            raise ValueError("campaign needs --config or both --scenario and --out-dir")
        run = RunConfig(scenario=args.scenario, trainer=TrainerConfig(),
                        seeds=tuple(range(31)), out_dir=args.out_dir)
    updates = {}
    if args.scenario:
        updates["scenario"] = args.scenario
    if args.seeds:
        updates["seeds"] = tuple(int(t) for t in args.seeds.replace(",", " ").split())
    if args.out_dir:
        updates["out_dir"] = args.out_dir
    if args.workers is not None:
        updates["workers"] = args.workers
    if args.method:
        updates["method"] = args.method
    trainer_updates = {}
    if args.episodes is not None:
        trainer_updates["episodes"] = args.episodes
    if args.arch:
        trainer_updates["architecture"] = args.arch
    if trainer_updates:
        updates["trainer"] = replace(run.trainer, **trainer_updates)
    if updates:
        run = replace(run, **updates)

    def on_seed_done(seed, status):
        print(f"seed {seed}: {status}", flush=True)

    stats = run_campaign(run, on_seed_done=on_seed_done)
    print(f"{stats.method} on {stats.scenario}: "
          f"peak running_avg min {stats.peak_min:.4f} / max {stats.peak_max:.4f} "
          f"/ avg {stats.peak_avg:.4f} / std {stats.peak_std:.4f}; "
          f"{stats.seeds_with_win}/{stats.n_seeds} seeds won "
          f"({stats.total_victories} victories)")
    print(f"artifacts in {run.out_dir}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    stats_a = load_summary(args.summary_a)
    stats_b = load_summary(args.summary_b)
    print(compare_methods(stats_a, stats_b).format())
    return EXIT_OK


def _cmd_replay(args) -> int:
    records = read_replay(args.log)
    spec = resolve_scenario(args.scenario) if args.scenario else None
    frames = render_frames(records,
                           map_width=spec.map_width if spec else None,
                           map_height=spec.map_height if spec else None)
    if args.limit is not None:
        frames = frames[:args.limit]
    for frame in frames:
        print(frame)
        print()
    if args.maim_dir:
        if spec is None:
            raise ValueError("--maim-dir needs --scenario for map geometry")
        os.makedirs(args.maim_dir, exist_ok=True)
        params = AIMParams(grid_width=args.maim_grid, grid_height=args.maim_grid,
                           radius=max(args.maim_grid / 8.0, 1.0))
        for i, grid in enumerate(maim_grids_from_replay(records, spec, params)):
            save_grid_pgm(grid, os.path.join(args.maim_dir, f"maim_{i:05d}.pgm"))
        print(f"wrote {len(records)} influence images to {args.maim_dir}")
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    def show(res):
        status = "PASS" if res.passed else "FAIL"
        print(f"{status} {res.name}: max_rel_err={res.max_rel_err:.3e} "
              f"({res.seconds:.2f}s)", flush=True)

    results = gradcheck_mod.run_all(seed=args.seed, instances=args.instances,
                                    progress=show)
    failed = [r for r in results if not r.passed]
    if failed:
        print(f"{len(failed)} gradient check(s) failed", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"all {len(results)} gradient checks passed")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad usage; that's a validation error here.
        return EXIT_OK if exc.code in (0, None) else EXIT_VALIDATION
    handlers = {"train": _cmd_train, "campaign": _cmd_campaign,
                "compare": _cmd_compare, "replay": _cmd_replay,
                "gradcheck": _cmd_gradcheck}
    try:
        return handlers[args.command](args)
    except (ValueError, ScenarioError, ReplayParseError, CheckpointError,
            configparser.Error, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # runtime fault
        print(f"fatal: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
