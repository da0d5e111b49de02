"""Metrics records, seed aggregation, CSV/JSON artifacts, comparisons.

CSV layout (byte-stable for diffing):
  line 1: ``# running_avg_window=<N>``
  line 2: ``seed,episode,reward,win,epsilon,running_avg,length``
  data:   floats with fixed 6-decimal formatting, win as 0/1
The running_avg column is recomputable from the reward column; readers
validate the schema and the documented reward bounds [0, 20].
"""

from __future__ import annotations

import json
import statistics
from dataclasses import dataclass, field

import numpy as np

REWARD_MIN = 0.0
REWARD_MAX = 20.0
CSV_HEADER = "seed,episode,reward,win,epsilon,running_avg,length"
DEFAULT_WINDOW = 100


@dataclass(frozen=True)
class MetricsRecord:
    seed: int
    episode: int
    reward: float
    win: bool
    epsilon: float
    running_avg: float
    length: int


def running_average(rewards, window: int):
    """Trailing mean: element t averages the last min(t+1, window) values."""
    if window < 1:
        raise ValueError("window must be >= 1")
    rewards = list(rewards)
    out = []
    acc = 0.0
    for t, r in enumerate(rewards):
        acc += r
        if t >= window:
            acc -= rewards[t - window]
        out.append(acc / min(t + 1, window))
    return out


def first_win_episode(victories) -> int | None:
    for i, won in enumerate(victories):
        if won:
            return i
    return None


@dataclass
class SummaryStats:
    """Per-(scenario, method) aggregate over seeds: the peak running
    average per seed reduced to min/max/avg/population-std, win totals,
    and first-win bookkeeping."""

    scenario: str
    method: str
    window: int
    seeds: list[int]
    per_seed_peaks: list[float]
    per_seed_first_win: list[int | None]
    per_seed_wins: list[int]
    peak_min: float = field(init=False)
    peak_max: float = field(init=False)
    peak_avg: float = field(init=False)
    peak_std: float = field(init=False)

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("SummaryStats needs at least one seed")
        if not (len(self.seeds) == len(self.per_seed_peaks)
                == len(self.per_seed_first_win) == len(self.per_seed_wins)):
            raise ValueError("per-seed columns must align with the seed list")
        peaks = np.asarray(self.per_seed_peaks, dtype=np.float64)
        self.peak_min = float(peaks.min())
        self.peak_max = float(peaks.max())
        self.peak_avg = float(peaks.mean())
        self.peak_std = float(peaks.std())  # population std

    @property
    def n_seeds(self) -> int:
        return len(self.seeds)

    @property
    def seeds_with_win(self) -> int:
        return sum(1 for w in self.per_seed_wins if w > 0)

    @property
    def total_victories(self) -> int:
        return sum(self.per_seed_wins)

    @property
    def mean_first_win(self) -> float | None:
        wins = [fw for fw in self.per_seed_first_win if fw is not None]
        return float(np.mean(wins)) if wins else None

    @property
    def median_first_win(self) -> float | None:
        wins = [fw for fw in self.per_seed_first_win if fw is not None]
        return float(statistics.median(wins)) if wins else None

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "method": self.method,
            "window": self.window,
            "seeds": list(self.seeds),
            "per_seed_peaks": list(self.per_seed_peaks),
            "per_seed_first_win": list(self.per_seed_first_win),
            "per_seed_wins": list(self.per_seed_wins),
            "peak_min": self.peak_min,
            "peak_max": self.peak_max,
            "peak_avg": self.peak_avg,
            "peak_std": self.peak_std,
            "seeds_with_win": self.seeds_with_win,
            "total_victories": self.total_victories,
            "mean_first_win": self.mean_first_win,
            "median_first_win": self.median_first_win,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SummaryStats":
        return cls(scenario=d["scenario"], method=d["method"], window=d["window"],
                   seeds=list(d["seeds"]), per_seed_peaks=list(d["per_seed_peaks"]),
                   per_seed_first_win=list(d["per_seed_first_win"]),
                   per_seed_wins=list(d["per_seed_wins"]))


def aggregate_seeds(streams, scenario: str, method: str,
                    window: int = DEFAULT_WINDOW) -> SummaryStats:
    """``streams``: iterable of (seed, [MetricsRecord...]) pairs."""
    streams = list(streams)
    if not streams:
        raise ValueError("aggregate_seeds needs at least one seed stream")
    seeds, peaks, first_wins, wins = [], [], [], []
    for seed, records in streams:
        if not records:
            raise ValueError(f"seed {seed}: empty metrics stream")
        seeds.append(seed)
        peaks.append(max(r.running_avg for r in records))
        first_wins.append(first_win_episode([r.win for r in records]))
        wins.append(sum(1 for r in records if r.win))
    return SummaryStats(scenario=scenario, method=method, window=window,
                        seeds=seeds, per_seed_peaks=peaks,
                        per_seed_first_win=first_wins, per_seed_wins=wins)


def percentage_improvement(base: float, other: float) -> float | None:
    """(other - base) / base in percent; None when base is 0."""
    if base == 0:
        return None
    return (other - base) / base * 100.0


@dataclass(frozen=True)
class ComparisonReport:
    scenario: str
    method_a: str
    method_b: str
    metrics: dict  # name -> (value_a, value_b, delta, pct_improvement)
    first_win_median_a: float | None
    first_win_median_b: float | None

    def format(self) -> str:
        lines = [f"scenario: {self.scenario}",
                 f"comparing {self.method_b} against {self.method_a}"]
        for name, (a, b, delta, pct) in self.metrics.items():
            pct_txt = f"{pct:+.2f}%" if pct is not None else "n/a"
            lines.append(f"  {name:<10} {a:10.4f} -> {b:10.4f}  "
                         f"delta {delta:+.4f}  ({pct_txt})")
        fa = self.first_win_median_a
        fb = self.first_win_median_b
        lines.append(f"  median first win: {self.method_a}="
                     f"{'none' if fa is None else f'{fa:g}'}  {self.method_b}="
                     f"{'none' if fb is None else f'{fb:g}'}")
        return "\n".join(lines)


def compare_methods(stats_a: SummaryStats, stats_b: SummaryStats) -> ComparisonReport:
    """Deltas and percentage improvements of b over a (same scenario)."""
    if stats_a.scenario != stats_b.scenario:
        raise ValueError(
            f"cannot compare different scenarios: "
            f"{stats_a.scenario!r} vs {stats_b.scenario!r}")
    metrics = {}
    for name in ("peak_max", "peak_avg", "peak_min", "peak_std"):
        a = getattr(stats_a, name)
        b = getattr(stats_b, name)
        metrics[name] = (a, b, b - a, percentage_improvement(a, b))
    return ComparisonReport(scenario=stats_a.scenario, method_a=stats_a.method,
                            method_b=stats_b.method, metrics=metrics,
                            first_win_median_a=stats_a.median_first_win,
                            first_win_median_b=stats_b.median_first_win)


def format_row(r: MetricsRecord) -> str:
    return (f"{r.seed},{r.episode},{r.reward:.6f},{int(r.win)},"
            f"{r.epsilon:.6f},{r.running_avg:.6f},{r.length}")


def write_metrics_csv(path, records, window: int = DEFAULT_WINDOW) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# running_avg_window={window}\n")
        fh.write(CSV_HEADER + "\n")
        for r in records:
            fh.write(format_row(r) + "\n")


def read_metrics_csv(path) -> tuple[list[MetricsRecord], int]:
    """Parse and validate a metrics CSV; returns (records, window)."""
    records = []
    window = DEFAULT_WINDOW
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty metrics file")
    body = lines
    if body and body[0].startswith("#"):
        head = body[0]
        if "running_avg_window=" not in head:
            raise ValueError(f"{path}:1: unrecognized comment line")
        window = int(head.split("running_avg_window=", 1)[1])
        body = body[1:]
    if not body or body[0] != CSV_HEADER:
        raise ValueError(f"{path}: missing or wrong header row")
    for lineno, line in enumerate(body[1:], start=len(lines) - len(body) + 2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 7:
            raise ValueError(f"{path}:{lineno}: expected 7 columns, got {len(parts)}")
        try:
            rec = MetricsRecord(seed=int(parts[0]), episode=int(parts[1]),
                                reward=float(parts[2]), win=bool(int(parts[3])),
                                epsilon=float(parts[4]), running_avg=float(parts[5]),
                                length=int(parts[6]))
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
        if not REWARD_MIN <= rec.reward <= REWARD_MAX:
            raise ValueError(
                f"{path}:{lineno}: reward {rec.reward} outside [0, 20]")
        records.append(rec)
    return records, window


def save_summary(path, stats: SummaryStats) -> None:
    with open(path, "w") as fh:
        json.dump(stats.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_summary(path) -> SummaryStats:
    with open(path) as fh:
        return SummaryStats.from_dict(json.load(fh))
