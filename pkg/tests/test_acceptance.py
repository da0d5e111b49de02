"""Package acceptance gate: eight end-to-end checks covering gradient
correctness, the influence-map and combat-engine oracles, policy-gradient
learning, the architecture trend, campaign determinism, and metrics
arithmetic. Each check prints one ``ACCEPTANCE n PASS|FAIL`` line straight
to the terminal so the scoreboard survives output capture.

The learning checks (5 and 6) run real multi-seed campaigns and dominate
the runtime; everything is seeded, so their outcomes are reproducible."""

import time
from dataclasses import replace

import numpy as np
import pytest

from imarl.campaign import RunConfig, run_campaign
from imarl.cli import EXIT_OK, main
from imarl.engine import (ATTACK_BASE, MOVE_E, MOVE_N, MOVE_S, MOVE_W, STOP,
                          StepOutcome, WorldState, legal_actions,
                          load_scenario, step)
from imarl.influence import aggregate_maim, default_params
from imarl.metrics import (SummaryStats, aggregate_seeds, compare_methods,
                           first_win_episode, percentage_improvement,
                           read_metrics_csv, running_average)
from imarl.nn import gradcheck as gradcheck_mod
from imarl.nn.layers import masked_softmax
from imarl.nn.network import (DENSE_ONLY, POLICY_HEAD, VALUE_HEAD, NetworkSpec,
                              init_params, param_layout)
from imarl.scenario import builtin_scenario, parse_scenario
from imarl.trainer import (EpsilonSchedule, Policy, TrainerConfig, head_forward,
                           seed_streams, train_loop, trunk_forward)

from conftest import DUEL_TEXT
from test_influence import random_world, reference_maim

ATTACK0 = ATTACK_BASE + 0

SMOKE_TEXT = """
[scenario]
name = 3m_half
map_width = 32
map_height = 32
max_episode_steps = 100
enemy_health_fraction = 0.5
sight_range = 9

[controlled]
marine 8 13
marine 8 16
marine 8 19

[enemy]
marine 24 13
marine 24 16
marine 24 19
"""

SMOKE_SEEDS = (0, 1, 2, 3, 4)
SMOKE_EPISODES = 400


def smoke_trainer(arch):
    return TrainerConfig(episodes=SMOKE_EPISODES, architecture=arch,
                         optimizer="adam", actor_lr=1e-3, critic_lr=2e-3,
                         maim_grid=16, conv_filters=8, maim_feature_dim=32,
                         dense_widths=(64, 64, 64), dropout_rate=0.1,
                         epsilon=EpsilonSchedule(1.0, 0.05,
                                                 int(SMOKE_EPISODES * 0.6)),
                         running_window=100)


def report(capsys, n, ok, label):
    with capsys.disabled():
        print(f"\nACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {label}",
              flush=True)
    assert ok, f"acceptance check {n} failed: {label}"


@pytest.fixture(scope="module")
def smoke_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("smoke")
    (d / "3m_half.scn").write_text(SMOKE_TEXT)
    return d


@pytest.fixture(scope="module")
def smoke_campaigns(smoke_dir):
    """Both architectures trained on the half-health 3m map with matched
    budgets; shared by the learning and trend checks."""
    runs = {}
    for arch in ("dense_cnn", "dense_only"):
        out = smoke_dir / arch
        t0 = time.time()
        stats = run_campaign(RunConfig(scenario=str(smoke_dir / "3m_half.scn"),
                                       trainer=smoke_trainer(arch),
                                       seeds=SMOKE_SEEDS, out_dir=str(out),
                                       workers=5, method=arch))
        runs[arch] = {"stats": stats, "seconds": time.time() - t0,
                      "out": out}
    return runs


def test_1_gradient_verification(capsys):
    """Analytic gradients match central finite differences to < 1e-4
    relative error, 100 random instances per layer and per composite."""
    t0 = time.time()
    results = gradcheck_mod.run_all(seed=0, instances=100)
    elapsed = time.time() - t0
    worst = max(r.max_rel_err for r in results)
    ok = all(r.passed for r in results) and elapsed < 120.0
    core = {"dense", "conv2d", "maxpool2x2", "elu", "masked_softmax",
            "dropout", "actor_composite", "critic_composite"}
    covered = {r.name for r in results}
    ok = ok and core <= covered
    ok = ok and all(r.instances >= 100 for r in results if r.name in core)
    report(capsys, 1, ok,
           f"gradient check {len(results)} suites, worst rel err "
           f"{worst:.2e} (< 1e-4), {elapsed:.1f}s (< 120s)")


def test_2_influence_map_oracle(capsys):
    """Windowed aggregation equals the brute-force per-unit-per-cell sum
    on 1,000 random unit layouts; per-unit sign, linearity of the sum,
    and health scaling hold on every case."""
    rng = np.random.default_rng(2024)
    params = default_params(64)
    worst = 0.0
    for _ in range(1000):
        world = random_world(rng)
        got = aggregate_maim(world, params)
        ref = reference_maim(world, params)
        worst = max(worst, float(np.max(np.abs(got - ref))))
        assert worst < 1e-9

        singles = []
        for u in world.units:
            alone = WorldState(world.spec, [u])
            field = aggregate_maim(alone, params)
            singles.append(field)
            if u.alive:
                sign = 1.0 if u.team == 0 else -1.0
                assert np.all(sign * field >= 0.0)
        np.testing.assert_allclose(got, np.sum(singles, axis=0), atol=1e-9)

        probe = world.units[int(rng.integers(len(world.units)))]
        full = probe.copy()
        full.health = probe.type.max_health
        frac = probe.health / probe.type.max_health
        np.testing.assert_allclose(
            aggregate_maim(WorldState(world.spec, [probe]), params),
            frac * aggregate_maim(WorldState(world.spec, [full]), params),
            atol=1e-12)
    report(capsys, 2, True,
           f"influence aggregation vs brute force, 1000 layouts, max abs "
           f"diff {worst:.2e} (< 1e-9); sign/linearity/health-scaling hold")


def hunt_action(world, agent_id):
    """Scripted controlled policy: focus the weakest attackable enemy,
    otherwise close on the nearest living one."""
    me = world.unit(agent_id)
    mask = legal_actions(world, agent_id)
    enemies = world.enemies()
    attackable = [(e.health, i) for i, e in enumerate(enemies)
                  if mask[ATTACK_BASE + i]]
    if attackable:
        return ATTACK_BASE + min(attackable)[1]
    living = [e for e in enemies if e.alive]
    if not living or not me.alive:
        return int(np.flatnonzero(mask)[0])
    target = min(living, key=lambda e: (me.distance_to(e), e.unit_id))
    dx, dy = target.x - me.x, target.y - me.y
    prefs = [MOVE_E if dx > 0 else MOVE_W, MOVE_S if dy > 0 else MOVE_N]
    if abs(dy) > abs(dx):
        prefs.reverse()
    for action in prefs + [STOP]:
        if mask[action]:
            return action
    return int(np.flatnonzero(mask)[0])


def scripted_total(spec):
    world = load_scenario(spec)
    total = 0.0
    while True:
        actions = [hunt_action(world, a) for a in range(world.n_controlled)]
        world, out = step(world, actions)
        total += out.shared_reward
        if out.terminal:
            return total, out.victory


def fuzzed_total(spec, rng):
    world = load_scenario(spec)
    total = 0.0
    for _ in range(spec.max_episode_steps):
        actions = [int(rng.choice(np.flatnonzero(legal_actions(world, a))))
                   for a in range(world.n_controlled)]
        world, out = step(world, actions)
        total += out.shared_reward
        if out.terminal:
            break
    return total


def test_3_engine_oracle(capsys):
    """Hand-traced duel reproduced action for action, a scripted perfect
    victory accumulates exactly the full 20.0 payout, and 10,000 fuzzed
    episodes never leave the [0, 20] reward envelope."""
    # 1v1 duel: close for two steps, then trade a 6-damage volley every
    # third step; the eighth volley (step 24) kills both for 11.6.
    duel = parse_scenario(DUEL_TEXT)
    world = load_scenario(duel)
    script = [MOVE_E, MOVE_E] + [ATTACK0, STOP, STOP] * 7 + [ATTACK0]
    expected_rewards = [0.0] * 24
    for s in range(3, 22, 3):
        expected_rewards[s - 1] = 1.2
    expected_rewards[23] = 11.6
    total = 0.0
    for i, action in enumerate(script):
        world, out = step(world, [action])
        assert out.shared_reward == pytest.approx(expected_rewards[i], abs=1e-12)
        total += out.shared_reward
        if (i + 1) % 3 == 0:
            volleys = (i + 1) // 3
            hp = max(45.0 - 6.0 * volleys, 0.0)
            assert world.unit(0).health == hp and world.unit(1).health == hp
    assert out.terminal and out.victory and world.step_count == 24
    trace_ok = abs(total - 20.0) < 1e-9

    # focus fire beats the mirror opponent on the stock 3-marine map; a
    # perfect victory banks damage + kills + victory bonus = exactly 20
    perfect, victory = scripted_total(builtin_scenario("3m"))
    perfect_ok = victory and abs(perfect - 20.0) < 1e-6

    rng = np.random.default_rng(7)
    half = replace(builtin_scenario("3m"), enemy_health_fraction=0.5)
    lo, hi = np.inf, -np.inf
    for spec, count in ((duel, 6500), (half, 3000),
                        (builtin_scenario("2s3z"), 500)):
        for _ in range(count):
            total = fuzzed_total(spec, rng)
            lo, hi = min(lo, total), max(hi, total)
    fuzz_ok = 0.0 <= lo and hi <= 20.0
    report(capsys, 3, trace_ok and perfect_ok and fuzz_ok,
           f"engine oracle: duel trace exact, perfect victory "
           f"total {perfect:.9f} (20 +/- 1e-6), 10000 fuzzed episode sums "
           f"in [{lo:.4f}, {hi:.4f}] within [0, 20]")


class TwoArmedBandit:
    """Minimal trainer environment: one agent, one step, arm 1 pays a
    fixed 1.0 and arm 0 pays 0.0."""

    n_agents = 1
    n_actions = 2
    observation_dim = 1
    maim_shape = (1, 8, 8)

    def __init__(self):
        self._grid = np.zeros(self.maim_shape, dtype=np.float32)

    def reset(self):
        pass

    def encoded_maim(self):
        return self._grid

    def living_agents(self):
        return [0]

    def observe(self, agent_id):
        return np.ones(1, dtype=np.float64)

    def legal_mask(self, agent_id):
        return np.ones(2, dtype=bool)

    def step(self, actions):
        reward = 1.0 if actions[0] == 1 else 0.0
        return StepOutcome(shared_reward=reward, terminal=True,
                           victory=reward > 0, damage_dealt=0.0, kills=0)


def bandit_policies(seed):
    common = dict(obs_dim=1, n_actions=2, maim_shape=(1, 8, 8),
                  arch=DENSE_ONLY, dense_widths=())
    actor_spec = NetworkSpec(head=POLICY_HEAD, **common)
    critic_spec = NetworkSpec(head=VALUE_HEAD, **common)
    streams = seed_streams(seed)
    actor = Policy(actor_spec, init_params(actor_spec, streams["actor_init"]))
    critic = Policy(critic_spec, init_params(critic_spec, streams["critic_init"]))
    return actor, critic, streams


def good_arm_probability(actor):
    layout = param_layout(actor.spec)[0]
    feats, _ = trunk_forward(actor.spec, actor.params,
                             np.zeros((1, 8, 8), np.float32), layout)
    logits, _ = head_forward(actor.spec, actor.params, np.ones(1), feats,
                             train_mode=False, layout=layout)
    return float(masked_softmax(np.asarray(logits, dtype=np.float64),
                                np.ones(2, dtype=bool))[1])


def test_4_bandit_convergence(capsys):
    """The actor-critic update drives a linear softmax policy to >= 0.95
    probability on the paying arm within 500 one-step episodes, 5/5 seeds."""
    t0 = time.time()
    reached = []
    for seed in range(5):
        config = TrainerConfig(episodes=500, architecture=DENSE_ONLY,
                               dense_widths=(), maim_grid=8, seed=seed,
                               actor_lr=0.5, critic_lr=0.5,
                               epsilon=EpsilonSchedule(1.0, 0.05, 300))
        actor, critic, streams = bandit_policies(seed)
        hit = [None]

        def watch(record, actor=actor, hit=hit):
            if hit[0] is None and good_arm_probability(actor) >= 0.95:
                hit[0] = record.episode

        train_loop(TwoArmedBandit(), actor, critic, config, streams,
                   progress=watch)
        reached.append(hit[0])
    elapsed = time.time() - t0
    ok = all(h is not None for h in reached) and elapsed < 60.0
    report(capsys, 4, ok,
           f"bandit: >= 0.95 on the paying arm by episodes {reached} "
           f"(all < 500), {elapsed:.1f}s (< 60s)")


def test_5_learning_smoke(capsys, smoke_campaigns):
    """Five seeded runs on the half-health 3-marine map: the running
    average must grow >= 25% from the first 100 to the last 100 episodes
    in at least 4/5 seeds, with a victory in every seed."""
    run = smoke_campaigns["dense_cnn"]
    improved = 0
    ratios = []
    for seed in SMOKE_SEEDS:
        records, _ = read_metrics_csv(run["out"] / f"metrics_seed{seed}.csv")
        ra = [r.running_avg for r in records]
        first, last = float(np.mean(ra[:100])), float(np.mean(ra[-100:]))
        ratio = last / first if first > 0 else np.inf
        ratios.append(ratio)
        improved += ratio >= 1.25
    every_seed_won = all(w >= 1 for w in run["stats"].per_seed_wins)
    ok = improved >= 4 and every_seed_won and run["seconds"] <= 1800.0
    report(capsys, 5, ok,
           f"learning smoke: last-100/first-100 running-avg ratios "
           f"{[f'{r:.2f}' for r in ratios]} (>= 1.25 in {improved}/5), "
           f"every seed won, {run['seconds']:.0f}s (<= 1800s)")


def test_6_architecture_first_win_trend(capsys, smoke_campaigns):
    """With matched budgets the convolutional trunk should not need more
    than 1.1x the dense baseline's median episodes to the first win; the
    comparison report carries both medians."""
    cnn = smoke_campaigns["dense_cnn"]
    dense = smoke_campaigns["dense_only"]
    med_cnn = cnn["stats"].median_first_win
    med_dense = dense["stats"].median_first_win
    code = main(["compare", str(dense["out"] / "summary.json"),
                 str(cnn["out"] / "summary.json")])
    printed = capsys.readouterr().out
    emitted = (code == EXIT_OK
               and f"dense_only={med_dense:g}" in printed
               and f"dense_cnn={med_cnn:g}" in printed)
    ok = (med_cnn is not None and med_dense is not None
          and med_cnn <= 1.1 * med_dense and emitted)
    report(capsys, 6, ok,
           f"first-win trend: median dense_cnn {med_cnn} <= 1.1 x "
           f"dense_only {med_dense}; compare report shows both")


def test_7_campaign_determinism(capsys, smoke_dir):
    """Re-running an identical 2-seed campaign reproduces every CSV byte
    for byte, independent of the worker count."""
    trainer = TrainerConfig(episodes=6, maim_grid=8, conv_filters=2,
                            maim_feature_dim=4, dense_widths=(8, 8),
                            running_window=3)
    outs = []
    for tag, workers in (("a", 1), ("b", 1), ("c", 2)):
        out = smoke_dir / f"det_{tag}"
        run_campaign(RunConfig(scenario=str(smoke_dir / "3m_half.scn"),
                               trainer=trainer, seeds=(0, 1),
                               out_dir=str(out), workers=workers))
        outs.append(out)
    names = ("metrics_seed0.csv", "metrics_seed1.csv", "metrics_all.csv",
             "summary.json")
    ok = all((outs[0] / n).read_bytes() == (o / n).read_bytes()
             for o in outs[1:] for n in names)
    report(capsys, 7, ok,
           "determinism: 2-seed campaign byte-identical across reruns "
           "and worker counts 1 vs 2")


def test_8_metrics_oracle(capsys):
    """Metric reductions reproduce hand-computed values, including the
    headline percentage arithmetic."""
    ok = running_average([0.0, 10.0, 20.0], 2) == [0.0, 5.0, 15.0]
    ok = ok and running_average([4.0, 8.0], 1) == [4.0, 8.0]
    ok = ok and first_win_episode([False, False, True, True]) == 2
    ok = ok and first_win_episode([False]) is None

    from imarl.metrics import MetricsRecord
    streams = []
    for seed, avgs, win_at in ((0, [1.0, 3.0, 2.0], 1), (1, [0.5, 4.0, 6.0], None)):
        recs = [MetricsRecord(seed=seed, episode=i, reward=a, win=(i == win_at),
                              epsilon=0.5, running_avg=a, length=3)
                for i, a in enumerate(avgs)]
        streams.append((seed, recs))
    stats = aggregate_seeds(streams, "synthetic", "m", window=2)
    ok = ok and stats.per_seed_peaks == [3.0, 6.0]
    ok = ok and stats.peak_avg == 4.5 and stats.peak_std == 1.5
    ok = ok and stats.per_seed_first_win == [1, None]
    ok = ok and stats.median_first_win == 1

    def one_peak(method, peak):
        return SummaryStats(scenario="synthetic", method=method, window=2,
                            seeds=[0], per_seed_peaks=[peak],
                            per_seed_first_win=[1], per_seed_wins=[1])

    pct = percentage_improvement(13.59, 16.09)
    report_obj = compare_methods(one_peak("a", 13.59), one_peak("b", 16.09))
    _, _, delta, pct_row = report_obj.metrics["peak_avg"]
    ok = ok and abs(pct - 18.3959) < 0.01 and abs(pct_row - pct) < 1e-12
    ok = ok and delta == pytest.approx(2.5)
    report(capsys, 8, ok,
           f"metrics oracle: hand values hold; (16.09-13.59)/13.59 -> "
           f"{pct:.4f}% (18.3959 +/- 0.01)")
