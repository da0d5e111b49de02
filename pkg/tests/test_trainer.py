"""Training loop pieces: schedules, returns, sampling, and both update
rules against closed-form oracles computed directly in the tests."""

import numpy as np
import pytest

from imarl.nn.layers import masked_softmax
from imarl.nn.network import (DENSE_ONLY, POLICY_HEAD, VALUE_HEAD, NetworkSpec,
                              init_params, param_layout, view)
from imarl.trainer import (ADAM, CombatEnv, EpisodeBuffer, EpsilonSchedule,
                           Policy, TrainerConfig, Transition,
                           action_probabilities, actor_update, build_aim_params,
                           build_policies, compute_returns, critic_update,
                           critic_values, epsilon_value, run_episode,
                           seed_streams, select_action, train)

TINY_NET = dict(maim_grid=8, conv_filters=2, maim_feature_dim=4,
                dense_widths=(8, 8, 8))


def tiny_config(**overrides):
    kw = dict(episodes=2, seed=0, **TINY_NET)
    kw.update(overrides)
    return TrainerConfig(**kw)


def linear_policy_pair(obs_dim=1, n_actions=2, seed=0):
    """dense_only actor/critic with no hidden layers: exactly a linear
    softmax / linear value on concat(obs, flattened grid)."""
    common = dict(obs_dim=obs_dim, n_actions=n_actions, maim_shape=(1, 8, 8),
                  arch=DENSE_ONLY, dense_widths=())
    actor_spec = NetworkSpec(head=POLICY_HEAD, **common)
    critic_spec = NetworkSpec(head=VALUE_HEAD, **common)
    rng = np.random.default_rng(seed)
    actor = Policy(actor_spec, init_params(actor_spec, rng, dtype=np.float64))
    critic = Policy(critic_spec,
                    np.zeros(param_layout(critic_spec)[1], dtype=np.float64))
    return actor, critic


def one_step_buffer(obs, action, n_actions, reward):
    tr = Transition(agent_id=0, step=0, observation=np.asarray(obs),
                    action=action, mask=np.ones(n_actions, dtype=bool),
                    dropout_masks=[])
    buf = EpisodeBuffer(steps=[[tr]], maims=[np.zeros((1, 8, 8), np.float32)],
                        rewards=[reward])
    return buf


class TestEpsilonSchedule:
    def test_endpoints_and_midpoint(self):
        s = EpsilonSchedule(1.0, 0.05, 1200)
        assert epsilon_value(0, s) == 1.0
        assert epsilon_value(600, s) == pytest.approx(0.525)
        assert epsilon_value(1200, s) == 0.05
        assert epsilon_value(99999, s) == 0.05

    def test_strictly_decreasing_during_decay(self):
        s = EpsilonSchedule(1.0, 0.05, 100)
        vals = [epsilon_value(i, s) for i in range(101)]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_negative_episode_rejected(self):
        with pytest.raises(ValueError):
            epsilon_value(-1, EpsilonSchedule())

    @pytest.mark.parametrize("kw", [
        dict(epsilon_0=1.2), dict(epsilon_min=-0.1),
        dict(epsilon_0=0.1, epsilon_min=0.5), dict(decay_episodes=0),
    ])
    def test_invalid_schedules(self, kw):
        with pytest.raises(ValueError):
            EpsilonSchedule(**{**dict(epsilon_0=1.0, epsilon_min=0.05,
                                      decay_episodes=10), **kw})


class TestReturns:
    def test_hand_example(self):
        np.testing.assert_allclose(compute_returns([6.0, 5.0, 3.0], 0.9),
                                   [12.93, 7.7, 3.0])

    def test_terminal_bonus_discounts_backward(self):
        np.testing.assert_allclose(compute_returns([0.0, 0.0, 20.0], 0.9),
                                   [16.2, 18.0, 20.0])

    def test_gamma_one_is_suffix_sum(self):
        np.testing.assert_allclose(compute_returns([1.0, 2.0, 3.0], 1.0),
                                   [6.0, 5.0, 3.0])

    def test_empty(self):
        assert compute_returns([], 0.9).size == 0

    def test_bad_gamma(self):
        with pytest.raises(ValueError):
            compute_returns([1.0], 0.0)


class TestActionSelection:
    def test_never_illegal(self, rng):
        mask = np.array([False, True, False, True])
        logits = np.array([10.0, 0.0, 10.0, 0.0])
        for eps in (0.0, 0.5, 1.0):
            for _ in range(200):
                assert mask[select_action(logits, mask, eps, rng)]

    def test_exact_mixture_probabilities(self):
        logits = np.array([np.log(3.0), 0.0])
        mask = np.ones(2, dtype=bool)
        p = action_probabilities(logits, mask, 0.4)
        np.testing.assert_allclose(p, [0.65, 0.35])

    def test_empirical_distribution_matches(self, rng):
        logits = np.array([1.0, 0.0, -1.0])
        mask = np.array([True, True, False])
        target = action_probabilities(logits, mask, 0.3)
        n = 40_000
        counts = np.bincount(
            [select_action(logits, mask, 0.3, rng) for _ in range(n)],
            minlength=3)
        np.testing.assert_allclose(counts / n, target, atol=0.01)

    def test_epsilon_one_is_uniform_over_legal(self, rng):
        logits = np.array([100.0, 0.0, 0.0])
        mask = np.ones(3, dtype=bool)
        counts = np.bincount(
            [select_action(logits, mask, 1.0, rng) for _ in range(30_000)],
            minlength=3)
        np.testing.assert_allclose(counts / 30_000, 1 / 3, atol=0.01)

    def test_no_legal_actions_raises(self, rng):
        with pytest.raises(ValueError):
            select_action(np.zeros(3), np.zeros(3, dtype=bool), 0.5, rng)

    def test_bad_epsilon(self, rng):
        with pytest.raises(ValueError):
            select_action(np.zeros(2), np.ones(2, dtype=bool), 1.5, rng)


class TestActorUpdate:
    def test_zero_advantage_is_noop(self):
        actor, critic = linear_policy_pair()
        buf = one_step_buffer([0.7], 0, 2, reward=0.0)
        returns = compute_returns(buf.rewards, 0.99)
        before = actor.params.copy()
        after = actor_update(buf, returns, actor, critic, lr=0.5)
        np.testing.assert_array_equal(after, before)

    def test_matches_closed_form_policy_gradient(self):
        actor, critic = linear_policy_pair()
        obs = np.array([0.7])
        reward, lr, action = 2.0, 0.25, 0
        buf = one_step_buffer(obs, action, 2, reward)
        returns = compute_returns(buf.rewards, 0.99)

        layout = param_layout(actor.spec)[0]
        w = view(actor.params, layout, "head_w").copy()
        b = view(actor.params, layout, "head_b").copy()
        head_in = np.concatenate([obs, np.zeros(64)])
        probs = masked_softmax(w @ head_in + b, np.ones(2, dtype=bool))
        g_logits = reward * (np.eye(2)[action] - probs)  # adv = G - 0
        expect_w = w + lr * np.outer(g_logits, head_in)
        expect_b = b + lr * g_logits

        after = actor_update(buf, returns, actor, critic, lr=lr)
        np.testing.assert_allclose(view(after, layout, "head_w"), expect_w,
                                   atol=1e-12)
        np.testing.assert_allclose(view(after, layout, "head_b"), expect_b,
                                   atol=1e-12)

    def test_gradient_averaged_over_transitions(self):
        actor, critic = linear_policy_pair()
        obs = np.array([0.7])
        one = one_step_buffer(obs, 0, 2, reward=2.0)
        # same transition twice in one step group: mean gradient is equal,
        # so the update must match the single-transition one exactly
        two = one_step_buffer(obs, 0, 2, reward=2.0)
        two.steps[0].append(Transition(0, 0, obs, 0, np.ones(2, dtype=bool), []))
        a1 = actor_update(one, compute_returns(one.rewards, 1.0), actor,
                          critic, lr=0.25)
        a2 = actor_update(two, compute_returns(two.rewards, 1.0), actor,
                          critic, lr=0.25)
        np.testing.assert_allclose(a1, a2, atol=1e-12)

    def test_increases_chosen_action_probability(self):
        actor, critic = linear_policy_pair()
        obs = np.array([0.7])
        buf = one_step_buffer(obs, 1, 2, reward=5.0)
        layout = param_layout(actor.spec)[0]

        def prob_of_1(params):
            w = view(params, layout, "head_w")
            b = view(params, layout, "head_b")
            head_in = np.concatenate([obs, np.zeros(64)])
            return masked_softmax(w @ head_in + b, np.ones(2, dtype=bool))[1]

        after = actor_update(buf, compute_returns(buf.rewards, 1.0), actor,
                             critic, lr=0.5)
        assert prob_of_1(after) > prob_of_1(actor.params)

    def test_empty_buffer_returns_params(self):
        actor, critic = linear_policy_pair()
        buf = EpisodeBuffer()
        assert actor_update(buf, np.zeros(0), actor, critic, 0.1) is actor.params


class TestCriticUpdate:
    def test_matches_closed_form_regression_step(self):
        _, critic = linear_policy_pair()
        obs = np.array([0.8])
        buf = one_step_buffer(obs, 0, 2, reward=4.0)
        returns = compute_returns(buf.rewards, 0.99)
        lr = 0.3
        # V = 0 everywhere, delta = -4; dL/dw = delta * head_in
        head_in = np.concatenate([obs, np.zeros(64)])
        layout = param_layout(critic.spec)[0]
        expect_w = 0.0 - lr * (-4.0) * head_in
        after = critic_update(buf, returns, critic, lr=lr)
        np.testing.assert_allclose(view(after, layout, "head_w")[0], expect_w,
                                   atol=1e-12)
        np.testing.assert_allclose(view(after, layout, "head_b"), [lr * 4.0],
                                   atol=1e-12)

    def test_repeated_steps_fit_constant_target(self):
        _, critic = linear_policy_pair()
        buf = one_step_buffer(np.array([1.0]), 0, 2, reward=7.0)
        returns = compute_returns(buf.rewards, 1.0)
        for _ in range(300):
            critic.params = critic_update(buf, returns, critic, lr=0.3)
        vals = critic_values(buf, Policy(critic.spec, critic.params))
        assert vals[0] == pytest.approx(7.0, abs=1e-3)

    def test_critic_values_eval_mode_deterministic(self):
        _, critic = linear_policy_pair()
        critic.params = np.arange(critic.params.size, dtype=np.float64) * 1e-3
        buf = one_step_buffer(np.array([0.5]), 0, 2, reward=1.0)
        a = critic_values(buf, critic)
        b = critic_values(buf, critic)
        np.testing.assert_array_equal(a, b)


class TestSeedStreams:
    def test_four_named_streams(self):
        streams = seed_streams(7)
        assert set(streams) == {"actor_init", "critic_init", "action",
                                "critic_dropout"}

    def test_reproducible_and_independent(self):
        a = seed_streams(7)
        b = seed_streams(7)
        c = seed_streams(8)
        for name in a:
            assert a[name].random() == b[name].random()
        draws = [seed_streams(7)[n].random() for n in
                 ("actor_init", "critic_init", "action", "critic_dropout")]
        assert len(set(draws)) == 4  # streams differ from each other
        assert seed_streams(8)["action"].random() != seed_streams(7)["action"].random()


class TestRunEpisode:
    def setup_method(self):
        self.config = tiny_config()

    def make_env(self, duel_spec):
        return CombatEnv(duel_spec, build_aim_params(self.config))

    def test_buffer_shape_and_legality(self, duel_spec):
        env = self.make_env(duel_spec)
        actor, critic = build_policies(duel_spec, self.config)
        buf, outcome = run_episode(env, actor, critic, self.config, 0,
                                   np.random.default_rng(1))
        assert outcome.terminal
        assert buf.length == len(buf.rewards) == len(buf.steps) == len(buf.maims)
        assert buf.n_transitions >= buf.length  # one agent, all alive steps
        for tr in buf.transitions():
            assert tr.mask[tr.action]
            assert tr.observation.shape == (duel_spec.observation_dim,)
            assert len(tr.dropout_masks) == len(self.config.dense_widths)

    def test_deterministic_given_stream(self, duel_spec):
        outs = []
        for _ in range(2):
            env = self.make_env(duel_spec)
            actor, critic = build_policies(duel_spec, self.config)
            buf, _ = run_episode(env, actor, critic, self.config, 0,
                                 np.random.default_rng(5))
            outs.append([tr.action for tr in buf.transitions()])
        assert outs[0] == outs[1]

    def test_params_frozen_during_episode(self, duel_spec):
        env = self.make_env(duel_spec)
        actor, critic = build_policies(duel_spec, self.config)
        pa, pc = actor.params.copy(), critic.params.copy()
        run_episode(env, actor, critic, self.config, 0, np.random.default_rng(2))
        np.testing.assert_array_equal(actor.params, pa)
        np.testing.assert_array_equal(critic.params, pc)

    def test_epsilon_index_changes_behavior(self, duel_spec):
        # episode 0 runs at epsilon 1.0 (uniform): with the same stream a
        # fully decayed episode index must usually pick different actions
        env = self.make_env(duel_spec)
        actor, critic = build_policies(duel_spec, self.config)
        b0, _ = run_episode(env, actor, critic, self.config, 0,
                            np.random.default_rng(3))
        b1, _ = run_episode(env, actor, critic, self.config, 10 ** 6,
                            np.random.default_rng(3))
        assert [t.action for t in b0.transitions()] != \
               [t.action for t in b1.transitions()]


class TestCombatEnvAdapter:
    def test_dead_agents_filled_with_noop(self, duel_spec):
        config = tiny_config()
        env = CombatEnv(duel_spec, build_aim_params(config))
        env.reset()
        env.world.unit(0).health = 0.0
        assert env.living_agents() == []
        outcome = env.step({})
        assert env.last_joint_actions == [0]
        assert outcome.terminal and not outcome.victory

    def test_maim_cache_invalidated_on_step(self, duel_spec):
        env = CombatEnv(duel_spec, build_aim_params(tiny_config()))
        env.reset()
        m0 = env.encoded_maim()
        assert env.encoded_maim() is m0  # cached within a step
        env.step({0: 4})  # move east
        m1 = env.encoded_maim()
        assert not np.array_equal(m0, m1)

    def test_maim_shape_tracks_grid(self, duel_spec):
        env = CombatEnv(duel_spec, build_aim_params(tiny_config(maim_grid=16)))
        env.reset()
        assert env.encoded_maim().shape == (1, 16, 16)


class TestTrainerConfig:
    @pytest.mark.parametrize("kw", [
        dict(episodes=-1), dict(gamma=0.0), dict(gamma=1.0001),
        dict(actor_lr=0.0), dict(critic_lr=-1.0), dict(architecture="mlp"),
        dict(optimizer="rmsprop"), dict(running_window=0),
        dict(checkpoint_every=-1),
    ])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            tiny_config(**kw)

    def test_dense_widths_coerced_to_tuple(self):
        assert tiny_config(dense_widths=[4, 4]).dense_widths == (4, 4)


class TestTrain:
    def test_metrics_well_formed(self, duel_spec):
        config = tiny_config(episodes=3, running_window=2)
        result = train(duel_spec, config)
        assert len(result.metrics) == 3
        for i, rec in enumerate(result.metrics):
            assert rec.seed == 0 and rec.episode == i
            assert 0.0 <= rec.reward <= 20.0
            assert rec.epsilon == epsilon_value(i, config.epsilon)
            assert 1 <= rec.length <= duel_spec.max_episode_steps
        # trailing window of 2
        r = [m.reward for m in result.metrics]
        assert result.metrics[0].running_avg == pytest.approx(r[0])
        assert result.metrics[2].running_avg == pytest.approx((r[1] + r[2]) / 2)

    def test_deterministic_per_seed(self, duel_spec):
        config = tiny_config(episodes=3)
        a = train(duel_spec, config)
        b = train(duel_spec, config)
        assert [(m.reward, m.length) for m in a.metrics] == \
               [(m.reward, m.length) for m in b.metrics]
        np.testing.assert_array_equal(a.actor.params, b.actor.params)

    def test_seed_changes_run(self, duel_spec):
        a = train(duel_spec, tiny_config(episodes=3, seed=0))
        b = train(duel_spec, tiny_config(episodes=3, seed=1))
        assert [(m.reward, m.length) for m in a.metrics] != \
               [(m.reward, m.length) for m in b.metrics]

    def test_zero_episodes(self, duel_spec):
        result = train(duel_spec, tiny_config(episodes=0))
        assert result.metrics == []
        assert result.actor.params.size > 0  # networks still built

    def test_adam_option_runs(self, duel_spec):
        result = train(duel_spec, tiny_config(episodes=2, optimizer=ADAM))
        assert len(result.metrics) == 2

    def test_dense_only_runs_without_conv(self, duel_spec):
        config = tiny_config(episodes=2, architecture=DENSE_ONLY)
        result = train(duel_spec, config)
        layout, _ = param_layout(result.actor.spec)
        assert not any(k.startswith("conv") for k in layout)

    def test_checkpoints_written(self, duel_spec, tmp_path):
        config = tiny_config(episodes=2, checkpoint_every=1)
        train(duel_spec, config, checkpoint_dir=tmp_path)
        names = sorted(p.name for p in tmp_path.iterdir())
        assert "actor_final.ckpt" in names and "critic_final.ckpt" in names
        assert "actor_00001.ckpt" in names and "actor_00002.ckpt" in names

    def test_replay_written_for_last_episode(self, duel_spec, tmp_path):
        from imarl.replay import read_replay
        path = tmp_path / "ep.jsonl"
        config = tiny_config(episodes=2)
        result = train(duel_spec, config, replay_path=path)
        records = read_replay(path)
        assert len(records) == result.metrics[-1].length
