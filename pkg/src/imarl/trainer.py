"""Semi-centralized advantage actor-critic.

One shared actor and one shared critic control every agent: at each step
the global influence grid is built once, encoded once, and every living
agent's action distribution comes from the same parameter snapshot
applied to (its local observation, the shared grid features). Updates
happen only at episode boundaries from full Monte-Carlo returns:

    actor ascends   mean over transitions of  grad log pi(a|s) * (G - V(s))
    critic descends mean over transitions of  1/2 (V(s) - G)^2

Exploration is epsilon-soft: with probability epsilon a uniformly random
legal action, otherwise a sample from the masked softmax policy, with
epsilon decaying linearly over training.

The conv trunk contains no dropout, so its forward pass is computed once
per step and shared across agents; at update time per-agent feature
gradients are summed and routed through a single trunk backward per
step. This is exact, not an approximation. Dense-layer dropout masks
drawn during rollout are recorded per transition and replayed during the
actor update so the gradient matches the distribution the action was
actually sampled from.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .engine import NOOP, StepOutcome, legal_actions, load_scenario, observe, scripted_opponent, step
from .influence import AIMParams, aggregate_maim, encode_maim, maim_normalizer
from .metrics import DEFAULT_WINDOW, MetricsRecord
from .nn.checkpoint import save_checkpoint
from .nn.layers import masked_softmax
from .nn.network import (DENSE_CNN, DENSE_ONLY, POLICY_HEAD, VALUE_HEAD,
                         NetworkSpec, head_backward, head_forward, init_params,
                         param_layout, trunk_backward, trunk_forward)
from .nn.optim import ASCEND, DESCEND, Adam, optimizer_step
from .replay import ReplayWriter
from .scenario import ScenarioSpec

SGD = "sgd"
ADAM = "adam"


@dataclass(frozen=True)
class EpsilonSchedule:
    epsilon_0: float = 1.0
    epsilon_min: float = 0.05
    decay_episodes: int = 1200

    def __post_init__(self):
        if not 0.0 <= self.epsilon_min <= self.epsilon_0 <= 1.0:
            raise ValueError("need 0 <= epsilon_min <= epsilon_0 <= 1")
        if self.decay_episodes < 1:
            raise ValueError("decay_episodes must be >= 1")


def epsilon_value(episode_index: int, schedule: EpsilonSchedule) -> float:
    """Linear decay from epsilon_0 to epsilon_min, then constant."""
    if episode_index < 0:
        raise ValueError("episode_index must be >= 0")
    if episode_index >= schedule.decay_episodes:
        return schedule.epsilon_min
    frac = episode_index / schedule.decay_episodes
    return schedule.epsilon_0 + (schedule.epsilon_min - schedule.epsilon_0) * frac


@dataclass(frozen=True)
class TrainerConfig:
    episodes: int = 1600
    gamma: float = 0.99
    actor_lr: float = 1e-4
    critic_lr: float = 5e-4
    epsilon: EpsilonSchedule = field(default_factory=EpsilonSchedule)
    dropout_rate: float = 0.1
    seed: int = 0
    architecture: str = DENSE_CNN
    optimizer: str = SGD
    normalize_advantage: bool = False
    maim_grid: int = 64
    conv_filters: int = 32
    conv_stacks: int = 1
    maim_feature_dim: int = 64
    dense_widths: tuple[int, ...] = (256, 256, 256)
    running_window: int = DEFAULT_WINDOW
    checkpoint_every: int = 0

    def __post_init__(self):
        object.__setattr__(self, "dense_widths", tuple(self.dense_widths))
        if self.episodes < 0:
            raise ValueError("episodes must be >= 0")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if self.actor_lr <= 0 or self.critic_lr <= 0:
            raise ValueError("learning rates must be positive")
        if self.architecture not in (DENSE_CNN, DENSE_ONLY):
            raise ValueError(f"unknown architecture {self.architecture!r}")
        if self.optimizer not in (SGD, ADAM):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.running_window < 1:
            raise ValueError("running_window must be >= 1")
        if self.checkpoint_every < 0:
            raise ValueError("checkpoint_every must be >= 0")


def action_probabilities(logits: np.ndarray, mask: np.ndarray,
                         epsilon: float) -> np.ndarray:
    """Exact epsilon-soft mixture the sampler draws from."""
    mask = np.asarray(mask, dtype=bool)
    probs = masked_softmax(logits, mask)
    uniform = mask / mask.sum()
    return epsilon * uniform + (1.0 - epsilon) * probs


def select_action(logits: np.ndarray, mask: np.ndarray, epsilon: float,
                  rng: np.random.Generator) -> int:
    """Epsilon branch: uniform over legal actions; otherwise masked
    softmax sampling. Never returns an illegal action."""
    mask = np.asarray(mask, dtype=bool)
    legal = np.flatnonzero(mask)
    if legal.size == 0:
        raise ValueError("select_action needs at least one legal action")
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    if rng.random() < epsilon:
        return int(legal[rng.integers(legal.size)])
    probs = masked_softmax(np.asarray(logits, dtype=np.float64), mask)
    return int(rng.choice(probs.size, p=probs))


def compute_returns(rewards, gamma: float) -> np.ndarray:
    """Discounted suffix sums G_t, computed backward."""
    if not 0.0 < gamma <= 1.0:
        raise ValueError("gamma must lie in (0, 1]")
    out = np.zeros(len(rewards), dtype=np.float64)
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


@dataclass
class Transition:
    agent_id: int
    step: int
    observation: np.ndarray
    action: int
    mask: np.ndarray
    dropout_masks: list | None  # actor masks recorded for exact replay


@dataclass
class EpisodeBuffer:
    """Trajectory of one episode: transitions grouped by step plus the
    per-step shared data (encoded grid, shared reward)."""

    steps: list[list[Transition]] = field(default_factory=list)
    maims: list[np.ndarray] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    victory: bool = False

    @property
    def length(self) -> int:
        return len(self.rewards)

    @property
    def episode_return(self) -> float:
        return float(sum(self.rewards))

    @property
    def n_transitions(self) -> int:
        return sum(len(s) for s in self.steps)

    def transitions(self):
        for group in self.steps:
            yield from group


@dataclass
class Policy:
    """A network and its parameter snapshot, travelling as one value."""

    spec: NetworkSpec
    params: np.ndarray


class CombatEnv:
    """Adapter from the combat engine + influence grids to the trainer's
    environment protocol (reset / observe / legal_mask / encoded_maim /
    living_agents / step)."""

    def __init__(self, spec: ScenarioSpec, aim: AIMParams | None = None,
                 seed: int = 0):
        spec.validate()
        self.spec = spec
        self.aim = aim if aim is not None else AIMParams()
        self.seed = seed
        self.norm = maim_normalizer(spec)
        self.world = load_scenario(spec, seed)
        self._maim = None
        self.last_joint_actions: list[int] = []
        self.last_enemy_actions: list[int] = []

    @property
    def n_agents(self) -> int:
        return self.spec.n_controlled

    @property
    def n_actions(self) -> int:
        return self.spec.num_actions

    @property
    def observation_dim(self) -> int:
        return self.spec.observation_dim

    @property
    def maim_shape(self) -> tuple[int, int, int]:
        return (1, self.aim.grid_height, self.aim.grid_width)

    def reset(self) -> None:
        self.world = load_scenario(self.spec, self.seed)
        self._maim = None

    def encoded_maim(self) -> np.ndarray:
        if self._maim is None:
            self._maim = encode_maim(aggregate_maim(self.world, self.aim), self.norm)
        return self._maim

    def living_agents(self) -> list[int]:
        return [u.unit_id for u in self.world.controlled() if u.alive]

    def observe(self, agent_id: int) -> np.ndarray:
        return observe(self.world, agent_id)

    def legal_mask(self, agent_id: int) -> np.ndarray:
        return legal_actions(self.world, agent_id)

    def step(self, actions: dict[int, int]) -> StepOutcome:
        joint = [actions.get(i, NOOP) for i in range(self.n_agents)]
        self.last_joint_actions = joint
        self.last_enemy_actions = scripted_opponent(self.world)
        self.world, outcome = step(self.world, joint)
        self._maim = None
        return outcome


def run_episode(env, actor: Policy, critic: Policy | None, config: TrainerConfig,
                episode_index: int, rng: np.random.Generator,
                replay_writer: ReplayWriter | None = None):
    """Roll one episode with the shared actor. The critic rides along for
    interface symmetry but is only consulted at update time (parameters
    are frozen during the episode either way). Returns (EpisodeBuffer,
    final StepOutcome)."""
    env.reset()
    epsilon = epsilon_value(episode_index, config.epsilon)
    layout = param_layout(actor.spec)[0]
    buffer = EpisodeBuffer()
    while True:
        maim = env.encoded_maim()
        features, _ = trunk_forward(actor.spec, actor.params, maim, layout)
        group = []
        actions = {}
        for agent_id in env.living_agents():
            obs = env.observe(agent_id)
            mask = env.legal_mask(agent_id)
            logits, cache = head_forward(actor.spec, actor.params, obs, features,
                                         train_mode=True, rng=rng, layout=layout)
            action = select_action(logits, mask, epsilon, rng)
            actions[agent_id] = action
            group.append(Transition(agent_id, len(buffer.steps), obs, action,
                                    mask, cache["masks"]))
        outcome = env.step(actions)
        buffer.steps.append(group)
        buffer.maims.append(maim)
        buffer.rewards.append(outcome.shared_reward)
        if replay_writer is not None:
            replay_writer.record_step(env.world, env.last_joint_actions,
                                      env.last_enemy_actions, outcome)
        if outcome.terminal:
            buffer.victory = outcome.victory
            return buffer, outcome


def critic_values(buffer: EpisodeBuffer, critic: Policy) -> np.ndarray:
    """Eval-mode V(s) for every transition, in buffer order. Used as the
    constant baseline in the advantage."""
    layout = param_layout(critic.spec)[0]
    values = np.zeros(buffer.n_transitions, dtype=np.float64)
    k = 0
    for t, group in enumerate(buffer.steps):
        features, _ = trunk_forward(critic.spec, critic.params, buffer.maims[t], layout)
        for tr in group:
            out, _ = head_forward(critic.spec, critic.params, tr.observation,
                                  features, train_mode=False, layout=layout)
            values[k] = float(out[0])
            k += 1
    return values


def actor_update(buffer: EpisodeBuffer, returns: np.ndarray, actor: Policy,
                 critic: Policy, lr: float, optimizer: Adam | None = None,
                 normalize_advantage: bool = False) -> np.ndarray:
    """One ascent step on the mean policy-gradient term. The advantage
    G_t - V(s_t) is a constant coefficient; no gradient flows through
    the critic."""
    n = buffer.n_transitions
    if n == 0:
        return actor.params
    returns = np.asarray(returns, dtype=np.float64)
    values = critic_values(buffer, critic)
    adv = np.zeros(n, dtype=np.float64)
    k = 0
    for t, group in enumerate(buffer.steps):
        for _ in group:
            adv[k] = returns[t] - values[k]
            k += 1
    if normalize_advantage and n > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    layout = param_layout(actor.spec)[0]
    grad = np.zeros_like(actor.params)
    k = 0
    for t, group in enumerate(buffer.steps):
        features, trunk_cache = trunk_forward(actor.spec, actor.params,
                                              buffer.maims[t], layout)
        g_feats_total = [np.zeros(actor.spec.feature_dim, dtype=actor.params.dtype)
                         for _ in range(actor.spec.n_stacks)]
        for tr in group:
            logits, cache = head_forward(actor.spec, actor.params, tr.observation,
                                         features, train_mode=True,
                                         dropout_masks=tr.dropout_masks, layout=layout)
            probs = masked_softmax(np.asarray(logits, dtype=np.float64), tr.mask)
            g_logits = (-adv[k]) * probs
            g_logits[tr.action] += adv[k]
            _, g_feats = head_backward(actor.spec, actor.params, grad, cache,
                                       g_logits, layout)
            for s in range(len(g_feats_total)):
                g_feats_total[s] += g_feats[s]
            k += 1
        trunk_backward(actor.spec, actor.params, grad, trunk_cache,
                       g_feats_total, layout)
    grad /= n
    if optimizer is not None:
        return optimizer.step(actor.params, grad, ASCEND)
    return optimizer_step(actor.params, grad, lr, ASCEND)


def critic_update(buffer: EpisodeBuffer, returns: np.ndarray, critic: Policy,
                  lr: float, rng: np.random.Generator | None = None,
                  optimizer: Adam | None = None) -> np.ndarray:
    """One descent step on mean squared error 1/2 (V(s_t) - G_t)^2. With
    an rng the value forward runs in train mode (fresh dropout masks);
    without one it is deterministic."""
    n = buffer.n_transitions
    if n == 0:
        return critic.params
    returns = np.asarray(returns, dtype=np.float64)
    layout = param_layout(critic.spec)[0]
    grad = np.zeros_like(critic.params)
    train_mode = rng is not None
    for t, group in enumerate(buffer.steps):
        features, trunk_cache = trunk_forward(critic.spec, critic.params,
                                              buffer.maims[t], layout)
        g_feats_total = [np.zeros(critic.spec.feature_dim, dtype=critic.params.dtype)
                         for _ in range(critic.spec.n_stacks)]
        for tr in group:
            out, cache = head_forward(critic.spec, critic.params, tr.observation,
                                      features, train_mode=train_mode, rng=rng,
                                      layout=layout)
            delta = float(out[0]) - returns[t]
            _, g_feats = head_backward(critic.spec, critic.params, grad, cache,
                                       np.array([delta]), layout)
            for s in range(len(g_feats_total)):
                g_feats_total[s] += g_feats[s]
        trunk_backward(critic.spec, critic.params, grad, trunk_cache,
                       g_feats_total, layout)
    grad /= n
    if optimizer is not None:
        return optimizer.step(critic.params, grad, DESCEND)
    return optimizer_step(critic.params, grad, lr, DESCEND)


def seed_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent substreams derived from one master seed."""
    init_a, init_c, action, critic_do = np.random.SeedSequence(seed).spawn(4)
    return {"actor_init": np.random.default_rng(init_a),
            "critic_init": np.random.default_rng(init_c),
            "action": np.random.default_rng(action),
            "critic_dropout": np.random.default_rng(critic_do)}


def build_aim_params(config: TrainerConfig) -> AIMParams:
    return AIMParams(grid_width=config.maim_grid, grid_height=config.maim_grid,
                     radius=max(config.maim_grid / 8.0, 1.0))


def build_policies(scenario: ScenarioSpec, config: TrainerConfig,
                   streams=None) -> tuple[Policy, Policy]:
    """Fresh actor/critic for a scenario, seeded from the config."""
    if streams is None:
        streams = seed_streams(config.seed)
    grid = config.maim_grid
    common = dict(obs_dim=scenario.observation_dim, n_actions=scenario.num_actions,
                  maim_shape=(1, grid, grid), arch=config.architecture,
                  conv_filters=config.conv_filters, conv_stacks=config.conv_stacks,
                  maim_feature_dim=config.maim_feature_dim,
                  dense_widths=config.dense_widths, dropout_rate=config.dropout_rate)
    actor_spec = NetworkSpec(head=POLICY_HEAD, **common)
    critic_spec = NetworkSpec(head=VALUE_HEAD, **common)
    actor = Policy(actor_spec, init_params(actor_spec, streams["actor_init"]))
    critic = Policy(critic_spec, init_params(critic_spec, streams["critic_init"]))
    return actor, critic


@dataclass
class TrainResult:
    actor: Policy
    critic: Policy
    metrics: list[MetricsRecord]


def train_loop(env, actor: Policy, critic: Policy, config: TrainerConfig,
               streams, progress=None, replay_path=None,
               replay_episode: int | None = None,
               checkpoint_dir=None) -> TrainResult:
    """Episode loop over an arbitrary environment; ``train`` wraps this
    for combat scenarios. Mutates nothing in place: each update rebinds
    the Policy's parameter snapshot."""
    if config.optimizer == ADAM:
        actor_opt = Adam(actor.params.size, config.actor_lr)
        critic_opt = Adam(critic.params.size, config.critic_lr)
    else:
        actor_opt = critic_opt = None
    if replay_path is not None and replay_episode is None:
        replay_episode = config.episodes - 1
    metrics: list[MetricsRecord] = []
    recent: list[float] = []
    for episode in range(config.episodes):
        writer = None
        if replay_path is not None and episode == replay_episode:
            writer = ReplayWriter(replay_path)
        try:
            buffer, _ = run_episode(env, actor, critic, config, episode,
                                    streams["action"], replay_writer=writer)
        finally:
            if writer is not None:
                writer.close()
        returns = compute_returns(buffer.rewards, config.gamma)
        actor.params = actor_update(buffer, returns, actor, critic,
                                    config.actor_lr, optimizer=actor_opt,
                                    normalize_advantage=config.normalize_advantage)
        critic.params = critic_update(buffer, returns, critic, config.critic_lr,
                                      rng=streams["critic_dropout"],
                                      optimizer=critic_opt)
        recent.append(buffer.episode_return)
        if len(recent) > config.running_window:
            recent.pop(0)
        record = MetricsRecord(seed=config.seed, episode=episode,
                               reward=buffer.episode_return, win=buffer.victory,
                               epsilon=epsilon_value(episode, config.epsilon),
                               running_avg=float(np.mean(recent)),
                               length=buffer.length)
        metrics.append(record)
        if progress is not None:
            progress(record)
        if checkpoint_dir is not None and config.checkpoint_every > 0 \
                and (episode + 1) % config.checkpoint_every == 0:
            _save_pair(checkpoint_dir, episode + 1, actor, critic)
    if checkpoint_dir is not None:
        _save_pair(checkpoint_dir, None, actor, critic)
    return TrainResult(actor=actor, critic=critic, metrics=metrics)


def _save_pair(checkpoint_dir, episode, actor: Policy, critic: Policy) -> None:
    tag = "final" if episode is None else f"{episode:05d}"
    save_checkpoint(os.path.join(checkpoint_dir, f"actor_{tag}.ckpt"),
                    actor.spec, actor.params)
    save_checkpoint(os.path.join(checkpoint_dir, f"critic_{tag}.ckpt"),
                    critic.spec, critic.params)


def train(scenario: ScenarioSpec, config: TrainerConfig, progress=None,
          replay_path=None, replay_episode: int | None = None,
          checkpoint_dir=None) -> TrainResult:
    """Full training run on a combat scenario. Deterministic given
    (scenario, config): all randomness flows from config.seed."""
    streams = seed_streams(config.seed)
    actor, critic = build_policies(scenario, config, streams)
    env = CombatEnv(scenario, build_aim_params(config), seed=config.seed)
    return train_loop(env, actor, critic, config, streams, progress=progress,
                      replay_path=replay_path, replay_episode=replay_episode,
                      checkpoint_dir=checkpoint_dir)
