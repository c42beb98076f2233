"""Deep Q-learning over the catalog action space.

The training loop is generic over a Q-function (the neural encoder in
production, a lookup table in tests) and an episode environment exposing
reset(goal) / step(action_id). TD targets are computed against a target
view that exposes nothing but the periodically synced copy.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, asdict

import numpy as np

from . import tensor as T
from .encoder import EncoderParams, encoder_forward_batch, q_head
from .optim import AdamState, optimizer_step
from .schema import Goal, sample_goal
from .simulator import DialogEnv, RulePolicy
from .tensor import no_grad
from .vocab import ActionCatalog, TokenVocab, tokenize_history


@dataclass(frozen=True)
class PolicyState:
    token_ids: tuple[int, ...]
    db_vec: tuple[float, ...]


@dataclass
class Transition:
    s: object
    a: int
    r: float
    s_next: object
    done: bool


class ReplayBuffer:
    """Ring buffer with FIFO eviction; minibatches sample without replacement."""

    def __init__(self, capacity: int, seed: int = 0):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._items: list[Transition] = []
        self._next = 0
        self.rng = np.random.default_rng([seed, 0xB0F])

    def __len__(self) -> int:
        return len(self._items)

    def push(self, t: Transition):
        if len(self._items) < self.capacity:
            self._items.append(t)
        else:
            self._items[self._next] = t
            self._next = (self._next + 1) % self.capacity

    def sample(self, batch_size: int) -> list[Transition]:
        if batch_size > len(self._items):
            raise ValueError("not enough transitions to sample")
        idx = self.rng.choice(len(self._items), size=batch_size, replace=False)
        return [self._items[i] for i in idx]

    def items(self) -> list[Transition]:
        return list(self._items)


@dataclass
class TrainConfig:
    gamma: float = 0.9
    epsilon_start: float = 0.2
    epsilon_end: float = 0.01
    epsilon_decay_episodes: int | None = None  # default: 60% of max_episodes
    buffer_capacity: int = 50_000
    batch_size: int = 32
    target_sync_period: int = 200
    warm_start_episodes: int = 1000
    warm_updates: int = 500
    max_episodes: int = 500
    eval_every: int = 50
    eval_episodes: int = 100
    lr: float = 1e-4
    state_max_tokens: int = 48
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        for e in (self.epsilon_start, self.epsilon_end):
            if not 0.0 <= e <= 1.0:
                raise ValueError("epsilon must lie in [0, 1]")

    def epsilon_at(self, episode: int) -> float:
        decay = self.epsilon_decay_episodes
        if decay is None:
            decay = max(1, int(0.6 * self.max_episodes))
        if decay <= 0 or episode >= decay:
            return self.epsilon_end
        frac = episode / decay
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


def select_action(q: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """epsilon-greedy; greedy ties resolve to the lowest action id."""
    q = np.asarray(q)
    if q.size == 0:
        raise ValueError("empty action-value vector")
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(q.size))
    return int(np.argmax(q))


def td_targets(batch: list[Transition], target, gamma: float) -> np.ndarray:
    """y_i = r_i for terminal transitions, else r_i + gamma * max_a target(s', a).

    `target` exposes only q_batch(states); hand it a target view, never the
    online network.
    """
    if not batch:
        raise ValueError("empty batch")
    y = np.array([t.r for t in batch], dtype=np.float64)
    live = [i for i, t in enumerate(batch) if not t.done]
    if live and gamma != 0.0:
        qn = target.q_batch([batch[i].s_next for i in live])
        y[np.array(live)] += gamma * qn.max(axis=1)
    return y.astype(np.float32)


class _TargetView:
    """The only handle td_targets ever receives for a NeuralQ."""

    def __init__(self, q: "NeuralQ"):
        self._q = q

    def q_batch(self, states) -> np.ndarray:
        return self._q._forward_batch(self._q.target_params, states)


class NeuralQ:
    """Q function backed by the transformer encoder; owns online and target
    parameter sets plus the optimizer state."""

    def __init__(self, params: EncoderParams, lr: float = 1e-4):
        self.params = params
        self.target_params = params.copy()
        self.opt = AdamState(params)
        self.lr = lr

    @property
    def n_actions(self) -> int:
        return self.params.config.n_actions

    def _pack(self, states) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        n = max(len(s.token_ids) for s in states)
        B = len(states)
        ids = np.zeros((B, n), dtype=np.int64)
        mask = np.zeros((B, n), dtype=np.int8)
        db = np.zeros((B, self.params.config.db_vec_dim), dtype=np.float32)
        for i, s in enumerate(states):
            ids[i, : len(s.token_ids)] = s.token_ids
            mask[i, : len(s.token_ids)] = 1
            db[i] = s.db_vec
        return ids, mask, db

    def _forward_batch(self, params: EncoderParams, states) -> np.ndarray:
        ids, mask, db = self._pack(states)
        with no_grad():
            pooled, _ = encoder_forward_batch(params, ids, db, mask)
            return q_head(params, pooled).data

    def q_values(self, state) -> np.ndarray:
        return self._forward_batch(self.params, [state])[0]

    def q_batch(self, states) -> np.ndarray:
        return self._forward_batch(self.params, states)

    def target_view(self) -> _TargetView:
        return _TargetView(self)

    def sync_target(self) -> None:
        self.target_params = self.params.copy()

    def update(self, batch: list[Transition], targets: np.ndarray) -> float:
        """Minimize mean (y - Q(s,a))^2 over the batch; one optimizer step.
        Gradient reaches only the chosen actions' outputs."""
        states = [t.s for t in batch]
        actions = np.array([t.a for t in batch], dtype=np.int64)
        ids, mask, db = self._pack(states)
        self.params.zero_grad()
        pooled, _ = encoder_forward_batch(self.params, ids, db, mask)
        qv = q_head(self.params, pooled)
        chosen = T.take_per_row(qv, actions)
        err = T.sub(chosen, T.Tensor(np.asarray(targets, dtype=np.float32)))
        loss = T.mean_all(T.square(err))
        value = float(loss.data)
        if not np.isfinite(value):
            raise FloatingPointError(f"non-finite TD loss {value}")
        loss.backward()
        optimizer_step(self.params, self.opt, self.lr)
        return value


class DialogAgentEnv:
    """ActionId-level adapter over DialogEnv: tracks the act history, builds
    PolicyStates, and translates catalog ids to system acts."""

    def __init__(self, env: DialogEnv, vocab: TokenVocab, catalog: ActionCatalog,
                 state_max_tokens: int = 48):
        self.env = env
        self.vocab = vocab
        self.catalog = catalog
        self.state_max_tokens = state_max_tokens
        self.history = []

    def _state(self) -> PolicyState:
        ids = tokenize_history(self.history, self.vocab, max_len=self.state_max_tokens)
        return PolicyState(tuple(ids), tuple(float(x) for x in self.env.db_vector()))

    def reset(self, goal: Goal) -> PolicyState:
        user_acts = self.env.reset(goal)
        self.history = list(user_acts)
        return self._state()

    def observe_expert(self, act) -> int:
        """Catalog id for an expert act; rejects acts outside the catalog."""
        aid = self.catalog.lookup(act)
        if aid is None:
            raise ValueError(f"expert act outside catalog: {act.canonical()}")
        return aid

    def step(self, action_id: int) -> tuple[PolicyState, float, bool, bool | None]:
        act = self.catalog.act(action_id)
        self.history.append(act)
        result = self.env.step([act])
        self.history.extend(result.user_acts)
        return self._state(), result.reward, result.done, result.success


@dataclass
class EvalPoint:
    episode: int
    success_rate: float
    avg_turns: float
    avg_reward: float
    epsilon: float
    td_loss_mean: float


@dataclass
class EpisodeStat:
    episode: int
    turns: int
    reward: float
    success: bool


@dataclass
class TrainLog:
    eval_points: list[EvalPoint] = field(default_factory=list)
    episodes: list[EpisodeStat] = field(default_factory=list)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["episode", "eval_success_rate", "eval_avg_turns",
                        "eval_avg_reward", "epsilon", "td_loss_mean"])
            for p in self.eval_points:
                w.writerow([p.episode, repr(p.success_rate), repr(p.avg_turns),
                            repr(p.avg_reward), repr(p.epsilon), repr(p.td_loss_mean)])

    def final_success(self) -> float:
        return self.eval_points[-1].success_rate if self.eval_points else 0.0


def greedy_episode(q, env, goal) -> EpisodeStat:
    state = env.reset(goal)
    total = 0.0
    turns = 0
    success = False
    while True:
        action = int(np.argmax(q.q_values(state)))
        state, r, done, succ = env.step(action)
        total += r
        turns += 1
        if done:
            success = bool(succ)
            break
    return EpisodeStat(-1, turns, total, success)


def evaluate(q, env, goals) -> tuple[float, float, float]:
    """Greedy evaluation over a fixed goal list: (success rate, avg turns, avg reward)."""
    stats = [greedy_episode(q, env, g) for g in goals]
    return (
        sum(s.success for s in stats) / len(stats),
        sum(s.turns for s in stats) / len(stats),
        sum(s.reward for s in stats) / len(stats),
    )


def warm_start(adapter: DialogAgentEnv, rule_policy: RulePolicy, goals,
               buffer: ReplayBuffer, gamma: float = 0.9
               ) -> list[tuple[Transition, float]]:
    """Fill the buffer with expert transitions encoded exactly as the agent
    will see them. Returns the transitions paired with their discounted
    return-to-go (the pre-update regression target)."""
    samples: list[tuple[Transition, float]] = []
    for goal in goals:
        rule_policy.reset()
        state = adapter.reset(goal)
        rule_policy.observe_user(adapter.history)
        episode: list[Transition] = []
        while True:
            act = rule_policy.act(adapter.env.db_match_counts())
            aid = adapter.observe_expert(act)
            prev_len = len(adapter.history)
            next_state, r, done, _ = adapter.step(aid)
            rule_policy.observe_user(adapter.history[prev_len + 1:])
            t = Transition(state, aid, r, next_state, done)
            buffer.push(t)
            episode.append(t)
            state = next_state
            if done:
                break
        g = 0.0
        tail: list[tuple[Transition, float]] = []
        for t in reversed(episode):
            g = t.r + gamma * g
            tail.append((t, g))
        samples.extend(reversed(tail))
    return samples


def pretrain_on_returns(q, samples: list[tuple[Transition, float]],
                        config: TrainConfig, n: int) -> list[float]:
    """Warm pre-updates: regress Q(s, a_expert) onto the observed discounted
    returns. Bootstrapped TD targets carry no action ranking on expert-only
    data (every stored action is a good one), so the warm phase fits the
    expert's value directly; interactive training then uses td_targets."""
    if not samples:
        return []
    rng = np.random.default_rng([config.seed, 0x3A9E])
    losses = []
    for _ in range(n):
        idx = rng.choice(len(samples), size=min(config.batch_size, len(samples)),
                         replace=False)
        batch = [samples[i][0] for i in idx]
        targets = np.array([samples[i][1] for i in idx], dtype=np.float32)
        losses.append(q.update(batch, targets))
    return losses


def run_updates(q, buffer: ReplayBuffer, config: TrainConfig, n: int) -> list[float]:
    losses = []
    for _ in range(n):
        if len(buffer) < config.batch_size:
            break
        batch = buffer.sample(config.batch_size)
        targets = td_targets(batch, q.target_view(), config.gamma)
        losses.append(q.update(batch, targets))
    return losses


def train(q, env, goal_fn, config: TrainConfig,
          buffer: ReplayBuffer | None = None,
          eval_env=None, eval_goals=None,
          update_counter_hook=None) -> TrainLog:
    """The interactive loop: epsilon-greedy rollouts, one update per step once
    the buffer is warm, periodic target sync, periodic greedy evaluation.

    goal_fn(i) yields the i-th training goal; eval_goals is the fixed, shared
    evaluation set. Deterministic for a given config.seed.
    """
    log = TrainLog()
    if config.max_episodes == 0:
        return log
    rng_act = np.random.default_rng([config.seed, 0xAC7])
    if buffer is None:
        buffer = ReplayBuffer(config.buffer_capacity, seed=config.seed)
    if eval_env is None:
        eval_env = env
    if eval_goals is None:
        eval_goals = [goal_fn(-(i + 1)) for i in range(config.eval_episodes)]
    updates = 0
    losses_window: list[float] = []

    def eval_point(episode: int):
        sr, turns, reward = evaluate(q, eval_env, eval_goals)
        mean_loss = float(np.mean(losses_window)) if losses_window else 0.0
        log.eval_points.append(EvalPoint(
            episode, sr, turns, reward, config.epsilon_at(episode), mean_loss))
        losses_window.clear()

    eval_point(0)
    for episode in range(config.max_episodes):
        epsilon = config.epsilon_at(episode)
        state = env.reset(goal_fn(episode))
        total = 0.0
        turns = 0
        success = False
        while True:
            action = select_action(q.q_values(state), epsilon, rng_act)
            next_state, r, done, succ = env.step(action)
            buffer.push(Transition(state, action, r, next_state, done))
            total += r
            turns += 1
            state = next_state
            if len(buffer) >= config.batch_size:
                batch = buffer.sample(config.batch_size)
                targets = td_targets(batch, q.target_view(), config.gamma)
                losses_window.append(q.update(batch, targets))
                updates += 1
                if update_counter_hook is not None:
                    update_counter_hook(updates)
                if updates % config.target_sync_period == 0:
                    q.sync_target()
            if done:
                success = bool(succ)
                break
        log.episodes.append(EpisodeStat(episode, turns, total, success))
        if (episode + 1) % config.eval_every == 0 or episode + 1 == config.max_episodes:
            eval_point(episode + 1)
    return log
