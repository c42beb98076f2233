"""Synthetic fine-tuning corpus: rule-based expert rolled out against the
user simulator, recorded as alternating usr/sys turns."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .schema import Goal, Schema, sample_goal
from .sessions import DialogSession, Turn
from .simulator import DialogEnv, RewardConfig, RulePolicy


@dataclass
class EpisodeRecord:
    session: DialogSession
    success: bool
    turns: int
    total_reward: float
    goal: Goal


def run_rule_episode(env: DialogEnv, policy: RulePolicy, goal: Goal,
                     session_id: str = "ep") -> EpisodeRecord:
    """One full expert episode; the recorded session includes both speakers."""
    policy.reset()
    user_acts = env.reset(goal)
    policy.observe_user(user_acts)
    turns = [Turn("usr", list(user_acts))]
    total = 0.0
    while True:
        act = policy.act(env.db_match_counts())
        turns.append(Turn("sys", [act]))
        step = env.step([act])
        total += step.reward
        turns.append(Turn("usr", list(step.user_acts)))
        policy.observe_user(step.user_acts)
        if step.done:
            return EpisodeRecord(
                session=DialogSession(session_id, turns),
                success=bool(step.success),
                turns=env.turn_count,
                total_reward=total,
                goal=goal,
            )


def generate_corpus(schema: Schema, n_sessions: int, seed: int,
                    success_only: bool = False,
                    reward: RewardConfig | None = None,
                    allowed_domains: list[str] | None = None) -> list[DialogSession]:
    """n_sessions expert sessions; with success_only, failures are skipped
    (generation keeps going until n successful sessions are collected)."""
    rng = np.random.default_rng(seed)
    env = DialogEnv(schema, reward=reward)
    policy = RulePolicy(schema)
    sessions = []
    attempts = 0
    cap = max(n_sessions * 20, 1000)
    while len(sessions) < n_sessions:
        attempts += 1
        if attempts > cap:
            raise RuntimeError(
                f"could not collect {n_sessions} sessions in {cap} attempts"
            )
        goal = sample_goal(schema, rng, allowed_domains=allowed_domains)
        rec = run_rule_episode(env, policy, goal, session_id=f"s{seed}-{len(sessions):06d}")
        if success_only and not rec.success:
            continue
        sessions.append(rec.session)
    return sessions


def rule_policy_success_rate(schema: Schema, episodes: int, seed: int,
                             reward: RewardConfig | None = None) -> float:
    rng = np.random.default_rng(seed)
    env = DialogEnv(schema, reward=reward)
    policy = RulePolicy(schema)
    wins = 0
    for i in range(episodes):
        goal = sample_goal(schema, rng)
        rec = run_rule_episode(env, policy, goal, session_id=f"q{i}")
        wins += int(rec.success)
    return wins / episodes
