"""Experiment shapes: main learning-curve comparison, fine-tuning corpus
ablation, and two-phase domain adaptation.

Every variant within an experiment shares the training-goal stream and the
evaluation goal set of its seed, so curve differences are attributable to
the agent. Results are written as re-parseable CSV plus a banded plot and a
reproducibility manifest.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .checkpoint import checkpoint_save
from .corpusgen import generate_corpus
from .dqn import (DialogAgentEnv, NeuralQ, ReplayBuffer, TrainConfig, TrainLog,
                  evaluate, pretrain_on_returns, train, warm_start)
from .encoder import EncoderConfig, EncoderParams
from .masked_act import FinetuneConfig, finetune, shuffle_session_acts
from .optim import AdamState
from .runtime import tune_runtime
from .schema import Schema, load_fixture, sample_goal
from .simulator import DialogEnv, RulePolicy
from .vocab import ActionCatalog, TokenVocab, build_vocab_and_catalog

VARIANTS = ("no_pretrain", "finetuned", "shuffled", "finetuned_alt")


@dataclass
class ExperimentSpec:
    kind: str  # "main" | "corpus_ablation" | "domain_adaptation"
    variants: list[str] = field(default_factory=lambda: ["finetuned", "no_pretrain"])
    seeds: list[int] = field(default_factory=lambda: [1, 2, 3])
    budget: int = 300
    corpus_sessions: int = 10_000
    corpus_seed: int = 101
    k_max: int = 64
    finetune_epochs: int = 6
    finetune_seed: int = 5
    heldout_domain: str = "restaurant"
    phase1_budget: int = 250
    phase2_budget: int = 300
    encoder: dict = field(default_factory=dict)  # EncoderConfig overrides
    train: dict = field(default_factory=dict)    # TrainConfig overrides

    def __post_init__(self):
        if self.kind not in ("main", "corpus_ablation", "domain_adaptation"):
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        unknown = set(self.variants) - set(VARIANTS)
        if unknown:
            raise ValueError(f"unknown variants: {sorted(unknown)}")
        if self.kind in ("main", "corpus_ablation") and len(self.variants) < 2:
            raise ValueError("comparison experiments need at least 2 variants")
        if len(self.seeds) < 3:
            raise ValueError("at least 3 seeds are required")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        return cls(**d)

    def train_config(self, seed: int, max_episodes: int | None = None) -> TrainConfig:
        cfg = dict(self.train)
        cfg["seed"] = seed
        cfg["max_episodes"] = self.budget if max_episodes is None else max_episodes
        return TrainConfig.from_dict(cfg)


@dataclass
class RunMetrics:
    variant: str
    seed: int
    log: TrainLog
    phase1_log: TrainLog | None = None

    def final_success(self) -> float:
        return self.log.final_success()

    def cumulative_turn_reward(self, upto_episode: int) -> tuple[float, float]:
        eps = [e for e in self.log.episodes if e.episode < upto_episode]
        if not eps:
            return 0.0, 0.0
        return (float(np.mean([e.turns for e in eps])),
                float(np.mean([e.reward for e in eps])))


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    runs: list[RunMetrics]

    def by_variant(self) -> dict[str, dict[int, RunMetrics]]:
        out: dict[str, dict[int, RunMetrics]] = {}
        for r in self.runs:
            out.setdefault(r.variant, {})[r.seed] = r
        return out


def goal_provider(schema: Schema, seed: int, tag: int,
                  allowed_domains: list[str] | None = None):
    def fn(i: int):
        rng = np.random.default_rng([seed, tag, abs(int(i))])
        return sample_goal(schema, rng, allowed_domains=allowed_domains)
    return fn


def make_eval_goals(schema: Schema, seed: int, n: int,
                    allowed_domains: list[str] | None = None) -> list:
    fn = goal_provider(schema, seed, 0xE7A1, allowed_domains)
    return [fn(j) for j in range(n)]


class ExperimentContext:
    """Shared artifacts: corpus, vocabulary, catalog, per-variant initial params."""

    def __init__(self, spec: ExperimentSpec):
        tune_runtime()
        self.spec = spec
        self.schema = load_fixture("main")
        self.alt_schema = load_fixture("alt")
        self.corpus = generate_corpus(self.schema, spec.corpus_sessions,
                                      seed=spec.corpus_seed)
        self.vocab, self.catalog = build_vocab_and_catalog(self.corpus, spec.k_max)
        enc = dict(spec.encoder)
        enc.setdefault("vocab_size", len(self.vocab))
        enc.setdefault("n_actions", len(self.catalog))
        enc.setdefault("db_vec_dim", self.schema.db_vec_dim)
        self.encoder_config = EncoderConfig(**enc)
        self._inits: dict[str, EncoderParams] = {}

    def _finetune_corpus(self, variant: str):
        if variant == "finetuned":
            return self.corpus
        if variant == "shuffled":
            rng = np.random.default_rng([self.spec.finetune_seed, 0x5F0F])
            return [shuffle_session_acts(s, rng) for s in self.corpus]
        if variant == "finetuned_alt":
            return generate_corpus(self.alt_schema, self.spec.corpus_sessions,
                                   seed=self.spec.corpus_seed)
        raise ValueError(variant)

    def initial_params(self, variant: str) -> EncoderParams:
        """Fresh copy of the variant's starting parameters (fine-tuned once,
        then shared across seeds, mirroring a single pretraining run)."""
        if variant not in self._inits:
            params = EncoderParams.init(self.encoder_config,
                                        seed=self.spec.finetune_seed)
            if variant != "no_pretrain":
                cfg = FinetuneConfig(
                    epochs=self.spec.finetune_epochs,
                    seed=self.spec.finetune_seed,
                    max_seq_len=self.encoder_config.max_seq_len,
                )
                finetune(params, self._finetune_corpus(variant), self.vocab, cfg)
            self._inits[variant] = params
        return self._inits[variant].copy()

    def make_adapter(self) -> DialogAgentEnv:
        train_cfg = TrainConfig.from_dict(dict(self.spec.train))
        return DialogAgentEnv(DialogEnv(self.schema), self.vocab, self.catalog,
                              state_max_tokens=train_cfg.state_max_tokens)


def run_variant(ctx: ExperimentContext, variant: str, seed: int,
                allowed_domains: list[str] | None = None,
                budget: int | None = None,
                q: NeuralQ | None = None,
                buffer: ReplayBuffer | None = None,
                eval_domains: list[str] | None = None,
                do_warm_start: bool = True) -> tuple[RunMetrics, NeuralQ, ReplayBuffer]:
    spec = ctx.spec
    config = ctx.spec.train_config(seed, max_episodes=budget)
    adapter = ctx.make_adapter()
    if q is None:
        q = NeuralQ(ctx.initial_params(variant), lr=config.lr)
    if buffer is None:
        buffer = ReplayBuffer(config.buffer_capacity, seed=config.seed)
    if do_warm_start and config.warm_start_episodes > 0:
        goals_fn = goal_provider(ctx.schema, seed, 0x3A12, allowed_domains)
        goals = [goals_fn(i) for i in range(config.warm_start_episodes)]
        samples = warm_start(adapter, RulePolicy(ctx.schema), goals, buffer,
                             gamma=config.gamma)
        pretrain_on_returns(q, samples, config, config.warm_updates)
        q.sync_target()
    eval_goals = make_eval_goals(ctx.schema, seed, config.eval_episodes,
                                 eval_domains or allowed_domains)
    if config.max_episodes == 0:
        from .dqn import EvalPoint
        sr, turns, reward = evaluate(q, ctx.make_adapter(), eval_goals)
        log = TrainLog(eval_points=[
            EvalPoint(0, sr, turns, reward, config.epsilon_at(0), 0.0)])
    else:
        log = train(
            q, adapter, goal_provider(ctx.schema, seed, 0x60A1, allowed_domains),
            config, buffer=buffer, eval_env=ctx.make_adapter(), eval_goals=eval_goals,
        )
    return RunMetrics(variant, seed, log), q, buffer


def run_main(spec: ExperimentSpec, out_dir=None,
             ctx: ExperimentContext | None = None) -> ExperimentResult:
    ctx = ctx or ExperimentContext(spec)
    runs = []
    checkpoints = {}
    for variant in spec.variants:
        for seed in spec.seeds:
            metrics, q, _ = run_variant(ctx, variant, seed)
            runs.append(metrics)
            checkpoints[(variant, seed)] = q.params
    result = ExperimentResult(spec, runs)
    if out_dir is not None:
        emit_curves(result, out_dir)
        _save_checkpoints(ctx, checkpoints, out_dir)
    return result


def run_corpus_ablation(spec: ExperimentSpec, out_dir=None,
                        ctx: ExperimentContext | None = None) -> ExperimentResult:
    return run_main(spec, out_dir=out_dir, ctx=ctx)


def run_domain_adaptation(spec: ExperimentSpec, out_dir=None,
                          ctx: ExperimentContext | None = None) -> ExperimentResult:
    ctx = ctx or ExperimentContext(spec)
    if spec.heldout_domain not in ctx.schema.by_name:
        raise ValueError(f"held-out domain {spec.heldout_domain!r} not in schema")
    phase1_domains = [d.name for d in ctx.schema.domains
                      if d.name != spec.heldout_domain]
    runs = []
    checkpoints = {}
    for variant in spec.variants:
        for seed in spec.seeds:
            phase1, q, buffer = run_variant(
                ctx, variant, seed,
                allowed_domains=phase1_domains, budget=spec.phase1_budget)
            phase2, q, _ = run_variant(
                ctx, variant, seed,
                allowed_domains=[spec.heldout_domain],
                budget=spec.phase2_budget,
                q=q, buffer=buffer, do_warm_start=False)
            phase2.phase1_log = phase1.log
            runs.append(phase2)
            checkpoints[(variant, seed)] = q.params
    result = ExperimentResult(spec, runs)
    if out_dir is not None:
        emit_curves(result, out_dir)
        _save_checkpoints(ctx, checkpoints, out_dir)
    return result


def run_experiment(spec: ExperimentSpec, out_dir=None) -> ExperimentResult:
    if spec.kind == "domain_adaptation":
        return run_domain_adaptation(spec, out_dir)
    return run_main(spec, out_dir)


def episodes_to_success(metrics: RunMetrics, threshold: float) -> float:
    """First evaluation episode whose success rate reaches the threshold;
    inf when never reached."""
    for p in metrics.log.eval_points:
        if p.success_rate >= threshold:
            return float(p.episode)
    return float("inf")


# -- emission ---------------------------------------------------------------

CURVE_COLUMNS = ["experiment", "variant", "seed", "episode", "success_rate",
                 "avg_turns_window", "avg_reward_window",
                 "avg_turns_cum", "avg_reward_cum", "epsilon", "td_loss_mean"]


def emit_curves(result: ExperimentResult, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "curves.csv"
    with open(csv_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(CURVE_COLUMNS)
        for r in result.runs:
            for p in r.log.eval_points:
                turns_c, reward_c = r.cumulative_turn_reward(p.episode)
                w.writerow([
                    result.spec.kind, r.variant, r.seed, p.episode,
                    repr(p.success_rate), repr(p.avg_turns), repr(p.avg_reward),
                    repr(turns_c), repr(reward_c), repr(p.epsilon),
                    repr(p.td_loss_mean),
                ])
    plot_path = out / "curves.png"
    plot_curves(result, plot_path)
    manifest_path = out / "manifest.json"
    manifest = {
        "spec": result.spec.to_dict(),
        "seeds": result.spec.seeds,
        "fixture_hashes": fixture_hashes(),
        "final_success": {
            f"{r.variant}/seed{r.seed}": r.final_success() for r in result.runs
        },
    }
    manifest_path.write_text(json.dumps(manifest, indent=1), encoding="utf-8")
    return {"csv": csv_path, "plot": plot_path, "manifest": manifest_path}


def fixture_hashes() -> dict[str, str]:
    out = {}
    for name in ("main", "alt"):
        blob = json.dumps(load_fixture(name).to_dict(), sort_keys=True).encode()
        out[name] = hashlib.sha256(blob).hexdigest()
    return out


def plot_curves(result: ExperimentResult, path) -> dict[str, tuple[list, list]]:
    """Render mean curves with min/max bands; returns the plotted
    {variant: (episodes, means)} so emitted data can be cross-checked."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plotted = {}
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for variant, by_seed in sorted(result.by_variant().items()):
        seeds = sorted(by_seed)
        episodes = [p.episode for p in by_seed[seeds[0]].log.eval_points]
        curves = np.array([
            [p.success_rate for p in by_seed[s].log.eval_points] for s in seeds
        ])
        mean = curves.mean(axis=0)
        ax.plot(episodes, mean, label=variant, linewidth=2)
        ax.fill_between(episodes, curves.min(axis=0), curves.max(axis=0), alpha=0.2)
        plotted[variant] = (episodes, mean.tolist())
    ax.set_xlabel("training episodes")
    ax.set_ylabel("success rate")
    ax.set_ylim(-0.02, 1.02)
    ax.set_title(result.spec.kind)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return plotted


def load_curves(csv_path) -> list[dict]:
    rows = []
    with open(csv_path, newline="") as f:
        for row in csv.DictReader(f):
            for key in CURVE_COLUMNS[3:]:
                row[key] = float(row[key])
            row["seed"] = int(row["seed"])
            rows.append(row)
    return rows


def _save_checkpoints(ctx: ExperimentContext, checkpoints: dict, out_dir) -> None:
    ckpt_dir = Path(out_dir) / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    state_tokens = ctx.spec.train_config(0).state_max_tokens
    for (variant, seed), params in checkpoints.items():
        meta = vocab_catalog_meta(ctx.vocab, ctx.catalog, state_tokens)
        checkpoint_save(params, ckpt_dir / f"{variant}_seed{seed}.ckpt", meta)


def vocab_catalog_meta(vocab: TokenVocab, catalog: ActionCatalog,
                       state_max_tokens: int = 48) -> dict:
    """Checkpoint self-description: token list, catalog entries, and the state
    truncation the policy was trained with."""
    return {
        "vocab": {"tokens": vocab.tokens(), "hash": vocab.content_hash()},
        "catalog": {"actions": [a.to_dict() for a in catalog.entries]},
        "policy": {"state_max_tokens": state_max_tokens},
    }
