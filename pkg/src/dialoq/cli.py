"""Command-line entry points.

Commands: gen-corpus, finetune, train, experiment, gradcheck, serve.
Failures exit nonzero with a machine-readable {"error", "message"} JSON line
on stderr.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from .runtime import tune_runtime


def _load_json(path) -> dict:
    if path is None:
        return {}
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _load_schema(name_or_path: str):
    from .schema import Schema, load_fixture

    if name_or_path in ("main", "alt"):
        return load_fixture(name_or_path)
    return Schema.load(name_or_path)


@click.group()
def cli():
    """Dialog policy learning toolkit: corpus generation, fine-tuning,
    Q-learning, experiments, and the human-evaluation service."""


@cli.command("gen-corpus")
@click.option("--schema", "schema_name", default="main", show_default=True,
              help="'main', 'alt', or a schema JSON path.")
@click.option("--sessions", default=10000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--success-only", is_flag=True, default=False)
def gen_corpus_cmd(schema_name, sessions, seed, out_path, success_only):
    """Roll out the rule-based expert against the simulator into a JSONL corpus."""
    from .corpusgen import generate_corpus
    from .sessions import save_corpus

    schema = _load_schema(schema_name)
    corpus = generate_corpus(schema, sessions, seed=seed, success_only=success_only)
    n = save_corpus(corpus, out_path)
    click.echo(f"wrote {n} sessions to {out_path}")


@cli.command("finetune")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--seed", default=None, type=int, help="Overrides the config seed.")
@click.option("--out", "out_dir", required=True, type=click.Path())
def finetune_cmd(corpus_path, config_path, seed, out_dir):
    """Fine-tune a fresh encoder on a corpus with the masked last-act task."""
    tune_runtime()
    from .checkpoint import checkpoint_save
    from .encoder import EncoderConfig, EncoderParams
    from .experiments import vocab_catalog_meta
    from .masked_act import FinetuneConfig, finetune
    from .sessions import load_corpus
    from .vocab import build_vocab_and_catalog

    cfg = _load_json(config_path)
    encoder_overrides = cfg.pop("encoder", {})
    k_max = cfg.pop("k_max", 64)
    ft = FinetuneConfig(**cfg)
    if seed is not None:
        ft.seed = seed
    corpus = load_corpus(corpus_path)
    vocab, catalog = build_vocab_and_catalog(corpus, k_max)
    encoder_overrides.setdefault("vocab_size", len(vocab))
    encoder_overrides.setdefault("n_actions", len(catalog))
    enc = EncoderConfig(**encoder_overrides)
    if ft.max_seq_len is None:
        ft.max_seq_len = enc.max_seq_len
    params = EncoderParams.init(enc, seed=ft.seed)
    result = finetune(params, corpus, vocab, ft)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    checkpoint_save(params, out / "finetuned.ckpt", vocab_catalog_meta(vocab, catalog))
    with open(out / "finetune_metrics.csv", "w") as f:
        f.write("epoch,train_loss,train_loss_per_token,"
                "heldout_loss_per_token,heldout_accuracy,unknown_tokens\n")
        for m in result.metrics:
            f.write(f"{m.epoch},{m.train_loss!r},{m.train_loss_per_token!r},"
                    f"{'' if m.heldout_loss_per_token is None else repr(m.heldout_loss_per_token)},"
                    f"{'' if m.heldout_accuracy is None else repr(m.heldout_accuracy)},"
                    f"{m.unknown_token_count}\n")
    last = result.metrics[-1]
    click.echo(f"final train loss/token {last.train_loss_per_token:.4f} "
               f"heldout {last.heldout_loss_per_token}")


@cli.command("train")
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--checkpoint", "checkpoint_path", type=click.Path(exists=True),
              help="Initial parameters (e.g. a fine-tuned encoder).")
@click.option("--corpus", "corpus_path", type=click.Path(exists=True),
              help="Used to build vocab/catalog when no checkpoint is given.")
@click.option("--schema", "schema_name", default="main", show_default=True)
@click.option("--seed", default=None, type=int)
@click.option("--out", "out_dir", required=True, type=click.Path())
def train_cmd(config_path, checkpoint_path, corpus_path, schema_name, seed, out_dir):
    """Optimize a dialog policy with deep Q-learning against the simulator."""
    tune_runtime()
    from .checkpoint import checkpoint_load, checkpoint_save
    from .dqn import (DialogAgentEnv, NeuralQ, ReplayBuffer, TrainConfig,
                      pretrain_on_returns, train, warm_start)
    from .encoder import EncoderConfig, EncoderParams
    from .experiments import goal_provider, make_eval_goals, vocab_catalog_meta
    from .sessions import load_corpus
    from .simulator import DialogEnv, RulePolicy
    from .vocab import ActionCatalog, DialogAct, TokenVocab, build_vocab_and_catalog

    cfg = _load_json(config_path)
    encoder_overrides = cfg.pop("encoder", {})
    k_max = cfg.pop("k_max", 64)
    config = TrainConfig.from_dict(cfg)
    if seed is not None:
        config.seed = seed
    schema = _load_schema(schema_name)
    if checkpoint_path:
        params, enc, meta = checkpoint_load(checkpoint_path)
        vocab = TokenVocab(meta["vocab"]["tokens"])
        catalog = ActionCatalog(
            [DialogAct.from_dict(a) for a in meta["catalog"]["actions"]])
    elif corpus_path:
        corpus = load_corpus(corpus_path)
        vocab, catalog = build_vocab_and_catalog(corpus, k_max)
        encoder_overrides.setdefault("vocab_size", len(vocab))
        encoder_overrides.setdefault("n_actions", len(catalog))
        encoder_overrides.setdefault("db_vec_dim", schema.db_vec_dim)
        enc = EncoderConfig(**encoder_overrides)
        params = EncoderParams.init(enc, seed=config.seed)
    else:
        raise click.UsageError("provide --checkpoint or --corpus")

    q = NeuralQ(params, lr=config.lr)
    adapter = DialogAgentEnv(DialogEnv(schema), vocab, catalog,
                             config.state_max_tokens)
    buffer = ReplayBuffer(config.buffer_capacity, seed=config.seed)
    if config.warm_start_episodes > 0:
        goals_fn = goal_provider(schema, config.seed, 0x3A12)
        goals = [goals_fn(i) for i in range(config.warm_start_episodes)]
        samples = warm_start(adapter, RulePolicy(schema), goals, buffer,
                             gamma=config.gamma)
        pretrain_on_returns(q, samples, config, config.warm_updates)
        q.sync_target()
    log = train(
        q, adapter, goal_provider(schema, config.seed, 0x60A1), config,
        buffer=buffer,
        eval_env=DialogAgentEnv(DialogEnv(schema), vocab, catalog,
                                config.state_max_tokens),
        eval_goals=make_eval_goals(schema, config.seed, config.eval_episodes),
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    log.to_csv(out / "train_log.csv")
    checkpoint_save(q.params, out / "final.ckpt",
                    vocab_catalog_meta(vocab, catalog, config.state_max_tokens))
    click.echo(f"final eval success rate: {log.final_success():.3f}")


@cli.command("experiment")
@click.argument("kind", type=click.Choice(["main", "ablation", "adapt"]))
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
def experiment_cmd(kind, config_path, out_dir):
    """Run one of the experiment shapes and emit curves, plot, and manifest."""
    tune_runtime()
    from .experiments import (ExperimentSpec, run_domain_adaptation, run_main)

    cfg = _load_json(config_path)
    kind_map = {"main": "main", "ablation": "corpus_ablation",
                "adapt": "domain_adaptation"}
    cfg.setdefault("kind", kind_map[kind])
    if cfg["kind"] != kind_map[kind]:
        raise click.UsageError(
            f"config kind {cfg['kind']!r} does not match argument {kind!r}")
    if kind == "ablation" and "variants" not in cfg:
        cfg["variants"] = ["finetuned_alt", "no_pretrain"]
    spec = ExperimentSpec.from_dict(cfg)
    if spec.kind == "domain_adaptation":
        result = run_domain_adaptation(spec, out_dir)
    else:
        result = run_main(spec, out_dir)
    for r in result.runs:
        click.echo(f"{r.variant} seed={r.seed} final_success={r.final_success():.3f}")


@cli.command("gradcheck")
@click.option("--seed", default=0, show_default=True)
@click.option("--coords", default=32, show_default=True,
              help="Sampled coordinates per tensor.")
def gradcheck_cmd(seed, coords):
    """Verify analytic gradients of every parameter tensor against central
    finite differences on a combined token-head + action-head loss."""
    tune_runtime()
    from .gradcheck_encoder import run_encoder_gradcheck

    report = run_encoder_gradcheck(seed=seed, n_coords=coords)
    failed = [r for r in report if not r.passed]
    for r in report:
        status = "ok" if r.passed else "FAIL"
        click.echo(f"{status:4s} {r.name:16s} max_rel_err={r.max_rel_err:.3e} "
                   f"({r.n_checked} coords)")
    if failed:
        raise click.ClickException(f"{len(failed)} tensors failed the gradient check")
    click.echo(f"all {len(report)} tensors passed")


@cli.command("serve")
@click.option("--bind", default="127.0.0.1", show_default=True)
@click.option("--port", default=8080, show_default=True)
@click.option("--checkpoints", "checkpoint_dir", required=True,
              type=click.Path(exists=True))
@click.option("--schema", "schema_name", default="main", show_default=True)
@click.option("--store", "store_dir", default="eval_store", show_default=True)
@click.option("--ui", "ui_dir", type=click.Path(), default=None,
              help="Static directory for the browser console.")
@click.option("--seed", default=0, show_default=True)
def serve_cmd(bind, port, checkpoint_dir, schema_name, store_dir, ui_dir, seed):
    """Serve trained policies for interactive human evaluation."""
    import uvicorn

    from .service import create_app

    app = create_app(checkpoint_dir, store_dir, schema=_load_schema(schema_name),
                     seed=seed, ui_dir=ui_dir)
    uvicorn.run(app, host=bind, port=port, log_level="warning")


def main():
    try:
        cli(standalone_mode=False)
    except click.ClickException as e:
        json.dump({"error": "usage", "message": e.format_message()}, sys.stderr)
        sys.stderr.write("\n")
        sys.exit(e.exit_code or 1)
    except click.Abort:
        sys.exit(130)
    except Exception as e:
        json.dump({"error": type(e).__name__, "message": str(e)}, sys.stderr)
        sys.stderr.write("\n")
        sys.exit(1)


if __name__ == "__main__":
    main()
