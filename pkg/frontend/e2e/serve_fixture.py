"""Stand up a real evaluation service for the browser e2e test.

Builds a small checkpoint, precomputes the offline greedy rollout for the
exact goal the seeded service will assign to its first session, writes it to
<workdir>/rollout.json, then serves on the given port.

Usage: python3 serve_fixture.py <workdir> <port>
"""

import json
import sys
from pathlib import Path

import numpy as np
import uvicorn

from dialoq.checkpoint import checkpoint_save
from dialoq.corpusgen import generate_corpus
from dialoq.dqn import DialogAgentEnv, NeuralQ
from dialoq.encoder import EncoderConfig, EncoderParams
from dialoq.experiments import vocab_catalog_meta
from dialoq.runtime import tune_runtime
from dialoq.schema import load_fixture, sample_goal
from dialoq.service import create_app
from dialoq.simulator import DialogEnv
from dialoq.vocab import build_vocab_and_catalog

SERVICE_SEED = 20
PARAM_SEED = 3
STATE_TOKENS = 48


def main() -> None:
    tune_runtime()
    workdir = Path(sys.argv[1])
    port = int(sys.argv[2])
    workdir.mkdir(parents=True, exist_ok=True)

    schema = load_fixture("main")
    corpus = generate_corpus(schema, 300, seed=42)
    vocab, catalog = build_vocab_and_catalog(corpus, 64)
    cfg = EncoderConfig(vocab_size=len(vocab), d_model=16, n_heads=2, n_layers=1,
                        d_ff=24, max_seq_len=64, n_actions=len(catalog),
                        db_vec_dim=schema.db_vec_dim)
    params = EncoderParams.init(cfg, seed=PARAM_SEED, scale=0.2)
    ckpt_dir = workdir / "checkpoints"
    ckpt_dir.mkdir(exist_ok=True)
    checkpoint_save(params, ckpt_dir / "agent.ckpt",
                    vocab_catalog_meta(vocab, catalog, STATE_TOKENS))

    # mirror the store's rng consumption for the first created session:
    # one draw to pick the checkpoint, then the goal sample
    rng = np.random.default_rng(SERVICE_SEED)
    rng.integers(1)
    goal = sample_goal(schema, rng)

    q = NeuralQ(params)
    adapter = DialogAgentEnv(DialogEnv(schema), vocab, catalog,
                             state_max_tokens=STATE_TOKENS)
    state = adapter.reset(goal)
    user_turns = [[a.to_dict() for a in adapter.history]]
    agent_acts = []
    done = False
    while not done and len(agent_acts) < 12:
        action = int(np.argmax(q.q_values(state)))
        agent_acts.append(catalog.act(action).to_dict())
        prev = len(adapter.history)
        state, _, done, _ = adapter.step(action)
        user_turns.append([a.to_dict() for a in adapter.history[prev + 1:]])

    (workdir / "rollout.json").write_text(json.dumps({
        "goal": goal.to_dict(),
        "user_turns": user_turns,
        "agent_acts": agent_acts,
    }, indent=1))

    app = create_app(ckpt_dir, workdir / "store", seed=SERVICE_SEED,
                     ui_dir=Path(__file__).resolve().parents[1] / "dist")
    print(f"E2E_READY port={port}", flush=True)
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="error")


if __name__ == "__main__":
    main()
