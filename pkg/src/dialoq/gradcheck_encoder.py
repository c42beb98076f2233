"""Finite-difference gradient verification across every encoder tensor.

The probe loss combines the masked-token cross-entropy with a squared error
on one action value, so gradients flow through the embeddings, attention,
layer norms, feed-forward stacks, the db-fusion layer, and both heads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .encoder import EncoderConfig, EncoderParams, encoder_forward_batch
from .gradcheck import check_tensor

PROBE_CONFIG = EncoderConfig(
    vocab_size=23, d_model=32, n_heads=4, n_layers=2, d_ff=48,
    max_seq_len=16, n_actions=9, db_vec_dim=8,
)


@dataclass
class TensorReport:
    name: str
    max_rel_err: float
    n_checked: int
    passed: bool


def probe_loss(params: EncoderParams, ids: np.ndarray, db: np.ndarray,
               positions: np.ndarray, labels: np.ndarray, action: int) -> T.Tensor:
    pooled, per_token = encoder_forward_batch(params, ids, db)
    n, d = ids.shape[1], params.config.d_model
    flat = T.reshape(per_token, (ids.shape[0] * n, d))
    hidden = T.take_rows(flat, positions)
    logits = T.add(T.matmul(hidden, params["tok_w"]), params["tok_b"])
    ce = T.cross_entropy_sum(logits, labels)
    q = T.add(T.matmul(pooled, params["act_w"]), params["act_b"])
    qa = T.take_per_row(q, np.array([action]))
    return T.add(ce, T.sum_all(T.square(T.sub(qa, T.Tensor(np.array([0.5], dtype=qa.dtype))))))


def run_encoder_gradcheck(seed: int = 0, n_coords: int = 32,
                          rel_tol: float = 1e-2) -> list[TensorReport]:
    rng = np.random.default_rng(seed)
    c = PROBE_CONFIG
    params = EncoderParams.init(c, seed=seed, scale=0.3, dtype=np.float64)
    # the action head initializes to zeros for RL; give it random values here
    # so its gradients are exercised off the trivial point
    params["act_w"].data[:] = rng.normal(0.0, 0.3, size=params["act_w"].shape)
    params["act_b"].data[:] = rng.normal(0.0, 0.3, size=params["act_b"].shape)
    n = 10
    ids = rng.integers(0, c.vocab_size, size=(1, n))
    db = rng.normal(size=(1, c.db_vec_dim))
    positions = np.array([4, 5, 6, 7])
    labels = rng.integers(0, c.vocab_size, size=len(positions))
    action = 3

    def loss_fn() -> float:
        with T.no_grad():
            return float(probe_loss(params, ids, db, positions, labels, action).data)

    params.zero_grad()
    loss = probe_loss(params, ids, db, positions, labels, action)
    loss.backward()

    report = []
    for name, tensor in params.items():
        worst, checked = check_tensor(loss_fn, tensor, n_coords, rng)
        report.append(TensorReport(name, worst, checked, worst < rel_tol))
    return report
