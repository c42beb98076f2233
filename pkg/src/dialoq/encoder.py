"""Transformer encoder over dialog-act token sequences, with two output heads.

The pooled summary of a sequence is the first hidden state fused with the
database match vector; the action head maps it to one value per catalog
action, the token head maps per-token states to vocabulary logits.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from . import tensor as T
from .tensor import Tensor


@dataclass
class EncoderConfig:
    vocab_size: int
    d_model: int = 128
    n_heads: int = 4
    n_layers: int = 2
    d_ff: int = 256
    max_seq_len: int = 128
    n_actions: int = 64
    db_vec_dim: int = 24

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}"
            )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        return cls(**d)


class EncoderParams:
    """All learnable tensors, in a fixed named order (the checkpoint manifest order)."""

    def __init__(self, config: EncoderConfig, tensors: dict[str, Tensor]):
        self.config = config
        self._tensors = tensors
        for name, t in tensors.items():
            t.requires_grad = True
            t.name = name

    @classmethod
    def init(cls, config: EncoderConfig, seed: int = 0, scale: float = 0.02,
             dtype=np.float32) -> "EncoderParams":
        rng = np.random.default_rng(seed)
        c = config

        def randn(*shape):
            return Tensor(rng.normal(0.0, scale, size=shape).astype(dtype))

        def zeros(*shape):
            return Tensor(np.zeros(shape, dtype=dtype))

        def ones(*shape):
            return Tensor(np.ones(shape, dtype=dtype))

        t: dict[str, Tensor] = {}
        t["tok_emb"] = randn(c.vocab_size, c.d_model)
        t["pos_emb"] = randn(c.max_seq_len, c.d_model)
        t["emb_ln_g"] = ones(c.d_model)
        t["emb_ln_b"] = zeros(c.d_model)
        for i in range(c.n_layers):
            p = f"layer{i}."
            for proj in ("wq", "wk", "wv", "wo"):
                t[p + proj] = randn(c.d_model, c.d_model)
                t[p + proj[1] + "b"] = zeros(c.d_model)
            t[p + "ln1_g"] = ones(c.d_model)
            t[p + "ln1_b"] = zeros(c.d_model)
            t[p + "w1"] = randn(c.d_model, c.d_ff)
            t[p + "b1"] = zeros(c.d_ff)
            t[p + "w2"] = randn(c.d_ff, c.d_model)
            t[p + "b2"] = zeros(c.d_model)
            t[p + "ln2_g"] = ones(c.d_model)
            t[p + "ln2_b"] = zeros(c.d_model)
        t["db_w"] = randn(c.d_model + c.db_vec_dim, c.d_model)
        t["db_b"] = zeros(c.d_model)
        # action values start at exactly zero: random head columns would leak
        # large spurious values into bootstrapped TD maxima once the value
        # scale grows, drowning the action ordering
        t["act_w"] = zeros(c.d_model, c.n_actions)
        t["act_b"] = zeros(c.n_actions)
        t["tok_w"] = randn(c.d_model, c.vocab_size)
        t["tok_b"] = zeros(c.vocab_size)
        return cls(config, t)

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def names(self) -> list[str]:
        return list(self._tensors.keys())

    def items(self):
        return self._tensors.items()

    def zero_grad(self):
        for t in self._tensors.values():
            t.zero_grad()

    def copy(self) -> "EncoderParams":
        tensors = {k: Tensor(v.data.copy()) for k, v in self._tensors.items()}
        return EncoderParams(self.config, tensors)

    def astype(self, dtype) -> "EncoderParams":
        tensors = {k: Tensor(v.data.astype(dtype)) for k, v in self._tensors.items()}
        return EncoderParams(self.config, tensors)

    def allclose(self, other: "EncoderParams", atol: float = 0.0) -> bool:
        return all(
            np.allclose(v.data, other._tensors[k].data, atol=atol, rtol=0.0)
            for k, v in self._tensors.items()
        )


NEG_INF = -1e9


def _attention_mask(pad_mask: np.ndarray, dtype) -> np.ndarray:
    # pad_mask: (B, n) with 1 for real tokens. Additive mask broadcast over
    # heads and query positions: (B, 1, 1, n).
    add = np.where(pad_mask > 0, 0.0, NEG_INF).astype(dtype)
    return add[:, None, None, :]


def encoder_forward_batch(params: EncoderParams, token_ids: np.ndarray,
                          db_vecs: np.ndarray, pad_mask: np.ndarray | None = None
                          ) -> tuple[Tensor, Tensor]:
    """Forward a padded batch: (B, n) ids + (B, db_dim) vectors -> (pooled, per_token).

    pad_mask marks real tokens with 1; defaults to everything real.
    """
    c = params.config
    ids = np.asarray(token_ids)
    if ids.ndim != 2:
        raise ValueError("token_ids must be (batch, seq)")
    B, n = ids.shape
    if n > c.max_seq_len:
        raise ValueError(f"sequence length {n} exceeds max_seq_len {c.max_seq_len}")
    if n == 0:
        raise ValueError("empty sequence")
    if ids.min() < 0 or ids.max() >= c.vocab_size:
        raise ValueError("token id out of vocabulary range")
    db = np.asarray(db_vecs)
    if db.shape != (B, c.db_vec_dim):
        raise ValueError(f"db_vec shape {db.shape} != ({B}, {c.db_vec_dim})")
    if pad_mask is None:
        pad_mask = np.ones((B, n), dtype=np.int8)

    dtype = params["tok_emb"].dtype
    dh = c.d_model // c.n_heads
    inv_sqrt_dh = 1.0 / np.sqrt(dh)

    x = T.embedding(params["tok_emb"], ids)
    pos = T.embedding(params["pos_emb"], np.broadcast_to(np.arange(n), (B, n)))
    x = T.add(x, pos)
    x = T.layer_norm(x, params["emb_ln_g"], params["emb_ln_b"])
    attn_add = _attention_mask(pad_mask, dtype)

    for i in range(c.n_layers):
        p = f"layer{i}."
        # scaling q by 1/sqrt(dh) scales the scores identically, more cheaply
        q = T.scale(T.add(T.matmul(x, params[p + "wq"]), params[p + "qb"]), inv_sqrt_dh)
        k = T.add(T.matmul(x, params[p + "wk"]), params[p + "kb"])
        v = T.add(T.matmul(x, params[p + "wv"]), params[p + "vb"])
        # (B, n, d) -> (B, h, n, dh)
        q = T.transpose(T.reshape(q, (B, n, c.n_heads, dh)), (0, 2, 1, 3))
        k = T.transpose(T.reshape(k, (B, n, c.n_heads, dh)), (0, 2, 1, 3))
        v = T.transpose(T.reshape(v, (B, n, c.n_heads, dh)), (0, 2, 1, 3))
        scores = T.matmul(q, T.transpose(k, (0, 1, 3, 2)))
        attn = T.softmax_lastdim(scores, additive_mask=attn_add)
        ctx = T.matmul(attn, v)
        ctx = T.reshape(T.transpose(ctx, (0, 2, 1, 3)), (B, n, c.d_model))
        ctx = T.add(T.matmul(ctx, params[p + "wo"]), params[p + "ob"])
        x = T.layer_norm(T.add(x, ctx), params[p + "ln1_g"], params[p + "ln1_b"])
        h = T.gelu(T.add(T.matmul(x, params[p + "w1"]), params[p + "b1"]))
        h = T.add(T.matmul(h, params[p + "w2"]), params[p + "b2"])
        x = T.layer_norm(T.add(x, h), params[p + "ln2_g"], params[p + "ln2_b"])

    t0 = T.select_token(x, 0)
    fused = T.concat_last(t0, Tensor(db.astype(dtype)))
    pooled = T.add(T.matmul(fused, params["db_w"]), params["db_b"])
    return pooled, x


def encoder_forward(params: EncoderParams, token_ids, db_vec) -> tuple[Tensor, Tensor]:
    """Single-sequence forward: ids + db vector -> (pooled (d,), per_token (n, d))."""
    ids = np.asarray(token_ids)
    if ids.ndim != 1:
        raise ValueError("token_ids must be a flat id sequence")
    db = np.asarray(db_vec, dtype=params["tok_emb"].dtype)
    pooled, per_token = encoder_forward_batch(params, ids[None, :], db[None, :])
    n = ids.shape[0]
    return (
        T.reshape(pooled, (params.config.d_model,)),
        T.reshape(per_token, (n, params.config.d_model)),
    )


def q_head(params: EncoderParams, pooled: Tensor) -> Tensor:
    """Action values: one scalar per catalog action, linear in pooled."""
    c = params.config
    if pooled.shape[-1] != c.d_model:
        raise ValueError(f"pooled dim {pooled.shape[-1]} != d_model {c.d_model}")
    return T.add(T.matmul(pooled, params["act_w"]), params["act_b"])


def token_head(params: EncoderParams, per_token: Tensor, positions) -> Tensor:
    """Vocabulary logits at the given positions of a (n, d) per-token tensor."""
    positions = np.asarray(positions, dtype=np.int64)
    n = per_token.shape[0]
    if positions.size and (positions.min() < 0 or positions.max() >= n):
        raise ValueError("position out of range")
    rows = T.take_rows(per_token, positions)
    return T.add(T.matmul(rows, params["tok_w"]), params["tok_b"])
