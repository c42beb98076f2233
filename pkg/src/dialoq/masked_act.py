"""Masked last-act fine-tuning.

A session's acts are flattened in turn order, cut between two consecutive
acts, and the last act of the kept prefix is replaced token-for-token with
[MASK]; the model predicts all masked tokens in one forward pass and is
trained with cross-entropy averaged over sessions.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .encoder import EncoderParams, encoder_forward_batch
from .optim import AdamState, optimizer_step
from .sessions import DialogSession
from .tensor import Tensor, no_grad
from .vocab import TokenVocab


@dataclass
class MaskedActExample:
    input_ids: list[int]
    mask_positions: list[int]  # contiguous run just before the final [SEP]
    labels: list[int]
    meta: tuple[str, int]  # (session_id, cut_index)


@dataclass
class FinetuneConfig:
    epochs: int = 20
    batch_size: int = 8
    lr: float = 1e-4
    seed: int = 0
    mask_speaker: str = "both"  # "sys" | "usr" | "both"
    heldout_fraction: int = 10  # one session in N held out, by id hash
    heldout_max_examples: int = 4000
    max_seq_len: int | None = None
    stop_at_heldout_loss: float | None = None  # early stop once reached


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float  # per-session objective value
    train_loss_per_token: float
    heldout_loss_per_token: float | None
    heldout_accuracy: float | None
    unknown_token_count: int


def cut_and_mask(session: DialogSession, cut_index: int, vocab: TokenVocab,
                 max_len: int | None = None) -> MaskedActExample:
    """Keep the first cut_index acts and mask every token of the last one."""
    acts = session.flat_acts()
    if not 1 <= cut_index < len(acts):
        raise ValueError(
            f"cut_index {cut_index} out of range for {len(acts)} acts"
        )
    kept = acts[:cut_index]
    ids: list[int] = [vocab.cls_id]
    last_start = 0
    for act in kept:
        last_start = len(ids)
        ids.extend(vocab.id(t) for t in act.tokens())
        ids.append(vocab.sep_id)
    last_end = len(ids) - 1  # the [SEP] of the last act stays visible
    labels = ids[last_start:last_end]
    positions = list(range(last_start, last_end))
    for p in positions:
        ids[p] = vocab.mask_id
    if max_len is not None and len(ids) > max_len:
        drop = len(ids) - max_len
        # drop whole oldest acts (never the [CLS], never the masked act)
        cut_at = 1
        while cut_at < drop + 1:
            end = ids.index(vocab.sep_id, cut_at)
            cut_at = end + 1
        if cut_at > positions[0]:
            raise ValueError("example cannot fit within max_len")
        ids = [vocab.cls_id] + ids[cut_at:]
        shift = cut_at - 1
        positions = [p - shift for p in positions]
    return MaskedActExample(ids, positions, labels, (session.session_id, cut_index))


def valid_cut_indices(session: DialogSession, mask_speaker: str = "both") -> list[int]:
    """Cut points whose masked act belongs to the configured speaker."""
    flat = session.flat_acts_with_speaker()
    cuts = []
    for cut in range(1, len(flat)):
        speaker = flat[cut - 1][0]
        if mask_speaker == "both" or speaker == mask_speaker:
            cuts.append(cut)
    return cuts


def masked_act_loss(params: EncoderParams, batch: list[MaskedActExample]) -> Tensor:
    """Cross-entropy over masked positions, summed per session, averaged over
    the batch. All positions are predicted from one forward pass."""
    if not batch:
        raise ValueError("empty batch")
    for ex in batch:
        if not ex.mask_positions:
            raise ValueError("example with zero masked positions")
    logits, labels = _masked_logits(params, batch)
    ce = T.cross_entropy_sum(logits, labels)
    return T.scale(ce, 1.0 / len(batch))


def _masked_logits(params: EncoderParams, batch: list[MaskedActExample]):
    """Batched forward returning (logits at all masked positions, flat labels)."""
    c = params.config
    B = len(batch)
    n = max(len(ex.input_ids) for ex in batch)
    ids = np.zeros((B, n), dtype=np.int64)  # 0 is [PAD]
    pad_mask = np.zeros((B, n), dtype=np.int8)
    for i, ex in enumerate(batch):
        ids[i, : len(ex.input_ids)] = ex.input_ids
        pad_mask[i, : len(ex.input_ids)] = 1
    db = np.zeros((B, c.db_vec_dim), dtype=params["tok_emb"].dtype)
    _, per_token = encoder_forward_batch(params, ids, db, pad_mask)
    flat = T.reshape(per_token, (B * n, c.d_model))
    rows = np.concatenate(
        [i * n + np.asarray(ex.mask_positions) for i, ex in enumerate(batch)]
    ).astype(np.int64)
    labels = np.concatenate([ex.labels for ex in batch]).astype(np.int64)
    hidden = T.take_rows(flat, rows)
    logits = T.add(T.matmul(hidden, params["tok_w"]), params["tok_b"])
    return logits, labels


def masked_accuracy(params: EncoderParams, examples: list[MaskedActExample],
                    batch_size: int = 64) -> float:
    """Fraction of masked positions where the argmax logit (lowest id on ties)
    equals the label."""
    if not examples:
        raise ValueError("no examples")
    hits = 0
    total = 0
    with no_grad():
        for start in range(0, len(examples), batch_size):
            chunk = examples[start:start + batch_size]
            logits, labels = _masked_logits(params, chunk)
            pred = logits.data.argmax(axis=-1)  # argmax takes the lowest index on ties
            hits += int((pred == labels).sum())
            total += len(labels)
    return hits / total


def heldout_loss_per_token(params: EncoderParams, examples: list[MaskedActExample],
                           batch_size: int = 64) -> float:
    total_nll = 0.0
    total_masks = 0
    with no_grad():
        for start in range(0, len(examples), batch_size):
            chunk = examples[start:start + batch_size]
            logits, labels = _masked_logits(params, chunk)
            total_nll += float(T.cross_entropy_sum(logits, labels).data)
            total_masks += len(labels)
    return total_nll / total_masks


def split_heldout(sessions: list[DialogSession], one_in: int = 10
                  ) -> tuple[list[DialogSession], list[DialogSession]]:
    """Deterministic 90/10 split by session-id hash."""
    train, heldout = [], []
    for s in sessions:
        digest = hashlib.sha1(s.session_id.encode("utf-8")).digest()
        (heldout if digest[0] % one_in == 0 else train).append(s)
    return train, heldout


def enumerate_heldout_examples(sessions, vocab, config: FinetuneConfig
                               ) -> list[MaskedActExample]:
    """Every valid cut of every held-out session, deterministically capped."""
    examples = []
    for s in sessions:
        for cut in valid_cut_indices(s, config.mask_speaker):
            examples.append(cut_and_mask(s, cut, vocab, config.max_seq_len))
    if len(examples) > config.heldout_max_examples:
        rng = np.random.default_rng(config.seed)
        keep = rng.choice(len(examples), size=config.heldout_max_examples,
                          replace=False)
        examples = [examples[i] for i in sorted(keep)]
    return examples


@dataclass
class FinetuneResult:
    metrics: list[EpochMetrics] = field(default_factory=list)


def finetune(params: EncoderParams, sessions: list[DialogSession],
             vocab: TokenVocab, config: FinetuneConfig,
             opt_state: AdamState | None = None) -> FinetuneResult:
    """Optimize the masked last-act objective in place; cuts are resampled
    uniformly every epoch. Deterministic for a given seed."""
    if not sessions:
        raise ValueError("empty corpus")
    train_sessions, heldout_sessions = split_heldout(sessions, config.heldout_fraction)
    if not train_sessions:  # degenerate corpora train on everything
        train_sessions, heldout_sessions = list(sessions), []
    usable = [s for s in train_sessions if valid_cut_indices(s, config.mask_speaker)]
    if not usable:
        raise ValueError("no session offers a valid cut point")
    heldout = enumerate_heldout_examples(heldout_sessions, vocab, config)
    if opt_state is None:
        opt_state = AdamState(params)
    rng = np.random.default_rng(config.seed)
    result = FinetuneResult()
    for epoch in range(config.epochs):
        order = rng.permutation(len(usable))
        examples = []
        unk_count = 0
        for idx in order:
            s = usable[idx]
            cuts = valid_cut_indices(s, config.mask_speaker)
            cut = cuts[rng.integers(len(cuts))]
            ex = cut_and_mask(s, cut, vocab, config.max_seq_len)
            unk_count += sum(1 for i in ex.input_ids if i == vocab.unk_id)
            unk_count += sum(1 for l in ex.labels if l == vocab.unk_id)
            examples.append(ex)
        nll_sum = 0.0  # batch loss is total NLL / batch size
        mask_count = 0
        for start in range(0, len(examples), config.batch_size):
            batch = examples[start:start + config.batch_size]
            params.zero_grad()
            loss = masked_act_loss(params, batch)
            loss.backward()
            optimizer_step(params, opt_state, config.lr)
            nll_sum += float(loss.data) * len(batch)
            mask_count += sum(len(b.labels) for b in batch)
        h_loss = heldout_loss_per_token(params, heldout) if heldout else None
        h_acc = masked_accuracy(params, heldout) if heldout else None
        result.metrics.append(EpochMetrics(
            epoch=epoch,
            train_loss=nll_sum / len(examples),
            train_loss_per_token=nll_sum / mask_count,
            heldout_loss_per_token=h_loss,
            heldout_accuracy=h_acc,
            unknown_token_count=unk_count,
        ))
        if (config.stop_at_heldout_loss is not None and h_loss is not None
                and h_loss < config.stop_at_heldout_loss):
            break
    return result


def shuffle_session_acts(session: DialogSession, rng: np.random.Generator
                         ) -> DialogSession:
    """Control corpus transform: permute the acts within a session while keeping
    the turn structure (sizes and speakers), destroying the policy logic."""
    from .sessions import Turn

    flat = session.flat_acts()
    perm = rng.permutation(len(flat))
    shuffled = [flat[i] for i in perm]
    turns = []
    k = 0
    for t in session.turns:
        turns.append(Turn(t.speaker, shuffled[k:k + len(t.acts)]))
        k += len(t.acts)
    return DialogSession(session.session_id, turns)
