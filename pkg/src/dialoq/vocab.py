"""Dialog acts, the token vocabulary, and the system action catalog.

An act's canonical text is "Domain-Intent Slot1 Slot2 ..." and it tokenizes
as [domain, "-", intent, *slots]; histories tokenize as
[CLS] act [SEP] act [SEP] ... with every act followed by [SEP].
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass, field

PAD, UNK, CLS, SEP, MASK = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"
RESERVED = [PAD, UNK, CLS, SEP, MASK]
HYPHEN = "-"


@dataclass(frozen=True)
class DialogAct:
    domain: str
    intent: str
    slots: tuple[str, ...] = ("none",)

    def __post_init__(self):
        if not self.domain or not self.intent:
            raise ValueError("domain and intent must be non-empty")
        slots = tuple(self.slots) if self.slots else ("none",)
        deduped = tuple(dict.fromkeys(slots))
        object.__setattr__(self, "slots", deduped)

    def canonical(self) -> str:
        return f"{self.domain}-{self.intent} {' '.join(self.slots)}"

    def tokens(self) -> list[str]:
        return [self.domain, HYPHEN, self.intent, *self.slots]

    def to_dict(self) -> dict:
        return {"domain": self.domain, "intent": self.intent, "slots": list(self.slots)}

    @classmethod
    def from_dict(cls, d: dict) -> "DialogAct":
        return cls(d["domain"], d["intent"], tuple(d["slots"]))


class TokenVocab:
    """Frozen token <-> id mapping; ids 0..4 are the reserved specials."""

    def __init__(self, tokens: list[str]):
        if tokens[: len(RESERVED)] != RESERVED:
            raise ValueError("vocabulary must start with the reserved tokens")
        if len(set(tokens)) != len(tokens):
            raise ValueError("duplicate tokens")
        self._tokens = list(tokens)
        self._ids = {t: i for i, t in enumerate(tokens)}

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def id(self, token: str) -> int:
        return self._ids.get(token, self._ids[UNK])

    def token(self, i: int) -> str:
        if not 0 <= i < len(self._tokens):
            raise ValueError(f"invalid token id {i}")
        return self._tokens[i]

    @property
    def pad_id(self) -> int:
        return 0

    @property
    def unk_id(self) -> int:
        return 1

    @property
    def cls_id(self) -> int:
        return 2

    @property
    def sep_id(self) -> int:
        return 3

    @property
    def mask_id(self) -> int:
        return 4

    def tokens(self) -> list[str]:
        return list(self._tokens)

    def content_hash(self) -> str:
        h = hashlib.sha1("\n".join(self._tokens).encode("utf-8"))
        return h.hexdigest()


@dataclass
class ActionCatalog:
    """The closed output space of the policy: dense ids over system acts."""

    entries: list[DialogAct]
    index: dict[str, int] = field(init=False)

    def __post_init__(self):
        self.index = {a.canonical(): i for i, a in enumerate(self.entries)}
        if len(self.index) != len(self.entries):
            raise ValueError("duplicate catalog entries")

    def __len__(self) -> int:
        return len(self.entries)

    def lookup(self, act: DialogAct) -> int | None:
        return self.index.get(act.canonical())

    def act(self, action_id: int) -> DialogAct:
        return self.entries[action_id]

    def canonical_texts(self) -> list[str]:
        return [a.canonical() for a in self.entries]


def build_vocab_and_catalog(sessions, k_max: int) -> tuple[TokenVocab, ActionCatalog]:
    """Scan a session stream once; vocabulary from all acts, catalog from the
    k_max most frequent system acts (ties broken by canonical text)."""
    token_set: set[str] = set()
    sys_counts: Counter[str] = Counter()
    canon_to_act: dict[str, DialogAct] = {}
    n_sessions = 0
    for session in sessions:
        n_sessions += 1
        for turn in session.turns:
            for act in turn.acts:
                token_set.update([act.domain, act.intent, *act.slots])
                if turn.speaker == "sys":
                    canon = act.canonical()
                    sys_counts[canon] += 1
                    canon_to_act.setdefault(canon, act)
    if n_sessions == 0:
        raise ValueError("empty corpus")
    tokens = RESERVED + [HYPHEN] + sorted(token_set - {HYPHEN})
    vocab = TokenVocab(tokens)
    ranked = sorted(sys_counts.items(), key=lambda kv: (-kv[1], kv[0]))[:k_max]
    catalog = ActionCatalog([canon_to_act[c] for c, _ in ranked])
    return vocab, catalog


def tokenize_history(history, vocab: TokenVocab, max_len: int | None = None) -> list[int]:
    """[CLS] + per-act tokens each followed by [SEP]; unknown tokens become [UNK].

    When max_len is given, whole oldest acts are dropped until the sequence
    fits ([CLS] always kept first).
    """
    acts = list(history)
    while True:
        ids = [vocab.cls_id]
        for act in acts:
            ids.extend(vocab.id(t) for t in act.tokens())
            ids.append(vocab.sep_id)
        if max_len is None or len(ids) <= max_len or not acts:
            return ids
        acts = acts[1:]


def count_unknown(ids: list[int], vocab: TokenVocab) -> int:
    return sum(1 for i in ids if i == vocab.unk_id)


def detokenize(ids, vocab: TokenVocab) -> str:
    """Inverse of tokenize_history up to [UNK] lossiness; the domain-hyphen-intent
    triple renders re-joined as Domain-Intent."""
    words = [vocab.token(i) for i in ids]
    return " ".join(words).replace(f" {HYPHEN} ", HYPHEN)


def canonical_history(history) -> str:
    """The text form a tokenize/detokenize round trip produces."""
    parts = [CLS]
    for act in history:
        parts.append(act.canonical())
        parts.append(SEP)
    return " ".join(parts)
