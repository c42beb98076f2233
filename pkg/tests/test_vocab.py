"""Dialog acts, tokenization round trips, and catalog construction."""

from collections import Counter

import numpy as np
import pytest

from dialoq.sessions import DialogSession, Turn
from dialoq.vocab import (DialogAct, TokenVocab, build_vocab_and_catalog,
                          canonical_history, count_unknown, detokenize,
                          tokenize_history)


def make_vocab(extra_tokens):
    return TokenVocab(["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "-",
                       *sorted(extra_tokens)])


SENTENCE_A = [
    DialogAct("Police", "Inform", ("Name",)),
    DialogAct("Police", "Inform", ("Phone", "Addr", "Post")),
    DialogAct("general", "thank", ("none",)),
]


class TestDialogAct:
    def test_canonical_form(self):
        assert SENTENCE_A[0].canonical() == "Police-Inform Name"
        assert SENTENCE_A[2].canonical() == "general-thank none"

    def test_tokens_split_domain_hyphen_intent_slots(self):
        assert SENTENCE_A[1].tokens() == ["Police", "-", "Inform", "Phone", "Addr", "Post"]

    def test_slots_default_to_none_and_dedupe(self):
        assert DialogAct("a", "b").slots == ("none",)
        assert DialogAct("a", "b", ()).slots == ("none",)
        assert DialogAct("a", "b", ("x", "y", "x")).slots == ("x", "y")

    def test_empty_domain_rejected(self):
        with pytest.raises(ValueError):
            DialogAct("", "Inform")


class TestTokenize:
    def test_empty_history_is_cls(self):
        vocab = make_vocab([])
        assert tokenize_history([], vocab) == [vocab.cls_id]

    def test_single_act_sequence(self):
        vocab = make_vocab(["Police", "Inform", "Name"])
        ids = tokenize_history([SENTENCE_A[0]], vocab)
        expect = [vocab.cls_id, vocab.id("Police"), vocab.id("-"),
                  vocab.id("Inform"), vocab.id("Name"), vocab.sep_id]
        assert ids == expect

    def test_sentence_a_round_trip_matches_canonical(self):
        vocab = make_vocab(["Police", "Inform", "Name", "Phone", "Addr", "Post",
                            "general", "thank", "none"])
        ids = tokenize_history(SENTENCE_A, vocab)
        text = detokenize(ids, vocab)
        assert text == canonical_history(SENTENCE_A)
        assert text == ("[CLS] Police-Inform Name [SEP] "
                        "Police-Inform Phone Addr Post [SEP] "
                        "general-thank none [SEP]")

    def test_starts_with_cls_ends_with_sep(self, vocab_catalog, small_corpus):
        vocab, _ = vocab_catalog
        for session in small_corpus[:20]:
            ids = tokenize_history(session.flat_acts(), vocab)
            assert ids[0] == vocab.cls_id
            assert ids[-1] == vocab.sep_id

    def test_unknown_tokens_degrade_to_unk(self):
        vocab = make_vocab(["Police", "Inform"])
        ids = tokenize_history([DialogAct("Police", "Inform", ("Mystery",))], vocab)
        assert vocab.unk_id in ids
        assert count_unknown(ids, vocab) == 1
        assert "[UNK]" in detokenize(ids, vocab)

    def test_mask_token_renders_literally(self):
        vocab = make_vocab([])
        assert detokenize([vocab.cls_id, vocab.mask_id], vocab) == "[CLS] [MASK]"

    def test_truncation_drops_whole_oldest_acts(self):
        vocab = make_vocab(["d", "i", "s1", "s2", "s3"])
        acts = [DialogAct("d", "i", (f"s{k}",)) for k in (1, 2, 3)]
        full = tokenize_history(acts, vocab)
        assert len(full) == 1 + 3 * 5
        short = tokenize_history(acts, vocab, max_len=12)
        assert short == tokenize_history(acts[1:], vocab)
        assert short[0] == vocab.cls_id
        tiny = tokenize_history(acts, vocab, max_len=6)
        assert tiny == tokenize_history(acts[2:], vocab)

    def test_random_histories_round_trip(self, rng):
        domains = ["alpha", "beta", "gamma"]
        intents = ["Ask", "Tell"]
        slots = ["s1", "s2", "s3", "s4"]
        vocab = make_vocab(domains + intents + slots + ["none"])
        for _ in range(1000):
            n = int(rng.integers(0, 6))
            history = []
            for _ in range(n):
                k = int(rng.integers(0, 3))
                chosen = tuple(rng.choice(slots, size=k, replace=False)) or ("none",)
                history.append(DialogAct(str(rng.choice(domains)),
                                         str(rng.choice(intents)), chosen))
            ids = tokenize_history(history, vocab)
            assert detokenize(ids, vocab) == canonical_history(history)

    def test_invalid_id_rejected(self):
        vocab = make_vocab([])
        with pytest.raises(ValueError):
            detokenize([999], vocab)


class TestBuildVocabAndCatalog:
    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError):
            build_vocab_and_catalog([], 10)

    def test_single_system_act(self):
        session = DialogSession("s", [Turn("sys", [DialogAct("d", "i", ("x",))])])
        vocab, catalog = build_vocab_and_catalog([session], 10)
        assert len(catalog) == 1
        assert catalog.act(0) == DialogAct("d", "i", ("x",))
        for t in ("d", "i", "x", "-"):
            assert t in vocab

    def test_tie_break_lexicographic(self):
        a = DialogAct("zzz", "i", ("x",))
        b = DialogAct("aaa", "i", ("x",))
        sessions = [DialogSession("s", [Turn("sys", [a, b])])]
        _, catalog = build_vocab_and_catalog(sessions, 10)
        assert catalog.act(0) == b  # equal counts: smaller canonical text first

    def test_k_max_truncates_by_frequency(self):
        acts = [DialogAct("d", "i", (f"s{k}",)) for k in range(5)]
        turns = [Turn("sys", [acts[k]] * (5 - k)) for k in range(5)]
        sessions = [DialogSession("s", turns)]
        _, catalog = build_vocab_and_catalog(sessions, 3)
        assert len(catalog) == 3
        assert catalog.act(0) == acts[0]  # most frequent first

    def test_catalog_matches_independent_frequency_count(self, small_corpus,
                                                         vocab_catalog):
        _, catalog = vocab_catalog
        counts = Counter()
        for session in small_corpus:
            for turn in session.turns:
                if turn.speaker == "sys":
                    for act in turn.acts:
                        counts[act.canonical()] += 1
        expected = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:64]
        assert catalog.canonical_texts() == [c for c, _ in expected]

    def test_user_acts_never_enter_catalog(self, small_corpus, vocab_catalog):
        _, catalog = vocab_catalog
        sys_canon = {a.canonical()
                     for s in small_corpus for t in s.turns if t.speaker == "sys"
                     for a in t.acts}
        assert set(catalog.canonical_texts()) <= sys_canon

    def test_catalog_lookup_bijection(self, vocab_catalog):
        _, catalog = vocab_catalog
        for i, act in enumerate(catalog.entries):
            assert catalog.lookup(act) == i
        assert catalog.lookup(DialogAct("nosuch", "Inform", ("x",))) is None

    def test_vocab_round_trip_and_reserved_ids(self, vocab_catalog):
        vocab, _ = vocab_catalog
        assert [vocab.token(i) for i in range(5)] == \
            ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
        for i in range(len(vocab)):
            assert vocab.id(vocab.token(i)) == i
