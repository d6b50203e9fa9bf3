"""Synthetic corpus: spelling rules, cue-driven variants, determinism."""

import json

import numpy as np
import pytest

from sentence_g2p.data import (
    build_homograph_slice,
    build_sentence_slice,
    ipa_to_arpabet,
    load_lexicon,
    parse_lexicon,
)
from sentence_g2p.synthdata import (
    HOMOGRAPHS,
    ToyCorpus,
    build_toy_corpus,
    generate_words,
    spell,
    variant_pronunciations,
    write_toy_corpus,
)
from sentence_g2p.wordvec import HashedWordVectors


class TestSpellingRules:
    def test_plain_letters(self):
        assert spell("BAT") == ["B", "AE", "T"]

    def test_digraphs_take_precedence(self):
        assert spell("SHEET") == ["SH", "IY", "T"]
        assert spell("CHEENO") == ["CH", "IY", "N", "AA"]
        assert spell("SONG") == ["S", "AA", "NG"]

    def test_x_expands_to_two_phones(self):
        assert spell("BOX") == ["B", "AA", "K", "S"]

    def test_unknown_character_raises(self):
        with pytest.raises(ValueError, match="no rule"):
            spell("B4T")

    def test_variants_differ_in_first_vowel_only(self):
        for hg in HOMOGRAPHS:
            prons = variant_pronunciations(hg)
            a, b = prons["a"], prons["b"]
            assert a == spell(hg)
            assert len(a) == len(b)
            diff = [i for i, (x, y) in enumerate(zip(a, b)) if x != y]
            assert len(diff) == 1

    def test_vowelless_word_rejected(self):
        with pytest.raises(ValueError, match="vowel"):
            variant_pronunciations("BST")


class TestWordGeneration:
    def test_unique_pronounceable_words(self):
        words = generate_words(np.random.default_rng(0), 150)
        assert len(words) == len(set(words)) == 150
        for w in words:
            assert 3 <= len(w) <= 9
            assert w not in HOMOGRAPHS
            spell(w)  # must not raise

    def test_seed_determinism(self):
        a = generate_words(np.random.default_rng(7), 50)
        b = generate_words(np.random.default_rng(7), 50)
        assert a == b


@pytest.fixture(scope="module")
def corpus() -> ToyCorpus:
    return build_toy_corpus(seed=1, n_words=80, n_sentences=120,
                            n_homograph_sentences=80, n_heldout_sentences=40,
                            cues_per_sign=8, heldout_cues_per_sign=4)


class TestToyCorpus:
    def test_rebuild_is_identical(self, corpus):
        again = build_toy_corpus(seed=1, n_words=80, n_sentences=120,
                                 n_homograph_sentences=80, n_heldout_sentences=40,
                                 cues_per_sign=8, heldout_cues_per_sign=4)
        assert again == corpus

    def test_lexicon_covers_vocab_and_homographs(self, corpus):
        assert len(corpus.lexicon) == 80 + len(HOMOGRAPHS)
        for hg in HOMOGRAPHS:
            assert corpus.lexicon[hg] == [variant_pronunciations(hg)["a"]]

    def test_glossary_ipa_round_trips(self, corpus):
        for hg in HOMOGRAPHS:
            prons = variant_pronunciations(hg)
            for label, ipa in corpus.glossary[hg].items():
                assert ipa_to_arpabet(ipa) == prons[label]

    def test_cue_pools_disjoint_and_sign_balanced(self, corpus):
        train = corpus.cue_words_train
        held = corpus.cue_words_heldout
        assert not set(train) & set(held)
        provider = HashedWordVectors(corpus.vec_dim, salt=corpus.salt)
        for pool, per_sign in ((train, 8), (held, 4)):
            signs = [provider(w)[0] > 0 for w in pool]
            assert sum(signs) == per_sign and len(pool) == 2 * per_sign

    def test_variant_follows_cue_sign(self, corpus):
        provider = HashedWordVectors(corpus.vec_dim, salt=corpus.salt)
        for rec in corpus.homograph_records + corpus.heldout_records:
            words = rec["sentence"].split(" ")
            idx = words.index(rec["homograph"], 1)
            cue = words[idx - 1]
            want = "a" if provider(cue)[0] > 0 else "b"
            assert rec["variant"] == want

    def test_heldout_cues_come_from_the_heldout_pool(self, corpus):
        held = set(corpus.cue_words_heldout)
        train = set(corpus.cue_words_train)
        for rec in corpus.heldout_records:
            words = rec["sentence"].split(" ")
            cue = words[words.index(rec["homograph"], 1) - 1]
            assert cue in held and cue not in train

    def test_record_span_points_at_the_homograph(self, corpus):
        for rec in corpus.homograph_records:
            assert rec["sentence"][rec["start"]:rec["end"]] == rec["homograph"]

    def test_variants_roughly_balanced_per_homograph(self, corpus):
        counts = {}
        for rec in corpus.homograph_records:
            key = rec["homograph"]
            counts.setdefault(key, []).append(rec["variant"])
        for hg, labels in counts.items():
            frac_a = labels.count("a") / len(labels)
            assert 0.2 < frac_a < 0.8, (hg, frac_a)

    def test_slices_build_without_drops(self, corpus):
        sent, s_stats = build_sentence_slice(corpus.sentences, corpus.lexicon)
        assert s_stats.dropped == 0 and len(sent) == 120
        hg, h_stats = build_homograph_slice(
            corpus.homograph_records, corpus.lexicon, corpus.glossary
        )
        assert h_stats.dropped == 0 and len(hg) == 80
        for ex in hg:
            s, e = ex.homograph_phn_span
            want = variant_pronunciations(ex.homograph_word)[ex.variant]
            assert ex.phn[s:e] == want

    def test_lexicon_text_parses_back(self, corpus):
        lex, rejected = parse_lexicon(corpus.lexicon_text().splitlines())
        assert rejected == 0
        assert lex == corpus.lexicon


class TestWriteFiles:
    def test_files_written_and_loadable(self, tmp_path, corpus):
        paths = write_toy_corpus(corpus, tmp_path)
        lex, rejected = load_lexicon(paths["lexicon"])
        assert rejected == 0 and lex == corpus.lexicon
        lines = (tmp_path / "sentences.txt").read_text().splitlines()
        assert lines == corpus.sentences
        recs = [
            json.loads(l)
            for l in (tmp_path / "homograph_records.jsonl").read_text().splitlines()
        ]
        assert recs == corpus.homograph_records
        glossary = json.loads((tmp_path / "glossary.json").read_text())
        assert glossary == corpus.glossary
