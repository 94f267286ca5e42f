"""Vocabulary, synthetic corpus, and the count-based conditional model.

The hand-computed probability oracle near the bottom is the ground truth
for the training/query math: two sentences small enough to count by
hand.
"""

import numpy as np
import pytest

from cfgdecode import ConfigError, InvalidInputError
from cfgdecode.mismatch import EMOTIONS
from cfgdecode.toylm import (
    ASSOCIATED_WORDS,
    COMMON_WORDS,
    NULL_TAG,
    Corpus,
    CorpusSentence,
    ToyConditionalLM,
    ToyVocabulary,
    make_synthetic_corpus,
    train_toy_lm,
)


class TestVocabulary:
    def test_layout(self):
        v = ToyVocabulary()
        assert v.bos_id == 0 and v.word(0) == "<s>"
        assert v.eos_id == 1 and v.word(1) == "</s>"
        assert v.size == 2 + 8 * 12 + len(COMMON_WORDS) + 9
        # tag tokens sit at the very end, null last
        assert [v.word(i) for i in v.tag_ids] == [
            f"<{t}>" for t in (*EMOTIONS, NULL_TAG)
        ]

    def test_tag_round_trip(self):
        v = ToyVocabulary()
        for tag in (*EMOTIONS, NULL_TAG):
            tid = v.tag_id(tag)
            assert v.is_tag(tid)
            assert v.tag_of(tid) == tag
        assert not v.is_tag(v.bos_id)

    def test_unknown_tag_rejected(self):
        with pytest.raises(InvalidInputError):
            ToyVocabulary().tag_id("bored")

    def test_tokenize_and_detokenize(self):
        v = ToyVocabulary()
        ids = v.tokenize("I am going back home.")
        assert v.detokenize(ids) == "i am going back home"

    def test_tokenize_rejects_unknown_words(self):
        with pytest.raises(InvalidInputError, match="zebra"):
            ToyVocabulary().tokenize("a zebra came home")

    def test_detokenize_skips_sentinels_and_tags(self):
        v = ToyVocabulary()
        ids = [v.bos_id, v.tag_id("happy"), *v.tokenize("we dance"), v.eos_id]
        assert v.detokenize(ids) == "we dance"

    def test_every_associated_word_maps_to_its_emotion(self):
        v = ToyVocabulary()
        for emotion in EMOTIONS:
            for word in ASSOCIATED_WORDS[emotion]:
                (tid,) = v.tokenize(word)
                assert v.emotion_of_word(tid) == emotion
        (tid,) = v.tokenize("the")
        assert v.emotion_of_word(tid) is None


class TestSyntheticCorpus:
    def test_tags_rotate_with_balanced_counts(self):
        corpus = make_synthetic_corpus(100, seed=3)
        per_tag = {t: 0 for t in EMOTIONS}
        for s in corpus.sentences:
            per_tag[s.tag] += 1
        assert max(per_tag.values()) - min(per_tag.values()) <= 1

    def test_lengths_respect_bounds(self):
        corpus = make_synthetic_corpus(300, seed=4, min_len=5, max_len=9)
        lengths = [len(s.token_ids) for s in corpus.sentences]
        assert min(lengths) >= 5 and max(lengths) <= 9

    def test_seed_reproducibility(self):
        a = make_synthetic_corpus(50, seed=11)
        b = make_synthetic_corpus(50, seed=11)
        assert a.sentences == b.sentences
        c = make_synthetic_corpus(50, seed=12)
        assert a.sentences != c.sentences

    def test_associated_word_rate_tracks_the_dial(self):
        """With p_associated=0.45 the tag's words should make up roughly
        45% of each sentence's tokens corpus-wide (binomial, wide bound)."""
        corpus = make_synthetic_corpus(2000, seed=5, p_associated=0.45)
        vocab = ToyVocabulary()
        hits = total = 0
        for s in corpus.sentences:
            for t in s.token_ids:
                hits += vocab.emotion_of_word(t) == s.tag
                total += 1
        assert abs(hits / total - 0.45) < 0.02

    def test_manifest_pins_the_constants(self):
        corpus = make_synthetic_corpus(10, seed=6, p_associated=0.3)
        m = corpus.manifest
        assert m["n_sentences"] == 10 and m["seed"] == 6
        assert m["p_associated"] == 0.3
        assert m["tags"] == list(EMOTIONS)

    def test_bad_arguments_rejected(self):
        with pytest.raises(InvalidInputError):
            make_synthetic_corpus(0)
        with pytest.raises(InvalidInputError):
            make_synthetic_corpus(10, p_associated=1.5)
        with pytest.raises(InvalidInputError):
            make_synthetic_corpus(10, min_len=9, max_len=5)


class TestTraining:
    def test_dropout_routes_the_expected_fraction_to_null(self):
        """15% dropout over 4000 sentences: the realized null share must
        land within [13.5%, 16.5%] (about 2.7 binomial sigmas)."""
        corpus = make_synthetic_corpus(4000, seed=0)
        model = train_toy_lm(corpus, dropout_rate=0.15, seed=0)
        null_n = sum(
            n for table in model.counts[NULL_TAG].values() for n in table.values()
        )
        total_n = sum(
            n
            for contexts in model.counts.values()
            for table in contexts.values()
            for n in table.values()
        )
        share = null_n / total_n
        assert 0.135 <= share <= 0.165, f"null share {share:.4f}"

    def test_zero_dropout_leaves_null_empty(self):
        corpus = make_synthetic_corpus(200, seed=1)
        model = train_toy_lm(corpus, dropout_rate=0.0, seed=0)
        assert NULL_TAG not in model.counts

    def test_training_is_deterministic(self):
        corpus = make_synthetic_corpus(200, seed=2)
        a = train_toy_lm(corpus, seed=7)
        b = train_toy_lm(corpus, seed=7)
        assert a.counts == b.counts

    def test_bad_arguments_rejected(self):
        corpus = make_synthetic_corpus(10, seed=0)
        with pytest.raises(InvalidInputError):
            train_toy_lm(corpus, dropout_rate=1.0)
        with pytest.raises(InvalidInputError):
            train_toy_lm(corpus, smoothing=0.0)


class TestQueryMath:
    def hand_model(self):
        """Two 'happy' sentences with overlapping trigrams, no dropout."""
        v = ToyVocabulary()
        s1 = CorpusSentence(tag="happy", token_ids=v.tokenize("we dance now"))
        s2 = CorpusSentence(tag="happy", token_ids=v.tokenize("we dance today"))
        corpus = Corpus(sentences=(s1, s2), manifest={})
        return v, train_toy_lm(corpus, dropout_rate=0.0, seed=0, smoothing=0.5)

    def test_probabilities_match_hand_counts(self):
        """After (we, dance): counts are now=1, today=1. With alpha=0.5 over
        199 allowed tokens (vocab minus BOS minus 9 tags) and 2 total counts,
        p(now) = 1.5 / (2 + 0.5*199)."""
        v, model = self.hand_model()
        prefix = (v.tag_id("happy"), *v.tokenize("we dance"))
        logits = model.next_logits(prefix)
        allowed = v.size - 1 - 9
        expected = np.log(1.5 / (2 + 0.5 * allowed))
        (now_id,) = v.tokenize("now")
        (today_id,) = v.tokenize("today")
        (the_id,) = v.tokenize("the")
        assert logits[now_id] == pytest.approx(expected)
        assert logits[today_id] == pytest.approx(expected)
        assert logits[the_id] == pytest.approx(np.log(0.5 / (2 + 0.5 * allowed)))

    def test_logits_are_a_normalized_distribution(self):
        v, model = self.hand_model()
        logits = model.next_logits((v.tag_id("happy"),))
        finite = np.isfinite(logits)
        assert np.exp(logits[finite]).sum() == pytest.approx(1.0)

    def test_bos_and_tags_are_masked(self):
        v, model = self.hand_model()
        logits = model.next_logits((v.tag_id("happy"),))
        assert logits[v.bos_id] == -np.inf
        assert all(logits[i] == -np.inf for i in v.tag_ids)

    def test_unseen_tag_falls_back_to_smoothing_only(self):
        """A tag with no counts yields the uniform smoothed distribution."""
        v, model = self.hand_model()
        logits = model.next_logits((v.tag_id("sad"),))
        finite = logits[np.isfinite(logits)]
        assert np.allclose(finite, finite[0])

    def test_prefix_without_tag_uses_null(self):
        v, model = self.hand_model()
        a = model.next_logits(())
        b = model.next_logits((v.tag_id(NULL_TAG),))
        np.testing.assert_array_equal(a, b)

    def test_cache_hands_out_copies(self):
        v, model = self.hand_model()
        a = model.next_logits((v.tag_id("happy"),))
        a[2] = 123.0  # vandalize the returned array
        b = model.next_logits((v.tag_id("happy"),))
        assert b[2] != 123.0


class TestPredictEmotion:
    def test_majority_wins(self):
        v = ToyVocabulary()
        model = train_toy_lm(make_synthetic_corpus(8, seed=0), seed=0)
        ids = v.tokenize("joy smile tears")
        assert model.predict_emotion(ids) == "happy"

    def test_tie_and_absence_return_none(self):
        v = ToyVocabulary()
        model = train_toy_lm(make_synthetic_corpus(8, seed=0), seed=0)
        assert model.predict_emotion(v.tokenize("joy tears")) is None
        assert model.predict_emotion(v.tokenize("the day")) is None


class TestSaveLoad:
    def test_round_trip_preserves_the_distribution(self, tmp_path):
        corpus = make_synthetic_corpus(300, seed=9)
        model = train_toy_lm(corpus, dropout_rate=0.15, seed=9)
        path = str(tmp_path / "model.json")
        model.save(path)
        clone = ToyConditionalLM.load(path)
        assert clone.counts == model.counts
        assert clone.dropout_rate == model.dropout_rate
        v = model.vocab
        prefix = (v.tag_id("angry"), *v.tokenize("the door"))
        np.testing.assert_array_equal(
            clone.next_logits(prefix), model.next_logits(prefix)
        )

    def test_not_json_is_config_error(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text("definitely not json{")
        with pytest.raises(ConfigError, match="not valid JSON"):
            ToyConditionalLM.load(str(path))

    def test_wrong_version_is_config_error(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text('{"format_version": 99}')
        with pytest.raises(ConfigError, match="unsupported format"):
            ToyConditionalLM.load(str(path))

    def test_mangled_counts_are_config_error(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text(
            '{"format_version": 1, "dropout_rate": 0.1, "seed": 0,'
            ' "smoothing": 0.1, "counts": {"happy": {"not-a-pair": {}}}}'
        )
        with pytest.raises(ConfigError, match="malformed"):
            ToyConditionalLM.load(str(path))
