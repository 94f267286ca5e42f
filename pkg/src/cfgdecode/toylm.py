"""A tiny count-based conditional language model for end-to-end checks.

The real engine wraps large sequence models; tests need something that
decodes in microseconds yet still *has* a controllable style condition.
This is an order-2 (trigram) model over a ~200-word vocabulary trained on
a synthetic corpus where each sentence carries one of eight emotion tags
and mixes tag-associated words with shared filler words. Conditioning on
a tag shifts the next-token distribution toward that tag's words, so
guidance has a real signal to amplify and a consistency metric (do the
generated words match the conditioned tag?) responds to the scale, the
same shape of behavior the engine sees from a full model.

Training applies classic condition dropout: a fraction of sentences is
counted under the null tag instead of its own, which is what makes the
null-conditioned branch a usable unconditional model at decode time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, InvalidInputError
from .mismatch import EMOTIONS

__all__ = [
    "ToyVocabulary",
    "CorpusSentence",
    "Corpus",
    "ToyConditionalLM",
    "make_synthetic_corpus",
    "train_toy_lm",
]

NULL_TAG = "null"

# Twelve flavor words per emotion; the model learns these as the tag's
# signature. Order matters: word ids are positional.
ASSOCIATED_WORDS: Mapping[str, tuple[str, ...]] = {
    "neutral": (
        "okay", "fine", "usual", "routine", "steady", "plain",
        "normal", "regular", "settled", "mild", "quiet", "ordinary",
    ),
    "sad": (
        "tears", "sorrow", "grief", "lonely", "weep", "mourn",
        "loss", "ache", "gloom", "heavy", "blue", "cry",
    ),
    "happy": (
        "joy", "smile", "laugh", "bright", "cheer", "glad",
        "sunny", "dance", "delight", "sweet", "warm", "play",
    ),
    "surprised": (
        "sudden", "gasp", "wow", "unexpected", "startle", "blink",
        "jolt", "shock", "wonder", "strange", "odd", "whoa",
    ),
    "angry": (
        "rage", "shout", "fury", "slam", "growl", "snap",
        "fume", "storm", "bitter", "harsh", "loud", "mad",
    ),
    "disgusted": (
        "gross", "rotten", "filth", "stink", "slime", "foul",
        "nasty", "yuck", "sour", "rancid", "dirty", "sick",
    ),
    "contempt": (
        "sneer", "scoff", "smirk", "dismiss", "mock", "belittle",
        "petty", "lowly", "scorn", "disdain", "jeer", "snub",
    ),
    "fearful": (
        "dread", "tremble", "shiver", "panic", "terror", "creep",
        "shadow", "afraid", "flinch", "haunt", "chill", "scream",
    ),
}

COMMON_WORDS: tuple[str, ...] = (
    "i", "you", "he", "she", "we", "they", "it", "am", "is", "are",
    "was", "were", "be", "have", "has", "had", "do", "did", "will", "would",
    "can", "could", "go", "going", "went", "come", "came", "back", "home", "out",
    "in", "on", "at", "to", "from", "with", "of", "the", "a", "an",
    "and", "or", "but", "not", "no", "yes", "this", "that", "my", "your",
    "his", "her", "our", "their", "me", "him", "us", "them", "what", "when",
    "where", "who", "how", "why", "now", "then", "today", "tonight", "soon", "late",
    "early", "meeting", "noon", "morning", "night", "day", "time", "way", "thing", "word",
    "door", "room", "house", "street", "town", "work", "school", "friend", "people", "voice",
    "sound", "tone", "say", "said", "tell", "told", "know", "think", "see", "hear",
)


class ToyVocabulary:
    """Fixed token table: sentinels, content words, then the tag tokens.

    Layout: id 0 is BOS, id 1 is EOS, then the 96 associated words in
    EMOTIONS order, then 100 common words, and the 9 tag tokens (eight
    emotions plus null) at the very end.
    """

    def __init__(self) -> None:
        words: list[str] = ["<s>", "</s>"]
        for emotion in EMOTIONS:
            words.extend(ASSOCIATED_WORDS[emotion])
        words.extend(COMMON_WORDS)
        self._first_tag_id = len(words)
        for tag in (*EMOTIONS, NULL_TAG):
            words.append(f"<{tag}>")
        self._words = tuple(words)
        self._ids = {w: i for i, w in enumerate(words)}
        self.bos_id = 0
        self.eos_id = 1
        self.size = len(words)
        # associated-word id -> owning emotion, for the consistency probe
        self._word_tag: dict[int, str] = {}
        for emotion in EMOTIONS:
            for w in ASSOCIATED_WORDS[emotion]:
                self._word_tag[self._ids[w]] = emotion

    def tag_id(self, tag: str) -> int:
        token = f"<{tag}>"
        if token not in self._ids:
            raise InvalidInputError(
                f"unknown tag {tag!r}; expected one of {(*EMOTIONS, NULL_TAG)}"
            )
        return self._ids[token]

    def is_tag(self, token_id: int) -> bool:
        return token_id >= self._first_tag_id

    def tag_of(self, token_id: int) -> str:
        if not self.is_tag(token_id):
            raise InvalidInputError(f"token {token_id} is not a tag token")
        return self._words[token_id][1:-1]

    @property
    def tag_ids(self) -> range:
        return range(self._first_tag_id, self.size)

    def word(self, token_id: int) -> str:
        return self._words[token_id]

    def tokenize(self, text: str) -> tuple[int, ...]:
        """Whitespace/punctuation split, lowercase, strict lookup."""
        ids = []
        for raw in text.lower().split():
            word = raw.strip(".,!?;:\"'")
            if not word:
                continue
            if word not in self._ids:
                raise InvalidInputError(f"word not in toy vocabulary: {word!r}")
            ids.append(self._ids[word])
        return tuple(ids)

    def detokenize(self, token_ids: Sequence[int]) -> str:
        return " ".join(
            self._words[t]
            for t in token_ids
            if t not in (self.bos_id, self.eos_id) and not self.is_tag(t)
        )

    def emotion_of_word(self, token_id: int) -> str | None:
        return self._word_tag.get(token_id)


@dataclass(frozen=True)
class CorpusSentence:
    tag: str
    token_ids: tuple[int, ...]


@dataclass(frozen=True)
class Corpus:
    sentences: tuple[CorpusSentence, ...]
    manifest: Mapping[str, object]


def make_synthetic_corpus(
    n_sentences: int = 4000,
    *,
    seed: int = 0,
    p_associated: float = 0.45,
    min_len: int = 8,
    max_len: int = 16,
) -> Corpus:
    """Sample a balanced tagged corpus.

    Tags rotate round-robin (counts per tag differ by at most one). Each
    word is drawn from the tag's associated list with probability
    ``p_associated``, otherwise from the common pool. The manifest pins
    every constant so a corpus is reproducible from it alone.
    """
    if n_sentences < 1:
        raise InvalidInputError("n_sentences must be >= 1")
    if not 0.0 <= p_associated <= 1.0:
        raise InvalidInputError("p_associated must lie in [0, 1]")
    if not 1 <= min_len <= max_len:
        raise InvalidInputError("need 1 <= min_len <= max_len")
    vocab = ToyVocabulary()
    rng = np.random.default_rng(seed)
    sentences = []
    for i in range(n_sentences):
        tag = EMOTIONS[i % len(EMOTIONS)]
        associated = ASSOCIATED_WORDS[tag]
        length = int(rng.integers(min_len, max_len + 1))
        ids = []
        for _ in range(length):
            if rng.random() < p_associated:
                word = associated[int(rng.integers(len(associated)))]
            else:
                word = COMMON_WORDS[int(rng.integers(len(COMMON_WORDS)))]
            ids.append(vocab._ids[word])
        sentences.append(CorpusSentence(tag=tag, token_ids=tuple(ids)))
    manifest = {
        "n_sentences": n_sentences,
        "seed": seed,
        "p_associated": p_associated,
        "min_len": min_len,
        "max_len": max_len,
        "tags": list(EMOTIONS),
        "vocab_size": vocab.size,
    }
    return Corpus(sentences=tuple(sentences), manifest=manifest)


@dataclass
class ToyConditionalLM:
    """Order-2 counts per tag, additive smoothing applied at query time."""

    vocab: ToyVocabulary
    counts: dict
    dropout_rate: float
    seed: int
    smoothing: float = 0.1
    _logit_cache: dict = field(default_factory=dict, repr=False)

    @property
    def vocab_size(self) -> int:
        return self.vocab.size

    @property
    def eos_id(self) -> int:
        return self.vocab.eos_id

    def _split_prefix(self, prefix: Sequence[int]) -> tuple[str, tuple[int, int]]:
        """Prefix -> (tag, order-2 context over word tokens, BOS-padded)."""
        tag = NULL_TAG
        words = []
        for t in prefix:
            if self.vocab.is_tag(t):
                if tag == NULL_TAG:
                    tag = self.vocab.tag_of(t)
            elif t != self.vocab.bos_id:
                words.append(int(t))
        padded = [self.vocab.bos_id, self.vocab.bos_id, *words]
        return tag, (padded[-2], padded[-1])

    def next_logits(self, prefix: Sequence[int]) -> np.ndarray:
        """Log-probabilities over the full vocabulary for the next token.

        BOS and tag tokens can never be generated, so their entries are
        -inf; everything else gets a smoothed count-based probability.
        """
        tag, context = self._split_prefix(prefix)
        key = (tag, context)
        cached = self._logit_cache.get(key)
        if cached is not None:
            return cached.copy()
        table = self.counts.get(tag, {}).get(context, {})
        v = self.vocab.size
        allowed = np.ones(v, dtype=bool)
        allowed[self.vocab.bos_id] = False
        allowed[list(self.vocab.tag_ids)] = False
        weights = np.zeros(v)
        for token, n in table.items():
            weights[token] = n
        weights[~allowed] = 0.0
        weights[allowed] += self.smoothing
        total = weights.sum()
        logits = np.full(v, -np.inf)
        finite = weights > 0
        logits[finite] = np.log(weights[finite] / total)
        self._logit_cache[key] = logits
        return logits.copy()

    def mean_surprisal(
        self, token_ids: Sequence[int], *, tag: str = NULL_TAG
    ) -> float:
        """Average per-token negative log-probability under one tag's branch.

        Scored teacher-forced from an empty prefix. The null tag makes
        this a fluency probe: text a style push has dragged far off the
        unconditional distribution scores high.
        """
        if not token_ids:
            raise InvalidInputError("cannot score an empty token sequence")
        prefix = [self.vocab.tag_id(tag)]
        total = 0.0
        for t in token_ids:
            logits = self.next_logits(prefix)
            lp = logits[int(t)]
            if lp == -np.inf:
                raise InvalidInputError(
                    f"token {t} is impossible under tag {tag!r}"
                )
            total -= lp
            prefix.append(int(t))
        return total / len(token_ids)

    def predict_emotion(self, token_ids: Sequence[int]) -> str | None:
        """Tag whose associated words dominate the sequence; None on a tie
        or when no associated word occurs at all."""
        hits: dict[str, int] = {}
        for t in token_ids:
            emotion = self.vocab.emotion_of_word(int(t))
            if emotion is not None:
                hits[emotion] = hits.get(emotion, 0) + 1
        if not hits:
            return None
        best = max(hits.values())
        winners = [e for e, n in hits.items() if n == best]
        return winners[0] if len(winners) == 1 else None

    def save(self, path: str) -> None:
        payload = {
            "format_version": 1,
            "dropout_rate": self.dropout_rate,
            "seed": self.seed,
            "smoothing": self.smoothing,
            "counts": {
                tag: {
                    f"{c0},{c1}": {str(tok): n for tok, n in table.items()}
                    for (c0, c1), table in contexts.items()
                }
                for tag, contexts in self.counts.items()
            },
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)

    @classmethod
    def load(cls, path: str) -> "ToyConditionalLM":
        try:
            with open(path, encoding="utf-8") as fh:
                payload = json.load(fh)
        except ValueError as exc:
            raise ConfigError(f"model file {path!r} is not valid JSON: {exc}") from exc
        if not isinstance(payload, dict) or payload.get("format_version") != 1:
            raise ConfigError(
                f"model file {path!r} has unsupported format "
                f"{payload.get('format_version')!r}"
            )
        try:
            counts = {
                tag: {
                    tuple(int(x) for x in key.split(",")): {
                        int(tok): int(n) for tok, n in table.items()
                    }
                    for key, table in contexts.items()
                }
                for tag, contexts in payload["counts"].items()
            }
            return cls(
                vocab=ToyVocabulary(),
                counts=counts,
                dropout_rate=float(payload["dropout_rate"]),
                seed=int(payload["seed"]),
                smoothing=float(payload["smoothing"]),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"model file {path!r} is malformed: {exc}") from exc


def train_toy_lm(
    corpus: Corpus,
    *,
    dropout_rate: float = 0.15,
    seed: int = 0,
    smoothing: float = 0.1,
) -> ToyConditionalLM:
    """Count trigrams per tag, routing a dropout fraction to the null tag.

    The dropout draw uses its own generator seeded here, independent of
    the corpus seed, so the same corpus can train models with different
    dropout realizations.
    """
    if not 0.0 <= dropout_rate < 1.0:
        raise InvalidInputError("dropout_rate must lie in [0, 1)")
    if smoothing <= 0:
        raise InvalidInputError("smoothing must be positive")
    vocab = ToyVocabulary()
    rng = np.random.default_rng(seed)
    counts: dict[str, dict[tuple[int, int], dict[int, int]]] = {}
    for sentence in corpus.sentences:
        tag = NULL_TAG if rng.random() < dropout_rate else sentence.tag
        contexts = counts.setdefault(tag, {})
        stream = (*sentence.token_ids, vocab.eos_id)
        c0, c1 = vocab.bos_id, vocab.bos_id
        for token in stream:
            table = contexts.setdefault((c0, c1), {})
            table[token] = table.get(token, 0) + 1
            c0, c1 = c1, token
    return ToyConditionalLM(
        vocab=vocab,
        counts=counts,
        dropout_rate=dropout_rate,
        seed=seed,
        smoothing=smoothing,
    )
