"""Style/content mismatch discrimination and style-prompt surgery.

A *style prompt* describes how a line should be spoken ("She talks
briskly, her amazed tone pitched high."); the *target text* is the line
itself. When the text's content fights the requested style, strong
guidance hurts more than it helps, so a discriminator estimates the
mismatch as a distance in [0, 1] that the scheduler turns into scales.

Three backends:

* ``lexicon`` -- offline, deterministic keyword matching. Always
  available; used for tests and as a degraded-mode fallback.
* ``nli`` -- an HTTP entailment scorer (premise = target text,
  hypothesis = "The speaker sounds <emotion>.") returning the distance
  directly.
* ``llm`` -- an HTTP completion endpoint prompted with a fixed template
  to answer Low / Medium / High in a single token.

The module also owns random style substitution: swapping the prompt's
emotion cue for a uniformly drawn different one, which builds the
negative branch for random-style guidance.
"""

from __future__ import annotations

import enum
import re
import time
from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping, Protocol

import numpy as np

from .errors import InvalidInputError, NotApplicableError, ProtocolError
from .scheduling import Level, distance_to_level

__all__ = [
    "EMOTIONS",
    "DiscriminatorBackend",
    "EmotionSpan",
    "DiscriminationResult",
    "SubstitutionResult",
    "locate_emotion_span",
    "substitute_random_emotion",
    "lexicon_discriminate",
    "nli_hypothesis",
    "llm_prompt",
    "parse_llm_label",
    "discriminate",
]

# Canonical emotion tags, in the fixed order used everywhere (toy LM tag
# ids, substitution draws, report grouping).
EMOTIONS: tuple[str, ...] = (
    "neutral",
    "sad",
    "happy",
    "surprised",
    "angry",
    "disgusted",
    "contempt",
    "fearful",
)

# Surface forms that mark an emotion inside a style prompt. Keys are
# lowercase whole words; first hit in the prompt wins.
SYNONYMS: Mapping[str, str] = MappingProxyType(
    {
        "neutral": "neutral",
        "calm": "neutral",
        "flat": "neutral",
        "even": "neutral",
        "sad": "sad",
        "sorrowful": "sad",
        "mournful": "sad",
        "gloomy": "sad",
        "downcast": "sad",
        "happy": "happy",
        "cheerful": "happy",
        "joyful": "happy",
        "delighted": "happy",
        "thrilled": "happy",
        "overjoyed": "happy",
        "surprised": "surprised",
        "amazed": "surprised",
        "astonished": "surprised",
        "startled": "surprised",
        "angry": "angry",
        "furious": "angry",
        "irate": "angry",
        "enraged": "angry",
        "disgusted": "disgusted",
        "revolted": "disgusted",
        "repulsed": "disgusted",
        "sickened": "disgusted",
        "contempt": "contempt",
        "contemptuous": "contempt",
        "scornful": "contempt",
        "disdainful": "contempt",
        "sneering": "contempt",
        "fearful": "fearful",
        "horrific": "fearful",
        "terrified": "fearful",
        "frightened": "fearful",
        "afraid": "fearful",
        "scared": "fearful",
    }
)

# The word written into a prompt when substituting each emotion in.
SUBSTITUTION_SURFACE: Mapping[str, str] = MappingProxyType(
    {
        "neutral": "neutral",
        "sad": "mournful",
        "happy": "cheerful",
        "surprised": "amazed",
        "angry": "furious",
        "disgusted": "disgusted",
        "contempt": "scornful",
        "fearful": "horrific",
    }
)

# Content cues: target-text words that imply an emotional register of
# their own. Mundane-routine words imply neutral, which is how a plain
# errand sentence ends up *conflicting* with an excited style prompt.
CONTENT_CUES: Mapping[str, str] = MappingProxyType(
    {
        "home": "neutral",
        "routine": "neutral",
        "usual": "neutral",
        "funeral": "sad",
        "grief": "sad",
        "loss": "sad",
        "crying": "sad",
        "party": "happy",
        "celebrate": "happy",
        "celebration": "happy",
        "won": "happy",
        "unexpected": "surprised",
        "suddenly": "surprised",
        "unbelievable": "surprised",
        "outrage": "angry",
        "insult": "angry",
        "betrayed": "angry",
        "rotten": "disgusted",
        "filth": "disgusted",
        "stench": "disgusted",
        "pathetic": "contempt",
        "beneath": "contempt",
        "danger": "fearful",
        "threat": "fearful",
        "spider": "fearful",
        "dark": "fearful",
    }
)

_WORD_RE = re.compile(r"[A-Za-z']+")


class DiscriminatorBackend(str, enum.Enum):
    LEXICON = "lexicon"
    NLI = "nli"
    LLM = "llm"


@dataclass(frozen=True)
class EmotionSpan:
    """Where a style prompt names its emotion: [start, end) over the text."""

    start: int
    end: int
    surface: str
    emotion: str


@dataclass(frozen=True)
class DiscriminationResult:
    backend: DiscriminatorBackend
    distance: float
    level: Level
    prompt_emotion: str
    detail: Mapping[str, object]
    latency_s: float


@dataclass(frozen=True)
class SubstitutionResult:
    text: str
    original_emotion: str
    new_emotion: str
    surface: str


def locate_emotion_span(prompt_text: str) -> EmotionSpan | None:
    """First whole word in the prompt that names an emotion, or None."""
    for m in _WORD_RE.finditer(prompt_text):
        canonical = SYNONYMS.get(m.group(0).lower())
        if canonical is not None:
            return EmotionSpan(m.start(), m.end(), m.group(0), canonical)
    return None


def _require_span(prompt_text: str) -> EmotionSpan:
    span = locate_emotion_span(prompt_text)
    if span is None:
        raise NotApplicableError(
            f"style prompt carries no recognizable emotion cue: {prompt_text!r}"
        )
    return span


def substitute_random_emotion(
    prompt_text: str, rng: np.random.Generator
) -> SubstitutionResult:
    """Swap the prompt's emotion word for a uniformly drawn different one.

    Only the emotion span changes; every other byte of the prompt is
    preserved. Raises NotApplicableError when the prompt has no emotion
    cue to replace.
    """
    span = _require_span(prompt_text)
    others = [e for e in EMOTIONS if e != span.emotion]
    choice = others[int(rng.integers(len(others)))]
    surface = SUBSTITUTION_SURFACE[choice]
    new_text = prompt_text[: span.start] + surface + prompt_text[span.end :]
    return SubstitutionResult(
        text=new_text,
        original_emotion=span.emotion,
        new_emotion=choice,
        surface=surface,
    )


# ---------------------------------------------------------------------------
# lexicon backend
# ---------------------------------------------------------------------------

_LEVEL_DISTANCE = {
    Level.LOW: 1.0 / 6.0,
    Level.MEDIUM: 0.5,
    Level.HIGH: 5.0 / 6.0,
}


def lexicon_discriminate(prompt_text: str, target_text: str) -> tuple[float, Level]:
    """Offline distance from keyword evidence in the target text.

    The target's words are scanned for emotional register (direct emotion
    words plus content cues). Agreement with the prompt's emotion is a
    low mismatch; evidence for a *different* register is a high mismatch;
    no evidence either way is the medium middle ground. The returned
    distance is the representative midpoint of the level's bin, so the
    binning round-trips exactly.
    """
    span = _require_span(prompt_text)
    implied: set[str] = set()
    for word in _WORD_RE.findall(target_text.lower()):
        hit = SYNONYMS.get(word) or CONTENT_CUES.get(word)
        if hit is not None:
            implied.add(hit)
    if not implied:
        level = Level.MEDIUM
    elif span.emotion in implied:
        level = Level.LOW
    else:
        level = Level.HIGH
    return _LEVEL_DISTANCE[level], level


# ---------------------------------------------------------------------------
# remote backends: prompt/hypothesis construction and label parsing
# ---------------------------------------------------------------------------

def nli_hypothesis(prompt_text: str) -> str:
    """Entailment hypothesis for the prompt's emotion."""
    span = _require_span(prompt_text)
    return f"The speaker sounds {span.emotion}."


LLM_TEMPLATE_VERSION = "v1"

_LLM_TEMPLATE = (
    "Rate how strongly the requested speaking style conflicts with the "
    "content of the target text. Reply with exactly one word: "
    "Low, Medium, or High.\n"
    "Style prompt: {prompt}\n"
    "Target text: {target}\n"
    "Answer:"
)


def llm_prompt(prompt_text: str, target_text: str) -> str:
    """The fixed, version-stamped discrimination prompt (template v1).

    Any wording change must bump LLM_TEMPLATE_VERSION: cached or logged
    results are only comparable within one template version.
    """
    return _LLM_TEMPLATE.format(prompt=prompt_text, target=target_text)


def parse_llm_label(text: str) -> Level:
    """Read the single-token Low/Medium/High answer, case-insensitively.

    Only the first whitespace token is considered (trailing punctuation
    stripped); anything else raises ProtocolError with the raw payload.
    """
    tokens = text.split()
    first = tokens[0].strip(".,:;!") if tokens else ""
    try:
        return Level(first.lower())
    except ValueError:
        raise ProtocolError(
            f"expected a Low/Medium/High answer, got {text!r}", payload=text
        ) from None


class SupportsNliScore(Protocol):
    def score(self, premise: str, hypothesis: str) -> float: ...


class SupportsComplete(Protocol):
    def complete(self, prompt: str) -> str: ...


def discriminate(
    prompt_text: str,
    target_text: str,
    *,
    backend: DiscriminatorBackend | str = DiscriminatorBackend.LEXICON,
    client: SupportsNliScore | SupportsComplete | None = None,
) -> DiscriminationResult:
    """Run one discrimination through the chosen backend.

    The remote backends take a duck-typed client (anything with the right
    method); lexicon needs none. Malformed LLM answers are retried once
    before ProtocolError propagates. Transport failures propagate
    untouched -- the scheduler decides whether to fall back.
    """
    backend = DiscriminatorBackend(backend)
    span = _require_span(prompt_text)
    started = time.perf_counter()

    if backend is DiscriminatorBackend.LEXICON:
        distance, level = lexicon_discriminate(prompt_text, target_text)
        detail: dict[str, object] = {}
    elif backend is DiscriminatorBackend.NLI:
        if client is None:
            raise InvalidInputError("nli backend needs a client")
        distance = float(client.score(target_text, nli_hypothesis(prompt_text)))
        level = distance_to_level(distance)
        detail = {"premise": target_text, "hypothesis": nli_hypothesis(prompt_text)}
    else:
        if client is None:
            raise InvalidInputError("llm backend needs a client")
        request = llm_prompt(prompt_text, target_text)
        answer = client.complete(request)
        try:
            level = parse_llm_label(answer)
        except ProtocolError:
            answer = client.complete(request)  # one retry on a bad label
            level = parse_llm_label(answer)
        distance = _LEVEL_DISTANCE[level]
        detail = {"template_version": LLM_TEMPLATE_VERSION, "answer": answer}

    return DiscriminationResult(
        backend=backend,
        distance=distance,
        level=level,
        prompt_emotion=span.emotion,
        detail=MappingProxyType(detail),
        latency_s=time.perf_counter() - started,
    )
