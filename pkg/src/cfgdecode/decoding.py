"""The autoregressive decode loop: two branches, one guidance fuse, one draw.

Each step queries the model twice -- once with the conditional prefix,
once with the negative prefix -- fuses the two logit vectors under the
request's guidance policy, and samples a single token that is appended to
*both* prefixes, so the branches stay aligned token-for-token. The only
randomness is one uniform per step from the request's seeded generator;
with guidance scale 1 the loop is therefore exactly the conditional-only
decode, token for token, which the identity tests pin down.

Any object with ``vocab_size``, ``eos_id`` and ``next_logits(prefix)`` can
sit in the model slot; :class:`cfgdecode.toylm.ToyConditionalLM` is the
in-tree one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from . import kernels
from .errors import BoundsError, DecodeAborted, DegenerateResultError, InvalidInputError
from .guidance import GuidancePolicy, NegativeMode, PolicyMode, apply_policy, as_logits
from .mismatch import EMOTIONS
from .toylm import NULL_TAG, ToyVocabulary

__all__ = [
    "SequenceModel",
    "SamplerSettings",
    "DecodeRequest",
    "StepRecord",
    "DecodeResult",
    "sample",
    "decode",
    "make_request",
]


class SequenceModel(Protocol):
    vocab_size: int
    eos_id: int

    def next_logits(self, prefix: Sequence[int]) -> np.ndarray: ...


@dataclass(frozen=True)
class SamplerSettings:
    """Top-k sampling knobs. Defaults favor diverse but on-model output."""

    top_k: int = 25
    temperature: float = 1.0

    def __post_init__(self) -> None:
        if self.top_k < 1:
            raise BoundsError(f"top_k must be >= 1, got {self.top_k}")
        if not (np.isfinite(self.temperature) and self.temperature > 0):
            raise InvalidInputError(
                f"temperature must be a positive finite number, got {self.temperature}"
            )


@dataclass(frozen=True)
class DecodeRequest:
    """Everything one decode needs, fully resolved and reproducible."""

    cond_tokens: tuple[int, ...]
    neg_tokens: tuple[int, ...] | None
    policy: GuidancePolicy
    sampler: SamplerSettings = SamplerSettings()
    seed: int = 0
    max_len: int = 48

    def __post_init__(self) -> None:
        if self.max_len < 1:
            raise BoundsError(f"max_len must be >= 1, got {self.max_len}")
        if self.policy.mode is not PolicyMode.NONE and self.neg_tokens is None:
            raise InvalidInputError(
                f"policy mode {self.policy.mode.value!r} needs neg_tokens"
            )


@dataclass(frozen=True)
class StepRecord:
    index: int
    token_id: int
    n_live: int  # tokens with finite fused score at this step


@dataclass(frozen=True)
class DecodeResult:
    token_ids: tuple[int, ...]  # generated tokens, EOS excluded
    finished: bool  # True when EOS stopped the loop
    steps: tuple[StepRecord, ...]
    seed: int
    backend: str = field(default=kernels.BACKEND)

    def to_json(self) -> str:
        return json.dumps(
            {
                "token_ids": list(self.token_ids),
                "finished": self.finished,
                "seed": self.seed,
                "backend": self.backend,
                "steps": [
                    {"index": s.index, "token_id": s.token_id, "n_live": s.n_live}
                    for s in self.steps
                ],
            }
        )


def sample(
    logits, sampler: SamplerSettings, rng: np.random.Generator
) -> int:
    """One top-k temperature draw, consuming exactly one uniform.

    The draw is inverse-CDF over the tempered softmax of the top-k
    entries; masked tokens carry zero mass and can never come out.
    """
    arr = as_logits(logits)
    k = min(sampler.top_k, arr.shape[0])
    u = float(rng.random())
    return int(kernels.sample_index(arr, k, sampler.temperature, u))


def decode(
    model: SequenceModel,
    request: DecodeRequest,
    *,
    step_hook: Callable[[StepRecord], bool | None] | None = None,
) -> DecodeResult:
    """Run one guided decode to EOS or the length cap.

    ``step_hook`` (when given) sees every step record as it happens and
    may return False to abort; the partial result rides on the raised
    DecodeAborted. A step where no token has probability mass raises
    DegenerateResultError naming the step.
    """
    policy = request.policy
    cond = list(request.cond_tokens)
    neg = list(request.neg_tokens) if request.neg_tokens is not None else None
    needs_neg = policy.mode is not PolicyMode.NONE
    rng = np.random.default_rng(request.seed)
    generated: list[int] = []
    steps: list[StepRecord] = []
    finished = False

    def partial() -> DecodeResult:
        return DecodeResult(
            token_ids=tuple(generated),
            finished=finished,
            steps=tuple(steps),
            seed=request.seed,
        )

    for index in range(request.max_len):
        logits_c = model.next_logits(cond)
        logits_n = model.next_logits(neg) if needs_neg else None
        fused = apply_policy(policy, logits_c, logits_n)
        n_live = int(np.isfinite(fused).sum())
        if n_live == 0:
            raise DegenerateResultError(
                f"decode step {index}: no token carries probability mass"
            )
        token = sample(fused, request.sampler, rng)
        record = StepRecord(index=index, token_id=token, n_live=n_live)
        steps.append(record)
        if step_hook is not None and step_hook(record) is False:
            raise DecodeAborted(
                f"decode aborted by hook at step {index}", partial=partial()
            )
        if token == model.eos_id:
            finished = True
            break
        generated.append(token)
        cond.append(token)
        if neg is not None:
            neg.append(token)

    return partial()


def make_request(
    vocab: ToyVocabulary,
    emotion: str,
    *,
    policy: GuidancePolicy,
    primer_text: str = "",
    sampler: SamplerSettings = SamplerSettings(),
    seed: int = 0,
    max_len: int = 48,
    rng: np.random.Generator | None = None,
) -> DecodeRequest:
    """Build a toy-model request with the negative prefix the policy wants.

    The conditional prefix is the emotion's tag token plus any primer
    words. The negative prefix depends on the policy's negative mode:
    drop-style swaps the tag for the null tag, drop-target keeps the tag
    but drops the primer, and random-style swaps in a uniformly drawn
    *different* emotion tag (``rng`` required, so the draw is seeded by
    the caller, not hidden here).
    """
    primer = vocab.tokenize(primer_text) if primer_text else ()
    cond = (vocab.tag_id(emotion), *primer)
    if policy.mode is PolicyMode.NONE:
        neg: tuple[int, ...] | None = None
    elif policy.negative is NegativeMode.DROP_STYLE:
        neg = (vocab.tag_id(NULL_TAG), *primer)
    elif policy.negative is NegativeMode.DROP_TARGET:
        neg = (vocab.tag_id(emotion),)
    else:
        if rng is None:
            raise InvalidInputError("random-style negatives need an rng")
        others = [e for e in EMOTIONS if e != emotion]
        pick = others[int(rng.integers(len(others)))]
        neg = (vocab.tag_id(pick), *primer)
    return DecodeRequest(
        cond_tokens=cond,
        neg_tokens=neg,
        policy=policy,
        sampler=sampler,
        seed=seed,
        max_len=max_len,
    )
