"""Classifier-free guidance over next-token logits.

The engine is model-agnostic: it sees only 1-D float64 logit vectors, one
from the conditional branch (prompt with style condition) and one from a
negative branch (condition dropped or scrambled). Guidance extrapolates
from the negative branch toward the conditional branch:

    guided = negative + w * (conditional - negative)

``w = 1`` reproduces the conditional logits exactly; ``w = 0`` reproduces
the negative logits exactly; ``w > 1`` amplifies whatever the condition
changed. On top of the plain combination the module offers a top-k
*filter* variant (keep the conditional scores only where the guided
scores land in the top k) and a *re-guided* variant (run a second, milder
guidance pass over the filtered scores).

Masking convention: ``-inf`` marks a token some upstream stage has ruled
out. Any index masked in either input stays masked in every output, and
no operation may turn a masked index back on. NaN never enters or leaves.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import BoundsError, DimensionError, InvalidInputError

__all__ = [
    "PolicyMode",
    "NegativeMode",
    "GuidancePolicy",
    "as_logits",
    "standard_cfg",
    "top_k_indices",
    "cfg_filter",
    "re_cfg",
    "apply_policy",
]


class PolicyMode(str, enum.Enum):
    """Which guidance composition to run at each decode step."""

    NONE = "none"
    STANDARD = "standard"
    FILTER = "filter"
    FILTER_RECFG = "filter-recfg"


class NegativeMode(str, enum.Enum):
    """How the negative branch's prompt is built from the conditional one.

    DROP_STYLE removes the style condition entirely, DROP_TARGET removes
    the target-text portion instead, and RANDOM_STYLE swaps the style
    condition for a uniformly drawn different one.
    """

    DROP_STYLE = "drop-style"
    DROP_TARGET = "drop-target"
    RANDOM_STYLE = "random-style"


@dataclass(frozen=True)
class GuidancePolicy:
    """A fully resolved guidance configuration for one decode.

    ``w`` is the primary scale, ``filter_top_k`` the size of the kept set
    for the filter modes, and ``w_f`` the secondary scale for the
    re-guided pass (``w_f = 1`` leaves the filtered scores untouched).
    The scheduler in :mod:`cfgdecode.scheduling` produces these; they can
    also be built directly.
    """

    mode: PolicyMode = PolicyMode.STANDARD
    negative: NegativeMode = NegativeMode.DROP_STYLE
    w: float = 1.0
    filter_top_k: int = 50
    w_f: float = 1.0

    def __post_init__(self) -> None:
        if not np.isfinite(self.w):
            raise InvalidInputError("guidance scale w must be finite")
        if not np.isfinite(self.w_f):
            raise InvalidInputError("re-guidance scale w_f must be finite")
        if self.filter_top_k < 1:
            raise BoundsError(
                f"filter_top_k must be >= 1, got {self.filter_top_k}"
            )
        if self.mode is PolicyMode.FILTER_RECFG and self.w_f > self.w:
            warnings.warn(
                f"re-guidance scale w_f={self.w_f} exceeds w={self.w}; the "
                "second pass is meant to be milder than the first",
                stacklevel=2,
            )


def as_logits(values, *, name: str = "logits") -> np.ndarray:
    """Validate and normalize one logit vector to a float64 1-D array.

    Rejects empty input, non-1-D input, NaN, +inf, and vectors with no
    finite entry (a fully masked vocabulary admits no next token).
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise DimensionError(f"{name} is empty")
    if np.isnan(arr).any():
        raise InvalidInputError(f"{name} contains NaN")
    if np.isposinf(arr).any():
        raise InvalidInputError(f"{name} contains +inf")
    if not np.isfinite(arr).any():
        raise InvalidInputError(f"{name} is fully masked (all -inf)")
    return arr


def _paired(cond, neg) -> tuple[np.ndarray, np.ndarray]:
    c = as_logits(cond, name="conditional logits")
    n = as_logits(neg, name="negative logits")
    if c.shape[0] != n.shape[0]:
        raise DimensionError(
            f"branch length mismatch: conditional has {c.shape[0]} entries, "
            f"negative has {n.shape[0]}"
        )
    return c, n


def standard_cfg(cond, neg, w: float) -> np.ndarray:
    """Plain guidance: ``neg + w * (cond - neg)``.

    Indices masked in either branch come out masked; everything else is
    the exact affine combination. The result may be fully masked if the
    two branches share no finite index — samplers must treat that as a
    dead end, so it is allowed out (unlike in).
    """
    c, n = _paired(cond, neg)
    if not np.isfinite(w):
        raise InvalidInputError("guidance scale w must be finite")
    return kernels.fuse(n, c, float(w))


def top_k_indices(scores, k: int) -> np.ndarray:
    """The k highest-scoring indices, ascending, lowest index winning ties."""
    s = as_logits(scores, name="scores")
    if not (1 <= k <= s.shape[0]):
        raise BoundsError(
            f"k must be in [1, {s.shape[0]}], got {k}"
        )
    return kernels.top_k_indices(s, int(k))


def cfg_filter(cond, neg, w: float, k: int) -> np.ndarray:
    """Top-k filtered guidance.

    The guided combination only *chooses* which tokens survive: the output
    carries the original conditional scores at the top-k indices of the
    guided scores and ``-inf`` everywhere else. Masked indices never
    survive, so the output can hold fewer than k finite entries.
    """
    c, n = _paired(cond, neg)
    if not np.isfinite(w):
        raise InvalidInputError("guidance scale w must be finite")
    if not (1 <= k <= c.shape[0]):
        raise BoundsError(f"k must be in [1, {c.shape[0]}], got {k}")
    guided = kernels.fuse(n, c, float(w))
    return kernels.filter_to_top_k(c, guided, int(k))


def re_cfg(filtered_cond, neg, w_f: float) -> np.ndarray:
    """Second guidance pass over already-filtered conditional scores.

    Same arithmetic as :func:`standard_cfg` with the filtered vector in
    the conditional slot; the filter's -inf survives untouched. Meant to
    run with a scale below the first pass's.
    """
    f = as_logits(filtered_cond, name="filtered logits")
    n = as_logits(neg, name="negative logits")
    if f.shape[0] != n.shape[0]:
        raise DimensionError(
            f"branch length mismatch: filtered has {f.shape[0]} entries, "
            f"negative has {n.shape[0]}"
        )
    if not np.isfinite(w_f):
        raise InvalidInputError("re-guidance scale w_f must be finite")
    return kernels.fuse(n, f, float(w_f))


def apply_policy(policy: GuidancePolicy, cond, neg=None) -> np.ndarray:
    """Run one decode step's guidance under a resolved policy.

    ``NONE`` returns the validated conditional logits as-is (no negative
    branch needed). The other modes require both branches and compose the
    primitives above: STANDARD is one pass, FILTER is the top-k filter,
    and FILTER_RECFG re-guides the filtered scores with ``w_f``.
    """
    if policy.mode is PolicyMode.NONE:
        return as_logits(cond, name="conditional logits")
    if neg is None:
        raise InvalidInputError(
            f"policy mode {policy.mode.value!r} needs negative-branch logits"
        )
    if policy.mode is PolicyMode.STANDARD:
        return standard_cfg(cond, neg, policy.w)
    c, _ = _paired(cond, neg)
    k = min(policy.filter_top_k, c.shape[0])
    filtered = cfg_filter(cond, neg, policy.w, k)
    if policy.mode is PolicyMode.FILTER:
        return filtered
    if not np.isfinite(filtered).any():
        # both branches agreed on nothing; re-guiding -inf is still -inf
        return filtered
    return re_cfg(filtered, neg, policy.w_f)
