"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

Every kernel exists twice: a vectorized numpy implementation (``py_*``) and
a numba ``@njit`` twin compiled at import time. The active set is chosen
once, at import: setting the environment variable ``CFGDECODE_NO_NUMBA`` to
``1``/``true``/``yes`` (or not having numba installed) selects the numpy
path. ``BACKEND`` records which one won. ``benchmarks/kernel_bench.py``
times both.

Kernels do no validation; the public wrappers in :mod:`cfgdecode.guidance`
and :mod:`cfgdecode.decoding` enforce the contracts. Inputs are 1-D
float64 arrays where ``-inf`` marks a masked (excluded) token. NaN must
never enter a kernel.

Both paths are element-for-element IEEE-identical for the arithmetic
kernels; the sampling kernel goes through ``exp``, where the two backends
may in principle differ in the last ulp. The equivalence test in
``tests/test_kernels.py`` guards the contract.
"""

from __future__ import annotations

import math
import os

import numpy as np

NEG_INF = -np.inf

_FLAG = os.environ.get("CFGDECODE_NO_NUMBA", "").strip().lower()
_NUMBA_DISABLED = _FLAG in {"1", "true", "yes"}


# ---------------------------------------------------------------------------
# pure-numpy implementations
# ---------------------------------------------------------------------------

def py_fuse(neg: np.ndarray, cond: np.ndarray, w: float) -> np.ndarray:
    """neg + w * (cond - neg), with masked indices forced to -inf.

    An index is masked when either input is -inf there; the arithmetic is
    bypassed for those entries so inf - inf can never produce NaN. w = 1
    and w = 0 short-circuit to exact copies of the respective branch:
    ``a + 1*(b - a)`` is not b bit-for-bit when the magnitudes are wildly
    apart, and the identity contract is exact, not approximate.
    """
    masked = np.isneginf(neg) | np.isneginf(cond)
    if w == 1.0:
        out = cond.copy()
    elif w == 0.0:
        out = neg.copy()
    else:
        with np.errstate(invalid="ignore"):
            out = neg + w * (cond - neg)
    out[masked] = NEG_INF
    return out


def py_top_k_indices(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k highest scores, ascending; ties keep the lower index.

    -inf entries are picked only once the finite entries run out.
    """
    order = np.argsort(-scores, kind="stable")[:k]
    order.sort()
    return order


def py_filter_to_top_k(cond: np.ndarray, guided: np.ndarray, k: int) -> np.ndarray:
    """cond at the top-k indices of guided, -inf elsewhere.

    Indices whose guided score is itself -inf are never kept, so masked
    tokens cannot be resurrected; the result then has fewer than k finite
    entries.
    """
    idx = py_top_k_indices(guided, k)
    kept = idx[np.isfinite(guided[idx])]
    out = np.full(cond.shape[0], NEG_INF)
    out[kept] = cond[kept]
    return out


def py_sample_index(logits: np.ndarray, k: int, temperature: float, u: float) -> int:
    """Draw one token: restrict to top-k, temper, softmax, invert the CDF at u.

    u must come from the caller's RNG in [0, 1); exactly one uniform is
    consumed per draw on every path, which keeps parallel decodes with
    different policies on identical random streams.
    """
    idx = py_top_k_indices(logits, k)
    sub = logits[idx] / temperature
    m = np.max(sub)
    weights = np.exp(sub - m)
    cum = np.cumsum(weights)
    r = u * cum[-1]
    j = int(np.searchsorted(cum, r, side="right"))
    if j >= idx.shape[0]:
        j = idx.shape[0] - 1
    return int(idx[j])


# ---------------------------------------------------------------------------
# numba twins
# ---------------------------------------------------------------------------

BACKEND = "numpy"

if not _NUMBA_DISABLED:
    try:
        from numba import njit
    except ImportError:
        njit = None
    if njit is not None:

        @njit(cache=True, nogil=True)
        def nb_fuse(neg, cond, w):
            n = neg.shape[0]
            out = np.empty(n)
            for i in range(n):
                a = neg[i]
                b = cond[i]
                if a == NEG_INF or b == NEG_INF:
                    out[i] = NEG_INF
                elif w == 1.0:
                    out[i] = b
                elif w == 0.0:
                    out[i] = a
                else:
                    out[i] = a + w * (b - a)
            return out

        @njit(cache=True, nogil=True)
        def nb_top_k_indices(scores, k):
            # stable sort keeps the lowest index on ties, matching py_top_k_indices
            order = np.argsort(-scores, kind="mergesort")
            return np.sort(order[:k])

        @njit(cache=True, nogil=True)
        def nb_filter_to_top_k(cond, guided, k):
            n = cond.shape[0]
            idx = nb_top_k_indices(guided, k)
            out = np.full(n, NEG_INF)
            for j in range(idx.shape[0]):
                i = idx[j]
                if guided[i] > NEG_INF:
                    out[i] = cond[i]
            return out

        @njit(cache=True, nogil=True)
        def nb_sample_index(logits, k, temperature, u):
            idx = nb_top_k_indices(logits, k)
            m = NEG_INF
            for j in range(idx.shape[0]):
                v = logits[idx[j]] / temperature
                if v > m:
                    m = v
            total = 0.0
            cum = np.empty(idx.shape[0])
            for j in range(idx.shape[0]):
                total += math.exp(logits[idx[j]] / temperature - m)
                cum[j] = total
            r = u * total
            for j in range(idx.shape[0]):
                if cum[j] > r:
                    return idx[j]
            return idx[idx.shape[0] - 1]

        BACKEND = "numba"


if BACKEND == "numba":
    fuse = nb_fuse
    top_k_indices = nb_top_k_indices
    filter_to_top_k = nb_filter_to_top_k
    sample_index = nb_sample_index
else:
    fuse = py_fuse
    top_k_indices = py_top_k_indices
    filter_to_top_k = py_filter_to_top_k
    sample_index = py_sample_index


def warm_up() -> str:
    """Force JIT compilation of every kernel; returns the active backend.

    Useful before timing: the first numba call pays the compile cost
    (cached on disk afterwards).
    """
    probe = np.array([0.0, 1.0, NEG_INF])
    fuse(probe, probe, 2.0)
    top_k_indices(probe, 2)
    filter_to_top_k(probe, probe, 2)
    sample_index(probe, 2, 1.0, 0.5)
    return BACKEND
