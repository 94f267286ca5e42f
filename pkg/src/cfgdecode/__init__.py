"""cfgdecode: classifier-free guidance for autoregressive token decoding.

Model-agnostic guidance math over next-token logits, a mismatch-adaptive
guidance-scale scheduler, pluggable style-mismatch discriminators, a toy
conditional language model for end-to-end checks, and evaluation report
aggregation. See the README for the tour.
"""

from .errors import (
    BoundsError,
    ConfigError,
    DecodeAborted,
    DegenerateResultError,
    DimensionError,
    EmptyInputError,
    GuidanceError,
    InvalidInputError,
    NotApplicableError,
    ProtocolError,
    RangeError,
    TransportError,
)
from .guidance import (
    GuidancePolicy,
    NegativeMode,
    PolicyMode,
    apply_policy,
    cfg_filter,
    re_cfg,
    standard_cfg,
    top_k_indices,
)
from .kernels import BACKEND
from .scheduling import (
    PRESETS,
    Level,
    ScalePair,
    ScaleTable,
    distance_to_level,
    scales_for,
    schedule,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BoundsError",
    "ConfigError",
    "DecodeAborted",
    "DegenerateResultError",
    "DimensionError",
    "EmptyInputError",
    "GuidanceError",
    "GuidancePolicy",
    "InvalidInputError",
    "Level",
    "NegativeMode",
    "NotApplicableError",
    "PRESETS",
    "PolicyMode",
    "ProtocolError",
    "RangeError",
    "ScalePair",
    "ScaleTable",
    "TransportError",
    "apply_policy",
    "cfg_filter",
    "distance_to_level",
    "re_cfg",
    "scales_for",
    "schedule",
    "standard_cfg",
    "top_k_indices",
    "__version__",
]
