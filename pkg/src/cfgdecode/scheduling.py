"""Mismatch-adaptive guidance-scale scheduling.

A discriminator scores how far a style prompt sits from a target text as
a distance in [0, 1]. That range maps evenly onto three levels (low /
medium / high mismatch), and each level looks up its guidance scales in a
table. High mismatch gets gentler scales: pushing hard toward a condition
the text contradicts degrades output quality faster than it buys style.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .errors import ConfigError, InvalidInputError, RangeError
from .guidance import GuidancePolicy, NegativeMode, PolicyMode

__all__ = [
    "Level",
    "ScalePair",
    "ScaleTable",
    "PRESETS",
    "distance_to_level",
    "scales_for",
    "schedule",
    "load_scale_table",
]

_ONE_THIRD = 1.0 / 3.0
_TWO_THIRDS = 2.0 / 3.0


class Level(str, enum.Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"


@dataclass(frozen=True)
class ScalePair:
    """Primary scale plus the optional second-pass scale (1.0 = no-op)."""

    w: float
    w_f: float = 1.0

    def __post_init__(self) -> None:
        if not (np.isfinite(self.w) and np.isfinite(self.w_f)):
            raise InvalidInputError("guidance scales must be finite")


@dataclass(frozen=True)
class ScaleTable:
    """One ScalePair per mismatch level, plus the policy mode they drive."""

    name: str
    mode: PolicyMode
    scales: Mapping[Level, ScalePair]

    def __post_init__(self) -> None:
        missing = [lv.value for lv in Level if lv not in self.scales]
        if missing:
            raise ConfigError(f"scale table {self.name!r} missing levels: {missing}")
        object.__setattr__(self, "scales", MappingProxyType(dict(self.scales)))


# Defaults: plain guidance eases from 3.0 down to 2.0 as mismatch grows;
# the filtered variant uses a (w, w_f) pair per level, medium and high
# sharing the milder pair. Anyone wanting distinct medium/high pairs can
# load their own table from a file (see load_scale_table).
PRESETS: Mapping[str, ScaleTable] = MappingProxyType(
    {
        "adaptive-standard": ScaleTable(
            name="adaptive-standard",
            mode=PolicyMode.STANDARD,
            scales={
                Level.LOW: ScalePair(3.0),
                Level.MEDIUM: ScalePair(2.5),
                Level.HIGH: ScalePair(2.0),
            },
        ),
        "adaptive-filter": ScaleTable(
            name="adaptive-filter",
            mode=PolicyMode.FILTER_RECFG,
            scales={
                Level.LOW: ScalePair(3.0, 2.5),
                Level.MEDIUM: ScalePair(2.5, 2.0),
                Level.HIGH: ScalePair(2.5, 2.0),
            },
        ),
    }
)


def distance_to_level(distance: float, *, invert: bool = False) -> Level:
    """Map a distance in [0, 1] evenly onto the three levels.

    Bins are half-open ([0, 1/3) -> LOW, [1/3, 2/3) -> MEDIUM) with the
    top bin closed ([2/3, 1] -> HIGH). ``invert=True`` reads the input as
    a similarity and maps ``1 - distance`` instead.
    """
    d = float(distance)
    if not np.isfinite(d):
        raise RangeError(f"distance must be finite, got {d}")
    if not (0.0 <= d <= 1.0):
        raise RangeError(f"distance must lie in [0, 1], got {d}")
    if invert:
        d = 1.0 - d
    if d < _ONE_THIRD:
        return Level.LOW
    if d < _TWO_THIRDS:
        return Level.MEDIUM
    return Level.HIGH


def scales_for(level: Level, table: ScaleTable) -> ScalePair:
    try:
        return table.scales[level]
    except KeyError:
        raise ConfigError(
            f"scale table {table.name!r} has no entry for level {level.value!r}"
        ) from None


def schedule(
    distance: float | None,
    table: ScaleTable,
    *,
    negative: NegativeMode = NegativeMode.DROP_STYLE,
    filter_top_k: int = 50,
    invert: bool = False,
    fallback: bool = False,
) -> GuidancePolicy:
    """Turn a discriminator distance into a resolved guidance policy.

    ``distance=None`` signals a discriminator that failed to produce a
    score; with ``fallback=True`` that degrades to the MEDIUM row,
    otherwise it is an error. The table's mode decides which composition
    the policy runs.
    """
    if distance is None:
        if not fallback:
            raise InvalidInputError(
                "no mismatch distance available and fallback is disabled"
            )
        level = Level.MEDIUM
    else:
        level = distance_to_level(distance, invert=invert)
    pair = scales_for(level, table)
    return GuidancePolicy(
        mode=table.mode,
        negative=negative,
        w=pair.w,
        filter_top_k=filter_top_k,
        w_f=pair.w_f,
    )


def load_scale_table(path: str, *, name: str | None = None) -> ScaleTable:
    """Read a scale table from a small key=value text file.

    Recognized keys: ``mode`` (a PolicyMode value) and one line per level
    (``low = 3.0`` or ``low = 3.0, 2.5``). Blank lines and ``#`` comments
    are skipped. Unknown keys, bad numbers, and missing levels all raise
    ConfigError with the offending line.
    """
    mode = PolicyMode.STANDARD
    scales: dict[Level, ScalePair] = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read scale table {path!r}: {exc}") from exc
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip().lower()
        value = value.strip()
        if key == "mode":
            try:
                mode = PolicyMode(value)
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: unknown mode {value!r}") from None
            continue
        try:
            level = Level(key)
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}") from None
        parts = [p.strip() for p in value.split(",")]
        if len(parts) not in (1, 2):
            raise ConfigError(
                f"{path}:{lineno}: expected 'w' or 'w, w_f', got {value!r}"
            )
        try:
            numbers = [float(p) for p in parts]
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: bad number in {value!r}") from None
        scales[level] = ScalePair(*numbers)
    return ScaleTable(name=name or path, mode=mode, scales=scales)
