"""Network input construction from a modulo image.

Up to three representations are concatenated along the channel axis, always
in the order raw | wrapped differences | closed-form unwrap.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .sensor import ModuloImage, wrapped_diff
from .unwrap import Gauge, solve_dct


class Normalization(str, Enum):
    NONE = "none"
    THRESHOLD = "divide-by-2^b"


@dataclass(frozen=True)
class FeatureConfig:
    use_raw: bool = True
    use_wrapped_diff: bool = False
    use_init: bool = False
    normalization: Normalization = Normalization.THRESHOLD

    def __post_init__(self):
        if not (self.use_raw or self.use_wrapped_diff or self.use_init):
            raise ValueError("FeatureConfig needs at least one enabled feature")
        object.__setattr__(self, "normalization", Normalization(self.normalization))

    @property
    def name(self) -> str:
        for name, cfg in FEATURE_ROWS.items():
            if (cfg.use_raw, cfg.use_wrapped_diff, cfg.use_init) == (
                self.use_raw, self.use_wrapped_diff, self.use_init
            ):
                return name
        raise AssertionError("unreachable: every non-empty flag combination is named")

    @classmethod
    def from_name(cls, name: str, normalization: Normalization | str = Normalization.THRESHOLD) -> "FeatureConfig":
        """Parse ``y``, ``diff``, ``init``, ``y+diff``, ``y+init``, ``all`` (or any ``+``/``,`` combination)."""
        key = name.strip().lower()
        if key == "all":
            parts = {"y", "diff", "init"}
        else:
            parts = {p.strip() for p in key.replace(",", "+").split("+") if p.strip()}
        unknown = parts - {"y", "diff", "init"}
        if unknown or not parts:
            raise ValueError(f"unknown feature name {name!r}")
        return cls("y" in parts, "diff" in parts, "init" in parts, Normalization(normalization))

    def channel_count(self, image_channels: int) -> int:
        return image_channels * (int(self.use_raw) + 2 * int(self.use_wrapped_diff) + int(self.use_init))

    def to_dict(self) -> dict:
        return {
            "use_raw": self.use_raw,
            "use_wrapped_diff": self.use_wrapped_diff,
            "use_init": self.use_init,
            "normalization": self.normalization.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureConfig":
        return cls(d["use_raw"], d["use_wrapped_diff"], d["use_init"], Normalization(d["normalization"]))


FEATURE_ROWS = {
    "y": FeatureConfig(True, False, False),
    "diff": FeatureConfig(False, True, False),
    "init": FeatureConfig(False, False, True),
    "y+diff": FeatureConfig(True, True, False),
    "y+init": FeatureConfig(True, False, True),
    "all": FeatureConfig(True, True, True),
}


def feature_rows(normalization: Normalization | str = Normalization.THRESHOLD) -> list[FeatureConfig]:
    """The six input ablation rows, in order: y, diff, init, y+diff, y+init, all."""
    return [FeatureConfig.from_name(name, normalization) for name in FEATURE_ROWS]


@dataclass(frozen=True, eq=False)
class FeatureStack:
    data: np.ndarray  # (H, W, channels)
    channel_layout: tuple[str, ...]

    def __post_init__(self):
        if self.data.shape[2] != len(self.channel_layout):
            raise ValueError("channel_layout length must match channel count")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def channel(self, tag: str) -> np.ndarray:
        return self.data[:, :, self.channel_layout.index(tag)]


def _suffixes(c: int) -> list[str]:
    return [""] if c == 1 else ["_r", "_g", "_b"]


def build_features(y: ModuloImage, cfg: FeatureConfig) -> FeatureStack:
    c = y.channels
    g = wrapped_diff(y) if (cfg.use_wrapped_diff or cfg.use_init) else None
    parts, layout = [], []
    if cfg.use_raw:
        parts.append(y.data)
        layout += [f"raw{s}" for s in _suffixes(c)]
    if cfg.use_wrapped_diff:
        for ch, s in enumerate(_suffixes(c)):
            parts.append(g.dh[:, :, ch : ch + 1])
            parts.append(g.dv[:, :, ch : ch + 1])
            layout += [f"diff_h{s}", f"diff_v{s}"]
    if cfg.use_init:
        parts.append(solve_dct(g, Gauge.ZERO_MEAN).image)
        layout += [f"init{s}" for s in _suffixes(c)]
    data = np.concatenate(parts, axis=2)
    if cfg.normalization is Normalization.THRESHOLD:
        data = data / y.threshold
    return FeatureStack(data, tuple(layout))
